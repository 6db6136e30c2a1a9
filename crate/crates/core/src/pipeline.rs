//! End-to-end planning: validate, merge, estimate, break symmetries, encode, solve, expand, check.

use std::time::Duration;

use crate::confgraph::{build_conflict_graph, enumerate_maximal_cliques, FvMode};
use crate::encode::{build_ir, ConstraintIr};
use crate::estimator::{estimate_with, InstanceEstimate, SurrogatePolicy};
use crate::model::{check_plan, validate_spec, ApplicationSpec, DeploymentPlan, OfferCatalog, ValidatedSpec, ValidationReport};
use crate::preprocess::{expand_plan, merge_colocated, ComponentMapping};
use crate::solver::{solve, SolveOptions, SolveResult};
use crate::symbreak::{generate, BreakerSet, Strategy};
use crate::Error;

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub strategy: Strategy,
    pub fv_mode: FvMode,
    pub timeout: Option<Duration>,
    pub threads: usize,
    pub surrogate: SurrogatePolicy,
    /// Overrides the estimated machine count.
    pub machines: Option<usize>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            fv_mode: FvMode::default(),
            timeout: None,
            threads: 1,
            surrogate: SurrogatePolicy::default(),
            machines: None,
        }
    }
}

/// Everything computed before the solver runs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub original: ValidatedSpec,
    pub merged: ValidatedSpec,
    pub mapping: ComponentMapping,
    pub estimate: InstanceEstimate,
    pub machines: usize,
    pub breakers: BreakerSet,
    pub ir: ConstraintIr,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub prepared: Prepared,
    pub result: SolveResult,
    /// Plan over the original components.
    pub plan: Option<DeploymentPlan>,
    pub report: Option<ValidationReport>,
}

/// Least machine count any plan needs: pairwise conflicting components never
/// share a machine, and instances of one component never do either.
pub fn machine_floor(spec: &ValidatedSpec, estimate: &InstanceEstimate) -> u64 {
    let single = estimate.guaranteed.iter().copied().max().unwrap_or(0);
    let graph = build_conflict_graph(spec);
    let cliques = enumerate_maximal_cliques(&graph);
    let clique = cliques.iter().map(|c| c.members.iter().map(|&id| estimate.guaranteed_of(id)).sum()).max().unwrap_or(0);
    single.max(clique)
}

/// Machines to encode: the override, or the estimate raised to the floor.
pub fn machine_count(spec: &ValidatedSpec, estimate: &InstanceEstimate, opts: &PlanOptions) -> usize {
    let m = opts.machines.unwrap_or_else(|| estimate.m_upper.max(machine_floor(spec, estimate)) as usize);
    m.max(1)
}

pub fn prepare(spec: &ApplicationSpec, catalog: &OfferCatalog, opts: &PlanOptions) -> Result<Prepared, Error> {
    let original = validate_spec(spec, catalog)?;
    let (merged, mapping) = merge_colocated(&original)?;
    let estimate = estimate_with(&merged, opts.surrogate)?;
    let machines = machine_count(&merged, &estimate, opts);
    let breakers = generate(opts.strategy, &merged, &estimate, machines, opts.fv_mode)?;
    let ir = build_ir(&merged, catalog, machines, &breakers)?;
    Ok(Prepared { original, merged, mapping, estimate, machines, breakers, ir })
}

impl Prepared {
    /// Expands a solver result to the original components and checks it.
    pub fn finish(self, result: SolveResult, catalog: &OfferCatalog) -> Result<PlanOutcome, Error> {
        let (plan, report) = match &result.plan {
            Some(p) => {
                let expanded = expand_plan(p, &self.mapping)?;
                let report = check_plan(&self.original, catalog, &expanded)?;
                (Some(expanded), Some(report))
            }
            None => (None, None),
        };
        Ok(PlanOutcome { prepared: self, result, plan, report })
    }
}

/// Runs the full pipeline with the built-in solver.
pub fn plan(spec: &ApplicationSpec, catalog: &OfferCatalog, opts: &PlanOptions) -> Result<PlanOutcome, Error> {
    let prepared = prepare(spec, catalog, opts)?;
    let result = solve(&prepared.ir, &SolveOptions { timeout: opts.timeout, threads: opts.threads })?;
    prepared.finish(result, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{offers, CaseStudy};
    use crate::model::{BoundOp, Component, ComponentId, OfferId, ResourceVector, StructuralConstraint, VmOffer};

    #[test]
    fn floor_covers_forced_instances_in_a_clique() {
        use StructuralConstraint::*;
        let spec = ApplicationSpec {
            name: "t".into(),
            dimensions: vec!["cpu".into()],
            components: (1..=3)
                .map(|i| Component { id: ComponentId(i), name: format!("c{i}"), requirements: ResourceVector(vec![1]) })
                .collect(),
            constraints: vec![
                Conflict { i: ComponentId(1), j: ComponentId(2) },
                ConditionalBound { guard: ComponentId(3), components: vec![ComponentId(1)], op: BoundOp::Eq, n: 3 },
            ],
        };
        let v = ValidatedSpec::structural(spec.clone()).unwrap();
        let est = estimate_with(&v, SurrogatePolicy::AllDeployed).unwrap();
        assert_eq!(est.m_upper, 3);
        assert_eq!(machine_floor(&v, &est), 4);
        let offer = VmOffer { id: OfferId(1), name: "o".into(), capacity: ResourceVector(vec![4]), price: 1 };
        let catalog = OfferCatalog::new(vec!["cpu".into()], vec![offer]).unwrap();
        assert_eq!(prepare(&spec, &catalog, &PlanOptions::default()).unwrap().machines, 4);
    }

    #[test]
    fn floor_leaves_case_studies_alone() {
        for (cs, m) in [(CaseStudy::Oryx2, 11), (CaseStudy::SecureWeb, 6), (CaseStudy::SecureBilling, 5), (CaseStudy::Wordpress(3), 8)] {
            let p = prepare(&cs.spec(), &offers(20).unwrap(), &PlanOptions::default()).unwrap();
            assert_eq!(p.machines, m);
            assert!(machine_floor(&p.merged, &p.estimate) <= m as u64);
        }
    }
}
