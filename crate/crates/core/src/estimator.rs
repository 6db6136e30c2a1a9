//! Instance-count surrogate: per-component counts ν and the machine bound M = Σ ν.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundOp, ComponentId, StructuralConstraint, ValidatedSpec};
use crate::solver::engine::{minimize, InOrder, Model, Rel, SearchConfig, Var};

/// How deployment alternatives enter the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogatePolicy {
    /// Every component gets ν ≥ 1; only require-provide, ratio and bound
    /// constraints are considered.
    #[default]
    AllDeployed,
    /// Exclusive-deployment members may be 0; each consistent choice of one
    /// member per exclusive set is a branch, and conditional bounds apply in
    /// branches that deploy their guard.
    ExclusiveBranches,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceEstimate {
    pub component_ids: Vec<ComponentId>,
    pub nu: Vec<u64>,
    pub m_upper: u64,
    /// Minimum count of each component over every feasible instance-count
    /// vector (exclusive sets relaxed, conditional bounds respected).
    pub guaranteed: Vec<u64>,
    /// Box bound used for each ν.
    pub cap: u64,
    pub policy: SurrogatePolicy,
}

impl InstanceEstimate {
    pub fn nu_of(&self, id: ComponentId) -> u64 {
        self.component_ids.iter().position(|&c| c == id).map(|i| self.nu[i]).unwrap_or(0)
    }

    pub fn guaranteed_of(&self, id: ComponentId) -> u64 {
        self.component_ids.iter().position(|&c| c == id).map(|i| self.guaranteed[i]).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EstimateError {
    #[error("instance-count constraints are infeasible")]
    InfeasibleInstanceCounts,
    #[error("no feasible instance counts with every count <= {bound}")]
    NoFeasiblePointWithinBound { bound: u64 },
}

/// Box bound: explicit upper bounds plus 64.
pub fn default_cap(spec: &ValidatedSpec) -> u64 {
    let explicit: u64 = spec
        .constraints
        .iter()
        .map(|c| match c {
            StructuralConstraint::BoundInstances { op: BoundOp::Le | BoundOp::Eq, n, .. }
            | StructuralConstraint::ConditionalBound { op: BoundOp::Le | BoundOp::Eq, n, .. } => *n,
            _ => 0,
        })
        .sum();
    explicit + 64
}

/// One surrogate sub-problem: per-component lower/upper bounds and the
/// conditional bounds in force.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Branch {
    lo: Vec<i64>,
    zero: Vec<bool>,
    conditional: bool,
}

fn exclusive_sets(spec: &ValidatedSpec) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = spec
        .constraints
        .iter()
        .filter_map(|c| match c {
            StructuralConstraint::ExclusiveDeploy { components } => {
                let s: BTreeSet<usize> = components.iter().map(|id| spec.idx(*id)).collect();
                Some(s.into_iter().collect())
            }
            _ => None,
        })
        .collect();
    sets.sort();
    sets.dedup();
    sets
}

fn branches(spec: &ValidatedSpec, policy: SurrogatePolicy, relaxed: bool) -> Vec<Branch> {
    let n = spec.n();
    if policy == SurrogatePolicy::AllDeployed && !relaxed {
        return vec![Branch { lo: vec![1; n], zero: vec![false; n], conditional: false }];
    }
    let sets = exclusive_sets(spec);
    let members: BTreeSet<usize> = sets.iter().flatten().copied().collect();
    let mut out = BTreeSet::new();
    let mut choice = vec![0usize; sets.len()];
    loop {
        let chosen: BTreeSet<usize> = sets.iter().zip(&choice).map(|(s, &c)| s[c]).collect();
        let mut zero = vec![false; n];
        for (s, &c) in sets.iter().zip(&choice) {
            for (pos, &x) in s.iter().enumerate() {
                if pos != c {
                    zero[x] = true;
                }
            }
        }
        if chosen.iter().all(|&x| !zero[x]) {
            let lo = (0..n).map(|i| if zero[i] || (members.contains(&i) && !chosen.contains(&i)) { 0 } else { 1 }).collect();
            out.insert(Branch { lo, zero, conditional: true });
        }
        // advance the mixed-radix counter
        let mut d = 0;
        loop {
            if d == sets.len() {
                return out.into_iter().collect();
            }
            choice[d] += 1;
            if choice[d] < sets[d].len() {
                break;
            }
            choice[d] = 0;
            d += 1;
        }
    }
}

fn rel(op: BoundOp) -> Rel {
    match op {
        BoundOp::Eq => Rel::Eq,
        BoundOp::Le => Rel::Le,
        BoundOp::Ge => Rel::Ge,
    }
}

fn branch_model(spec: &ValidatedSpec, b: &Branch, cap: u64) -> (Model, Vec<Var>) {
    use StructuralConstraint::*;
    let mut m = Model::new();
    let vars: Vec<Var> = (0..spec.n()).map(|i| m.add_var(b.lo[i], if b.zero[i] { 0 } else { cap as i64 })).collect();
    let v = |id: &ComponentId| vars[spec.idx(*id)];
    let sum = |set: &[ComponentId]| set.iter().map(|c| (v(c), 1)).collect::<Vec<_>>();
    for c in &spec.constraints {
        match c {
            RequireProvide { i, j, n, m: mm } => m.add_linear(vec![(v(i), *n as i64), (v(j), -(*mm as i64))], Rel::Le, 0),
            ExactRatio { i, j, n } => {
                m.add_linear(vec![(v(j), *n as i64), (v(i), -1)], Rel::Ge, 0);
                m.add_linear(vec![(v(j), *n as i64), (v(i), -1)], Rel::Le, *n as i64 - 1);
            }
            BoundInstances { components, op, n } => m.add_linear(sum(components), rel(*op), *n as i64),
            ConditionalBound { guard, components, op, n } if b.conditional && b.lo[spec.idx(*guard)] >= 1 => {
                m.add_linear(sum(components), rel(*op), *n as i64)
            }
            _ => {}
        }
    }
    (m, vars)
}

/// Minimum Σ ν with lexicographic tie-break, using the default policy.
pub fn estimate_instances(spec: &ValidatedSpec) -> Result<InstanceEstimate, EstimateError> {
    estimate_with(spec, SurrogatePolicy::default())
}

pub fn estimate_with(spec: &ValidatedSpec, policy: SurrogatePolicy) -> Result<InstanceEstimate, EstimateError> {
    let cap = default_cap(spec);
    let mut best: Option<(u64, Vec<u64>)> = None;
    for b in branches(spec, policy, false) {
        let (mut model, vars) = branch_model(spec, &b, cap);
        model.set_objective(vars.iter().map(|&v| (v, 1)).collect());
        let out = minimize(&model, &InOrder(vars.clone()), None, &SearchConfig::default());
        if let Some((obj, values)) = out.best {
            let nu: Vec<u64> = vars.iter().map(|&v| values[v as usize] as u64).collect();
            let cand = (obj as u64, nu);
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
    }
    let (m_upper, nu) = best.ok_or(EstimateError::InfeasibleInstanceCounts)?;
    let guaranteed = guaranteed_instances(spec, cap)?;
    Ok(InstanceEstimate { component_ids: spec.ids(), nu, m_upper, guaranteed, cap, policy })
}

/// Per-component minimum count over all feasible instance-count vectors with
/// exclusive sets relaxed, each count capped at `cap`.
pub fn guaranteed_instances(spec: &ValidatedSpec, cap: u64) -> Result<Vec<u64>, EstimateError> {
    let bs = branches(spec, SurrogatePolicy::ExclusiveBranches, true);
    let mut lb: Vec<Option<u64>> = vec![None; spec.n()];
    for b in &bs {
        let (base, vars) = branch_model(spec, b, cap);
        for j in 0..spec.n() {
            let mut model = base.clone();
            model.set_objective(vec![(vars[j], 1)]);
            let mut order = vec![vars[j]];
            order.extend(vars.iter().copied().filter(|&v| v != vars[j]));
            if let Some((obj, _)) = minimize(&model, &InOrder(order), None, &SearchConfig::default()).best {
                let obj = obj as u64;
                lb[j] = Some(lb[j].map_or(obj, |x| x.min(obj)));
            }
        }
    }
    lb.into_iter().map(|x| x.ok_or(EstimateError::InfeasibleInstanceCounts)).collect()
}

/// Direct evaluation of the surrogate constraints on a count vector.
pub fn surrogate_feasible(spec: &ValidatedSpec, nu: &[u64], policy: SurrogatePolicy) -> bool {
    use StructuralConstraint::*;
    let count = |id: &ComponentId| nu[spec.idx(*id)] as i64;
    let sum = |set: &[ComponentId]| set.iter().map(count).sum::<i64>();
    let exclusive = spec.exclusive_members();
    for (i, &x) in nu.iter().enumerate() {
        let optional = policy == SurrogatePolicy::ExclusiveBranches && exclusive.contains(&i);
        if x == 0 && !optional {
            return false;
        }
    }
    spec.constraints.iter().all(|c| match c {
        RequireProvide { i, j, n, m } => *n as i64 * count(i) <= *m as i64 * count(j),
        ExactRatio { i, j, n } => {
            let d = *n as i64 * count(j) - count(i);
            0 <= d && d < *n as i64
        }
        BoundInstances { components, op, n } => op.holds(sum(components), *n as i64),
        ExclusiveDeploy { components } if policy == SurrogatePolicy::ExclusiveBranches => {
            let set: BTreeSet<ComponentId> = components.iter().copied().collect();
            set.iter().filter(|id| count(id) > 0).count() == 1
        }
        ConditionalBound { guard, components, op, n } if policy == SurrogatePolicy::ExclusiveBranches => {
            count(guard) == 0 || op.holds(sum(components), *n as i64)
        }
        _ => true,
    })
}

/// Exhaustive enumeration of ν ∈ {0..bound}^N with the default policy.
pub fn solve_surrogate_bruteforce(spec: &ValidatedSpec, bound: u64) -> Result<InstanceEstimate, EstimateError> {
    solve_surrogate_bruteforce_with(spec, bound, SurrogatePolicy::default())
}

pub fn solve_surrogate_bruteforce_with(
    spec: &ValidatedSpec,
    bound: u64,
    policy: SurrogatePolicy,
) -> Result<InstanceEstimate, EstimateError> {
    let n = spec.n();
    let mut nu = vec![0u64; n];
    let mut best: Option<(u64, Vec<u64>)> = None;
    loop {
        if surrogate_feasible(spec, &nu, policy) {
            let s: u64 = nu.iter().sum();
            if best.as_ref().is_none_or(|(b, _)| s < *b) {
                best = Some((s, nu.clone()));
            }
        }
        // odometer with the first component most significant
        let mut d = n;
        loop {
            if d == 0 {
                let (m_upper, nu) = best.ok_or(EstimateError::NoFeasiblePointWithinBound { bound })?;
                return Ok(InstanceEstimate {
                    component_ids: spec.ids(),
                    guaranteed: vec![0; n],
                    nu,
                    m_upper,
                    cap: bound,
                    policy,
                });
            }
            d -= 1;
            if nu[d] < bound {
                nu[d] += 1;
                break;
            }
            nu[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ApplicationSpec, Component, ResourceVector};

    fn spec(n: u32, constraints: Vec<StructuralConstraint>) -> ValidatedSpec {
        ValidatedSpec::structural(ApplicationSpec {
            name: "t".into(),
            dimensions: vec!["cpu".into()],
            components: (1..=n)
                .map(|i| Component { id: ComponentId(i), name: format!("c{i}"), requirements: ResourceVector(vec![1]) })
                .collect(),
            constraints,
        })
        .unwrap()
    }

    #[test]
    fn single_component() {
        let e = estimate_instances(&spec(1, vec![])).unwrap();
        assert_eq!((e.nu.clone(), e.m_upper), (vec![1], 1));
    }

    #[test]
    fn exact_ratio_two() {
        let s = spec(2, vec![StructuralConstraint::ExactRatio { i: ComponentId(1), j: ComponentId(2), n: 2 }]);
        let e = estimate_instances(&s).unwrap();
        // independent check over {0..4}^2
        let mut best = (u64::MAX, vec![]);
        for a in 0..=4u64 {
            for b in 0..=4u64 {
                let d = 2 * b as i64 - a as i64;
                if a >= 1 && b >= 1 && (0..2).contains(&d) && a + b < best.0 {
                    best = (a + b, vec![a, b]);
                }
            }
        }
        assert_eq!(e.nu, best.1);
        assert_eq!(e.m_upper, 2);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let set = vec![ComponentId(1), ComponentId(2)];
        let s = spec(
            2,
            vec![
                StructuralConstraint::BoundInstances { components: set.clone(), op: BoundOp::Ge, n: 5 },
                StructuralConstraint::BoundInstances { components: set, op: BoundOp::Le, n: 3 },
            ],
        );
        assert_eq!(estimate_instances(&s), Err(EstimateError::InfeasibleInstanceCounts));
    }

    #[test]
    fn brute_force_trivial() {
        let e = solve_surrogate_bruteforce(&spec(3, vec![]), 2).unwrap();
        assert_eq!(e.nu, vec![1, 1, 1]);
    }

    #[test]
    fn branch_policy_lets_exclusive_rivals_vanish() {
        let s = spec(
            3,
            vec![
                StructuralConstraint::ExclusiveDeploy { components: vec![ComponentId(2), ComponentId(3)] },
                StructuralConstraint::BoundInstances { components: vec![ComponentId(2)], op: BoundOp::Ge, n: 4 },
            ],
        );
        let e = estimate_with(&s, SurrogatePolicy::ExclusiveBranches);
        // choosing C2 forces 4 instances; choosing C3 contradicts the bound on C2 = 0
        assert_eq!(e.unwrap().nu, vec![1, 4, 0]);
        let p = estimate_with(&s, SurrogatePolicy::AllDeployed).unwrap();
        assert_eq!(p.nu, vec![1, 4, 1]);
        assert_eq!(p.guaranteed, vec![1, 4, 0]);
    }

    #[test]
    fn conditional_bound_only_in_guarded_branch() {
        let s = spec(
            3,
            vec![
                StructuralConstraint::ExclusiveDeploy { components: vec![ComponentId(1), ComponentId(2)] },
                StructuralConstraint::ConditionalBound {
                    guard: ComponentId(1),
                    components: vec![ComponentId(3)],
                    op: BoundOp::Ge,
                    n: 5,
                },
            ],
        );
        let e = estimate_with(&s, SurrogatePolicy::ExclusiveBranches).unwrap();
        assert_eq!(e.nu, vec![0, 1, 1]);
        let bf = solve_surrogate_bruteforce_with(&s, 6, SurrogatePolicy::ExclusiveBranches).unwrap();
        assert_eq!(bf.nu, e.nu);
    }
}
