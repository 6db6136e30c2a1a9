//! Co-location merging into hyper-components and the inverse plan expansion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ApplicationSpec, BoundOp, Component, ComponentId, DeploymentPlan, StructuralConstraint, ValidatedSpec,
    ValidationErrors,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperGroup {
    pub hyper_id: ComponentId,
    pub members: Vec<ComponentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMapping {
    pub groups: Vec<HyperGroup>,
    pub passthrough: Vec<ComponentId>,
    /// Exclusive-deployment rivals removed in favour of a hyper-component.
    pub excluded: Vec<ComponentId>,
    /// Original component ids in spec order.
    pub original: Vec<ComponentId>,
    /// Merged component ids in merged spec order.
    pub merged: Vec<ComponentId>,
}

impl ComponentMapping {
    pub fn identity(spec: &ApplicationSpec) -> Self {
        Self {
            groups: vec![],
            passthrough: spec.ids(),
            excluded: vec![],
            original: spec.ids(),
            merged: spec.ids(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.groups.is_empty() && self.excluded.is_empty()
    }

    /// Merged id carrying an original component, if it was not excluded.
    pub fn image(&self, id: ComponentId) -> Option<ComponentId> {
        if self.excluded.contains(&id) {
            return None;
        }
        self.groups.iter().find(|g| g.members.contains(&id)).map(|g| g.hyper_id).or(Some(id))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("components {i} and {j} are co-located but in conflict")]
    ColocatedConflict { i: ComponentId, j: ComponentId },
    #[error("co-located components {i} and {j} share an exclusive-deployment set")]
    ColocatedExclusive { i: ComponentId, j: ComponentId },
    #[error("cannot exclude {rival}: {reason}")]
    UnsupportedExclusion { rival: ComponentId, reason: String },
    #[error("excluding {rival} makes the specification infeasible")]
    InfeasibleAfterExclusion { rival: ComponentId },
    #[error("merged specification invalid: {0}")]
    Invalid(#[from] ValidationErrors),
    #[error("plan does not match mapping: {0}")]
    MappingMismatch(String),
}

fn find(parent: &mut BTreeMap<ComponentId, ComponentId>, x: ComponentId) -> ComponentId {
    let p = parent[&x];
    if p == x {
        return x;
    }
    let r = find(parent, p);
    parent.insert(x, r);
    r
}

fn bound(set: Vec<ComponentId>, op: BoundOp, n: u64) -> StructuralConstraint {
    StructuralConstraint::BoundInstances { components: set, op, n }
}

/// Merges co-location groups (transitive closure of `Colocate`) into
/// hyper-components and rewrites every constraint accordingly.
pub fn merge_colocated(spec: &ValidatedSpec) -> Result<(ValidatedSpec, ComponentMapping), PreprocessError> {
    use StructuralConstraint::*;
    let mut parent: BTreeMap<ComponentId, ComponentId> = spec.ids().into_iter().map(|i| (i, i)).collect();
    for c in &spec.constraints {
        if let Colocate { i, j } = c {
            let (a, b) = (find(&mut parent, *i), find(&mut parent, *j));
            if a != b {
                parent.insert(a.max(b), a.min(b));
            }
        }
    }
    let mut groups: BTreeMap<ComponentId, Vec<ComponentId>> = BTreeMap::new();
    for id in spec.ids() {
        let root = find(&mut parent, id);
        groups.entry(root).or_default().push(id);
    }
    groups.retain(|_, m| m.len() > 1);
    if groups.is_empty() {
        return Ok((spec.clone(), ComponentMapping::identity(spec)));
    }
    let hyper: BTreeMap<ComponentId, ComponentId> =
        groups.iter().flat_map(|(h, ms)| ms.iter().map(move |m| (*m, *h))).collect();
    let map = |id: ComponentId| hyper.get(&id).copied().unwrap_or(id);

    for c in &spec.constraints {
        if let Conflict { i, j } = c {
            if map(*i) == map(*j) {
                return Err(PreprocessError::ColocatedConflict { i: *i, j: *j });
            }
        }
    }

    // Exclusive sets touching a group: the group wins, the other members go.
    let mut excluded: BTreeSet<ComponentId> = BTreeSet::new();
    for c in &spec.constraints {
        if let ExclusiveDeploy { components } = c {
            let grouped: Vec<ComponentId> = components.iter().copied().filter(|x| hyper.contains_key(x)).collect();
            if grouped.len() > 1 {
                return Err(PreprocessError::ColocatedExclusive { i: grouped[0], j: grouped[1] });
            }
            if grouped.len() == 1 {
                for &r in components.iter().filter(|&&r| r != grouped[0]) {
                    excluded.insert(r);
                }
            }
        }
    }

    let mut constraints: Vec<StructuralConstraint> = Vec::new();
    let push = |c: StructuralConstraint, out: &mut Vec<StructuralConstraint>| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    for &r in &excluded {
        if hyper.contains_key(&r) {
            return Err(PreprocessError::UnsupportedExclusion { rival: r, reason: "it is co-located".into() });
        }
    }
    let ex = |id: &ComponentId| excluded.contains(id);

    for c in &spec.constraints {
        match c {
            Colocate { .. } => {}
            Conflict { i, j } => {
                if !ex(i) && !ex(j) {
                    let (a, b) = (map(*i), map(*j));
                    let pair = Conflict { i: a.min(b), j: a.max(b) };
                    let mirrored = Conflict { i: a.max(b), j: a.min(b) };
                    if !constraints.contains(&pair) && !constraints.contains(&mirrored) {
                        push(Conflict { i: a, j: b }, &mut constraints);
                    }
                }
            }
            ExclusiveDeploy { components } => {
                let rest: Vec<ComponentId> = components.iter().filter(|x| !ex(x)).map(|&x| map(x)).collect();
                if rest.is_empty() {
                    return Err(PreprocessError::InfeasibleAfterExclusion { rival: components[0] });
                }
                push(ExclusiveDeploy { components: rest }, &mut constraints);
            }
            FullDeploy { i } => {
                if ex(i) {
                    return Err(PreprocessError::UnsupportedExclusion { rival: *i, reason: "it is fully deployed".into() });
                }
                push(FullDeploy { i: map(*i) }, &mut constraints);
            }
            RequireProvide { i, j, n, m } => {
                if ex(i) {
                    continue;
                }
                if ex(j) {
                    push(bound(vec![map(*i)], BoundOp::Eq, 0), &mut constraints);
                    continue;
                }
                let (a, b) = (map(*i), map(*j));
                if a == b {
                    if n > m {
                        push(bound(vec![a], BoundOp::Eq, 0), &mut constraints);
                    }
                } else {
                    push(RequireProvide { i: a, j: b, n: *n, m: *m }, &mut constraints);
                }
            }
            ExactRatio { i, j, n } => {
                match (ex(i), ex(j)) {
                    (true, true) => {}
                    (true, false) => push(bound(vec![map(*j)], BoundOp::Eq, 0), &mut constraints),
                    (false, true) => push(bound(vec![map(*i)], BoundOp::Eq, 0), &mut constraints),
                    (false, false) => {
                        let (a, b) = (map(*i), map(*j));
                        if a == b {
                            // 0 <= (n-1)·x < n
                            if *n >= 2 {
                                push(bound(vec![a], BoundOp::Le, 1), &mut constraints);
                            }
                        } else {
                            push(ExactRatio { i: a, j: b, n: *n }, &mut constraints);
                        }
                    }
                }
            }
            BoundInstances { components, op, n } => {
                let rest: Vec<ComponentId> = components.iter().filter(|x| !ex(x)).map(|&x| map(x)).collect();
                if rest.is_empty() {
                    if !op.holds(0, *n as i64) {
                        return Err(PreprocessError::InfeasibleAfterExclusion { rival: components[0] });
                    }
                } else {
                    push(BoundInstances { components: rest, op: *op, n: *n }, &mut constraints);
                }
            }
            ConditionalBound { guard, components, op, n } => {
                if ex(guard) {
                    continue;
                }
                let rest: Vec<ComponentId> = components.iter().filter(|x| !ex(x)).map(|&x| map(x)).collect();
                if rest.is_empty() {
                    if !op.holds(0, *n as i64) {
                        push(bound(vec![map(*guard)], BoundOp::Eq, 0), &mut constraints);
                    }
                } else {
                    push(ConditionalBound { guard: map(*guard), components: rest, op: *op, n: *n }, &mut constraints);
                }
            }
        }
    }

    // A group inherits every member's conflicts, so its lifted full-deploy
    // row tolerates more rivals than the member itself. A partner that
    // conflicts with the group but not with the full-deploy member can never
    // be deployed: the member, and with it the group, must share its machine.
    let conflicts = |x: ComponentId, y: ComponentId| {
        spec.constraints.iter().any(|c| matches!(c, Conflict { i, j } if (*i == x && *j == y) || (*i == y && *j == x)))
    };
    for c in &spec.constraints {
        let FullDeploy { i: f } = c else { continue };
        let Some(members) = groups.get(&map(*f)) else { continue };
        let mut partners: BTreeSet<ComponentId> = BTreeSet::new();
        for c in &spec.constraints {
            if let Conflict { i, j } = c {
                if ex(i) || ex(j) {
                    continue;
                }
                if members.contains(i) {
                    partners.insert(map(*j));
                } else if members.contains(j) {
                    partners.insert(map(*i));
                }
            }
        }
        for p in partners {
            let rival = spec.ids().into_iter().any(|x| map(x) == p && !ex(&x) && conflicts(*f, x));
            if !rival {
                push(bound(vec![p], BoundOp::Eq, 0), &mut constraints);
            }
        }
    }

    let mut components = Vec::new();
    for comp in &spec.components {
        if ex(&comp.id) {
            continue;
        }
        match groups.get(&map(comp.id)) {
            None => components.push(comp.clone()),
            Some(members) if members[0] == comp.id => {
                let parts: Vec<&Component> = members.iter().map(|m| spec.component(*m).unwrap()).collect();
                let mut req = parts[0].requirements.clone();
                for p in &parts[1..] {
                    req = req.add(&p.requirements);
                }
                components.push(Component {
                    id: comp.id,
                    name: parts.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join("+"),
                    requirements: req,
                });
            }
            Some(_) => {}
        }
    }

    let merged = ApplicationSpec { name: spec.name.clone(), dimensions: spec.dimensions.clone(), components, constraints };
    let mapping = ComponentMapping {
        groups: groups.iter().map(|(h, ms)| HyperGroup { hyper_id: *h, members: ms.clone() }).collect(),
        passthrough: spec.ids().into_iter().filter(|id| !hyper.contains_key(id) && !ex(id)).collect(),
        excluded: excluded.into_iter().collect(),
        original: spec.ids(),
        merged: merged.ids(),
    };
    Ok((ValidatedSpec::structural(merged)?, mapping))
}

/// Copies each merged row back to every original member; excluded components get zero rows.
pub fn expand_plan(plan: &DeploymentPlan, mapping: &ComponentMapping) -> Result<DeploymentPlan, PreprocessError> {
    if plan.assignment.len() != mapping.merged.len() {
        return Err(PreprocessError::MappingMismatch(format!(
            "plan has {} rows, merged spec has {} components",
            plan.assignment.len(),
            mapping.merged.len()
        )));
    }
    let m = plan.types.len();
    let mut assignment = Vec::with_capacity(mapping.original.len());
    for &id in &mapping.original {
        match mapping.image(id) {
            None => assignment.push(vec![0; m]),
            Some(h) => {
                let row = mapping
                    .merged
                    .iter()
                    .position(|&x| x == h)
                    .ok_or_else(|| PreprocessError::MappingMismatch(format!("no merged row for {h}")))?;
                assignment.push(plan.assignment[row].clone());
            }
        }
    }
    Ok(DeploymentPlan { assignment, ..plan.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ResourceVector;

    fn spec(n: u32, constraints: Vec<StructuralConstraint>) -> ValidatedSpec {
        ValidatedSpec::structural(ApplicationSpec {
            name: "t".into(),
            dimensions: vec!["cpu".into()],
            components: (1..=n)
                .map(|i| Component { id: ComponentId(i), name: format!("c{i}"), requirements: ResourceVector(vec![i as u64]) })
                .collect(),
            constraints,
        })
        .unwrap()
    }

    fn id(i: u32) -> ComponentId {
        ComponentId(i)
    }

    #[test]
    fn no_colocation_is_identity() {
        let s = spec(3, vec![StructuralConstraint::Conflict { i: id(1), j: id(2) }]);
        let (m, map) = merge_colocated(&s).unwrap();
        assert_eq!(m, s);
        assert!(map.is_identity());
    }

    #[test]
    fn inherited_conflict_of_full_deploy_group_blocks_partner() {
        use StructuralConstraint::*;
        let s = spec(
            3,
            vec![Colocate { i: id(1), j: id(2) }, FullDeploy { i: id(2) }, Conflict { i: id(1), j: id(3) }],
        );
        let (m, _) = merge_colocated(&s).unwrap();
        assert!(m.constraints.contains(&bound(vec![id(3)], BoundOp::Eq, 0)));
        let s = spec(
            3,
            vec![Colocate { i: id(1), j: id(2) }, FullDeploy { i: id(2) }, Conflict { i: id(2), j: id(3) }],
        );
        let (m, _) = merge_colocated(&s).unwrap();
        assert!(!m.constraints.iter().any(|c| matches!(c, BoundInstances { .. })));
    }

    #[test]
    fn chain_forms_one_group() {
        let s = spec(
            4,
            vec![
                StructuralConstraint::Colocate { i: id(1), j: id(2) },
                StructuralConstraint::Colocate { i: id(2), j: id(3) },
                StructuralConstraint::Conflict { i: id(3), j: id(4) },
            ],
        );
        let (m, map) = merge_colocated(&s).unwrap();
        assert_eq!(map.groups, vec![HyperGroup { hyper_id: id(1), members: vec![id(1), id(2), id(3)] }]);
        assert_eq!(m.n(), 2);
        assert_eq!(m.components[0].requirements.0, vec![6]);
        assert_eq!(m.components[0].name, "c1+c2+c3");
        assert_eq!(m.constraints, vec![StructuralConstraint::Conflict { i: id(1), j: id(4) }]);
    }

    #[test]
    fn colocated_conflict_rejected() {
        let s = spec(
            3,
            vec![
                StructuralConstraint::Colocate { i: id(1), j: id(2) },
                StructuralConstraint::Colocate { i: id(2), j: id(3) },
                StructuralConstraint::Conflict { i: id(1), j: id(3) },
            ],
        );
        assert!(matches!(merge_colocated(&s), Err(PreprocessError::ColocatedConflict { .. })));
    }

    #[test]
    fn exclusive_rival_is_removed() {
        let s = spec(
            4,
            vec![
                StructuralConstraint::Colocate { i: id(1), j: id(2) },
                StructuralConstraint::ExclusiveDeploy { components: vec![id(2), id(3)] },
                StructuralConstraint::RequireProvide { i: id(4), j: id(3), n: 1, m: 1 },
            ],
        );
        let (m, map) = merge_colocated(&s).unwrap();
        assert_eq!(map.excluded, vec![id(3)]);
        assert_eq!(m.ids(), vec![id(1), id(4)]);
        assert!(m.constraints.contains(&bound(vec![id(4)], BoundOp::Eq, 0)));
        let plan = DeploymentPlan { assignment: vec![vec![1, 0], vec![0, 1]], types: vec![1, 1], occupancy: vec![1, 1], total_price: 2 };
        let e = expand_plan(&plan, &map).unwrap();
        assert_eq!(e.assignment, vec![vec![1, 0], vec![1, 0], vec![0, 0], vec![0, 1]]);
    }

    #[test]
    fn bounds_keep_multiplicity() {
        let s = spec(
            3,
            vec![
                StructuralConstraint::Colocate { i: id(1), j: id(2) },
                StructuralConstraint::BoundInstances { components: vec![id(1), id(2), id(3)], op: BoundOp::Ge, n: 4 },
            ],
        );
        let (m, _) = merge_colocated(&s).unwrap();
        assert!(m.constraints.contains(&bound(vec![id(1), id(1), id(3)], BoundOp::Ge, 4)));
    }

    #[test]
    fn mismatched_plan_rejected() {
        let s = spec(2, vec![StructuralConstraint::Colocate { i: id(1), j: id(2) }]);
        let (_, map) = merge_colocated(&s).unwrap();
        let plan = DeploymentPlan { assignment: vec![vec![1], vec![1]], types: vec![1], occupancy: vec![1], total_price: 1 };
        assert!(matches!(expand_plan(&plan, &map), Err(PreprocessError::MappingMismatch(_))));
    }
}
