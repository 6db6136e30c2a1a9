//! Random small instances and an oracle that works on plans, not on the IR.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use deployopt::{
    check_plan, validate_spec, ApplicationSpec, BoundOp, Component, ComponentId, DeploymentPlan, OfferCatalog, OfferId,
    ResourceVector, StructuralConstraint, VmOffer,
};

pub struct Instance {
    pub spec: ApplicationSpec,
    pub catalog: OfferCatalog,
}

fn pick_op(rng: &mut ChaCha8Rng) -> BoundOp {
    *[BoundOp::Eq, BoundOp::Le, BoundOp::Le, BoundOp::Ge, BoundOp::Ge].choose(rng).unwrap()
}

/// A random application with at most `max_n` components and a catalog with
/// at most `max_o` offers. Constraints of every kind appear with moderate
/// probability; the result may be invalid or infeasible.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_o: usize) -> Instance {
    let h = rng.gen_range(1..=3);
    let dims: Vec<String> = ["cpu", "memory", "storage"][..h].iter().map(|s| s.to_string()).collect();
    let n = if rng.gen_bool(0.8) { max_n.saturating_sub(1).max(1)..=max_n } else { 1..=max_n };
    let n = rng.gen_range(n);
    let components: Vec<Component> = (0..n)
        .map(|i| Component {
            id: ComponentId(i as u32 + 1),
            name: format!("C{}", i + 1),
            requirements: ResourceVector((0..h).map(|_| rng.gen_range(1..=4)).collect()),
        })
        .collect();
    let o = rng.gen_range(1..=max_o);
    let offers: Vec<VmOffer> = (0..o)
        .map(|k| VmOffer {
            id: OfferId(k as u32 + 1),
            name: format!("o{}", k + 1),
            capacity: ResourceVector((0..h).map(|_| rng.gen_range(2..=9)).collect()),
            price: rng.gen_range(1..=30) * 1000,
        })
        .collect();
    let id = |i: usize| ComponentId(i as u32 + 1);
    let mut constraints = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.3) {
                constraints.push(StructuralConstraint::Conflict { i: id(i), j: id(j) });
            }
        }
    }
    let pair = |rng: &mut ChaCha8Rng| {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        while n > 1 && j == i {
            j = rng.gen_range(0..n);
        }
        (i, j)
    };
    if n > 1 && rng.gen_bool(0.12) {
        let (i, j) = pair(rng);
        constraints.push(StructuralConstraint::Colocate { i: id(i), j: id(j) });
    }
    if n > 1 && rng.gen_bool(0.15) {
        let (i, j) = pair(rng);
        constraints.push(StructuralConstraint::ExclusiveDeploy { components: vec![id(i), id(j)] });
    }
    if n > 1 && rng.gen_bool(0.35) {
        let (i, j) = pair(rng);
        constraints.push(StructuralConstraint::RequireProvide {
            i: id(i),
            j: id(j),
            n: rng.gen_range(1..=3),
            m: rng.gen_range(1..=3),
        });
    }
    if n > 1 && rng.gen_bool(0.1) {
        let (i, j) = pair(rng);
        constraints.push(StructuralConstraint::ExactRatio { i: id(i), j: id(j), n: rng.gen_range(1..=2) });
    }
    if rng.gen_bool(0.2) {
        constraints.push(StructuralConstraint::FullDeploy { i: id(rng.gen_range(0..n)) });
    }
    for _ in 0..rng.gen_range(0..=2) {
        let k = rng.gen_range(1..=2.min(n));
        let members: Vec<ComponentId> = (0..k).map(|_| id(rng.gen_range(0..n))).collect();
        constraints.push(StructuralConstraint::BoundInstances { components: members, op: pick_op(rng), n: rng.gen_range(0..=3) });
    }
    if n > 1 && rng.gen_bool(0.15) {
        let (g, j) = pair(rng);
        constraints.push(StructuralConstraint::ConditionalBound {
            guard: id(g),
            components: vec![id(j)],
            op: pick_op(rng),
            n: rng.gen_range(0..=3),
        });
    }
    Instance {
        spec: ApplicationSpec { name: "random".into(), dimensions: dims.clone(), components, constraints },
        catalog: OfferCatalog::new(dims, offers).expect("generated catalog is well formed"),
    }
}

/// Minimum price over all plans on `m` machines that pass `check_plan`.
///
/// Machines are identical before a type is chosen, so it suffices to
/// enumerate multisets of columns; the cheapest fitting offer is the best type
/// for a column because no structural constraint mentions types.
pub fn plan_space_optimum(spec: &ApplicationSpec, catalog: &OfferCatalog, m: usize) -> Option<(u64, DeploymentPlan)> {
    let validated = validate_spec(spec, catalog).ok()?;
    let n = spec.components.len();
    let masks = 1usize << n;
    let h = catalog.dimensions.len();
    let cheapest: Vec<Option<(u32, u64)>> = (0..masks)
        .map(|mask| {
            if mask == 0 {
                return Some((0, 0));
            }
            let load: Vec<u64> = (0..h)
                .map(|d| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| spec.components[i].requirements.get(d)).sum())
                .collect();
            catalog
                .offers
                .iter()
                .filter(|o| (0..h).all(|d| load[d] <= o.capacity.get(d)))
                .min_by_key(|o| (o.price, o.id.0))
                .map(|o| (o.id.0, o.price))
        })
        .collect();
    let mut best: Option<(u64, DeploymentPlan)> = None;
    let mut cols = vec![0usize; m];
    fn walk(
        pos: usize,
        start: usize,
        cols: &mut Vec<usize>,
        ctx: &(&deployopt::ValidatedSpec, &OfferCatalog, &[Option<(u32, u64)>], usize),
        best: &mut Option<(u64, DeploymentPlan)>,
    ) {
        let (validated, catalog, cheapest, n) = *ctx;
        if pos == cols.len() {
            let m = cols.len();
            let plan = DeploymentPlan {
                assignment: (0..n).map(|i| (0..m).map(|k| ((cols[k] >> i) & 1) as u8).collect()).collect(),
                types: cols.iter().map(|&c| cheapest[c].unwrap().0).collect(),
                occupancy: cols.iter().map(|&c| u8::from(c != 0)).collect(),
                total_price: cols.iter().map(|&c| cheapest[c].unwrap().1).sum(),
            };
            if best.as_ref().is_some_and(|b| b.0 <= plan.total_price) {
                return;
            }
            if check_plan(validated, catalog, &plan).map(|r| r.passed()).unwrap_or(false) {
                *best = Some((plan.total_price, plan));
            }
            return;
        }
        for c in start..cheapest.len() {
            if cheapest[c].is_none() {
                continue;
            }
            cols[pos] = c;
            walk(pos + 1, c, cols, ctx, best);
        }
    }
    walk(0, 0, &mut cols, &(&validated, catalog, &cheapest, n), &mut best);
    best
}
