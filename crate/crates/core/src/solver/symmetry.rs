//! Detection of interchangeable machines in an IR.
//!
//! Two machines are interchangeable when swapping all of their variables maps
//! the constraint set, the variable bounds and the objective onto themselves.

use std::collections::{HashMap, HashSet};

use crate::encode::{Cmp, ConstraintBody, ConstraintIr, LinExpr, LinPred, VarRole};

type Terms = Vec<(u32, i64)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct PredKey(Terms, u8, i64);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Lin(PredKey),
    Imp(Vec<PredKey>, Vec<PredKey>),
    Ind(u32, Terms),
}

fn norm_terms(e: &LinExpr, perm: &[u32]) -> Terms {
    let mut t: Terms = e.terms.iter().map(|&(v, c)| (perm[v.0 as usize], c)).collect();
    t.sort_unstable();
    let mut out: Terms = Vec::with_capacity(t.len());
    for (v, c) in t {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|x| x.1 != 0);
    out
}

fn pred_key(p: &LinPred, perm: &[u32]) -> PredKey {
    let rel = match p.cmp {
        Cmp::Le => 0,
        Cmp::Ge => 1,
        Cmp::Eq => 2,
    };
    PredKey(norm_terms(&p.expr, perm), rel, p.rhs)
}

fn key(body: &ConstraintBody, perm: &[u32]) -> Key {
    match body {
        ConstraintBody::Linear(p) => Key::Lin(pred_key(p, perm)),
        ConstraintBody::Implication { guard, body } => {
            let mut g: Vec<PredKey> = guard.iter().map(|p| pred_key(p, perm)).collect();
            let mut b: Vec<PredKey> = body.iter().map(|p| pred_key(p, perm)).collect();
            g.sort_unstable();
            b.sort_unstable();
            Key::Imp(g, b)
        }
        ConstraintBody::IndicatorSum { aux, sum } => Key::Ind(perm[aux.0 as usize], norm_terms(sum, perm)),
    }
}

fn machine_of(role: VarRole) -> Option<usize> {
    match role {
        VarRole::Assign { machine, .. }
        | VarRole::Type { machine }
        | VarRole::Occupied { machine }
        | VarRole::Price { machine }
        | VarRole::Capacity { machine, .. } => Some(machine),
        _ => None,
    }
}

struct Detector<'a> {
    ir: &'a ConstraintIr,
    identity: Vec<u32>,
    keys: HashSet<Key>,
    aux_by_sum: HashMap<Terms, u32>,
    touching: Vec<Vec<usize>>,
    aux_touching: Vec<Vec<usize>>,
}

impl<'a> Detector<'a> {
    fn new(ir: &'a ConstraintIr) -> Self {
        let m = ir.dims.m;
        let identity: Vec<u32> = (0..ir.vars.len() as u32).collect();
        let mut var_machines: Vec<Vec<usize>> = ir.vars.iter().map(|d| machine_of(d.role).into_iter().collect()).collect();
        let mut aux_by_sum = HashMap::new();
        let mut aux_touching = vec![Vec::new(); m];
        for (idx, (aux, sum)) in ir.indicators.iter().enumerate() {
            let mut ks: Vec<usize> = sum.terms.iter().flat_map(|t| var_machines[t.0 .0 as usize].clone()).collect();
            ks.sort_unstable();
            ks.dedup();
            for &k in &ks {
                aux_touching[k].push(idx);
            }
            var_machines[aux.0 as usize] = ks;
            aux_by_sum.insert(norm_terms(sum, &identity), aux.0);
        }
        let mut touching = vec![Vec::new(); m];
        let mut keys = HashSet::new();
        for (ci, c) in ir.constraints.iter().enumerate() {
            keys.insert(key(&c.body, &identity));
            let mut ks: Vec<usize> = body_vars(&c.body).iter().flat_map(|&v| var_machines[v as usize].clone()).collect();
            ks.sort_unstable();
            ks.dedup();
            for k in ks {
                touching[k].push(ci);
            }
        }
        Self { ir, identity, keys, aux_by_sum, touching, aux_touching }
    }

    fn swap_perm(&self, k1: usize, k2: usize) -> Option<Vec<u32>> {
        let ir = self.ir;
        let d = ir.dims;
        let mut perm = self.identity.clone();
        let mut pairs = vec![(ir.t(k1), ir.t(k2)), (ir.v(k1), ir.v(k2)), (ir.p(k1), ir.p(k2))];
        pairs.extend((0..d.n).map(|i| (ir.a(i, k1), ir.a(i, k2))));
        pairs.extend((0..d.h).map(|h| (ir.r(k1, h), ir.r(k2, h))));
        for (x, y) in pairs {
            let (dx, dy) = (&ir.vars[x.0 as usize], &ir.vars[y.0 as usize]);
            if (dx.lo, dx.hi) != (dy.lo, dy.hi) {
                return None;
            }
            perm[x.0 as usize] = y.0;
            perm[y.0 as usize] = x.0;
        }
        let mut idxs: Vec<usize> = self.aux_touching[k1].iter().chain(&self.aux_touching[k2]).copied().collect();
        idxs.sort_unstable();
        idxs.dedup();
        let mut mapped = Vec::new();
        for idx in idxs {
            let (aux, sum) = &ir.indicators[idx];
            let image = *self.aux_by_sum.get(&norm_terms(sum, &perm))?;
            let (da, db) = (&ir.vars[aux.0 as usize], &ir.vars[image as usize]);
            if (da.lo, da.hi) != (db.lo, db.hi) {
                return None;
            }
            mapped.push((aux.0, image));
        }
        for (from, to) in mapped {
            perm[from as usize] = to;
        }
        Some(perm)
    }

    fn interchangeable(&self, k1: usize, k2: usize) -> bool {
        let Some(perm) = self.swap_perm(k1, k2) else { return false };
        if norm_terms(&self.ir.objective, &perm) != norm_terms(&self.ir.objective, &self.identity) {
            return false;
        }
        self.touching[k1]
            .iter()
            .chain(&self.touching[k2])
            .all(|&ci| self.keys.contains(&key(&self.ir.constraints[ci].body, &perm)))
    }
}

fn body_vars(body: &ConstraintBody) -> Vec<u32> {
    let of = |p: &LinPred| p.expr.terms.iter().map(|t| t.0 .0).collect::<Vec<_>>();
    match body {
        ConstraintBody::Linear(p) => of(p),
        ConstraintBody::Implication { guard, body } => guard.iter().chain(body).flat_map(of).collect(),
        ConstraintBody::IndicatorSum { aux, sum } => {
            let mut v: Vec<u32> = sum.terms.iter().map(|t| t.0 .0).collect();
            v.push(aux.0);
            v
        }
    }
}

/// Partitions machines into classes of pairwise interchangeable machines,
/// each sorted ascending. Singletons are omitted.
pub fn machine_classes(ir: &ConstraintIr) -> Vec<Vec<usize>> {
    let det = Detector::new(ir);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for k in 0..ir.dims.m {
        match classes.iter_mut().find(|c| det.interchangeable(c[0], k)) {
            Some(c) => c.push(k),
            None => classes.push(vec![k]),
        }
    }
    classes.retain(|c| c.len() > 1);
    classes
}
