//! Exhaustive reference solver for small IRs.
//!
//! Enumerates every column pattern and type per machine, derives the
//! remaining variables from their defining equalities, and checks every IR
//! constraint directly. No propagation is shared with the main engine.

use std::time::Instant;

use super::{plan_from_values, SolveError, SolveResult, SolveStats, SolveStatus};
use crate::encode::{ConstraintBody, ConstraintIr, LinPred, VarId, VarRole};

#[derive(Debug, Clone, Copy)]
pub struct BruteForceCaps {
    /// Upper limit on `(2^N · (O+1))^M`.
    pub max_space: f64,
}

impl Default for BruteForceCaps {
    fn default() -> Self {
        Self { max_space: 1e8 }
    }
}

fn vars_of(body: &ConstraintBody) -> Vec<VarId> {
    let preds = |ps: &[LinPred]| ps.iter().flat_map(|p| p.expr.terms.iter().map(|t| t.0)).collect::<Vec<_>>();
    match body {
        ConstraintBody::Linear(p) => preds(std::slice::from_ref(p)),
        ConstraintBody::Implication { guard, body } => {
            let mut v = preds(guard);
            v.extend(preds(body));
            v
        }
        ConstraintBody::IndicatorSum { aux, sum } => {
            let mut v: Vec<VarId> = sum.terms.iter().map(|t| t.0).collect();
            v.push(*aux);
            v
        }
    }
}

struct Layout {
    /// Machine owning each variable, `None` for global ones.
    owner: Vec<Option<usize>>,
    /// Indicator definitions grouped by owner machine (index `m` is global).
    indicators: Vec<Vec<usize>>,
    /// Constraints checked once machine `k` is set; those fully local to `k` come first.
    local: Vec<Vec<usize>>,
    cross: Vec<Vec<usize>>,
    global: Vec<usize>,
}

fn layout(ir: &ConstraintIr) -> Layout {
    let m = ir.dims.m;
    let mut owner: Vec<Option<usize>> = ir
        .vars
        .iter()
        .map(|d| match d.role {
            VarRole::Assign { machine, .. }
            | VarRole::Type { machine }
            | VarRole::Occupied { machine }
            | VarRole::Price { machine }
            | VarRole::Capacity { machine, .. } => Some(machine),
            VarRole::Count { .. } | VarRole::Indicator { .. } => None,
        })
        .collect();
    let mut indicators = vec![Vec::new(); m + 1];
    for (idx, (aux, sum)) in ir.indicators.iter().enumerate() {
        let owners: Vec<Option<usize>> = sum.terms.iter().map(|t| owner[t.0 .0 as usize]).collect();
        let single = match owners.first() {
            Some(&Some(k)) if owners.iter().all(|&o| o == Some(k)) => Some(k),
            _ => None,
        };
        owner[aux.0 as usize] = single;
        indicators[single.unwrap_or(m)].push(idx);
    }
    let (mut local, mut cross, mut global) = (vec![Vec::new(); m], vec![Vec::new(); m], Vec::new());
    for (ci, c) in ir.constraints.iter().enumerate() {
        let owners: Vec<Option<usize>> = vars_of(&c.body).iter().map(|v| owner[v.0 as usize]).collect();
        if owners.is_empty() || owners.iter().any(|o| o.is_none()) {
            global.push(ci);
            continue;
        }
        let ks: Vec<usize> = owners.into_iter().flatten().collect();
        let hi = *ks.iter().max().unwrap();
        if ks.iter().all(|&k| k == hi) {
            local[hi].push(ci);
        } else {
            cross[hi].push(ci);
        }
    }
    Layout { owner, indicators, local, cross, global }
}

struct Search<'a> {
    ir: &'a ConstraintIr,
    lay: Layout,
    cands: Vec<Vec<(u64, usize)>>,
    values: Vec<i64>,
    best: Option<(i64, Vec<i64>)>,
    nodes: u64,
    updates: u64,
}

impl Search<'_> {
    fn in_range(&self, v: VarId) -> bool {
        let d = &self.ir.vars[v.0 as usize];
        let x = self.values[v.0 as usize];
        d.lo <= x && x <= d.hi
    }

    fn set_machine(&mut self, k: usize, mask: u64, ty: usize) {
        let ir = self.ir;
        let d = ir.dims;
        for i in 0..d.n {
            self.values[ir.a(i, k).0 as usize] = ((mask >> i) & 1) as i64;
        }
        self.values[ir.t(k).0 as usize] = ty as i64;
        self.values[ir.v(k).0 as usize] = i64::from(mask != 0);
        let (price, caps) = if ty == 0 {
            (0, vec![0; d.h])
        } else {
            let o = &ir.offers[ty - 1];
            (o.price as i64, o.capacity.iter().map(|&c| c as i64).collect())
        };
        self.values[ir.p(k).0 as usize] = price;
        for (hh, c) in caps.into_iter().enumerate() {
            self.values[ir.r(k, hh).0 as usize] = c;
        }
        for idx in self.lay.indicators[k].clone() {
            let (aux, sum) = &ir.indicators[idx];
            self.values[aux.0 as usize] = i64::from(sum.eval(&self.values) > 0);
        }
    }

    fn machine_vars_ok(&self, k: usize) -> bool {
        (0..self.ir.vars.len()).filter(|&v| self.lay.owner[v] == Some(k)).all(|v| self.in_range(VarId(v as u32)))
    }

    fn all_hold(&self, cs: &[usize]) -> bool {
        cs.iter().all(|&c| self.ir.constraints[c].holds(&self.values))
    }

    fn dfs(&mut self, k: usize, cost: i64) {
        self.nodes += 1;
        if let Some((b, _)) = &self.best {
            if cost >= *b {
                return;
            }
        }
        let ir = self.ir;
        if k == ir.dims.m {
            for i in 0..ir.dims.n {
                let s: i64 = (0..ir.dims.m).map(|kk| self.values[ir.a(i, kk).0 as usize]).sum();
                self.values[ir.n(i).0 as usize] = s;
            }
            for idx in self.lay.indicators[ir.dims.m].clone() {
                let (aux, sum) = &ir.indicators[idx];
                self.values[aux.0 as usize] = i64::from(sum.eval(&self.values) > 0);
            }
            let globals_ok = (0..ir.vars.len()).filter(|&v| self.lay.owner[v].is_none()).all(|v| self.in_range(VarId(v as u32)));
            if globals_ok && self.all_hold(&self.lay.global) {
                debug_assert!(ir.satisfied(&self.values));
                self.best = Some((cost, self.values.clone()));
                self.updates += 1;
            }
            return;
        }
        for ci in 0..self.cands[k].len() {
            let (mask, ty) = self.cands[k][ci];
            self.set_machine(k, mask, ty);
            if !self.all_hold(&self.lay.cross[k]) {
                continue;
            }
            let price = self.values[ir.p(k).0 as usize];
            self.dfs(k + 1, cost + price);
        }
    }
}

/// Exhaustively minimizes the objective of `ir`.
pub fn brute_force(ir: &ConstraintIr, caps: &BruteForceCaps) -> Result<SolveResult, SolveError> {
    ir.well_formed().map_err(SolveError::MalformedIr)?;
    let d = ir.dims;
    let per_machine = 2f64.powi(d.n as i32) * (d.o as f64 + 1.0);
    let size = per_machine.powi(d.m as i32);
    if size > caps.max_space || d.n >= 63 {
        return Err(SolveError::SpaceTooLarge { size, cap: caps.max_space });
    }
    let start = Instant::now();
    let lay = layout(ir);
    let mut s = Search {
        ir,
        lay,
        cands: vec![Vec::new(); d.m],
        values: ir.vars.iter().map(|v| v.lo).collect(),
        best: None,
        nodes: 0,
        updates: 0,
    };
    for k in 0..d.m {
        for mask in 0..(1u64 << d.n) {
            for ty in 0..=d.o {
                s.set_machine(k, mask, ty);
                let local = s.lay.local[k].clone();
                if s.machine_vars_ok(k) && s.all_hold(&local) {
                    s.cands[k].push((mask, ty));
                }
            }
        }
    }
    s.dfs(0, 0);
    let stats = SolveStats { nodes_explored: s.nodes, time_ms: start.elapsed().as_millis() as u64, incumbent_updates: s.updates };
    Ok(match s.best {
        Some((obj, values)) => SolveResult {
            status: SolveStatus::Optimal,
            plan: Some(plan_from_values(ir, &values)),
            objective: Some(obj as u64),
            proven: true,
            stats,
            values: Some(values),
        },
        None => SolveResult { status: SolveStatus::Infeasible, plan: None, objective: None, proven: true, stats, values: None },
    })
}
