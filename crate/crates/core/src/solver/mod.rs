//! Exact optimization of a [`ConstraintIr`] and an exhaustive oracle.

pub mod brute;
pub mod engine;
pub mod symmetry;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{lower_h_terms, ConstraintBody, ConstraintIr, Family, LinPred};
use crate::confgraph::{enumerate_maximal_cliques, ConflictGraph};
use crate::model::{ComponentId, DeploymentPlan};
use engine::{minimize, Bounder, Brancher, Domains, Model, Pred, Prop, Rel, Scratch, SearchConfig, Var};

pub use brute::{brute_force, BruteForceCaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Timeout,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub time_ms: u64,
    pub incumbent_updates: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present when optimal, and on timeout when an incumbent exists.
    pub plan: Option<DeploymentPlan>,
    pub objective: Option<u64>,
    /// True when optimality was proven.
    pub proven: bool,
    pub stats: SolveStats,
    /// Full variable assignment behind `plan`.
    #[serde(skip)]
    pub values: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error("malformed IR: {0}")]
    MalformedIr(String),
    #[error("search space of {size:.3e} points exceeds the cap of {cap:.3e}")]
    SpaceTooLarge { size: f64, cap: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub timeout: Option<Duration>,
    /// 0 or 1 for deterministic single-threaded search.
    pub threads: usize,
}

impl SolveOptions {
    pub fn with_timeout_ms(ms: u64) -> Self {
        Self { timeout: Some(Duration::from_millis(ms)), threads: 1 }
    }
}

fn to_pred(p: &LinPred) -> Pred {
    let rel = match p.cmp {
        crate::encode::Cmp::Le => Rel::Le,
        crate::encode::Cmp::Ge => Rel::Ge,
        crate::encode::Cmp::Eq => Rel::Eq,
    };
    Pred::new(p.expr.terms.iter().map(|&(v, c)| (v.0 as Var, c)).collect(), rel, p.rhs)
}

/// Translates a lowered IR into an engine model with identical variable numbering.
pub fn to_model(ir: &ConstraintIr) -> Result<Model, SolveError> {
    ir.well_formed().map_err(SolveError::MalformedIr)?;
    let mut m = Model::new();
    for v in &ir.vars {
        if v.lo > v.hi {
            return Err(SolveError::MalformedIr(format!("variable {} has an empty range", v.name)));
        }
        m.add_var(v.lo, v.hi);
    }
    for c in &ir.constraints {
        match &c.body {
            ConstraintBody::Linear(p) => m.add(Prop::Linear(to_pred(p))),
            ConstraintBody::Implication { guard, body } => m.add(Prop::Implies {
                guard: guard.iter().map(to_pred).collect(),
                body: body.iter().map(to_pred).collect(),
            }),
            ConstraintBody::IndicatorSum { .. } => {
                return Err(SolveError::MalformedIr("indicator terms must be lowered first".into()))
            }
        }
    }
    m.set_objective(ir.objective.terms.iter().map(|&(v, c)| (v.0 as Var, c)).collect());
    Ok(m)
}

/// Families that only tie a machine's type, price and capacity to its own column.
fn is_local_family(f: Family) -> bool {
    matches!(f, Family::Link | Family::UnusedMachine | Family::Capacity | Family::Occupancy)
}

/// Per machine, whether its type is constrained only through its own column.
/// Once the column is fixed, the cheapest fitting offer is then optimal.
fn type_free_machines(ir: &ConstraintIr) -> Vec<bool> {
    machines_free_of(ir, is_local_family)
}

/// Machines whose type is further tied only by price ordering. With every
/// column fixed, taking from the back of each chain the cheapest fitting offer
/// not below the successor's price yields the least price everywhere.
fn chain_free_machines(ir: &ConstraintIr) -> Vec<bool> {
    machines_free_of(ir, |f| is_local_family(f) || f == Family::PriceOrder)
}

fn machines_free_of(ir: &ConstraintIr, ignore: impl Fn(Family) -> bool) -> Vec<bool> {
    let d = ir.dims;
    let mut owner = vec![None; ir.vars.len()];
    for k in 0..d.m {
        owner[ir.t(k).0 as usize] = Some(k);
        owner[ir.p(k).0 as usize] = Some(k);
        for h in 0..d.h {
            owner[ir.r(k, h).0 as usize] = Some(k);
        }
    }
    let mut free = vec![true; d.m];
    for c in ir.constraints.iter().filter(|c| !ignore(c.family)) {
        let preds: Vec<&LinPred> = match &c.body {
            ConstraintBody::Linear(p) => vec![p],
            ConstraintBody::Implication { guard, body } => guard.iter().chain(body).collect(),
            ConstraintBody::IndicatorSum { .. } => vec![],
        };
        for p in preds {
            for &(v, _) in &p.expr.terms {
                if let Some(k) = owner[v.0 as usize] {
                    free[k] = false;
                }
            }
        }
    }
    free
}

/// A full-deploy row split per machine: `a[row][k] + aux_k = v_k` for every `k`.
struct FullDeployRow {
    row: usize,
    /// Per machine, the rival indicator if any.
    aux: Vec<Option<Var>>,
}

/// Recognizes full-deploy constraints `Σ_k (a_xk + b_k) - Σ_k v_k = 0` whose
/// indicators `b_k` range over rows conflicting with `x` on machine `k`.
/// Occupancy and conflicts make every per-machine term nonpositive, so each
/// term is zero.
fn full_deploy_rows(ir: &ConstraintIr) -> Vec<FullDeployRow> {
    use crate::encode::VarRole;
    use std::collections::{HashMap, HashSet};
    let d = ir.dims;
    let mut conflicts: HashSet<(u32, u32)> = HashSet::new();
    for c in ir.constraints.iter().filter(|c| c.family == Family::Conflict) {
        if let ConstraintBody::Linear(p) = &c.body {
            if let [(x, 1), (y, 1)] = p.expr.terms.as_slice() {
                if p.cmp == crate::encode::Cmp::Le && p.rhs == 1 {
                    conflicts.insert((x.0, y.0));
                    conflicts.insert((y.0, x.0));
                }
            }
        }
    }
    let sums: HashMap<u32, &crate::encode::LinExpr> = ir.indicators.iter().map(|(v, e)| (v.0, e)).collect();
    let mut out = Vec::new();
    'next: for c in ir.constraints.iter().filter(|c| c.family == Family::FullDeploy) {
        let ConstraintBody::Linear(p) = &c.body else { continue };
        if p.cmp != crate::encode::Cmp::Eq || p.rhs != 0 {
            continue;
        }
        let mut row = None;
        let mut cells = vec![false; d.m];
        let mut occ = vec![false; d.m];
        let mut aux = vec![None; d.m];
        for &(v, coef) in &p.expr.terms {
            match (ir.vars[v.0 as usize].role, coef) {
                (VarRole::Assign { row: i, machine }, 1) if row.is_none_or(|r| r == i) && !cells[machine] => {
                    row = Some(i);
                    cells[machine] = true;
                }
                (VarRole::Occupied { machine }, -1) if !occ[machine] => occ[machine] = true,
                (VarRole::Indicator { .. }, 1) => {
                    let Some(sum) = sums.get(&v.0) else { continue 'next };
                    let mut machine = None;
                    for &(w, wc) in &sum.terms {
                        match ir.vars[w.0 as usize].role {
                            VarRole::Assign { machine: k, .. } if wc == 1 && machine.is_none_or(|m| m == k) => machine = Some(k),
                            _ => continue 'next,
                        }
                    }
                    let Some(k) = machine else { continue 'next };
                    if aux[k].is_some() {
                        continue 'next;
                    }
                    aux[k] = Some((v.0, sum.terms.iter().map(|t| t.0 .0).collect::<Vec<_>>()));
                }
                _ => continue 'next,
            }
        }
        let Some(row) = row else { continue };
        if !cells.iter().all(|&x| x) || !occ.iter().all(|&x| x) {
            continue;
        }
        let mut aux_vars = Vec::with_capacity(d.m);
        for (k, entry) in aux.into_iter().enumerate() {
            match entry {
                Some((b, members)) => {
                    let own = ir.a(row, k).0;
                    if !members.iter().all(|&j| conflicts.contains(&(own, j))) {
                        continue 'next;
                    }
                    aux_vars.push(Some(b));
                }
                None => aux_vars.push(None),
            }
        }
        out.push(FullDeployRow { row, aux: aux_vars });
    }
    out
}

/// The engine model plus column ordering between interchangeable machines
/// and the per-machine form of full-deploy constraints.
pub fn search_model(ir: &ConstraintIr) -> Result<Model, SolveError> {
    let mut model = to_model(ir)?;
    for fd in full_deploy_rows(ir) {
        for (k, aux) in fd.aux.iter().enumerate() {
            let mut terms = vec![(ir.a(fd.row, k).0, 1), (ir.v(k).0, -1)];
            if let Some(b) = aux {
                terms.push((*b, 1));
            }
            model.add(Prop::Linear(Pred::new(terms, Rel::Eq, 0)));
        }
    }
    for class in symmetry::machine_classes(ir) {
        for w in class.windows(2) {
            let col = |k: usize| (0..ir.dims.n).map(|i| ir.a(i, k).0).collect::<Vec<Var>>();
            model.add(Prop::LexGe { x: col(w[0]), y: col(w[1]) });
        }
    }
    Ok(model)
}

/// Machines left to right: the assignment cells by component row (1 first),
/// then the type by ascending price among offers fitting the column.
pub struct DeployBrancher {
    n: usize,
    a: Vec<Vec<Var>>,
    t: Vec<Var>,
    req: Vec<Vec<i64>>,
    offers: Vec<(Vec<i64>, i64)>,
    by_price: Vec<usize>,
    type_free: Vec<bool>,
    /// Types decided only after every column, last machine first.
    deferred: Vec<bool>,
    p: Vec<Var>,
}

impl DeployBrancher {
    pub fn new(ir: &ConstraintIr) -> Self {
        let d = ir.dims;
        let offers: Vec<(Vec<i64>, i64)> =
            ir.offers.iter().map(|o| (o.capacity.iter().map(|&x| x as i64).collect(), o.price as i64)).collect();
        let mut by_price: Vec<usize> = (0..offers.len()).collect();
        by_price.sort_by_key(|&o| (offers[o].1, o));
        let type_free = type_free_machines(ir);
        Self {
            n: d.n,
            a: (0..d.m).map(|k| (0..d.n).map(|i| ir.a(i, k).0).collect()).collect(),
            t: (0..d.m).map(|k| ir.t(k).0).collect(),
            req: ir.requirements.iter().map(|r| r.iter().map(|&x| x as i64).collect()).collect(),
            offers,
            by_price,
            deferred: chain_free_machines(ir).iter().zip(&type_free).map(|(&c, &t)| c && !t).collect(),
            type_free,
            p: (0..d.m).map(|k| ir.p(k).0).collect(),
        }
    }
}

impl DeployBrancher {
    fn type_values(&self, dom: &Domains, k: usize, min_price: i64) -> Vec<i64> {
        let t = self.t[k];
        let (lo, hi) = (dom.lo[t as usize], dom.hi[t as usize]);
        let col = &self.a[k];
        let rows: Vec<usize> = (0..self.n).filter(|&i| dom.lo[col[i] as usize] == 1).collect();
        let fits = |o: usize| {
            rows.is_empty()
                || (0..self.offers[o].0.len()).all(|h| rows.iter().map(|&i| self.req[i][h]).sum::<i64>() <= self.offers[o].0[h])
        };
        let mut vals: Vec<i64> = self
            .by_price
            .iter()
            .filter(|&&o| self.offers[o].1 >= min_price)
            .map(|&o| o as i64 + 1)
            .filter(|&id| lo <= id && id <= hi && fits(id as usize - 1))
            .collect();
        if (self.type_free[k] || self.deferred[k]) && !rows.is_empty() {
            vals.truncate(1);
        }
        if lo == 0 {
            vals.push(0);
        }
        vals
    }
}

impl Brancher for DeployBrancher {
    fn choose(&self, dom: &Domains) -> Option<(Var, Vec<i64>)> {
        for (k, col) in self.a.iter().enumerate() {
            if let Some(&v) = col.iter().find(|&&v| !dom.is_fixed(v)) {
                return Some((v, vec![1, 0]));
            }
            if self.deferred[k] || dom.is_fixed(self.t[k]) {
                continue;
            }
            return Some((self.t[k], self.type_values(dom, k, 0)));
        }
        (0..self.t.len())
            .rev()
            .find(|&k| !dom.is_fixed(self.t[k]))
            .map(|k| (self.t[k], self.type_values(dom, k, dom.lo[self.p[k] as usize])))
    }
}

/// Admissible bound on the total price of any completion.
pub struct DeployBounder {
    n: usize,
    m: usize,
    h: usize,
    a: Vec<Vec<Var>>,
    t: Vec<Var>,
    p: Vec<Var>,
    r: Vec<Vec<Var>>,
    count: Vec<Var>,
    req: Vec<Vec<i64>>,
    offers: Vec<(Vec<i64>, i64)>,
    by_price: Vec<usize>,
    /// Cheapest price able to host each component alone.
    min_fit: Vec<Option<i64>>,
    /// Per dimension, the offer with the lowest price per unit `(price, capacity)`.
    unit: Vec<(i64, i64)>,
    /// Rows present on every occupied machine.
    mandatory: Vec<bool>,
    /// Offers able to host the mandatory rows, as `(capacity left, price)`.
    fresh: Vec<(Vec<i64>, i64)>,
    max_cohost: i64,
    /// Maximal sets of pairwise conflicting rows, singletons included.
    cliques: Vec<Vec<usize>>,
    /// Pairs `(k, j)` with `p_k >= p_j`.
    price_order: Vec<(usize, usize)>,
}

fn price_order_pairs(ir: &ConstraintIr) -> Vec<(usize, usize)> {
    let machine = |v: crate::encode::VarId| match ir.vars[v.0 as usize].role {
        crate::encode::VarRole::Price { machine } => Some(machine),
        _ => None,
    };
    ir.constraints
        .iter()
        .filter_map(|c| match &c.body {
            ConstraintBody::Linear(p) if p.cmp == crate::encode::Cmp::Ge && p.rhs == 0 => match p.expr.terms.as_slice() {
                [(x, 1), (y, -1)] => Some((machine(*x)?, machine(*y)?)),
                _ => None,
            },
            _ => None,
        })
        .collect()
}

fn conflict_cliques(ir: &ConstraintIr) -> Vec<Vec<usize>> {
    let n = ir.dims.n;
    let row_of = |v: crate::encode::VarId| match ir.vars[v.0 as usize].role {
        crate::encode::VarRole::Assign { row, .. } => Some(row),
        _ => None,
    };
    let mut edges = Vec::new();
    for c in ir.constraints.iter().filter(|c| c.family == Family::Conflict) {
        if let ConstraintBody::Linear(p) = &c.body {
            if let [(x, _), (y, _)] = p.expr.terms.as_slice() {
                if let (Some(i), Some(j)) = (row_of(*x), row_of(*y)) {
                    edges.push((ComponentId(i as u32), ComponentId(j as u32)));
                }
            }
        }
    }
    edges.sort();
    edges.dedup();
    let graph = ConflictGraph::new((0..n as u32).map(ComponentId).collect(), &edges);
    let mut out: Vec<Vec<usize>> = enumerate_maximal_cliques(&graph)
        .into_iter()
        .take(4096)
        .map(|c| c.members.iter().map(|m| m.0 as usize).collect())
        .collect();
    out.extend((0..n).map(|i| vec![i]));
    out
}

impl DeployBounder {
    pub fn new(ir: &ConstraintIr) -> Self {
        let d = ir.dims;
        let req: Vec<Vec<i64>> = ir.requirements.iter().map(|r| r.iter().map(|&x| x as i64).collect()).collect();
        let offers: Vec<(Vec<i64>, i64)> =
            ir.offers.iter().map(|o| (o.capacity.iter().map(|&x| x as i64).collect(), o.price as i64)).collect();
        let mut by_price: Vec<usize> = (0..offers.len()).collect();
        by_price.sort_by_key(|&o| (offers[o].1, o));
        let mut mandatory = vec![false; d.n];
        for fd in full_deploy_rows(ir) {
            if fd.aux.iter().all(Option::is_none) {
                mandatory[fd.row] = true;
            }
        }
        let base: Vec<i64> =
            (0..d.h).map(|hh| (0..d.n).filter(|&i| mandatory[i]).map(|i| req[i][hh]).sum()).collect();
        let fresh: Vec<(Vec<i64>, i64)> = offers
            .iter()
            .filter(|o| (0..d.h).all(|hh| base[hh] <= o.0[hh]))
            .map(|o| ((0..d.h).map(|hh| o.0[hh] - base[hh]).collect(), o.1))
            .collect();
        let fits = |i: usize, o: &(Vec<i64>, i64)| (0..d.h).all(|hh| req[i][hh] <= o.0[hh]);
        let min_fit = (0..d.n).map(|i| fresh.iter().filter(|o| fits(i, o)).map(|o| o.1).min()).collect();
        let unit = (0..d.h)
            .map(|hh| {
                fresh
                    .iter()
                    .map(|o| (o.1, o.0[hh]))
                    .min_by(|x, y| (x.0 as i128 * y.1 as i128).cmp(&(y.0 as i128 * x.1 as i128)))
                    .unwrap_or((0, 1))
            })
            .collect();
        let max_cohost = if d.n <= 16 {
            let mut best = 1;
            for o in &offers {
                for mask in 1u32..(1 << d.n) {
                    let size = mask.count_ones() as i64;
                    if size > best
                        && (0..d.h).all(|hh| (0..d.n).filter(|i| mask & (1 << i) != 0).map(|i| req[i][hh]).sum::<i64>() <= o.0[hh])
                    {
                        best = size;
                    }
                }
            }
            best
        } else {
            d.n as i64
        };
        Self {
            n: d.n,
            m: d.m,
            h: d.h,
            a: (0..d.n).map(|i| (0..d.m).map(|k| ir.a(i, k).0).collect()).collect(),
            t: (0..d.m).map(|k| ir.t(k).0).collect(),
            p: (0..d.m).map(|k| ir.p(k).0).collect(),
            r: (0..d.m).map(|k| (0..d.h).map(|hh| ir.r(k, hh).0).collect()).collect(),
            count: (0..d.n).map(|i| ir.n(i).0).collect(),
            req,
            offers,
            by_price,
            min_fit,
            unit,
            mandatory,
            fresh,
            max_cohost,
            cliques: conflict_cliques(ir),
            price_order: price_order_pairs(ir),
        }
    }

    pub fn evaluate(&self, dom: &Domains) -> i64 {
        const INFEASIBLE: i64 = i64::MAX / 4;
        let lo = |v: Var| dom.lo[v as usize];
        let hi = |v: Var| dom.hi[v as usize];
        let mut costs = vec![0i64; self.m];
        let mut open = vec![false; self.m];
        let mut slack = vec![vec![0i64; self.h]; self.m];
        for k in 0..self.m {
            let (tl, th) = (lo(self.t[k]), hi(self.t[k]));
            let load: Vec<i64> =
                (0..self.h).map(|hh| (0..self.n).filter(|&i| lo(self.a[i][k]) == 1).map(|i| self.req[i][hh]).sum()).collect();
            let mut cost = lo(self.p[k]);
            if tl >= 1 || cost > 0 || load.iter().any(|&x| x > 0) {
                open[k] = true;
                let tl = tl.max(1);
                let cheapest = self
                    .by_price
                    .iter()
                    .find(|&&o| {
                        let id = o as i64 + 1;
                        tl <= id
                            && id <= th
                            && self.offers[o].1 <= hi(self.p[k])
                            && (0..self.h).all(|hh| load[hh] <= self.offers[o].0[hh])
                    })
                    .map(|&o| self.offers[o].1);
                let Some(cheapest) = cheapest else { return INFEASIBLE };
                cost = cost.max(cheapest);
                if (0..self.n).any(|i| lo(self.a[i][k]) != hi(self.a[i][k])) {
                    for hh in 0..self.h {
                        slack[k][hh] = (hi(self.r[k][hh]) - load[hh]).max(0);
                    }
                }
            }
            costs[k] = cost;
        }
        let mut changed = !self.price_order.is_empty();
        while changed {
            changed = false;
            for &(k, j) in &self.price_order {
                if open[k] && open[j] && costs[k] < costs[j] {
                    costs[k] = costs[j];
                    changed = true;
                }
            }
        }
        let committed: i64 = costs.iter().sum();
        let need: Vec<i64> = (0..self.n)
            .map(|i| {
                if self.mandatory[i] {
                    return 0;
                }
                (lo(self.count[i]) - (0..self.m).map(|k| lo(self.a[i][k])).sum::<i64>()).max(0)
            })
            .collect();
        let mut extra = 0i64;
        let mut spec_num = 0i64;
        for i in 0..self.n {
            if need[i] > 0 {
                let Some(fit) = self.min_fit[i] else { return INFEASIBLE };
                let avail = (0..self.m)
                    .filter(|&k| open[k] && hi(self.a[i][k]) == 1 && lo(self.a[i][k]) == 0)
                    .filter(|&k| (0..self.h).all(|hh| slack[k][hh] >= self.req[i][hh]))
                    .count() as i64;
                let rest = need[i] - avail;
                if rest > 0 {
                    let hosts = (0..self.m)
                        .filter(|&k| !open[k] && hi(self.a[i][k]) == 1)
                        .filter(|&k| self.fresh_fit(i, hi(self.p[k])))
                        .count() as i64;
                    if hosts < rest {
                        return INFEASIBLE;
                    }
                }
                spec_num += rest.max(0) * fit;
            }
        }
        for q in &self.cliques {
            let total: i64 = q.iter().map(|&i| need[i]).sum();
            if total == 0 {
                continue;
            }
            let avail = (0..self.m)
                .filter(|&k| open[k])
                .filter(|&k| {
                    q.iter().any(|&i| {
                        need[i] > 0
                            && hi(self.a[i][k]) == 1
                            && lo(self.a[i][k]) == 0
                            && (0..self.h).all(|hh| slack[k][hh] >= self.req[i][hh])
                    })
                })
                .count() as i64;
            let rest = total - avail;
            if rest <= 0 {
                continue;
            }
            let mut prices: Vec<i64> = Vec::new();
            for &i in q {
                if need[i] > 0 {
                    let Some(fit) = self.min_fit[i] else { return INFEASIBLE };
                    prices.extend(std::iter::repeat_n(fit, need[i] as usize));
                }
            }
            prices.sort_unstable();
            extra = extra.max(prices.iter().take(rest as usize).sum());
        }
        let left: Vec<i64> = (0..self.h)
            .map(|hh| {
                let demand: i64 = (0..self.n).map(|i| need[i] * self.req[i][hh]).sum();
                let free: i64 = (0..self.m).filter(|&k| open[k]).map(|k| slack[k][hh]).sum();
                (demand - free).max(0)
            })
            .collect();
        for hh in 0..self.h {
            if left[hh] > 0 {
                let (price, cap) = self.unit[hh];
                extra = extra.max((left[hh] * price + cap - 1) / cap);
            }
        }
        extra = extra.max(self.mixed_resource_bound(&left));
        extra = extra.max((spec_num + self.max_cohost - 1) / self.max_cohost);
        committed + extra
    }
}

impl DeployBounder {
    /// Whether some fresh offer priced at most `cap` hosts row `i`.
    fn fresh_fit(&self, i: usize, cap: i64) -> bool {
        self.fresh.iter().any(|o| o.1 <= cap && (0..self.h).all(|hh| self.req[i][hh] <= o.0[hh]))
    }

    /// Price of covering the leftover demand `left` with fresh machines,
    /// measured along the demand direction: every fresh offer buys at most
    /// `w·capacity` of `w·left` with `w_h = left_h / max capacity_h`.
    fn mixed_resource_bound(&self, left: &[i64]) -> i64 {
        if left.iter().all(|&x| x == 0) || self.fresh.is_empty() {
            return 0;
        }
        let scale: Vec<f64> =
            (0..self.h).map(|hh| self.fresh.iter().map(|o| o.0[hh]).max().unwrap_or(1).max(1) as f64).collect();
        let w: Vec<f64> = (0..self.h).map(|hh| left[hh] as f64 / scale[hh]).collect();
        let total: f64 = (0..self.h).map(|hh| w[hh] * left[hh] as f64).sum();
        let mut rate = f64::INFINITY;
        for o in &self.fresh {
            let value: f64 = (0..self.h).map(|hh| w[hh] * o.0[hh].max(0) as f64).sum();
            if value > 0.0 {
                rate = rate.min(o.1 as f64 / value);
            }
        }
        if !rate.is_finite() {
            return 0;
        }
        let b = total * rate * (1.0 - 1e-9) - 1.0;
        if b > 0.0 {
            b.floor() as i64
        } else {
            0
        }
    }
}

impl Bounder for DeployBounder {
    fn bound(&self, _model: &Model, dom: &Domains) -> i64 {
        self.evaluate(dom)
    }
}

/// A propagated partial assignment of IR variables.
#[derive(Debug, Clone)]
pub struct PartialState {
    pub domains: Domains,
}

impl PartialState {
    /// Root state after propagation, or `None` when the IR is infeasible at the root.
    pub fn root(ir: &ConstraintIr) -> Result<Option<Self>, SolveError> {
        let ir = if ir.lowered { ir.clone() } else { lower_h_terms(ir) };
        let model = to_model(&ir)?;
        let mut dom = model.init.clone();
        Ok(model.propagate(&mut dom, &mut Scratch::default(), None, None).then_some(Self { domains: dom }))
    }

    /// Fixes a variable and propagates. Returns false on a wipe-out.
    pub fn fix(&mut self, ir: &ConstraintIr, var: crate::encode::VarId, value: i64) -> Result<bool, SolveError> {
        let ir = if ir.lowered { ir.clone() } else { lower_h_terms(ir) };
        let model = to_model(&ir)?;
        let v = var.0 as usize;
        if value < self.domains.lo[v] || value > self.domains.hi[v] {
            return Ok(false);
        }
        self.domains.lo[v] = value;
        self.domains.hi[v] = value;
        Ok(model.propagate(&mut self.domains, &mut Scratch::default(), Some(&[var.0]), None))
    }
}

/// Admissible lower bound on the objective of any completion of `state`.
pub fn lower_bound(ir: &ConstraintIr, state: &PartialState) -> i64 {
    DeployBounder::new(ir).evaluate(&state.domains)
}

/// Builds the plan encoded by a complete assignment.
pub fn plan_from_values(ir: &ConstraintIr, values: &[i64]) -> DeploymentPlan {
    let d = ir.dims;
    DeploymentPlan {
        assignment: (0..d.n).map(|i| (0..d.m).map(|k| values[ir.a(i, k).0 as usize] as u8).collect()).collect(),
        types: (0..d.m).map(|k| values[ir.t(k).0 as usize] as u32).collect(),
        occupancy: (0..d.m).map(|k| values[ir.v(k).0 as usize] as u8).collect(),
        total_price: (0..d.m).map(|k| values[ir.p(k).0 as usize] as u64).sum(),
    }
}

/// Depth-first branch-and-bound over types and assignment cells.
pub fn solve(ir: &ConstraintIr, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    let ir = if ir.lowered { ir.clone() } else { lower_h_terms(ir) };
    let model = search_model(&ir)?;
    let brancher = DeployBrancher::new(&ir);
    let bounder = DeployBounder::new(&ir);
    let out = minimize(&model, &brancher, Some(&bounder), &SearchConfig { timeout: opts.timeout, threads: opts.threads });
    let stats = SolveStats {
        nodes_explored: out.nodes,
        time_ms: out.elapsed.as_millis() as u64,
        incumbent_updates: out.incumbent_updates,
    };
    let status = match (&out.best, out.complete) {
        (Some(_), true) => SolveStatus::Optimal,
        (None, true) => SolveStatus::Infeasible,
        (_, false) => SolveStatus::Timeout,
    };
    let (plan, objective, values) = match out.best {
        Some((obj, values)) => (Some(plan_from_values(&ir, &values)), Some(obj as u64), Some(values)),
        None => (None, None, None),
    };
    Ok(SolveResult { status, plan, objective, proven: out.complete, stats, values })
}

/// Number of fixed-value constraints in an IR.
pub fn fixed_cells(ir: &ConstraintIr) -> usize {
    ir.count(Family::Fixed)
}
