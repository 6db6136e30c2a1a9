//! Solver-agnostic integer program for the deployment problem.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundOp, ComponentId, OfferCatalog, StructuralConstraint, ValidatedSpec};
use crate::symbreak::{Breaker, BreakerError, BreakerSet, LexGuard};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    Assign { row: usize, machine: usize },
    Type { machine: usize },
    Occupied { machine: usize },
    Price { machine: usize },
    Capacity { machine: usize, dim: usize },
    Count { row: usize },
    /// `b = H(Σ ...)`.
    Indicator { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub role: VarRole,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, i64)>,
}

impl LinExpr {
    pub fn new(terms: Vec<(VarId, i64)>) -> Self {
        Self { terms }
    }

    pub fn sum(vars: impl IntoIterator<Item = VarId>) -> Self {
        Self { terms: vars.into_iter().map(|v| (v, 1)).collect() }
    }

    pub fn eval(&self, values: &[i64]) -> i64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0 as usize]).sum()
    }

    pub fn minus(mut self, other: &LinExpr) -> Self {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, -c)));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    pub fn from_op(op: BoundOp) -> Self {
        match op {
            BoundOp::Eq => Cmp::Eq,
            BoundOp::Le => Cmp::Le,
            BoundOp::Ge => Cmp::Ge,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

/// `expr cmp rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinPred {
    pub expr: LinExpr,
    pub cmp: Cmp,
    pub rhs: i64,
}

impl LinPred {
    pub fn new(expr: LinExpr, cmp: Cmp, rhs: i64) -> Self {
        Self { expr, cmp, rhs }
    }

    pub fn eq(v: VarId, rhs: i64) -> Self {
        Self::new(LinExpr::new(vec![(v, 1)]), Cmp::Eq, rhs)
    }

    pub fn holds(&self, values: &[i64]) -> bool {
        let s = self.expr.eval(values);
        match self.cmp {
            Cmp::Le => s <= self.rhs,
            Cmp::Ge => s >= self.rhs,
            Cmp::Eq => s == self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintBody {
    Linear(LinPred),
    /// An empty guard makes the body unconditional.
    Implication { guard: Vec<LinPred>, body: Vec<LinPred> },
    /// `aux = H(sum)`.
    IndicatorSum { aux: VarId, sum: LinExpr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    InstanceCount,
    BasicAllocation,
    Occupancy,
    Capacity,
    Link,
    UnusedMachine,
    Conflict,
    Colocation,
    ExclusiveDeploy,
    RequireProvide,
    ExactRatio,
    FullDeploy,
    BoundInstances,
    ConditionalBound,
    Indicator,
    Fixed,
    PriceOrder,
    LexOrder,
    LoadOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrConstraint {
    pub family: Family,
    pub body: ConstraintBody,
}

impl IrConstraint {
    pub fn holds(&self, values: &[i64]) -> bool {
        match &self.body {
            ConstraintBody::Linear(p) => p.holds(values),
            ConstraintBody::Implication { guard, body } => {
                !guard.iter().all(|g| g.holds(values)) || body.iter().all(|b| b.holds(values))
            }
            ConstraintBody::IndicatorSum { aux, sum } => values[aux.0 as usize] == i64::from(sum.eval(values) > 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub h: usize,
    pub o: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferRow {
    pub capacity: Vec<u64>,
    pub price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintIr {
    pub dims: Dims,
    pub vars: Vec<VarDecl>,
    pub constraints: Vec<IrConstraint>,
    pub objective: LinExpr,
    pub component_ids: Vec<ComponentId>,
    pub requirements: Vec<Vec<u64>>,
    pub offers: Vec<OfferRow>,
    /// Definitions `aux = H(sum)`, kept after lowering.
    pub indicators: Vec<(VarId, LinExpr)>,
    pub lowered: bool,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("offer catalog is empty")]
    EmptyCatalog,
    #[error("machine count must be at least 1")]
    NoMachines,
    #[error("incompatible breakers: {0}")]
    IncompatibleBreakers(#[from] BreakerError),
    #[error("catalog dimensions do not match the spec: {0}")]
    Dimensions(String),
}

impl ConstraintIr {
    pub fn a(&self, row: usize, k: usize) -> VarId {
        VarId((row * self.dims.m + k) as u32)
    }

    fn base(&self) -> usize {
        self.dims.n * self.dims.m
    }

    pub fn t(&self, k: usize) -> VarId {
        VarId((self.base() + k) as u32)
    }

    pub fn v(&self, k: usize) -> VarId {
        VarId((self.base() + self.dims.m + k) as u32)
    }

    pub fn p(&self, k: usize) -> VarId {
        VarId((self.base() + 2 * self.dims.m + k) as u32)
    }

    pub fn r(&self, k: usize, h: usize) -> VarId {
        VarId((self.base() + 3 * self.dims.m + k * self.dims.h + h) as u32)
    }

    pub fn n(&self, row: usize) -> VarId {
        VarId((self.base() + 3 * self.dims.m + self.dims.m * self.dims.h + row) as u32)
    }

    pub fn var(&self, v: VarId) -> &VarDecl {
        &self.vars[v.0 as usize]
    }

    pub fn family_counts(&self) -> BTreeMap<Family, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.family).or_insert(0) += 1;
        }
        out
    }

    pub fn count(&self, family: Family) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    pub fn fixed_cells(&self) -> usize {
        self.count(Family::Fixed)
    }

    /// Every constraint holds and every variable lies in its declared range.
    pub fn satisfied(&self, values: &[i64]) -> bool {
        values.len() == self.vars.len()
            && self.vars.iter().zip(values).all(|(d, &x)| d.lo <= x && x <= d.hi)
            && self.constraints.iter().all(|c| c.holds(values))
    }

    /// Checks that every variable reference is declared.
    pub fn well_formed(&self) -> Result<(), String> {
        let nv = self.vars.len() as u32;
        let check = |e: &LinExpr| e.terms.iter().all(|(v, _)| v.0 < nv);
        for (ci, c) in self.constraints.iter().enumerate() {
            let ok = match &c.body {
                ConstraintBody::Linear(p) => check(&p.expr),
                ConstraintBody::Implication { guard, body } => guard.iter().chain(body).all(|p| check(&p.expr)),
                ConstraintBody::IndicatorSum { aux, sum } => aux.0 < nv && check(sum),
            };
            if !ok {
                return Err(format!("constraint #{ci} references an undeclared variable"));
            }
        }
        if !check(&self.objective) {
            return Err("objective references an undeclared variable".into());
        }
        Ok(())
    }
}

struct Builder {
    vars: Vec<VarDecl>,
    constraints: Vec<IrConstraint>,
    indicators: Vec<(VarId, LinExpr)>,
    indicator_keys: HashMap<Vec<(VarId, i64)>, VarId>,
}

impl Builder {
    fn var(&mut self, name: String, role: VarRole, lo: i64, hi: i64) -> VarId {
        self.vars.push(VarDecl { name, role, lo, hi });
        VarId(self.vars.len() as u32 - 1)
    }

    fn add(&mut self, family: Family, body: ConstraintBody) {
        self.constraints.push(IrConstraint { family, body });
    }

    fn linear(&mut self, family: Family, expr: LinExpr, cmp: Cmp, rhs: i64) {
        self.add(family, ConstraintBody::Linear(LinPred::new(expr, cmp, rhs)));
    }

    fn implies(&mut self, family: Family, guard: Vec<LinPred>, body: Vec<LinPred>) {
        self.add(family, ConstraintBody::Implication { guard, body });
    }

    /// Shared auxiliary for `H(sum)`; the defining constraint is emitted once.
    fn indicator(&mut self, sum: LinExpr) -> VarId {
        let mut key = sum.terms.clone();
        key.sort();
        if let Some(&v) = self.indicator_keys.get(&key) {
            return v;
        }
        let index = self.indicators.len();
        let v = self.var(format!("b_{}", index + 1), VarRole::Indicator { index }, 0, 1);
        self.indicators.push((v, sum.clone()));
        self.indicator_keys.insert(key, v);
        self.add(Family::Indicator, ConstraintBody::IndicatorSum { aux: v, sum });
        v
    }
}

/// Assembles the complete program for `m` machines.
pub fn build_ir(
    spec: &ValidatedSpec,
    catalog: &OfferCatalog,
    m: usize,
    breakers: &BreakerSet,
) -> Result<ConstraintIr, EncodeError> {
    use StructuralConstraint::*;
    if catalog.is_empty() {
        return Err(EncodeError::EmptyCatalog);
    }
    if m == 0 {
        return Err(EncodeError::NoMachines);
    }
    let catalog = catalog.aligned_to(&spec.dimensions).map_err(|e| EncodeError::Dimensions(e.to_string()))?;
    let n = spec.n();
    let h = spec.dimensions.len();
    let o = catalog.len();
    breakers.check_dims(n, m, &spec.ids())?;

    let requirements: Vec<Vec<u64>> = spec.components.iter().map(|c| c.requirements.0.clone()).collect();
    let offers: Vec<OfferRow> =
        catalog.offers.iter().map(|x| OfferRow { capacity: x.capacity.0.clone(), price: x.price }).collect();
    let max_price = offers.iter().map(|x| x.price).max().unwrap() as i64;
    let max_cap: Vec<i64> = (0..h).map(|d| offers.iter().map(|x| x.capacity[d]).max().unwrap() as i64).collect();

    let mut b = Builder { vars: Vec::new(), constraints: Vec::new(), indicators: Vec::new(), indicator_keys: HashMap::new() };
    for (i, c) in spec.components.iter().enumerate() {
        for k in 0..m {
            b.var(format!("a_{}_{}", c.id.0, k + 1), VarRole::Assign { row: i, machine: k }, 0, 1);
        }
    }
    for k in 0..m {
        b.var(format!("t_{}", k + 1), VarRole::Type { machine: k }, 0, o as i64);
    }
    for k in 0..m {
        b.var(format!("v_{}", k + 1), VarRole::Occupied { machine: k }, 0, 1);
    }
    for k in 0..m {
        b.var(format!("p_{}", k + 1), VarRole::Price { machine: k }, 0, max_price);
    }
    for k in 0..m {
        for (d, cap) in max_cap.iter().enumerate() {
            b.var(format!("r_{}_{}", k + 1, d + 1), VarRole::Capacity { machine: k, dim: d }, 0, *cap);
        }
    }
    for (i, c) in spec.components.iter().enumerate() {
        b.var(format!("n_{}", c.id.0), VarRole::Count { row: i }, 0, m as i64);
    }

    let dims = Dims { n, m, h, o };
    let mut ir = ConstraintIr {
        dims,
        vars: Vec::new(),
        constraints: Vec::new(),
        objective: LinExpr::default(),
        component_ids: spec.ids(),
        requirements,
        offers,
        indicators: Vec::new(),
        lowered: false,
    };
    let a = |i: usize, k: usize| ir.a(i, k);
    let (t, v, p, r, cnt) = (|k| ir.t(k), |k| ir.v(k), |k| ir.p(k), |k, d| ir.r(k, d), |i| ir.n(i));
    let row = |id: &ComponentId| spec.idx(*id);
    let col = |k: usize| LinExpr::sum((0..n).map(|i| a(i, k)));

    // instance counts and basic allocation
    let exclusive = spec.exclusive_members();
    for i in 0..n {
        b.linear(Family::InstanceCount, LinExpr::new(vec![(cnt(i), 1)]).minus(&LinExpr::sum((0..m).map(|k| a(i, k)))), Cmp::Eq, 0);
    }
    for i in 0..n {
        if !exclusive.contains(&i) {
            b.linear(Family::BasicAllocation, LinExpr::new(vec![(cnt(i), 1)]), Cmp::Ge, 1);
        }
    }
    // occupancy, both directions
    for k in 0..m {
        b.implies(Family::Occupancy, vec![LinPred::new(col(k), Cmp::Ge, 1)], vec![LinPred::eq(v(k), 1)]);
        b.implies(Family::Occupancy, vec![LinPred::eq(v(k), 1)], vec![LinPred::new(col(k), Cmp::Ge, 1)]);
    }
    // capacity through r
    for k in 0..m {
        for d in 0..h {
            let mut terms: Vec<(VarId, i64)> =
                (0..n).filter(|&i| ir.requirements[i][d] > 0).map(|i| (a(i, k), ir.requirements[i][d] as i64)).collect();
            terms.push((r(k, d), -1));
            b.linear(Family::Capacity, LinExpr::new(terms), Cmp::Le, 0);
        }
    }
    // link
    for k in 0..m {
        for (oi, offer) in ir.offers.iter().enumerate() {
            let mut body: Vec<LinPred> = (0..h).map(|d| LinPred::eq(r(k, d), offer.capacity[d] as i64)).collect();
            body.push(LinPred::eq(p(k), offer.price as i64));
            b.implies(Family::Link, vec![LinPred::eq(t(k), oi as i64 + 1), LinPred::eq(v(k), 1)], body);
        }
    }
    // unused machines
    for k in 0..m {
        let mut body: Vec<LinPred> = vec![LinPred::eq(p(k), 0)];
        body.extend((0..h).map(|d| LinPred::eq(r(k, d), 0)));
        b.implies(Family::UnusedMachine, vec![LinPred::eq(t(k), 0)], body);
        b.implies(Family::UnusedMachine, vec![LinPred::new(col(k), Cmp::Eq, 0)], vec![LinPred::eq(t(k), 0)]);
    }

    let conflicts = spec.conflict_matrix();
    for c in &spec.constraints {
        match c {
            Conflict { i, j } => {
                for k in 0..m {
                    b.linear(Family::Conflict, LinExpr::new(vec![(a(row(i), k), 1), (a(row(j), k), 1)]), Cmp::Le, 1);
                }
            }
            Colocate { i, j } => {
                for k in 0..m {
                    b.linear(Family::Colocation, LinExpr::new(vec![(a(row(i), k), 1), (a(row(j), k), -1)]), Cmp::Eq, 0);
                }
            }
            ExclusiveDeploy { components } => {
                let mut members: Vec<usize> = components.iter().map(row).collect();
                members.sort_unstable();
                members.dedup();
                let aux: Vec<VarId> = members.iter().map(|&i| b.indicator(LinExpr::sum((0..m).map(|k| a(i, k))))).collect();
                b.linear(Family::ExclusiveDeploy, LinExpr::sum(aux), Cmp::Eq, 1);
            }
            RequireProvide { i, j, n: nn, m: mm } => {
                b.linear(
                    Family::RequireProvide,
                    LinExpr::new(vec![(cnt(row(i)), *nn as i64), (cnt(row(j)), -(*mm as i64))]),
                    Cmp::Le,
                    0,
                );
            }
            ExactRatio { i, j, n: nn } => {
                let e = LinExpr::new(vec![(cnt(row(j)), *nn as i64), (cnt(row(i)), -1)]);
                b.linear(Family::ExactRatio, e.clone(), Cmp::Ge, 0);
                b.linear(Family::ExactRatio, e, Cmp::Le, *nn as i64 - 1);
            }
            FullDeploy { i } => {
                let x = row(i);
                let mut terms: Vec<(VarId, i64)> = (0..m).map(|k| (a(x, k), 1)).collect();
                let rivals: Vec<usize> = (0..n).filter(|&j| conflicts[x][j]).collect();
                if !rivals.is_empty() {
                    for k in 0..m {
                        let aux = b.indicator(LinExpr::sum(rivals.iter().map(|&j| a(j, k))));
                        terms.push((aux, 1));
                    }
                }
                terms.extend((0..m).map(|k| (v(k), -1)));
                b.linear(Family::FullDeploy, LinExpr::new(terms), Cmp::Eq, 0);
            }
            BoundInstances { components, op, n: bound } => {
                b.linear(
                    Family::BoundInstances,
                    LinExpr::new(components.iter().map(|c| (cnt(row(c)), 1)).collect()),
                    Cmp::from_op(*op),
                    *bound as i64,
                );
            }
            ConditionalBound { guard, components, op, n: bound } => {
                let g = b.indicator(LinExpr::sum((0..m).map(|k| a(row(guard), k))));
                b.implies(
                    Family::ConditionalBound,
                    vec![LinPred::eq(g, 1)],
                    vec![LinPred::new(
                        LinExpr::new(components.iter().map(|c| (cnt(row(c)), 1)).collect()),
                        Cmp::from_op(*op),
                        *bound as i64,
                    )],
                );
            }
        }
    }

    for cell in &breakers.fixed.cells {
        b.linear(Family::Fixed, LinExpr::new(vec![(a(row(&cell.component), cell.machine), 1)]), Cmp::Eq, cell.value as i64);
    }
    for br in &breakers.constraints {
        match *br {
            Breaker::PriceOrder { k } => {
                b.linear(Family::PriceOrder, LinExpr::new(vec![(p(k), 1), (p(k + 1), -1)]), Cmp::Ge, 0);
            }
            Breaker::LexRow { k, row: i, guard } => {
                let mut g = Vec::new();
                match guard {
                    LexGuard::None => {}
                    LexGuard::EqualPrice => g.push(LinPred::new(LinExpr::new(vec![(p(k), 1), (p(k + 1), -1)]), Cmp::Eq, 0)),
                    LexGuard::EqualType => g.push(LinPred::new(LinExpr::new(vec![(t(k), 1), (t(k + 1), -1)]), Cmp::Eq, 0)),
                }
                g.extend((0..i).map(|l| LinPred::new(LinExpr::new(vec![(a(l, k), 1), (a(l, k + 1), -1)]), Cmp::Eq, 0)));
                let body = LinPred::new(LinExpr::new(vec![(a(i, k), 1), (a(i, k + 1), -1)]), Cmp::Ge, 0);
                b.implies(Family::LexOrder, g, vec![body]);
            }
            Breaker::LoadOrder { k } => {
                b.implies(
                    Family::LoadOrder,
                    vec![LinPred::new(LinExpr::new(vec![(t(k), 1), (t(k + 1), -1)]), Cmp::Eq, 0)],
                    vec![LinPred::new(col(k).minus(&col(k + 1)), Cmp::Ge, 0)],
                );
            }
        }
    }

    ir.objective = LinExpr::sum((0..m).map(p));
    ir.vars = b.vars;
    ir.constraints = b.constraints;
    ir.indicators = b.indicators;
    Ok(ir)
}

/// Replaces each `aux = H(sum)` by `sum - aux >= 0` and `sum - U·aux <= 0`,
/// where `U` is the largest value `sum` can take; a single binary cell
/// becomes `aux = cell`.
pub fn lower_h_terms(ir: &ConstraintIr) -> ConstraintIr {
    let mut out = ir.clone();
    out.constraints = Vec::with_capacity(ir.constraints.len());
    for c in &ir.constraints {
        match &c.body {
            ConstraintBody::IndicatorSum { aux, sum } => {
                let single_binary =
                    sum.terms.len() == 1 && sum.terms[0].1 == 1 && ir.var(sum.terms[0].0).lo == 0 && ir.var(sum.terms[0].0).hi == 1;
                if single_binary {
                    out.constraints.push(IrConstraint {
                        family: c.family,
                        body: ConstraintBody::Linear(LinPred::new(
                            LinExpr::new(vec![(*aux, 1), (sum.terms[0].0, -1)]),
                            Cmp::Eq,
                            0,
                        )),
                    });
                } else {
                    let upper: i64 = sum.terms.iter().map(|&(v, k)| k * ir.var(v).hi).sum();
                    let mut ge = sum.clone();
                    ge.terms.push((*aux, -1));
                    let mut le = sum.clone();
                    le.terms.push((*aux, -upper.max(1)));
                    out.constraints.push(IrConstraint { family: c.family, body: ConstraintBody::Linear(LinPred::new(ge, Cmp::Ge, 0)) });
                    out.constraints.push(IrConstraint { family: c.family, body: ConstraintBody::Linear(LinPred::new(le, Cmp::Le, 0)) });
                }
            }
            _ => out.constraints.push(c.clone()),
        }
    }
    out.lowered = true;
    out
}

fn fmt_expr(ir: &ConstraintIr, e: &LinExpr) -> String {
    if e.terms.is_empty() {
        return "0".into();
    }
    let mut s = String::new();
    for (idx, &(v, c)) in e.terms.iter().enumerate() {
        let name = &ir.var(v).name;
        let sign = if c < 0 { "- " } else if idx > 0 { "+ " } else { "" };
        if idx > 0 {
            s.push(' ');
        }
        s.push_str(sign);
        match c.abs() {
            1 => s.push_str(name),
            k => s.push_str(&format!("{k}*{name}")),
        }
    }
    s
}

fn fmt_pred(ir: &ConstraintIr, p: &LinPred) -> String {
    format!("{} {} {}", fmt_expr(ir, &p.expr), p.cmp.symbol(), p.rhs)
}

impl fmt::Display for ConstraintIr {
    /// One line per variable and constraint, in construction order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dims;
        writeln!(f, "dims N={} M={} H={} O={}", d.n, d.m, d.h, d.o)?;
        for v in &self.vars {
            writeln!(f, "var {} in [{}, {}]", v.name, v.lo, v.hi)?;
        }
        for c in &self.constraints {
            let fam = format!("{:?}", c.family);
            match &c.body {
                ConstraintBody::Linear(p) => writeln!(f, "{fam}: {}", fmt_pred(self, p))?,
                ConstraintBody::Implication { guard, body } => {
                    let g: Vec<String> = guard.iter().map(|p| fmt_pred(self, p)).collect();
                    let b: Vec<String> = body.iter().map(|p| fmt_pred(self, p)).collect();
                    let g = if g.is_empty() { "true".to_string() } else { g.join(" & ") };
                    writeln!(f, "{fam}: {g} => {}", b.join(" & "))?
                }
                ConstraintBody::IndicatorSum { aux, sum } => {
                    writeln!(f, "{fam}: {} = H({})", self.var(*aux).name, fmt_expr(self, sum))?
                }
            }
        }
        write!(f, "minimize {}", fmt_expr(self, &self.objective))
    }
}
