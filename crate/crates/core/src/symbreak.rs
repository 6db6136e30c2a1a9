//! Static symmetry breakers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confgraph::{
    build_conflict_graph, enumerate_maximal_cliques, fix_assignments, select_clique, Clique, FixError, FixedAssignments,
    FvMode,
};
use crate::estimator::{guaranteed_instances, EstimateError, InstanceEstimate};
use crate::model::ValidatedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Pr,
    Lx,
    Prlx,
    Fv,
    Fvpr,
    Fvlx,
    /// Type-guarded load ordering.
    Tpr,
    /// Type-guarded column lex ordering.
    Tlx,
}

impl Strategy {
    /// None plus the six benchmarked strategies.
    pub const BENCHMARKED: [Strategy; 7] =
        [Strategy::None, Strategy::Pr, Strategy::Lx, Strategy::Prlx, Strategy::Fv, Strategy::Fvpr, Strategy::Fvlx];

    pub const ALL: [Strategy; 9] = [
        Strategy::None,
        Strategy::Pr,
        Strategy::Lx,
        Strategy::Prlx,
        Strategy::Fv,
        Strategy::Fvpr,
        Strategy::Fvlx,
        Strategy::Tpr,
        Strategy::Tlx,
    ];

    pub fn uses_fixing(self) -> bool {
        matches!(self, Strategy::Fv | Strategy::Fvpr | Strategy::Fvlx)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Pr => "pr",
            Strategy::Lx => "lx",
            Strategy::Prlx => "prlx",
            Strategy::Fv => "fv",
            Strategy::Fvpr => "fvpr",
            Strategy::Fvlx => "fvlx",
            Strategy::Tpr => "tpr",
            Strategy::Tlx => "tlx",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

/// Extra guard on a lex row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LexGuard {
    None,
    EqualPrice,
    EqualType,
}

/// Breaker constraints over 0-based machine index `k` and its successor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Breaker {
    /// `p_k >= p_{k+1}`.
    PriceOrder { k: usize },
    /// `guard ∧ a_{l,k} = a_{l,k+1} for all l < row  ⇒  a_{row,k} >= a_{row,k+1}`.
    LexRow { k: usize, row: usize, guard: LexGuard },
    /// `t_k = t_{k+1} ⇒ Σ_i a_{i,k} >= Σ_i a_{i,k+1}`.
    LoadOrder { k: usize },
}

impl Breaker {
    pub fn machines(&self) -> (usize, usize) {
        match *self {
            Breaker::PriceOrder { k } | Breaker::LexRow { k, .. } | Breaker::LoadOrder { k } => (k, k + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BreakerSet {
    pub constraints: Vec<Breaker>,
    pub fixed: FixedAssignments,
    /// Partition of machines used by the sublist strategies.
    pub vm_sublists: Vec<Vec<usize>>,
    pub clique: Option<Clique>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BreakerError {
    #[error(transparent)]
    Fix(#[from] FixError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("breaker references machine {machine} or row {row} outside {n}x{m}")]
    OutOfRange { machine: usize, row: usize, n: usize, m: usize },
}

impl BreakerSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Checks every reference against an `n × m` assignment matrix.
    pub fn check_dims(&self, n: usize, m: usize, ids: &[crate::model::ComponentId]) -> Result<(), BreakerError> {
        let bad = |machine: usize, row: usize| BreakerError::OutOfRange { machine, row, n, m };
        for b in &self.constraints {
            let (_, k2) = b.machines();
            let row = match b {
                Breaker::LexRow { row, .. } => *row,
                _ => 0,
            };
            if k2 >= m || (n > 0 && row >= n) {
                return Err(bad(k2, row));
            }
        }
        for c in &self.fixed.cells {
            if c.machine >= m || !ids.contains(&c.component) {
                return Err(bad(c.machine, 0));
            }
        }
        Ok(())
    }
}

fn price_chain(machines: &[usize]) -> Vec<Breaker> {
    machines.windows(2).map(|w| Breaker::PriceOrder { k: w[0] }).collect()
}

fn lex_chain(machines: &[usize], n: usize, guard: LexGuard) -> Vec<Breaker> {
    machines
        .windows(2)
        .flat_map(|w| (0..n).map(move |row| Breaker::LexRow { k: w[0], row, guard }))
        .collect()
}

pub fn gen_pr(m: usize) -> BreakerSet {
    let all: Vec<usize> = (0..m).collect();
    BreakerSet { constraints: price_chain(&all), ..Default::default() }
}

pub fn gen_lx(n: usize, m: usize) -> BreakerSet {
    let all: Vec<usize> = (0..m).collect();
    BreakerSet { constraints: lex_chain(&all, n, LexGuard::None), ..Default::default() }
}

pub fn gen_prlx(n: usize, m: usize) -> BreakerSet {
    let all: Vec<usize> = (0..m).collect();
    let mut constraints = price_chain(&all);
    constraints.extend(lex_chain(&all, n, LexGuard::EqualPrice));
    BreakerSet { constraints, ..Default::default() }
}

pub fn gen_tpr(m: usize) -> BreakerSet {
    BreakerSet { constraints: (0..m.saturating_sub(1)).map(|k| Breaker::LoadOrder { k }).collect(), ..Default::default() }
}

pub fn gen_tlx(n: usize, m: usize) -> BreakerSet {
    let all: Vec<usize> = (0..m).collect();
    BreakerSet { constraints: lex_chain(&all, n, LexGuard::EqualType), ..Default::default() }
}

/// Clique-based fixing. An edgeless conflict graph yields an empty set.
pub fn gen_fv(spec: &ValidatedSpec, estimate: &InstanceEstimate, m: usize, mode: FvMode) -> Result<BreakerSet, BreakerError> {
    let graph = build_conflict_graph(spec);
    if !graph.has_edges() {
        return Ok(BreakerSet::empty());
    }
    let cliques = enumerate_maximal_cliques(&graph);
    let Some(clique) = select_clique(&cliques, estimate) else { return Ok(BreakerSet::empty()) };
    let mut est = estimate.clone();
    if m as u64 > est.cap {
        est.guaranteed = guaranteed_instances(spec, m as u64)?;
    }
    let fixed = fix_assignments(&clique, &est, m, mode, &graph)?;
    Ok(BreakerSet { fixed, clique: Some(clique), ..Default::default() })
}

fn sublists(fixed: &FixedAssignments, m: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = fixed.layout.iter().map(|(_, ks)| ks.clone()).filter(|ks| !ks.is_empty()).collect();
    let rest: Vec<usize> = (fixed.fixed_machines()..m).collect();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Fixing plus price chains inside each member's machines and on the remainder.
pub fn gen_fvpr(spec: &ValidatedSpec, estimate: &InstanceEstimate, m: usize, mode: FvMode) -> Result<BreakerSet, BreakerError> {
    let mut set = gen_fv(spec, estimate, m, mode)?;
    set.vm_sublists = sublists(&set.fixed, m);
    set.constraints = set.vm_sublists.iter().flat_map(|s| price_chain(s)).collect();
    Ok(set)
}

/// Fixing plus column-lex chains inside each member's machines and on the remainder.
pub fn gen_fvlx(spec: &ValidatedSpec, estimate: &InstanceEstimate, m: usize, mode: FvMode) -> Result<BreakerSet, BreakerError> {
    let mut set = gen_fv(spec, estimate, m, mode)?;
    set.vm_sublists = sublists(&set.fixed, m);
    set.constraints = set.vm_sublists.iter().flat_map(|s| lex_chain(s, spec.n(), LexGuard::None)).collect();
    Ok(set)
}

pub fn generate(
    strategy: Strategy,
    spec: &ValidatedSpec,
    estimate: &InstanceEstimate,
    m: usize,
    mode: FvMode,
) -> Result<BreakerSet, BreakerError> {
    let n = spec.n();
    Ok(match strategy {
        Strategy::None => BreakerSet::empty(),
        Strategy::Pr => gen_pr(m),
        Strategy::Lx => gen_lx(n, m),
        Strategy::Prlx => gen_prlx(n, m),
        Strategy::Tpr => gen_tpr(m),
        Strategy::Tlx => gen_tlx(n, m),
        Strategy::Fv => gen_fv(spec, estimate, m, mode)?,
        Strategy::Fvpr => gen_fvpr(spec, estimate, m, mode)?,
        Strategy::Fvlx => gen_fvlx(spec, estimate, m, mode)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pr_counts() {
        assert_eq!(gen_pr(6).constraints.len(), 5);
        assert!(gen_pr(1).constraints.is_empty());
    }

    #[test]
    fn lx_counts() {
        assert_eq!(gen_lx(2, 2).constraints.len(), 2);
        assert_eq!(gen_lx(4, 5).constraints.len(), 16);
        assert_eq!(gen_prlx(4, 5).constraints.len(), 4 + 16);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
    }

    #[test]
    fn singleton_sublists_have_no_chain() {
        let fixed = FixedAssignments {
            cells: vec![],
            layout: vec![(crate::model::ComponentId(1), vec![0]), (crate::model::ComponentId(2), vec![1])],
        };
        let subs = sublists(&fixed, 2);
        assert_eq!(subs, vec![vec![0], vec![1]]);
        assert!(subs.iter().flat_map(|s| lex_chain(s, 3, LexGuard::None)).next().is_none());
    }
}
