//! Conflict graph, maximal cliques and clique-based value fixing.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::InstanceEstimate;
use crate::model::{ComponentId, StructuralConstraint, ValidatedSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    pub vertices: Vec<ComponentId>,
    adj: Vec<Vec<bool>>,
}

impl ConflictGraph {
    pub fn new(vertices: Vec<ComponentId>, edges: &[(ComponentId, ComponentId)]) -> Self {
        let n = vertices.len();
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in edges {
            let (x, y) = (vertices.iter().position(|&v| v == a).unwrap(), vertices.iter().position(|&v| v == b).unwrap());
            if x != y {
                adj[x][y] = true;
                adj[y][x] = true;
            }
        }
        Self { vertices, adj }
    }

    fn pos(&self, id: ComponentId) -> usize {
        self.vertices.iter().position(|&v| v == id).expect("vertex in graph")
    }

    pub fn adjacent(&self, a: ComponentId, b: ComponentId) -> bool {
        self.adj[self.pos(a)][self.pos(b)]
    }

    pub fn degree(&self, id: ComponentId) -> usize {
        self.adj[self.pos(id)].iter().filter(|&&x| x).count()
    }

    pub fn neighbors(&self, id: ComponentId) -> Vec<ComponentId> {
        let p = self.pos(id);
        (0..self.vertices.len()).filter(|&q| self.adj[p][q]).map(|q| self.vertices[q]).collect()
    }

    /// Edges as `(smaller id, larger id)`, sorted.
    pub fn edges(&self) -> Vec<(ComponentId, ComponentId)> {
        let mut out = Vec::new();
        for a in 0..self.vertices.len() {
            for b in a + 1..self.vertices.len() {
                if self.adj[a][b] {
                    let (x, y) = (self.vertices[a], self.vertices[b]);
                    out.push((x.min(y), x.max(y)));
                }
            }
        }
        out.sort();
        out
    }

    pub fn has_edges(&self) -> bool {
        self.adj.iter().any(|r| r.iter().any(|&x| x))
    }
}

pub fn build_conflict_graph(spec: &ValidatedSpec) -> ConflictGraph {
    let edges: Vec<_> = spec
        .constraints
        .iter()
        .filter_map(|c| match c {
            StructuralConstraint::Conflict { i, j } => Some((*i, *j)),
            _ => None,
        })
        .collect();
    ConflictGraph::new(spec.ids(), &edges)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clique {
    /// Sorted ascending.
    pub members: Vec<ComponentId>,
}

impl Clique {
    pub fn new(mut members: Vec<ComponentId>) -> Self {
        members.sort();
        members.dedup();
        Self { members }
    }

    pub fn deployment_size(&self, estimate: &InstanceEstimate) -> u64 {
        self.members.iter().map(|&m| estimate.nu_of(m)).sum()
    }

    pub fn contains(&self, id: ComponentId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

/// Bron–Kerbosch with pivoting. Output sorted by member ids.
pub fn enumerate_maximal_cliques(graph: &ConflictGraph) -> Vec<Clique> {
    fn expand(g: &ConflictGraph, r: &mut Vec<usize>, p: BTreeSet<usize>, mut x: BTreeSet<usize>, out: &mut Vec<Clique>) {
        if p.is_empty() {
            if x.is_empty() {
                out.push(Clique::new(r.iter().map(|&i| g.vertices[i]).collect()));
            }
            return;
        }
        let pivot = *p.union(&x).max_by_key(|&&u| p.iter().filter(|&&v| g.adj[u][v]).count()).unwrap();
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !g.adj[pivot][v]).collect();
        let mut p = p;
        for v in candidates {
            let np = p.iter().copied().filter(|&w| g.adj[v][w]).collect();
            let nx = x.iter().copied().filter(|&w| g.adj[v][w]).collect();
            r.push(v);
            expand(g, r, np, nx, out);
            r.pop();
            p.remove(&v);
            x.insert(v);
        }
    }
    let mut out = Vec::new();
    if !graph.vertices.is_empty() {
        expand(graph, &mut Vec::new(), (0..graph.vertices.len()).collect(), BTreeSet::new(), &mut out);
    }
    out.sort();
    out
}

/// Largest deployment size; ties go to the smallest sorted member-id sequence.
pub fn select_clique(cliques: &[Clique], estimate: &InstanceEstimate) -> Option<Clique> {
    cliques
        .iter()
        .max_by(|a, b| a.deployment_size(estimate).cmp(&b.deployment_size(estimate)).then_with(|| b.members.cmp(&a.members)))
        .cloned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FvMode {
    /// Fix every guaranteed instance of each clique member.
    #[default]
    Full,
    /// Fix at most one instance per member.
    Conservative,
}

impl std::str::FromStr for FvMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(FvMode::Full),
            "conservative" => Ok(FvMode::Conservative),
            other => Err(format!("unknown fv mode '{other}' (expected full or conservative)")),
        }
    }
}

impl fmt::Display for FvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FvMode::Full => "full",
            FvMode::Conservative => "conservative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FixedCell {
    pub component: ComponentId,
    /// 0-based machine index.
    pub machine: usize,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FixedAssignments {
    pub cells: Vec<FixedCell>,
    /// Clique members in layout order with the machines holding their fixed instances.
    pub layout: Vec<(ComponentId, Vec<usize>)>,
}

impl FixedAssignments {
    pub fn count_fixed(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, component: ComponentId, machine: usize) -> Option<u8> {
        self.cells.iter().find(|c| c.component == component && c.machine == machine).map(|c| c.value)
    }

    /// Number of machines carrying fixed instances (Q_L).
    pub fn fixed_machines(&self) -> usize {
        self.layout.iter().map(|(_, ks)| ks.len()).sum()
    }

    /// Table layout: one row per component, `[1]`/`[0]` for fixed cells.
    pub fn render(&self, components: &[(ComponentId, String)], m: usize) -> String {
        let width = components.iter().map(|(_, n)| n.len()).max().unwrap_or(4).max(4);
        let mut s = format!("{:width$}", "");
        for k in 1..=m {
            s.push_str(&format!(" {:>5}", format!("VM{k}")));
        }
        s.push('\n');
        for (id, name) in components {
            s.push_str(&format!("{name:width$}"));
            for k in 0..m {
                let cell = match self.get(*id, k) {
                    Some(v) => format!("[{v}]"),
                    None => ".".into(),
                };
                s.push_str(&format!(" {cell:>5}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FixError {
    #[error("fixing needs {needed} machines but only {available} are available")]
    InsufficientMachines { needed: usize, available: usize },
}

/// Layout order of clique members: conflict degree descending, then id.
pub fn member_order(clique: &Clique, graph: &ConflictGraph) -> Vec<ComponentId> {
    let mut order = clique.members.clone();
    order.sort_by_key(|&c| (std::cmp::Reverse(graph.degree(c)), c));
    order
}

/// Fixes instances of each clique member on consecutive machines, zeroes the
/// other members on those machines, and zeroes non-clique components that
/// conflict with the member placed there.
pub fn fix_assignments(
    clique: &Clique,
    estimate: &InstanceEstimate,
    m: usize,
    mode: FvMode,
    graph: &ConflictGraph,
) -> Result<FixedAssignments, FixError> {
    let order = member_order(clique, graph);
    let counts: Vec<usize> = order
        .iter()
        .map(|&c| {
            let g = estimate.guaranteed_of(c) as usize;
            match mode {
                FvMode::Full => g,
                FvMode::Conservative => g.min(1),
            }
        })
        .collect();
    let needed: usize = counts.iter().sum();
    if needed > m {
        return Err(FixError::InsufficientMachines { needed, available: m });
    }
    let mut layout = Vec::with_capacity(order.len());
    let mut next = 0;
    for (&c, &cnt) in order.iter().zip(&counts) {
        layout.push((c, (next..next + cnt).collect::<Vec<_>>()));
        next += cnt;
    }
    let mut cells = BTreeSet::new();
    for (c, machines) in &layout {
        for k in 0..needed {
            let value = u8::from(machines.contains(&k));
            cells.insert((*c, k, value));
        }
    }
    for (c, machines) in &layout {
        for other in graph.neighbors(*c) {
            if !clique.contains(other) {
                for &k in machines {
                    cells.insert((other, k, 0));
                }
            }
        }
    }
    Ok(FixedAssignments {
        cells: cells.into_iter().map(|(component, machine, value)| FixedCell { component, machine, value }).collect(),
        layout,
    })
}
