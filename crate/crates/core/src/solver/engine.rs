//! Bounded-integer constraint propagation with depth-first branch-and-bound.
//!
//! Variables carry interval domains. Constraints are linear predicates or
//! implications between conjunctions of linear predicates. The search
//! minimizes a linear objective; ties keep the first solution found, so a
//! brancher that walks variables in a fixed order with ascending values
//! yields the lexicographically smallest optimum.

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub type Var = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `Σ terms rel rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pred {
    pub terms: Vec<(Var, i64)>,
    pub rel: Rel,
    pub rhs: i64,
}

impl Pred {
    pub fn new(terms: Vec<(Var, i64)>, rel: Rel, rhs: i64) -> Self {
        Self { terms, rel, rhs }
    }

    fn range(&self, dom: &Domains) -> (i64, i64) {
        let (mut min, mut max) = (0i64, 0i64);
        for &(v, c) in &self.terms {
            let (lo, hi) = (dom.lo[v as usize], dom.hi[v as usize]);
            if c >= 0 {
                min += c * lo;
                max += c * hi;
            } else {
                min += c * hi;
                max += c * lo;
            }
        }
        (min, max)
    }

    fn status(&self, dom: &Domains) -> Truth {
        let (min, max) = self.range(dom);
        let (yes, no) = match self.rel {
            Rel::Le => (max <= self.rhs, min > self.rhs),
            Rel::Ge => (min >= self.rhs, max < self.rhs),
            Rel::Eq => (min == self.rhs && max == self.rhs, self.rhs < min || self.rhs > max),
        };
        if yes {
            Truth::True
        } else if no {
            Truth::False
        } else {
            Truth::Unknown
        }
    }

    pub fn holds(&self, values: &[i64]) -> bool {
        let s: i64 = self.terms.iter().map(|&(v, c)| c * values[v as usize]).sum();
        match self.rel {
            Rel::Le => s <= self.rhs,
            Rel::Ge => s >= self.rhs,
            Rel::Eq => s == self.rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Truth {
    True,
    False,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prop {
    Linear(Pred),
    /// Empty guard means the body always holds.
    Implies { guard: Vec<Pred>, body: Vec<Pred> },
    /// `x >= y` lexicographically.
    LexGe { x: Vec<Var>, y: Vec<Var> },
}

impl Prop {
    fn vars(&self) -> Vec<Var> {
        let mut out: Vec<Var> = match self {
            Prop::Linear(p) => p.terms.iter().map(|t| t.0).collect(),
            Prop::Implies { guard, body } => guard.iter().chain(body).flat_map(|p| p.terms.iter().map(|t| t.0)).collect(),
            Prop::LexGe { x, y } => x.iter().chain(y).copied().collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn holds(&self, values: &[i64]) -> bool {
        match self {
            Prop::Linear(p) => p.holds(values),
            Prop::Implies { guard, body } => !guard.iter().all(|g| g.holds(values)) || body.iter().all(|b| b.holds(values)),
            Prop::LexGe { x, y } => {
                let xs = x.iter().map(|&v| values[v as usize]);
                let ys = y.iter().map(|&v| values[v as usize]);
                xs.cmp(ys) != std::cmp::Ordering::Less
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domains {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl Domains {
    pub fn is_fixed(&self, v: Var) -> bool {
        self.lo[v as usize] == self.hi[v as usize]
    }

    pub fn all_fixed(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(a, b)| a == b)
    }

    pub fn value(&self, v: Var) -> Option<i64> {
        self.is_fixed(v).then(|| self.lo[v as usize])
    }
}

struct Failed;

fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) == (b < 0)) {
        q + 1
    } else {
        q
    }
}

fn set_lo(dom: &mut Domains, v: Var, val: i64, changed: &mut Vec<Var>) -> Result<(), Failed> {
    let i = v as usize;
    if val > dom.lo[i] {
        if val > dom.hi[i] {
            return Err(Failed);
        }
        dom.lo[i] = val;
        changed.push(v);
    }
    Ok(())
}

fn set_hi(dom: &mut Domains, v: Var, val: i64, changed: &mut Vec<Var>) -> Result<(), Failed> {
    let i = v as usize;
    if val < dom.hi[i] {
        if val < dom.lo[i] {
            return Err(Failed);
        }
        dom.hi[i] = val;
        changed.push(v);
    }
    Ok(())
}

/// Bounds-consistent filtering of `sign * Σ terms <= rhs`.
fn enforce_le(terms: &[(Var, i64)], sign: i64, rhs: i64, dom: &mut Domains, changed: &mut Vec<Var>) -> Result<(), Failed> {
    let mut min = 0i64;
    for &(v, c) in terms {
        let c = c * sign;
        min += if c >= 0 { c * dom.lo[v as usize] } else { c * dom.hi[v as usize] };
    }
    if min > rhs {
        return Err(Failed);
    }
    for &(v, c) in terms {
        let c = c * sign;
        if c == 0 {
            continue;
        }
        let own = if c > 0 { c * dom.lo[v as usize] } else { c * dom.hi[v as usize] };
        let slack = rhs - (min - own);
        if c > 0 {
            set_hi(dom, v, floor_div(slack, c), changed)?;
        } else {
            set_lo(dom, v, ceil_div(slack, c), changed)?;
        }
    }
    Ok(())
}

fn enforce(p: &Pred, dom: &mut Domains, changed: &mut Vec<Var>) -> Result<(), Failed> {
    match p.rel {
        Rel::Le => enforce_le(&p.terms, 1, p.rhs, dom, changed),
        Rel::Ge => enforce_le(&p.terms, -1, -p.rhs, dom, changed),
        Rel::Eq => {
            enforce_le(&p.terms, 1, p.rhs, dom, changed)?;
            enforce_le(&p.terms, -1, -p.rhs, dom, changed)
        }
    }
}

fn enforce_negation(p: &Pred, dom: &mut Domains, changed: &mut Vec<Var>) -> Result<(), Failed> {
    match p.rel {
        Rel::Le => enforce_le(&p.terms, -1, -(p.rhs + 1), dom, changed),
        Rel::Ge => enforce_le(&p.terms, 1, p.rhs - 1, dom, changed),
        Rel::Eq => {
            let (min, max) = p.range(dom);
            if min == p.rhs && max == p.rhs {
                Err(Failed)
            } else if min == p.rhs {
                enforce_le(&p.terms, -1, -(p.rhs + 1), dom, changed)
            } else if max == p.rhs {
                enforce_le(&p.terms, 1, p.rhs - 1, dom, changed)
            } else {
                Ok(())
            }
        }
    }
}

/// Reusable propagation buffers.
#[derive(Default)]
pub struct Scratch {
    queue: Vec<u32>,
    queued: Vec<bool>,
    changed: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub init: Domains,
    props: Vec<Prop>,
    watches: Vec<Vec<u32>>,
    objective: Vec<(Var, i64)>,
}

impl Default for Model {
    fn default() -> Self {
        Self::new()
    }
}

impl Model {
    pub fn new() -> Self {
        Self { init: Domains { lo: vec![], hi: vec![] }, props: vec![], watches: vec![], objective: vec![] }
    }

    pub fn add_var(&mut self, lo: i64, hi: i64) -> Var {
        self.init.lo.push(lo);
        self.init.hi.push(hi);
        self.watches.push(Vec::new());
        (self.init.lo.len() - 1) as Var
    }

    pub fn num_vars(&self) -> usize {
        self.init.lo.len()
    }

    pub fn props(&self) -> &[Prop] {
        &self.props
    }

    pub fn add(&mut self, prop: Prop) {
        let id = self.props.len() as u32;
        for v in prop.vars() {
            self.watches[v as usize].push(id);
        }
        self.props.push(prop);
    }

    pub fn add_linear(&mut self, terms: Vec<(Var, i64)>, rel: Rel, rhs: i64) {
        self.add(Prop::Linear(Pred::new(terms, rel, rhs)));
    }

    pub fn set_objective(&mut self, terms: Vec<(Var, i64)>) {
        self.objective = terms;
    }

    pub fn objective(&self) -> &[(Var, i64)] {
        &self.objective
    }

    pub fn objective_lb(&self, dom: &Domains) -> i64 {
        self.objective
            .iter()
            .map(|&(v, c)| if c >= 0 { c * dom.lo[v as usize] } else { c * dom.hi[v as usize] })
            .sum()
    }

    pub fn objective_value(&self, values: &[i64]) -> i64 {
        self.objective.iter().map(|&(v, c)| c * values[v as usize]).sum()
    }

    /// True when every constraint holds on a complete assignment.
    pub fn satisfied(&self, values: &[i64]) -> bool {
        values.iter().enumerate().all(|(i, &x)| self.init.lo[i] <= x && x <= self.init.hi[i])
            && self.props.iter().all(|p| p.holds(values))
    }

    fn run_prop(&self, id: usize, dom: &mut Domains, changed: &mut Vec<Var>) -> Result<(), Failed> {
        match &self.props[id] {
            Prop::Linear(p) => enforce(p, dom, changed),
            Prop::Implies { guard, body } => {
                let mut unknown = None;
                let mut n_unknown = 0;
                for (gi, g) in guard.iter().enumerate() {
                    match g.status(dom) {
                        Truth::False => return Ok(()),
                        Truth::True => {}
                        Truth::Unknown => {
                            n_unknown += 1;
                            unknown = Some(gi);
                        }
                    }
                }
                if n_unknown == 0 {
                    for b in body {
                        enforce(b, dom, changed)?;
                    }
                } else if n_unknown == 1 && body.iter().any(|b| b.status(dom) == Truth::False) {
                    enforce_negation(&guard[unknown.unwrap()], dom, changed)?;
                }
                Ok(())
            }
            Prop::LexGe { x, y } => {
                for (&xv, &yv) in x.iter().zip(y) {
                    let (xi, yi) = (xv as usize, yv as usize);
                    if dom.lo[xi] == dom.hi[xi] && dom.lo[yi] == dom.hi[yi] && dom.lo[xi] == dom.lo[yi] {
                        continue;
                    }
                    set_lo(dom, xv, dom.lo[yi], changed)?;
                    set_hi(dom, yv, dom.hi[xi], changed)?;
                    let fixed_equal = dom.lo[xi] == dom.hi[xi] && dom.lo[yi] == dom.hi[yi] && dom.lo[xi] == dom.lo[yi];
                    if !fixed_equal {
                        break;
                    }
                }
                Ok(())
            }
        }
    }

    /// Propagates to a fixpoint. `seed` selects the variables whose watchers
    /// start in the queue; `None` queues every constraint. `cut` bounds the
    /// objective from above. Returns false on a wipe-out.
    pub fn propagate(&self, dom: &mut Domains, scratch: &mut Scratch, seed: Option<&[Var]>, cut: Option<i64>) -> bool {
        let np = self.props.len();
        scratch.queued.clear();
        scratch.queued.resize(np, false);
        scratch.queue.clear();
        match seed {
            None => {
                scratch.queue.extend((0..np as u32).rev());
                scratch.queued.iter_mut().for_each(|q| *q = true);
            }
            Some(vars) => {
                for &v in vars {
                    for &p in &self.watches[v as usize] {
                        if !scratch.queued[p as usize] {
                            scratch.queued[p as usize] = true;
                            scratch.queue.push(p);
                        }
                    }
                }
            }
        }
        loop {
            if let Some(limit) = cut {
                scratch.changed.clear();
                if enforce_le(&self.objective, 1, limit, dom, &mut scratch.changed).is_err() {
                    return false;
                }
                self.requeue(scratch, u32::MAX);
            }
            let Some(id) = scratch.queue.pop() else { return true };
            scratch.queued[id as usize] = false;
            scratch.changed.clear();
            if self.run_prop(id as usize, dom, &mut scratch.changed).is_err() {
                return false;
            }
            self.requeue(scratch, id);
        }
    }

    fn requeue(&self, scratch: &mut Scratch, except: u32) {
        for ci in 0..scratch.changed.len() {
            let v = scratch.changed[ci];
            for &p in &self.watches[v as usize] {
                if p != except && !scratch.queued[p as usize] {
                    scratch.queued[p as usize] = true;
                    scratch.queue.push(p);
                }
            }
        }
    }
}

/// Chooses the next variable and the order in which its values are tried.
pub trait Brancher: Sync {
    fn choose(&self, dom: &Domains) -> Option<(Var, Vec<i64>)>;
}

/// Admissible objective lower bound for a node.
pub trait Bounder: Sync {
    fn bound(&self, model: &Model, dom: &Domains) -> i64;
}

/// Variables in a fixed order, values ascending.
pub struct InOrder(pub Vec<Var>);

impl Brancher for InOrder {
    fn choose(&self, dom: &Domains) -> Option<(Var, Vec<i64>)> {
        self.0
            .iter()
            .find(|&&v| !dom.is_fixed(v))
            .map(|&v| (v, (dom.lo[v as usize]..=dom.hi[v as usize]).collect()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchConfig {
    pub timeout: Option<Duration>,
    /// Worker threads; 0 or 1 runs single-threaded and deterministically.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub best: Option<(i64, Vec<i64>)>,
    /// The search space was exhausted.
    pub complete: bool,
    pub nodes: u64,
    pub incumbent_updates: u64,
    pub elapsed: Duration,
}

struct Shared {
    best: AtomicI64,
    solution: Mutex<Option<(i64, usize, Vec<i64>)>>,
    stop: AtomicBool,
    updates: AtomicUsize,
    deadline: Option<Instant>,
}

impl Shared {
    fn submit(&self, obj: i64, order: usize, values: Vec<i64>) {
        let mut sol = self.solution.lock().unwrap();
        let better = match &*sol {
            None => true,
            Some((o, ord, _)) => obj < *o || (obj == *o && order < *ord),
        };
        if better {
            *sol = Some((obj, order, values));
            self.best.fetch_min(obj, Ordering::SeqCst);
            self.updates.fetch_add(1, Ordering::Relaxed);
        }
    }
}

struct Worker<'a> {
    model: &'a Model,
    brancher: &'a dyn Brancher,
    bounder: Option<&'a dyn Bounder>,
    shared: &'a Shared,
    scratch: Scratch,
    nodes: u64,
    /// Subtree rank, used to prefer earlier subtrees among equal objectives.
    order: usize,
}

impl Worker<'_> {
    fn bound(&self, dom: &Domains) -> i64 {
        match self.bounder {
            Some(b) => b.bound(self.model, dom).max(self.model.objective_lb(dom)),
            None => self.model.objective_lb(dom),
        }
    }

    fn stopped(&mut self) -> bool {
        if self.shared.stop.load(Ordering::Relaxed) {
            return true;
        }
        if self.nodes.is_multiple_of(256) {
            if let Some(d) = self.shared.deadline {
                if Instant::now() >= d {
                    self.shared.stop.store(true, Ordering::Relaxed);
                    return true;
                }
            }
        }
        false
    }

    fn pick(&self, dom: &Domains) -> Option<(Var, Vec<i64>)> {
        self.brancher.choose(dom).or_else(|| {
            (0..dom.lo.len() as Var)
                .find(|&v| !dom.is_fixed(v))
                .map(|v| (v, (dom.lo[v as usize]..=dom.hi[v as usize]).collect()))
        })
    }

    /// `dom` is already propagated.
    fn dfs(&mut self, dom: &Domains) {
        self.nodes += 1;
        if self.stopped() {
            return;
        }
        let best = self.shared.best.load(Ordering::SeqCst);
        if self.bound(dom) >= best {
            return;
        }
        match self.pick(dom) {
            None => {
                let obj = self.model.objective_lb(dom);
                if obj < best {
                    self.shared.submit(obj, self.order, dom.lo.clone());
                }
            }
            Some((v, values)) => {
                for val in values {
                    let best = self.shared.best.load(Ordering::SeqCst);
                    let mut child = dom.clone();
                    if val < child.lo[v as usize] || val > child.hi[v as usize] {
                        continue;
                    }
                    child.lo[v as usize] = val;
                    child.hi[v as usize] = val;
                    let cut = (best != i64::MAX).then(|| best - 1);
                    if self.model.propagate(&mut child, &mut self.scratch, Some(&[v]), cut) {
                        self.dfs(&child);
                    }
                    if self.shared.stop.load(Ordering::Relaxed) {
                        return;
                    }
                }
            }
        }
    }
}

/// Expands the root breadth-first into at least `want` open nodes, preserving DFS order.
fn split(model: &Model, brancher: &dyn Brancher, root: Domains, want: usize) -> Vec<Domains> {
    let mut frontier = vec![root];
    let mut scratch = Scratch::default();
    for _ in 0..8 {
        if frontier.len() >= want {
            break;
        }
        let mut next = Vec::new();
        let mut grew = false;
        for dom in frontier {
            let choice = brancher.choose(&dom);
            match choice {
                None => next.push(dom),
                Some((v, values)) => {
                    grew = true;
                    for val in values {
                        if val < dom.lo[v as usize] || val > dom.hi[v as usize] {
                            continue;
                        }
                        let mut child = dom.clone();
                        child.lo[v as usize] = val;
                        child.hi[v as usize] = val;
                        if model.propagate(&mut child, &mut scratch, Some(&[v]), None) {
                            next.push(child);
                        }
                    }
                }
            }
        }
        frontier = next;
        if !grew {
            break;
        }
    }
    frontier
}

/// Minimizes the model objective.
pub fn minimize(model: &Model, brancher: &dyn Brancher, bounder: Option<&dyn Bounder>, cfg: &SearchConfig) -> Outcome {
    let start = Instant::now();
    let shared = Shared {
        best: AtomicI64::new(i64::MAX),
        solution: Mutex::new(None),
        stop: AtomicBool::new(false),
        updates: AtomicUsize::new(0),
        deadline: cfg.timeout.map(|t| start + t),
    };
    let mut root = model.init.clone();
    let mut scratch = Scratch::default();
    let feasible = model.propagate(&mut root, &mut scratch, None, None);
    let mut nodes = 0u64;
    if feasible {
        if cfg.threads <= 1 {
            let mut w = Worker { model, brancher, bounder, shared: &shared, scratch, nodes: 0, order: 0 };
            w.dfs(&root);
            nodes = w.nodes;
        } else {
            let subtrees = split(model, brancher, root, cfg.threads * 4);
            let next = AtomicUsize::new(0);
            let total = AtomicUsize::new(0);
            std::thread::scope(|s| {
                for _ in 0..cfg.threads {
                    s.spawn(|| {
                        let mut w = Worker {
                            model,
                            brancher,
                            bounder,
                            shared: &shared,
                            scratch: Scratch::default(),
                            nodes: 0,
                            order: 0,
                        };
                        loop {
                            let i = next.fetch_add(1, Ordering::SeqCst);
                            if i >= subtrees.len() {
                                break;
                            }
                            w.order = i;
                            w.dfs(&subtrees[i]);
                        }
                        total.fetch_add(w.nodes as usize, Ordering::Relaxed);
                    });
                }
            });
            nodes = total.load(Ordering::Relaxed) as u64;
        }
    }
    let complete = !shared.stop.load(Ordering::Relaxed);
    let best = shared.solution.into_inner().unwrap().map(|(o, _, v)| (o, v));
    Outcome {
        best,
        complete,
        nodes,
        incumbent_updates: shared.updates.load(Ordering::Relaxed) as u64,
        elapsed: start.elapsed(),
    }
}
