//! Domain types: components, offers, structural constraints and plans.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub u32);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Offer identifier. Offers are numbered `1..=O`; `0` means "machine unused".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OfferId(pub u32);

/// Integer quantities, one per hardware dimension, in the problem's dimension order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(pub Vec<u64>);

impl ResourceVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, h: usize) -> u64 {
        self.0[h]
    }

    pub fn fits_within(&self, capacity: &ResourceVector) -> bool {
        self.0.len() == capacity.0.len() && self.0.iter().zip(&capacity.0).all(|(r, c)| r <= c)
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: ComponentId,
    pub name: String,
    pub requirements: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmOffer {
    pub id: OfferId,
    pub name: String,
    pub capacity: ResourceVector,
    /// Price per hour in micro currency units.
    pub price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfferCatalog {
    pub dimensions: Vec<String>,
    pub offers: Vec<VmOffer>,
}

impl OfferCatalog {
    /// Builds a catalog. Offer ids must be `1..=O` in order.
    pub fn new(dimensions: Vec<String>, offers: Vec<VmOffer>) -> Result<Self, ModelError> {
        for (idx, offer) in offers.iter().enumerate() {
            if offer.id.0 as usize != idx + 1 {
                return Err(ModelError::OfferIdOrder { position: idx, found: offer.id.0 });
            }
            if offer.capacity.len() != dimensions.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "offer {} has {} capacity entries, expected {}",
                    offer.id.0,
                    offer.capacity.len(),
                    dimensions.len()
                )));
            }
            if let Some(h) = offer.capacity.0.iter().position(|&c| c == 0) {
                return Err(ModelError::InvalidOffer(format!(
                    "offer {} has zero capacity for {}",
                    offer.id.0, dimensions[h]
                )));
            }
            if offer.price == 0 {
                return Err(ModelError::InvalidOffer(format!("offer {} has zero price", offer.id.0)));
            }
        }
        Ok(Self { dimensions, offers })
    }

    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }

    /// Offer by 1-based id.
    pub fn offer(&self, id: u32) -> Option<&VmOffer> {
        if id == 0 {
            None
        } else {
            self.offers.get(id as usize - 1)
        }
    }

    /// Reorders capacity vectors to follow `dims`.
    pub fn aligned_to(&self, dims: &[String]) -> Result<OfferCatalog, ModelError> {
        if self.dimensions == dims {
            return Ok(self.clone());
        }
        let mut perm = Vec::with_capacity(dims.len());
        for d in dims {
            match self.dimensions.iter().position(|x| x == d) {
                Some(p) => perm.push(p),
                None => {
                    return Err(ModelError::DimensionMismatch(format!(
                        "catalog has no dimension '{d}'"
                    )))
                }
            }
        }
        if dims.len() != self.dimensions.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "catalog declares {:?}, spec declares {:?}",
                self.dimensions, dims
            )));
        }
        let offers = self
            .offers
            .iter()
            .map(|o| VmOffer {
                capacity: ResourceVector(perm.iter().map(|&p| o.capacity.0[p]).collect()),
                ..o.clone()
            })
            .collect();
        Ok(OfferCatalog { dimensions: dims.to_vec(), offers })
    }

    /// Cheapest offer (lowest price, then lowest id) able to host `req` alone.
    pub fn cheapest_fitting(&self, req: &ResourceVector) -> Option<&VmOffer> {
        self.offers
            .iter()
            .filter(|o| req.fits_within(&o.capacity))
            .min_by_key(|o| (o.price, o.id))
    }

    /// Keeps only the first `count` offers.
    pub fn truncated(&self, count: usize) -> OfferCatalog {
        OfferCatalog {
            dimensions: self.dimensions.clone(),
            offers: self.offers.iter().take(count).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl BoundOp {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            BoundOp::Eq => lhs == rhs,
            BoundOp::Le => lhs <= rhs,
            BoundOp::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BoundOp::Eq => "=",
            BoundOp::Le => "<=",
            BoundOp::Ge => ">=",
        }
    }
}

impl fmt::Display for BoundOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StructuralConstraint {
    /// `i` and `j` never share a machine.
    Conflict { i: ComponentId, j: ComponentId },
    /// `i` and `j` are always deployed on the same machines.
    Colocate { i: ComponentId, j: ComponentId },
    /// Exactly one member of the set is deployed.
    ExclusiveDeploy { components: Vec<ComponentId> },
    /// `n * count(i) <= m * count(j)`.
    RequireProvide { i: ComponentId, j: ComponentId, n: u64, m: u64 },
    /// `0 <= n * count(j) - count(i) < n`.
    ExactRatio { i: ComponentId, j: ComponentId, n: u64 },
    /// `i` runs on every used machine not hosting one of its conflicts.
    FullDeploy { i: ComponentId },
    /// Sum of instance counts over `components` compared against `n`.
    /// Repeated ids count repeatedly.
    BoundInstances { components: Vec<ComponentId>, op: BoundOp, n: u64 },
    /// Like `BoundInstances`, but only when `guard` is deployed.
    ConditionalBound { guard: ComponentId, components: Vec<ComponentId>, op: BoundOp, n: u64 },
}

impl StructuralConstraint {
    pub fn referenced(&self) -> Vec<ComponentId> {
        use StructuralConstraint::*;
        match self {
            Conflict { i, j } | Colocate { i, j } => vec![*i, *j],
            RequireProvide { i, j, .. } | ExactRatio { i, j, .. } => vec![*i, *j],
            FullDeploy { i } => vec![*i],
            ExclusiveDeploy { components } | BoundInstances { components, .. } => components.clone(),
            ConditionalBound { guard, components, .. } => {
                let mut v = vec![*guard];
                v.extend(components);
                v
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        use StructuralConstraint::*;
        match self {
            Conflict { .. } => "conflict",
            Colocate { .. } => "colocate",
            ExclusiveDeploy { .. } => "exclusive_deploy",
            RequireProvide { .. } => "require_provide",
            ExactRatio { .. } => "exact_ratio",
            FullDeploy { .. } => "full_deploy",
            BoundInstances { .. } => "bound_instances",
            ConditionalBound { .. } => "conditional_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplicationSpec {
    pub name: String,
    pub dimensions: Vec<String>,
    pub components: Vec<Component>,
    pub constraints: Vec<StructuralConstraint>,
}

impl ApplicationSpec {
    pub fn index_of(&self, id: ComponentId) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn component(&self, id: ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn ids(&self) -> Vec<ComponentId> {
        self.components.iter().map(|c| c.id).collect()
    }

    /// Sets the threshold of every `>=` bound over exactly `{component}` to `k`.
    /// Returns how many bounds changed.
    pub fn set_min_instances(&mut self, component: ComponentId, k: u64) -> usize {
        let mut changed = 0;
        for c in &mut self.constraints {
            if let StructuralConstraint::BoundInstances { components, op: BoundOp::Ge, n } = c {
                if components.as_slice() == [component] {
                    *n = k;
                    changed += 1;
                }
            }
        }
        changed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum SpecViolation {
    EmptySpec,
    DuplicateComponentId { id: ComponentId },
    WrongRequirementCount { component: ComponentId, found: usize, expected: usize },
    ZeroRequirements { component: ComponentId },
    DanglingComponentRef { constraint: usize, id: ComponentId },
    SelfReference { constraint: usize, id: ComponentId },
    ZeroCoefficient { constraint: usize },
    EmptyComponentSet { constraint: usize },
    ConflictColocateClash { i: ComponentId, j: ComponentId },
    ConflictingFullDeploy { i: ComponentId, j: ComponentId },
    DimensionMismatch { detail: String },
    EmptyCatalog,
    UnsatisfiableComponent { component: ComponentId, name: String, dimension: String, required: u64, max_offered: u64 },
    /// Fits every dimension separately, but no single offer fits all of them.
    NoFittingOffer { component: ComponentId, name: String },
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SpecViolation::*;
        match self {
            EmptySpec => write!(f, "spec has no components"),
            DuplicateComponentId { id } => write!(f, "duplicate component id {}", id.0),
            WrongRequirementCount { component, found, expected } => write!(
                f,
                "component {} has {found} requirement entries, expected {expected}",
                component.0
            ),
            ZeroRequirements { component } => {
                write!(f, "component {} requires nothing", component.0)
            }
            DanglingComponentRef { constraint, id } => {
                write!(f, "constraint #{constraint} references unknown component {}", id.0)
            }
            SelfReference { constraint, id } => {
                write!(f, "constraint #{constraint} relates component {} to itself", id.0)
            }
            ZeroCoefficient { constraint } => {
                write!(f, "constraint #{constraint} has a zero coefficient")
            }
            EmptyComponentSet { constraint } => {
                write!(f, "constraint #{constraint} has an empty component set")
            }
            ConflictColocateClash { i, j } => {
                write!(f, "components {} and {} are both in conflict and co-located", i.0, j.0)
            }
            ConflictingFullDeploy { i, j } => write!(
                f,
                "components {} and {} are in conflict and both fully deployed",
                i.0, j.0
            ),
            DimensionMismatch { detail } => write!(f, "dimension mismatch: {detail}"),
            EmptyCatalog => write!(f, "offer catalog is empty"),
            UnsatisfiableComponent { component, name, dimension, required, max_offered } => write!(
                f,
                "component {} ({name}) needs {required} {dimension} but no offer provides more than {max_offered}",
                component.0
            ),
            NoFittingOffer { component, name } => {
                write!(f, "no single offer can host component {} ({name})", component.0)
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid specification: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<SpecViolation>);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("offer at position {position} has id {found}; ids must run 1..=O in order")]
    OfferIdOrder { position: usize, found: u32 },
    #[error("invalid offer: {0}")]
    InvalidOffer(String),
}

/// A spec whose cross-references and invariants have been checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedSpec {
    spec: ApplicationSpec,
    index: HashMap<ComponentId, usize>,
}

impl Deref for ValidatedSpec {
    type Target = ApplicationSpec;
    fn deref(&self) -> &ApplicationSpec {
        &self.spec
    }
}

impl ValidatedSpec {
    /// Checks everything that does not depend on an offer catalog.
    pub fn structural(spec: ApplicationSpec) -> Result<Self, ValidationErrors> {
        let violations = structural_violations(&spec);
        if violations.is_empty() {
            let index = spec.components.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
            Ok(Self { spec, index })
        } else {
            Err(ValidationErrors(violations))
        }
    }

    pub fn spec(&self) -> &ApplicationSpec {
        &self.spec
    }

    pub fn into_inner(self) -> ApplicationSpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.components.len()
    }

    /// Row index of a component. Panics on unknown ids, which validation rules out.
    pub fn idx(&self, id: ComponentId) -> usize {
        self.index[&id]
    }

    pub fn try_idx(&self, id: ComponentId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Symmetric N×N conflict matrix by row index.
    pub fn conflict_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        let mut m = vec![vec![false; n]; n];
        for c in &self.spec.constraints {
            if let StructuralConstraint::Conflict { i, j } = c {
                let (a, b) = (self.idx(*i), self.idx(*j));
                m[a][b] = true;
                m[b][a] = true;
            }
        }
        m
    }

    /// Row indices belonging to at least one exclusive-deployment set.
    pub fn exclusive_members(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for c in &self.spec.constraints {
            if let StructuralConstraint::ExclusiveDeploy { components } = c {
                out.extend(components.iter().map(|id| self.idx(*id)));
            }
        }
        out
    }
}

fn structural_violations(spec: &ApplicationSpec) -> Vec<SpecViolation> {
    use StructuralConstraint::*;
    let mut out = Vec::new();
    if spec.components.is_empty() {
        out.push(SpecViolation::EmptySpec);
    }
    let h = spec.dimensions.len();
    let mut seen = BTreeSet::new();
    for c in &spec.components {
        if !seen.insert(c.id) {
            out.push(SpecViolation::DuplicateComponentId { id: c.id });
        }
        if c.requirements.len() != h {
            out.push(SpecViolation::WrongRequirementCount {
                component: c.id,
                found: c.requirements.len(),
                expected: h,
            });
        } else if c.requirements.0.iter().all(|&r| r == 0) {
            out.push(SpecViolation::ZeroRequirements { component: c.id });
        }
    }

    let mut conflicts = BTreeSet::new();
    let mut colocs = BTreeSet::new();
    let mut full = Vec::new();
    for (ci, c) in spec.constraints.iter().enumerate() {
        for id in c.referenced() {
            if !seen.contains(&id) {
                out.push(SpecViolation::DanglingComponentRef { constraint: ci, id });
            }
        }
        match c {
            Conflict { i, j } | Colocate { i, j } | RequireProvide { i, j, .. } | ExactRatio { i, j, .. }
                if i == j =>
            {
                out.push(SpecViolation::SelfReference { constraint: ci, id: *i });
            }
            _ => {}
        }
        match c {
            Conflict { i, j } => {
                conflicts.insert((*i.min(j), *i.max(j)));
            }
            Colocate { i, j } => {
                colocs.insert((*i.min(j), *i.max(j)));
            }
            RequireProvide { n, m, .. } if *n == 0 || *m == 0 => {
                out.push(SpecViolation::ZeroCoefficient { constraint: ci });
            }
            ExactRatio { n, .. } if *n == 0 => {
                out.push(SpecViolation::ZeroCoefficient { constraint: ci });
            }
            ExclusiveDeploy { components } | BoundInstances { components, .. } | ConditionalBound { components, .. }
                if components.is_empty() =>
            {
                out.push(SpecViolation::EmptyComponentSet { constraint: ci });
            }
            FullDeploy { i } => full.push(*i),
            _ => {}
        }
    }
    for pair in conflicts.intersection(&colocs) {
        out.push(SpecViolation::ConflictColocateClash { i: pair.0, j: pair.1 });
    }
    for (a, &i) in full.iter().enumerate() {
        for &j in &full[a + 1..] {
            if conflicts.contains(&(i.min(j), i.max(j))) {
                out.push(SpecViolation::ConflictingFullDeploy { i: i.min(j), j: i.max(j) });
            }
        }
    }
    out
}

/// Validates a spec against a catalog: structural invariants plus every
/// component fitting alone on at least one offer.
pub fn validate_spec(spec: &ApplicationSpec, catalog: &OfferCatalog) -> Result<ValidatedSpec, ValidationErrors> {
    let mut violations = structural_violations(spec);
    if catalog.is_empty() {
        violations.push(SpecViolation::EmptyCatalog);
    }
    let aligned = match catalog.aligned_to(&spec.dimensions) {
        Ok(a) => Some(a),
        Err(e) => {
            violations.push(SpecViolation::DimensionMismatch { detail: e.to_string() });
            None
        }
    };
    if let Some(cat) = aligned.filter(|c| !c.is_empty()) {
        for comp in &spec.components {
            if comp.requirements.len() != spec.dimensions.len() {
                continue;
            }
            let mut dominated = false;
            for (h, dim) in spec.dimensions.iter().enumerate() {
                let max = cat.offers.iter().map(|o| o.capacity.get(h)).max().unwrap_or(0);
                if comp.requirements.get(h) > max {
                    dominated = true;
                    violations.push(SpecViolation::UnsatisfiableComponent {
                        component: comp.id,
                        name: comp.name.clone(),
                        dimension: dim.clone(),
                        required: comp.requirements.get(h),
                        max_offered: max,
                    });
                }
            }
            if !dominated && cat.cheapest_fitting(&comp.requirements).is_none() {
                violations.push(SpecViolation::NoFittingOffer { component: comp.id, name: comp.name.clone() });
            }
        }
    }
    if violations.is_empty() {
        ValidatedSpec::structural(spec.clone())
    } else {
        Err(ValidationErrors(violations))
    }
}

/// A concrete deployment: `assignment[i][k]` is 1 iff component row `i`
/// runs on machine `k`; `types[k]` is the offer id or 0 when unused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub assignment: Vec<Vec<u8>>,
    pub types: Vec<u32>,
    pub occupancy: Vec<u8>,
    pub total_price: u64,
}

impl DeploymentPlan {
    pub fn machines(&self) -> usize {
        self.types.len()
    }

    pub fn instances(&self, row: usize) -> u64 {
        self.assignment[row].iter().map(|&x| x as u64).sum()
    }

    pub fn occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v == 1).count()
    }

    pub fn deployed_instances(&self) -> u64 {
        (0..self.assignment.len()).map(|i| self.instances(i)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckFamily {
    Shape,
    BasicAllocation,
    Occupancy,
    Capacity,
    Link,
    UnusedMachine,
    Price,
    Conflict,
    Colocate,
    ExclusiveDeploy,
    RequireProvide,
    ExactRatio,
    FullDeploy,
    BoundInstances,
    ConditionalBound,
}

impl CheckFamily {
    pub const ALL: [CheckFamily; 15] = [
        CheckFamily::Shape,
        CheckFamily::BasicAllocation,
        CheckFamily::Occupancy,
        CheckFamily::Capacity,
        CheckFamily::Link,
        CheckFamily::UnusedMachine,
        CheckFamily::Price,
        CheckFamily::Conflict,
        CheckFamily::Colocate,
        CheckFamily::ExclusiveDeploy,
        CheckFamily::RequireProvide,
        CheckFamily::ExactRatio,
        CheckFamily::FullDeploy,
        CheckFamily::BoundInstances,
        CheckFamily::ConditionalBound,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub family: CheckFamily,
    pub components: Vec<ComponentId>,
    /// 1-based machine numbers.
    pub machines: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: CheckFamily,
    pub passed: bool,
    pub violations: Vec<PlanViolation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub families: Vec<FamilyResult>,
    pub recomputed_price: u64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| f.passed)
    }

    pub fn family(&self, family: CheckFamily) -> &FamilyResult {
        self.families.iter().find(|f| f.family == family).expect("all families reported")
    }

    pub fn violations(&self) -> impl Iterator<Item = &PlanViolation> {
        self.families.iter().flat_map(|f| f.violations.iter())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fam in &self.families {
            let tag = if fam.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{tag} {:?}", fam.family)?;
            for v in &fam.violations {
                writeln!(f, "       {}", v.detail)?;
            }
        }
        write!(f, "recomputed price: {}", self.recomputed_price)
    }
}

/// Re-evaluates every constraint family of the model against `plan`.
pub fn check_plan(
    spec: &ValidatedSpec,
    catalog: &OfferCatalog,
    plan: &DeploymentPlan,
) -> Result<ValidationReport, ModelError> {
    use StructuralConstraint::*;
    let n = spec.n();
    let m = plan.types.len();
    if plan.assignment.len() != n {
        return Err(ModelError::DimensionMismatch(format!(
            "plan has {} rows, spec has {n} components",
            plan.assignment.len()
        )));
    }
    if plan.occupancy.len() != m || plan.assignment.iter().any(|r| r.len() != m) {
        return Err(ModelError::DimensionMismatch("plan rows, types and occupancy disagree on M".into()));
    }
    let catalog = catalog.aligned_to(&spec.dimensions)?;

    let mut v: Vec<PlanViolation> = Vec::new();
    let mut push = |family, components: Vec<ComponentId>, machines: Vec<usize>, detail: String| {
        v.push(PlanViolation { family, components, machines, detail })
    };
    let id = |i: usize| spec.components[i].id;
    let a = |i: usize, k: usize| plan.assignment[i][k] == 1;

    for (i, row) in plan.assignment.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            if x > 1 {
                push(CheckFamily::Shape, vec![id(i)], vec![k + 1], format!("a[{}][{}] = {x} is not binary", i + 1, k + 1));
            }
        }
    }
    for (k, &o) in plan.types.iter().enumerate() {
        if o as usize > catalog.len() {
            push(CheckFamily::Shape, vec![], vec![k + 1], format!("machine {} has unknown offer {o}", k + 1));
        }
        if plan.occupancy[k] > 1 {
            push(CheckFamily::Shape, vec![], vec![k + 1], format!("v[{}] is not binary", k + 1));
        }
    }

    let counts: Vec<i64> = (0..n).map(|i| plan.instances(i) as i64).collect();
    let col_used: Vec<bool> = (0..m).map(|k| (0..n).any(|i| a(i, k))).collect();
    let exclusive = spec.exclusive_members();

    for i in 0..n {
        if counts[i] < 1 && !exclusive.contains(&i) {
            push(CheckFamily::BasicAllocation, vec![id(i)], vec![], format!("{} is not deployed", spec.components[i].name));
        }
    }

    let mut recomputed = 0u64;
    for k in 0..m {
        let occ = plan.occupancy[k] == 1;
        if occ != col_used[k] {
            push(
                CheckFamily::Occupancy,
                vec![],
                vec![k + 1],
                format!("machine {}: occupancy {} but column {}", k + 1, plan.occupancy[k], if col_used[k] { "non-empty" } else { "empty" }),
            );
        }
        let t = plan.types[k];
        if !col_used[k] && t != 0 {
            push(CheckFamily::UnusedMachine, vec![], vec![k + 1], format!("machine {} is empty but typed {t}", k + 1));
        }
        if occ && t == 0 {
            push(CheckFamily::Link, vec![], vec![k + 1], format!("machine {} is occupied but has no type", k + 1));
        }
        let offer = if t == 0 { None } else { catalog.offer(t) };
        if occ {
            if let Some(o) = offer {
                recomputed += o.price;
            }
        }
        for h in 0..spec.dimensions.len() {
            let load: u64 = (0..n).filter(|&i| a(i, k)).map(|i| spec.components[i].requirements.get(h)).sum();
            let cap = match offer {
                Some(o) if occ => o.capacity.get(h),
                _ => 0,
            };
            if load > cap {
                push(
                    CheckFamily::Capacity,
                    (0..n).filter(|&i| a(i, k)).map(id).collect(),
                    vec![k + 1],
                    format!("machine {}: {} load {load} exceeds capacity {cap}", k + 1, spec.dimensions[h]),
                );
            }
        }
    }
    if recomputed != plan.total_price {
        push(CheckFamily::Price, vec![], vec![], format!("declared price {} but recomputed {recomputed}", plan.total_price));
    }

    let deployed = |i: usize| counts[i] >= 1;
    let sum = |set: &[ComponentId]| set.iter().map(|c| counts[spec.idx(*c)]).sum::<i64>();
    let conflicts = spec.conflict_matrix();

    for c in &spec.constraints {
        match c {
            Conflict { i, j } => {
                let (x, y) = (spec.idx(*i), spec.idx(*j));
                let shared: Vec<usize> = (0..m).filter(|&k| a(x, k) && a(y, k)).map(|k| k + 1).collect();
                if !shared.is_empty() {
                    push(CheckFamily::Conflict, vec![*i, *j], shared, format!("{} and {} share a machine", i, j));
                }
            }
            Colocate { i, j } => {
                let (x, y) = (spec.idx(*i), spec.idx(*j));
                let diff: Vec<usize> = (0..m).filter(|&k| a(x, k) != a(y, k)).map(|k| k + 1).collect();
                if !diff.is_empty() {
                    push(CheckFamily::Colocate, vec![*i, *j], diff, format!("{} and {} are not co-located", i, j));
                }
            }
            ExclusiveDeploy { components } => {
                let on = components.iter().filter(|c| deployed(spec.idx(**c))).count();
                if on != 1 {
                    push(CheckFamily::ExclusiveDeploy, components.clone(), vec![], format!("{on} members of an exclusive set deployed"));
                }
            }
            RequireProvide { i, j, n: nn, m: mm } => {
                let (ci, cj) = (counts[spec.idx(*i)], counts[spec.idx(*j)]);
                if *nn as i64 * ci > *mm as i64 * cj {
                    push(CheckFamily::RequireProvide, vec![*i, *j], vec![], format!("{nn}*{ci} > {mm}*{cj} for {i} requiring {j}"));
                }
            }
            ExactRatio { i, j, n: nn } => {
                let (ci, cj) = (counts[spec.idx(*i)], counts[spec.idx(*j)]);
                let d = *nn as i64 * cj - ci;
                if d < 0 || d >= *nn as i64 {
                    push(CheckFamily::ExactRatio, vec![*i, *j], vec![], format!("ratio {nn}: {i}={ci}, {j}={cj}"));
                }
            }
            FullDeploy { i } => {
                let x = spec.idx(*i);
                let missing: Vec<usize> = (0..m)
                    .filter(|&k| col_used[k] && !a(x, k) && !(0..n).any(|j| conflicts[x][j] && a(j, k)))
                    .map(|k| k + 1)
                    .collect();
                if !missing.is_empty() {
                    push(CheckFamily::FullDeploy, vec![*i], missing, format!("{i} missing from used machines"));
                }
            }
            BoundInstances { components, op, n: bound } => {
                let s = sum(components);
                if !op.holds(s, *bound as i64) {
                    push(CheckFamily::BoundInstances, components.clone(), vec![], format!("instance sum {s} violates {op} {bound}"));
                }
            }
            ConditionalBound { guard, components, op, n: bound } => {
                if deployed(spec.idx(*guard)) {
                    let s = sum(components);
                    if !op.holds(s, *bound as i64) {
                        push(
                            CheckFamily::ConditionalBound,
                            components.clone(),
                            vec![],
                            format!("{guard} deployed but instance sum {s} violates {op} {bound}"),
                        );
                    }
                }
            }
        }
    }

    let families = CheckFamily::ALL
        .iter()
        .map(|&family| {
            let violations: Vec<PlanViolation> = v.iter().filter(|x| x.family == family).cloned().collect();
            FamilyResult { family, passed: violations.is_empty(), violations }
        })
        .collect();
    Ok(ValidationReport { families, recomputed_price: recomputed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(id: u32, req: &[u64]) -> Component {
        Component { id: ComponentId(id), name: format!("c{id}"), requirements: ResourceVector(req.to_vec()) }
    }

    fn catalog(offers: &[(&[u64], u64)]) -> OfferCatalog {
        OfferCatalog::new(
            vec!["cpu".into(), "mem".into()],
            offers
                .iter()
                .enumerate()
                .map(|(i, (cap, price))| VmOffer {
                    id: OfferId(i as u32 + 1),
                    name: String::new(),
                    capacity: ResourceVector(cap.to_vec()),
                    price: *price,
                })
                .collect(),
        )
        .unwrap()
    }

    fn spec(components: Vec<Component>, constraints: Vec<StructuralConstraint>) -> ApplicationSpec {
        ApplicationSpec { name: "t".into(), dimensions: vec!["cpu".into(), "mem".into()], components, constraints }
    }

    #[test]
    fn conflict_and_colocate_clash() {
        let s = spec(
            vec![comp(1, &[1, 1]), comp(2, &[1, 1])],
            vec![
                StructuralConstraint::Conflict { i: ComponentId(1), j: ComponentId(2) },
                StructuralConstraint::Colocate { i: ComponentId(2), j: ComponentId(1) },
            ],
        );
        let err = validate_spec(&s, &catalog(&[(&[4, 4], 10)])).unwrap_err();
        assert!(err.0.contains(&SpecViolation::ConflictColocateClash { i: ComponentId(1), j: ComponentId(2) }));
    }

    #[test]
    fn oversized_component_names_dimension() {
        let s = spec(vec![comp(1, &[128, 1])], vec![]);
        let err = validate_spec(&s, &catalog(&[(&[64, 8], 10)])).unwrap_err();
        match &err.0[..] {
            [SpecViolation::UnsatisfiableComponent { component, dimension, .. }] => {
                assert_eq!(*component, ComponentId(1));
                assert_eq!(dimension, "cpu");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_reference() {
        let s = spec(vec![comp(1, &[1, 1])], vec![StructuralConstraint::FullDeploy { i: ComponentId(7) }]);
        let err = ValidatedSpec::structural(s).unwrap_err();
        assert!(matches!(err.0[0], SpecViolation::DanglingComponentRef { id: ComponentId(7), .. }));
    }

    #[test]
    fn empty_plan_fails_basic_allocation_for_every_component() {
        let s = ValidatedSpec::structural(spec(vec![comp(1, &[1, 1]), comp(2, &[1, 1])], vec![])).unwrap();
        let plan = DeploymentPlan { assignment: vec![vec![0, 0], vec![0, 0]], types: vec![0, 0], occupancy: vec![0, 0], total_price: 0 };
        let rep = check_plan(&s, &catalog(&[(&[4, 4], 10)]), &plan).unwrap();
        assert_eq!(rep.family(CheckFamily::BasicAllocation).violations.len(), 2);
        assert!(rep.family(CheckFamily::Occupancy).passed);
    }

    #[test]
    fn unused_trailing_machine_passes() {
        let s = ValidatedSpec::structural(spec(vec![comp(1, &[1, 1])], vec![])).unwrap();
        let plan = DeploymentPlan { assignment: vec![vec![1, 0]], types: vec![1, 0], occupancy: vec![1, 0], total_price: 10 };
        let rep = check_plan(&s, &catalog(&[(&[4, 4], 10)]), &plan).unwrap();
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn dimension_mismatch() {
        let s = ValidatedSpec::structural(spec(vec![comp(1, &[1, 1])], vec![])).unwrap();
        let plan = DeploymentPlan { assignment: vec![], types: vec![1], occupancy: vec![1], total_price: 10 };
        assert!(matches!(check_plan(&s, &catalog(&[(&[4, 4], 10)]), &plan), Err(ModelError::DimensionMismatch(_))));
    }

    #[test]
    fn catalog_alignment_permutes_capacities() {
        let cat = OfferCatalog::new(
            vec!["mem".into(), "cpu".into()],
            vec![VmOffer { id: OfferId(1), name: String::new(), capacity: ResourceVector(vec![8, 2]), price: 1 }],
        )
        .unwrap();
        let al = cat.aligned_to(&["cpu".into(), "mem".into()]).unwrap();
        assert_eq!(al.offers[0].capacity.0, vec![2, 8]);
    }
}
