//! JSON ingestion for specs and offer catalogs.
//!
//! Spec documents look like
//! `{"name", "dimensions": [..], "components": [{"id", "name", "requirements": {dim: int}}], "constraints": [{"kind", ..}]}`
//! and offer documents are arrays of `{"id", "name"?, "capacity": {dim: int}, "price_micro": int}`.
//! A decimal `"price"` (currency units per hour) is accepted in place of `price_micro`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ApplicationSpec, Component, ComponentId, OfferCatalog, OfferId, ResourceVector, StructuralConstraint, VmOffer,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}\n  | {context}")]
    Syntax { origin: String, line: usize, column: usize, message: String, context: String },
    #[error("{origin}: schema violation at {pointer}: {message}")]
    Schema { origin: String, pointer: String, message: String },
}

impl LoadError {
    pub fn pointer(&self) -> Option<&str> {
        match self {
            LoadError::Schema { pointer, .. } => Some(pointer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    name: String,
    dimensions: Vec<String>,
    components: Vec<ComponentDoc>,
    #[serde(default)]
    constraints: Vec<StructuralConstraint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    id: ComponentId,
    name: String,
    requirements: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OfferDoc {
    id: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    capacity: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price_micro: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price: Option<f64>,
}

fn schema(origin: &str, pointer: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError::Schema { origin: origin.to_string(), pointer: pointer.into(), message: message.into() }
}

fn escape_pointer(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn parse_doc<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    match serde_path_to_error::deserialize::<_, T>(de) {
        Ok(v) => Ok(v),
        Err(err) => {
            let pointer: String = err
                .path()
                .iter()
                .filter_map(|seg| match seg {
                    serde_path_to_error::Segment::Seq { index } => Some(format!("/{index}")),
                    serde_path_to_error::Segment::Map { key } => Some(format!("/{}", escape_pointer(key))),
                    serde_path_to_error::Segment::Enum { .. } | serde_path_to_error::Segment::Unknown => None,
                })
                .collect();
            let inner = err.into_inner();
            if inner.is_data() {
                Err(schema(origin, if pointer.is_empty() { "/".to_string() } else { pointer }, inner.to_string()))
            } else {
                let line = inner.line();
                let context = text.lines().nth(line.saturating_sub(1)).unwrap_or("").trim_end().to_string();
                Err(LoadError::Syntax { origin: origin.to_string(), line, column: inner.column(), message: inner.to_string(), context })
            }
        }
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ApplicationSpec, LoadError> {
    let path = path.as_ref();
    parse_spec(&read(path)?, &path.display().to_string())
}

pub fn load_offers(path: impl AsRef<Path>) -> Result<OfferCatalog, LoadError> {
    let path = path.as_ref();
    parse_offers(&read(path)?, &path.display().to_string())
}

/// Parses a spec document. `origin` labels error messages.
pub fn parse_spec(text: &str, origin: &str) -> Result<ApplicationSpec, LoadError> {
    let doc: SpecDoc = parse_doc(text, origin)?;
    if doc.dimensions.is_empty() {
        return Err(schema(origin, "/dimensions", "at least one dimension is required"));
    }
    for (h, d) in doc.dimensions.iter().enumerate() {
        if doc.dimensions[..h].contains(d) {
            return Err(schema(origin, format!("/dimensions/{h}"), format!("duplicate dimension '{d}'")));
        }
    }
    let mut components = Vec::with_capacity(doc.components.len());
    for (ci, c) in doc.components.into_iter().enumerate() {
        let base = format!("/components/{ci}/requirements");
        if let Some(k) = c.requirements.keys().find(|k| !doc.dimensions.contains(k)) {
            return Err(schema(origin, format!("{base}/{}", escape_pointer(k)), format!("unknown dimension '{k}'")));
        }
        let mut req = Vec::with_capacity(doc.dimensions.len());
        for d in &doc.dimensions {
            match c.requirements.get(d) {
                Some(&v) => req.push(v),
                None => return Err(schema(origin, base.clone(), format!("missing dimension '{d}'"))),
            }
        }
        components.push(Component { id: c.id, name: c.name, requirements: ResourceVector(req) });
    }
    Ok(ApplicationSpec { name: doc.name, dimensions: doc.dimensions, components, constraints: doc.constraints })
}

/// Converts a decimal price to micro units, rejecting values that are not
/// representable to six decimals.
pub fn price_to_micro(price: f64) -> Option<u64> {
    if !price.is_finite() || price < 0.0 {
        return None;
    }
    let scaled = price * 1_000_000.0;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-3 || rounded > u64::MAX as f64 {
        return None;
    }
    Some(rounded as u64)
}

/// Parses an offer document. Dimensions follow the key order of the first offer
/// (alphabetical); use [`OfferCatalog::aligned_to`] to match a spec.
pub fn parse_offers(text: &str, origin: &str) -> Result<OfferCatalog, LoadError> {
    let docs: Vec<OfferDoc> = parse_doc(text, origin)?;
    let dims: Vec<String> = docs.first().map(|d| d.capacity.keys().cloned().collect()).unwrap_or_default();
    let mut offers = Vec::with_capacity(docs.len());
    for (idx, d) in docs.into_iter().enumerate() {
        let base = format!("/{idx}");
        if d.id as usize != idx + 1 {
            return Err(schema(origin, format!("{base}/id"), format!("expected id {} (ids run 1..=O in order)", idx + 1)));
        }
        let keys: Vec<&String> = d.capacity.keys().collect();
        if keys.len() != dims.len() || keys.iter().zip(&dims).any(|(a, b)| *a != b) {
            return Err(schema(origin, format!("{base}/capacity"), format!("dimensions must be {dims:?}")));
        }
        for (k, &v) in &d.capacity {
            if v == 0 {
                return Err(schema(origin, format!("{base}/capacity/{}", escape_pointer(k)), "capacity must be > 0"));
            }
        }
        let price = match (d.price_micro, d.price) {
            (Some(p), None) => p,
            (None, Some(p)) => price_to_micro(p)
                .ok_or_else(|| schema(origin, format!("{base}/price"), "price must be a non-negative decimal with at most 6 places"))?,
            (Some(_), Some(_)) => return Err(schema(origin, base, "give either price or price_micro, not both")),
            (None, None) => return Err(schema(origin, base, "missing price_micro")),
        };
        if price == 0 {
            return Err(schema(origin, format!("{base}/price_micro"), "price must be > 0"));
        }
        offers.push(VmOffer {
            id: OfferId(d.id),
            name: d.name,
            capacity: ResourceVector(d.capacity.values().copied().collect()),
            price,
        });
    }
    OfferCatalog::new(dims, offers).map_err(|e| schema(origin, "/", e.to_string()))
}

pub fn spec_to_json(spec: &ApplicationSpec) -> String {
    let doc = SpecDoc {
        name: spec.name.clone(),
        dimensions: spec.dimensions.clone(),
        components: spec
            .components
            .iter()
            .map(|c| ComponentDoc {
                id: c.id,
                name: c.name.clone(),
                requirements: spec.dimensions.iter().cloned().zip(c.requirements.0.iter().copied()).collect(),
            })
            .collect(),
        constraints: spec.constraints.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("spec serializes")
}

pub fn offers_to_json(catalog: &OfferCatalog) -> String {
    let docs: Vec<OfferDoc> = catalog
        .offers
        .iter()
        .map(|o| OfferDoc {
            id: o.id.0,
            name: o.name.clone(),
            capacity: catalog.dimensions.iter().cloned().zip(o.capacity.0.iter().copied()).collect(),
            price_micro: Some(o.price),
            price: None,
        })
        .collect();
    serde_json::to_string_pretty(&docs).expect("offers serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_price_becomes_micro_units() {
        let cat = parse_offers(r#"[{"id":1,"capacity":{"cpu":64,"memory":999424,"storage":1024},"price":8.403}]"#, "t").unwrap();
        assert_eq!(cat.offers[0].price, 8_403_000);
    }

    #[test]
    fn zero_cpu_is_a_schema_violation_with_pointer() {
        let err = parse_offers(
            r#"[{"id":1,"capacity":{"cpu":1,"mem":1},"price_micro":5},{"id":2,"capacity":{"cpu":0,"mem":1},"price_micro":5}]"#,
            "t",
        )
        .unwrap_err();
        assert_eq!(err.pointer(), Some("/1/capacity/cpu"));
    }

    #[test]
    fn type_errors_carry_pointer() {
        let err = parse_spec(
            r#"{"name":"x","dimensions":["cpu"],"components":[{"id":1,"name":"a","requirements":{"cpu":"two"}}]}"#,
            "t",
        )
        .unwrap_err();
        assert_eq!(err.pointer(), Some("/components/0/requirements/cpu"));
    }

    #[test]
    fn syntax_errors_report_line() {
        let err = parse_spec("{\n  \"name\": \"x\",\n  oops\n}", "t").unwrap_err();
        match err {
            LoadError::Syntax { line, context, .. } => {
                assert_eq!(line, 3);
                assert_eq!(context.trim(), "oops");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_constraint_kind_rejected() {
        let err = parse_spec(
            r#"{"name":"x","dimensions":["cpu"],"components":[{"id":1,"name":"a","requirements":{"cpu":1}}],"constraints":[{"kind":"nope"}]}"#,
            "t",
        )
        .unwrap_err();
        assert!(err.pointer().unwrap().starts_with("/constraints/0"));
    }

    #[test]
    fn price_conversion_edges() {
        assert_eq!(price_to_micro(0.0058), Some(5_800));
        assert_eq!(price_to_micro(-1.0), None);
        assert_eq!(price_to_micro(0.0000001), None);
    }
}
