//! Case-study applications and nested offer catalogs shipped with the crate.
//!
//! The Secure Billing Email fixture has five components. Some published
//! tables list six components for it, but the same tables count 25 assignment
//! variables at 5 machines, which only fits five components.

use crate::io::{parse_offers, parse_spec};
use crate::model::{ApplicationSpec, OfferCatalog};

pub const SECURE_WEB: &str = include_str!("../../../fixtures/secure-web.json");
pub const SECURE_BILLING: &str = include_str!("../../../fixtures/secure-billing.json");
pub const ORYX2: &str = include_str!("../../../fixtures/oryx2.json");
pub const WORDPRESS: &str = include_str!("../../../fixtures/wordpress.json");

pub const OFFERS_20: &str = include_str!("../../../fixtures/offers-20.json");
pub const OFFERS_40: &str = include_str!("../../../fixtures/offers-40.json");
pub const OFFERS_250: &str = include_str!("../../../fixtures/offers-250.json");
pub const OFFERS_500: &str = include_str!("../../../fixtures/offers-500.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseStudy {
    SecureWeb,
    SecureBilling,
    Oryx2,
    /// Minimum number of Wordpress instances.
    Wordpress(u64),
}

impl CaseStudy {
    pub const ALL: [CaseStudy; 4] = [CaseStudy::SecureWeb, CaseStudy::SecureBilling, CaseStudy::Oryx2, CaseStudy::Wordpress(3)];

    pub fn name(&self) -> String {
        match self {
            CaseStudy::SecureWeb => "secure-web".into(),
            CaseStudy::SecureBilling => "secure-billing".into(),
            CaseStudy::Oryx2 => "oryx2".into(),
            CaseStudy::Wordpress(k) => format!("wordpress-{k}"),
        }
    }

    pub fn spec(&self) -> ApplicationSpec {
        let (text, origin) = match self {
            CaseStudy::SecureWeb => (SECURE_WEB, "secure-web.json"),
            CaseStudy::SecureBilling => (SECURE_BILLING, "secure-billing.json"),
            CaseStudy::Oryx2 => (ORYX2, "oryx2.json"),
            CaseStudy::Wordpress(_) => (WORDPRESS, "wordpress.json"),
        };
        let mut spec = parse_spec(text, origin).expect("shipped fixture parses");
        if let CaseStudy::Wordpress(k) = self {
            spec.set_min_instances(crate::model::ComponentId(1), *k);
        }
        spec
    }
}

/// One of the nested catalogs: 20, 40, 250 or 500 offers.
pub fn offers(count: usize) -> Option<OfferCatalog> {
    let text = match count {
        20 => OFFERS_20,
        40 => OFFERS_40,
        250 => OFFERS_250,
        500 => OFFERS_500,
        _ => return None,
    };
    Some(parse_offers(text, &format!("offers-{count}.json")).expect("shipped catalog parses"))
}
