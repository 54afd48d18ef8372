//! Seeded synthetic catalog, query stream and session logs.
//!
//! Every example's clean label is computed by [`crate::rulejudge::judge`]
//! from the parsed query and the product facets, so ground truth can always
//! be re-derived from the stored record.

mod catalog;
mod examples;
mod lexicon;
mod sessions;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rulejudge;
use crate::schema::{Example, Label, Tier};

pub use catalog::{gen_catalog, read_catalog, write_catalog};
pub use examples::{gen_examples, TierMix};
pub use lexicon::{Lexicon, ProductType, ACCESSORY_CONNECTIVE};
pub use sessions::{gen_session_log, read_session_log, write_session_log, SessionLog, UserActivity};

/// Ground-truth structure of one product.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Facets {
    pub brand: String,
    pub product_type: String,
    pub function_class: String,
    pub model: Option<String>,
    pub attributes: BTreeSet<String>,
    pub accessory_of: Option<String>,
}

impl Facets {
    /// A main product with no model or attributes.
    pub fn simple(brand: &str, product_type: &str, function_class: &str) -> Facets {
        Facets {
            brand: brand.to_string(),
            product_type: product_type.to_string(),
            function_class: function_class.to_string(),
            model: None,
            attributes: BTreeSet::new(),
            accessory_of: None,
        }
    }

    /// Product title: `brand type [model] attrs…` for main products and
    /// `brand attrs… type for target` for accessories.
    pub fn title(&self) -> String {
        let mut parts: Vec<&str> = vec![&self.brand];
        match &self.accessory_of {
            Some(target) => {
                parts.extend(self.attributes.iter().map(String::as_str));
                parts.push(&self.product_type);
                parts.push(ACCESSORY_CONNECTIVE);
                parts.push(target);
            }
            None => {
                parts.push(&self.product_type);
                if let Some(m) = &self.model {
                    parts.push(m);
                }
                parts.extend(self.attributes.iter().map(String::as_str));
            }
        }
        parts.join(" ")
    }
}

/// Structured form of a search query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuerySpec {
    pub desired_type: String,
    /// Function class of `desired_type`, resolved from the lexicon.
    pub desired_class: String,
    pub desired_brand: Option<String>,
    pub desired_model: Option<String>,
    pub desired_attributes: BTreeSet<String>,
    pub tier: Tier,
}

impl QuerySpec {
    pub fn modifier_count(&self) -> usize {
        self.desired_brand.is_some() as usize + self.desired_model.is_some() as usize + self.desired_attributes.len()
    }

    pub fn has_modifiers(&self) -> bool {
        self.modifier_count() > 0
    }

    /// Query text: `[brand] type [model] attrs…`. A brand implied by a
    /// product line is left out.
    pub fn text(&self) -> String {
        let lex = Lexicon::standard();
        let implied = lex.product_type(&self.desired_type).and_then(|t| t.line_of);
        let mut parts: Vec<&str> = Vec::new();
        if let Some(b) = &self.desired_brand {
            if implied != Some(b.as_str()) {
                parts.push(b);
            }
        }
        parts.push(&self.desired_type);
        if let Some(m) = &self.desired_model {
            parts.push(m);
        }
        parts.extend(self.desired_attributes.iter().map(String::as_str));
        parts.join(" ")
    }
}

/// Parses the stored query text of an example.
pub fn query_spec(ex: &Example) -> Result<QuerySpec> {
    Lexicon::standard().parse_query(&ex.query, ex.tier)
}

/// The rule-derived label of an example, ignoring any injected noise.
pub fn clean_label(ex: &Example) -> Result<Label> {
    Ok(rulejudge::judge(&query_spec(ex)?, &ex.facets))
}
