//! Two-axis relevance rule: product relevance and modifier relevance,
//! combined by a fixed table into the five-tier grade.

use serde::{Deserialize, Serialize};

use crate::corpus::{Facets, QuerySpec};
use crate::schema::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProductAxis {
    TypeMatch,
    FunctionMatch,
    AccessoryMatch,
    Mismatch,
}

impl ProductAxis {
    /// Best to worst.
    pub const ALL: [ProductAxis; 4] = [
        ProductAxis::TypeMatch,
        ProductAxis::FunctionMatch,
        ProductAxis::AccessoryMatch,
        ProductAxis::Mismatch,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModifierAxis {
    AllMatch,
    PartialMatch,
    Mismatch,
    NoModifiers,
}

impl ModifierAxis {
    pub const ALL: [ModifierAxis; 4] = [
        ModifierAxis::AllMatch,
        ModifierAxis::PartialMatch,
        ModifierAxis::Mismatch,
        ModifierAxis::NoModifiers,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisVerdict {
    pub product_axis: ProductAxis,
    pub modifier_axis: ModifierAxis,
}

pub fn product_axis(q: &QuerySpec, p: &Facets) -> ProductAxis {
    if q.desired_type == p.product_type {
        ProductAxis::TypeMatch
    } else if p.accessory_of.as_deref() == Some(q.desired_type.as_str()) {
        // An accessory for the wanted type shares its function class, so
        // this check has to come before the class comparison.
        ProductAxis::AccessoryMatch
    } else if q.desired_class == p.function_class {
        ProductAxis::FunctionMatch
    } else {
        ProductAxis::Mismatch
    }
}

pub fn brand_contradicts(q: &QuerySpec, p: &Facets) -> bool {
    q.desired_brand.as_ref().is_some_and(|b| *b != p.brand)
}

/// A stated model contradicts only a product that names a different one.
pub fn model_contradicts(q: &QuerySpec, p: &Facets) -> bool {
    matches!((&q.desired_model, &p.model), (Some(want), Some(have)) if want != have)
}

pub fn modifier_axis(q: &QuerySpec, p: &Facets) -> ModifierAxis {
    if !q.has_modifiers() {
        return ModifierAxis::NoModifiers;
    }
    if brand_contradicts(q, p) || model_contradicts(q, p) {
        return ModifierAxis::Mismatch;
    }
    let model_ok = q.desired_model.is_none() || q.desired_model == p.model;
    let attrs_ok = q.desired_attributes.is_subset(&p.attributes);
    if model_ok && attrs_ok {
        ModifierAxis::AllMatch
    } else {
        ModifierAxis::PartialMatch
    }
}

pub fn judge_axes(q: &QuerySpec, p: &Facets) -> AxisVerdict {
    AxisVerdict {
        product_axis: product_axis(q, p),
        modifier_axis: modifier_axis(q, p),
    }
}

/// The 4×4 → 5 decision table.
pub fn decide(v: AxisVerdict) -> Label {
    use ModifierAxis as M;
    use ProductAxis as P;
    match (v.product_axis, v.modifier_axis) {
        (P::TypeMatch, M::AllMatch) => Label::Exact,
        (P::TypeMatch, M::NoModifiers | M::PartialMatch) => Label::Significant,
        (P::TypeMatch, M::Mismatch) => Label::Marginal,
        (P::FunctionMatch, M::Mismatch) => Label::Trivial,
        (P::FunctionMatch, _) => Label::Marginal,
        (P::AccessoryMatch, _) => Label::Trivial,
        (P::Mismatch, _) => Label::Irrelevant,
    }
}

pub fn judge(q: &QuerySpec, p: &Facets) -> Label {
    decide(judge_axes(q, p))
}

pub const RULE_VERSION: &str = "relevance-rule/1";

const RULE_TEXT: &str = "\
Relevance rule relevance-rule/1.
Judge a query and a product on two axes.
Product relevance: TypeMatch if the product is the product type the query asks for; \
AccessoryMatch if the product is an accessory for that type; \
FunctionMatch if it is a different type in the same function class; \
otherwise Mismatch.
Modifier relevance covers brand, model and attributes stated in the query: \
NoModifiers if the query states none; Mismatch if the stated brand or model \
contradicts the product; AllMatch if every stated modifier is satisfied; \
otherwise PartialMatch.
Decision: TypeMatch with AllMatch is Exact. TypeMatch with NoModifiers or \
PartialMatch is Significant. TypeMatch with Mismatch is Marginal. \
FunctionMatch with Mismatch is Trivial; FunctionMatch otherwise is Marginal. \
AccessoryMatch is Trivial. Product Mismatch is Irrelevant.
";

/// Fixed English rendering of the decision table.
pub fn rule_text() -> &'static str {
    RULE_TEXT
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::corpus::Lexicon;
    use crate::schema::Tier;

    fn q(text: &str) -> QuerySpec {
        Lexicon::standard().parse_query(text, Tier::Top).unwrap()
    }

    fn samsung_s24() -> Facets {
        let mut p = Facets::simple("samsung", "phone", "mobile");
        p.model = Some("s24".into());
        p
    }

    fn iphone_charger() -> Facets {
        let mut p = Facets::simple("apple", "charger", "mobile");
        p.accessory_of = Some("iphone".into());
        p.attributes = ["20w", "usb", "fast"].iter().map(|s| s.to_string()).collect();
        p
    }

    #[test]
    fn samsung_phone_for_iphone_query() {
        let v = judge_axes(&q("iphone 15"), &samsung_s24());
        assert_eq!(v.product_axis, ProductAxis::FunctionMatch);
        assert_eq!(v.modifier_axis, ModifierAxis::Mismatch);
    }

    #[test]
    fn iphone_charger_is_trivial() {
        let v = judge_axes(&q("iphone"), &iphone_charger());
        assert_eq!(v.product_axis, ProductAxis::AccessoryMatch);
        assert_eq!(v.modifier_axis, ModifierAxis::AllMatch);
        assert_eq!(judge(&q("iphone"), &iphone_charger()), Label::Trivial);
    }

    #[test]
    fn bare_type_query() {
        let v = judge_axes(&q("kettle"), &Facets::simple("midea", "kettle", "kitchen"));
        assert_eq!(v.product_axis, ProductAxis::TypeMatch);
        assert_eq!(v.modifier_axis, ModifierAxis::NoModifiers);
        assert_eq!(decide(v), Label::Significant);
    }

    #[test]
    fn modifier_cases() {
        let mut p = Facets::simple("sony", "headphones", "audio");
        p.model = Some("x5".into());
        p.attributes = ["black", "anc"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            modifier_axis(&q("sony headphones x5 black"), &p),
            ModifierAxis::AllMatch
        );
        assert_eq!(modifier_axis(&q("sony headphones red"), &p), ModifierAxis::PartialMatch);
        assert_eq!(modifier_axis(&q("bose headphones black"), &p), ModifierAxis::Mismatch);
        assert_eq!(modifier_axis(&q("headphones x1"), &p), ModifierAxis::Mismatch);
        p.model = None;
        // a product without a model cannot contradict one, nor satisfy it
        assert_eq!(modifier_axis(&q("headphones x1"), &p), ModifierAxis::PartialMatch);
    }

    #[test]
    fn table_top_row() {
        let v = AxisVerdict {
            product_axis: ProductAxis::TypeMatch,
            modifier_axis: ModifierAxis::AllMatch,
        };
        assert_eq!(decide(v), Label::Exact);
    }

    #[test]
    fn cross_class_is_irrelevant() {
        assert_eq!(
            judge(&q("phone"), &Facets::simple("midea", "kettle", "kitchen")),
            Label::Irrelevant
        );
    }

    #[test]
    fn every_label_reachable_and_product_axis_monotone() {
        let mut reached = BTreeSet::new();
        for m in ModifierAxis::ALL {
            let mut prev = u8::MAX;
            for p in ProductAxis::ALL {
                let l = decide(AxisVerdict {
                    product_axis: p,
                    modifier_axis: m,
                });
                assert!(l.rank() <= prev, "{p:?}/{m:?}");
                prev = l.rank();
                reached.insert(l);
            }
        }
        assert_eq!(reached.len(), 5);
    }

    #[test]
    fn rule_text_is_fixed_and_bounded() {
        assert_eq!(rule_text().as_bytes(), rule_text().as_bytes());
        assert!(rule_text().len() < 2000);
        assert!(rule_text().contains("Product relevance"));
        assert!(rule_text().contains("Modifier relevance"));
        assert!(rule_text().contains(RULE_VERSION));
    }
}
