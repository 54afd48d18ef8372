//! Output-side vocabulary: end-of-sequence, the five label tokens and the
//! closed set of reasoning template tokens.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rulejudge::{ModifierAxis, ProductAxis};
use crate::schema::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CotToken {
    // per-dimension verdicts
    TypeMatch,
    TypeFunction,
    TypeAccessory,
    TypeMismatch,
    BrandMatch,
    BrandMismatch,
    ModelMatch,
    ModelMismatch,
    ModelUnknown,
    AttrMatch,
    AttrPartial,
    AttrMismatch,
    // rule trace
    Product(ProductAxis),
    Modifier(ModifierAxis),
    Decide(Label),
    // reflection on a recorded wrong decision
    WrongWas(Label),
}

impl CotToken {
    pub fn all() -> Vec<CotToken> {
        use CotToken::*;
        let mut v = vec![
            TypeMatch,
            TypeFunction,
            TypeAccessory,
            TypeMismatch,
            BrandMatch,
            BrandMismatch,
            ModelMatch,
            ModelMismatch,
            ModelUnknown,
            AttrMatch,
            AttrPartial,
            AttrMismatch,
        ];
        v.extend(ProductAxis::ALL.map(Product));
        v.extend(ModifierAxis::ALL.map(Modifier));
        v.extend(Label::ALL.map(Decide));
        v.extend(Label::ALL.map(WrongWas));
        v
    }

    fn name(self) -> String {
        use CotToken::*;
        let s = match self {
            TypeMatch => "TYPE_MATCH",
            TypeFunction => "TYPE_FUNCTION",
            TypeAccessory => "TYPE_ACCESSORY",
            TypeMismatch => "TYPE_MISMATCH",
            BrandMatch => "BRAND_MATCH",
            BrandMismatch => "BRAND_MISMATCH",
            ModelMatch => "MODEL_MATCH",
            ModelMismatch => "MODEL_MISMATCH",
            ModelUnknown => "MODEL_UNKNOWN",
            AttrMatch => "ATTR_MATCH",
            AttrPartial => "ATTR_PARTIAL",
            AttrMismatch => "ATTR_MISMATCH",
            Product(p) => {
                return match p {
                    ProductAxis::TypeMatch => "PRODUCT_TYPE_MATCH",
                    ProductAxis::FunctionMatch => "PRODUCT_FUNCTION_MATCH",
                    ProductAxis::AccessoryMatch => "PRODUCT_ACCESSORY_MATCH",
                    ProductAxis::Mismatch => "PRODUCT_MISMATCH",
                }
                .to_string()
            }
            Modifier(m) => {
                return match m {
                    ModifierAxis::AllMatch => "MODIFIER_ALL_MATCH",
                    ModifierAxis::PartialMatch => "MODIFIER_PARTIAL_MATCH",
                    ModifierAxis::Mismatch => "MODIFIER_MISMATCH",
                    ModifierAxis::NoModifiers => "MODIFIER_NONE",
                }
                .to_string()
            }
            Decide(l) => return format!("DECIDE_{}", l.as_str().to_uppercase()),
            WrongWas(l) => return format!("WRONG_WAS_{}", l.as_str().to_uppercase()),
        };
        s.to_string()
    }
}

/// One entry of the output vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutToken {
    Eos,
    Label(Label),
    Cot(CotToken),
}

impl OutToken {
    /// EOS, the five labels, then every template token. Every output
    /// vocabulary starts with the same six entries.
    pub fn standard() -> Vec<OutToken> {
        let mut v = Self::minimal();
        v.extend(CotToken::all().into_iter().map(OutToken::Cot));
        v
    }

    /// EOS and the five labels only.
    pub fn minimal() -> Vec<OutToken> {
        let mut v = vec![OutToken::Eos];
        v.extend(Label::ALL.map(OutToken::Label));
        v
    }
}

impl fmt::Display for OutToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutToken::Eos => f.write_str("<eos>"),
            OutToken::Label(l) => write!(f, "LABEL_{}", l.as_str().to_uppercase()),
            OutToken::Cot(c) => f.write_str(&c.name()),
        }
    }
}

impl FromStr for OutToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutToken::standard()
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| format!("unknown output token {s:?}"))
    }
}

impl Serialize for OutToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OutToken {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
