//! Fixed product vocabulary of the synthetic catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::schema::Tier;

use super::QuerySpec;

#[derive(Debug, Clone)]
pub struct ProductType {
    pub name: &'static str,
    pub function_class: &'static str,
    /// Main types this accessory type attaches to; empty for main types.
    pub accessory_for: &'static [&'static str],
    /// Brand implied by the type name itself ("iphone" implies apple).
    /// Brand-bound product lines are parsed in queries but never sampled
    /// into a generated catalog.
    pub line_of: Option<&'static str>,
}

impl ProductType {
    pub fn is_accessory(&self) -> bool {
        !self.accessory_for.is_empty()
    }

    pub fn is_line(&self) -> bool {
        self.line_of.is_some()
    }
}

const fn main(name: &'static str, class: &'static str) -> ProductType {
    ProductType {
        name,
        function_class: class,
        accessory_for: &[],
        line_of: None,
    }
}

const fn acc(name: &'static str, class: &'static str, of: &'static [&'static str]) -> ProductType {
    ProductType {
        name,
        function_class: class,
        accessory_for: of,
        line_of: None,
    }
}

const fn line(name: &'static str, class: &'static str, brand: &'static str) -> ProductType {
    ProductType {
        name,
        function_class: class,
        accessory_for: &[],
        line_of: Some(brand),
    }
}

static TYPES: &[ProductType] = &[
    // mobile
    main("phone", "mobile"),
    main("tablet", "mobile"),
    main("laptop", "mobile"),
    main("smartwatch", "mobile"),
    main("ereader", "mobile"),
    main("camera", "mobile"),
    main("router", "mobile"),
    main("monitor", "mobile"),
    acc(
        "charger",
        "mobile",
        &["phone", "tablet", "laptop", "smartwatch", "ereader", "iphone", "galaxy"],
    ),
    acc("case", "mobile", &["phone", "tablet", "ereader", "iphone", "galaxy"]),
    acc("cable", "mobile", &["phone", "tablet", "laptop", "monitor", "router"]),
    acc("strap", "mobile", &["smartwatch"]),
    acc("stylus", "mobile", &["tablet"]),
    acc("lens", "mobile", &["camera"]),
    // audio
    main("headphones", "audio"),
    main("earbuds", "audio"),
    main("speaker", "audio"),
    main("soundbar", "audio"),
    main("microphone", "audio"),
    main("turntable", "audio"),
    main("amplifier", "audio"),
    acc("eartips", "audio", &["earbuds"]),
    acc("cushions", "audio", &["headphones"]),
    acc("mount", "audio", &["speaker", "soundbar", "amplifier"]),
    acc("needle", "audio", &["turntable"]),
    acc("popfilter", "audio", &["microphone"]),
    // kitchen
    main("kettle", "kitchen"),
    main("blender", "kitchen"),
    main("toaster", "kitchen"),
    main("microwave", "kitchen"),
    main("fridge", "kitchen"),
    main("coffeemaker", "kitchen"),
    main("airfryer", "kitchen"),
    main("ricecooker", "kitchen"),
    acc("filter", "kitchen", &["coffeemaker", "fridge", "kettle"]),
    acc("jar", "kitchen", &["blender"]),
    acc("basket", "kitchen", &["airfryer"]),
    acc("tray", "kitchen", &["microwave", "toaster"]),
    acc("capsule", "kitchen", &["coffeemaker"]),
    acc("pot", "kitchen", &["ricecooker"]),
    // brand-bound product lines
    line("iphone", "mobile", "apple"),
    line("galaxy", "mobile", "samsung"),
];

static BRANDS: &[&str] = &[
    "apple", "samsung", "huawei", "xiaomi", "sony", "lenovo", "anker", "philips", "bose", "jbl", "midea", "haier",
];

static ATTRIBUTES: &[&str] = &[
    "black",
    "white",
    "red",
    "blue",
    "silver",
    "gold",
    "mini",
    "large",
    "compact",
    "portable",
    "wireless",
    "waterproof",
    "5g",
    "128gb",
    "256gb",
    "fast",
    "quiet",
    "smart",
    "steel",
    "glass",
    "usb",
    "bluetooth",
    "anc",
    "hd",
    "4k",
    "oled",
    "digital",
    "foldable",
    "rechargeable",
    "20w",
];

static MODELS: &[&str] = &[
    "x1", "x2", "x3", "x5", "x7", "a10", "a20", "a50", "s9", "s10", "s24", "m1", "m2", "m3", "pro1", "pro2", "v8",
    "v9", "z3", "z5", "k40", "k50", "15", "14", "13",
];

/// Connective that marks an accessory title ("... charger for phone").
pub const ACCESSORY_CONNECTIVE: &str = "for";

#[derive(Debug)]
pub struct Lexicon {
    types: BTreeMap<&'static str, ProductType>,
    brands: BTreeSet<&'static str>,
    attributes: BTreeSet<&'static str>,
    models: BTreeSet<&'static str>,
}

impl Lexicon {
    /// The process-wide vocabulary: 40 catalog product types in 3 function
    /// classes, 12 brands, 30 attributes, plus two brand-bound lines.
    pub fn standard() -> &'static Lexicon {
        static LEX: OnceLock<Lexicon> = OnceLock::new();
        LEX.get_or_init(|| Lexicon {
            types: TYPES.iter().map(|t| (t.name, t.clone())).collect(),
            brands: BRANDS.iter().copied().collect(),
            attributes: ATTRIBUTES.iter().copied().collect(),
            models: MODELS.iter().copied().collect(),
        })
    }

    pub fn product_type(&self, name: &str) -> Option<&ProductType> {
        self.types.get(name)
    }

    /// Types the catalog generator may sample, in declaration order.
    pub fn catalog_types(&self) -> impl Iterator<Item = &ProductType> {
        TYPES.iter().filter(|t| !t.is_line())
    }

    pub fn main_types(&self) -> impl Iterator<Item = &ProductType> {
        self.catalog_types().filter(|t| !t.is_accessory())
    }

    /// Accessory types that attach to `main`.
    pub fn accessories_for<'a>(&'a self, main: &'a str) -> impl Iterator<Item = &'a ProductType> {
        self.catalog_types().filter(move |t| t.accessory_for.contains(&main))
    }

    pub fn function_classes(&self) -> BTreeSet<&'static str> {
        TYPES.iter().map(|t| t.function_class).collect()
    }

    pub fn brands(&self) -> &[&'static str] {
        BRANDS
    }

    pub fn attributes(&self) -> &[&'static str] {
        ATTRIBUTES
    }

    pub fn models(&self) -> &[&'static str] {
        MODELS
    }

    pub fn is_brand(&self, tok: &str) -> bool {
        self.brands.contains(tok)
    }

    pub fn is_attribute(&self, tok: &str) -> bool {
        self.attributes.contains(tok)
    }

    pub fn is_model(&self, tok: &str) -> bool {
        self.models.contains(tok)
    }

    /// Parses a rendered query back into its structure.
    ///
    /// Every whitespace-separated token must be a product type, brand,
    /// attribute or model; exactly one product type is required. A
    /// brand-bound line supplies its brand unless the query names one.
    pub fn parse_query(&self, text: &str, tier: Tier) -> Result<QuerySpec> {
        let mut desired_type: Option<&ProductType> = None;
        let mut brand = None;
        let mut model = None;
        let mut attrs = BTreeSet::new();
        for tok in text.split_whitespace().map(str::to_lowercase) {
            if let Some(t) = self.types.get(tok.as_str()) {
                if desired_type.replace(t).is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "query {text:?} names two product types"
                    )));
                }
            } else if self.is_brand(&tok) {
                brand = Some(tok);
            } else if self.is_attribute(&tok) {
                attrs.insert(tok);
            } else if self.is_model(&tok) {
                model = Some(tok);
            } else {
                return Err(Error::InvalidArgument(format!(
                    "query {text:?} has unknown token {tok:?}"
                )));
            }
        }
        let t = desired_type.ok_or_else(|| Error::InvalidArgument(format!("query {text:?} names no product type")))?;
        let brand = brand.or_else(|| t.line_of.map(str::to_string));
        Ok(QuerySpec {
            desired_type: t.name.to_string(),
            desired_class: t.function_class.to_string(),
            desired_brand: brand,
            desired_model: model,
            desired_attributes: attrs,
            tier,
        })
    }
}
