use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Facets, Lexicon, ProductType};
use crate::error::{Error, Result};
use crate::jsonl;

/// Generates `n_products` products.
///
/// The catalog is built from groups of four: two main products of one type
/// under different brands, and two accessories of a single accessory type
/// under different brands that attach to it. Groups are emitted for main
/// types in a seeded order while they fit; leftover slots are filled with
/// further products of types already present. For `n_products >= 50` every
/// type present therefore has at least two brands and every main type has
/// at least one accessory.
pub fn gen_catalog(n_products: usize, seed: u64) -> Result<Vec<Facets>> {
    if n_products == 0 {
        return Err(Error::InvalidArgument("catalog needs at least one product".into()));
    }
    let lex = Lexicon::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mains: Vec<&ProductType> = lex.main_types().collect();
    mains.shuffle(&mut rng);

    let mut out = Vec::with_capacity(n_products);
    let mut covered: Vec<&ProductType> = Vec::new();
    let mut accessory_types: Vec<(&ProductType, &str)> = Vec::new();
    for t in &mains {
        if out.len() + 4 > n_products {
            break;
        }
        let [b1, b2] = two_brands(lex, &mut rng);
        out.push(main_product(lex, t, b1, &mut rng));
        out.push(main_product(lex, t, b2, &mut rng));
        let a = lex
            .accessories_for(t.name)
            .choose(&mut rng)
            .expect("lexicon gives every main type an accessory");
        let [c1, c2] = two_brands(lex, &mut rng);
        out.push(accessory_product(lex, a, t.name, c1, &mut rng));
        out.push(accessory_product(lex, a, t.name, c2, &mut rng));
        covered.push(t);
        accessory_types.push((a, t.name));
    }

    while out.len() < n_products {
        if covered.is_empty() {
            let t = mains[out.len() % mains.len()];
            let b = lex.brands().choose(&mut rng).copied().unwrap();
            out.push(main_product(lex, t, b, &mut rng));
            continue;
        }
        let b = lex.brands().choose(&mut rng).copied().unwrap();
        if rng.gen_bool(0.7) {
            let t = covered.choose(&mut rng).unwrap();
            out.push(main_product(lex, t, b, &mut rng));
        } else {
            let (a, target) = accessory_types.choose(&mut rng).unwrap();
            out.push(accessory_product(lex, a, target, b, &mut rng));
        }
    }
    Ok(out)
}

fn two_brands<'a>(lex: &'a Lexicon, rng: &mut ChaCha8Rng) -> [&'a str; 2] {
    let picked: Vec<&&str> = lex.brands().choose_multiple(rng, 2).collect();
    [picked[0], picked[1]]
}

fn attributes(lex: &Lexicon, rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    let k = rng.gen_range(1..=3);
    lex.attributes()
        .choose_multiple(rng, k)
        .map(|a| a.to_string())
        .collect()
}

fn main_product(lex: &Lexicon, t: &ProductType, brand: &str, rng: &mut ChaCha8Rng) -> Facets {
    let model = if rng.gen_bool(0.8) {
        lex.models().choose(rng).map(|m| m.to_string())
    } else {
        None
    };
    Facets {
        brand: brand.to_string(),
        product_type: t.name.to_string(),
        function_class: t.function_class.to_string(),
        model,
        attributes: attributes(lex, rng),
        accessory_of: None,
    }
}

fn accessory_product(lex: &Lexicon, t: &ProductType, target: &str, brand: &str, rng: &mut ChaCha8Rng) -> Facets {
    Facets {
        brand: brand.to_string(),
        product_type: t.name.to_string(),
        function_class: t.function_class.to_string(),
        model: None,
        attributes: attributes(lex, rng),
        accessory_of: Some(target.to_string()),
    }
}

/// One product per line, as JSON facets, after a `# catalog` header line
/// carrying `provenance`.
pub fn write_catalog(catalog: &[Facets], provenance: &str, path: impl AsRef<Path>) -> Result<()> {
    jsonl::write(path.as_ref(), Some(format!("catalog {provenance}").trim_end()), catalog)
}

pub fn read_catalog(path: impl AsRef<Path>) -> Result<Vec<Facets>> {
    Ok(jsonl::read(path.as_ref())?.1)
}
