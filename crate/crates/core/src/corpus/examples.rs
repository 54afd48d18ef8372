use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Facets, Lexicon, QuerySpec};
use crate::error::{Error, Result};
use crate::rulejudge::{self, ModifierAxis};
use crate::schema::{largest_remainder, Dataset, Example, Tier};

/// Share of examples drawn from each popularity tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierMix {
    pub top: f64,
    pub middle: f64,
    pub long_tail: f64,
}

impl Default for TierMix {
    fn default() -> Self {
        TierMix {
            top: 0.5,
            middle: 0.3,
            long_tail: 0.2,
        }
    }
}

impl TierMix {
    pub fn shares(&self) -> [f64; 3] {
        [self.top, self.middle, self.long_tail]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.shares();
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("tier mix {s:?} must be a distribution")));
        }
        Ok(())
    }
}

// Probability of drawing the paired product from each relation to the
// query's desired type; the remainder is a uniformly random product.
const P_SAME_TYPE: f64 = 0.55;
const P_ACCESSORY: f64 = 0.20;
const P_SAME_CLASS: f64 = 0.20;
// Within same-type draws, chance of insisting on a full modifier match.
const P_FULL_MATCH: f64 = 0.35;
const MODIFIER_COUNT_WEIGHTS: [f64; 5] = [0.30, 0.30, 0.20, 0.12, 0.08];
const P_PERTURB_MODIFIER: f64 = 0.25;

struct Index<'a> {
    catalog: &'a [Facets],
    by_type: HashMap<&'a str, Vec<usize>>,
    by_target: HashMap<&'a str, Vec<usize>>,
    by_class: HashMap<&'a str, Vec<usize>>,
}

impl<'a> Index<'a> {
    fn new(catalog: &'a [Facets]) -> Self {
        let mut by_type: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut by_target: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut by_class: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, f) in catalog.iter().enumerate() {
            by_type.entry(&f.product_type).or_default().push(i);
            by_class.entry(&f.function_class).or_default().push(i);
            if let Some(t) = &f.accessory_of {
                by_target.entry(t).or_default().push(i);
            }
        }
        Index {
            catalog,
            by_type,
            by_target,
            by_class,
        }
    }

    fn pair(&self, q: &QuerySpec, rng: &mut ChaCha8Rng) -> usize {
        let r: f64 = rng.gen();
        let pool: Vec<usize> = if r < P_SAME_TYPE {
            let same = self.by_type.get(q.desired_type.as_str()).cloned().unwrap_or_default();
            if rng.gen_bool(P_FULL_MATCH) {
                let full: Vec<usize> = same
                    .iter()
                    .copied()
                    .filter(|&i| rulejudge::judge_axes(q, &self.catalog[i]).modifier_axis == ModifierAxis::AllMatch)
                    .collect();
                if full.is_empty() {
                    same
                } else {
                    full
                }
            } else {
                same
            }
        } else if r < P_SAME_TYPE + P_ACCESSORY {
            self.by_target.get(q.desired_type.as_str()).cloned().unwrap_or_default()
        } else if r < P_SAME_TYPE + P_ACCESSORY + P_SAME_CLASS {
            self.by_class
                .get(q.desired_class.as_str())
                .map(|v| {
                    v.iter()
                        .copied()
                        .filter(|&i| self.catalog[i].product_type != q.desired_type)
                        .collect()
                })
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        match pool.choose(rng) {
            Some(&i) => i,
            None => rng.gen_range(0..self.catalog.len()),
        }
    }
}

fn sample_modifier_count(rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, w) in MODIFIER_COUNT_WEIGHTS.iter().enumerate() {
        acc += w;
        if r < acc {
            return k;
        }
    }
    MODIFIER_COUNT_WEIGHTS.len() - 1
}

#[derive(Clone, Copy)]
enum Modifier<'a> {
    Brand(&'a str),
    Model(&'a str),
    Attr(&'a str),
}

/// A query template anchored on one product: its type plus a subset of the
/// anchor's modifiers, occasionally with one modifier swapped for another
/// vocabulary entry.
fn template(lex: &Lexicon, anchor: &Facets, rng: &mut ChaCha8Rng) -> QuerySpec {
    let mut available: Vec<Modifier> = vec![Modifier::Brand(&anchor.brand)];
    if let Some(m) = &anchor.model {
        available.push(Modifier::Model(m));
    }
    available.extend(anchor.attributes.iter().map(|a| Modifier::Attr(a)));
    let k = sample_modifier_count(rng).min(available.len());
    let mut chosen: Vec<Modifier> = available.choose_multiple(rng, k).copied().collect();
    if !chosen.is_empty() && rng.gen_bool(P_PERTURB_MODIFIER) {
        let i = rng.gen_range(0..chosen.len());
        chosen[i] = match chosen[i] {
            Modifier::Brand(_) => Modifier::Brand(lex.brands().choose(rng).unwrap()),
            Modifier::Model(_) => Modifier::Model(lex.models().choose(rng).unwrap()),
            Modifier::Attr(_) => Modifier::Attr(lex.attributes().choose(rng).unwrap()),
        };
    }
    let mut q = QuerySpec {
        desired_type: anchor.product_type.clone(),
        desired_class: anchor.function_class.clone(),
        desired_brand: None,
        desired_model: None,
        desired_attributes: BTreeSet::new(),
        tier: Tier::Top,
    };
    for m in chosen {
        match m {
            Modifier::Brand(b) => q.desired_brand = Some(b.to_string()),
            Modifier::Model(m) => q.desired_model = Some(m.to_string()),
            Modifier::Attr(a) => {
                q.desired_attributes.insert(a.to_string());
            }
        }
    }
    q
}

/// Distinct query templates ranked by frequency. Fewer modifiers means a
/// more frequent query; the top 20% of ranks are Top, the next 30% Middle and
/// the rest LongTail.
fn template_pool(catalog: &[Facets], n_templates: usize, rng: &mut ChaCha8Rng) -> Vec<QuerySpec> {
    let lex = Lexicon::standard();
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    let mut attempts = 0;
    while pool.len() < n_templates && attempts < n_templates * 50 {
        attempts += 1;
        let anchor = catalog.choose(rng).unwrap();
        let q = template(lex, anchor, rng);
        if seen.insert(q.text()) {
            pool.push(q);
        }
    }
    // stable sort keeps generation order within a modifier count
    pool.sort_by_key(QuerySpec::modifier_count);
    let n = pool.len();
    for (rank, q) in pool.iter_mut().enumerate() {
        q.tier = if rank * 5 < n {
            Tier::Top
        } else if rank * 2 < n {
            Tier::Middle
        } else {
            Tier::LongTail
        };
    }
    pool
}

/// Generates `n` labelled query-product pairs over `catalog`.
///
/// The tier histogram follows `tier_mix` exactly (largest remainder). Each
/// example's label is the rule judgment; independently with probability
/// `noise_rate` it is then replaced by [`crate::schema::Label::confusable_neighbor`]
/// and the example is flagged `noisy`.
pub fn gen_examples(catalog: &[Facets], n: usize, tier_mix: &TierMix, noise_rate: f64, seed: u64) -> Result<Dataset> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("empty catalog".into()));
    }
    if !(0.0..=0.5).contains(&noise_rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate {noise_rate} outside [0, 0.5]"
        )));
    }
    tier_mix.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = template_pool(catalog, (n / 25).clamp(12, 800), &mut rng);
    let by_tier: Vec<Vec<&QuerySpec>> = Tier::ALL
        .iter()
        .map(|t| pool.iter().filter(|q| q.tier == *t).collect())
        .collect();
    let counts = largest_remainder(&tier_mix.shares(), n);
    let index = Index::new(catalog);

    let mut drawn = Vec::with_capacity(n);
    for (tier, count) in Tier::ALL.iter().zip(counts) {
        let templates = &by_tier[*tier as usize];
        if count > 0 && templates.is_empty() {
            return Err(Error::EmptyStratum(format!("{tier:?}")));
        }
        for _ in 0..count {
            let q = *templates.choose(&mut rng).unwrap();
            let p = index.pair(q, &mut rng);
            drawn.push((q, p));
        }
    }
    drawn.shuffle(&mut rng);

    let examples = drawn
        .into_iter()
        .enumerate()
        .map(|(i, (q, p))| {
            let facets = catalog[p].clone();
            let clean = rulejudge::judge(q, &facets);
            let noisy = rng.gen_bool(noise_rate);
            Example {
                id: format!("s{seed}-{i:06}"),
                query: q.text(),
                title: facets.title(),
                label: if noisy { clean.confusable_neighbor() } else { clean },
                facets,
                tier: q.tier,
                noisy,
            }
        })
        .collect();
    Ok(Dataset::new(examples, seed))
}
