//! Label algebra, example records, dataset files and sampling utilities.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Facets;
use crate::error::{Error, Result};

/// Five-tier relevance grade, ordered by rank (Exact = 4 … Irrelevant = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Irrelevant,
    Trivial,
    Marginal,
    Significant,
    Exact,
}

impl Label {
    /// Display order, most relevant first.
    pub const ALL: [Label; 5] = [
        Label::Exact,
        Label::Significant,
        Label::Marginal,
        Label::Trivial,
        Label::Irrelevant,
    ];

    pub fn rank(self) -> u8 {
        match self {
            Label::Irrelevant => 0,
            Label::Trivial => 1,
            Label::Marginal => 2,
            Label::Significant => 3,
            Label::Exact => 4,
        }
    }

    pub fn from_rank(rank: u8) -> Option<Label> {
        Some(match rank {
            0 => Label::Irrelevant,
            1 => Label::Trivial,
            2 => Label::Marginal,
            3 => Label::Significant,
            4 => Label::Exact,
            _ => return None,
        })
    }

    /// Dense index for per-class arrays; equal to the rank.
    pub fn index(self) -> usize {
        self.rank() as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Exact => "Exact",
            Label::Significant => "Significant",
            Label::Marginal => "Marginal",
            Label::Trivial => "Trivial",
            Label::Irrelevant => "Irrelevant",
        }
    }

    /// The ordinally adjacent class an annotator is most likely to confuse
    /// this one with. Where two neighbours exist the step goes toward
    /// Significant; Significant itself steps down to Marginal.
    pub fn confusable_neighbor(self) -> Label {
        match self {
            Label::Exact => Label::Significant,
            Label::Significant => Label::Marginal,
            Label::Marginal => Label::Significant,
            Label::Trivial => Label::Marginal,
            Label::Irrelevant => Label::Trivial,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryLabel {
    Relevant,
    NotRelevant,
}

/// Lowest label still counted as Relevant in the binary view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryBoundary {
    pub min_relevant: Label,
}

impl Default for BinaryBoundary {
    fn default() -> Self {
        BinaryBoundary {
            min_relevant: Label::Significant,
        }
    }
}

impl BinaryBoundary {
    pub fn collapse(self, label: Label) -> BinaryLabel {
        if label >= self.min_relevant {
            BinaryLabel::Relevant
        } else {
            BinaryLabel::NotRelevant
        }
    }
}

/// Exact and Significant are Relevant, everything else is not.
pub fn collapse_to_binary(label: Label) -> BinaryLabel {
    BinaryBoundary::default().collapse(label)
}

/// Query popularity tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Top,
    Middle,
    LongTail,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Top, Tier::Middle, Tier::LongTail];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub query: String,
    pub title: String,
    pub label: Label,
    pub facets: Facets,
    pub tier: Tier,
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub seed: u64,
    /// Hash of the configuration that produced the file; empty when unknown.
    pub provenance: String,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, seed: u64) -> Self {
        Dataset {
            examples,
            seed,
            provenance: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.id.as_str()).collect()
    }

    /// Derived dataset with the same provenance.
    pub fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            examples,
            seed: self.seed,
            provenance: self.provenance.clone(),
        }
    }

    /// Counts indexed by [`Label::index`].
    pub fn label_histogram(&self) -> [usize; 5] {
        let mut h = [0; 5];
        for e in &self.examples {
            h[e.label.index()] += 1;
        }
        h
    }

    pub fn tier_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for e in &self.examples {
            h[e.tier as usize] += 1;
        }
        h
    }

    pub fn noisy_count(&self) -> usize {
        self.examples.iter().filter(|e| e.noisy).count()
    }

    /// Uniform sample without replacement, returned in shuffled order.
    pub fn uniform_sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {n} examples from a dataset of {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        Ok(self.with_examples(idx.into_iter().map(|i| self.examples[i].clone()).collect()))
    }

    fn check_invariants(&self) -> std::result::Result<(), (usize, String)> {
        let mut seen = HashSet::new();
        for (i, e) in self.examples.iter().enumerate() {
            if e.query.trim().is_empty() || e.title.trim().is_empty() {
                return Err((i, format!("example {} has an empty query or title", e.id)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err((i, format!("duplicate id {}", e.id)));
            }
        }
        Ok(())
    }
}

const HEADER_PREFIX: &str = "# dataset";

/// Reads a line-delimited dataset file. An optional first line of the form
/// `# dataset seed=<n> provenance=<hash>` carries provenance.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut d = Dataset::default();
    let mut line_numbers = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(HEADER_PREFIX) {
            parse_header(rest, &mut d).map_err(|m| Error::parse(path, lineno, m))?;
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        d.examples.push(ex);
        line_numbers.push(lineno);
    }
    d.check_invariants()
        .map_err(|(i, m)| Error::parse(path, line_numbers[i], m))?;
    Ok(d)
}

fn parse_header(rest: &str, d: &mut Dataset) -> std::result::Result<(), String> {
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("seed", v)) => d.seed = v.parse().map_err(|_| format!("bad seed {v:?}"))?,
            Some(("provenance", v)) => d.provenance = v.to_string(),
            _ => return Err(format!("unrecognised header field {field:?}")),
        }
    }
    Ok(())
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Err((i, m)) = d.check_invariants() {
        return Err(Error::InvalidArgument(format!("record {i}: {m}")));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        write!(w, "{HEADER_PREFIX} seed={}", d.seed)?;
        if !d.provenance.is_empty() {
            write!(w, " provenance={}", d.provenance)?;
        }
        writeln!(w)?;
        for e in &d.examples {
            serde_json::to_writer(&mut *w, e)?;
            writeln!(w)?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Splits `n` into integer parts proportional to `shares` so the parts sum
/// to exactly `n`: every part gets the floor of its quota and the leftover
/// units go to the largest fractional remainders (earlier entries win ties).
pub fn largest_remainder(shares: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor().max(0.0) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn validate_shares(shares: &[f64]) -> Result<()> {
    if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidArgument("proportions must be non-negative".into()));
    }
    let total: f64 = shares.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "proportions sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Draws `count` members from a stratum. Members are taken without
/// replacement; when the request exceeds the stratum the draw continues with
/// a fresh permutation and repeated ids receive a `#r<pass>` suffix.
fn draw_stratum(members: &[&Example], count: usize, rng: &mut ChaCha8Rng, out: &mut Vec<Example>) {
    let mut taken = 0;
    let mut pass = 0;
    while taken < count {
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(rng);
        for &i in order.iter().take(count - taken) {
            let mut e = members[i].clone();
            if pass > 0 {
                e.id = format!("{}#r{pass}", e.id);
            }
            out.push(e);
        }
        taken += order.len().min(count - taken);
        pass += 1;
    }
}

fn stratified_by<K: Ord + Copy + fmt::Debug>(
    d: &Dataset,
    proportions: &BTreeMap<K, f64>,
    n: usize,
    seed: u64,
    key: impl Fn(&Example) -> K,
) -> Result<Dataset> {
    let shares: Vec<f64> = proportions.values().copied().collect();
    validate_shares(&shares)?;
    let counts = largest_remainder(&shares, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for ((k, share), count) in proportions.iter().zip(counts) {
        let members: Vec<&Example> = d.examples.iter().filter(|e| key(e) == *k).collect();
        if members.is_empty() {
            if *share > 0.0 {
                return Err(Error::EmptyStratum(format!("{k:?}")));
            }
            continue;
        }
        draw_stratum(&members, count, &mut rng, &mut out);
    }
    out.shuffle(&mut rng);
    Ok(d.with_examples(out))
}

/// Per-label stratified sample with largest-remainder stratum sizes.
pub fn stratified_sample(d: &Dataset, proportions: &BTreeMap<Label, f64>, n: usize, seed: u64) -> Result<Dataset> {
    stratified_by(d, proportions, n, seed, |e| e.label)
}

/// Per-tier stratified sample.
pub fn tier_stratified_sample(d: &Dataset, proportions: &BTreeMap<Tier, f64>, n: usize, seed: u64) -> Result<Dataset> {
    stratified_by(d, proportions, n, seed, |e| e.tier)
}
