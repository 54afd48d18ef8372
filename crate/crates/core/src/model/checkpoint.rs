use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use super::vocab::OutToken;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub input_vocab: usize,
    pub output_vocab: usize,
    /// Maximum output length in tokens, end-of-sequence included.
    pub max_len: usize,
}

/// Offsets of each parameter block inside the flat vector.
///
/// Blocks, in order: input embeddings (`input_vocab × embed`), output-token
/// embeddings with one extra start row (`(output_vocab + 1) × embed`), the
/// hidden layer (`hidden × 2·embed`) and its bias, the output projection
/// (`output_vocab × hidden`) and its bias. All matrices are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub e_in: usize,
    pub e_out: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub len: usize,
}

impl Dims {
    pub fn layout(&self) -> Layout {
        let d = self.embed;
        let e_in = 0;
        let e_out = e_in + self.input_vocab * d;
        let w1 = e_out + (self.output_vocab + 1) * d;
        let b1 = w1 + self.hidden * 2 * d;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output_vocab * self.hidden;
        Layout {
            e_in,
            e_out,
            w1,
            b1,
            w2,
            b2,
            len: b2 + self.output_vocab,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }

    /// Output-embedding row fed at the first decoding step.
    pub fn start_row(&self) -> usize {
        self.output_vocab
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub params: Vec<T>,
    pub dims: Dims,
    pub tokenizer: Tokenizer,
    pub stage_tag: String,
    /// Configuration hash and seed that produced the parameters.
    pub provenance: String,
}

impl<T: Scalar> Checkpoint<T> {
    fn validate(&self) -> Result<()> {
        if self.params.len() != self.dims.param_count() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters for dims that need {}",
                self.params.len(),
                self.dims.param_count()
            )));
        }
        if self.dims.input_vocab != self.tokenizer.input_len() || self.dims.output_vocab != self.tokenizer.output_len()
        {
            return Err(Error::InvalidArgument("dims disagree with tokenizer".into()));
        }
        if self.dims.max_len < 2 {
            return Err(Error::InvalidArgument("max_len must allow a label and <eos>".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(())
    }

    pub fn zeros(tokenizer: Tokenizer, embed: usize, hidden: usize, max_len: usize) -> Result<Self> {
        let dims = Dims {
            embed,
            hidden,
            input_vocab: tokenizer.input_len(),
            output_vocab: tokenizer.output_len(),
            max_len,
        };
        let c = Checkpoint {
            params: vec![T::zero(); dims.param_count()],
            dims,
            tokenizer,
            stage_tag: "init".into(),
            provenance: String::new(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Seeded random initialisation: embeddings uniform in ±0.5, weight
    /// matrices uniform in ±1/√fan_in, biases zero.
    pub fn init(tokenizer: Tokenizer, embed: usize, hidden: usize, max_len: usize, seed: u64) -> Result<Self> {
        let mut c = Self::zeros(tokenizer, embed, hidden, max_len)?;
        let l = c.dims.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: std::ops::Range<usize>, scale: f64, params: &mut [T]| {
            for p in &mut params[range] {
                *p = T::of(rng.gen_range(-scale..scale));
            }
        };
        fill(l.e_in..l.w1, 0.5, &mut c.params);
        fill(l.w1..l.b1, 1.0 / ((2 * embed) as f64).sqrt(), &mut c.params);
        fill(l.w2..l.b2, 1.0 / (hidden as f64).sqrt(), &mut c.params);
        Ok(c)
    }

    pub fn with_stage(mut self, tag: &str) -> Self {
        self.stage_tag = tag.to_string();
        self
    }

    pub fn same_tokenizer(&self, other: &Checkpoint<T>) -> bool {
        self.tokenizer == other.tokenizer
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.dims;
        writeln!(s, "relevance-checkpoint 1").unwrap();
        writeln!(s, "scalar {}", T::NAME).unwrap();
        writeln!(s, "stage {}", self.stage_tag).unwrap();
        writeln!(s, "provenance {}", self.provenance).unwrap();
        writeln!(
            s,
            "dims {} {} {} {} {}",
            d.embed, d.hidden, d.input_vocab, d.output_vocab, d.max_len
        )
        .unwrap();
        writeln!(s, "input-vocab {}", self.tokenizer.input_len()).unwrap();
        for t in self.tokenizer.input_vocab() {
            writeln!(s, "{t}").unwrap();
        }
        writeln!(s, "output-vocab {}", self.tokenizer.output_len()).unwrap();
        for t in self.tokenizer.output_vocab() {
            writeln!(s, "{t}").unwrap();
        }
        writeln!(s, "params {}", self.params.len()).unwrap();
        for p in &self.params {
            writeln!(s, "{}", p.to_bits_hex()).unwrap();
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("truncated before {what}")))
        };
        let err = |line: usize, m: String| Error::parse(path, line, m);

        let (n, l) = next("header")?;
        if l != "relevance-checkpoint 1" {
            return Err(err(n, format!("unsupported header {l:?}")));
        }
        let (n, l) = next("scalar")?;
        if l != format!("scalar {}", T::NAME) {
            return Err(err(n, format!("expected scalar {}, found {l:?}", T::NAME)));
        }
        let field = |n: usize, l: &str, key: &str| -> Result<String> {
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .map(str::to_string)
                .ok_or_else(|| err(n, format!("expected {key:?} line")))
        };
        let (n, l) = next("stage")?;
        let stage_tag = field(n, l, "stage")?;
        let (n, l) = next("provenance")?;
        let provenance = field(n, l, "provenance")?;
        let (n, l) = next("dims")?;
        let nums: Vec<usize> = field(n, l, "dims")?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| err(n, format!("bad dims {l:?}"))))
            .collect::<Result<_>>()?;
        let [embed, hidden, input_vocab, output_vocab, max_len] = nums[..] else {
            return Err(err(n, format!("dims needs five numbers, got {l:?}")));
        };
        let count = |n: usize, l: &str, key: &str| -> Result<usize> {
            field(n, l, key)?
                .parse()
                .map_err(|_| err(n, format!("bad {key} count")))
        };
        let (n, l) = next("input-vocab")?;
        let vin = count(n, l, "input-vocab")?;
        let mut vocab = Vec::with_capacity(vin);
        for _ in 0..vin {
            vocab.push(next("input token")?.1.to_string());
        }
        let (n, l) = next("output-vocab")?;
        let vout = count(n, l, "output-vocab")?;
        let mut output = Vec::with_capacity(vout);
        for _ in 0..vout {
            let (n, l) = next("output token")?;
            output.push(l.parse::<OutToken>().map_err(|m| err(n, m))?);
        }
        let tokenizer = Tokenizer::from_parts(vocab, output).map_err(|e| err(0, e.to_string()))?;
        let (n, l) = next("params")?;
        let np = count(n, l, "params")?;
        let mut params = Vec::with_capacity(np);
        for _ in 0..np {
            let (n, l) = next("parameter")?;
            params.push(T::from_bits_hex(l).ok_or_else(|| err(n, format!("bad parameter {l:?}")))?);
        }
        let c = Checkpoint {
            params,
            dims: Dims {
                embed,
                hidden,
                input_vocab,
                output_vocab,
                max_len,
            },
            tokenizer,
            stage_tag,
            provenance,
        };
        c.validate().map_err(|e| err(0, e.to_string()))?;
        Ok(c)
    }

    /// Writes the versioned text format: a header with dims, stage and both
    /// vocabularies, then one parameter per line as the hex of its IEEE-754
    /// bits.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
