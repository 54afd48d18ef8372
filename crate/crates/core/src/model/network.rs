//! Forward pass, sequence scoring and exact gradients.
//!
//! The encoder is the mean of the input-token embeddings. Each decoder step
//! concatenates the encoder vector with the embedding of the previous output
//! token (a dedicated start row at step 0), applies one tanh hidden layer
//! and projects to output-vocabulary logits. A step depends only on the
//! encoder vector and the previous token, so the backward pass can run step
//! by step without caching.

use super::checkpoint::Checkpoint;
use super::decode::OutputSeq;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One training pair: encoded input and target output sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqExample {
    pub input: Vec<usize>,
    pub target: OutputSeq,
}

pub(crate) struct Step<T> {
    pub x: Vec<T>,
    pub a: Vec<T>,
    pub logp: Vec<T>,
}

impl<T: Scalar> Step<T> {
    pub fn new<U: Scalar>(c: &Checkpoint<U>) -> Self {
        Step {
            x: vec![T::zero(); 2 * c.dims.embed],
            a: vec![T::zero(); c.dims.hidden],
            logp: vec![T::zero(); c.dims.output_vocab],
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// In-place log-softmax.
pub(crate) fn log_softmax<T: Scalar>(v: &mut [T]) {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = v.iter().map(|x| (*x - m).exp()).sum();
    let lse = m + s.ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
}

impl<T: Scalar> Checkpoint<T> {
    /// Mean of the input embeddings.
    pub fn encode_input(&self, input: &[usize]) -> Result<Vec<T>> {
        if input.is_empty() {
            return Err(Error::InvalidArgument("empty input".into()));
        }
        let d = self.dims.embed;
        let base = self.dims.layout().e_in;
        let mut enc = vec![T::zero(); d];
        for &tok in input {
            if tok >= self.dims.input_vocab {
                return Err(Error::InvalidArgument(format!("input token {tok} out of range")));
            }
            let row = &self.params[base + tok * d..base + (tok + 1) * d];
            for (e, r) in enc.iter_mut().zip(row) {
                *e += *r;
            }
        }
        let n = T::of(input.len() as f64);
        for e in &mut enc {
            *e = *e / n;
        }
        Ok(enc)
    }

    fn prev_row(&self, prefix: &[usize]) -> Result<usize> {
        match prefix.last() {
            None => Ok(self.dims.start_row()),
            Some(&t) if t < self.dims.output_vocab => Ok(t),
            Some(&t) => Err(Error::InvalidArgument(format!("output token {t} out of range"))),
        }
    }

    pub(crate) fn step(&self, enc: &[T], prev_row: usize, s: &mut Step<T>) -> Result<()> {
        let d = self.dims.embed;
        let h = self.dims.hidden;
        let l = self.dims.layout();
        let p = &self.params;
        s.x[..d].copy_from_slice(enc);
        s.x[d..].copy_from_slice(&p[l.e_out + prev_row * d..l.e_out + (prev_row + 1) * d]);
        for j in 0..h {
            let row = &p[l.w1 + j * 2 * d..l.w1 + (j + 1) * 2 * d];
            s.a[j] = (p[l.b1 + j] + dot(row, &s.x)).tanh();
        }
        for (k, out) in s.logp.iter_mut().enumerate() {
            *out = p[l.b2 + k] + dot(&p[l.w2 + k * h..l.w2 + (k + 1) * h], &s.a);
        }
        if s.logp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        log_softmax(&mut s.logp);
        Ok(())
    }

    /// Log-probabilities of the next output token given the input and the
    /// output prefix so far.
    pub fn forward_logprobs(&self, input: &[usize], prefix: &[usize]) -> Result<Vec<T>> {
        if prefix.len() >= self.dims.max_len {
            return Err(Error::InvalidArgument(format!(
                "prefix of length {} leaves no room under max_len {}",
                prefix.len(),
                self.dims.max_len
            )));
        }
        let enc = self.encode_input(input)?;
        let mut s = Step::new(self);
        self.step(&enc, self.prev_row(prefix)?, &mut s)?;
        Ok(s.logp)
    }

    fn score_tokens(&self, input: &[usize], tokens: &[usize]) -> Result<T> {
        let enc = self.encode_input(input)?;
        let mut s = Step::new(self);
        let mut total = T::zero();
        for t in 0..tokens.len() {
            self.step(&enc, self.prev_row(&tokens[..t])?, &mut s)?;
            total += s.logp[tokens[t]];
        }
        Ok(total)
    }

    /// Σ_t log P(y_t | input, y_<t); the sequence score used by beam search
    /// and the preference objective.
    pub fn sequence_logprob(&self, input: &[usize], y: &OutputSeq) -> Result<T> {
        self.score_tokens(input, y.tokens())
    }

    /// Language-model loss: negative log-likelihood of the target.
    pub fn loss_lm(&self, input: &[usize], target: &OutputSeq) -> Result<T> {
        Ok(-self.sequence_logprob(input, target)?)
    }

    /// Adds `weight · ∇ loss_lm(input, tokens)` into `grad` and returns the
    /// loss.
    pub(crate) fn accumulate_lm_grad(&self, input: &[usize], tokens: &[usize], weight: T, grad: &mut [T]) -> Result<T> {
        let d = self.dims.embed;
        let h = self.dims.hidden;
        let v = self.dims.output_vocab;
        let l = self.dims.layout();
        let p = &self.params;
        let enc = self.encode_input(input)?;
        let mut s = Step::new(self);
        let mut g_enc = vec![T::zero(); d];
        let mut g_logit = vec![T::zero(); v];
        let mut g_z = vec![T::zero(); h];
        let mut loss = T::zero();
        for t in 0..tokens.len() {
            let prev = self.prev_row(&tokens[..t])?;
            self.step(&enc, prev, &mut s)?;
            let y = tokens[t];
            loss -= s.logp[y];
            for k in 0..v {
                let target = if k == y { T::one() } else { T::zero() };
                g_logit[k] = weight * (s.logp[k].exp() - target);
            }
            for (k, gl) in g_logit.iter().enumerate() {
                grad[l.b2 + k] += *gl;
                let row = &mut grad[l.w2 + k * h..l.w2 + (k + 1) * h];
                for (g, a) in row.iter_mut().zip(&s.a) {
                    *g += *gl * *a;
                }
            }
            for j in 0..h {
                let mut ga = T::zero();
                for k in 0..v {
                    ga += p[l.w2 + k * h + j] * g_logit[k];
                }
                g_z[j] = ga * (T::one() - s.a[j] * s.a[j]);
            }
            let mut g_prev = vec![T::zero(); d];
            for (j, gz) in g_z.iter().enumerate() {
                grad[l.b1 + j] += *gz;
                let w_row = &p[l.w1 + j * 2 * d..l.w1 + (j + 1) * 2 * d];
                let g_row = &mut grad[l.w1 + j * 2 * d..l.w1 + (j + 1) * 2 * d];
                for i in 0..2 * d {
                    g_row[i] += *gz * s.x[i];
                }
                for i in 0..d {
                    g_enc[i] += w_row[i] * *gz;
                    g_prev[i] += w_row[d + i] * *gz;
                }
            }
            let base = l.e_out + prev * d;
            for (g, gp) in grad[base..base + d].iter_mut().zip(&g_prev) {
                *g += *gp;
            }
        }
        let inv_n = T::one() / T::of(input.len() as f64);
        for &tok in input {
            let base = l.e_in + tok * d;
            for (g, ge) in grad[base..base + d].iter_mut().zip(&g_enc) {
                *g += *ge * inv_n;
            }
        }
        Ok(loss)
    }

    /// Exact gradient of the mean LM loss over `batch`.
    pub fn grad_lm(&self, batch: &[SeqExample]) -> Result<Vec<T>> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut grad = vec![T::zero(); self.params.len()];
        let w = T::one() / T::of(batch.len() as f64);
        for ex in batch {
            self.accumulate_lm_grad(&ex.input, ex.target.tokens(), w, &mut grad)?;
        }
        Ok(grad)
    }

    /// Mean LM loss over `batch`.
    pub fn mean_loss_lm(&self, batch: &[SeqExample]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut total = T::zero();
        for ex in batch {
            total += self.loss_lm(&ex.input, &ex.target)?;
        }
        Ok(total / T::of(batch.len() as f64))
    }
}
