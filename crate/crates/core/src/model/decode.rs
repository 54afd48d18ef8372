//! Output sequences, greedy decoding and beam search.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::network::Step;
use super::tokenizer::Tokenizer;
use super::vocab::OutToken;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::Label;

/// Token indices into a tokenizer's output vocabulary.
///
/// A well-formed sequence is zero or more reasoning tokens, exactly one
/// label token, then EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputSeq(Vec<usize>);

/// Whether `tokens` is `[reasoning…, LABEL, EOS]` within `max_len`.
pub fn is_well_formed(tokens: &[usize], tok: &Tokenizer, max_len: usize) -> bool {
    let n = tokens.len();
    if n < 2 || n > max_len || tokens[n - 1] != tok.eos() {
        return false;
    }
    if tok.token_label(tokens[n - 2]).is_none() {
        return false;
    }
    tokens[..n - 2]
        .iter()
        .all(|&t| matches!(tok.out_token(t), Some(OutToken::Cot(_))))
}

impl OutputSeq {
    /// Wraps raw indices, rejecting anything that is not well-formed.
    pub fn new(tokens: Vec<usize>, tok: &Tokenizer, max_len: usize) -> Result<OutputSeq> {
        if is_well_formed(&tokens, tok, max_len) {
            Ok(OutputSeq(tokens))
        } else {
            Err(Error::MalformedOutput)
        }
    }

    /// `[reasoning…, label, EOS]`; fails if a reasoning token is missing
    /// from the output vocabulary.
    pub fn from_parts(tok: &Tokenizer, reasoning: &[OutToken], label: Label) -> Result<OutputSeq> {
        let mut v = Vec::with_capacity(reasoning.len() + 2);
        for t in reasoning {
            match (t, tok.out_index(*t)) {
                (OutToken::Cot(_), Some(i)) => v.push(i),
                _ => return Err(Error::TokenizerMismatch),
            }
        }
        v.push(tok.label_token(label));
        v.push(tok.eos());
        Ok(OutputSeq(v))
    }

    pub fn label_only(tok: &Tokenizer, label: Label) -> OutputSeq {
        OutputSeq(vec![tok.label_token(label), tok.eos()])
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The label token, second to last.
    pub fn label(&self, tok: &Tokenizer) -> Label {
        tok.token_label(self.0[self.0.len() - 2])
            .expect("OutputSeq is well-formed")
    }

    /// The reasoning tokens before the label.
    pub fn reasoning(&self, tok: &Tokenizer) -> Vec<OutToken> {
        self.0[..self.0.len() - 2]
            .iter()
            .map(|&i| tok.out_token(i).expect("index in vocabulary"))
            .collect()
    }

    /// Space-separated token names.
    pub fn render(&self, tok: &Tokenizer) -> String {
        self.0
            .iter()
            .map(|&i| tok.out_token(i).map_or_else(|| format!("#{i}"), |t| t.to_string()))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`render`](Self::render).
    pub fn parse(text: &str, tok: &Tokenizer, max_len: usize) -> Result<OutputSeq> {
        let mut v = Vec::new();
        for name in text.split_whitespace() {
            let t: OutToken = name.parse().map_err(|_| Error::MalformedOutput)?;
            v.push(tok.out_index(t).ok_or(Error::TokenizerMismatch)?);
        }
        OutputSeq::new(v, tok, max_len)
    }
}

/// A finished beam hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam<T> {
    pub seq: OutputSeq,
    /// Sum of token log-probabilities.
    pub score: T,
}

fn by_score_then_tokens<T: Scalar>(a: &(Vec<usize>, T), b: &(Vec<usize>, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

impl<T: Scalar> Checkpoint<T> {
    fn ends_hypothesis(&self, tokens: &[usize]) -> bool {
        tokens.len() >= self.dims.max_len || tokens.iter().any(|&t| self.tokenizer.token_label(t).is_some())
    }

    /// Beam search over the unconstrained model distribution.
    ///
    /// Each round expands every live hypothesis by every output token and
    /// keeps the `width` best candidates (score descending, then token
    /// sequence ascending). Kept candidates that end in EOS are finished if
    /// well-formed and dropped otherwise; a kept candidate that can no
    /// longer become well-formed is dropped as well. Returns at most
    /// `width` finished hypotheses, best first.
    pub fn beam_search(&self, input: &[usize], width: usize) -> Result<Vec<Beam<T>>> {
        if width == 0 {
            return Err(Error::InvalidArgument("beam width must be positive".into()));
        }
        let enc = self.encode_input(input)?;
        let mut step = Step::new(self);
        let eos = self.tokenizer.eos();
        let max_len = self.dims.max_len;
        let mut live: Vec<(Vec<usize>, T)> = vec![(Vec::new(), T::zero())];
        let mut finished: Vec<(Vec<usize>, T)> = Vec::new();
        while !live.is_empty() {
            let mut cands = Vec::with_capacity(live.len() * self.dims.output_vocab);
            for (prefix, score) in &live {
                let prev = prefix.last().copied().unwrap_or(self.dims.start_row());
                self.step(&enc, prev, &mut step)?;
                for (k, lp) in step.logp.iter().enumerate() {
                    let mut seq = prefix.clone();
                    seq.push(k);
                    cands.push((seq, *score + *lp));
                }
            }
            cands.sort_by(by_score_then_tokens);
            cands.truncate(width);
            live.clear();
            for (seq, score) in cands {
                if *seq.last().unwrap() == eos {
                    if is_well_formed(&seq, &self.tokenizer, max_len) {
                        finished.push((seq, score));
                    }
                } else if !self.ends_hypothesis(&seq) || self.can_close(&seq) {
                    live.push((seq, score));
                }
            }
        }
        finished.sort_by(by_score_then_tokens);
        finished.truncate(width);
        Ok(finished
            .into_iter()
            .map(|(tokens, score)| Beam {
                seq: OutputSeq(tokens),
                score,
            })
            .collect())
    }

    /// A prefix ending in its first label can still be closed by EOS if
    /// there is room for it.
    fn can_close(&self, seq: &[usize]) -> bool {
        let labels = seq.iter().filter(|&&t| self.tokenizer.token_label(t).is_some()).count();
        labels == 1 && self.tokenizer.token_label(*seq.last().unwrap()).is_some() && seq.len() < self.dims.max_len
    }

    /// Argmax decoding, ties to the lowest token index. Fails with
    /// `MalformedOutput` if the result is not well-formed.
    pub fn decode_greedy(&self, input: &[usize]) -> Result<OutputSeq> {
        let enc = self.encode_input(input)?;
        let mut step = Step::new(self);
        let eos = self.tokenizer.eos();
        let mut seq = Vec::new();
        while seq.len() < self.dims.max_len {
            let prev = seq.last().copied().unwrap_or(self.dims.start_row());
            self.step(&enc, prev, &mut step)?;
            let mut best = 0;
            for (k, lp) in step.logp.iter().enumerate() {
                if *lp > step.logp[best] {
                    best = k;
                }
            }
            seq.push(best);
            if best == eos {
                break;
            }
        }
        OutputSeq::new(seq, &self.tokenizer, self.dims.max_len)
    }

    /// Label of the greedy decode.
    pub fn predict(&self, input: &[usize]) -> Result<Label> {
        Ok(self.decode_greedy(input)?.label(&self.tokenizer))
    }

    /// Greedy predictions for many inputs, in input order; a malformed
    /// decode yields `None`.
    pub fn predict_many(&self, inputs: &[Vec<usize>]) -> Result<Vec<Option<Label>>> {
        inputs
            .par_iter()
            .map(|x| match self.predict(x) {
                Ok(l) => Ok(Some(l)),
                Err(Error::MalformedOutput) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// Beam search for many inputs, in input order.
    pub fn beam_many(&self, inputs: &[Vec<usize>], width: usize) -> Result<Vec<Vec<Beam<T>>>> {
        inputs.par_iter().map(|x| self.beam_search(x, width)).collect()
    }
}
