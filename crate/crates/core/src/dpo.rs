//! Stage 3: preference pairs mined from beam search, and the pairwise
//! logistic objective −ln σ(β·(f(y⁺) − f(y⁻))) on whole-sequence
//! log-likelihoods, with no reference model.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cot::TAG_COT;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::model::{sgd, Beam, Checkpoint, Hyper, InputForm, OutputSeq, TrainOutcome};
use crate::scalar::Scalar;
use crate::schema::{Dataset, Label};

pub const TAG_FINAL: &str = "final";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefPair {
    /// Id of the source example.
    pub id: String,
    pub input: Vec<usize>,
    /// Highest-ranked beam entry after the first that carries the true label.
    pub chosen: OutputSeq,
    /// The wrong top-1 sequence.
    pub rejected: OutputSeq,
    /// 1-based beam position of `chosen`.
    pub rank_of_chosen: usize,
}

impl PrefPair {
    pub fn check<T: Scalar>(&self, c: &Checkpoint<T>) -> Result<()> {
        let tok = &c.tokenizer;
        for s in [&self.chosen, &self.rejected] {
            OutputSeq::new(s.tokens().to_vec(), tok, c.dims.max_len)?;
        }
        if self.input.is_empty() || self.input.iter().any(|&t| t >= tok.input_len()) {
            return Err(Error::TokenizerMismatch);
        }
        if self.chosen == self.rejected || self.chosen.label(tok) == self.rejected.label(tok) || self.rank_of_chosen < 2
        {
            return Err(Error::InvalidArgument(format!(
                "inconsistent preference pair {}",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineParams {
    /// Positions 2..=k are searched for the correct label.
    pub k: usize,
    pub beam_width: usize,
}

impl Default for MineParams {
    fn default() -> Self {
        MineParams { k: 3, beam_width: 4 }
    }
}

fn pair_from_beams<T: Scalar>(
    c: &Checkpoint<T>,
    id: &str,
    input: Vec<usize>,
    beams: &[Beam<T>],
    truth: Label,
    k: usize,
) -> Option<PrefPair> {
    let tok = &c.tokenizer;
    let top = beams.first()?;
    if top.seq.label(tok) == truth {
        return None;
    }
    let (pos, chosen) = beams
        .iter()
        .enumerate()
        .take(k)
        .skip(1)
        .find(|(_, b)| b.seq.label(tok) == truth)?;
    Some(PrefPair {
        id: id.to_string(),
        input,
        chosen: chosen.seq.clone(),
        rejected: top.seq.clone(),
        rank_of_chosen: pos + 1,
    })
}

/// One pair per example whose top-1 label is wrong while the true label
/// appears at beam positions 2..=k. Inputs use the checkpoint's inference
/// form; output order follows `d`.
pub fn mine_pref_pairs<T: Scalar>(c: &Checkpoint<T>, d: &Dataset, p: MineParams) -> Result<Vec<PrefPair>> {
    if p.k < 2 || p.beam_width < p.k {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= k <= beam width, got k={} width={}",
            p.k, p.beam_width
        )));
    }
    let form = InputForm::for_stage(&c.stage_tag);
    let found: Vec<Option<PrefPair>> = d
        .examples
        .par_iter()
        .map(|ex| {
            let input = c.tokenizer.encode(&ex.query, &ex.title, form);
            let beams = c.beam_search(&input, p.beam_width)?;
            Ok(pair_from_beams(c, &ex.id, input, &beams, ex.label, p.k))
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect())
}

/// −ln σ(x), computed without overflow.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn neg_log_sigmoid_t<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// f(y⁺) − f(y⁻).
pub fn margin<T: Scalar>(c: &Checkpoint<T>, pair: &PrefPair) -> Result<T> {
    Ok(c.sequence_logprob(&pair.input, &pair.chosen)? - c.sequence_logprob(&pair.input, &pair.rejected)?)
}

pub fn mean_margin<T: Scalar>(c: &Checkpoint<T>, pairs: &[PrefPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total += margin(c, p)?.as_f64();
    }
    Ok(total / pairs.len() as f64)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")))
    }
}

pub fn loss_dpo<T: Scalar>(c: &Checkpoint<T>, pair: &PrefPair, beta: f64) -> Result<T> {
    check_beta(beta)?;
    Ok(neg_log_sigmoid_t(T::of(beta) * margin(c, pair)?))
}

pub fn mean_loss_dpo<T: Scalar>(c: &Checkpoint<T>, pairs: &[PrefPair], beta: f64) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    let mut total = T::zero();
    for p in pairs {
        total += loss_dpo(c, p, beta)?;
    }
    Ok(total / T::of(pairs.len() as f64))
}

/// Mean loss and its exact gradient. With m the margin,
/// ∂/∂θ −ln σ(βm) = β·σ(−βm)·(∇loss_lm(y⁺) − ∇loss_lm(y⁻)).
fn loss_and_grad<T: Scalar>(c: &Checkpoint<T>, pairs: &[PrefPair], beta: f64, anchor: f64) -> Result<(T, Vec<T>)> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    let beta = T::of(beta);
    let n = T::of(pairs.len() as f64);
    let mut grad = vec![T::zero(); c.params.len()];
    let mut loss = T::zero();
    for p in pairs {
        let m = margin(c, p)?;
        loss += neg_log_sigmoid_t(beta * m) / n;
        let w = beta * sigmoid(-beta * m) / n;
        let nll = c.accumulate_lm_grad(&p.input, p.chosen.tokens(), w + T::of(anchor) / n, &mut grad)?;
        loss += T::of(anchor) * nll / n;
        c.accumulate_lm_grad(&p.input, p.rejected.tokens(), -w, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Exact gradient of the mean preference loss over `pairs`.
pub fn grad_dpo<T: Scalar>(c: &Checkpoint<T>, pairs: &[PrefPair], beta: f64) -> Result<Vec<T>> {
    Ok(loss_and_grad(c, pairs, beta, 0.0)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta: f64,
    /// Weight of an extra likelihood term on the chosen sequence; 0 trains
    /// the preference loss alone.
    pub anchor: f64,
    pub seed: u64,
}

impl Default for DpoHyper {
    fn default() -> Self {
        DpoHyper {
            lr: 0.1,
            epochs: 2,
            batch_size: 16,
            beta: 1.0,
            anchor: 0.0,
            seed: 0,
        }
    }
}

/// Preference training from the reasoning-stage checkpoint.
pub fn train_dpo<T: Scalar>(start: &Checkpoint<T>, pairs: &[PrefPair], h: &DpoHyper) -> Result<TrainOutcome<T>> {
    if start.stage_tag != TAG_COT {
        return Err(Error::StageMismatch {
            expected: TAG_COT.into(),
            found: start.stage_tag.clone(),
        });
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    check_beta(h.beta)?;
    let hyper = Hyper {
        lr: h.lr,
        epochs: h.epochs,
        batch_size: h.batch_size,
        seed: h.seed,
    };
    sgd(start, pairs, &hyper, TAG_FINAL, |c, batch| {
        loss_and_grad(c, batch, h.beta, h.anchor)
    })
}

pub fn write_pairs(pairs: &[PrefPair], provenance: &str, path: impl AsRef<Path>) -> Result<()> {
    jsonl::write(path.as_ref(), Some(format!("pairs {provenance}").trim_end()), pairs)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PrefPair>> {
    Ok(jsonl::read(path.as_ref())?.1)
}

/// Error statistics of one checkpoint on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasColumn {
    pub stage: String,
    pub error_rate: f64,
    /// Errors by predicted label, indexed by rank; malformed outputs are
    /// errors without a predicted label and are not listed here.
    pub errors_by_prediction: [usize; 5],
    /// Share of errors that predict Significant.
    pub significant_share: Option<f64>,
    /// Share of errors that predict Significant for a lower true grade.
    pub significant_overprediction_share: Option<f64>,
    /// Share of over-predictions (predicted grade above the truth) whose
    /// second beam entry carries the true label.
    pub overprediction_fixed_at_2: Option<f64>,
    pub marginal_recall: Option<f64>,
    pub significant_precision: Option<f64>,
}

impl BiasColumn {
    /// The most frequent predicted label among errors; ties go to the
    /// higher grade.
    pub fn modal_error_prediction(&self) -> Option<Label> {
        let (i, n) = self
            .errors_by_prediction
            .iter()
            .enumerate()
            .max_by_key(|(i, n)| (**n, *i))?;
        (*n > 0).then(|| Label::from_rank(i as u8).unwrap())
    }
}

fn frac(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn bias_column<T: Scalar>(c: &Checkpoint<T>, d: &Dataset, k: usize) -> Result<BiasColumn> {
    if d.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let form = InputForm::for_stage(&c.stage_tag);
    let tok = &c.tokenizer;
    // (top-1 label, second-entry label)
    let top2: Vec<(Option<Label>, Option<Label>)> = d
        .examples
        .par_iter()
        .map(|ex| {
            let beams = c.beam_search(&tok.encode(&ex.query, &ex.title, form), k.max(2))?;
            Ok((
                beams.first().map(|b| b.seq.label(tok)),
                beams.get(1).map(|b| b.seq.label(tok)),
            ))
        })
        .collect::<Result<_>>()?;
    let preds = crate::selection::predict_labels(c, d)?;
    let mut errors = 0;
    let mut by_pred = [0usize; 5];
    let mut sig_over = 0;
    let (mut over, mut over_fixed) = (0, 0);
    let (mut marg, mut marg_hit) = (0, 0);
    let (mut sig_pred, mut sig_hit) = (0, 0);
    for ((ex, pred), (_, second)) in d.iter().zip(&preds).zip(&top2) {
        let truth = ex.label;
        if truth == Label::Marginal {
            marg += 1;
            marg_hit += usize::from(*pred == Some(Label::Marginal));
        }
        if *pred == Some(Label::Significant) {
            sig_pred += 1;
            sig_hit += usize::from(truth == Label::Significant);
        }
        if *pred == Some(truth) {
            continue;
        }
        errors += 1;
        let Some(p) = pred else { continue };
        by_pred[p.index()] += 1;
        if p.rank() > truth.rank() {
            over += 1;
            over_fixed += usize::from(*second == Some(truth));
            if *p == Label::Significant {
                sig_over += 1;
            }
        }
    }
    Ok(BiasColumn {
        stage: c.stage_tag.clone(),
        error_rate: errors as f64 / d.len() as f64,
        errors_by_prediction: by_pred,
        significant_share: frac(by_pred[Label::Significant.index()], errors),
        significant_overprediction_share: frac(sig_over, errors),
        overprediction_fixed_at_2: frac(over_fixed, over),
        marginal_recall: frac(marg_hit, marg),
        significant_precision: frac(sig_hit, sig_pred),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub before: BiasColumn,
    pub after: BiasColumn,
}

pub fn bias_report<T: Scalar>(
    before: &Checkpoint<T>,
    after: &Checkpoint<T>,
    d: &Dataset,
    k: usize,
) -> Result<BiasReport> {
    Ok(BiasReport {
        before: bias_column(before, d, k)?,
        after: bias_column(after, d, k)?,
    })
}
