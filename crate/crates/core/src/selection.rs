//! Stage 1: auxiliary models and the challenging-but-clean selection chain.
//!
//! Three models are trained from a shared initialisation:
//!
//! * the initial model (IM) on a small uniform sample,
//! * the challenge identifier (CI) on a tier-balanced sample,
//! * the mislabeled supervisor (MS) on confound labels, i.e. the label an
//!   annotator would most plausibly confuse with the correct one.
//!
//! Selection keeps the examples CI gets right (trustworthy and learnable),
//! that IM still gets wrong (challenging), and whose stored label MS does not
//! reproduce (a stored label that matches the confound is likely noise).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::clean_label;
use crate::error::{Error, Result};
use crate::model::{train_on_dataset, Checkpoint, Hyper, InputForm, OutputSeq, SeqExample};
use crate::scalar::Scalar;
use crate::schema::{tier_stratified_sample, Dataset, Example, Label, Tier};

pub const TAG_IM: &str = "IM";
pub const TAG_CI: &str = "CI";
pub const TAG_MS: &str = "MS";
pub const TAG_SELECT: &str = "IM+select";

/// Trains IM on `n_random` examples drawn uniformly from `d`.
/// `hyper.seed` drives both the draw and the training shuffle.
pub fn train_initial_model<T: Scalar>(
    base: &Checkpoint<T>,
    d: &Dataset,
    n_random: usize,
    hyper: &Hyper,
) -> Result<Checkpoint<T>> {
    let sample = d.uniform_sample(n_random, hyper.seed)?;
    Ok(train_on_dataset(base, &sample, InputForm::Plain, hyper, TAG_IM)?.checkpoint)
}

/// The CI training subset: `n` examples split evenly across tiers.
pub fn challenge_identifier_sample(d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let share = 1.0 / Tier::ALL.len() as f64;
    let props: BTreeMap<Tier, f64> = Tier::ALL.iter().map(|t| (*t, share)).collect();
    tier_stratified_sample(d, &props, n, seed)
}

pub fn train_challenge_identifier<T: Scalar>(
    base: &Checkpoint<T>,
    d: &Dataset,
    n: usize,
    hyper: &Hyper,
) -> Result<Checkpoint<T>> {
    let sample = challenge_identifier_sample(d, n, hyper.seed)?;
    Ok(train_on_dataset(base, &sample, InputForm::Plain, hyper, TAG_CI)?.checkpoint)
}

/// Pairs every example with the adjacent label most easily confused with
/// its rule-derived (noise-free) label.
pub fn make_confound_labels(d: &Dataset) -> Result<Vec<(Example, Label)>> {
    d.iter()
        .map(|ex| Ok((ex.clone(), clean_label(ex)?.confusable_neighbor())))
        .collect()
}

pub fn train_mislabeled_supervisor<T: Scalar>(
    base: &Checkpoint<T>,
    pairs: &[(Example, Label)],
    hyper: &Hyper,
) -> Result<Checkpoint<T>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no confound pairs".into()));
    }
    let data: Vec<SeqExample> = pairs
        .iter()
        .map(|(ex, confound)| SeqExample {
            input: base.tokenizer.encode(&ex.query, &ex.title, InputForm::Plain),
            target: OutputSeq::label_only(&base.tokenizer, *confound),
        })
        .collect();
    Ok(crate::model::train(base, &data, hyper, TAG_MS)?.checkpoint)
}

/// Greedy predictions over `d` in the checkpoint's inference form;
/// malformed decodes are `None`.
pub fn predict_labels<T: Scalar>(c: &Checkpoint<T>, d: &Dataset) -> Result<Vec<Option<Label>>> {
    let form = InputForm::for_stage(&c.stage_tag);
    let inputs: Vec<Vec<usize>> = d
        .iter()
        .map(|ex| c.tokenizer.encode(&ex.query, &ex.title, form))
        .collect();
    c.predict_many(&inputs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSummary {
    pub size: usize,
    /// Indexed by label rank.
    pub label_histogram: [usize; 5],
    pub noisy: usize,
}

impl SetSummary {
    fn of(d: &Dataset) -> SetSummary {
        SetSummary {
            size: d.len(),
            label_histogram: d.label_histogram(),
            noisy: d.noisy_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub d: SetSummary,
    pub s_seed: SetSummary,
    pub s_challenging: SetSummary,
    pub s_selection: SetSummary,
    /// Noisy examples in S_challenging dropped by the MS filter.
    pub noisy_removed: usize,
    pub noisy_retained: usize,
}

impl SelectionReport {
    /// Share of noisy examples among S_challenging.
    pub fn challenging_noise_rate(&self) -> Option<f64> {
        ratio(self.s_challenging.noisy, self.s_challenging.size)
    }

    /// Share of S_challenging's noisy examples that survive into S_selection.
    pub fn noisy_survival_rate(&self) -> Option<f64> {
        ratio(self.noisy_retained, self.s_challenging.noisy)
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub s_seed: Dataset,
    pub s_challenging: Dataset,
    pub s_selection: Dataset,
    pub report: SelectionReport,
}

fn filter(d: &Dataset, keep: impl Fn(usize, &Example) -> bool) -> Dataset {
    d.with_examples(
        d.iter()
            .enumerate()
            .filter(|(i, ex)| keep(*i, ex))
            .map(|(_, ex)| ex.clone())
            .collect(),
    )
}

fn check_lengths(d: &Dataset, preds: [&[Option<Label>]; 3]) -> Result<()> {
    for p in preds {
        if p.len() != d.len() {
            return Err(Error::LengthMismatch {
                truths: d.len(),
                preds: p.len(),
            });
        }
    }
    Ok(())
}

/// Builds the three sets one filter at a time from per-example predictions
/// (aligned with `d`).
pub fn select_from_predictions(
    d: &Dataset,
    ci: &[Option<Label>],
    im: &[Option<Label>],
    ms: &[Option<Label>],
) -> Result<Selection> {
    check_lengths(d, [ci, im, ms])?;
    // ids are unique, so they locate each example's predictions
    let index: BTreeMap<&str, usize> = d.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    let at = |ex: &Example| index[ex.id.as_str()];
    let s_seed = filter(d, |i, ex| ci[i] == Some(ex.label));
    let s_challenging = filter(&s_seed, |_, ex| im[at(ex)] != Some(ex.label));
    let s_selection = filter(&s_challenging, |_, ex| ms[at(ex)] != Some(ex.label));
    let report = SelectionReport {
        d: SetSummary::of(d),
        s_seed: SetSummary::of(&s_seed),
        s_challenging: SetSummary::of(&s_challenging),
        s_selection: SetSummary::of(&s_selection),
        noisy_removed: s_challenging.noisy_count() - s_selection.noisy_count(),
        noisy_retained: s_selection.noisy_count(),
    };
    Ok(Selection {
        s_seed,
        s_challenging,
        s_selection,
        report,
    })
}

/// The selected set in one pass: CI right, IM wrong, MS disagreeing with
/// the stored label.
pub fn select_composed(
    d: &Dataset,
    ci: &[Option<Label>],
    im: &[Option<Label>],
    ms: &[Option<Label>],
) -> Result<Dataset> {
    check_lengths(d, [ci, im, ms])?;
    Ok(filter(d, |i, ex| {
        let l = Some(ex.label);
        ci[i] == l && im[i] != l && ms[i] != l
    }))
}

/// Runs the three models over `d` and builds the selection sets.
pub fn select<T: Scalar>(d: &Dataset, im: &Checkpoint<T>, ci: &Checkpoint<T>, ms: &Checkpoint<T>) -> Result<Selection> {
    if !im.same_tokenizer(ci) || !im.same_tokenizer(ms) {
        return Err(Error::TokenizerMismatch);
    }
    let ci_p = predict_labels(ci, d)?;
    let im_p = predict_labels(im, d)?;
    let ms_p = predict_labels(ms, d)?;
    select_from_predictions(d, &ci_p, &im_p, &ms_p)
}

/// Continues training IM on a set of examples under a given stage tag.
pub fn finetune_on<T: Scalar>(im: &Checkpoint<T>, data: &Dataset, hyper: &Hyper, tag: &str) -> Result<Checkpoint<T>> {
    if data.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(train_on_dataset(im, data, InputForm::Plain, hyper, tag)?.checkpoint)
}

pub fn finetune_on_selection<T: Scalar>(
    im: &Checkpoint<T>,
    s_selection: &Dataset,
    hyper: &Hyper,
) -> Result<Checkpoint<T>> {
    finetune_on(im, s_selection, hyper, TAG_SELECT)
}

/// Whether `inner` ⊆ `outer` by id.
pub fn is_subset(inner: &Dataset, outer: &Dataset) -> bool {
    let ids: HashSet<&str> = outer.ids().into_iter().collect();
    inner.iter().all(|e| ids.contains(e.id.as_str()))
}
