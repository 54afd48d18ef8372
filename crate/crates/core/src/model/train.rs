//! Mini-batch SGD on the language-model loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::decode::OutputSeq;
use super::network::SeqExample;
use super::tokenizer::InputForm;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.1,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub checkpoint: Checkpoint<T>,
    /// Mean training loss of each epoch, measured on each batch just before
    /// its update.
    pub epoch_losses: Vec<f64>,
}

/// Label-only targets for every example, inputs in `form`.
pub fn label_examples<T: Scalar>(c: &Checkpoint<T>, d: &Dataset, form: InputForm) -> Vec<SeqExample> {
    d.iter()
        .map(|ex| SeqExample {
            input: c.tokenizer.encode(&ex.query, &ex.title, form),
            target: OutputSeq::label_only(&c.tokenizer, ex.label),
        })
        .collect()
}

/// Generic SGD loop; `grad_fn` returns (mean loss, gradient) for a batch.
pub(crate) fn sgd<T, E, F>(
    start: &Checkpoint<T>,
    data: &[E],
    hyper: &Hyper,
    stage_tag: &str,
    mut grad_fn: F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    E: Clone,
    F: FnMut(&Checkpoint<T>, &[E]) -> Result<(T, Vec<T>)>,
{
    hyper.validate()?;
    let mut c = start.clone().with_stage(stage_tag);
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = T::of(hyper.lr);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut batch = Vec::with_capacity(hyper.batch_size);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (loss, grad) = match grad_fn(&c, &batch) {
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch }),
                r => r?,
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            total += loss.as_f64() * chunk.len() as f64;
            for (p, g) in c.params.iter_mut().zip(&grad) {
                *p -= lr * *g;
            }
        }
        let mean = total / data.len() as f64;
        log::debug!("{stage_tag} epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        checkpoint: c,
        epoch_losses,
    })
}

/// Fine-tunes `start` on `data` with the LM loss.
pub fn train<T: Scalar>(
    start: &Checkpoint<T>,
    data: &[SeqExample],
    hyper: &Hyper,
    stage_tag: &str,
) -> Result<TrainOutcome<T>> {
    sgd(start, data, hyper, stage_tag, |c, batch| {
        let mut grad = vec![T::zero(); c.params.len()];
        let w = T::one() / T::of(batch.len() as f64);
        let mut loss = T::zero();
        for ex in batch {
            loss += c.accumulate_lm_grad(&ex.input, ex.target.tokens(), w, &mut grad)? * w;
        }
        Ok((loss, grad))
    })
}

/// Fine-tunes on label-only targets built from a dataset.
pub fn train_on_dataset<T: Scalar>(
    start: &Checkpoint<T>,
    d: &Dataset,
    form: InputForm,
    hyper: &Hyper,
    stage_tag: &str,
) -> Result<TrainOutcome<T>> {
    let data = label_examples(start, d, form);
    train(start, &data, hyper, stage_tag)
}
