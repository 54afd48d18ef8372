use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TierMix;
use crate::cot::CotKind;
use crate::dpo::{DpoHyper, MineParams};
use crate::error::{Error, Result};
use crate::model::Hyper;

/// Everything that determines a run's artifacts. Paths are deliberately
/// absent: they never change what gets computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub im: ImConfig,
    pub ci: CiConfig,
    pub ms: MsConfig,
    pub finetune: FinetuneConfig,
    pub cot: CotConfig,
    pub dpo: DpoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub catalog_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub noise_rate: f64,
    pub tier_mix: TierMix,
    /// Simulated visitors in the session log.
    pub session_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed: usize,
    pub hidden: usize,
    pub max_len: usize,
}

/// Mislabel supervisor training on confound labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Fine-tuning the initial model on a selected set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImConfig {
    /// Size of the random sample the initial model is trained on.
    pub n_random: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiConfig {
    /// Size of the tier-uniform training sample.
    pub sample_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotConfig {
    /// Examples of D that reasoning records are synthesized from.
    pub source_size: usize,
    pub kinds: BTreeSet<CotKind>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    /// Examples of D searched for preference pairs.
    pub mine_size: usize,
    pub k: usize,
    pub beam_width: usize,
    pub beta: f64,
    pub anchor: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            catalog_size: 1000,
            train_size: 50_000,
            test_size: 5_000,
            noise_rate: 0.1,
            tier_mix: TierMix::default(),
            session_users: 2_000,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed: crate::model::DEFAULT_EMBED,
            hidden: crate::model::DEFAULT_HIDDEN,
            max_len: crate::model::DEFAULT_MAX_LEN,
        }
    }
}

impl Default for MsConfig {
    fn default() -> Self {
        MsConfig {
            lr: 0.3,
            epochs: 25,
            batch_size: 16,
        }
    }
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lr: 0.3,
            epochs: 10,
            batch_size: 16,
        }
    }
}

impl Default for ImConfig {
    fn default() -> Self {
        ImConfig {
            n_random: 1_500,
            lr: 0.3,
            epochs: 10,
            batch_size: 16,
        }
    }
}

impl Default for CiConfig {
    fn default() -> Self {
        CiConfig {
            sample_size: 25_000,
            lr: 0.3,
            epochs: 25,
            batch_size: 16,
        }
    }
}

impl Default for CotConfig {
    fn default() -> Self {
        CotConfig {
            source_size: 10_000,
            kinds: [CotKind::Ee, CotKind::Ra, CotKind::Dr].into(),
            lr: 0.1,
            epochs: 3,
            batch_size: 16,
        }
    }
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            mine_size: 20_000,
            k: 3,
            beam_width: 4,
            beta: 1.0,
            anchor: 0.0,
            lr: 3e-5,
            epochs: 2,
            batch_size: 16,
        }
    }
}

macro_rules! supervised_hyper {
    ($($t:ty),*) => {$(
        impl $t {
            pub fn hyper(&self, seed: u64) -> Hyper {
                Hyper {
                    lr: self.lr,
                    epochs: self.epochs,
                    batch_size: self.batch_size,
                    seed,
                }
            }
        }
    )*};
}

supervised_hyper!(ImConfig, CiConfig, MsConfig, FinetuneConfig, CotConfig);

impl DpoConfig {
    pub fn hyper(&self, seed: u64) -> DpoHyper {
        DpoHyper {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta: self.beta,
            anchor: self.anchor,
            seed,
        }
    }

    pub fn mine_params(&self) -> MineParams {
        MineParams {
            k: self.k,
            beam_width: self.beam_width,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn check_training(section: &str, lr: f64, batch_size: usize) -> Result<()> {
    check(lr.is_finite() && lr > 0.0, || {
        format!("{section}.lr must be positive, got {lr}")
    })?;
    check(batch_size > 0, || format!("{section}.batch_size must be positive"))
}

fn check_size(section: &str, n: usize, train: usize) -> Result<()> {
    check(n > 0 && n <= train, || {
        format!("{section} must be between 1 and corpus.train_size ({train}), got {n}")
    })
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Seed for one named stage, derived from the master seed.
    pub fn stage_seed(&self, name: &str) -> u64 {
        let digest = Sha256::digest(format!("{}/{name}", self.seed).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        check(c.catalog_size > 0, || "corpus.catalog_size must be positive".into())?;
        check(c.train_size > 0, || "corpus.train_size must be positive".into())?;
        check(c.test_size > 0, || "corpus.test_size must be positive".into())?;
        check(c.session_users > 0, || "corpus.session_users must be positive".into())?;
        check((0.0..=0.5).contains(&c.noise_rate), || {
            format!("corpus.noise_rate must be in [0, 0.5], got {}", c.noise_rate)
        })?;
        c.tier_mix.validate().map_err(|e| Error::Config(e.to_string()))?;
        let m = &self.model;
        check(m.embed > 0 && m.hidden > 0, || {
            "model dimensions must be positive".into()
        })?;
        check(m.max_len >= 2, || "model.max_len must be at least 2".into())?;

        let n = c.train_size;
        check_size("im.n_random", self.im.n_random, n)?;
        check_training("im", self.im.lr, self.im.batch_size)?;
        check_size("ci.sample_size", self.ci.sample_size, n)?;
        check_training("ci", self.ci.lr, self.ci.batch_size)?;
        check_training("ms", self.ms.lr, self.ms.batch_size)?;
        check_training("finetune", self.finetune.lr, self.finetune.batch_size)?;
        check_size("cot.source_size", self.cot.source_size, n)?;
        check(!self.cot.kinds.is_empty(), || "cot.kinds must not be empty".into())?;
        check_training("cot", self.cot.lr, self.cot.batch_size)?;
        let d = &self.dpo;
        check_size("dpo.mine_size", d.mine_size, n)?;
        check(d.k >= 2 && d.beam_width >= d.k, || {
            format!(
                "dpo needs 2 <= k <= beam_width, got k={} beam_width={}",
                d.k, d.beam_width
            )
        })?;
        check(d.beta.is_finite() && d.beta > 0.0, || {
            format!("dpo.beta must be positive, got {}", d.beta)
        })?;
        check(d.anchor.is_finite() && d.anchor >= 0.0, || {
            format!("dpo.anchor must be non-negative, got {}", d.anchor)
        })?;
        check_training("dpo", d.lr, d.batch_size)
    }
}
