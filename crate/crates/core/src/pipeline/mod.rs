//! Stage orchestration: a frozen config, per-stage seeds, and a run
//! directory of artifacts that each record the config hash that made them.

mod artifacts;
mod config;
mod stages;

pub use artifacts::{read_json, write_json, Artifact, Provenance, Stamped};
pub use config::{
    CiConfig, CorpusConfig, CotConfig, DpoConfig, FinetuneConfig, ImConfig, ModelConfig, MsConfig, PipelineConfig,
};
pub use stages::{evaluate_dir, DpoLog, Evaluation, Run, Stage, StageSummary, Summary};
