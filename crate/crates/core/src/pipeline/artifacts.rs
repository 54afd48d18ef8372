use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every file a run produces, by the name used in dependency errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Artifact {
    Catalog,
    Train,
    Test,
    Sessions,
    Im,
    Ci,
    Ms,
    SSelection,
    SSeed,
    SChallenging,
    SelectionReport,
    ImSelect,
    CotRecords,
    CotModel,
    Pairs,
    Final,
    DpoLog,
    Evaluation,
    BiasReport,
    StageTable,
    Summary,
}

impl Artifact {
    pub fn name(self) -> &'static str {
        use Artifact::*;
        match self {
            Catalog => "catalog",
            Train => "D",
            Test => "test",
            Sessions => "sessions",
            Im => "IM",
            Ci => "CI",
            Ms => "MS",
            SSelection => "S_selection",
            SSeed => "S_seed",
            SChallenging => "S_challenging",
            SelectionReport => "selection_report",
            ImSelect => "IM+select",
            CotRecords => "cot_records",
            CotModel => "IM+select+cot",
            Pairs => "pairs",
            Final => "final",
            DpoLog => "dpo_training",
            Evaluation => "evaluation",
            BiasReport => "bias_report",
            StageTable => "stage_table",
            Summary => "summary",
        }
    }

    /// Location relative to the run directory.
    pub fn rel_path(self) -> &'static str {
        use Artifact::*;
        match self {
            Catalog => "corpus/catalog.jsonl",
            Train => "corpus/train.jsonl",
            Test => "corpus/test.jsonl",
            Sessions => "corpus/sessions.jsonl",
            Im => "models/im.ckpt",
            Ci => "models/ci.ckpt",
            Ms => "models/ms.ckpt",
            SSelection => "selection/s_selection.jsonl",
            SSeed => "selection/s_seed.jsonl",
            SChallenging => "selection/s_challenging.jsonl",
            SelectionReport => "selection/selection_report.json",
            ImSelect => "models/im_select.ckpt",
            CotRecords => "cot/cot_records.jsonl",
            CotModel => "models/cot.ckpt",
            Pairs => "prefs/pairs.jsonl",
            Final => "models/final.ckpt",
            DpoLog => "reports/dpo_training.json",
            Evaluation => "reports/evaluation.json",
            BiasReport => "reports/bias_report.json",
            StageTable => "reports/stage_table.txt",
            Summary => "reports/summary.json",
        }
    }
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Config hash and stage seed that produced a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config={} seed={}", self.config_hash, self.seed)
    }
}

/// A JSON report body with its provenance alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}
