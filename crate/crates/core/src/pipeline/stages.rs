use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{ensure_parent, read_json, write_json, Artifact, Provenance, Stamped};
use super::config::PipelineConfig;
use crate::corpus::{gen_catalog, gen_examples, gen_session_log, read_session_log, write_catalog, write_session_log};
use crate::cot::{assemble_cot_training, read_cot_records, train_cot, write_cot_records};
use crate::dpo::{bias_report, margin, mean_margin, mine_pref_pairs, read_pairs, train_dpo, write_pairs, BiasReport};
use crate::error::{Error, Result};
use crate::eval::{business_metrics, format_stage_table, stage_report, BusinessMetrics, StageRow};
use crate::model::Tokenizer;
use crate::schema::{read_dataset, write_dataset, Dataset};
use crate::selection::{
    finetune_on_selection, make_confound_labels, select, train_challenge_identifier, train_initial_model,
    train_mislabeled_supervisor, SelectionReport,
};
use crate::Checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    GenCorpus,
    TrainIm,
    TrainCi,
    TrainMs,
    Select,
    SynthCot,
    TrainCot,
    MinePrefs,
    TrainDpo,
    Evaluate,
    Report,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 11] = [
        Stage::GenCorpus,
        Stage::TrainIm,
        Stage::TrainCi,
        Stage::TrainMs,
        Stage::Select,
        Stage::SynthCot,
        Stage::TrainCot,
        Stage::MinePrefs,
        Stage::TrainDpo,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenCorpus => "gen-corpus",
            Stage::TrainIm => "train-im",
            Stage::TrainCi => "train-ci",
            Stage::TrainMs => "train-ms",
            Stage::Select => "select",
            Stage::SynthCot => "synth-cot",
            Stage::TrainCot => "train-cot",
            Stage::MinePrefs => "mine-prefs",
            Stage::TrainDpo => "train-dpo",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            GenCorpus => &[],
            TrainIm | TrainCi | TrainMs => &[GenCorpus],
            Select => &[TrainIm, TrainCi, TrainMs],
            SynthCot => &[Select],
            TrainCot => &[SynthCot],
            MinePrefs => &[TrainCot],
            TrainDpo => &[MinePrefs],
            Evaluate => &[TrainDpo],
            Report => &[Evaluate],
        }
    }

    /// Everything upstream, transitively, in dependency order.
    pub fn ancestors(self) -> Vec<Stage> {
        let mut seen = vec![false; Stage::ALL.len()];
        let mut stack = self.upstream().to_vec();
        while let Some(s) = stack.pop() {
            if !seen[s as usize] {
                seen[s as usize] = true;
                stack.extend_from_slice(s.upstream());
            }
        }
        Stage::ALL.into_iter().filter(|s| seen[*s as usize]).collect()
    }

    pub fn outputs(self) -> &'static [Artifact] {
        use Artifact::*;
        match self {
            Stage::GenCorpus => &[Catalog, Train, Test, Sessions],
            Stage::TrainIm => &[Im],
            Stage::TrainCi => &[Ci],
            Stage::TrainMs => &[Ms],
            Stage::Select => &[SSelection, SSeed, SChallenging, SelectionReport, ImSelect],
            Stage::SynthCot => &[CotRecords],
            Stage::TrainCot => &[CotModel],
            Stage::MinePrefs => &[Pairs],
            Stage::TrainDpo => &[Final, DpoLog],
            Stage::Evaluate => &[Evaluation, BiasReport],
            Stage::Report => &[StageTable, Summary],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

/// Margins and ranking on the mined pairs before and after preference
/// training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoLog {
    pub pairs: usize,
    pub margin_before: f64,
    pub margin_after: f64,
    /// Share of pairs whose chosen sequence outscores the rejected one.
    pub chosen_ahead_before: f64,
    pub chosen_ahead_after: f64,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub stages: Vec<StageRow>,
    pub business: BusinessMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stages: Vec<StageSummary>,
    pub selection: SelectionReport,
    pub dpo: DpoLog,
    pub bias: BiasReport,
    pub business: BusinessMetrics,
}

const CONFIG_FILE: &str = "config.toml";
const MARKER_DIR: &str = ".stages";

/// A run directory bound to one frozen config.
#[derive(Debug, Clone)]
pub struct Run {
    cfg: PipelineConfig,
    dir: PathBuf,
    hash: String,
}

impl Run {
    /// Validates `cfg` and binds it to `dir`, writing `config.toml` on first
    /// use. A directory frozen with a different config is refused.
    pub fn open(cfg: PipelineConfig, dir: impl Into<PathBuf>) -> Result<Run> {
        cfg.validate()?;
        let dir = dir.into();
        let frozen = dir.join(CONFIG_FILE);
        if frozen.exists() {
            let existing = PipelineConfig::load(&frozen)?;
            if existing != cfg {
                return Err(Error::Config(format!(
                    "{} was created with config {}, not {}",
                    dir.display(),
                    existing.hash(),
                    cfg.hash()
                )));
            }
        } else {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            fs::write(&frozen, cfg.to_toml()).map_err(|e| Error::io(&frozen, e))?;
        }
        let hash = cfg.hash();
        Ok(Run { cfg, dir, hash })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, a: Artifact) -> PathBuf {
        self.dir.join(a.rel_path())
    }

    fn marker(&self, s: Stage) -> PathBuf {
        self.dir.join(MARKER_DIR).join(s.name())
    }

    /// Whether `s` finished under this config and its outputs are present.
    pub fn is_complete(&self, s: Stage) -> bool {
        fs::read_to_string(self.marker(s)).is_ok_and(|h| h.trim() == self.hash)
            && s.outputs().iter().all(|a| self.path(*a).exists())
    }

    fn provenance(&self, seed_name: &str) -> Provenance {
        Provenance {
            config_hash: self.hash.clone(),
            seed: self.cfg.stage_seed(seed_name),
        }
    }

    /// The first missing output of any upstream stage.
    pub fn check_upstream(&self, s: Stage) -> Result<()> {
        for up in s.ancestors() {
            for a in up.outputs() {
                if !self.path(*a).exists() {
                    return Err(Error::MissingArtifact(a.name().to_string()));
                }
            }
        }
        Ok(())
    }

    /// Runs one stage. Failures come back as [`Error::Stage`] naming it.
    pub fn run_stage(&self, s: Stage) -> Result<()> {
        let wrap = |e: Error| Error::Stage {
            stage: s.name().to_string(),
            source: Box::new(e),
        };
        self.check_upstream(s).map_err(wrap)?;
        let t0 = Instant::now();
        log::info!("{s}: starting");
        for a in s.outputs() {
            ensure_parent(&self.path(*a)).map_err(wrap)?;
        }
        let marker = self.marker(s);
        let _ = fs::remove_file(&marker);
        self.execute(s).map_err(wrap)?;
        ensure_parent(&marker).map_err(wrap)?;
        fs::write(&marker, &self.hash).map_err(|e| wrap(Error::io(&marker, e)))?;
        log::info!("{s}: done in {:.1?}", t0.elapsed());
        Ok(())
    }

    /// Every stage in order, stopping at the first failure. With `resume`,
    /// the complete prefix of stages is skipped; everything after the first
    /// stage that has to run is rerun, since its inputs may have changed.
    pub fn run_all(&self, resume: bool) -> Result<()> {
        let mut skipping = resume;
        for s in Stage::ALL {
            skipping &= self.is_complete(s);
            if skipping {
                log::info!("{s}: already complete");
                continue;
            }
            self.run_stage(s)?;
        }
        Ok(())
    }

    fn read_ckpt(&self, a: Artifact) -> Result<Checkpoint> {
        Checkpoint::read(self.path(a))
    }

    fn write_ckpt(&self, mut c: Checkpoint, a: Artifact, seed_name: &str) -> Result<()> {
        c.provenance = self.provenance(seed_name).to_string();
        c.write(self.path(a))
    }

    fn write_set(&self, d: &Dataset, a: Artifact) -> Result<()> {
        let mut d = d.clone();
        d.provenance = self.hash.clone();
        write_dataset(&d, self.path(a))
    }

    fn base_model(&self) -> Result<Checkpoint> {
        let m = &self.cfg.model;
        Checkpoint::init(
            Tokenizer::standard(),
            m.embed,
            m.hidden,
            m.max_len,
            self.cfg.stage_seed("init"),
        )
    }

    fn execute(&self, s: Stage) -> Result<()> {
        let cfg = &self.cfg;
        let seed = |name: &str| cfg.stage_seed(name);
        match s {
            Stage::GenCorpus => {
                let c = &cfg.corpus;
                let catalog = gen_catalog(c.catalog_size, seed("catalog"))?;
                write_catalog(
                    &catalog,
                    &self.provenance("catalog").to_string(),
                    self.path(Artifact::Catalog),
                )?;
                let train = gen_examples(&catalog, c.train_size, &c.tier_mix, c.noise_rate, seed("train"))?;
                self.write_set(&train, Artifact::Train)?;
                // Held-out labels are the clean rule judgments.
                let test = gen_examples(&catalog, c.test_size, &c.tier_mix, 0.0, seed("test"))?;
                self.write_set(&test, Artifact::Test)?;
                let mut log = gen_session_log(&test, c.session_users, seed("sessions"))?;
                log.provenance = self.hash.clone();
                write_session_log(&log, self.path(Artifact::Sessions))
            }
            Stage::TrainIm => {
                let d = read_dataset(self.path(Artifact::Train))?;
                let im = train_initial_model(&self.base_model()?, &d, cfg.im.n_random, &cfg.im.hyper(seed("im")))?;
                self.write_ckpt(im, Artifact::Im, "im")
            }
            Stage::TrainCi => {
                let d = read_dataset(self.path(Artifact::Train))?;
                let ci =
                    train_challenge_identifier(&self.base_model()?, &d, cfg.ci.sample_size, &cfg.ci.hyper(seed("ci")))?;
                self.write_ckpt(ci, Artifact::Ci, "ci")
            }
            Stage::TrainMs => {
                let d = read_dataset(self.path(Artifact::Train))?;
                let pairs = make_confound_labels(&d)?;
                let ms = train_mislabeled_supervisor(&self.base_model()?, &pairs, &cfg.ms.hyper(seed("ms")))?;
                self.write_ckpt(ms, Artifact::Ms, "ms")
            }
            Stage::Select => {
                let d = read_dataset(self.path(Artifact::Train))?;
                let im = self.read_ckpt(Artifact::Im)?;
                let sel = select(&d, &im, &self.read_ckpt(Artifact::Ci)?, &self.read_ckpt(Artifact::Ms)?)?;
                self.write_set(&sel.s_seed, Artifact::SSeed)?;
                self.write_set(&sel.s_challenging, Artifact::SChallenging)?;
                self.write_set(&sel.s_selection, Artifact::SSelection)?;
                write_json(
                    &self.path(Artifact::SelectionReport),
                    &Stamped {
                        provenance: self.provenance("select"),
                        body: &sel.report,
                    },
                )?;
                let tuned = finetune_on_selection(&im, &sel.s_selection, &cfg.finetune.hyper(seed("finetune")))?;
                self.write_ckpt(tuned, Artifact::ImSelect, "finetune")
            }
            Stage::SynthCot => {
                let d = read_dataset(self.path(Artifact::Train))?;
                let src = d.uniform_sample(cfg.cot.source_size, seed("cot-source"))?;
                let records = assemble_cot_training(&src, &self.read_ckpt(Artifact::ImSelect)?)?;
                write_cot_records(
                    &records,
                    &self.provenance("cot-source").to_string(),
                    self.path(Artifact::CotRecords),
                )
            }
            Stage::TrainCot => {
                let records = read_cot_records(self.path(Artifact::CotRecords))?;
                let start = self.read_ckpt(Artifact::ImSelect)?;
                let cot = train_cot(&start, &records, &cfg.cot.kinds, &cfg.cot.hyper(seed("cot")))?;
                self.write_ckpt(cot, Artifact::CotModel, "cot")
            }
            Stage::MinePrefs => {
                let d = read_dataset(self.path(Artifact::Train))?;
                let src = d.uniform_sample(cfg.dpo.mine_size, seed("mine"))?;
                let pairs = mine_pref_pairs(&self.read_ckpt(Artifact::CotModel)?, &src, cfg.dpo.mine_params())?;
                log::info!("mined {} preference pairs from {} examples", pairs.len(), src.len());
                write_pairs(&pairs, &self.provenance("mine").to_string(), self.path(Artifact::Pairs))
            }
            Stage::TrainDpo => {
                let pairs = read_pairs(self.path(Artifact::Pairs))?;
                let start = self.read_ckpt(Artifact::CotModel)?;
                let out = train_dpo(&start, &pairs, &cfg.dpo.hyper(seed("dpo")))?;
                let ahead = |c: &Checkpoint| -> Result<f64> {
                    let mut n = 0;
                    for p in &pairs {
                        n += usize::from(margin(c, p)? > 0.0);
                    }
                    Ok(n as f64 / pairs.len() as f64)
                };
                let log = DpoLog {
                    pairs: pairs.len(),
                    margin_before: mean_margin(&start, &pairs)?,
                    margin_after: mean_margin(&out.checkpoint, &pairs)?,
                    chosen_ahead_before: ahead(&start)?,
                    chosen_ahead_after: ahead(&out.checkpoint)?,
                    epoch_losses: out.epoch_losses,
                };
                write_json(
                    &self.path(Artifact::DpoLog),
                    &Stamped {
                        provenance: self.provenance("dpo"),
                        body: log,
                    },
                )?;
                self.write_ckpt(out.checkpoint, Artifact::Final, "dpo")
            }
            Stage::Evaluate => {
                let test = read_dataset(self.path(Artifact::Test))?;
                let sessions = read_session_log(self.path(Artifact::Sessions))?;
                let models = [Artifact::Im, Artifact::ImSelect, Artifact::CotModel, Artifact::Final]
                    .into_iter()
                    .map(|a| self.read_ckpt(a))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&Checkpoint> = models.iter().collect();
                let eval = Evaluation {
                    stages: stage_report(&refs, &test)?,
                    business: business_metrics(&sessions)?,
                };
                write_json(
                    &self.path(Artifact::Evaluation),
                    &Stamped {
                        provenance: self.provenance("evaluate"),
                        body: eval,
                    },
                )?;
                let bias = bias_report(&models[2], &models[3], &test, cfg.dpo.k)?;
                write_json(
                    &self.path(Artifact::BiasReport),
                    &Stamped {
                        provenance: self.provenance("evaluate"),
                        body: bias,
                    },
                )
            }
            Stage::Report => {
                let eval: Stamped<Evaluation> = read_json(&self.path(Artifact::Evaluation))?;
                let bias: Stamped<BiasReport> = read_json(&self.path(Artifact::BiasReport))?;
                let selection: Stamped<SelectionReport> = read_json(&self.path(Artifact::SelectionReport))?;
                let dpo: Stamped<DpoLog> = read_json(&self.path(Artifact::DpoLog))?;
                let prov = self.provenance("report");
                let table = format!("# {prov}\n{}", format_stage_table(&eval.body.stages));
                let path = self.path(Artifact::StageTable);
                fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
                let summary = Summary {
                    stages: eval
                        .body
                        .stages
                        .iter()
                        .map(|r| StageSummary {
                            stage: r.stage.clone(),
                            macro_f1: r.metrics.macro_f1,
                            weighted_f1: r.metrics.weighted_f1,
                            accuracy: r.metrics.accuracy,
                        })
                        .collect(),
                    selection: selection.body,
                    dpo: dpo.body,
                    bias: bias.body,
                    business: eval.body.business,
                };
                write_json(
                    &self.path(Artifact::Summary),
                    &Stamped {
                        provenance: prov,
                        body: summary,
                    },
                )
            }
        }
    }
}

/// Evaluates every `*.ckpt` in `dir` on `test`: pipeline checkpoints first
/// in stage order, any others after them by file name.
pub fn evaluate_dir(test: &Path, dir: &Path) -> Result<Vec<StageRow>> {
    let test = read_dataset(test)?;
    let order = |name: &str| {
        [Artifact::Im, Artifact::ImSelect, Artifact::CotModel, Artifact::Final]
            .iter()
            .position(|a| a.rel_path().ends_with(name))
            .unwrap_or(usize::MAX)
    };
    let mut files: Vec<(usize, String, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (order(&format!("/{name}")), name, p)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingArtifact(format!("checkpoints in {}", dir.display())));
    }
    let models = files
        .iter()
        .map(|(_, _, p)| Checkpoint::read(p))
        .collect::<Result<Vec<_>>>()?;
    stage_report(&models.iter().collect::<Vec<_>>(), &test)
}
