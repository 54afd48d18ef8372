use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relevance_core::corpus::{Facets, Lexicon};
use relevance_core::cot::parse_kinds;
use relevance_core::eval::format_stage_table;
use relevance_core::pipeline::{evaluate_dir, Artifact, PipelineConfig, Run, Stage};
use relevance_core::rulejudge::{self, AxisVerdict, ModifierAxis, ProductAxis};
use relevance_core::schema::Tier;
use relevance_core::Error;

/// Overrides the run directory when `--out` is absent.
const OUT_ENV: &str = "RELEVANCE_OUT";
const DEFAULT_OUT: &str = "runs/default";

#[derive(Parser)]
#[command(
    name = "relevance",
    version,
    about = "Train and evaluate the three-stage relevance classifier"
)]
struct Cli {
    /// TOML config; built-in desk defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate catalog, training set, test set and session log.
    GenCorpus,
    /// Train the initial model on a random sample.
    TrainIm,
    /// Train the challenge identifier on a tier-uniform sample.
    TrainCi,
    /// Train the mislabeled supervisor on confound labels.
    TrainMs,
    /// Build the selection sets and fine-tune the initial model on them.
    Select,
    /// Synthesize reasoning records.
    SynthCot {
        #[arg(long)]
        kinds: Option<String>,
    },
    /// Fine-tune on reasoning records of the given kinds.
    TrainCot {
        /// Comma-separated subset of ee,ra,dr.
        #[arg(long)]
        kinds: Option<String>,
    },
    /// Mine preference pairs from beam search.
    MinePrefs {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Preference training from the reasoning checkpoint.
    TrainDpo {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate checkpoints; with --test or --checkpoints, an ad-hoc
    /// evaluation that prints a table and writes nothing.
    Evaluate {
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Write the stage comparison table and summary.
    Report,
    /// Every stage in order.
    RunAll {
        /// Skip stages already complete in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Print the relevance rule, or judge one query against one product.
    Rule {
        #[arg(long, requires = "product")]
        query: Option<String>,
        /// Product facets as JSON.
        #[arg(long, requires = "query")]
        product: Option<String>,
    },
}

enum Failure {
    Validation(String),
    Stage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Stage { .. } | Error::MissingArtifact(_) => Failure::Stage(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Rule { query, product } = &cli.command {
        return rule(query.as_deref(), product.as_deref());
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let stage = match &cli.command {
        Command::GenCorpus => Some(Stage::GenCorpus),
        Command::TrainIm => Some(Stage::TrainIm),
        Command::TrainCi => Some(Stage::TrainCi),
        Command::TrainMs => Some(Stage::TrainMs),
        Command::Select => Some(Stage::Select),
        Command::SynthCot { kinds } | Command::TrainCot { kinds } => {
            if let Some(k) = kinds {
                cfg.cot.kinds = parse_kinds(k)?;
            }
            Some(if matches!(cli.command, Command::SynthCot { .. }) {
                Stage::SynthCot
            } else {
                Stage::TrainCot
            })
        }
        Command::MinePrefs { k } => {
            if let Some(k) = k {
                cfg.dpo.k = *k;
            }
            Some(Stage::MinePrefs)
        }
        Command::TrainDpo { beta, epochs } => {
            if let Some(b) = beta {
                cfg.dpo.beta = *b;
            }
            if let Some(e) = epochs {
                cfg.dpo.epochs = *e;
            }
            Some(Stage::TrainDpo)
        }
        Command::Evaluate { test, checkpoints } if test.is_some() || checkpoints.is_some() => {
            let out = out_dir(&cli);
            let test = test.clone().unwrap_or_else(|| out.join(Artifact::Test.rel_path()));
            let dir = checkpoints.clone().unwrap_or_else(|| out.join("models"));
            let rows = evaluate_dir(&test, &dir).map_err(|e| Failure::Stage(e.to_string()))?;
            print!("{}", format_stage_table(&rows));
            return Ok(());
        }
        Command::Evaluate { .. } => Some(Stage::Evaluate),
        Command::Report => Some(Stage::Report),
        Command::RunAll { .. } => None,
        Command::Rule { .. } => unreachable!(),
    };
    cfg.validate()?;
    let run = Run::open(cfg, out_dir(&cli))?;
    log::info!("run directory {} (config {})", run.dir().display(), run.config_hash());
    match stage {
        Some(s) => run.run_stage(s)?,
        None => {
            let resume = matches!(cli.command, Command::RunAll { resume: true });
            run.run_all(resume)?;
        }
    }
    if matches!(stage, None | Some(Stage::Report)) {
        let table = run.dir().join(Artifact::StageTable.rel_path());
        if let Ok(text) = std::fs::read_to_string(table) {
            print!("{text}");
        }
    }
    Ok(())
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn rule(query: Option<&str>, product: Option<&str>) -> Result<(), Failure> {
    let (Some(query), Some(product)) = (query, product) else {
        print!("{}", rulejudge::rule_text());
        println!();
        for p in [
            ProductAxis::TypeMatch,
            ProductAxis::AccessoryMatch,
            ProductAxis::FunctionMatch,
            ProductAxis::Mismatch,
        ] {
            for m in [
                ModifierAxis::NoModifiers,
                ModifierAxis::Mismatch,
                ModifierAxis::AllMatch,
                ModifierAxis::PartialMatch,
            ] {
                let v = AxisVerdict {
                    product_axis: p,
                    modifier_axis: m,
                };
                println!("{p:?}\t{m:?}\t{}", rulejudge::decide(v).as_str());
            }
        }
        return Ok(());
    };
    let facets: Facets =
        serde_json::from_str(product).map_err(|e| Failure::Validation(format!("product facets: {e}")))?;
    let q = Lexicon::standard().parse_query(query, Tier::Top)?;
    let v = rulejudge::judge_axes(&q, &facets);
    println!(
        "{:?}\t{:?}\t{}",
        v.product_axis,
        v.modifier_axis,
        rulejudge::decide(v).as_str()
    );
    Ok(())
}
