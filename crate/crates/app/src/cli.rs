use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use spheretopic::corpus::{derive_keywords, StopWords};
use spheretopic::evaluation::{AblationKind, AblationPoint, MetricSelection};
use spheretopic::synthetic::{generate, SyntheticConfig};
use spheretopic::training::{EpochRecord, TrainObserver};
use spheretopic::verify::{run_suite, SUITES};

use crate::api::{serve, AppState};
use crate::config::AppConfig;
use crate::error::{AppError, AppResult};
use crate::service;
use crate::store::ProjectStore;

#[derive(Debug, Parser)]
#[command(name = "spheretopic", version, about = "Spherical neural topic models with keyword guidance")]
pub struct Cli {
    /// Seed for every random component; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration file (sections: vocab, embedding, model, train, keywords).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Project directory holding corpora and models.
    #[arg(long, global = true, env = "SPHERETOPIC_STORE", default_value = "spheretopic-store")]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationArg {
    Radius,
    Kappa,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a labeled synthetic corpus as JSONL.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Build the vocabulary and bag-of-words for a .jsonl or .csv corpus.
    Prepare {
        input: PathBuf,
        /// One stop word per line; replaces the built-in English list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Train spherical word embeddings, or import a word2vec text file.
    Embed {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Train a model; with keywords, stage 1 is followed by keyword matching.
    Train {
        #[arg(long)]
        corpus: String,
        /// JSON list of {name, keywords}.
        #[arg(long, conflicts_with = "derive_keywords")]
        keywords: Option<PathBuf>,
        /// Take tf-idf keywords per class from the corpus labels.
        #[arg(long)]
        derive_keywords: bool,
        /// Print per-epoch progress to stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Rerun stage 2 from the stage-1 checkpoint.
    Finetune {
        #[arg(long)]
        model: String,
        /// Replace the model's keyword groups first.
        #[arg(long)]
        keywords: Option<PathBuf>,
    },
    /// Compute metrics; with no group flags, all groups.
    Eval {
        #[arg(long)]
        model: String,
        #[arg(long)]
        diversity: bool,
        #[arg(long)]
        coherence: bool,
        #[arg(long)]
        clustering: bool,
        #[arg(long)]
        classification: bool,
    },
    /// Print the top words of every topic.
    Topics {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// One line per topic instead of JSON.
        #[arg(long)]
        plain: bool,
    },
    /// Sweep radius or kappa and print the metric table as CSV.
    Ablate {
        #[arg(long)]
        corpus: String,
        #[arg(value_enum)]
        kind: AblationArg,
        /// Comma-separated grid; for kappa, `learned` is the learnable setting.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the numerical oracle suites.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

/// Parses arguments, runs the command and maps errors to JSON on stderr.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = AppError::Usage(e.kind().to_string());
            let mut v = err.to_json();
            v["error"]["detail"] = json!(e.to_string().trim());
            eprintln!("{v}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(Some(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(if matches!(e, AppError::Usage(_)) { 2 } else { 1 })
        }
    }
}

struct Progress;

impl TrainObserver for Progress {
    fn on_epoch(&mut self, r: &EpochRecord, fraction: f64) {
        eprintln!(
            "{:>5.1}% {:?} epoch {:>2} loss {:.4} (recon {:.4}, kl {:.4}, guidance {:.4})",
            100.0 * fraction,
            r.stage,
            r.epoch + 1,
            r.total,
            r.recon,
            r.kl,
            r.guidance
        );
    }
}

struct Quiet;

impl TrainObserver for Quiet {}

fn value<T: serde::Serialize>(v: &T) -> AppResult<Option<Value>> {
    Ok(Some(serde_json::to_value(v)?))
}

pub fn run(cli: Cli) -> AppResult<Option<Value>> {
    let config = AppConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    let open = || ProjectStore::open(&cli.store);
    match cli.command {
        Command::Synth { out, docs, classes } => {
            let mut cfg = SyntheticConfig {
                seed: cli.seed.unwrap_or(0),
                ..SyntheticConfig::default()
            };
            if let Some(d) = docs {
                cfg.num_docs = d;
            }
            if let Some(c) = classes {
                cfg.num_classes = c;
            }
            let corpus = generate(&cfg)?;
            let mut buf = Vec::new();
            for d in &corpus.docs {
                serde_json::to_writer(&mut buf, d)?;
                buf.push(b'\n');
            }
            std::fs::write(&out, buf)?;
            value(&json!({ "path": out, "documents": corpus.docs.len(), "classes": cfg.num_classes }))
        }
        Command::Prepare { input, stopwords } => {
            let docs = service::read_documents(&input)?;
            let (stop, tag) = match &stopwords {
                Some(p) => (StopWords::from_file(p)?, service::file_tag(p)?),
                None => (StopWords::english(), "english".to_string()),
            };
            value(&open()?.prepare(docs, config.vocab, &stop, &tag)?)
        }
        Command::Embed { corpus, from } => {
            let store = open()?;
            let loaded = store.load_corpus(&corpus)?;
            match from {
                Some(p) => service::import_embeddings(&store, &loaded, &p, config.embedding.dim, config.embedding.seed)?,
                None => service::train_embeddings(&store, &loaded, &config.embedding)?,
            };
            value(&store.embedding_meta(&corpus)?)
        }
        Command::Train {
            corpus,
            keywords,
            derive_keywords: derive,
            progress,
        } => {
            let store = open()?;
            let groups = match (keywords, derive) {
                (Some(p), _) => Some(service::read_keyword_file(&p)?),
                (None, true) => {
                    let c = store.load_corpus(&corpus)?;
                    let k = derive_keywords(
                        &c.docs,
                        &c.vocab,
                        config.keywords.per_class,
                        config.keywords.train_frac,
                        config.train.seed,
                    )?;
                    Some(k.groups)
                }
                (None, false) => None,
            };
            let plan = service::plan_training(&store, &corpus, &config, groups)?;
            let meta = if progress {
                service::run_training(&store, &plan, &mut Progress)?
            } else {
                service::run_training(&store, &plan, &mut Quiet)?
            };
            value(&meta)
        }
        Command::Finetune { model, keywords } => {
            let store = open()?;
            if let Some(p) = keywords {
                service::set_keywords(&store, &model, service::read_keyword_file(&p)?)?;
            }
            let train = cli.seed.map(|s| {
                let mut t = store.model_meta(&model).map(|m| m.train).unwrap_or_default();
                t.seed = s;
                t
            });
            value(&service::run_finetune(&store, &model, train, &mut Quiet)?)
        }
        Command::Eval {
            model,
            diversity,
            coherence,
            clustering,
            classification,
        } => {
            let store = open()?;
            let any = diversity || coherence || clustering || classification;
            let select = if any {
                MetricSelection {
                    diversity,
                    coherence,
                    clustering,
                    classification,
                }
            } else {
                MetricSelection::default()
            };
            let seed = match cli.seed {
                Some(s) => s,
                None => store.model_meta(&model)?.train.seed,
            };
            value(&service::evaluate_model(&store, &model, select, seed)?)
        }
        Command::Topics { model, top, plain } => {
            let view = service::topics(&open()?, &model, top)?;
            if plain {
                for t in &view.topics {
                    let group = t.group.as_deref().map(|g| format!(" [{g}]")).unwrap_or_default();
                    println!("topic {}{group}: {}", t.topic, t.words.join(" "));
                }
                return Ok(None);
            }
            value(&view)
        }
        Command::Ablate {
            corpus,
            kind,
            values,
            seeds,
            out,
        } => {
            let grid = ablation_grid(kind, values)?;
            let seeds: Vec<u64> = (0..seeds).map(|s| s + cli.seed.unwrap_or(0)).collect();
            let table = service::ablate(&open()?, &corpus, &config, &grid, &seeds)?;
            let csv = table.to_csv()?;
            match out {
                Some(p) => {
                    std::fs::write(&p, &csv)?;
                    value(&json!({ "path": p, "rows": table.rows.len() }))
                }
                None => {
                    print!("{csv}");
                    Ok(None)
                }
            }
        }
        Command::Verify { suite } => {
            let names: Vec<&str> = match &suite {
                Some(s) => vec![s.as_str()],
                None => SUITES.to_vec(),
            };
            let seed = cli.seed.unwrap_or(0);
            let reports = names
                .iter()
                .map(|n| run_suite(n, seed))
                .collect::<spheretopic::Result<Vec<_>>>()
                .map_err(|e| AppError::Usage(e.to_string()))?;
            let passed = reports.iter().all(|r| r.passed);
            let out = json!({ "passed": passed, "suites": reports });
            if !passed {
                println!("{}", serde_json::to_string_pretty(&out)?);
                return Err(AppError::BadRequest("oracle suite failures".into()));
            }
            Ok(Some(out))
        }
        Command::Serve { addr } => {
            let state = AppState::new(open()?, config);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(&addr, state))?;
            Ok(None)
        }
    }
}

fn ablation_grid(kind: AblationArg, values: Option<Vec<String>>) -> AppResult<Vec<AblationPoint>> {
    let (kind, defaults): (AblationKind, &[&str]) = match kind {
        AblationArg::Radius => (AblationKind::Radius, &["1", "5", "10", "15", "19"]),
        AblationArg::Kappa => (AblationKind::Kappa, &["10", "50", "100", "500", "learned"]),
    };
    let values = values.unwrap_or_else(|| defaults.iter().map(|s| s.to_string()).collect());
    values
        .iter()
        .map(|v| {
            let value = match (kind, v.as_str()) {
                (AblationKind::Kappa, "learned") => None,
                _ => Some(
                    v.parse::<f64>()
                        .map_err(|_| AppError::Usage(format!("grid value `{v}` is not a number")))?,
                ),
            };
            Ok(AblationPoint { kind, value })
        })
        .collect()
}
