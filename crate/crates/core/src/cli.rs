//! The `geotag` command line. [`run`] returns the process exit status:
//! 0 on success, 1 for data or format errors, 2 for usage errors, and 3 when
//! `gradcheck` finds an error at or above its tolerance.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{
    builtin_gazetteer, builtin_templates, load_corpus, load_templates, preprocess, save_corpus, synth_generate,
    CorpusError, Gazetteer,
};
use crate::embedding::{encode, load_pretrained, EmbeddingError, Pretrained};
use crate::exec::Execution;
use crate::harness::{
    cross_validate, evaluate, fresh_model, load_config, CvError, CvOptions, SweepError, SweepSpec, VocabProtocol,
};
use crate::nn::{load_model, save_model, ModelConfig, ModelFileError, NnError};
use crate::training::{grad_check, randomize_biases, train, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GRADCHECK: i32 = 3;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "geotag",
    version,
    about = "Tag location words in short texts with a convolutional network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus (JSONL) from a gazetteer and templates.
    Synth {
        /// One place name per line; defaults to the bundled list.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// One template per line with `{LOC}` slots; defaults to the bundled list.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on an annotated corpus and write the model file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Per-epoch loss log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a model on an annotated corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Metrics CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag raw text, one input per line, writing JSONL.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Text file, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validation.
    Cv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        folds: FoldArgs,
        /// Fold reports and mean (CSV); printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate a list of architecture variants.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        folds: FoldArgs,
        /// Variant file, one `name: key=value ...` per line.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        /// Built-in variant list: widths (all width subsets of 2-5), layers (conv/dense depth), depths (conv depth 1-4).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backpropagated gradients against finite differences.
    Gradcheck {
        /// Defaults to a small reference model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    corpus: PathBuf,
    /// Key-value config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pretrained word vectors (`word v1 .. vK` per line).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Overrides `seed` from the config file.
    #[arg(long)]
    seed: u64,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct FoldArgs {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Build one vocabulary from the whole corpus instead of per training split.
    #[arg(long)]
    paper_vocab: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Config(#[from] crate::harness::ConfigFileError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::GradCheck(_) => EXIT_GRADCHECK,
            _ => EXIT_DATA,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(io_err(p)),
        None => stdout.write_all(bytes).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

impl Common {
    fn config(&self) -> Result<ModelConfig, CliError> {
        let mut config = match &self.config {
            Some(p) => load_config(p)?,
            None => ModelConfig::default(),
        };
        config.seed = self.seed;
        Ok(config)
    }

    fn pretrained(&self, config: &ModelConfig) -> Result<Option<Pretrained>, CliError> {
        self.embeddings
            .as_deref()
            .map(|p| load_pretrained(p, config.embedding_dim))
            .transpose()
            .map_err(Into::into)
    }
}

impl FoldArgs {
    fn options(&self, sequential: bool) -> Result<CvOptions, CliError> {
        if self.folds < 2 {
            return Err(CliError::Usage(format!(
                "--folds must be at least 2, got {}",
                self.folds
            )));
        }
        Ok(CvOptions {
            folds: self.folds,
            vocab: if self.paper_vocab {
                VocabProtocol::Global
            } else {
                VocabProtocol::PerFold
            },
            execution: execution(sequential),
        })
    }
}

#[derive(Serialize)]
struct Location<'a> {
    index: usize,
    token: &'a str,
}

#[derive(Serialize)]
struct Prediction<'a> {
    text: &'a str,
    tokens: &'a [String],
    locations: Vec<Location<'a>>,
}

/// The reference configuration used by `gradcheck` without `--config`.
pub fn gradcheck_reference_config() -> ModelConfig {
    ModelConfig {
        seq_len: 8,
        embedding_dim: 4,
        filter_widths: vec![2, 3],
        feature_maps: 4,
        pool_window: 5,
        conv_depth: 2,
        dense_depth: 2,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Synth {
            gazetteer,
            templates,
            n,
            seed,
            out,
        } => {
            let gazetteer = match gazetteer {
                Some(p) => Gazetteer::load(&p)?,
                None => builtin_gazetteer(),
            };
            let templates = match templates {
                Some(p) => load_templates(&p)?,
                None => builtin_templates(),
            };
            let corpus = synth_generate(&gazetteer, &templates, n, seed)?;
            save_corpus(&out, &corpus)?;
            let _ = writeln!(stdout, "wrote {} examples to {}", corpus.len(), out.display());
        }
        Command::Train { common, model, log } => {
            let config = common.config()?;
            let corpus = load_corpus(&common.corpus)?;
            let pretrained = common.pretrained(&config)?;
            let mut net = fresh_model(&corpus, &config, pretrained.as_ref())?;
            let train_log = train(&mut net, &corpus, execution(common.sequential))?;
            save_model(&net, &model)?;
            if let Some(p) = log {
                fs::write(&p, train_log.to_csv()).map_err(io_err(&p))?;
            }
            let _ = writeln!(
                stdout,
                "trained {} epochs on {} examples, final loss {:.6}; model written to {}",
                train_log.epochs.len(),
                corpus.len(),
                train_log.final_loss().unwrap_or(f64::NAN),
                model.display()
            );
        }
        Command::Eval { model, corpus, out } => {
            let net = load_model(&model)?;
            let corpus = load_corpus(&corpus)?;
            let report = evaluate(&net, &corpus, Execution::default())?;
            write_output(out.as_deref(), report.to_csv().as_bytes(), stdout)?;
            if out.is_some() {
                let _ = writeln!(stdout, "{report}");
            }
        }
        Command::Predict { model, input, out } => {
            let net = load_model(&model)?;
            let text = if input.as_os_str() == "-" {
                let mut s = String::new();
                io::stdin().read_to_string(&mut s).map_err(io_err(&input))?;
                s
            } else {
                fs::read_to_string(&input).map_err(io_err(&input))?
            };
            let mut buf = Vec::new();
            for line in text.lines() {
                let tokens = preprocess(line);
                let labels = if tokens.is_empty() {
                    Vec::new()
                } else {
                    net.tag_tokens(&tokens)?
                };
                let record = Prediction {
                    text: line,
                    tokens: &tokens,
                    locations: labels
                        .iter()
                        .enumerate()
                        .filter(|(_, &l)| l == 1)
                        .map(|(index, _)| Location {
                            index,
                            token: &tokens[index],
                        })
                        .collect(),
                };
                serde_json::to_writer(&mut buf, &record).expect("in-memory JSON");
                buf.push(b'\n');
            }
            write_output(out.as_deref(), &buf, stdout)?;
        }
        Command::Cv { common, folds, out } => {
            let config = common.config()?;
            let corpus = load_corpus(&common.corpus)?;
            let pretrained = common.pretrained(&config)?;
            let report = cross_validate(
                &corpus,
                &config,
                pretrained.as_ref(),
                &folds.options(common.sequential)?,
            )?;
            write_output(out.as_deref(), report.to_csv().as_bytes(), stdout)?;
            if out.is_some() {
                let _ = writeln!(stdout, "{}", report.mean);
            }
        }
        Command::Sweep {
            common,
            folds,
            spec,
            preset,
            out,
        } => {
            let config = common.config()?;
            let spec = match (spec, preset) {
                (Some(p), _) => SweepSpec::parse(&fs::read_to_string(&p).map_err(io_err(&p))?, &config)?,
                (None, Some(name)) => SweepSpec::preset(&name, &config).map_err(|e| match e {
                    SweepError::UnknownPreset(_) => CliError::Usage(e.to_string()),
                    other => other.into(),
                })?,
                (None, None) => unreachable!("clap requires --spec or --preset"),
            };
            let corpus = load_corpus(&common.corpus)?;
            let pretrained = common.pretrained(&config)?;
            let table = crate::harness::sweep(&corpus, &spec, pretrained.as_ref(), &folds.options(common.sequential)?);
            write_output(out.as_deref(), table.to_csv().as_bytes(), stdout)?;
            if out.is_some() {
                let _ = write!(stdout, "{table}");
            }
        }
        Command::Gradcheck { config, seed, epsilon } => {
            let mut config = match config {
                Some(p) => load_config(&p)?,
                None => gradcheck_reference_config(),
            };
            config.seed = seed;
            config.dropout = 0.0;
            let corpus = synth_generate(&builtin_gazetteer(), &builtin_templates(), 1, seed)?;
            let mut model = fresh_model(&corpus, &config, None)?;
            randomize_biases(&mut model, seed, 0.1);
            let example = encode(&corpus.examples()[0], model.vocab(), config.seq_len);
            let report = grad_check(&mut model, &example, epsilon)?;
            for g in &report.groups {
                let _ = writeln!(
                    stdout,
                    "{:<20} {:>6} params  max rel error {:.3e}",
                    g.name, g.parameters, g.max_relative_error
                );
            }
            if let Some(w) = &report.worst {
                let _ = writeln!(
                    stdout,
                    "worst: {}[{}] analytic {:.6e} numeric {:.6e}",
                    w.group, w.index, w.analytic, w.numeric
                );
            }
            let _ = writeln!(stdout, "max relative error {:.3e}", report.max_relative_error);
            if report.max_relative_error.is_nan() || report.max_relative_error >= GRADCHECK_TOLERANCE {
                return Err(CliError::GradCheck(report.max_relative_error));
            }
        }
    }
    Ok(())
}
