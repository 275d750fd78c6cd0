//! Command-line entry point.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use g2s_core::amr::EntityTypeTable;
use g2s_core::nmt::ConllColumns;
use g2s_core::tensor::Fault;

use crate::config::{FileConfig, Overrides, RunConfig, Task};
use crate::evaluate::{evaluate, EvaluateOptions};
use crate::gradcheck::gradcheck;
use crate::preprocess::{preprocess, read_entity_types, PreprocessOptions, SplitInput};
use crate::trainer::{run_train, TrainOptions};
use crate::translate::{translate, TranslateOptions};
use crate::Invalid;

#[derive(Debug, Parser)]
#[command(name = "g2s", version, about = "Graph-to-sequence models for AMR generation and syntax-aware translation")]
pub struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub task: Option<Task>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel evaluation and decoding.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw AMR or CoNLL splits into graph files.
    Preprocess(PreprocessArgs),
    /// Train a model from preprocessed splits.
    Train(TrainArgs),
    /// Decode a preprocessed split with one or more checkpoints.
    Translate(TranslateArgs),
    /// Score hypotheses against references.
    Evaluate(EvaluateArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub train_target: Option<PathBuf>,
    #[arg(long)]
    pub dev_target: Option<PathBuf>,
    #[arg(long)]
    pub test_target: Option<PathBuf>,
    /// Alignment JSON lines, one per AMR block.
    #[arg(long)]
    pub train_align: Option<PathBuf>,
    #[arg(long)]
    pub dev_align: Option<PathBuf>,
    #[arg(long)]
    pub test_align: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Fail (exit 1) if any input cannot be processed.
    #[arg(long)]
    pub strict: bool,
    /// `identity`, `coarse`, or a file of `concept<TAB>type` lines.
    #[arg(long, default_value = "coarse")]
    pub entity_types: String,
    /// Form, head and relation columns (0-based), e.g. `1,6,7`.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 6, 7])]
    pub conll_columns: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Split prefix such as `data/train`.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Parameter file or model directory; repeat to ensemble.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Per-sentence JSON lines with tokens, scores and attention.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Second system for bootstrap and Wilcoxon tests.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// JSON report path; stdout if absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bug {
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bits {
    #[value(name = "32")]
    B32,
    #[value(name = "64")]
    B64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// 64 tightens the primitive threshold to 1e-6.
    #[arg(long, value_enum, default_value = "32")]
    pub bits: Bits,
    #[arg(long, value_enum)]
    pub inject_bug: Option<Bug>,
}

fn run_config(cli: &Cli, beam: Option<usize>) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        task: cli.task,
        seed: cli.seed,
        beam,
    };
    RunConfig::resolve(&file, &flags)
}

fn print_json<T: serde::Serialize>(value: &T, path: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Preprocess(a) => {
            let cfg = run_config(&cli, None)?;
            let types = match a.entity_types.as_str() {
                "identity" => EntityTypeTable::identity(),
                "coarse" => EntityTypeTable::coarse(),
                path => read_entity_types(path.as_ref())?,
            };
            let mut splits = Vec::new();
            for (name, source, target, align) in [
                ("train", &a.train, &a.train_target, &a.train_align),
                ("dev", &a.dev, &a.dev_target, &a.dev_align),
                ("test", &a.test, &a.test_target, &a.test_align),
            ] {
                if let Some(source) = source {
                    splits.push(SplitInput {
                        name: name.into(),
                        source: source.clone(),
                        target: target.clone(),
                        alignments: align.clone(),
                    });
                }
            }
            let [form, head, relation] = a.conll_columns[..] else {
                return Err(Invalid("--conll-columns takes exactly three indices".into()).into());
            };
            if splits.is_empty() {
                return Err(Invalid("give at least one of --train, --dev, --test".into()).into());
            }
            let opts = PreprocessOptions {
                task: cfg.task,
                splits,
                output: a.output.clone(),
                strict: a.strict,
                types,
                columns: ConllColumns { form, head, relation },
            };
            let stats = preprocess(&opts)?;
            print_json(&stats, None)?;
        }
        Command::Train(a) => {
            let config = run_config(&cli, None)?;
            let summary = run_train(&TrainOptions {
                config,
                train: a.train.clone(),
                dev: a.dev.clone(),
                output: a.output.clone(),
                quiet: a.quiet,
            })?;
            eprintln!(
                "best checkpoint {} (dev perplexity {:.4}) after {} checkpoints",
                summary.best_checkpoint,
                summary.best_dev_perplexity,
                summary.history.len()
            );
        }
        Command::Translate(a) => {
            let cfg = run_config(&cli, a.beam)?;
            translate(&TranslateOptions {
                checkpoints: a.checkpoint.clone(),
                test: a.test.clone(),
                beam: cfg.beam,
                max_len: cfg.max_len,
                amr: cfg.task.is_amr(),
                output: a.output.clone(),
                trace: a.trace.clone(),
            })?;
        }
        Command::Evaluate(a) => {
            let cfg = run_config(&cli, None)?;
            let report = evaluate(&EvaluateOptions {
                hyp: a.hyp.clone(),
                reference: a.reference.clone(),
                compare: a.compare.clone(),
                config: cfg.eval,
                seed: cfg.seed,
            })?;
            print_json(&report, a.output.as_ref())?;
        }
        Command::Gradcheck(a) => {
            let fault = a.inject_bug.map(|Bug::Sigmoid| Fault::SigmoidGrad);
            let report = gradcheck(if a.bits == Bits::B64 { 64 } else { 32 }, fault, cli.seed.unwrap_or(0))?;
            for c in &report.checks {
                println!(
                    "{:<28} max rel err {:.3e}  threshold {:.0e}  {}",
                    c.name,
                    c.max_rel_error,
                    c.threshold,
                    if c.pass { "pass" } else { "FAIL" }
                );
            }
            if !report.passed() {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Exit code for an error: 1 for invalid input or failed validation, 2
/// otherwise.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.is::<Invalid>()) {
        1
    } else {
        2
    }
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
