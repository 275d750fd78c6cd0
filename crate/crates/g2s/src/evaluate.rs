//! Corpus scores and paired significance tests from text files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2s_core::metrics::{
    bootstrap_stats, chrf_pp, sentence_stats, wilcoxon_signed_rank, BleuStats, EvalConfig,
    MetricError, WilcoxonMethod,
};
use serde::Serialize;

use crate::Invalid;

pub struct EvaluateOptions {
    pub hyp: PathBuf,
    pub reference: PathBuf,
    pub compare: Option<PathBuf>,
    pub config: EvalConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemScores {
    pub bleu: f64,
    /// Mean sentence-level chrF++.
    pub chrf: f64,
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub other: SystemScores,
    /// Fraction of resamples where the first system's BLEU is not higher.
    pub bootstrap_p: f64,
    pub bootstrap_samples: usize,
    /// Paired test on sentence chrF++.
    pub wilcoxon_statistic: f64,
    pub wilcoxon_p: f64,
    pub wilcoxon_method: String,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub case_sensitive: bool,
    pub bleu_order: usize,
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
    pub bootstrap_samples: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: ReportConfig,
    pub system: SystemScores,
    pub compare: Option<Comparison>,
}

fn lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn invalid(e: MetricError) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

struct Scored {
    stats: Vec<BleuStats>,
    chrf: Vec<f64>,
}

fn score(hyp: &[String], refs: &[String], cfg: &EvalConfig) -> Result<Scored> {
    let stats = sentence_stats(hyp, refs, cfg).map_err(invalid)?;
    let chrf = hyp
        .iter()
        .zip(refs)
        .map(|(h, r)| chrf_pp(h, r, cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    Ok(Scored { stats, chrf })
}

fn summary(s: &Scored) -> SystemScores {
    let mut total = BleuStats::default();
    for st in &s.stats {
        total.add(st);
    }
    SystemScores {
        bleu: total.score(),
        chrf: s.chrf.iter().sum::<f64>() / s.chrf.len() as f64,
        sentences: s.chrf.len(),
    }
}

pub fn evaluate(opts: &EvaluateOptions) -> Result<Report> {
    let cfg = &opts.config;
    cfg.validate().map_err(invalid)?;
    let hyp = lines(&opts.hyp)?;
    let refs = lines(&opts.reference)?;
    let a = score(&hyp, &refs, cfg)?;
    let compare = match &opts.compare {
        None => None,
        Some(path) => {
            let other = lines(path)?;
            let b = score(&other, &refs, cfg)?;
            let boot = bootstrap_stats(&a.stats, &b.stats, cfg.bootstrap_samples, opts.seed).map_err(invalid)?;
            let w = wilcoxon_signed_rank(&a.chrf, &b.chrf).map_err(invalid)?;
            Some(Comparison {
                other: summary(&b),
                bootstrap_p: boot.p_value,
                bootstrap_samples: boot.samples,
                wilcoxon_statistic: w.statistic,
                wilcoxon_p: w.p_value,
                wilcoxon_method: match w.method {
                    WilcoxonMethod::Exact => "exact",
                    WilcoxonMethod::Normal => "normal",
                    WilcoxonMethod::Degenerate => "degenerate",
                }
                .to_string(),
                significant: boot.p_value < cfg.alpha && w.p_value < cfg.alpha,
            })
        }
    };
    Ok(Report {
        config: ReportConfig {
            case_sensitive: cfg.case_sensitive,
            bleu_order: cfg.bleu_order,
            char_order: cfg.char_order,
            word_order: cfg.word_order,
            beta: cfg.beta,
            bootstrap_samples: cfg.bootstrap_samples,
            alpha: cfg.alpha,
            seed: opts.seed,
        },
        system: summary(&a),
        compare,
    })
}
