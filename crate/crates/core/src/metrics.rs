//! Corpus BLEU, sentence chrF++ and paired significance tests.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("no hypotheses to score")]
    Empty,
    #[error("{left} items against {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty reference")]
    EmptyReference,
    #[error("invalid metric configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub case_sensitive: bool,
    pub bleu_order: usize,
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
    pub bootstrap_samples: usize,
    pub alpha: f64,
}

impl EvalConfig {
    /// Case-insensitive scoring used for AMR generation.
    pub fn amr() -> Self {
        EvalConfig {
            case_sensitive: false,
            bleu_order: 4,
            char_order: 6,
            word_order: 2,
            beta: 2.0,
            bootstrap_samples: 1000,
            alpha: 0.05,
        }
    }

    /// Case-sensitive scoring used for translation.
    pub fn nmt() -> Self {
        EvalConfig {
            case_sensitive: true,
            ..Self::amr()
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = if self.bleu_order == 0 {
            "bleu_order must be at least 1"
        } else if self.char_order + self.word_order == 0 {
            "chrF needs at least one n-gram order"
        } else if !(self.beta > 0.0) {
            "beta must be positive"
        } else if self.bootstrap_samples < 100 {
            "bootstrap_samples must be at least 100"
        } else if !(self.alpha > 0.0 && self.alpha < 1.0) {
            "alpha must lie in (0, 1)"
        } else {
            return Ok(());
        };
        Err(MetricError::Config(bad.into()))
    }

    fn cased<'a>(&self, s: &'a str) -> Cow<'a, str> {
        if self.case_sensitive {
            Cow::Borrowed(s)
        } else {
            Cow::Owned(s.to_lowercase())
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::amr()
    }
}

fn ngram_counts<T: Ord + Clone>(items: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches of hypothesis n-grams against the reference.
fn overlap<T: Ord + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, h.values().sum(), r.values().sum())
}

/// Sufficient statistics of corpus BLEU; they add across sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new(hyp: &str, reference: &str, cfg: &EvalConfig) -> Self {
        let (hyp, reference) = (cfg.cased(hyp), cfg.cased(reference));
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        let (matches, totals) = (1..=cfg.bleu_order)
            .map(|n| {
                let (m, t, _) = overlap(&h, &r, n);
                (m, t)
            })
            .unzip();
        BleuStats {
            matches,
            totals,
            hyp_len: h.len(),
            ref_len: r.len(),
        }
    }

    pub fn add(&mut self, other: &BleuStats) {
        if self.matches.is_empty() {
            self.matches = vec![0; other.matches.len()];
            self.totals = vec![0; other.totals.len()];
        }
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Unsmoothed BLEU in [0, 100].
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let order = self.matches.len() as f64;
        let log_precision: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| libm::log(m as f64 / t as f64))
            .sum::<f64>()
            / order;
        let bp = if self.hyp_len < self.ref_len {
            1.0 - self.ref_len as f64 / self.hyp_len as f64
        } else {
            0.0
        };
        100.0 * libm::exp(log_precision + bp)
    }
}

fn check_pair(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn sentence_stats<S: AsRef<str>, R: AsRef<str>>(
    hyps: &[S],
    refs: &[R],
    cfg: &EvalConfig,
) -> Result<Vec<BleuStats>, MetricError> {
    check_pair(hyps.len(), refs.len())?;
    Ok(hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| BleuStats::new(h.as_ref(), r.as_ref(), cfg))
        .collect())
}

/// Corpus BLEU over whitespace tokens with one reference per hypothesis.
pub fn bleu<S: AsRef<str>, R: AsRef<str>>(
    hyps: &[S],
    refs: &[R],
    cfg: &EvalConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    let mut total = BleuStats::default();
    for s in sentence_stats(hyps, refs, cfg)? {
        total.add(&s);
    }
    Ok(total.score())
}

/// Splits a leading or trailing ASCII punctuation mark off each word.
fn words_with_punct(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for w in s.split_whitespace() {
        let mut chars = w.chars();
        let first = chars.next();
        let last = w.chars().next_back();
        if w.chars().count() == 1 {
            out.push(w);
        } else if last.is_some_and(|c| c.is_ascii_punctuation()) {
            let cut = w.len() - 1;
            out.extend([&w[..cut], &w[cut..]]);
        } else if first.is_some_and(|c| c.is_ascii_punctuation()) {
            out.extend([&w[..1], &w[1..]]);
        } else {
            out.push(w);
        }
    }
    out
}

/// Sentence chrF++: character n-grams (whitespace removed) and word n-grams,
/// with precision and recall averaged over the orders both sides have
/// before the F-score.
pub fn chrf_pp(hyp: &str, reference: &str, cfg: &EvalConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    if reference.trim().is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let (hyp, reference) = (cfg.cased(hyp), cfg.cased(reference));
    let chars = |s: &str| -> Vec<char> { s.chars().filter(|c| !c.is_whitespace()).collect() };
    let (hc, rc) = (chars(&hyp), chars(&reference));
    let (hw, rw) = (words_with_punct(&hyp), words_with_punct(&reference));
    let mut stats = Vec::new();
    stats.extend((1..=cfg.char_order).map(|n| overlap(&hc, &rc, n)));
    stats.extend((1..=cfg.word_order).map(|n| overlap(&hw, &rw, n)));
    // Orders absent from either side are left out of the averages.
    let (mut p, mut r, mut k) = (0.0, 0.0, 0usize);
    for &(m, h, rf) in &stats {
        if h > 0 && rf > 0 {
            p += m as f64 / h as f64;
            r += m as f64 / rf as f64;
            k += 1;
        }
    }
    if k == 0 || p + r == 0.0 {
        return Ok(0.0);
    }
    let (p, r) = (p / k as f64, r / k as f64);
    let b2 = cfg.beta * cfg.beta;
    Ok(100.0 * (1.0 + b2) * p * r / (b2 * p + r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bootstrap {
    pub bleu_a: f64,
    pub bleu_b: f64,
    /// Fraction of resamples where A does not beat B.
    pub p_value: f64,
    pub samples: usize,
}

/// Resampling test of "A has higher corpus BLEU than B" over precomputed
/// sentence statistics. Resample `i` draws from stream `i` of the seed.
pub fn bootstrap_stats(a: &[BleuStats], b: &[BleuStats], samples: usize, seed: u64) -> Result<Bootstrap, MetricError> {
    check_pair(a.len(), b.len())?;
    let corpus = |s: &[BleuStats]| {
        let mut t = BleuStats::default();
        s.iter().for_each(|x| t.add(x));
        t.score()
    };
    let n = a.len();
    let mut not_better = 0usize;
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (mut ta, mut tb) = (BleuStats::default(), BleuStats::default());
        for _ in 0..n {
            let j = rng.random_range(0..n);
            ta.add(&a[j]);
            tb.add(&b[j]);
        }
        if ta.score() <= tb.score() {
            not_better += 1;
        }
    }
    Ok(Bootstrap {
        bleu_a: corpus(a),
        bleu_b: corpus(b),
        p_value: not_better as f64 / samples.max(1) as f64,
        samples,
    })
}

/// Paired bootstrap resampling on corpus BLEU. Identical systems give
/// p = 1 since ties count against A.
pub fn bootstrap_significance<S: AsRef<str>>(
    sys_a: &[S],
    sys_b: &[S],
    refs: &[S],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Bootstrap, MetricError> {
    cfg.validate()?;
    check_pair(sys_a.len(), sys_b.len())?;
    let a = sentence_stats(sys_a, refs, cfg)?;
    let b = sentence_stats(sys_b, refs, cfg)?;
    bootstrap_stats(&a, &b, cfg.bootstrap_samples, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wilcoxon {
    /// min(W+, W-).
    pub statistic: f64,
    /// Rank sum of positive differences (A > B).
    pub w_plus: f64,
    /// Non-zero differences.
    pub n: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

const EXACT_LIMIT: usize = 20;

/// Average ranks of `values` (1-based), ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

/// Wilcoxon signed-rank test on paired scores. Zero differences are
/// dropped and tied magnitudes share average ranks. Below 20 pairs the
/// p-value comes from the exact null distribution of the (tied) ranks,
/// otherwise from the tie-corrected normal approximation without
/// continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon, MetricError> {
    check_pair(a.len(), b.len())?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(Wilcoxon {
            statistic: 0.0,
            w_plus: 0.0,
            n,
            p_value: 1.0,
            method: WilcoxonMethod::Degenerate,
        });
    }
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&mags);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).fold(0.0, |s, (r, _)| s + r);
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);
    let (p_value, method) = if n < EXACT_LIMIT {
        (exact_p(&ranks, w_plus), WilcoxonMethod::Exact)
    } else {
        let mean = total / 2.0;
        let mut ties = BTreeMap::new();
        for r in &ranks {
            *ties.entry(libm::round(r * 2.0) as i64).or_insert(0usize) += 1;
        }
        let correction: f64 = ties.values().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - correction;
        let z = (w_plus - mean).abs() / libm::sqrt(var);
        ((2.0 * normal_sf(z)).min(1.0), WilcoxonMethod::Normal)
    };
    Ok(Wilcoxon {
        statistic,
        w_plus,
        n,
        p_value,
        method,
    })
}

/// Two-sided exact p of W+ under random signs. Ranks are halves at worst,
/// so doubled ranks are integers and the distribution is counted exactly.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| libm::round(r * 2.0) as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let observed = libm::round(w_plus * 2.0) as usize;
    let all = (1u64 << ranks.len()) as f64;
    let lower: u64 = counts[..=observed].iter().sum();
    let upper: u64 = counts[observed..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}
