//! Replicate score distributions under both hypotheses, exceedance
//! p-values, reverse-percentile confidence intervals, effect sizes, and
//! null-calibration diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{
    generate_alt, generate_gold, generate_null, generate_pair, GenerationConfig, ResponseTable,
    TripleSample,
};
use crate::metrics::{comparison_statistic, MetricKind};
use crate::sampling::SeedSpec;

/// Which generative law a score distribution was drawn under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    #[serde(rename = "alt")]
    Alternative,
    Null,
}

impl Hypothesis {
    fn index(self) -> u64 {
        match self {
            Hypothesis::Alternative => 0,
            Hypothesis::Null => 1,
        }
    }
}

/// How the p-value compares the two score distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    /// All-pairs exceedance: mean over alternative scores of the fraction
    /// of null scores at or above each.
    #[default]
    AllPairs,
    /// Fraction of null scores at or above the mean alternative score.
    MeanVsNull,
}

impl std::str::FromStr for PValueMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all-pairs" | "all_pairs" | "allpairs" => Ok(PValueMethod::AllPairs),
            "mean-vs-null" | "mean_vs_null" => Ok(PValueMethod::MeanVsNull),
            other => Err(Error::InvalidInput(format!(
                "unknown p-value method {other:?}; expected all-pairs | mean-vs-null"
            ))),
        }
    }
}

/// Replicate values of the comparison statistic under one hypothesis, in
/// generation order.
#[derive(Debug, Clone)]
pub struct ScoreDistribution {
    pub scores: Vec<f64>,
    pub hypothesis: Hypothesis,
    pub metric: MetricKind,
}

impl ScoreDistribution {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    fn sample_variance(&self) -> f64 {
        let n = self.scores.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
    }
}

/// The outcome of one grid cell or one-off simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub metric: MetricKind,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_width: f64,
    /// Mean of the alternative score distribution.
    pub effect_size: f64,
    /// (mean alt - mean null) / pooled standard deviation.
    pub effect_size_standardized: f64,
    pub r_replicates: usize,
    pub n_items: usize,
    pub k_responses: usize,
    pub nk_budget: u64,
    pub n_categories: usize,
    pub epsilon: f64,
    pub master_seed: u64,
}

/// Knobs shared by `run_test` callers.
#[derive(Debug, Clone)]
pub struct TestOptions {
    pub replicates: usize,
    pub lambda: f64,
    pub p_method: PValueMethod,
    /// Share item parameters and gold between hypotheses within a
    /// replicate (variance reduction; off by default).
    pub paired: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            replicates: 1000,
            lambda: 0.5,
            p_method: PValueMethod::AllPairs,
            paired: false,
        }
    }
}

fn replicate_stream(seed: &SeedSpec, hypothesis: Hypothesis, rep: usize) -> SeedSpec {
    seed.child("hyp", hypothesis.index()).child("rep", rep as u64)
}

fn score_of(triple: &TripleSample, metric: MetricKind, lambda: f64) -> Result<f64> {
    comparison_statistic(metric, &triple.model_a, &triple.model_b, &triple.gold, lambda)
        .map(|s| s.value)
}

/// Generates `r` independent replicates under one hypothesis and scores
/// each. Replicate `rep` always uses the substream
/// `seed/hyp=<h>/rep=<rep>`, so results are identical for any worker
/// count, and they land in replicate order.
pub fn replicate_scores(
    config: &GenerationConfig,
    metric: MetricKind,
    hypothesis: Hypothesis,
    r: usize,
    lambda: f64,
    seed: &SeedSpec,
) -> Result<ScoreDistribution> {
    if r == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let slots: Vec<Result<f64>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut stream = replicate_stream(seed, hypothesis, rep).stream();
            let triple = match hypothesis {
                Hypothesis::Alternative => generate_alt(config, &mut stream),
                Hypothesis::Null => generate_null(config, &mut stream),
            };
            score_of(&triple, metric, lambda)
        })
        .collect();
    let mut scores = Vec::with_capacity(r);
    for slot in slots {
        scores.push(slot?);
    }
    Ok(ScoreDistribution {
        scores,
        hypothesis,
        metric,
    })
}

/// Builds the alternative and null score distributions with `r`
/// replicates each. With `paired`, both hypotheses of replicate `rep`
/// share one substream (`seed/rep=<rep>`) and hence one set of item
/// parameters and gold responses.
pub fn score_distributions_with(
    config: &GenerationConfig,
    metric: MetricKind,
    r: usize,
    lambda: f64,
    seed: &SeedSpec,
    paired: bool,
) -> Result<(ScoreDistribution, ScoreDistribution)> {
    if !paired {
        let alt = replicate_scores(config, metric, Hypothesis::Alternative, r, lambda, seed)?;
        let null = replicate_scores(config, metric, Hypothesis::Null, r, lambda, seed)?;
        return Ok((alt, null));
    }
    if r == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let slots: Vec<Result<(f64, f64)>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut stream = seed.child("rep", rep as u64).stream();
            let (alt, null) = generate_pair(config, &mut stream);
            Ok((score_of(&alt, metric, lambda)?, score_of(&null, metric, lambda)?))
        })
        .collect();
    let mut alt_scores = Vec::with_capacity(r);
    let mut null_scores = Vec::with_capacity(r);
    for slot in slots {
        let (a, n) = slot?;
        alt_scores.push(a);
        null_scores.push(n);
    }
    Ok((
        ScoreDistribution {
            scores: alt_scores,
            hypothesis: Hypothesis::Alternative,
            metric,
        },
        ScoreDistribution {
            scores: null_scores,
            hypothesis: Hypothesis::Null,
            metric,
        },
    ))
}

/// Independent-replicate score distributions (the default mode).
pub fn score_distributions(
    config: &GenerationConfig,
    metric: MetricKind,
    r: usize,
    lambda: f64,
    seed: &SeedSpec,
) -> Result<(ScoreDistribution, ScoreDistribution)> {
    score_distributions_with(config, metric, r, lambda, seed, false)
}

fn check_pair(alt: &ScoreDistribution, null: &ScoreDistribution) -> Result<()> {
    if alt.metric != null.metric {
        return Err(Error::InvalidInput(format!(
            "score distributions disagree on metric: {} vs {}",
            alt.metric, null.metric
        )));
    }
    if alt.is_empty() || null.is_empty() {
        return Err(Error::InvalidInput("score distributions must be non-empty".into()));
    }
    Ok(())
}

fn count_at_or_above(sorted: &[f64], x: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < x)
}

/// All-pairs exceedance: the proportion of (alternative, null) score
/// pairs where the null value is at or above the alternative value. Ties
/// count as exceeding.
pub fn p_value(alt: &ScoreDistribution, null: &ScoreDistribution) -> Result<f64> {
    check_pair(alt, null)?;
    let mut sorted_null = null.scores.clone();
    sorted_null.sort_by(f64::total_cmp);
    let total: usize = alt
        .scores
        .iter()
        .map(|&a| count_at_or_above(&sorted_null, a))
        .sum();
    Ok(total as f64 / (alt.len() as f64 * null.len() as f64))
}

/// Sensitivity-analysis variant: the fraction of null scores at or above
/// the mean alternative score.
pub fn p_value_vs_mean(alt: &ScoreDistribution, null: &ScoreDistribution) -> Result<f64> {
    check_pair(alt, null)?;
    let mean = alt.mean();
    let hits = null.scores.iter().filter(|&&v| v >= mean).count();
    Ok(hits as f64 / null.len() as f64)
}

fn p_value_by(method: PValueMethod, alt: &ScoreDistribution, null: &ScoreDistribution) -> Result<f64> {
    match method {
        PValueMethod::AllPairs => p_value(alt, null),
        PValueMethod::MeanVsNull => p_value_vs_mean(alt, null),
    }
}

/// Minimum replicate count for the reverse-percentile interval.
pub const MIN_CI_REPLICATES: usize = 40;

/// 95% reverse-percentile interval: with scores sorted ascending and
/// 0-based indices `hi = floor(0.975 R)`, `lo = floor(0.025 R)`, the
/// bounds are `2 * mean - sorted[hi]` and `2 * mean - sorted[lo]`. At
/// R = 1000 the indices are 975 and 25.
pub fn confidence_interval(alt: &ScoreDistribution) -> Result<(f64, f64)> {
    let r = alt.len();
    if r < MIN_CI_REPLICATES {
        return Err(Error::InsufficientReplicates {
            needed: MIN_CI_REPLICATES,
            got: r,
        });
    }
    let mut sorted = alt.scores.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = alt.mean();
    let hi = (0.975 * r as f64).floor() as usize;
    let lo = (0.025 * r as f64).floor() as usize;
    Ok((2.0 * mean - sorted[hi], 2.0 * mean - sorted[lo]))
}

/// Effect size: the mean of the alternative score distribution, in the
/// oriented statistic's units.
pub fn effect_size(alt: &ScoreDistribution) -> f64 {
    alt.mean()
}

/// Standardized effect size: (mean alt - mean null) over the pooled
/// standard deviation. Zero when the pooled deviation vanishes.
pub fn standardized_effect_size(alt: &ScoreDistribution, null: &ScoreDistribution) -> f64 {
    let pooled = ((alt.sample_variance() + null.sample_variance()) / 2.0).sqrt();
    if pooled <= 0.0 {
        return 0.0;
    }
    (alt.mean() - null.mean()) / pooled
}

/// Unbiased within-item response-variance proxy of one table: mean over
/// items of `(1/M) * sum_m p_im (1 - p_im) * K / (K - 1)`.
pub fn within_item_variance_of(table: &ResponseTable) -> Result<f64> {
    let k = table.k_responses();
    if k < 2 {
        return Err(Error::UndefinedDiagnostic(
            "within-item variance needs K >= 2".into(),
        ));
    }
    let m = table.n_categories();
    let correction = k as f64 / (k as f64 - 1.0);
    let mut total = 0.0;
    for row in table.rows() {
        let mut counts = vec![0.0; m];
        for &c in row {
            counts[c as usize] += 1.0;
        }
        let item: f64 = counts
            .iter()
            .map(|c| {
                let p = c / k as f64;
                p * (1.0 - p)
            })
            .sum::<f64>()
            / m as f64;
        total += item * correction;
    }
    Ok(total / table.n_items() as f64)
}

/// Monte Carlo estimate of the within-item variance of gold tables drawn
/// from `config`, averaged over `r` replicates (replicate `rep` uses
/// `seed/rep=<rep>`).
pub fn within_item_variance(config: &GenerationConfig, r: usize, seed: &SeedSpec) -> Result<f64> {
    if config.k_responses() < 2 {
        return Err(Error::UndefinedDiagnostic(
            "within-item variance needs K >= 2".into(),
        ));
    }
    if r == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let slots: Vec<Result<f64>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut stream = seed.child("rep", rep as u64).stream();
            within_item_variance_of(&generate_gold(config, &mut stream))
        })
        .collect();
    let mut total = 0.0;
    for slot in slots {
        total += slot?;
    }
    Ok(total / r as f64)
}

/// Raw replicate scores in generation order, for external plotting.
pub fn export_score_histogram(dist: &ScoreDistribution) -> Vec<f64> {
    dist.scores.clone()
}

/// Composes generation, scoring, the p-value, the interval, and effect
/// sizes into one `TestResult`. `nk_budget` is echoed as requested (it
/// may exceed `n * k` when the split does not divide evenly).
pub fn run_test(
    config: &GenerationConfig,
    metric: MetricKind,
    options: &TestOptions,
    seed: &SeedSpec,
    nk_budget: u64,
) -> Result<(TestResult, ScoreDistribution, ScoreDistribution)> {
    if options.replicates < MIN_CI_REPLICATES {
        return Err(Error::InsufficientReplicates {
            needed: MIN_CI_REPLICATES,
            got: options.replicates,
        });
    }
    let (alt, null) = score_distributions_with(
        config,
        metric,
        options.replicates,
        options.lambda,
        seed,
        options.paired,
    )?;
    let p = p_value_by(options.p_method, &alt, &null)?;
    let (ci_lower, ci_upper) = confidence_interval(&alt)?;
    let result = TestResult {
        metric,
        p_value: p,
        ci_lower,
        ci_upper,
        ci_width: ci_upper - ci_lower,
        effect_size: effect_size(&alt),
        effect_size_standardized: standardized_effect_size(&alt, &null),
        r_replicates: options.replicates,
        n_items: config.n_items(),
        k_responses: config.k_responses(),
        nk_budget,
        n_categories: config.n_categories(),
        epsilon: config.epsilon(),
        master_seed: seed.master_seed(),
    };
    Ok((result, alt, null))
}

/// Null-calibration summary over repeated runs (normally at epsilon = 0).
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub runs: usize,
    pub replicates: usize,
    pub threshold: f64,
    /// Fraction of per-replicate exceedance p-values at or below the
    /// threshold, pooled across runs. Each compares one alternative draw
    /// against the run's null distribution and is uniform under the null,
    /// so this should sit near the threshold.
    pub rejection_rate: f64,
    /// Mean all-pairs p-value across runs (concentrates near 0.5 under
    /// the null).
    pub mean_p_value: f64,
    /// Fraction of runs whose all-pairs p-value falls at or below the
    /// threshold. The all-pairs statistic concentrates near 0.5 under the
    /// null, so this is near zero for calibrated machinery.
    pub all_pairs_rejection_rate: f64,
}

/// Runs `runs` independent calibration rounds: each draws both score
/// distributions, computes the classical per-replicate p-values (one
/// alternative draw against the null sample) and the run-level all-pairs
/// p-value. Run `i` uses the substream `seed/run=<i>`.
pub fn calibrate_null(
    config: &GenerationConfig,
    metric: MetricKind,
    runs: usize,
    replicates: usize,
    lambda: f64,
    threshold: f64,
    seed: &SeedSpec,
) -> Result<CalibrationReport> {
    if runs == 0 {
        return Err(Error::InvalidInput("need at least one calibration run".into()));
    }
    let slots: Vec<Result<(usize, usize, f64)>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let run_seed = seed.child("run", run as u64);
            let (alt, null) =
                score_distributions(config, metric, replicates, lambda, &run_seed)?;
            let mut sorted_null = null.scores.clone();
            sorted_null.sort_by(f64::total_cmp);
            let r_null = sorted_null.len() as f64;
            let mut rejections = 0usize;
            let mut exceed_total = 0usize;
            for &a in &alt.scores {
                let hits = count_at_or_above(&sorted_null, a);
                exceed_total += hits;
                if hits as f64 / r_null <= threshold {
                    rejections += 1;
                }
            }
            let all_pairs = exceed_total as f64 / (alt.len() as f64 * r_null);
            Ok((rejections, alt.len(), all_pairs))
        })
        .collect();
    let mut rejections = 0usize;
    let mut trials = 0usize;
    let mut p_sum = 0.0;
    let mut all_pairs_rejections = 0usize;
    for slot in slots {
        let (rej, n, all_pairs) = slot?;
        rejections += rej;
        trials += n;
        p_sum += all_pairs;
        if all_pairs <= threshold {
            all_pairs_rejections += 1;
        }
    }
    Ok(CalibrationReport {
        runs,
        replicates,
        threshold,
        rejection_rate: rejections as f64 / trials as f64,
        mean_p_value: p_sum / runs as f64,
        all_pairs_rejection_rate: all_pairs_rejections as f64 / runs as f64,
    })
}
