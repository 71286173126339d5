//! Gold-referenced comparison metrics: plurality accuracy, total
//! variation (mean per-item L1, range [0, 2]), wins, and smoothed KL
//! divergence, plus the oriented A-vs-B statistic fed to hypothesis
//! testing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::ResponseTable;
use crate::sampling::CategoryDistribution;

/// The four supported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    #[serde(rename = "tv")]
    TotalVariation,
    Wins,
    #[serde(rename = "kl")]
    KlDivergence,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Accuracy,
        MetricKind::TotalVariation,
        MetricKind::Wins,
        MetricKind::KlDivergence,
    ];
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::TotalVariation => "tv",
            MetricKind::Wins => "wins",
            MetricKind::KlDivergence => "kl",
        };
        f.write_str(name)
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(MetricKind::Accuracy),
            "tv" | "total_variation" | "total-variation" => Ok(MetricKind::TotalVariation),
            "wins" => Ok(MetricKind::Wins),
            "kl" | "kl_divergence" | "kl-divergence" => Ok(MetricKind::KlDivergence),
            other => Err(Error::InvalidInput(format!(
                "unknown metric {other:?}; expected accuracy | tv | wins | kl"
            ))),
        }
    }
}

/// One oriented comparison score: positive values mean A sits closer to
/// gold than B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonScore {
    pub value: f64,
    pub metric: MetricKind,
}

/// Most frequent category in a row; ties break toward the lowest index.
pub fn plurality_vote(row: &[u16], n_categories: usize) -> Result<usize> {
    if row.is_empty() {
        return Err(Error::InvalidInput("plurality vote of an empty row".into()));
    }
    let mut counts = vec![0usize; n_categories];
    for &c in row {
        counts[c as usize] += 1;
    }
    let mut best = 0;
    for m in 1..n_categories {
        if counts[m] > counts[best] {
            best = m;
        }
    }
    Ok(best)
}

/// Normalized response frequencies of one row.
pub fn empirical_dist(row: &[u16], n_categories: usize) -> Result<CategoryDistribution> {
    if row.is_empty() {
        return Err(Error::InvalidInput("empirical distribution of an empty row".into()));
    }
    let k = row.len() as f64;
    let mut probs = vec![0.0; n_categories];
    for &c in row {
        probs[c as usize] += 1.0;
    }
    for p in &mut probs {
        *p /= k;
    }
    CategoryDistribution::new(probs)
}

fn check_items(x: &ResponseTable, g: &ResponseTable) -> Result<()> {
    if x.n_items() != g.n_items() {
        return Err(Error::ShapeMismatch(format!(
            "tables disagree on item count: {} vs {}",
            x.n_items(),
            g.n_items()
        )));
    }
    Ok(())
}

fn check_items_categories(x: &ResponseTable, g: &ResponseTable) -> Result<()> {
    check_items(x, g)?;
    if x.n_categories() != g.n_categories() {
        return Err(Error::ShapeMismatch(format!(
            "tables disagree on category count: {} vs {}",
            x.n_categories(),
            g.n_categories()
        )));
    }
    Ok(())
}

/// Fraction of items whose plurality votes agree between `x` and gold.
/// The tables may have different K; votes are per-table.
pub fn accuracy(x: &ResponseTable, g: &ResponseTable) -> Result<f64> {
    check_items_categories(x, g)?;
    let mut agree = 0usize;
    for i in 0..x.n_items() {
        let vx = plurality_vote(x.row(i), x.n_categories())?;
        let vg = plurality_vote(g.row(i), g.n_categories())?;
        if vx == vg {
            agree += 1;
        }
    }
    Ok(agree as f64 / x.n_items() as f64)
}

fn row_counts(row: &[u16], n_categories: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_categories];
    for &c in row {
        counts[c as usize] += 1.0;
    }
    counts
}

fn item_l1(row_x: &[u16], row_g: &[u16], n_categories: usize) -> f64 {
    let cx = row_counts(row_x, n_categories);
    let cg = row_counts(row_g, n_categories);
    let kx = row_x.len() as f64;
    let kg = row_g.len() as f64;
    cx.iter()
        .zip(&cg)
        .map(|(a, b)| (a / kx - b / kg).abs())
        .sum()
}

/// Mean per-item L1 distance between the empirical distributions of `x`
/// and gold. Range [0, 2]; this is the full L1, not the halved
/// total-variation convention.
pub fn total_variation(x: &ResponseTable, g: &ResponseTable) -> Result<f64> {
    check_items_categories(x, g)?;
    let m = x.n_categories();
    let total: f64 = (0..x.n_items()).map(|i| item_l1(x.row(i), g.row(i), m)).sum();
    Ok(total / x.n_items() as f64)
}

/// Mean per-item `KL(gold || x)` with additive smoothing `lambda` applied
/// to both tables: `(count + lambda) / (K + lambda * M)`. Natural log.
/// With `lambda = 0`, an empty `x` cell under positive gold mass is an
/// error rather than a silent infinity.
pub fn kl_divergence(x: &ResponseTable, g: &ResponseTable, lambda: f64) -> Result<f64> {
    check_items_categories(x, g)?;
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing must be finite and >= 0, got {lambda}"
        )));
    }
    let m = x.n_categories();
    let mut total = 0.0;
    for i in 0..x.n_items() {
        let cx = row_counts(x.row(i), m);
        let cg = row_counts(g.row(i), m);
        let zx = x.row(i).len() as f64 + lambda * m as f64;
        let zg = g.row(i).len() as f64 + lambda * m as f64;
        for c in 0..m {
            let pg = (cg[c] + lambda) / zg;
            if pg == 0.0 {
                continue;
            }
            let px = (cx[c] + lambda) / zx;
            if px == 0.0 {
                return Err(Error::InfiniteDivergence { item: i, category: c });
            }
            total += pg * (pg / px).ln();
        }
    }
    Ok(total / x.n_items() as f64)
}

/// Per-item TV win counts of A and B against gold; ties are counted
/// separately (strict inequality on both sides).
pub fn wins(
    a: &ResponseTable,
    b: &ResponseTable,
    g: &ResponseTable,
) -> Result<(usize, usize, usize)> {
    check_items_categories(a, g)?;
    check_items_categories(b, g)?;
    let m = g.n_categories();
    let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
    for i in 0..g.n_items() {
        let tv_a = item_l1(a.row(i), g.row(i), m);
        let tv_b = item_l1(b.row(i), g.row(i), m);
        if tv_a < tv_b {
            wins_a += 1;
        } else if tv_b < tv_a {
            wins_b += 1;
        } else {
            ties += 1;
        }
    }
    Ok((wins_a, wins_b, ties))
}

/// The oriented statistic for one replicate. All four variants negate
/// exactly under swapping A and B, and larger values are evidence that A
/// is closer to gold.
pub fn comparison_statistic(
    metric: MetricKind,
    a: &ResponseTable,
    b: &ResponseTable,
    g: &ResponseTable,
    lambda: f64,
) -> Result<ComparisonScore> {
    let value = match metric {
        MetricKind::Accuracy => accuracy(a, g)? - accuracy(b, g)?,
        MetricKind::TotalVariation => total_variation(b, g)? - total_variation(a, g)?,
        MetricKind::KlDivergence => kl_divergence(b, g, lambda)? - kl_divergence(a, g, lambda)?,
        MetricKind::Wins => {
            let (wins_a, wins_b, _) = wins(a, b, g)?;
            (wins_a as f64 - wins_b as f64) / g.n_items() as f64
        }
    };
    Ok(ComparisonScore { value, metric })
}
