//! Dirichlet-categorical response generation for gold data and two models
//! under the alternative and null hypotheses.
//!
//! Per item, categorical parameters `beta` and noise parameters `varrho`
//! are drawn from `Dir(alpha)` and `Dir(rho)`; model B responds from
//! `gamma = (1 - epsilon) * beta + epsilon * varrho`. Under the null, each
//! response of A and B flips a fair coin between `beta` and `gamma`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::{
    sample_categorical_from, sample_dirichlet, CategoryDistribution, DirichletParams,
};

/// Parameters of one simulated world: `N` items, `K` responses each over
/// `M` categories, with priors `alpha` (gold) and `rho` (noise) and
/// perturbation level `epsilon`.
#[derive(Debug, Clone)]
pub struct GenerationConfig {
    n_items: usize,
    k_responses: usize,
    alpha: DirichletParams,
    rho: DirichletParams,
    epsilon: f64,
}

impl GenerationConfig {
    pub fn new(
        n_items: usize,
        k_responses: usize,
        alpha: DirichletParams,
        rho: DirichletParams,
        epsilon: f64,
    ) -> Result<Self> {
        if n_items == 0 || k_responses == 0 {
            return Err(Error::InvalidParameter(
                "n_items and k_responses must be positive".into(),
            ));
        }
        if alpha.len() != rho.len() {
            return Err(Error::ShapeMismatch(format!(
                "alpha has {} categories but rho has {}",
                alpha.len(),
                rho.len()
            )));
        }
        if alpha.len() > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "at most {} categories supported, got {}",
                u16::MAX,
                alpha.len()
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self {
            n_items,
            k_responses,
            alpha,
            rho,
            epsilon,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn k_responses(&self) -> usize {
        self.k_responses
    }

    pub fn n_categories(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &DirichletParams {
        &self.alpha
    }

    pub fn rho(&self) -> &DirichletParams {
        &self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Per-item parameters: gold distribution `beta`, noise `varrho`, and
/// their convex combination `gamma`.
#[derive(Debug, Clone)]
pub struct ItemParams {
    pub beta: CategoryDistribution,
    pub varrho: CategoryDistribution,
    pub gamma: CategoryDistribution,
}

impl ItemParams {
    /// Combines `gamma = (1 - epsilon) * beta + epsilon * varrho`.
    pub fn mix(
        beta: CategoryDistribution,
        varrho: CategoryDistribution,
        epsilon: f64,
    ) -> Result<Self> {
        if beta.len() != varrho.len() {
            return Err(Error::ShapeMismatch(format!(
                "beta has {} categories but varrho has {}",
                beta.len(),
                varrho.len()
            )));
        }
        let gamma: Vec<f64> = beta
            .probs()
            .iter()
            .zip(varrho.probs())
            .map(|(b, r)| (1.0 - epsilon) * b + epsilon * r)
            .collect();
        Ok(Self {
            beta,
            varrho,
            gamma: CategoryDistribution::new(gamma)?,
        })
    }
}

/// An `N x K` table of category indices in `[0, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    n_items: usize,
    k_responses: usize,
    n_categories: usize,
    responses: Vec<u16>,
}

impl ResponseTable {
    pub fn from_rows(rows: &[Vec<u16>], n_categories: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("response table needs at least one item".into()));
        }
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::InvalidInput("response rows must be non-empty".into()));
        }
        let mut responses = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "item {i} has {} responses, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|&c| c as usize >= n_categories) {
                return Err(Error::InvalidInput(format!(
                    "item {i} contains a category outside [0, {n_categories})"
                )));
            }
            responses.extend_from_slice(row);
        }
        Ok(Self {
            n_items: rows.len(),
            k_responses: k,
            n_categories,
            responses,
        })
    }

    fn zeroed(n_items: usize, k_responses: usize, n_categories: usize) -> Self {
        Self {
            n_items,
            k_responses,
            n_categories,
            responses: vec![0; n_items * k_responses],
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn k_responses(&self) -> usize {
        self.k_responses
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn row(&self, item: usize) -> &[u16] {
        let start = item * self.k_responses;
        &self.responses[start..start + self.k_responses]
    }

    fn row_mut(&mut self, item: usize) -> &mut [u16] {
        let start = item * self.k_responses;
        &mut self.responses[start..start + self.k_responses]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.responses.chunks_exact(self.k_responses)
    }
}

/// Gold plus two model response tables drawn in one replicate.
#[derive(Debug, Clone)]
pub struct TripleSample {
    pub gold: ResponseTable,
    pub model_a: ResponseTable,
    pub model_b: ResponseTable,
}

/// Draws one item's `beta ~ Dir(alpha)`, `varrho ~ Dir(rho)` and mixes
/// `gamma` at the configured epsilon.
pub fn generate_item_params<R: Rng + ?Sized>(
    config: &GenerationConfig,
    stream: &mut R,
) -> ItemParams {
    let beta = sample_dirichlet(config.alpha(), stream);
    let varrho = sample_dirichlet(config.rho(), stream);
    ItemParams::mix(beta, varrho, config.epsilon()).expect("sampled on matching simplices")
}

fn fill_row_from<R: Rng + ?Sized>(dist: &CategoryDistribution, stream: &mut R, row: &mut [u16]) {
    for slot in row {
        *slot = sample_categorical_from(dist.probs(), stream) as u16;
    }
}

/// One fair-coin response: `Cat(first)` on heads (x = 0), `Cat(second)`
/// on tails.
fn coin_response<R: Rng + ?Sized>(
    first: &CategoryDistribution,
    second: &CategoryDistribution,
    stream: &mut R,
) -> u16 {
    let x: f64 = stream.random();
    if x < 0.5 {
        sample_categorical_from(first.probs(), stream) as u16
    } else {
        sample_categorical_from(second.probs(), stream) as u16
    }
}

fn fill_null_rows<R: Rng + ?Sized>(
    params: &ItemParams,
    stream: &mut R,
    row_a: &mut [u16],
    row_b: &mut [u16],
) {
    // A: x = 0 -> beta, else gamma. B: x = 0 -> gamma, else beta.
    // Either way each response is the same half-half mixture.
    for slot in row_a.iter_mut() {
        *slot = coin_response(&params.beta, &params.gamma, stream);
    }
    for slot in row_b.iter_mut() {
        *slot = coin_response(&params.gamma, &params.beta, stream);
    }
}

/// Simulates the alternative hypothesis: per item, gold and model A
/// respond from `Cat(beta)` and model B from `Cat(gamma)`.
pub fn generate_alt<R: Rng + ?Sized>(config: &GenerationConfig, stream: &mut R) -> TripleSample {
    let (n, k, m) = (config.n_items(), config.k_responses(), config.n_categories());
    let mut gold = ResponseTable::zeroed(n, k, m);
    let mut model_a = ResponseTable::zeroed(n, k, m);
    let mut model_b = ResponseTable::zeroed(n, k, m);
    for i in 0..n {
        let params = generate_item_params(config, stream);
        fill_row_from(&params.beta, stream, gold.row_mut(i));
        fill_row_from(&params.beta, stream, model_a.row_mut(i));
        fill_row_from(&params.gamma, stream, model_b.row_mut(i));
    }
    TripleSample {
        gold,
        model_a,
        model_b,
    }
}

/// Simulates the null hypothesis: gold as under the alternative, while
/// each response of A and B independently mixes `beta` and `gamma` with a
/// fair coin, making the two models exchangeable.
pub fn generate_null<R: Rng + ?Sized>(config: &GenerationConfig, stream: &mut R) -> TripleSample {
    let (n, k, m) = (config.n_items(), config.k_responses(), config.n_categories());
    let mut gold = ResponseTable::zeroed(n, k, m);
    let mut model_a = ResponseTable::zeroed(n, k, m);
    let mut model_b = ResponseTable::zeroed(n, k, m);
    for i in 0..n {
        let params = generate_item_params(config, stream);
        fill_row_from(&params.beta, stream, gold.row_mut(i));
        fill_null_rows(&params, stream, model_a.row_mut(i), model_b.row_mut(i));
    }
    TripleSample {
        gold,
        model_a,
        model_b,
    }
}

/// Draws both hypotheses from one stream so that `beta`, `varrho`, and the
/// gold table coincide between them (opt-in variance reduction).
pub fn generate_pair<R: Rng + ?Sized>(
    config: &GenerationConfig,
    stream: &mut R,
) -> (TripleSample, TripleSample) {
    let (n, k, m) = (config.n_items(), config.k_responses(), config.n_categories());
    let mut gold = ResponseTable::zeroed(n, k, m);
    let mut alt_a = ResponseTable::zeroed(n, k, m);
    let mut alt_b = ResponseTable::zeroed(n, k, m);
    let mut null_a = ResponseTable::zeroed(n, k, m);
    let mut null_b = ResponseTable::zeroed(n, k, m);
    for i in 0..n {
        let params = generate_item_params(config, stream);
        fill_row_from(&params.beta, stream, gold.row_mut(i));
        fill_row_from(&params.beta, stream, alt_a.row_mut(i));
        fill_row_from(&params.gamma, stream, alt_b.row_mut(i));
        fill_null_rows(&params, stream, null_a.row_mut(i), null_b.row_mut(i));
    }
    let alt = TripleSample {
        gold: gold.clone(),
        model_a: alt_a,
        model_b: alt_b,
    };
    let null = TripleSample {
        gold,
        model_a: null_a,
        model_b: null_b,
    };
    (alt, null)
}

/// Draws only the gold table; used by diagnostics that do not need the
/// model tables.
pub fn generate_gold<R: Rng + ?Sized>(config: &GenerationConfig, stream: &mut R) -> ResponseTable {
    let (n, k, m) = (config.n_items(), config.k_responses(), config.n_categories());
    let mut gold = ResponseTable::zeroed(n, k, m);
    for i in 0..n {
        let beta = sample_dirichlet(config.alpha(), stream);
        fill_row_from(&beta, stream, gold.row_mut(i));
    }
    gold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::sampling::SeedSpec;

    fn dist(p: &[f64]) -> CategoryDistribution {
        CategoryDistribution::new(p.to_vec()).unwrap()
    }

    fn config(n: usize, k: usize, alpha: &[f64], rho: &[f64], eps: f64) -> GenerationConfig {
        GenerationConfig::new(
            n,
            k,
            DirichletParams::new(alpha.to_vec()).unwrap(),
            DirichletParams::new(rho.to_vec()).unwrap(),
            eps,
        )
        .unwrap()
    }

    #[test]
    fn mix_endpoints_are_exact() {
        let beta = dist(&[0.3, 0.7]);
        let varrho = dist(&[0.9, 0.1]);
        let at_zero = ItemParams::mix(beta.clone(), varrho.clone(), 0.0).unwrap();
        assert_eq!(at_zero.gamma.probs(), beta.probs());
        let at_one = ItemParams::mix(beta, varrho.clone(), 1.0).unwrap();
        assert_eq!(at_one.gamma.probs(), varrho.probs());
    }

    #[test]
    fn mix_arithmetic() {
        let params = ItemParams::mix(dist(&[1.0, 0.0]), dist(&[0.0, 1.0]), 0.3).unwrap();
        assert!((params.gamma.probs()[0] - 0.7).abs() < 1e-15);
        assert!((params.gamma.probs()[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn item_params_hold_convex_combination_invariant() {
        let cfg = config(1, 1, &[5.22, 0.86, 2.75], &[1.0 / 3.0; 3], 0.3);
        let mut stream = SeedSpec::new(1).stream();
        for _ in 0..200 {
            let p = generate_item_params(&cfg, &mut stream);
            for m in 0..3 {
                let expect = 0.7 * p.beta.probs()[m] + 0.3 * p.varrho.probs()[m];
                assert!((p.gamma.probs()[m] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn alt_with_zero_epsilon_makes_models_indistinguishable() {
        let cfg = config(50, 1000, &[1e9, 1e9], &[1.0, 1.0], 0.0);
        let mut stream = SeedSpec::new(2).stream();
        let triple = generate_alt(&cfg, &mut stream);
        for table in [&triple.model_a, &triple.model_b] {
            for row in table.rows() {
                let ones = row.iter().filter(|&&c| c == 1).count() as f64;
                let freq = ones / row.len() as f64;
                assert!((freq - 0.5).abs() < 0.05, "freq {freq}");
            }
        }
    }

    #[test]
    fn alt_degenerate_endpoints() {
        // beta pinned to category 0, varrho pinned to category 1, eps = 1.
        let cfg = config(20, 10, &[1e9, 1e-9], &[1e-9, 1e9], 1.0);
        let mut stream = SeedSpec::new(3).stream();
        let triple = generate_alt(&cfg, &mut stream);
        assert!(triple.gold.rows().all(|r| r.iter().all(|&c| c == 0)));
        assert!(triple.model_a.rows().all(|r| r.iter().all(|&c| c == 0)));
        assert!(triple.model_b.rows().all(|r| r.iter().all(|&c| c == 1)));
    }

    #[test]
    fn pooled_gold_marginal_matches_normalized_alpha() {
        let cfg = config(100, 20, &[5.22, 0.86, 2.75], &[1.0 / 3.0; 3], 0.3);
        let expected = [
            0.591_166_477_916_194_8,
            0.097_395_243_488_108_71,
            0.311_438_278_595_696_5,
        ];
        let seed = SeedSpec::new(4);
        let mut counts = [0u64; 3];
        for rep in 0..200 {
            let mut stream = seed.child("rep", rep).stream();
            let triple = generate_alt(&cfg, &mut stream);
            for row in triple.gold.rows() {
                for &c in row {
                    counts[c as usize] += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        for (c, e) in counts.iter().zip(expected) {
            let freq = *c as f64 / total as f64;
            assert!((freq - e).abs() < 0.02, "freq {freq} expected {e}");
        }
    }

    #[test]
    fn null_rows_are_fair_mixtures() {
        let params = ItemParams::mix(dist(&[1.0, 0.0]), dist(&[0.0, 1.0]), 1.0).unwrap();
        let mut stream = SeedSpec::new(5).stream();
        let k = 10_000;
        let mut row_a = vec![0u16; k];
        let mut row_b = vec![0u16; k];
        fill_null_rows(&params, &mut stream, &mut row_a, &mut row_b);
        for row in [&row_a, &row_b] {
            let freq = row.iter().filter(|&&c| c == 1).count() as f64 / k as f64;
            assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn null_models_are_exchangeable_in_wins() {
        let cfg = config(30, 5, &[3.0, 3.0, 3.0], &[1.0 / 3.0; 3], 0.4);
        let seed = SeedSpec::new(6);
        let reps = 500;
        let mut diffs = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut stream = seed.child("rep", rep as u64).stream();
            let t = generate_null(&cfg, &mut stream);
            let (wa, wb, _) = metrics::wins(&t.model_a, &t.model_b, &t.gold).unwrap();
            diffs.push((wa as f64 - wb as f64) / cfg.n_items() as f64);
        }
        let mean = diffs.iter().sum::<f64>() / reps as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let se = (var / reps as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn null_with_zero_epsilon_matches_alt_law() {
        // With eps = 0 the coin is between identical distributions, so the
        // null generator consumes extra uniforms but produces the same law.
        let cfg = config(200, 5, &[1.37, 1.33], &[0.5, 0.5], 0.0);
        let mut pooled = [[0u64; 2]; 2];
        for rep in 0..200u64 {
            let mut s_alt = SeedSpec::new(7).child("alt", rep).stream();
            let mut s_null = SeedSpec::new(7).child("null", rep).stream();
            for (which, t) in [
                (0, generate_alt(&cfg, &mut s_alt)),
                (1, generate_null(&cfg, &mut s_null)),
            ] {
                for row in t.model_a.rows() {
                    for &c in row {
                        pooled[which][c as usize] += 1;
                    }
                }
            }
        }
        let f = |c: [u64; 2]| c[0] as f64 / (c[0] + c[1]) as f64;
        assert!((f(pooled[0]) - f(pooled[1])).abs() < 0.01);
    }

    #[test]
    fn perturbation_distance_is_linear_in_epsilon() {
        // Mean L1(gamma, beta) over items should regress on epsilon with
        // R^2 > 0.99: gamma - beta = eps * (varrho - beta) identically.
        let epsilons = [0.1, 0.2, 0.3, 0.4];
        let mut means = Vec::new();
        for (idx, &eps) in epsilons.iter().enumerate() {
            let cfg = config(10_000, 1, &[5.22, 0.86, 2.75], &[1.0 / 3.0; 3], eps);
            let mut stream = SeedSpec::new(8).child("eps", idx as u64).stream();
            let mut total = 0.0;
            for _ in 0..cfg.n_items() {
                let p = generate_item_params(&cfg, &mut stream);
                let l1: f64 = p
                    .beta
                    .probs()
                    .iter()
                    .zip(p.gamma.probs())
                    .map(|(b, g)| (b - g).abs())
                    .sum();
                total += l1;
            }
            means.push(total / cfg.n_items() as f64);
        }
        let n = epsilons.len() as f64;
        let mx = epsilons.iter().sum::<f64>() / n;
        let my = means.iter().sum::<f64>() / n;
        let sxy: f64 = epsilons.iter().zip(&means).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = epsilons.iter().map(|x| (x - mx).powi(2)).sum();
        let syy: f64 = means.iter().map(|y| (y - my).powi(2)).sum();
        let r2 = sxy * sxy / (sxx * syy);
        assert!(r2 > 0.99, "R^2 {r2}, means {means:?}");
    }

    #[test]
    fn tables_are_rectangular_and_bounded() {
        let cfg = config(13, 7, &[1.37, 1.33], &[0.5, 0.5], 0.2);
        let mut stream = SeedSpec::new(9).stream();
        let t = generate_alt(&cfg, &mut stream);
        for table in [&t.gold, &t.model_a, &t.model_b] {
            assert_eq!(table.n_items(), 13);
            assert_eq!(table.k_responses(), 7);
            assert!(table.rows().all(|r| r.iter().all(|&c| (c as usize) < 2)));
        }
    }

    #[test]
    fn config_validation() {
        let alpha = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let rho3 = DirichletParams::new(vec![1.0; 3]).unwrap();
        assert!(GenerationConfig::new(0, 1, alpha.clone(), alpha.clone(), 0.5).is_err());
        assert!(GenerationConfig::new(1, 0, alpha.clone(), alpha.clone(), 0.5).is_err());
        assert!(GenerationConfig::new(1, 1, alpha.clone(), rho3, 0.5).is_err());
        assert!(GenerationConfig::new(1, 1, alpha.clone(), alpha.clone(), 1.2).is_err());
        assert!(GenerationConfig::new(1, 1, alpha.clone(), alpha, -0.1).is_err());
    }

    #[test]
    fn paired_generation_shares_gold_and_item_params() {
        let cfg = config(40, 6, &[3.0, 3.0], &[0.5, 0.5], 0.3);
        let mut stream = SeedSpec::new(10).stream();
        let (alt, null) = generate_pair(&cfg, &mut stream);
        assert_eq!(alt.gold, null.gold);
        assert_ne!(alt.model_b, null.model_b);
    }
}
