//! Seeded sampling primitives: Dirichlet and categorical draws over
//! deterministic, parallelism-independent substreams.
//!
//! Substreams are derived by hashing a `(master_seed, path)` pair into a
//! 256-bit ChaCha8 key, so any worker can reconstruct the stream for a
//! given replicate without coordinating with other workers.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest coordinate kept in a Dirichlet draw; draws that underflow to
/// exactly zero are clamped here and the vector renormalized.
const DIRICHLET_FLOOR: f64 = 1e-12;

/// Tolerance for the sum-to-one invariant of probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// The pseudorandom stream backing all sampling. ChaCha8 carries a 256-bit
/// key and is seedable and documented; streams derived from distinct paths
/// are safe to use concurrently.
pub type Stream = rand_chacha::ChaCha8Rng;

/// A probability vector over `M >= 2` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistribution {
    probs: Vec<f64>,
}

impl CategoryDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "category distribution needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidParameter(
                "category probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParameter(format!(
                "category probabilities sum to {sum}, expected 1 within {SIMPLEX_TOL:e}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Concentration parameters of a Dirichlet prior over `M >= 2` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "Dirichlet parameters need at least 2 entries, got {}",
                alpha.len()
            )));
        }
        if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(Error::InvalidParameter(
                "Dirichlet concentrations must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { alpha })
    }

    /// The uniform concentration `[1/M; M]`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "uniform Dirichlet needs M >= 2, got {m}"
            )));
        }
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// alpha / sum(alpha), the mean of the Dirichlet.
    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / total).collect()
    }
}

/// Identifies one substream as a pure function of a master seed plus an
/// ordered path of `(label, index)` segments (e.g. grid cell, hypothesis,
/// replicate). Equal specs always denote the same stream, independent of
/// thread count or evaluation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSpec {
    master_seed: u64,
    path: Vec<(String, u64)>,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    /// Extends the path with one `(label, index)` segment.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((label.to_string(), index));
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// Derives the stream for this spec by hashing the seed and path into
    /// a ChaCha8 key.
    pub fn stream(&self) -> Stream {
        derive_stream(self)
    }
}

/// Counter/hash substream derivation: SHA-256 over the master seed and the
/// length-prefixed path segments, used as the ChaCha8 key.
pub fn derive_stream(spec: &SeedSpec) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(spec.master_seed.to_le_bytes());
    for (label, index) in &spec.path {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Stream::from_seed(key)
}

/// Draws a point on the simplex from `Dir(alpha)` via normalized
/// per-coordinate `Gamma(alpha_m, 1)` draws. Coordinates that underflow to
/// zero (possible for small shapes) are clamped to `1e-12` before
/// renormalizing, so results never contain exact zeros.
pub fn sample_dirichlet<R: Rng + ?Sized>(
    params: &DirichletParams,
    stream: &mut R,
) -> CategoryDistribution {
    let mut draw = Vec::with_capacity(params.len());
    for &a in params.alpha() {
        // rand_distr boosts shapes below 1 internally (Gamma(a+1) * u^(1/a)).
        let gamma = Gamma::new(a, 1.0).expect("validated shape");
        draw.push(gamma.sample(stream).max(DIRICHLET_FLOOR));
    }
    let sum: f64 = draw.iter().sum();
    for v in &mut draw {
        *v /= sum;
    }
    CategoryDistribution { probs: draw }
}

/// Draws a category index in `[0, M)` with the given probabilities. Exact
/// on degenerate distributions: zero-probability categories are never
/// returned.
pub fn sample_categorical<R: Rng + ?Sized>(
    dist: &CategoryDistribution,
    stream: &mut R,
) -> usize {
    sample_categorical_from(dist.probs(), stream)
}

/// As `sample_categorical` but over a raw probability slice; used in inner
/// loops where the vector is already validated.
pub(crate) fn sample_categorical_from<R: Rng + ?Sized>(probs: &[f64], stream: &mut R) -> usize {
    let u: f64 = stream.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (m, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = m;
            if u < acc {
                return m;
            }
        }
    }
    // u landed in the rounding slack above the accumulated sum.
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of_draws(alpha: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let params = DirichletParams::new(alpha.to_vec()).unwrap();
        let mut stream = SeedSpec::new(seed).child("dir-mean", 0).stream();
        let mut acc = vec![0.0; alpha.len()];
        for _ in 0..n {
            let d = sample_dirichlet(&params, &mut stream);
            for (a, p) in acc.iter_mut().zip(d.probs()) {
                *a += p;
            }
        }
        acc.iter().map(|a| a / n as f64).collect()
    }

    #[test]
    fn dirichlet_symmetric_mean() {
        let mean = mean_of_draws(&[1.0, 1.0], 100_000, 7);
        assert!((mean[0] - 0.5).abs() < 0.01, "mean {mean:?}");
        assert!((mean[1] - 0.5).abs() < 0.01);
    }

    #[test]
    fn dirichlet_mean_matches_normalized_alpha() {
        // alpha = [5.22, 0.86, 2.75] has mean alpha / sum(alpha).
        let expected = [
            0.591_166_477_916_194_8,
            0.097_395_243_488_108_71,
            0.311_438_278_595_696_5,
        ];
        let mean = mean_of_draws(&[5.22, 0.86, 2.75], 100_000, 11);
        for (m, e) in mean.iter().zip(expected) {
            assert!((m - e).abs() < 0.01, "mean {mean:?}");
        }
    }

    #[test]
    fn dirichlet_concentration_limit() {
        let params = DirichletParams::new(vec![1e9, 1e9]).unwrap();
        let mut stream = SeedSpec::new(3).stream();
        for _ in 0..100 {
            let d = sample_dirichlet(&params, &mut stream);
            assert!((d.probs()[0] - 0.5).abs() < 1e-3);
            assert!((d.probs()[1] - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn dirichlet_draws_stay_on_simplex() {
        // Includes shapes below 1, where the boosted sampler can underflow.
        for alpha in [vec![1.37, 1.33], vec![0.05, 0.5, 5.0], vec![0.86; 4]] {
            let params = DirichletParams::new(alpha).unwrap();
            let mut stream = SeedSpec::new(19).child("simplex", 1).stream();
            for _ in 0..10_000 {
                let d = sample_dirichlet(&params, &mut stream);
                let sum: f64 = d.probs().iter().sum();
                assert!((sum - 1.0).abs() < SIMPLEX_TOL);
                assert!(d.probs().iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn categorical_degenerate_is_exact() {
        let mut stream = SeedSpec::new(5).stream();
        let d01 = CategoryDistribution::new(vec![1.0, 0.0]).unwrap();
        let d2 = CategoryDistribution::new(vec![0.0, 0.0, 1.0]).unwrap();
        for _ in 0..1_000 {
            assert_eq!(sample_categorical(&d01, &mut stream), 0);
            assert_eq!(sample_categorical(&d2, &mut stream), 2);
        }
    }

    #[test]
    fn categorical_frequencies_converge() {
        let dist = CategoryDistribution::new(vec![0.25, 0.75]).unwrap();
        let mut stream = SeedSpec::new(23).child("freq", 0).stream();
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_categorical(&dist, &mut stream) == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(DirichletParams::new(vec![1.0]).is_err());
        assert!(DirichletParams::new(vec![0.0, 1.0]).is_err());
        assert!(DirichletParams::new(vec![-1.0, 1.0]).is_err());
        assert!(CategoryDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CategoryDistribution::new(vec![1.1, -0.1]).is_err());
        assert!(CategoryDistribution::new(vec![1.0]).is_err());
    }

    #[test]
    fn identical_specs_give_identical_streams() {
        let spec = SeedSpec::new(42).child("cell", 0).child("alt", 0).child("rep", 7);
        let mut a = spec.stream();
        let mut b = spec.clone().stream();
        for _ in 0..1_000 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn distinct_replicate_paths_give_distinct_streams() {
        let base = SeedSpec::new(42).child("cell", 0).child("alt", 0);
        let mut a = base.child("rep", 7).stream();
        let mut b = base.child("rep", 8).stream();
        let draws_a: Vec<u64> = (0..1_000).map(|_| a.random()).collect();
        let draws_b: Vec<u64> = (0..1_000).map(|_| b.random()).collect();
        assert_ne!(draws_a, draws_b);
    }

    #[test]
    fn derivation_is_independent_of_thread_count() {
        let spec = SeedSpec::new(42).child("cell", 0).child("alt", 0).child("rep", 7);
        let serial: Vec<u64> = {
            let mut s = spec.stream();
            (0..1_000).map(|_| s.random()).collect()
        };
        let threaded: Vec<Vec<u64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let spec = spec.clone();
                    scope.spawn(move || {
                        let mut s = spec.stream();
                        (0..1_000).map(|_| s.random()).collect::<Vec<u64>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for t in threaded {
            assert_eq!(t, serial);
        }
    }
}
