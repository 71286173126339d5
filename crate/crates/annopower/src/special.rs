//! Digamma and log-gamma, accurate to ~1e-12 for positive arguments.
//!
//! Both use the standard upward recurrence into the asymptotic regime
//! followed by a Bernoulli-number series.

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Digamma function psi(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma requires x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    // psi(x) = psi(x + 1) - 1/x
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln x - 1/(2x) - sum B_2n / (2n x^2n)
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    // ln Gamma(x) = ln Gamma(x + 1) - ln x
    while x < 10.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    acc + (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + series
}

/// psi(x + n) - psi(x) for integer n >= 0, exact as a harmonic-style sum
/// for small n.
pub fn digamma_diff(x: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if n <= 64 {
        let mut sum = 0.0;
        for j in 0..n {
            sum += 1.0 / (x + j as f64);
        }
        sum
    } else {
        digamma(x + n as f64) - digamma(x)
    }
}
