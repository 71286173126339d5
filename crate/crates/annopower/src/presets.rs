//! Named Dirichlet concentration presets fitted to five public
//! disaggregated-label datasets, plus parametric balanced/unbalanced
//! families for synthetic class-imbalance studies.

use crate::error::{Error, Result};
use crate::sampling::DirichletParams;

pub const TOXICITY: [f64; 2] = [1.37, 1.33];
pub const DICES: [f64; 3] = [5.22, 0.86, 2.75];
pub const D3CODE: [f64; 2] = [6.08, 2.88];
pub const JOBS_Q1: [f64; 5] = [1039.76, 38.24, 35.57, 310.29, 46.02];
pub const JOBS_Q3: [f64; 12] = [
    133.79, 834.51, 105.27, 3669.04, 206.80, 293.44, 585.58, 1278.56, 1874.82, 1838.49, 1576.10,
    989.23,
];

/// `[3; M]`.
pub fn balanced(m: usize) -> Result<DirichletParams> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("balanced preset needs M >= 2, got {m}")));
    }
    DirichletParams::new(vec![3.0; m])
}

/// `[10, 3, 3, ...]` with `M` entries: one dominant category.
pub fn unbalanced(m: usize) -> Result<DirichletParams> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("unbalanced preset needs M >= 2, got {m}")));
    }
    let mut alpha = vec![3.0; m];
    alpha[0] = 10.0;
    DirichletParams::new(alpha)
}

/// Resolves a preset name (case-insensitive) to its canonical label and
/// concentrations. The parametric families accept `balanced:M` or
/// `balanced(M)` spellings (likewise `unbalanced`).
pub fn resolve(name: &str) -> Result<(String, DirichletParams)> {
    let lower = name.trim().to_ascii_lowercase();
    let fixed: Option<(&str, &[f64])> = match lower.as_str() {
        "toxicity" => Some(("Toxicity", &TOXICITY)),
        "dices" => Some(("DICES", &DICES)),
        "d3code" => Some(("D3code", &D3CODE)),
        "jobsq1" => Some(("JobsQ1", &JOBS_Q1)),
        "jobsq3" => Some(("JobsQ3", &JOBS_Q3)),
        _ => None,
    };
    if let Some((label, alpha)) = fixed {
        return Ok((label.to_string(), DirichletParams::new(alpha.to_vec())?));
    }
    for (family, build) in [
        ("balanced", balanced as fn(usize) -> Result<DirichletParams>),
        ("unbalanced", unbalanced as fn(usize) -> Result<DirichletParams>),
    ] {
        if let Some(rest) = lower.strip_prefix(family) {
            let digits: String = rest.chars().filter(|c| c.is_ascii_digit()).collect();
            let punct_ok = rest
                .chars()
                .all(|c| c.is_ascii_digit() || c == ':' || c == '(' || c == ')' || c == ' ');
            if !digits.is_empty() && punct_ok {
                let m: usize = digits.parse().map_err(|_| {
                    Error::InvalidInput(format!("cannot parse category count in preset {name:?}"))
                })?;
                let label = format!(
                    "{}({m})",
                    if family == "balanced" { "Balanced" } else { "Unbalanced" }
                );
                return Ok((label, build(m)?));
            }
        }
    }
    Err(Error::InvalidInput(format!(
        "unknown preset {name:?}; expected Toxicity | DICES | D3code | JobsQ1 | JobsQ3 | \
         balanced:M | unbalanced:M"
    )))
}

/// The names of the five fitted presets.
pub fn fitted_names() -> [&'static str; 5] {
    ["Toxicity", "DICES", "D3code", "JobsQ1", "JobsQ3"]
}
