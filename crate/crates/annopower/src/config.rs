//! Sweep configuration: a single JSON object, fully determining a sweep
//! together with the master seed.

use std::io::Read;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inference::PValueMethod;
use crate::metrics::MetricKind;
use crate::presets;
use crate::sampling::DirichletParams;
use crate::sweep::{default_k_schedule, SweepSpec, DEFAULT_EPSILONS, DEFAULT_NK_BUDGETS};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    alpha: Option<Vec<f64>>,
    rho: Option<RhoSpec>,
    nk_budgets: Option<Vec<u64>>,
    k_schedule: Option<Vec<u32>>,
    epsilons: Option<Vec<f64>>,
    metrics: Option<Vec<String>>,
    replicates: Option<usize>,
    lambda: Option<f64>,
    master_seed: Option<u64>,
    min_items: Option<u64>,
    p_method: Option<String>,
    paired: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RhoSpec {
    Named(String),
    Values(Vec<f64>),
}

/// Renders an alpha vector as a result-row label, e.g. `alpha=[3,3,3]`.
pub fn alpha_label(alpha: &[f64]) -> String {
    let joined: Vec<String> = alpha.iter().map(|a| a.to_string()).collect();
    format!("alpha=[{}]", joined.join(","))
}

/// Parses a sweep config document, applying the stock defaults for every
/// omitted field. Exactly one of `preset` and `alpha` must be present.
pub fn parse_config<R: Read>(source: R) -> Result<SweepSpec> {
    let raw: RawConfig = serde_json::from_reader(source)
        .map_err(|e| Error::Config(format!("invalid config document: {e}")))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<SweepSpec> {
    let (label, alpha) = match (raw.preset, raw.alpha) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "specify exactly one of preset and alpha, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config("config needs either preset or alpha".into()))
        }
        (Some(name), None) => presets::resolve(&name).map_err(|e| Error::Config(e.to_string()))?,
        (None, Some(values)) => {
            let label = alpha_label(&values);
            let alpha =
                DirichletParams::new(values).map_err(|e| Error::Config(e.to_string()))?;
            (label, alpha)
        }
    };
    let m = alpha.len();

    let rho = match raw.rho {
        None => DirichletParams::uniform(m)?,
        Some(RhoSpec::Named(name)) if name.eq_ignore_ascii_case("uniform") => {
            DirichletParams::uniform(m)?
        }
        Some(RhoSpec::Named(name)) => {
            return Err(Error::Config(format!(
                "unknown rho spec {name:?}; expected \"uniform\" or a vector of {m} values"
            )))
        }
        Some(RhoSpec::Values(values)) => {
            if values.len() != m {
                return Err(Error::Config(format!(
                    "rho has {} entries but alpha has {m}",
                    values.len()
                )));
            }
            DirichletParams::new(values).map_err(|e| Error::Config(e.to_string()))?
        }
    };

    let metrics = match raw.metrics {
        None => MetricKind::ALL.to_vec(),
        Some(names) => {
            let mut metrics = Vec::with_capacity(names.len());
            for name in names {
                metrics.push(
                    name.parse::<MetricKind>().map_err(|e| Error::Config(e.to_string()))?,
                );
            }
            metrics
        }
    };

    let p_method = match raw.p_method {
        None => PValueMethod::AllPairs,
        Some(name) => name
            .parse::<PValueMethod>()
            .map_err(|e| Error::Config(e.to_string()))?,
    };

    let spec = SweepSpec {
        label,
        alpha,
        rho,
        nk_budgets: raw.nk_budgets.unwrap_or_else(|| DEFAULT_NK_BUDGETS.to_vec()),
        k_schedule: raw.k_schedule.unwrap_or_else(default_k_schedule),
        epsilons: raw.epsilons.unwrap_or_else(|| DEFAULT_EPSILONS.to_vec()),
        metrics,
        replicates: raw.replicates.unwrap_or(1000),
        lambda: raw.lambda.unwrap_or(0.5),
        master_seed: raw.master_seed.unwrap_or(0),
        min_items: raw.min_items.unwrap_or(2),
        p_method,
        paired: raw.paired.unwrap_or(false),
    };
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(spec)
}

/// Serializes a spec back to an explicit config document (the inverse of
/// `parse_config` up to label normalization).
pub fn to_json(spec: &SweepSpec) -> String {
    let doc = serde_json::json!({
        "alpha": spec.alpha.alpha(),
        "rho": spec.rho.alpha(),
        "nk_budgets": spec.nk_budgets,
        "k_schedule": spec.k_schedule,
        "epsilons": spec.epsilons,
        "metrics": spec.metrics.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "replicates": spec.replicates,
        "lambda": spec.lambda,
        "master_seed": spec.master_seed,
        "min_items": spec.min_items,
        "p_method": match spec.p_method {
            PValueMethod::AllPairs => "all-pairs",
            PValueMethod::MeanVsNull => "mean-vs-null",
        },
        "paired": spec.paired,
    });
    serde_json::to_string_pretty(&doc).expect("config document serializes")
}
