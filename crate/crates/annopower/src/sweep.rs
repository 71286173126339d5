//! The experiment grid: budgets x responses-per-item x perturbation x
//! metric, run cell by cell into `TestResult`s with deterministic
//! substreams, plus minimal-budget and minimal-CI-width extraction.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::GenerationConfig;
use crate::inference::{run_test, PValueMethod, TestOptions, TestResult};
use crate::metrics::MetricKind;
use crate::sampling::{DirichletParams, SeedSpec};

/// The nine total-annotation budgets used by the stock experiment grid.
pub const DEFAULT_NK_BUDGETS: [u64; 9] =
    [100, 250, 500, 1000, 2500, 5000, 10_000, 25_000, 50_000];

/// The stock epsilon grid.
pub const DEFAULT_EPSILONS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

/// Responses-per-item schedule: 1 through 10, then 20 to 500 in steps of
/// 20 (35 values).
pub fn default_k_schedule() -> Vec<u32> {
    (1..=10).chain((20..=500).step_by(20)).collect()
}

/// A fully resolved sweep specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Preset name or a rendering of the literal alpha vector; echoed in
    /// result rows.
    pub label: String,
    pub alpha: DirichletParams,
    pub rho: DirichletParams,
    pub nk_budgets: Vec<u64>,
    pub k_schedule: Vec<u32>,
    pub epsilons: Vec<f64>,
    pub metrics: Vec<MetricKind>,
    pub replicates: usize,
    pub lambda: f64,
    pub master_seed: u64,
    pub min_items: u64,
    pub p_method: PValueMethod,
    pub paired: bool,
}

impl SweepSpec {
    /// A spec with the stock grid (all budgets, the full K schedule, all
    /// four epsilons and metrics, 1000 replicates, uniform rho).
    pub fn with_defaults(label: impl Into<String>, alpha: DirichletParams) -> Result<Self> {
        let rho = DirichletParams::uniform(alpha.len())?;
        Ok(Self {
            label: label.into(),
            alpha,
            rho,
            nk_budgets: DEFAULT_NK_BUDGETS.to_vec(),
            k_schedule: default_k_schedule(),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            metrics: MetricKind::ALL.to_vec(),
            replicates: 1000,
            lambda: 0.5,
            master_seed: 0,
            min_items: 2,
            p_method: PValueMethod::AllPairs,
            paired: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nk_budgets.is_empty()
            || self.k_schedule.is_empty()
            || self.epsilons.is_empty()
            || self.metrics.is_empty()
        {
            return Err(Error::InvalidSpec(
                "nk_budgets, k_schedule, epsilons, and metrics must be non-empty".into(),
            ));
        }
        if !self.nk_budgets.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidSpec("nk_budgets must be strictly increasing".into()));
        }
        if !self.k_schedule.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidSpec("k_schedule must be strictly increasing".into()));
        }
        if self.k_schedule[0] == 0 || self.nk_budgets[0] == 0 {
            return Err(Error::InvalidSpec("budgets and K values must be positive".into()));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidSpec("epsilons must lie in (0, 1]".into()));
        }
        if self.alpha.len() != self.rho.len() {
            return Err(Error::InvalidSpec(format!(
                "alpha has {} categories but rho has {}",
                self.alpha.len(),
                self.rho.len()
            )));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::InvalidSpec("lambda must be finite and >= 0".into()));
        }
        if self.replicates < crate::inference::MIN_CI_REPLICATES {
            return Err(Error::InvalidSpec(format!(
                "replicates must be at least {}",
                crate::inference::MIN_CI_REPLICATES
            )));
        }
        if self.min_items < 2 {
            return Err(Error::InvalidSpec("min_items must be at least 2".into()));
        }
        Ok(())
    }
}

/// One grid cell: a budget split `n = floor(nk / k)` at one perturbation
/// level and metric. Cells that cannot seat `min_items` items are kept
/// but marked skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub ordinal: usize,
    pub nk: u64,
    pub k: u32,
    pub n: u64,
    pub epsilon: f64,
    pub metric: MetricKind,
    pub skipped: Option<String>,
}

/// Builds the Cartesian grid in deterministic order: budget-major, then
/// K, then epsilon, then metric.
pub fn build_grid(spec: &SweepSpec) -> Result<Vec<GridCell>> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(
        spec.nk_budgets.len() * spec.k_schedule.len() * spec.epsilons.len() * spec.metrics.len(),
    );
    let mut ordinal = 0;
    for &nk in &spec.nk_budgets {
        for &k in &spec.k_schedule {
            let n = nk / k as u64;
            let skipped = if n < spec.min_items {
                Some(format!("n = floor({nk}/{k}) = {n} < min_items = {}", spec.min_items))
            } else {
                None
            };
            for &epsilon in &spec.epsilons {
                for &metric in &spec.metrics {
                    cells.push(GridCell {
                        ordinal,
                        nk,
                        k,
                        n,
                        epsilon,
                        metric,
                        skipped: skipped.clone(),
                    });
                    ordinal += 1;
                }
            }
        }
    }
    Ok(cells)
}

/// Substream root for a cell: `master/nk=<nk>/k=<k>`. Epsilon and metric
/// are deliberately not part of the path, so every (epsilon, metric)
/// combination of one budget split reuses the same draws and comparisons
/// across them are paired.
pub fn cell_seed(master_seed: u64, nk: u64, k: u32) -> SeedSpec {
    SeedSpec::new(master_seed).child("nk", nk).child("k", k as u64)
}

/// Runs one active cell to a `TestResult`.
pub fn run_cell(cell: &GridCell, spec: &SweepSpec) -> Result<TestResult> {
    if let Some(reason) = &cell.skipped {
        return Err(Error::CellSkipped(reason.clone()));
    }
    let config = GenerationConfig::new(
        cell.n as usize,
        cell.k as usize,
        spec.alpha.clone(),
        spec.rho.clone(),
        cell.epsilon,
    )?;
    let options = TestOptions {
        replicates: spec.replicates,
        lambda: spec.lambda,
        p_method: spec.p_method,
        paired: spec.paired,
    };
    let seed = cell_seed(spec.master_seed, cell.nk, cell.k);
    run_test(&config, cell.metric, &options, &seed, cell.nk).map(|(result, _, _)| result)
}

/// One report row: the cell plus its result, or the reason it has none.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: GridCell,
    pub result: Option<TestResult>,
    /// Populated for cells that failed under `keep_going`.
    pub error: Option<String>,
}

/// All rows of one sweep, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub label: String,
    pub master_seed: u64,
    pub replicates: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn active_rows(&self) -> impl Iterator<Item = (&GridCell, &TestResult)> {
        self.rows.iter().filter_map(|r| r.result.as_ref().map(|t| (&r.cell, t)))
    }

    pub fn skipped_count(&self) -> usize {
        self.rows.iter().filter(|r| r.cell.skipped.is_some()).count()
    }
}

/// Execution knobs for `run_sweep`.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub parallelism: usize,
    /// Record per-cell failures in the report instead of failing fast.
    pub keep_going: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            parallelism: std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1),
            keep_going: false,
        }
    }
}

enum CellOutcome {
    Done(TestResult),
    Failed(Error),
    Cancelled,
}

/// Runs every active cell across a bounded worker pool. Results land in
/// grid-ordinal slots, so the report is identical for any parallelism.
/// Without `keep_going`, the lowest-ordinal failure is propagated after
/// outstanding cells are cancelled and partial results are discarded.
pub fn run_sweep(spec: &SweepSpec, options: &SweepOptions) -> Result<SweepReport> {
    if options.parallelism == 0 {
        return Err(Error::InvalidInput("parallelism must be at least 1".into()));
    }
    let grid = build_grid(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?;
    let abort = AtomicBool::new(false);
    let keep_going = options.keep_going;
    let outcomes: Vec<Option<CellOutcome>> = pool.install(|| {
        grid.par_iter()
            .map(|cell| {
                if cell.skipped.is_some() {
                    return None;
                }
                if !keep_going && abort.load(Ordering::Relaxed) {
                    return Some(CellOutcome::Cancelled);
                }
                match run_cell(cell, spec) {
                    Ok(result) => Some(CellOutcome::Done(result)),
                    Err(err) => {
                        if !keep_going {
                            abort.store(true, Ordering::Relaxed);
                        }
                        Some(CellOutcome::Failed(err))
                    }
                }
            })
            .collect()
    });

    if !keep_going && outcomes.iter().any(|o| matches!(o, Some(CellOutcome::Failed(_)))) {
        // Propagate the lowest-ordinal failure; partial results are dropped.
        for outcome in outcomes {
            if let Some(CellOutcome::Failed(err)) = outcome {
                return Err(err);
            }
        }
        unreachable!();
    }

    let rows = grid
        .into_iter()
        .zip(outcomes)
        .map(|(cell, outcome)| match outcome {
            None => SweepRow {
                cell,
                result: None,
                error: None,
            },
            Some(CellOutcome::Done(result)) => SweepRow {
                cell,
                result: Some(result),
                error: None,
            },
            Some(CellOutcome::Failed(err)) => SweepRow {
                cell,
                result: None,
                error: Some(err.to_string()),
            },
            Some(CellOutcome::Cancelled) => SweepRow {
                cell,
                result: None,
                error: Some("cancelled".into()),
            },
        })
        .collect();

    Ok(SweepReport {
        label: spec.label.clone(),
        master_seed: spec.master_seed,
        replicates: spec.replicates,
        rows,
    })
}

/// The selected cell of a per-(metric, epsilon) minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub nk: u64,
    pub k: u32,
    pub n: u64,
    pub p_value: f64,
    pub delta: f64,
    pub ci_width: f64,
}

/// Per-(metric, epsilon) outcome of a minimum search; `best` is absent
/// when no cell qualifies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimumEntry {
    pub metric: MetricKind,
    pub epsilon: f64,
    pub best: Option<CellSummary>,
}

fn summarize(cell: &GridCell, result: &TestResult) -> CellSummary {
    CellSummary {
        nk: cell.nk,
        k: cell.k,
        n: cell.n,
        p_value: result.p_value,
        delta: result.effect_size,
        ci_width: result.ci_width,
    }
}

fn metric_epsilon_pairs(report: &SweepReport) -> Vec<(MetricKind, f64)> {
    let mut pairs: Vec<(MetricKind, f64)> = Vec::new();
    for row in &report.rows {
        let key = (row.cell.metric, row.cell.epsilon);
        if !pairs.iter().any(|(m, e)| *m == key.0 && e.to_bits() == key.1.to_bits()) {
            pairs.push(key);
        }
    }
    pairs
}

/// For each (metric, epsilon): the smallest budget with any active cell
/// at `p <= p_threshold`; within that budget, the cell with the minimum
/// p-value (ties to the smallest K).
pub fn find_min_budget(report: &SweepReport, p_threshold: f64) -> Vec<MinimumEntry> {
    metric_epsilon_pairs(report)
        .into_iter()
        .map(|(metric, epsilon)| {
            let qualifying: Vec<(&GridCell, &TestResult)> = report
                .active_rows()
                .filter(|(cell, result)| {
                    cell.metric == metric
                        && cell.epsilon.to_bits() == epsilon.to_bits()
                        && result.p_value <= p_threshold
                })
                .collect();
            let best_nk = qualifying.iter().map(|(cell, _)| cell.nk).min();
            let best = best_nk.map(|nk| {
                let (cell, result) = qualifying
                    .iter()
                    .filter(|(cell, _)| cell.nk == nk)
                    .min_by(|(ca, ra), (cb, rb)| {
                        ra.p_value
                            .total_cmp(&rb.p_value)
                            .then_with(|| ca.k.cmp(&cb.k))
                    })
                    .expect("budget has a qualifying cell");
                summarize(cell, result)
            });
            MinimumEntry {
                metric,
                epsilon,
                best,
            }
        })
        .collect()
}

/// For each (metric, epsilon) within the given budget: the active cell
/// with the smallest CI width (ties to the smallest K).
pub fn find_min_ci(report: &SweepReport, nk: u64) -> Result<Vec<MinimumEntry>> {
    if !report.rows.iter().any(|r| r.cell.nk == nk) {
        return Err(Error::InvalidInput(format!("budget {nk} is not part of the report")));
    }
    Ok(metric_epsilon_pairs(report)
        .into_iter()
        .map(|(metric, epsilon)| {
            let best = report
                .active_rows()
                .filter(|(cell, _)| {
                    cell.nk == nk
                        && cell.metric == metric
                        && cell.epsilon.to_bits() == epsilon.to_bits()
                })
                .min_by(|(ca, ra), (cb, rb)| {
                    ra.ci_width
                        .total_cmp(&rb.ci_width)
                        .then_with(|| ca.k.cmp(&cb.k))
                })
                .map(|(cell, result)| summarize(cell, result));
            MinimumEntry {
                metric,
                epsilon,
                best,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec() -> SweepSpec {
        let mut spec = SweepSpec::with_defaults(
            "Toxicity",
            DirichletParams::new(vec![1.37, 1.33]).unwrap(),
        )
        .unwrap();
        spec.nk_budgets = vec![100];
        spec.k_schedule = vec![1, 5, 20];
        spec.epsilons = vec![0.3];
        spec.metrics = vec![MetricKind::TotalVariation];
        spec.replicates = 50;
        spec
    }

    #[test]
    fn k_schedule_matches_stock_grid() {
        let schedule = default_k_schedule();
        assert_eq!(&schedule[..12], &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 40]);
        assert_eq!(*schedule.last().unwrap(), 500);
        assert_eq!(schedule.len(), 35);
    }

    #[test]
    fn grid_marks_small_cells_skipped() {
        let mut spec = toy_spec();
        spec.k_schedule = vec![1, 60];
        let grid = build_grid(&spec).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid[0].n, 100);
        assert!(grid[0].skipped.is_none());
        assert_eq!(grid[1].n, 1);
        assert!(grid[1].skipped.is_some());
    }

    #[test]
    fn grid_floors_the_split() {
        let mut spec = toy_spec();
        spec.nk_budgets = vec![1000];
        spec.k_schedule = vec![120];
        let grid = build_grid(&spec).unwrap();
        assert_eq!(grid[0].n, 8);
    }

    #[test]
    fn full_grid_has_315_budget_splits() {
        let mut spec = toy_spec();
        spec.nk_budgets = DEFAULT_NK_BUDGETS.to_vec();
        spec.k_schedule = default_k_schedule();
        let grid = build_grid(&spec).unwrap();
        // One epsilon and one metric: each (nk, k) pair appears once.
        assert_eq!(grid.len(), 315);
        for cell in &grid {
            assert!(cell.n * cell.k as u64 <= cell.nk);
            assert!((cell.n + 1) * cell.k as u64 > cell.nk);
            assert_eq!(cell.skipped.is_some(), cell.n < spec.min_items);
        }
    }

    #[test]
    fn grid_rejects_empty_lists() {
        let mut spec = toy_spec();
        spec.epsilons.clear();
        assert!(matches!(build_grid(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn grid_ordinals_are_stable() {
        let spec = toy_spec();
        let a = build_grid(&spec).unwrap();
        let b = build_grid(&spec).unwrap();
        assert_eq!(a, b);
        for (i, cell) in a.iter().enumerate() {
            assert_eq!(cell.ordinal, i);
        }
    }

    #[test]
    fn skipped_cell_refuses_to_run() {
        let mut spec = toy_spec();
        spec.k_schedule = vec![60];
        let grid = build_grid(&spec).unwrap();
        match run_cell(&grid[0], &spec) {
            Err(Error::CellSkipped(_)) => {}
            other => panic!("expected cell-skipped error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_covers_the_grid_and_skips_small_cells() {
        let mut spec = toy_spec();
        spec.k_schedule = default_k_schedule();
        let report = run_sweep(&spec, &SweepOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 35);
        for row in &report.rows {
            let should_skip = row.cell.n < 2;
            assert_eq!(row.cell.skipped.is_some(), should_skip);
            assert_eq!(row.result.is_none(), should_skip);
            if let Some(result) = &row.result {
                assert!(result.p_value.is_finite());
                assert!(result.ci_width.is_finite());
                assert!(result.effect_size.is_finite());
            }
        }
        // floor(100 / k) < 2 exactly for k >= 60 in the schedule.
        let skipped: Vec<u32> =
            report.rows.iter().filter(|r| r.cell.skipped.is_some()).map(|r| r.cell.k).collect();
        assert_eq!(skipped, (60..=500).step_by(20).collect::<Vec<u32>>());
    }

    #[test]
    fn sweep_with_no_active_cells_is_ok() {
        let mut spec = toy_spec();
        spec.k_schedule = vec![500];
        let report = run_sweep(&spec, &SweepOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.active_rows().count(), 0);
    }

    #[test]
    fn sweep_is_parallelism_independent() {
        let spec = toy_spec();
        let serial = run_sweep(
            &spec,
            &SweepOptions {
                parallelism: 1,
                keep_going: false,
            },
        )
        .unwrap();
        for parallelism in [2, 8] {
            let threaded = run_sweep(
                &spec,
                &SweepOptions {
                    parallelism,
                    keep_going: false,
                },
            )
            .unwrap();
            assert_eq!(serial, threaded, "parallelism {parallelism}");
        }
    }

    #[test]
    fn failing_cells_fail_fast_or_are_recorded() {
        // lambda = 0 with K = 1 makes unsmoothed KL blow up immediately.
        let mut spec = toy_spec();
        spec.metrics = vec![MetricKind::KlDivergence];
        spec.lambda = 0.0;
        spec.k_schedule = vec![1];
        assert!(run_sweep(&spec, &SweepOptions::default()).is_err());

        let report = run_sweep(
            &spec,
            &SweepOptions {
                parallelism: 2,
                keep_going: true,
            },
        )
        .unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].error.as_deref().unwrap_or("").contains("KL"));
    }

    fn fake_result(p: f64, ci_width: f64) -> TestResult {
        TestResult {
            metric: MetricKind::TotalVariation,
            p_value: p,
            ci_lower: 0.0,
            ci_upper: ci_width,
            ci_width,
            effect_size: 0.1,
            effect_size_standardized: 1.0,
            r_replicates: 100,
            n_items: 10,
            k_responses: 10,
            nk_budget: 100,
            n_categories: 2,
            epsilon: 0.3,
            master_seed: 0,
        }
    }

    type FakeCell = (u64, u32, Option<(f64, f64)>);

    fn fake_report(cells: &[FakeCell]) -> SweepReport {
        let rows = cells
            .iter()
            .enumerate()
            .map(|(ordinal, &(nk, k, outcome))| {
                let cell = GridCell {
                    ordinal,
                    nk,
                    k,
                    n: nk / k as u64,
                    epsilon: 0.3,
                    metric: MetricKind::TotalVariation,
                    skipped: if outcome.is_none() { Some("skipped".into()) } else { None },
                };
                SweepRow {
                    cell,
                    result: outcome.map(|(p, w)| fake_result(p, w)),
                    error: None,
                }
            })
            .collect();
        SweepReport {
            label: "test".into(),
            master_seed: 0,
            replicates: 100,
            rows,
        }
    }

    #[test]
    fn min_budget_selection_rules() {
        let single = fake_report(&[(100, 1, Some((0.04, 0.1)))]);
        let entry = &find_min_budget(&single, 0.05)[0];
        assert_eq!(entry.best.as_ref().unwrap().nk, 100);

        let none = fake_report(&[(100, 1, Some((0.2, 0.1))), (250, 1, Some((0.2, 0.1)))]);
        assert!(find_min_budget(&none, 0.05)[0].best.is_none());

        let layered = fake_report(&[
            (500, 1, Some((0.06, 0.1))),
            (1000, 5, Some((0.03, 0.1))),
            (1000, 140, Some((0.01, 0.1))),
        ]);
        let best = find_min_budget(&layered, 0.05)[0].best.clone().unwrap();
        assert_eq!((best.nk, best.k), (1000, 140));
        assert_eq!(best.p_value, 0.01);
    }

    #[test]
    fn min_budget_matches_brute_force_scan() {
        let mut stream = crate::sampling::SeedSpec::new(91).stream();
        for _ in 0..50 {
            let cells: Vec<FakeCell> = (0..20)
                .map(|i| {
                    let nk = [100u64, 250, 500, 1000][i % 4];
                    let k = [1u32, 5, 20, 80, 200][i % 5];
                    let active = rand::Rng::random::<f64>(&mut stream) > 0.2;
                    let p = rand::Rng::random::<f64>(&mut stream);
                    let w = rand::Rng::random::<f64>(&mut stream);
                    (nk, k, active.then_some((p, w)))
                })
                .collect();
            let report = fake_report(&cells);
            let entry = &find_min_budget(&report, 0.5)[0];
            let qualifying: Vec<_> = report
                .active_rows()
                .filter(|(_, r)| r.p_value <= 0.5)
                .collect();
            match &entry.best {
                None => assert!(qualifying.is_empty()),
                Some(best) => {
                    assert!(qualifying.iter().all(|(c, _)| best.nk <= c.nk));
                    let at_nk: Vec<_> =
                        qualifying.iter().filter(|(c, _)| c.nk == best.nk).collect();
                    assert!(at_nk.iter().all(|(_, r)| best.p_value <= r.p_value));
                }
            }
        }
    }

    #[test]
    fn min_ci_selection_rules() {
        let one = fake_report(&[(100, 1, Some((0.5, 0.08)))]);
        let entry = &find_min_ci(&one, 100).unwrap()[0];
        assert_eq!(entry.best.as_ref().unwrap().k, 1);

        let two = fake_report(&[(100, 1, Some((0.5, 0.05))), (100, 5, Some((0.5, 0.07)))]);
        assert_eq!(find_min_ci(&two, 100).unwrap()[0].best.as_ref().unwrap().k, 1);

        let tied = fake_report(&[(100, 1, Some((0.5, 0.05))), (100, 2, Some((0.5, 0.05)))]);
        assert_eq!(find_min_ci(&tied, 100).unwrap()[0].best.as_ref().unwrap().k, 1);

        assert!(find_min_ci(&tied, 999).is_err());
    }
}
