//! Monte Carlo experiments: size / FWER / power of the global and stepdown
//! tests, Kolmogorov distances to the Gaussian-max limit, and closeness of
//! the estimated long-run covariance.
//!
//! Seeds are derived per cell from `(master_seed, N, T)` and per replication
//! from `(cell_seed, r)`, so a cell re-run on its own reproduces its numbers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, BootstrapConfig};
use crate::dgp::{default_burn_in, generate_var_model, simulate_panel, ErrorSpec, SparsePattern, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::inference::{global_test, stepdown};
use crate::linproc::{
    gaussian_max_sample, kolmogorov_distance, long_run_covariance, long_run_matrix, max_mean_statistic,
    DenseMatrix, EmpiricalDistribution, StatMode,
};
use crate::rng;
use crate::var_fit::{fit_sparse_var, sample_second_moment, stationarity_correct, FitConfig, VarModel};

const MODEL_TAG: u64 = u64::MAX;
const ORACLE_TAG: u64 = u64::MAX - 1;
const FIT_TAG: u64 = u64::MAX - 2;

/// Share of failed replications above which a cell is flagged incomplete.
pub const INCOMPLETE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Subgaussian,
    HeavyTail,
    /// Polynomial tails with `N` growing like a power of `T`.
    PolyGrowth,
    /// Gaussian errors with `N` growing like `exp(T^a)`.
    ExpGrowth,
}

impl Scenario {
    pub fn default_errors(self) -> ErrorSpec {
        match self {
            Scenario::Subgaussian | Scenario::ExpGrowth => ErrorSpec::gaussian(),
            Scenario::HeavyTail => ErrorSpec::student_t(6.0),
            Scenario::PolyGrowth => ErrorSpec::student_t(8.0),
        }
    }

    /// Desk-scale `(N, T)` presets.
    pub fn preset_grid(self) -> Vec<GridPoint> {
        let ts = [100usize, 200, 400];
        match self {
            Scenario::Subgaussian | Scenario::HeavyTail => [10usize, 50]
                .iter()
                .flat_map(|&n| ts.iter().map(move |&t| GridPoint { n, t }))
                .collect(),
            Scenario::PolyGrowth => ts
                .iter()
                .map(|&t| GridPoint {
                    n: (t as f64).powf(0.8).ceil() as usize,
                    t,
                })
                .collect(),
            Scenario::ExpGrowth => ts
                .iter()
                .map(|&t| GridPoint {
                    n: (t as f64).powf(0.3).exp().ceil() as usize,
                    t,
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subgaussian" => Ok(Scenario::Subgaussian),
            "heavy_tail" => Ok(Scenario::HeavyTail),
            "poly_growth" => Ok(Scenario::PolyGrowth),
            "exp_growth" => Ok(Scenario::ExpGrowth),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub t: usize,
}

/// True data-generating VAR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `A_1 = a·I`.
    Diagonal { a: f64 },
    /// Random sparse model, drawn once per cell.
    Generated {
        pattern: SparsePattern,
        k: usize,
        target_rho: f64,
    },
}

impl ModelSpec {
    pub fn build(&self, n: usize, seed: u64) -> Result<VarModel> {
        match *self {
            ModelSpec::Diagonal { a } => VarModel::new(vec![DenseMatrix::scaled_identity(n, a)]),
            ModelSpec::Generated {
                pattern,
                k,
                target_rho,
            } => generate_var_model(n, k, &pattern, target_rho, seed),
        }
    }
}

/// How the bootstrap model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimation {
    /// Lasso VAR with lag order `k` (the true order when absent).
    Lasso { k: Option<usize>, fit: FitConfig },
    /// The true model. The bootstrap uses the realized innovations, the
    /// covariance experiment the population `Σ_ε`.
    Truth,
    /// `Â = 0`, residuals equal to the data.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub series: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub model: ModelSpec,
    /// Scenario default when absent.
    pub errors: Option<ErrorSpec>,
    pub grid: Vec<GridPoint>,
    pub estimation: Estimation,
    pub eps: f64,
    pub b_reps: usize,
    pub mc_reps: usize,
    pub alphas: Vec<f64>,
    pub mode: StatMode,
    pub master_seed: u64,
    pub mean_shift: Option<MeanShift>,
    pub burn_in: Option<usize>,
    /// Gaussian-max oracle draws per sample (KS experiment).
    pub oracle_draws: usize,
    /// Representative fits per cell (KS experiment).
    pub ks_fits: usize,
    /// Keep one trace row per replication.
    pub trace: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Subgaussian,
            model: ModelSpec::Diagonal { a: 0.5 },
            errors: None,
            grid: vec![GridPoint { n: 10, t: 100 }],
            estimation: Estimation::Lasso {
                k: None,
                fit: FitConfig::default(),
            },
            eps: crate::var_fit::DEFAULT_CORRECTION_EPS,
            b_reps: 499,
            mc_reps: 200,
            alphas: vec![0.05],
            mode: StatMode::AbsMax,
            master_seed: 0,
            mean_shift: None,
            burn_in: None,
            oracle_draws: 20_000,
            ks_fits: 1,
            trace: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("experiment grid is empty".into()));
        }
        if self.mc_reps == 0 || self.b_reps == 0 {
            return Err(Error::Config("mc_reps and b_reps must be ≥ 1".into()));
        }
        if self.grid.iter().any(|g| g.n == 0 || g.t == 0) {
            return Err(Error::Config("grid points need N ≥ 1 and T ≥ 1".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config("alpha levels must lie in (0, 1)".into()));
        }
        if let Some(s) = self.mean_shift {
            if self.grid.iter().any(|g| s.series >= g.n) {
                return Err(Error::Config(format!("shifted series {} outside the panel", s.series)));
            }
        }
        Ok(())
    }

    pub fn errors(&self) -> ErrorSpec {
        self.errors.clone().unwrap_or_else(|| self.scenario.default_errors())
    }

    pub fn cell_seed(&self, g: GridPoint) -> u64 {
        rng::derive(self.master_seed, &[g.n as u64, g.t as u64])
    }

    /// Copy restricted to one grid point.
    pub fn single_cell(&self, g: GridPoint) -> Self {
        Self {
            grid: vec![g],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Size,
    KsConvergence,
    CovarianceCloseness,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(ExperimentKind::Size),
            "ks" | "ks_convergence" => Ok(ExperimentKind::KsConvergence),
            "cov" | "covariance" | "covariance_closeness" => Ok(ExperimentKind::CovarianceCloseness),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub alpha: f64,
    /// Global-test rejection rate (size under the null, power otherwise).
    pub global_rate: f64,
    pub global_se: f64,
    /// Probability that the stepdown rejects at least one null series.
    pub fwer: f64,
    pub fwer_se: f64,
    /// Probability that the shifted series is rejected by the stepdown.
    pub shifted_rate: Option<f64>,
    pub shifted_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsSummary {
    /// Statistic distribution vs Gaussian-max oracle from the true `Σ`.
    pub stat_vs_oracle: f64,
    /// Mean over representative fits of `{Q*}` vs the true-`Σ` oracle.
    pub boot_vs_oracle: f64,
    pub boot_vs_stat: f64,
    /// Oracle from `Σ̂` vs oracle from `Σ`.
    pub hat_oracle_vs_oracle: f64,
    pub stat_reps: usize,
    pub fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub mean_error: f64,
    pub p90_error: f64,
    /// `‖Σ‖_max` of the truth, for scale.
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub replication: usize,
    pub seed: u64,
    pub value: f64,
    pub rejections: Vec<bool>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub t: usize,
    pub cell_seed: u64,
    pub replications: usize,
    pub completed: usize,
    pub failures: usize,
    pub incomplete: bool,
    pub failure_samples: Vec<String>,
    pub rates: Vec<RateRow>,
    pub ks: Option<KsSummary>,
    pub covariance: Option<CovarianceSummary>,
    pub trace: Option<Vec<TraceRow>>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub spec: ExperimentSpec,
    pub cells: Vec<CellReport>,
    pub software: String,
}

/// One flat row per cell and alpha level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub kind: String,
    pub n: usize,
    pub t: usize,
    pub cell_seed: u64,
    pub alpha: Option<f64>,
    pub completed: usize,
    pub failures: usize,
    pub incomplete: bool,
    pub global_rate: Option<f64>,
    pub global_se: Option<f64>,
    pub fwer: Option<f64>,
    pub fwer_se: Option<f64>,
    pub shifted_rate: Option<f64>,
    pub ks_stat_oracle: Option<f64>,
    pub ks_boot_oracle: Option<f64>,
    pub ks_hat_oracle: Option<f64>,
    pub cov_mean: Option<f64>,
    pub cov_p90: Option<f64>,
}

impl ExperimentReport {
    /// Zero every timing field, leaving a pure function of the spec.
    pub fn without_timing(mut self) -> Self {
        for c in &mut self.cells {
            c.runtime_secs = 0.0;
        }
        self
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let kind = serde_plain_kind(self.kind);
        let mut rows = Vec::new();
        for c in &self.cells {
            let base = CsvRow {
                kind: kind.into(),
                n: c.n,
                t: c.t,
                cell_seed: c.cell_seed,
                alpha: None,
                completed: c.completed,
                failures: c.failures,
                incomplete: c.incomplete,
                global_rate: None,
                global_se: None,
                fwer: None,
                fwer_se: None,
                shifted_rate: None,
                ks_stat_oracle: c.ks.as_ref().map(|k| k.stat_vs_oracle),
                ks_boot_oracle: c.ks.as_ref().map(|k| k.boot_vs_oracle),
                ks_hat_oracle: c.ks.as_ref().map(|k| k.hat_oracle_vs_oracle),
                cov_mean: c.covariance.as_ref().map(|v| v.mean_error),
                cov_p90: c.covariance.as_ref().map(|v| v.p90_error),
            };
            if c.rates.is_empty() {
                rows.push(base);
            } else {
                for r in &c.rates {
                    rows.push(CsvRow {
                        alpha: Some(r.alpha),
                        global_rate: Some(r.global_rate),
                        global_se: Some(r.global_se),
                        fwer: Some(r.fwer),
                        fwer_se: Some(r.fwer_se),
                        shifted_rate: r.shifted_rate,
                        ..base.clone()
                    });
                }
            }
        }
        rows
    }
}

fn serde_plain_kind(k: ExperimentKind) -> &'static str {
    match k {
        ExperimentKind::Size => "size",
        ExperimentKind::KsConvergence => "ks_convergence",
        ExperimentKind::CovarianceCloseness => "covariance_closeness",
    }
}

pub fn binomial_se(p: f64, reps: usize) -> f64 {
    if reps == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / reps as f64).sqrt()
}

pub fn run_experiment(kind: ExperimentKind, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    match kind {
        ExperimentKind::Size => run_size_experiment(spec),
        ExperimentKind::KsConvergence => run_ks_convergence(spec),
        ExperimentKind::CovarianceCloseness => run_covariance_closeness(spec),
    }
}

/// Everything a replication needs about its cell.
struct Cell {
    g: GridPoint,
    seed: u64,
    truth: VarModel,
    errors: ErrorSpec,
    fit_k: usize,
    burn_in: usize,
}

fn prepare_cell(spec: &ExperimentSpec, g: GridPoint) -> Result<Cell> {
    let seed = spec.cell_seed(g);
    let truth = spec.model.build(g.n, rng::mix(seed, MODEL_TAG))?;
    let fit_k = match spec.estimation {
        Estimation::Lasso { k: Some(k), .. } => k,
        _ => truth.k(),
    };
    Ok(Cell {
        g,
        seed,
        burn_in: spec.burn_in.unwrap_or_else(|| default_burn_in(truth.k())),
        errors: spec.errors(),
        fit_k,
        truth,
    })
}

struct Draw {
    panel: TimeSeriesPanel,
    errors: DenseMatrix,
}

/// Simulated panel with at least `fit_k` presample rows.
fn draw(cell: &Cell, seed: u64, shift: Option<MeanShift>) -> Result<Draw> {
    let extra = cell.fit_k.saturating_sub(cell.truth.k());
    let sim = simulate_panel(&cell.truth, cell.g.t + extra, &cell.errors, cell.burn_in, seed)?;
    let mut panel = if extra == 0 {
        sim.panel
    } else {
        TimeSeriesPanel::new(sim.panel.data().clone(), cell.truth.k() + extra)?
    };
    if let Some(s) = shift {
        panel = panel.shifted(s.series, s.delta);
    }
    let errors = sim.errors.block(extra, 0, cell.g.t, cell.g.n);
    Ok(Draw { panel, errors })
}

/// Bootstrap model and residuals for one panel.
fn estimate(spec: &ExperimentSpec, cell: &Cell, d: &Draw) -> Result<(VarModel, DenseMatrix)> {
    match spec.estimation {
        Estimation::Lasso { fit, .. } => {
            let panel = d.panel.with_presample(cell.fit_k)?;
            let rep = fit_sparse_var(&panel, cell.fit_k, &fit)?;
            Ok((stationarity_correct(&rep.model, spec.eps)?, rep.residuals))
        }
        Estimation::Truth => Ok((cell.truth.clone(), d.errors.clone())),
        Estimation::Zero => {
            let t = d.panel.t_obs();
            let n = d.panel.n_series();
            let data = d.panel.data();
            Ok((VarModel::zeros(n, 1), data.block(data.rows() - t, 0, t, n)))
        }
    }
}

fn bootstrap_panel(spec: &ExperimentSpec, cell: &Cell, d: &Draw) -> TimeSeriesPanel {
    match spec.estimation {
        Estimation::Lasso { .. } => d.panel.with_presample(cell.fit_k).expect("checked in estimate"),
        Estimation::Truth => d.panel.with_presample(cell.truth.k()).expect("simulated presample"),
        Estimation::Zero => d.panel.with_presample(1.min(d.panel.k_presample())).expect("presample"),
    }
}

struct SizeOutcome {
    global: Vec<bool>,
    false_rejection: Vec<bool>,
    shifted: Vec<bool>,
    p_value: f64,
}

fn size_replication(spec: &ExperimentSpec, cell: &Cell, r: usize) -> Result<SizeOutcome> {
    let seed = rng::mix(cell.seed, r as u64);
    let d = draw(cell, rng::mix(seed, 0), spec.mean_shift)?;
    let (model, residuals) = estimate(spec, cell, &d)?;
    let panel = bootstrap_panel(spec, cell, &d);
    let cfg = BootstrapConfig {
        b_reps: spec.b_reps,
        mode: spec.mode,
        seed: rng::mix(seed, 1),
        parallel_chunk: 16,
    };
    let run = run_bootstrap(&model, &residuals, &panel, &cfg)?;
    let mut out = SizeOutcome {
        global: Vec::new(),
        false_rejection: Vec::new(),
        shifted: Vec::new(),
        p_value: f64::NAN,
    };
    for &alpha in &spec.alphas {
        let g = global_test(&panel, &run, alpha, spec.mode)?;
        out.p_value = g.p_value;
        out.global.push(g.reject);
        let s = stepdown(&panel, &run, alpha)?;
        let shifted = spec.mean_shift.map(|m| m.series);
        out.false_rejection.push(s.rejected.iter().any(|&(j, _)| Some(j) != shifted));
        out.shifted.push(shifted.is_some_and(|j| s.series[j].rejected_at.is_some()));
    }
    Ok(out)
}

fn failure_summary(failures: &[(usize, String)]) -> Vec<String> {
    failures.iter().take(5).map(|(r, e)| format!("replication {r}: {e}")).collect()
}

fn is_incomplete(failures: usize, reps: usize) -> bool {
    failures as f64 > INCOMPLETE_SHARE * reps as f64
}

/// Rejection frequencies of the global test and the stepdown under the
/// spec's DGP, per grid cell and alpha level.
pub fn run_size_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &g in &spec.grid {
        let start = Instant::now();
        let cell = prepare_cell(spec, g)?;
        let outcomes: Vec<Result<SizeOutcome>> = (0..spec.mc_reps)
            .into_par_iter()
            .map(|r| size_replication(spec, &cell, r))
            .collect();
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        let mut trace = Vec::new();
        for (r, o) in outcomes.into_iter().enumerate() {
            let seed = rng::mix(cell.seed, r as u64);
            match o {
                Ok(v) => {
                    if spec.trace {
                        trace.push(TraceRow {
                            replication: r,
                            seed,
                            value: v.p_value,
                            rejections: v.global.clone(),
                            failure: None,
                        });
                    }
                    ok.push(v);
                }
                Err(e) => {
                    if spec.trace {
                        trace.push(TraceRow {
                            replication: r,
                            seed,
                            value: f64::NAN,
                            rejections: Vec::new(),
                            failure: Some(e.to_string()),
                        });
                    }
                    failed.push((r, e.to_string()));
                }
            }
        }
        let m = ok.len();
        let rate = |f: &dyn Fn(&SizeOutcome) -> bool| {
            if m == 0 {
                f64::NAN
            } else {
                ok.iter().filter(|o| f(o)).count() as f64 / m as f64
            }
        };
        let rates = spec
            .alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let global_rate = rate(&|o| o.global[i]);
                let fwer = rate(&|o| o.false_rejection[i]);
                let shifted_rate = spec.mean_shift.map(|_| rate(&|o| o.shifted[i]));
                RateRow {
                    alpha,
                    global_rate,
                    global_se: binomial_se(global_rate, m),
                    fwer,
                    fwer_se: binomial_se(fwer, m),
                    shifted_rate,
                    shifted_se: shifted_rate.map(|p| binomial_se(p, m)),
                }
            })
            .collect();
        cells.push(CellReport {
            n: g.n,
            t: g.t,
            cell_seed: cell.seed,
            replications: spec.mc_reps,
            completed: m,
            failures: failed.len(),
            incomplete: is_incomplete(failed.len(), spec.mc_reps),
            failure_samples: failure_summary(&failed),
            rates,
            ks: None,
            covariance: None,
            trace: spec.trace.then_some(trace),
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report(ExperimentKind::Size, spec, cells))
}

fn report(kind: ExperimentKind, spec: &ExperimentSpec, cells: Vec<CellReport>) -> ExperimentReport {
    ExperimentReport {
        kind,
        spec: spec.clone(),
        cells,
        software: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
    }
}

/// Population long-run covariance `𝓑(1) Σ_ε 𝓑(1)'` of the cell's true model.
fn true_long_run(cell: &Cell) -> Result<DenseMatrix> {
    long_run_covariance(&long_run_matrix(&cell.truth)?, &cell.errors.covariance(cell.g.n))
}

/// `Σ̂` implied by the estimation choice.
fn estimated_long_run(spec: &ExperimentSpec, cell: &Cell, d: &Draw) -> Result<DenseMatrix> {
    match spec.estimation {
        Estimation::Truth => true_long_run(cell),
        _ => {
            let (model, residuals) = estimate(spec, cell, d)?;
            long_run_covariance(&long_run_matrix(&model)?, &sample_second_moment(&residuals))
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per cell: the sampling distribution of the statistic across simulated
/// panels, bootstrap draws from representative fits, and Gaussian-max
/// oracles from the true and the estimated long-run covariance, compared in
/// Kolmogorov distance.
pub fn run_ks_convergence(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    if spec.mode != StatMode::AbsMax {
        return Err(Error::Config("the Gaussian-max oracle is defined for the abs_max statistic".into()));
    }
    if spec.ks_fits == 0 || spec.oracle_draws == 0 {
        return Err(Error::Config("ks_fits and oracle_draws must be ≥ 1".into()));
    }
    let mut cells = Vec::new();
    for &g in &spec.grid {
        let start = Instant::now();
        let cell = prepare_cell(spec, g)?;
        let sigma = true_long_run(&cell)?;
        let oracle = gaussian_max_sample(&sigma, spec.oracle_draws, rng::mix(cell.seed, ORACLE_TAG))?;

        let stats: Vec<Result<f64>> = (0..spec.mc_reps)
            .into_par_iter()
            .map(|r| {
                let d = draw(&cell, rng::mix(rng::mix(cell.seed, r as u64), 0), None)?;
                max_mean_statistic(&d.panel, StatMode::AbsMax)
            })
            .collect();
        let mut failed = Vec::new();
        let mut values = Vec::new();
        for (r, s) in stats.into_iter().enumerate() {
            match s {
                Ok(v) => values.push(v),
                Err(e) => failed.push((r, e.to_string())),
            }
        }
        let stat_dist = EmpiricalDistribution::new(values)?;

        let fits: Vec<Result<(f64, f64, f64)>> = (0..spec.ks_fits)
            .into_par_iter()
            .map(|f| {
                let fseed = rng::derive(cell.seed, &[FIT_TAG, f as u64]);
                let d = draw(&cell, rng::mix(fseed, 0), None)?;
                let (model, residuals) = estimate(spec, &cell, &d)?;
                let panel = bootstrap_panel(spec, &cell, &d);
                let cfg = BootstrapConfig {
                    b_reps: spec.b_reps,
                    mode: StatMode::AbsMax,
                    seed: rng::mix(fseed, 1),
                    parallel_chunk: 16,
                };
                let run = run_bootstrap(&model, &residuals, &panel, &cfg)?;
                let boot = EmpiricalDistribution::new(run.q_stats)?;
                let sigma_hat = estimated_long_run(spec, &cell, &d)?;
                let hat_oracle = gaussian_max_sample(&sigma_hat, spec.oracle_draws, rng::mix(fseed, 2))?;
                Ok((
                    kolmogorov_distance(&boot, &oracle),
                    kolmogorov_distance(&boot, &stat_dist),
                    kolmogorov_distance(&hat_oracle, &oracle),
                ))
            })
            .collect();
        let mut fit_vals = Vec::new();
        for (f, r) in fits.into_iter().enumerate() {
            match r {
                Ok(v) => fit_vals.push(v),
                Err(e) => failed.push((spec.mc_reps + f, format!("representative fit {f}: {e}"))),
            }
        }
        let col = |i: usize| -> f64 {
            let v: Vec<f64> = fit_vals
                .iter()
                .map(|t| match i {
                    0 => t.0,
                    1 => t.1,
                    _ => t.2,
                })
                .collect();
            if v.is_empty() {
                f64::NAN
            } else {
                mean(&v)
            }
        };
        let total = spec.mc_reps + spec.ks_fits;
        cells.push(CellReport {
            n: g.n,
            t: g.t,
            cell_seed: cell.seed,
            replications: total,
            completed: total - failed.len(),
            failures: failed.len(),
            incomplete: is_incomplete(failed.len(), total),
            failure_samples: failure_summary(&failed),
            rates: Vec::new(),
            ks: Some(KsSummary {
                stat_vs_oracle: kolmogorov_distance(&stat_dist, &oracle),
                boot_vs_oracle: col(0),
                boot_vs_stat: col(1),
                hat_oracle_vs_oracle: col(2),
                stat_reps: stat_dist.len(),
                fits: fit_vals.len(),
            }),
            covariance: None,
            trace: None,
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report(ExperimentKind::KsConvergence, spec, cells))
}

/// Mean and 90th percentile of `‖Σ̂ − Σ‖_max` across replications.
pub fn run_covariance_closeness(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &g in &spec.grid {
        let start = Instant::now();
        let cell = prepare_cell(spec, g)?;
        let sigma = true_long_run(&cell)?;
        let errs: Vec<Result<f64>> = (0..spec.mc_reps)
            .into_par_iter()
            .map(|r| {
                let d = draw(&cell, rng::mix(rng::mix(cell.seed, r as u64), 0), None)?;
                let hat = estimated_long_run(spec, &cell, &d)?;
                Ok(hat.sub(&sigma)?.max_abs())
            })
            .collect();
        let mut values = Vec::new();
        let mut failed = Vec::new();
        let mut trace = Vec::new();
        for (r, e) in errs.into_iter().enumerate() {
            let seed = rng::mix(cell.seed, r as u64);
            match e {
                Ok(v) => {
                    values.push(v);
                    if spec.trace {
                        trace.push(TraceRow {
                            replication: r,
                            seed,
                            value: v,
                            rejections: Vec::new(),
                            failure: None,
                        });
                    }
                }
                Err(e) => failed.push((r, e.to_string())),
            }
        }
        let covariance = if values.is_empty() {
            None
        } else {
            let d = EmpiricalDistribution::new(values.clone())?;
            Some(CovarianceSummary {
                mean_error: mean(&values),
                p90_error: d.quantile(0.9),
                sigma_max: sigma.max_abs(),
            })
        };
        cells.push(CellReport {
            n: g.n,
            t: g.t,
            cell_seed: cell.seed,
            replications: spec.mc_reps,
            completed: values.len(),
            failures: failed.len(),
            incomplete: is_incomplete(failed.len(), spec.mc_reps),
            failure_samples: failure_summary(&failed),
            rates: Vec::new(),
            ks: None,
            covariance,
            trace: spec.trace.then_some(trace),
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report(ExperimentKind::CovarianceCloseness, spec, cells))
}
