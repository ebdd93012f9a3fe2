use std::io::Write;
use std::path::Path;

use hdvb_core::bootstrap::{run_bootstrap, BootstrapConfig};
use hdvb_core::dgp::{simulate_panel, TimeSeriesPanel};
use hdvb_core::inference::{global_test, stepdown, StepdownResult};
use hdvb_core::linproc::max_mean_statistic;
use hdvb_core::mc::{run_experiment, ExperimentReport, ExperimentSpec};
use hdvb_core::var_fit::{
    fit_sparse_var, residual_autocorr_diagnostic, stationarity_correct, AutocorrDiagnostic, FitReport, VarModel,
};
use serde::Serialize;

use crate::config::Settings;
use crate::error::{Class, CliError};
use crate::ingest::ingest_csv;
use crate::options::{McConfig, RunConfig, SimConfig};

pub const SOFTWARE: &str = concat!("hdvb ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Serialize)]
pub struct DataSummary {
    pub path: String,
    pub t_obs: usize,
    pub n_series: usize,
    pub k_presample: usize,
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
pub struct EquationRow {
    pub series: usize,
    pub lambda: f64,
    pub df: usize,
    pub kkt_violation: f64,
    pub converged: bool,
    pub iterations: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ModelSummary {
    pub lags: usize,
    pub selector: &'static str,
    pub rho_before: f64,
    pub rho_after: f64,
    pub corrected: bool,
    pub correction_factor: f64,
    pub nonzeros: usize,
    pub equations: Vec<EquationRow>,
}

#[derive(Debug, Serialize)]
pub struct BootstrapSummary {
    pub b_reps: usize,
    pub seed: u64,
    pub mode: &'static str,
    pub fingerprint: String,
}

#[derive(Debug, Serialize)]
pub struct Rejection {
    pub series: usize,
    pub label: Option<String>,
    pub iteration: usize,
}

#[derive(Debug, Serialize)]
pub struct StepdownTrail {
    /// The stepdown always ranks `|√T·x̄_j|`.
    pub statistic: &'static str,
    pub rejected: Vec<Rejection>,
    pub retained: Vec<usize>,
    pub critical_values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub reject: bool,
    pub q_crit: f64,
    pub stepdown: StepdownTrail,
}

#[derive(Debug, Serialize)]
pub struct TestReport {
    pub command: &'static str,
    pub software: &'static str,
    pub config: RunConfig,
    pub settings: Settings,
    pub data: DataSummary,
    pub model: ModelSummary,
    pub bootstrap: BootstrapSummary,
    pub q_obs: f64,
    pub p_value: f64,
    pub results: Vec<AlphaResult>,
}

#[derive(Debug, Serialize)]
pub struct Coefficient {
    pub lag: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct FitOnlyReport {
    pub command: &'static str,
    pub software: &'static str,
    pub config: RunConfig,
    pub settings: Settings,
    pub data: DataSummary,
    pub model: ModelSummary,
    /// Nonzero entries of the fitted, uncorrected model.
    pub coefficients: Vec<Coefficient>,
    pub residual_variance: Vec<f64>,
    pub diagnostic: Option<AutocorrDiagnostic>,
    pub diagnostic_note: Option<String>,
    pub q_obs: f64,
}

fn data_summary(path: &Path, panel: &TimeSeriesPanel) -> DataSummary {
    DataSummary {
        path: path.display().to_string(),
        t_obs: panel.t_obs(),
        n_series: panel.n_series(),
        k_presample: panel.k_presample(),
        labels: panel.labels().map(<[String]>::to_vec),
    }
}

fn model_summary(cfg: &RunConfig, fit: &FitReport, corrected: &VarModel) -> Result<ModelSummary, CliError> {
    Ok(ModelSummary {
        lags: cfg.lags,
        selector: cfg.selector.name(),
        rho_before: fit.model.companion_radius()?,
        rho_after: corrected.companion_radius()?,
        corrected: corrected.corrected(),
        correction_factor: corrected.correction_factor(),
        nonzeros: fit.model.nonzeros(),
        equations: fit
            .per_equation
            .iter()
            .enumerate()
            .map(|(series, e)| EquationRow {
                series,
                lambda: e.lambda,
                df: e.df,
                kkt_violation: e.kkt_violation,
                converged: e.converged,
                iterations: e.iterations,
                failure: e.failure.clone(),
            })
            .collect(),
    })
}

fn trail(s: &StepdownResult, panel: &TimeSeriesPanel) -> StepdownTrail {
    let label = |j: usize| panel.labels().map(|l| l[j].clone());
    StepdownTrail {
        statistic: "abs_max",
        rejected: s
            .rejected
            .iter()
            .map(|&(series, iteration)| Rejection {
                series,
                label: label(series),
                iteration,
            })
            .collect(),
        retained: s.retained.clone(),
        critical_values: s.critical_values.clone(),
        iterations: s.iterations,
    }
}

fn with_bootstrap_class(e: hdvb_core::Error) -> CliError {
    let mut c = CliError::from(e);
    if c.class != Class::Input {
        c.class = Class::Bootstrap;
    }
    c
}

/// Fit, correct, bootstrap, then the global test and stepdown at every alpha.
pub fn cmd_test(cfg: &RunConfig, settings: &Settings) -> Result<TestReport, CliError> {
    let panel = ingest_csv(&cfg.input, cfg.lags)?;
    let fit = fit_sparse_var(&panel, cfg.lags, &cfg.fit_config())?;
    let model = stationarity_correct(&fit.model, cfg.eps)?;
    let summary = model_summary(cfg, &fit, &model)?;
    let boot_cfg = BootstrapConfig {
        b_reps: cfg.b_reps,
        mode: cfg.mode,
        seed: cfg.seed,
        ..Default::default()
    };
    let run = run_bootstrap(&model, &fit.residuals, &panel, &boot_cfg).map_err(with_bootstrap_class)?;
    let mut results = Vec::new();
    let mut head = None;
    for &alpha in &cfg.alpha {
        let g = global_test(&panel, &run, alpha, cfg.mode)?;
        let s = stepdown(&panel, &run, alpha)?;
        head.get_or_insert((g.q_obs, g.p_value));
        results.push(AlphaResult {
            alpha,
            reject: g.reject,
            q_crit: g.q_crit,
            stepdown: trail(&s, &panel),
        });
    }
    let (q_obs, p_value) = head.ok_or_else(|| CliError::internal("no alpha levels"))?;
    Ok(TestReport {
        command: "test",
        software: SOFTWARE,
        config: cfg.clone(),
        settings: settings.clone(),
        data: data_summary(&cfg.input, &panel),
        model: summary,
        bootstrap: BootstrapSummary {
            b_reps: run.b_reps(),
            seed: cfg.seed,
            mode: cfg.mode.as_str(),
            fingerprint: run.fingerprint.clone(),
        },
        q_obs,
        p_value,
        results,
    })
}

/// Fit and correct only, with the residual whiteness check.
pub fn cmd_fit(cfg: &RunConfig, settings: &Settings) -> Result<FitOnlyReport, CliError> {
    let panel = ingest_csv(&cfg.input, cfg.lags)?;
    let fit = fit_sparse_var(&panel, cfg.lags, &cfg.fit_config())?;
    let model = stationarity_correct(&fit.model, cfg.eps)?;
    let summary = model_summary(cfg, &fit, &model)?;
    let (diagnostic, diagnostic_note) =
        match residual_autocorr_diagnostic(&fit.residuals, cfg.diagnostic_lags, cfg.alpha[0]) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let sigma = fit.sigma_eps_hat();
    Ok(FitOnlyReport {
        command: "fit",
        software: SOFTWARE,
        config: cfg.clone(),
        settings: settings.clone(),
        data: data_summary(&cfg.input, &panel),
        model: summary,
        coefficients: fit
            .model
            .sparse_terms()
            .into_iter()
            .enumerate()
            .flat_map(|(row, terms)| {
                terms.into_iter().map(move |(lag, col, value)| Coefficient { lag, row, col, value })
            })
            .collect(),
        residual_variance: (0..sigma.rows()).map(|i| sigma.get(i, i)).collect(),
        diagnostic,
        diagnostic_note,
        q_obs: max_mean_statistic(&panel, cfg.mode)?,
    })
}

/// Simulated panel including its presample rows, oldest first.
pub fn cmd_simulate(cfg: &SimConfig) -> Result<TimeSeriesPanel, CliError> {
    let model = cfg.model.build(cfg.n, cfg.model_seed)?;
    let sim = simulate_panel(&model, cfg.t, &cfg.errors, cfg.burn_in, cfg.path_seed)?;
    Ok(match cfg.mean_shift {
        Some(m) => sim.panel.shifted(m.series, m.delta),
        None => sim.panel,
    })
}

pub fn write_panel_csv<W: Write>(panel: &TimeSeriesPanel, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::internal(format!("writing CSV: {e}"));
    let header: Vec<String> = match panel.labels() {
        Some(l) => l.to_vec(),
        None => (1..=panel.n_series()).map(|j| format!("x{j}")).collect(),
    };
    w.write_record(&header).map_err(io)?;
    let data = panel.data();
    for r in 0..data.rows() {
        w.write_record(data.row(r).iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::internal(format!("writing CSV: {e}")))
}

pub fn experiment_spec(cfg: &McConfig) -> ExperimentSpec {
    ExperimentSpec {
        scenario: cfg.scenario,
        model: cfg.model,
        errors: cfg.errors.clone(),
        grid: cfg.grid.clone(),
        estimation: cfg.estimation,
        eps: cfg.eps,
        b_reps: cfg.b_reps,
        mc_reps: cfg.reps,
        alphas: cfg.alpha.clone(),
        mode: cfg.mode,
        master_seed: cfg.seed,
        mean_shift: cfg.mean_shift,
        burn_in: None,
        oracle_draws: cfg.oracle_draws,
        ks_fits: cfg.ks_fits,
        trace: false,
    }
}

pub fn cmd_mc(cfg: &McConfig) -> Result<ExperimentReport, CliError> {
    Ok(run_experiment(cfg.kind, &experiment_spec(cfg))?)
}

pub fn write_mc_csv(report: &ExperimentReport, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(file);
    for row in report.csv_rows() {
        w.serialize(row).map_err(|e| CliError::internal(format!("writing CSV: {e}")))?;
    }
    w.flush().map_err(|e| CliError::internal(format!("writing CSV: {e}")))
}

/// Pretty JSON to `path`, or stdout when absent.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| CliError::internal(e.to_string()))
        }
    }
}
