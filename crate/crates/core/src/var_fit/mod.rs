//! Equation-by-equation sparse VAR estimation, residuals, the stationarity
//! correction and residual whiteness diagnostics.

mod diagnostics;

pub use diagnostics::{holm, residual_autocorr_diagnostic, AutocorrCell, AutocorrDiagnostic};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::lasso::{
    grid_from_max, lasso_fit_prepared, select_lambda_bic, select_lambda_tscv, LassoFit,
    PreparedDesign, SolverConfig,
};
use crate::linproc::{build_companion, CompanionMatrix, DenseMatrix};

/// VAR(K) coefficients `A_1 … A_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    a_mats: Vec<DenseMatrix>,
    n: usize,
    k: usize,
    corrected: bool,
    correction_factor: f64,
}

impl VarModel {
    pub fn new(a_mats: Vec<DenseMatrix>) -> Result<Self> {
        let companion = build_companion(&a_mats)?;
        Ok(Self {
            n: companion.n(),
            k: companion.k(),
            a_mats,
            corrected: false,
            correction_factor: 1.0,
        })
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self::new(vec![DenseMatrix::zeros(n, n); k]).expect("valid shapes")
    }

    /// Rebuild from per-equation rows `β_j' = (a_{j,1}, …, a_{j,K})`.
    pub fn from_rows(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        let n = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != n * k) {
            return Err(Error::Shape(format!("each row must have N·K = {} entries", n * k)));
        }
        let mut mats = vec![DenseMatrix::zeros(n, n); k];
        for (j, row) in rows.iter().enumerate() {
            for (lag, a) in mats.iter_mut().enumerate() {
                a.row_mut(j).copy_from_slice(&row[lag * n..(lag + 1) * n]);
            }
        }
        for a in &mats {
            if !a.all_finite() {
                return Err(Error::Estimation("non-finite coefficient".into()));
            }
        }
        Self::new(mats)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|j| self.a_mats.iter().flat_map(|a| a.row(j).to_vec()).collect())
            .collect()
    }

    pub fn a_mats(&self) -> &[DenseMatrix] {
        &self.a_mats
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn corrected(&self) -> bool {
        self.corrected
    }

    /// Product of the multipliers `1/(ρ+ε)` applied by the correction.
    pub fn correction_factor(&self) -> f64 {
        self.correction_factor
    }

    pub fn companion(&self) -> CompanionMatrix {
        build_companion(&self.a_mats).expect("shapes validated at construction")
    }

    pub fn companion_radius(&self) -> Result<f64> {
        self.companion().spectral_radius()
    }

    /// Nonzero coefficients per equation as `(lag, series, value)`, ordered by
    /// lag then series.
    pub fn sparse_terms(&self) -> Vec<Vec<(usize, usize, f64)>> {
        (0..self.n)
            .map(|j| {
                self.a_mats
                    .iter()
                    .enumerate()
                    .flat_map(|(lag, a)| {
                        a.row(j)
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(move |(i, &v)| (lag + 1, i, v))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.a_mats
            .iter()
            .map(|a| a.as_slice().iter().filter(|v| **v != 0.0).count())
            .sum()
    }
}

/// Lag design: row `t` is `(x'_{t-1}, …, x'_{t-K})`, responses are `x_t`,
/// for `t = 1..T`.
pub fn build_lag_design(panel: &TimeSeriesPanel, k: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    if k == 0 {
        return Err(Error::Config("lag order must be ≥ 1".into()));
    }
    if panel.k_presample() < k {
        return Err(Error::Input(format!(
            "lag order {k} needs {k} presample rows, panel has {}",
            panel.k_presample()
        )));
    }
    let (t, n) = (panel.t_obs(), panel.n_series());
    let mut design = DenseMatrix::zeros(t, n * k);
    let mut responses = DenseMatrix::zeros(t, n);
    for row in 0..t {
        let time = row as isize + 1;
        for lag in 1..=k {
            design.row_mut(row)[(lag - 1) * n..lag * n].copy_from_slice(panel.obs(time - lag as isize));
        }
        responses.row_mut(row).copy_from_slice(panel.obs(time));
    }
    Ok((design, responses))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selector {
    Bic {
        n_points: usize,
        ratio: f64,
    },
    Tscv {
        n_points: usize,
        ratio: f64,
        n_folds: usize,
        /// Defaults to `T/2` when absent.
        min_train: Option<usize>,
    },
    Fixed {
        lambda: f64,
    },
}

impl Default for Selector {
    fn default() -> Self {
        Selector::Bic {
            n_points: 40,
            ratio: 1e-3,
        }
    }
}

impl Selector {
    pub fn tscv() -> Self {
        Selector::Tscv {
            n_points: 40,
            ratio: 1e-3,
            n_folds: 5,
            min_train: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Selector::Bic { .. } => "bic",
            Selector::Tscv { .. } => "tscv",
            Selector::Fixed { .. } => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FitConfig {
    pub selector: Selector,
    pub solver: SolverConfig,
    /// Centre every series before fitting. Exploratory only; inference paths
    /// leave it off.
    pub demean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSummary {
    pub lambda: f64,
    pub df: usize,
    pub kkt_violation: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Solver error, if the equation could not be fitted at all.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDesignSpec {
    pub k: usize,
    pub n: usize,
    pub t_obs: usize,
    /// Column `(lag-1)·N + i` holds series `i` at lag `lag`.
    pub ordering: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: VarModel,
    /// `ε̂_t = x_t − Σ Â_k x_{t-k}`, `T×N`.
    pub residuals: DenseMatrix,
    pub per_equation: Vec<EquationSummary>,
    pub lag_design: LagDesignSpec,
    pub selector: Selector,
}

impl FitReport {
    /// `(1/T) Σ_t ε̂_t ε̂_t'`.
    pub fn sigma_eps_hat(&self) -> DenseMatrix {
        sample_second_moment(&self.residuals)
    }

    pub fn failed_equations(&self) -> Vec<usize> {
        self.per_equation
            .iter()
            .enumerate()
            .filter(|(_, e)| e.failure.is_some() || !e.converged)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `(1/T) Σ_t e_t e_t'` for a `T×N` matrix of rows `e_t`.
pub fn sample_second_moment(e: &DenseMatrix) -> DenseMatrix {
    let (t, n) = (e.rows(), e.cols());
    let mut s = DenseMatrix::zeros(n, n);
    for r in 0..t {
        let row = e.row(r);
        for a in 0..n {
            for b in a..n {
                let v = s.get(a, b) + row[a] * row[b];
                s.set(a, b, v);
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            let v = s.get(a, b) / t as f64;
            s.set(a, b, v);
            s.set(b, a, v);
        }
    }
    s
}

fn fit_equation(
    prepared: &PreparedDesign,
    design: &DenseMatrix,
    y: &[f64],
    cfg: &FitConfig,
) -> Result<LassoFit> {
    let solver = &cfg.solver;
    match cfg.selector {
        Selector::Fixed { lambda } => lasso_fit_prepared(prepared, y, lambda, solver, None),
        Selector::Bic { n_points, ratio } => {
            let grid = grid_from_max(prepared.lambda_max(y), n_points, ratio)?;
            let sel = select_lambda_bic(prepared, y, &grid, solver)?;
            Ok(sel.path[sel.index].clone())
        }
        Selector::Tscv {
            n_points,
            ratio,
            n_folds,
            min_train,
        } => {
            let grid = grid_from_max(prepared.lambda_max(y), n_points, ratio)?;
            let min_train = min_train.unwrap_or(design.rows() / 2);
            let cv = select_lambda_tscv(design, y, &grid, n_folds, min_train, solver)?;
            lasso_fit_prepared(prepared, y, cv.lambda, solver, None)
        }
    }
}

/// Lasso per equation with independently selected penalties; equations run
/// in parallel and are assembled in order.
pub fn fit_sparse_var(panel: &TimeSeriesPanel, k: usize, cfg: &FitConfig) -> Result<FitReport> {
    let centred;
    let panel = if cfg.demean {
        centred = panel.demeaned();
        &centred
    } else {
        panel
    };
    let (design, responses) = build_lag_design(panel, k)?;
    let n = panel.n_series();
    let prepared = PreparedDesign::new(&design, cfg.solver.standardize)?;

    let outcomes: Vec<(Vec<f64>, EquationSummary)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = responses.column(j);
            match fit_equation(&prepared, &design, &y, cfg) {
                Ok(fit) => (
                    fit.beta.clone(),
                    EquationSummary {
                        lambda: fit.penalty,
                        df: fit.df(),
                        kkt_violation: fit.kkt_violation,
                        converged: fit.converged,
                        iterations: fit.iterations,
                        failure: None,
                    },
                ),
                Err(e) => (
                    vec![0.0; n * k],
                    EquationSummary {
                        lambda: f64::NAN,
                        df: 0,
                        kkt_violation: f64::NAN,
                        converged: false,
                        iterations: 0,
                        failure: Some(e.to_string()),
                    },
                ),
            }
        })
        .collect();

    if outcomes.iter().all(|(_, s)| s.failure.is_some()) {
        return Err(Error::Estimation(format!(
            "all {n} equations failed: {}",
            outcomes[0].1.failure.as_deref().unwrap_or("unknown")
        )));
    }
    let (rows, per_equation): (Vec<Vec<f64>>, Vec<EquationSummary>) = outcomes.into_iter().unzip();
    let model = VarModel::from_rows(&rows, k)?;

    let t = panel.t_obs();
    let mut residuals = DenseMatrix::zeros(t, n);
    for r in 0..t {
        let x = design.row(r);
        for (j, beta) in rows.iter().enumerate() {
            let fitted: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            residuals.set(r, j, responses.get(r, j) - fitted);
        }
    }

    Ok(FitReport {
        model,
        residuals,
        per_equation,
        lag_design: LagDesignSpec {
            k,
            n,
            t_obs: t,
            ordering: "lag-major".into(),
        },
        selector: cfg.selector,
    })
}

/// Radius threshold below which a model is left alone.
pub const CORRECTION_MARGIN: f64 = 1e-8;
pub const MAX_CORRECTION_ROUNDS: usize = 10;
pub const DEFAULT_CORRECTION_EPS: f64 = 0.01;

/// If the companion radius `ρ` is at least `1 − 1e-8`, divide every entry of
/// every `A_k` by `ρ + eps`, recompute `ρ` and repeat (at most ten rounds)
/// until the model is stationary.
pub fn stationarity_correct(model: &VarModel, eps: f64) -> Result<VarModel> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("correction eps must be > 0, got {eps}")));
    }
    let mut rho = model.companion_radius()?;
    if rho < 1.0 - CORRECTION_MARGIN {
        return Ok(model.clone());
    }
    let mut out = model.clone();
    for _ in 0..MAX_CORRECTION_ROUNDS {
        let divisor = rho + eps;
        for a in out.a_mats.iter_mut() {
            *a = DenseMatrix::new(
                a.rows(),
                a.cols(),
                a.as_slice().iter().map(|v| v / divisor).collect(),
            )?;
        }
        out.correction_factor /= divisor;
        out.corrected = true;
        rho = out.companion_radius()?;
        if rho < 1.0 - CORRECTION_MARGIN {
            return Ok(out);
        }
    }
    Err(Error::CorrectionFailed {
        rho,
        rounds: MAX_CORRECTION_ROUNDS,
    })
}
