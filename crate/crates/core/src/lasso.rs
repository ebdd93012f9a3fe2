//! Single-equation lasso by cyclic coordinate descent, and penalty selection.
//!
//! The objective keeps the doubled penalty used throughout this crate:
//!
//! ```text
//! (1/T) Σ_t (y_t − β'x_t)² + 2λ ‖β‖₁
//! ```
//!
//! Minimizing over one coordinate with the others fixed gives
//! `β_p = S(x_p'r_p / T, λ) / (‖x_p‖² / T)` where `r_p` is the partial
//! residual and `S` the soft-threshold operator. Equivalently the OLS
//! coordinate is thresholded at `λT/‖x_p‖²`. The smallest penalty with an
//! all-zero solution is `λ_max = max_p |x_p'y| / T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linproc::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once no coefficient moves by more than this in a full sweep.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    /// KKT tolerance as a fraction of `λ_max`.
    pub kkt_rel_tol: f64,
    /// Rescale columns to unit mean square before solving. Off by default.
    pub standardize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            kkt_rel_tol: 1e-6,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub design: &'a DenseMatrix,
    pub response: &'a [f64],
    pub penalty: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: &'a DenseMatrix, response: &'a [f64], penalty: f64) -> Result<Self> {
        if design.rows() != response.len() {
            return Err(Error::Shape(format!(
                "design has {} rows, response has {}",
                design.rows(),
                response.len()
            )));
        }
        if !(penalty >= 0.0) {
            return Err(Error::Config(format!("penalty must be ≥ 0, got {penalty}")));
        }
        Ok(Self {
            design,
            response,
            penalty,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub penalty: f64,
    /// `y − Xβ`, recomputed from scratch at exit.
    pub residuals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_violation: f64,
    /// Objective after every sweep.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

impl LassoFit {
    pub fn df(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

/// Column-major copy of a design with cached squared norms, shared across
/// penalties and responses.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    t: usize,
    p: usize,
    cols: Vec<f64>,
    sq_norms: Vec<f64>,
    scale: Vec<f64>,
}

impl PreparedDesign {
    pub fn new(design: &DenseMatrix, standardize: bool) -> Result<Self> {
        if !design.all_finite() {
            return Err(Error::Input("design contains non-finite entries".into()));
        }
        let (t, p) = (design.rows(), design.cols());
        let mut cols = vec![0.0; t * p];
        for r in 0..t {
            for (c, &v) in design.row(r).iter().enumerate() {
                cols[c * t + r] = v;
            }
        }
        let mut scale = vec![1.0; p];
        if standardize {
            for c in 0..p {
                let col = &mut cols[c * t..(c + 1) * t];
                let ms = col.iter().map(|v| v * v).sum::<f64>() / t as f64;
                if ms > 0.0 {
                    let s = ms.sqrt();
                    col.iter_mut().for_each(|v| *v /= s);
                    scale[c] = s;
                }
            }
        }
        let sq_norms = (0..p)
            .map(|c| cols[c * t..(c + 1) * t].iter().map(|v| v * v).sum())
            .collect();
        Ok(Self {
            t,
            p,
            cols,
            sq_norms,
            scale,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.t
    }

    pub fn n_regressors(&self) -> usize {
        self.p
    }

    fn col(&self, c: usize) -> &[f64] {
        &self.cols[c * self.t..(c + 1) * self.t]
    }

    fn residuals(&self, y: &[f64], beta: &[f64]) -> Vec<f64> {
        let mut r = y.to_vec();
        for (c, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, xi) in r.iter_mut().zip(self.col(c)) {
                    *ri -= xi * b;
                }
            }
        }
        r
    }

    /// `max_p |x_p'y| / T` on the (possibly standardized) columns.
    pub fn lambda_max(&self, y: &[f64]) -> f64 {
        (0..self.p)
            .map(|c| dot(self.col(c), y).abs() / self.t as f64)
            .fold(0.0, f64::max)
    }

    /// Largest KKT violation of `beta` for penalty `lambda`.
    fn kkt_violation(&self, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
        let t = self.t as f64;
        (0..self.p)
            .map(|c| {
                let g = -2.0 * dot(self.col(c), r) / t;
                if beta[c] == 0.0 {
                    (g.abs() - 2.0 * lambda).max(0.0)
                } else {
                    (g + 2.0 * lambda * beta[c].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

fn objective(r: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let t = r.len() as f64;
    r.iter().map(|v| v * v).sum::<f64>() / t + 2.0 * lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

pub fn lasso_fit(
    problem: &LassoProblem<'_>,
    cfg: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<LassoFit> {
    let prepared = PreparedDesign::new(problem.design, cfg.standardize)?;
    lasso_fit_prepared(&prepared, problem.response, problem.penalty, cfg, warm_start)
}

/// Coordinate descent on a prepared design. Warm starts are given on the
/// original (unstandardized) coefficient scale.
pub fn lasso_fit_prepared(
    design: &PreparedDesign,
    y: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<LassoFit> {
    if y.len() != design.t {
        return Err(Error::Shape(format!(
            "design has {} rows, response has {}",
            design.t,
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    if !(lambda >= 0.0) || !(cfg.tol > 0.0) {
        return Err(Error::Config("need λ ≥ 0 and tol > 0".into()));
    }
    let p = design.p;
    let t = design.t as f64;
    let mut beta: Vec<f64> = match warm_start {
        Some(w) if w.len() == p => w.iter().zip(&design.scale).map(|(b, s)| b * s).collect(),
        Some(w) => {
            return Err(Error::Shape(format!(
                "warm start has {} entries, design has {p} columns",
                w.len()
            )))
        }
        None => vec![0.0; p],
    };
    let kkt_tol = cfg.kkt_rel_tol * design.lambda_max(y).max(f64::MIN_POSITIVE);

    let mut r = design.residuals(y, &beta);
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for c in 0..p {
            let sq = design.sq_norms[c];
            if sq == 0.0 {
                beta[c] = 0.0;
                continue;
            }
            let x = design.col(c);
            let old = beta[c];
            let z = dot(x, &r) / t + sq / t * old;
            let new = soft_threshold(z, lambda) / (sq / t);
            if new != old {
                let delta = new - old;
                for (ri, xi) in r.iter_mut().zip(x) {
                    *ri -= xi * delta;
                }
                beta[c] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        history.push(objective(&r, &beta, lambda));
        if max_change < cfg.tol {
            r = design.residuals(y, &beta);
            if design.kkt_violation(&r, &beta, lambda) <= kkt_tol {
                converged = true;
                break;
            }
        }
    }

    let residuals = design.residuals(y, &beta);
    let kkt_violation = design.kkt_violation(&residuals, &beta, lambda);
    let objective = objective(&residuals, &beta, lambda);
    let beta = beta.iter().zip(&design.scale).map(|(b, s)| b / s).collect();
    Ok(LassoFit {
        beta,
        penalty: lambda,
        residuals,
        objective,
        iterations: sweeps,
        converged,
        kkt_violation,
        objective_history: history,
    })
}

/// `max_p |(1/T) Σ_t x_{p,t} y_t|`.
pub fn lambda_max(design: &DenseMatrix, response: &[f64]) -> f64 {
    let t = design.rows() as f64;
    (0..design.cols())
        .map(|c| (0..design.rows()).map(|r| design.get(r, c) * response[r]).sum::<f64>().abs() / t)
        .fold(0.0, f64::max)
}

/// Log-spaced grid from `λ_max` down to `ratio·λ_max`.
pub fn lambda_grid(problem: &LassoProblem<'_>, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    grid_from_max(lambda_max(problem.design, problem.response), n_points, ratio)
}

pub fn grid_from_max(lmax: f64, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_points < 2 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "grid needs n_points ≥ 2 and ratio in (0, 1), got {n_points} and {ratio}"
        )));
    }
    if lmax == 0.0 {
        log::warn!("response is orthogonal to every regressor; lambda grid is all zeros");
    }
    Ok((0..n_points)
        .map(|i| lmax * ratio.powf(i as f64 / (n_points - 1) as f64))
        .collect())
}

/// Result of a penalty search. `path` is ordered by decreasing penalty.
#[derive(Debug, Clone)]
pub struct Selection {
    pub lambda: f64,
    pub index: usize,
    pub path: Vec<LassoFit>,
    pub scores: Vec<f64>,
}

impl Selection {
    pub fn chosen(&self) -> &LassoFit {
        &self.path[self.index]
    }
}

fn sorted_desc(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("lambda grid entries must be ≥ 0".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.total_cmp(a));
    Ok(g)
}

fn warm_path(
    design: &PreparedDesign,
    y: &[f64],
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<LassoFit>> {
    let mut path: Vec<LassoFit> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let warm = path.last().map(|f| f.beta.as_slice());
        path.push(lasso_fit_prepared(design, y, lambda, cfg, warm)?);
    }
    Ok(path)
}

/// First index of the minimum; the grid is sorted by decreasing penalty so
/// ties resolve toward the larger penalty.
fn argmin_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// Minimizes `T·log(RSS/T) + log(T)·df` over a warm-started path.
pub fn select_lambda_bic(
    design: &PreparedDesign,
    y: &[f64],
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<Selection> {
    let grid = sorted_desc(grid)?;
    let path = warm_path(design, y, &grid, cfg)?;
    let t = design.t as f64;
    let scores: Vec<f64> = path
        .iter()
        .map(|f| {
            let rss = f.rss();
            let fit = if rss > 0.0 { t * (rss / t).ln() } else { f64::NEG_INFINITY };
            fit + t.ln() * f.df() as f64
        })
        .collect();
    let index = argmin_first(&scores);
    Ok(Selection {
        lambda: grid[index],
        index,
        path,
        scores,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone)]
pub struct CvSelection {
    pub lambda: f64,
    pub table: Vec<CvRow>,
}

/// Expanding-window cross-validation. With `h = ⌊(T − min_train)/n_folds⌋`,
/// fold `f = 1..n_folds` trains on the first `min_train + (f−1)·h` rows and
/// validates on the following `h` rows.
pub fn select_lambda_tscv(
    design: &DenseMatrix,
    y: &[f64],
    grid: &[f64],
    n_folds: usize,
    min_train: usize,
    cfg: &SolverConfig,
) -> Result<CvSelection> {
    let t = design.rows();
    if y.len() != t {
        return Err(Error::Shape("design and response row counts differ".into()));
    }
    if n_folds == 0 || min_train == 0 || min_train + n_folds > t {
        return Err(Error::Config(format!(
            "cross-validation needs min_train + n_folds ≤ T (got {min_train} + {n_folds} > {t})"
        )));
    }
    let grid = sorted_desc(grid)?;
    let h = (t - min_train) / n_folds;
    let p = design.cols();
    let mut fold_mse = vec![vec![0.0; n_folds]; grid.len()];
    for f in 0..n_folds {
        let train_end = min_train + f * h;
        let train = design.block(0, 0, train_end, p);
        let prepared = PreparedDesign::new(&train, cfg.standardize)?;
        let path = warm_path(&prepared, &y[..train_end], &grid, cfg)?;
        for (g, fit) in path.iter().enumerate() {
            let mse = (train_end..train_end + h)
                .map(|r| (y[r] - dot(design.row(r), &fit.beta)).powi(2))
                .sum::<f64>()
                / h as f64;
            fold_mse[g][f] = mse;
        }
    }
    let table: Vec<CvRow> = grid
        .iter()
        .zip(fold_mse)
        .map(|(&lambda, fold_mse)| CvRow {
            lambda,
            mean_mse: fold_mse.iter().sum::<f64>() / n_folds as f64,
            fold_mse,
        })
        .collect();
    let scores: Vec<f64> = table.iter().map(|r| r.mean_mse).collect();
    let index = argmin_first(&scores);
    Ok(CvSelection {
        lambda: grid[index],
        table,
    })
}
