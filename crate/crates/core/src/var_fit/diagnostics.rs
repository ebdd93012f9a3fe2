use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linproc::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrCell {
    pub series: usize,
    pub lag: usize,
    pub autocorr: f64,
    pub z: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrDiagnostic {
    pub max_lag: usize,
    pub alpha: f64,
    pub cells: Vec<AutocorrCell>,
    /// Zero-variance series, left out of the Holm family.
    pub degenerate: Vec<usize>,
    pub family_size: usize,
    pub rejections: usize,
    pub white: bool,
}

/// Holm step-down decisions for a family of p-values.
pub fn holm(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut reject = vec![false; m];
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= alpha / (m - rank) as f64 {
            reject[i] = true;
        } else {
            break;
        }
    }
    reject
}

/// Lag-`h` sample autocorrelations of every residual series, tested with
/// `z = √T·r` against `N(0,1)` and Holm-corrected over all series and lags.
pub fn residual_autocorr_diagnostic(
    residuals: &DenseMatrix,
    max_lag: usize,
    alpha: f64,
) -> Result<AutocorrDiagnostic> {
    let (t, n) = (residuals.rows(), residuals.cols());
    if max_lag == 0 {
        return Err(Error::Config("max_lag must be ≥ 1".into()));
    }
    if t <= max_lag + 5 {
        return Err(Error::Input(format!(
            "need more than {} residual rows for max_lag {max_lag}, got {t}",
            max_lag + 5
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let normal = Normal::standard();
    let root_t = (t as f64).sqrt();
    let mut cells = Vec::new();
    let mut degenerate = Vec::new();
    for j in 0..n {
        let e = residuals.column(j);
        let mean = e.iter().sum::<f64>() / t as f64;
        let c: Vec<f64> = e.iter().map(|v| v - mean).collect();
        let denom: f64 = c.iter().map(|v| v * v).sum();
        let scale = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if denom <= f64::EPSILON * scale * scale * t as f64 || denom == 0.0 {
            degenerate.push(j);
            continue;
        }
        for h in 1..=max_lag {
            let num: f64 = (h..t).map(|s| c[s] * c[s - h]).sum();
            let r = num / denom;
            let z = root_t * r;
            cells.push(AutocorrCell {
                series: j,
                lag: h,
                autocorr: r,
                z,
                p_value: 2.0 * normal.sf(z.abs()),
                reject: false,
            });
        }
    }
    let p: Vec<f64> = cells.iter().map(|c| c.p_value).collect();
    for (cell, r) in cells.iter_mut().zip(holm(&p, alpha)) {
        cell.reject = r;
    }
    let rejections = cells.iter().filter(|c| c.reject).count();
    Ok(AutocorrDiagnostic {
        max_lag,
        alpha,
        family_size: cells.len(),
        cells,
        degenerate,
        rejections,
        white: rejections == 0,
    })
}
