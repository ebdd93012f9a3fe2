use nalgebra::{DMatrix, Schur};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::rng;

/// Side length above which [`spectral_radius`] switches from a dense
/// eigensolve to the norm-power characterization.
pub const DENSE_EIGEN_CUTOFF: usize = 512;

/// Companion form of a VAR(K): `[A_1 … A_K]` on top, identities on the block
/// subdiagonal, zeros elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionMatrix {
    inner: DenseMatrix,
    n: usize,
    k: usize,
}

impl CompanionMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.inner, 1e-12, 10_000)
    }
}

pub fn build_companion(a_mats: &[DenseMatrix]) -> Result<CompanionMatrix> {
    let k = a_mats.len();
    if k == 0 {
        return Err(Error::Shape("companion needs at least one lag matrix".into()));
    }
    let n = a_mats[0].rows();
    if n == 0 {
        return Err(Error::Shape("lag matrices must be non-empty".into()));
    }
    for (i, a) in a_mats.iter().enumerate() {
        if a.rows() != n || a.cols() != n {
            return Err(Error::Shape(format!(
                "lag matrix {} is {}x{}, expected {n}x{n}",
                i + 1,
                a.rows(),
                a.cols()
            )));
        }
    }
    let side = n * k;
    let mut inner = DenseMatrix::zeros(side, side);
    for (i, a) in a_mats.iter().enumerate() {
        inner.set_block(0, i * n, a);
    }
    for i in 1..k {
        for d in 0..n {
            inner.set(i * n + d, (i - 1) * n + d, 1.0);
        }
    }
    Ok(CompanionMatrix { inner, n, k })
}

/// Largest absolute eigenvalue of a square matrix.
///
/// Uses a real Schur decomposition up to [`DENSE_EIGEN_CUTOFF`] and the
/// Gelfand formula `ρ = lim ‖Mᵏ‖^{1/k}` above it.
pub fn spectral_radius(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    spectral_radius_with_cutoff(m, tol, max_iter, DENSE_EIGEN_CUTOFF)
}

pub fn spectral_radius_with_cutoff(
    m: &DenseMatrix,
    tol: f64,
    max_iter: usize,
    dense_cutoff: usize,
) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config("spectral radius tolerance must be positive".into()));
    }
    if m.rows() == 0 || m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    if m.rows() <= dense_cutoff {
        dense_radius(m, max_iter)
    } else {
        gelfand_radius(m, tol, max_iter)
    }
}

/// Random orthogonal similarities tried after a stalled Schur sweep.
const SCHUR_RETRIES: u64 = 3;

/// `QᵀMQ` for a seeded random orthogonal `Q`. The QR iteration can cycle on
/// permutation-like companion matrices; a generic rotation breaks the cycle
/// without moving the eigenvalues.
fn rotated(a: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed);
    let n = a.nrows();
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    q.transpose() * a * q
}

fn dense_radius(m: &DenseMatrix, max_iter: usize) -> Result<f64> {
    let a = m.to_nalgebra();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, max_iter)
        .or_else(|| (0..SCHUR_RETRIES).find_map(|s| Schur::try_new(rotated(&a, s), f64::EPSILON, max_iter)));
    match schur {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        None => {
            // report the norm-power estimate as the best available value
            let best = gelfand_radius(m, 1e-6, 64).unwrap_or_else(|e| match e {
                Error::NotConverged { best, .. } => best,
                _ => m.inf_norm(),
            });
            Err(Error::NotConverged {
                best,
                iterations: max_iter,
            })
        }
    }
}

/// Repeated squaring of the normalized power sequence. With `e_k = ‖Mᵏ‖^{1/k}`
/// and `log e_k ≈ log ρ + c/k`, the extrapolation `e_{2k}² / e_k` cancels the
/// leading `1/k` term.
fn gelfand_radius(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    let norm = m.inf_norm();
    let mut p = m.scale(1.0 / norm);
    let mut log_scale = norm.ln();
    let mut power = 1.0_f64;
    let mut prev_est = norm;
    let mut prev_extrap = f64::INFINITY;
    for _ in 0..max_iter.min(1000) {
        let q = p.matmul(&p)?;
        let nq = q.inf_norm();
        if nq == 0.0 {
            return Ok(0.0);
        }
        log_scale = 2.0 * log_scale + nq.ln();
        power *= 2.0;
        p = q.scale(1.0 / nq);
        let est = (log_scale / power).exp();
        let extrap = (est * est / prev_est).max(0.0);
        if (extrap - prev_extrap).abs() <= tol * extrap.max(1.0) {
            return Ok(extrap);
        }
        if !power.is_finite() || power > 2f64.powi(60) {
            break;
        }
        prev_est = est;
        prev_extrap = extrap;
    }
    Err(Error::NotConverged {
        best: prev_extrap.min(norm),
        iterations: max_iter,
    })
}
