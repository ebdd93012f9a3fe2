use serde::{Deserialize, Serialize};

use super::{build_companion, DenseMatrix};
use crate::error::{Error, Result};
use crate::var_fit::VarModel;

pub const DEFAULT_VMA_TOL: f64 = 1e-10;

/// Truncated moving-average coefficients `B_0 = I, B_1, …, B_L` of a
/// stationary VAR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmaSequence {
    pub coeffs: Vec<DenseMatrix>,
    pub truncation_lag: usize,
    /// Bound on `Σ_{j>L} ‖B_j‖_∞` from the geometric envelope.
    pub tail_bound: f64,
    /// Envelope `‖B_j‖_∞ ≤ psi · lambda^j`, valid for every `j ≤ L`.
    pub envelope_psi: f64,
    pub envelope_lambda: f64,
    /// The lag cap was hit before the coefficients fell below `tol`.
    pub truncated_at_cap: bool,
}

impl VmaSequence {
    pub fn n(&self) -> usize {
        self.coeffs[0].rows()
    }

    /// `Σ_{k=0..L} B_k`, the truncated `𝓑(1)`.
    pub fn partial_sum(&self) -> DenseMatrix {
        let n = self.n();
        let mut acc = DenseMatrix::zeros(n, n);
        for b in &self.coeffs {
            acc = acc.add(b).expect("coefficient shapes agree");
        }
        acc
    }

    /// Tail sums `B̃_j = Σ_{k=j+1..L} B_k` for `j = 0..L-1`.
    pub fn tail_sums(&self) -> Vec<DenseMatrix> {
        let n = self.n();
        let l = self.truncation_lag;
        let mut out = vec![DenseMatrix::zeros(n, n); l];
        let mut acc = DenseMatrix::zeros(n, n);
        for j in (0..l).rev() {
            acc = acc.add(&self.coeffs[j + 1]).expect("coefficient shapes agree");
            out[j] = acc.clone();
        }
        out
    }

    pub fn envelope(&self, j: usize) -> f64 {
        self.envelope_psi * self.envelope_lambda.powi(j as i32)
    }
}

/// Moving-average inversion of a stationary VAR via
/// `B_j = Σ_{i=1..min(j,K)} A_i B_{j-i}`, which equals the top-left block of
/// the j-th companion power.
///
/// Truncates at the smallest `L` for which the last `K` coefficients all have
/// `‖B_j‖_∞ < tol` (for K = 1 this is the first coefficient below `tol`).
/// `max_lag_cap = None` uses `10·⌈log(tol)/log(ρ)⌉`.
pub fn vma_from_var(model: &VarModel, tol: f64, max_lag_cap: Option<usize>) -> Result<VmaSequence> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config("VMA tolerance must be positive".into()));
    }
    let rho = build_companion(model.a_mats())?.spectral_radius()?;
    if rho >= 1.0 {
        return Err(Error::NonInvertible { rho });
    }
    let n = model.n();
    let k = model.k();
    let default_cap = if rho > 0.0 {
        10 * ((tol.ln() / rho.ln()).ceil().max(1.0) as usize)
    } else {
        0
    };
    let cap = max_lag_cap.unwrap_or(default_cap).max(10 * k).max(1);

    let mut coeffs = vec![DenseMatrix::identity(n)];
    let mut below = 0usize;
    let mut truncated_at_cap = true;
    for j in 1..=cap {
        let mut b = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for (i, a) in model.a_mats().iter().enumerate().take(j.min(k)) {
                    let prev = &coeffs[j - 1 - i];
                    for l in 0..n {
                        acc += a.get(r, l) * prev.get(l, c);
                    }
                }
                b.set(r, c, acc);
            }
        }
        if !b.all_finite() {
            return Err(Error::Estimation(format!("VMA coefficient {j} overflowed")));
        }
        below = if b.inf_norm() < tol { below + 1 } else { 0 };
        coeffs.push(b);
        if below >= k {
            truncated_at_cap = false;
            break;
        }
    }
    let truncation_lag = coeffs.len() - 1;

    let lambda = rho + 0.1 * (1.0 - rho);
    let log_psi = coeffs
        .iter()
        .enumerate()
        .filter_map(|(j, b)| {
            let norm = b.inf_norm();
            (norm > 0.0).then(|| norm.ln() - j as f64 * lambda.ln())
        })
        .fold(0.0, f64::max);
    let psi = log_psi.exp();
    let exact_zero_tail = !truncated_at_cap
        && coeffs[coeffs.len() - k..].iter().all(|b| b.max_abs() == 0.0);
    let tail_bound = if exact_zero_tail {
        0.0
    } else {
        psi * lambda.powi(truncation_lag as i32 + 1) / (1.0 - lambda)
    };

    Ok(VmaSequence {
        coeffs,
        truncation_lag,
        tail_bound,
        envelope_psi: psi,
        envelope_lambda: lambda,
        truncated_at_cap,
    })
}

/// `𝓑(1) = (I − Σ_k A_k)^{-1}` by direct LU solve.
pub fn long_run_matrix(model: &VarModel) -> Result<DenseMatrix> {
    let n = model.n();
    let mut m = DenseMatrix::identity(n);
    for a in model.a_mats() {
        m = m.sub(a)?;
    }
    let lu = m.to_nalgebra().lu();
    let pivot = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |p, v| p.min(v.abs()));
    if !(pivot > 1e-12 * m.max_abs().max(1.0)) {
        return Err(Error::Singular { pivot });
    }
    let inv = lu
        .try_inverse()
        .ok_or(Error::Singular { pivot })?;
    DenseMatrix::from_nalgebra(&inv)
}

/// `𝓑(1) Σ_ε 𝓑(1)'`, symmetrized.
pub fn long_run_covariance(b1: &DenseMatrix, sigma_eps: &DenseMatrix) -> Result<DenseMatrix> {
    if !b1.is_square() || !sigma_eps.is_square() || b1.rows() != sigma_eps.rows() {
        return Err(Error::Shape(format!(
            "long-run covariance needs NxN inputs, got {}x{} and {}x{}",
            b1.rows(),
            b1.cols(),
            sigma_eps.rows(),
            sigma_eps.cols()
        )));
    }
    b1.matmul(sigma_eps)?.matmul(&b1.transpose())?.symmetrize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_model(coefs: &[f64]) -> VarModel {
        VarModel::new(
            coefs
                .iter()
                .map(|&a| DenseMatrix::new(1, 1, vec![a]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vma_of_scaled_identity() {
        let model = VarModel::new(vec![DenseMatrix::scaled_identity(2, 0.5)]).unwrap();
        let vma = vma_from_var(&model, 1e-10, None).unwrap();
        for (k, b) in vma.coeffs.iter().enumerate() {
            assert_eq!(b, &DenseMatrix::scaled_identity(2, 0.5f64.powi(k as i32)));
        }
        assert!(vma.coeffs.last().unwrap().inf_norm() < 1e-10);
        assert!(!vma.truncated_at_cap);
    }

    #[test]
    fn vma_scalar_ar2_recursion() {
        let vma = vma_from_var(&scalar_model(&[0.5, 0.2]), 1e-10, None).unwrap();
        // B_k = 0.5 B_{k-1} + 0.2 B_{k-2}
        let expected = [1.0, 0.5, 0.45, 0.325];
        for (b, e) in vma.coeffs.iter().zip(expected) {
            assert_abs_diff_eq!(b.get(0, 0), e, epsilon = 1e-15);
        }
    }

    #[test]
    fn vma_of_white_noise() {
        let model = VarModel::new(vec![DenseMatrix::zeros(3, 3)]).unwrap();
        let vma = vma_from_var(&model, 1e-10, None).unwrap();
        assert_eq!(vma.coeffs[0], DenseMatrix::identity(3));
        assert!(vma.coeffs[1..].iter().all(|b| b.max_abs() == 0.0));
        assert_eq!(vma.tail_bound, 0.0);
    }

    #[test]
    fn vma_skips_transient_zero_coefficient() {
        // x_t = 0.5 x_{t-2} + e_t has B_1 = 0 but B_2 = 0.5
        let vma = vma_from_var(&scalar_model(&[0.0, 0.5]), 1e-10, None).unwrap();
        assert!(vma.truncation_lag > 2);
        assert_abs_diff_eq!(vma.partial_sum().get(0, 0), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn vma_refuses_unit_root() {
        assert!(matches!(
            vma_from_var(&scalar_model(&[1.0]), 1e-10, None),
            Err(Error::NonInvertible { .. })
        ));
    }

    #[test]
    fn vma_cap_is_flagged() {
        let vma = vma_from_var(&scalar_model(&[0.9]), 1e-10, Some(10)).unwrap();
        assert!(vma.truncated_at_cap);
        assert_eq!(vma.truncation_lag, 10);
        // the true tail Σ_{j>10} 0.9^j = 0.9^11 / 0.1 must be covered
        assert!(vma.tail_bound >= 0.9f64.powi(11) / 0.1);
    }

    #[test]
    fn long_run_matrix_examples() {
        let model = VarModel::new(vec![DenseMatrix::scaled_identity(2, 0.5)]).unwrap();
        let b1 = long_run_matrix(&model).unwrap();
        assert_abs_diff_eq!(b1.get(0, 0), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b1.get(0, 1), 0.0, epsilon = 1e-14);

        let white = VarModel::new(vec![DenseMatrix::zeros(2, 2)]).unwrap();
        assert_eq!(long_run_matrix(&white).unwrap(), DenseMatrix::identity(2));

        let b1 = long_run_matrix(&scalar_model(&[0.5, 0.2])).unwrap();
        assert_abs_diff_eq!(b1.get(0, 0), 10.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn long_run_matrix_singular() {
        let err = long_run_matrix(&scalar_model(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn long_run_covariance_examples() {
        let i2 = DenseMatrix::identity(2);
        assert_eq!(long_run_covariance(&i2, &i2).unwrap(), i2);
        assert_eq!(
            long_run_covariance(&DenseMatrix::scaled_identity(2, 2.0), &i2).unwrap(),
            DenseMatrix::scaled_identity(2, 4.0)
        );
        let b1 = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let expected = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(long_run_covariance(&b1, &i2).unwrap(), expected);
        assert!(long_run_covariance(&b1, &DenseMatrix::identity(3)).is_err());
    }
}
