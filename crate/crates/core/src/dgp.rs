//! Simulation of sparse VAR(K) processes with Gaussian, standardized
//! Student-t or Rademacher innovations.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linproc::{build_companion, psd_factor, spectral_radius, DenseMatrix};
use crate::rng;
use crate::var_fit::VarModel;

/// Observed `(T+K)×N` block: the first `K` rows are presample values
/// `x_{-K+1}, …, x_0`, the remaining `T` rows are the estimation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesPanel {
    data: DenseMatrix,
    t_obs: usize,
    k_presample: usize,
    labels: Option<Vec<String>>,
}

impl TimeSeriesPanel {
    pub fn new(data: DenseMatrix, k_presample: usize) -> Result<Self> {
        if data.rows() <= k_presample {
            return Err(Error::Input(format!(
                "panel has {} rows, need more than {k_presample} (presample) rows",
                data.rows()
            )));
        }
        if !data.all_finite() {
            return Err(Error::Input("panel contains non-finite values".into()));
        }
        Ok(Self {
            t_obs: data.rows() - k_presample,
            data,
            k_presample,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_series() {
            return Err(Error::Input(format!(
                "{} labels for {} series",
                labels.len(),
                self.n_series()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn t_obs(&self) -> usize {
        self.t_obs
    }

    pub fn k_presample(&self) -> usize {
        self.k_presample
    }

    pub fn n_series(&self) -> usize {
        self.data.cols()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Row `t` of the estimation sample, `t = 1..=T`; `t ≤ 0` reaches into
    /// the presample.
    pub fn obs(&self, t: isize) -> &[f64] {
        self.data.row((t + self.k_presample as isize - 1) as usize)
    }

    /// `x̄_j` over the `T` estimation rows.
    pub fn estimation_means(&self) -> Vec<f64> {
        let n = self.n_series();
        let mut sums = vec![0.0; n];
        for r in self.k_presample..self.data.rows() {
            for (s, v) in sums.iter_mut().zip(self.data.row(r)) {
                *s += v;
            }
        }
        sums.iter().map(|s| s / self.t_obs as f64).collect()
    }

    /// Copy with `delta` added to every row of series `j`.
    pub fn shifted(&self, j: usize, delta: f64) -> Self {
        let mut out = self.clone();
        for r in 0..out.data.rows() {
            let v = out.data.get(r, j) + delta;
            out.data.set(r, j, v);
        }
        out
    }

    /// Copy with every column centred at its estimation-sample mean.
    pub fn demeaned(&self) -> Self {
        let means = self.estimation_means();
        let mut out = self.clone();
        for r in 0..out.data.rows() {
            for (j, m) in means.iter().enumerate() {
                let v = out.data.get(r, j) - m;
                out.data.set(r, j, v);
            }
        }
        out
    }

    /// Keep only the last `k` presample rows.
    pub fn with_presample(&self, k: usize) -> Result<Self> {
        if k > self.k_presample {
            return Err(Error::Input(format!(
                "panel has {} presample rows, {k} requested",
                self.k_presample
            )));
        }
        let drop = self.k_presample - k;
        let data = self.data.block(drop, 0, self.data.rows() - drop, self.n_series());
        Ok(Self {
            data,
            t_obs: self.t_obs,
            k_presample: k,
            labels: self.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorFamily {
    Gaussian,
    /// Student-t rescaled to unit variance; moments exist below `dof`.
    ScaledStudentT { dof: f64 },
    /// `±1` with equal probability.
    RademacherScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub family: ErrorFamily,
    /// Innovation covariance `Σ_ε`; `None` means identity.
    pub sigma_eps: Option<DenseMatrix>,
}

impl ErrorSpec {
    pub fn gaussian() -> Self {
        Self {
            family: ErrorFamily::Gaussian,
            sigma_eps: None,
        }
    }

    pub fn student_t(dof: f64) -> Self {
        Self {
            family: ErrorFamily::ScaledStudentT { dof },
            sigma_eps: None,
        }
    }

    pub fn rademacher() -> Self {
        Self {
            family: ErrorFamily::RademacherScaled,
            sigma_eps: None,
        }
    }

    pub fn with_covariance(mut self, sigma_eps: DenseMatrix) -> Self {
        self.sigma_eps = Some(sigma_eps);
        self
    }

    pub fn covariance(&self, n: usize) -> DenseMatrix {
        self.sigma_eps.clone().unwrap_or_else(|| DenseMatrix::identity(n))
    }

    fn sampler(&self, n: usize) -> Result<InnovationSampler> {
        if let ErrorFamily::ScaledStudentT { dof } = self.family {
            if !(dof > 4.0) {
                return Err(Error::Config(format!(
                    "student-t innovations need dof > 4, got {dof}"
                )));
            }
        }
        let factor = match &self.sigma_eps {
            None => None,
            Some(s) => {
                if s.rows() != n || s.cols() != n {
                    return Err(Error::Shape(format!(
                        "sigma_eps is {}x{}, model has {n} series",
                        s.rows(),
                        s.cols()
                    )));
                }
                Some(psd_factor(s)?)
            }
        };
        let student = match self.family {
            ErrorFamily::ScaledStudentT { dof } => Some((
                StudentT::new(dof).map_err(|e| Error::Config(e.to_string()))?,
                ((dof - 2.0) / dof).sqrt(),
            )),
            _ => None,
        };
        Ok(InnovationSampler {
            family: self.family,
            factor,
            student,
            n,
        })
    }
}

struct InnovationSampler {
    family: ErrorFamily,
    factor: Option<DenseMatrix>,
    student: Option<(StudentT<f64>, f64)>,
    n: usize,
}

impl InnovationSampler {
    fn unit<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.family {
            ErrorFamily::Gaussian => StandardNormal.sample(rng),
            ErrorFamily::ScaledStudentT { .. } => {
                let (dist, scale) = self.student.as_ref().expect("student sampler");
                dist.sample(rng) * scale
            }
            ErrorFamily::RademacherScaled => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.factor {
            None => out.iter_mut().for_each(|v| *v = self.unit(rng)),
            Some(l) => {
                let u: Vec<f64> = (0..l.cols()).map(|_| self.unit(rng)).collect();
                for (i, v) in out.iter_mut().enumerate().take(self.n) {
                    *v = l.row(i).iter().zip(&u).map(|(a, b)| a * b).sum();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Nearest neighbours of the diagonal, lag 1 first.
    Banded,
    RandomSupport,
    /// Own-lag coefficients only.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsePattern {
    pub kind: PatternKind,
    /// Nonzeros per row of `[A_1 … A_K]`; for `Diagonal` the number of lags
    /// carrying an own-lag coefficient.
    pub per_row_nonzeros: usize,
    pub magnitude: f64,
    /// Lag `k` entries are scaled by `decay^(k-1)` before the radius rescale.
    pub decay_across_lags: f64,
}

impl SparsePattern {
    pub fn diagonal() -> Self {
        Self {
            kind: PatternKind::Diagonal,
            per_row_nonzeros: 1,
            magnitude: 1.0,
            decay_across_lags: 0.5,
        }
    }

    pub fn banded(per_row_nonzeros: usize) -> Self {
        Self {
            kind: PatternKind::Banded,
            per_row_nonzeros,
            magnitude: 1.0,
            decay_across_lags: 0.5,
        }
    }

    pub fn random_support(per_row_nonzeros: usize) -> Self {
        Self {
            kind: PatternKind::RandomSupport,
            per_row_nonzeros,
            magnitude: 1.0,
            decay_across_lags: 0.5,
        }
    }

    fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.per_row_nonzeros > n * k {
            return Err(Error::Config(format!(
                "{} nonzeros per row exceeds N·K = {}",
                self.per_row_nonzeros,
                n * k
            )));
        }
        if !(self.magnitude > 0.0) || !(self.decay_across_lags > 0.0 && self.decay_across_lags <= 1.0) {
            return Err(Error::Config(
                "pattern needs magnitude > 0 and decay in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn support(&self, n: usize, k: usize, row: usize, rng: &mut impl Rng) -> Vec<usize> {
        match self.kind {
            PatternKind::Diagonal => (0..self.per_row_nonzeros.clamp(1, k))
                .map(|lag| lag * n + row)
                .collect(),
            PatternKind::Banded => {
                let mut cols = Vec::with_capacity(n * k);
                for lag in 0..k {
                    cols.push(lag * n + row);
                    for off in 1..n {
                        if row + off < n {
                            cols.push(lag * n + row + off);
                        }
                        if off <= row {
                            cols.push(lag * n + row - off);
                        }
                    }
                }
                cols.truncate(self.per_row_nonzeros);
                cols
            }
            PatternKind::RandomSupport => {
                let mut cols = index::sample(rng, n * k, self.per_row_nonzeros).into_vec();
                cols.sort_unstable();
                cols
            }
        }
    }
}

const MAX_GENERATION_ATTEMPTS: u64 = 32;

/// Random sparse VAR whose companion spectral radius equals `target_rho`
/// (within 1e-9). K = 1 is rescaled exactly; for K > 1 a global scale factor
/// on all lag matrices is found by bisection.
pub fn generate_var_model(
    n: usize,
    k: usize,
    pattern: &SparsePattern,
    target_rho: f64,
    seed: u64,
) -> Result<VarModel> {
    if n == 0 || k == 0 {
        return Err(Error::Config("need n ≥ 1 and k ≥ 1".into()));
    }
    if !(target_rho > 0.0 && target_rho < 1.0) {
        return Err(Error::Config(format!("target_rho must lie in (0, 1), got {target_rho}")));
    }
    pattern.validate(n, k)?;

    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = rng::stream(rng::mix(seed, attempt));
        let mut mats = vec![DenseMatrix::zeros(n, n); k];
        for row in 0..n {
            for col in pattern.support(n, k, row, &mut rng) {
                let (lag, j) = (col / n, col % n);
                let mut v = pattern.magnitude
                    * pattern.decay_across_lags.powi(lag as i32)
                    * rng.random_range(0.5..1.0);
                if j != row && rng.random::<bool>() {
                    v = -v;
                }
                mats[lag].set(row, j, v);
            }
        }
        let rho = companion_radius(&mats)?;
        if rho <= 1e-12 {
            continue;
        }
        let scaled = if k == 1 {
            vec![mats[0].scale(target_rho / rho)]
        } else {
            rescale_by_bisection(&mats, target_rho)?
        };
        return VarModel::new(scaled);
    }
    Err(Error::Config(
        "sparsity pattern keeps producing a nilpotent companion matrix".into(),
    ))
}

fn companion_radius(mats: &[DenseMatrix]) -> Result<f64> {
    spectral_radius(build_companion(mats)?.matrix(), 1e-12, 10_000)
}

fn rescale_by_bisection(mats: &[DenseMatrix], target: f64) -> Result<Vec<DenseMatrix>> {
    let at = |c: f64| -> Result<(Vec<DenseMatrix>, f64)> {
        let m: Vec<DenseMatrix> = mats.iter().map(|a| a.scale(c)).collect();
        let r = companion_radius(&m)?;
        Ok((m, r))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut guard = 0;
    while at(hi)?.1 < target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Config("could not bracket target spectral radius".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (m, r) = at(mid)?;
        if (r - target).abs() <= 1e-10 {
            return Ok(m);
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi))?.0)
}

/// Default burn-in, `200 + 10·K`.
pub fn default_burn_in(k: usize) -> usize {
    200 + 10 * k
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: TimeSeriesPanel,
    /// `ε_1 … ε_T`, aligned with the estimation rows.
    pub errors: DenseMatrix,
    /// Every innovation drawn, burn-in included; the last `T + K` rows line up
    /// with the panel.
    pub full_errors: DenseMatrix,
}

/// Simulate `x_t = Σ A_k x_{t-k} + ε_t` from zero initial values, discard
/// `burn_in` rows and return the final `T + K` rows.
///
/// Innovations for row `r` (counted from the first retained row, negative in
/// the burn-in) come from a stream keyed by `(seed, r)`, so the retained
/// innovations do not depend on `burn_in`.
pub fn simulate_panel(
    model: &VarModel,
    t_obs: usize,
    errors: &ErrorSpec,
    burn_in: usize,
    seed: u64,
) -> Result<SimulatedPanel> {
    let rho = model.companion_radius()?;
    if rho >= 1.0 {
        return Err(Error::NonInvertible { rho });
    }
    if t_obs == 0 {
        return Err(Error::Config("t_obs must be positive".into()));
    }
    let n = model.n();
    let k = model.k();
    let total = burn_in + k + t_obs;
    let sampler = errors.sampler(n)?;
    let terms = model.sparse_terms();

    let mut x = vec![0.0; total * n];
    let mut eps = vec![0.0; total * n];
    for s in 0..total {
        let key = (s as i64 - burn_in as i64) as u64;
        let mut stream = rng::stream(rng::mix(seed, key));
        sampler.draw(&mut stream, &mut eps[s * n..(s + 1) * n]);
        for j in 0..n {
            let mut acc = 0.0;
            for &(lag, i, a) in &terms[j] {
                if s >= lag {
                    acc += a * x[(s - lag) * n + i];
                }
            }
            x[s * n + j] = acc + eps[s * n + j];
        }
    }
    let keep = (total - k - t_obs) * n;
    let data = DenseMatrix::new(k + t_obs, n, x[keep..].to_vec())?;
    let full_errors = DenseMatrix::new(total, n, eps)?;
    let err_block = full_errors.block(total - t_obs, 0, t_obs, n);
    Ok(SimulatedPanel {
        panel: TimeSeriesPanel::new(data, k)?,
        errors: err_block,
        full_errors,
    })
}
