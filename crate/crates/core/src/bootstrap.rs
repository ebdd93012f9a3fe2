//! VAR multiplier bootstrap: residuals are scaled by iid standard normal
//! multipliers and pushed through the fitted dynamics, starting from the
//! observed presample.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgp::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::linproc::{extreme_of_means, order_index, DenseMatrix, StatMode};
use crate::rng;
use crate::var_fit::VarModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b_reps: usize,
    pub mode: StatMode,
    pub seed: u64,
    /// Replicates per parallel task. Does not affect results.
    pub parallel_chunk: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b_reps: 999,
            mode: StatMode::AbsMax,
            seed: 0,
            parallel_chunk: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun {
    pub q_stats: Vec<f64>,
    /// `B×N`, row `b` holds `x̄*_j` of replicate `b`.
    pub boot_means: DenseMatrix,
    pub t_obs: usize,
    pub config: BootstrapConfig,
    /// SHA-256 of the model, residuals and presample that produced the run.
    pub fingerprint: String,
}

impl BootstrapRun {
    pub fn b_reps(&self) -> usize {
        self.q_stats.len()
    }

    pub fn n_series(&self) -> usize {
        self.boot_means.cols()
    }
}

type Terms = Vec<Vec<(usize, usize, f64)>>;

fn check_inputs(model: &VarModel, residuals: &DenseMatrix, panel: &TimeSeriesPanel) -> Result<()> {
    let (n, k) = (model.n(), model.k());
    if panel.n_series() != n || residuals.cols() != n {
        return Err(Error::Shape(format!(
            "model has {n} series, panel {} and residuals {}",
            panel.n_series(),
            residuals.cols()
        )));
    }
    if residuals.rows() != panel.t_obs() {
        return Err(Error::Shape(format!(
            "{} residual rows for T = {}",
            residuals.rows(),
            panel.t_obs()
        )));
    }
    if panel.k_presample() < k {
        return Err(Error::Input(format!(
            "bootstrap needs {k} presample rows, panel has {}",
            panel.k_presample()
        )));
    }
    Ok(())
}

fn replicate(
    terms: &Terms,
    k: usize,
    residuals: &DenseMatrix,
    panel: &TimeSeriesPanel,
    rep_seed: u64,
    mode: StatMode,
) -> std::result::Result<(f64, Vec<f64>), String> {
    let (t_obs, n) = (residuals.rows(), residuals.cols());
    let mut x = vec![0.0; (k + t_obs) * n];
    for p in 0..k {
        let t = p as isize + 1 - k as isize;
        x[p * n..(p + 1) * n].copy_from_slice(panel.obs(t));
    }
    let mut stream = rng::stream(rep_seed);
    let mut sums = vec![0.0; n];
    for t in 0..t_obs {
        let gamma: f64 = StandardNormal.sample(&mut stream);
        let row = k + t;
        let eps = residuals.row(t);
        for j in 0..n {
            let mut v = 0.0;
            for &(lag, i, a) in &terms[j] {
                v += a * x[(row - lag) * n + i];
            }
            v += eps[j] * gamma;
            x[row * n + j] = v;
            sums[j] += v;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / t_obs as f64).collect();
    if let Some(j) = means.iter().position(|m| !m.is_finite()) {
        return Err(format!("non-finite pseudo-series mean for series {j}"));
    }
    Ok((extreme_of_means(&means, t_obs, mode), means))
}

/// One bootstrap draw: the statistic over `t = 1..T` and the `N`
/// pseudo-series means.
pub fn bootstrap_replicate(
    model: &VarModel,
    residuals: &DenseMatrix,
    panel: &TimeSeriesPanel,
    rep_seed: u64,
    mode: StatMode,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(model, residuals, panel)?;
    replicate(&model.sparse_terms(), model.k(), residuals, panel, rep_seed, mode).map_err(|reason| {
        Error::Replicate {
            replicate: 0,
            seed: rep_seed,
            reason,
        }
    })
}

fn fingerprint(model: &VarModel, residuals: &DenseMatrix, panel: &TimeSeriesPanel) -> String {
    let mut h = Sha256::new();
    h.update((model.n() as u64).to_le_bytes());
    h.update((model.k() as u64).to_le_bytes());
    for a in model.a_mats() {
        for v in a.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    for v in residuals.as_slice() {
        h.update(v.to_le_bytes());
    }
    for t in (1 - model.k() as isize)..=0 {
        for v in panel.obs(t) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// `B` replicates with seeds `mix(seed, b)`, collected in `b` order.
pub fn run_bootstrap(
    model: &VarModel,
    residuals: &DenseMatrix,
    panel: &TimeSeriesPanel,
    cfg: &BootstrapConfig,
) -> Result<BootstrapRun> {
    if cfg.b_reps == 0 {
        return Err(Error::Config("b_reps must be ≥ 1".into()));
    }
    check_inputs(model, residuals, panel)?;
    let terms = model.sparse_terms();
    let k = model.k();
    let n = model.n();
    let chunk = cfg.parallel_chunk.max(1);
    let seeds: Vec<u64> = (0..cfg.b_reps).map(|b| rng::mix(cfg.seed, b as u64)).collect();
    let results: Vec<std::result::Result<(f64, Vec<f64>), (usize, String)>> = seeds
        .par_chunks(chunk)
        .enumerate()
        .flat_map_iter(|(c, block)| {
            let terms = &terms;
            block.iter().enumerate().map(move |(i, &s)| {
                replicate(terms, k, residuals, panel, s, cfg.mode).map_err(|e| (c * chunk + i, e))
            })
        })
        .collect();

    let mut q_stats = Vec::with_capacity(cfg.b_reps);
    let mut boot_means = DenseMatrix::zeros(cfg.b_reps, n);
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok((q, means)) => {
                q_stats.push(q);
                boot_means.row_mut(b).copy_from_slice(&means);
            }
            Err((replicate, reason)) => {
                return Err(Error::Replicate {
                    replicate,
                    seed: seeds[replicate],
                    reason,
                })
            }
        }
    }
    Ok(BootstrapRun {
        q_stats,
        boot_means,
        t_obs: panel.t_obs(),
        config: *cfg,
        fingerprint: fingerprint(model, residuals, panel),
    })
}

/// Order statistic `⌈B·level⌉` (1-based) of the replicate statistics.
pub fn bootstrap_quantile(run: &BootstrapRun, level: f64) -> f64 {
    sorted_quantile(&run.q_stats, level)
}

pub(crate) fn sorted_quantile(values: &[f64], level: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[order_index(v.len(), level) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_panel, ErrorSpec};
    use crate::linproc::{kolmogorov_distance, EmpiricalDistribution};

    fn gaussian(t: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut s = rng::stream(seed);
        let data = (0..t * n).map(|_| StandardNormal.sample(&mut s)).collect();
        DenseMatrix::new(t, n, data).unwrap()
    }

    fn run_with(q: Vec<f64>) -> BootstrapRun {
        let b = q.len();
        BootstrapRun {
            q_stats: q,
            boot_means: DenseMatrix::zeros(b, 1),
            t_obs: 1,
            config: BootstrapConfig::default(),
            fingerprint: String::new(),
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(bootstrap_quantile(&run_with(vec![4.0, 2.0, 1.0, 3.0]), 0.75), 3.0);
        assert_eq!(bootstrap_quantile(&run_with(vec![2.5; 7]), 0.3), 2.5);
        let tenths: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(bootstrap_quantile(&run_with(tenths), 0.95), 1.0);
    }

    #[test]
    fn no_dynamics_closed_form() {
        let (t, n) = (30, 3);
        let eps = gaussian(t, n, 1);
        let panel = TimeSeriesPanel::new(gaussian(t + 1, n, 2), 1).unwrap();
        let model = VarModel::zeros(n, 1);
        let seed = 77;
        let (q, means) = bootstrap_replicate(&model, &eps, &panel, seed, StatMode::AbsMax).unwrap();
        let mut s = rng::stream(seed);
        let gammas: Vec<f64> = (0..t).map(|_| StandardNormal.sample(&mut s)).collect();
        for j in 0..n {
            let direct: f64 = (0..t).map(|r| eps.get(r, j) * gammas[r]).sum::<f64>() / t as f64;
            assert!((means[j] - direct).abs() < 1e-14);
        }
        let direct_q = means.iter().map(|m| (t as f64).sqrt() * m.abs()).fold(0.0, f64::max);
        assert_eq!(q, direct_q);
    }

    #[test]
    fn zero_residuals_give_deterministic_transient() {
        let a = DenseMatrix::from_rows(&[vec![0.5, 0.1], vec![0.0, -0.4]]).unwrap();
        let model = VarModel::new(vec![a.clone()]).unwrap();
        let data = DenseMatrix::from_rows(&vec![vec![2.0, -1.0]; 21]).unwrap();
        let panel = TimeSeriesPanel::new(data, 1).unwrap();
        let eps = DenseMatrix::zeros(20, 2);
        // independent oracle: iterate x_t = A x_{t-1} from x_0
        let mut x = vec![2.0, -1.0];
        let mut sums = [0.0; 2];
        for _ in 0..20 {
            x = a.matvec(&x);
            sums[0] += x[0];
            sums[1] += x[1];
        }
        let oracle = sums.iter().map(|s| (20f64).sqrt() * (s / 20.0).abs()).fold(0.0, f64::max);
        for seed in [1, 2, 3] {
            let (q, _) = bootstrap_replicate(&model, &eps, &panel, seed, StatMode::AbsMax).unwrap();
            assert!((q - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn stored_means_reproduce_statistics() {
        let truth = VarModel::new(vec![DenseMatrix::scaled_identity(4, 0.3)]).unwrap();
        let sim = simulate_panel(&truth, 50, &ErrorSpec::gaussian(), 50, 3).unwrap();
        let cfg = BootstrapConfig {
            b_reps: 64,
            seed: 5,
            ..Default::default()
        };
        let run = run_bootstrap(&truth, &sim.errors, &sim.panel, &cfg).unwrap();
        for b in 0..64 {
            assert_eq!(run.q_stats[b], extreme_of_means(run.boot_means.row(b), 50, StatMode::AbsMax));
        }
        let single = bootstrap_replicate(&truth, &sim.errors, &sim.panel, rng::mix(5, 0), StatMode::AbsMax)
            .unwrap();
        assert_eq!(single.0, run.q_stats[0]);
    }

    #[test]
    fn chunk_size_does_not_matter() {
        let truth = VarModel::new(vec![DenseMatrix::scaled_identity(3, 0.5)]).unwrap();
        let sim = simulate_panel(&truth, 40, &ErrorSpec::gaussian(), 20, 8).unwrap();
        let mk = |chunk| BootstrapConfig {
            b_reps: 200,
            seed: 9,
            parallel_chunk: chunk,
            ..Default::default()
        };
        let a = run_bootstrap(&truth, &sim.errors, &sim.panel, &mk(1)).unwrap();
        let b = run_bootstrap(&truth, &sim.errors, &sim.panel, &mk(64)).unwrap();
        assert_eq!(a.q_stats, b.q_stats);
        assert_eq!(a.fingerprint, b.fingerprint);
    }

    #[test]
    fn explosive_model_reports_failing_replicate() {
        let model = VarModel::new(vec![DenseMatrix::new(1, 1, vec![1e200]).unwrap()]).unwrap();
        let panel = TimeSeriesPanel::new(DenseMatrix::new(4, 1, vec![1.0; 4]).unwrap(), 1).unwrap();
        let eps = DenseMatrix::new(3, 1, vec![1.0; 3]).unwrap();
        let cfg = BootstrapConfig {
            b_reps: 3,
            seed: 1,
            ..Default::default()
        };
        match run_bootstrap(&model, &eps, &panel, &cfg) {
            Err(Error::Replicate { replicate, seed, .. }) => {
                assert_eq!(replicate, 0);
                assert_eq!(seed, rng::mix(1, 0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multiplier_second_moment() {
        // E*[ε*_t ε*_t'] = ε̂_t ε̂_t'; pseudo-innovations are recovered as
        // x*_1 with a zero model and zero presample
        let eps = DenseMatrix::from_rows(&[vec![1.5, -0.5]]).unwrap();
        let panel = TimeSeriesPanel::new(DenseMatrix::zeros(2, 2), 1).unwrap();
        let model = VarModel::zeros(2, 1);
        let reps = 20_000;
        let mut acc = [0.0; 3];
        for b in 0..reps {
            let (_, m) = bootstrap_replicate(&model, &eps, &panel, rng::mix(3, b), StatMode::AbsMax).unwrap();
            acc[0] += m[0] * m[0];
            acc[1] += m[0] * m[1];
            acc[2] += m[1] * m[1];
        }
        let target = [2.25, -0.75, 0.25];
        for (a, t) in acc.iter().zip(target) {
            // var of γ² is 2, so SE of the average is |t|·√(2/reps)
            let est = a / reps as f64;
            assert!((est - t).abs() < 4.0 * t.abs() * (2.0 / reps as f64).sqrt());
        }
    }

    #[test]
    fn half_normal_shape() {
        let t = 200;
        let eps = gaussian(t, 1, 4);
        let panel = TimeSeriesPanel::new(DenseMatrix::zeros(t + 1, 1), 1).unwrap();
        let cfg = BootstrapConfig {
            b_reps: 2000,
            seed: 10,
            ..Default::default()
        };
        let run = run_bootstrap(&VarModel::zeros(1, 1), &eps, &panel, &cfg).unwrap();
        // half-normal with scale s² = (1/T)Σ ε̂_t², compared via inverse CDF on a fine grid
        let s = (eps.as_slice().iter().map(|v| v * v).sum::<f64>() / t as f64).sqrt();
        let boot = EmpiricalDistribution::new(run.q_stats.clone()).unwrap();
        let grid: Vec<f64> = (1..4000)
            .map(|i| {
                use statrs::distribution::{ContinuousCDF, Normal};
                s * Normal::standard().inverse_cdf(0.5 + 0.5 * i as f64 / 4000.0)
            })
            .collect();
        let reference = EmpiricalDistribution::new(grid).unwrap();
        assert!(kolmogorov_distance(&boot, &reference) <= 0.05);
    }
}
