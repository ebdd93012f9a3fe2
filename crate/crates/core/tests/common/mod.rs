#![allow(dead_code)]

use hdvb_core::bootstrap::{BootstrapConfig, BootstrapRun};
use hdvb_core::dgp::{generate_var_model, simulate_panel, ErrorSpec, SparsePattern, TimeSeriesPanel};
use hdvb_core::linproc::{build_companion, long_run_matrix, vma_from_var, DenseMatrix, StatMode, DEFAULT_VMA_TOL};
use hdvb_core::rng;
use hdvb_core::var_fit::VarModel;
use rand::Rng;

/// Stable model with N ≤ 10, K ≤ 3 and a banded or scattered support.
pub fn random_model(seed: u64) -> VarModel {
    let mut r = rng::stream(seed);
    let n = r.random_range(1..=10);
    let k = r.random_range(1..=3);
    let per_row = r.random_range(1..=(n * k).min(4));
    let pattern = if r.random::<bool>() {
        SparsePattern::banded(per_row)
    } else {
        SparsePattern::random_support(per_row)
    };
    let rho = r.random_range(0.2..0.9);
    generate_var_model(n, k, &pattern, rho, seed).unwrap()
}

/// VMA blocks against companion powers (exact) and the partial sum against
/// the long-run matrix (within the tail bound).
pub fn check_vma_identity(seed: u64) -> Result<(), String> {
    let model = random_model(seed);
    let n = model.n();
    let comp = build_companion(model.a_mats()).map_err(|e| e.to_string())?;
    let vma = vma_from_var(&model, DEFAULT_VMA_TOL, None).map_err(|e| e.to_string())?;
    let mut power = DenseMatrix::identity(n * model.k());
    for (j, b) in vma.coeffs.iter().enumerate() {
        if &power.block(0, 0, n, n) != b {
            return Err(format!("seed {seed}: block {j} differs from the companion power"));
        }
        power = comp.matrix().matmul(&power).map_err(|e| e.to_string())?;
    }
    let b1 = long_run_matrix(&model).map_err(|e| e.to_string())?;
    let gap = vma.partial_sum().sub(&b1).map_err(|e| e.to_string())?.max_abs();
    if gap > vma.tail_bound {
        return Err(format!("seed {seed}: partial sum gap {gap:e} > tail bound {:e}", vma.tail_bound));
    }
    Ok(())
}

/// Largest elementwise residual of the Beveridge-Nelson decomposition of
/// `Σ x_t`, relative to `tail_bound·max|ε|`.
pub fn beveridge_nelson_ratio(seed: u64) -> Result<f64, String> {
    let model = random_model(1000 + seed);
    let (n, t_obs) = (model.n(), 150);
    let sim = simulate_panel(&model, t_obs, &ErrorSpec::gaussian(), 60, seed).map_err(|e| e.to_string())?;
    let vma = vma_from_var(&model, DEFAULT_VMA_TOL, None).map_err(|e| e.to_string())?;
    let tails = vma.tail_sums();
    let b1 = vma.partial_sum();
    let eps = &sim.full_errors;
    let first_est = eps.rows() - t_obs;
    // ε_s for s ≤ T in estimation time; zero before the simulation start
    let e = |s: isize| -> Vec<f64> {
        let row = first_est as isize + s - 1;
        if row < 0 {
            vec![0.0; n]
        } else {
            eps.row(row as usize).to_vec()
        }
    };
    let mut lhs = vec![0.0; n];
    let mut sum_eps = vec![0.0; n];
    for t in 1..=t_obs as isize {
        for i in 0..n {
            lhs[i] += sim.panel.obs(t)[i];
            sum_eps[i] += e(t)[i];
        }
    }
    let mut rhs = b1.matvec(&sum_eps);
    for (j, bt) in tails.iter().enumerate() {
        let end = bt.matvec(&e(t_obs as isize - j as isize));
        let start = bt.matvec(&e(-(j as isize)));
        for i in 0..n {
            rhs[i] += start[i] - end[i];
        }
    }
    let scale = vma.tail_bound * eps.max_abs();
    let worst = (0..n).map(|i| (lhs[i] - rhs[i]).abs()).fold(0.0, f64::max);
    Ok(if scale > 0.0 { worst / scale } else if worst == 0.0 { 0.0 } else { f64::INFINITY })
}

pub struct Instance {
    pub panel: TimeSeriesPanel,
    pub run: BootstrapRun,
}

/// Panel with the given estimation rows (one zero presample row) and a
/// bootstrap run built directly from stored replicate means.
pub fn instance(obs: Vec<Vec<f64>>, boot: Vec<Vec<f64>>) -> Instance {
    let n = obs[0].len();
    let t = obs.len();
    let mut rows = vec![vec![0.0; n]];
    rows.extend(obs);
    let panel = TimeSeriesPanel::new(DenseMatrix::from_rows(&rows).unwrap(), 1).unwrap();
    let b = boot.len();
    let q = boot
        .iter()
        .map(|m| m.iter().map(|v| ((t as f64).sqrt() * v).abs()).fold(0.0, f64::max))
        .collect();
    let run = BootstrapRun {
        q_stats: q,
        boot_means: DenseMatrix::from_rows(&boot).unwrap(),
        t_obs: t,
        config: BootstrapConfig {
            b_reps: b,
            mode: StatMode::AbsMax,
            seed: 0,
            parallel_chunk: 1,
        },
        fingerprint: String::new(),
    };
    Instance { panel, run }
}

pub fn random_instance(seed: u64) -> (Instance, f64) {
    let mut r = rng::stream(seed);
    let n = r.random_range(1..=5);
    let t = r.random_range(1..=6);
    let b = r.random_range(1..=50);
    let obs = (0..t).map(|_| (0..n).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let boot = (0..b).map(|_| (0..n).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    let alpha = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5][r.random_range(0..6)];
    (instance(obs, boot), alpha)
}

/// Smallest 1-based index `k` with `k/B ≥ level`.
pub fn brute_quantile(mut v: Vec<f64>, level: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let b = v.len();
    let k = (1..=b).find(|&k| k as f64 / b as f64 >= level - 1e-12).unwrap_or(b);
    v[k - 1]
}

/// Straight transcription: keep a surviving set, recompute the restricted
/// maxima from the stored means, reject everything above the quantile.
pub fn brute_stepdown(inst: &Instance, alpha: f64) -> (Vec<(usize, usize)>, Vec<f64>) {
    let t = inst.panel.t_obs() as f64;
    let n = inst.panel.n_series();
    let obs: Vec<f64> = (0..n)
        .map(|j| {
            let s: f64 = (1..=inst.panel.t_obs() as isize).map(|r| inst.panel.obs(r)[j]).sum();
            (t.sqrt() * (s / t)).abs()
        })
        .collect();
    let mut alive: Vec<bool> = vec![true; n];
    let mut out = Vec::new();
    let mut crits = Vec::new();
    for iter in 1..=n {
        if !alive.iter().any(|&a| a) {
            break;
        }
        let maxima: Vec<f64> = (0..inst.run.boot_means.rows())
            .map(|b| {
                let mut m: f64 = 0.0;
                for j in 0..n {
                    if alive[j] {
                        m = m.max((t.sqrt() * inst.run.boot_means.get(b, j)).abs());
                    }
                }
                m
            })
            .collect();
        let crit = brute_quantile(maxima, 1.0 - alpha);
        crits.push(crit);
        let hits: Vec<usize> = (0..n).filter(|&j| alive[j] && obs[j] > crit).collect();
        if hits.is_empty() {
            break;
        }
        for j in hits {
            alive[j] = false;
            out.push((j, iter));
        }
    }
    (out, crits)
}
