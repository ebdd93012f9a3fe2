//! Global max-mean test and the stepdown procedure over stored bootstrap
//! means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{sorted_quantile, BootstrapRun};
use crate::dgp::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::linproc::{max_mean_statistic, scaled_mean, StatMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTest {
    pub reject: bool,
    pub q_obs: f64,
    pub q_crit: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub mode: StatMode,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_match(panel: &TimeSeriesPanel, run: &BootstrapRun) -> Result<()> {
    if panel.n_series() == 0 || panel.t_obs() == 0 {
        return Err(Error::Input("empty panel".into()));
    }
    if run.n_series() != panel.n_series() || run.t_obs != panel.t_obs() {
        return Err(Error::Shape(format!(
            "bootstrap run is for N = {}, T = {}; panel has N = {}, T = {}",
            run.n_series(),
            run.t_obs,
            panel.n_series(),
            panel.t_obs()
        )));
    }
    Ok(())
}

/// Compare the observed statistic with the `⌈B(1−α)⌉`-th bootstrap order
/// statistic. For `min` the rejection region is the lower tail: the test
/// rejects when `q_obs` falls below the `⌈B(1−α)⌉`-th largest replicate.
pub fn global_test(
    panel: &TimeSeriesPanel,
    run: &BootstrapRun,
    alpha: f64,
    mode: StatMode,
) -> Result<GlobalTest> {
    check_alpha(alpha)?;
    check_match(panel, run)?;
    if mode != run.config.mode {
        return Err(Error::Config(format!(
            "requested `{}` statistic but the bootstrap ran with `{}`",
            mode.as_str(),
            run.config.mode.as_str()
        )));
    }
    let q_obs = max_mean_statistic(panel, mode)?;
    let b = run.q_stats.len();
    let (q_crit, reject, exceed) = if mode == StatMode::Min {
        let flipped: Vec<f64> = run.q_stats.iter().map(|q| -q).collect();
        let crit = -sorted_quantile(&flipped, 1.0 - alpha);
        (crit, q_obs < crit, run.q_stats.iter().filter(|&&q| q <= q_obs).count())
    } else {
        let crit = sorted_quantile(&run.q_stats, 1.0 - alpha);
        (crit, q_obs > crit, run.q_stats.iter().filter(|&&q| q >= q_obs).count())
    };
    Ok(GlobalTest {
        reject,
        q_obs,
        q_crit,
        p_value: (1 + exceed) as f64 / (b + 1) as f64,
        alpha,
        mode,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesOutcome {
    pub series: usize,
    /// `|√T·x̄_j|`.
    pub statistic: f64,
    /// Iteration (1-based) at which the series was rejected.
    pub rejected_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepdownResult {
    /// `(series, iteration)` in order of rejection; ties within an iteration
    /// are listed by series index.
    pub rejected: Vec<(usize, usize)>,
    pub retained: Vec<usize>,
    pub critical_values: Vec<f64>,
    pub series: Vec<SeriesOutcome>,
    pub alpha: f64,
    pub iterations: usize,
}

impl StepdownResult {
    pub fn rejected_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rejected.iter().map(|r| r.0).collect();
        v.sort_unstable();
        v
    }
}

/// `(1−α)` quantile over replicates of `max_{j∈S} |√T·x̄*_j|`.
fn restricted_critical_value(run: &BootstrapRun, surviving: &[usize], alpha: f64) -> f64 {
    let t = run.t_obs;
    let maxima: Vec<f64> = (0..run.b_reps())
        .into_par_iter()
        .map(|b| {
            let row = run.boot_means.row(b);
            surviving
                .iter()
                .map(|&j| scaled_mean(row[j], t))
                .fold(0.0, |acc: f64, v| acc.max(v.abs()))
        })
        .collect();
    sorted_quantile(&maxima, 1.0 - alpha)
}

/// Stepdown over the two-sided statistic. The stored bootstrap means are
/// reused at every iteration, whatever mode the run was produced with.
pub fn stepdown(panel: &TimeSeriesPanel, run: &BootstrapRun, alpha: f64) -> Result<StepdownResult> {
    check_alpha(alpha)?;
    check_match(panel, run)?;
    let t = panel.t_obs();
    let observed: Vec<f64> = panel
        .estimation_means()
        .iter()
        .map(|&m| scaled_mean(m, t).abs())
        .collect();
    let mut series: Vec<SeriesOutcome> = observed
        .iter()
        .enumerate()
        .map(|(j, &s)| SeriesOutcome {
            series: j,
            statistic: s,
            rejected_at: None,
        })
        .collect();
    let mut surviving: Vec<usize> = (0..panel.n_series()).collect();
    let mut rejected = Vec::new();
    let mut critical_values = Vec::new();
    let mut iterations = 0;
    while !surviving.is_empty() {
        iterations += 1;
        let crit = restricted_critical_value(run, &surviving, alpha);
        critical_values.push(crit);
        let (hit, keep): (Vec<usize>, Vec<usize>) = surviving.iter().partition(|&&j| observed[j] > crit);
        if hit.is_empty() {
            break;
        }
        for &j in &hit {
            series[j].rejected_at = Some(iterations);
            rejected.push((j, iterations));
        }
        surviving = keep;
    }
    Ok(StepdownResult {
        rejected,
        retained: surviving,
        critical_values,
        series,
        alpha,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::BootstrapConfig;
    use crate::linproc::DenseMatrix;

    fn panel_with_means(means: &[f64], t: usize) -> TimeSeriesPanel {
        let rows: Vec<Vec<f64>> = std::iter::once(vec![0.0; means.len()])
            .chain((0..t).map(|_| means.to_vec()))
            .collect();
        TimeSeriesPanel::new(DenseMatrix::from_rows(&rows).unwrap(), 1).unwrap()
    }

    fn run_from(q: Vec<f64>, means: DenseMatrix, t: usize, mode: StatMode) -> BootstrapRun {
        BootstrapRun {
            q_stats: q,
            boot_means: means,
            t_obs: t,
            config: BootstrapConfig {
                b_reps: 0,
                mode,
                seed: 0,
                parallel_chunk: 1,
            },
            fingerprint: String::new(),
        }
    }

    #[test]
    fn hand_enumerated_global_test() {
        // T = 1 so q_obs equals the single observed value
        let panel = panel_with_means(&[5.5], 1);
        let q: Vec<f64> = (1..=9).map(f64::from).collect();
        let run = run_from(q, DenseMatrix::zeros(9, 1), 1, StatMode::AbsMax);
        let g = global_test(&panel, &run, 0.3, StatMode::AbsMax).unwrap();
        assert_eq!(g.q_crit, 7.0);
        assert!(!g.reject);
        assert_eq!(g.p_value, 0.5);
    }

    #[test]
    fn zero_panel_never_rejects() {
        let panel = panel_with_means(&[0.0, 0.0], 4);
        let run = run_from(vec![0.5, 1.0, 2.0], DenseMatrix::zeros(3, 2), 4, StatMode::AbsMax);
        let g = global_test(&panel, &run, 0.05, StatMode::AbsMax).unwrap();
        assert!(!g.reject);
        assert_eq!(g.q_obs, 0.0);
        assert_eq!(g.p_value, 1.0);
    }

    #[test]
    fn dominant_observation() {
        let panel = panel_with_means(&[100.0], 1);
        let run = run_from(vec![0.5, 1.0, 2.0], DenseMatrix::zeros(3, 1), 1, StatMode::AbsMax);
        for alpha in [0.25, 0.5, 0.9] {
            let g = global_test(&panel, &run, alpha, StatMode::AbsMax).unwrap();
            assert!(g.reject);
            assert_eq!(g.p_value, 0.25);
        }
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let panel = panel_with_means(&[1.0], 1);
        let run = run_from(vec![1.0], DenseMatrix::zeros(1, 1), 1, StatMode::AbsMax);
        assert!(matches!(global_test(&panel, &run, 0.05, StatMode::Max), Err(Error::Config(_))));
    }

    #[test]
    fn lower_tail_for_min() {
        let panel = panel_with_means(&[-10.0], 1);
        let q: Vec<f64> = (1..=9).map(|i| -(i as f64)).collect();
        let run = run_from(q, DenseMatrix::zeros(9, 1), 1, StatMode::Min);
        let g = global_test(&panel, &run, 0.3, StatMode::Min).unwrap();
        assert_eq!(g.q_crit, -7.0);
        assert!(g.reject);
        assert_eq!(g.p_value, 0.1);
    }

    #[test]
    fn zero_bootstrap_rejects_every_nonzero_series() {
        let panel = panel_with_means(&[0.1, -0.2, 0.0], 4);
        let run = run_from(vec![0.0; 5], DenseMatrix::zeros(5, 3), 4, StatMode::AbsMax);
        let s = stepdown(&panel, &run, 0.05).unwrap();
        assert_eq!(s.rejected, vec![(0, 1), (1, 1)]);
        assert_eq!(s.retained, vec![2]);
        assert_eq!(s.critical_values, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 2);
    }

    #[test]
    fn two_stage_rejection() {
        // T = 1; series 2 bootstrap means are small, series 1 large
        let t = 1;
        let b = 10;
        let mut m = DenseMatrix::zeros(b, 2);
        for r in 0..b {
            m.set(r, 0, 3.0 + r as f64);
            m.set(r, 1, 0.1 * r as f64);
        }
        let q = (0..b).map(|r| m.row(r)[0].abs().max(m.row(r)[1].abs())).collect();
        let run = run_from(q, m, t, StatMode::AbsMax);
        let panel = panel_with_means(&[20.0, 2.0], t);
        let s = stepdown(&panel, &run, 0.1).unwrap();
        assert_eq!(s.rejected, vec![(0, 1), (1, 2)]);
        assert_eq!(s.critical_values, vec![11.0, 0.1 * 8.0]);
        assert!(s.retained.is_empty());
    }

    #[test]
    fn nothing_to_reject_is_single_step() {
        let panel = panel_with_means(&[0.1, 0.1], 1);
        let run = run_from(vec![1.0; 4], DenseMatrix::from_rows(&vec![vec![1.0, 1.0]; 4]).unwrap(), 1, StatMode::AbsMax);
        let s = stepdown(&panel, &run, 0.05).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.rejected.is_empty());
        assert_eq!(s.retained, vec![0, 1]);
    }
}
