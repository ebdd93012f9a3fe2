use serde::{Deserialize, Serialize};

use crate::dgp::TimeSeriesPanel;
use crate::error::{Error, Result};

/// Which extreme of the scaled means `√T·x̄_j` is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StatMode {
    /// `max_j |√T·x̄_j|`, the two-sided statistic.
    #[default]
    AbsMax,
    Max,
    Min,
}

impl StatMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StatMode::AbsMax => "abs_max",
            StatMode::Max => "max",
            StatMode::Min => "min",
        }
    }
}

impl std::str::FromStr for StatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" | "abs_max" => Ok(StatMode::AbsMax),
            "max" => Ok(StatMode::Max),
            "min" => Ok(StatMode::Min),
            other => Err(Error::Config(format!("unknown statistic mode `{other}`"))),
        }
    }
}

/// `√T·x̄_j` for one series.
#[inline]
pub fn scaled_mean(mean: f64, t_obs: usize) -> f64 {
    (t_obs as f64).sqrt() * mean
}

/// Extreme of `√T·x̄_j` over the supplied means. Shared by the observed
/// statistic, the bootstrap replicates and the stepdown recomputation so that
/// all three agree to the last bit.
pub fn extreme_of_means(means: &[f64], t_obs: usize, mode: StatMode) -> f64 {
    let scaled = means.iter().map(|&m| scaled_mean(m, t_obs));
    match mode {
        StatMode::AbsMax => scaled.fold(0.0, |acc, v| acc.max(v.abs())),
        StatMode::Max => scaled.fold(f64::NEG_INFINITY, f64::max),
        StatMode::Min => scaled.fold(f64::INFINITY, f64::min),
    }
}

pub fn max_mean_statistic(panel: &TimeSeriesPanel, mode: StatMode) -> Result<f64> {
    if panel.n_series() == 0 || panel.t_obs() == 0 {
        return Err(Error::Input("empty panel".into()));
    }
    Ok(extreme_of_means(&panel.estimation_means(), panel.t_obs(), mode))
}
