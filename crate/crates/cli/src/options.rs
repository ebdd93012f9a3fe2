use std::path::PathBuf;

use hdvb_core::dgp::{default_burn_in, ErrorSpec, PatternKind, SparsePattern};
use hdvb_core::linproc::StatMode;
use hdvb_core::mc::{Estimation, ExperimentKind, GridPoint, MeanShift, ModelSpec, Scenario};
use hdvb_core::rng;
use hdvb_core::var_fit::{FitConfig, Selector};
use serde::Serialize;

use crate::config::Settings;
use crate::error::CliError;

/// Seed-tree branches under `--seed`.
const MODEL_BRANCH: u64 = 1;
const PATH_BRANCH: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    /// Lag order used for fitting and presample length.
    pub lags: usize,
    pub selector: Selector,
    pub eps: f64,
    pub b_reps: usize,
    pub alpha: Vec<f64>,
    pub mode: StatMode,
    pub seed: u64,
    pub threads: Option<usize>,
    pub diagnostic_lags: usize,
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let lags = match s.get::<usize>("lags")? {
            Some(k) => k,
            None => s.require("lags_max")?,
        };
        if lags == 0 {
            return Err(CliError::input("lag order must be ≥ 1"));
        }
        Ok(Self {
            input: s.require("input")?,
            output: s.get("output")?,
            lags,
            selector: selector(s)?,
            eps: positive(s, "eps")?,
            b_reps: count(s, "b_reps")?,
            alpha: alphas(s)?,
            mode: s.require("mode")?,
            seed: s.require("seed")?,
            threads: threads(s)?,
            diagnostic_lags: s.get_or("diagnostic_lags", 5)?,
        })
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            selector: self.selector,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub output: Option<PathBuf>,
    pub n: usize,
    pub t: usize,
    pub lags: usize,
    pub model: ModelSpec,
    pub errors: ErrorSpec,
    pub burn_in: usize,
    pub mean_shift: Option<MeanShift>,
    pub seed: u64,
    pub model_seed: u64,
    pub path_seed: u64,
}

impl SimConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let n = s.get_or("n", 10usize)?;
        let t = s.get_or("t", 200usize)?;
        if n == 0 || t == 0 {
            return Err(CliError::input("n and t must be ≥ 1"));
        }
        let lags = s.get_or("lags", 1usize)?;
        let model = model_spec(s, lags)?;
        let seed: u64 = s.require("seed")?;
        let mean_shift = mean_shift(s)?;
        if mean_shift.is_some_and(|m| m.series >= n) {
            return Err(CliError::input(format!("mean_shift series outside 0..{n}")));
        }
        Ok(Self {
            output: s.get("output")?,
            n,
            t,
            lags,
            model,
            errors: match s.get::<String>("errors")? {
                Some(e) => parse_errors(&e)?,
                None => ErrorSpec::gaussian(),
            },
            burn_in: s.get_or("burn_in", default_burn_in(lags))?,
            mean_shift,
            seed,
            model_seed: rng::derive(seed, &[MODEL_BRANCH]),
            path_seed: rng::derive(seed, &[PATH_BRANCH]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub grid: Vec<GridPoint>,
    pub reps: usize,
    pub model: ModelSpec,
    pub errors: Option<ErrorSpec>,
    pub estimation: Estimation,
    pub eps: f64,
    pub b_reps: usize,
    pub alpha: Vec<f64>,
    pub mode: StatMode,
    pub mean_shift: Option<MeanShift>,
    pub oracle_draws: usize,
    pub ks_fits: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl McConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let scenario: Scenario = s.get_or("scenario", Scenario::Subgaussian)?;
        let grid = match s.get::<String>("grid")? {
            Some(g) => parse_grid(&g)?,
            None => scenario.preset_grid(),
        };
        let lags = s.get_or("lags", 1usize)?;
        let estimation = match s.get_or("estimation", "lasso".to_string())?.as_str() {
            "lasso" => Estimation::Lasso {
                k: None,
                fit: FitConfig {
                    selector: selector(s)?,
                    ..Default::default()
                },
            },
            "truth" => Estimation::Truth,
            "zero" => Estimation::Zero,
            other => return Err(CliError::input(format!("unknown estimation `{other}` (lasso, truth, zero)"))),
        };
        Ok(Self {
            output: s.get("output")?,
            csv: s.get("csv")?,
            kind: s.get_or("kind", ExperimentKind::Size)?,
            scenario,
            grid,
            reps: s.get_or("reps", 200usize)?,
            model: model_spec(s, lags)?,
            errors: s.get::<String>("errors")?.map(|e| parse_errors(&e)).transpose()?,
            estimation,
            eps: positive(s, "eps")?,
            b_reps: count(s, "b_reps")?,
            alpha: alphas(s)?,
            mode: s.require("mode")?,
            mean_shift: mean_shift(s)?,
            oracle_draws: s.get_or("oracle_draws", 20_000usize)?,
            ks_fits: s.get_or("ks_fits", 1usize)?,
            seed: s.require("seed")?,
            threads: threads(s)?,
        })
    }
}

fn positive(s: &Settings, key: &str) -> Result<f64, CliError> {
    let v: f64 = s.require(key)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::input(format!("{key} must be a positive number, got {v}")));
    }
    Ok(v)
}

fn count(s: &Settings, key: &str) -> Result<usize, CliError> {
    let v: usize = s.require(key)?;
    if v == 0 {
        return Err(CliError::input(format!("{key} must be ≥ 1")));
    }
    Ok(v)
}

fn threads(s: &Settings) -> Result<Option<usize>, CliError> {
    match s.get::<usize>("threads")? {
        Some(0) => Err(CliError::input("threads must be ≥ 1")),
        t => Ok(t),
    }
}

fn alphas(s: &Settings) -> Result<Vec<f64>, CliError> {
    let a: Vec<f64> = s.list("alpha")?;
    if a.is_empty() {
        return Err(CliError::input("at least one alpha level is required"));
    }
    if let Some(bad) = a.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(CliError::input(format!("alpha must lie in (0, 1), got {bad}")));
    }
    Ok(a)
}

fn selector(s: &Settings) -> Result<Selector, CliError> {
    match s.require::<String>("selector")?.as_str() {
        "bic" => Ok(Selector::default()),
        "tscv" => Ok(Selector::tscv()),
        "fixed" => {
            let lambda: f64 = s
                .get("lambda")?
                .ok_or_else(|| CliError::input("selector `fixed` needs a lambda"))?;
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(CliError::input(format!("lambda must be ≥ 0, got {lambda}")));
            }
            Ok(Selector::Fixed { lambda })
        }
        other => Err(CliError::input(format!("unknown selector `{other}` (bic, tscv, fixed)"))),
    }
}

fn model_spec(s: &Settings, lags: usize) -> Result<ModelSpec, CliError> {
    if lags == 0 {
        return Err(CliError::input("lag order must be ≥ 1"));
    }
    let rho = s.get_or("rho", 0.5f64)?;
    let per_row = s.get_or("per_row", 2usize)?;
    let pattern = match s.get_or("model", "diagonal".to_string())?.as_str() {
        "diagonal" if lags == 1 => return Ok(ModelSpec::Diagonal { a: s.get_or("a", 0.5)? }),
        "diagonal" => SparsePattern {
            kind: PatternKind::Diagonal,
            per_row_nonzeros: lags,
            ..SparsePattern::diagonal()
        },
        "banded" => SparsePattern::banded(per_row),
        "random" => SparsePattern::random_support(per_row),
        other => return Err(CliError::input(format!("unknown model `{other}` (diagonal, banded, random)"))),
    };
    Ok(ModelSpec::Generated {
        pattern,
        k: lags,
        target_rho: rho,
    })
}

/// `gaussian`, `rademacher`, or `t:<dof>`.
pub fn parse_errors(text: &str) -> Result<ErrorSpec, CliError> {
    match text.trim() {
        "gaussian" | "normal" => Ok(ErrorSpec::gaussian()),
        "rademacher" => Ok(ErrorSpec::rademacher()),
        other => {
            let dof = other
                .strip_prefix("t:")
                .and_then(|d| d.parse::<f64>().ok())
                .ok_or_else(|| CliError::input(format!("unknown errors `{other}` (gaussian, rademacher, t:<dof>)")))?;
            Ok(ErrorSpec::student_t(dof))
        }
    }
}

/// Comma-separated `NxT` cells.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|cell| {
            let (n, t) = cell
                .split_once(['x', 'X'])
                .and_then(|(n, t)| Some((n.trim().parse().ok()?, t.trim().parse().ok()?)))
                .ok_or_else(|| CliError::input(format!("grid cell `{cell}` is not NxT")))?;
            Ok(GridPoint { n, t })
        })
        .collect()
}

/// `series:delta`, series counted from 0.
fn mean_shift(s: &Settings) -> Result<Option<MeanShift>, CliError> {
    let Some(text) = s.get::<String>("mean_shift")? else {
        return Ok(None);
    };
    let (j, d) = text
        .split_once(':')
        .and_then(|(j, d)| Some((j.trim().parse().ok()?, d.trim().parse().ok()?)))
        .ok_or_else(|| CliError::input(format!("mean_shift `{text}` is not series:delta")))?;
    Ok(Some(MeanShift { series: j, delta: d }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Source;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        let mut s = Settings::with_defaults();
        for (k, v) in pairs {
            s.set(k, v.to_string(), Source::Cli);
        }
        s
    }

    #[test]
    fn frozen_defaults() {
        let c = RunConfig::from_settings(&settings(&[("input", "x.csv")])).unwrap();
        assert_eq!(c.lags, 4);
        assert_eq!(c.selector, Selector::default());
        assert_eq!(c.eps, 0.01);
        assert_eq!(c.b_reps, 999);
        assert_eq!(c.alpha, vec![0.05]);
        assert_eq!(c.mode, StatMode::AbsMax);
    }

    #[test]
    fn lags_overrides_lags_max() {
        let c = RunConfig::from_settings(&settings(&[("input", "x"), ("lags", "2"), ("lags_max", "6")])).unwrap();
        assert_eq!(c.lags, 2);
    }

    #[test]
    fn fixed_selector_needs_lambda() {
        assert!(RunConfig::from_settings(&settings(&[("input", "x"), ("selector", "fixed")])).is_err());
        let c =
            RunConfig::from_settings(&settings(&[("input", "x"), ("selector", "fixed"), ("lambda", "0.1")])).unwrap();
        assert_eq!(c.selector, Selector::Fixed { lambda: 0.1 });
    }

    #[test]
    fn rejects_bad_values() {
        for (k, v) in [("alpha", "1.5"), ("eps", "0"), ("b_reps", "0"), ("mode", "median"), ("selector", "aic")] {
            let e = RunConfig::from_settings(&settings(&[("input", "x"), (k, v)])).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{k}");
        }
    }

    #[test]
    fn grid_and_errors_parse() {
        assert_eq!(
            parse_grid("10x100, 50X200").unwrap(),
            vec![GridPoint { n: 10, t: 100 }, GridPoint { n: 50, t: 200 }]
        );
        assert!(parse_grid("10-100").is_err());
        assert_eq!(parse_errors("t:6").unwrap(), ErrorSpec::student_t(6.0));
        assert!(parse_errors("cauchy").is_err());
    }

    #[test]
    fn simulate_seeds_branch_from_one_seed() {
        let a = SimConfig::from_settings(&settings(&[("seed", "3")])).unwrap();
        let b = SimConfig::from_settings(&settings(&[("seed", "4")])).unwrap();
        assert_ne!(a.model_seed, a.path_seed);
        assert_ne!(a.path_seed, b.path_seed);
        assert_eq!(a.model, ModelSpec::Diagonal { a: 0.5 });
    }
}
