//! Layered settings: frozen defaults, then a flat `key = value` file, then
//! `HDVB_*` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::CliError;

pub const ENV_PREFIX: &str = "HDVB_";

/// Every key a config file or the environment may set.
pub const KEYS: &[&str] = &[
    "input",
    "output",
    "lags",
    "lags_max",
    "selector",
    "lambda",
    "eps",
    "b_reps",
    "alpha",
    "mode",
    "seed",
    "threads",
    "diagnostic_lags",
    "n",
    "t",
    "model",
    "a",
    "rho",
    "per_row",
    "errors",
    "burn_in",
    "mean_shift",
    "kind",
    "scenario",
    "grid",
    "reps",
    "estimation",
    "oracle_draws",
    "ks_fits",
    "csv",
];

pub const DEFAULTS: &[(&str, &str)] = &[
    ("lags_max", "4"),
    ("selector", "bic"),
    ("eps", "0.01"),
    ("b_reps", "999"),
    ("alpha", "0.05"),
    ("mode", "abs_max"),
    ("seed", "0"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Env,
    Cli,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setting {
    pub value: String,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Settings {
    values: BTreeMap<String, Setting>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Settings {
    pub fn with_defaults() -> Self {
        let mut s = Self::default();
        for (k, v) in DEFAULTS {
            s.set(k, v.to_string(), Source::Default);
        }
        s
    }

    pub fn set(&mut self, key: &str, value: String, source: Source) {
        self.values.insert(normalize(key), Setting { value, source });
    }

    /// Parses a flat config file. `#` starts a comment; keys may use `-` or `_`.
    pub fn apply_file_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::input(format!("{origin}: expected `key = value`")).at(i + 1, None));
            };
            let key = normalize(k);
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::input(format!("{origin}: unknown key `{key}`")).at(i + 1, None));
            }
            if seen.contains(&key) {
                return Err(CliError::input(format!("{origin}: `{key}` set twice")).at(i + 1, None));
            }
            seen.push(key.clone());
            self.set(&key, v.trim().to_string(), Source::File);
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config file {}: {e}", path.display())))?;
        self.apply_file_text(&text, &path.display().to_string())
    }

    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = normalize(rest);
                if KEYS.contains(&key.as_str()) {
                    self.set(&key, value, Source::Env);
                }
            }
        }
    }

    pub fn apply_cli(&mut self, pairs: Vec<(&'static str, String)>) {
        for (k, v) in pairs {
            self.set(k, v, Source::Cli);
        }
    }

    #[cfg(test)]
    pub fn raw(&self, key: &str) -> Option<&Setting> {
        self.values.get(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(s) if s.value.is_empty() => Ok(None),
            Some(s) => s.value.parse().map(Some).map_err(|e| {
                CliError::input(format!("invalid {key} `{}` ({:?}): {e}", s.value, s.source))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| CliError::input(format!("missing required setting `{key}`")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let Some(s) = self.values.get(key) else {
            return Ok(Vec::new());
        };
        s.value
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::input(format!("invalid {key} entry `{v}` ({:?}): {e}", s.source)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_env_file_default() {
        let mut s = Settings::with_defaults();
        assert_eq!(s.raw("b_reps").unwrap().source, Source::Default);
        s.apply_file_text("b-reps = 199\neps = 0.02 # tighter\nmode=max\n", "cfg").unwrap();
        s.apply_env(vec![
            ("HDVB_B_REPS".to_string(), "299".to_string()),
            ("HDVB_EPS".to_string(), "0.03".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ]);
        s.apply_cli(vec![("b_reps", "399".into())]);
        assert_eq!(s.require::<usize>("b_reps").unwrap(), 399);
        assert_eq!(s.require::<f64>("eps").unwrap(), 0.03);
        assert_eq!(s.raw("mode").unwrap().source, Source::File);
        assert_eq!(s.require::<usize>("lags_max").unwrap(), 4);
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let mut s = Settings::default();
        let e = s.apply_file_text("\n# c\nfoo = 1\n", "cfg").unwrap_err();
        assert_eq!(e.row, Some(3));
        let e = s.apply_file_text("eps 0.1", "cfg").unwrap_err();
        assert_eq!(e.row, Some(1));
        let e = s.apply_file_text("eps=1\neps=2", "cfg").unwrap_err();
        assert_eq!(e.row, Some(2));
    }

    #[test]
    fn lists_and_bad_values() {
        let mut s = Settings::with_defaults();
        s.set("alpha", "0.01, 0.05,0.1".into(), Source::Cli);
        assert_eq!(s.list::<f64>("alpha").unwrap(), vec![0.01, 0.05, 0.1]);
        s.set("b_reps", "many".into(), Source::Env);
        let e = s.require::<usize>("b_reps").unwrap_err();
        assert!(e.message.contains("b_reps"));
        assert_eq!(e.exit_code(), 2);
    }
}
