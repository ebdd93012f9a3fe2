use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod ingest;
mod options;

use config::Settings;
use error::CliError;
use options::{McConfig, RunConfig, SimConfig};

/// Simultaneous tests on the means of high-dimensional time series with a
/// sparse VAR multiplier bootstrap.
///
/// Settings resolve as flags, then HDVB_* environment variables, then the
/// --config file (flat `key = value` lines), then built-in defaults.
#[derive(Parser, Debug)]
#[command(name = "hdvb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit, correct, bootstrap, then test that every mean is zero.
    Test(RunArgs),
    /// Fit and correct the VAR and check the residuals for autocorrelation.
    Fit(RunArgs),
    /// Simulate a panel from a sparse VAR and write it as CSV.
    Simulate(SimArgs),
    /// Run a Monte Carlo experiment and write its report.
    Mc(McArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct EstimationArgs {
    /// bic, tscv or fixed.
    #[arg(long)]
    selector: Option<String>,
    /// Penalty for the fixed selector.
    #[arg(long)]
    lambda: Option<f64>,
    /// Margin added to the spectral radius when shrinking a non-stationary fit.
    #[arg(long)]
    eps: Option<f64>,
    /// Bootstrap replications.
    #[arg(long)]
    b_reps: Option<usize>,
    /// Significance level; repeat for several.
    #[arg(long)]
    alpha: Vec<f64>,
    /// abs, max or min.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    est: EstimationArgs,
    /// CSV file, rows are time (oldest first), columns are series.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Lag order; the first this-many rows are the presample.
    #[arg(long)]
    lags: Option<usize>,
    /// Lag order used when --lags is absent.
    #[arg(long)]
    lags_max: Option<usize>,
    /// Largest residual autocorrelation lag checked by `fit`.
    #[arg(long)]
    diagnostic_lags: Option<usize>,
}

#[derive(Args, Debug)]
struct DgpArgs {
    /// Order of the simulated VAR.
    #[arg(long)]
    lags: Option<usize>,
    /// diagonal, banded or random.
    #[arg(long)]
    model: Option<String>,
    /// Own-lag coefficient of the diagonal VAR(1).
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Target spectral radius for generated models.
    #[arg(long)]
    rho: Option<f64>,
    /// Nonzeros per row for banded and random models.
    #[arg(long)]
    per_row: Option<usize>,
    /// gaussian, rademacher or t:<dof>.
    #[arg(long)]
    errors: Option<String>,
    /// Add a constant to one series, as series:delta (series from 0).
    #[arg(long, allow_hyphen_values = true)]
    mean_shift: Option<String>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, short)]
    n: Option<usize>,
    #[arg(long, short)]
    t: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    est: EstimationArgs,
    #[command(flatten)]
    dgp: DgpArgs,
    /// size, ks or cov.
    #[arg(long)]
    kind: Option<String>,
    /// subgaussian, heavy_tail, poly_growth or exp_growth.
    #[arg(long)]
    scenario: Option<String>,
    /// Cells as NxT, comma separated; the scenario preset when omitted.
    #[arg(long)]
    grid: Option<String>,
    /// Monte Carlo replications per cell.
    #[arg(long)]
    reps: Option<usize>,
    /// lasso, truth or zero.
    #[arg(long)]
    estimation: Option<String>,
    #[arg(long)]
    oracle_draws: Option<usize>,
    #[arg(long)]
    ks_fits: Option<usize>,
    /// Also write one CSV row per cell and alpha.
    #[arg(long)]
    csv: Option<PathBuf>,
}

type Pairs = Vec<(&'static str, String)>;

fn push<T: ToString>(out: &mut Pairs, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn push_path(out: &mut Pairs, key: &'static str, v: &Option<PathBuf>) {
    if let Some(v) = v {
        out.push((key, v.display().to_string()));
    }
}

impl Common {
    fn pairs(&self, out: &mut Pairs) {
        push_path(out, "output", &self.output);
        push(out, "seed", &self.seed);
        push(out, "threads", &self.threads);
    }
}

impl EstimationArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "selector", &self.selector);
        push(out, "lambda", &self.lambda);
        push(out, "eps", &self.eps);
        push(out, "b_reps", &self.b_reps);
        if !self.alpha.is_empty() {
            let list: Vec<String> = self.alpha.iter().map(f64::to_string).collect();
            out.push(("alpha", list.join(",")));
        }
        push(out, "mode", &self.mode);
    }
}

impl DgpArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "lags", &self.lags);
        push(out, "model", &self.model);
        push(out, "a", &self.a);
        push(out, "rho", &self.rho);
        push(out, "per_row", &self.per_row);
        push(out, "errors", &self.errors);
        push(out, "mean_shift", &self.mean_shift);
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Test(a) | Command::Fit(a) => &a.common,
            Command::Simulate(a) => &a.common,
            Command::Mc(a) => &a.common,
        }
    }

    fn pairs(&self) -> Pairs {
        let mut out = Vec::new();
        self.common().pairs(&mut out);
        match self {
            Command::Test(a) | Command::Fit(a) => {
                a.est.pairs(&mut out);
                push_path(&mut out, "input", &a.input);
                push(&mut out, "lags", &a.lags);
                push(&mut out, "lags_max", &a.lags_max);
                push(&mut out, "diagnostic_lags", &a.diagnostic_lags);
            }
            Command::Simulate(a) => {
                a.dgp.pairs(&mut out);
                push(&mut out, "n", &a.n);
                push(&mut out, "t", &a.t);
                push(&mut out, "burn_in", &a.burn_in);
            }
            Command::Mc(a) => {
                a.est.pairs(&mut out);
                a.dgp.pairs(&mut out);
                push(&mut out, "kind", &a.kind);
                push(&mut out, "scenario", &a.scenario);
                push(&mut out, "grid", &a.grid);
                push(&mut out, "reps", &a.reps);
                push(&mut out, "estimation", &a.estimation);
                push(&mut out, "oracle_draws", &a.oracle_draws);
                push(&mut out, "ks_fits", &a.ks_fits);
                push_path(&mut out, "csv", &a.csv);
            }
        }
        out
    }
}

fn resolve(command: &Command) -> Result<Settings, CliError> {
    let mut s = Settings::with_defaults();
    let file = command
        .common()
        .config
        .clone()
        .or_else(|| std::env::var_os("HDVB_CONFIG").map(PathBuf::from));
    if let Some(path) = file {
        s.apply_file(&path)?;
    }
    s.apply_env(std::env::vars());
    s.apply_cli(command.pairs());
    Ok(s)
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = resolve(&cli.command)?;
    match &cli.command {
        Command::Test(_) => {
            let cfg = RunConfig::from_settings(&settings)?;
            set_threads(cfg.threads)?;
            let report = commands::cmd_test(&cfg, &settings)?;
            commands::write_json(&report, cfg.output.as_deref())
        }
        Command::Fit(_) => {
            let cfg = RunConfig::from_settings(&settings)?;
            set_threads(cfg.threads)?;
            let report = commands::cmd_fit(&cfg, &settings)?;
            commands::write_json(&report, cfg.output.as_deref())
        }
        Command::Simulate(_) => {
            let cfg = SimConfig::from_settings(&settings)?;
            let panel = commands::cmd_simulate(&cfg)?;
            match &cfg.output {
                Some(p) => {
                    let f = std::fs::File::create(p)
                        .map_err(|e| CliError::input(format!("cannot create {}: {e}", p.display())))?;
                    commands::write_panel_csv(&panel, f)
                }
                None => commands::write_panel_csv(&panel, std::io::stdout().lock()),
            }
        }
        Command::Mc(_) => {
            let cfg = McConfig::from_settings(&settings)?;
            set_threads(cfg.threads)?;
            let report = commands::cmd_mc(&cfg)?;
            if let Some(p) = &cfg.csv {
                commands::write_mc_csv(&report, p)?;
            }
            commands::write_json(&report, cfg.output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::input(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
