//! Simultaneous inference on the means of high-dimensional time series.
//!
//! A sparse VAR is fitted equation by equation with the lasso, shrunk back to
//! stationarity if needed, and used to drive a multiplier bootstrap of the
//! max-mean statistic `max_j |√T·x̄_j|`. The bootstrap distribution gives a
//! global test and a stepdown procedure that identifies the series with
//! nonzero mean.
//!
//! ```
//! use hdvb_core::prelude::*;
//!
//! let truth = VarModel::new(vec![DenseMatrix::scaled_identity(3, 0.5)]).unwrap();
//! let sim = simulate_panel(&truth, 100, &ErrorSpec::gaussian(), 50, 1).unwrap();
//! let fit = fit_sparse_var(&sim.panel, 1, &FitConfig::default()).unwrap();
//! let model = stationarity_correct(&fit.model, 0.01).unwrap();
//! let cfg = BootstrapConfig { b_reps: 199, seed: 7, ..Default::default() };
//! let run = run_bootstrap(&model, &fit.residuals, &sim.panel, &cfg).unwrap();
//! let test = global_test(&sim.panel, &run, 0.05, StatMode::AbsMax).unwrap();
//! assert!(test.p_value > 0.0 && test.p_value <= 1.0);
//! ```

pub mod bootstrap;
pub mod dgp;
pub mod error;
pub mod inference;
pub mod lasso;
pub mod linproc;
pub mod mc;
pub mod rng;
pub mod var_fit;

pub use error::{Error, ErrorClass, Result};

pub mod prelude {
    pub use crate::bootstrap::{bootstrap_quantile, bootstrap_replicate, run_bootstrap, BootstrapConfig, BootstrapRun};
    pub use crate::dgp::{
        generate_var_model, simulate_panel, ErrorFamily, ErrorSpec, SimulatedPanel, SparsePattern, TimeSeriesPanel,
    };
    pub use crate::error::{Error, ErrorClass, Result};
    pub use crate::inference::{global_test, stepdown, GlobalTest, StepdownResult};
    pub use crate::lasso::{lasso_fit, LassoFit, LassoProblem, SolverConfig};
    pub use crate::linproc::{
        build_companion, long_run_covariance, long_run_matrix, max_mean_statistic, vma_from_var, DenseMatrix,
        EmpiricalDistribution, StatMode,
    };
    pub use crate::mc::{ExperimentKind, ExperimentReport, ExperimentSpec};
    pub use crate::var_fit::{fit_sparse_var, stationarity_correct, FitConfig, FitReport, Selector, VarModel};
}
