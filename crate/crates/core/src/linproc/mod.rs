//! Linear-process machinery: companion matrices, spectral radius, moving-average
//! inversion, long-run covariance, the max-mean statistic, Gaussian-max
//! reference draws and Kolmogorov distances between samples.

mod distribution;
mod gaussian;
mod matrix;
mod spectral;
mod statistic;
mod vma;

pub use distribution::{kolmogorov_distance, order_index, EmpiricalDistribution};
pub use gaussian::{gaussian_max_sample, psd_factor};
pub use matrix::DenseMatrix;
pub use spectral::{
    build_companion, spectral_radius, spectral_radius_with_cutoff, CompanionMatrix,
    DENSE_EIGEN_CUTOFF,
};
pub use statistic::{extreme_of_means, max_mean_statistic, scaled_mean, StatMode};
pub use vma::{long_run_covariance, long_run_matrix, vma_from_var, VmaSequence, DEFAULT_VMA_TOL};
