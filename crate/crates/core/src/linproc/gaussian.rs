use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{DenseMatrix, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::rng;

/// Relative eigen-tolerance below which pivots are treated as zero.
pub const PSD_TRUNCATION: f64 = 1e-12;
/// Relative magnitude of leftover Schur-complement mass that signals a
/// genuinely indefinite input.
pub const PSD_REJECTION: f64 = 1e-8;

const DRAWS_PER_CHUNK: usize = 4096;

/// Low-rank factor `L` (N×r) with `Σ ≈ L L'` from a diagonally pivoted
/// Cholesky factorization. Pivots below `1e-12·‖Σ‖_max` end the
/// factorization; remaining Schur-complement entries larger than
/// `1e-8·‖Σ‖_max` mean the input is not PSD.
pub fn psd_factor(sigma: &DenseMatrix) -> Result<DenseMatrix> {
    if !sigma.is_square() {
        return Err(Error::Shape(format!(
            "covariance must be square, got {}x{}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let n = sigma.rows();
    let scale = sigma.max_abs();
    if scale == 0.0 {
        return Ok(DenseMatrix::zeros(n, 0));
    }
    let asym = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| (sigma.get(r, c) - sigma.get(c, r)).abs())
        .fold(0.0, f64::max);
    if asym > PSD_REJECTION * scale {
        return Err(Error::Input(format!("covariance is not symmetric (|M - M'| = {asym:e})")));
    }

    let mut work = sigma.clone();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while !remaining.is_empty() {
        let (pos, &p) = remaining
            .iter()
            .enumerate()
            .max_by(|a, b| work.get(*a.1, *a.1).total_cmp(&work.get(*b.1, *b.1)))
            .expect("non-empty");
        let d = work.get(p, p);
        if d <= PSD_TRUNCATION * scale {
            break;
        }
        remaining.swap_remove(pos);
        let root = d.sqrt();
        let mut col = vec![0.0; n];
        col[p] = root;
        for &i in &remaining {
            col[i] = work.get(i, p) / root;
        }
        for &i in &remaining {
            for &j in &remaining {
                let v = work.get(i, j) - col[i] * col[j];
                work.set(i, j, v);
            }
        }
        cols.push(col);
    }
    let leftover = remaining
        .iter()
        .flat_map(|&i| remaining.iter().map(move |&j| (i, j)))
        .map(|(i, j)| work.get(i, j).abs())
        .fold(0.0, f64::max);
    if leftover > PSD_REJECTION * scale {
        return Err(Error::NotPsd {
            magnitude: leftover,
        });
    }
    let r = cols.len();
    let mut factor = DenseMatrix::zeros(n, r);
    for (c, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            factor.set(i, c, v);
        }
    }
    Ok(factor)
}

/// Draws of `‖z‖_∞` with `z ~ N(0, Σ)`. Draws are generated in fixed-size
/// chunks, each from its own stream keyed by `(seed, chunk)`, so the output is
/// identical for any thread count.
pub fn gaussian_max_sample(
    sigma: &DenseMatrix,
    draws: usize,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    if draws == 0 {
        return Err(Error::Config("need at least one draw".into()));
    }
    let factor = psd_factor(sigma)?;
    let n = factor.rows();
    let r = factor.cols();
    let n_chunks = draws.div_ceil(DRAWS_PER_CHUNK);
    let samples: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut stream = rng::stream(rng::mix(seed, chunk as u64));
            let len = DRAWS_PER_CHUNK.min(draws - chunk * DRAWS_PER_CHUNK);
            let mut u = vec![0.0; r];
            let factor = &factor;
            (0..len)
                .map(move |_| {
                    for v in u.iter_mut() {
                        *v = StandardNormal.sample(&mut stream);
                    }
                    (0..n)
                        .map(|i| {
                            factor
                                .row(i)
                                .iter()
                                .zip(&u)
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                                .abs()
                        })
                        .fold(0.0, f64::max)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    EmpiricalDistribution::new(samples)
}
