mod common;

use common::{beveridge_nelson_ratio, check_vma_identity, random_model};
use hdvb_core::linproc::{vma_from_var, DEFAULT_VMA_TOL};

#[test]
fn vma_blocks_equal_companion_powers_and_sum_to_long_run_matrix() {
    for seed in 0..50 {
        check_vma_identity(seed).unwrap();
    }
}

#[test]
fn envelope_dominates_coefficients() {
    for seed in 0..30 {
        let vma = vma_from_var(&random_model(seed), DEFAULT_VMA_TOL, None).unwrap();
        for (j, b) in vma.coeffs.iter().enumerate() {
            assert!(b.inf_norm() <= vma.envelope(j) * (1.0 + 1e-12), "seed {seed}, lag {j}");
        }
        assert!(vma.envelope_lambda < 1.0);
    }
}

/// `Σ_{t=1}^T x_t = 𝓑(1)Σ ε_t − Σ_j B̃_j ε_{T−j} + Σ_j B̃_j ε_{−j}` for a
/// path simulated from zero initial values.
#[test]
fn beveridge_nelson_decomposition() {
    for seed in 0..20 {
        let ratio = beveridge_nelson_ratio(seed).unwrap();
        assert!(ratio <= 10.0, "seed {seed}: residual is {ratio}·tail_bound·max|ε|");
    }
}
