//! Shared fixtures for the benchmarks.

use hdvb_core::dgp::{generate_var_model, simulate_panel, ErrorSpec, SimulatedPanel, SparsePattern};
use hdvb_core::var_fit::VarModel;

/// Banded VAR(`k`) with radius 0.6 and a simulated path of length `t`.
pub fn fixture(n: usize, k: usize, t: usize) -> (VarModel, SimulatedPanel) {
    let model = generate_var_model(n, k, &SparsePattern::banded(3), 0.6, 42).expect("fixture model");
    let sim = simulate_panel(&model, t, &ErrorSpec::gaussian(), 100, 7).expect("fixture path");
    (model, sim)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_shapes() {
        let (m, sim) = super::fixture(6, 2, 40);
        assert_eq!((m.n(), m.k()), (6, 2));
        assert_eq!((sim.panel.t_obs(), sim.panel.k_presample()), (40, 2));
    }
}
