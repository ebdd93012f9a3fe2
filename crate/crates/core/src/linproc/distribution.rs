use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted sample of a scalar statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("empirical distribution needs at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `#{x ≤ y} / n`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.samples.partition_point(|&x| x <= y) as f64 / self.len() as f64
    }

    /// Order statistic `X_(⌈n·p⌉)` (1-based), with `p = 0` giving the minimum.
    pub fn quantile(&self, p: f64) -> f64 {
        let idx = order_index(self.len(), p);
        self.samples[idx - 1]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }
}

/// 1-based index `⌈n·p⌉` clamped to `[1, n]`. Products within `1e-9` of an
/// integer are snapped to it so that e.g. `100 · 0.95` maps to 95 rather than 96.
pub fn order_index(n: usize, p: f64) -> usize {
    let x = n as f64 * p.clamp(0.0, 1.0);
    let rounded = x.round();
    let idx = if (x - rounded).abs() <= 1e-9 * x.max(1.0) {
        rounded
    } else {
        x.ceil()
    };
    (idx as usize).clamp(1, n)
}

/// `sup_y |F_a(y) − F_b(y)|` over the merged jump points of both ECDFs.
pub fn kolmogorov_distance(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xa, xb) = (a.samples(), b.samples());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() || j < xb.len() {
        let y = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i] <= y {
            i += 1;
        }
        while j < xb.len() && xb[j] <= y {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ks_examples() {
        assert_eq!(kolmogorov_distance(&dist(&[1.0, 2.0, 3.0]), &dist(&[3.0, 1.0, 2.0])), 0.0);
        assert_eq!(kolmogorov_distance(&dist(&[0.0]), &dist(&[1.0])), 1.0);
        assert_eq!(kolmogorov_distance(&dist(&[0.0, 1.0]), &dist(&[0.5])), 0.5);
    }

    #[test]
    fn quantile_endpoints() {
        let d = dist(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(d.quantile(0.0), 1.0);
        assert_eq!(d.quantile(1.0), 4.0);
        assert_eq!(d.quantile(0.75), 3.0);
        assert_eq!(d.cdf(2.5), 0.5);
    }

    #[test]
    fn order_index_snaps_float_noise() {
        assert_eq!(order_index(100, 1.0 - 0.05), 95);
        assert_eq!(order_index(499, 0.95), 475);
        assert_eq!(order_index(9, 0.7), 7);
        assert_eq!(order_index(10, 0.95), 10);
        assert_eq!(order_index(10, 0.0), 1);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(EmpiricalDistribution::new(vec![]).is_err());
        assert!(EmpiricalDistribution::new(vec![1.0, f64::NAN]).is_err());
    }

    /// Brute-force sup over a dense set of evaluation points (every sample
    /// and midpoints), independent of the merge walk.
    fn brute_ks(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
        let mut pts: Vec<f64> = a.samples().iter().chain(b.samples()).copied().collect();
        pts.sort_by(f64::total_cmp);
        pts.iter()
            .map(|&y| (a.cdf(y) - b.cdf(y)).abs())
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ks_symmetric_bounded_and_triangle(
            a in prop::collection::vec(-5.0f64..5.0, 1..30),
            b in prop::collection::vec(-5.0f64..5.0, 1..30),
            c in prop::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let (a, b, c) = (dist(&a), dist(&b), dist(&c));
            let ab = kolmogorov_distance(&a, &b);
            prop_assert_eq!(ab, kolmogorov_distance(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!(ab <= kolmogorov_distance(&a, &c) + kolmogorov_distance(&c, &b) + 1e-12);
            prop_assert!((ab - brute_ks(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn samples_sorted(v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let d = dist(&v);
            prop_assert!(d.samples().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(d.quantile(0.0), d.samples()[0]);
            prop_assert_eq!(d.quantile(1.0), *d.samples().last().unwrap());
        }
    }
}
