//! The analytic manifold `g(x, mu) = |x - mu|^-1` on the unit square, with
//! the pole `mu` kept in a box outside the domain.

use crate::diffusion::{SetRole, Snapshot, SnapshotSet};
use crate::error::{Error, Result};
use crate::mesh::{Domain, Field2D};

/// `((x1 - mu1)^2 + (x2 - mu2)^2)^(-1/2)`
#[inline]
pub fn eval_g(x: [f64; 2], mu: [f64; 2]) -> f64 {
    let (a, b) = (x[0] - mu[0], x[1] - mu[1]);
    (a * a + b * b).sqrt().recip()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticManifoldSpec {
    /// Nodes per axis of the grid on the unit square.
    pub nodes: usize,
    /// Each parameter component ranges over `[mu_lo, mu_hi]`.
    pub mu_lo: f64,
    pub mu_hi: f64,
    /// Parameter values per axis.
    pub mu_per_axis: usize,
}

impl Default for AnalyticManifoldSpec {
    fn default() -> Self {
        AnalyticManifoldSpec {
            nodes: 64,
            mu_lo: -1.0,
            mu_hi: -0.01,
            mu_per_axis: 20,
        }
    }
}

impl AnalyticManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.mu_per_axis == 0 {
            return Err(Error::InvalidInput("analytic grid needs >= 2 nodes and >= 1 parameter".into()));
        }
        if !(self.mu_lo <= self.mu_hi && self.mu_hi < 0.0) {
            return Err(Error::InvalidInput(format!(
                "parameter box [{}, {}] must lie strictly below the unit square",
                self.mu_lo, self.mu_hi
            )));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        self.validate()?;
        Domain::unit_square(self.nodes)
    }

    /// Training parameters: the uniform tensor grid, first component fastest.
    pub fn training_mus(&self) -> Vec<[f64; 2]> {
        tensor(&axis(self.mu_lo, self.mu_hi, self.mu_per_axis))
    }

    /// Test parameters: centers of the training grid cells.
    pub fn test_mus(&self) -> Vec<[f64; 2]> {
        let a = axis(self.mu_lo, self.mu_hi, self.mu_per_axis);
        let mid: Vec<f64> = a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        tensor(&mid)
    }

    pub fn generate(&self) -> Result<SnapshotSet> {
        self.generate_at(&self.training_mus(), SetRole::Training)
    }

    pub fn generate_test(&self) -> Result<SnapshotSet> {
        self.generate_at(&self.test_mus(), SetRole::Test)
    }

    pub fn generate_at(&self, mus: &[[f64; 2]], role: SetRole) -> Result<SnapshotSet> {
        let domain = self.domain()?;
        let grid = *domain.grid();
        let snapshots = mus
            .iter()
            .map(|&mu| Snapshot {
                mu: mu.to_vec(),
                phi2: Field2D::from_fn(grid, |x| eval_g(x, mu)),
                phi1: None,
                power: None,
                keff: None,
            })
            .collect();
        SnapshotSet::new(role, snapshots)
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn tensor(axis: &[f64]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(axis.len() * axis.len());
    for &b in axis {
        for &a in axis {
            out.push([a, b]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn known_values() {
        assert_relative_eq!(eval_g([0.5, 0.5], [-1.0, -1.0]), 0.471_404_520_791_031_7, max_relative = 1e-15);
        assert_relative_eq!(eval_g([0.0, 0.0], [-0.01, -0.01]), 70.710_678_118_654_76, max_relative = 1e-14);
    }

    #[test]
    fn single_parameter_is_pointwise_g() {
        let spec = AnalyticManifoldSpec {
            mu_per_axis: 1,
            ..Default::default()
        };
        let set = spec.generate().unwrap();
        assert_eq!(set.len(), 1);
        let grid = *set.grid();
        for (k, &v) in set.get(0).phi2.values().iter().enumerate() {
            assert_eq!(v, eval_g(grid.position(k), [-1.0, -1.0]));
        }
    }

    #[test]
    fn default_manifold_has_400_positive_bounded_snapshots() {
        let spec = AnalyticManifoldSpec::default();
        let set = spec.generate().unwrap();
        assert_eq!(set.len(), 400);
        assert!(set.get(0).phi1.is_none() && set.get(0).power.is_none());
        // brute-force bound: largest value over the parameter box on a fine
        // grid, attained at the origin corner of the domain
        let fine = 200;
        let mut bound = 0.0_f64;
        for i in 0..=fine {
            for j in 0..=fine {
                let t = |k: usize| spec.mu_lo + (spec.mu_hi - spec.mu_lo) * k as f64 / fine as f64;
                bound = bound.max(eval_g([0.0, 0.0], [t(i), t(j)]));
            }
        }
        for s in &set {
            assert!(s.phi2.values().iter().all(|&v| v > 0.0 && v <= bound));
        }
        assert_eq!(spec.test_mus().len(), 361);
    }

    #[test]
    fn parameter_box_must_avoid_the_domain() {
        let spec = AnalyticManifoldSpec {
            mu_hi: 0.5,
            ..Default::default()
        };
        assert!(spec.generate().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(a in 0.0..1.0f64, b in 0.0..1.0f64, m in -1.0..-0.01f64) {
            prop_assert_eq!(eval_g([a, b], [m, m]), eval_g([b, a], [m, m]));
        }

        #[test]
        fn decreasing_along_rays(
            m1 in -1.0..-0.01f64, m2 in -1.0..-0.01f64,
            theta in 0.0..std::f64::consts::FRAC_PI_2, r in 0.01..1.0f64,
        ) {
            let mu = [m1, m2];
            let dir = [theta.cos(), theta.sin()];
            let at = |s: f64| eval_g([m1 + s * dir[0], m2 + s * dir[1]], mu);
            prop_assert!(at(r) > at(r * 1.1));
        }
    }
}
