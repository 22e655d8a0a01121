//! Constrained stabilized GEIM: least squares over the coefficient cone
//! `K_n(alpha) = { |c_i| <= alpha r_i }` using `m >= n` sensors.

mod bvls;

use nalgebra::{DMatrix, DVector};

pub use bvls::{bvls_solve, BvlsProblem, BvlsSolution};

use crate::diffusion::Component;
use crate::error::{Error, Result};
use crate::geim::{coefficient_bounds, reconstruct, GeimModel};
use crate::mesh::Field2D;

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const BVLS_TOL: f64 = 1e-10;

/// Box bounds `|c_i| <= alpha r_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientCone {
    alpha: f64,
    bounds: Vec<f64>,
}

impl CoefficientCone {
    pub fn new(model: &GeimModel, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidInput(format!("cone factor alpha = {alpha} must be positive")));
        }
        let bounds: Vec<f64> = coefficient_bounds(model).into_iter().map(|r| alpha * r).collect();
        if let Some(i) = bounds.iter().position(|b| !(*b > 0.0)) {
            return Err(Error::InvalidInput(format!("coefficient bound {} is not positive", i + 1)));
        }
        Ok(CoefficientCone { alpha, bounds })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Whether `|c_i| <= b_i` for every given coefficient.
    pub fn contains(&self, c: &[f64]) -> bool {
        c.len() <= self.bounds.len() && c.iter().zip(&self.bounds).all(|(c, b)| c.abs() <= *b)
    }
}

/// Readings at the first `m` sensors of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub repetition: u64,
}

impl MeasurementVector {
    /// Noise-free readings.
    pub fn exact(values: Vec<f64>) -> Self {
        MeasurementVector {
            values,
            sigma: 0.0,
            seed: 0,
            repetition: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Design matrix `A_ki = q_i(x_k)` for `k < m`, `i < n`, with a zero target
/// and an unbounded box.
pub fn build_design(model: &GeimModel, n: usize, m: usize) -> Result<BvlsProblem> {
    if n == 0 || n > model.dim() {
        return Err(Error::OutOfRange {
            index: n,
            max: model.dim(),
        });
    }
    if m < n || m > model.num_sensors() {
        return Err(Error::InvalidInput(format!(
            "m = {m} must lie in {n}..={}",
            model.num_sensors()
        )));
    }
    let a = DMatrix::from_fn(m, n, |k, i| model.design(k, i));
    BvlsProblem::new(a, DVector::zeros(m), vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
}

/// Reusable CS-GEIM solver at fixed `(n, m)`.
#[derive(Clone, Debug)]
pub struct CsGeim {
    problem: BvlsProblem,
    /// `(A'A)^-1 A'`, for the common case of an interior optimum.
    pinv: DMatrix<f64>,
}

impl CsGeim {
    pub fn new(model: &GeimModel, n: usize, m: usize, cone: &CoefficientCone) -> Result<Self> {
        let mut problem = build_design(model, n, m)?;
        if cone.dim() < n {
            return Err(Error::OutOfRange {
                index: n,
                max: cone.dim(),
            });
        }
        problem.upper = cone.bounds()[..n].to_vec();
        problem.lower = problem.upper.iter().map(|b| -b).collect();
        let qr = problem.a.clone().qr();
        let r = qr.r();
        let pinv = r
            .solve_upper_triangular(&qr.q().transpose())
            .filter(|p| p.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::LinearSolver("design matrix is rank deficient".into()))?;
        Ok(CsGeim { problem, pinv })
    }

    pub fn n(&self) -> usize {
        self.problem.num_vars()
    }

    pub fn m(&self) -> usize {
        self.problem.num_rows()
    }

    /// Coefficients from the first `m` entries of `y`.
    pub fn solve(&self, y: &[f64]) -> Result<BvlsSolution> {
        let m = self.m();
        if y.len() < m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: y.len(),
            });
        }
        let target = DVector::from_column_slice(&y[..m]);
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite measurement".into()));
        }
        let p = &self.problem;
        let z = &self.pinv * &target;
        // strict interior: the unconstrained optimum is the answer
        let inside = (0..self.n()).all(|i| z[i].abs() < p.upper[i] * (1.0 - 1e-12));
        if inside {
            let res = &p.a * &z - &target;
            let grad = p.a.tr_mul(&res);
            return Ok(BvlsSolution {
                x: z.iter().copied().collect(),
                objective: res.norm_squared(),
                pivots: 0,
                kkt: grad.amax(),
            });
        }
        let mut p = p.clone();
        p.target = target;
        bvls_solve(&p, BVLS_TOL)
    }
}

#[derive(Clone, Debug)]
pub struct CsReconstruction {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub fields: Vec<(Component, Field2D)>,
}

impl CsReconstruction {
    pub fn field(&self, c: Component) -> Option<&Field2D> {
        self.fields.iter().find(|(k, _)| *k == c).map(|(_, f)| f)
    }
}

/// Cone-constrained least squares at dimension `n` with all `meas.len()`
/// readings, expanded in the requested bases.
pub fn cs_reconstruct(
    model: &GeimModel,
    meas: &MeasurementVector,
    n: usize,
    cone: &CoefficientCone,
    components: &[Component],
) -> Result<CsReconstruction> {
    if meas.len() < n {
        return Err(Error::InvalidInput(format!(
            "{} measurements cannot determine {n} coefficients",
            meas.len()
        )));
    }
    let solver = CsGeim::new(model, n, meas.len(), cone)?;
    let sol = solver.solve(&meas.values)?;
    debug_assert!(cone.contains(&sol.x));
    let fields = components
        .iter()
        .map(|&c| Ok((c, reconstruct(model, &sol.x, c)?)))
        .collect::<Result<_>>()?;
    Ok(CsReconstruction {
        coefficients: sol.x,
        objective: sol.objective,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::analytic::AnalyticManifoldSpec;
    use crate::diffusion::SnapshotSet;
    use crate::geim::{greedy_build, interpolate, GreedyOptions};
    use crate::mesh::{Domain, NormKind};

    fn setup(n: usize, m: usize) -> (GeimModel, SnapshotSet) {
        let spec = AnalyticManifoldSpec {
            nodes: 17,
            mu_per_axis: 6,
            ..Default::default()
        };
        let domain = Arc::new(spec.domain().unwrap());
        let set = spec.generate().unwrap();
        let mask: Vec<usize> = (0..domain.grid().num_nodes()).filter(|&k| domain.contains(k)).collect();
        let opts = GreedyOptions::new(n, NormKind::L2).with_sensors(m);
        (greedy_build(&set, domain, &mask, &opts).unwrap(), set)
    }

    #[test]
    fn design_top_block_is_b() {
        let (model, _) = setup(6, 15);
        let p = build_design(&model, 6, 15).unwrap();
        assert_eq!((p.num_rows(), p.num_vars()), (15, 6));
        for i in 0..6 {
            assert_eq!(p.a[(i, i)], 1.0);
            for k in 0..15 {
                let q = model.basis(Component::Phi2, i).unwrap();
                assert_eq!(p.a[(k, i)], crate::geim::measure(&q, model.sensors()[k]).unwrap());
            }
        }
        assert!(build_design(&model, 6, 16).is_err());
        assert!(build_design(&model, 6, 5).is_err());
    }

    #[test]
    fn square_noiseless_matches_interpolation() {
        let (model, set) = setup(8, 8);
        let cone = CoefficientCone::new(&model, DEFAULT_ALPHA).unwrap();
        for s in set.iter().step_by(5) {
            let y = model.measure_all(s.phi2.values(), 8);
            let c = interpolate(&model, &y).unwrap();
            if !cone.contains(&c) {
                continue;
            }
            let cs = cs_reconstruct(&model, &MeasurementVector::exact(y), 8, &cone, &[Component::Phi2]).unwrap();
            for (a, b) in cs.coefficients.iter().zip(&c) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn extra_rows_do_not_hurt_noiseless_training_snapshots() {
        let (model, set) = setup(8, 24);
        let cone = CoefficientCone::new(&model, DEFAULT_ALPHA).unwrap();
        let domain: &Domain = model.domain();
        for s in &set {
            let f = s.phi2.values();
            for n in [3, 6, 8] {
                let c = interpolate(&model, &model.measure_all(f, n)).unwrap();
                let plain = reconstruct(&model, &c, Component::Phi2).unwrap();
                let e_plain = domain.norm_values(&plain.sub(&s.phi2).unwrap().into_values(), NormKind::L2);
                let meas = MeasurementVector::exact(model.measure_all(f, 24));
                let cs = cs_reconstruct(&model, &meas, n, &cone, &[Component::Phi2]).unwrap();
                assert!(cone.contains(&cs.coefficients));
                let e_cs = domain.norm_values(
                    &cs.field(Component::Phi2).unwrap().sub(&s.phi2).unwrap().into_values(),
                    NormKind::L2,
                );
                // least squares over the extra rows may trade sensor fit for
                // field error only at the level of the discarded tail
                assert!(e_cs <= 3.0 * e_plain + 1e-10, "n = {n}: {e_cs} vs {e_plain}");
            }
        }
    }

    #[test]
    fn outputs_stay_in_the_cone() {
        let (model, set) = setup(10, 30);
        let cone = CoefficientCone::new(&model, DEFAULT_ALPHA).unwrap();
        let solver = CsGeim::new(&model, 10, 30, &cone).unwrap();
        for (j, s) in set.iter().enumerate() {
            let y: Vec<f64> = model
                .measure_all(s.phi2.values(), 30)
                .iter()
                .enumerate()
                .map(|(k, v)| v + 0.05 * ((k * 7 + j * 13) % 11) as f64 - 0.25)
                .collect();
            let sol = solver.solve(&y).unwrap();
            assert!(cone.contains(&sol.x));
            assert!(sol.kkt <= 1e-8 * (1.0 + sol.objective));
        }
    }

    #[test]
    fn interior_shortcut_agrees_with_the_active_set_solver() {
        let (model, set) = setup(6, 18);
        let cone = CoefficientCone::new(&model, 50.0).unwrap();
        let solver = CsGeim::new(&model, 6, 18, &cone).unwrap();
        let mut checked = 0;
        for s in set.iter().step_by(3) {
            let y = model.measure_all(s.phi2.values(), 18);
            let fast = solver.solve(&y).unwrap();
            let mut p = build_design(&model, 6, 18).unwrap();
            p.upper = cone.bounds()[..6].to_vec();
            p.lower = p.upper.iter().map(|b| -b).collect();
            p.target = DVector::from_column_slice(&y);
            let slow = bvls_solve(&p, BVLS_TOL).unwrap();
            checked += usize::from(fast.pivots == 0);
            for (a, b) in fast.x.iter().zip(&slow.x) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "{a} vs {b}");
            }
            assert!((fast.objective - slow.objective).abs() <= 1e-9 * slow.objective.max(1e-20));
        }
        assert!(checked > 0);
    }

    #[test]
    fn cone_checks() {
        let (model, _) = setup(5, 5);
        assert!(CoefficientCone::new(&model, 0.0).is_err());
        let cone = CoefficientCone::new(&model, 2.0).unwrap();
        let r = coefficient_bounds(&model);
        for (b, r) in cone.bounds().iter().zip(&r) {
            assert_eq!(*b, 2.0 * r);
        }
        assert!(cone.contains(&[0.0; 5]));
        assert!(!cone.contains(&[3.0 * r[0]]));
        let meas = MeasurementVector::exact(vec![1.0; 4]);
        assert!(cs_reconstruct(&model, &meas, 5, &cone, &[]).is_err());
    }
}
