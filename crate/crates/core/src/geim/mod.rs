//! Generalized empirical interpolation: greedy basis and sensor selection,
//! the interpolation operator, its companion for the unmeasured components,
//! Lebesgue constants, coefficient bounds and the SVD baseline.
//!
//! Sensors are point evaluations of the thermal flux at grid nodes. The
//! basis is normalized so that `q_i(x_i) = 1` and `q_i(x_j) = 0` for `j < i`.

mod errors;
mod lebesgue;
pub(crate) mod metric;
mod svd;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use errors::{error_curves, error_curves_scaled, ErrorCurve, ErrorEvaluator, ErrorScale, ErrorTarget};
pub use lebesgue::lebesgue_constant;
pub use svd::svd_baseline;

use crate::diffusion::{Component, SnapshotSet};
use crate::error::{Error, Result};
use crate::mesh::{Domain, Field2D, NormKind, SensorRegion};
use metric::Metric;

/// Point evaluation of the thermal flux at a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Sensor {
    pub node: usize,
}

impl Sensor {
    #[inline]
    pub(crate) fn read(&self, values: &[f64]) -> f64 {
        values[self.node]
    }
}

/// The value of `f` at the sensor.
pub fn measure(f: &Field2D, s: Sensor) -> Result<f64> {
    let n = f.values().len();
    if s.node >= n {
        return Err(Error::OutOfRange {
            index: s.node,
            max: n - 1,
        });
    }
    Ok(s.read(f.values()))
}

/// How sensors beyond the basis dimension are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorExtension {
    /// Keep running the greedy past `n_max` and take its magic points; if the
    /// training set is exhausted first, fill up with seeded random nodes.
    Greedy,
    /// Seeded uniform draw from the admissible nodes not yet used.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyOptions {
    pub n_max: usize,
    /// Total sensors to store; values below `n_max` mean `n_max`.
    pub m_max: usize,
    pub norm: NormKind,
    pub extension: SensorExtension,
    pub seed: u64,
    /// Stop when the largest training residual falls below this.
    pub tol: f64,
    /// Relative accuracy of the snapshots. Max-norm training errors below
    /// `resolution * eps_0` are not trusted by the coefficient bounds.
    pub resolution: f64,
}

impl GreedyOptions {
    pub fn new(n_max: usize, norm: NormKind) -> Self {
        GreedyOptions {
            n_max,
            m_max: n_max,
            norm,
            extension: SensorExtension::Greedy,
            seed: 0,
            tol: 1e-13,
            resolution: 0.0,
        }
    }

    pub fn with_sensors(mut self, m_max: usize) -> Self {
        self.m_max = m_max;
        self
    }
}

/// A trained GEIM model.
#[derive(Clone, Debug)]
pub struct GeimModel {
    pub(crate) domain: Arc<Domain>,
    pub(crate) norm: NormKind,
    /// Admissible-region label, informational.
    pub case: Option<SensorRegion>,
    /// Factor applied to the snapshots before training.
    pub scale: f64,
    pub(crate) selected: Vec<usize>,
    pub(crate) mus: Vec<Vec<f64>>,
    pub(crate) sensors: Vec<Sensor>,
    /// `basis[c][i]`: nodal values of `q_i` for component `c` (phi1, phi2, power).
    pub(crate) basis: [Option<Vec<Vec<f64>>>; 3],
    /// `eps[n]`: largest training residual after `n` steps, `n = 0..=N`.
    pub(crate) eps: Vec<f64>,
    /// `lebesgue[n - 1] = Lambda_n` in the training norm.
    pub(crate) lebesgue: Vec<f64>,
    /// `eps` and `lebesgue` in the max norm, the dual setting of point
    /// evaluations; these drive the coefficient bounds.
    pub(crate) sup_eps: Vec<f64>,
    pub(crate) sup_lebesgue: Vec<f64>,
    pub(crate) resolution: f64,
    /// Greedy coefficients of every training snapshot.
    pub(crate) train_coeffs: Vec<Vec<f64>>,
}

impl GeimModel {
    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    /// Basis dimension `N`.
    pub fn dim(&self) -> usize {
        self.eps.len() - 1
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    /// Training indices of the selected snapshots, in greedy order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn selected_mus(&self) -> &[Vec<f64>] {
        &self.mus
    }

    pub fn has(&self, c: Component) -> bool {
        self.basis[c as usize].is_some()
    }

    pub fn components(&self) -> Vec<Component> {
        Component::ALL.into_iter().filter(|&c| self.has(c)).collect()
    }

    pub(crate) fn basis_values(&self, c: Component) -> Result<&[Vec<f64>]> {
        self.basis[c as usize]
            .as_deref()
            .ok_or(Error::MissingComponent(c))
    }

    /// Basis function `q_i` (0-based) of component `c`.
    pub fn basis(&self, c: Component, i: usize) -> Result<Field2D> {
        let b = self.basis_values(c)?;
        let v = b.get(i).ok_or(Error::OutOfRange {
            index: i + 1,
            max: b.len(),
        })?;
        Ok(Field2D::from_raw(*self.domain.grid(), v.clone()))
    }

    /// Greedy training errors `eps_0..=eps_N`.
    pub fn training_errors(&self) -> &[f64] {
        &self.eps
    }

    /// `Lambda_1..=Lambda_N` in the training norm.
    pub fn lebesgue_table(&self) -> &[f64] {
        &self.lebesgue
    }

    /// Greedy training errors in the max norm.
    pub fn sup_training_errors(&self) -> &[f64] {
        &self.sup_eps
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// `Lambda_1..=Lambda_N` in the max norm.
    pub fn sup_lebesgue_table(&self) -> &[f64] {
        &self.sup_lebesgue
    }

    pub fn training_coefficients(&self) -> &[Vec<f64>] {
        &self.train_coeffs
    }

    /// Entry `q_i(x_k)`, the design matrix of all stored sensors.
    #[inline]
    pub fn design(&self, k: usize, i: usize) -> f64 {
        self.sensors[k].read(&self.basis[Component::Phi2 as usize].as_ref().unwrap()[i])
    }

    /// Leading `n x n` block of the interpolation matrix, row-major.
    pub fn interpolation_matrix(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|k| (0..n).map(|i| self.design(k, i)).collect()).collect()
    }

    /// Sensor readings of a field at the first `m` sensors.
    pub fn measure_all(&self, values: &[f64], m: usize) -> Vec<f64> {
        self.sensors[..m].iter().map(|s| s.read(values)).collect()
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.dim() {
            return Err(Error::OutOfRange {
                index: n,
                max: self.dim(),
            });
        }
        Ok(())
    }
}

/// Largest absolute thermal-flux value over the given nodes and snapshots.
pub fn max_sensor_value(set: &SnapshotSet, mask: &[usize]) -> f64 {
    set.iter()
        .flat_map(|s| mask.iter().map(move |&k| s.phi2.values()[k].abs()))
        .fold(0.0, f64::max)
}

/// Runs the greedy on the thermal flux of `training`; companions share the
/// coefficients and the normalization scalar.
pub fn greedy_build(
    training: &SnapshotSet,
    domain: Arc<Domain>,
    mask: &[usize],
    opts: &GreedyOptions,
) -> Result<GeimModel> {
    domain.grid().check_same(training.grid())?;
    if mask.is_empty() {
        return Err(Error::NoAdmissibleSensors);
    }
    if let Some(&bad) = mask.iter().find(|&&k| k >= domain.grid().num_nodes() || !domain.contains(k)) {
        return Err(Error::InvalidInput(format!("sensor node {bad} is outside the domain")));
    }
    if opts.n_max == 0 || opts.n_max > training.len() {
        return Err(Error::InvalidInput(format!(
            "n_max = {} must lie in 1..={}",
            opts.n_max,
            training.len()
        )));
    }
    let m_max = opts.m_max.max(opts.n_max);
    if m_max > mask.len() {
        return Err(Error::InvalidInput(format!(
            "{m_max} sensors requested but only {} admissible nodes",
            mask.len()
        )));
    }
    let metric = Metric::new(&domain, opts.norm);
    let comps = training.components();
    let greedy_steps = match opts.extension {
        SensorExtension::Greedy => m_max.min(training.len()),
        SensorExtension::Random => opts.n_max,
    };

    let mut residuals: Vec<Vec<f64>> = training.iter().map(|s| s.phi2.values().to_vec()).collect();
    let mut basis: [Option<Vec<Vec<f64>>>; 3] = [None, None, None];
    for &c in &comps {
        basis[c as usize] = Some(Vec::new());
    }
    let mut coeffs: Vec<Vec<f64>> = vec![Vec::new(); training.len()];
    let mut selected = Vec::new();
    let mut sensors: Vec<Sensor> = Vec::new();
    let mut used = vec![false; domain.grid().num_nodes()];
    let mut eps = Vec::new();
    let mut sup_eps = Vec::new();
    let sup_metric = Metric::new(&domain, NormKind::Linf);
    let sup_max = |res: &[Vec<f64>]| res.iter().map(|r| sup_metric.norm(r)).fold(0.0, f64::max);

    for step in 0..greedy_steps {
        let norms: Vec<f64> = residuals.iter().map(|r| metric.norm(r)).collect();
        let (j, &emax) = argmax(&norms);
        if step <= opts.n_max {
            eps.push(emax);
            sup_eps.push(sup_max(&residuals));
        }
        if emax < opts.tol {
            break;
        }
        let r = &residuals[j];
        let (pos, amax) = mask
            .iter()
            .enumerate()
            .filter(|(_, &k)| !used[k])
            .map(|(p, &k)| (p, r[k].abs()))
            .fold((usize::MAX, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if amax == 0.0 {
            if step < opts.n_max {
                return Err(Error::MaskCannotResolve);
            }
            break;
        }
        let x = mask[pos];
        let scale = r[x];
        let q: Vec<f64> = r.iter().map(|v| v / scale).collect();
        sensors.push(Sensor { node: x });
        used[x] = true;

        if step < opts.n_max {
            // companions: c(mu_n) minus its companion interpolant, same scalar
            let snap = training.get(j);
            for &c in &comps {
                if c == Component::Phi2 {
                    continue;
                }
                let field = snap.component(c).expect("set components are uniform").values();
                let prev = basis[c as usize].as_mut().unwrap();
                let mut res = field.to_vec();
                for (ci, qi) in coeffs[j].iter().zip(prev.iter()) {
                    res.iter_mut().zip(qi).for_each(|(a, b)| *a -= ci * b);
                }
                res.iter_mut().for_each(|v| *v /= scale);
                prev.push(res);
            }
            for (t, rt) in residuals.iter().enumerate() {
                coeffs[t].push(rt[x]);
            }
            basis[Component::Phi2 as usize].as_mut().unwrap().push(q.clone());
            selected.push(j);
        }
        for rt in residuals.iter_mut() {
            let c = rt[x];
            if c != 0.0 {
                rt.iter_mut().zip(&q).for_each(|(a, b)| *a -= c * b);
            }
        }
    }
    let n = selected.len();
    if eps.len() == n {
        let norms: Vec<f64> = residuals.iter().map(|r| metric.norm(r)).collect();
        eps.push(argmax(&norms).1.to_owned());
        sup_eps.push(sup_max(&residuals));
    }
    eps.truncate(n + 1);
    sup_eps.truncate(n + 1);

    if sensors.len() < m_max {
        let mut pool: Vec<usize> = mask.iter().copied().filter(|&k| !used[k]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        pool.shuffle(&mut rng);
        sensors.extend(pool.into_iter().take(m_max - sensors.len()).map(|node| Sensor { node }));
    }
    sensors.truncate(m_max);

    let mut model = GeimModel {
        mus: selected.iter().map(|&j| training.get(j).mu.clone()).collect(),
        domain,
        norm: opts.norm,
        case: None,
        scale: 1.0,
        selected,
        sensors,
        basis,
        eps,
        lebesgue: Vec::new(),
        sup_eps,
        sup_lebesgue: Vec::new(),
        resolution: opts.resolution,
        train_coeffs: coeffs,
    };
    model.sup_lebesgue = lebesgue::lebesgue_table(&model, NormKind::Linf)?;
    model.lebesgue = match opts.norm {
        NormKind::Linf => model.sup_lebesgue.clone(),
        norm => lebesgue::lebesgue_table(&model, norm)?,
    };
    Ok(model)
}

/// First index of the largest value.
fn argmax(v: &[f64]) -> (usize, &f64) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    (best, &v[best])
}

/// Coefficients `c` with `B c = y` for `n = y.len()` by forward substitution.
pub fn interpolate(model: &GeimModel, y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    model.check_n(n)?;
    let mut c = vec![0.0; n];
    for k in 0..n {
        let mut acc = y[k];
        for (i, ci) in c.iter().enumerate().take(k) {
            acc -= model.design(k, i) * ci;
        }
        // unit diagonal
        c[k] = acc;
    }
    Ok(c)
}

/// `sum_i c_i q_i` for the requested component.
pub fn reconstruct(model: &GeimModel, c: &[f64], component: Component) -> Result<Field2D> {
    model.check_n(c.len())?;
    let basis = model.basis_values(component)?;
    let mut out = vec![0.0; model.domain.grid().num_nodes()];
    for (ci, q) in c.iter().zip(basis) {
        if *ci != 0.0 {
            out.iter_mut().zip(q).for_each(|(o, v)| *o += ci * v);
        }
    }
    Ok(Field2D::from_raw(*model.domain.grid(), out))
}

/// `r_n = (1 + Lambda_{n-1}) eps_{n-1}` for `n = 1..=N`, with `Lambda_0 = 0`.
///
/// Both tables are taken in the max norm, where a point evaluation has unit
/// norm and `|c_n(f)| <= ||f - J_{n-1} f||`. Errors are floored at the
/// snapshot resolution.
pub fn coefficient_bounds(model: &GeimModel) -> Vec<f64> {
    let floor = model.resolution * model.sup_eps[0];
    (1..=model.dim())
        .map(|n| {
            let lambda = if n == 1 { 0.0 } else { model.sup_lebesgue[n - 2] };
            (1.0 + lambda) * model.sup_eps[n - 1].max(floor)
        })
        .collect()
}
