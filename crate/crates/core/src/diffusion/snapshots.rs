use std::fmt;
use std::str::FromStr;

use super::{CrossSections, DiffusionProblem, EigenSolver, SolverOptions, MU_RANGE};
use crate::error::{Error, Result};
use crate::mesh::{Domain, Field2D, Grid2D, RegionMap, EXTERIOR, REFLECTOR};

/// Field components a snapshot may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Phi1,
    Phi2,
    Power,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Phi1, Component::Phi2, Component::Power];

    pub fn tag(&self) -> &'static str {
        match self {
            Component::Phi1 => "phi1",
            Component::Phi2 => "phi2",
            Component::Power => "power",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi1" | "fast" => Ok(Component::Phi1),
            "phi2" | "thermal" => Ok(Component::Phi2),
            "power" | "p" => Ok(Component::Power),
            other => Err(Error::Config(format!("unknown component {other:?}"))),
        }
    }
}

/// One member of the solution manifold.
///
/// The thermal flux is always present; the analytic manifold stores its
/// single field there and leaves the companions empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub mu: Vec<f64>,
    pub phi2: Field2D,
    pub phi1: Option<Field2D>,
    pub power: Option<Field2D>,
    pub keff: Option<f64>,
}

impl Snapshot {
    pub fn component(&self, c: Component) -> Option<&Field2D> {
        match c {
            Component::Phi2 => Some(&self.phi2),
            Component::Phi1 => self.phi1.as_ref(),
            Component::Power => self.power.as_ref(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.phi2.scale(s);
        for f in [&mut self.phi1, &mut self.power].into_iter().flatten() {
            f.scale(s);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetRole {
    Training,
    Test,
}

impl SetRole {
    pub fn tag(&self) -> &'static str {
        match self {
            SetRole::Training => "training",
            SetRole::Test => "test",
        }
    }
}

impl FromStr for SetRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(SetRole::Training),
            "test" => Ok(SetRole::Test),
            other => Err(Error::Config(format!("unknown set role {other:?}"))),
        }
    }
}

/// Ordered snapshots on one grid with pairwise distinct parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    role: SetRole,
    snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new(role: SetRole, snapshots: Vec<Snapshot>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidInput("empty snapshot set".into()))?;
        let grid = *first.phi2.grid();
        let shape = (first.phi1.is_some(), first.power.is_some());
        for s in &snapshots {
            for f in [Some(&s.phi2), s.phi1.as_ref(), s.power.as_ref()].into_iter().flatten() {
                grid.check_same(f.grid())?;
            }
            if (s.phi1.is_some(), s.power.is_some()) != shape {
                return Err(Error::InvalidInput("snapshots carry different components".into()));
            }
        }
        check_distinct(snapshots.iter().map(|s| s.mu.as_slice()))?;
        Ok(SnapshotSet { role, snapshots })
    }

    pub fn role(&self) -> SetRole {
        self.role
    }

    pub fn grid(&self) -> &Grid2D {
        self.snapshots[0].phi2.grid()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn get(&self, i: usize) -> &Snapshot {
        &self.snapshots[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Snapshot> {
        self.snapshots.iter()
    }

    pub fn has(&self, c: Component) -> bool {
        self.snapshots[0].component(c).is_some()
    }

    /// Components present in every snapshot, in [`Component::ALL`] order.
    pub fn components(&self) -> Vec<Component> {
        Component::ALL.into_iter().filter(|&c| self.has(c)).collect()
    }

    pub fn mus(&self) -> Vec<Vec<f64>> {
        self.snapshots.iter().map(|s| s.mu.clone()).collect()
    }

    pub fn keffs(&self) -> Option<Vec<f64>> {
        self.snapshots.iter().map(|s| s.keff).collect()
    }

    /// Multiplies every field of every snapshot by `s`.
    pub fn scale(&mut self, s: f64) {
        self.snapshots.iter_mut().for_each(|snap| snap.scale(s));
    }
}

impl<'a> IntoIterator for &'a SnapshotSet {
    type Item = &'a Snapshot;
    type IntoIter = std::slice::Iter<'a, Snapshot>;

    fn into_iter(self) -> Self::IntoIter {
        self.snapshots.iter()
    }
}

fn check_distinct<'a>(mus: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut sorted: Vec<&[f64]> = mus.collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateParameter(w[0].to_vec()));
        }
    }
    Ok(())
}

/// Nodal `nuSigma_f` of group `g`: area average over the cells around each node.
fn nodal_nu_sigma_f(xs: &CrossSections, regions: &RegionMap, g: usize) -> Vec<f64> {
    let grid = regions.grid();
    let mut acc = vec![0.0; grid.num_nodes()];
    let mut count = vec![0u8; grid.num_nodes()];
    for cj in 0..grid.ny - 1 {
        for ci in 0..grid.nx - 1 {
            let id = regions.region(ci, cj);
            for k in [
                grid.node(ci, cj),
                grid.node(ci + 1, cj),
                grid.node(ci, cj + 1),
                grid.node(ci + 1, cj + 1),
            ] {
                if id != EXTERIOR {
                    acc[k] += xs.region(id).nu_sigma_f(g);
                }
                count[k] += 1;
            }
        }
    }
    acc.iter().zip(&count).map(|(a, &c)| a / c as f64).collect()
}

pub(crate) fn compute_power_values(
    phi1: &[f64],
    phi2: &[f64],
    xs: &CrossSections,
    regions: &RegionMap,
) -> Vec<f64> {
    let f1 = nodal_nu_sigma_f(xs, regions, 0);
    let f2 = nodal_nu_sigma_f(xs, regions, 1);
    (0..phi1.len())
        .map(|k| f1[k] * phi1[k] + f2[k] * phi2[k])
        .collect()
}

/// Power density `nuSigma_f1 phi1 + nuSigma_f2 phi2`.
///
/// Nodes on a material interface use the area average of the surrounding
/// cells, so the power vanishes in the reflector and drops to the averaged
/// value on the fuel boundary.
pub fn compute_power(
    phi1: &Field2D,
    phi2: &Field2D,
    xs: &CrossSections,
    regions: &RegionMap,
) -> Result<Field2D> {
    regions.grid().check_same(phi1.grid())?;
    regions.grid().check_same(phi2.grid())?;
    Field2D::new(
        *regions.grid(),
        compute_power_values(phi1.values(), phi2.values(), xs, regions),
    )
}

/// Rescales all three fields so that the mean power over the fuel is one.
pub(crate) fn normalize_to_core_power(
    domain: &Domain,
    phi1: &mut Field2D,
    phi2: &mut Field2D,
    power: &mut Field2D,
) -> Result<()> {
    let w = domain.weights_where(|id| (1..REFLECTOR).contains(&id));
    let core_area: f64 = w.iter().sum();
    let total: f64 = w.iter().zip(power.values()).map(|(w, p)| w * p).sum();
    if !(core_area > 0.0 && total > 0.0) {
        return Err(Error::InvalidInput("no fission power in the core".into()));
    }
    let s = core_area / total;
    phi1.scale(s);
    phi2.scale(s);
    power.scale(s);
    Ok(())
}

/// Solves the eigenproblem at every `mu`, in order.
///
/// Each solve starts from the previous mode and reuses the thermal factor,
/// which does not depend on the parameter.
pub fn generate_snapshots(
    base: &DiffusionProblem,
    mus: &[f64],
    opts: &SolverOptions,
    role: SetRole,
) -> Result<SnapshotSet> {
    if mus.is_empty() {
        return Err(Error::InvalidInput("no parameter values".into()));
    }
    if let Some(&mu) = mus.iter().find(|&&m| !(MU_RANGE.0..=MU_RANGE.1).contains(&m)) {
        return Err(Error::InvalidInput(format!(
            "mu = {mu} outside the admissible range [{}, {}]",
            MU_RANGE.0, MU_RANGE.1
        )));
    }
    check_distinct(mus.iter().map(std::slice::from_ref))?;

    let wrap = |mu: f64| move |e: Error| Error::Snapshot {
        mu: vec![mu],
        source: Box::new(e),
    };
    let mut snapshots = Vec::with_capacity(mus.len());
    let mut solver: Option<EigenSolver> = None;
    // last two converged (mu, state) pairs, for a secant predictor
    let mut history: Vec<(f64, Vec<f64>)> = Vec::new();
    for &mu in mus {
        let next = match &solver {
            None => EigenSolver::new(&base.with_mu(mu)?),
            Some(s) => s.with_mu(mu),
        }
        .map_err(wrap(mu))?;
        let guess = predict(&history, mu);
        let sol = next.solve(opts, guess.as_deref()).map_err(wrap(mu))?;
        snapshots.push(next.snapshot(&sol).map_err(wrap(mu))?);
        if history.len() == 2 {
            history.remove(0);
        }
        history.push((mu, sol.state));
        solver = Some(next);
    }
    SnapshotSet::new(role, snapshots)
}

/// Linear extrapolation of the fundamental mode to `mu`, kept only while
/// it stays positive.
fn predict(history: &[(f64, Vec<f64>)], mu: f64) -> Option<Vec<f64>> {
    match history {
        [] => None,
        [(_, x)] => Some(x.clone()),
        [(m0, x0), (m1, x1)] => {
            let t = (mu - m1) / (m1 - m0);
            let guess: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a + t * (a - b)).collect();
            if guess.iter().all(|&v| v > 0.0) {
                Some(guess)
            } else {
                Some(x1.clone())
            }
        }
        _ => unreachable!(),
    }
}

/// `n` equispaced values covering `[a, b]`, endpoints included.
pub fn equispaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Midpoints of `n` equal cells partitioning `[a, b]`.
pub fn cell_midpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::solve_keff;

    #[test]
    fn power_is_zero_in_reflector_only_domain() {
        let grid = Grid2D::unit_square(5).unwrap();
        let regions = RegionMap::uniform(grid, REFLECTOR).unwrap();
        let one = Field2D::from_fn(grid, |_| 1.0);
        let p = compute_power(&one, &one, &CrossSections::iaea2d(2.0), &regions).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_in_fuel_is_thermal_production() {
        let regions = RegionMap::iaea2d_with_spacing(10.0).unwrap();
        let grid = *regions.grid();
        let xs = CrossSections::iaea2d(2.0);
        let phi1 = Field2D::from_fn(grid, |_| 3.0);
        let phi2 = Field2D::from_fn(grid, |_| 1.0);
        let p = compute_power(&phi1, &phi2, &xs, &regions).unwrap();
        // node (1, 1) sits inside fuel, node (16, 1) inside the reflector
        assert_eq!(p.values()[grid.node(1, 1)], 0.135);
        assert_eq!(p.values()[grid.node(16, 1)], 0.0);
        let zero = Field2D::zeros(grid);
        let p = compute_power(&zero, &zero, &xs, &regions).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snapshot_power_matches_definition_and_is_normalized() {
        let p = DiffusionProblem::iaea2d(10.0, 2.0).unwrap();
        let s = solve_keff(&p, &SolverOptions::default()).unwrap();
        let direct = compute_power(s.phi1.as_ref().unwrap(), &s.phi2, &p.xs, p.domain.regions()).unwrap();
        let power = s.power.as_ref().unwrap();
        for (a, b) in power.values().iter().zip(direct.values()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
        let w = p.domain.weights_where(|id| (1..REFLECTOR).contains(&id));
        let mean = w.iter().zip(power.values()).map(|(w, v)| w * v).sum::<f64>() / w.iter().sum::<f64>();
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_parameter_matches_direct_solve() {
        let base = DiffusionProblem::iaea2d(10.0, 1.0).unwrap();
        let opts = SolverOptions::default();
        let set = generate_snapshots(&base, &[2.0], &opts, SetRole::Training).unwrap();
        let direct = solve_keff(&base.with_mu(2.0).unwrap(), &opts).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(0), &direct);
    }

    #[test]
    fn keff_decreases_with_reflector_diffusion() {
        // observed on a direct sweep first: with the zero-flux outer boundary
        // a more diffusive reflector leaks more fast neutrons
        let base = DiffusionProblem::iaea2d(5.0, 1.0).unwrap();
        let mus = equispaced(1.0, 3.0, 12);
        let set = generate_snapshots(&base, &mus, &SolverOptions::default(), SetRole::Training).unwrap();
        let k = set.keffs().unwrap();
        assert!(k.windows(2).all(|w| w[1] < w[0]), "{k:?}");
    }

    #[test]
    fn parameter_errors() {
        let base = DiffusionProblem::iaea2d(10.0, 1.0).unwrap();
        let opts = SolverOptions::default();
        let err = generate_snapshots(&base, &[1.5, 2.0, 1.5], &opts, SetRole::Training).unwrap_err();
        assert!(err.to_string().contains("parameters pairwise distinct"));
        assert!(generate_snapshots(&base, &[], &opts, SetRole::Training).is_err());
        assert!(generate_snapshots(&base, &[0.5], &opts, SetRole::Training).is_err());
    }

    #[test]
    fn solver_failure_names_the_parameter() {
        let base = DiffusionProblem::iaea2d(10.0, 1.0).unwrap();
        let opts = SolverOptions {
            max_iter: 2,
            ..SolverOptions::default()
        };
        match generate_snapshots(&base, &[1.25], &opts, SetRole::Training) {
            Err(Error::Snapshot { mu, source }) => {
                assert_eq!(mu, vec![1.25]);
                assert!(matches!(*source, Error::NotConverged { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sets_reject_mixed_grids() {
        let a = Field2D::zeros(Grid2D::unit_square(4).unwrap());
        let b = Field2D::zeros(Grid2D::unit_square(5).unwrap());
        let snap = |mu: f64, f: &Field2D| Snapshot {
            mu: vec![mu],
            phi2: f.clone(),
            phi1: None,
            power: None,
            keff: None,
        };
        assert!(SnapshotSet::new(SetRole::Test, vec![snap(1.0, &a), snap(2.0, &b)]).is_err());
        let set = SnapshotSet::new(SetRole::Test, vec![snap(1.0, &a), snap(2.0, &a)]).unwrap();
        assert_eq!(set.components(), vec![Component::Phi2]);
    }

    #[test]
    fn grids_of_parameters() {
        assert_eq!(equispaced(1.0, 3.0, 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(cell_midpoints(1.0, 3.0, 2), vec![1.5, 2.5]);
    }
}
