//! Fission-source power iteration with Arnoldi restarts.
//!
//! Every outer step applies `T = A^-1 F` (two SPD solves). Plain power
//! iteration converges like the dominance ratio, which is close to one for the
//! IAEA core, so iterates are grouped in Krylov cycles: the cycle's Ritz
//! vector replaces the current iterate before the next power step. Stopping
//! is decided on consecutive power iterates only.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::snapshots::{compute_power_values, normalize_to_core_power};
use super::{DiffusionProblem, Operators, Snapshot};
use crate::error::{Error, Result};
use crate::mesh::Field2D;
use crate::sparse::SpdFactor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop when consecutive eigenvalue estimates differ by at most this.
    pub tol_k: f64,
    /// ... and the relative max-norm change of the fission source is at most this.
    pub tol_flux: f64,
    /// Cap on operator applications.
    pub max_iter: usize,
    /// Also required at convergence: `||A phi - F phi / k|| / ||F phi||`.
    pub tol_residual: f64,
    /// Krylov cycle length; `0` gives plain power iteration.
    pub krylov_dim: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_k: 1e-8,
            tol_flux: 1e-7,
            max_iter: 5000,
            tol_residual: 1e-8,
            krylov_dim: 16,
        }
    }
}

/// Converged fundamental mode, unnormalized, on the full grid.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub keff: f64,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    /// Operator applications used.
    pub iterations: usize,
    /// `||A phi - F phi / k|| / ||F phi||` at the returned mode.
    pub residual: f64,
    /// Unknown-space iterate, reusable as a warm start.
    pub(crate) state: Vec<f64>,
}

/// Assembled and factorized operators of one problem.
pub struct EigenSolver {
    problem: DiffusionProblem,
    ops: Operators,
    factors: [Arc<SpdFactor>; 2],
}

impl EigenSolver {
    pub fn new(problem: &DiffusionProblem) -> Result<Self> {
        let ops = Operators::assemble(problem)?;
        let factors = [
            Arc::new(SpdFactor::new(&ops.loss[0])?),
            Arc::new(SpdFactor::new(&ops.loss[1])?),
        ];
        Ok(EigenSolver {
            problem: problem.clone(),
            ops,
            factors,
        })
    }

    /// Solver for the same problem at another parameter value. Only the
    /// fast-group operator depends on it, so the thermal factor is shared.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let problem = self.problem.with_mu(mu)?;
        let ops = Operators::assemble(&problem)?;
        let fast = Arc::new(self.factors[0].refactor(&ops.loss[0])?);
        Ok(EigenSolver {
            problem,
            ops,
            factors: [fast, self.factors[1].clone()],
        })
    }

    pub fn problem(&self) -> &DiffusionProblem {
        &self.problem
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    /// `out = A^-1 F x` on stacked `[phi1; phi2]` unknown vectors.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ops.num_unknowns();
        let (x1, x2) = x.split_at(n);
        let (o1, o2) = out.split_at_mut(n);
        let f = &self.ops.fission;
        for u in 0..n {
            o1[u] = f[0][0][u] * x1[u] + f[0][1][u] * x2[u];
            o2[u] = f[1][0][u] * x1[u] + f[1][1][u] * x2[u];
        }
        self.factors[0].solve_in_place(o1);
        for u in 0..n {
            o2[u] += self.ops.scatter[u] * o1[u];
        }
        self.factors[1].solve_in_place(o2);
    }

    /// Fission neutron production density per unknown.
    fn source(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ops.num_unknowns();
        let p = &self.ops.production;
        for u in 0..n {
            out[u] = p[0][u] * x[u] + p[1][u] * x[n + u];
        }
    }

    fn total_production(&self, x: &[f64]) -> f64 {
        let n = self.ops.num_unknowns();
        let p = &self.ops.production;
        (0..n).map(|u| p[0][u] * x[u] + p[1][u] * x[n + u]).sum()
    }

    pub fn solve(&self, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<EigenSolution> {
        if !(opts.tol_k > 0.0 && opts.tol_flux > 0.0 && opts.tol_residual > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        let n = self.ops.num_unknowns();
        let mut x = match initial {
            Some(v) if v.len() == 2 * n => v.to_vec(),
            Some(v) => {
                return Err(Error::LengthMismatch {
                    expected: 2 * n,
                    got: v.len(),
                })
            }
            None => vec![1.0; 2 * n],
        };
        let p0 = self.total_production(&x);
        if !(p0 > 0.0) {
            return Err(Error::InvalidInput("initial guess produces no fission source".into()));
        }
        x.iter_mut().for_each(|v| *v /= p0);

        let mut k = 1.0;
        let mut applications = 0usize;
        let mut tx = vec![0.0; 2 * n];
        let mut src_old = vec![0.0; n];
        let mut src_new = vec![0.0; n];
        // power steps before the next Krylov cycle; a cold start first sheds
        // the high-frequency content of the flat guess
        let mut wait: usize = if initial.is_some() { 0 } else { 2 };
        let mut residual;

        loop {
            let budget = opts.max_iter.saturating_sub(applications + 1);
            let m = opts.krylov_dim.min(budget);
            if wait == 0 && m > 1 {
                if let Some(ritz) = self.arnoldi_cycle(&x, m) {
                    applications += ritz.applications;
                    let p = self.total_production(&ritz.vector);
                    // the Ritz vector comes with an arbitrary sign
                    if p != 0.0 && p.is_finite() {
                        x = ritz.vector;
                        x.iter_mut().for_each(|v| *v /= p);
                        k = ritz.value;
                    }
                }
                wait = 1;
            }

            // power step: x <- T x / k with the production of x kept at 1
            self.apply(&x, &mut tx);
            applications += 1;
            wait = wait.saturating_sub(1);
            let k_new = self.total_production(&tx);
            self.source(&x, &mut src_old);
            tx.iter_mut().for_each(|v| *v /= k_new);
            self.source(&tx, &mut src_new);
            let smax = src_new.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let dsrc = src_new
                .iter()
                .zip(&src_old)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
                / smax;
            let dk = (k_new - k).abs();
            k = k_new;
            std::mem::swap(&mut x, &mut tx);

            if dk <= opts.tol_k && dsrc <= opts.tol_flux {
                residual = self.eigen_residual(&x, k);
                if residual <= opts.tol_residual {
                    break;
                }
            }
            if applications >= opts.max_iter {
                return Err(Error::NotConverged {
                    iterations: applications,
                    dk,
                    source_change: dsrc,
                });
            }
        }

        let (phi1, phi2) = x.split_at(n);
        for (u, &v) in phi1.iter().chain(phi2).enumerate() {
            if v <= 0.0 {
                return Err(Error::NegativeFlux {
                    node: self.ops.unknown_nodes()[u % n],
                    value: v,
                });
            }
        }
        Ok(EigenSolution {
            keff: k,
            phi1: self.ops.to_grid(phi1),
            phi2: self.ops.to_grid(phi2),
            iterations: applications,
            residual,
            state: x,
        })
    }

    /// `||A phi - F phi / k||_2 / ||F phi||_2`
    pub fn eigen_residual(&self, x: &[f64], k: f64) -> f64 {
        let n = self.ops.num_unknowns();
        let (x1, x2) = x.split_at(n);
        let f = &self.ops.fission;
        let mut a1 = vec![0.0; n];
        let mut a2 = vec![0.0; n];
        self.ops.loss[0].mul_vec(x1, &mut a1);
        self.ops.loss[1].mul_vec(x2, &mut a2);
        let (mut num, mut den) = (0.0, 0.0);
        for u in 0..n {
            let f1 = f[0][0][u] * x1[u] + f[0][1][u] * x2[u];
            let f2 = f[1][0][u] * x1[u] + f[1][1][u] * x2[u];
            let r1 = a1[u] - f1 / k;
            let r2 = a2[u] - self.ops.scatter[u] * x1[u] - f2 / k;
            num += r1 * r1 + r2 * r2;
            den += f1 * f1 + f2 * f2;
        }
        (num / den).sqrt()
    }

    /// One Arnoldi cycle of length `m` started at `x`; returns the dominant
    /// Ritz vector, or `None` when the Hessenberg matrix has no usable real
    /// dominant eigenvalue.
    fn arnoldi_cycle(&self, x: &[f64], m: usize) -> Option<RitzPair> {
        let len = x.len();
        let norm = dot(x, x).sqrt();
        let mut basis: Vec<Vec<f64>> = vec![x.iter().map(|v| v / norm).collect()];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut applications = 0;
        let mut dim = m;
        for j in 0..m {
            let mut w = vec![0.0; len];
            self.apply(&basis[j], &mut w);
            applications += 1;
            let wnorm0 = dot(&w, &w).sqrt();
            // classical Gram-Schmidt, twice
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[(i, j)] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let wn = dot(&w, &w).sqrt();
            h[(j + 1, j)] = wn;
            if wn <= 1e-13 * wnorm0 {
                dim = j + 1;
                break;
            }
            w.iter_mut().for_each(|v| *v /= wn);
            basis.push(w);
        }
        let hm = h.view((0, 0), (dim, dim)).into_owned();
        let eig = hm.clone().complex_eigenvalues();
        let theta = eig
            .iter()
            .filter(|z| z.im.abs() <= 1e-10 * z.re.abs())
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let dominant = eig.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        if !(theta > 0.0) || theta < dominant * (1.0 - 1e-10) {
            return None;
        }
        // inverse iteration on the small Hessenberg matrix
        let shifted = &hm - DMatrix::<f64>::identity(dim, dim) * (theta * (1.0 + 1e-12));
        let lu = shifted.lu();
        let mut y = nalgebra::DVector::<f64>::from_element(dim, 1.0);
        for _ in 0..3 {
            y = lu.solve(&y)?;
            let yn = y.norm();
            if !(yn.is_finite() && yn > 0.0) {
                return None;
            }
            y /= yn;
        }
        let mut vector = vec![0.0; len];
        for (i, v) in basis.iter().take(dim).enumerate() {
            axpy(y[i], v, &mut vector);
        }
        Some(RitzPair {
            value: theta,
            vector,
            applications,
        })
    }

    /// Normalized snapshot: mean power over the fuel equal to one.
    pub fn snapshot(&self, sol: &EigenSolution) -> Result<Snapshot> {
        let domain = &self.problem.domain;
        let grid = *domain.grid();
        let power = compute_power_values(&sol.phi1, &sol.phi2, &self.problem.xs, domain.regions());
        let mut phi1 = Field2D::new(grid, sol.phi1.clone())?;
        let mut phi2 = Field2D::new(grid, sol.phi2.clone())?;
        let mut power = Field2D::new(grid, power)?;
        normalize_to_core_power(domain, &mut phi1, &mut phi2, &mut power)?;
        Ok(Snapshot {
            mu: vec![self.problem.mu()],
            phi1: Some(phi1),
            phi2,
            power: Some(power),
            keff: Some(sol.keff),
        })
    }
}

struct RitzPair {
    value: f64,
    vector: Vec<f64>,
    applications: usize,
}

/// Solves the k-eigenvalue problem and returns the normalized snapshot.
pub fn solve_keff(problem: &DiffusionProblem, opts: &SolverOptions) -> Result<Snapshot> {
    let solver = EigenSolver::new(problem)?;
    let sol = solver.solve(opts, None)?;
    solver.snapshot(&sol)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::diffusion::{BoundaryCondition, CrossSections, MaterialXs};
    use crate::mesh::{Domain, Grid2D, RegionMap, Symmetry};

    fn infinite_medium(xs: MaterialXs) -> DiffusionProblem {
        let grid = Grid2D::new(12, 9, 3.0, 5.0, [0.0, 0.0]).unwrap();
        let domain = Domain::new(RegionMap::uniform(grid, 1).unwrap(), Symmetry::NONE).unwrap();
        DiffusionProblem::new(
            Arc::new(domain),
            CrossSections::uniform(xs),
            BoundaryCondition::Reflective,
        )
        .unwrap()
    }

    fn fuel1_no_leakage() -> MaterialXs {
        let mut xs = CrossSections::iaea2d(2.0).regions[0];
        xs.bz2 = 0.0;
        xs
    }

    #[test]
    fn infinite_medium_eigenvalue() {
        let p = infinite_medium(fuel1_no_leakage());
        let snap = solve_keff(&p, &SolverOptions::default()).unwrap();
        assert_relative_eq!(snap.keff.unwrap(), 1.125, epsilon = 1e-6);
    }

    #[test]
    fn plain_power_iteration_agrees() {
        let p = DiffusionProblem::iaea2d(10.0, 2.0).unwrap();
        let solver = EigenSolver::new(&p).unwrap();
        let opts = SolverOptions::default();
        let fast = solver.solve(&opts, None).unwrap();
        let plain = solver
            .solve(&SolverOptions { krylov_dim: 0, ..opts }, None)
            .unwrap();
        assert!(fast.iterations < plain.iterations);
        assert_relative_eq!(fast.keff, plain.keff, epsilon = 1e-7);
    }

    #[test]
    fn fission_scaling_scales_keff() {
        let p = DiffusionProblem::iaea2d(10.0, 2.0).unwrap();
        let mut scaled = p.clone();
        for xs in scaled.xs.regions.iter_mut() {
            xs.nu_sigma_f1 *= 1.7;
            xs.nu_sigma_f2 *= 1.7;
        }
        let opts = SolverOptions {
            tol_k: 1e-12,
            tol_flux: 1e-11,
            ..SolverOptions::default()
        };
        let a = solve_keff(&p, &opts).unwrap();
        let b = solve_keff(&scaled, &opts).unwrap();
        assert_relative_eq!(b.keff.unwrap(), 1.7 * a.keff.unwrap(), max_relative = 1e-10);
        // fluxes are normalized to unit mean power, so they scale by 1 / 1.7
        let pa = a.phi2.values();
        let pb = b.phi2.values();
        let scale = pa.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (x, y) in pa.iter().zip(pb) {
            assert!((x - 1.7 * y).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn converged_mode_is_positive_with_small_residual() {
        let p = DiffusionProblem::iaea2d(5.0, 1.3).unwrap();
        let solver = EigenSolver::new(&p).unwrap();
        let sol = solver.solve(&SolverOptions::default(), None).unwrap();
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        for &u in solver.operators().unknown_nodes() {
            assert!(sol.phi1[u] > 0.0 && sol.phi2[u] > 0.0);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let p = DiffusionProblem::iaea2d(10.0, 2.0).unwrap();
        let opts = SolverOptions {
            max_iter: 3,
            krylov_dim: 0,
            ..SolverOptions::default()
        };
        assert!(matches!(
            solve_keff(&p, &opts),
            Err(Error::NotConverged { iterations: 3, .. })
        ));
    }
}
