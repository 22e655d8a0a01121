//! Two-group neutron diffusion k-eigenvalue solver and snapshot generation.
//!
//! The discretization is a vertex-centered finite-volume (box) scheme on the
//! node grid of a [`Domain`]: materials are constant per cell, each node owns
//! the quarter cells around it, and the flux through each half dual face uses
//! the diffusion coefficient of the cell it crosses.

mod assemble;
mod snapshots;
mod solver;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use assemble::Operators;
pub use snapshots::{
    cell_midpoints, compute_power, equispaced, generate_snapshots, Component, SetRole, Snapshot,
    SnapshotSet,
};
pub use solver::{solve_keff, EigenSolution, EigenSolver, SolverOptions};

use crate::error::{Error, Result};
use crate::mesh::{Domain, REFLECTOR};

/// Admissible range of the reflector fast diffusion coefficient.
pub const MU_RANGE: (f64, f64) = (1.0, 3.0);

/// Two-group macroscopic data of one material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialXs {
    pub d1: f64,
    pub d2: f64,
    pub sigma_a1: f64,
    pub sigma_a2: f64,
    pub sigma_s12: f64,
    pub nu_sigma_f1: f64,
    pub nu_sigma_f2: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub bz2: f64,
}

impl MaterialXs {
    pub fn validate(&self, region: u8) -> Result<()> {
        for d in [self.d1, self.d2] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NonPositiveDiffusion { region, value: d });
            }
        }
        let rest = [
            self.sigma_a1,
            self.sigma_a2,
            self.sigma_s12,
            self.nu_sigma_f1,
            self.nu_sigma_f2,
            self.chi1,
            self.chi2,
            self.bz2,
        ];
        if rest.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "negative or non-finite cross section in region {region}"
            )));
        }
        if (self.chi1 + self.chi2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "fission spectrum of region {region} sums to {}",
                self.chi1 + self.chi2
            )));
        }
        Ok(())
    }

    /// Removal cross section of group `g` (0 or 1) including axial leakage.
    pub fn removal(&self, g: usize) -> f64 {
        match g {
            0 => self.sigma_a1 + self.sigma_s12 + self.d1 * self.bz2,
            _ => self.sigma_a2 + self.d2 * self.bz2,
        }
    }

    pub fn diffusion(&self, g: usize) -> f64 {
        if g == 0 {
            self.d1
        } else {
            self.d2
        }
    }

    pub fn nu_sigma_f(&self, g: usize) -> f64 {
        if g == 0 {
            self.nu_sigma_f1
        } else {
            self.nu_sigma_f2
        }
    }

    pub fn chi(&self, g: usize) -> f64 {
        if g == 0 {
            self.chi1
        } else {
            self.chi2
        }
    }
}

/// Material data for region ids `1..=4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossSections {
    pub regions: [MaterialXs; 4],
}

impl CrossSections {
    /// IAEA 2D benchmark data with the reflector `D1` set to `mu`.
    pub fn iaea2d(mu: f64) -> Self {
        const BZ2: f64 = 0.8e-4;
        let fuel = |sigma_a2: f64| MaterialXs {
            d1: 1.5,
            d2: 0.4,
            sigma_a1: 0.01,
            sigma_a2,
            sigma_s12: 0.02,
            nu_sigma_f1: 0.0,
            nu_sigma_f2: 0.135,
            chi1: 1.0,
            chi2: 0.0,
            bz2: BZ2,
        };
        let reflector = MaterialXs {
            d1: mu,
            d2: 0.3,
            sigma_a1: 0.0,
            sigma_a2: 0.01,
            sigma_s12: 0.04,
            nu_sigma_f1: 0.0,
            nu_sigma_f2: 0.0,
            chi1: 1.0,
            chi2: 0.0,
            bz2: BZ2,
        };
        CrossSections {
            regions: [fuel(0.080), fuel(0.085), fuel(0.130), reflector],
        }
    }

    pub fn uniform(xs: MaterialXs) -> Self {
        CrossSections { regions: [xs; 4] }
    }

    /// Data of region `id` (1-based).
    #[inline]
    pub fn region(&self, id: u8) -> &MaterialXs {
        &self.regions[id as usize - 1]
    }

    pub fn validate(&self) -> Result<()> {
        self.regions
            .iter()
            .enumerate()
            .try_for_each(|(i, xs)| xs.validate(i as u8 + 1))
    }
}

/// Condition on the outer (non-symmetry) boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet: zero flux.
    #[default]
    ZeroFlux,
    /// Marshak vacuum condition: `phi / 4 + D / 2 * dphi/dn = 0`.
    ZeroIncomingCurrent,
    /// Zero net current, for infinite-medium checks.
    Reflective,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::ZeroFlux => "zero-flux",
            BoundaryCondition::ZeroIncomingCurrent => "zero-incoming-current",
            BoundaryCondition::Reflective => "reflective",
        })
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-flux" | "dirichlet" => Ok(BoundaryCondition::ZeroFlux),
            "zero-incoming-current" | "vacuum" | "robin" => {
                Ok(BoundaryCondition::ZeroIncomingCurrent)
            }
            "reflective" => Ok(BoundaryCondition::Reflective),
            other => Err(Error::Config(format!("unknown boundary condition {other:?}"))),
        }
    }
}

/// A complete eigenvalue problem: geometry, materials, outer boundary.
#[derive(Clone, Debug)]
pub struct DiffusionProblem {
    pub domain: Arc<Domain>,
    pub xs: CrossSections,
    pub boundary: BoundaryCondition,
}

impl DiffusionProblem {
    pub fn new(domain: Arc<Domain>, xs: CrossSections, boundary: BoundaryCondition) -> Result<Self> {
        xs.validate()?;
        Ok(DiffusionProblem {
            domain,
            xs,
            boundary,
        })
    }

    /// IAEA quarter core at spacing `h` cm with the default zero-flux boundary.
    pub fn iaea2d(h: f64, mu: f64) -> Result<Self> {
        DiffusionProblem::new(
            Arc::new(Domain::iaea2d(h)?),
            CrossSections::iaea2d(mu),
            BoundaryCondition::ZeroFlux,
        )
    }

    /// The parameter: reflector fast-group diffusion coefficient.
    pub fn mu(&self) -> f64 {
        self.xs.region(REFLECTOR).d1
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut xs = self.xs;
        xs.regions[REFLECTOR as usize - 1].d1 = mu;
        DiffusionProblem::new(self.domain.clone(), xs, self.boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iaea_data_is_valid() {
        CrossSections::iaea2d(2.0).validate().unwrap();
        let mut bad = CrossSections::iaea2d(2.0);
        bad.regions[0].d2 = 0.0;
        assert!(matches!(
            bad.validate(),
            Err(Error::NonPositiveDiffusion { region: 1, .. })
        ));
        let mut bad = CrossSections::iaea2d(2.0);
        bad.regions[1].chi1 = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mu_is_reflector_fast_diffusion() {
        let p = DiffusionProblem::iaea2d(10.0, 1.25).unwrap();
        assert_eq!(p.mu(), 1.25);
        assert_eq!(p.with_mu(2.5).unwrap().mu(), 2.5);
        assert_eq!(p.with_mu(2.5).unwrap().xs.region(1).d1, 1.5);
        assert!(p.with_mu(-1.0).is_err());
    }
}
