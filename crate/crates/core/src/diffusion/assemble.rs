use super::{BoundaryCondition, DiffusionProblem};
use crate::error::{Error, Result};
use crate::mesh::{Grid2D, SensorRegion, EXTERIOR};
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;

/// Discrete two-group operators on the unknown nodes.
///
/// The loss operators are symmetric positive definite; scattering, fission
/// and production are lumped (diagonal) per unknown and already multiplied by
/// the control volume.
#[derive(Clone, Debug)]
pub struct Operators {
    grid: Grid2D,
    unknowns: Vec<usize>,
    node_to_unknown: Vec<usize>,
    /// `loss[g]`: diffusion, removal and axial leakage of group `g`.
    pub loss: [CsrMatrix; 2],
    /// Down-scattering `Sigma_s12 * V`.
    pub scatter: Vec<f64>,
    /// `fission[g][h]`: emission into `g` from fissions in `h`, `chi_g nuSigma_f,h V`.
    pub fission: [[Vec<f64>; 2]; 2],
    /// `production[h]`: `nuSigma_f,h V`.
    pub production: [Vec<f64>; 2],
    /// Control volume of every unknown.
    pub volume: Vec<f64>,
}

impl Operators {
    pub fn assemble(problem: &DiffusionProblem) -> Result<Self> {
        let domain = &problem.domain;
        let grid = *domain.grid();
        let regions = domain.regions();
        let unknowns: Vec<usize> = match problem.boundary {
            BoundaryCondition::ZeroFlux => domain.restrict_mask(SensorRegion::All)?,
            _ => (0..grid.num_nodes()).filter(|&k| domain.contains(k)).collect(),
        };
        if unknowns.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let mut node_to_unknown = vec![NONE; grid.num_nodes()];
        for (u, &k) in unknowns.iter().enumerate() {
            node_to_unknown[k] = u;
        }
        let n = unknowns.len();
        let quarter = 0.25 * grid.cell_area();
        let mut triplets: [Vec<(usize, usize, f64)>; 2] =
            [Vec::with_capacity(9 * n), Vec::with_capacity(9 * n)];
        let mut scatter = vec![0.0; n];
        let mut fission = [[vec![0.0; n], vec![0.0; n]], [vec![0.0; n], vec![0.0; n]]];
        let mut production = [vec![0.0; n], vec![0.0; n]];
        let mut volume = vec![0.0; n];
        let symmetry = domain.symmetry();
        let robin = problem.boundary == BoundaryCondition::ZeroIncomingCurrent;

        for cj in 0..grid.ny - 1 {
            for ci in 0..grid.nx - 1 {
                let id = regions.region(ci, cj);
                if id == EXTERIOR {
                    continue;
                }
                let xs = problem.xs.region(id);
                let sw = grid.node(ci, cj);
                let se = grid.node(ci + 1, cj);
                let nw = grid.node(ci, cj + 1);
                let ne = grid.node(ci + 1, cj + 1);
                for node in [sw, se, nw, ne] {
                    let u = node_to_unknown[node];
                    if u == NONE {
                        continue;
                    }
                    volume[u] += quarter;
                    scatter[u] += xs.sigma_s12 * quarter;
                    for g in 0..2 {
                        triplets[g].push((u, u, xs.removal(g) * quarter));
                        production[g][u] += xs.nu_sigma_f(g) * quarter;
                        for h in 0..2 {
                            fission[g][h][u] += xs.chi(g) * xs.nu_sigma_f(h) * quarter;
                        }
                    }
                }
                // each edge of the cell carries half of a dual face
                for g in 0..2 {
                    let d = xs.diffusion(g);
                    let cx = d * grid.hy / (2.0 * grid.hx);
                    let cy = d * grid.hx / (2.0 * grid.hy);
                    for (a, b, c) in [(sw, se, cx), (nw, ne, cx), (sw, nw, cy), (se, ne, cy)] {
                        couple(&mut triplets[g], &node_to_unknown, a, b, c);
                    }
                }
                if robin {
                    let outside = |di: i64, dj: i64| -> bool {
                        let (i, j) = (ci as i64 + di, cj as i64 + dj);
                        if i < 0 {
                            return !symmetry.west;
                        }
                        if j < 0 {
                            return !symmetry.south;
                        }
                        let (i, j) = (i as usize, j as usize);
                        i >= grid.nx - 1 || j >= grid.ny - 1 || regions.region(i, j) == EXTERIOR
                    };
                    let sides = [
                        ((-1, 0), sw, nw, grid.hy),
                        ((1, 0), se, ne, grid.hy),
                        ((0, -1), sw, se, grid.hx),
                        ((0, 1), nw, ne, grid.hx),
                    ];
                    for ((di, dj), a, b, len) in sides {
                        if outside(di, dj) {
                            // outgoing partial current phi / 2 over each half side
                            for node in [a, b] {
                                let u = node_to_unknown[node];
                                if u != NONE {
                                    for t in triplets.iter_mut() {
                                        t.push((u, u, 0.25 * len));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let [t0, t1] = triplets;
        Ok(Operators {
            grid,
            loss: [CsrMatrix::from_triplets(n, &t0), CsrMatrix::from_triplets(n, &t1)],
            unknowns,
            node_to_unknown,
            scatter,
            fission,
            production,
            volume,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn num_unknowns(&self) -> usize {
        self.unknowns.len()
    }

    /// Grid node of every unknown.
    pub fn unknown_nodes(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        let u = self.node_to_unknown[node];
        (u != NONE).then_some(u)
    }

    /// Expands an unknown vector to a full grid vector, zero elsewhere.
    pub fn to_grid(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.num_nodes()];
        for (&k, &v) in self.unknowns.iter().zip(x) {
            out[k] = v;
        }
        out
    }
}

fn couple(t: &mut Vec<(usize, usize, f64)>, map: &[usize], a: usize, b: usize, c: f64) {
    let (ua, ub) = (map[a], map[b]);
    if ua != NONE {
        t.push((ua, ua, c));
        if ub != NONE {
            t.push((ua, ub, -c));
        }
    }
    if ub != NONE {
        t.push((ub, ub, c));
        if ua != NONE {
            t.push((ub, ua, -c));
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_relative_eq;

    use super::*;
    use crate::diffusion::{CrossSections, MaterialXs};
    use crate::mesh::{Domain, RegionMap, Symmetry};

    fn fuel1() -> MaterialXs {
        CrossSections::iaea2d(2.0).regions[0]
    }

    fn uniform_problem(n: usize, h: f64, xs: MaterialXs, bc: BoundaryCondition) -> DiffusionProblem {
        let grid = Grid2D::new(n, n, h, h, [0.0, 0.0]).unwrap();
        let domain = Domain::new(RegionMap::uniform(grid, 1).unwrap(), Symmetry::NONE).unwrap();
        DiffusionProblem::new(Arc::new(domain), CrossSections::uniform(xs), bc).unwrap()
    }

    #[test]
    fn reflective_row_sums_are_pure_removal() {
        let xs = fuel1();
        let p = uniform_problem(9, 2.0, xs, BoundaryCondition::Reflective);
        let ops = Operators::assemble(&p).unwrap();
        for u in 0..ops.num_unknowns() {
            let expected = (xs.sigma_a1 + xs.sigma_s12 + xs.d1 * xs.bz2) * ops.volume[u];
            assert_relative_eq!(ops.loss[0].row_sum(u), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn loss_operator_is_symmetric() {
        let p = DiffusionProblem::iaea2d(5.0, 1.7).unwrap();
        for bc in [BoundaryCondition::ZeroFlux, BoundaryCondition::ZeroIncomingCurrent] {
            let p = DiffusionProblem { boundary: bc, ..p.clone() };
            let ops = Operators::assemble(&p).unwrap();
            for m in &ops.loss {
                for r in 0..m.dim() {
                    for (c, v) in m.row(r) {
                        assert_eq!(v, m.get(c, r));
                    }
                }
            }
        }
    }

    #[test]
    fn stencil_is_exact_on_quadratics() {
        // -D lap(f) for f = x^2 + 3 y^2 - x y is -8 D everywhere
        for h in [1.0, 0.5, 0.25] {
            let mut xs = fuel1();
            xs.sigma_a1 = 0.0;
            xs.sigma_s12 = 0.0;
            xs.bz2 = 0.0;
            let p = uniform_problem(9, h, xs, BoundaryCondition::Reflective);
            let ops = Operators::assemble(&p).unwrap();
            let grid = *ops.grid();
            let f: Vec<f64> = ops
                .unknown_nodes()
                .iter()
                .map(|&k| {
                    let [x, y] = grid.position(k);
                    x * x + 3.0 * y * y - x * y
                })
                .collect();
            let mut af = vec![0.0; f.len()];
            ops.loss[0].mul_vec(&f, &mut af);
            let center = ops.unknown_of(grid.node(4, 4)).unwrap();
            assert_relative_eq!(af[center] / ops.volume[center], -8.0 * xs.d1, max_relative = 1e-10);
        }
    }

    #[test]
    fn series_interface_gives_harmonic_mean() {
        // cells with D = 1 and D = 3 side by side; the conductance across the
        // two cells in series is that of a single cell with D = 1.5
        let grid = Grid2D::new(3, 2, 1.0, 1.0, [0.0, 0.0]).unwrap();
        let regions = RegionMap::new(grid, vec![1, 2]).unwrap();
        let domain = Domain::new(regions, Symmetry::NONE).unwrap();
        let mut a = fuel1();
        a.d1 = 1.0;
        let mut b = a;
        b.d1 = 3.0;
        let xs = CrossSections { regions: [a, b, a, a] };
        let p = DiffusionProblem::new(Arc::new(domain), xs, BoundaryCondition::Reflective).unwrap();
        let ops = Operators::assemble(&p).unwrap();
        let u = |i, j| ops.unknown_of(grid.node(i, j)).unwrap();
        let left = -(ops.loss[0].get(u(0, 0), u(1, 0)) + ops.loss[0].get(u(0, 1), u(1, 1)));
        let right = -(ops.loss[0].get(u(1, 0), u(2, 0)) + ops.loss[0].get(u(1, 1), u(2, 1)));
        let series = 1.0 / (1.0 / left + 1.0 / right);
        // length 2, height 1
        assert_relative_eq!(series * 2.0, 1.5, max_relative = 1e-14);
    }

    #[test]
    fn non_positive_diffusion_is_rejected() {
        let mut xs = fuel1();
        xs.d1 = -1.0;
        let grid = Grid2D::unit_square(4).unwrap();
        let domain = Domain::new(RegionMap::uniform(grid, 1).unwrap(), Symmetry::NONE).unwrap();
        let err = DiffusionProblem::new(Arc::new(domain), CrossSections::uniform(xs), BoundaryCondition::ZeroFlux);
        assert!(matches!(err, Err(Error::NonPositiveDiffusion { .. })));
    }

    #[test]
    fn zero_flux_drops_boundary_nodes() {
        let p = DiffusionProblem::iaea2d(10.0, 2.0).unwrap();
        let ops = Operators::assemble(&p).unwrap();
        let grid = *ops.grid();
        // the symmetry axes stay unknown, the outer edge does not
        assert!(ops.unknown_of(grid.node(0, 0)).is_some());
        assert!(ops.unknown_of(grid.node(0, 5)).is_some());
        assert!(ops.unknown_of(grid.node(17, 0)).is_none());
        assert!(ops.unknown_of(grid.node(16, 0)).is_some());
    }
}
