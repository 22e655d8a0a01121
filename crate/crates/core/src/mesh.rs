//! Structured grids, cell region maps and node-centered scalar fields.
//!
//! Fields live on grid nodes, materials live on cells. A [`Domain`] couples a
//! [`RegionMap`] with its quadrature weights and provides the three norms used
//! throughout the toolkit (trapezoidal `L2`, nodal `Linf`, finite-difference
//! `H1` seminorm).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Region id marking cells outside the reactor.
pub const EXTERIOR: u8 = 0;
/// Region id of the reflector.
pub const REFLECTOR: u8 = 4;

const IAEA2D_REGIONS: &str = include_str!("../data/iaea2d.regions");

/// Uniform node grid. Node `(i, j)` sits at `origin + (i * hx, j * hy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2x2 nodes, got {nx}x{ny}"
            )));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid spacings must be positive, got hx = {hx}, hy = {hy}"
            )));
        }
        Ok(Grid2D {
            nx,
            ny,
            hx,
            hy,
            origin,
        })
    }

    /// Grid with `n x n` nodes covering the closed unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        let h = 1.0 / (n.max(2) - 1) as f64;
        Grid2D::new(n, n, h, h, [0.0, 0.0])
    }

    pub fn num_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_cells(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + (self.nx - 1) * j
    }

    pub fn position(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(k);
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Same extent, every cell split into `factor x factor` cells.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidInput("refinement factor must be >= 1".into()));
        }
        Grid2D::new(
            (self.nx - 1) * factor + 1,
            (self.ny - 1) * factor + 1,
            self.hx / factor as f64,
            self.hy / factor as f64,
            self.origin,
        )
    }

    pub(crate) fn same_as(&self, other: &Grid2D) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && (self.hx - other.hx).abs() <= 1e-12 * self.hx
            && (self.hy - other.hy).abs() <= 1e-12 * self.hy
            && (self.origin[0] - other.origin[0]).abs() <= 1e-12 * (1.0 + self.origin[0].abs())
            && (self.origin[1] - other.origin[1]).abs() <= 1e-12 * (1.0 + self.origin[1].abs())
    }

    pub(crate) fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (h = {}, {}) vs {}x{} (h = {}, {})",
                self.nx, self.ny, self.hx, self.hy, other.nx, other.ny, other.hx, other.hy
            )))
        }
    }
}

/// Cell-centered region ids: `0` is exterior, `1..=4` are materials.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMap {
    grid: Grid2D,
    cells: Vec<u8>,
}

impl RegionMap {
    pub fn new(grid: Grid2D, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != grid.num_cells() {
            return Err(Error::LengthMismatch {
                expected: grid.num_cells(),
                got: cells.len(),
            });
        }
        if let Some(bad) = cells.iter().find(|&&id| id > REFLECTOR) {
            return Err(Error::InvalidInput(format!(
                "region id {bad} outside {{0, 1, 2, 3, 4}}"
            )));
        }
        Ok(RegionMap { grid, cells })
    }

    pub fn uniform(grid: Grid2D, id: u8) -> Result<Self> {
        RegionMap::new(grid, vec![id; grid.num_cells()])
    }

    /// The shipped quarter-core IAEA map at its native 10 cm resolution.
    pub fn iaea2d() -> Self {
        IAEA2D_REGIONS
            .parse()
            .expect("shipped geometry file is well formed")
    }

    /// The shipped IAEA map refined to spacing `h` (must divide 10 cm).
    pub fn iaea2d_with_spacing(h: f64) -> Result<Self> {
        let base = RegionMap::iaea2d();
        let factor = base.grid.hx / h;
        let rounded = factor.round();
        if rounded < 1.0 || (factor - rounded).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "spacing {h} does not divide the {} cm assembly sub-pitch",
                base.grid.hx
            )));
        }
        base.refined(rounded as usize)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RegionMap::parse_named(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    fn parse_named(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing grid header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, hline, "header must be: nx ny hx hy"));
        }
        let bad = |what: &str| Error::parse(path, hline, format!("bad {what} in header"));
        let nx: usize = fields[0].parse().map_err(|_| bad("nx"))?;
        let ny: usize = fields[1].parse().map_err(|_| bad("ny"))?;
        let hx: f64 = fields[2].parse().map_err(|_| bad("hx"))?;
        let hy: f64 = fields[3].parse().map_err(|_| bad("hy"))?;
        let grid = Grid2D::new(nx, ny, hx, hy, [0.0, 0.0])?;
        let mut cells = Vec::with_capacity(grid.num_cells());
        for (line, content) in lines {
            for tok in content.split_whitespace() {
                let id: u8 = tok
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("bad region id {tok:?}")))?;
                cells.push(id);
            }
        }
        RegionMap::new(grid, cells).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn region(&self, ci: usize, cj: usize) -> u8 {
        self.cells[self.grid.cell(ci, cj)]
    }

    /// Every cell split into `factor x factor` cells carrying the same id.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let fine = self.grid.refined(factor)?;
        let mut cells = Vec::with_capacity(fine.num_cells());
        for cj in 0..fine.ny - 1 {
            for ci in 0..fine.nx - 1 {
                cells.push(self.region(ci / factor, cj / factor));
            }
        }
        RegionMap::new(fine, cells)
    }
}

impl FromStr for RegionMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegionMap::parse_named(s, Path::new("<string>"))
    }
}

impl fmt::Display for RegionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} {} {} {}",
            self.grid.nx, self.grid.ny, self.grid.hx, self.grid.hy
        )?;
        for cj in 0..self.grid.ny - 1 {
            let row: Vec<String> = (0..self.grid.nx - 1)
                .map(|ci| self.region(ci, cj).to_string())
                .collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Scalar field sampled at grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite field value at node {k}")));
        }
        Ok(Field2D { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Field2D {
            grid,
            values: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.num_nodes()).map(|k| f(grid.position(k))).collect();
        Field2D { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_nodes());
        Field2D { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Field2D::from_raw(self.grid, values))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    L2,
    Linf,
    H1Semi,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::L2, NormKind::Linf, NormKind::H1Semi];

    pub fn tag(&self) -> &'static str {
        match self {
            NormKind::L2 => "l2",
            NormKind::Linf => "linf",
            NormKind::H1Semi => "h1",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(NormKind::L2),
            "linf" | "inf" => Ok(NormKind::Linf),
            "h1" | "h1semi" => Ok(NormKind::H1Semi),
            other => Err(Error::Config(format!("unknown norm {other:?} (l2, linf, h1)"))),
        }
    }
}

/// Which mirror-symmetry edges the domain has. Mirrored edges are not part
/// of the physical boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Symmetry {
    pub west: bool,
    pub south: bool,
}

impl Symmetry {
    pub const NONE: Symmetry = Symmetry {
        west: false,
        south: false,
    };
    pub const QUARTER: Symmetry = Symmetry {
        west: true,
        south: true,
    };
}

/// Admissible sensor region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorRegion {
    /// Case I: anywhere in the reactor.
    All,
    /// Case II: fuel regions only.
    Core,
}

impl SensorRegion {
    pub fn case_tag(&self) -> &'static str {
        match self {
            SensorRegion::All => "I",
            SensorRegion::Core => "II",
        }
    }
}

impl FromStr for SensorRegion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" | "all" => Ok(SensorRegion::All),
            "II" | "ii" | "2" | "core" => Ok(SensorRegion::Core),
            other => Err(Error::Config(format!("unknown case {other:?} (I or II)"))),
        }
    }
}

/// Region map plus the quadrature and differencing data the norms need.
#[derive(Clone, Debug)]
pub struct Domain {
    regions: RegionMap,
    symmetry: Symmetry,
    weights: Vec<f64>,
    area: f64,
}

impl Domain {
    pub fn new(regions: RegionMap, symmetry: Symmetry) -> Result<Self> {
        let weights = cell_quadrature(&regions, |id| id != EXTERIOR);
        let area = weights.iter().sum::<f64>();
        if area <= 0.0 {
            return Err(Error::EmptyDomain);
        }
        Ok(Domain {
            regions,
            symmetry,
            weights,
            area,
        })
    }

    /// The IAEA quarter core at node spacing `h` cm.
    pub fn iaea2d(h: f64) -> Result<Self> {
        Domain::new(RegionMap::iaea2d_with_spacing(h)?, Symmetry::QUARTER)
    }

    /// The full closed unit square with `n x n` nodes, one material.
    pub fn unit_square(n: usize) -> Result<Self> {
        Domain::new(RegionMap::uniform(Grid2D::unit_square(n)?, 1)?, Symmetry::NONE)
    }

    pub fn grid(&self) -> &Grid2D {
        self.regions.grid()
    }

    pub fn regions(&self) -> &RegionMap {
        &self.regions
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Trapezoidal quadrature weight of every node (zero outside the domain).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    #[inline]
    pub fn contains(&self, node: usize) -> bool {
        self.weights[node] > 0.0
    }

    /// Quadrature weights restricted to cells whose id satisfies `keep`.
    pub fn weights_where(&self, keep: impl Fn(u8) -> bool) -> Vec<f64> {
        cell_quadrature(&self.regions, keep)
    }

    pub fn norm(&self, f: &Field2D, kind: NormKind) -> Result<f64> {
        self.grid().check_same(f.grid())?;
        Ok(self.norm_values(f.values(), kind))
    }

    pub fn norm_values(&self, values: &[f64], kind: NormKind) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        match kind {
            NormKind::L2 => values
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| w * v * v)
                .sum::<f64>()
                .sqrt(),
            NormKind::Linf => values
                .iter()
                .zip(&self.weights)
                .filter(|(_, &w)| w > 0.0)
                .fold(0.0_f64, |m, (v, _)| m.max(v.abs())),
            NormKind::H1Semi => {
                let grad = self.gradient_stencil();
                let mut acc = 0.0;
                for (k, &w) in self.weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let gx = grad.x[k].apply(values);
                    let gy = grad.y[k].apply(values);
                    acc += w * (gx * gx + gy * gy);
                }
                acc.sqrt()
            }
        }
    }

    pub fn distance(&self, f: &Field2D, g: &Field2D, kind: NormKind) -> Result<f64> {
        self.grid().check_same(f.grid())?;
        self.grid().check_same(g.grid())?;
        let diff: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a - b).collect();
        Ok(self.norm_values(&diff, kind))
    }

    pub fn l2_distance(&self, f: &Field2D, g: &Field2D) -> Result<f64> {
        self.distance(f, g, NormKind::L2)
    }

    pub fn linf_distance(&self, f: &Field2D, g: &Field2D) -> Result<f64> {
        self.distance(f, g, NormKind::Linf)
    }

    /// Admissible sensor nodes, in increasing node order.
    ///
    /// A node is admissible when every cell touching it (mirrored across
    /// symmetry edges) is inside the reactor, and for [`SensorRegion::Core`]
    /// every such cell is fuel.
    pub fn restrict_mask(&self, which: SensorRegion) -> Result<Vec<usize>> {
        let keep = |id: u8| match which {
            SensorRegion::All => id != EXTERIOR,
            SensorRegion::Core => (1..REFLECTOR).contains(&id),
        };
        let grid = self.grid();
        let mask: Vec<usize> = (0..grid.num_nodes())
            .filter(|&k| {
                let (i, j) = grid.node_ij(k);
                self.touching_cells(i, j)
                    .iter()
                    .all(|c| c.map_or(false, |(ci, cj)| keep(self.regions.region(ci, cj))))
            })
            .collect();
        if mask.is_empty() {
            return Err(Error::NoAdmissibleSensors);
        }
        Ok(mask)
    }

    /// The four cells around node `(i, j)`, mirrored across symmetry edges;
    /// `None` where the cell falls off the grid.
    fn touching_cells(&self, i: usize, j: usize) -> [Option<(usize, usize)>; 4] {
        let grid = self.grid();
        let ci = |di: i64| -> Option<usize> {
            let c = i as i64 + di;
            if c < 0 {
                self.symmetry.west.then_some((-c - 1) as usize)
            } else if (c as usize) < grid.nx - 1 {
                Some(c as usize)
            } else {
                None
            }
        };
        let cj = |dj: i64| -> Option<usize> {
            let c = j as i64 + dj;
            if c < 0 {
                self.symmetry.south.then_some((-c - 1) as usize)
            } else if (c as usize) < grid.ny - 1 {
                Some(c as usize)
            } else {
                None
            }
        };
        let pair = |a: Option<usize>, b: Option<usize>| a.zip(b);
        [
            pair(ci(-1), cj(-1)),
            pair(ci(0), cj(-1)),
            pair(ci(-1), cj(0)),
            pair(ci(0), cj(0)),
        ]
    }

    fn cell_inside(&self, ci: i64, cj: i64) -> bool {
        let grid = self.grid();
        if ci < 0 || cj < 0 || ci as usize >= grid.nx - 1 || cj as usize >= grid.ny - 1 {
            return false;
        }
        self.regions.region(ci as usize, cj as usize) != EXTERIOR
    }

    /// Whether the grid edge from node `(i, j)` to its `+x` (or `+y`) neighbour
    /// belongs to at least one interior cell.
    fn edge_inside(&self, i: usize, j: usize, along_x: bool) -> bool {
        let (i, j) = (i as i64, j as i64);
        if along_x {
            self.cell_inside(i, j - 1) || self.cell_inside(i, j)
        } else {
            self.cell_inside(i - 1, j) || self.cell_inside(i, j)
        }
    }

    /// Finite-difference gradient stencils: central where both neighbours are
    /// reachable, one-sided at the boundary, mirrored on symmetry edges.
    pub(crate) fn gradient_stencil(&self) -> GradientStencil {
        let grid = *self.grid();
        let n = grid.num_nodes();
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for k in 0..n {
            if !self.contains(k) {
                x.push(Stencil::ZERO);
                y.push(Stencil::ZERO);
                continue;
            }
            let (i, j) = grid.node_ij(k);
            let east = i + 1 < grid.nx && self.edge_inside(i, j, true);
            let west = i > 0 && self.edge_inside(i - 1, j, true);
            x.push(one_axis(
                k,
                east.then(|| grid.node(i + 1, j)),
                west.then(|| grid.node(i - 1, j)),
                i == 0 && self.symmetry.west,
                grid.hx,
            ));
            let north = j + 1 < grid.ny && self.edge_inside(i, j, false);
            let south = j > 0 && self.edge_inside(i, j - 1, false);
            y.push(one_axis(
                k,
                north.then(|| grid.node(i, j + 1)),
                south.then(|| grid.node(i, j - 1)),
                j == 0 && self.symmetry.south,
                grid.hy,
            ));
        }
        GradientStencil { x, y }
    }
}

fn one_axis(
    k: usize,
    plus: Option<usize>,
    minus: Option<usize>,
    mirrored: bool,
    h: f64,
) -> Stencil {
    match (plus, minus) {
        (Some(p), Some(m)) => Stencil::two(p, 0.5 / h, m, -0.5 / h),
        // mirror image of the + neighbour: central difference vanishes
        (Some(_), None) if mirrored => Stencil::ZERO,
        (Some(p), None) => Stencil::two(p, 1.0 / h, k, -1.0 / h),
        (None, Some(m)) => Stencil::two(k, 1.0 / h, m, -1.0 / h),
        (None, None) => Stencil::ZERO,
    }
}

/// A two-point difference `a * f[i] + b * f[j]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 2],
    pub coef: [f64; 2],
}

impl Stencil {
    const ZERO: Stencil = Stencil {
        idx: [0, 0],
        coef: [0.0, 0.0],
    };

    fn two(i: usize, a: f64, j: usize, b: f64) -> Self {
        Stencil {
            idx: [i, j],
            coef: [a, b],
        }
    }

    #[inline]
    pub fn apply(&self, v: &[f64]) -> f64 {
        self.coef[0] * v[self.idx[0]] + self.coef[1] * v[self.idx[1]]
    }
}

pub(crate) struct GradientStencil {
    pub x: Vec<Stencil>,
    pub y: Vec<Stencil>,
}

/// Cellwise trapezoidal weights: each kept cell gives a quarter of its area
/// to each of its four corner nodes.
fn cell_quadrature(regions: &RegionMap, keep: impl Fn(u8) -> bool) -> Vec<f64> {
    let grid = regions.grid();
    let quarter = 0.25 * grid.cell_area();
    let mut w = vec![0.0; grid.num_nodes()];
    for cj in 0..grid.ny - 1 {
        for ci in 0..grid.nx - 1 {
            if keep(regions.region(ci, cj)) {
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    w[grid.node(ci + di, cj + dj)] += quarter;
                }
            }
        }
    }
    w
}
