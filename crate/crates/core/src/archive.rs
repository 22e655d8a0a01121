//! On-disk snapshot and model archives.
//!
//! A snapshot archive is a directory holding `manifest.txt` (grid,
//! parameters, eigenvalues, component and normalization tags), `regions.txt`
//! (the region map) and one `snapshot_NNNN.bin` per snapshot: raw
//! little-endian `f64` blocks of `nx * ny` values in the order phi1, phi2,
//! power, absent components skipped.
//!
//! A model archive holds `manifest.txt` (norm, case, sizes, sensors,
//! parameters), `tables.csv` (training errors, Lebesgue constants and
//! coefficient bounds per `n`), `regions.txt`, `coefficients.bin` (greedy
//! coefficients of the training snapshots) and one `basis_NNNN.bin` per basis
//! function with the same block layout as snapshots.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use std::sync::Arc;

use crate::diffusion::{Component, SetRole, Snapshot, SnapshotSet};
use crate::error::{Error, Result};
use crate::geim::{coefficient_bounds, GeimModel, Sensor};
use crate::mesh::{Domain, Field2D, Grid2D, NormKind, RegionMap, SensorRegion, Symmetry};

const MAGIC: &str = "csgeim-snapshots 1";
const MODEL_MAGIC: &str = "csgeim-model 1";
const TABLE_HEADER: &str = "n,eps,lambda,eps_sup,lambda_sup,r";

pub fn write_snapshots(dir: impl AsRef<Path>, domain: &Domain, set: &SnapshotSet) -> Result<()> {
    let dir = dir.as_ref();
    domain.grid().check_same(set.grid())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let comps = set.components();
    let mut m = String::new();
    m.push_str(MAGIC);
    m.push('\n');
    m.push_str(&format!("role {}\n", set.role().tag()));
    push_geometry(&mut m, domain);
    m.push_str(&format!("components {}\n", join_tags(&comps)));
    let norm = if set.get(0).keff.is_some() {
        "core-mean-power"
    } else {
        "none"
    };
    m.push_str(&format!("normalization {norm}\n"));
    m.push_str(&format!("count {}\n", set.len()));
    for (i, s) in set.iter().enumerate() {
        let mu: Vec<String> = s.mu.iter().map(|v| format!("{v:?}")).collect();
        let k = s.keff.map_or("-".to_string(), |k| format!("{k:?}"));
        m.push_str(&format!("snapshot {i} keff {k} mu {}\n", mu.join(" ")));
    }
    write_text(&dir.join("manifest.txt"), &m)?;
    domain.regions().save(dir.join("regions.txt"))?;
    for (i, s) in set.iter().enumerate() {
        let blocks: Vec<&[f64]> = comps
            .iter()
            .map(|&c| s.component(c).expect("checked by SnapshotSet").values())
            .collect();
        write_blocks(&block_path(dir, i), &blocks)?;
    }
    Ok(())
}

pub fn read_snapshots(dir: impl AsRef<Path>) -> Result<(Domain, SnapshotSet)> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = Manifest::new(&text, &path);
    lines.expect_magic(MAGIC)?;
    let role: SetRole = lines.field("role")?.parse()?;
    let (grid, domain) = read_geometry(dir, &mut lines)?;
    let comps = read_components(&mut lines)?;
    let _normalization = lines.field("normalization")?;
    let count: usize = lines.parse_field("count")?;

    let mut snapshots = Vec::with_capacity(count);
    for i in 0..count {
        let rest = lines.field("snapshot")?;
        let toks: Vec<&str> = rest.split_whitespace().collect();
        if toks.len() < 4 || toks[0] != i.to_string() || toks[1] != "keff" || toks[3] != "mu" {
            return Err(lines.error("expected: snapshot <i> keff <k|-> mu <values>"));
        }
        let keff = match toks[2] {
            "-" => None,
            k => Some(k.parse::<f64>().map_err(|_| lines.error("bad keff"))?),
        };
        let mu = toks[4..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| lines.error("bad mu")))
            .collect::<Result<Vec<f64>>>()?;
        let mut blocks = read_blocks(&block_path(dir, i), grid.num_nodes(), comps.len())?.into_iter();
        let mut fields = [None, None, None];
        for &c in &comps {
            let f = Field2D::new(grid, blocks.next().expect("block count checked"))?;
            fields[c as usize] = Some(f);
        }
        let [phi1, phi2, power] = fields;
        snapshots.push(Snapshot {
            mu,
            phi2: phi2.expect("phi2 checked"),
            phi1,
            power,
            keff,
        });
    }
    Ok((domain, SnapshotSet::new(role, snapshots)?))
}

fn block_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("snapshot_{i:04}.bin"))
}

fn basis_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("basis_{i:04}.bin"))
}

fn join_tags(comps: &[Component]) -> String {
    comps.iter().map(|c| c.tag()).collect::<Vec<_>>().join(" ")
}

fn push_geometry(m: &mut String, domain: &Domain) {
    let g = domain.grid();
    let sym = domain.symmetry();
    m.push_str(&format!(
        "grid {} {} {:?} {:?} {:?} {:?}\n",
        g.nx, g.ny, g.hx, g.hy, g.origin[0], g.origin[1]
    ));
    m.push_str(&format!("symmetry {} {}\n", sym.west as u8, sym.south as u8));
}

fn read_geometry(dir: &Path, lines: &mut Manifest<'_>) -> Result<(Grid2D, Domain)> {
    let grid = lines.grid()?;
    let sym = lines.field("symmetry")?;
    let sym = match sym.split_whitespace().collect::<Vec<_>>().as_slice() {
        [w, s] => Symmetry {
            west: *w == "1",
            south: *s == "1",
        },
        _ => return Err(lines.error("symmetry needs two flags")),
    };
    let mut regions = RegionMap::load(dir.join("regions.txt"))?;
    if regions.grid().nx != grid.nx || regions.grid().ny != grid.ny {
        return Err(Error::GridMismatch("regions.txt does not match the manifest grid".into()));
    }
    regions = RegionMap::new(grid, regions.cells().to_vec())?;
    Ok((grid, Domain::new(regions, sym)?))
}

fn read_components(lines: &mut Manifest<'_>) -> Result<Vec<Component>> {
    let comps = lines
        .field("components")?
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<Vec<Component>>>()?;
    if !comps.contains(&Component::Phi2) {
        return Err(lines.error("archive has no phi2 component"));
    }
    Ok(comps)
}

fn fmt_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_model(dir: impl AsRef<Path>, model: &GeimModel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = model.dim();
    let comps = model.components();
    let mut m = String::new();
    m.push_str(MODEL_MAGIC);
    m.push('\n');
    m.push_str(&format!("norm {}\n", model.norm().tag()));
    m.push_str(&format!("case {}\n", model.case.map_or("-", |c| c.case_tag())));
    m.push_str(&format!("scale {:?}\n", model.scale));
    m.push_str(&format!("resolution {:?}\n", model.resolution()));
    push_geometry(&mut m, model.domain());
    m.push_str(&format!("components {}\n", join_tags(&comps)));
    m.push_str(&format!("n {n}\n"));
    m.push_str(&format!("training {}\n", model.training_coefficients().len()));
    let nodes: Vec<usize> = model.sensors().iter().map(|s| s.node).collect();
    m.push_str(&format!("sensors {}\n", fmt_list(&nodes)));
    m.push_str(&format!("selected {}\n", fmt_list(model.selected())));
    for (i, mu) in model.selected_mus().iter().enumerate() {
        m.push_str(&format!("mu {i} {}\n", fmt_list(mu)));
    }
    write_text(&dir.join("manifest.txt"), &m)?;

    let r = coefficient_bounds(model);
    let mut t = String::from(TABLE_HEADER);
    t.push('\n');
    for k in 0..=n {
        let opt = |v: Option<&f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        let lam = if k == 0 { Some(&0.0) } else { model.lebesgue_table().get(k - 1) };
        let lam_sup = if k == 0 { Some(&0.0) } else { model.sup_lebesgue_table().get(k - 1) };
        t.push_str(&format!(
            "{k},{:?},{},{:?},{},{}\n",
            model.training_errors()[k],
            opt(lam),
            model.sup_training_errors()[k],
            opt(lam_sup),
            // r_{k+1} uses the tables at k
            opt(r.get(k)),
        ));
    }
    write_text(&dir.join("tables.csv"), &t)?;
    model.domain().regions().save(dir.join("regions.txt"))?;
    let coeffs: Vec<&[f64]> = model.training_coefficients().iter().map(Vec::as_slice).collect();
    write_blocks(&dir.join("coefficients.bin"), &coeffs)?;
    for i in 0..n {
        let blocks = comps
            .iter()
            .map(|&c| model.basis_values(c).map(|b| b[i].as_slice()))
            .collect::<Result<Vec<_>>>()?;
        write_blocks(&basis_path(dir, i), &blocks)?;
    }
    Ok(())
}

pub fn read_model(dir: impl AsRef<Path>) -> Result<GeimModel> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = Manifest::new(&text, &path);
    lines.expect_magic(MODEL_MAGIC)?;
    let norm: NormKind = lines.field("norm")?.parse()?;
    let case = match lines.field("case")? {
        "-" => None,
        c => Some(c.parse::<SensorRegion>()?),
    };
    let scale: f64 = lines.parse_field("scale")?;
    let resolution: f64 = lines.parse_field("resolution")?;
    let (grid, domain) = read_geometry(dir, &mut lines)?;
    let comps = read_components(&mut lines)?;
    let n: usize = lines.parse_field("n")?;
    let training: usize = lines.parse_field("training")?;
    let nodes: Vec<usize> = lines.list("sensors")?;
    let selected: Vec<usize> = lines.list("selected")?;
    if nodes.len() < n || selected.len() != n {
        return Err(lines.error("sensor or selection list shorter than n"));
    }
    if let Some(&bad) = nodes.iter().find(|&&k| k >= grid.num_nodes()) {
        return Err(lines.error(format!("sensor node {bad} outside the grid")));
    }
    let mut mus = Vec::with_capacity(n);
    for i in 0..n {
        let v: Vec<f64> = lines.list("mu")?;
        if v.first() != Some(&(i as f64)) {
            return Err(lines.error(format!("expected: mu {i} <values>")));
        }
        mus.push(v[1..].to_vec());
    }

    let tpath = dir.join("tables.csv");
    let ttext = fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let mut rows = ttext.lines();
    if rows.next().map(str::trim) != Some(TABLE_HEADER) {
        return Err(Error::parse(&tpath, 1, format!("expected header {TABLE_HEADER}")));
    }
    let (mut eps, mut lebesgue, mut sup_eps, mut sup_lebesgue) = (vec![], vec![], vec![], vec![]);
    for (k, row) in rows.enumerate().take(n + 1) {
        let bad = || Error::parse(&tpath, k + 2, "malformed table row");
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != 6 || cells[0] != k.to_string() {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        eps.push(num(cells[1])?);
        sup_eps.push(num(cells[3])?);
        if k > 0 {
            lebesgue.push(num(cells[2])?);
            sup_lebesgue.push(num(cells[4])?);
        }
    }
    if eps.len() != n + 1 {
        return Err(Error::parse(&tpath, 0, format!("expected {} table rows", n + 1)));
    }

    let coeff_path = dir.join("coefficients.bin");
    let mut train_coeffs = Vec::with_capacity(training);
    if training > 0 {
        train_coeffs = read_blocks(&coeff_path, n, training)?;
    }
    let mut basis: [Option<Vec<Vec<f64>>>; 3] = [None, None, None];
    for &c in &comps {
        basis[c as usize] = Some(Vec::with_capacity(n));
    }
    for i in 0..n {
        let blocks = read_blocks(&basis_path(dir, i), grid.num_nodes(), comps.len())?;
        for (&c, b) in comps.iter().zip(blocks) {
            basis[c as usize].as_mut().unwrap().push(b);
        }
    }
    Ok(GeimModel {
        domain: Arc::new(domain),
        norm,
        case,
        scale,
        selected,
        mus,
        sensors: nodes.into_iter().map(|node| Sensor { node }).collect(),
        basis,
        eps,
        lebesgue,
        sup_eps,
        sup_lebesgue,
        resolution,
        train_coeffs,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the blocks back to back as little-endian `f64`.
pub(crate) fn write_blocks(path: &Path, blocks: &[&[f64]]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for b in blocks {
        for v in *b {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads exactly `count` blocks of `len` values.
pub(crate) fn read_blocks(path: &Path, len: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != 8 * len * count {
        return Err(Error::parse(
            path,
            0,
            format!("expected {} bytes, found {}", 8 * len * count, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(values.chunks(len.max(1)).take(count).map(<[f64]>::to_vec).collect())
}

/// Line-oriented `key value...` reader with position tracking for errors.
pub(crate) struct Manifest<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    path: &'a Path,
}

impl<'a> Manifest<'a> {
    pub(crate) fn new(text: &'a str, path: &'a Path) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Manifest { lines, pos: 0, path }
    }

    fn line_no(&self) -> usize {
        self.lines
            .get(self.pos.saturating_sub(1))
            .map_or(0, |(n, _)| *n)
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line_no(), msg)
    }

    pub(crate) fn expect_magic(&mut self, magic: &str) -> Result<()> {
        match self.lines.get(self.pos) {
            Some((_, l)) if *l == magic => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::parse(self.path, 1, format!("not a {magic:?} file"))),
        }
    }

    /// Value of the next line, which must start with `key`.
    pub(crate) fn field(&mut self, key: &str) -> Result<&'a str> {
        let (n, line) = *self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::parse(self.path, 0, format!("missing {key:?}")))?;
        self.pos += 1;
        match line.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok(v.trim()),
            None if line == key => Ok(""),
            _ => Err(Error::parse(self.path, n, format!("expected {key:?}"))),
        }
    }

    pub(crate) fn parse_field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.error(format!("bad value {v:?} for {key}")))
    }

    pub(crate) fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let v = self.field(key)?;
        v.split_whitespace()
            .map(|t| t.parse().map_err(|_| self.error(format!("bad entry {t:?} in {key}"))))
            .collect()
    }

    pub(crate) fn grid(&mut self) -> Result<Grid2D> {
        let v: Vec<f64> = self.list("grid")?;
        if v.len() != 6 {
            return Err(self.error("grid needs: nx ny hx hy ox oy"));
        }
        Grid2D::new(v[0] as usize, v[1] as usize, v[2], v[3], [v[4], v[5]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticManifoldSpec;
    use crate::diffusion::{generate_snapshots, DiffusionProblem, SolverOptions};

    #[test]
    fn diffusion_archive_round_trip() {
        let base = DiffusionProblem::iaea2d(10.0, 1.0).unwrap();
        let set = generate_snapshots(&base, &[1.0, 2.5], &SolverOptions::default(), SetRole::Training).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_snapshots(dir.path(), &base.domain, &set).unwrap();
        let (domain, back) = read_snapshots(dir.path()).unwrap();
        assert_eq!(back, set);
        assert_eq!(domain.regions(), base.domain.regions());
        assert_eq!(domain.symmetry(), Symmetry::QUARTER);
    }

    #[test]
    fn analytic_archive_round_trip() {
        let spec = AnalyticManifoldSpec {
            nodes: 9,
            mu_per_axis: 3,
            ..Default::default()
        };
        let set = spec.generate_test().unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_snapshots(dir.path(), &spec.domain().unwrap(), &set).unwrap();
        let (_, back) = read_snapshots(dir.path()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.role(), SetRole::Test);
    }

    #[test]
    fn model_round_trip() {
        use crate::geim::{greedy_build, GreedyOptions};
        let base = DiffusionProblem::iaea2d(10.0, 1.0).unwrap();
        let mus: Vec<f64> = (0..6).map(|i| 1.0 + 0.4 * i as f64).collect();
        let set = generate_snapshots(&base, &mus, &SolverOptions::default(), SetRole::Training).unwrap();
        let mask = base.domain.restrict_mask(SensorRegion::Core).unwrap();
        let mut opts = GreedyOptions::new(4, NormKind::L2).with_sensors(9);
        opts.resolution = 1e-9;
        let mut model = greedy_build(&set, base.domain.clone(), &mask, &opts).unwrap();
        model.case = Some(SensorRegion::Core);
        model.scale = 0.25;
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), &model).unwrap();
        let back = read_model(dir.path()).unwrap();
        assert_eq!(back.dim(), 4);
        assert_eq!(back.case, Some(SensorRegion::Core));
        assert_eq!(back.scale, 0.25);
        assert_eq!(back.resolution(), 1e-9);
        assert_eq!(back.sensors(), model.sensors());
        assert_eq!(back.selected(), model.selected());
        assert_eq!(back.selected_mus(), model.selected_mus());
        assert_eq!(back.training_errors(), model.training_errors());
        assert_eq!(back.lebesgue_table(), model.lebesgue_table());
        assert_eq!(back.sup_lebesgue_table(), model.sup_lebesgue_table());
        assert_eq!(back.training_coefficients(), model.training_coefficients());
        assert_eq!(coefficient_bounds(&back), coefficient_bounds(&model));
        for c in Component::ALL {
            for i in 0..4 {
                assert_eq!(back.basis(c, i).unwrap(), model.basis(c, i).unwrap());
            }
        }
        assert_eq!(back.domain().regions(), model.domain().regions());
        let table = fs::read_to_string(dir.path().join("tables.csv")).unwrap();
        assert!(table.starts_with("n,eps,lambda,eps_sup,lambda_sup,r\n0,"));
    }

    #[test]
    fn truncated_block_is_reported() {
        let spec = AnalyticManifoldSpec {
            nodes: 5,
            mu_per_axis: 1,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        write_snapshots(dir.path(), &spec.domain().unwrap(), &spec.generate().unwrap()).unwrap();
        fs::write(dir.path().join("snapshot_0000.bin"), [0u8; 12]).unwrap();
        assert!(matches!(read_snapshots(dir.path()), Err(Error::Parse { .. })));
        fs::remove_file(dir.path().join("manifest.txt")).unwrap();
        assert!(matches!(read_snapshots(dir.path()), Err(Error::Io { .. })));
    }
}
