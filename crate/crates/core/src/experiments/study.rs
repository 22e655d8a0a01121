use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::config::{DataSource, MRule, StudyConfig};
use super::noise::normal_block;
use super::table::{fit_loglog_slope, mean_std, ErrorRow, ErrorTable, LogLogFit};
use crate::archive::{read_model, read_snapshots};
use crate::csgeim::{CoefficientCone, CsGeim};
use crate::diffusion::{Component, SnapshotSet};
use crate::error::{Error, Result};
use crate::geim::{greedy_build, interpolate, max_sensor_value, ErrorEvaluator, GeimModel, GreedyOptions};
use crate::mesh::{Domain, NormKind, SensorRegion};

/// Relative accuracy of solver-generated snapshots.
pub const DIFFUSION_RESOLUTION: f64 = 1e-9;

/// Reciprocal of the largest thermal value over the Case I sensor region.
pub fn normalization_scale(domain: &Domain, training: &SnapshotSet) -> Result<f64> {
    let mask = domain.restrict_mask(SensorRegion::All)?;
    let peak = max_sensor_value(training, &mask);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidInput(format!("training peak sensor value {peak} cannot be normalized")));
    }
    Ok(1.0 / peak)
}

/// Normalized training and test sets on a shared domain.
#[derive(Clone, Debug)]
pub struct StudyData {
    pub domain: Arc<Domain>,
    pub training: SnapshotSet,
    pub test: SnapshotSet,
    /// Factor already applied to both sets.
    pub scale: f64,
    pub resolution: f64,
}

impl StudyData {
    /// Scales both sets so the largest thermal value over the Case I sensor
    /// region of the training set is one.
    pub fn new(domain: Arc<Domain>, training: SnapshotSet, test: SnapshotSet, resolution: f64) -> Result<Self> {
        let scale = normalization_scale(&domain, &training)?;
        Self::with_scale(domain, training, test, scale, resolution)
    }

    pub fn with_scale(
        domain: Arc<Domain>,
        mut training: SnapshotSet,
        mut test: SnapshotSet,
        scale: f64,
        resolution: f64,
    ) -> Result<Self> {
        domain.grid().check_same(training.grid())?;
        domain.grid().check_same(test.grid())?;
        training.scale(scale);
        test.scale(scale);
        Ok(StudyData {
            domain,
            training,
            test,
            scale,
            resolution,
        })
    }

    /// Loads or generates the configured sets. With a stored model the sets
    /// take the model's scale factor.
    pub fn load(cfg: &StudyConfig, model_scale: Option<f64>) -> Result<Self> {
        let (domain, training, test, resolution) = match &cfg.source {
            DataSource::Snapshots { training, test } => {
                let (domain, tr) = read_snapshots(training)?;
                let (_, te) = read_snapshots(test)?;
                (domain, tr, te, cfg.resolution.unwrap_or(DIFFUSION_RESOLUTION))
            }
            DataSource::Analytic(spec) => (
                spec.domain()?,
                spec.generate()?,
                spec.generate_test()?,
                cfg.resolution.unwrap_or(0.0),
            ),
        };
        let domain = Arc::new(domain);
        match model_scale {
            Some(s) => Self::with_scale(domain, training, test, s, resolution),
            None => Self::new(domain, training, test, resolution),
        }
    }

    /// Greedy in `norm` over the admissible nodes of `case`, storing `m_max`
    /// sensors.
    pub fn train(&self, case: SensorRegion, norm: NormKind, n_max: usize, m_max: usize) -> Result<GeimModel> {
        let mask = self.domain.restrict_mask(case)?;
        let mut opts = GreedyOptions::new(n_max, norm).with_sensors(m_max);
        opts.resolution = self.resolution;
        let mut model = greedy_build(&self.training, self.domain.clone(), &mask, &opts)?;
        model.case = Some(case);
        model.scale = self.scale;
        Ok(model)
    }
}

/// Loads the data, trains (or reads) the model, and runs the study.
pub fn prepare_study(cfg: &StudyConfig) -> Result<(GeimModel, StudyData)> {
    cfg.validate()?;
    match &cfg.model {
        Some(dir) => {
            let model = read_model(dir)?;
            let data = StudyData::load(cfg, Some(model.scale))?;
            Ok((model, data))
        }
        None => {
            let data = StudyData::load(cfg, None)?;
            let model = data.train(cfg.case, cfg.norm, cfg.n_max, cfg.m_max())?;
            Ok((model, data))
        }
    }
}

/// Noise study output.
///
/// The primary tables hold, for every row, the largest over test parameters
/// of the mean error over repetitions; `std_error` is the spread of the
/// repetitions at that parameter. The `mean_of_max` tables hold the mean and
/// spread over repetitions of the largest test error.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseStudy {
    /// Plain GEIM on noisy data, `m = n`.
    pub geim: ErrorTable,
    pub csgeim: ErrorTable,
    pub geim_mean_of_max: ErrorTable,
    pub csgeim_mean_of_max: ErrorTable,
}

impl NoiseStudy {
    pub fn tables(&self) -> [(&'static str, &ErrorTable); 4] {
        [
            ("geim", &self.geim),
            ("csgeim", &self.csgeim),
            ("geim_meanmax", &self.geim_mean_of_max),
            ("csgeim_meanmax", &self.csgeim_mean_of_max),
        ]
    }
}

pub fn run_noise_study(cfg: &StudyConfig) -> Result<NoiseStudy> {
    let (model, data) = prepare_study(cfg)?;
    run_noise_study_with(&model, &data.test, cfg)
}

/// Noise study on an already trained model. `test` must be normalized like
/// the training data.
pub fn run_noise_study_with(model: &GeimModel, test: &SnapshotSet, cfg: &StudyConfig) -> Result<NoiseStudy> {
    cfg.validate()?;
    let ns: Vec<usize> = (cfg.n_min..=cfg.n_max).collect();
    run_plan(model, test, cfg, &ns)
}

/// `m`-sweep at fixed `n = n_max` with a log-log slope per noise level and
/// component.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioStudy {
    pub study: NoiseStudy,
    pub fits: Vec<SlopeFit>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub sigma: f64,
    pub component: Component,
    pub fit: LogLogFit,
}

pub fn run_ratio_study(cfg: &StudyConfig) -> Result<RatioStudy> {
    let (model, data) = prepare_study(cfg)?;
    run_ratio_study_with(&model, &data.test, cfg)
}

pub fn run_ratio_study_with(model: &GeimModel, test: &SnapshotSet, cfg: &StudyConfig) -> Result<RatioStudy> {
    cfg.validate()?;
    match &cfg.m_rule {
        MRule::Sweep(k) if k.len() >= 3 => {}
        other => {
            return Err(Error::Config(format!(
                "ratio study needs an m sweep with at least 3 factors, got `{other}`"
            )))
        }
    }
    let study = run_plan(model, test, cfg, &[cfg.n_max])?;
    let mut fits = Vec::new();
    for &sigma in &cfg.sigmas {
        for &component in &cfg.components {
            let pts: Vec<(f64, f64)> = study
                .csgeim
                .select(sigma, component)
                .map(|r| (r.m as f64, r.mean_error))
                .collect();
            fits.push(SlopeFit {
                sigma,
                component,
                fit: fit_loglog_slope(&pts)?,
            });
        }
    }
    Ok(RatioStudy { study, fits })
}

struct Plan<'a> {
    model: &'a GeimModel,
    cfg: &'a StudyConfig,
    ns: &'a [usize],
    /// `(n, m)` pairs for CS-GEIM.
    jobs: Vec<(usize, usize)>,
    solvers: Vec<CsGeim>,
    cone: CoefficientCone,
    evaluators: Vec<ErrorEvaluator<'a>>,
    /// Standard normal draws per repetition.
    draws: Vec<Vec<f64>>,
    m_max: usize,
}

impl Plan<'_> {
    fn slots(&self) -> usize {
        (self.ns.len() + self.jobs.len()) * self.evaluators.len()
    }

    /// Errors for one test snapshot, laid out `[sigma][repetition][slot]`
    /// with the plain GEIM slots first.
    fn evaluate(&self, snap: &crate::diffusion::Snapshot) -> Result<Vec<f64>> {
        let thermal = snap.phi2.values();
        let n_top = *self.ns.last().expect("non-empty n range");
        let targets = self
            .evaluators
            .iter()
            .map(|ev| {
                let f = snap
                    .component(ev.component())
                    .ok_or(Error::MissingComponent(ev.component()))?;
                ev.prepare(thermal, f.values())
            })
            .collect::<Result<Vec<_>>>()?;
        let exact = self.model.measure_all(thermal, self.m_max);
        let reps = self.cfg.repetitions;
        let slots = self.slots();
        let mut out = Vec::with_capacity(self.cfg.sigmas.len() * reps * slots);
        for &sigma in &self.cfg.sigmas {
            for rep in 0..reps {
                if sigma == 0.0 && rep > 0 {
                    let first = out.len() - rep * slots;
                    out.extend_from_within(first..first + slots);
                    continue;
                }
                let y: Vec<f64> = exact.iter().zip(&self.draws[rep]).map(|(v, z)| v + sigma * z).collect();
                let plain = interpolate(self.model, &y[..n_top])?;
                for &n in self.ns {
                    for (ev, t) in self.evaluators.iter().zip(&targets) {
                        out.push(ev.error(t, &plain[..n])?);
                    }
                }
                for solver in &self.solvers {
                    let sol = solver.solve(&y)?;
                    if !self.cone.contains(&sol.x) {
                        return Err(Error::LinearSolver("CS-GEIM coefficients left the cone".into()));
                    }
                    for (ev, t) in self.evaluators.iter().zip(&targets) {
                        out.push(ev.error(t, &sol.x)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn run_plan(model: &GeimModel, test: &SnapshotSet, cfg: &StudyConfig, ns: &[usize]) -> Result<NoiseStudy> {
    model.domain().grid().check_same(test.grid())?;
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let n_top = *ns.last().ok_or_else(|| Error::Config("empty n range".into()))?;
    if n_top > model.dim() {
        return Err(Error::Config(format!(
            "n_max = {n_top} exceeds the model dimension {}",
            model.dim()
        )));
    }
    let jobs: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| cfg.m_rule.ms(n).into_iter().map(move |m| (n, m.max(n))))
        .collect();
    let m_max = jobs.iter().map(|j| j.1).max().unwrap_or(n_top).max(n_top);
    if m_max > model.num_sensors() {
        return Err(Error::Config(format!(
            "the m rule needs {m_max} sensors but the model stores {}",
            model.num_sensors()
        )));
    }
    let cone = CoefficientCone::new(model, cfg.alpha)?;
    let solvers = jobs
        .iter()
        .map(|&(n, m)| CsGeim::new(model, n, m, &cone))
        .collect::<Result<Vec<_>>>()?;
    let evaluators = cfg
        .components
        .iter()
        .map(|&c| ErrorEvaluator::new(model, cfg.norm, c, cfg.error_scale))
        .collect::<Result<Vec<_>>>()?;
    let draws = (0..cfg.repetitions as u64)
        .map(|r| normal_block(cfg.seed, r, m_max))
        .collect();
    let plan = Plan {
        model,
        cfg,
        ns,
        jobs,
        solvers,
        cone,
        evaluators,
        draws,
        m_max,
    };

    let per_test = parallel_map(test.snapshots(), |s| plan.evaluate(s))?;
    Ok(aggregate(&plan, &per_test))
}

/// Applies `f` to every item on all available cores; results keep the
/// input order and the first failure (in input order) is returned.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let mut parts: Vec<Vec<(usize, Result<R>)>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    (w..items.len())
                        .step_by(workers)
                        .map(|i| (i, f(&items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        parts = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
    });
    let mut all: Vec<(usize, Result<R>)> = parts.into_iter().flatten().collect();
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, r)| r).collect()
}

fn aggregate(plan: &Plan<'_>, per_test: &[Vec<f64>]) -> NoiseStudy {
    let cfg = plan.cfg;
    let reps = cfg.repetitions;
    let slots = plan.slots();
    let nc = plan.evaluators.len();
    let mut study = NoiseStudy::default();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let at = |t: usize, rep: usize, slot: usize| per_test[t][(si * reps + rep) * slots + slot];
        let row_for = |slot: usize, n: usize, m: usize, component: Component| {
            let series = |t: usize| -> Vec<f64> { (0..reps).map(|r| at(t, r, slot)).collect() };
            // largest per-parameter mean; first index wins ties
            let mut best = (0, f64::NEG_INFINITY, 0.0);
            for t in 0..per_test.len() {
                let (mean, std) = mean_std(&series(t));
                if mean > best.1 {
                    best = (t, mean, std);
                }
            }
            let maxes: Vec<f64> = (0..reps)
                .map(|r| (0..per_test.len()).map(|t| at(t, r, slot)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let (mm, ms) = mean_std(&maxes);
            let row = |mean_error, std_error| ErrorRow {
                n,
                m,
                sigma,
                component,
                norm: cfg.norm,
                mean_error,
                std_error,
                repetitions: reps,
            };
            (row(best.1, best.2), row(mm, ms))
        };
        for (k, &n) in plan.ns.iter().enumerate() {
            for (ci, ev) in plan.evaluators.iter().enumerate() {
                let (a, b) = row_for(k * nc + ci, n, n, ev.component());
                study.geim.rows.push(a);
                study.geim_mean_of_max.rows.push(b);
            }
        }
        let base = plan.ns.len() * nc;
        for (k, &(n, m)) in plan.jobs.iter().enumerate() {
            for (ci, ev) in plan.evaluators.iter().enumerate() {
                let (a, b) = row_for(base + k * nc + ci, n, m, ev.component());
                study.csgeim.rows.push(a);
                study.csgeim_mean_of_max.rows.push(b);
            }
        }
    }
    study
}

/// Writes the four noise tables and a manifest into `dir`; returns the paths.
pub fn emit_noise_study(study: &NoiseStudy, cfg: &StudyConfig, model: &GeimModel, dir: &Path) -> Result<Vec<PathBuf>> {
    emit(study, cfg, model, dir, "noise", None)
}

pub fn emit_ratio_study(study: &RatioStudy, cfg: &StudyConfig, model: &GeimModel, dir: &Path) -> Result<Vec<PathBuf>> {
    emit(&study.study, cfg, model, dir, "ratio", Some(&study.fits))
}

fn emit(
    study: &NoiseStudy,
    cfg: &StudyConfig,
    model: &GeimModel,
    dir: &Path,
    kind: &str,
    fits: Option<&[SlopeFit]>,
) -> Result<Vec<PathBuf>> {
    for (_, t) in study.tables() {
        t.validate()?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = cfg.stem(kind);
    let mut paths = Vec::new();
    for (name, table) in study.tables() {
        let p = dir.join(format!("{stem}_{name}.csv"));
        table.write(&p)?;
        paths.push(p);
    }
    let mut manifest = format!("csgeim {}\n{kind} study\n\n[config]\n{cfg}\n", env!("CARGO_PKG_VERSION"));
    manifest.push_str(&format!(
        "[model]\nnorm = {}\ncase = {}\nn = {}\nsensors = {}\nscale = {:e}\nresolution = {:e}\n\n",
        model.norm(),
        model.case.map_or("-", |c| c.case_tag()),
        model.dim(),
        model.num_sensors(),
        model.scale,
        model.resolution(),
    ));
    manifest.push_str(&format!(
        "[noise]\ngenerator = chacha8, stream = repetition, word offset = sensor << 24\nseed = {}\nrepetitions = {}\n\n",
        cfg.seed, cfg.repetitions
    ));
    if let Some(fits) = fits {
        let mut csv = String::from("sigma,component,slope,intercept,residual\n");
        for f in fits {
            csv.push_str(&format!(
                "{:e},{},{:e},{:e},{:e}\n",
                f.sigma, f.component, f.fit.slope, f.fit.intercept, f.fit.residual
            ));
        }
        let p = dir.join(format!("{stem}_slopes.csv"));
        fs::write(&p, &csv).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    manifest.push_str("[files]\n");
    for p in &paths {
        manifest.push_str(&format!("{}\n", p.file_name().unwrap_or_default().to_string_lossy()));
    }
    let p = dir.join(format!("{stem}_manifest.txt"));
    fs::write(&p, manifest).map_err(|e| Error::io(&p, e))?;
    paths.push(p);
    Ok(paths)
}
