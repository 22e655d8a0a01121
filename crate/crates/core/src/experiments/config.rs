use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analytic::AnalyticManifoldSpec;
use crate::csgeim::DEFAULT_ALPHA;
use crate::diffusion::Component;
use crate::error::{Error, Result};
use crate::geim::ErrorScale;
use crate::mesh::{NormKind, SensorRegion};

/// Number of measurements used by CS-GEIM at basis dimension `n`.
#[derive(Clone, Debug, PartialEq)]
pub enum MRule {
    /// `m = ceil(ratio * n)`.
    Ratio(f64),
    /// The same `m` for every `n`.
    Fixed(usize),
    /// `m = k n` for each listed factor.
    Sweep(Vec<usize>),
}

impl MRule {
    pub fn ms(&self, n: usize) -> Vec<usize> {
        match self {
            MRule::Ratio(r) => vec![((r * n as f64) - 1e-9).ceil().max(n as f64) as usize],
            MRule::Fixed(m) => vec![*m],
            MRule::Sweep(f) => f.iter().map(|k| k * n).collect(),
        }
    }

    pub fn max_m(&self, n_max: usize) -> usize {
        (1..=n_max).flat_map(|n| self.ms(n)).max().unwrap_or(0)
    }
}

impl fmt::Display for MRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MRule::Ratio(r) => write!(f, "ratio {r}"),
            MRule::Fixed(m) => write!(f, "fixed {m}"),
            MRule::Sweep(k) => {
                let k: Vec<String> = k.iter().map(usize::to_string).collect();
                write!(f, "sweep {}", k.join(","))
            }
        }
    }
}

impl FromStr for MRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad m rule {s:?} (ratio <r>, fixed <m> or sweep <k1,k2,...>)"));
        let (kind, arg) = s.trim().split_once(char::is_whitespace).ok_or_else(bad)?;
        let arg = arg.trim();
        match kind {
            "ratio" => {
                let r: f64 = arg.parse().map_err(|_| bad())?;
                if !(r.is_finite() && r >= 1.0) {
                    return Err(Error::Config(format!("m ratio {r} must be >= 1")));
                }
                Ok(MRule::Ratio(r))
            }
            "fixed" => Ok(MRule::Fixed(arg.parse().map_err(|_| bad())?)),
            "sweep" => {
                let k = arg
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                if k.iter().any(|&k| k == 0) {
                    return Err(bad());
                }
                Ok(MRule::Sweep(k))
            }
            _ => Err(bad()),
        }
    }
}

/// Where the training and test snapshots come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Snapshot archives written by `generate`.
    Snapshots { training: PathBuf, test: PathBuf },
    Analytic(AnalyticManifoldSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub case: SensorRegion,
    pub norm: NormKind,
    pub n_min: usize,
    pub n_max: usize,
    pub m_rule: MRule,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub repetitions: usize,
    pub alpha: f64,
    pub error_scale: ErrorScale,
    pub components: Vec<Component>,
    pub source: DataSource,
    /// Trained model to reuse instead of running the greedy.
    pub model: Option<PathBuf>,
    /// Relative snapshot accuracy flooring the coefficient bounds.
    pub resolution: Option<f64>,
    pub output: PathBuf,
}

impl StudyConfig {
    /// Defaults for a snapshot-archive study.
    pub fn new(training: impl Into<PathBuf>, test: impl Into<PathBuf>) -> Self {
        StudyConfig::with_source(DataSource::Snapshots {
            training: training.into(),
            test: test.into(),
        })
    }

    pub fn with_source(source: DataSource) -> Self {
        StudyConfig {
            case: SensorRegion::All,
            norm: NormKind::L2,
            n_min: 1,
            n_max: 30,
            m_rule: MRule::Ratio(2.0),
            sigmas: vec![1e-2],
            seed: 1,
            repetitions: 50,
            alpha: DEFAULT_ALPHA,
            error_scale: ErrorScale::Relative,
            components: vec![Component::Phi2],
            source,
            model: None,
            resolution: None,
            output: PathBuf::from("results"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_min == 0 || self.n_min > self.n_max {
            return fail(format!("n range {}..={} is empty", self.n_min, self.n_max));
        }
        if let MRule::Fixed(m) = self.m_rule {
            if m < self.n_max {
                return fail(format!("fixed m = {m} is below n_max = {}", self.n_max));
            }
        }
        if self.sigmas.is_empty() {
            return fail("no noise levels given".into());
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return fail(format!("noise sigma {s} must be finite and >= 0"));
        }
        if self.repetitions == 0 {
            return fail("repetitions must be >= 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return fail(format!("alpha = {} must exceed 1", self.alpha));
        }
        if self.components.is_empty() {
            return fail("no components requested".into());
        }
        if let Some(r) = self.resolution.filter(|r| !(r.is_finite() && *r >= 0.0)) {
            return fail(format!("resolution {r} must be >= 0"));
        }
        if let DataSource::Analytic(spec) = &self.source {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Reads a `key = value` file. Relative input paths are taken from the
    /// file's directory, a relative output path from `output_root` when given.
    pub fn load(path: impl AsRef<Path>, output_root: Option<&Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base, output_root)
    }

    pub fn parse(text: &str, path: &Path, base: &Path, output_root: Option<&Path>) -> Result<Self> {
        let mut cfg = StudyConfig::with_source(DataSource::Analytic(AnalyticManifoldSpec::default()));
        let mut source: Option<String> = None;
        let mut training = None;
        let mut test = None;
        let mut analytic = AnalyticManifoldSpec::default();
        let mut output = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(path, i + 1, msg);
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            fn num<T: FromStr>(v: &str, key: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
            }
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "case" => cfg.case = value.parse().map_err(|e: Error| e.to_string())?,
                    "norm" => cfg.norm = value.parse().map_err(|e: Error| e.to_string())?,
                    "n_min" => cfg.n_min = num(value, key)?,
                    "n_max" => cfg.n_max = num(value, key)?,
                    "m_rule" => cfg.m_rule = value.parse().map_err(|e: Error| e.to_string())?,
                    "sigma" => {
                        cfg.sigmas = value
                            .split(',')
                            .map(|v| num(v.trim(), key))
                            .collect::<std::result::Result<_, _>>()?
                    }
                    "seed" => cfg.seed = num(value, key)?,
                    "repetitions" => cfg.repetitions = num(value, key)?,
                    "alpha" => cfg.alpha = num(value, key)?,
                    "error_scale" => cfg.error_scale = value.parse().map_err(|e: Error| e.to_string())?,
                    "components" => {
                        cfg.components = value
                            .split(',')
                            .map(|v| v.trim().parse())
                            .collect::<Result<_>>()
                            .map_err(|e| e.to_string())?
                    }
                    "source" => source = Some(value.to_string()),
                    "training" => training = Some(base.join(value)),
                    "test" => test = Some(base.join(value)),
                    "model" => cfg.model = Some(base.join(value)),
                    "resolution" => cfg.resolution = Some(num(value, key)?),
                    "output" => output = Some(PathBuf::from(value)),
                    "analytic_nodes" => analytic.nodes = num(value, key)?,
                    "analytic_mu_per_axis" => analytic.mu_per_axis = num(value, key)?,
                    "analytic_mu_lo" => analytic.mu_lo = num(value, key)?,
                    "analytic_mu_hi" => analytic.mu_hi = num(value, key)?,
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            r.map_err(bad)?;
        }
        let source = source.unwrap_or_else(|| if training.is_some() { "snapshots" } else { "analytic" }.into());
        cfg.source = match source.as_str() {
            "snapshots" => match (training, test) {
                (Some(training), Some(test)) => DataSource::Snapshots { training, test },
                _ => return Err(Error::Config("snapshot source needs both `training` and `test`".into())),
            },
            "analytic" => DataSource::Analytic(analytic),
            other => return Err(Error::Config(format!("unknown source {other:?} (snapshots, analytic)"))),
        };
        let output = output.unwrap_or_else(|| PathBuf::from("results"));
        cfg.output = match output_root {
            Some(root) if output.is_relative() => root.join(output),
            _ if output.is_relative() => base.join(output),
            _ => output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Largest `m` any requested `n` needs.
    pub fn m_max(&self) -> usize {
        self.m_rule.max_m(self.n_max).max(self.n_max)
    }

    /// File-name stem for this case and norm.
    pub fn stem(&self, study: &str) -> String {
        format!("{study}_case{}_{}", self.case.case_tag(), self.norm)
    }
}

/// Full `key = value` echo, parseable by [`StudyConfig::parse`].
impl fmt::Display for StudyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig: Vec<String> = self.sigmas.iter().map(|s| format!("{s:e}")).collect();
        let comps: Vec<&str> = self.components.iter().map(Component::tag).collect();
        writeln!(f, "case = {}", self.case.case_tag())?;
        writeln!(f, "norm = {}", self.norm)?;
        writeln!(f, "n_min = {}", self.n_min)?;
        writeln!(f, "n_max = {}", self.n_max)?;
        writeln!(f, "m_rule = {}", self.m_rule)?;
        writeln!(f, "sigma = {}", sig.join(","))?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "repetitions = {}", self.repetitions)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "error_scale = {}", self.error_scale)?;
        writeln!(f, "components = {}", comps.join(","))?;
        match &self.source {
            DataSource::Snapshots { training, test } => {
                writeln!(f, "source = snapshots")?;
                writeln!(f, "training = {}", training.display())?;
                writeln!(f, "test = {}", test.display())?;
            }
            DataSource::Analytic(a) => {
                writeln!(f, "source = analytic")?;
                writeln!(f, "analytic_nodes = {}", a.nodes)?;
                writeln!(f, "analytic_mu_per_axis = {}", a.mu_per_axis)?;
                writeln!(f, "analytic_mu_lo = {}", a.mu_lo)?;
                writeln!(f, "analytic_mu_hi = {}", a.mu_hi)?;
            }
        }
        if let Some(m) = &self.model {
            writeln!(f, "model = {}", m.display())?;
        }
        if let Some(r) = self.resolution {
            writeln!(f, "resolution = {r:e}")?;
        }
        writeln!(f, "output = {}", self.output.display())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<StudyConfig> {
        StudyConfig::parse(text, Path::new("study.cfg"), Path::new("/data"), None)
    }

    #[test]
    fn full_file() {
        let cfg = parse(
            "# noise study\ncase = II\nnorm = h1\nn_min = 2\nn_max = 20\nm_rule = ratio 1.5\n\
             sigma = 1e-2, 1e-4,0\nseed = 7\nrepetitions = 10\nalpha = 3\nerror_scale = absolute\n\
             components = phi2, power\ntraining = train\ntest = /abs/test  # trailing\nresolution = 1e-9\n",
        )
        .unwrap();
        assert_eq!(cfg.case, SensorRegion::Core);
        assert_eq!(cfg.norm, NormKind::H1Semi);
        assert_eq!((cfg.n_min, cfg.n_max), (2, 20));
        assert_eq!(cfg.m_rule, MRule::Ratio(1.5));
        assert_eq!(cfg.sigmas, vec![1e-2, 1e-4, 0.0]);
        assert_eq!((cfg.seed, cfg.repetitions, cfg.alpha), (7, 10, 3.0));
        assert_eq!(cfg.error_scale, ErrorScale::Absolute);
        assert_eq!(cfg.components, vec![Component::Phi2, Component::Power]);
        assert_eq!(
            cfg.source,
            DataSource::Snapshots {
                training: PathBuf::from("/data/train"),
                test: PathBuf::from("/abs/test")
            }
        );
        assert_eq!(cfg.output, PathBuf::from("/data/results"));
        assert_eq!(cfg.m_max(), 30);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse("source = analytic\nanalytic_nodes = 33\nm_rule = sweep 1,2,4\nn_min = 5\nn_max = 5\nsigma = 0.01\n")
            .unwrap();
        let again = parse(&cfg.to_string()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(cfg.m_max(), 20);
    }

    #[test]
    fn output_root_applies_to_relative_outputs() {
        let p = Path::new("c");
        let cfg = StudyConfig::parse("output = out\n", p, Path::new("/cfg"), Some(Path::new("/root/runs"))).unwrap();
        assert_eq!(cfg.output, PathBuf::from("/root/runs/out"));
        let cfg = StudyConfig::parse("output = /tmp/x\n", p, Path::new("/cfg"), Some(Path::new("/root"))).unwrap();
        assert_eq!(cfg.output, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn errors_are_config_errors() {
        for text in [
            "bogus = 1",
            "n_max",
            "n_max = x",
            "case = III",
            "m_rule = ratio 0.5",
            "m_rule = sweep 1,0",
            "m_rule = fixed 10",
            "sigma = -1",
            "repetitions = 0",
            "alpha = 1",
            "source = snapshots\ntraining = a",
            "source = other",
            "components = phi3",
            "n_min = 5\nn_max = 4",
        ] {
            let e = parse(text).unwrap_err();
            assert!(e.is_config_error(), "{text}: {e}");
        }
    }

    #[test]
    fn m_rules() {
        assert_eq!(MRule::Ratio(2.0).ms(7), vec![14]);
        assert_eq!(MRule::Ratio(1.5).ms(3), vec![5]);
        assert_eq!(MRule::Ratio(1.0).ms(3), vec![3]);
        assert_eq!(MRule::Fixed(40).ms(3), vec![40]);
        assert_eq!(MRule::Sweep(vec![1, 2, 4]).ms(3), vec![3, 6, 12]);
        assert_eq!(MRule::Sweep(vec![1, 16]).max_m(10), 160);
        for s in ["ratio 2.5", "fixed 60", "sweep 1,2,4,8,16"] {
            assert_eq!(s.parse::<MRule>().unwrap().to_string(), s);
        }
    }
}
