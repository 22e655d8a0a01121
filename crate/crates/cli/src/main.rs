use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use ::csgeim::analytic::AnalyticManifoldSpec;
use ::csgeim::archive::{read_model, read_snapshots, write_model, write_snapshots};
use ::csgeim::csgeim::{cs_reconstruct, CoefficientCone, MeasurementVector, DEFAULT_ALPHA};
use ::csgeim::diffusion::{cell_midpoints, equispaced, generate_snapshots, SolverOptions, MU_RANGE};
use ::csgeim::experiments::{
    emit_noise_study, emit_ratio_study, normalization_scale, prepare_study, run_noise_study_with,
    run_ratio_study_with, NoiseSpec, StudyConfig, DIFFUSION_RESOLUTION,
};
use ::csgeim::geim::{coefficient_bounds, greedy_build, interpolate, reconstruct, svd_baseline, GreedyOptions, SensorExtension};
use ::csgeim::{Component, DiffusionProblem, Error, NormKind, SensorRegion, SetRole, SnapshotSet};

/// Environment variable giving the root for relative study output paths.
const OUTPUT_ROOT_VAR: &str = "CSGEIM_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "csgeim", version, about = "GEIM and CS-GEIM reconstruction of IAEA 2D flux fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the diffusion benchmark (or sample the analytic manifold) and archive the snapshots.
    Generate(GenerateArgs),
    /// Run the greedy on a snapshot archive and store the model.
    Train(TrainArgs),
    /// Reconstruct one field from (noisy) sensor readings.
    Reconstruct(ReconstructArgs),
    /// Noise robustness study described by a config file.
    StudyNoise(StudyArgs),
    /// Error versus number of measurements at fixed n, with a log-log slope.
    StudyRatio(StudyArgs),
    /// Singular values of a snapshot archive.
    BaselineSvd(SvdArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output archive directory.
    #[arg(long)]
    out: PathBuf,
    /// training: equispaced parameters including the endpoints; test: cell midpoints.
    #[arg(long, default_value = "training")]
    role: SetRole,
    /// Number of parameter values (IAEA).
    #[arg(long, default_value_t = 300)]
    count: usize,
    /// Mesh spacing in cm (IAEA).
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Sample g(x, mu) = 1/|x - mu| instead of solving the benchmark.
    #[arg(long)]
    analytic: bool,
    #[arg(long, default_value_t = 64)]
    nodes: usize,
    #[arg(long, default_value_t = 20)]
    mu_per_axis: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    training: PathBuf,
    /// Output model directory.
    #[arg(long)]
    out: PathBuf,
    /// I: sensors anywhere; II: fuel only.
    #[arg(long, default_value = "I")]
    case: SensorRegion,
    #[arg(long, default_value = "l2")]
    norm: NormKind,
    /// Basis dimension.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Stored sensors (at least n).
    #[arg(long, default_value_t = 60)]
    m: usize,
    /// Relative snapshot accuracy for the coefficient bounds; default 1e-9 for
    /// solver snapshots and 0 for analytic ones.
    #[arg(long)]
    resolution: Option<f64>,
    /// Draw the sensors beyond n at random instead of continuing the greedy.
    #[arg(long)]
    random_extra: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Archive holding the field to reconstruct (scaled like the model's training data).
    #[arg(long, required_unless_present = "measurements")]
    snapshots: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Whitespace-separated readings at the first m sensors, already normalized.
    #[arg(long, conflicts_with = "snapshots")]
    measurements: Option<PathBuf>,
    /// Writes `x,y,value` rows of the reconstruction.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "phi2")]
    component: Component,
}

#[derive(Args)]
struct StudyArgs {
    /// `key = value` study description.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SvdArgs {
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long, default_value = "phi2")]
    component: Component,
    /// Print only the leading values.
    #[arg(long)]
    count: Option<usize>,
    /// Also write `k,sigma` rows to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::StudyNoise(a) => study(a, false),
        Command::StudyRatio(a) => study(a, true),
        Command::BaselineSvd(a) => baseline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    let (domain, set) = if a.analytic {
        let spec = AnalyticManifoldSpec {
            nodes: a.nodes,
            mu_per_axis: a.mu_per_axis,
            ..Default::default()
        };
        let set = match a.role {
            SetRole::Training => spec.generate()?,
            SetRole::Test => spec.generate_test()?,
        };
        (spec.domain()?, set)
    } else {
        if a.count == 0 {
            return Err(Error::Config("count must be >= 1".into()));
        }
        let mus = match a.role {
            SetRole::Training => equispaced(MU_RANGE.0, MU_RANGE.1, a.count),
            SetRole::Test => cell_midpoints(MU_RANGE.0, MU_RANGE.1, a.count),
        };
        let base = DiffusionProblem::iaea2d(a.h, mus[0])?;
        let set = generate_snapshots(&base, &mus, &SolverOptions::default(), a.role)?;
        ((*base.domain).clone(), set)
    };
    write_snapshots(&a.out, &domain, &set)?;
    println!("wrote {} {} snapshots to {}", set.len(), set.role().tag(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let (domain, mut set) = read_snapshots(&a.training)?;
    let scale = normalization_scale(&domain, &set)?;
    set.scale(scale);
    let solver_data = set.get(0).keff.is_some();
    let mask = domain.restrict_mask(a.case)?;
    let mut opts = GreedyOptions::new(a.n, a.norm).with_sensors(a.m);
    opts.resolution = a
        .resolution
        .unwrap_or(if solver_data { DIFFUSION_RESOLUTION } else { 0.0 });
    opts.seed = a.seed;
    if a.random_extra {
        opts.extension = SensorExtension::Random;
    }
    let mut model = greedy_build(&set, Arc::new(domain), &mask, &opts)?;
    model.case = Some(a.case);
    model.scale = scale;
    write_model(&a.out, &model)?;
    let r = coefficient_bounds(&model);
    println!("n,eps,lambda,r");
    for n in 1..=model.dim() {
        println!(
            "{n},{:e},{:e},{:e}",
            model.training_errors()[n],
            model.lebesgue_table()[n - 1],
            r[n - 1]
        );
    }
    eprintln!(
        "model with n = {}, {} sensors written to {}",
        model.dim(),
        model.num_sensors(),
        a.out.display()
    );
    Ok(())
}

fn read_values(path: &Path) -> Result<Vec<f64>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: bad reading {t:?}", path.display())))
        })
        .collect()
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<(), Error> {
    let model = read_model(&a.model)?;
    let noise = NoiseSpec::new(a.sigma, a.seed, 1)?;
    let (truth, exact) = match (&a.snapshots, &a.measurements) {
        (_, Some(p)) => {
            let v = read_values(p)?;
            if v.len() < a.m {
                return Err(Error::Config(format!("{} readings given, m = {}", v.len(), a.m)));
            }
            (None, v[..a.m].to_vec())
        }
        (Some(dir), None) => {
            let (_, mut set) = read_snapshots(dir)?;
            if a.index >= set.len() {
                return Err(Error::Config(format!("index {} but the archive holds {}", a.index, set.len())));
            }
            set.scale(model.scale);
            let snap = set.get(a.index).clone();
            let y = model.measure_all(snap.phi2.values(), a.m.min(model.num_sensors()));
            (Some(snap), y)
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if a.m < a.n || a.m > model.num_sensors() {
        return Err(Error::Config(format!(
            "m = {} must lie in n..={} (n = {})",
            a.m,
            model.num_sensors(),
            a.n
        )));
    }
    let meas: MeasurementVector = noise.perturb(&exact, 0);
    let cone = CoefficientCone::new(&model, a.alpha)?;
    let cs = cs_reconstruct(&model, &meas, a.n, &cone, &[a.component])?;
    let plain = interpolate(&model, &meas.values[..a.n])?;
    println!("i,plain,csgeim,bound");
    for i in 0..a.n {
        println!("{},{:e},{:e},{:e}", i + 1, plain[i], cs.coefficients[i], cone.bounds()[i]);
    }
    println!("objective {:e}", cs.objective);
    let field = cs.field(a.component).expect("requested component");
    if let Some(snap) = &truth {
        let domain = model.domain();
        let f = snap
            .component(a.component)
            .ok_or(Error::MissingComponent(a.component))?;
        let fnorm = domain.norm(f, model.norm())?;
        let plain_field = reconstruct(&model, &plain, a.component)?;
        println!(
            "relative {} error: plain {:e} csgeim {:e}",
            model.norm(),
            domain.distance(&plain_field, f, model.norm())? / fnorm,
            domain.distance(field, f, model.norm())? / fnorm
        );
    }
    if let Some(out) = &a.out {
        let grid = field.grid();
        let mut s = String::from("x,y,value\n");
        for (k, v) in field.values().iter().enumerate() {
            let [x, y] = grid.position(k);
            let _ = writeln!(s, "{x},{y},{v:e}");
        }
        fs::write(out, s).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn study(a: StudyArgs, ratio: bool) -> Result<(), Error> {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from);
    let cfg = StudyConfig::load(&a.config, root.as_deref())?;
    let (model, data) = prepare_study(&cfg)?;
    let paths = if ratio {
        let r = run_ratio_study_with(&model, &data.test, &cfg)?;
        for f in &r.fits {
            println!(
                "sigma {:e} {}: slope {:.4} (residual {:.2e})",
                f.sigma, f.component, f.fit.slope, f.fit.residual
            );
        }
        emit_ratio_study(&r, &cfg, &model, &cfg.output)?
    } else {
        let s = run_noise_study_with(&model, &data.test, &cfg)?;
        emit_noise_study(&s, &cfg, &model, &cfg.output)?
    };
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn baseline(a: SvdArgs) -> Result<(), Error> {
    let (domain, set): (_, SnapshotSet) = read_snapshots(&a.snapshots)?;
    let s = svd_baseline(&set, &domain, a.component)?;
    let k = a.count.unwrap_or(s.len()).min(s.len());
    let mut csv = String::from("k,sigma\n");
    for (i, v) in s.iter().take(k).enumerate() {
        let _ = writeln!(csv, "{},{v:e}", i + 1);
    }
    print!("{csv}");
    if let Some(out) = &a.out {
        fs::write(out, &csv).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }
    Ok(())
}
