use std::fs;

use super::*;
use crate::analytic::AnalyticManifoldSpec;
use crate::diffusion::{Component, SetRole, SnapshotSet};
use crate::geim::error_curves_scaled;
use crate::mesh::NormKind;

fn small_cfg() -> StudyConfig {
    let mut cfg = StudyConfig::with_source(DataSource::Analytic(AnalyticManifoldSpec {
        nodes: 17,
        mu_per_axis: 6,
        ..Default::default()
    }));
    cfg.n_min = 1;
    cfg.n_max = 6;
    cfg.sigmas = vec![0.0, 1e-2];
    cfg.repetitions = 4;
    cfg.seed = 11;
    cfg
}

#[test]
fn noiseless_rows_reproduce_error_curves() {
    for norm in NormKind::ALL {
        let mut cfg = small_cfg();
        cfg.norm = norm;
        let (model, data) = prepare_study(&cfg).unwrap();
        let study = run_noise_study_with(&model, &data.test, &cfg).unwrap();
        let curve = &error_curves_scaled(&model, &data.test, norm, &[Component::Phi2], cfg.error_scale).unwrap()[0];
        for (n, e) in study.geim.curve(0.0, Component::Phi2) {
            assert!((e - curve.values[n]).abs() <= 1e-12 * curve.values[n].max(1e-300), "{norm} n = {n}");
        }
        for r in study.geim.select(0.0, Component::Phi2) {
            assert_eq!(r.std_error, 0.0);
        }
    }
}

#[test]
fn table_shapes() {
    let cfg = small_cfg();
    let (model, data) = prepare_study(&cfg).unwrap();
    let s = run_noise_study_with(&model, &data.test, &cfg).unwrap();
    for (_, t) in s.tables() {
        assert_eq!(t.len(), 2 * 6);
        t.validate().unwrap();
        assert!(t.rows.iter().all(|r| r.repetitions == 4 && r.norm == NormKind::L2));
    }
    assert!(s.geim.rows.iter().all(|r| r.m == r.n));
    assert!(s.csgeim.rows.iter().all(|r| r.m == 2 * r.n));
    // max over parameters of the mean never exceeds the mean of the max
    for (a, b) in s.csgeim.rows.iter().zip(&s.csgeim_mean_of_max.rows) {
        assert!(a.mean_error <= b.mean_error * (1.0 + 1e-12));
    }
}

fn single_test(cfg: &StudyConfig) -> (crate::geim::GeimModel, SnapshotSet) {
    let (model, data) = prepare_study(cfg).unwrap();
    let one = SnapshotSet::new(SetRole::Test, vec![data.test.get(7).clone()]).unwrap();
    (model, one)
}

#[test]
fn more_repetitions_extend_the_same_stream() {
    let mut cfg = small_cfg();
    cfg.sigmas = vec![1e-2];
    cfg.repetitions = 1;
    let (model, one) = single_test(&cfg);
    let r1 = run_noise_study_with(&model, &one, &cfg).unwrap();
    cfg.repetitions = 2;
    let r2 = run_noise_study_with(&model, &one, &cfg).unwrap();
    // two samples: e0 = mean -+ std / sqrt(2)
    for (a, b) in r1.csgeim.rows.iter().zip(&r2.csgeim.rows).chain(r1.geim.rows.iter().zip(&r2.geim.rows)) {
        let d = b.std_error / 2f64.sqrt();
        let hit = [b.mean_error - d, b.mean_error + d]
            .iter()
            .any(|e| (e - a.mean_error).abs() <= 1e-12 * a.mean_error);
        assert!(hit, "{a:?} {b:?}");
    }
}

#[test]
fn doubling_repetitions_stays_within_three_standard_errors() {
    let mut cfg = small_cfg();
    cfg.sigmas = vec![1e-2];
    cfg.repetitions = 20;
    let (model, one) = single_test(&cfg);
    let a = run_noise_study_with(&model, &one, &cfg).unwrap();
    cfg.repetitions = 40;
    let b = run_noise_study_with(&model, &one, &cfg).unwrap();
    for (x, y) in a.csgeim.rows.iter().zip(&b.csgeim.rows).chain(a.geim.rows.iter().zip(&b.geim.rows)) {
        let se = (x.std_error.powi(2) / 20.0 + y.std_error.powi(2) / 40.0).sqrt();
        assert!((x.mean_error - y.mean_error).abs() <= 3.0 * se + 1e-15, "{x:?} {y:?}");
    }
}

#[test]
fn studies_are_deterministic_on_disk() {
    let cfg = small_cfg();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let (model, data) = prepare_study(&cfg).unwrap();
        let s = run_noise_study_with(&model, &data.test, &cfg).unwrap();
        let paths = emit_noise_study(&s, &cfg, &model, d.path()).unwrap();
        assert_eq!(paths.len(), 5);
        let files: Vec<(String, Vec<u8>)> = paths
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "noise_caseI_l2_geim.csv",
            "noise_caseI_l2_csgeim.csv",
            "noise_caseI_l2_geim_meanmax.csv",
            "noise_caseI_l2_csgeim_meanmax.csv",
            "noise_caseI_l2_manifest.txt"
        ]
    );
    let csv = String::from_utf8(outputs[0][1].1.clone()).unwrap();
    assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
    let back = ErrorTable::read(dirs[0].path().join("noise_caseI_l2_csgeim.csv")).unwrap();
    let (model, data) = prepare_study(&cfg).unwrap();
    assert_eq!(back, run_noise_study_with(&model, &data.test, &cfg).unwrap().csgeim);
}

#[test]
fn ratio_study_fits_and_validates() {
    let mut cfg = small_cfg();
    cfg.n_min = 3;
    cfg.n_max = 3;
    cfg.m_rule = MRule::Sweep(vec![1, 2, 4]);
    cfg.sigmas = vec![0.0];
    let (model, data) = prepare_study(&cfg).unwrap();
    let r = run_ratio_study_with(&model, &data.test, &cfg).unwrap();
    assert_eq!(r.study.csgeim.rows.iter().map(|r| r.m).collect::<Vec<_>>(), [3, 6, 12]);
    assert_eq!(r.fits.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_ratio_study(&r, &cfg, &model, dir.path()).unwrap();
    let slopes = fs::read_to_string(paths.iter().find(|p| p.ends_with("ratio_caseI_l2_slopes.csv")).unwrap()).unwrap();
    assert!(slopes.starts_with("sigma,component,slope,intercept,residual\n"));

    cfg.m_rule = MRule::Sweep(vec![1, 2]);
    assert!(run_ratio_study_with(&model, &data.test, &cfg).unwrap_err().is_config_error());
    cfg.m_rule = MRule::Ratio(2.0);
    assert!(run_ratio_study_with(&model, &data.test, &cfg).unwrap_err().is_config_error());
}

#[test]
fn oversized_requests_are_config_errors() {
    let cfg = small_cfg();
    let (model, data) = prepare_study(&cfg).unwrap();
    let mut big = cfg.clone();
    big.n_max = 7;
    assert!(run_noise_study_with(&model, &data.test, &big).unwrap_err().is_config_error());
    big.n_max = 6;
    big.m_rule = MRule::Fixed(500);
    assert!(run_noise_study_with(&model, &data.test, &big).unwrap_err().is_config_error());
    let mut c = cfg;
    c.components = vec![Component::Power];
    assert!(run_noise_study_with(&model, &data.test, &c).is_err());
}

#[test]
fn normalization_puts_the_peak_sensor_at_one() {
    let cfg = small_cfg();
    let (model, data) = prepare_study(&cfg).unwrap();
    let mask = data.domain.restrict_mask(crate::mesh::SensorRegion::All).unwrap();
    let peak = crate::geim::max_sensor_value(&data.training, &mask);
    assert!((peak - 1.0).abs() <= 1e-15);
    assert_eq!(model.scale, data.scale);
}
