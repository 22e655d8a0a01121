use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::metric::{dot, Metric};
use super::{interpolate, GeimModel};
use crate::diffusion::{Component, SetRole, SnapshotSet};
use crate::error::{Error, Result};
use crate::mesh::NormKind;

/// How reconstruction errors are reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ErrorScale {
    /// `||f - J f||`
    #[default]
    Absolute,
    /// `||f - J f|| / ||f||`
    Relative,
}

impl ErrorScale {
    pub fn tag(&self) -> &'static str {
        match self {
            ErrorScale::Absolute => "absolute",
            ErrorScale::Relative => "relative",
        }
    }
}

impl fmt::Display for ErrorScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ErrorScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "absolute" | "abs" => Ok(ErrorScale::Absolute),
            "relative" | "rel" => Ok(ErrorScale::Relative),
            _ => Err(Error::Config(format!("unknown error scale {s:?}"))),
        }
    }
}

/// Worst-case reconstruction error over a set, per basis dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub norm: NormKind,
    pub role: SetRole,
    pub component: Component,
    /// `values[n]` for `n = 0..=N`.
    pub values: Vec<f64>,
}

impl ErrorCurve {
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().copied().enumerate()
    }
}

/// Noiseless errors `max_mu ||c(mu) - J_n c(mu)||` for `n = 0..=N`.
pub fn error_curves(
    model: &GeimModel,
    eval_set: &SnapshotSet,
    norm: NormKind,
    components: &[Component],
) -> Result<Vec<ErrorCurve>> {
    error_curves_scaled(model, eval_set, norm, components, ErrorScale::Absolute)
}

pub fn error_curves_scaled(
    model: &GeimModel,
    eval_set: &SnapshotSet,
    norm: NormKind,
    components: &[Component],
    scale: ErrorScale,
) -> Result<Vec<ErrorCurve>> {
    model.domain.grid().check_same(eval_set.grid())?;
    let metric = Metric::new(&model.domain, norm);
    let n = model.dim();
    let mut curves: Vec<ErrorCurve> = components
        .iter()
        .map(|&component| {
            model.basis_values(component)?;
            Ok(ErrorCurve {
                norm,
                role: eval_set.role(),
                component,
                values: vec![0.0; n + 1],
            })
        })
        .collect::<Result<_>>()?;
    for snap in eval_set {
        let y = model.measure_all(snap.phi2.values(), n);
        let c = interpolate(model, &y)?;
        for curve in curves.iter_mut() {
            let f = snap
                .component(curve.component)
                .ok_or(Error::MissingComponent(curve.component))?
                .values();
            let denom = match scale {
                ErrorScale::Absolute => 1.0,
                ErrorScale::Relative => metric.norm(f),
            };
            let basis = model.basis_values(curve.component)?;
            let mut r = f.to_vec();
            for k in 0..=n {
                let e = metric.norm(&r) / denom;
                curve.values[k] = curve.values[k].max(e);
                if k < n {
                    r.iter_mut().zip(&basis[k]).for_each(|(a, q)| *a -= c[k] * q);
                }
            }
        }
    }
    Ok(curves)
}

/// Fast evaluation of `||f - sum_i d_i q_i||` for many coefficient vectors `d`.
///
/// For the Hilbert norms the error is expanded around the noiseless
/// interpolant: with `e_n = f - Q c` and `delta = c - d`,
/// `||e_n + Q delta||^2 = ||e_n||^2 + 2 delta' Q'We_n + delta' G delta`, and
/// `Q'We_n = b - G c` where `b = Q'Wf`. Only `delta` multiplies rounded terms.
pub struct ErrorEvaluator<'a> {
    model: &'a GeimModel,
    metric: Metric,
    component: Component,
    scale: ErrorScale,
    gram: Option<DMatrix<f64>>,
    feats: Vec<Vec<f64>>,
}

/// One field prepared for repeated error evaluation.
#[derive(Clone, Debug)]
pub struct ErrorTarget {
    values: Vec<f64>,
    /// Noiseless coefficients at full dimension.
    coeffs: Vec<f64>,
    /// `||e_n||^2` for `n = 0..=N` (Hilbert norms).
    e2: Vec<f64>,
    /// `Q'Wf` (Hilbert norms).
    b: Vec<f64>,
    denom: f64,
}

impl ErrorTarget {
    /// Noiseless interpolation coefficients of the target.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

impl<'a> ErrorEvaluator<'a> {
    pub fn new(model: &'a GeimModel, norm: NormKind, component: Component, scale: ErrorScale) -> Result<Self> {
        let basis = model.basis_values(component)?;
        let metric = Metric::new(&model.domain, norm);
        let (gram, feats) = if metric.is_hilbert() {
            let feats: Vec<Vec<f64>> = basis.iter().map(|q| metric.features(q)).collect();
            let n = feats.len();
            let mut g = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = dot(&feats[i], &feats[j]);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            (Some(g), feats)
        } else {
            (None, Vec::new())
        };
        Ok(ErrorEvaluator {
            model,
            metric,
            component,
            scale,
            gram,
            feats,
        })
    }

    pub fn component(&self) -> Component {
        self.component
    }

    /// `thermal` feeds the sensors; `field` is the component being scored.
    pub fn prepare(&self, thermal: &[f64], field: &[f64]) -> Result<ErrorTarget> {
        let n = self.model.dim();
        let coeffs = interpolate(self.model, &self.model.measure_all(thermal, n))?;
        let denom = match self.scale {
            ErrorScale::Absolute => 1.0,
            ErrorScale::Relative => self.metric.norm(field),
        };
        let (e2, b) = if self.gram.is_some() {
            let basis = self.model.basis_values(self.component)?;
            let mut r = field.to_vec();
            let mut e2 = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let e = self.metric.norm(&r);
                e2.push(e * e);
                if k < n {
                    r.iter_mut().zip(&basis[k]).for_each(|(a, q)| *a -= coeffs[k] * q);
                }
            }
            let ff = self.metric.features(field);
            let b = self.feats.iter().map(|q| dot(q, &ff)).collect();
            (e2, b)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(ErrorTarget {
            values: field.to_vec(),
            coeffs,
            e2,
            b,
            denom,
        })
    }

    /// Error of the reconstruction with coefficients `d`, `n = d.len()`.
    pub fn error(&self, t: &ErrorTarget, d: &[f64]) -> Result<f64> {
        let n = d.len();
        self.model.check_n(n)?;
        let e = match &self.gram {
            Some(g) => {
                let delta: Vec<f64> = t.coeffs[..n].iter().zip(d).map(|(c, d)| c - d).collect();
                let mut cross = 0.0;
                let mut quad = 0.0;
                for i in 0..n {
                    let mut gc = 0.0;
                    let mut gd = 0.0;
                    for j in 0..n {
                        gc += g[(i, j)] * t.coeffs[j];
                        gd += g[(i, j)] * delta[j];
                    }
                    cross += delta[i] * (t.b[i] - gc);
                    quad += delta[i] * gd;
                }
                (t.e2[n] + 2.0 * cross + quad).max(0.0).sqrt()
            }
            None => {
                let basis = self.model.basis_values(self.component)?;
                let mut worst = 0.0_f64;
                for &x in self.metric.inside() {
                    let mut v = t.values[x];
                    for (di, q) in d.iter().zip(basis) {
                        v -= di * q[x];
                    }
                    worst = worst.max(v.abs());
                }
                worst
            }
        };
        Ok(e / t.denom)
    }
}
