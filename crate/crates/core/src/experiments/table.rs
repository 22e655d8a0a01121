use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diffusion::Component;
use crate::error::{Error, Result};
use crate::mesh::NormKind;

pub const CSV_HEADER: &str = "n,m,sigma,component,norm,mean_error,std_error,repetitions";

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub component: Component,
    pub norm: NormKind,
    pub mean_error: f64,
    /// Sample standard deviation over repetitions (zero for one repetition).
    pub std_error: f64,
    pub repetitions: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn new(rows: Vec<ErrorRow>) -> Self {
        ErrorTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !(r.mean_error.is_finite() && r.std_error.is_finite()) || r.repetitions == 0 {
                return Err(Error::InvalidInput(format!(
                    "row n = {}, m = {}, sigma = {} has mean {} std {} over {} repetitions",
                    r.n, r.m, r.sigma, r.mean_error, r.std_error, r.repetitions
                )));
            }
        }
        Ok(())
    }

    /// Rows for one `(sigma, component)` pair, in table order.
    pub fn select(&self, sigma: f64, component: Component) -> impl Iterator<Item = &ErrorRow> {
        self.rows
            .iter()
            .filter(move |r| r.sigma == sigma && r.component == component)
    }

    /// `(n, mean_error)` for one `(sigma, component)` pair.
    pub fn curve(&self, sigma: f64, component: Component) -> Vec<(usize, f64)> {
        self.select(sigma, component).map(|r| (r.n, r.mean_error)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:e},{},{},{:e},{:e},{}",
                r.n, r.m, r.sigma, r.component, r.norm, r.mean_error, r.std_error, r.repetitions
            );
        }
        s
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::parse(path, 1, format!("expected header {CSV_HEADER:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(path, i + 1, msg);
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(bad(format!("expected 8 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            rows.push(ErrorRow {
                n: int(f[0])?,
                m: int(f[1])?,
                sigma: real(f[2])?,
                component: f[3].parse().map_err(|e: Error| bad(e.to_string()))?,
                norm: f[4].parse().map_err(|e: Error| bad(e.to_string()))?,
                mean_error: real(f[5])?,
                std_error: real(f[6])?,
                repetitions: int(f[7])?,
            });
        }
        Ok(ErrorTable { rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::NonPositive(if x > 0.0 { y } else { x }));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let k = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("slope fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (ss / k).sqrt(),
    })
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
