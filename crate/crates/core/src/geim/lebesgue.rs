//! Discrete Lebesgue constants `Lambda_n = ||J_n||`.
//!
//! With `Psi = Q B^-1` the cardinal fields, `J_n f = Psi (f(x_1), ..., f(x_n))`.
//! The source space only sees the sensor values, so each norm reduces to a
//! small problem on the sensor values:
//! - max norm: `max_x sum_i |psi_i(x)|`;
//! - L2: the smallest field with given sensor values is a sum of spikes, so
//!   `Lambda_n^2 = lambda_max(Ws^-1/2 Psi' W Psi Ws^-1/2)`;
//! - H1 seminorm: the smallest field is the discrete harmonic extension, whose
//!   energy is the Schur complement of the seminorm matrix onto the sensors.
//!   Constants lie in the kernel, so sensor vectors are restricted to the
//!   complement of the constant vector, and `Lambda_1 = 1` by convention.
//!   This variant is an approximation.

use nalgebra::DMatrix;
#[cfg(test)]
use nalgebra::DVector;

use super::metric::{dot, Metric};
use super::GeimModel;
use crate::diffusion::Component;
use crate::error::{Error, Result};
use crate::mesh::NormKind;
use crate::sparse::{CsrMatrix, SpdFactor};

/// `Lambda_n` of `model` in the norm `kind`, for `1 <= n <= N`.
pub fn lebesgue_constant(model: &GeimModel, n: usize, kind: NormKind) -> Result<f64> {
    if n == 0 || n > model.dim() {
        return Err(Error::OutOfRange {
            index: n,
            max: model.dim(),
        });
    }
    Ok(table(model, kind, n)?[n - 1])
}

/// `Lambda_1..=Lambda_N`.
pub(crate) fn lebesgue_table(model: &GeimModel, kind: NormKind) -> Result<Vec<f64>> {
    table(model, kind, model.dim())
}

fn table(model: &GeimModel, kind: NormKind, upto: usize) -> Result<Vec<f64>> {
    if upto == 0 {
        return Ok(Vec::new());
    }
    let b = DMatrix::from_fn(upto, upto, |k, i| model.design(k, i));
    match kind {
        NormKind::Linf => Ok(linf(model, &b)),
        NormKind::L2 => l2(model, &b),
        NormKind::H1Semi => h1(model, &b),
    }
}

/// Inverse of the leading `n x n` block of the unit lower triangular `b`.
fn inverse_block(b: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let bn = b.view((0, 0), (n, n)).into_owned();
    bn.solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("unit diagonal")
}

fn linf(model: &GeimModel, b: &DMatrix<f64>) -> Vec<f64> {
    let upto = b.nrows();
    let q = model.basis_values(Component::Phi2).expect("phi2 basis");
    let metric = Metric::new(&model.domain, NormKind::Linf);
    let mut out = vec![0.0_f64; upto];
    let mut psi = vec![0.0; upto];
    for &x in metric.inside() {
        for n in 1..=upto {
            // psi(x)' B_n = q(x)': back substitution with the transpose
            for i in (0..n).rev() {
                let mut acc = q[i][x];
                for j in i + 1..n {
                    acc -= b[(j, i)] * psi[j];
                }
                psi[i] = acc;
            }
            let s: f64 = psi[..n].iter().map(|v| v.abs()).sum();
            out[n - 1] = out[n - 1].max(s);
        }
    }
    out
}

/// Gram matrix of the first `upto` thermal basis functions in `metric`.
fn gram(model: &GeimModel, metric: &Metric, upto: usize) -> DMatrix<f64> {
    let q = model.basis_values(Component::Phi2).expect("phi2 basis");
    let feats: Vec<Vec<f64>> = q[..upto].iter().map(|v| metric.features(v)).collect();
    let mut g = DMatrix::zeros(upto, upto);
    for i in 0..upto {
        for j in 0..=i {
            let v = dot(&feats[i], &feats[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn l2(model: &GeimModel, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let upto = b.nrows();
    let metric = Metric::new(&model.domain, NormKind::L2);
    let g = gram(model, &metric, upto);
    let w = model.domain.weights();
    let mut out = Vec::with_capacity(upto);
    for n in 1..=upto {
        let binv = inverse_block(b, n);
        let mut m = binv.transpose() * g.view((0, 0), (n, n)) * &binv;
        let d: Vec<f64> = model.sensors[..n]
            .iter()
            .map(|s| 1.0 / w[s.node].sqrt())
            .collect();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= d[i] * d[j];
            }
        }
        out.push(largest_eigenvalue(m).max(0.0).sqrt());
    }
    Ok(out)
}

fn largest_eigenvalue(m: DMatrix<f64>) -> f64 {
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

fn h1(model: &GeimModel, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let upto = b.nrows();
    let metric = Metric::new(&model.domain, NormKind::H1Semi);
    let g = gram(model, &metric, upto);
    let schur = sensor_schur(model, &metric, upto)?;
    let mut out = Vec::with_capacity(upto);
    out.push(1.0);
    for n in 2..=upto {
        let s_n = eliminate_tail(&schur, n)?;
        let binv = inverse_block(b, n);
        let h = binv.transpose() * g.view((0, 0), (n, n)) * &binv;
        // orthonormal basis of the complement of the constant vector
        let mut basis = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
        basis = basis.insert_columns(1, n - 1, 0.0);
        for j in 1..n {
            basis[(j, j)] = 1.0;
        }
        let p = basis.qr().q().columns(1, n - 1).into_owned();
        let hp = p.transpose() * h * &p;
        let sp = p.transpose() * s_n * &p;
        let sp = (&sp + sp.transpose()) * 0.5;
        let chol = sp.cholesky().ok_or_else(|| {
            Error::LinearSolver("sensor energy matrix is not positive definite".into())
        })?;
        let l = chol.l();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(n - 1, n - 1))
            .expect("cholesky factor is nonsingular");
        let c = &linv * hp * linv.transpose();
        out.push(largest_eigenvalue(c).max(0.0).sqrt());
    }
    Ok(out)
}

/// Schur complement of the seminorm matrix onto the first `upto` sensors.
fn sensor_schur(model: &GeimModel, metric: &Metric, upto: usize) -> Result<DMatrix<f64>> {
    let num_nodes = model.domain.grid().num_nodes();
    let k = metric.h1_matrix(num_nodes);
    let sensors: Vec<usize> = model.sensors[..upto].iter().map(|s| s.node).collect();
    let mut sensor_pos = vec![usize::MAX; num_nodes];
    for (i, &s) in sensors.iter().enumerate() {
        sensor_pos[s] = i;
    }
    let mut free_pos = vec![usize::MAX; num_nodes];
    let free: Vec<usize> = metric
        .inside()
        .iter()
        .copied()
        .filter(|&x| sensor_pos[x] == usize::MAX)
        .collect();
    for (i, &f) in free.iter().enumerate() {
        free_pos[f] = i;
    }
    let diag_max = (0..num_nodes).map(|r| k.get(r, r)).fold(0.0, f64::max);
    // the central-difference seminorm has weakly pinned oscillating modes
    let shift = 1e-12 * diag_max;
    let mut t = Vec::with_capacity(k.nnz());
    let mut kfs = vec![0.0; free.len() * upto];
    let mut kss = DMatrix::zeros(upto, upto);
    for (r, &node) in free.iter().enumerate() {
        t.push((r, r, shift));
        for (c, v) in k.row(node) {
            if free_pos[c] != usize::MAX {
                t.push((r, free_pos[c], v));
            } else if sensor_pos[c] != usize::MAX {
                kfs[sensor_pos[c] * free.len() + r] = v;
            }
        }
    }
    for (i, &s) in sensors.iter().enumerate() {
        for (c, v) in k.row(s) {
            if sensor_pos[c] != usize::MAX {
                kss[(i, sensor_pos[c])] = v;
            }
        }
    }
    let kff = CsrMatrix::from_triplets(free.len(), &t);
    let factor = SpdFactor::new(&kff)?;
    let mut x = kfs.clone();
    factor.solve_many_in_place(&mut x, upto);
    let nf = free.len();
    for i in 0..upto {
        for j in 0..upto {
            kss[(i, j)] -= dot(&kfs[i * nf..(i + 1) * nf], &x[j * nf..(j + 1) * nf]);
        }
    }
    Ok((&kss + kss.transpose()) * 0.5)
}

/// Schur complement of `s` onto its first `n` indices.
fn eliminate_tail(s: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let total = s.nrows();
    if n == total {
        return Ok(s.clone());
    }
    let a11 = s.view((0, 0), (n, n));
    let a12 = s.view((0, n), (n, total - n));
    let a22 = s.view((n, n), (total - n, total - n)).into_owned();
    let chol = a22
        .cholesky()
        .ok_or_else(|| Error::LinearSolver("sensor energy matrix is not positive definite".into()))?;
    let z = chol.solve(&a12.transpose());
    Ok(a11 - a12 * z)
}

/// Power iteration on `(Psi S)^* (Psi S)` in the L2 geometry; test oracle.
#[cfg(test)]
pub(crate) fn l2_power_iteration(model: &GeimModel, n: usize, iters: usize) -> f64 {
    let w = model.domain.weights();
    let q = model.basis_values(Component::Phi2).unwrap();
    let b = DMatrix::from_fn(n, n, |k, i| model.design(k, i));
    let binv = inverse_block(&b, n);
    let nodes = w.len();
    // apply T a = Psi a for sensor-value vectors a, with the source norm
    // sum_i w(x_i) a_i^2
    let ws: Vec<f64> = model.sensors[..n].iter().map(|s| w[s.node]).collect();
    let mut a = DVector::from_element(n, 1.0);
    let mut est = 0.0;
    for _ in 0..iters {
        let coef = &binv * &a;
        let mut field = vec![0.0; nodes];
        for i in 0..n {
            for x in 0..nodes {
                field[x] += coef[i] * q[i][x];
            }
        }
        // adjoint: a' = Ws^-1 S_adj(W field) = Ws^-1 B^-T Q' W field
        let qtw = DVector::from_fn(n, |i, _| (0..nodes).map(|x| q[i][x] * w[x] * field[x]).sum::<f64>());
        let mut next = binv.transpose() * qtw;
        for i in 0..n {
            next[i] /= ws[i];
        }
        let num: f64 = (0..n).map(|i| ws[i] * a[i] * next[i]).sum();
        let den: f64 = (0..n).map(|i| ws[i] * a[i] * a[i]).sum();
        est = (num / den).sqrt();
        let norm = (0..n).map(|i| ws[i] * next[i] * next[i]).sum::<f64>().sqrt();
        a = next / norm;
    }
    est
}
