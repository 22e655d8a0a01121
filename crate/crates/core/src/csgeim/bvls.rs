//! Bounded-variable least squares, active-set method of Stark and Parker.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `min ||A x - b||^2` subject to `lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct BvlsProblem {
    pub a: DMatrix<f64>,
    pub target: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvlsSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
    /// Largest KKT violation at `x`.
    pub kkt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Free,
    Lower,
    Upper,
}

impl BvlsProblem {
    pub fn new(a: DMatrix<f64>, target: DVector<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = a.ncols();
        if target.len() != a.nrows() {
            return Err(Error::LengthMismatch {
                expected: a.nrows(),
                got: target.len(),
            });
        }
        for v in [&lower, &upper] {
            if v.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: v.len() });
            }
        }
        if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidInput(format!(
                "bounds [{}, {}] of variable {i} are empty",
                lower[i], upper[i]
            )));
        }
        if a.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in least-squares data".into()));
        }
        Ok(BvlsProblem { a, target, lower, upper })
    }

    /// Box `[-b_i, b_i]`.
    pub fn symmetric(a: DMatrix<f64>, target: DVector<f64>, bounds: &[f64]) -> Result<Self> {
        let lower = bounds.iter().map(|b| -b).collect();
        BvlsProblem::new(a, target, lower, bounds.to_vec())
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.a.ncols()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.residual(x).norm_squared()
    }

    fn residual(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) - &self.target
    }

    /// Half gradient `A'(A x - b)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.a.transpose() * self.residual(x)).iter().copied().collect()
    }

    /// Largest violation of the optimality conditions: free gradients must
    /// vanish and gradients at a bound must point out of the box.
    pub fn kkt_violation(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        (0..x.len())
            .map(|i| {
                if self.lower[i] == self.upper[i] {
                    0.0
                } else if x[i] <= self.lower[i] {
                    (-g[i]).max(0.0)
                } else if x[i] >= self.upper[i] {
                    g[i].max(0.0)
                } else {
                    g[i].abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Least-squares solution on the columns `cols` with right-hand side `rhs`.
fn subproblem(a: &DMatrix<f64>, cols: &[usize], rhs: &DVector<f64>) -> DVector<f64> {
    let af = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
    let k = cols.len();
    if a.nrows() >= k {
        let qr = af.clone().qr();
        let mut qtb = rhs.clone();
        qr.q_tr_mul(&mut qtb);
        let r = qr.r();
        if let Some(z) = r.solve_upper_triangular(&qtb.rows(0, k).into_owned()) {
            if z.iter().all(|v| v.is_finite()) {
                return z;
            }
        }
    }
    af.svd(true, true)
        .solve(rhs, 1e-14)
        .expect("both factors were requested")
}

/// Solves the problem to KKT tolerance `tol`, relative to the scale of `A'b`.
///
/// Pivots (moves between the free and bound sets) are capped at
/// `10 n m`.
pub fn bvls_solve(p: &BvlsProblem, tol: f64) -> Result<BvlsSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    let (m, n) = (p.num_rows(), p.num_vars());
    let cap = (10 * n * m).max(10);
    let scale = 1.0 + (p.a.transpose() * &p.target).amax();
    let gtol = tol * scale;
    let mut pivots = 0;

    let mut x = vec![0.0; n];
    let mut state = vec![State::Free; n];
    for i in 0..n {
        if p.lower[i] == p.upper[i] {
            state[i] = State::Lower;
            x[i] = p.lower[i];
        }
    }
    // start from the clipped unconstrained solution
    let free: Vec<usize> = (0..n).filter(|&i| state[i] == State::Free).collect();
    if !free.is_empty() {
        let rhs = &p.target - &p.a * DVector::from_column_slice(&x);
        let z = subproblem(&p.a, &free, &rhs);
        for (k, &i) in free.iter().enumerate() {
            if z[k] <= p.lower[i] {
                x[i] = p.lower[i];
                state[i] = State::Lower;
            } else if z[k] >= p.upper[i] {
                x[i] = p.upper[i];
                state[i] = State::Upper;
            } else {
                x[i] = z[k];
            }
        }
    }

    let mut blocked = vec![false; n];
    let mut entering: Option<usize> = None;
    loop {
        // inner loop: free set least-squares optimal and feasible
        loop {
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == State::Free).collect();
            if free.is_empty() {
                break;
            }
            let mut fixed = x.clone();
            for &i in &free {
                fixed[i] = 0.0;
            }
            let rhs = &p.target - &p.a * DVector::from_column_slice(&fixed);
            let z = subproblem(&p.a, &free, &rhs);

            if let Some(t) = entering.take() {
                let k = free.iter().position(|&i| i == t).unwrap();
                let wrong_way = match state_before(t, &x, p) {
                    State::Lower => z[k] <= p.lower[t],
                    State::Upper => z[k] >= p.upper[t],
                    State::Free => false,
                };
                if wrong_way {
                    // the gradient sign was rounding noise: put it back
                    state[t] = state_before(t, &x, p);
                    blocked[t] = true;
                    pivots += 1;
                    continue;
                }
            }

            let inside = free
                .iter()
                .enumerate()
                .all(|(k, &i)| z[k] > p.lower[i] && z[k] < p.upper[i]);
            if inside {
                for (k, &i) in free.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut hit = usize::MAX;
            for (k, &i) in free.iter().enumerate() {
                let step = z[k] - x[i];
                let a = if z[k] <= p.lower[i] {
                    (p.lower[i] - x[i]) / step
                } else if z[k] >= p.upper[i] {
                    (p.upper[i] - x[i]) / step
                } else {
                    continue;
                };
                let a = if a.is_finite() { a.clamp(0.0, 1.0) } else { 0.0 };
                if a < alpha {
                    alpha = a;
                    hit = i;
                }
            }
            let alpha = alpha.min(1.0);
            for (k, &i) in free.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
            }
            for (k, &i) in free.iter().enumerate() {
                let at_lower = x[i] <= p.lower[i] || (i == hit && z[k] <= p.lower[i]);
                let at_upper = x[i] >= p.upper[i] || (i == hit && z[k] >= p.upper[i]);
                if at_lower {
                    x[i] = p.lower[i];
                    state[i] = State::Lower;
                    pivots += 1;
                } else if at_upper {
                    x[i] = p.upper[i];
                    state[i] = State::Upper;
                    pivots += 1;
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
            if pivots > cap {
                return Err(cap_error(p, &x, &state, cap));
            }
        }

        // outer loop: release the bound variable with the largest violation
        let g = p.gradient(&x);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if blocked[i] || p.lower[i] == p.upper[i] {
                continue;
            }
            let v = match state[i] {
                State::Lower => -g[i],
                State::Upper => g[i],
                State::Free => continue,
            };
            if v > gtol && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let Some((t, _)) = best else {
            let objective = p.objective(&x);
            let kkt = p.kkt_violation(&x);
            return Ok(BvlsSolution {
                x,
                objective,
                pivots,
                kkt,
            });
        };
        state[t] = State::Free;
        entering = Some(t);
        pivots += 1;
        if pivots > cap {
            return Err(cap_error(p, &x, &state, cap));
        }
    }
}

/// Which bound a variable sits on, from its value.
fn state_before(i: usize, x: &[f64], p: &BvlsProblem) -> State {
    if x[i] <= p.lower[i] {
        State::Lower
    } else if x[i] >= p.upper[i] {
        State::Upper
    } else {
        State::Free
    }
}

fn cap_error(p: &BvlsProblem, x: &[f64], state: &[State], cap: usize) -> Error {
    Error::BvlsIterationCap {
        cap,
        free: state.iter().filter(|s| **s == State::Free).count(),
        violation: p.kkt_violation(x),
    }
}
