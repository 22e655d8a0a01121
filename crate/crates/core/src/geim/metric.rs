use crate::mesh::{Domain, GradientStencil, NormKind};
use crate::sparse::CsrMatrix;

/// A norm on nodal vectors, cached for repeated evaluation.
///
/// L2 and the H1 seminorm are Euclidean norms of a linear feature map
/// (`sqrt(w) f` or `sqrt(w) grad f`), so Gram matrices and residual norms can
/// be formed from features alone.
pub(crate) struct Metric {
    pub kind: NormKind,
    inside: Vec<usize>,
    sqrt_w: Vec<f64>,
    grad: Option<GradientStencil>,
}

impl Metric {
    pub fn new(domain: &Domain, kind: NormKind) -> Self {
        let w = domain.weights();
        let inside: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
        let sqrt_w = inside.iter().map(|&k| w[k].sqrt()).collect();
        let grad = (kind == NormKind::H1Semi).then(|| domain.gradient_stencil());
        Metric {
            kind,
            inside,
            sqrt_w,
            grad,
        }
    }

    pub fn is_hilbert(&self) -> bool {
        self.kind != NormKind::Linf
    }

    pub fn feature_len(&self) -> usize {
        match self.kind {
            NormKind::L2 => self.inside.len(),
            NormKind::H1Semi => 2 * self.inside.len(),
            NormKind::Linf => 0,
        }
    }

    /// Feature vector whose Euclidean norm is the norm of `v`.
    pub fn features(&self, v: &[f64]) -> Vec<f64> {
        match (self.kind, &self.grad) {
            (NormKind::L2, _) => self
                .inside
                .iter()
                .zip(&self.sqrt_w)
                .map(|(&k, s)| s * v[k])
                .collect(),
            (NormKind::H1Semi, Some(g)) => {
                let mut out = Vec::with_capacity(2 * self.inside.len());
                for (&k, s) in self.inside.iter().zip(&self.sqrt_w) {
                    out.push(s * g.x[k].apply(v));
                    out.push(s * g.y[k].apply(v));
                }
                out
            }
            _ => panic!("no feature map for the max norm"),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            NormKind::Linf => self.inside.iter().fold(0.0_f64, |m, &k| m.max(v[k].abs())),
            _ => self.features(v).iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Nodes inside the domain.
    pub fn inside(&self) -> &[usize] {
        &self.inside
    }

    /// The seminorm matrix `K` with `|v|^2 = v' K v`, over all grid nodes.
    pub fn h1_matrix(&self, num_nodes: usize) -> CsrMatrix {
        let g = self.grad.as_ref().expect("H1 metric");
        let mut t = Vec::with_capacity(8 * self.inside.len());
        for (&k, s) in self.inside.iter().zip(&self.sqrt_w) {
            for st in [&g.x[k], &g.y[k]] {
                for a in 0..2 {
                    for b in 0..2 {
                        let v = s * s * st.coef[a] * st.coef[b];
                        if v != 0.0 {
                            t.push((st.idx[a], st.idx[b], v));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(num_nodes, &t)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
