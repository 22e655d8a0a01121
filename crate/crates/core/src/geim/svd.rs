use nalgebra::DMatrix;

use crate::diffusion::{Component, SnapshotSet};
use crate::error::{Error, Result};
use crate::mesh::{Domain, NormKind};

use super::metric::Metric;

/// Singular values, descending, of the snapshot matrix of `component` in the
/// quadrature-weighted L2 geometry.
pub fn svd_baseline(set: &SnapshotSet, domain: &Domain, component: Component) -> Result<Vec<f64>> {
    domain.grid().check_same(set.grid())?;
    if set.is_empty() {
        return Err(Error::InvalidInput("empty snapshot set".into()));
    }
    let metric = Metric::new(domain, NormKind::L2);
    let cols: Vec<Vec<f64>> = set
        .iter()
        .map(|s| {
            s.component(component)
                .map(|f| metric.features(f.values()))
                .ok_or(Error::MissingComponent(component))
        })
        .collect::<Result<_>>()?;
    let rows = metric.feature_len();
    let a = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    // Householder QR first: the bidiagonal SVD then only sees the small factor
    let r = a.qr().r();
    let mut s: Vec<f64> = r.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.resize(cols.len(), 0.0);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticManifoldSpec;
    use crate::diffusion::{SetRole, Snapshot};

    fn small() -> (Domain, SnapshotSet) {
        let spec = AnalyticManifoldSpec {
            nodes: 17,
            mu_per_axis: 4,
            ..Default::default()
        };
        (spec.domain().unwrap(), spec.generate().unwrap())
    }

    #[test]
    fn one_snapshot_gives_its_norm() {
        let (domain, set) = small();
        let one = SnapshotSet::new(SetRole::Training, vec![set.get(3).clone()]).unwrap();
        let s = svd_baseline(&one, &domain, Component::Phi2).unwrap();
        let n = domain.norm(&set.get(3).phi2, NormKind::L2).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0] - n).abs() <= 1e-12 * n);
    }

    #[test]
    fn duplicate_snapshot_has_rank_one() {
        let (domain, set) = small();
        let f = set.get(0).phi2.clone();
        let twin = Snapshot {
            mu: vec![9.0, 9.0],
            ..set.get(0).clone()
        };
        let pair = SnapshotSet::new(SetRole::Training, vec![set.get(0).clone(), twin]).unwrap();
        let s = svd_baseline(&pair, &domain, Component::Phi2).unwrap();
        assert!(s[1] <= 1e-12 * s[0]);
        let n = domain.norm(&f, NormKind::L2).unwrap();
        assert!((s[0] - 2f64.sqrt() * n).abs() <= 1e-12 * s[0]);
    }

    #[test]
    fn matches_weighted_gram_eigenvalues() {
        let (domain, set) = small();
        let s = svd_baseline(&set, &domain, Component::Phi2).unwrap();
        // independent oracle: eigenvalues of G_ij = sum_x w(x) f_i(x) f_j(x)
        let w = domain.weights();
        let k = set.len();
        let g = DMatrix::from_fn(k, k, |i, j| {
            let (a, b) = (set.get(i).phi2.values(), set.get(j).phi2.values());
            (0..w.len()).map(|x| w[x] * a[x] * b[x]).sum::<f64>()
        });
        let mut ev: Vec<f64> = g.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        // the Gram route loses eps * (s_1 / s_k)^2 relative accuracy
        for (a, b) in s.iter().zip(&ev).take_while(|(a, _)| **a > 3e-3 * s[0]) {
            assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn missing_component_is_reported() {
        let (domain, set) = small();
        assert!(matches!(
            svd_baseline(&set, &domain, Component::Power),
            Err(Error::MissingComponent(Component::Power))
        ));
    }
}
