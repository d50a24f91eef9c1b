use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::lattice::SiteField;

/// Pointwise `σ(H, K)` and its supremum.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaField {
    pub field: SiteField<f64>,
    pub sup: f64,
}

/// `σ = h/k + k/h − 2` for positive scalars.
pub fn sigma_scalar(h: f64, k: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveInput { index: 0 });
    }
    if !(k > 0.0) {
        return Err(Error::NonPositiveInput { index: 1 });
    }
    Ok(h / k + k / h - 2.0)
}

fn positive_definite(m: &Matrix2<f64>) -> bool {
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
    sym && m[(0, 0)] > 0.0 && m.determinant() > 0.0
}

/// `σ = tr(H^{-1}K) + tr(K^{-1}H) − 4` for symmetric positive-definite 2×2.
pub fn sigma_matrix(h: &Matrix2<f64>, k: &Matrix2<f64>) -> Result<f64> {
    if !positive_definite(h) {
        return Err(Error::NonPositiveInput { index: 0 });
    }
    if !positive_definite(k) {
        return Err(Error::NonPositiveInput { index: 1 });
    }
    let hi = h.try_inverse().ok_or(Error::NonPositiveInput { index: 0 })?;
    let ki = k.try_inverse().ok_or(Error::NonPositiveInput { index: 1 })?;
    Ok((hi * k).trace() + (ki * h).trace() - 4.0)
}

/// `σ(e^{s₁}, e^{s₂}) = e^{s₁−s₂} + e^{s₂−s₁} − 2` over the lattice, computed
/// from the potentials to avoid overflow of `e^s`.
pub fn sigma_distance(s1: &SiteField<f64>, s2: &SiteField<f64>) -> Result<SigmaField> {
    s1.grid.check_same(&s2.grid)?;
    let mut data = Vec::with_capacity(s1.data.len());
    for (i, (a, b)) in s1.data.iter().zip(&s2.data).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonPositiveInput { index: i });
        }
        let d = a - b;
        // 2(cosh d − 1) = 4 sinh²(d/2), accurate near d = 0.
        data.push(4.0 * (0.5 * d).sinh().powi(2));
    }
    let sup = data.iter().fold(0.0, |m: f64, v| m.max(*v));
    Ok(SigmaField { field: SiteField { grid: s1.grid, data }, sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;
    use crate::rng::LabRng;
    use nalgebra::SymmetricEigen;

    fn random_spd(r: &mut LabRng) -> Matrix2<f64> {
        let m = Matrix2::new(r.symmetric(), r.symmetric(), r.symmetric(), r.symmetric());
        m * m.transpose() + Matrix2::identity() * (0.05 + r.uniform())
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(sigma_scalar(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(sigma_scalar(1.0, 2.0).unwrap(), sigma_scalar(2.0, 1.0).unwrap());
        assert!(matches!(sigma_scalar(0.0, 1.0), Err(Error::NonPositiveInput { index: 0 })));
        assert!(matches!(sigma_scalar(1.0, -1.0), Err(Error::NonPositiveInput { index: 1 })));
    }

    #[test]
    fn nonnegative_with_equality_only_at_equal_inputs() {
        let mut r = LabRng::new(61);
        for _ in 0..1000 {
            let h = (3.0 * r.symmetric()).exp();
            let k = (3.0 * r.symmetric()).exp();
            let s = sigma_scalar(h, k).unwrap();
            assert!(s >= 0.0);
            assert!(s > 0.0 || h == k);
            assert_eq!(sigma_scalar(h, h).unwrap(), 0.0);

            let hm = random_spd(&mut r);
            let km = random_spd(&mut r);
            let sm = sigma_matrix(&hm, &km).unwrap();
            // Brute force: σ = Σ (λ + 1/λ − 2) over eigenvalues of H^{-1/2} K H^{-1/2}.
            let e = SymmetricEigen::new(hm);
            let hinv_half = e.eigenvectors * Matrix2::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x.sqrt())) * e.eigenvectors.transpose();
            let lam = SymmetricEigen::new(hinv_half * km * hinv_half).eigenvalues;
            let oracle: f64 = lam.iter().map(|l| l + 1.0 / l - 2.0).sum();
            assert!((sm - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
            assert!(sm >= -1e-12);
            assert!(sigma_matrix(&hm, &hm).unwrap().abs() < 1e-12);
            assert!((sm - sigma_matrix(&km, &hm).unwrap()).abs() < 1e-12 * (1.0 + sm));
        }
    }

    #[test]
    fn matrix_rejects_indefinite() {
        let bad = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(matches!(sigma_matrix(&bad, &Matrix2::identity()), Err(Error::NonPositiveInput { index: 0 })));
    }

    #[test]
    fn field_version_matches_scalar() {
        let g = build_grid(4, 4, 1.0, 0).unwrap();
        let s1 = SiteField { grid: g, data: (0..16).map(|k| 0.1 * k as f64).collect() };
        let s2 = SiteField::filled(g, 0.4);
        let sf = sigma_distance(&s1, &s2).unwrap();
        for k in 0..16 {
            let direct = sigma_scalar(s1[k].exp(), s2[k].exp()).unwrap();
            assert!((sf.field[k] - direct).abs() < 1e-14);
        }
        assert_eq!(sigma_distance(&s2, &s2).unwrap().sup, 0.0);
    }


    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scalar_sigma_is_a_nonnegative_symmetric_separation(lh in -5.0..5.0f64, lk in -5.0..5.0f64) {
                let (h, k) = (lh.exp(), lk.exp());
                let s = sigma_scalar(h, k).unwrap();
                prop_assert!(s >= 0.0);
                prop_assert!(s > 0.0 || h == k);
                prop_assert!((s - sigma_scalar(k, h).unwrap()).abs() <= 1e-12 * (1.0 + s));
            }

            #[test]
            fn matrix_sigma_is_nonnegative(seed in any::<u64>()) {
                let mut r = LabRng::new(seed);
                let (h, k) = (random_spd(&mut r), random_spd(&mut r));
                prop_assert!(sigma_matrix(&h, &k).unwrap() >= -1e-12);
                prop_assert!(sigma_matrix(&h, &h).unwrap().abs() < 1e-12);
            }
        }
    }
}
