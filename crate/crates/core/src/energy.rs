//! The YMH functional, its Euler–Lagrange operators, and the identity suite.
//!
//! The discrete energy is
//!
//! ```text
//! E1 = Σ_p Φ_p² / a²                      (‖F_A‖²)
//! E2 = Σ_ℓ |Φ_θℓ u(x+μ) − u(x)|²          (‖d_A u‖²)
//! E3 = Σ_x a² (μ(u(x)) − c)²              (‖μ(u) − c‖²)
//! ```
//!
//! [`grad_u`] and [`grad_a`] return the Euler–Lagrange operators, i.e. half
//! the L² gradients: `dE(V) = 2⟨grad, V⟩` with the site/link inner products
//! of [`crate::lattice`]. The pair flow `u̇ = −grad_u`, `Ȧ = −grad_A` then
//! satisfies `dE/dt = −2(‖grad_u‖² + ‖grad_A‖²)`.

use crate::fiber::V3;
use crate::gauge::{covariant_derivative, curvature, transported, Connection, Section};
use crate::lattice::{compensated_sum, Dir, FormField, LinkField, PlaquetteField, SiteField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub total: f64,
}

pub fn ymh(a: &Connection, u: &Section, c: f64) -> EnergyBreakdown {
    let g = a.grid();
    let a2 = g.area();
    let flux = curvature(a);
    let e1 = compensated_sum(flux.data.iter().map(|f| f * f)) / a2;
    let e2 = compensated_sum((0..g.sites()).flat_map(|k| {
        Dir::BOTH.map(|dir| (transported(a, u, k, dir) - u.at(k)).norm_squared())
    }));
    let e3 = a2
        * compensated_sum(u.sites.data.iter().map(|p| {
            let m = u.fiber.moment(p) - c;
            m * m
        }));
    EnergyBreakdown { e1, e2, e3, total: e1 + e2 + e3 }
}

/// `∇_A^* ∇_A u + (dμ)^*(μ(u) − c)`, tangent to the fiber at every site.
pub fn grad_u(a: &Connection, u: &Section, c: f64) -> SiteField<V3> {
    let g = a.grid();
    let inv_a2 = 1.0 / g.area();
    let f = u.fiber;
    let mut out = SiteField::filled(g, V3::zeros());
    let mut acc = vec![V3::zeros(); g.sites()];
    for k in 0..g.sites() {
        for dir in Dir::BOTH {
            let theta = a.transport_angle(k, dir);
            let kf = g.forward(k, dir);
            let e = f.act(theta, u.at(kf)) - u.at(k);
            acc[k] -= e;
            acc[kf] += f.act(-theta, &e);
        }
    }
    for k in 0..g.sites() {
        let p = u.at(k);
        let raw = acc[k] * inv_a2 + ambient_moment_gradient(u, p) * (f.moment(p) - c);
        out[k] = f.project_tangent(p, &raw);
    }
    out
}

/// Derivative of `μ` in the ambient `R^3`.
fn ambient_moment_gradient(u: &Section, p: &V3) -> V3 {
    match u.fiber {
        crate::fiber::Fiber::LinearC => V3::new(p.x, p.y, 0.0),
        crate::fiber::Fiber::Sphere => V3::new(0.0, 0.0, 1.0),
    }
}

/// `L_u^* d_A u + d_A^* F_A`.
pub fn grad_a(a: &Connection, u: &Section, _c: f64) -> LinkField<f64> {
    let g = a.grid();
    let inv = 1.0 / g.a;
    let f = u.fiber;
    let b = crate::lattice::lambda_contract(&curvature(a));
    let mut out = LinkField::filled(g, 0.0);
    for k in 0..g.sites() {
        for dir in Dir::BOTH {
            let moved = transported(a, u, k, dir);
            let e = moved - u.at(k);
            let higgs = e.dot(&f.generator(&moved)) * inv;
            let yang_mills = match dir {
                Dir::X => (b[k] - b[g.backward(k, Dir::Y)]) * inv,
                Dir::Y => (b[g.backward(k, Dir::X)] - b[k]) * inv,
            };
            *out.at_mut(k, dir) = yang_mills + higgs;
        }
    }
    out
}

/// Vortex residual `w = ΛF_A + μ(u) − c` per site.
pub fn vortex_residual(a: &Connection, u: &Section, c: f64) -> SiteField<f64> {
    let b = crate::lattice::lambda_contract(&curvature(a));
    let mut w = b;
    for k in 0..w.data.len() {
        w[k] += u.fiber.moment(u.at(k)) - c;
    }
    w
}

/// `ê = |ΛF_A + μ(u) − c|²`.
pub fn ehat(a: &Connection, u: &Section, c: f64) -> SiteField<f64> {
    vortex_residual(a, u, c).map(|w| w * w)
}

/// Sum of the squared L² norms of the two Euler–Lagrange operators.
pub fn dissipation(gu: &SiteField<V3>, ga: &LinkField<f64>) -> f64 {
    gu.l2_inner(gu).unwrap_or(f64::NAN) + ga.l2_inner(ga).unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Discrete operators used by the identity suite. All transposes are exact
// with respect to the site/link/plaquette inner products.

/// `D^T`: transpose of [`covariant_derivative`].
pub fn covariant_derivative_transpose(a: &Connection, u: &Section, e: &LinkField<V3>) -> SiteField<V3> {
    let g = a.grid();
    let inv = 1.0 / g.a;
    let mut out = SiteField::filled(g, V3::zeros());
    for k in 0..g.sites() {
        for dir in Dir::BOTH {
            let kf = g.forward(k, dir);
            let v = *e.at(k, dir);
            out[k] -= v * inv;
            out[kf] += u.fiber.act(-a.transport_angle(k, dir), &v) * inv;
        }
    }
    out
}

/// Orthogonal projection of a link field onto its (0,1) part at each site.
pub fn project_01(u: &Section, e: &LinkField<V3>) -> LinkField<V3> {
    let g = e.grid;
    let mut out = LinkField::filled(g, V3::zeros());
    for k in 0..g.sites() {
        let p = u.at(k);
        let (ex, ey) = (*e.at(k, Dir::X), *e.at(k, Dir::Y));
        *out.at_mut(k, Dir::X) = (ex + u.fiber.complex_structure(p, &ey)) * 0.5;
        *out.at_mut(k, Dir::Y) = (ey - u.fiber.complex_structure(p, &ex)) * 0.5;
    }
    out
}

/// `∂̄_A u = Π_{0,1} D u`.
pub fn dbar(a: &Connection, u: &Section) -> LinkField<V3> {
    project_01(u, &covariant_derivative(a, u))
}

/// `∂̄_A^T α = D^T Π_{0,1} α`.
pub fn dbar_transpose(a: &Connection, u: &Section, alpha: &LinkField<V3>) -> SiteField<V3> {
    covariant_derivative_transpose(a, u, &project_01(u, alpha))
}

/// Covariant exterior derivative of a section-valued 1-form, integrated
/// over each plaquette and transported to its base site.
pub fn exterior_derivative(a: &Connection, u: &Section, alpha: &LinkField<V3>) -> PlaquetteField<V3> {
    let g = a.grid();
    let f = u.fiber;
    let data = (0..g.sites())
        .map(|k| {
            let kx = g.forward(k, Dir::X);
            let ky = g.forward(k, Dir::Y);
            let right = f.act(a.transport_angle(k, Dir::X), alpha.at(kx, Dir::Y));
            let top = f.act(a.transport_angle(k, Dir::Y), alpha.at(ky, Dir::X));
            (alpha.at(k, Dir::X) + right - top - alpha.at(k, Dir::Y)) * g.a
        })
        .collect();
    PlaquetteField { grid: g, data }
}

/// Residual norms of the discrete Kähler-type identities at `(A, u)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResiduals {
    /// `∂̄^T α + J Λ d_A α` with `α = ∂̄_A u`.
    pub dbar_adjoint: f64,
    /// `L_u^*(d_A u) − dμ(u)∘j`; exact only for holomorphic `u`.
    pub moment_rotation: f64,
    /// `d_A^* F_A − dB∘j`.
    pub curvature_divergence: f64,
    /// `(D^T D − ΛF)u − 2 ∂̄^T ∂̄ u`.
    pub weitzenbock: f64,
    /// `‖∂̄_A u‖`, reported next to `moment_rotation`.
    pub dbar_norm: f64,
}

impl IdentityResiduals {
    pub fn labelled(&self) -> [(&'static str, f64); 5] {
        [
            ("dbar_adjoint", self.dbar_adjoint),
            ("moment_rotation", self.moment_rotation),
            ("curvature_divergence", self.curvature_divergence),
            ("weitzenbock", self.weitzenbock),
            ("dbar_norm", self.dbar_norm),
        ]
    }
}

pub fn identity_residuals(a: &Connection, u: &Section) -> IdentityResiduals {
    let g = a.grid();
    let f = u.fiber;
    let inv = 1.0 / g.a;
    let b = crate::lattice::lambda_contract(&curvature(a));
    let du = covariant_derivative(a, u);
    let alpha = project_01(u, &du);
    let dbar_norm = alpha.l2_norm();

    let lhs = dbar_transpose(a, u, &alpha);
    let dalpha = exterior_derivative(a, u, &alpha);
    let adj = SiteField {
        grid: g,
        data: (0..g.sites())
            .map(|k| lhs[k] + f.complex_structure(u.at(k), &dalpha[k]) * (inv * inv))
            .collect(),
    };

    let mu = u.moment();
    let mut rot = LinkField::filled(g, 0.0);
    for k in 0..g.sites() {
        let gen = f.generator(u.at(k));
        let dx_mu = (mu[g.forward(k, Dir::X)] - mu[k]) * inv;
        let dy_mu = (mu[g.forward(k, Dir::Y)] - mu[k]) * inv;
        *rot.at_mut(k, Dir::X) = gen.dot(du.at(k, Dir::X)) - dy_mu;
        *rot.at_mut(k, Dir::Y) = gen.dot(du.at(k, Dir::Y)) + dx_mu;
    }

    let mut div = LinkField::filled(g, 0.0);
    for k in 0..g.sites() {
        let dx_b = (b[g.forward(k, Dir::X)] - b[k]) * inv;
        let dy_b = (b[g.forward(k, Dir::Y)] - b[k]) * inv;
        *div.at_mut(k, Dir::X) = (b[k] - b[g.backward(k, Dir::Y)]) * inv - dy_b;
        *div.at_mut(k, Dir::Y) = (b[g.backward(k, Dir::X)] - b[k]) * inv + dx_b;
    }

    let lap = covariant_derivative_transpose(a, u, &du);
    let dd = dbar_transpose(a, u, &alpha);
    let weitz = SiteField {
        grid: g,
        data: (0..g.sites()).map(|k| lap[k] - u.at(k) * b[k] - dd[k] * 2.0).collect(),
    };

    IdentityResiduals {
        dbar_adjoint: adj.l2_norm(),
        moment_rotation: rot.l2_norm(),
        curvature_divergence: div.l2_norm(),
        weitzenbock: weitz.l2_norm(),
        dbar_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{Fiber, FiberPoint};
    use crate::gauge::{gauge_apply, GaugeTransform};
    use crate::lattice::build_grid;
    use crate::rng::LabRng;
    use num_complex::Complex64;

    fn random_section(g: crate::lattice::Grid, fiber: Fiber, r: &mut LabRng) -> Section {
        let data = (0..g.sites())
            .map(|_| fiber.retract(&V3::new(r.symmetric(), r.symmetric(), r.symmetric())))
            .collect();
        Section { fiber, sites: SiteField { grid: g, data } }
    }

    fn random_connection(g: crate::lattice::Grid, r: &mut LabRng) -> Connection {
        let mut a = Connection::constant_curvature(g);
        a.links.data.iter_mut().for_each(|v| *v += 0.5 * r.symmetric());
        a
    }

    #[test]
    fn ymh_examples() {
        let g = build_grid(8, 8, 0.5, 0).unwrap();
        let u = Section::constant(g, FiberPoint::LinearC(Complex64::new(1.0, 0.0)));
        let e = ymh(&Connection::zero(g), &u, 0.5);
        assert_eq!((e.e1, e.e2, e.e3, e.total), (0.0, 0.0, 0.0, 0.0));
        let e = ymh(&Connection::zero(g), &u, 2.0);
        assert!((e.e3 - 1.5f64.powi(2) * 16.0).abs() < 1e-12);
        assert_eq!(e.total, e.e1 + e.e2 + e.e3);
        let gu = grad_u(&Connection::zero(g), &u, 0.5);
        assert!(gu.data.iter().all(|v| v.norm() == 0.0));
        let ga = grad_a(&Connection::zero(g), &u, 0.5);
        assert!(ga.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ehat_examples() {
        let g = build_grid(6, 6, 0.5, 0).unwrap();
        let u = Section::constant(g, FiberPoint::LinearC(Complex64::new(2.0, 0.0)));
        let e = ehat(&Connection::zero(g), &u, 0.5);
        assert!(e.data.iter().all(|&x| (x - 2.25).abs() < 1e-14));
        let mut r = LabRng::new(41);
        for d in [-1, 0, 2] {
            let g = build_grid(8, 6, 0.5, d).unwrap();
            for fiber in [Fiber::LinearC, Fiber::Sphere] {
                let a = random_connection(g, &mut r);
                let u = random_section(g, fiber, &mut r);
                let c = 0.3;
                let w = vortex_residual(&a, &u, c);
                let mean = crate::lattice::integrate(&w) / g.volume();
                assert!(mean >= g.threshold() + fiber.min_moment() - c - 1e-12);
                let e = crate::lattice::integrate(&ehat(&a, &u, c));
                let bound = (2.0 * std::f64::consts::PI * d as f64 + (fiber.min_moment() - c) * g.volume()).max(0.0);
                assert!(e >= bound * bound / g.volume() - 1e-9);
            }
        }
    }

    #[test]
    fn gradients_match_directional_derivatives() {
        let mut r = LabRng::new(42);
        for fiber in [Fiber::LinearC, Fiber::Sphere] {
            let g = build_grid(6, 5, 0.4, 1).unwrap();
            let a = random_connection(g, &mut r);
            let u = random_section(g, fiber, &mut r);
            let c = 0.7;
            let gu = grad_u(&a, &u, c);
            let ga = grad_a(&a, &u, c);
            for k in 0..g.sites() {
                if fiber == Fiber::Sphere {
                    assert!(gu[k].dot(u.at(k)).abs() <= 1e-12);
                }
            }
            for _ in 0..20 {
                let vu: Vec<V3> = (0..g.sites())
                    .map(|k| fiber.project_tangent(u.at(k), &V3::new(r.symmetric(), r.symmetric(), r.symmetric())))
                    .collect();
                let va: Vec<f64> = (0..2 * g.sites()).map(|_| r.symmetric()).collect();
                let h = 1e-5;
                let energy = |t: f64| {
                    let mut a2 = a.clone();
                    let mut u2 = u.clone();
                    for (l, v) in va.iter().enumerate() {
                        a2.links.data[l] += t * v;
                    }
                    for (k, v) in vu.iter().enumerate() {
                        u2.sites[k] = fiber.retract(&(u.at(k) + v * t));
                    }
                    ymh(&a2, &u2, c).total
                };
                let fd = (energy(h) - energy(-h)) / (2.0 * h);
                let vu_field = SiteField { grid: g, data: vu.clone() };
                let va_field = LinkField { grid: g, data: va.clone() };
                let exact = 2.0 * (gu.l2_inner(&vu_field).unwrap() + ga.l2_inner(&va_field).unwrap());
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3), "{fiber:?}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn grad_a_does_not_depend_on_c() {
        let mut r = LabRng::new(43);
        let g = build_grid(6, 6, 0.5, 1).unwrap();
        let a = random_connection(g, &mut r);
        let u = random_section(g, Fiber::Sphere, &mut r);
        assert_eq!(grad_a(&a, &u, 0.1), grad_a(&a, &u, 5.0));
    }

    #[test]
    fn energy_and_gradients_are_gauge_covariant() {
        let mut r = LabRng::new(44);
        for fiber in [Fiber::LinearC, Fiber::Sphere] {
            let g = build_grid(8, 8, 0.5, 1).unwrap();
            let a = random_connection(g, &mut r);
            let u = random_section(g, fiber, &mut r);
            let gt = GaugeTransform::random_unitary(g, &mut r);
            let (a2, u2) = gauge_apply(&gt, &a, &u).unwrap();
            let (e0, e1) = (ymh(&a, &u, 0.4).total, ymh(&a2, &u2, 0.4).total);
            assert!((e0 - e1).abs() <= 1e-12 * e0);
            let (ga0, ga1) = (grad_a(&a, &u, 0.4), grad_a(&a2, &u2, 0.4));
            for (x, y) in ga0.data.iter().zip(&ga1.data) {
                assert!((x - y).abs() < 1e-11);
            }
            let GaugeTransform::Unitary { phase } = &gt else { unreachable!() };
            let (gu0, gu1) = (grad_u(&a, &u, 0.4), grad_u(&a2, &u2, 0.4));
            for k in 0..g.sites() {
                assert!((fiber.act(-phase[k], &gu0[k]) - gu1[k]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn transposes_are_exact() {
        let mut r = LabRng::new(45);
        let g = build_grid(7, 6, 0.3, 1).unwrap();
        let a = random_connection(g, &mut r);
        let u = random_section(g, Fiber::LinearC, &mut r);
        let v = random_section(g, Fiber::LinearC, &mut r);
        let e = LinkField { grid: g, data: (0..2 * g.sites()).map(|_| V3::new(r.symmetric(), r.symmetric(), 0.0)).collect() };
        let dv = covariant_derivative(&a, &v);
        let lhs = dv.l2_inner(&e).unwrap();
        let rhs = v.sites.l2_inner(&covariant_derivative_transpose(&a, &u, &e)).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        let p = project_01(&u, &e);
        let pp = project_01(&u, &p);
        for l in 0..p.data.len() {
            assert!((p.data[l] - pp.data[l]).norm() < 1e-14);
        }
        let f = LinkField { grid: g, data: (0..2 * g.sites()).map(|_| V3::new(r.symmetric(), r.symmetric(), 0.0)).collect() };
        let x = project_01(&u, &e).l2_inner(&f).unwrap();
        let y = e.l2_inner(&project_01(&u, &f)).unwrap();
        assert!((x - y).abs() < 1e-13);
    }

    #[test]
    fn identity_residuals_vanish_on_trivial_data() {
        let g = build_grid(8, 8, 0.5, 0).unwrap();
        let u = Section::constant(g, FiberPoint::LinearC(Complex64::new(0.3, 0.4)));
        let res = identity_residuals(&Connection::zero(g), &u);
        for (name, v) in res.labelled() {
            assert_eq!(v, 0.0, "{name}");
        }
    }


    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn energy_and_residual_are_gauge_invariant(seed in any::<u64>(), sphere in any::<bool>(), d in -2i64..3, c in -1.0..2.0f64) {
                let fiber = if sphere { Fiber::Sphere } else { Fiber::LinearC };
                let mut r = LabRng::new(seed);
                let g = build_grid(6, 5, 0.4, d).unwrap();
                let a = random_connection(g, &mut r);
                let u = random_section(g, fiber, &mut r);
                let (a2, u2) = gauge_apply(&GaugeTransform::random_unitary(g, &mut r), &a, &u).unwrap();
                let (e0, e1) = (ymh(&a, &u, c).total, ymh(&a2, &u2, c).total);
                prop_assert!((e0 - e1).abs() <= 1e-12 * e0.max(1e-300));
                let (w0, w1) = (ehat(&a, &u, c), ehat(&a2, &u2, c));
                let scale = w0.data.iter().fold(1e-300f64, |m, v| m.max(*v));
                for (x, y) in w0.data.iter().zip(&w1.data) {
                    prop_assert!((x - y).abs() <= 1e-12 * scale);
                }
            }

            #[test]
            fn energy_is_nonnegative(seed in any::<u64>(), sphere in any::<bool>(), c in -3.0..3.0f64) {
                let fiber = if sphere { Fiber::Sphere } else { Fiber::LinearC };
                let mut r = LabRng::new(seed);
                let g = build_grid(5, 5, 0.5, 1).unwrap();
                let e = ymh(&random_connection(g, &mut r), &random_section(g, fiber, &mut r), c);
                prop_assert!(e.e1 >= 0.0 && e.e2 >= 0.0 && e.e3 >= 0.0);
                prop_assert!((e.total - (e.e1 + e.e2 + e.e3)).abs() <= 1e-12 * e.total);
            }
        }
    }
}
