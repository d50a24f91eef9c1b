//! The Kähler fiber with its Hamiltonian circle action.
//!
//! Two models are provided, both embedded in `R^3` so lattice code can treat
//! points and tangents uniformly:
//!
//! * [`Fiber::LinearC`]: `C ≅ R^2 × {0}` with `ω = dx∧dy`, `J = i`,
//!   circle action `z ↦ e^{-iθ} z` and moment map `μ(z) = |z|²/2`.
//! * [`Fiber::Sphere`]: the unit sphere with its area form, `J v = p × v`,
//!   action by rotation `+θ` about the z axis and moment map `μ(p) = p_z`.
//!
//! With these choices `d⟨μ, ξ⟩ = ι(X_ξ)ω` holds for both models. The signs
//! are not arbitrary: the tests in this module check the moment-map relation
//! by finite differences and the identity `L_p = -J (dμ_p)^*`, and would fail
//! if any of them were flipped. In both models `ω(v, w) = n·(v × w)` and
//! `J v = n × v`, where `n` is `e_z` for the plane and `p` for the sphere.
//!
//! The Lie algebra `Lie(U(1)) = iR` is identified with `R` via `ξ = i ρ`
//! and carries the inner product `⟨ξ, η⟩ = ρ_ξ ρ_η`.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type V3 = Vector3<f64>;

const E_Z: V3 = Vector3::new(0.0, 0.0, 1.0);

/// Plateau tolerance used by [`FiberPoint::maximal_weight`].
pub const PLATEAU_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fiber {
    LinearC,
    Sphere,
}

/// Real coordinate of an element of `Lie(U(1))`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct LieAlgebraValue(pub f64);

impl LieAlgebraValue {
    pub fn inner(self, other: LieAlgebraValue) -> f64 {
        self.0 * other.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FiberPoint {
    LinearC(Complex64),
    /// Unit vector in `R^3`.
    Sphere(V3),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FiberTangent {
    LinearC(Complex64),
    /// Vector orthogonal to the base point.
    Sphere(V3),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaximalWeight {
    Finite(f64),
    Infinite,
}

impl Fiber {
    /// Sign `ε` such that the action is rotation by `εθ` about the z axis.
    #[inline]
    pub fn orientation(self) -> f64 {
        match self {
            Fiber::LinearC => -1.0,
            Fiber::Sphere => 1.0,
        }
    }

    #[inline]
    pub fn moment(self, p: &V3) -> f64 {
        match self {
            Fiber::LinearC => 0.5 * (p.x * p.x + p.y * p.y),
            Fiber::Sphere => p.z,
        }
    }

    /// Riemannian gradient of `μ` at `p` (tangent to the fiber).
    #[inline]
    pub fn moment_gradient(self, p: &V3) -> V3 {
        match self {
            Fiber::LinearC => V3::new(p.x, p.y, 0.0),
            Fiber::Sphere => E_Z - p * p.z,
        }
    }

    /// `L_p(1)`, the fundamental vector field of the unit generator.
    #[inline]
    pub fn generator(self, p: &V3) -> V3 {
        let e = self.orientation();
        V3::new(-e * p.y, e * p.x, 0.0)
    }

    #[inline]
    pub fn normal(self, p: &V3) -> V3 {
        match self {
            Fiber::LinearC => E_Z,
            Fiber::Sphere => *p,
        }
    }

    #[inline]
    pub fn complex_structure(self, p: &V3, v: &V3) -> V3 {
        self.normal(p).cross(v)
    }

    #[inline]
    pub fn omega(self, p: &V3, v: &V3, w: &V3) -> f64 {
        self.normal(p).dot(&v.cross(w))
    }

    /// `Φ_θ(v)`: the circle action by angle `θ`, extended linearly to `R^3`.
    #[inline]
    pub fn act(self, theta: f64, v: &V3) -> V3 {
        let (s, c) = (self.orientation() * theta).sin_cos();
        rotate_z(c, s, v)
    }

    /// `Φ_θ` with `cos(εθ)`, `sin(εθ)` precomputed.
    #[inline]
    pub fn act_cs(self, cos: f64, sin: f64, v: &V3) -> V3 {
        rotate_z(cos, sin, v)
    }

    pub fn project_tangent(self, p: &V3, v: &V3) -> V3 {
        match self {
            Fiber::LinearC => V3::new(v.x, v.y, 0.0),
            Fiber::Sphere => v - p * p.dot(v),
        }
    }

    /// Map an ambient vector back onto the fiber.
    pub fn retract(self, v: &V3) -> V3 {
        match self {
            Fiber::LinearC => V3::new(v.x, v.y, 0.0),
            Fiber::Sphere => {
                let n = v.norm();
                if n > 0.0 {
                    v / n
                } else {
                    E_Z
                }
            }
        }
    }

    /// `e^{is}·p`: the complexified action along the imaginary direction `s`,
    /// i.e. the time-1 flow of `J X_s = grad⟨μ, s⟩`.
    pub fn complexified(self, p: &V3, s: f64) -> V3 {
        match self {
            Fiber::LinearC => {
                let k = s.exp();
                V3::new(k * p.x, k * p.y, 0.0)
            }
            Fiber::Sphere => {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                if r == 0.0 || s == 0.0 {
                    return *p;
                }
                // Polar angle from the north pole; the stereographic coordinate
                // w = tan(φ/2)e^{iα} is scaled by e^{-s}.
                let half = r.atan2(1.0 + p.z);
                let half_new = ((-s).exp() * half.tan()).atan();
                let phi = 2.0 * half_new;
                let (sp, cp) = phi.sin_cos();
                V3::new(sp * p.x / r, sp * p.y / r, cp)
            }
        }
    }

    pub fn is_valid(self, p: &V3) -> bool {
        match self {
            Fiber::LinearC => p.z == 0.0 && p.x.is_finite() && p.y.is_finite(),
            Fiber::Sphere => (p.norm() - 1.0).abs() <= 1e-12,
        }
    }

    /// Lower bound of `μ` over the fiber.
    pub fn min_moment(self) -> f64 {
        match self {
            Fiber::LinearC => 0.0,
            Fiber::Sphere => -1.0,
        }
    }
}

#[inline]
fn rotate_z(c: f64, s: f64, v: &V3) -> V3 {
    V3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

impl FiberPoint {
    pub fn fiber(&self) -> Fiber {
        match self {
            FiberPoint::LinearC(_) => Fiber::LinearC,
            FiberPoint::Sphere(_) => Fiber::Sphere,
        }
    }

    pub fn ambient(&self) -> V3 {
        match self {
            FiberPoint::LinearC(z) => V3::new(z.re, z.im, 0.0),
            FiberPoint::Sphere(p) => *p,
        }
    }

    pub fn from_ambient(fiber: Fiber, v: V3) -> Self {
        match fiber {
            Fiber::LinearC => FiberPoint::LinearC(Complex64::new(v.x, v.y)),
            Fiber::Sphere => FiberPoint::Sphere(v),
        }
    }

    /// Sphere point from an arbitrary nonzero vector.
    pub fn sphere(v: V3) -> Self {
        FiberPoint::Sphere(Fiber::Sphere.retract(&v))
    }

    pub fn north_pole() -> Self {
        FiberPoint::Sphere(E_Z)
    }

    pub fn moment_map(&self) -> f64 {
        self.fiber().moment(&self.ambient())
    }

    pub fn infinitesimal_action(&self, xi: LieAlgebraValue) -> FiberTangent {
        let f = self.fiber();
        FiberTangent::from_ambient(f, f.generator(&self.ambient()) * xi.0)
    }

    pub fn complex_structure(&self, v: &FiberTangent) -> FiberTangent {
        let f = self.fiber();
        FiberTangent::from_ambient(f, f.complex_structure(&self.ambient(), &v.ambient()))
    }

    /// `(L_p^* v, (dμ_p)^* ρ)`, with `L_p^* = dμ_p ∘ J`.
    pub fn adjoint_maps(&self, v: &FiberTangent, rho: f64) -> (f64, FiberTangent) {
        let f = self.fiber();
        let p = self.ambient();
        let grad = f.moment_gradient(&p);
        let jv = f.complex_structure(&p, &v.ambient());
        (grad.dot(&jv), FiberTangent::from_ambient(f, grad * rho))
    }

    /// Unitary action `e^{iθ}·p` (θ the real coordinate of the group element).
    pub fn act(&self, theta: f64) -> FiberPoint {
        let f = self.fiber();
        FiberPoint::from_ambient(f, f.act(theta, &self.ambient()))
    }

    pub fn complexified_action(&self, s: f64) -> FiberPoint {
        let f = self.fiber();
        FiberPoint::from_ambient(f, f.complexified(&self.ambient(), s))
    }

    pub fn is_fixed_point(&self) -> bool {
        let f = self.fiber();
        f.generator(&self.ambient()).norm() == 0.0
    }

    /// `λ_t(p; ξ) = ⟨μ(e^{itξ} p), ξ⟩`.
    pub fn weight_at(&self, xi: LieAlgebraValue, t: f64) -> f64 {
        let f = self.fiber();
        xi.0 * f.moment(&f.complexified(&self.ambient(), t * xi.0))
    }

    /// Maximal weight `lim_{t→∞} λ_t(p; ξ)`.
    ///
    /// The orbit is sampled on the dyadic checkpoints `t_max / 2^k`. A value
    /// above `blowup_threshold` reports [`MaximalWeight::Infinite`]; a change
    /// below [`PLATEAU_TOL`] between `t_max / 2` and `t_max` reports the
    /// plateau. Anything else is [`Error::Undetermined`].
    pub fn maximal_weight(
        &self,
        xi: LieAlgebraValue,
        t_max: f64,
        blowup_threshold: f64,
    ) -> Result<MaximalWeight> {
        if !(t_max > 0.0) || !(blowup_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "t_max and blowup_threshold must be positive".into(),
            ));
        }
        if xi.0 == 0.0 || self.is_fixed_point() {
            return Ok(MaximalWeight::Finite(xi.0 * self.moment_map()));
        }
        for k in (0..=20).rev() {
            let t = t_max / f64::powi(2.0, k);
            let l = self.weight_at(xi, t);
            if !l.is_finite() || l > blowup_threshold {
                return Ok(MaximalWeight::Infinite);
            }
        }
        let end = self.weight_at(xi, t_max);
        let mid = self.weight_at(xi, 0.5 * t_max);
        if (end - mid).abs() < PLATEAU_TOL {
            Ok(MaximalWeight::Finite(end))
        } else {
            Err(Error::Undetermined { t_max })
        }
    }
}

impl FiberTangent {
    pub fn ambient(&self) -> V3 {
        match self {
            FiberTangent::LinearC(z) => V3::new(z.re, z.im, 0.0),
            FiberTangent::Sphere(v) => *v,
        }
    }

    pub fn from_ambient(fiber: Fiber, v: V3) -> Self {
        match fiber {
            Fiber::LinearC => FiberTangent::LinearC(Complex64::new(v.x, v.y)),
            Fiber::Sphere => FiberTangent::Sphere(v),
        }
    }

    pub fn metric(&self, other: &FiberTangent) -> f64 {
        self.ambient().dot(&other.ambient())
    }
}
