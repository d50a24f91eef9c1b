//! Verification drivers shared by the command line and the test suites:
//! mesh-refinement studies of the discrete identities, exact algebraic
//! checks, and finite-difference gradient checks.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::energy::{grad_a, grad_u, identity_residuals, ymh};
use crate::error::Result;
use crate::fiber::{Fiber, FiberPoint, FiberTangent, LieAlgebraValue, V3};
use crate::gauge::{covariant_derivative, covariant_derivative_centered, Connection, Section};
use crate::lattice::{build_grid, lambda_contract, wedge_omega, Dir, FormField, Grid, LinkField, SiteField};
use crate::rng::LabRng;

/// Side length of the torus used for refinement studies.
pub const STUDY_LENGTH: f64 = 4.0;

pub const STUDY_SIZES: [usize; 4] = [8, 16, 32, 64];

#[derive(Clone, Debug)]
pub struct MeshStudy {
    pub label: &'static str,
    pub sizes: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `log2(r_n / r_2n)` for consecutive sizes.
    pub orders: Vec<f64>,
    pub expected_order: f64,
}

impl MeshStudy {
    fn new(label: &'static str, expected_order: f64, sizes: &[usize], residuals: Vec<f64>) -> Self {
        let orders = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        MeshStudy { label, sizes: sizes.to_vec(), residuals, orders, expected_order }
    }

    /// Order over the finest pair of grids.
    pub fn observed_order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }

    pub fn passes(&self) -> bool {
        self.observed_order() >= self.expected_order
    }
}

/// Exact (non-refinement) check with its worst error.
#[derive(Clone, Debug)]
pub struct ExactCheck {
    pub label: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl ExactCheck {
    pub fn passes(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

const KAPPA: f64 = 2.0 * PI / STUDY_LENGTH;

fn smooth_connection(x: f64, y: f64) -> (f64, f64) {
    (
        0.3 * (KAPPA * y).sin() + 0.2 * (KAPPA * x).cos(),
        0.25 * (KAPPA * x).cos() - 0.15 * (KAPPA * (x + y)).sin(),
    )
}

fn smooth_section(x: f64, y: f64) -> V3 {
    V3::new(
        1.0 + 0.3 * (KAPPA * x).sin() * (KAPPA * y).cos(),
        0.2 * (KAPPA * x + 0.5).cos() + 0.1 * (KAPPA * y).sin(),
        0.0,
    )
}

/// Potential for the holomorphic data `u = e^f z0`, `A = (∂_y f, −∂_x f)`.
fn potential(x: f64, y: f64) -> f64 {
    0.3 * (KAPPA * x).sin() + 0.2 * (KAPPA * y).cos() + 0.1 * (KAPPA * (x - y)).sin()
}

fn potential_grad(x: f64, y: f64) -> (f64, f64) {
    let c = 0.1 * KAPPA * (KAPPA * (x - y)).cos();
    (0.3 * KAPPA * (KAPPA * x).cos() + c, -0.2 * KAPPA * (KAPPA * y).sin() - c)
}

fn study_grid(n: usize) -> Grid {
    build_grid(n, n, STUDY_LENGTH / n as f64, 0).expect("study grid")
}

/// Smooth generic pair `(A, u)` on the refinement torus.
pub fn manufactured_pair(n: usize) -> (Connection, Section) {
    let g = study_grid(n);
    (Connection::from_fn(g, smooth_connection), Section::from_fn(g, Fiber::LinearC, smooth_section))
}

/// Smooth holomorphic pair on the refinement torus.
pub fn manufactured_holomorphic_pair(n: usize) -> (Connection, Section) {
    let g = study_grid(n);
    let a = Connection::from_fn(g, |x, y| {
        let (fx, fy) = potential_grad(x, y);
        (fy, -fx)
    });
    let z0 = Complex64::new(0.8, 0.6);
    let u = Section::from_fn(g, Fiber::LinearC, |x, y| {
        let z = z0 * potential(x, y).exp();
        V3::new(z.re, z.im, 0.0)
    });
    (a, u)
}

/// Continuum `D_μ u = ∂_μ u + A_μ L_u(1)` at a site, by a 4th-order stencil.
fn analytic_covariant_derivative(x: f64, y: f64, dir: Dir) -> V3 {
    let h = 1e-3;
    let (ex, ey) = match dir {
        Dir::X => (1.0, 0.0),
        Dir::Y => (0.0, 1.0),
    };
    let at = |t: f64| smooth_section(x + t * ex, y + t * ey);
    let du = (at(-2.0 * h) - at(-h) * 8.0 + at(h) * 8.0 - at(2.0 * h)) / (12.0 * h);
    let (ax, ay) = smooth_connection(x, y);
    let amu = if dir == Dir::X { ax } else { ay };
    let u = smooth_section(x, y);
    du + Fiber::LinearC.generator(&u) * amu
}

fn derivative_error(n: usize, centered: bool) -> f64 {
    let (a, u) = manufactured_pair(n);
    let g = a.grid();
    let du = if centered { covariant_derivative_centered(&a, &u) } else { covariant_derivative(&a, &u) };
    let mut err = LinkField::filled(g, V3::zeros());
    for k in 0..g.sites() {
        let (x, y) = g.position(k);
        for dir in Dir::BOTH {
            *err.at_mut(k, dir) = du.at(k, dir) - analytic_covariant_derivative(x, y, dir);
        }
    }
    err.l2_norm()
}

/// Refinement studies of the covariant derivative and the four operator
/// identities on smooth manufactured data.
pub fn identity_mesh_study(sizes: &[usize]) -> Vec<MeshStudy> {
    let mut fwd = Vec::new();
    let mut ctr = Vec::new();
    let mut adj = Vec::new();
    let mut rot = Vec::new();
    let mut div = Vec::new();
    let mut wz = Vec::new();
    for &n in sizes {
        fwd.push(derivative_error(n, false));
        ctr.push(derivative_error(n, true));
        let (a, u) = manufactured_pair(n);
        let r = identity_residuals(&a, &u);
        adj.push(r.dbar_adjoint);
        div.push(r.curvature_divergence);
        wz.push(r.weitzenbock);
        let (a, u) = manufactured_holomorphic_pair(n);
        rot.push(identity_residuals(&a, &u).moment_rotation);
    }
    vec![
        MeshStudy::new("covariant_derivative", 1.0, sizes, fwd),
        MeshStudy::new("covariant_derivative_centered", 1.9, sizes, ctr),
        MeshStudy::new("dbar_adjoint", 1.0, sizes, adj),
        MeshStudy::new("moment_rotation", 1.0, sizes, rot),
        MeshStudy::new("curvature_divergence", 1.0, sizes, div),
        MeshStudy::new("weitzenbock", 1.0, sizes, wz),
    ]
}

fn random_fiber_point(f: Fiber, r: &mut LabRng) -> V3 {
    match f {
        Fiber::LinearC => V3::new(2.0 * r.symmetric(), 2.0 * r.symmetric(), 0.0),
        Fiber::Sphere => f.retract(&V3::new(r.symmetric(), r.symmetric(), r.symmetric() + 1e-3)),
    }
}

/// Pointwise fiber identities and `Λ∘L = id` on random samples.
pub fn exact_checks(samples: usize, seed: u64) -> Vec<ExactCheck> {
    let mut r = LabRng::new(seed);
    let mut adjoint: f64 = 0.0;
    let mut generator: f64 = 0.0;
    for f in [Fiber::LinearC, Fiber::Sphere] {
        for _ in 0..samples {
            let p = random_fiber_point(f, &mut r);
            let v = f.project_tangent(&p, &V3::new(r.symmetric(), r.symmetric(), r.symmetric()));
            let rho = 3.0 * r.symmetric();
            let point = FiberPoint::from_ambient(f, p);
            let tv = FiberTangent::from_ambient(f, v);
            let lxi = point.infinitesimal_action(LieAlgebraValue(rho));
            let (lstar, dmustar) = point.adjoint_maps(&tv, rho);
            adjoint = adjoint.max((lxi.metric(&tv) - rho * lstar).abs());
            let rhs = -f.complex_structure(&p, &dmustar.ambient());
            generator = generator.max((lxi.ambient() - rhs).norm());
        }
    }
    let g = build_grid(9, 7, 0.37, 1).expect("grid");
    let s = SiteField { grid: g, data: (0..g.sites()).map(|_| r.symmetric()).collect() };
    let back = lambda_contract(&wedge_omega(&s));
    let lambda_l = back.data.iter().zip(&s.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    vec![
        ExactCheck { label: "adjoint_pairing", max_error: adjoint, tolerance: 1e-10 },
        ExactCheck { label: "generator_is_minus_j_dmu_adjoint", max_error: generator, tolerance: 1e-10 },
        ExactCheck { label: "lambda_after_wedge", max_error: lambda_l, tolerance: 1e-10 },
    ]
}

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub fiber: Fiber,
    pub directions: usize,
    pub max_rel_error_u: f64,
    pub max_rel_error_a: f64,
}

/// Random configuration on `grid` used by gradient checks and flows.
pub fn random_configuration(grid: Grid, fiber: Fiber, rng: &mut LabRng, amplitude: f64) -> (Connection, Section) {
    let mut a = Connection::constant_curvature(grid);
    a.links.data.iter_mut().for_each(|v| *v += amplitude * rng.symmetric());
    let data = (0..grid.sites())
        .map(|_| match fiber {
            Fiber::LinearC => V3::new(1.0 + amplitude * rng.symmetric(), amplitude * rng.symmetric(), 0.0),
            Fiber::Sphere => fiber.retract(&V3::new(rng.symmetric(), rng.symmetric(), rng.symmetric() + 1e-3)),
        })
        .collect();
    (a, Section { fiber, sites: SiteField { grid, data } })
}

/// Central differences of `ymh` along random directions against
/// `2⟨grad, V⟩`, separately for the section and the connection.
pub fn gradcheck(a: &Connection, u: &Section, c: f64, directions: usize, step: f64, seed: u64) -> Result<GradCheck> {
    let g = a.grid();
    g.check_same(&u.grid())?;
    let f = u.fiber;
    let mut r = LabRng::new(seed);
    let gu = grad_u(a, u, c);
    let ga = grad_a(a, u, c);
    let mut worst_u: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for _ in 0..directions {
        let vu = SiteField {
            grid: g,
            data: (0..g.sites())
                .map(|k| f.project_tangent(u.at(k), &V3::new(r.symmetric(), r.symmetric(), r.symmetric())))
                .collect(),
        };
        let moved = |t: f64| {
            let mut w = u.clone();
            for k in 0..g.sites() {
                w.sites[k] = move_along(f, u.at(k), &vu[k], t);
            }
            ymh(a, &w, c).total
        };
        let fd = (moved(step) - moved(-step)) / (2.0 * step);
        let exact = 2.0 * gu.l2_inner(&vu)?;
        worst_u = worst_u.max(relative(fd, exact));

        let va = LinkField { grid: g, data: (0..2 * g.sites()).map(|_| r.symmetric()).collect() };
        let shifted = |t: f64| {
            let mut b = a.clone();
            for (x, v) in b.links.data.iter_mut().zip(&va.data) {
                *x += t * v;
            }
            ymh(&b, u, c).total
        };
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        let exact = 2.0 * ga.l2_inner(&va)?;
        worst_a = worst_a.max(relative(fd, exact));
    }
    Ok(GradCheck { fiber: f, directions, max_rel_error_u: worst_u, max_rel_error_a: worst_a })
}

/// Geodesic step on the sphere, straight line in the plane.
fn move_along(f: Fiber, p: &V3, v: &V3, t: f64) -> V3 {
    match f {
        Fiber::LinearC => p + v * t,
        Fiber::Sphere => {
            let n = v.norm();
            if n == 0.0 {
                *p
            } else {
                p * (n * t).cos() + v / n * (n * t).sin()
            }
        }
    }
}

fn relative(fd: f64, exact: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(fd.abs()).max(1e-12)
}
