//! The modified Donaldson functional in the abelian reduction.
//!
//! For the potential `s = log h` over base data `(A₀, u₀)` with `B₀ = ΛF_{A₀}`
//! the closed form used here is
//!
//! ```text
//! Ψᶜ(s) = Σ_x a² [2 B₀ s + (e^s − 1)|u₀|² − 2 c s] + Σ_ℓ φ(s(x), s(x)) (δ_ℓ s)²
//! ```
//!
//! where `δ_ℓ s` is the difference of `s` along link `ℓ` and `φ(λ, λ) = 1/2`,
//! so the last sum is `‖ds‖²/2`. The normalization is fixed by
//! `∂Ψᶜ/∂s(x) = 2a² w(x)` with `w = ΛF + μ(u) − c` of the gauged pair, which
//! gives `dΨᶜ/dt = −4∫ê` along `ṡ = −2w`.

use crate::error::{Error, Result};
use crate::flow::MetricRun;
use crate::gauge::{curvature_density, Connection, Section};
use crate::lattice::{compensated_sum, Dir, SiteField};

/// `(e^Δ − Δ − 1)/Δ²` with `Δ = l2 − l1`.
pub fn phi_kernel(l1: f64, l2: f64) -> f64 {
    let d = l2 - l1;
    if d.abs() < 1e-4 {
        // 1/2 + Δ/6 + Δ²/24 + Δ³/120
        0.5 + d * (1.0 / 6.0 + d * (1.0 / 24.0 + d / 120.0))
    } else {
        (d.exp_m1() - d) / (d * d)
    }
}

pub fn psi_c(s: &SiteField<f64>, a0: &Connection, u0: &Section, c: f64) -> f64 {
    let g = s.grid;
    let b0 = curvature_density(a0);
    let bulk = compensated_sum((0..g.sites()).map(|k| {
        let v = s[k];
        let u2 = 2.0 * u0.fiber.moment(u0.at(k));
        2.0 * b0[k] * v + v.exp_m1() * u2 - 2.0 * c * v
    }));
    let grad = compensated_sum((0..g.sites()).flat_map(|k| {
        Dir::BOTH.map(|dir| {
            let d = s[g.forward(k, dir)] - s[k];
            phi_kernel(s[k], s[k]) * d * d
        })
    }));
    g.area() * bulk + grad
}

/// `sup|s| / max(‖s‖_{L¹}, 1e-30)`.
pub fn c0_l1_ratio(s: &SiteField<f64>) -> f64 {
    let sup = s.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l1 = s.grid.area() * compensated_sum(s.data.iter().map(|v| v.abs()));
    sup / l1.max(1e-30)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct PsiReport {
    pub psi_closed_form: f64,
    pub psi_path_integral: f64,
    pub mismatch: f64,
    pub sup_s: f64,
    pub l1_s: f64,
}

pub fn psi_report(run: &MetricRun) -> PsiReport {
    let last = run.steps.last().copied().expect("a metric run has at least its initial step");
    PsiReport {
        psi_closed_form: last.psi_c,
        psi_path_integral: run.psi_path_integral,
        mismatch: (last.psi_c - run.psi_path_integral).abs(),
        sup_s: last.sup_s,
        l1_s: last.l1_s,
    }
}

/// Central differences of `Ψᶜ` against `−4∫ê` at interior steps.
///
/// Steps whose `Ψᶜ` increment falls below `floor` are skipped: there the
/// difference quotient measures roundoff, not the derivative.
pub fn psi_derivative_errors(run: &MetricRun, floor: f64) -> Vec<(f64, f64)> {
    run.steps
        .windows(3)
        .filter_map(|w| {
            let dt = w[2].t - w[0].t;
            let dpsi = w[2].psi_c - w[0].psi_c;
            if dpsi.abs() < floor || !(dt > 0.0) {
                return None;
            }
            let fd = dpsi / dt;
            let exact = -4.0 * w[1].ehat_integral;
            Some((w[1].t, (fd - exact).abs() / exact.abs().max(1e-300)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct BoundedPotentialReport {
    /// `max_t sup|s|` along the stable run.
    pub stable_bound: f64,
    pub stable_settled: bool,
    pub unstable_max: f64,
    pub unstable_diverges: bool,
    /// Least-squares slope of `sup|s|` over the second half of the unstable run.
    pub unstable_rate: f64,
    /// `max_t sup|s| / ‖s‖_{L¹}` along the stable run.
    pub empirical_c0_l1: f64,
}

/// Bounded-versus-divergent `sup|s|` on a stable and an unstable metric run.
pub fn bounded_potential_probe(stable: &MetricRun, unstable: &MetricRun) -> Result<BoundedPotentialReport> {
    let stable_bound = stable.steps.iter().fold(0.0f64, |m, s| m.max(s.sup_s));
    let unstable_max = unstable.steps.iter().fold(0.0f64, |m, s| m.max(s.sup_s));
    let n = stable.steps.len();
    let tail = &stable.steps[n - (n / 10).max(1)..];
    let spread = tail.iter().fold(0.0f64, |m, s| m.max((s.sup_s - tail[0].sup_s).abs()));
    let stable_settled = spread <= 1e-3 * stable_bound.max(1e-12);
    let unstable_diverges = unstable_max > 10.0 * stable_bound;
    let empirical_c0_l1 = stable
        .trajectory
        .iter()
        .filter(|st| st.l1_s() > 0.0)
        .fold(0.0f64, |m, st| m.max(c0_l1_ratio(&st.s)));
    let half = &unstable.steps[unstable.steps.len() / 2..];
    let unstable_rate = slope(half.iter().map(|s| (s.t, s.sup_s)));
    if !stable_settled && !unstable_diverges {
        return Err(Error::InconclusiveRun(format!(
            "stable sup|s| still moving (spread {spread:e}) and unstable max {unstable_max} within 10x of {stable_bound}"
        )));
    }
    Ok(BoundedPotentialReport { stable_bound, stable_settled, unstable_max, unstable_diverges, unstable_rate, empirical_c0_l1 })
}

fn slope<I: Iterator<Item = (f64, f64)>>(points: I) -> f64 {
    let pts: Vec<(f64, f64)> = points.collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if den > 0.0 { num / den } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{Fiber, FiberPoint, V3};
    use crate::flow::{run_metric, FlowConfig, MetricState, Scheme};
    use crate::lattice::build_grid;
    use num_complex::Complex64;

    #[test]
    fn phi_examples() {
        assert_eq!(phi_kernel(0.3, 0.3), 0.5);
        assert!((phi_kernel(0.0, 1.0) - (std::f64::consts::E - 2.0)).abs() < 1e-12);
        assert!((phi_kernel(1.0, 0.0) - (-1.0f64).exp()).abs() < 1e-12);
        // Both branches agree with the Taylor polynomial near the switch.
        for d in [0.99e-4, 1.01e-4, -1.01e-4] {
            let taylor = 0.5 + d / 6.0 + d * d / 24.0;
            assert!((phi_kernel(0.0, d) - taylor).abs() < 1e-11);
        }
    }

    #[test]
    fn phi_swap_relation() {
        // φ(l1,l2) + e^Δ φ(l2,l1) = (e^Δ − 1)/Δ
        let mut r = crate::rng::LabRng::new(71);
        for _ in 0..1000 {
            let l1 = 4.0 * r.symmetric();
            let l2 = 4.0 * r.symmetric();
            let d = l2 - l1;
            let lhs = phi_kernel(l1, l2) + d.exp() * phi_kernel(l2, l1);
            let rhs = if d.abs() < 1e-8 { 1.0 } else { d.exp_m1() / d };
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{l1} {l2}");
            assert!(phi_kernel(l1, l2) > 0.0);
        }
    }

    #[test]
    fn ratio_examples() {
        let g = build_grid(8, 8, 0.5, 0).unwrap();
        assert!((c0_l1_ratio(&SiteField::filled(g, 2.5)) - 1.0 / 16.0).abs() < 1e-15);
        let mut spike = SiteField::filled(g, 0.0);
        spike[9] = -3.0;
        assert!((c0_l1_ratio(&spike) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn psi_zero_at_identity_and_gradient_is_twice_residual() {
        let g = build_grid(8, 6, 0.5, 1).unwrap();
        let a = Connection::constant_curvature(g);
        let u = Section::from_fn(g, Fiber::LinearC, |x, y| V3::new(0.5 + 0.2 * (x - y).sin(), 0.3 * x.cos(), 0.0));
        let c = 0.9;
        let zero = SiteField::filled(g, 0.0);
        assert_eq!(psi_c(&zero, &a, &u, c), 0.0);
        let s = SiteField { grid: g, data: (0..g.sites()).map(|k| 0.3 * (k as f64).sin()).collect() };
        let st = MetricState { s: s.clone(), ..MetricState::initial(a.clone(), u.clone()) };
        let pair = st.pair();
        let w = crate::energy::vortex_residual(&pair.a, &pair.u, c);
        for k in [0, 7, 20] {
            let h = 1e-6;
            let mut sp = s.clone();
            sp[k] += h;
            let mut sm = s.clone();
            sm[k] -= h;
            let fd = (psi_c(&sp, &a, &u, c) - psi_c(&sm, &a, &u, c)) / (2.0 * h);
            assert!((fd - 2.0 * g.area() * w[k]).abs() < 1e-7, "{fd} vs {}", 2.0 * g.area() * w[k]);
        }
    }

    #[test]
    fn psi_decreases_along_metric_flow() {
        let g = build_grid(8, 8, 0.5, 1).unwrap();
        let a = Connection::constant_curvature(g);
        let u = Section::from_fn(g, Fiber::LinearC, |x, y| V3::new(1.0 + 0.3 * x.sin(), 0.2 * y.cos(), 0.0));
        let cfg = FlowConfig { c: 1.0, dt: 0.01, t_end: 1.0, scheme: Scheme::Rk4, ..FlowConfig::default() };
        let run = run_metric(&MetricState::initial(a, u), &cfg).unwrap();
        assert!(run.steps.windows(2).all(|w| w[1].psi_c <= w[0].psi_c));
        assert!(run.steps.iter().all(|s| s.psi_c <= 0.0));
        let rep = psi_report(&run);
        assert!(rep.psi_path_integral <= 0.0);
        assert!(rep.mismatch <= 1e-3 * rep.psi_path_integral.abs(), "{rep:?}");
        for (t, err) in psi_derivative_errors(&run, 1e-9) {
            assert!(err < 1e-3, "t={t}: {err}");
        }
    }

    #[test]
    fn minimum_start_keeps_zero_potential() {
        let g = build_grid(8, 8, 0.5, 0).unwrap();
        let u = Section::constant(g, FiberPoint::LinearC(Complex64::new(1.0, 0.0)));
        let cfg = FlowConfig { c: 0.5, dt: 0.01, t_end: 1.0, ..FlowConfig::default() };
        let run = run_metric(&MetricState::initial(Connection::zero(g), u), &cfg).unwrap();
        assert!(run.final_state.s.data.iter().all(|&v| v == 0.0));
    }


    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn phi_is_positive_and_satisfies_the_swap_relation(l1 in -6.0..6.0f64, l2 in -6.0..6.0f64) {
                let d = l2 - l1;
                let lhs = phi_kernel(l1, l2) + d.exp() * phi_kernel(l2, l1);
                let rhs = if d.abs() < 1e-8 { 1.0 } else { d.exp_m1() / d };
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
                prop_assert!(phi_kernel(l1, l2) > 0.0);
            }
        }
    }
}
