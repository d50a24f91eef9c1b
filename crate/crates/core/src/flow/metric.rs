use crate::donaldson::psi_c;
use crate::energy::vortex_residual;
use crate::error::{Error, Result};
use crate::fiber::Fiber;
use crate::gauge::{gauge_apply, Connection, GaugeTransform, Section};
use crate::lattice::{integrate, SiteField};

use super::monitor::{cumulative_integral, pair_record, MonitorRecord};
use super::pair::{FlowState, Termination};
use super::{check_cfl, FlowConfig, Scheme};

/// The metric `H = H₀ e^s` over fixed base data `(A₀, u₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricState {
    pub s: SiteField<f64>,
    pub base_a: Connection,
    pub base_u: Section,
    pub t: f64,
}

impl MetricState {
    /// `h(0) = I`.
    pub fn initial(base_a: Connection, base_u: Section) -> Self {
        let grid = base_a.grid();
        MetricState { s: SiteField::filled(grid, 0.0), base_a, base_u, t: 0.0 }
    }

    /// The pair `e^{s/2}·(A₀, u₀)` in the complexified gauge orbit.
    pub fn pair(&self) -> FlowState {
        let (a, u) = complex_orbit(&self.base_a, &self.base_u, &self.s);
        FlowState { a, u, t: self.t }
    }

    pub fn sup_s(&self) -> f64 {
        self.s.data.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn l1_s(&self) -> f64 {
        integrate(&self.s.map(|v| v.abs()))
    }
}

fn complex_orbit(a: &Connection, u: &Section, s: &SiteField<f64>) -> (Connection, Section) {
    let g = GaugeTransform::Complexified { s: s.clone(), phase: SiteField::filled(s.grid, 0.0) };
    gauge_apply(&g, a, u).expect("metric state fields share one grid")
}

/// `w(s) = ΛF_{A₀} − Δ(s/2) + μ(e^{s/2} u₀) − c`.
fn residual(base_a: &Connection, base_u: &Section, s: &SiteField<f64>, c: f64) -> SiteField<f64> {
    let (a, u) = complex_orbit(base_a, base_u, s);
    vortex_residual(&a, &u, c)
}

/// One explicit step of `ṡ = −2 w(s)`.
///
/// The factor is fixed so that the induced motion of `e^{s/2}·(A₀, u₀)`
/// coincides with the pair flow for holomorphic data, and stationary points
/// are exactly the vortex solutions.
pub fn step_metric(state: &MetricState, dt: f64, c: f64, scheme: Scheme, cfl_kappa: f64) -> Result<MetricState> {
    if state.base_u.fiber != Fiber::LinearC {
        return Err(Error::InvalidArgument("the metric flow needs the linear fiber".into()));
    }
    check_cfl(dt, state.base_a.grid().a, cfl_kappa)?;
    step_unchecked(state, dt, c, scheme, 1e8)
}

fn step_unchecked(state: &MetricState, dt: f64, c: f64, scheme: Scheme, guard: f64) -> Result<MetricState> {
    let rate = |s: &SiteField<f64>| residual(&state.base_a, &state.base_u, s, c).map(|w| -2.0 * w);
    let axpy = |h: f64, k: &SiteField<f64>| SiteField {
        grid: state.s.grid,
        data: state.s.data.iter().zip(&k.data).map(|(x, y)| x + h * y).collect::<Vec<_>>(),
    };
    let s = match scheme {
        Scheme::Euler => axpy(dt, &rate(&state.s)),
        Scheme::Rk4 => {
            let k1 = rate(&state.s);
            let k2 = rate(&axpy(0.5 * dt, &k1));
            let k3 = rate(&axpy(0.5 * dt, &k2));
            let k4 = rate(&axpy(dt, &k3));
            let k = SiteField {
                grid: k1.grid,
                data: (0..k1.data.len())
                    .map(|i| (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) / 6.0)
                    .collect(),
            };
            axpy(dt, &k)
        }
    };
    let t = state.t + dt;
    if s.data.iter().any(|v| !v.is_finite() || v.abs() > guard) {
        return Err(Error::Blowup { t, what: format!("metric potential exceeds {guard:e}") });
    }
    Ok(MetricState { s, base_a: state.base_a.clone(), base_u: state.base_u.clone(), t })
}

/// Per-step values used by the functional identity checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricStep {
    pub t: f64,
    pub psi_c: f64,
    /// `∫ ê` at this time.
    pub ehat_integral: f64,
    pub sup_ehat: f64,
    pub sup_s: f64,
    pub l1_s: f64,
}

#[derive(Clone, Debug)]
pub struct MetricRun {
    pub records: Vec<MonitorRecord>,
    pub steps: Vec<MetricStep>,
    /// States at the monitor samples, uniformly spaced except possibly the last.
    pub trajectory: Vec<MetricState>,
    pub final_state: MetricState,
    pub termination: Termination,
    pub blowup: Option<String>,
    /// `−4 ∫₀ᵗ ∫ ê dτ`, integrated over the step log.
    pub psi_path_integral: f64,
}

fn step_values(state: &MetricState, c: f64) -> MetricStep {
    let w = residual(&state.base_a, &state.base_u, &state.s, c);
    let e = w.map(|x| x * x);
    MetricStep {
        t: state.t,
        psi_c: psi_c(&state.s, &state.base_a, &state.base_u, c),
        ehat_integral: integrate(&e),
        sup_ehat: e.data.iter().fold(0.0, |m: f64, v| m.max(*v)),
        sup_s: state.sup_s(),
        l1_s: state.l1_s(),
    }
}

pub(crate) fn metric_record(state: &MetricState, c: f64) -> MonitorRecord {
    let mut r = pair_record(&state.pair(), c, None);
    r.psi_c = Some(psi_c(&state.s, &state.base_a, &state.base_u, c));
    r.sup_s = Some(state.sup_s());
    r.l1_s = Some(state.l1_s());
    r
}

pub fn run_metric(initial: &MetricState, config: &FlowConfig) -> Result<MetricRun> {
    config.validate()?;
    if initial.base_u.fiber != Fiber::LinearC {
        return Err(Error::InvalidArgument("the metric flow needs the linear fiber".into()));
    }
    let grid = initial.base_a.grid();
    grid.check_same(&initial.base_u.grid())?;
    grid.check_same(&initial.s.grid)?;
    check_cfl(config.dt, grid.a, config.cfl_kappa)?;
    let c = config.c;
    let mut state = initial.clone();
    let mut current = step_values(&state, c);
    let mut steps = vec![current];
    let mut records = vec![metric_record(&state, c)];
    let mut trajectory = vec![state.clone()];
    let mut blowup = None;
    let mut n = 0usize;
    let t_stop = initial.t + config.t_end;
    let termination = loop {
        if current.sup_ehat < config.conv_tol {
            break Termination::Converged;
        }
        if state.t >= t_stop - 1e-12 * config.dt {
            break Termination::EndTime;
        }
        let dt = config.dt.min(t_stop - state.t);
        match step_unchecked(&state, dt, c, config.scheme, config.blowup_guard) {
            Ok(next) => state = next,
            Err(Error::Blowup { t, what }) => {
                blowup = Some(format!("t = {t}: {what}"));
                break Termination::Blowup;
            }
            Err(e) => return Err(e),
        }
        current = step_values(&state, c);
        steps.push(current);
        n += 1;
        if n.is_multiple_of(config.monitors_every) {
            records.push(metric_record(&state, c));
            trajectory.push(state.clone());
        }
    };
    if trajectory.last().map(|s| s.t) != Some(state.t) {
        records.push(metric_record(&state, c));
        trajectory.push(state.clone());
    }
    let t: Vec<f64> = steps.iter().map(|s| s.t).collect();
    let e: Vec<f64> = steps.iter().map(|s| s.ehat_integral).collect();
    let path = -4.0 * cumulative_integral(&t, &e).last().copied().unwrap_or(0.0);
    Ok(MetricRun { records, steps, trajectory, final_state: state, termination, blowup, psi_path_integral: path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::FiberPoint;
    use crate::lattice::build_grid;
    use num_complex::Complex64;

    #[test]
    fn vortex_metric_is_stationary() {
        let g = build_grid(8, 8, 0.5, 0).unwrap();
        let u = Section::constant(g, FiberPoint::LinearC(Complex64::new(1.0, 0.0)));
        let st = MetricState::initial(Connection::zero(g), u);
        let next = step_metric(&st, 0.01, 0.5, Scheme::Rk4, 0.2).unwrap();
        assert!(next.s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_potential_follows_linear_drift() {
        // u₀ = 0: w = B̄ − c for constant s, so s(t) = −2(B̄ − c)t.
        let g = build_grid(8, 8, 0.5, 1).unwrap();
        let u = Section::constant(g, FiberPoint::LinearC(Complex64::new(0.0, 0.0)));
        let mut st = MetricState::initial(Connection::constant_curvature(g), u);
        st.s = SiteField::filled(g, 0.3);
        let c = 0.1;
        let mut x = st.clone();
        for _ in 0..100 {
            x = step_metric(&x, 0.01, c, Scheme::Euler, 0.2).unwrap();
        }
        let expect = 0.3 - 2.0 * (g.threshold() - c) * 1.0;
        for &v in &x.s.data {
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }

    #[test]
    fn sphere_fiber_rejected() {
        let g = build_grid(6, 6, 0.5, 0).unwrap();
        let u = Section::constant(g, FiberPoint::north_pole());
        let st = MetricState::initial(Connection::zero(g), u);
        assert!(matches!(step_metric(&st, 0.01, 0.5, Scheme::Euler, 0.2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn runs_are_bit_identical() {
        let g = build_grid(8, 8, 0.5, 1).unwrap();
        let a = Connection::constant_curvature(g);
        let u = Section::from_fn(g, Fiber::LinearC, |x, y| crate::fiber::V3::new(1.0 + 0.2 * x.sin(), 0.1 * y.cos(), 0.0));
        let st = MetricState::initial(a, u);
        let cfg = FlowConfig { c: 1.0, dt: 0.01, t_end: 0.3, ..FlowConfig::default() };
        let x = run_metric(&st, &cfg).unwrap();
        let y = run_metric(&st, &cfg).unwrap();
        assert_eq!(x.final_state, y.final_state);
        assert_eq!(x.steps, y.steps);
    }
}
