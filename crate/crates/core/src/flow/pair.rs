use crate::energy::{dissipation, ehat, grad_a, grad_u, ymh};
use crate::error::{Error, Result};
use crate::fiber::V3;
use crate::gauge::{dolbeault_parts, Connection, Section};
use crate::lattice::{FormField, LinkField, SiteField};

use super::monitor::{energy_identity_gaps, pair_record, MonitorRecord};
use super::{check_cfl, FlowConfig, Scheme};

/// Tolerance on `‖∂̄_A u‖ / ‖u‖` below which a start counts as holomorphic.
pub const HOLOMORPHIC_START_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub a: Connection,
    pub u: Section,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    EndTime,
    Blowup,
    /// The energy stopped changing at the level of floating-point roundoff.
    Stalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::EndTime => "end_time",
            Termination::Blowup => "blowup",
            Termination::Stalled => "stalled",
        }
    }
}

/// Per-step record of the quantities whose monotonicity is asserted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub t: f64,
    pub total: f64,
    pub sup_ehat: f64,
    pub dissipation: f64,
}

#[derive(Clone, Debug)]
pub struct PairRun {
    pub records: Vec<MonitorRecord>,
    pub steps: Vec<StepLog>,
    pub snapshots: Vec<FlowState>,
    pub final_state: FlowState,
    pub termination: Termination,
    /// Steps that needed the half-step retry.
    pub retries: usize,
    pub nonholomorphic_start: bool,
    pub start_dbar_residual: f64,
    pub energy_gap: f64,
    pub blowup: Option<String>,
}

fn tangent(state: &FlowState, c: f64) -> (SiteField<V3>, LinkField<f64>) {
    (grad_u(&state.a, &state.u, c), grad_a(&state.a, &state.u, c))
}

/// `state − h·(gu, ga)` with the fiber retraction applied.
fn advance(base: &FlowState, gu: &SiteField<V3>, ga: &LinkField<f64>, h: f64) -> FlowState {
    let mut next = base.clone();
    for (x, g) in next.a.links.data.iter_mut().zip(&ga.data) {
        *x -= h * g;
    }
    let f = base.u.fiber;
    for (p, g) in next.u.sites.data.iter_mut().zip(&gu.data) {
        *p = f.retract(&(*p - g * h));
    }
    next.t = base.t + h;
    next
}

fn guard(state: &FlowState, limit: f64) -> Result<()> {
    let bad_a = state.a.links.data.iter().any(|v| !v.is_finite() || v.abs() > limit);
    let bad_u = state.u.sites.data.iter().any(|p| p.iter().any(|v| !v.is_finite() || v.abs() > limit));
    if bad_a || bad_u {
        let what = if bad_a { "connection" } else { "section" };
        return Err(Error::Blowup { t: state.t, what: format!("{what} exceeds {limit:e}") });
    }
    Ok(())
}

/// One explicit step of `Ȧ = −grad_A`, `u̇ = −grad_u`.
pub fn step_pair(state: &FlowState, dt: f64, c: f64, scheme: Scheme, cfl_kappa: f64) -> Result<FlowState> {
    check_cfl(dt, state.a.grid().a, cfl_kappa)?;
    step_unchecked(state, dt, c, scheme, 1e8)
}

fn step_unchecked(state: &FlowState, dt: f64, c: f64, scheme: Scheme, blowup_guard: f64) -> Result<FlowState> {
    let next = match scheme {
        Scheme::Euler => {
            let (gu, ga) = tangent(state, c);
            advance(state, &gu, &ga, dt)
        }
        Scheme::Rk4 => {
            let (k1u, k1a) = tangent(state, c);
            let s2 = advance(state, &k1u, &k1a, 0.5 * dt);
            let (k2u, k2a) = tangent(&s2, c);
            let s3 = advance(state, &k2u, &k2a, 0.5 * dt);
            let (k3u, k3a) = tangent(&s3, c);
            let s4 = advance(state, &k3u, &k3a, dt);
            let (k4u, k4a) = tangent(&s4, c);
            let gu = SiteField {
                grid: k1u.grid,
                data: (0..k1u.data.len())
                    .map(|k| (k1u[k] + (k2u[k] + k3u[k]) * 2.0 + k4u[k]) / 6.0)
                    .collect(),
            };
            let ga = LinkField {
                grid: k1a.grid,
                data: (0..k1a.data.len())
                    .map(|l| (k1a.data[l] + 2.0 * (k2a.data[l] + k3a.data[l]) + k4a.data[l]) / 6.0)
                    .collect(),
            };
            advance(state, &gu, &ga, dt)
        }
    };
    guard(&next, blowup_guard)?;
    Ok(next)
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m: f64, v| m.max(*v))
}

/// Relative size of a roundoff-level energy change.
const ENERGY_ROUNDOFF: f64 = 16.0 * f64::EPSILON;

struct Probe {
    total: f64,
    sup_ehat: f64,
    dissipation: f64,
}

fn probe(state: &FlowState, c: f64) -> Probe {
    let (gu, ga) = tangent(state, c);
    Probe {
        total: ymh(&state.a, &state.u, c).total,
        sup_ehat: sup(&ehat(&state.a, &state.u, c).data),
        dissipation: dissipation(&gu, &ga),
    }
}

/// Integrates the pair flow from `initial` until `t_end`, convergence, or
/// blow-up. A step that raises the energy is redone as two half steps; if
/// that still raises it the run fails with [`Error::CflViolation`], unless
/// the rise is at roundoff level, which ends the run as
/// [`Termination::Stalled`].
pub fn run_pair(initial: &FlowState, config: &FlowConfig) -> Result<PairRun> {
    config.validate()?;
    let grid = initial.a.grid();
    grid.check_same(&initial.u.grid())?;
    check_cfl(config.dt, grid.a, config.cfl_kappa)?;
    initial.u.validate()?;
    let c = config.c;

    let start_dbar_residual = {
        let parts = dolbeault_parts(&initial.a, &initial.u);
        let norm = initial.u.sites.l2_norm();
        if norm > 0.0 { parts.dbar.l2_norm() / norm } else { 0.0 }
    };

    let mut state = initial.clone();
    let mut current = probe(&state, c);
    let mut records = vec![pair_record(&state, c, Some(0.0))];
    let mut record_steps = vec![0usize];
    let mut steps = vec![StepLog { t: state.t, total: current.total, sup_ehat: current.sup_ehat, dissipation: current.dissipation }];
    let mut snapshots = Vec::new();
    if config.snapshot_every > 0 {
        snapshots.push(state.clone());
    }
    let mut retries = 0;
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
        let attempt = step_unchecked(&state, dt, c, config.scheme, config.blowup_guard).map(|s| {
            let p = probe(&s, c);
            (s, p)
        });
        let (next, next_probe, midpoint) = match attempt {
            Err(Error::Blowup { t, what }) => {
                blowup = Some(format!("t = {t}: {what}"));
                break Termination::Blowup;
            }
            Err(e) => return Err(e),
            Ok((s, p)) if p.total <= current.total => (s, p, None),
            Ok(_) => {
                retries += 1;
                match half_steps(&state, &current, dt, c, config) {
                    Ok(Some(v)) => v,
                    Ok(None) => break Termination::Stalled,
                    Err(Error::Blowup { t, what }) => {
                        blowup = Some(format!("t = {t}: {what}"));
                        break Termination::Blowup;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if let Some((tm, pm)) = midpoint {
            steps.push(StepLog { t: tm, total: pm.total, sup_ehat: pm.sup_ehat, dissipation: pm.dissipation });
        }
        state = next;
        current = next_probe;
        n += 1;
        steps.push(StepLog { t: state.t, total: current.total, sup_ehat: current.sup_ehat, dissipation: current.dissipation });
        if n.is_multiple_of(config.monitors_every) {
            records.push(pair_record(&state, c, None));
            record_steps.push(steps.len() - 1);
        }
        if config.snapshot_every > 0 && n.is_multiple_of(config.snapshot_every) {
            snapshots.push(state.clone());
        }
    };
    if records.last().map(|r| r.t) != Some(state.t) {
        records.push(pair_record(&state, c, None));
        record_steps.push(steps.len() - 1);
    }
    let gaps = energy_identity_gaps(&steps);
    for (r, &i) in records.iter_mut().zip(&record_steps) {
        r.energy_gap = Some(gaps[i]);
    }
    let energy_gap = gaps.last().copied().unwrap_or(0.0);
    Ok(PairRun {
        records,
        steps,
        snapshots,
        final_state: state,
        termination,
        retries,
        nonholomorphic_start: start_dbar_residual > HOLOMORPHIC_START_TOL,
        start_dbar_residual,
        energy_gap,
        blowup,
    })
}

type Accepted = (FlowState, Probe, Option<(f64, Probe)>);

/// Two steps of `dt/2`; `None` when the energy rise is at roundoff level.
fn half_steps(state: &FlowState, current: &Probe, dt: f64, c: f64, config: &FlowConfig) -> Result<Option<Accepted>> {
    let h = 0.5 * dt;
    let mid = step_unchecked(state, h, c, config.scheme, config.blowup_guard)?;
    let pm = probe(&mid, c);
    let end = step_unchecked(&mid, h, c, config.scheme, config.blowup_guard)?;
    let pe = probe(&end, c);
    if pm.total <= current.total && pe.total <= pm.total {
        return Ok(Some((end, pe, Some((mid.t, pm)))));
    }
    let rise = (pm.total - current.total).max(pe.total - pm.total);
    if rise <= ENERGY_ROUNDOFF * current.total.abs() {
        return Ok(None);
    }
    Err(Error::CflViolation { dt, limit: config.cfl_kappa * state.a.grid().area() })
}
