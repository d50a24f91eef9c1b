//! Pair flow, metric flow, the gauge bridge between them, and monitors.

mod metric;
mod monitor;
mod pair;
mod reconstruct;
mod sigma;

pub use metric::{run_metric, step_metric, MetricRun, MetricState, MetricStep};
pub use monitor::{cumulative_integral, energy_identity_gap, energy_identity_gaps, pair_record, MonitorRecord, MONITOR_HEADER};
pub use pair::{run_pair, step_pair, FlowState, PairRun, StepLog, Termination};
pub use reconstruct::reconstruct_pair;
pub use sigma::{sigma_distance, sigma_matrix, sigma_scalar, SigmaField};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
}

/// Time-stepping parameters shared by both flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub c: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Convergence when `sup ê` drops below this value.
    pub conv_tol: f64,
    /// CFL constant `κ` in `dt ≤ κ a²`.
    pub cfl_kappa: f64,
    /// Record monitors every this many accepted steps (and at the end).
    pub monitors_every: usize,
    /// Keep a state snapshot every this many steps; 0 disables.
    pub snapshot_every: usize,
    /// Any field magnitude above this is a blow-up.
    pub blowup_guard: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            c: 1.0,
            dt: 1e-3,
            t_end: 1.0,
            scheme: Scheme::Euler,
            conv_tol: 1e-10,
            cfl_kappa: 0.2,
            monitors_every: 10,
            snapshot_every: 0,
            blowup_guard: 1e8,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("conv_tol", self.conv_tol),
            ("cfl_kappa", self.cfl_kappa),
            ("blowup_guard", self.blowup_guard),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidArgument("c must be finite".into()));
        }
        if self.monitors_every == 0 {
            return Err(Error::InvalidArgument("monitors_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `dt ≤ κ a²` or [`Error::CflViolation`].
pub fn check_cfl(dt: f64, a: f64, kappa: f64) -> Result<()> {
    let limit = kappa * a * a;
    if !(dt > 0.0) || dt > limit {
        return Err(Error::CflViolation { dt, limit });
    }
    Ok(())
}
