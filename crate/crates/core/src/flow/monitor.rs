use serde::Serialize;

use crate::energy::{vortex_residual, ymh};
use crate::lattice::{compensated_sum, integrate};

use super::pair::{FlowState, StepLog};

pub const MONITOR_HEADER: &str =
    "t,e1,e2,e3,total,sup_ehat,l2_residual,energy_gap,psi_c,sup_s,l1_s,trace_mean,trace_var";

/// One time sample of the tracked observables. Optional entries are those
/// that only one of the two flows defines.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub total: f64,
    pub sup_ehat: f64,
    /// `‖ΛF + μ(u) − c‖_{L²}`.
    pub l2_residual: f64,
    pub energy_gap: Option<f64>,
    pub psi_c: Option<f64>,
    pub sup_s: Option<f64>,
    pub l1_s: Option<f64>,
    pub sigma_sup: Option<f64>,
    /// Mean of `ΛF + μ(u)` over the torus.
    pub trace_mean: f64,
    /// Variance of `ΛF + μ(u)` over the torus.
    pub trace_var: f64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

impl MonitorRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{},{:.17e},{:.17e}",
            self.t,
            self.e1,
            self.e2,
            self.e3,
            self.total,
            self.sup_ehat,
            self.l2_residual,
            cell(self.energy_gap),
            cell(self.psi_c),
            cell(self.sup_s),
            cell(self.l1_s),
            self.trace_mean,
            self.trace_var
        )
    }

    pub fn is_finite(&self) -> bool {
        let opt = [self.energy_gap, self.psi_c, self.sup_s, self.l1_s, self.sigma_sup];
        [self.t, self.e1, self.e2, self.e3, self.total, self.sup_ehat, self.l2_residual, self.trace_mean, self.trace_var]
            .iter()
            .all(|v| v.is_finite())
            && opt.iter().flatten().all(|v| v.is_finite())
    }
}

/// Monitors of a pair state. `psi_c`, `sup_s`, `l1_s` are left empty.
pub fn pair_record(state: &FlowState, c: f64, energy_gap: Option<f64>) -> MonitorRecord {
    let g = state.a.grid();
    let e = ymh(&state.a, &state.u, c);
    let w = vortex_residual(&state.a, &state.u, c);
    let sup_ehat = w.data.iter().fold(0.0f64, |m, x| m.max(x * x));
    let l2_residual = integrate(&w.map(|x| x * x)).sqrt();
    let vol = g.volume();
    let trace = w.map(|x| x + c);
    let trace_mean = integrate(&trace) / vol;
    let trace_var = g.area() * compensated_sum(trace.data.iter().map(|x| (x - trace_mean).powi(2))) / vol;
    MonitorRecord {
        t: state.t,
        e1: e.e1,
        e2: e.e2,
        e3: e.e3,
        total: e.total,
        sup_ehat,
        l2_residual,
        energy_gap,
        psi_c: None,
        sup_s: None,
        l1_s: None,
        sigma_sup: None,
        trace_mean,
        trace_var,
    }
}

/// Running integrals `∫_{t_0}^{t_i} y dt` of a sampled series.
///
/// Each interval is integrated exactly against the cubic through the four
/// nearest samples (fewer near short series), so spacing may vary.
pub fn cumulative_integral(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len().min(y.len());
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(0.0);
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let m = n.min(4);
        let lo = i.saturating_sub(1).min(n - m);
        let nodes = lo..lo + m;
        acc += interval_integral(&t[nodes.clone()], &y[nodes], t[i], t[i + 1]);
        out.push(acc);
    }
    out
}

/// Integral over `[a, b]` of the Lagrange interpolant through `(x, y)`,
/// by 3-point Gauss–Legendre (exact up to degree 5).
fn interval_integral(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    const NODES: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    NODES
        .iter()
        .map(|&(z, w)| {
            let s = mid + half * z;
            let p: f64 = (0..x.len())
                .map(|j| {
                    let l: f64 = (0..x.len()).filter(|&m| m != j).map(|m| (s - x[m]) / (x[j] - x[m])).product();
                    y[j] * l
                })
                .sum();
            w * p
        })
        .sum::<f64>()
        * half
}

/// Running `|E(t_i) + 2∫₀^{t_i} D dτ − E(0)|` over the step log, where
/// `D = ‖grad_u‖² + ‖grad_A‖²`.
pub fn energy_identity_gaps(steps: &[StepLog]) -> Vec<f64> {
    let t: Vec<f64> = steps.iter().map(|s| s.t).collect();
    let d: Vec<f64> = steps.iter().map(|s| s.dissipation).collect();
    let e0 = steps.first().map_or(0.0, |s| s.total);
    cumulative_integral(&t, &d).iter().zip(steps).map(|(i, s)| (s.total + 2.0 * i - e0).abs()).collect()
}

/// The energy-identity gap at the end of the step log.
pub fn energy_identity_gap(steps: &[StepLog]) -> f64 {
    energy_identity_gaps(steps).last().copied().unwrap_or(0.0)
}
