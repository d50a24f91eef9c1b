//! The abelian stability test and the convergence-versus-stability scan.
//!
//! For the circle group the only reduction is the trivial one and the
//! characters are `χ = ±1`. With `ρ = chi_sign` the total degree is
//!
//! ```text
//! T(ρ) = ρ (2π d − c Vol) + Σ_x a² λ(u(x); ρ)
//! ```
//!
//! so for a section with no exact zeros `T(+1) = +∞` and `T(−1) > 0` exactly
//! when `c` exceeds `2π d / Vol`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::{Fiber, LieAlgebraValue, MaximalWeight};
use crate::flow::{pair_record, run_metric, run_pair, FlowConfig, FlowState, MetricState, Termination};
use crate::gauge::{degree, holomorphic_project, Connection};
use crate::lattice::{compensated_sum, Grid};

/// Orbit length used for the pointwise maximal weights.
pub const WEIGHT_T_MAX: f64 = 50.0;
/// Weights above this are read as `+∞`.
pub const WEIGHT_BLOWUP: f64 = 1e12;

/// `2π d / vol`.
pub fn bradlow_threshold(d: i64, vol: f64) -> Result<f64> {
    if !(vol > 0.0) || !vol.is_finite() {
        return Err(Error::InvalidArgument(format!("volume must be positive, got {vol}")));
    }
    Ok(2.0 * std::f64::consts::PI * d as f64 / vol)
}

/// `T(chi_sign)`; `+∞` when any pointwise weight is infinite.
pub fn total_degree_abelian(a: &Connection, u: &crate::gauge::Section, chi_sign: i8, c: f64) -> Result<f64> {
    if u.fiber != Fiber::LinearC {
        return Err(Error::InvalidArgument("the total degree is defined for the linear fiber".into()));
    }
    if chi_sign != 1 && chi_sign != -1 {
        return Err(Error::InvalidArgument(format!("chi_sign must be ±1, got {chi_sign}")));
    }
    let g = a.grid();
    g.check_same(&u.grid())?;
    let rho = chi_sign as f64;
    let d = degree(a)?;
    let mut weights = Vec::with_capacity(g.sites());
    for k in 0..g.sites() {
        match u.point(k).maximal_weight(LieAlgebraValue(rho), WEIGHT_T_MAX, WEIGHT_BLOWUP)? {
            MaximalWeight::Infinite => return Ok(f64::INFINITY),
            MaximalWeight::Finite(w) => weights.push(w),
        }
    }
    let topological = rho * (2.0 * std::f64::consts::PI * d as f64 - c * g.volume());
    Ok(topological + g.area() * compensated_sum(weights))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Predicted {
    Stable,
    Unstable,
    Critical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Observed {
    Converged,
    Obstructed,
    Inconclusive,
}

impl Predicted {
    pub fn as_str(self) -> &'static str {
        match self {
            Predicted::Stable => "stable",
            Predicted::Unstable => "unstable",
            Predicted::Critical => "critical",
        }
    }
}

impl Observed {
    pub fn as_str(self) -> &'static str {
        match self {
            Observed::Converged => "converged",
            Observed::Obstructed => "obstructed",
            Observed::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub c_value: f64,
    pub threshold: f64,
    pub predicted: Predicted,
    pub observed: Observed,
    /// `‖ΛF + μ(u) − c‖_{L²}` of the final state.
    pub residual_at_end: f64,
    /// Mean of `ΛF + μ(u) − c` over the final state.
    pub mean_residual_at_end: f64,
    pub t_plus: f64,
    pub t_minus: f64,
    pub t_end: f64,
    /// Reason string of an error met while evaluating this entry.
    pub error: Option<String>,
}

impl StabilityVerdict {
    pub fn agrees(&self) -> bool {
        matches!(
            (self.predicted, self.observed),
            (Predicted::Stable, Observed::Converged) | (Predicted::Unstable, Observed::Obstructed)
        )
    }
}

pub const SCAN_HEADER: &str = "c,threshold,predicted,observed,residual_at_end,T_plus,T_minus";

pub fn scan_csv(verdicts: &[StabilityVerdict]) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for v in verdicts {
        out.push_str(&format!(
            "{:.17e},{:.17e},{},{},{:.17e},{:.17e},{:.17e}\n",
            v.c_value,
            v.threshold,
            v.predicted.as_str(),
            v.observed.as_str(),
            v.residual_at_end,
            v.t_plus,
            v.t_minus
        ));
    }
    out
}

/// Threshold-and-sign prediction. `Critical` when `|c − threshold|·Vol ≤ 10·conv_tol`.
pub fn predict(c: f64, threshold: f64, vol: f64, conv_tol: f64, t_plus: f64, t_minus: f64) -> Predicted {
    if (c - threshold).abs() * vol <= 10.0 * conv_tol {
        Predicted::Critical
    } else if t_plus > 0.0 && t_minus > 0.0 {
        Predicted::Stable
    } else {
        Predicted::Unstable
    }
}

/// Which flow a scan runs to observe convergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanFlow {
    /// The flow of metrics in the complexified orbit of the start. Its
    /// stationary points are exactly the discrete vortex solutions.
    Metric,
    /// The pair flow. Its discrete limit solves the vortex equation only up
    /// to the lattice spacing, so it never reaches small tolerances.
    Pair,
}

/// Classifies a finished run from its termination and `sup ê` series.
///
/// Obstructed means `sup ê` changed by less than `1e-6` (relative) over the
/// last 10% of steps while staying above `10·conv_tol`.
pub fn classify(termination: Termination, sup_ehat: &[f64], conv_tol: f64) -> Observed {
    if termination == Termination::Converged {
        return Observed::Converged;
    }
    if termination == Termination::Blowup {
        return Observed::Inconclusive;
    }
    let n = sup_ehat.len();
    if n < 10 {
        return Observed::Inconclusive;
    }
    let tail = &sup_ehat[n - n / 10 - 1..];
    let last = tail[tail.len() - 1];
    let change = tail.iter().fold(0.0f64, |m, s| m.max((s - last).abs()));
    if last > 10.0 * conv_tol && change < 1e-6 * last {
        Observed::Obstructed
    } else {
        Observed::Inconclusive
    }
}

/// Holomorphic start on the constant-curvature connection, scaled so that
/// the mean of `μ(u)` equals `mean_moment`.
pub fn holomorphic_start(grid: Grid, seed: u64, mean_moment: f64) -> Result<FlowState> {
    if !(mean_moment > 0.0) {
        return Err(Error::InvalidArgument(format!("mean moment must be positive, got {mean_moment}")));
    }
    let a = Connection::constant_curvature(grid);
    let mut u = holomorphic_project(&a, seed)?.section;
    let mean = compensated_sum(u.sites.data.iter().map(|p| Fiber::LinearC.moment(p))) / grid.sites() as f64;
    let scale = (mean_moment / mean).sqrt();
    for p in u.sites.data.iter_mut() {
        *p *= scale;
    }
    Ok(FlowState { a, u, t: 0.0 })
}

/// Runs `flow` from `initial` for each `c` and pairs the prediction with
/// the observation. Entries run concurrently; output order is input order.
/// Per-entry errors are recorded, never propagated.
pub fn stability_scan(initial: &FlowState, c_values: &[f64], config: &FlowConfig, flow: ScanFlow) -> Result<Vec<StabilityVerdict>> {
    let g = initial.a.grid();
    let threshold = bradlow_threshold(g.d, g.volume())?;
    if let Some(bad) = c_values.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!("c value {bad} is not finite")));
    }
    Ok(c_values.par_iter().map(|&c| scan_entry(initial, c, threshold, config, flow)).collect())
}

fn scan_entry(initial: &FlowState, c: f64, threshold: f64, config: &FlowConfig, flow: ScanFlow) -> StabilityVerdict {
    let g = initial.a.grid();
    let mut error = None;
    let mut degree_of = |sign| match total_degree_abelian(&initial.a, &initial.u, sign, c) {
        Ok(v) => v,
        Err(e) => {
            error = Some(e.reason().to_string());
            f64::NAN
        }
    };
    let t_plus = degree_of(1);
    let t_minus = degree_of(-1);
    let predicted = if t_plus.is_nan() || t_minus.is_nan() {
        // Fall back to the threshold alone.
        predict(c, threshold, g.volume(), config.conv_tol, 1.0, c - threshold)
    } else {
        predict(c, threshold, g.volume(), config.conv_tol, t_plus, t_minus)
    };
    let cfg = FlowConfig { c, ..*config };
    let observed = match flow {
        ScanFlow::Pair => run_pair(initial, &cfg).map(|run| {
            let series: Vec<f64> = run.steps.iter().map(|s| s.sup_ehat).collect();
            (run.final_state, run.termination, series, run.blowup)
        }),
        ScanFlow::Metric => run_metric(&MetricState::initial(initial.a.clone(), initial.u.clone()), &cfg).map(|run| {
            let series: Vec<f64> = run.steps.iter().map(|s| s.sup_ehat).collect();
            (run.final_state.pair(), run.termination, series, run.blowup)
        }),
    };
    match observed {
        Ok((end_state, termination, series, blowup)) => {
            let end = pair_record(&end_state, c, None);
            StabilityVerdict {
                c_value: c,
                threshold,
                predicted,
                observed: classify(termination, &series, config.conv_tol),
                residual_at_end: end.l2_residual,
                mean_residual_at_end: end.trace_mean - c,
                t_plus,
                t_minus,
                t_end: end_state.t,
                error: error.or(blowup),
            }
        }
        Err(e) => StabilityVerdict {
            c_value: c,
            threshold,
            predicted,
            observed: Observed::Inconclusive,
            residual_at_end: f64::NAN,
            mean_residual_at_end: f64::NAN,
            t_plus,
            t_minus,
            t_end: initial.t,
            error: Some(e.reason().to_string()),
        },
    }
}
