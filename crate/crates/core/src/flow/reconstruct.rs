use crate::error::{Error, Result};
use crate::gauge::{gauge_apply, GaugeTransform};
use crate::lattice::SiteField;

use super::metric::MetricState;
use super::pair::FlowState;

/// Anti-self-adjoint part of `g^{-1} ġ` for `g = e^{s/2}`. A positive real
/// `g` has none, so in the abelian reduction this is identically zero.
fn alpha(_prev: &MetricState, next: &MetricState) -> SiteField<f64> {
    SiteField::filled(next.s.grid, 0.0)
}

/// Pair trajectory `S(t) e^{s(t)/2}·(A₀, u₀)` from a metric trajectory,
/// where `Ṡ S^{-1} = −α(t)`, `S(0) = I` is integrated by the trapezoid rule.
pub fn reconstruct_pair(traj: &[MetricState]) -> Result<Vec<FlowState>> {
    let Some(first) = traj.first() else {
        return Err(Error::MismatchedSeries("empty metric trajectory".into()));
    };
    let grid = first.s.grid;
    for st in traj {
        grid.check_same(&st.s.grid)?;
        if st.base_a != first.base_a || st.base_u != first.base_u {
            return Err(Error::MismatchedSeries("trajectory mixes different base pairs".into()));
        }
    }
    if traj.len() > 2 {
        let dt = traj[1].t - traj[0].t;
        let n = traj.len() - 1;
        for w in traj[..n].windows(2) {
            if ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
                return Err(Error::MismatchedSeries("non-uniform time spacing".into()));
            }
        }
        let last = traj[n].t - traj[n - 1].t;
        if !(last > 0.0) || last > dt * (1.0 + 1e-9) {
            return Err(Error::MismatchedSeries("final interval longer than the spacing".into()));
        }
    }
    let mut phase = SiteField::filled(grid, 0.0);
    let mut prev_alpha = SiteField::filled(grid, 0.0);
    let mut out = Vec::with_capacity(traj.len());
    for (i, st) in traj.iter().enumerate() {
        if i > 0 {
            let a = alpha(&traj[i - 1], st);
            let h = st.t - traj[i - 1].t;
            for k in 0..grid.sites() {
                phase[k] -= 0.5 * h * (prev_alpha[k] + a[k]);
            }
            prev_alpha = a;
        }
        let g = GaugeTransform::Complexified { s: st.s.clone(), phase: phase.clone() };
        let (a, u) = gauge_apply(&g, &st.base_a, &st.base_u)?;
        out.push(FlowState { a, u, t: st.t });
    }
    Ok(out)
}
