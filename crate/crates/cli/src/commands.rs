//! The experiment subcommands. Each writes its artifacts into the output
//! directory and returns a JSON result for the summary.

use std::fs;
use std::path::Path;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde_json::{json, Value as Json};

use ymh_core::checks::{exact_checks, gradcheck, identity_mesh_study, random_configuration};
use ymh_core::donaldson::{psi_derivative_errors, psi_report};
use ymh_core::fiber::{Fiber, FiberPoint, V3};
use ymh_core::flow::{
    pair_record, reconstruct_pair, run_metric, run_pair, sigma_distance, sigma_matrix, sigma_scalar, FlowState,
    MetricRun, MetricState, MonitorRecord, Termination, MONITOR_HEADER,
};
use ymh_core::gauge::{Connection, Section};
use ymh_core::lattice::{Grid, SiteField};
use ymh_core::rng::LabRng;
use ymh_core::snapshot;
use ymh_core::stability::{holomorphic_start, scan_csv, stability_scan};
use ymh_core::Error;

use crate::config::{InitKind, RunConfig};

pub const COMMANDS: [&str; 8] = [
    "flow-pair",
    "flow-metric",
    "reconstruct-check",
    "check-identities",
    "gradcheck",
    "stability-scan",
    "sigma-check",
    "psi-check",
];

/// A run that produced (possibly partial) results but failed.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub partial: Option<Json>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, partial: None }
    }
}

type Outcome = std::result::Result<Json, Failure>;

pub fn run(command: &str, cfg: &RunConfig, out: &Path) -> Outcome {
    fs::create_dir_all(out).map_err(Error::from)?;
    match command {
        "flow-pair" => flow_pair(cfg, out),
        "flow-metric" => flow_metric(cfg, out),
        "reconstruct-check" => reconstruct_check(cfg, out),
        "check-identities" => check_identities(cfg, out),
        "gradcheck" => grad_check(cfg, out),
        "stability-scan" => scan(cfg, out),
        "sigma-check" => sigma_check(cfg, out),
        "psi-check" => psi_check(cfg, out),
        other => Err(Error::InvalidArgument(format!("unknown subcommand `{other}`")).into()),
    }
}

fn grid_of(cfg: &RunConfig) -> Grid {
    cfg.grid.expect("grid-reading subcommands resolve a grid")
}

/// Initial pair selected by `init.kind`.
pub fn initial_state(cfg: &RunConfig) -> Result<FlowState, Error> {
    let g = grid_of(cfg);
    let c = cfg.flow.c;
    let state = match cfg.init_kind {
        InitKind::Minimum => {
            if g.d != 0 {
                return Err(Error::InvalidArgument(format!("init.kind = minimum needs grid.d = 0, got {}", g.d)));
            }
            let p = match cfg.fiber {
                Fiber::LinearC if c > 0.0 => FiberPoint::LinearC(Complex64::new((2.0 * c).sqrt(), 0.0)),
                Fiber::Sphere if c.abs() < 1.0 => FiberPoint::sphere(V3::new((1.0 - c * c).sqrt(), 0.0, c)),
                _ => {
                    return Err(Error::InvalidArgument(format!("no constant section has moment {c} on the {:?} fiber", cfg.fiber)))
                }
            };
            FlowState { a: Connection::zero(g), u: Section::constant(g, p), t: 0.0 }
        }
        InitKind::Random => {
            let (a, u) = random_configuration(g, cfg.fiber, &mut LabRng::new(cfg.seed), cfg.init_amplitude);
            FlowState { a, u, t: 0.0 }
        }
        InitKind::Holomorphic => {
            if cfg.fiber != Fiber::LinearC {
                return Err(Error::InvalidArgument("init.kind = holomorphic needs the linear fiber".into()));
            }
            holomorphic_start(g, cfg.seed, cfg.init_mean_moment)?
        }
    };
    Ok(state)
}

fn write(out: &Path, name: &str, text: &str) -> Result<(), Error> {
    fs::write(out.join(name), text).map_err(Error::from)
}

fn monitors_csv(records: &[MonitorRecord]) -> String {
    let mut s = String::from(MONITOR_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Writes `snapshots/step_NNNNNNNN.ymh` for each `(step, state)`.
fn write_snapshots<'a, I: IntoIterator<Item = (usize, &'a FlowState)>>(out: &Path, states: I) -> Result<usize, Error> {
    let dir = out.join("snapshots");
    let mut n = 0;
    for (step, st) in states {
        if n == 0 {
            fs::create_dir_all(&dir)?;
        }
        write(&dir, &format!("step_{step:08}.ymh"), &snapshot::to_string(st))?;
        n += 1;
    }
    Ok(n)
}

fn num(v: f64) -> Json {
    // JSON has no infinities or NaN.
    if v.is_finite() { json!(v) } else { json!(v.to_string()) }
}

fn record_json(r: &MonitorRecord) -> Json {
    let opt = |v: Option<f64>| v.map(num).unwrap_or(Json::Null);
    json!({
        "t": num(r.t),
        "e1": num(r.e1),
        "e2": num(r.e2),
        "e3": num(r.e3),
        "total": num(r.total),
        "sup_ehat": num(r.sup_ehat),
        "l2_residual": num(r.l2_residual),
        "energy_gap": opt(r.energy_gap),
        "psi_c": opt(r.psi_c),
        "sup_s": opt(r.sup_s),
        "l1_s": opt(r.l1_s),
        "trace_mean": num(r.trace_mean),
        "trace_var": num(r.trace_var),
    })
}

/// Blow-up ends a run normally but is a numerical failure of the command.
fn finish(termination: Termination, t: f64, blowup: Option<String>, result: Json) -> Outcome {
    if termination == Termination::Blowup {
        let msg = blowup.unwrap_or_default();
        return Err(Failure { error: Error::Blowup { t, what: msg }, partial: Some(result) });
    }
    Ok(result)
}

fn flow_pair(cfg: &RunConfig, out: &Path) -> Outcome {
    let start = initial_state(cfg)?;
    let run = run_pair(&start, &cfg.flow)?;
    write(out, "monitors.csv", &monitors_csv(&run.records))?;
    let every = cfg.flow.snapshot_every;
    let snaps = write_snapshots(out, run.snapshots.iter().enumerate().map(|(i, s)| (i * every, s)))?;
    write(out, "final.ymh", &snapshot::to_string(&run.final_state))?;
    let result = json!({
        "termination": run.termination.as_str(),
        "t_final": num(run.final_state.t),
        "steps": run.steps.len() - 1,
        "retries": run.retries,
        "energy_identity_gap": num(run.energy_gap),
        "start_dbar_residual": num(run.start_dbar_residual),
        "nonholomorphic_start": run.nonholomorphic_start,
        "snapshots": snaps,
        "final": record_json(run.records.last().expect("a run records its end state")),
        "blowup": run.blowup,
    });
    finish(run.termination, run.final_state.t, run.blowup.clone(), result)
}

fn metric_start(cfg: &RunConfig) -> Result<MetricState, Error> {
    let st = initial_state(cfg)?;
    Ok(MetricState::initial(st.a, st.u))
}

/// Monitor samples of a metric run sit every `monitors_every` steps, so a
/// sample is snapshotted when its step index is a multiple of `snapshot_every`.
fn metric_snapshots(cfg: &RunConfig, run: &MetricRun, out: &Path) -> Result<usize, Error> {
    let every = cfg.flow.snapshot_every;
    if every == 0 {
        return Ok(0);
    }
    let m = cfg.flow.monitors_every;
    let n = run.trajectory.len();
    let states: Vec<(usize, FlowState)> = run.trajectory[..n - 1]
        .iter()
        .enumerate()
        .filter(|(i, _)| (i * m).is_multiple_of(every))
        .map(|(i, s)| (i * m, s.pair()))
        .collect();
    write_snapshots(out, states.iter().map(|(i, s)| (*i, s)))
}

fn flow_metric(cfg: &RunConfig, out: &Path) -> Outcome {
    let run = run_metric(&metric_start(cfg)?, &cfg.flow)?;
    write(out, "monitors.csv", &monitors_csv(&run.records))?;
    let snaps = metric_snapshots(cfg, &run, out)?;
    write(out, "final.ymh", &snapshot::to_string(&run.final_state.pair()))?;
    let report = psi_report(&run);
    let result = json!({
        "termination": run.termination.as_str(),
        "t_final": num(run.final_state.t),
        "steps": run.steps.len() - 1,
        "snapshots": snaps,
        "psi_c": num(report.psi_closed_form),
        "psi_path_integral": num(report.psi_path_integral),
        "sup_s": num(report.sup_s),
        "l1_s": num(report.l1_s),
        "final": record_json(run.records.last().expect("a run records its end state")),
        "blowup": run.blowup,
    });
    finish(run.termination, run.final_state.t, run.blowup.clone(), result)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn reconstruct_check(cfg: &RunConfig, out: &Path) -> Outcome {
    let start = initial_state(cfg)?;
    let pair = run_pair(&start, &cfg.flow)?;
    let metric = run_metric(&MetricState::initial(start.a.clone(), start.u.clone()), &cfg.flow)?;
    let rebuilt = reconstruct_pair(&metric.trajectory)?;
    write(out, "monitors.csv", &monitors_csv(&pair.records))?;
    write(out, "monitors_metric.csv", &monitors_csv(&metric.records))?;
    let c = cfg.flow.c;
    let mut csv = String::from("t,total_pair,total_metric,l2_residual_pair,l2_residual_metric,max_rel_mismatch\n");
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for (p, m) in pair.records.iter().zip(&rebuilt) {
        if (p.t - m.t).abs() > 1e-9 * cfg.flow.dt {
            break;
        }
        let q = pair_record(m, c, None);
        let mismatch = [(p.total, q.total), (p.l2_residual, q.l2_residual), (p.sup_ehat, q.sup_ehat), (p.trace_mean, q.trace_mean)]
            .iter()
            .fold(0.0f64, |w, (x, y)| w.max(rel(*x, *y)));
        worst = worst.max(mismatch);
        compared += 1;
        csv.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n", p.t, p.total, q.total, p.l2_residual, q.l2_residual, mismatch));
    }
    write(out, "reconstruct.csv", &csv)?;
    let result = json!({
        "pair_termination": pair.termination.as_str(),
        "metric_termination": metric.termination.as_str(),
        "compared_samples": compared,
        "max_rel_mismatch": num(worst),
    });
    let blowup = pair.blowup.clone().or(metric.blowup.clone());
    let term = if pair.termination == Termination::Blowup { pair.termination } else { metric.termination };
    finish(term, pair.final_state.t.min(metric.final_state.t), blowup, result)
}

fn check_identities(cfg: &RunConfig, out: &Path) -> Outcome {
    let studies = identity_mesh_study(&cfg.check_sizes);
    let exact = exact_checks(cfg.check_samples, cfg.seed);
    let sizes = &cfg.check_sizes;
    let mut csv = String::from("label,expected_order");
    for n in sizes {
        csv.push_str(&format!(",residual_{n}"));
    }
    for w in sizes.windows(2) {
        csv.push_str(&format!(",order_{}_{}", w[0], w[1]));
    }
    csv.push_str(",pass\n");
    let mut table = format!("{:<32} {:>6}", "identity", "need");
    for w in sizes.windows(2) {
        table.push_str(&format!(" {:>9}", format!("{}→{}", w[0], w[1])));
    }
    table.push_str("  pass\n");
    let mut rows = Vec::new();
    for s in &studies {
        csv.push_str(&format!("{},{}", s.label, s.expected_order));
        table.push_str(&format!("{:<32} {:>6.2}", s.label, s.expected_order));
        for r in &s.residuals {
            csv.push_str(&format!(",{r:.17e}"));
        }
        for o in &s.orders {
            csv.push_str(&format!(",{o:.17e}"));
            table.push_str(&format!(" {o:>9.4}"));
        }
        csv.push_str(&format!(",{}\n", s.passes()));
        table.push_str(&format!("  {}\n", if s.passes() { "yes" } else { "no" }));
        rows.push(json!({
            "label": s.label,
            "expected_order": s.expected_order,
            "residuals": s.residuals.iter().copied().map(num).collect::<Vec<_>>(),
            "orders": s.orders.iter().copied().map(num).collect::<Vec<_>>(),
            "observed_order": num(s.observed_order()),
            "pass": s.passes(),
        }));
    }
    for e in &exact {
        table.push_str(&format!("{:<32} max error {:.2e} (tol {:e})  {}\n", e.label, e.max_error, e.tolerance, if e.passes() { "yes" } else { "no" }));
    }
    write(out, "identities.csv", &csv)?;
    print!("{table}");
    let exact_json: Vec<Json> = exact
        .iter()
        .map(|e| json!({"label": e.label, "max_error": num(e.max_error), "tolerance": e.tolerance, "pass": e.passes()}))
        .collect();
    Ok(json!({
        "mesh_studies": rows,
        "exact_checks": exact_json,
        "all_pass": studies.iter().all(|s| s.passes()) && exact.iter().all(|e| e.passes()),
    }))
}

fn grad_check(cfg: &RunConfig, out: &Path) -> Outcome {
    let g = grid_of(cfg);
    let mut csv = String::from("config,seed,max_rel_error_u,max_rel_error_a\n");
    let mut worst: f64 = 0.0;
    for i in 0..cfg.check_configs {
        let seed = cfg.seed.wrapping_add(i as u64);
        let (a, u) = random_configuration(g, cfg.fiber, &mut LabRng::new(seed), cfg.init_amplitude);
        let r = gradcheck(&a, &u, cfg.flow.c, cfg.check_directions, cfg.check_step, seed)?;
        worst = worst.max(r.max_rel_error_u).max(r.max_rel_error_a);
        csv.push_str(&format!("{i},{seed},{:.17e},{:.17e}\n", r.max_rel_error_u, r.max_rel_error_a));
    }
    write(out, "gradcheck.csv", &csv)?;
    Ok(json!({"configs": cfg.check_configs, "directions": cfg.check_directions, "step": cfg.check_step, "worst_rel_error": num(worst)}))
}

fn scan(cfg: &RunConfig, out: &Path) -> Outcome {
    let start = initial_state(cfg)?;
    let verdicts = stability_scan(&start, &cfg.scan_c_values, &cfg.flow, cfg.scan_flow)?;
    write(out, "scan.csv", &scan_csv(&verdicts))?;
    let rows: Vec<Json> = verdicts
        .iter()
        .map(|v| {
            json!({
                "c": num(v.c_value),
                "threshold": num(v.threshold),
                "predicted": v.predicted.as_str(),
                "observed": v.observed.as_str(),
                "agrees": v.agrees(),
                "residual_at_end": num(v.residual_at_end),
                "mean_residual_at_end": num(v.mean_residual_at_end),
                "T_plus": num(v.t_plus),
                "T_minus": num(v.t_minus),
                "t_end": num(v.t_end),
                "error": v.error,
            })
        })
        .collect();
    Ok(json!({"verdicts": rows}))
}

fn sigma_check(cfg: &RunConfig, out: &Path) -> Outcome {
    let mut r = LabRng::new(cfg.seed);
    let mut failures = 0usize;
    for _ in 0..cfg.sigma_samples {
        let h = (3.0 * r.symmetric()).exp();
        let k = (3.0 * r.symmetric()).exp();
        let s = sigma_scalar(h, k)?;
        failures += usize::from(!(s >= 0.0) || (s == 0.0) != (h == k) || sigma_scalar(h, h)? != 0.0);
        let b = Matrix2::new(r.symmetric(), r.symmetric(), r.symmetric(), r.symmetric());
        let c = Matrix2::new(r.symmetric(), r.symmetric(), r.symmetric(), r.symmetric());
        let hm = b * b.transpose() + Matrix2::identity() * 0.1;
        let km = c * c.transpose() + Matrix2::identity() * 0.1;
        failures += usize::from(!(sigma_matrix(&hm, &km)? > 0.0) || sigma_matrix(&hm, &hm)?.abs() > 1e-12);
    }
    let first = metric_start(cfg)?;
    let g = first.s.grid;
    let mut second = first.clone();
    second.s = SiteField::from_vec(g, (0..g.sites()).map(|_| cfg.sigma_amplitude * r.symmetric()).collect())?;
    let t1 = run_metric(&first, &cfg.flow)?;
    let t2 = run_metric(&second, &cfg.flow)?;
    let mut csv = String::from("t,sup_sigma\n");
    let mut sups = Vec::new();
    for (x, y) in t1.trajectory.iter().zip(&t2.trajectory) {
        if (x.t - y.t).abs() > 1e-9 * cfg.flow.dt {
            break;
        }
        let s = sigma_distance(&x.s, &y.s)?.sup;
        csv.push_str(&format!("{:.17e},{s:.17e}\n", x.t));
        sups.push(s);
    }
    write(out, "sigma.csv", &csv)?;
    let rises = sups.windows(2).filter(|w| w[1] > w[0] * (1.0 + 4.0 * f64::EPSILON)).count();
    Ok(json!({
        "sample_pairs": cfg.sigma_samples,
        "sample_failures": failures,
        "sup_sigma_start": sups.first().copied().map(num),
        "sup_sigma_end": sups.last().copied().map(num),
        "sup_sigma_rises": rises,
    }))
}

fn psi_check(cfg: &RunConfig, out: &Path) -> Outcome {
    let run = run_metric(&metric_start(cfg)?, &cfg.flow)?;
    write(out, "monitors.csv", &monitors_csv(&run.records))?;
    let scale = run.steps.iter().fold(0.0f64, |m, s| m.max(s.psi_c.abs()));
    let errs = psi_derivative_errors(&run, 1e-8 * scale);
    let mut csv = String::from("t,rel_error\n");
    for (t, e) in &errs {
        csv.push_str(&format!("{t:.17e},{e:.17e}\n"));
    }
    write(out, "psi_derivative.csv", &csv)?;
    let report = psi_report(&run);
    let result = json!({
        "termination": run.termination.as_str(),
        "psi_c": num(report.psi_closed_form),
        "psi_path_integral": num(report.psi_path_integral),
        "mismatch": num(report.mismatch),
        "max_derivative_rel_error": num(errs.iter().fold(0.0f64, |m, e| m.max(e.1))),
        "derivative_samples": errs.len(),
        "psi_nonpositive": run.steps.iter().all(|s| s.psi_c <= 0.0),
        "blowup": run.blowup,
    });
    finish(run.termination, run.final_state.t, run.blowup.clone(), result)
}
