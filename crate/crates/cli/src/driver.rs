//! Argument handling, summary writing and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

use crate::commands;
use crate::config::{resolve, ConfigError, RawConfig, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ymhlab", version, about = "Lattice Yang-Mills-Higgs flow experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML file of `section.key = value` entries.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one entry, e.g. `--set flow.dt=5e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; replaces `run.output_dir`.
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Worker threads for scans; replaces `run.jobs` (0 = all cores).
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the pair flow. Reads grid, fiber, flow, run, init.
    FlowPair(Common),
    /// Integrate the metric flow (linear fiber). Reads grid, fiber, flow, run, init.
    FlowMetric(Common),
    /// Compare the reconstructed metric flow with the pair flow.
    ReconstructCheck(Common),
    /// Mesh-refinement table of the discrete identities. Reads run, check.
    CheckIdentities(Common),
    /// Finite-difference gradient check. Reads grid, fiber, flow, run, init, check.
    Gradcheck(Common),
    /// Predicted vs observed stability over `scan.c_values`.
    StabilityScan(Common),
    /// σ-distance samples and the sup σ trajectory of two metric flows.
    SigmaCheck(Common),
    /// Donaldson functional along a metric flow.
    PsiCheck(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::FlowPair(c) => ("flow-pair", c),
            Command::FlowMetric(c) => ("flow-metric", c),
            Command::ReconstructCheck(c) => ("reconstruct-check", c),
            Command::CheckIdentities(c) => ("check-identities", c),
            Command::Gradcheck(c) => ("gradcheck", c),
            Command::StabilityScan(c) => ("stability-scan", c),
            Command::SigmaCheck(c) => ("sigma-check", c),
            Command::PsiCheck(c) => ("psi-check", c),
        }
    }
}

fn load(name: &str, args: &Common) -> Result<RunConfig, ConfigError> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| ConfigError {
                reason: "config_read",
                message: format!("{}: {e}", path.display()),
            })?;
            RawConfig::from_toml(&text)?
        }
        None => RawConfig::default(),
    };
    for s in &args.overrides {
        raw.set(s)?;
    }
    let mut cfg = resolve(&raw, name)?;
    if let Some(dir) = &args.output {
        cfg.output_dir = dir.display().to_string();
        cfg.echo.insert("run.output_dir".into(), json!(cfg.output_dir));
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
        cfg.echo.insert("run.jobs".into(), json!(j));
    }
    Ok(cfg)
}

fn write_summary(dir: &Path, summary: &Json) {
    let text = serde_json::to_string_pretty(summary).expect("summary is plain JSON") + "\n";
    if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("summary.json"), text)) {
        eprintln!("ymhlab: cannot write summary into {}: {e}", dir.display());
    }
}

/// Runs one subcommand and returns its exit status. `summary.json` is
/// written whenever an output directory is known.
pub fn execute(cli: &Cli) -> u8 {
    let (name, args) = cli.command.split();
    let cfg = match load(name, args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("ymhlab {name}: {e}");
            if let Some(dir) = &args.output {
                write_summary(
                    dir,
                    &json!({
                        "command": name,
                        "status": "validation_error",
                        "exit_code": EXIT_VALIDATION,
                        "reason": e.reason,
                        "message": e.message,
                    }),
                );
            }
            return EXIT_VALIDATION;
        }
    };
    for w in &cfg.warnings {
        eprintln!("ymhlab {name}: warning: {w}");
    }
    let out = PathBuf::from(&cfg.output_dir);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ymhlab {name}: cannot start {} worker threads: {e}", cfg.jobs);
            return EXIT_VALIDATION;
        }
    };
    let outcome = pool.install(|| commands::run(name, &cfg, &out));
    let (code, status, reason, message, result) = match outcome {
        Ok(result) => (EXIT_OK, "ok", None, None, result),
        Err(f) => {
            let numerical = f.error.is_numerical();
            eprintln!("ymhlab {name}: {}", f.error);
            (
                if numerical { EXIT_NUMERICAL } else { EXIT_VALIDATION },
                if numerical { "numerical_failure" } else { "validation_error" },
                Some(f.error.reason()),
                Some(f.error.to_string()),
                f.partial.unwrap_or(Json::Null),
            )
        }
    };
    write_summary(
        &out,
        &json!({
            "command": name,
            "status": status,
            "exit_code": code,
            "reason": reason,
            "message": message,
            "warnings": cfg.warnings,
            "config": cfg.echo,
            "result": result,
        }),
    );
    code
}
