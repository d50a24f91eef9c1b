//! Text snapshots of a pair state.
//!
//! ```text
//! YMHSNAP v1 nx ny a d t
//! Ax Ay p0 p1 [p2]        one line per site, row-major
//! ```
//!
//! Values carry 17 significant digits so that reading back is bit-exact. The
//! fiber is read off the column count: four for the plane, five for the sphere.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::fiber::{Fiber, V3};
use crate::flow::FlowState;
use crate::gauge::{Connection, Section};
use crate::lattice::{build_grid, Dir, LinkField, SiteField};

const MAGIC: &str = "YMHSNAP";
const VERSION: &str = "v1";

pub fn to_string(state: &FlowState) -> String {
    let g = state.a.grid();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION} {} {} {:.16e} {} {:.16e}", g.nx, g.ny, g.a, g.d, state.t);
    for k in 0..g.sites() {
        let p = state.u.at(k);
        let ax = *state.a.links.at(k, Dir::X);
        let ay = *state.a.links.at(k, Dir::Y);
        let _ = match state.u.fiber {
            Fiber::LinearC => writeln!(out, "{ax:.16e} {ay:.16e} {:.16e} {:.16e}", p.x, p.y),
            Fiber::Sphere => writeln!(out, "{ax:.16e} {ay:.16e} {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z),
        };
    }
    out
}

pub fn write<W: Write>(mut w: W, state: &FlowState) -> Result<()> {
    w.write_all(to_string(state).as_bytes())?;
    Ok(())
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Snapshot { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| bad(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(line, format!("cannot parse {what}")))
}

pub fn read<R: BufRead>(r: R) -> Result<FlowState> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty snapshot"))??;
    let mut toks = header.split_whitespace();
    if toks.next() != Some(MAGIC) || toks.next() != Some(VERSION) {
        return Err(bad(1, format!("expected `{MAGIC} {VERSION}` header")));
    }
    let nx: usize = field(toks.next(), 1, "nx")?;
    let ny: usize = field(toks.next(), 1, "ny")?;
    let a: f64 = field(toks.next(), 1, "a")?;
    let d: i64 = field(toks.next(), 1, "d")?;
    let t: f64 = field(toks.next(), 1, "t")?;
    if toks.next().is_some() {
        return Err(bad(1, "trailing header fields"));
    }
    let grid = build_grid(nx, ny, a, d)?;
    let mut links = LinkField::filled(grid, 0.0);
    let mut sites = Vec::with_capacity(grid.sites());
    let mut fiber = None;
    for k in 0..grid.sites() {
        let n = k + 2;
        let text = lines.next().ok_or_else(|| bad(n, "missing site row"))??;
        let vals = text
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad(n, format!("cannot parse `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let f = match vals.len() {
            4 => Fiber::LinearC,
            5 => Fiber::Sphere,
            m => return Err(bad(n, format!("expected 4 or 5 columns, found {m}"))),
        };
        if *fiber.get_or_insert(f) != f {
            return Err(bad(n, "column count changes between rows"));
        }
        *links.at_mut(k, Dir::X) = vals[0];
        *links.at_mut(k, Dir::Y) = vals[1];
        sites.push(V3::new(vals[2], vals[3], vals.get(4).copied().unwrap_or(0.0)));
    }
    if let Some(extra) = lines.next() {
        if !extra?.trim().is_empty() {
            return Err(bad(grid.sites() + 2, "rows beyond the grid"));
        }
    }
    let fiber = fiber.expect("grids have at least one site");
    Ok(FlowState { a: Connection { links }, u: Section { fiber, sites: SiteField { grid, data: sites } }, t })
}

pub fn from_str(text: &str) -> Result<FlowState> {
    read(text.as_bytes())
}
