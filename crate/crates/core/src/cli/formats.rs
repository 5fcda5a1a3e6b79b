//! Output file formats.
//!
//! Every file starts with `#` metadata lines:
//!
//! ```text
//! # shepherd 0.1.0
//! # config_hash <64 hex digits>
//! # seed <u64>
//! # arena_half_width <w>
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! reading a file back reproduces the written `f64` values bit for bit.
//!
//! **Field files** (`.field`) continue with one `key value` line each for
//! `name`, `kind` (`scalar` or `vector`), `m`, `h` and `components`, then
//! the node values: `m` lines of `m` space-separated values per component,
//! row `a` holding nodes `(a, 0..m)`. Node `(a, b)` sits at
//! `(-w + a·h, -w + b·h)`. The CSV alternative (`.csv`) has the header
//! `x1,x2,value` or `x1,x2,v1,v2` and one line per node.
//!
//! **Trajectories** have the header `t,agent_kind,agent_id,x1,x2`, with
//! `agent_kind` one of `herder` or `target`; rows sharing a `t` form one
//! snapshot. **Metrics** use `t,chi,inside,herder_error_l2`, **decay
//! reports** `t,herder_error_l2,target_error_l2,bound`, and **containment
//! series** from `analyze` use `t,chi,inside`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::continuum::DecayRecord;
use crate::error::{Error, Result};
use crate::geometry::ArenaMap;
use crate::grid::{ScalarField, VectorField};
use crate::micro::{AgentEnsemble, ContainmentMetric, MetricRecord};
use crate::Vec2;

pub const TRAJECTORY_HEADER: &str = "t,agent_kind,agent_id,x1,x2";
pub const METRICS_HEADER: &str = "t,chi,inside,herder_error_l2";
pub const DECAY_HEADER: &str = "t,herder_error_l2,target_error_l2,bound";
pub const CONTAINMENT_HEADER: &str = "t,chi,inside";

/// Provenance written at the top of every file.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub arena: ArenaMap,
}

impl Metadata {
    pub fn new(config_hash: String, seed: u64, arena: ArenaMap) -> Self {
        Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            arena,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# shepherd {}\n# config_hash {}\n# seed {}\n# arena_half_width {}\n",
            self.version,
            self.config_hash,
            self.seed,
            self.arena.half_width()
        )
    }
}

/// Physical meaning of field values, which decides how they change under
/// arena rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Mass per area: divided by `s²`.
    Density,
    /// Length per time: multiplied by `s`.
    Velocity,
    /// Left unchanged.
    Plain,
}

impl Quantity {
    fn factor(self, arena: &ArenaMap) -> f64 {
        let s = arena.scale();
        match self {
            Quantity::Density => 1.0 / (s * s),
            Quantity::Velocity => s,
            Quantity::Plain => 1.0,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn field_body(out: &mut String, m: usize, values: &[f64], factor: f64) {
    for a in 0..m {
        let row = &values[a * m..(a + 1) * m];
        let line: Vec<String> = row.iter().map(|v| format!("{}", v * factor)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn field_text(meta: &Metadata, name: &str, m: usize, comps: &[&[f64]], factor: f64) -> String {
    let kind = if comps.len() == 1 { "scalar" } else { "vector" };
    let h = meta.arena.length_to_arena(std::f64::consts::TAU / m as f64);
    let mut s = meta.header();
    let _ = write!(s, "name {name}\nkind {kind}\nm {m}\nh {h}\ncomponents {}\n", comps.len());
    for c in comps {
        field_body(&mut s, m, c, factor);
    }
    s
}

fn field_csv(meta: &Metadata, m: usize, comps: &[&[f64]], factor: f64) -> String {
    let w = meta.arena.half_width();
    let h = 2.0 * w / m as f64;
    let mut s = meta.header();
    s.push_str(if comps.len() == 1 { "x1,x2,value\n" } else { "x1,x2,v1,v2\n" });
    for i in 0..m * m {
        let (a, b) = (i / m, i % m);
        let _ = write!(s, "{},{}", -w + a as f64 * h, -w + b as f64 * h);
        for c in comps {
            let _ = write!(s, ",{}", c[i] * factor);
        }
        s.push('\n');
    }
    s
}

pub fn write_scalar_field(path: &Path, meta: &Metadata, name: &str, f: &ScalarField, q: Quantity, csv: bool) -> Result<()> {
    let m = f.grid().size();
    let factor = q.factor(&meta.arena);
    let text = if csv {
        field_csv(meta, m, &[f.values()], factor)
    } else {
        field_text(meta, name, m, &[f.values()], factor)
    };
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    Ok(w.flush()?)
}

pub fn write_vector_field(path: &Path, meta: &Metadata, name: &str, v: &VectorField, q: Quantity, csv: bool) -> Result<()> {
    let m = v.grid().size();
    let factor = q.factor(&meta.arena);
    let text = if csv {
        field_csv(meta, m, &[v.x1(), v.x2()], factor)
    } else {
        field_text(meta, name, m, &[v.x1(), v.x2()], factor)
    };
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    Ok(w.flush()?)
}

/// A field file read back: side length and per-component row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub name: String,
    pub m: usize,
    pub h: f64,
    pub components: Vec<Vec<f64>>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let mut key = |want: &str| -> Result<(usize, String)> {
        let (i, l) = lines.next().ok_or_else(|| parse_err(path, 0, format!("missing `{want}`")))?;
        match l.split_once(' ') {
            Some((k, v)) if k == want => Ok((i + 1, v.to_string())),
            _ => Err(parse_err(path, i + 1, format!("expected `{want} <value>`"))),
        }
    };
    let (_, name) = key("name")?;
    let (_, _kind) = key("kind")?;
    let (lm, m) = key("m")?;
    let m: usize = m.parse().map_err(|_| parse_err(path, lm, "bad grid size"))?;
    let (lh, h) = key("h")?;
    let h: f64 = h.parse().map_err(|_| parse_err(path, lh, "bad spacing"))?;
    let (lc, c) = key("components")?;
    let ncomp: usize = c.parse().map_err(|_| parse_err(path, lc, "bad component count"))?;
    let mut components = vec![Vec::with_capacity(m * m); ncomp];
    for comp in components.iter_mut() {
        for _ in 0..m {
            let (i, l) = lines.next().ok_or_else(|| parse_err(path, 0, "truncated field"))?;
            let row: Vec<f64> = l
                .split(' ')
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
            if row.len() != m {
                return Err(parse_err(path, i + 1, format!("expected {m} values, found {}", row.len())));
            }
            comp.extend(row);
        }
    }
    Ok(FieldFile { name, m, h, components })
}

/// Streams trajectory snapshots to a CSV file.
pub struct TrajectoryWriter {
    out: BufWriter<fs::File>,
    arena: ArenaMap,
}

impl TrajectoryWriter {
    pub fn create(path: &Path, meta: &Metadata) -> Result<Self> {
        let mut out = create(path)?;
        out.write_all(meta.header().as_bytes())?;
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        Ok(TrajectoryWriter { out, arena: meta.arena })
    }

    pub fn snapshot(&mut self, t: f64, ensemble: &AgentEnsemble) -> Result<()> {
        let identity = self.arena == ArenaMap::identity();
        for (kind, agents) in [("herder", &ensemble.herders), ("target", &ensemble.targets)] {
            for (i, p) in agents.iter().enumerate() {
                let [x1, x2] = if identity { p.coords() } else { self.arena.to_arena(*p) };
                writeln!(self.out, "{t},{kind},{i},{x1},{x2}")?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        Ok(self.out.flush()?)
    }
}

/// One snapshot read back from a trajectory file, in file coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub herders: Vec<Vec2>,
    pub targets: Vec<Vec2>,
}

/// Trajectory file contents plus the arena it was written in.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub arena: ArenaMap,
    pub snapshots: Vec<Snapshot>,
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut arena = ArenaMap::identity();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(w) = meta.trim().strip_prefix("arena_half_width ") {
                let w: f64 = w.parse().map_err(|_| parse_err(path, no, "bad arena half-width"))?;
                arena = ArenaMap::new(w).map_err(|e| parse_err(path, no, e.to_string()))?;
            }
            continue;
        }
        if !seen_header {
            if line != TRAJECTORY_HEADER {
                return Err(parse_err(path, no, format!("expected header `{TRAJECTORY_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(parse_err(path, no, format!("expected 5 columns, found {}", cols.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| parse_err(path, no, format!("bad {what} `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(path, no, format!("non-finite {what}")))
            }
        };
        let t = num(cols[0], "time")?;
        let _id: usize = cols[2].parse().map_err(|_| parse_err(path, no, format!("bad agent id `{}`", cols[2])))?;
        let p = [num(cols[3], "x1")?, num(cols[4], "x2")?];
        if snapshots.last().is_none_or(|s| s.time != t) {
            snapshots.push(Snapshot { time: t, herders: Vec::new(), targets: Vec::new() });
        }
        let snap = snapshots.last_mut().expect("just pushed");
        match cols[1] {
            "herder" => snap.herders.push(p),
            "target" => snap.targets.push(p),
            other => return Err(parse_err(path, no, format!("unknown agent kind `{other}`"))),
        }
    }
    if !seen_header {
        return Err(parse_err(path, 0, "missing trajectory header"));
    }
    Ok(Trajectory { arena, snapshots })
}

fn write_rows(path: &Path, meta: &Metadata, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(meta.header().as_bytes())?;
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(out.flush()?)
}

pub fn write_metrics(path: &Path, meta: &Metadata, records: &[MetricRecord]) -> Result<()> {
    write_rows(
        path,
        meta,
        METRICS_HEADER,
        records.iter().map(|r| {
            let c = r.containment;
            format!("{},{},{},{}", c.time, c.chi, c.inside, r.herder_error_l2)
        }),
    )
}

pub fn write_containment(path: &Path, meta: &Metadata, series: &[ContainmentMetric]) -> Result<()> {
    write_rows(
        path,
        meta,
        CONTAINMENT_HEADER,
        series.iter().map(|c| format!("{},{},{}", c.time, c.chi, c.inside)),
    )
}

pub fn write_decay(path: &Path, meta: &Metadata, records: &[DecayRecord]) -> Result<()> {
    write_rows(
        path,
        meta,
        DECAY_HEADER,
        records
            .iter()
            .map(|r| format!("{},{},{},{}", r.time, r.herder_error_l2, r.target_error_l2, r.bound)),
    )
}

/// `key = value` summary, readable as TOML after the comment header.
pub fn write_summary(path: &Path, meta: &Metadata, entries: &[(&str, String)]) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(meta.header().as_bytes())?;
    for (k, v) in entries {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(out.flush()?)
}

/// Raw text with the metadata header prepended.
pub fn write_text(path: &Path, meta: &Metadata, body: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(meta.header().as_bytes())?;
    out.write_all(body.as_bytes())?;
    Ok(out.flush()?)
}

/// Reads a CSV with a known header, skipping metadata lines, and returns the
/// data rows split on commas.
pub fn read_csv_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut seen = false;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        if !seen {
            if line != header {
                return Err(parse_err(path, i + 1, format!("expected header `{header}`")));
            }
            seen = true;
            continue;
        }
        rows.push(line.split(',').map(str::to_string).collect());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusPoint;
    use crate::grid::Grid;

    fn meta(w: f64) -> Metadata {
        Metadata::new("ab".repeat(32), 7, ArenaMap::new(w).unwrap())
    }

    #[test]
    fn header_lines() {
        let h = meta(std::f64::consts::PI).header();
        let lines: Vec<_> = h.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("# shepherd "));
        assert_eq!(lines[2], "# seed 7");
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(8).unwrap();
        let f = ScalarField::from_fn(&g, |p| (p.x1() * 1.7).sin() + p.x2() / 3.0);
        let path = dir.path().join("f.field");
        write_scalar_field(&path, &meta(std::f64::consts::PI), "rho", &f, Quantity::Density, false).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.m, 8);
        assert_eq!(back.name, "rho");
        assert_eq!(back.components[0], f.values());

        let v = VectorField::from_fn(&g, |p| [p.x1(), -p.x2()]);
        write_vector_field(&path, &meta(1.0), "u", &v, Quantity::Velocity, false).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.components.len(), 2);
        let s = 1.0 / std::f64::consts::PI;
        assert_eq!(back.components[1][3], v.x2()[3] * s);
        assert_eq!(back.h, std::f64::consts::TAU / 8.0 * s);
    }

    #[test]
    fn trajectory_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let e = AgentEnsemble {
            herders: vec![TorusPoint::new(0.1, -0.2).unwrap()],
            targets: vec![TorusPoint::new(1.0 / 3.0, 2.0).unwrap(), TorusPoint::ORIGIN],
        };
        let mut w = TrajectoryWriter::create(&path, &meta(std::f64::consts::PI)).unwrap();
        w.snapshot(0.0, &e).unwrap();
        w.snapshot(0.5, &e).unwrap();
        w.finish().unwrap();
        let t = read_trajectory(&path).unwrap();
        assert_eq!(t.snapshots.len(), 2);
        assert_eq!(t.snapshots[1].targets[0], [1.0 / 3.0, 2.0]);
        assert_eq!(t.snapshots[0].herders.len(), 1);

        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("1.0,target,0,abc,0.0\n");
        fs::write(&path, text).unwrap();
        match read_trajectory(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 12),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }
}
