//! File formats.
//!
//! * Hypergraph JSON: `{"n": int, "m": int, "edges": [{"v": [int...], "w": float}...]}`
//!   with 1-based vertex indices (free vertices 1..n, controlled n+1..n+m).
//!   Conversion to the 0-based internal indexing happens here and only
//!   here.
//! * Problem JSON: exponents, penalty, horizon, step count, initial state,
//!   forcing/control rows per grid node, and the optional control-problem
//!   extras (targets, budget, optimizer options).
//! * Trajectory CSV: header `t,x1,...,xN`, one row per node.
//!
//! All floats are written with 17 significant digits and JSON objects are
//! key-sorted, so identical inputs produce byte-identical outputs. Files
//! are written atomically (temp file + rename).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlPath, TimeGrid, Trajectory};
use crate::energy::QExponent;
use crate::hypergraph::{Hypergraph, HypergraphError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

/// Serial form of a hypergraph (1-based vertex indices).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypergraphFile {
    pub n: usize,
    pub m: usize,
    pub edges: Vec<EdgeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub v: Vec<usize>,
    pub w: f64,
}

impl HypergraphFile {
    pub fn to_hypergraph(&self) -> Result<Hypergraph, HypergraphError> {
        let total = self.n + self.m;
        let mut edges = Vec::with_capacity(self.edges.len());
        for (index, e) in self.edges.iter().enumerate() {
            let mut verts = Vec::with_capacity(e.v.len());
            for &v in &e.v {
                if v == 0 || v > total {
                    return Err(HypergraphError::VertexOutOfRange { index, vertex: v });
                }
                verts.push(v - 1);
            }
            edges.push((verts, e.w));
        }
        Hypergraph::new(self.n, self.m, edges)
    }

    pub fn from_hypergraph(g: &Hypergraph) -> Self {
        Self {
            n: g.n_free(),
            m: g.m_controlled(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeEntry {
                    v: e.vertices.iter().map(|&v| v + 1).collect(),
                    w: e.weight,
                })
                .collect(),
        }
    }
}

/// The smoothing exponent in files: a number or the string "inf".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QField {
    Number(f64),
    Text(String2),
}

/// Only the literal "inf" is accepted as text.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum String2 {
    #[serde(rename = "inf")]
    Inf,
}

impl QField {
    pub fn to_exponent(self) -> QExponent {
        match self {
            QField::Number(v) => QExponent::Finite(v),
            QField::Text(String2::Inf) => QExponent::Infinite,
        }
    }

    pub fn from_exponent(q: QExponent) -> Self {
        match q {
            QExponent::Finite(v) => QField::Number(v),
            QExponent::Infinite => QField::Text(String2::Inf),
        }
    }
}

/// One experiment: dynamics data plus the optional control extras.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub p: f64,
    pub q: QField,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    /// Initial state, full length N.
    pub x0: Vec<f64>,
    /// Forcing rows, (steps + 1) x N.
    pub h: Vec<Vec<f64>>,
    /// Control rows, (steps + 1) x N with zero free components.
    pub a: Vec<Vec<f64>>,
    /// Target path rows, (steps + 1) x N (control problems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_target: Option<Vec<Vec<f64>>>,
    /// Dummy final-state target; defaults to the last x_target row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_target: Option<Vec<f64>>,
    /// Derivative budget of the admissible set.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt: Option<OptEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl ProblemFile {
    pub fn grid(&self) -> Result<TimeGrid, crate::dynamics::DynamicsError> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn control_path(
        &self,
        g: &Hypergraph,
    ) -> Result<ControlPath, crate::dynamics::DynamicsError> {
        ControlPath::new(self.grid()?, g.n_free(), self.a.clone())
    }
}

/// 17 significant digits: the shortest format that round-trips any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(format_float(value).as_bytes())
    }
}

/// Serializes to JSON with sorted keys (serde_json's default map is a
/// BTreeMap), full-precision floats and a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, IoError> {
    let value = serde_json::to_value(value).map_err(|e| IoError::Parse {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser).map_err(|e| IoError::Parse {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    out.push(b'\n');
    Ok(out)
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let wrap = |source: std::io::Error| IoError::Write { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(wrap)?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp).map_err(wrap)?;
        f.write_all(bytes).map_err(wrap)?;
        f.sync_all().map_err(wrap)?;
    }
    fs::rename(&tmp, path).map_err(wrap)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    atomic_write(path, &to_json_bytes(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| IoError::Parse { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_hypergraph(path: &Path) -> Result<Hypergraph, IoError> {
    let file: HypergraphFile = read_json(path)?;
    Ok(file.to_hypergraph()?)
}

/// Trajectory CSV: `t,x1,...,xN` header, one row per node, full-precision
/// floats.
pub fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let total = traj.state(0).len();
    let mut out = String::new();
    out.push('t');
    for i in 1..=total {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for k in 0..traj.grid().len() {
        out.push_str(&format_float(traj.grid().node(k)));
        for v in traj.state(k) {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Generic path CSV with the same layout (used for controls/adjoints).
pub fn path_csv(grid: TimeGrid, rows: &[Vec<f64>]) -> Vec<u8> {
    let total = rows[0].len();
    let mut out = String::new();
    out.push('t');
    for i in 1..=total {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (k, row) in rows.iter().enumerate() {
        out.push_str(&format_float(grid.node(k)));
        for v in row {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Parses a trajectory CSV back; checks the header shape and uniform
/// node spacing.
pub fn parse_trajectory_csv(path_name: &str, text: &str) -> Result<Trajectory, IoError> {
    let parse_err = |message: String| IoError::Parse { path: path_name.into(), message };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"t") || columns.len() < 2 {
        return Err(parse_err("header must be t,x1,...,xN".into()));
    }
    let total = columns.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != total + 1 {
            return Err(parse_err(format!("row {} has {} fields, want {}", idx + 2, fields.len(), total + 1)));
        }
        let mut parse = |s: &str| -> Result<f64, IoError> {
            s.parse::<f64>().map_err(|e| parse_err(format!("row {}: {e}", idx + 2)))
        };
        times.push(parse(fields[0])?);
        let row: Result<Vec<f64>, _> = fields[1..].iter().map(|s| parse(s)).collect();
        states.push(row?);
    }
    if states.len() < 2 {
        return Err(parse_err("need at least two rows".into()));
    }
    let steps = states.len() - 1;
    let horizon = *times.last().expect("nonempty");
    let grid = TimeGrid::new(horizon, steps)
        .map_err(|e| parse_err(e.to_string()))?;
    for (k, &t) in times.iter().enumerate() {
        if (t - grid.node(k)).abs() > 1e-9 * (1.0 + horizon) {
            return Err(parse_err(format!("node {k} is not on a uniform grid")));
        }
    }
    Trajectory::new(grid, states).map_err(|e| parse_err(e.to_string()))
}
