//! Flat-file formats: wave and branch JSON, eigenvalue / branch / trace CSV.
//!
//! Every write goes to a temporary file in the target directory and is
//! renamed into place, so an aborted run never leaves a truncated file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, WaveBranchPoint};
use crate::error::{Error, Result};
use crate::evolution::EvolutionTrace;
use crate::spectral::{Sector, SpectralField};
use crate::stokes::{BranchKind, StokesWave};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveFile {
    pub format_version: u32,
    pub p: u32,
    pub sector: Sector,
    pub branch: BranchKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub a: f64,
    pub c: f64,
    /// Row-major `(N+1)²` block of `cos(kx)cos(jy)` coefficients.
    pub cc: Vec<f64>,
    /// Row-major `N²` block of `sin(kx)sin(jy)` coefficients, E sector only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ss: Option<Vec<f64>>,
}

fn schema(context: &str, message: impl Into<String>) -> Error {
    Error::Schema { context: context.to_string(), message: message.into() }
}

fn field_parts(field: &SpectralField) -> (Vec<f64>, Option<Vec<f64>>) {
    let ss = match field.sector() {
        Sector::S => None,
        Sector::E => Some(field.ss_block().to_vec()),
    };
    (field.cc_block().to_vec(), ss)
}

fn validate_field(
    context: &str,
    p: u32,
    sector: Sector,
    branch: BranchKind,
    n: usize,
    cc: &[f64],
    ss: Option<&Vec<f64>>,
) -> Result<SpectralField> {
    if p == 0 {
        return Err(schema(context, "field `p`: must be at least 1"));
    }
    if n < 3 {
        return Err(schema(context, format!("field `N`: must be at least 3, got {n}")));
    }
    if branch.sector() != sector {
        return Err(schema(
            context,
            format!("field `sector`: branch {branch} lives in sector {}, file says {sector}", branch.sector()),
        ));
    }
    if cc.len() != (n + 1) * (n + 1) {
        return Err(schema(context, format!("field `cc`: {} entries, expected {}", cc.len(), (n + 1) * (n + 1))));
    }
    let ss = match (sector, ss) {
        (Sector::S, Some(_)) => return Err(schema(context, "field `ss`: not allowed in sector s")),
        (Sector::S, None) => Vec::new(),
        (Sector::E, None) => return Err(schema(context, "field `ss`: required in sector e")),
        (Sector::E, Some(ss)) if ss.len() != n * n => {
            return Err(schema(context, format!("field `ss`: {} entries, expected {}", ss.len(), n * n)))
        }
        (Sector::E, Some(ss)) => ss.clone(),
    };
    SpectralField::from_parts(sector, n, cc.to_vec(), ss).map_err(|e| schema(context, e.to_string()))
}

impl WaveFile {
    pub fn from_point(w: &WaveBranchPoint) -> Self {
        let (cc, ss) = field_parts(&w.field);
        Self { format_version: FORMAT_VERSION, p: w.p, sector: w.sector, branch: w.branch, n: w.n, a: w.a, c: w.c, cc, ss }
    }

    pub fn from_stokes(w: &StokesWave) -> Self {
        let (cc, ss) = field_parts(&w.field);
        Self {
            format_version: FORMAT_VERSION,
            p: w.p,
            sector: w.sector,
            branch: w.branch,
            n: w.field.truncation(),
            a: w.a,
            c: w.c,
            cc,
            ss,
        }
    }

    pub fn field(&self, context: &str) -> Result<SpectralField> {
        if self.format_version != FORMAT_VERSION {
            return Err(schema(context, format!("field `format_version`: unsupported value {}", self.format_version)));
        }
        if !self.a.is_finite() || !self.c.is_finite() {
            return Err(schema(context, "fields `a` and `c` must be finite"));
        }
        validate_field(context, self.p, self.sector, self.branch, self.n, &self.cc, self.ss.as_ref())
    }

    /// Validated point; residual and nodal minimum are recomputed.
    pub fn to_point(&self, context: &str) -> Result<WaveBranchPoint> {
        let field = self.field(context)?;
        Ok(WaveBranchPoint::unchecked(self.p, self.branch, self.a, self.c, field))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub a: f64,
    pub c: f64,
    pub residual: f64,
    pub nodal_min: f64,
    pub cc: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ss: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchFile {
    pub format_version: u32,
    pub p: u32,
    pub sector: Sector,
    pub branch: BranchKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub newton_tol: f64,
    pub status: BranchStatus,
    /// Reason the run stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub points: Vec<BranchRecord>,
}

impl BranchFile {
    pub fn from_branch(b: &Branch, failure: Option<&Error>) -> Self {
        let points = b
            .points
            .iter()
            .map(|w| {
                let (cc, ss) = field_parts(&w.field);
                BranchRecord { a: w.a, c: w.c, residual: w.residual, nodal_min: w.nodal_min, cc, ss }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            p: b.p,
            sector: b.sector,
            branch: b.branch,
            n: b.n,
            newton_tol: b.newton_tol,
            status: if failure.is_some() { BranchStatus::Partial } else { BranchStatus::Complete },
            message: failure.map(|e| e.to_string()),
            points,
        }
    }

    pub fn to_points(&self, context: &str) -> Result<Vec<WaveBranchPoint>> {
        if self.format_version != FORMAT_VERSION {
            return Err(schema(context, format!("field `format_version`: unsupported value {}", self.format_version)));
        }
        self.points
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let ctx = format!("{context}, points[{i}]");
                let field = validate_field(&ctx, self.p, self.sector, self.branch, self.n, &r.cc, r.ss.as_ref())?;
                Ok(WaveBranchPoint::unchecked(self.p, self.branch, r.a, r.c, field))
            })
            .collect()
    }
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let located = |e: std::io::Error| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(located)?;
    tmp.write_all(bytes).map_err(located)?;
    tmp.as_file().sync_all().map_err(located)?;
    tmp.persist(path).map_err(|e| located(e.error))?;
    Ok(())
}

/// Serializes and checks that the text parses back to the same value, which
/// rules out non-finite numbers (written as `null`).
pub fn to_json<T: Serialize + DeserializeOwned + PartialEq>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    let back: T = serde_json::from_str(&text).map_err(|_| Error::NumericRange("serialized report"))?;
    if &back != value {
        return Err(Error::NumericRange("serialized report"));
    }
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize + DeserializeOwned + PartialEq>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

/// Parses JSON, reporting syntax and type errors with line and column.
pub fn parse_json<T: DeserializeOwned>(context: &str, text: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| schema(context, format!("line {} column {}: {e}", e.line(), e.column())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&path.display().to_string(), &text)
}

/// Either a single wave or a branch, by shape.
pub fn read_points(path: &Path) -> Result<Vec<WaveBranchPoint>> {
    let text = std::fs::read_to_string(path)?;
    let context = path.display().to_string();
    let value: serde_json::Value = parse_json(&context, &text)?;
    if value.get("points").is_some() {
        parse_json::<BranchFile>(&context, &text)?.to_points(&context)
    } else {
        Ok(vec![parse_json::<WaveFile>(&context, &text)?.to_point(&context)?])
    }
}

fn csv(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn eigen_csv(values: &[[f64; 2]]) -> String {
    csv("re,im", values.iter().map(|v| v.to_vec()))
}

pub fn branch_csv(points: &[WaveBranchPoint]) -> String {
    csv("a,c,residual,nodal_min", points.iter().map(|w| vec![w.a, w.c, w.residual, w.nodal_min]))
}

pub fn trace_csv(t: &EvolutionTrace) -> String {
    let mut head = String::new();
    let _ = write!(
        head,
        "# method={} p={} c={:e} dt={:e} epsilon={:e} seed={} grid={}",
        t.method, t.p, t.c, t.dt, t.epsilon, t.seed, t.grid
    );
    if let Some(tb) = t.blowup_time {
        let _ = write!(head, " blowup_time={tb:e}");
    }
    head.push_str("\nt,E,F,deviation");
    let n = t.times.len();
    csv(&head, (0..n).map(|i| vec![t.times[i], t.energy[i], t.mass[i], t.deviation[i]]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// `key=value` pairs from `#` header lines.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn parse_csv(context: &str, text: &str) -> Result<CsvTable> {
    let mut meta = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        match &columns {
            None => columns = Some(line.split(',').map(str::to_string).collect()),
            Some(cols) => {
                let row = line
                    .split(',')
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| schema(context, format!("line {}: {e}", ln + 1)))?;
                if row.len() != cols.len() {
                    return Err(schema(context, format!("line {}: {} values for {} columns", ln + 1, row.len(), cols.len())));
                }
                rows.push(row);
            }
        }
    }
    let columns = columns.ok_or_else(|| schema(context, "missing header line"))?;
    Ok(CsvTable { meta, columns, rows })
}
