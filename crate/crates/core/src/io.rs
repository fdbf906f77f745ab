//! CSV and JSON input/output.
//!
//! Every writer goes through a temporary file in the destination directory
//! that is renamed into place only after a successful write, so failed runs
//! never leave partial files behind. The path `-` means stdin or stdout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::SweepPoint;
use crate::null::{EigenSpectrum, NullDistribution};
use crate::panel::SpatialPanel;
use crate::timeseries::Acf;
use crate::weights::{adjacency_from_edges, inverse_distance, ProximityMatrix, RegionCoordinates};

/// Everything needed to re-run a command exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Input name to SHA-256 of its bytes.
    pub input_hashes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(config: serde_json::Value, seed: Option<u64>) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            input_hashes: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: &str, bytes: &[u8]) -> Self {
        self.input_hashes.insert(name.to_string(), sha256_hex(bytes));
        self
    }

    /// `# key: value` lines placed above CSV output; readers skip them.
    pub fn csv_comment(&self) -> String {
        let mut out = format!("# sbergsma {}\n", self.version);
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        out.push_str(&format!("# config: {}\n", self.config));
        for (name, hash) in &self.input_hashes {
            out.push_str(&format!("# input {name}: sha256 {hash}\n"));
        }
        out
    }
}

/// JSON document pairing a result with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub provenance: Provenance,
    pub result: T,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a file, or stdin for `-`.
pub fn read_input(path: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path == "-" {
        io::stdin().lock().read_to_end(&mut buf)?;
    } else {
        File::open(path)?.read_to_end(&mut buf)?;
    }
    Ok(buf)
}

/// Writes through `f` into `path` atomically, or to stdout for `-`.
pub fn write_output<F>(path: &str, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if path == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        f(&mut lock)?;
        lock.flush()?;
        return Ok(());
    }
    let target = Path::new(path);
    let dir = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(target).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_string(path: &str, contents: &str) -> Result<()> {
    write_output(path, |w| Ok(w.write_all(contents.as_bytes())?))
}

struct Row {
    line: u64,
    fields: Vec<String>,
}

fn read_rows(bytes: &[u8]) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        // A lone empty field is a blank line.
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        rows.push(Row {
            line,
            fields: record.iter().map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

fn parse_cell(value: &str, line: u64, column: usize) -> Result<f64> {
    if value.is_empty() {
        return Err(Error::Parse {
            line,
            column,
            message: "empty cell".into(),
        });
    }
    let v: f64 = value.parse().map_err(|_| Error::NonNumeric {
        line,
        column,
        value: value.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column,
            message: format!("non-finite value '{value}'"),
        });
    }
    Ok(v)
}

fn parse_numeric_rows(rows: &[Row], expected: usize) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|row| {
            if row.fields.len() != expected {
                return Err(Error::RaggedRow {
                    line: row.line,
                    expected,
                    found: row.fields.len(),
                });
            }
            row.fields
                .iter()
                .enumerate()
                .map(|(c, v)| parse_cell(v, row.line, c + 1))
                .collect()
        })
        .collect()
}

fn all_numeric(fields: &[String]) -> bool {
    fields.iter().all(|f| f.parse::<f64>().is_ok())
}

/// Parses a panel: a header of region labels, then one row per time point.
pub fn parse_panel(bytes: &[u8]) -> Result<SpatialPanel> {
    let rows = read_rows(bytes)?;
    let Some((header, body)) = rows.split_first() else {
        return Err(Error::Size("panel file is empty".into()));
    };
    let labels = header.fields.clone();
    if let Some(c) = labels.iter().position(String::is_empty) {
        return Err(Error::Parse {
            line: header.line,
            column: c + 1,
            message: "empty region label".into(),
        });
    }
    if labels.len() < SpatialPanel::MIN_REGIONS {
        return Err(Error::Size(format!(
            "panel needs at least 2 regions, got {}",
            labels.len()
        )));
    }
    let values = parse_numeric_rows(body, labels.len())?;
    SpatialPanel::from_rows(&values, Some(labels))
}

pub fn load_panel(path: &str) -> Result<SpatialPanel> {
    parse_panel(&read_input(path)?)
}

/// Writes a panel in the format read by [`parse_panel`].
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a save/load round trip is exact.
pub fn write_panel(w: &mut dyn Write, panel: &SpatialPanel) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(panel.labels())?;
    for t in 0..panel.times() {
        out.write_record(panel.row(t).iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_panel(path: &str, panel: &SpatialPanel, provenance: Option<&Provenance>) -> Result<()> {
    write_output(path, |w| {
        if let Some(p) = provenance {
            w.write_all(p.csv_comment().as_bytes())?;
        }
        write_panel(w, panel)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsKind {
    /// Square matrix, optionally preceded by a header of labels.
    Dense,
    /// Lines `i,j` of 1-based region indices.
    Edges,
    /// Lines `label,x,y`, optionally preceded by a header.
    Coords,
}

/// Parses an unstandardized proximity matrix.
///
/// `regions` sets the size for edge lists; otherwise the largest index is used.
pub fn parse_weights(bytes: &[u8], kind: WeightsKind, regions: Option<usize>) -> Result<ProximityMatrix> {
    let mut rows = read_rows(bytes)?;
    match kind {
        WeightsKind::Dense => {
            let labels = match rows.first() {
                Some(first) if !all_numeric(&first.fields) => Some(rows.remove(0).fields),
                _ => None,
            };
            let n = rows.len();
            for (i, row) in rows.iter().enumerate() {
                if row.fields.len() != n {
                    return Err(Error::NotSquare {
                        rows: n,
                        row: i + 1,
                        cols: row.fields.len(),
                    });
                }
            }
            if let Some(l) = &labels {
                if l.len() != n {
                    return Err(Error::NotSquare {
                        rows: n,
                        row: 0,
                        cols: l.len(),
                    });
                }
            }
            let values = parse_numeric_rows(&rows, n)?;
            ProximityMatrix::from_rows(&values, labels)
        }
        WeightsKind::Edges => {
            let mut edges = Vec::with_capacity(rows.len());
            for row in &rows {
                if row.fields.len() != 2 {
                    return Err(Error::RaggedRow {
                        line: row.line,
                        expected: 2,
                        found: row.fields.len(),
                    });
                }
                let mut idx = [0usize; 2];
                for (c, f) in row.fields.iter().enumerate() {
                    idx[c] = f.parse().map_err(|_| Error::NonNumeric {
                        line: row.line,
                        column: c + 1,
                        value: f.clone(),
                    })?;
                }
                edges.push((idx[0], idx[1]));
            }
            let size = match regions {
                Some(r) => r,
                None => edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0),
            };
            if size < 2 {
                return Err(Error::Size(format!(
                    "edge list describes {size} regions; need at least 2"
                )));
            }
            adjacency_from_edges(&edges, size)
        }
        WeightsKind::Coords => {
            if let Some(first) = rows.first() {
                if first.fields.len() == 3 && !all_numeric(&first.fields[1..]) {
                    rows.remove(0);
                }
            }
            let mut labels = Vec::with_capacity(rows.len());
            let mut points = Vec::with_capacity(rows.len());
            for row in &rows {
                if row.fields.len() != 3 {
                    return Err(Error::RaggedRow {
                        line: row.line,
                        expected: 3,
                        found: row.fields.len(),
                    });
                }
                labels.push(row.fields[0].clone());
                points.push((
                    parse_cell(&row.fields[1], row.line, 2)?,
                    parse_cell(&row.fields[2], row.line, 3)?,
                ));
            }
            if points.len() < 2 {
                return Err(Error::Size(format!(
                    "need at least 2 coordinates, got {}",
                    points.len()
                )));
            }
            inverse_distance(&RegionCoordinates { labels, points })
        }
    }
}

pub fn load_weights(path: &str, kind: WeightsKind, regions: Option<usize>) -> Result<ProximityMatrix> {
    parse_weights(&read_input(path)?, kind, regions)
}

/// Dense CSV with a header of labels, readable by [`parse_weights`].
pub fn write_weights(w: &mut dyn Write, weights: &ProximityMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(weights.labels())?;
    for row in weights.rows() {
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_weights(path: &str, weights: &ProximityMatrix, provenance: Option<&Provenance>) -> Result<()> {
    write_output(path, |w| {
        if let Some(p) = provenance {
            w.write_all(p.csv_comment().as_bytes())?;
        }
        write_weights(w, weights)
    })
}

/// One column `t_sb` of null draws of `T * S~_B`.
pub fn write_null(w: &mut dyn Write, null: &NullDistribution) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_sb"])?;
    for s in &null.samples {
        out.write_record([s.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_spectrum(w: &mut dyn Write, spectrum: &EigenSpectrum) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "eigenvalue"])?;
    for (k, v) in spectrum.eigenvalues.iter().enumerate() {
        out.write_record([(k + 1).to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Moment summary per theta.
pub fn write_sweep(w: &mut dyn Write, points: &[SweepPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "theta", "reps", "mean", "sd", "se", "skewness", "kurtosis"])?;
    for p in points {
        let s = &p.summary;
        out.write_record([
            p.model.to_string(),
            p.theta.to_string(),
            s.n.to_string(),
            s.mean.to_string(),
            s.sd.to_string(),
            (s.sd / (s.n as f64).sqrt()).to_string(),
            s.skewness.to_string(),
            s.kurtosis.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format ACF table: region, lag, acf, threshold.
pub fn write_acf(w: &mut dyn Write, acfs: &[(String, Acf)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["region", "lag", "acf", "threshold"])?;
    for (label, a) in acfs {
        for (lag, v) in a.values.iter().enumerate() {
            out.write_record([label.clone(), lag.to_string(), v.to_string(), a.threshold.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
