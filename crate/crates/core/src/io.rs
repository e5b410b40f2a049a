//! Text file formats: single spectra, ensemble manifests and trace pairs.
//!
//! Spectrum file: CSV with header `frequency_hz,power_linear`.
//! Trace-pair file: CSV with header `frequency_hz,upper_db,lower_db`; rows may
//! come in any order.
//! Ensemble manifest: one `role path` pair per line (`signal`, `dark` or
//! `shot`), `#` comments, paths relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::parse_error;
use crate::spectra::{RecordMeta, SpectrumRecord, TracePair};
use crate::units::{db_from_linear, linear_from_db};

pub const SPECTRUM_HEADER: [&str; 2] = ["frequency_hz", "power_linear"];
pub const TRACE_HEADER: [&str; 3] = ["frequency_hz", "upper_db", "lower_db"];

fn data_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Data { path: path.to_path_buf(), message: message.into() }
}

fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => data_error(path, format!("{other:?}")),
        })?;
    let found = reader.headers().map_err(|e| data_error(path, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(data_error(
            path,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data_error(path, e.to_string()))?;
        for (c, col) in cols.iter_mut().enumerate() {
            let v: f64 = rec
                .get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| data_error(path, format!("row {}: column `{}` is not a number", row + 1, header[c])))?;
            col.push(v);
        }
    }
    Ok(cols)
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| data_error(path, e.to_string()))?;
    w.write_record(header).map_err(|e| data_error(path, e.to_string()))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| data_error(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_spectrum(path: &Path, index: usize) -> Result<SpectrumRecord> {
    let mut cols = read_columns(path, &SPECTRUM_HEADER)?;
    let power = cols.pop().unwrap();
    let freqs = cols.pop().unwrap();
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    SpectrumRecord::new(freqs, power, RecordMeta::new(label, index)).map_err(|e| data_error(path, e.to_string()))
}

pub fn write_spectrum(path: &Path, record: &SpectrumRecord) -> Result<()> {
    write_rows(
        path,
        &SPECTRUM_HEADER,
        record.frequencies().iter().zip(record.power()).map(|(f, p)| vec![*f, *p]),
    )
}

pub fn read_trace_pair(path: &Path) -> Result<TracePair> {
    let cols = read_columns(path, &TRACE_HEADER)?;
    let rows = (0..cols[0].len())
        .map(|i| (cols[0][i], linear_from_db(cols[1][i]), linear_from_db(cols[2][i])))
        .collect();
    TracePair::from_rows(rows).map_err(|e| data_error(path, e.to_string()))
}

pub fn write_trace_pair(path: &Path, traces: &TracePair) -> Result<()> {
    let rows = (0..traces.len())
        .map(|i| {
            Ok(vec![
                traces.frequencies[i],
                db_from_linear(traces.upper[i])?,
                db_from_linear(traces.lower[i])?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &TRACE_HEADER, rows.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Signal,
    Dark,
    Shot,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Signal => "signal",
            Role::Dark => "dark",
            Role::Shot => "shot",
        }
    }
}

/// File paths of one measurement campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleManifest {
    pub signals: Vec<PathBuf>,
    pub dark: PathBuf,
    pub shot: PathBuf,
}

impl EnsembleManifest {
    pub fn parse(text: &str, base: &Path, path: Option<&Path>) -> Result<Self> {
        let mut signals = Vec::new();
        let mut dark = None;
        let mut shot = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((role, file)) = line.split_once(char::is_whitespace) else {
                return Err(parse_error(path, i + 1, format!("expected `role path`, found `{line}`")));
            };
            let file = base.join(file.trim());
            match role {
                "signal" => signals.push(file),
                "dark" | "shot" => {
                    let slot = if role == "dark" { &mut dark } else { &mut shot };
                    if slot.replace(file).is_some() {
                        return Err(parse_error(path, i + 1, format!("second `{role}` entry")));
                    }
                }
                other => return Err(parse_error(path, i + 1, format!("unknown role `{other}`"))),
            }
        }
        let last = text.lines().count().max(1);
        if signals.is_empty() {
            return Err(parse_error(path, last, "manifest lists no signal spectra"));
        }
        let dark = dark.ok_or_else(|| parse_error(path, last, "manifest has no `dark` entry"))?;
        let shot = shot.ok_or_else(|| parse_error(path, last, "manifest has no `shot` entry"))?;
        Ok(EnsembleManifest { signals, dark, shot })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, Some(path))
    }

    /// Render with paths relative to `base` where possible.
    pub fn render(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut s = String::new();
        for (role, p) in [(Role::Dark, &self.dark), (Role::Shot, &self.shot)] {
            s.push_str(&format!("{} {}\n", role.as_str(), rel(p)));
        }
        for p in &self.signals {
            s.push_str(&format!("{} {}\n", Role::Signal.as_str(), rel(p)));
        }
        s
    }

    /// Load every record; signals get acquisition indices in manifest order.
    pub fn load(&self) -> Result<(Vec<SpectrumRecord>, SpectrumRecord, SpectrumRecord)> {
        use rayon::prelude::*;
        let ensemble = self
            .signals
            .par_iter()
            .enumerate()
            .map(|(i, p)| read_spectrum(p, i))
            .collect::<Result<Vec<_>>>()?;
        let dark = read_spectrum(&self.dark, 0)?;
        let shot = read_spectrum(&self.shot, 0)?;
        Ok((ensemble, dark, shot))
    }
}
