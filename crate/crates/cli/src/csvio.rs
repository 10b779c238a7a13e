//! CSV input parsing for the deconvolve subcommand.
//!
//! Accepted layouts (header row required, comma separators, `.` decimals):
//! `x,z` for unpaired two-sample input (the shorter column may leave its
//! trailing cells empty), `z1,z2` for paired replicate measurements, and a
//! single `z` column for known-error deconvolution. Missing-value tokens
//! are rejected.

use std::path::Path;

use deconvkit_core::{Replicates, Sample};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub enum InputData {
    TwoSample { x: Sample, z: Sample },
    Replicates(Replicates),
    MixedOnly(Sample),
}

pub fn read_input_csv(path: &Path) -> Result<InputData, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CsvError::Parse {
        line: 1,
        message: "empty file, expected a header row".into(),
    })?;
    let columns: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();

    enum Layout {
        XZ,
        Z1Z2,
        Z,
    }
    let layout = match columns.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "z"] => Layout::XZ,
        ["z1", "z2"] => Layout::Z1Z2,
        ["z"] => Layout::Z,
        _ => {
            return Err(CsvError::Parse {
                line: 1,
                message: format!(
                    "unrecognized header '{header}'; expected 'x,z', 'z1,z2' or 'z'"
                ),
            })
        }
    };

    let mut col_a: Vec<f64> = Vec::new();
    let mut col_b: Vec<f64> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        let expected = match layout {
            Layout::Z => 1,
            _ => 2,
        };
        if cells.len() != expected {
            return Err(CsvError::Parse {
                line: line_no,
                message: format!("expected {expected} cells, found {}", cells.len()),
            });
        }
        let allow_empty = matches!(layout, Layout::XZ);
        if let Some(v) = parse_cell(cells[0], line_no, allow_empty)? {
            col_a.push(v);
        }
        if expected == 2 {
            if let Some(v) = parse_cell(cells[1], line_no, allow_empty)? {
                col_b.push(v);
            }
        }
    }

    let sample = |values: Vec<f64>, what: &str| {
        Sample::new(values).map_err(|e| CsvError::Parse {
            line: 1,
            message: format!("{what} column: {e}"),
        })
    };
    match layout {
        Layout::XZ => Ok(InputData::TwoSample {
            x: sample(col_a, "x")?,
            z: sample(col_b, "z")?,
        }),
        Layout::Z1Z2 => {
            let reps = Replicates::new(col_a, col_b).map_err(|e| CsvError::Parse {
                line: 1,
                message: format!("replicate columns: {e}"),
            })?;
            Ok(InputData::Replicates(reps))
        }
        Layout::Z => Ok(InputData::MixedOnly(sample(col_a, "z")?)),
    }
}

fn parse_cell(cell: &str, line: usize, allow_empty: bool) -> Result<Option<f64>, CsvError> {
    if cell.is_empty() {
        if allow_empty {
            return Ok(None);
        }
        return Err(CsvError::Parse {
            line,
            message: "empty cell".into(),
        });
    }
    let lowered = cell.to_ascii_lowercase();
    if matches!(lowered.as_str(), "na" | "nan" | "inf" | "-inf" | "null") {
        return Err(CsvError::Parse {
            line,
            message: format!("missing or non-finite value '{cell}' rejected"),
        });
    }
    let v: f64 = cell.parse().map_err(|_| CsvError::Parse {
        line,
        message: format!("cannot parse '{cell}' as a number"),
    })?;
    if !v.is_finite() {
        return Err(CsvError::Parse {
            line,
            message: format!("non-finite value '{cell}' rejected"),
        });
    }
    Ok(Some(v))
}

/// Two-column `y,fhat` density files written by the other subcommands.
pub fn read_density_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CsvError> {
    let text = std::fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut ys = Vec::new();
    let mut fs = Vec::new();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cells.len() < 2 {
            return Err(CsvError::Parse {
                line,
                message: "expected at least two cells".into(),
            });
        }
        ys.push(parse_cell(cells[0], line, false)?.expect("non-empty"));
        fs.push(parse_cell(cells[1], line, false)?.expect("non-empty"));
    }
    if ys.is_empty() {
        return Err(CsvError::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok((ys, fs))
}
