//! Deterministic report writers: flat binary fields with JSON sidecars, CSV
//! tables and JSON verdicts.
//!
//! Report bodies are byte-identical for identical inputs; anything
//! time-dependent (wall-clock stamps) goes to a separate metadata file so
//! reruns can be diffed.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::green::GreenSpec;
use crate::kernels::{CovarianceSpec, Family};
use crate::noise::GridSpec;
use crate::scaling::ExponentReport;

#[derive(Debug, Serialize, Deserialize)]
struct FieldSidecar {
    grid: GridSpec,
    seed: u64,
    count: usize,
}

/// Write `values` as little-endian f64 at `<base>.bin` with a JSON sidecar
/// `<base>.json` holding the grid and seed.
pub fn write_field_binary(base: &Path, values: &[f64], grid: &GridSpec, seed: u64) -> Result<()> {
    let mut bin = BufWriter::new(File::create(with_ext(base, "bin"))?);
    for v in values {
        bin.write_all(&v.to_le_bytes())?;
    }
    bin.flush()?;
    let sidecar = FieldSidecar {
        grid: *grid,
        seed,
        count: values.len(),
    };
    write_json(&with_ext(base, "json"), &sidecar)
}

/// Read back a `<base>.bin` / `<base>.json` pair.
pub fn read_field_binary(base: &Path) -> Result<(GridSpec, u64, Vec<f64>)> {
    let sidecar: FieldSidecar = serde_json::from_reader(File::open(with_ext(base, "json"))?)?;
    let mut raw = Vec::new();
    File::open(with_ext(base, "bin"))?.read_to_end(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((sidecar.grid, sidecar.seed, values))
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut p = base.to_path_buf();
    p.set_extension(ext);
    p
}

/// Serialize as pretty JSON with a trailing newline (stable field order from
/// the struct definitions).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Plain CSV table with a fixed header.
pub struct CsvTable {
    header: &'static str,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new(header: &'static str) -> Self {
        CsvTable {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "{}", self.header)?;
        for row in &self.rows {
            writeln!(f, "{row}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn body(&self) -> String {
        let mut s = String::from(self.header);
        s.push('\n');
        for row in &self.rows {
            s.push_str(row);
            s.push('\n');
        }
        s
    }
}

pub const EXPONENT_CSV_HEADER: &str =
    "kind,family,operator,dim,params,kappa1,kappa2,w,fitted,stderr,expected,pass";

/// One exponent-report CSV row in the fixed schema.
pub fn exponent_csv_row(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    kappa1: f64,
    kappa2: f64,
    w: &[f64],
    report: &ExponentReport,
) -> String {
    let params = match cov.family {
        Family::Riesz => format!("beta={}", cov.beta.unwrap()),
        Family::Bessel => format!("alpha={}", cov.alpha.unwrap()),
        Family::Fractional => format!(
            "hurst={}",
            cov.hurst
                .as_ref()
                .unwrap()
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join("|")
        ),
    };
    let family = match cov.family {
        Family::Riesz => "riesz",
        Family::Bessel => "bessel",
        Family::Fractional => "fractional",
    };
    let operator = match green.operator {
        crate::green::Operator::Heat => "heat",
        crate::green::Operator::Wave => "wave",
    };
    let wtxt = w
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("|");
    format!(
        "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{}",
        report.kind,
        family,
        operator,
        cov.dim,
        params,
        kappa1,
        kappa2,
        wtxt,
        report.fitted,
        report.stderr,
        report.expected,
        report.pass
    )
}

/// Wall-clock metadata, deliberately kept out of the report bodies.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub unix_seconds: u64,
    pub elapsed_seconds: f64,
}

pub fn write_metadata(out_dir: &Path, elapsed_seconds: f64) -> Result<()> {
    let unix_seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &out_dir.join("metadata.json"),
        &RunMetadata {
            unix_seconds,
            elapsed_seconds,
        },
    )
}
