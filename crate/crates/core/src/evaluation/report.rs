use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BerCurve, DiagnosticsRecord};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything one evaluation or diagnostics run produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub curves: Vec<BerCurve>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Seeds, parameter fingerprints and other run context.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            ..Default::default()
        }
    }

    pub fn ber_csv(&self) -> String {
        let mut out = String::from("detector,n,m,T,snr_db,bits,errors,ber,ci,schema_version\n");
        for c in &self.curves {
            let depth = c.depth.map(|t| t.to_string()).unwrap_or_default();
            for p in &c.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:e},{:e},{}",
                    c.detector, c.n, c.m, depth, p.snr_db, p.bits_tested, p.bit_errors, p.ber,
                    p.ci_half_width, SCHEMA_VERSION
                );
            }
        }
        out
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("detector,n,m,t,mean_gradient_amplitude,mean_bit_flip_ratio,ensemble_size,noiseless,schema_version\n");
        for r in &self.diagnostics {
            for t in 0..r.depth() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:e},{:e},{},{},{}",
                    r.detector,
                    r.n,
                    r.m,
                    t + 1,
                    r.mean_gradient_amplitude[t],
                    r.mean_bit_flip_ratio[t],
                    r.ensemble_size,
                    r.noiseless,
                    SCHEMA_VERSION
                );
            }
        }
        out
    }
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<stem>.json` plus `<stem>_ber.csv` and/or `<stem>_diagnostics.csv`
/// under `dir`. The BER CSV is always written, header-only when there are no
/// curves.
pub fn write_report(report: &Report, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::json(dir, e))?;
    json.push('\n');
    let mut written = vec![write(dir.join(format!("{stem}.json")), &json)?];
    if !report.curves.is_empty() || report.diagnostics.is_empty() {
        written.push(write(dir.join(format!("{stem}_ber.csv")), &report.ber_csv())?);
    }
    if !report.diagnostics.is_empty() {
        written.push(write(
            dir.join(format!("{stem}_diagnostics.csv")),
            &report.diagnostics_csv(),
        )?);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::DetectorSpec;
    use crate::evaluation::{sweep_ber, EvalOptions};
    use crate::rng::RngStream;
    use crate::system_model::SystemDims;

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&Report::new(), dir.path(), "r").unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(dir.path().join("r_ber.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn json_round_trip_and_row_count() {
        let dims = SystemDims::new(2, 2).unwrap();
        let mut report = Report::new();
        for det in [DetectorSpec::Mmse, DetectorSpec::Ml] {
            report.curves.push(
                sweep_ber(&det, dims, &[0.0, 3.3, 7.1], EvalOptions::new(50), RngStream::new(1, 0)).unwrap(),
            );
        }
        report.metadata.insert("seed".into(), 1.into());
        let dir = tempfile::tempdir().unwrap();
        write_report(&report, dir.path(), "eval").unwrap();
        let back = read_report(&dir.path().join("eval.json")).unwrap();
        assert_eq!(back, report);
        let csv = std::fs::read_to_string(dir.path().join("eval_ber.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 6);
    }

    #[test]
    fn io_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        match write_report(&Report::new(), &blocker.join("sub"), "r") {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("expected I/O error, got {other:?}"),
        }
    }
}
