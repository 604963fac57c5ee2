use std::fs;
use std::io;
use std::path::Path;

use super::RunReport;

/// Writes the data files and `report.json` into `dir`; artifact paths in the
/// report are relative to `dir`.
pub(crate) fn write_all(dir: &Path, files: &[(String, Vec<u8>)], report: &mut RunReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    report.artifacts = files.iter().map(|(name, _)| name.clone()).collect();
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(dir.join("report.json"), text + "\n")
}

/// CSV text from a header and rows of already formatted cells.
pub(crate) fn csv(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

/// Shortest round-trip formatting.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}
