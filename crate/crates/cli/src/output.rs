//! CSV and manifest emission. Numbers carry 12 significant digits so golden
//! files are stable across platforms with IEEE-754 doubles.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// 12 significant digits; NaN and infinities spelled out.
pub fn fmt12(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.11e}")
    }
}

/// A named-column table written as CSV with a header row.
pub struct CsvTable {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new() -> Self {
        CsvTable { headers: Vec::new(), columns: Vec::new() }
    }

    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        self.headers.push(name.to_string());
        self.columns.push(values);
        self
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let rows = self.columns.iter().map(|c| c.len()).max().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&self.headers.join(","));
        out.push('\n');
        for r in 0..rows {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|c| c.get(r).map(|&v| fmt12(v)).unwrap_or_else(|| "nan".into()))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        write_atomically(path, out.as_bytes())
    }
}

impl Default for CsvTable {
    fn default() -> Self {
        Self::new()
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)
}

/// Write the run manifest as pretty JSON.
pub fn write_manifest(path: &Path, manifest: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomically(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt12_carries_twelve_significant_digits() {
        assert_eq!(fmt12(1.0), "1.00000000000e0");
        assert_eq!(fmt12(-0.000123456789012345), "-1.23456789012e-4");
        assert_eq!(fmt12(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_header_and_aligned_rows() {
        let dir = std::env::temp_dir().join("phonlase-csv-test");
        let path = dir.join("t.csv");
        let mut t = CsvTable::new();
        t.push_column("t", vec![0.0, 1.0]);
        t.push_column("n1", vec![0.5, 0.25]);
        t.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,n1");
        assert_eq!(lines.next().unwrap(), "0.00000000000e0,5.00000000000e-1");
        std::fs::remove_dir_all(&dir).ok();
    }
}
