//! Ordered CSV emission and the content-hash manifest.

use std::fs::File;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Shortest decimal that parses back to the same double.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// One CSV file; rows are written in call order.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
    rows: usize,
}

impl Table {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(header)?;
        Ok(Self { path, writer, rows: 0 })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        self.rows += 1;
        Ok(())
    }

    /// Flushes and returns (path, data rows).
    pub fn finish(mut self) -> Result<(PathBuf, usize)> {
        self.writer.flush()?;
        Ok((self.path, self.rows))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `manifest.csv` (`file,bytes,sha256`) listing `files` relative to `dir`.
pub fn write_manifest(dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
    let mut t = Table::create(dir, "manifest.csv", &["file", "bytes", "sha256"])?;
    for f in files {
        let name = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().into_owned();
        let bytes = std::fs::metadata(f)?.len();
        t.row([name, bytes.to_string(), sha256_file(f)?])?;
    }
    Ok(t.finish()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        for x in [0.1, 1.0, 1e-30, 2.0f64.sqrt(), -0.0, 1e300, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e-30), "1e-30");
    }

    #[test]
    fn manifest_hashes_content() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "abc").unwrap();
        let m = write_manifest(dir.path(), &[dir.path().join("a.csv")]).unwrap();
        let text = std::fs::read_to_string(m).unwrap();
        assert!(text.contains("a.csv,3,ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
    }
}
