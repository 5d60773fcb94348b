use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

/// Writes stage outputs tagged with the config hash, seed and version, and
/// records each file for the manifest.
pub struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
    files: BTreeMap<String, String>,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

impl Output {
    pub fn new(dir: PathBuf, hash: String, seed: u64) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, hash, seed, files: BTreeMap::new() })
    }

    fn meta(&self) -> serde_json::Value {
        json!({ "config_hash": self.hash, "seed": self.seed, "version": VERSION })
    }

    fn write(&mut self, name: &str, body: String) -> std::io::Result<()> {
        let digest: String = Sha256::digest(body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        std::fs::write(self.dir.join(name), body)?;
        self.files.insert(name.to_string(), digest);
        Ok(())
    }

    /// `table` must start with its header line.
    pub fn csv(&mut self, name: &str, table: &str) -> std::io::Result<()> {
        let body = format!("# config_hash={} seed={} version={}\n{table}", self.hash, self.seed, VERSION);
        self.write(name, body)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> std::io::Result<()> {
        let value = json!({ "meta": self.meta(), "data": data });
        let body = serde_json::to_string_pretty(&value).map_err(std::io::Error::other)? + "\n";
        self.write(name, body)
    }

    /// Lists every file written so far with its SHA-256.
    pub fn manifest(&mut self, stage: &str, failures: &[String]) -> std::io::Result<()> {
        let files = std::mem::take(&mut self.files);
        let body = json!({ "meta": self.meta(), "stage": stage, "passed": failures.is_empty(), "failures": failures, "files": files });
        let text = serde_json::to_string_pretty(&body).map_err(std::io::Error::other)? + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)
    }
}

/// Rows of comma-separated cells under `header`.
pub fn table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_carries_meta_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::new(dir.path().to_path_buf(), "ab".into(), 3).unwrap();
        out.csv("t.csv", &table("a,b", [vec!["1".into(), cell(None)]])).unwrap();
        out.manifest("x", &[]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, format!("# config_hash=ab seed=3 version={VERSION}\na,b\n1,\n"));
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("t.csv"));
    }
}
