//! Artifact output: CSV tables and JSON reports, each written to a
//! temporary file in the target directory and renamed into place.

use anyhow::{Context, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Fixed-width scientific formatting so repeated runs give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:.10e}")
}

pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn atomic_write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .with_context(|| format!("renaming into {}", target.display()))?;
        self.written.push(target.clone());
        Ok(target)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.atomic_write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.atomic_write(name, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_and_replaces_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        a.csv("t.csv", &["a", "b"], &[vec![num(1.0), num(-0.5)]])
            .unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "a,b\n1.0000000000e0,-5.0000000000e-1\n");
        a.json("r.json", &serde_json::json!({"x": 1})).unwrap();
        a.json("r.json", &serde_json::json!({"x": 2})).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap())
                .unwrap();
        assert_eq!(v["x"], 2);
        // no temporaries left behind
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
