//! Run manifest: a human-readable key-value record of what a command did,
//! including a content digest for every file it wrote.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest {
            entries: Vec::new(),
        };
        m.add("engine_version", env!("CARGO_PKG_VERSION"));
        m.add("command", command);
        m
    }

    pub fn add(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Records a written file under `file.<label>.sha256`.
    pub fn add_file(&mut self, label: &str, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        self.add(&format!("file.{label}.path"), path.display());
        self.add(&format!("file.{label}.sha256"), hex::encode(digest));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# dcda run manifest\n");
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join("manifest.txt"), self.render())
    }
}
