//! Plain `key=value` run records written next to every output.

use std::fmt::Display;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use sha2::{Digest, Sha256};

pub struct Manifest {
    entries: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        let mut m = Self {
            entries: Vec::new(),
            started: Instant::now(),
        };
        m.set("subcommand", subcommand);
        m.set("tool_version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn set_path(&mut self, key: &str, path: &Path) {
        self.set(key, path.display());
    }

    /// Records the SHA-256 of a file's contents under `key`.
    pub fn set_file_hash(&mut self, key: &str, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.set(key, sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(mut self, path: &Path) -> anyhow::Result<()> {
        let secs = self.started.elapsed().as_secs_f64();
        self.set("wall_clock_s", format!("{secs:.3}"));
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of canonical `key=value` lines, independent of argument order.
pub fn config_hash(pairs: &[(&str, String)]) -> String {
    let mut lines: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    lines.sort();
    sha256_hex(lines.concat().as_bytes())
}
