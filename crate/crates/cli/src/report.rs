//! Report files: a JSON envelope around each result, plus CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    status: &'a str,
    library_version: &'a str,
    config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a T>,
}

pub struct Emitter {
    pub dir: PathBuf,
    pub command: String,
    pub config_hash: String,
    written: Vec<PathBuf>,
}

/// SHA-256 of the canonical JSON form of the effective configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

impl Emitter {
    pub fn new(dir: &Path, command: &str, config_hash: String) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_hash,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn envelope<T: Serialize>(&self, status: &str, error: Option<&str>, result: Option<&T>) -> Vec<u8> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command: &self.command,
            status,
            library_version: mzlab::VERSION,
            config_hash: &self.config_hash,
            error,
            result,
        };
        let mut s = serde_json::to_vec_pretty(&env).expect("report serializes");
        s.push(b'\n');
        s
    }

    pub fn ok<T: Serialize>(&mut self, name: &str, result: &T) -> std::io::Result<()> {
        let bytes = self.envelope("ok", None, Some(result));
        self.write(name, &bytes)
    }

    /// A finished run whose checks did not hold; the result is kept.
    pub fn failed_with<T: Serialize>(&mut self, name: &str, error: &str, result: &T) -> std::io::Result<()> {
        let bytes = self.envelope("failed", Some(error), Some(result));
        self.write(name, &bytes)
    }

    pub fn failed(&mut self, name: &str, error: &str) -> std::io::Result<()> {
        let bytes = self.envelope::<()>("failed", Some(error), None);
        self.write(name, &bytes)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn text(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        self.write(name, body.as_bytes())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// `{v:?}` keeps full precision for CSV cells.
pub fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}
