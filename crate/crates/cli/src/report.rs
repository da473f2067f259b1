//! JSON report envelope, human-readable tables and output-file handling.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const UNITS: &str = "wavelengths in nm, times in ns, rates in rad/ns";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    units: &'static str,
    seed: u64,
    warnings: &'a [String],
    #[serde(flatten)]
    body: &'a T,
}

pub struct Output {
    dir: PathBuf,
    seed: u64,
}

impl Output {
    pub fn new(dir: &Path, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Input(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn report<T: Serialize>(
        &self,
        command: &str,
        warnings: &[String],
        body: &T,
    ) -> Result<PathBuf, CliError> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            units: UNITS,
            seed: self.seed,
            warnings,
            body,
        };
        let mut text = serde_json::to_string_pretty(&env)
            .map_err(|e| CliError::Input(format!("cannot serialise report: {e}")))?;
        text.push('\n');
        self.write(&format!("{command}.json"), text)
    }
}

/// Two-column key/value table for the terminal.
#[derive(Default)]
pub struct Table {
    rows: Vec<(String, String)>,
}

impl Table {
    pub fn row(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.rows.push((key.into(), value.to_string()));
        self
    }

    pub fn print(&self, title: &str, warnings: &[String]) {
        println!("{title}  ({UNITS})");
        let width = self.rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        for (k, v) in &self.rows {
            println!("  {k:<width$}  {v}");
        }
        for w in warnings {
            eprintln!("warning: {w}");
        }
    }
}

pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || (1e-3..1e5).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}
