//! Output directory: CSV tables, plot data, summary and metadata.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::ExperimentConfig;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// A table of string cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Numbers are written in shortest round-trip form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), num)
}

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
    summary: String,
}

impl Output {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), summary: String::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> io::Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.files.push(name.into());
        Ok(())
    }

    /// Whitespace-separated columns with a one-line `#` header.
    pub fn plotdata(&mut self, name: &str, table: &Table) -> io::Result<()> {
        let mut text = format!("# {}\n", table.header.join(" "));
        for row in &table.rows {
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.into());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> io::Result<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.files.push(name.into());
        Ok(())
    }

    pub fn line(&mut self, text: impl AsRef<str>) {
        self.summary.push_str(text.as_ref());
        self.summary.push('\n');
    }

    /// Write `config.txt`, `metadata.json` and `summary.txt`.
    pub fn finish(mut self, config: &ExperimentConfig, status: &str) -> io::Result<()> {
        fs::write(self.dir.join("config.txt"), config.echo())?;
        let mut head = String::new();
        writeln!(head, "{VERSION}").unwrap();
        writeln!(head, "kind: {}", config.kind).unwrap();
        writeln!(head, "seed: {}", config.seed).unwrap();
        writeln!(head, "status: {status}").unwrap();
        if config.defaults.is_empty() {
            writeln!(head, "defaults applied: none").unwrap();
        } else {
            writeln!(head, "defaults applied:").unwrap();
            for k in &config.defaults {
                writeln!(head, "  {k} = {}", config.entries[k]).unwrap();
            }
        }
        head.push('\n');
        fs::write(self.dir.join("summary.txt"), head + &self.summary)?;
        self.files.sort();
        let meta = json!({
            "version": VERSION,
            "kind": config.kind.name(),
            "seed": config.seed,
            "status": status,
            "config": config.entries,
            "defaults_applied": config.defaults,
            "files": self.files,
            "rerun": "resonance --config config.txt --out <dir>",
        });
        fs::write(self.dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}
