use crate::failure::{Classify, CliResult, ExitKind};
use anyhow::Context;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Directory receiving a run's output files.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating {}", root.display()))
            .kind(ExitKind::Io)?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        std::fs::write(&p, text)
            .with_context(|| format!("writing {}", p.display()))
            .kind(ExitKind::Io)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).kind(ExitKind::Compute)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let p = self.path(name);
        let write = || -> anyhow::Result<()> {
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        };
        write()
            .with_context(|| format!("writing {}", p.display()))
            .kind(ExitKind::Io)
    }

    /// Writes `run.json` describing the command and every effective
    /// setting, defaults included, and logs the same content.
    pub fn manifest<T: Serialize>(&self, command: &str, settings: &T) -> CliResult<()> {
        let manifest = Manifest {
            tool: "epx",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed_derivation: SEED_DERIVATION,
            settings,
        };
        log::info!(
            "{command}: {}",
            serde_json::to_string(&manifest.settings).kind(ExitKind::Compute)?
        );
        self.write_json("run.json", &manifest)
    }
}

const SEED_DERIVATION: &str =
    "child = splitmix64(seed ^ rotl(splitmix64(index), 17)); streams are ChaCha8";

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed_derivation: &'static str,
    settings: &'a T,
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Header and raw fields of a CSV file.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Table> {
        let read = || -> anyhow::Result<Table> {
            let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
            let header = r.headers()?.iter().map(String::from).collect();
            let rows = r
                .records()
                .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
                .collect::<Result<_, _>>()?;
            Ok(Table { header, rows })
        };
        read()
            .with_context(|| format!("reading {}", path.display()))
            .kind(ExitKind::Data)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses column `j` as numbers, naming the first bad cell on failure.
    pub fn numeric(&self, j: usize) -> Result<Vec<f64>, String> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[j].parse::<f64>().map_err(|_| {
                    format!("row {}, column `{}`: `{}` is not a number", r + 1, self.header[j], row[j])
                })
            })
            .collect()
    }
}
