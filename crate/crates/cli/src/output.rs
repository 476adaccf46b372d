//! Number formatting, CSV assembly and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// 17 significant digits: enough to round-trip any f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Empty field for an absent value.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self { text: format!("{header}\n") }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
            first = false;
        }
        self.text.push('\n');
    }

    pub fn floats(&mut self, values: &[f64]) {
        self.row(values.iter().map(|v| num(*v)));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Parse a CSV produced by [`Csv`] back into a header and numeric rows.
/// Empty fields read as NaN; `true`/`false` read as 1/0.
pub fn parse_numeric(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV")?.split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|f| match f {
                    "" => Ok(f64::NAN),
                    "true" => Ok(1.0),
                    "false" => Ok(0.0),
                    v => v.parse::<f64>().with_context(|| format!("bad number '{v}'")),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Files written by one invocation, recorded in the manifest.
pub struct RunOutput {
    dir: PathBuf,
    command: String,
    input_hash: String,
    seed: u64,
    started: Instant,
    files: Vec<String>,
}

impl RunOutput {
    /// `input` is the scenario file bytes, or a canonical rendering of the
    /// flags for flag-driven commands.
    pub fn new(dir: &Path, command: &str, input: &[u8], seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            input_hash: sha256_hex(input),
            seed,
            started: Instant::now(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.into());
        Ok(path)
    }

    /// Write the manifest. Wall-clock time makes it the one non-reproducible file.
    pub fn finish(self, manifest_name: &str) -> Result<PathBuf> {
        let mut m = String::new();
        writeln!(m, "tool=selfpowered {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(m, "command={}", self.command)?;
        writeln!(m, "scenario_sha256={}", self.input_hash)?;
        writeln!(m, "seed={}", self.seed)?;
        writeln!(m, "wall_clock_s={:.6}", self.started.elapsed().as_secs_f64())?;
        for f in &self.files {
            writeln!(m, "file={f}")?;
        }
        let path = self.dir.join(manifest_name);
        fs::write(&path, m).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
