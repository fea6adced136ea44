//! Canonical, reproducible output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use poisson_clt::seed::SEED_POLICY;
use poisson_clt::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "PCLT_OUT_DIR";

/// Canonical JSON: object keys sorted, floats in shortest round-trip form.
pub fn canonical<T: Serialize>(v: &T) -> Result<String> {
    let value: Value = serde_json::to_value(v)?;
    Ok(serde_json::to_string_pretty(&value)?)
}

/// SHA-256 of the canonical compact JSON of the recorded configuration.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let value: Value = serde_json::to_value(config.recorded())?;
    let digest = Sha256::digest(serde_json::to_string(&value)?.as_bytes());
    Ok(format!("{digest:x}"))
}

pub struct Sink {
    pub dir: PathBuf,
    pub config_hash: String,
    pub subcommand: &'static str,
    pub config: ExperimentConfig,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config_hash: &'a str,
    seed_policy: &'static str,
    config: ExperimentConfig,
    result: &'a T,
}

impl Sink {
    pub fn new(dir: PathBuf, subcommand: &'static str, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            config_hash: config_hash(config)?,
            subcommand,
            config: config.recorded(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_report<T: Serialize>(&self, result: &T) -> Result<PathBuf> {
        let env = Envelope {
            tool: "pclt",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config_hash: &self.config_hash,
            seed_policy: SEED_POLICY,
            config: self.config.clone(),
            result,
        };
        let path = self.path("report.json");
        let mut text = canonical(&env)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    /// CSV with a two-line `#` header carrying the config hash and seed policy.
    pub fn write_csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
        self.write_csv_preamble(&mut f)?;
        writeln!(f, "{header}")?;
        for r in rows {
            writeln!(f, "{}", r.join(","))?;
        }
        f.flush()?;
        Ok(path)
    }

    pub fn write_csv_preamble<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# config_hash: {}", self.config_hash)?;
        writeln!(w, "# seed_policy: {SEED_POLICY}")?;
        Ok(())
    }
}

/// Shortest round-trip decimal, as in the JSON files; empty for
/// non-finite values.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).unwrap_or_default()
    } else {
        String::new()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(p) = std::env::var(OUT_DIR_ENV) {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    config
        .output_dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("pclt-out"))
}
