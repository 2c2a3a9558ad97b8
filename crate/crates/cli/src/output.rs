use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use rshg::optimizer::RunTrace;

use crate::config::Loaded;
use crate::{Common, Failure};

pub fn out_dir(common: &Common, loaded: &Loaded) -> Result<PathBuf, Failure> {
    let dir = match (&common.out, &loaded.config.out) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) if d.is_absolute() => d.clone(),
        (None, Some(d)) => loaded.base.join(d),
        (None, None) => PathBuf::from("out"),
    };
    fs::create_dir_all(&dir).map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn write_trace(dir: &Path, trace: &RunTrace) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let lib = |e: rshg::Error| Failure::Other(e.to_string());
    let mut jsonl = BufWriter::new(File::create(dir.join("trace.jsonl"))?);
    trace.write_jsonl(&mut jsonl).map_err(lib)?;
    jsonl.flush()?;
    let mut csv = BufWriter::new(File::create(dir.join("epochs.csv"))?);
    trace.write_epochs_csv(&mut csv).map_err(lib)?;
    csv.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_sha256: String,
    pub seeds: &'a [u64],
    pub config: &'a crate::config::ExperimentConfig,
}

pub fn write_manifest(dir: &Path, command: &str, loaded: &Loaded) -> Result<(), Failure> {
    let m = Manifest {
        command,
        version: rshg_version(),
        config_sha256: loaded.hash()?,
        seeds: &loaded.config.run.seeds,
        config: &loaded.config,
    };
    write_json(&dir.join("manifest.json"), &m)
}

pub fn rshg_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}
