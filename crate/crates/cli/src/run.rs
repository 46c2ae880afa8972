//! Run directories and manifests.

use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Config, seed and input digests. Holds no timestamp, so two runs of the
/// same command write the same manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let file = File::open(path).with_context(|| format!("cannot open input {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader
            .read(&mut buf)
            .with_context(|| format!("cannot read input {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Inputs of one command, digested before anything else runs so a missing
/// file fails fast with its path.
#[derive(Debug, Default)]
pub struct Inputs(Vec<InputDigest>);

impl Inputs {
    pub fn add(&mut self, role: &str, path: &Path) -> Result<()> {
        if !path.is_file() {
            bail!("input file not found: {}", path.display());
        }
        self.0.push(InputDigest {
            role: role.to_owned(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }
}

/// A fresh directory `<out>/<UTC timestamp>-seed<N>[-i]`.
pub struct Run {
    pub dir: PathBuf,
}

impl Run {
    pub fn create(command: &str, settings: &Settings, inputs: Inputs) -> Result<Run> {
        let parent = &settings.out;
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        let stem = format!(
            "{}-seed{}",
            chrono::Utc::now().format("%Y%m%dT%H%M%SZ"),
            settings.train.seed
        );
        let dir = (0..)
            .map(|i| match i {
                0 => parent.join(&stem),
                i => parent.join(format!("{stem}-{i}")),
            })
            .find_map(|d| match fs::create_dir(&d) {
                Ok(()) => Some(Ok(d)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => None,
                Err(e) => Some(Err(e).with_context(|| format!("cannot create {}", d.display()))),
            })
            .expect("unbounded suffixes")?;

        let run = Run { dir };
        let config = settings.to_kv();
        run.write("config.kv", config.as_bytes())?;
        let manifest = Manifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: settings.train.seed,
            config,
            inputs: inputs.0,
        };
        run.write("manifest.json", &serde_json::to_vec_pretty(&manifest)?)?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        let mut f = File::create_new(&path).with_context(|| format!("refusing to overwrite {}", path.display()))?;
        f.write_all(bytes).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}
