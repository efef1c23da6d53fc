//! Output directory bookkeeping and the per-run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use busnet::SimConfig;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    result: &'a T,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    parameters: &'a Value,
    config: &'a SimConfig,
    config_hash: &'a str,
    seed: u64,
    inputs: &'a BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    timestamp_unix: u64,
}

/// One invocation: where results go, what was read and what was written.
pub struct Run {
    out: PathBuf,
    config: SimConfig,
    command: String,
    parameters: Value,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(out: &Path, config: &SimConfig) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
        let mut run = Run {
            out: out.to_path_buf(),
            config: config.clone(),
            command: String::new(),
            parameters: Value::Null,
            config_hash: String::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        };
        run.rehash();
        Ok(run)
    }

    fn rehash(&mut self) {
        let canon = json!({ "command": self.command, "parameters": self.parameters, "config": self.config });
        self.config_hash = sha256_hex(canon.to_string().as_bytes());
    }

    pub fn set_command(&mut self, command: &str, parameters: Value) {
        self.command = command.to_string();
        self.parameters = parameters;
        self.rehash();
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn output(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    fn write_text(&mut self, name: &str, mut text: String) -> Result<(), CliError> {
        text.push('\n');
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.output(name);
        Ok(())
    }

    /// Writes `value` as JSON with the config hash and seed added.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let stamped = Stamped { config_hash: &self.config_hash, seed: self.config.rng_seed, result: value };
        let text = serde_json::to_string_pretty(&stamped).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write_text(name, text)
    }

    pub fn plain_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write_text(name, text)
    }

    /// Appends `config_hash` and `seed` columns to a CSV already written
    /// under the output directory. The files written this way hold only
    /// numbers and plain identifiers, so rows never span lines.
    pub fn stamp_csv(&mut self, name: &str) -> Result<(), CliError> {
        let p = self.path(name);
        let text = fs::read_to_string(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        let mut out = String::with_capacity(text.len() + 96 * text.lines().count());
        for (i, line) in text.lines().enumerate() {
            out.push_str(line);
            if i == 0 {
                out.push_str(",config_hash,seed\n");
            } else {
                out.push_str(&format!(",{},{}\n", self.config_hash, self.config.rng_seed));
            }
        }
        fs::write(&p, out).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.output(name);
        Ok(())
    }

    /// Writes manifest.json and lists the result files on standard output.
    pub fn finish(self) -> Result<(), CliError> {
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), file_digest(&self.path(name))?);
        }
        let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            parameters: &self.parameters,
            config: &self.config,
            config_hash: &self.config_hash,
            seed: self.config.rng_seed,
            inputs: &self.inputs,
            outputs,
            timestamp_unix,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
        let p = self.path("manifest.json");
        fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        for name in &self.outputs {
            println!("{}", self.path(name).display());
        }
        println!("{}", p.display());
        Ok(())
    }
}
