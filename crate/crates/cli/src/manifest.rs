use std::io::Read;

use serde::Serialize;
use sha2::{Digest, Sha256};

use corners_core::Error;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputHash>,
    pub version: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub exit_code: u8,
}

/// Per-run state shared by the subcommands: inputs read so far and the
/// resolved configuration to report.
#[derive(Debug, Default)]
pub struct Session {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputHash>,
}

impl Session {
    /// Reads a file, or stdin for `-`, and records its hash.
    pub fn read_input(&mut self, path: &str) -> Result<String, Error> {
        let mut bytes = Vec::new();
        if path == "-" {
            std::io::stdin().read_to_end(&mut bytes)?;
        } else {
            bytes = std::fs::read(path).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
        }
        self.inputs.push(InputHash { path: path.to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        String::from_utf8(bytes).map_err(|_| Error::Parse(format!("{path}: not valid UTF-8")))
    }

    pub fn configure(&mut self, subcommand: &str, config: impl Serialize, seeds: Vec<u64>) {
        self.subcommand = subcommand.to_string();
        self.config = serde_json::to_value(config).expect("configs serialize to JSON");
        self.seeds = seeds;
    }
}

/// Writes `text` to `path`, or stdout when `path` is absent or `-`.
pub fn write_output(path: Option<&str>, text: &str) -> Result<(), Error> {
    match path {
        None | Some("-") => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
        Some(p) => Ok(std::fs::write(p, text)?),
    }
}
