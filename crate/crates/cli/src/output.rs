//! Output directories with a run manifest, and CSV formatting.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// `printf("%.17g")` for one value.
pub fn fmt_g(v: f64) -> String {
    const P: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-separated text with a header row.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    /// One row; `None` leaves the cell empty.
    pub fn row(&mut self, cells: &[Option<f64>]) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(|c| c.map(fmt_g).unwrap_or_default()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    /// One row of preformatted cells.
    pub fn raw(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

/// Record of one command run in an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub scene_digest: String,
    pub outputs: Vec<OutputEntry>,
    pub complete: bool,
    pub exit_code: Option<i32>,
}

/// An output directory being filled by one command.
pub struct OutDir {
    dir: PathBuf,
    manifest: RunManifest,
    /// Outputs carried over from an earlier run with the same configuration.
    reusable: Vec<OutputEntry>,
}

/// What opening an output directory found.
pub enum Opened {
    Fresh(Box<OutDir>),
    /// A finished run with identical configuration and intact outputs.
    UpToDate(i32),
}

impl OutDir {
    pub fn open(
        dir: &Path,
        command: &str,
        config_hash: String,
        scene_digest: String,
        resume: bool,
    ) -> Result<Opened, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut reusable = Vec::new();
        if resume {
            if let Some(old) = read_manifest(dir) {
                if old.config_hash == config_hash {
                    let intact: Vec<OutputEntry> = old
                        .outputs
                        .iter()
                        .filter(|o| file_digest(&dir.join(&o.file)).as_deref() == Some(&o.sha256))
                        .cloned()
                        .collect();
                    if old.complete && intact.len() == old.outputs.len() {
                        if let Some(code) = old.exit_code {
                            return Ok(Opened::UpToDate(code));
                        }
                    }
                    reusable = intact;
                }
            }
        }
        let manifest = RunManifest {
            tool: "nonholo".into(),
            version: crate::VERSION.into(),
            command: command.into(),
            config_hash,
            scene_digest,
            outputs: reusable.clone(),
            complete: false,
            exit_code: None,
        };
        let out = OutDir { dir: dir.to_path_buf(), manifest, reusable };
        out.save()?;
        Ok(Opened::Fresh(Box::new(out)))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Whether `name` survives intact from an earlier run of this configuration.
    pub fn done(&self, name: &str) -> bool {
        self.reusable.iter().any(|o| o.file == name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        let entry = OutputEntry { file: name.into(), sha256: sha256_hex(bytes) };
        match self.manifest.outputs.iter_mut().find(|o| o.file == name) {
            Some(o) => *o = entry,
            None => self.manifest.outputs.push(entry),
        }
        self.save()
    }

    pub fn finish(mut self, exit_code: i32) -> Result<i32, CliError> {
        self.manifest.complete = true;
        self.manifest.exit_code = Some(exit_code);
        self.save()?;
        Ok(exit_code)
    }

    fn save(&self) -> Result<(), CliError> {
        let path = self.path(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

fn read_manifest(dir: &Path) -> Option<RunManifest> {
    serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST)).ok()?).ok()
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e: io::Error| CliError::io(path, e))
}
