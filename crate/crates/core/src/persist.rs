//! Crash-safe checkpoints.
//!
//! File layout: a header line `HOPPER-CKPT <version>` followed by one
//! canonical JSON document holding the [`Checkpoint`]. Floats are written
//! in shortest round-trip form and the RNG position as a decimal string,
//! so a reload is bit-exact. Writes go to a temporary file in the target
//! directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Best, Budget, Direction, EvaluationRecord, ScheduleState};
use crate::pruning::QuantilePruner;
use crate::sampling::RngState;
use crate::space::{Candidate, SearchSpace};

pub const MAGIC: &str = "HOPPER-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const EXTENSION: &str = "ckpt";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a checkpoint file (missing {MAGIC} header)", path.display())]
    NotACheckpoint { path: PathBuf },
    #[error("{}: unsupported checkpoint version {found} (expected {expected})", path.display())]
    Version {
        path: PathBuf,
        found: String,
        expected: u32,
    },
    #[error("{}: malformed checkpoint: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(
        "checkpoint was written for a different search space (space digest {expected}, checkpoint digest {found})"
    )]
    DigestMismatch { expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub space_digest: String,
    pub direction: Direction,
    pub budget: Budget,
    pub schedule: ScheduleState,
    pub rng_state: RngState,
    pub best: Option<Best>,
    pub history: Vec<EvaluationRecord>,
    /// Queued candidates not yet evaluated.
    pub queue: Vec<Candidate>,
    pub next_id: u64,
    #[serde(default)]
    pub pruner: Option<QuantilePruner>,
    pub created_at: DateTime<Utc>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{MAGIC} {}\n", self.version).into_bytes();
        serde_json::to_writer(&mut out, self).expect("checkpoint serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, PersistError> {
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
        let header = std::str::from_utf8(&bytes[..newline]).unwrap_or("");
        let version = header
            .strip_prefix(MAGIC)
            .filter(|rest| rest.starts_with(' '))
            .map(str::trim)
            .ok_or_else(|| PersistError::NotACheckpoint {
                path: path.to_path_buf(),
            })?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(PersistError::Version {
                path: path.to_path_buf(),
                found: version.to_string(),
                expected: CHECKPOINT_VERSION,
            });
        }
        let body = bytes.get(newline + 1..).unwrap_or(&[]);
        let ckpt: Checkpoint = serde_json::from_slice(body).map_err(|source| PersistError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(PersistError::Version {
                path: path.to_path_buf(),
                found: ckpt.version.to_string(),
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(ckpt)
    }
}

/// Atomically replaces `path` with the serialized checkpoint.
pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), PersistError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".hopper-ckpt-")
        .tempfile_in(dir)
        .map_err(io_err(path))?;
    tmp.write_all(&ckpt.to_bytes()).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| PersistError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes, path)
}

#[derive(Debug)]
pub enum Attach {
    /// Start a new search; progress goes to `path` from the first flush on.
    Fresh {
        path: PathBuf,
    },
    Resumed {
        path: PathBuf,
        checkpoint: Box<Checkpoint>,
    },
}

fn is_dir_like(path: &Path) -> bool {
    path.is_dir()
        || path
            .to_str()
            .is_some_and(|s| s.ends_with('/') || s.ends_with(std::path::MAIN_SEPARATOR))
}

fn new_checkpoint_path(dir: &Path) -> PathBuf {
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
    let mut candidate = dir.join(format!("{stamp}.{EXTENSION}"));
    let mut n = 1;
    while candidate.exists() {
        candidate = dir.join(format!("{stamp}-{n}.{EXTENSION}"));
        n += 1;
    }
    candidate
}

/// Decides whether to resume. An existing file is loaded (and must match
/// `space`), a missing file starts fresh, and a directory gets a new
/// timestamped checkpoint file.
pub fn attach(path: &Path, space: &SearchSpace) -> Result<Attach, PersistError> {
    if is_dir_like(path) {
        fs::create_dir_all(path).map_err(io_err(path))?;
        return Ok(Attach::Fresh {
            path: new_checkpoint_path(path),
        });
    }
    if !path.exists() {
        return Ok(Attach::Fresh {
            path: path.to_path_buf(),
        });
    }
    let checkpoint = load(path)?;
    let digest = space.digest();
    if checkpoint.space_digest != digest {
        return Err(PersistError::DigestMismatch {
            expected: digest,
            found: checkpoint.space_digest,
        });
    }
    Ok(Attach::Resumed {
        path: path.to_path_buf(),
        checkpoint: Box::new(checkpoint),
    })
}

/// Writes a checkpoint after every settled evaluation.
#[derive(Debug)]
pub struct Autosaver {
    path: PathBuf,
    flushes: u64,
}

impl Autosaver {
    pub fn new(path: PathBuf) -> Self {
        Self { path, flushes: 0 }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn flushes(&self) -> u64 {
        self.flushes
    }

    /// Saves, retrying once on failure.
    pub fn flush(&mut self, ckpt: &Checkpoint) -> Result<(), PersistError> {
        if let Err(first) = save(ckpt, &self.path) {
            warn!("checkpoint write failed, retrying: {first}");
            save(ckpt, &self.path)?;
        }
        self.flushes += 1;
        Ok(())
    }
}
