//! Append-only audit log of authorization decisions.
//!
//! One record per line: unpadded base64url of the record's canonical
//! encoding. Appends are serialized through a mutex and flushed per record.

use crate::encoding::{Decode, DecodeError, Decoder, Encode, Encoder};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use chrono::{DateTime, TimeZone, Utc};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Allowed,
    /// A recognized blessing was presented but its caveats did not hold.
    DeniedCaveat,
    /// Valid blessings were presented but none satisfied the ACL.
    DeniedAcl,
    /// No presented blessing had a recognized root and a valid chain.
    DeniedUnrecognized,
}

impl Decision {
    pub fn code(self) -> u8 {
        match self {
            Decision::Allowed => 0,
            Decision::DeniedCaveat => 1,
            Decision::DeniedAcl => 2,
            Decision::DeniedUnrecognized => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Decision::Allowed,
            1 => Decision::DeniedCaveat,
            2 => Decision::DeniedAcl,
            3 => Decision::DeniedUnrecognized,
            _ => return None,
        })
    }

    pub fn is_allowed(self) -> bool {
        self == Decision::Allowed
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Allowed => "Allowed",
            Decision::DeniedCaveat => "DeniedCaveat",
            Decision::DeniedAcl => "DeniedACL",
            Decision::DeniedUnrecognized => "DeniedUnrecognized",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AuditRecord {
    pub time: DateTime<Utc>,
    pub method: String,
    /// Full names of every blessing the caller presented, valid or not.
    pub peer_names: Vec<String>,
    pub decision: Decision,
}

impl Encode for AuditRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.i64(self.time.timestamp_millis())
            .text(&self.method)
            .text_list(&self.peer_names)
            .u8(self.decision.code());
    }
}

impl Decode for AuditRecord {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let millis = dec.i64()?;
        let time = Utc
            .timestamp_millis_opt(millis)
            .single()
            .ok_or_else(|| DecodeError::invalid("time out of range"))?;
        let method = dec.text()?;
        let peer_names = dec.text_list()?;
        let code = dec.u8()?;
        let decision = Decision::from_code(code).ok_or_else(|| DecodeError::invalid(format!("bad decision {code}")))?;
        Ok(AuditRecord {
            time,
            method,
            peer_names,
            decision,
        })
    }
}

impl AuditRecord {
    pub fn to_line(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.to_canonical_bytes())
    }

    pub fn from_line(line: &str) -> Result<Self, AuditError> {
        let raw = URL_SAFE_NO_PAD
            .decode(line.trim())
            .map_err(|e| AuditError::Base64(e.to_string()))?;
        Ok(AuditRecord::from_canonical_bytes(&raw)?)
    }
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = if self.peer_names.is_empty() {
            "-".to_string()
        } else {
            self.peer_names.join(",")
        };
        write!(
            f,
            "{} {} {} {}",
            self.time.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            self.method,
            names,
            self.decision
        )
    }
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid base64 record: {0}")]
    Base64(String),
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<AuditError> },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Appender for one log file.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| AuditError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(AuditLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &AuditRecord) -> Result<(), AuditError> {
        let mut line = record.to_line();
        line.push('\n');
        let mut f = self.file.lock().unwrap();
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|source| AuditError::Io {
                path: self.path.clone(),
                source,
            })
    }

    /// All records with `time >= since`, in file order.
    pub fn read_since(&self, since: DateTime<Utc>) -> Result<Vec<AuditRecord>, AuditError> {
        let _guard = self.file.lock().unwrap();
        Ok(read_log(&self.path)?
            .into_iter()
            .filter(|r| r.time >= since)
            .collect())
    }
}

/// Reads every record of a log file. A missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<AuditRecord>, AuditError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(AuditError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| AuditError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(AuditRecord::from_line(&line).map_err(|e| AuditError::Line {
            line: i + 1,
            source: Box::new(e),
        })?);
    }
    Ok(out)
}
