//! A claimable lock. Out of the box it holds only its manufacturer's
//! blessing. The first caller of `Claim` names it: the lock blesses itself
//! with that name, extends the blessing as `<name>/Key` to the caller, and
//! from then on admits only blessings under its own name.

use crate::identity::{Identity, SharedIdentity, Verifier};
use crate::server::{CallContext, MethodPolicy, Server, ServerConfig, Service};
use bless_core::audit::{read_log, AuditError, AuditLog, AuditRecord};
use bless_core::encoding::{Decoder, Encoder};
use bless_core::pattern::{validate_component, EOB};
use bless_core::principal::{write_atomic, Principal, PrincipalError};
use bless_core::{bless, self_blessing, Acl, BlessingPattern, Decode, DecodeError, Encode, Root};
use chrono::{TimeZone, Utc};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use thiserror::Error;

pub const LOCK_STATE_FILE: &str = "lock_state";
pub const AUDIT_FILE: &str = "audit.log";
pub const MANUFACTURER_LABEL: &str = "manufacturer";
pub const CLAIMED_LABEL: &str = "claimed";
pub const KEY_EXTENSION: &str = "Key";
pub const CLAIM_DISABLED: &str = "CLAIM_DISABLED";

pub const CLAIM: &str = "Claim";
pub const LOCK: &str = "Lock";
pub const UNLOCK: &str = "Unlock";
pub const STATUS: &str = "Status";
pub const AUDIT_LOG: &str = "AuditLog";
pub const ADD_ACL: &str = "AddAcl";

const STATE_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum LockError {
    #[error(transparent)]
    Principal(#[from] PrincipalError),
    #[error("lock state: {0}")]
    Decode(#[from] DecodeError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("lock principal has no {MANUFACTURER_LABEL:?} blessing")]
    NotProvisioned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Physical {
    Locked,
    Unlocked,
}

impl fmt::Display for Physical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Physical::Locked => "locked",
            Physical::Unlocked => "unlocked",
        })
    }
}

fn physical_code(p: Physical) -> u8 {
    match p {
        Physical::Locked => 0,
        Physical::Unlocked => 1,
    }
}

fn physical_from(dec: &mut Decoder<'_>) -> Result<Physical, DecodeError> {
    match dec.u8()? {
        0 => Ok(Physical::Locked),
        1 => Ok(Physical::Unlocked),
        v => Err(DecodeError::invalid(format!("physical state {v}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Claimed {
    pub name: String,
    pub root: Root,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockState {
    pub claimed: Option<Claimed>,
    pub physical: Physical,
    /// Patterns the owner added to the Lock/Unlock ACL.
    pub extra_allow: Vec<BlessingPattern>,
}

impl Default for LockState {
    fn default() -> Self {
        LockState {
            claimed: None,
            physical: Physical::Locked,
            extra_allow: Vec::new(),
        }
    }
}

impl Encode for LockState {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(STATE_VERSION);
        match &self.claimed {
            None => enc.u8(0),
            Some(c) => enc.u8(1).text(&c.name).nested(&c.root),
        };
        let extra: Vec<String> = self.extra_allow.iter().map(ToString::to_string).collect();
        enc.u8(physical_code(self.physical)).text_list(&extra);
    }
}

impl Decode for LockState {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let v = dec.u8()?;
        if v != STATE_VERSION {
            return Err(DecodeError::invalid(format!("lock state version {v}")));
        }
        let claimed = match dec.u8()? {
            0 => None,
            1 => Some(Claimed {
                name: dec.text()?,
                root: dec.nested()?,
            }),
            f => return Err(DecodeError::invalid(format!("claim flag {f}"))),
        };
        let physical = physical_from(dec)?;
        let extra_allow = dec
            .text_list()?
            .iter()
            .map(|t| t.parse().map_err(|e: bless_core::pattern::NameError| DecodeError::invalid(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(LockState {
            claimed,
            physical,
            extra_allow,
        })
    }
}

/// Reply to `Status`, `Lock` and `Unlock`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockStatus {
    pub name: Option<String>,
    pub physical: Physical,
}

impl Encode for LockStatus {
    fn encode(&self, enc: &mut Encoder) {
        match &self.name {
            None => enc.u8(0),
            Some(n) => enc.u8(1).text(n),
        };
        enc.u8(physical_code(self.physical));
    }
}

impl Decode for LockStatus {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let name = match dec.u8()? {
            0 => None,
            1 => Some(dec.text()?),
            f => return Err(DecodeError::invalid(format!("claim flag {f}"))),
        };
        Ok(LockStatus {
            name,
            physical: physical_from(dec)?,
        })
    }
}

impl fmt::Display for LockStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            None => write!(f, "unclaimed {}", self.physical),
            Some(n) => write!(f, "claimed as {n}, {}", self.physical),
        }
    }
}

/// Arguments of `AddAcl`: a pattern to allow on Lock/Unlock, and optionally
/// a root the lock should start recognizing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AddAclArgs {
    pub pattern: BlessingPattern,
    pub root: Option<Root>,
}

impl Encode for AddAclArgs {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(&self.pattern.to_string());
        match &self.root {
            None => enc.u8(0),
            Some(r) => enc.u8(1).nested(r),
        };
    }
}

impl Decode for AddAclArgs {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let pattern = dec
            .text()?
            .parse()
            .map_err(|e: bless_core::pattern::NameError| DecodeError::invalid(e.to_string()))?;
        let root = match dec.u8()? {
            0 => None,
            1 => Some(dec.nested()?),
            f => return Err(DecodeError::invalid(format!("root flag {f}"))),
        };
        Ok(AddAclArgs { pattern, root })
    }
}

pub fn audit_since_args(since: chrono::DateTime<Utc>) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.i64(since.timestamp_millis());
    enc.finish()
}

pub fn decode_audit_reply(body: &[u8]) -> Result<Vec<AuditRecord>, DecodeError> {
    let mut dec = Decoder::new(body);
    let records = dec.list()?;
    dec.finish()?;
    Ok(records)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LockError + '_ {
    move |source| LockError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_state(dir: &Path) -> Result<LockState, LockError> {
    let path = dir.join(LOCK_STATE_FILE);
    match fs::read(&path) {
        Ok(bytes) => Ok(LockState::from_canonical_bytes(&bytes)?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(LockState::default()),
        Err(e) => Err(io_err(&path)(e)),
    }
}

fn save_state(dir: &Path, state: &LockState) -> Result<(), LockError> {
    write_atomic(&dir.join(LOCK_STATE_FILE), &state.to_canonical_bytes(), false)?;
    Ok(())
}

/// Returns the lock in `dir` to its out-of-box state: the claimed identity,
/// its root, the lock state and the audit log are discarded.
pub fn factory_reset(dir: &Path) -> Result<(), LockError> {
    let state = load_state(dir)?;
    let mut p = Principal::open(dir)?;
    p.update(|p| {
        p.store.remove_label(CLAIMED_LABEL);
        let manufacturer = p.store.by_label(MANUFACTURER_LABEL).map(|e| e.blessing.clone());
        p.store.set_default(manufacturer)?;
        if let Some(c) = &state.claimed {
            p.roots.remove(&c.root);
        }
        Ok(())
    })?;
    for f in [LOCK_STATE_FILE, AUDIT_FILE] {
        let path = dir.join(f);
        match fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&path)(e)),
        }
    }
    Ok(())
}

pub struct LockService {
    dir: PathBuf,
    identity: SharedIdentity,
    state: Mutex<LockState>,
    hook: Option<String>,
}

impl LockService {
    /// Opens the lock whose principal lives in `dir`. The principal must
    /// carry a blessing labelled [`MANUFACTURER_LABEL`].
    pub fn open(dir: &Path, identity: SharedIdentity, hook: Option<String>) -> Result<Self, LockError> {
        if identity.get().store.by_label(MANUFACTURER_LABEL).is_none() {
            return Err(LockError::NotProvisioned);
        }
        Ok(LockService {
            dir: dir.to_path_buf(),
            identity,
            state: Mutex::new(load_state(dir)?),
            hook,
        })
    }

    pub fn audit_path(&self) -> PathBuf {
        self.dir.join(AUDIT_FILE)
    }

    pub fn state(&self) -> LockState {
        self.state.lock().unwrap().clone()
    }

    fn status(state: &LockState) -> LockStatus {
        LockStatus {
            name: state.claimed.as_ref().map(|c| c.name.clone()),
            physical: state.physical,
        }
    }

    fn refresh_identity(&self, p: Principal) {
        self.identity.set(Identity::from_principal(p));
    }

    fn claim(&self, ctx: &mut CallContext<'_>, args: &[u8]) -> Result<Vec<u8>, String> {
        let mut state = self.state.lock().unwrap();
        if state.claimed.is_some() {
            return Err(CLAIM_DISABLED.to_string());
        }
        let name = std::str::from_utf8(args).map_err(|_| "name is not UTF-8".to_string())?;
        validate_component(name).map_err(|e| format!("invalid name: {e}"))?;
        let mut p = Principal::open(&self.dir).map_err(|e| e.to_string())?;
        let own = self_blessing(&p.keys, name).map_err(|e| e.to_string())?;
        let key = bless(&ctx.peer.public_key, &p.keys.secret, &own, KEY_EXTENSION, vec![]).map_err(|e| e.to_string())?;
        let root = own.root();
        let lock_key = p.keys.public;
        p.update(|p| {
            let kept: Vec<Root> = p.roots.iter().filter(|r| r.public_key == lock_key).cloned().collect();
            p.roots = kept.into_iter().collect();
            p.roots.add(root.clone());
            p.store.add(own.clone(), BlessingPattern::universal(), CLAIMED_LABEL, ctx.request.timestamp)?;
            p.store.set_default(Some(own.clone()))?;
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        let next = LockState {
            claimed: Some(Claimed {
                name: name.to_string(),
                root,
            }),
            ..state.clone()
        };
        save_state(&self.dir, &next).map_err(|e| e.to_string())?;
        *state = next;
        self.refresh_identity(p);
        let hint: BlessingPattern = name.parse().map_err(|e: bless_core::pattern::NameError| e.to_string())?;
        let granted = key.full_name();
        ctx.grant(key, hint).map_err(|e| e.to_string())?;
        Ok(granted.into_bytes())
    }

    fn set_physical(&self, to: Physical) -> Result<Vec<u8>, String> {
        let mut state = self.state.lock().unwrap();
        if let Some(hook) = &self.hook {
            let status = Command::new("sh")
                .arg("-c")
                .arg(hook)
                .arg("vbless-hook")
                .arg(to.to_string())
                .env("VBLESS_LOCK_STATE", to.to_string())
                .status()
                .map_err(|e| format!("actuator hook: {e}"))?;
            if !status.success() {
                return Err(format!("actuator hook failed: {status}"));
            }
        }
        let next = LockState {
            physical: to,
            ..state.clone()
        };
        save_state(&self.dir, &next).map_err(|e| e.to_string())?;
        *state = next;
        Ok(Self::status(&state).to_canonical_bytes())
    }

    fn audit_log(&self, args: &[u8]) -> Result<Vec<u8>, String> {
        let mut dec = Decoder::new(args);
        let since = dec.i64().and_then(|v| dec.finish().map(|_| v)).map_err(|e| e.to_string())?;
        let since = Utc
            .timestamp_millis_opt(since)
            .single()
            .ok_or_else(|| "time out of range".to_string())?;
        let records: Vec<AuditRecord> = match read_log(&self.audit_path()) {
            Ok(r) => r.into_iter().filter(|r| r.time >= since).collect(),
            Err(AuditError::Io { source, .. }) if source.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.to_string()),
        };
        let mut enc = Encoder::new();
        enc.list(&records);
        Ok(enc.finish())
    }

    fn add_acl(&self, args: &[u8]) -> Result<Vec<u8>, String> {
        let args = AddAclArgs::from_canonical_bytes(args).map_err(|e| e.to_string())?;
        let mut state = self.state.lock().unwrap();
        if let Some(root) = &args.root {
            let mut p = Principal::open(&self.dir).map_err(|e| e.to_string())?;
            p.update(|p| Ok(p.roots.add(root.clone()))).map_err(|e| e.to_string())?;
            self.refresh_identity(p);
        }
        let mut next = state.clone();
        if !next.extra_allow.contains(&args.pattern) {
            next.extra_allow.push(args.pattern);
        }
        save_state(&self.dir, &next).map_err(|e| e.to_string())?;
        *state = next;
        Ok(Vec::new())
    }
}

/// Binds a lock server for the principal in `dir`. Connections are admitted
/// without a handshake policy so that every attempt reaches the audit log.
pub fn bind_lock(dir: &Path, addr: &str, verifier: Verifier, hook: Option<String>) -> Result<Server, LockError> {
    let identity = SharedIdentity::new(Identity::from_principal(Principal::open(dir)?));
    let service = LockService::open(dir, identity.clone(), hook)?;
    let mut config = ServerConfig::new(identity, verifier);
    config.audit = Some(Arc::new(AuditLog::open(&service.audit_path())?));
    let path = dir.to_path_buf();
    Server::bind(addr, config, Arc::new(service)).map_err(|source| LockError::Io { path, source })
}

impl Service for LockService {
    fn policy(&self, method: &str) -> Option<MethodPolicy> {
        let state = self.state.lock().unwrap();
        let owner = state.claimed.as_ref().map(|c| c.name.clone());
        let named = |extra: &[BlessingPattern]| {
            owner.as_ref().map(|n| {
                let mut allow = vec![n.parse::<BlessingPattern>().expect("claimed names are valid patterns")];
                allow.extend(extra.iter().cloned());
                MethodPolicy::Acl(Acl::allow_only(allow))
            })
        };
        match method {
            CLAIM | STATUS => Some(MethodPolicy::Open),
            LOCK | UNLOCK => named(&state.extra_allow),
            AUDIT_LOG => named(&[]),
            ADD_ACL => owner.map(|n| {
                let exact: BlessingPattern = format!("{n}/{KEY_EXTENSION}/{EOB}").parse().expect("valid owner pattern");
                MethodPolicy::Acl(Acl::allow_only(vec![exact]))
            }),
            _ => None,
        }
    }

    fn call(&self, ctx: &mut CallContext<'_>, method: &str, args: &[u8]) -> Result<Vec<u8>, String> {
        match method {
            CLAIM => self.claim(ctx, args),
            LOCK => self.set_physical(Physical::Locked),
            UNLOCK => self.set_physical(Physical::Unlocked),
            STATUS => Ok(Self::status(&self.state.lock().unwrap()).to_canonical_bytes()),
            AUDIT_LOG => self.audit_log(args),
            ADD_ACL => self.add_acl(args),
            other => Err(format!("no method {other}")),
        }
    }
}
