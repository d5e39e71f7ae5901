//! Discharge service: answers discharge requests for third-party caveats
//! addressed to its key, issuing short-lived discharges when the caveat's
//! check holds.

use crate::handshake::PeerInfo;
use crate::messages::{DischargeReply, DischargeRequest};
use crate::server::{CallContext, MethodPolicy, Service};
use bless_core::caveat_text::REVOCATION_CHECK;
use bless_core::caveats::{mint_discharge, Caveat, CaveatRegistry, MintError, RequestContext};
use bless_core::clock::Clock;
use bless_core::principal::write_atomic;
use bless_core::SecretKey;
use chrono::Duration;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tracing::warn;

/// Lifetime of issued discharges unless configured otherwise.
pub fn default_lifetime() -> Duration {
    Duration::minutes(5)
}

/// Revoked ids, one per line, re-read on every check so that revocations
/// take effect without restarting the service. Lines starting with `#` are
/// comments.
#[derive(Clone, Debug)]
pub struct RevocationList {
    path: PathBuf,
}

impl RevocationList {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RevocationList { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> io::Result<Vec<String>> {
        match fs::read_to_string(&self.path) {
            Ok(text) => Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }

    /// Unreadable lists count as revoking everything.
    pub fn is_revoked(&self, id: &str) -> bool {
        match self.entries() {
            Ok(ids) => ids.iter().any(|r| r == id),
            Err(e) => {
                warn!(path = %self.path.display(), error = %e, "revocation list unreadable");
                true
            }
        }
    }

    pub fn revoke(&self, id: &str) -> io::Result<()> {
        if id.trim().is_empty() || id.contains('\n') {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "revocation ids are single non-empty lines"));
        }
        let mut text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(id.trim());
        text.push('\n');
        write_atomic(&self.path, text.as_bytes(), false).map_err(io::Error::other)
    }
}

pub struct DischargeService {
    secret: SecretKey,
    clock: Arc<dyn Clock>,
    lifetime: Duration,
    registry: Arc<CaveatRegistry>,
}

impl DischargeService {
    pub fn new(secret: SecretKey, clock: Arc<dyn Clock>) -> Self {
        DischargeService {
            secret,
            clock,
            lifetime: default_lifetime(),
            registry: Arc::new(CaveatRegistry::new()),
        }
    }

    pub fn with_lifetime(mut self, lifetime: Duration) -> Self {
        self.lifetime = lifetime;
        self
    }

    /// Binds the revocation check to `list`.
    pub fn with_revocation(self, list: RevocationList) -> Self {
        self.registry
            .register_fn(REVOCATION_CHECK, move |payload, _| match std::str::from_utf8(payload) {
                Ok(id) => !list.is_revoked(id),
                Err(_) => false,
            })
            .expect("revocation check registered once on a fresh registry");
        self
    }

    /// Registry consulted for the checks this service discharges.
    pub fn registry(&self) -> &CaveatRegistry {
        &self.registry
    }

    /// Answers one request; exposed for callers that are not on the wire.
    pub fn answer(&self, req: &DischargeRequest, con: &RequestContext) -> DischargeReply {
        let not_after = con.timestamp + self.lifetime;
        match mint_discharge(&self.secret, &req.caveat, vec![Caveat::expiry(not_after)], con, &self.registry) {
            Ok(d) => DischargeReply::Issued(d),
            Err(MintError::Refused(d)) => DischargeReply::Refused(d.to_string()),
            Err(e) => DischargeReply::Refused(e.to_string()),
        }
    }
}

impl Service for DischargeService {
    fn policy(&self, _method: &str) -> Option<MethodPolicy> {
        None
    }

    fn call(&self, _ctx: &mut CallContext<'_>, method: &str, _args: &[u8]) -> Result<Vec<u8>, String> {
        Err(format!("no method {method}"))
    }

    fn discharge(&self, peer: &PeerInfo, req: &DischargeRequest) -> DischargeReply {
        let con = RequestContext {
            remote_blessing: peer.blessings.first().cloned(),
            peer_endpoint: peer.endpoint.clone(),
            ..RequestContext::new(self.clock.now())
        };
        self.answer(req, &con)
    }
}
