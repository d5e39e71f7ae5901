//! Connecting side: handshake, calls, discharge fetching and caching.

use crate::error::NetError;
use crate::handshake::{ClientHandshake, ClientSession, PeerInfo};
use crate::identity::{Identity, Verifier};
use crate::messages::{Call, Close, CloseCode, DischargeReply, DischargeRequest, Grant, GroupResult, Message, Reply, ReplyStatus};
use crate::network::Network;
use crate::server::PHASE_TIMEOUT;
use bless_core::caveats::{third_party_caveats, Caveat, Discharge, ThirdPartyCaveat, MAX_DISCHARGE_DEPTH};
use bless_core::groups::RemainderQuery;
use bless_core::{Acl, Blessing, Digest, PublicKey};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tracing::warn;

#[derive(Clone)]
pub struct ClientOptions {
    pub verifier: Verifier,
    /// Names the server must present; `None` accepts any server.
    pub policy: Option<Acl>,
    pub expected_key: Option<PublicKey>,
    /// Bound on each handshake phase and each call.
    pub timeout: Duration,
    pub fetcher: Option<Arc<DischargeFetcher>>,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            verifier: Verifier::default(),
            policy: None,
            expected_key: None,
            timeout: PHASE_TIMEOUT,
            fetcher: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallOutcome {
    pub body: Vec<u8>,
    /// Blessings the server handed over while serving the call.
    pub grants: Vec<Grant>,
}

pub struct Client {
    session: ClientSession,
    own_key: PublicKey,
    next_id: u32,
}

impl Client {
    pub fn connect(net: &dyn Network, endpoint: &str, identity: &Identity, opts: &ClientOptions) -> Result<Self, NetError> {
        let stream = net.connect(endpoint, opts.timeout)?;
        stream.set_read_timeout(Some(opts.timeout))?;
        stream.set_write_timeout(Some(opts.timeout))?;
        let hs = ClientHandshake {
            identity,
            verifier: &opts.verifier,
            policy: opts.policy.as_ref(),
            expected_key: opts.expected_key.as_ref(),
            endpoint,
        };
        let session = hs.run(stream, |chosen| match &opts.fetcher {
            Some(f) => f.fetch_for(chosen, identity),
            None => Vec::new(),
        })?;
        Ok(Client {
            session,
            own_key: identity.keys.public,
            next_id: 1,
        })
    }

    pub fn server(&self) -> &PeerInfo {
        &self.session.server
    }

    /// Names the server accepted for this client at connection time.
    pub fn accepted_names(&self) -> &[String] {
        &self.session.accepted_names
    }

    pub fn call(&mut self, method: &str, args: &[u8]) -> Result<CallOutcome, NetError> {
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1).max(1);
        self.session.channel.send(&Message::Call(Call {
            id,
            method: method.to_string(),
            args: args.to_vec(),
        }))?;
        let mut grants = Vec::new();
        loop {
            match self.recv()? {
                Message::Grant(g) => {
                    if g.blessing.bound_key() != &self.own_key || !g.blessing.verify_certs() {
                        return Err(NetError::BadGrant(format!(
                            "granted blessing {} is not a valid blessing for this client",
                            g.blessing.full_name()
                        )));
                    }
                    grants.push(g);
                }
                Message::Reply(Reply { id: rid, status, body }) if rid == id => {
                    return match status {
                        ReplyStatus::Ok => Ok(CallOutcome { body, grants }),
                        ReplyStatus::AccessDenied => Err(NetError::AccessDenied),
                        ReplyStatus::ApplicationError => Err(NetError::Application(String::from_utf8_lossy(&body).into_owned())),
                    };
                }
                other => return Err(NetError::Protocol(format!("unexpected {} awaiting reply", other.kind()))),
            }
        }
    }

    pub fn request_discharge(&mut self, caveat: &ThirdPartyCaveat) -> Result<Discharge, NetError> {
        self.session.channel.send(&Message::DischargeRequest(DischargeRequest { caveat: caveat.clone() }))?;
        match self.recv()? {
            Message::DischargeReply(DischargeReply::Issued(d)) => Ok(d),
            Message::DischargeReply(DischargeReply::Refused(why)) => Err(NetError::Refused(why)),
            other => Err(NetError::Protocol(format!("unexpected {} awaiting discharge", other.kind()))),
        }
    }

    pub fn group_query(&mut self, query: &RemainderQuery) -> Result<GroupResult, NetError> {
        self.session.channel.send(&Message::GroupQuery(query.clone()))?;
        match self.recv()? {
            Message::GroupResult(r) => Ok(r),
            other => Err(NetError::Protocol(format!("unexpected {} awaiting group result", other.kind()))),
        }
    }

    fn recv(&mut self) -> Result<Message, NetError> {
        match self.session.channel.recv()? {
            Message::Close(c) => Err(NetError::Closed {
                code: c.code,
                reason: c.reason,
            }),
            m => Ok(m),
        }
    }

    pub fn close(mut self) {
        let _ = self.session.channel.send(&Message::Close(Close {
            code: CloseCode::NORMAL,
            reason: String::new(),
        }));
    }
}

/// Obtains discharges from the services named in third-party caveats and
/// keeps each until its earliest expiry.
pub struct DischargeFetcher {
    net: Arc<dyn Network>,
    verifier: Verifier,
    timeout: Duration,
    cache: Mutex<HashMap<Digest, Discharge>>,
}

impl DischargeFetcher {
    pub fn new(net: Arc<dyn Network>, verifier: Verifier, timeout: Duration) -> Self {
        DischargeFetcher {
            net,
            verifier,
            timeout,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn cached(&self, id: &Digest) -> Option<Discharge> {
        let now = self.verifier.clock.now();
        let mut cache = self.cache.lock().unwrap();
        match cache.get(id) {
            Some(d) if d.expiry().is_none_or(|t| now <= t) => Some(d.clone()),
            Some(_) => {
                cache.remove(id);
                None
            }
            None => None,
        }
    }

    pub fn fetch(&self, caveat: &ThirdPartyCaveat, identity: &Identity) -> Result<Discharge, NetError> {
        let id = caveat.id();
        if let Some(d) = self.cached(&id) {
            return Ok(d);
        }
        let opts = ClientOptions {
            verifier: self.verifier.clone(),
            policy: None,
            expected_key: Some(caveat.discharger_key),
            timeout: self.timeout,
            fetcher: None,
        };
        let mut client = Client::connect(self.net.as_ref(), &caveat.location, identity, &opts)?;
        let d = client.request_discharge(caveat);
        client.close();
        let d = d?;
        self.cache.lock().unwrap().insert(id, d.clone());
        Ok(d)
    }

    /// Discharges for every third-party caveat on `blessings`, and for those
    /// on the discharges themselves, to the nesting limit. Caveats whose
    /// discharge cannot be had are skipped; the peer will judge.
    pub fn fetch_for(&self, blessings: &[Blessing], identity: &Identity) -> Vec<Discharge> {
        let mut pending: Vec<(ThirdPartyCaveat, usize)> = blessings
            .iter()
            .flat_map(third_party_caveats)
            .map(|t| (t.clone(), 1))
            .collect();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        while let Some((tc, depth)) = pending.pop() {
            if depth > MAX_DISCHARGE_DEPTH || !seen.insert(tc.id()) {
                continue;
            }
            match self.fetch(&tc, identity) {
                Ok(d) => {
                    for c in &d.caveats {
                        if let Caveat::ThirdParty(inner) = c {
                            pending.push((inner.clone(), depth + 1));
                        }
                    }
                    out.push(d);
                }
                Err(e) => warn!(location = %tc.location, error = %e, "discharge unavailable"),
            }
        }
        out
    }
}
