//! Accepting side: handshake, per-call authorization, dispatch and audit.

use crate::channel::SecureChannel;
use crate::error::NetError;
use crate::handshake::{PeerInfo, ServerHandshake};
use crate::identity::{SharedIdentity, Verifier};
use crate::messages::{Call, Close, CloseCode, DischargeReply, DischargeRequest, Grant, GroupResult, Message, Reply, ReplyStatus};
use bless_core::audit::{AuditLog, AuditRecord, Decision};
use bless_core::caveats::{RequestContext, ValidationFailure};
use bless_core::groups::{GroupResolver, RemainderQuery};
use bless_core::{Acl, Blessing, BlessingName, BlessingPattern};
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;
use tracing::{debug, warn};

/// Time allowed for each handshake message.
pub const PHASE_TIMEOUT: Duration = Duration::from_secs(10);

/// Who may invoke a method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MethodPolicy {
    /// Any client that completed the handshake.
    Open,
    Acl(Acl),
}

/// What a handler sees about the call it is serving.
pub struct CallContext<'a> {
    pub peer: &'a PeerInfo,
    /// Peer names that validated for this call.
    pub names: Vec<BlessingName>,
    pub request: RequestContext,
    grants: Vec<Grant>,
}

impl CallContext<'_> {
    /// Queues `blessing` to be handed to the caller before the reply. It
    /// must be bound to the caller's key.
    pub fn grant(&mut self, blessing: Blessing, peer_pattern: BlessingPattern) -> Result<(), NetError> {
        if blessing.bound_key() != &self.peer.public_key {
            return Err(NetError::BadGrant("blessing is not bound to the caller's key".into()));
        }
        if !blessing.verify_certs() {
            return Err(NetError::BadGrant("blessing chain does not verify".into()));
        }
        self.grants.push(Grant { blessing, peer_pattern });
        Ok(())
    }
}

pub trait Service: Send + Sync {
    /// Policy for `method`; `None` means the method is not exposed.
    fn policy(&self, method: &str) -> Option<MethodPolicy>;

    fn call(&self, ctx: &mut CallContext<'_>, method: &str, args: &[u8]) -> Result<Vec<u8>, String>;

    fn discharge(&self, _peer: &PeerInfo, _req: &DischargeRequest) -> DischargeReply {
        DischargeReply::Refused("this endpoint issues no discharges".into())
    }

    fn group_query(&self, _peer: &PeerInfo, _query: &RemainderQuery) -> GroupResult {
        GroupResult::Unknown
    }
}

/// A service exposing methods under a fixed policy table.
pub struct MethodTable<F> {
    pub policies: std::collections::BTreeMap<String, MethodPolicy>,
    pub handler: F,
}

impl<F> Service for MethodTable<F>
where
    F: Fn(&mut CallContext<'_>, &str, &[u8]) -> Result<Vec<u8>, String> + Send + Sync,
{
    fn policy(&self, method: &str) -> Option<MethodPolicy> {
        self.policies.get(method).cloned()
    }

    fn call(&self, ctx: &mut CallContext<'_>, method: &str, args: &[u8]) -> Result<Vec<u8>, String> {
        (self.handler)(ctx, method, args)
    }
}

/// Outcome of authorizing one call, given how each presented blessing fared.
pub fn decide(
    policy: Option<&MethodPolicy>,
    outcomes: &[(BlessingName, Result<(), ValidationFailure>)],
    resolver: &dyn GroupResolver,
) -> (Decision, Vec<BlessingName>) {
    let valid: Vec<BlessingName> = outcomes
        .iter()
        .filter(|(_, r)| r.is_ok())
        .map(|(n, _)| n.clone())
        .collect();
    let empty = Acl::default();
    let acl = match policy {
        Some(MethodPolicy::Open) => return (Decision::Allowed, valid),
        Some(MethodPolicy::Acl(acl)) => acl,
        None => &empty,
    };
    if valid.iter().any(|n| acl.is_authorized(n, resolver)) {
        return (Decision::Allowed, valid);
    }
    let caveat_failed = |n: &BlessingName, r: &Result<(), ValidationFailure>| matches!(r, Err(ValidationFailure::Caveat(_))) && acl.is_authorized(n, resolver);
    let decision = if outcomes.iter().any(|(n, r)| caveat_failed(n, r)) {
        Decision::DeniedCaveat
    } else if !valid.is_empty() || outcomes.iter().any(|(_, r)| matches!(r, Err(ValidationFailure::Caveat(_)))) {
        Decision::DeniedAcl
    } else {
        Decision::DeniedUnrecognized
    };
    (decision, valid)
}

pub struct ServerConfig {
    pub identity: SharedIdentity,
    pub verifier: Verifier,
    /// Names a client must present to connect at all; `None` defers every
    /// decision to the per-method policies.
    pub handshake_policy: Option<Acl>,
    pub audit: Option<Arc<AuditLog>>,
    pub phase_timeout: Duration,
    pub idle_timeout: Option<Duration>,
}

impl ServerConfig {
    pub fn new(identity: SharedIdentity, verifier: Verifier) -> Self {
        ServerConfig {
            identity,
            verifier,
            handshake_policy: None,
            audit: None,
            phase_timeout: PHASE_TIMEOUT,
            idle_timeout: Some(Duration::from_secs(300)),
        }
    }
}

pub struct Server {
    listener: TcpListener,
    config: Arc<ServerConfig>,
    service: Arc<dyn Service>,
}

impl Server {
    pub fn bind(addr: &str, config: ServerConfig, service: Arc<dyn Service>) -> io::Result<Self> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            config: Arc::new(config),
            service,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until the process exits.
    pub fn run(self) -> io::Result<()> {
        let stop = AtomicBool::new(false);
        self.accept_loop(&stop);
        Ok(())
    }

    /// Serves on a background thread until the handle is shut down.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::spawn(move || self.accept_loop(&flag));
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    fn accept_loop(&self, stop: &AtomicBool) {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let config = self.config.clone();
                    let service = self.service.clone();
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &config, service.as_ref()) {
                            debug!(error = %e, "connection ended");
                        }
                    });
                }
                Err(e) => warn!(error = %e, "accept failed"),
            }
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(t) = self.thread.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn serve_connection(stream: TcpStream, config: &ServerConfig, service: &dyn Service) -> Result<(), NetError> {
    stream.set_read_timeout(Some(config.phase_timeout))?;
    stream.set_write_timeout(Some(config.phase_timeout))?;
    let identity = config.identity.get();
    let hs = ServerHandshake {
        identity: &identity,
        verifier: &config.verifier,
        policy: config.handshake_policy.as_ref(),
    };
    let (mut channel, peer) = hs.run(stream)?;
    channel.set_timeout(config.idle_timeout)?;
    debug!(peer = ?peer.presented_names(), "handshake complete");
    loop {
        let msg = match channel.recv() {
            Ok(m) => m,
            Err(NetError::Io(e)) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        };
        match msg {
            Message::Call(call) => handle_call(&mut channel, config, service, &peer, call)?,
            Message::DischargeRequest(req) => {
                let reply = service.discharge(&peer, &req);
                channel.send(&Message::DischargeReply(reply))?;
            }
            Message::GroupQuery(q) => {
                let reply = service.group_query(&peer, &q);
                channel.send(&Message::GroupResult(reply))?;
            }
            Message::Close(_) => return Ok(()),
            other => {
                let reason = format!("unexpected {} after handshake", other.kind());
                let _ = channel.send(&Message::Close(Close {
                    code: CloseCode::PROTOCOL,
                    reason: reason.clone(),
                }));
                return Err(NetError::Protocol(reason));
            }
        }
    }
}

fn handle_call(
    channel: &mut SecureChannel,
    config: &ServerConfig,
    service: &dyn Service,
    peer: &PeerInfo,
    call: Call,
) -> Result<(), NetError> {
    let identity = config.identity.get();
    let verifier = &config.verifier;
    let base = RequestContext {
        method: call.method.clone(),
        local_blessing_names: identity.server_blessings().iter().map(Blessing::full_name).collect(),
        discharges: peer.discharges.clone(),
        peer_endpoint: peer.endpoint.clone(),
        ..verifier.context()
    };
    let outcomes: Vec<(BlessingName, Result<(), ValidationFailure>)> = peer
        .blessings
        .iter()
        .map(|b| {
            let con = RequestContext {
                remote_blessing: Some(b.clone()),
                ..base.clone()
            };
            (b.name(), verifier.registry.check_blessing(b, &identity.roots, &con))
        })
        .collect();
    let policy = service.policy(&call.method);
    let (decision, names) = decide(policy.as_ref(), &outcomes, verifier.resolver.as_ref());
    if let Some(log) = &config.audit {
        let record = AuditRecord {
            time: base.timestamp,
            method: call.method.clone(),
            peer_names: peer.presented_names(),
            decision,
        };
        if let Err(e) = log.append(&record) {
            warn!(error = %e, "audit append failed");
        }
    }
    debug!(method = %call.method, %decision, "call");
    if !decision.is_allowed() {
        return channel.send(&Message::Reply(Reply {
            id: call.id,
            status: ReplyStatus::AccessDenied,
            body: Vec::new(),
        }));
    }
    let mut ctx = CallContext {
        peer,
        names,
        request: RequestContext {
            remote_blessing: peer.blessings.first().cloned(),
            ..base
        },
        grants: Vec::new(),
    };
    let result = service.call(&mut ctx, &call.method, &call.args);
    let (status, body) = match result {
        Ok(body) => {
            for g in ctx.grants.drain(..) {
                channel.send(&Message::Grant(g))?;
            }
            (ReplyStatus::Ok, body)
        }
        Err(msg) => (ReplyStatus::ApplicationError, msg.into_bytes()),
    };
    channel.send(&Message::Reply(Reply {
        id: call.id,
        status,
        body,
    }))
}
