//! Mutual authentication. The client opens with an ephemeral agreement key;
//! the server answers with its own, its blessings, and a signature over the
//! transcript; the client checks them, then presents its blessings,
//! discharges, and a signature over the extended transcript. Channel keys
//! are derived from the agreed secret salted with the final transcript
//! digest, and only after both signatures verify. The server confirms with
//! an encrypted reply listing the client names it accepted.

use crate::channel::{SecureChannel, KEY_LEN};
use crate::error::NetError;
use crate::frame::{read_frame, write_frame, MessageType};
use crate::identity::{valid_names, Identity, Verifier};
use crate::messages::{
    AuthMessage, ClientAuth, Close, CloseCode, Hello, Message, Reply, ReplyStatus, ServerAuth, MAX_BLESSINGS,
    PROTOCOL_VERSION,
};
use bless_core::caveats::{Discharge, RequestContext};
use bless_core::crypto::{sign, verify};
use bless_core::encoding::{Decoder, Encoder, HashArgs, ListOf};
use bless_core::{Acl, Blessing, BlessingName, Digest, Encode, PublicKey};
use hkdf::Hkdf;
use p256::ecdh::EphemeralSecret;
use p256::elliptic_curve::sec1::ToEncodedPoint;
use rand::rngs::OsRng;
use sha2::Sha256;
use std::net::TcpStream;

const SERVER_LABEL: &str = "vbless/server-auth/v1";
const CLIENT_LABEL: &str = "vbless/client-auth/v1";

/// What one end learned about the other during the handshake.
#[derive(Clone, Debug)]
pub struct PeerInfo {
    pub public_key: PublicKey,
    pub blessings: Vec<Blessing>,
    pub discharges: Vec<Discharge>,
    /// Names of the peer's blessings that validated at handshake time.
    pub names: Vec<BlessingName>,
    pub endpoint: String,
}

impl PeerInfo {
    pub fn presented_names(&self) -> Vec<String> {
        self.blessings.iter().map(Blessing::full_name).collect()
    }
}

fn new_ephemeral() -> (EphemeralSecret, Vec<u8>) {
    let secret = EphemeralSecret::random(&mut OsRng);
    let public = secret.public_key().to_encoded_point(true).as_bytes().to_vec();
    (secret, public)
}

fn derive_keys(secret: &EphemeralSecret, peer: &[u8], transcript: &Digest) -> Result<([u8; KEY_LEN], [u8; KEY_LEN]), NetError> {
    let peer = p256::PublicKey::from_sec1_bytes(peer)
        .map_err(|_| NetError::Authentication("invalid ephemeral key".into()))?;
    let shared = secret.diffie_hellman(&peer);
    let hk = Hkdf::<Sha256>::new(Some(transcript.as_bytes()), shared.raw_secret_bytes());
    let mut c2s = [0u8; KEY_LEN];
    let mut s2c = [0u8; KEY_LEN];
    hk.expand(b"vbless client to server", &mut c2s)
        .and_then(|_| hk.expand(b"vbless server to client", &mut s2c))
        .map_err(|_| NetError::Protocol("key derivation failed".into()))?;
    Ok((c2s, s2c))
}

fn server_transcript(hello: &[u8], ephemeral: &[u8], m: &AuthMessage) -> Digest {
    HashArgs::new()
        .arg(SERVER_LABEL)
        .arg(hello)
        .arg(ephemeral)
        .arg(&m.public_key)
        .arg(&ListOf(&m.blessings))
        .arg(&ListOf(&m.discharges))
        .finish()
}

fn client_transcript(server: &Digest, m: &AuthMessage) -> Digest {
    HashArgs::new()
        .arg(CLIENT_LABEL)
        .arg(server)
        .arg(&m.public_key)
        .arg(&ListOf(&m.blessings))
        .arg(&ListOf(&m.discharges))
        .finish()
}

fn send_close(stream: &mut TcpStream, code: CloseCode, reason: &str) {
    let msg = Message::Close(Close {
        code,
        reason: reason.to_string(),
    });
    let _ = write_frame(stream, &msg.to_frame());
}

fn abort(stream: &mut TcpStream, code: CloseCode, err: NetError) -> NetError {
    send_close(stream, code, &err.to_string());
    err
}

fn expect_plain(stream: &mut TcpStream, kind: MessageType) -> Result<(Vec<u8>, Message), NetError> {
    let frame = read_frame(stream)?;
    let msg = Message::from_frame(&frame)?;
    if let Message::Close(c) = msg {
        return Err(NetError::Closed {
            code: c.code,
            reason: c.reason,
        });
    }
    if frame.kind != kind {
        return Err(NetError::Protocol(format!("expected {kind}, got {}", frame.kind)));
    }
    Ok((frame.payload, msg))
}

fn all_bound_to(m: &AuthMessage) -> bool {
    m.blessings.iter().all(|b| b.bound_key() == &m.public_key)
}

fn authorized_by(acl: &Acl, names: &[BlessingName], verifier: &Verifier) -> bool {
    names.iter().any(|n| acl.is_authorized(n, verifier.resolver.as_ref()))
}

/// Client-side parameters.
pub struct ClientHandshake<'a> {
    pub identity: &'a Identity,
    pub verifier: &'a Verifier,
    /// Names the server must present; `None` accepts any server that proves
    /// possession of its key.
    pub policy: Option<&'a Acl>,
    /// Key the server must hold, when known in advance.
    pub expected_key: Option<&'a PublicKey>,
    pub endpoint: &'a str,
}

/// Result of a completed client handshake.
pub struct ClientSession {
    pub channel: SecureChannel,
    pub server: PeerInfo,
    /// Client names the server accepted.
    pub accepted_names: Vec<String>,
}

impl ClientHandshake<'_> {
    /// Runs the handshake. `discharges_for` is asked for the discharges to
    /// present alongside the selected blessings.
    pub fn run<F>(&self, mut stream: TcpStream, discharges_for: F) -> Result<ClientSession, NetError>
    where
        F: FnOnce(&[Blessing]) -> Vec<Discharge>,
    {
        let (eph, eph_pub) = new_ephemeral();
        let hello = Hello {
            version: PROTOCOL_VERSION,
            ephemeral: eph_pub,
        };
        let hello_bytes = hello.to_canonical_bytes();
        write_frame(&mut stream, &Message::Hello(hello).to_frame())?;

        let (_, msg) = expect_plain(&mut stream, MessageType::ServerAuth)?;
        let Message::ServerAuth(ServerAuth(sa)) = msg else {
            unreachable!("frame kind checked")
        };
        let server_eph = sa.ephemeral.clone().unwrap_or_default();
        let t1 = server_transcript(&hello_bytes, &server_eph, &sa);
        if sa.blessings.is_empty() || !all_bound_to(&sa) || !verify(&sa.public_key, &t1, &sa.signature) {
            let e = NetError::Authentication("server signature or blessing binding invalid".into());
            return Err(abort(&mut stream, CloseCode::AUTHENTICATION, e));
        }
        if let Some(k) = self.expected_key {
            if k != &sa.public_key {
                let e = NetError::ServerRejected("server does not hold the expected key".into());
                return Err(abort(&mut stream, CloseCode::SERVER_REJECTED, e));
            }
        }

        let id = self.identity;
        let con = RequestContext {
            local_blessing_names: id.own_names(),
            discharges: sa.discharges.clone(),
            peer_endpoint: self.endpoint.to_string(),
            ..self.verifier.context()
        };
        let (names, failures) = valid_names(&sa.blessings, |b| {
            self.verifier.check_at_handshake(b, &id.roots, &RequestContext {
                remote_blessing: Some(b.clone()),
                ..con.clone()
            })
        });
        if let Some(acl) = self.policy {
            if !authorized_by(acl, &names, self.verifier) {
                let why = match (failures.is_empty(), names.is_empty()) {
                    (false, true) => format!("server blessing invalid: {}", failures.join("; ")),
                    _ => "server blessing names are not authorized by the client policy".to_string(),
                };
                return Err(abort(&mut stream, CloseCode::SERVER_REJECTED, NetError::ServerRejected(why)));
            }
        }

        let mut chosen: Vec<Blessing> = if names.is_empty() {
            id.store.presentable_to_anyone().into_iter().cloned().collect()
        } else {
            id.store.select_for_peer(&names).into_iter().cloned().collect()
        };
        let mut seen = std::collections::HashSet::new();
        chosen.retain(|b| seen.insert(b.to_canonical_bytes()));
        chosen.truncate(MAX_BLESSINGS);
        let mut discharges = discharges_for(&chosen);
        discharges.truncate(crate::messages::MAX_DISCHARGES);

        let mut ca = AuthMessage {
            ephemeral: None,
            public_key: id.keys.public,
            blessings: chosen,
            discharges,
            signature: bless_core::Signature(Vec::new()),
        };
        let t2 = client_transcript(&t1, &ca);
        ca.signature = sign(&id.keys.secret, &t2);
        write_frame(&mut stream, &Message::ClientAuth(ClientAuth(ca)).to_frame())?;

        let (c2s, s2c) = derive_keys(&eph, &server_eph, &t2)?;
        let first = read_frame(&mut stream)?;
        if first.kind == MessageType::Close {
            if let Ok(Message::Close(c)) = Message::from_frame(&first) {
                return Err(NetError::Closed {
                    code: c.code,
                    reason: c.reason,
                });
            }
        }
        let mut channel = SecureChannel::new(stream, &c2s, &s2c);
        let accepted_names = match channel.open_frame(&first)? {
            Message::Reply(Reply {
                id: 0,
                status: ReplyStatus::Ok,
                body,
            }) => Decoder::new(&body).text_list()?,
            other => return Err(NetError::Protocol(format!("expected confirmation, got {}", other.kind()))),
        };
        Ok(ClientSession {
            channel,
            server: PeerInfo {
                public_key: sa.public_key,
                blessings: sa.blessings,
                discharges: sa.discharges,
                names,
                endpoint: self.endpoint.to_string(),
            },
            accepted_names,
        })
    }
}

/// Server-side parameters.
pub struct ServerHandshake<'a> {
    pub identity: &'a Identity,
    pub verifier: &'a Verifier,
    /// Names a client must validly present for the connection to proceed;
    /// `None` admits every client that proves possession of its key.
    pub policy: Option<&'a Acl>,
}

impl ServerHandshake<'_> {
    pub fn run(&self, mut stream: TcpStream) -> Result<(SecureChannel, PeerInfo), NetError> {
        let endpoint = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        let (hello_bytes, msg) = expect_plain(&mut stream, MessageType::Hello)?;
        let Message::Hello(hello) = msg else {
            unreachable!("frame kind checked")
        };
        if hello.version != PROTOCOL_VERSION {
            let e = NetError::Protocol(format!("unsupported protocol version {}", hello.version));
            return Err(abort(&mut stream, CloseCode::VERSION, e));
        }

        let id = self.identity;
        let (eph, eph_pub) = new_ephemeral();
        let mut blessings = id.server_blessings();
        blessings.truncate(MAX_BLESSINGS);
        let mut sa = AuthMessage {
            ephemeral: Some(eph_pub.clone()),
            public_key: id.keys.public,
            blessings,
            discharges: Vec::new(),
            signature: bless_core::Signature(Vec::new()),
        };
        let t1 = server_transcript(&hello_bytes, &eph_pub, &sa);
        sa.signature = sign(&id.keys.secret, &t1);
        let my_names: Vec<String> = sa.blessings.iter().map(Blessing::full_name).collect();
        write_frame(&mut stream, &Message::ServerAuth(ServerAuth(sa)).to_frame())?;

        let (_, msg) = expect_plain(&mut stream, MessageType::ClientAuth)?;
        let Message::ClientAuth(ClientAuth(ca)) = msg else {
            unreachable!("frame kind checked")
        };
        let t2 = client_transcript(&t1, &ca);
        if !all_bound_to(&ca) || !verify(&ca.public_key, &t2, &ca.signature) {
            let e = NetError::Authentication("client signature or blessing binding invalid".into());
            return Err(abort(&mut stream, CloseCode::AUTHENTICATION, e));
        }

        let con = RequestContext {
            local_blessing_names: my_names,
            discharges: ca.discharges.clone(),
            peer_endpoint: endpoint.clone(),
            ..self.verifier.context()
        };
        let (names, failures) = valid_names(&ca.blessings, |b| {
            self.verifier.check_at_handshake(b, &id.roots, &RequestContext {
                remote_blessing: Some(b.clone()),
                ..con.clone()
            })
        });
        if let Some(acl) = self.policy {
            if !authorized_by(acl, &names, self.verifier) {
                let why = match (failures.is_empty(), names.is_empty()) {
                    (false, true) => format!("client blessing invalid: {}", failures.join("; ")),
                    _ => "client blessing names are not authorized".to_string(),
                };
                return Err(abort(&mut stream, CloseCode::CLIENT_REJECTED, NetError::ClientRejected(why)));
            }
        }

        let (c2s, s2c) = derive_keys(&eph, &hello.ephemeral, &t2)?;
        let mut channel = SecureChannel::new(stream, &s2c, &c2s);
        let mut enc = Encoder::new();
        let shown: Vec<String> = names.iter().map(ToString::to_string).collect();
        enc.text_list(&shown);
        channel.send(&Message::Reply(Reply {
            id: 0,
            status: ReplyStatus::Ok,
            body: enc.finish(),
        }))?;
        Ok((
            channel,
            PeerInfo {
                public_key: ca.public_key,
                blessings: ca.blessings,
                discharges: ca.discharges,
                names,
                endpoint,
            },
        ))
    }
}
