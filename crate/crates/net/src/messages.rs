//! Message bodies carried in frames, each in canonical encoding.

use crate::frame::{Frame, MessageType};
use bless_core::caveats::{Discharge, ThirdPartyCaveat};
use bless_core::encoding::{Decoder, Encoder};
use bless_core::groups::{RemainderQuery, RemainderResult};
use bless_core::{Blessing, BlessingPattern, Decode, DecodeError, Encode, PublicKey, Signature};
use std::collections::BTreeSet;
use std::fmt;

pub const PROTOCOL_VERSION: u8 = 1;

/// Most blessings either side may present in one handshake.
pub const MAX_BLESSINGS: usize = 8;

/// Most discharges either side may present in one handshake.
pub const MAX_DISCHARGES: usize = 64;

/// SEC1 compressed point length of an ephemeral agreement key.
pub const EPHEMERAL_LEN: usize = 33;

fn ephemeral(dec: &mut Decoder<'_>) -> Result<Vec<u8>, DecodeError> {
    let b = dec.bytes()?;
    if b.len() != EPHEMERAL_LEN {
        return Err(DecodeError::invalid("ephemeral key has the wrong length"));
    }
    Ok(b.to_vec())
}

fn bounded_list<T: Decode>(dec: &mut Decoder<'_>, max: usize, what: &str) -> Result<Vec<T>, DecodeError> {
    let v: Vec<T> = dec.list()?;
    if v.len() > max {
        return Err(DecodeError::invalid(format!("more than {max} {what}")));
    }
    Ok(v)
}

fn flag(dec: &mut Decoder<'_>) -> Result<bool, DecodeError> {
    match dec.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(DecodeError::invalid(format!("flag byte {v}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hello {
    pub version: u8,
    pub ephemeral: Vec<u8>,
}

impl Encode for Hello {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.version).bytes(&self.ephemeral);
    }
}

impl Decode for Hello {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Hello {
            version: dec.u8()?,
            ephemeral: ephemeral(dec)?,
        })
    }
}

/// One side's credentials and its signature over the transcript so far.
/// The server's form also carries its ephemeral key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthMessage {
    pub ephemeral: Option<Vec<u8>>,
    pub public_key: PublicKey,
    pub blessings: Vec<Blessing>,
    pub discharges: Vec<Discharge>,
    pub signature: Signature,
}

impl AuthMessage {
    fn encode_body(&self, enc: &mut Encoder) {
        enc.nested(&self.public_key)
            .list(&self.blessings)
            .list(&self.discharges)
            .nested(&self.signature);
    }

    fn decode_body(dec: &mut Decoder<'_>, ephemeral: Option<Vec<u8>>) -> Result<Self, DecodeError> {
        Ok(AuthMessage {
            ephemeral,
            public_key: dec.nested()?,
            blessings: bounded_list(dec, MAX_BLESSINGS, "blessings")?,
            discharges: bounded_list(dec, MAX_DISCHARGES, "discharges")?,
            signature: dec.nested()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerAuth(pub AuthMessage);

impl Encode for ServerAuth {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self.0.ephemeral.as_deref().unwrap_or_default());
        self.0.encode_body(enc);
    }
}

impl Decode for ServerAuth {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let eph = ephemeral(dec)?;
        AuthMessage::decode_body(dec, Some(eph)).map(ServerAuth)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientAuth(pub AuthMessage);

impl Encode for ClientAuth {
    fn encode(&self, enc: &mut Encoder) {
        self.0.encode_body(enc);
    }
}

impl Decode for ClientAuth {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        AuthMessage::decode_body(dec, None).map(ClientAuth)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Call {
    pub id: u32,
    pub method: String,
    pub args: Vec<u8>,
}

impl Encode for Call {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.id).text(&self.method).bytes(&self.args);
    }
}

impl Decode for Call {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Call {
            id: dec.u32()?,
            method: dec.text()?,
            args: dec.bytes()?.to_vec(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ReplyStatus {
    Ok = 0,
    AccessDenied = 1,
    ApplicationError = 2,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reply {
    pub id: u32,
    pub status: ReplyStatus,
    pub body: Vec<u8>,
}

impl Encode for Reply {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.id).u8(self.status as u8).bytes(&self.body);
    }
}

impl Decode for Reply {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let id = dec.u32()?;
        let status = match dec.u8()? {
            0 => ReplyStatus::Ok,
            1 => ReplyStatus::AccessDenied,
            2 => ReplyStatus::ApplicationError,
            s => return Err(DecodeError::invalid(format!("reply status {s}"))),
        };
        Ok(Reply {
            id,
            status,
            body: dec.bytes()?.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DischargeRequest {
    pub caveat: ThirdPartyCaveat,
}

impl Encode for DischargeRequest {
    fn encode(&self, enc: &mut Encoder) {
        enc.nested(&self.caveat);
    }
}

impl Decode for DischargeRequest {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(DischargeRequest { caveat: dec.nested()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DischargeReply {
    Issued(Discharge),
    Refused(String),
}

impl Encode for DischargeReply {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            DischargeReply::Issued(d) => enc.u8(0).nested(d),
            DischargeReply::Refused(why) => enc.u8(1).text(why),
        };
    }
}

impl Decode for DischargeReply {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(DischargeReply::Issued(dec.nested()?)),
            1 => Ok(DischargeReply::Refused(dec.text()?)),
            s => Err(DecodeError::invalid(format!("discharge reply status {s}"))),
        }
    }
}

/// Answer to a group query. `Unknown` means the server does not define the
/// group; callers treat it as unreachable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupResult {
    Found(RemainderResult),
    Unknown,
}

impl Encode for GroupResult {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            GroupResult::Found(r) => {
                enc.u8(0).count(r.consumed.len());
                for &c in &r.consumed {
                    enc.u32(u32::try_from(c).expect("consumed count fits in u32"));
                }
                let assumed: Vec<&String> = r.assumed.iter().collect();
                enc.u8(r.approximated.into())
                    .u8(r.unavailable.into())
                    .text_list(&assumed);
            }
            GroupResult::Unknown => {
                enc.u8(1);
            }
        }
    }
}

impl Decode for GroupResult {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => {
                let n = dec.count()?;
                let mut consumed = BTreeSet::new();
                let mut last = 0usize;
                for _ in 0..n {
                    let c = dec.u32()? as usize;
                    if c <= last {
                        return Err(DecodeError::invalid("consumed counts must be positive and increasing"));
                    }
                    last = c;
                    consumed.insert(c);
                }
                let approximated = flag(dec)?;
                let unavailable = flag(dec)?;
                let names = dec.text_list()?;
                if names.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(DecodeError::invalid("assumed groups must be sorted and distinct"));
                }
                Ok(GroupResult::Found(RemainderResult {
                    consumed,
                    approximated,
                    unavailable,
                    assumed: names.into_iter().collect(),
                }))
            }
            1 => Ok(GroupResult::Unknown),
            s => Err(DecodeError::invalid(format!("group result status {s}"))),
        }
    }
}

/// A blessing handed to the peer, with the peer pattern the granter
/// suggests storing it under. The pattern is an unsigned hint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grant {
    pub blessing: Blessing,
    pub peer_pattern: BlessingPattern,
}

impl Encode for Grant {
    fn encode(&self, enc: &mut Encoder) {
        enc.nested(&self.blessing).text(&self.peer_pattern.to_string());
    }
}

impl Decode for Grant {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let blessing = dec.nested()?;
        let text = dec.text()?;
        let peer_pattern: BlessingPattern = text.parse().map_err(|e: bless_core::pattern::NameError| DecodeError::invalid(e.to_string()))?;
        if peer_pattern.to_string() != text || peer_pattern.has_groups() {
            return Err(DecodeError::invalid("bad peer pattern hint"));
        }
        Ok(Grant { blessing, peer_pattern })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CloseCode(pub u8);

impl CloseCode {
    pub const NORMAL: CloseCode = CloseCode(0);
    pub const PROTOCOL: CloseCode = CloseCode(1);
    pub const AUTHENTICATION: CloseCode = CloseCode(2);
    pub const SERVER_REJECTED: CloseCode = CloseCode(3);
    pub const CLIENT_REJECTED: CloseCode = CloseCode(4);
    pub const TIMEOUT: CloseCode = CloseCode(5);
    pub const VERSION: CloseCode = CloseCode(6);

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "normal",
            1 => "protocol error",
            2 => "authentication failed",
            3 => "server blessing rejected",
            4 => "client blessing rejected",
            5 => "timeout",
            6 => "unsupported version",
            _ => "unknown",
        }
    }
}

impl fmt::Display for CloseCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0, self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Close {
    pub code: CloseCode,
    pub reason: String,
}

impl Encode for Close {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.code.0).text(&self.reason);
    }
}

impl Decode for Close {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Close {
            code: CloseCode(dec.u8()?),
            reason: dec.text()?,
        })
    }
}

/// Any message body, tagged by its frame type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Hello(Hello),
    ServerAuth(ServerAuth),
    ClientAuth(ClientAuth),
    Call(Call),
    Reply(Reply),
    DischargeRequest(DischargeRequest),
    DischargeReply(DischargeReply),
    GroupQuery(RemainderQuery),
    GroupResult(GroupResult),
    Grant(Grant),
    Close(Close),
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello(_) => MessageType::Hello,
            Message::ServerAuth(_) => MessageType::ServerAuth,
            Message::ClientAuth(_) => MessageType::ClientAuth,
            Message::Call(_) => MessageType::Call,
            Message::Reply(_) => MessageType::Reply,
            Message::DischargeRequest(_) => MessageType::DischargeRequest,
            Message::DischargeReply(_) => MessageType::DischargeReply,
            Message::GroupQuery(_) => MessageType::GroupQuery,
            Message::GroupResult(_) => MessageType::GroupResult,
            Message::Grant(_) => MessageType::Grant,
            Message::Close(_) => MessageType::Close,
        }
    }

    pub fn body(&self) -> Vec<u8> {
        match self {
            Message::Hello(m) => m.to_canonical_bytes(),
            Message::ServerAuth(m) => m.to_canonical_bytes(),
            Message::ClientAuth(m) => m.to_canonical_bytes(),
            Message::Call(m) => m.to_canonical_bytes(),
            Message::Reply(m) => m.to_canonical_bytes(),
            Message::DischargeRequest(m) => m.to_canonical_bytes(),
            Message::DischargeReply(m) => m.to_canonical_bytes(),
            Message::GroupQuery(m) => m.to_canonical_bytes(),
            Message::GroupResult(m) => m.to_canonical_bytes(),
            Message::Grant(m) => m.to_canonical_bytes(),
            Message::Close(m) => m.to_canonical_bytes(),
        }
    }

    pub fn decode(kind: MessageType, body: &[u8]) -> Result<Self, DecodeError> {
        Ok(match kind {
            MessageType::Hello => Message::Hello(Decode::from_canonical_bytes(body)?),
            MessageType::ServerAuth => Message::ServerAuth(Decode::from_canonical_bytes(body)?),
            MessageType::ClientAuth => Message::ClientAuth(Decode::from_canonical_bytes(body)?),
            MessageType::Call => Message::Call(Decode::from_canonical_bytes(body)?),
            MessageType::Reply => Message::Reply(Decode::from_canonical_bytes(body)?),
            MessageType::DischargeRequest => Message::DischargeRequest(Decode::from_canonical_bytes(body)?),
            MessageType::DischargeReply => Message::DischargeReply(Decode::from_canonical_bytes(body)?),
            MessageType::GroupQuery => Message::GroupQuery(Decode::from_canonical_bytes(body)?),
            MessageType::GroupResult => Message::GroupResult(Decode::from_canonical_bytes(body)?),
            MessageType::Grant => Message::Grant(Decode::from_canonical_bytes(body)?),
            MessageType::Close => Message::Close(Decode::from_canonical_bytes(body)?),
        })
    }

    /// Plaintext frame for this message.
    pub fn to_frame(&self) -> Frame {
        Frame::new(self.kind(), self.body())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, DecodeError> {
        Self::decode(frame.kind, &frame.payload)
    }
}
