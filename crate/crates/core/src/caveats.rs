//! First-party caveats, third-party caveats, discharges and blessing
//! validation.
//!
//! Validation fails closed: a caveat that cannot be interpreted (unknown type,
//! missing discharge, nesting too deep) makes the whole caveat list invalid.

use crate::authorization::{match_pattern, MatchMode, NoGroups};
use crate::credentials::{is_recognized, verify_certs, Blessing, CaveatList, RootSet};
use crate::crypto::{self, PublicKey, SecretKey, Signature};
use crate::encoding::{Decode, DecodeError, Decoder, Digest, Encode, Encoder, HashArgs};
use crate::pattern::{BlessingName, BlessingPattern};
use chrono::{DateTime, Datelike, Duration, FixedOffset, TimeZone, Timelike, Utc, Weekday};
use rand::RngCore;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};
use thiserror::Error;

pub const EXPIRY: u8 = 0x01;
pub const METHOD: u8 = 0x02;
pub const PEER: u8 = 0x03;
pub const WEEKLY_SCHEDULE: u8 = 0x04;
pub const THIRD_PARTY: u8 = 0x7f;
/// Lowest type identifier available for service-defined caveats.
pub const FIRST_USER_TYPE: u8 = 0x80;

/// Nesting limit for third-party caveats on discharges.
pub const MAX_DISCHARGE_DEPTH: usize = 8;

const NONCE_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WeeklySchedule {
    pub day: Weekday,
    /// Inclusive start hour, 0..=23.
    pub start_hour: u8,
    /// Exclusive end hour, start_hour+1..=24.
    pub end_hour: u8,
}

impl WeeklySchedule {
    pub fn new(day: Weekday, start_hour: u8, end_hour: u8) -> Result<Self, DecodeError> {
        if start_hour >= end_hour || end_hour > 24 {
            return Err(DecodeError::invalid(format!(
                "schedule hours {start_hour}-{end_hour} out of range"
            )));
        }
        Ok(WeeklySchedule {
            day,
            start_hour,
            end_hour,
        })
    }

    pub fn contains<Tz: TimeZone>(&self, t: &DateTime<Tz>) -> bool {
        let hour = t.hour() as u8;
        t.weekday() == self.day && self.start_hour <= hour && hour < self.end_hour
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ThirdPartyCaveat {
    pub nonce: [u8; NONCE_LEN],
    pub discharger_key: PublicKey,
    /// First-party check the discharger performs before issuing a discharge.
    pub check: Box<Caveat>,
    /// Endpoint (`host:port`) of the discharge service.
    pub location: String,
}

impl ThirdPartyCaveat {
    /// New caveat with a fresh random nonce. `check` must be first-party.
    pub fn new(discharger_key: PublicKey, check: Caveat, location: impl Into<String>) -> Result<Self, CaveatError> {
        if matches!(check, Caveat::ThirdParty(_)) {
            return Err(CaveatError::NestedThirdParty);
        }
        let mut nonce = [0u8; NONCE_LEN];
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        Ok(ThirdPartyCaveat {
            nonce,
            discharger_key,
            check: Box::new(check),
            location: location.into(),
        })
    }

    /// Index key matching discharges to this caveat.
    pub fn id(&self) -> Digest {
        HashArgs::new().arg(self).finish()
    }
}

impl fmt::Debug for ThirdPartyCaveat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThirdPartyCaveat")
            .field("id", &self.id())
            .field("check", &self.check)
            .field("location", &self.location)
            .finish()
    }
}

impl Encode for ThirdPartyCaveat {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.nonce)
            .nested(&self.discharger_key)
            .nested(self.check.as_ref())
            .text(&self.location);
    }
}

impl Decode for ThirdPartyCaveat {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let nonce = dec.fixed::<NONCE_LEN>()?;
        let discharger_key = dec.nested()?;
        let check: Caveat = dec.nested()?;
        if matches!(check, Caveat::ThirdParty(_)) {
            return Err(DecodeError::invalid("third-party check must be first-party"));
        }
        Ok(ThirdPartyCaveat {
            nonce,
            discharger_key,
            check: Box::new(check),
            location: dec.text()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Caveat {
    /// Valid until (inclusive) the given unix time in seconds.
    Expiry(i64),
    Method(Vec<String>),
    /// The authorizing end must hold a name matching one of these
    /// group-free patterns.
    Peer(Vec<BlessingPattern>),
    WeeklySchedule(WeeklySchedule),
    ThirdParty(ThirdPartyCaveat),
    /// Any other first-party type; interpreted by a registered validator.
    Other { type_id: u8, payload: Vec<u8> },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaveatError {
    #[error("third-party caveat checks must be first-party caveats")]
    NestedThirdParty,
    #[error("type id {0:#04x} is reserved for built-in caveats")]
    ReservedType(u8),
    #[error("peer caveat patterns may not reference groups: {0}")]
    GroupInPeerPattern(String),
}

impl Caveat {
    pub fn expiry(not_after: DateTime<Utc>) -> Self {
        Caveat::Expiry(not_after.timestamp())
    }

    pub fn method<I, S>(methods: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Caveat::Method(methods.into_iter().map(Into::into).collect())
    }

    pub fn peer(patterns: Vec<BlessingPattern>) -> Result<Self, CaveatError> {
        if let Some(p) = patterns.iter().find(|p| p.has_groups()) {
            return Err(CaveatError::GroupInPeerPattern(p.to_string()));
        }
        Ok(Caveat::Peer(patterns))
    }

    pub fn schedule(day: Weekday, start_hour: u8, end_hour: u8) -> Result<Self, DecodeError> {
        WeeklySchedule::new(day, start_hour, end_hour).map(Caveat::WeeklySchedule)
    }

    pub fn custom(type_id: u8, payload: Vec<u8>) -> Result<Self, CaveatError> {
        match type_id {
            EXPIRY | METHOD | PEER | WEEKLY_SCHEDULE | THIRD_PARTY => Err(CaveatError::ReservedType(type_id)),
            _ => Ok(Caveat::Other { type_id, payload }),
        }
    }

    pub fn type_id(&self) -> u8 {
        match self {
            Caveat::Expiry(_) => EXPIRY,
            Caveat::Method(_) => METHOD,
            Caveat::Peer(_) => PEER,
            Caveat::WeeklySchedule(_) => WEEKLY_SCHEDULE,
            Caveat::ThirdParty(_) => THIRD_PARTY,
            Caveat::Other { type_id, .. } => *type_id,
        }
    }

    pub fn is_first_party(&self) -> bool {
        !matches!(self, Caveat::ThirdParty(_))
    }

    fn payload(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            Caveat::Expiry(t) => {
                enc.i64(*t);
            }
            Caveat::Method(methods) => {
                enc.text_list(methods);
            }
            Caveat::Peer(patterns) => {
                let texts: Vec<String> = patterns.iter().map(ToString::to_string).collect();
                enc.text_list(&texts);
            }
            Caveat::WeeklySchedule(s) => {
                enc.u8(s.day.num_days_from_monday() as u8)
                    .u8(s.start_hour)
                    .u8(s.end_hour);
            }
            Caveat::ThirdParty(tpc) => tpc.encode(&mut enc),
            Caveat::Other { payload, .. } => return payload.clone(),
        }
        enc.finish()
    }

    fn from_payload(type_id: u8, payload: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(payload);
        let cav = match type_id {
            EXPIRY => Caveat::Expiry(dec.i64()?),
            METHOD => Caveat::Method(dec.text_list()?),
            PEER => {
                let patterns = dec
                    .text_list()?
                    .iter()
                    .map(|t| t.parse::<BlessingPattern>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| DecodeError::invalid(e.to_string()))?;
                // Reject texts that only parse loosely (e.g. surrounding whitespace).
                let canonical = Caveat::Peer(patterns.clone()).payload();
                if canonical != payload {
                    return Err(DecodeError::invalid("non-canonical peer pattern text"));
                }
                Caveat::peer(patterns).map_err(|e| DecodeError::invalid(e.to_string()))?
            }
            WEEKLY_SCHEDULE => {
                let day = dec.u8()?;
                let day = weekday_from_index(day)
                    .ok_or_else(|| DecodeError::invalid(format!("bad weekday {day}")))?;
                let (start, end) = (dec.u8()?, dec.u8()?);
                Caveat::WeeklySchedule(WeeklySchedule::new(day, start, end)?)
            }
            THIRD_PARTY => Caveat::ThirdParty(ThirdPartyCaveat::decode(&mut dec)?),
            other => {
                return Ok(Caveat::Other {
                    type_id: other,
                    payload: payload.to_vec(),
                })
            }
        };
        dec.finish()?;
        Ok(cav)
    }

    pub fn encode_list(caveats: &[Caveat], enc: &mut Encoder) {
        enc.count(caveats.len());
        for c in caveats {
            c.encode(enc);
        }
    }

    pub fn decode_list(dec: &mut Decoder<'_>) -> Result<Vec<Caveat>, DecodeError> {
        let n = dec.count()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(Caveat::decode(dec)?);
        }
        Ok(out)
    }
}

pub fn weekday_from_index(i: u8) -> Option<Weekday> {
    (i < 7).then(|| Weekday::try_from(i).expect("index below 7"))
}

impl Encode for Caveat {
    fn encode(&self, enc: &mut Encoder) {
        enc.tag(self.type_id()).bytes(&self.payload());
    }
}

impl Decode for Caveat {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let type_id = dec.tag()?;
        let payload = dec.bytes()?;
        Caveat::from_payload(type_id, payload)
    }
}

impl fmt::Display for Caveat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Caveat::Expiry(t) => match Utc.timestamp_opt(*t, 0).single() {
                Some(dt) => write!(f, "expiry={}", dt.to_rfc3339()),
                None => write!(f, "expiry=@{t}"),
            },
            Caveat::Method(m) => write!(f, "methods={}", m.join(",")),
            Caveat::Peer(p) => {
                let texts: Vec<String> = p.iter().map(ToString::to_string).collect();
                write!(f, "peers={}", texts.join("|"))
            }
            Caveat::WeeklySchedule(s) => {
                write!(f, "schedule={}:{}-{}", s.day, s.start_hour, s.end_hour)
            }
            Caveat::ThirdParty(t) => write!(
                f,
                "third-party(check={}, location={}, discharger={})",
                t.check,
                t.location,
                t.discharger_key.fingerprint()
            ),
            Caveat::Other { type_id, payload } => {
                write!(f, "custom({type_id:#04x}, {} bytes)", payload.len())
            }
        }
    }
}

/// Proof that a third-party caveat's check held, possibly itself caveated.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Discharge {
    /// Id of the third-party caveat this discharges. Only a lookup hint: the
    /// signature is what binds the discharge to the caveat.
    pub caveat_id: Digest,
    pub caveats: Vec<Caveat>,
    pub signature: Signature,
}

impl Discharge {
    /// Earliest expiry among this discharge's own caveats.
    pub fn expiry(&self) -> Option<DateTime<Utc>> {
        self.caveats
            .iter()
            .filter_map(|c| match c {
                Caveat::Expiry(t) => Utc.timestamp_opt(*t, 0).single(),
                _ => None,
            })
            .min()
    }
}

impl fmt::Debug for Discharge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discharge")
            .field("caveat_id", &self.caveat_id)
            .field("caveats", &self.caveats)
            .finish()
    }
}

impl Encode for Discharge {
    fn encode(&self, enc: &mut Encoder) {
        enc.nested(&self.caveat_id);
        Caveat::encode_list(&self.caveats, enc);
        enc.nested(&self.signature);
    }
}

impl Decode for Discharge {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Discharge {
            caveat_id: dec.nested()?,
            caveats: Caveat::decode_list(dec)?,
            signature: dec.nested()?,
        })
    }
}

fn discharge_digest(tpc: &ThirdPartyCaveat, caveats: &[Caveat]) -> Digest {
    HashArgs::new().arg(tpc).arg(&CaveatList(caveats)).finish()
}

/// Everything a caveat validator may consult about a request.
#[derive(Clone, Debug)]
pub struct RequestContext {
    pub timestamp: DateTime<Utc>,
    pub method: String,
    /// Object name within the service.
    pub suffix: String,
    /// Blessing names of the authorizing end itself.
    pub local_blessing_names: Vec<String>,
    pub remote_blessing: Option<Blessing>,
    pub discharges: Vec<Discharge>,
    pub peer_endpoint: String,
    /// Zone in which weekly schedules are evaluated.
    pub local_offset: FixedOffset,
    /// Tolerance applied to expiry checks.
    pub clock_skew: Duration,
}

impl RequestContext {
    pub fn new(timestamp: DateTime<Utc>) -> Self {
        RequestContext {
            timestamp,
            method: String::new(),
            suffix: String::new(),
            local_blessing_names: Vec::new(),
            remote_blessing: None,
            discharges: Vec::new(),
            peer_endpoint: String::new(),
            local_offset: FixedOffset::east_opt(0).expect("zero offset"),
            clock_skew: Duration::zero(),
        }
    }

    pub fn with_method(mut self, method: impl Into<String>) -> Self {
        self.method = method.into();
        self
    }

    pub fn with_local_names<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.local_blessing_names = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_discharges(mut self, discharges: Vec<Discharge>) -> Self {
        self.discharges = discharges;
        self
    }

    pub fn with_offset(mut self, offset: FixedOffset) -> Self {
        self.local_offset = offset;
        self
    }

    pub fn with_skew(mut self, skew: Duration) -> Self {
        self.clock_skew = skew;
        self
    }
}

/// Why a caveat did not validate.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CaveatDiagnostic {
    #[error("expired at {not_after} (now {now})")]
    Expired { not_after: i64, now: i64 },
    #[error("method {0:?} not permitted")]
    MethodNotPermitted(String),
    #[error("no local blessing name matches the peer restriction")]
    PeerMismatch,
    #[error("outside the permitted weekly schedule")]
    OutsideSchedule,
    #[error("unrecognized caveat type {0:#04x}")]
    Unrecognized(u8),
    #[error("caveat of type {0:#04x} rejected by its validator")]
    Rejected(u8),
    #[error("no valid discharge for third-party caveat at {0}")]
    MissingDischarge(String),
    #[error("third-party caveats nested deeper than {MAX_DISCHARGE_DEPTH}")]
    TooDeep,
    #[error("third-party caveat used where a first-party caveat is required")]
    NotFirstParty,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("type id {0:#04x} is reserved for built-in caveats")]
    Reserved(u8),
    #[error("type id {0:#04x} is already bound to a different validator")]
    Conflict(u8),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MintError {
    #[error("secret key does not match the caveat's discharger key")]
    Authority,
    #[error("discharge refused: {0}")]
    Refused(CaveatDiagnostic),
}

/// Which conjunct of blessing validation failed.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ValidationFailure {
    #[error("certificate chain does not verify")]
    InvalidChain,
    #[error("blessing root is not recognized")]
    UnrecognizedRoot,
    #[error("caveat not satisfied: {0}")]
    Caveat(CaveatDiagnostic),
}

pub type Validator = Arc<dyn Fn(&[u8], &RequestContext) -> bool + Send + Sync>;

/// Dispatch table for first-party caveat validation. Built-in types are
/// always bound; service-defined types use ids from [`FIRST_USER_TYPE`] up.
#[derive(Default)]
pub struct CaveatRegistry {
    custom: RwLock<HashMap<u8, Validator>>,
}

impl fmt::Debug for CaveatRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<u8> = self.custom.read().unwrap().keys().copied().collect();
        f.debug_struct("CaveatRegistry").field("custom", &ids).finish()
    }
}

impl CaveatRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, type_id: u8, validator: Validator) -> Result<(), RegistryError> {
        if type_id < FIRST_USER_TYPE {
            return Err(RegistryError::Reserved(type_id));
        }
        let mut custom = self.custom.write().unwrap();
        match custom.get(&type_id) {
            Some(existing) if Arc::ptr_eq(existing, &validator) => Ok(()),
            Some(_) => Err(RegistryError::Conflict(type_id)),
            None => {
                custom.insert(type_id, validator);
                Ok(())
            }
        }
    }

    pub fn register_fn<F>(&self, type_id: u8, f: F) -> Result<(), RegistryError>
    where
        F: Fn(&[u8], &RequestContext) -> bool + Send + Sync + 'static,
    {
        self.register(type_id, Arc::new(f))
    }

    pub fn validate_first_party_caveat(&self, fc: &Caveat, con: &RequestContext) -> bool {
        self.check_first_party(fc, con).is_ok()
    }

    pub fn check_first_party(&self, fc: &Caveat, con: &RequestContext) -> Result<(), CaveatDiagnostic> {
        match fc {
            Caveat::Expiry(not_after) => {
                let now = (con.timestamp - con.clock_skew).timestamp();
                if now <= *not_after {
                    Ok(())
                } else {
                    Err(CaveatDiagnostic::Expired {
                        not_after: *not_after,
                        now: con.timestamp.timestamp(),
                    })
                }
            }
            Caveat::Method(methods) => {
                if methods.iter().any(|m| *m == con.method) {
                    Ok(())
                } else {
                    Err(CaveatDiagnostic::MethodNotPermitted(con.method.clone()))
                }
            }
            Caveat::Peer(patterns) => {
                let matched = con
                    .local_blessing_names
                    .iter()
                    .filter_map(|n| n.parse::<BlessingName>().ok())
                    .any(|name| {
                        patterns.iter().any(|p| {
                            !p.has_groups() && match_pattern(p, &name, &NoGroups, MatchMode::Allow)
                        })
                    });
                if matched {
                    Ok(())
                } else {
                    Err(CaveatDiagnostic::PeerMismatch)
                }
            }
            Caveat::WeeklySchedule(s) => {
                if s.contains(&con.timestamp.with_timezone(&con.local_offset)) {
                    Ok(())
                } else {
                    Err(CaveatDiagnostic::OutsideSchedule)
                }
            }
            Caveat::ThirdParty(_) => Err(CaveatDiagnostic::NotFirstParty),
            Caveat::Other { type_id, payload } => {
                let validator = self.custom.read().unwrap().get(type_id).cloned();
                match validator {
                    None => Err(CaveatDiagnostic::Unrecognized(*type_id)),
                    Some(v) if v(payload, con) => Ok(()),
                    Some(_) => Err(CaveatDiagnostic::Rejected(*type_id)),
                }
            }
        }
    }

    pub fn validate_caveats(&self, caveats: &[Caveat], con: &RequestContext) -> bool {
        self.check_caveats(caveats, con).is_ok()
    }

    pub fn check_caveats(&self, caveats: &[Caveat], con: &RequestContext) -> Result<(), CaveatDiagnostic> {
        let index = DischargeIndex::new(&con.discharges);
        self.check_caveats_at(caveats, con, &index, 0)
    }

    fn check_caveats_at(
        &self,
        caveats: &[Caveat],
        con: &RequestContext,
        index: &DischargeIndex<'_>,
        depth: usize,
    ) -> Result<(), CaveatDiagnostic> {
        for c in caveats {
            match c {
                Caveat::ThirdParty(tpc) => {
                    if depth >= MAX_DISCHARGE_DEPTH {
                        return Err(CaveatDiagnostic::TooDeep);
                    }
                    let mut failure = CaveatDiagnostic::MissingDischarge(tpc.location.clone());
                    let mut ok = false;
                    for d in index.candidates(&tpc.id()) {
                        if !crypto::verify(&tpc.discharger_key, &discharge_digest(tpc, &d.caveats), &d.signature) {
                            continue;
                        }
                        match self.check_caveats_at(&d.caveats, con, index, depth + 1) {
                            Ok(()) => {
                                ok = true;
                                break;
                            }
                            Err(e) => failure = e,
                        }
                    }
                    if !ok {
                        return Err(failure);
                    }
                }
                fc => self.check_first_party(fc, con)?,
            }
        }
        Ok(())
    }

    pub fn validate_blessing(&self, b: &Blessing, roots: &RootSet, con: &RequestContext) -> bool {
        self.check_blessing(b, roots, con).is_ok()
    }

    /// Blessing validation with a diagnostic naming the failed conjunct.
    pub fn check_blessing(&self, b: &Blessing, roots: &RootSet, con: &RequestContext) -> Result<(), ValidationFailure> {
        if !verify_certs(b) {
            return Err(ValidationFailure::InvalidChain);
        }
        if !is_recognized(b, roots) {
            return Err(ValidationFailure::UnrecognizedRoot);
        }
        let caveats: Vec<Caveat> = b.caveats().cloned().collect();
        self.check_caveats(&caveats, con)
            .map_err(ValidationFailure::Caveat)
    }
}

/// Discharges grouped by the caveat id they claim. Candidates for an id are
/// the indexed ones first, then every other discharge, so a wrong hint can
/// only cost time, never change the outcome.
struct DischargeIndex<'a> {
    all: &'a [Discharge],
    by_id: HashMap<Digest, Vec<usize>>,
}

impl<'a> DischargeIndex<'a> {
    fn new(all: &'a [Discharge]) -> Self {
        let mut by_id: HashMap<Digest, Vec<usize>> = HashMap::new();
        for (i, d) in all.iter().enumerate() {
            by_id.entry(d.caveat_id).or_default().push(i);
        }
        DischargeIndex { all, by_id }
    }

    fn candidates<'s>(&'s self, id: &Digest) -> impl Iterator<Item = &'a Discharge> + 's {
        let id = *id;
        let indexed = self.by_id.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        let all = self.all;
        indexed
            .iter()
            .map(move |&i| &all[i])
            .chain(all.iter().filter(move |d| d.caveat_id != id))
    }
}

/// Issues a discharge for `tpc` if its check validates in `con`.
pub fn mint_discharge(
    sk: &SecretKey,
    tpc: &ThirdPartyCaveat,
    caveats: Vec<Caveat>,
    con: &RequestContext,
    registry: &CaveatRegistry,
) -> Result<Discharge, MintError> {
    if sk.public_key() != tpc.discharger_key {
        return Err(MintError::Authority);
    }
    registry
        .check_first_party(&tpc.check, con)
        .map_err(MintError::Refused)?;
    let signature = crypto::sign(sk, &discharge_digest(tpc, &caveats));
    Ok(Discharge {
        caveat_id: tpc.id(),
        caveats,
        signature,
    })
}

/// Third-party caveats appearing anywhere on a blessing's chain.
pub fn third_party_caveats(b: &Blessing) -> Vec<&ThirdPartyCaveat> {
    b.caveats()
        .filter_map(|c| match c {
            Caveat::ThirdParty(t) => Some(t),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::{bless, self_blessing};
    use crate::crypto::KeyPair;

    fn at(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    #[test]
    fn expiry_caveat() {
        let reg = CaveatRegistry::new();
        let cav = Caveat::expiry(at("2026-03-02T21:00:00Z"));
        assert!(reg.validate_first_party_caveat(&cav, &RequestContext::new(at("2026-03-02T20:00:00Z"))));
        assert!(reg.validate_first_party_caveat(&cav, &RequestContext::new(at("2026-03-02T21:00:00Z"))));
        assert!(!reg.validate_first_party_caveat(&cav, &RequestContext::new(at("2026-03-02T21:00:01Z"))));
        let skewed = RequestContext::new(at("2026-03-02T21:00:20Z")).with_skew(Duration::seconds(30));
        assert!(reg.validate_first_party_caveat(&cav, &skewed));
    }

    #[test]
    fn method_caveat() {
        let reg = CaveatRegistry::new();
        let cav = Caveat::method(["Lock", "Unlock"]);
        let con = RequestContext::new(Utc::now()).with_method("Claim");
        assert!(!reg.validate_first_party_caveat(&cav, &con));
        assert!(reg.validate_first_party_caveat(&cav, &con.with_method("Unlock")));
    }

    #[test]
    fn weekly_schedule_caveat() {
        let reg = CaveatRegistry::new();
        let cav = Caveat::schedule(Weekday::Mon, 8, 10).unwrap();
        // 2026-03-02 is a Monday.
        let ok = |t: &str| reg.validate_first_party_caveat(&cav, &RequestContext::new(at(t)));
        assert!(ok("2026-03-02T09:00:00Z"));
        assert!(ok("2026-03-02T08:00:00Z"));
        assert!(!ok("2026-03-02T10:00:00Z"));
        assert!(!ok("2026-03-03T09:00:00Z"));
        // Evaluated in the configured zone: 07:30Z is 09:30 at +02:00.
        let con = RequestContext::new(at("2026-03-02T07:30:00Z"))
            .with_offset(FixedOffset::east_opt(2 * 3600).unwrap());
        assert!(reg.validate_first_party_caveat(&cav, &con));
        assert!(Caveat::schedule(Weekday::Mon, 10, 8).is_err());
    }

    #[test]
    fn peer_caveat() {
        let reg = CaveatRegistry::new();
        let cav = Caveat::peer(vec!["SomeCorp/VideoService".parse().unwrap()]).unwrap();
        let con = RequestContext::new(Utc::now()).with_local_names(["SomeCorp/VideoService/eu"]);
        assert!(reg.validate_first_party_caveat(&cav, &con));
        let con = RequestContext::new(Utc::now()).with_local_names(["MyBank"]);
        assert!(!reg.validate_first_party_caveat(&cav, &con));
        assert!(Caveat::peer(vec!["Friends_G".parse().unwrap()]).is_err());
    }

    #[test]
    fn registry_dispatch_and_conflicts() {
        let reg = CaveatRegistry::new();
        let pg13 = Caveat::custom(0x90, b"PG-13".to_vec()).unwrap();
        let con = RequestContext::new(Utc::now()).with_method("Stream");
        assert!(!reg.validate_first_party_caveat(&pg13, &con));
        assert_eq!(
            reg.check_first_party(&pg13, &con),
            Err(CaveatDiagnostic::Unrecognized(0x90))
        );
        let v: Validator = Arc::new(|payload: &[u8], _: &RequestContext| payload == b"PG-13");
        reg.register(0x90, v.clone()).unwrap();
        reg.register(0x90, v).unwrap();
        assert!(reg.validate_first_party_caveat(&pg13, &con));
        assert_eq!(
            reg.register_fn(0x90, |_, _| true),
            Err(RegistryError::Conflict(0x90))
        );
        assert_eq!(reg.register_fn(EXPIRY, |_, _| true), Err(RegistryError::Reserved(EXPIRY)));
        assert!(Caveat::custom(EXPIRY, vec![]).is_err());
    }

    #[test]
    fn unknown_builtin_range_types_fail_closed() {
        let reg = CaveatRegistry::new();
        let cav = Caveat::custom(0x05, vec![1, 2, 3]).unwrap();
        let bytes = cav.to_canonical_bytes();
        assert_eq!(Caveat::from_canonical_bytes(&bytes).unwrap(), cav);
        assert!(!reg.validate_first_party_caveat(&cav, &RequestContext::new(Utc::now())));
    }

    #[test]
    fn empty_caveat_list_is_valid() {
        assert!(CaveatRegistry::new().validate_caveats(&[], &RequestContext::new(Utc::now())));
    }

    fn proximity_registry() -> CaveatRegistry {
        let reg = CaveatRegistry::new();
        reg.register_fn(0x81, |_, con| con.peer_endpoint == "near").unwrap();
        reg
    }

    #[test]
    fn discharge_lifecycle() {
        let reg = proximity_registry();
        let phone = KeyPair::generate();
        let now = at("2026-03-02T20:00:00Z");
        let tpc = ThirdPartyCaveat::new(
            phone.public,
            Caveat::custom(0x81, vec![]).unwrap(),
            "127.0.0.1:9",
        )
        .unwrap();
        let mut near = RequestContext::new(now);
        near.peer_endpoint = "near".into();
        let d = mint_discharge(
            &phone.secret,
            &tpc,
            vec![Caveat::expiry(now + Duration::minutes(5))],
            &near,
            &reg,
        )
        .unwrap();
        assert_eq!(d.expiry(), Some(now + Duration::minutes(5)));

        let cavs = vec![Caveat::ThirdParty(tpc.clone())];
        let with = RequestContext::new(now).with_discharges(vec![d.clone()]);
        assert!(reg.validate_caveats(&cavs, &with));
        assert!(!reg.validate_caveats(&cavs, &RequestContext::new(now)));
        let later = RequestContext::new(now + Duration::minutes(6)).with_discharges(vec![d.clone()]);
        assert!(!reg.validate_caveats(&cavs, &later));

        // Refusal when the check fails, authority error on key mismatch.
        let far = RequestContext::new(now);
        assert!(matches!(
            mint_discharge(&phone.secret, &tpc, vec![], &far, &reg),
            Err(MintError::Refused(_))
        ));
        let other = KeyPair::generate();
        assert_eq!(
            mint_discharge(&other.secret, &tpc, vec![], &near, &reg),
            Err(MintError::Authority)
        );
    }

    #[test]
    fn discharge_found_despite_wrong_hint() {
        let reg = proximity_registry();
        let phone = KeyPair::generate();
        let tpc = ThirdPartyCaveat::new(phone.public, Caveat::custom(0x81, vec![]).unwrap(), "x").unwrap();
        let mut con = RequestContext::new(Utc::now());
        con.peer_endpoint = "near".into();
        let mut d = mint_discharge(&phone.secret, &tpc, vec![], &con, &reg).unwrap();
        d.caveat_id = Digest([0; 32]);
        let con = con.with_discharges(vec![d]);
        assert!(reg.validate_caveats(&[Caveat::ThirdParty(tpc)], &con));
    }

    #[test]
    fn nested_discharges_and_depth_cap() {
        let reg = CaveatRegistry::new();
        let k = KeyPair::generate();
        let now = Utc::now();
        let con = RequestContext::new(now);
        let check = Caveat::expiry(now + Duration::hours(1));
        // `len` third-party caveats, each discharge carrying the next caveat.
        let nest = |len: usize| {
            let tpcs: Vec<ThirdPartyCaveat> = (0..len)
                .map(|_| ThirdPartyCaveat::new(k.public, check.clone(), "x").unwrap())
                .collect();
            let discharges: Vec<Discharge> = tpcs
                .iter()
                .enumerate()
                .map(|(i, tpc)| {
                    let inner = tpcs.get(i + 1).map(|t| vec![Caveat::ThirdParty(t.clone())]).unwrap_or_default();
                    mint_discharge(&k.secret, tpc, inner, &con, &reg).unwrap()
                })
                .collect();
            (Caveat::ThirdParty(tpcs[0].clone()), discharges)
        };
        let check_with = |cav: &Caveat, ds: &[Discharge]| {
            reg.check_caveats(std::slice::from_ref(cav), &RequestContext::new(now).with_discharges(ds.to_vec()))
        };
        let (cav, ds) = nest(MAX_DISCHARGE_DEPTH);
        assert_eq!(check_with(&cav, &ds), Ok(()));
        assert!(matches!(
            check_with(&cav, &ds[..ds.len() - 1]),
            Err(CaveatDiagnostic::MissingDischarge(_))
        ));
        let (cav, ds) = nest(MAX_DISCHARGE_DEPTH + 1);
        assert_eq!(check_with(&cav, &ds), Err(CaveatDiagnostic::TooDeep));
    }

    #[test]
    fn validate_blessing_conjuncts() {
        let reg = CaveatRegistry::new();
        let alice = KeyPair::generate();
        let tv = KeyPair::generate();
        let now = Utc::now();
        let a = self_blessing(&alice, "Alice").unwrap();
        let roots: RootSet = [a.root()].into_iter().collect();
        let mid = bless(
            &alice.public,
            &alice.secret,
            &a,
            "Home",
            vec![Caveat::expiry(now - Duration::seconds(1))],
        )
        .unwrap();
        let leaf = bless(&tv.public, &alice.secret, &mid, "TV", vec![]).unwrap();
        let con = RequestContext::new(now);
        assert_eq!(reg.check_blessing(&a, &roots, &con), Ok(()));
        assert!(matches!(
            reg.check_blessing(&leaf, &roots, &con),
            Err(ValidationFailure::Caveat(CaveatDiagnostic::Expired { .. }))
        ));
        assert_eq!(
            reg.check_blessing(&a, &RootSet::new(), &con),
            Err(ValidationFailure::UnrecognizedRoot)
        );
    }

    #[test]
    fn caveat_encoding_examples() {
        let cav = Caveat::Expiry(1);
        assert_eq!(
            cav.to_canonical_bytes(),
            vec![0x01, 0, 0, 0, 12, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 1]
        );
        let sched = Caveat::schedule(Weekday::Mon, 8, 10).unwrap();
        assert_eq!(
            sched.to_canonical_bytes(),
            vec![0x04, 0, 0, 0, 15, 0, 0, 0, 1, 0, 0, 0, 0, 1, 8, 0, 0, 0, 1, 10]
        );
    }
}
