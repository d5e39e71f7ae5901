//! `kind=value` text syntax for caveats on the command line.
//!
//! * `expiry=+24h` (relative to now) or `expiry=2026-03-02T21:00:00Z`
//! * `methods=Lock,Unlock`
//! * `peers=Alice|SomeCorp/VideoService`
//! * `schedule=Mon:8-10`
//! * `revocation=<id>,<host:port>,<discharger public key>`
//! * `custom=0x90:<payload text>`

use crate::caveats::{weekday_from_index, Caveat, ThirdPartyCaveat, FIRST_USER_TYPE};
use crate::crypto::PublicKey;
use crate::pattern::BlessingPattern;
use chrono::{DateTime, Duration, Utc, Weekday};
use thiserror::Error;

/// Type id of the revocation check evaluated by discharge services.
pub const REVOCATION_CHECK: u8 = FIRST_USER_TYPE;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("caveat {text:?}: {reason}")]
pub struct CaveatSyntaxError {
    pub text: String,
    pub reason: String,
}

pub fn parse_caveat(text: &str, now: DateTime<Utc>) -> Result<Caveat, CaveatSyntaxError> {
    let err = |reason: String| CaveatSyntaxError {
        text: text.to_string(),
        reason,
    };
    let (kind, value) = text
        .split_once('=')
        .ok_or_else(|| err("expected kind=value".into()))?;
    let value = value.trim();
    match kind.trim() {
        "expiry" => parse_expiry(value, now).map(Caveat::Expiry).map_err(err),
        "methods" => {
            let methods: Vec<&str> = value.split(',').map(str::trim).collect();
            if methods.iter().any(|m| m.is_empty()) {
                return Err(err("empty method name".into()));
            }
            Ok(Caveat::method(methods))
        }
        "peers" => {
            let patterns = value
                .split('|')
                .map(|p| p.trim().parse::<BlessingPattern>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(e.to_string()))?;
            Caveat::peer(patterns).map_err(|e| err(e.to_string()))
        }
        "schedule" => {
            let (day, hours) = value
                .split_once(':')
                .ok_or_else(|| err("expected Day:start-end".into()))?;
            let day = parse_weekday(day).ok_or_else(|| err(format!("unknown day {day:?}")))?;
            let (start, end) = hours
                .split_once('-')
                .ok_or_else(|| err("expected start-end hours".into()))?;
            let start: u8 = start.trim().parse().map_err(|_| err("bad start hour".into()))?;
            let end: u8 = end.trim().parse().map_err(|_| err("bad end hour".into()))?;
            Caveat::schedule(day, start, end).map_err(|e| err(e.to_string()))
        }
        "revocation" => {
            let parts: Vec<&str> = value.split(',').map(str::trim).collect();
            let [id, location, key] = parts[..] else {
                return Err(err("expected id,host:port,public-key".into()));
            };
            if id.is_empty() || location.is_empty() {
                return Err(err("empty revocation id or location".into()));
            }
            let key = PublicKey::from_text(key).map_err(|e| err(e.to_string()))?;
            let check = Caveat::custom(REVOCATION_CHECK, id.as_bytes().to_vec()).map_err(|e| err(e.to_string()))?;
            ThirdPartyCaveat::new(key, check, location)
                .map(Caveat::ThirdParty)
                .map_err(|e| err(e.to_string()))
        }
        "custom" => {
            let (id, payload) = value
                .split_once(':')
                .ok_or_else(|| err("expected 0xNN:payload".into()))?;
            let id = id.trim();
            let id = id
                .strip_prefix("0x")
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| err(format!("bad type id {id:?}")))?;
            if id < FIRST_USER_TYPE {
                return Err(err(format!("type id {id:#04x} is not user-registrable")));
            }
            Caveat::custom(id, payload.as_bytes().to_vec()).map_err(|e| err(e.to_string()))
        }
        other => Err(err(format!("unknown caveat kind {other:?}"))),
    }
}

fn parse_expiry(value: &str, now: DateTime<Utc>) -> Result<i64, String> {
    if let Some(rel) = value.strip_prefix('+') {
        let d = humantime::parse_duration(rel).map_err(|e| e.to_string())?;
        let d = Duration::from_std(d).map_err(|e| e.to_string())?;
        let t = now.checked_add_signed(d).ok_or("expiry out of range")?;
        return Ok(t.timestamp());
    }
    DateTime::parse_from_rfc3339(value)
        .map(|t| t.timestamp())
        .map_err(|e| e.to_string())
}

fn parse_weekday(s: &str) -> Option<Weekday> {
    let s = s.trim();
    if let Ok(i) = s.parse::<u8>() {
        return weekday_from_index(i);
    }
    s.parse::<Weekday>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    fn now() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2026-03-02T18:00:00Z").unwrap().with_timezone(&Utc)
    }

    #[test]
    fn parses_each_kind() {
        assert_eq!(
            parse_caveat("expiry=+3h", now()).unwrap(),
            Caveat::Expiry(now().timestamp() + 3 * 3600)
        );
        assert_eq!(
            parse_caveat("expiry=2026-03-02T21:00:00Z", now()).unwrap(),
            Caveat::Expiry(now().timestamp() + 3 * 3600)
        );
        assert_eq!(
            parse_caveat("methods=Lock,Unlock", now()).unwrap(),
            Caveat::method(["Lock", "Unlock"])
        );
        assert_eq!(
            parse_caveat("schedule=Mon:8-10", now()).unwrap(),
            Caveat::schedule(Weekday::Mon, 8, 10).unwrap()
        );
        assert!(matches!(parse_caveat("peers=Alice|Bob/TV", now()).unwrap(), Caveat::Peer(p) if p.len() == 2));
        assert_eq!(
            parse_caveat("custom=0x90:PG-13", now()).unwrap(),
            Caveat::custom(0x90, b"PG-13".to_vec()).unwrap()
        );
        let key = KeyPair::generate().public;
        let c = parse_caveat(&format!("revocation=guest-7,127.0.0.1:9000,{key}"), now()).unwrap();
        match c {
            Caveat::ThirdParty(t) => {
                assert_eq!(t.location, "127.0.0.1:9000");
                assert_eq!(*t.check, Caveat::custom(REVOCATION_CHECK, b"guest-7".to_vec()).unwrap());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "expiry",
            "expiry=+soon",
            "methods=",
            "schedule=Funday:8-10",
            "schedule=Mon:10-8",
            "peers=Friends_G",
            "custom=0x02:x",
            "revocation=a,b",
            "color=blue",
        ] {
            assert!(parse_caveat(bad, now()).is_err(), "{bad} accepted");
        }
    }
}
