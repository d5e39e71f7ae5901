//! The blessing store: acquired blessings, each tagged with the pattern of
//! peers it may be shown to.

use crate::authorization::{match_pattern, MatchMode, NoGroups};
use crate::credentials::Blessing;
use crate::crypto::PublicKey;
use crate::encoding::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::pattern::{BlessingName, BlessingPattern};
use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;

/// Leading byte of the persisted store format.
pub const STORE_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("blessing {name} is bound to another key")]
    Ownership { name: String },
    #[error("blessing {name} has an invalid certificate chain")]
    InvalidChain { name: String },
    #[error("peer pattern {0} references a group")]
    GroupPattern(String),
    #[error("unsupported store format version {0}")]
    Version(u8),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreEntry {
    pub blessing: Blessing,
    pub peer_pattern: BlessingPattern,
    pub label: String,
    pub acquired_at: DateTime<Utc>,
}

impl Encode for StoreEntry {
    fn encode(&self, enc: &mut Encoder) {
        enc.nested(&self.blessing)
            .text(&self.peer_pattern.to_string())
            .text(&self.label)
            .i64(self.acquired_at.timestamp_millis());
    }
}

impl Decode for StoreEntry {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let blessing = dec.nested()?;
        let text = dec.text()?;
        let peer_pattern: BlessingPattern = text.parse().map_err(|e: crate::pattern::NameError| DecodeError::invalid(e.to_string()))?;
        if peer_pattern.to_string() != text || peer_pattern.has_groups() {
            return Err(DecodeError::invalid("bad peer pattern"));
        }
        let label = dec.text()?;
        let millis = dec.i64()?;
        let acquired_at = Utc
            .timestamp_millis_opt(millis)
            .single()
            .ok_or_else(|| DecodeError::invalid("acquisition time out of range"))?;
        Ok(StoreEntry {
            blessing,
            peer_pattern,
            label,
            acquired_at,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlessingStore {
    owner: PublicKey,
    entries: Vec<StoreEntry>,
    default_blessing: Option<Blessing>,
}

impl BlessingStore {
    pub fn new(owner: PublicKey) -> Self {
        BlessingStore {
            owner,
            entries: Vec::new(),
            default_blessing: None,
        }
    }

    pub fn owner(&self) -> &PublicKey {
        &self.owner
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn default_blessing(&self) -> Option<&Blessing> {
        self.default_blessing.as_ref()
    }

    fn check(&self, b: &Blessing) -> Result<(), StoreError> {
        if b.bound_key() != &self.owner {
            return Err(StoreError::Ownership { name: b.full_name() });
        }
        if !b.verify_certs() {
            return Err(StoreError::InvalidChain { name: b.full_name() });
        }
        Ok(())
    }

    pub fn add(
        &mut self,
        blessing: Blessing,
        peer_pattern: BlessingPattern,
        label: impl Into<String>,
        acquired_at: DateTime<Utc>,
    ) -> Result<(), StoreError> {
        self.check(&blessing)?;
        if peer_pattern.has_groups() {
            return Err(StoreError::GroupPattern(peer_pattern.to_string()));
        }
        let acquired_at = Utc
            .timestamp_millis_opt(acquired_at.timestamp_millis())
            .single()
            .expect("millisecond truncation stays in range");
        self.entries.push(StoreEntry {
            blessing,
            peer_pattern,
            label: label.into(),
            acquired_at,
        });
        Ok(())
    }

    pub fn set_default(&mut self, blessing: Option<Blessing>) -> Result<(), StoreError> {
        if let Some(b) = &blessing {
            self.check(b)?;
        }
        self.default_blessing = blessing;
        Ok(())
    }

    /// Removes entries with the given label; returns how many were removed.
    pub fn remove_label(&mut self, label: &str) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.label != label);
        before - self.entries.len()
    }

    pub fn by_label(&self, label: &str) -> Option<&StoreEntry> {
        self.sorted().into_iter().find(|e| e.label == label)
    }

    fn sorted(&self) -> Vec<&StoreEntry> {
        let mut v: Vec<&StoreEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| (a.acquired_at, &a.label).cmp(&(b.acquired_at, &b.label)));
        v
    }

    /// Blessings whose peer pattern matches at least one of `peer_names`,
    /// ordered by acquisition time, then label.
    pub fn select_for_peer(&self, peer_names: &[BlessingName]) -> Vec<&Blessing> {
        self.sorted()
            .into_iter()
            .filter(|e| {
                peer_names
                    .iter()
                    .any(|n| match_pattern(&e.peer_pattern, n, &NoGroups, MatchMode::Allow))
            })
            .map(|e| &e.blessing)
            .collect()
    }

    /// Blessings stored with the universal peer pattern.
    pub fn presentable_to_anyone(&self) -> Vec<&Blessing> {
        self.sorted()
            .into_iter()
            .filter(|e| e.peer_pattern.is_universal())
            .map(|e| &e.blessing)
            .collect()
    }

    /// Persisted form: version byte, then the canonical encoding of the
    /// owner, entries and optional default blessing.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(&[STORE_FORMAT_VERSION]);
        enc.nested(&self.owner).list(&self.entries);
        match &self.default_blessing {
            Some(b) => enc.u8(1).nested(b),
            None => enc.u8(0),
        };
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, StoreError> {
        let (&version, body) = data.split_first().ok_or(DecodeError::Truncated(0))?;
        if version != STORE_FORMAT_VERSION {
            return Err(StoreError::Version(version));
        }
        let mut dec = Decoder::new(body);
        let owner: PublicKey = dec.nested()?;
        let entries: Vec<StoreEntry> = dec.list()?;
        let default_blessing = match dec.u8()? {
            0 => None,
            1 => Some(dec.nested()?),
            other => return Err(DecodeError::invalid(format!("bad default flag {other}")).into()),
        };
        dec.finish()?;
        let mut store = BlessingStore::new(owner);
        for e in entries {
            store.add(e.blessing, e.peer_pattern, e.label, e.acquired_at)?;
        }
        store.set_default(default_blessing)?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::{bless, self_blessing};
    use crate::crypto::KeyPair;

    fn bn(s: &str) -> BlessingName {
        s.parse().unwrap()
    }

    #[test]
    fn houseguest_blessing_is_only_shown_to_alice() {
        let alice = KeyPair::generate();
        let bob = KeyPair::generate();
        let a = self_blessing(&alice, "Alice").unwrap();
        let guest = bless(&bob.public, &alice.secret, &a, "Houseguest/Bob", vec![]).unwrap();
        let mut store = BlessingStore::new(bob.public);
        store
            .add(guest.clone(), "Alice".parse().unwrap(), "guest", Utc::now())
            .unwrap();
        assert_eq!(store.select_for_peer(&[bn("Alice/TV")]), vec![&guest]);
        assert!(store.select_for_peer(&[bn("SomeCorp/VideoService")]).is_empty());
        assert!(store.select_for_peer(&[]).is_empty());
        assert!(BlessingStore::new(bob.public).select_for_peer(&[bn("Alice")]).is_empty());
    }

    #[test]
    fn rejects_foreign_and_grouped() {
        let alice = KeyPair::generate();
        let bob = KeyPair::generate();
        let a = self_blessing(&alice, "Alice").unwrap();
        let mut store = BlessingStore::new(bob.public);
        assert!(matches!(
            store.add(a.clone(), BlessingPattern::universal(), "x", Utc::now()),
            Err(StoreError::Ownership { .. })
        ));
        let b = self_blessing(&bob, "Bob").unwrap();
        assert!(matches!(
            store.add(b, "Friends_G".parse().unwrap(), "x", Utc::now()),
            Err(StoreError::GroupPattern(_))
        ));
    }

    #[test]
    fn ordering_and_roundtrip() {
        let bob = KeyPair::generate();
        let b1 = self_blessing(&bob, "B1").unwrap();
        let b2 = self_blessing(&bob, "B2").unwrap();
        let t = Utc.timestamp_millis_opt(1_700_000_000_000).unwrap();
        let mut store = BlessingStore::new(bob.public);
        store.add(b2.clone(), BlessingPattern::universal(), "b", t).unwrap();
        store.add(b1.clone(), BlessingPattern::universal(), "a", t).unwrap();
        store.set_default(Some(b1.clone())).unwrap();
        assert_eq!(store.select_for_peer(&[bn("x")]), vec![&b1, &b2]);
        let back = BlessingStore::from_bytes(&store.to_bytes()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.by_label("b").unwrap().blessing, b2);
        assert_eq!(store.remove_label("a"), 1);
    }
}
