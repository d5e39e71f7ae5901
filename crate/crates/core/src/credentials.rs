//! Certificates, blessings, delegation and root recognition.
//!
//! A blessing is a chain of certificates. The first certificate is
//! self-signed; each later certificate is signed by the key of the previous
//! one, over the whole chain prefix plus its own contents. A certificate can
//! therefore never be lifted out of one chain and spliced into another.

use crate::caveats::Caveat;
use crate::crypto::{self, KeyPair, PublicKey, SecretKey, Signature};
use crate::encoding::{Decode, DecodeError, Decoder, Digest, Encode, Encoder, HashArgs};
use crate::pattern::{validate_component, BlessingName, NameError, SEPARATOR};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

pub const MAX_CHAIN_LENGTH: usize = 16;

/// Text prefix of the printable blessing form.
pub const BLESSING_TEXT_PREFIX: &str = "vbless1:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlessError {
    #[error(transparent)]
    Name(#[from] NameError),
    #[error("secret key does not correspond to the blessing's bound key")]
    Authority,
    #[error("chain would exceed {MAX_CHAIN_LENGTH} certificates")]
    ChainTooLong,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlessingTextError {
    #[error("missing {BLESSING_TEXT_PREFIX} prefix")]
    MissingPrefix,
    #[error("invalid base64: {0}")]
    Base64(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Certificate {
    pub name: String,
    pub public_key: PublicKey,
    pub caveats: Vec<Caveat>,
    pub signature: Signature,
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Certificate")
            .field("name", &self.name)
            .field("public_key", &self.public_key)
            .field("caveats", &self.caveats.len())
            .finish()
    }
}

impl Encode for Certificate {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(&self.name).nested(&self.public_key);
        Caveat::encode_list(&self.caveats, enc);
        enc.nested(&self.signature);
    }
}

impl Decode for Certificate {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let name = dec.text()?;
        validate_component(&name).map_err(|e| DecodeError::invalid(e.to_string()))?;
        Ok(Certificate {
            name,
            public_key: dec.nested()?,
            caveats: Caveat::decode_list(dec)?,
            signature: dec.nested()?,
        })
    }
}

/// The signed digest of the first certificate of a chain.
fn root_digest(name: &str, pk: &PublicKey, caveats: &[Caveat]) -> Digest {
    HashArgs::new()
        .arg(name)
        .arg(pk)
        .arg(&CaveatList(caveats))
        .finish()
}

/// The signed digest of a certificate appended to `prefix`.
fn extension_digest(prefix: &[Certificate], name: &str, pk: &PublicKey, caveats: &[Caveat]) -> Digest {
    HashArgs::new()
        .arg(&ChainRef(prefix))
        .arg(name)
        .arg(pk)
        .arg(&CaveatList(caveats))
        .finish()
}

/// A caveat list as a standalone hash argument.
pub struct CaveatList<'a>(pub &'a [Caveat]);

impl Encode for CaveatList<'_> {
    fn encode(&self, enc: &mut Encoder) {
        Caveat::encode_list(self.0, enc);
    }
}

struct ChainRef<'a>(&'a [Certificate]);

impl Encode for ChainRef<'_> {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(self.0);
    }
}

/// (name, public key) of a chain's first certificate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Root {
    pub name: String,
    pub public_key: PublicKey,
}

impl Encode for Root {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(&self.name).nested(&self.public_key);
    }
}

impl Decode for Root {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let name = dec.text()?;
        validate_component(&name).map_err(|e| DecodeError::invalid(e.to_string()))?;
        Ok(Root {
            name,
            public_key: dec.nested()?,
        })
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Blessing {
    chain: Vec<Certificate>,
}

impl Blessing {
    /// Wraps a raw chain. No signature checking happens here; see
    /// [`Blessing::verify_certs`].
    pub fn from_chain(chain: Vec<Certificate>) -> Result<Self, DecodeError> {
        if chain.is_empty() {
            return Err(DecodeError::invalid("blessing has no certificates"));
        }
        if chain.len() > MAX_CHAIN_LENGTH {
            return Err(DecodeError::invalid("certificate chain too long"));
        }
        Ok(Blessing { chain })
    }

    pub fn chain(&self) -> &[Certificate] {
        &self.chain
    }

    pub fn into_chain(self) -> Vec<Certificate> {
        self.chain
    }

    pub fn full_name(&self) -> String {
        self.chain
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(&SEPARATOR.to_string())
    }

    pub fn name(&self) -> BlessingName {
        BlessingName::new(self.chain.iter().map(|c| c.name.clone()).collect())
            .expect("certificate names are validated on construction")
    }

    pub fn bound_key(&self) -> &PublicKey {
        &self.chain.last().expect("non-empty chain").public_key
    }

    pub fn root(&self) -> Root {
        let first = &self.chain[0];
        Root {
            name: first.name.clone(),
            public_key: first.public_key,
        }
    }

    /// Every caveat on every certificate of the chain.
    pub fn caveats(&self) -> impl Iterator<Item = &Caveat> {
        self.chain.iter().flat_map(|c| c.caveats.iter())
    }

    pub fn verify_certs(&self) -> bool {
        verify_certs(self)
    }

    pub fn to_text(&self) -> String {
        format!(
            "{BLESSING_TEXT_PREFIX}{}",
            URL_SAFE_NO_PAD.encode(self.to_canonical_bytes())
        )
    }

    pub fn from_text(text: &str) -> Result<Self, BlessingTextError> {
        let body = text
            .trim()
            .strip_prefix(BLESSING_TEXT_PREFIX)
            .ok_or(BlessingTextError::MissingPrefix)?;
        let raw = URL_SAFE_NO_PAD
            .decode(body)
            .map_err(|e| BlessingTextError::Base64(e.to_string()))?;
        Ok(Blessing::from_canonical_bytes(&raw)?)
    }
}

impl fmt::Debug for Blessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Blessing({} -> {:?})", self.full_name(), self.bound_key())
    }
}

impl fmt::Display for Blessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.full_name())
    }
}

impl Encode for Blessing {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(&self.chain);
    }
}

impl Decode for Blessing {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let chain = dec.list::<Certificate>()?;
        Blessing::from_chain(chain)
    }
}

pub fn self_blessing(keys: &KeyPair, name: &str) -> Result<Blessing, BlessError> {
    validate_component(name)?;
    let digest = root_digest(name, &keys.public, &[]);
    Ok(Blessing {
        chain: vec![Certificate {
            name: name.to_string(),
            public_key: keys.public,
            caveats: Vec::new(),
            signature: crypto::sign(&keys.secret, &digest),
        }],
    })
}

/// Extends `blessing` to `delegate`. A multi-component `extension` becomes one
/// certificate per component; intermediate certificates carry the blesser's
/// own key and no caveats, and `caveats` go on the final certificate.
pub fn bless(
    delegate: &PublicKey,
    sk: &SecretKey,
    blessing: &Blessing,
    extension: &str,
    caveats: Vec<Caveat>,
) -> Result<Blessing, BlessError> {
    let components: Vec<&str> = extension.split(SEPARATOR).collect();
    for c in &components {
        validate_component(c)?;
    }
    if blessing.chain.len() + components.len() > MAX_CHAIN_LENGTH {
        return Err(BlessError::ChainTooLong);
    }
    let probe = HashArgs::new().arg("bless authority probe").finish();
    if !crypto::verify(blessing.bound_key(), &probe, &crypto::sign(sk, &probe)) {
        return Err(BlessError::Authority);
    }
    let own = *blessing.bound_key();
    let mut chain = blessing.chain.clone();
    let last = components.len() - 1;
    let mut caveats = Some(caveats);
    for (i, name) in components.into_iter().enumerate() {
        let (pk, cavs) = if i == last {
            (*delegate, caveats.take().unwrap_or_default())
        } else {
            (own, Vec::new())
        };
        let digest = extension_digest(&chain, name, &pk, &cavs);
        chain.push(Certificate {
            name: name.to_string(),
            public_key: pk,
            caveats: cavs,
            signature: crypto::sign(sk, &digest),
        });
    }
    Ok(Blessing { chain })
}

pub fn verify_certs(blessing: &Blessing) -> bool {
    let chain = &blessing.chain;
    if chain.is_empty() || chain.len() > MAX_CHAIN_LENGTH {
        return false;
    }
    if chain.iter().any(|c| validate_component(&c.name).is_err()) {
        return false;
    }
    let first = &chain[0];
    let digest = root_digest(&first.name, &first.public_key, &first.caveats);
    if !crypto::verify(&first.public_key, &digest, &first.signature) {
        return false;
    }
    (1..chain.len()).all(|i| {
        let cert = &chain[i];
        let digest = extension_digest(&chain[..i], &cert.name, &cert.public_key, &cert.caveats);
        crypto::verify(&chain[i - 1].public_key, &digest, &cert.signature)
    })
}

/// The set of recognized blessing roots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RootSet {
    entries: BTreeSet<Root>,
}

impl RootSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the root was already present.
    pub fn add(&mut self, root: Root) -> bool {
        self.entries.insert(root)
    }

    pub fn remove(&mut self, root: &Root) -> bool {
        self.entries.remove(root)
    }

    pub fn contains(&self, root: &Root) -> bool {
        self.entries.contains(root)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Root> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_subset(&self, other: &RootSet) -> bool {
        self.entries.is_subset(&other.entries)
    }
}

impl FromIterator<Root> for RootSet {
    fn from_iter<I: IntoIterator<Item = Root>>(iter: I) -> Self {
        RootSet {
            entries: iter.into_iter().collect(),
        }
    }
}

impl Encode for RootSet {
    fn encode(&self, enc: &mut Encoder) {
        let roots: Vec<&Root> = self.entries.iter().collect();
        enc.list(&roots);
    }
}

impl Decode for RootSet {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let roots = dec.list::<Root>()?;
        let set: BTreeSet<Root> = roots.iter().cloned().collect();
        if set.len() != roots.len() || !roots.windows(2).all(|w| w[0] < w[1]) {
            return Err(DecodeError::invalid("root set is not sorted and duplicate-free"));
        }
        Ok(RootSet { entries: set })
    }
}

pub fn is_recognized(blessing: &Blessing, roots: &RootSet) -> bool {
    roots.contains(&blessing.root())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caveats::Caveat;

    fn kp() -> KeyPair {
        KeyPair::generate()
    }

    #[test]
    fn self_blessing_basics() {
        let alice = kp();
        let b = self_blessing(&alice, "Alice").unwrap();
        assert_eq!(b.full_name(), "Alice");
        assert_eq!(b.bound_key(), &alice.public);
        assert_eq!(
            b.root(),
            Root {
                name: "Alice".into(),
                public_key: alice.public
            }
        );
        assert!(b.verify_certs());
        assert!(matches!(
            self_blessing(&alice, "Ali/ce"),
            Err(BlessError::Name(NameError::ContainsSeparator(_)))
        ));
        assert!(self_blessing(&alice, "eob").is_err());
    }

    #[test]
    fn bless_extends_chain() {
        let alice = kp();
        let tv = kp();
        let b = self_blessing(&alice, "Alice").unwrap();
        let tvb = bless(&tv.public, &alice.secret, &b, "TV", vec![]).unwrap();
        assert_eq!(tvb.full_name(), "Alice/TV");
        assert_eq!(tvb.bound_key(), &tv.public);
        assert!(tvb.verify_certs());
        assert_eq!(
            bless(&tv.public, &tv.secret, &b, "TV", vec![]),
            Err(BlessError::Authority)
        );
    }

    #[test]
    fn popular_corp_accessors() {
        let corp = kp();
        let tv = kp();
        let b = self_blessing(&corp, "PopularCorp").unwrap();
        let tvb = bless(&tv.public, &corp.secret, &b, "TV123", vec![]).unwrap();
        assert_eq!(tvb.full_name(), "PopularCorp/TV123");
        assert_eq!(tvb.bound_key(), &tv.public);
    }

    #[test]
    fn multi_component_extension() {
        let alice = kp();
        let tv = kp();
        let b = self_blessing(&alice, "Alice").unwrap();
        let cav = Caveat::method(["Watch"]);
        let tvb = bless(&tv.public, &alice.secret, &b, "home/bedroom/TV", vec![cav.clone()]).unwrap();
        assert_eq!(tvb.full_name(), "Alice/home/bedroom/TV");
        assert!(tvb.verify_certs());
        let chain = tvb.chain();
        assert_eq!(chain[1].public_key, alice.public);
        assert!(chain[1].caveats.is_empty());
        assert_eq!(chain[3].caveats, vec![cav]);
        assert!(bless(&tv.public, &alice.secret, &b, "home//TV", vec![]).is_err());
    }

    #[test]
    fn chain_length_is_capped() {
        let k = kp();
        let mut b = self_blessing(&k, "A").unwrap();
        for _ in 1..MAX_CHAIN_LENGTH {
            b = bless(&k.public, &k.secret, &b, "x", vec![]).unwrap();
        }
        assert_eq!(b.chain().len(), MAX_CHAIN_LENGTH);
        assert_eq!(
            bless(&k.public, &k.secret, &b, "x", vec![]),
            Err(BlessError::ChainTooLong)
        );
    }

    #[test]
    fn transplant_fails() {
        let alice = kp();
        let carol = kp();
        let tv = kp();
        let a = self_blessing(&alice, "Alice").unwrap();
        let c = self_blessing(&carol, "Carol").unwrap();
        let a_tv = bless(&tv.public, &alice.secret, &a, "TV", vec![]).unwrap();
        // Carol's chain with Alice's TV certificate spliced on.
        let mut chain = c.chain().to_vec();
        chain.push(a_tv.chain()[1].clone());
        assert!(!Blessing::from_chain(chain).unwrap().verify_certs());
    }

    #[test]
    fn recognition() {
        let alice = kp();
        let attacker = kp();
        let real = self_blessing(&alice, "Alice").unwrap();
        let forged = self_blessing(&attacker, "Alice").unwrap();
        let roots: RootSet = [real.root()].into_iter().collect();
        let tv = bless(&kp().public, &alice.secret, &real, "TV", vec![]).unwrap();
        assert!(is_recognized(&tv, &roots));
        assert!(!is_recognized(&forged, &roots));
        assert!(!is_recognized(&tv, &RootSet::new()));
    }

    #[test]
    fn text_form_roundtrip() {
        let alice = kp();
        let b = self_blessing(&alice, "Alice").unwrap();
        let text = b.to_text();
        assert!(text.starts_with("vbless1:"));
        assert_eq!(Blessing::from_text(&text).unwrap(), b);
        assert_eq!(
            Blessing::from_text("Alice"),
            Err(BlessingTextError::MissingPrefix)
        );
    }

    #[test]
    fn root_set_encoding_rejects_duplicates() {
        let r = self_blessing(&kp(), "A").unwrap().root();
        let mut enc = Encoder::new();
        enc.list(&[r.clone(), r]);
        assert!(RootSet::from_canonical_bytes(&enc.finish()).is_err());
    }
}
