//! ECDSA P-256 keys and signatures over SHA-256 digests.

use crate::encoding::{Decode, DecodeError, Decoder, Digest, Encode, Encoder};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use p256::ecdsa::signature::Signer;
use p256::ecdsa::{Signature as EcdsaSignature, SigningKey, VerifyingKey};
use ring::signature::{UnparsedPublicKey, ECDSA_P256_SHA256_FIXED};
use std::fmt;
use thiserror::Error;

/// Scheme identifier for ECDSA over P-256 with SHA-256 digests.
pub const SCHEME_ECDSA_P256: u8 = 0x01;

const COMPRESSED_POINT_LEN: usize = 33;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("unsupported signature scheme {0:#04x}")]
    UnsupportedScheme(u8),
    #[error("malformed key material")]
    Malformed,
    #[error("malformed key text: {0}")]
    BadText(String),
}

/// A verification key: SEC1 compressed P-256 point.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey([u8; COMPRESSED_POINT_LEN]);

impl PublicKey {
    pub fn from_sec1_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        let vk = VerifyingKey::from_sec1_bytes(bytes).map_err(|_| KeyError::Malformed)?;
        Ok(Self::from_verifying_key(&vk))
    }

    fn from_verifying_key(vk: &VerifyingKey) -> Self {
        let point = vk.to_encoded_point(true);
        let mut out = [0u8; COMPRESSED_POINT_LEN];
        out.copy_from_slice(point.as_bytes());
        PublicKey(out)
    }

    pub fn as_sec1_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Unpadded base64url of the canonical encoding.
    pub fn to_text(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.to_canonical_bytes())
    }

    pub fn from_text(text: &str) -> Result<Self, KeyError> {
        let raw = URL_SAFE_NO_PAD
            .decode(text.trim())
            .map_err(|e| KeyError::BadText(e.to_string()))?;
        PublicKey::from_canonical_bytes(&raw).map_err(|e| KeyError::BadText(e.to_string()))
    }

    /// Short fingerprint for logs and listings.
    pub fn fingerprint(&self) -> String {
        let d = crate::encoding::HashArgs::new().arg(self).finish();
        d.to_hex()[..16].to_string()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.fingerprint())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Encode for PublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(SCHEME_ECDSA_P256).bytes(&self.0);
    }
}

impl Decode for PublicKey {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let scheme = dec.u8()?;
        if scheme != SCHEME_ECDSA_P256 {
            return Err(DecodeError::invalid(format!(
                "unsupported signature scheme {scheme:#04x}"
            )));
        }
        let point = dec.bytes()?;
        if point.len() != COMPRESSED_POINT_LEN {
            return Err(DecodeError::BadLength {
                expected: COMPRESSED_POINT_LEN,
                found: point.len(),
            });
        }
        let key = PublicKey::from_sec1_bytes(point)
            .map_err(|_| DecodeError::invalid("public key is not a curve point"))?;
        // Reject non-canonical point encodings.
        if key.0[..] != point[..] {
            return Err(DecodeError::invalid("non-canonical point encoding"));
        }
        Ok(key)
    }
}

/// A signing key. Never encoded onto the wire; only into the owner's key file.
#[derive(Clone)]
pub struct SecretKey(SigningKey);

impl SecretKey {
    pub fn generate() -> Self {
        SecretKey(SigningKey::random(&mut rand::rngs::OsRng))
    }

    pub fn from_scalar_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        SigningKey::from_slice(bytes)
            .map(SecretKey)
            .map_err(|_| KeyError::Malformed)
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey::from_verifying_key(self.0.verifying_key())
    }

    /// Key file contents: canonical encoding of (scheme-id, secret bytes).
    pub fn to_key_file(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(SCHEME_ECDSA_P256).bytes(&self.0.to_bytes());
        enc.finish()
    }

    pub fn from_key_file(data: &[u8]) -> Result<Self, KeyError> {
        let mut dec = Decoder::new(data);
        let scheme = dec.u8().map_err(|_| KeyError::Malformed)?;
        if scheme != SCHEME_ECDSA_P256 {
            return Err(KeyError::UnsupportedScheme(scheme));
        }
        let raw = dec.bytes().map_err(|_| KeyError::Malformed)?;
        dec.finish().map_err(|_| KeyError::Malformed)?;
        SecretKey::from_scalar_bytes(raw)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey(public={})", self.public_key().fingerprint())
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl KeyPair {
    pub fn generate() -> Self {
        Self::from_secret(SecretKey::generate())
    }

    pub fn from_secret(secret: SecretKey) -> Self {
        KeyPair {
            public: secret.public_key(),
            secret,
        }
    }
}

/// Fixed-width `r || s` signature bytes. Arbitrary bytes are representable so
/// that malformed signatures simply fail verification.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex: String = self.0.iter().take(8).map(|b| format!("{b:02x}")).collect();
        write!(f, "Signature({hex}..)")
    }
}

impl Encode for Signature {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }
}

impl Decode for Signature {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Signature(dec.bytes()?.to_vec()))
    }
}

/// Signs the digest bytes as an ECDSA-SHA256 message, deterministically.
pub fn sign(sk: &SecretKey, digest: &Digest) -> Signature {
    let sig: EcdsaSignature = sk.0.sign(digest.as_bytes());
    Signature(sig.to_bytes().to_vec())
}

/// True exactly when `sig` was produced over `digest` by the secret key
/// matching `pk`. Malformed keys or signatures yield false.
pub fn verify(pk: &PublicKey, digest: &Digest, sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_sec1_bytes(pk.as_sec1_bytes()) else {
        return false;
    };
    let point = vk.to_encoded_point(false);
    UnparsedPublicKey::new(&ECDSA_P256_SHA256_FIXED, point.as_bytes())
        .verify(digest.as_bytes(), &sig.0)
        .is_ok()
}
