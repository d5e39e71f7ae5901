//! Canonical, deterministic byte encoding.
//!
//! Every signature and digest in the system is computed over this encoding,
//! so it is fixed down to the byte:
//!
//! * byte strings and text are a 4-byte big-endian length followed by the
//!   bytes (text is UTF-8);
//! * integers are length-prefixed fixed-width big-endian values;
//! * a composite value nested inside another is length-prefixed as a whole;
//! * lists are a 4-byte big-endian element count followed by the elements;
//! * caveats are a 1-byte type identifier followed by a length-prefixed
//!   payload.
//!
//! Decoding is strict: any encoding accepted by [`Decode`] re-encodes to the
//! same bytes.

use sha2::{Digest as _, Sha256};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid UTF-8 in text field")]
    InvalidUtf8,
    #[error("field has length {found}, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("invalid value: {0}")]
    Invalid(String),
}

impl DecodeError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        DecodeError::Invalid(msg.into())
    }
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.len(b.len());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    /// Element count of a list that follows.
    pub fn count(&mut self, n: usize) -> &mut Self {
        self.len(n);
        self
    }

    /// A single raw byte with no prefix; only used for caveat type ids.
    pub fn tag(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    /// Length-prefixed nested encoding.
    pub fn nested<T: Encode + ?Sized>(&mut self, value: &T) -> &mut Self {
        let inner = value.to_canonical_bytes();
        self.bytes(&inner)
    }

    /// A list of nested values.
    pub fn list<T: Encode>(&mut self, items: &[T]) -> &mut Self {
        self.count(items.len());
        for item in items {
            self.nested(item);
        }
        self
    }

    pub fn text_list<S: AsRef<str>>(&mut self, items: &[S]) -> &mut Self {
        self.count(items.len());
        for item in items {
            self.text(item.as_ref());
        }
        self
    }

    /// Append raw bytes that are already self-delimiting.
    pub fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    fn len(&mut self, n: usize) {
        let n = u32::try_from(n).expect("length exceeds 4-byte prefix");
        self.buf.extend_from_slice(&n.to_be_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Decoder { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn len(&mut self) -> Result<usize, DecodeError> {
        let raw = self.take(4)?;
        Ok(u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]) as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.len()?;
        self.take(n)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let b = self.bytes()?;
        b.try_into().map_err(|_| DecodeError::BadLength {
            expected: N,
            found: b.len(),
        })
    }

    pub fn text(&mut self) -> Result<String, DecodeError> {
        let b = self.bytes()?;
        std::str::from_utf8(b)
            .map(str::to_owned)
            .map_err(|_| DecodeError::InvalidUtf8)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.fixed::<4>()?))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.fixed::<8>()?))
    }

    /// Element count; bounded by the remaining input so hostile counts cannot
    /// trigger large allocations.
    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.len()?;
        if n > self.remaining() {
            return Err(DecodeError::Truncated(self.pos));
        }
        Ok(n)
    }

    pub fn tag(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn nested<T: Decode>(&mut self) -> Result<T, DecodeError> {
        let inner = self.bytes()?;
        T::from_canonical_bytes(inner)
    }

    pub fn list<T: Decode>(&mut self) -> Result<Vec<T>, DecodeError> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.nested()?);
        }
        Ok(out)
    }

    pub fn text_list(&mut self) -> Result<Vec<String>, DecodeError> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.text()?);
        }
        Ok(out)
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

pub trait Encode {
    fn encode(&self, enc: &mut Encoder);

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }
}

pub trait Decode: Sized {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    /// Decode a complete value, rejecting trailing bytes.
    fn from_canonical_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Encode for str {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(self);
    }
}

impl Encode for String {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(self);
    }
}

impl Decode for String {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.text()
    }
}

impl Encode for [u8] {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self);
    }
}

impl<T: Encode + ?Sized> Encode for &T {
    fn encode(&self, enc: &mut Encoder) {
        (**self).encode(enc)
    }
}

/// A list value used as a standalone hash argument.
pub struct ListOf<'a, T>(pub &'a [T]);

impl<T: Encode> Encode for ListOf<'_, T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(self.0);
    }
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Encode for Digest {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }
}

impl Decode for Digest {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Digest(dec.fixed::<32>()?))
    }
}

/// Incremental multi-argument hash. Each argument's canonical encoding is
/// wrapped in its own length prefix, so argument boundaries are unambiguous.
#[derive(Clone, Default)]
pub struct HashArgs {
    hasher: Sha256,
}

impl HashArgs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arg<T: Encode + ?Sized>(mut self, value: &T) -> Self {
        let bytes = value.to_canonical_bytes();
        let len = u32::try_from(bytes.len()).expect("argument too large");
        self.hasher.update(len.to_be_bytes());
        self.hasher.update(&bytes);
        self
    }

    pub fn finish(self) -> Digest {
        Digest(self.hasher.finalize().into())
    }
}

pub fn hash_args(args: &[&dyn Encode]) -> Digest {
    args.iter().fold(HashArgs::new(), |h, a| h.arg(*a)).finish()
}
