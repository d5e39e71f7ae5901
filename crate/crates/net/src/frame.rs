//! Length-prefixed frames: a 4-byte big-endian length covering the type byte
//! and payload, then the type byte, then the payload.

use crate::error::NetError;
use std::fmt;
use std::io::{Read, Write};

/// Largest accepted frame, type byte included.
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    ServerAuth = 0x02,
    ClientAuth = 0x03,
    Call = 0x04,
    Reply = 0x05,
    DischargeRequest = 0x06,
    DischargeReply = 0x07,
    GroupQuery = 0x08,
    GroupResult = 0x09,
    Grant = 0x0a,
    Close = 0x0f,
}

impl MessageType {
    pub const ALL: [MessageType; 11] = [
        MessageType::Hello,
        MessageType::ServerAuth,
        MessageType::ClientAuth,
        MessageType::Call,
        MessageType::Reply,
        MessageType::DischargeRequest,
        MessageType::DischargeReply,
        MessageType::GroupQuery,
        MessageType::GroupResult,
        MessageType::Grant,
        MessageType::Close,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: MessageType, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NetError> {
        let len = self.payload.len() + 1;
        if len > MAX_FRAME {
            return Err(NetError::FrameTooLarge(len));
        }
        let mut out = Vec::with_capacity(len + 4);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = bytes;
        let frame = read_frame(&mut r)?;
        if !r.is_empty() {
            return Err(NetError::Protocol("trailing bytes after frame".into()));
        }
        Ok(frame)
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), NetError> {
    w.write_all(&frame.to_bytes()?).map_err(NetError::from_io)?;
    w.flush().map_err(NetError::from_io)?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, NetError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(NetError::from_io)?;
    let len = u32::from_be_bytes(len) as usize;
    if len == 0 {
        return Err(NetError::Protocol("empty frame".into()));
    }
    if len > MAX_FRAME {
        return Err(NetError::FrameTooLarge(len));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(NetError::from_io)?;
    let kind = MessageType::from_code(kind[0])
        .ok_or_else(|| NetError::Protocol(format!("unknown message type {:#04x}", kind[0])))?;
    let mut payload = vec![0u8; len - 1];
    r.read_exact(&mut payload).map_err(NetError::from_io)?;
    Ok(Frame { kind, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let f = Frame::new(MessageType::Call, vec![0xaa, 0xbb]);
        assert_eq!(f.to_bytes().unwrap(), vec![0, 0, 0, 3, 0x04, 0xaa, 0xbb]);
        assert_eq!(Frame::from_bytes(&f.to_bytes().unwrap()).unwrap(), f);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(Frame::from_bytes(&[0, 0, 0, 0]).is_err());
        assert!(Frame::from_bytes(&[0, 0, 0, 1, 0x0b]).is_err());
        assert!(Frame::from_bytes(&[0, 0, 0, 2, 0x01]).is_err());
        assert!(Frame::from_bytes(&[0, 0x10, 0, 1, 0x01]).is_err());
        assert!(Frame::from_bytes(&[0, 0, 0, 1, 0x01, 9]).is_err());
        let big = Frame::new(MessageType::Call, vec![0; MAX_FRAME]);
        assert!(matches!(big.to_bytes(), Err(NetError::FrameTooLarge(_))));
    }

    #[test]
    fn type_codes_are_fixed() {
        let codes: Vec<u8> = MessageType::ALL.iter().map(|t| t.code()).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 0x0a, 0x0f]);
    }
}
