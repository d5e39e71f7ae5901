//! Encrypted framing over an authenticated connection. Each direction has
//! its own key and a message counter used as the nonce; the frame type byte
//! is bound as associated data.

use crate::error::NetError;
use crate::frame::{read_frame, write_frame, Frame};
use crate::messages::Message;
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

pub const KEY_LEN: usize = 32;

/// One direction of the channel.
pub struct CipherState {
    aead: ChaCha20Poly1305,
    seq: u64,
}

impl CipherState {
    pub fn new(key: &[u8; KEY_LEN]) -> Self {
        CipherState {
            aead: ChaCha20Poly1305::new(&Key::from(*key)),
            seq: 0,
        }
    }

    fn next_nonce(&mut self) -> Result<Nonce, NetError> {
        let mut n = [0u8; 12];
        n[4..].copy_from_slice(&self.seq.to_be_bytes());
        self.seq = self
            .seq
            .checked_add(1)
            .ok_or_else(|| NetError::Protocol("message counter exhausted".into()))?;
        Ok(Nonce::from(n))
    }

    pub fn seal(&mut self, msg: &Message) -> Result<Frame, NetError> {
        let kind = msg.kind();
        let nonce = self.next_nonce()?;
        let body = msg.body();
        let ct = self
            .aead
            .encrypt(&nonce, Payload { msg: &body, aad: &[kind.code()] })
            .map_err(|_| NetError::Protocol("encryption failed".into()))?;
        Ok(Frame::new(kind, ct))
    }

    pub fn open(&mut self, frame: &Frame) -> Result<Message, NetError> {
        let nonce = self.next_nonce()?;
        let pt = self
            .aead
            .decrypt(
                &nonce,
                Payload {
                    msg: &frame.payload,
                    aad: &[frame.kind.code()],
                },
            )
            .map_err(|_| NetError::Authentication("frame failed integrity check".into()))?;
        Ok(Message::decode(frame.kind, &pt)?)
    }
}

pub struct SecureChannel {
    stream: TcpStream,
    send: CipherState,
    recv: CipherState,
}

impl SecureChannel {
    pub fn new(stream: TcpStream, send_key: &[u8; KEY_LEN], recv_key: &[u8; KEY_LEN]) -> Self {
        SecureChannel {
            stream,
            send: CipherState::new(send_key),
            recv: CipherState::new(recv_key),
        }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), NetError> {
        let frame = self.send.seal(msg)?;
        write_frame(&mut self.stream, &frame)
    }

    pub fn recv(&mut self) -> Result<Message, NetError> {
        let frame = read_frame(&mut self.stream)?;
        self.recv.open(&frame)
    }

    /// Decrypts a frame that was read before the channel existed.
    pub fn open_frame(&mut self, frame: &Frame) -> Result<Message, NetError> {
        self.recv.open(frame)
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> Result<(), NetError> {
        self.stream.set_read_timeout(timeout)?;
        self.stream.set_write_timeout(timeout)?;
        Ok(())
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}
