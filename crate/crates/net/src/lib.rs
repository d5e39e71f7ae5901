//! Networked services over mutually authenticated, encrypted connections.
//!
//! Each connection begins with a handshake in which the server presents its
//! blessings first; each side validates the other's blessings against its
//! own recognized roots and policy before any application data flows.
//! Calls are then authorized per method and recorded in an audit log. The
//! same transport carries discharge requests, group membership queries,
//! and blessing grants.

pub mod channel;
pub mod client;
pub mod discharge;
pub mod error;
pub mod frame;
pub mod group_service;
pub mod handshake;
pub mod identity;
pub mod lockd;
pub mod messages;
pub mod network;
pub mod server;

pub use client::{CallOutcome, Client, ClientOptions, DischargeFetcher};
pub use error::NetError;
pub use identity::{Identity, SharedIdentity, Verifier};
pub use network::{Network, RecordingNetwork, TcpNetwork};
pub use server::{MethodPolicy, Server, ServerConfig, ServerHandle, Service};
