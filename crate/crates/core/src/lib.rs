//! Decentralized authorization with blessings.
//!
//! A *blessing* binds a hierarchical name such as `Alice/TV` to a public key
//! through a chain of signed certificates. Holders extend blessings to
//! others, restricting them with *caveats*; some caveats are checked by third
//! parties, who issue signed *discharges*. Services authorize callers by
//! matching blessing names against ACLs of *patterns*, which may refer to
//! groups resolved across servers.

pub mod audit;
pub mod authorization;
pub mod caveat_text;
pub mod caveats;
pub mod clock;
pub mod credentials;
pub mod crypto;
pub mod encoding;
pub mod groups;
pub mod pattern;
pub mod principal;
pub mod store;

pub use authorization::{is_authorized, match_pattern, Acl, MatchMode};
pub use caveats::{Caveat, CaveatRegistry, Discharge, RequestContext, ThirdPartyCaveat};
pub use credentials::{bless, self_blessing, verify_certs, Blessing, Certificate, Root, RootSet};
pub use crypto::{KeyPair, PublicKey, SecretKey, Signature};
pub use encoding::{hash_args, Decode, DecodeError, Digest, Encode};
pub use pattern::{BlessingName, BlessingPattern};
