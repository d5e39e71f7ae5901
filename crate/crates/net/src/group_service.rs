//! Group servers answer remainder queries for the groups they define, and
//! resolve foreign groups through other servers named in a registry.

use crate::client::{Client, ClientOptions};
use crate::handshake::PeerInfo;
use crate::identity::Identity;
use crate::messages::GroupResult;
use crate::network::Network;
use crate::server::{CallContext, MethodPolicy, Service};
use bless_core::pattern::validate_group_name;
use bless_core::groups::{GroupResolver, LocalResolver, RemainderQuery, RemainderResult};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;
use tracing::debug;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("registry line {line}: {reason}")]
pub struct RegistryError {
    pub line: usize,
    pub reason: String,
}

/// Where each group is served. Text form: one `group host:port` pair per
/// line; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroupRegistry {
    endpoints: BTreeMap<String, String>,
}

impl GroupRegistry {
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut endpoints = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| RegistryError { line: i + 1, reason };
            let mut parts = line.split_whitespace();
            let (Some(group), Some(endpoint), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `group host:port`".into()));
            };
            validate_group_name(group).map_err(|e| err(e.to_string()))?;
            if !endpoint.contains(':') {
                return Err(err(format!("endpoint {endpoint:?} lacks a port")));
            }
            if endpoints.insert(group.to_string(), endpoint.to_string()).is_some() {
                return Err(err(format!("group {group} listed twice")));
            }
        }
        Ok(GroupRegistry { endpoints })
    }

    pub fn insert(&mut self, group: impl Into<String>, endpoint: impl Into<String>) {
        self.endpoints.insert(group.into(), endpoint.into());
    }

    pub fn endpoint(&self, group: &str) -> Option<&str> {
        self.endpoints.get(group).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.endpoints.iter().map(|(g, e)| format!("{g} {e}\n")).collect()
    }
}

/// Resolves groups by asking the servers listed in a registry. Anything
/// that cannot be asked or answered becomes an unreachable approximation.
pub struct RemoteResolver {
    registry: GroupRegistry,
    net: Arc<dyn Network>,
    identity: Arc<Identity>,
    options: ClientOptions,
}

impl RemoteResolver {
    pub fn new(registry: GroupRegistry, net: Arc<dyn Network>, identity: Arc<Identity>, options: ClientOptions) -> Self {
        RemoteResolver {
            registry,
            net,
            identity,
            options,
        }
    }

    fn ask(&self, endpoint: &str, query: &RemainderQuery) -> Option<RemainderResult> {
        let mut client = Client::connect(self.net.as_ref(), endpoint, &self.identity, &self.options).ok()?;
        let answer = client.group_query(query);
        client.close();
        match answer {
            Ok(GroupResult::Found(r)) if r.consumed.iter().all(|&c| c >= 1 && c <= query.name.len()) => Some(r),
            other => {
                debug!(group = %query.group, ?other, "group server gave no usable answer");
                None
            }
        }
    }
}

impl GroupResolver for RemoteResolver {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult {
        self.registry
            .endpoint(&query.group)
            .and_then(|ep| self.ask(ep, query))
            .unwrap_or_else(|| RemainderResult::unreachable(&query.name, query.mode))
    }
}

/// Serves the groups defined in a local resolver; foreign groups those
/// definitions mention are resolved by the resolver's fallback.
pub struct GroupService {
    resolver: LocalResolver,
}

impl GroupService {
    pub fn new(resolver: LocalResolver) -> Self {
        GroupService { resolver }
    }
}

impl Service for GroupService {
    fn policy(&self, _method: &str) -> Option<MethodPolicy> {
        None
    }

    fn call(&self, _ctx: &mut CallContext<'_>, method: &str, _args: &[u8]) -> Result<Vec<u8>, String> {
        Err(format!("no method {method}"))
    }

    fn group_query(&self, _peer: &PeerInfo, query: &RemainderQuery) -> GroupResult {
        if self.resolver.definition(&query.group).is_none() {
            return GroupResult::Unknown;
        }
        GroupResult::Found(self.resolver.remainders(query))
    }
}
