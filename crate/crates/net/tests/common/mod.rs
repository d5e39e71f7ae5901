#![allow(dead_code)]

use bless_core::caveats::{Caveat, CaveatRegistry};
use bless_core::clock::{Clock, ManualClock};
use bless_core::store::BlessingStore;
use bless_core::{bless, self_blessing, Blessing, BlessingPattern, KeyPair, RootSet};
use bless_net::server::MethodTable;
use bless_net::{Identity, MethodPolicy, Server, ServerConfig, ServerHandle, SharedIdentity, Verifier};
use chrono::{DateTime, TimeZone, Utc};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Monday 2026-03-02 09:00 UTC.
pub fn monday_nine() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap()
}

pub fn manual_clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(monday_nine()))
}

/// An identity whose only blessing is its own self-blessing, presentable
/// to anyone, and which recognizes its own root.
pub fn identity(name: &str) -> (Identity, Blessing) {
    let keys = KeyPair::generate();
    let me = self_blessing(&keys, name).unwrap();
    let mut roots = RootSet::new();
    roots.add(me.root());
    let mut store = BlessingStore::new(keys.public);
    store.add(me.clone(), BlessingPattern::universal(), "self", monday_nine()).unwrap();
    (Identity { keys, roots, store }, me)
}

/// An identity holding `blessing` as its default, recognizing `roots`.
pub fn blessed_identity(keys: KeyPair, blessing: Blessing, roots: &[&Blessing]) -> Identity {
    let mut store = BlessingStore::new(keys.public);
    store.add(blessing.clone(), BlessingPattern::universal(), "serving", monday_nine()).unwrap();
    store.set_default(Some(blessing)).unwrap();
    Identity {
        keys,
        roots: roots.iter().map(|b| b.root()).collect(),
        store,
    }
}

pub fn extend(granter: &KeyPair, from: &Blessing, to: &KeyPair, ext: &str, caveats: Vec<Caveat>) -> Blessing {
    bless(&to.public, &granter.secret, from, ext, caveats).unwrap()
}

pub fn verifier(clock: Arc<dyn Clock>) -> Verifier {
    Verifier::default().with_clock(clock)
}

pub fn verifier_with(clock: Arc<dyn Clock>, registry: CaveatRegistry) -> Verifier {
    Verifier::default().with_clock(clock).with_registry(Arc::new(registry))
}

/// Serves `Echo` under `policy`, counting handler invocations.
pub fn echo_server(config: ServerConfig, policy: MethodPolicy) -> (ServerHandle, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let service = MethodTable {
        policies: BTreeMap::from([("Echo".to_string(), policy)]),
        handler: move |_ctx: &mut bless_net::server::CallContext<'_>, _m: &str, args: &[u8]| {
            counter.fetch_add(1, Ordering::SeqCst);
            Ok(args.to_vec())
        },
    };
    let server = Server::bind("127.0.0.1:0", config, Arc::new(service)).unwrap();
    (server.spawn().unwrap(), calls)
}

pub fn config(identity: Identity, verifier: Verifier) -> ServerConfig {
    ServerConfig::new(SharedIdentity::new(identity), verifier)
}
