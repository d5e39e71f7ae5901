use bless_core::caveats::{Caveat, CaveatRegistry, RequestContext, ValidationFailure};
use bless_core::clock::{Clock, SystemClock};
use bless_core::credentials::is_recognized;
use bless_core::groups::{GroupResolver, NoGroups};
use bless_core::principal::Principal;
use bless_core::store::BlessingStore;
use bless_core::{Blessing, BlessingName, KeyPair, RootSet};
use chrono::{Duration, FixedOffset};
use std::sync::{Arc, RwLock};

/// The credentials one end of a connection acts with.
#[derive(Debug)]
pub struct Identity {
    pub keys: KeyPair,
    pub roots: RootSet,
    pub store: BlessingStore,
}

impl Identity {
    pub fn from_principal(p: Principal) -> Self {
        Identity {
            keys: p.keys,
            roots: p.roots,
            store: p.store,
        }
    }

    /// What this end presents when accepting connections: the default
    /// blessing if set, otherwise everything presentable to anyone.
    pub fn server_blessings(&self) -> Vec<Blessing> {
        match self.store.default_blessing() {
            Some(b) => vec![b.clone()],
            None => self.store.presentable_to_anyone().into_iter().cloned().collect(),
        }
    }

    /// Every name this end holds a blessing for.
    pub fn own_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.store.entries().iter().map(|e| e.blessing.full_name()).collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Identity that a running service may replace, as the lock does when it is
/// claimed. Readers take cheap snapshots.
#[derive(Clone, Debug)]
pub struct SharedIdentity(Arc<RwLock<Arc<Identity>>>);

impl SharedIdentity {
    pub fn new(identity: Identity) -> Self {
        SharedIdentity(Arc::new(RwLock::new(Arc::new(identity))))
    }

    pub fn get(&self) -> Arc<Identity> {
        self.0.read().unwrap().clone()
    }

    pub fn set(&self, identity: Identity) {
        *self.0.write().unwrap() = Arc::new(identity);
    }
}

/// Settings shared by both ends for judging the peer's blessings.
#[derive(Clone)]
pub struct Verifier {
    pub registry: Arc<CaveatRegistry>,
    pub resolver: Arc<dyn GroupResolver>,
    pub clock: Arc<dyn Clock>,
    pub local_offset: FixedOffset,
    pub clock_skew: Duration,
}

impl Default for Verifier {
    fn default() -> Self {
        Verifier {
            registry: Arc::new(CaveatRegistry::new()),
            resolver: Arc::new(NoGroups),
            clock: Arc::new(SystemClock),
            local_offset: FixedOffset::east_opt(0).expect("zero offset"),
            clock_skew: Duration::zero(),
        }
    }
}

impl Verifier {
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_registry(mut self, registry: Arc<CaveatRegistry>) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_resolver(mut self, resolver: Arc<dyn GroupResolver>) -> Self {
        self.resolver = resolver;
        self
    }

    pub fn with_offset(mut self, offset: FixedOffset) -> Self {
        self.local_offset = offset;
        self
    }

    pub fn context(&self) -> RequestContext {
        RequestContext::new(self.clock.now())
            .with_offset(self.local_offset)
            .with_skew(self.clock_skew)
    }

    /// Validation at connection time, before any method is known: method
    /// caveats are left for each call to enforce.
    pub fn check_at_handshake(&self, b: &Blessing, roots: &RootSet, con: &RequestContext) -> Result<(), ValidationFailure> {
        if !b.verify_certs() {
            return Err(ValidationFailure::InvalidChain);
        }
        if !is_recognized(b, roots) {
            return Err(ValidationFailure::UnrecognizedRoot);
        }
        let caveats: Vec<Caveat> = b
            .caveats()
            .filter(|c| !matches!(c, Caveat::Method(_)))
            .cloned()
            .collect();
        self.registry
            .check_caveats(&caveats, con)
            .map_err(ValidationFailure::Caveat)
    }
}

/// Names of the blessings that pass `check`, and a "name: failure" line for
/// each one that does not.
pub fn valid_names<F>(blessings: &[Blessing], mut check: F) -> (Vec<BlessingName>, Vec<String>)
where
    F: FnMut(&Blessing) -> Result<(), ValidationFailure>,
{
    let mut names = Vec::new();
    let mut failures = Vec::new();
    for b in blessings {
        match check(b) {
            Ok(()) => names.push(b.name()),
            Err(e) => failures.push(format!("{}: {e}", b.name())),
        }
    }
    (names, failures)
}
