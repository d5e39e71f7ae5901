//! Group membership as a grammar over blessing names.
//!
//! A group definition `g = {p1, .., pk}` is read as productions `g -> p1 |
//! .. | pk`, with name components as terminals and groups as non-terminals.
//! Resolution answers *remainder queries*: given `g` and a name `bn`, which
//! suffixes `y` are left over when a prefix `x` of `bn` derives from `g`.
//!
//! Definitions held by unreachable servers are approximated: from below by
//! the empty set (`Mode::Under`) and from above by every name
//! (`Mode::Over`). Cyclic definitions denote their least fixed point; queries
//! carry the current fixed-point assumptions for groups being evaluated on
//! the same suffix, so evaluation terminates even across servers.

use crate::clock::Clock;
use crate::encoding::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::pattern::{BlessingName, BlessingPattern, NameError, PatternComponent};
use chrono::{DateTime, Duration, Utc};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Upper bound on carried assumptions, guarding against hostile queries.
pub const MAX_ASSUMPTIONS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Unreachable groups contribute no members.
    Under,
    /// Unreachable groups contribute every name.
    Over,
}

impl Mode {
    fn to_byte(self) -> u8 {
        match self {
            Mode::Under => 0,
            Mode::Over => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self, DecodeError> {
        match b {
            0 => Ok(Mode::Under),
            1 => Ok(Mode::Over),
            _ => Err(DecodeError::invalid(format!("bad mode {b}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Remainder {
    /// The whole name derives from the group.
    Whole,
    /// A proper prefix derives from the group; this is what is left.
    Rest(BlessingName),
}

/// Partial fixed-point values, keyed by group, as sets of consumed
/// component counts.
pub type Assumptions = BTreeMap<String, BTreeSet<usize>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemainderQuery {
    pub group: String,
    pub name: BlessingName,
    pub mode: Mode,
    pub assumptions: Assumptions,
}

impl RemainderQuery {
    pub fn new(group: impl Into<String>, name: BlessingName, mode: Mode) -> Self {
        RemainderQuery {
            group: group.into(),
            name,
            mode,
            assumptions: Assumptions::new(),
        }
    }
}

impl Encode for RemainderQuery {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(&self.group)
            .text(&self.name.to_string())
            .u8(self.mode.to_byte())
            .count(self.assumptions.len());
        for (g, consumed) in &self.assumptions {
            enc.text(g).count(consumed.len());
            for c in consumed {
                enc.u32(*c as u32);
            }
        }
    }
}

impl Decode for RemainderQuery {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let group = dec.text()?;
        let name: BlessingName = dec
            .text()?
            .parse()
            .map_err(|e: NameError| DecodeError::invalid(e.to_string()))?;
        let mode = Mode::from_byte(dec.u8()?)?;
        let n = dec.count()?;
        if n > MAX_ASSUMPTIONS {
            return Err(DecodeError::invalid("too many assumptions"));
        }
        let mut assumptions = Assumptions::new();
        let mut last: Option<String> = None;
        for _ in 0..n {
            let g = dec.text()?;
            if last.as_ref().is_some_and(|l| *l >= g) {
                return Err(DecodeError::invalid("assumptions not sorted"));
            }
            let m = dec.count()?;
            let mut consumed = BTreeSet::new();
            let mut prev = 0usize;
            for _ in 0..m {
                let c = dec.u32()? as usize;
                if c <= prev || c > name.len() {
                    return Err(DecodeError::invalid("bad consumed count"));
                }
                prev = c;
                consumed.insert(c);
            }
            last = Some(g.clone());
            assumptions.insert(g, consumed);
        }
        Ok(RemainderQuery {
            group,
            name,
            mode,
            assumptions,
        })
    }
}

/// Answer to a remainder query, as counts of consumed name components.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RemainderResult {
    /// Consumed component counts, each in `1..=name.len()`.
    pub consumed: BTreeSet<usize>,
    /// Some unreachable group forced an approximation, or the answer came
    /// from a stale cache.
    pub approximated: bool,
    /// The queried group itself could not be resolved.
    pub unavailable: bool,
    /// Carried assumptions the answer depends on.
    pub assumed: BTreeSet<String>,
}

impl RemainderResult {
    /// Mode-dependent stand-in for a group that could not be resolved.
    pub fn unreachable(name: &BlessingName, mode: Mode) -> Self {
        let consumed = match mode {
            Mode::Under => BTreeSet::new(),
            Mode::Over => (1..=name.len()).collect(),
        };
        RemainderResult {
            consumed,
            approximated: true,
            unavailable: true,
            assumed: BTreeSet::new(),
        }
    }

    pub fn remainders(&self, name: &BlessingName) -> BTreeSet<Remainder> {
        self.consumed
            .iter()
            .map(|&c| match name.suffix_after(c) {
                Some(rest) => Remainder::Rest(rest),
                None => Remainder::Whole,
            })
            .collect()
    }

    pub fn is_member_prefix(&self) -> bool {
        !self.consumed.is_empty()
    }

    /// Rebuilds a result from remainders, rejecting any that are not proper
    /// suffixes of `name`.
    pub fn from_remainders(name: &BlessingName, rems: &[Remainder]) -> Result<Self, DecodeError> {
        let mut consumed = BTreeSet::new();
        for r in rems {
            let c = match r {
                Remainder::Whole => name.len(),
                Remainder::Rest(rest) => {
                    let ok = rest.len() < name.len()
                        && name.components()[name.len() - rest.len()..] == *rest.components();
                    if !ok {
                        return Err(DecodeError::invalid(format!(
                            "{rest} is not a proper suffix of {name}"
                        )));
                    }
                    name.len() - rest.len()
                }
            };
            consumed.insert(c);
        }
        Ok(RemainderResult {
            consumed,
            ..Default::default()
        })
    }
}

pub trait GroupResolver: Send + Sync {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult;
}

impl<R: GroupResolver + ?Sized> GroupResolver for Arc<R> {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult {
        (**self).remainders(query)
    }
}

impl<R: GroupResolver + ?Sized> GroupResolver for &R {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult {
        (**self).remainders(query)
    }
}

/// Resolver that knows no groups: every group is unreachable.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoGroups;

impl GroupResolver for NoGroups {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult {
        RemainderResult::unreachable(&query.name, query.mode)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupDefinitionError {
    #[error("missing `group: <name>` header")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Pattern { line: usize, source: NameError },
    #[error("line {0}: group members may not end in eob")]
    ExactMember(usize),
    #[error("invalid group name: {0}")]
    Name(NameError),
}

/// `name =def patterns`. Definitions have no deny clauses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupDefinition {
    pub name: String,
    pub patterns: Vec<BlessingPattern>,
}

impl GroupDefinition {
    pub fn new(name: impl Into<String>, patterns: Vec<BlessingPattern>) -> Result<Self, GroupDefinitionError> {
        let name = name.into();
        crate::pattern::validate_group_name(&name).map_err(GroupDefinitionError::Name)?;
        if let Some(i) = patterns.iter().position(BlessingPattern::is_exact) {
            return Err(GroupDefinitionError::ExactMember(i + 1));
        }
        Ok(GroupDefinition { name, patterns })
    }

    /// Parses the text form: a `group: <name>` header, then one pattern per
    /// line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, GroupDefinitionError> {
        let mut name = None;
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if name.is_none() {
                let rest = line
                    .strip_prefix("group:")
                    .ok_or(GroupDefinitionError::MissingHeader)?;
                name = Some(rest.trim().to_string());
                continue;
            }
            let p: BlessingPattern = line
                .parse()
                .map_err(|source| GroupDefinitionError::Pattern { line: i + 1, source })?;
            if p.is_exact() {
                return Err(GroupDefinitionError::ExactMember(i + 1));
            }
            patterns.push(p);
        }
        GroupDefinition::new(name.ok_or(GroupDefinitionError::MissingHeader)?, patterns)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("group: {}\n", self.name);
        for p in &self.patterns {
            out.push_str(&p.to_string());
            out.push('\n');
        }
        out
    }
}

/// Flags gathered while matching a component sequence.
#[derive(Debug, Default)]
struct Trace {
    approximated: bool,
    assumed: BTreeSet<String>,
}

/// End positions reachable by matching `components` against `name` from
/// position 0. Group references at position 0 are queried with `carried`
/// assumptions; later positions are fresh suffixes and start from none.
fn match_components(
    components: &[PatternComponent],
    name: &BlessingName,
    mode: Mode,
    resolver: &dyn GroupResolver,
    carried: &Assumptions,
    trace: &mut Trace,
) -> BTreeSet<usize> {
    let parts = name.components();
    let mut positions: BTreeSet<usize> = BTreeSet::from([0]);
    for comp in components {
        let mut next = BTreeSet::new();
        for &pos in &positions {
            if pos >= parts.len() {
                continue;
            }
            match comp {
                PatternComponent::Name(n) => {
                    if parts[pos] == *n {
                        next.insert(pos + 1);
                    }
                }
                PatternComponent::Group(g) => {
                    let sub_name = name.suffix_after(pos).expect("pos < len");
                    let mut q = RemainderQuery::new(g.clone(), sub_name, mode);
                    if pos == 0 {
                        q.assumptions = carried.clone();
                    }
                    let r = resolver.remainders(&q);
                    trace.approximated |= r.approximated;
                    if pos == 0 {
                        trace.assumed.extend(r.assumed);
                    }
                    next.extend(r.consumed.iter().map(|c| pos + c));
                }
            }
        }
        positions = next;
        if positions.is_empty() {
            break;
        }
    }
    positions.remove(&0);
    positions
}

/// Evaluates a remainder query against `def`, iterating to the least fixed
/// point when the definition refers back to itself on the same suffix.
/// Sub-queries go through `resolver`.
pub fn evaluate(def: &GroupDefinition, query: &RemainderQuery, resolver: &dyn GroupResolver) -> RemainderResult {
    if let Some(assumed) = query.assumptions.get(&def.name) {
        return RemainderResult {
            consumed: assumed.clone(),
            assumed: BTreeSet::from([def.name.clone()]),
            ..Default::default()
        };
    }
    let mut current: BTreeSet<usize> = BTreeSet::new();
    loop {
        let mut carried = query.assumptions.clone();
        carried.insert(def.name.clone(), current.clone());
        let mut trace = Trace::default();
        let mut next = BTreeSet::new();
        for p in &def.patterns {
            if p.is_universal() {
                next.extend(1..=query.name.len());
            } else {
                next.extend(match_components(
                    p.components(),
                    &query.name,
                    query.mode,
                    resolver,
                    &carried,
                    &mut trace,
                ));
            }
        }
        let self_referential = trace.assumed.remove(&def.name);
        if !self_referential || next == current {
            return RemainderResult {
                consumed: next,
                approximated: trace.approximated,
                unavailable: false,
                assumed: trace.assumed,
            };
        }
        current = next;
    }
}

/// True when some member of the group (under `mode`) is a prefix of `name`.
pub fn membership_prefix(group: &str, name: &BlessingName, mode: Mode, resolver: &dyn GroupResolver) -> bool {
    resolver
        .remainders(&RemainderQuery::new(group, name.clone(), mode))
        .is_member_prefix()
}

/// Positions reachable after matching a whole pattern from the start of
/// `name`, for top-level (non-group) callers.
pub fn pattern_positions(
    pattern: &BlessingPattern,
    name: &BlessingName,
    mode: Mode,
    resolver: &dyn GroupResolver,
) -> (BTreeSet<usize>, bool) {
    if pattern.is_universal() {
        return ((1..=name.len()).collect(), false);
    }
    let mut trace = Trace::default();
    let positions = match_components(
        pattern.components(),
        name,
        mode,
        resolver,
        &Assumptions::new(),
        &mut trace,
    );
    (positions, trace.approximated)
}

/// Resolves locally defined groups and hands everything else to a fallback.
#[derive(Clone, Default)]
pub struct LocalResolver {
    definitions: HashMap<String, GroupDefinition>,
    fallback: Option<Arc<dyn GroupResolver>>,
}

impl fmt::Debug for LocalResolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&String> = self.definitions.keys().collect();
        names.sort();
        f.debug_struct("LocalResolver")
            .field("groups", &names)
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl LocalResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn GroupResolver>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn define(&mut self, def: GroupDefinition) {
        self.definitions.insert(def.name.clone(), def);
    }

    pub fn definition(&self, group: &str) -> Option<&GroupDefinition> {
        self.definitions.get(group)
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.definitions.keys().map(String::as_str)
    }
}

impl FromIterator<GroupDefinition> for LocalResolver {
    fn from_iter<I: IntoIterator<Item = GroupDefinition>>(iter: I) -> Self {
        let mut r = LocalResolver::new();
        for d in iter {
            r.define(d);
        }
        r
    }
}

impl GroupResolver for LocalResolver {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult {
        match self.definitions.get(&query.group) {
            Some(def) => evaluate(def, query, self),
            None => match &self.fallback {
                Some(f) => f.remainders(query),
                None => RemainderResult::unreachable(&query.name, query.mode),
            },
        }
    }
}

/// Default bound on how long a cached answer may stand in for an
/// unreachable server.
pub fn default_staleness() -> Duration {
    Duration::hours(24)
}

struct CacheEntry {
    result: RemainderResult,
    stored_at: DateTime<Utc>,
}

/// Memoizes top-level remainder queries. Fresh entries answer without
/// consulting the inner resolver; when the inner resolver cannot reach a
/// group, an entry within the staleness bound is served, marked
/// approximated.
pub struct CachedResolver {
    inner: Arc<dyn GroupResolver>,
    ttl: Duration,
    staleness: Duration,
    clock: Arc<dyn Clock>,
    entries: Mutex<HashMap<(String, BlessingName, Mode), CacheEntry>>,
}

impl CachedResolver {
    pub fn new(inner: Arc<dyn GroupResolver>, ttl: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(ttl > Duration::zero(), "cache ttl must be positive");
        CachedResolver {
            inner,
            ttl,
            staleness: default_staleness(),
            clock,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_staleness(mut self, staleness: Duration) -> Self {
        self.staleness = staleness;
        self
    }
}

impl GroupResolver for CachedResolver {
    fn remainders(&self, query: &RemainderQuery) -> RemainderResult {
        if !query.assumptions.is_empty() {
            return self.inner.remainders(query);
        }
        let key = (query.group.clone(), query.name.clone(), query.mode);
        let now = self.clock.now();
        if let Some(e) = self.entries.lock().unwrap().get(&key) {
            if now - e.stored_at < self.ttl {
                return e.result.clone();
            }
        }
        let fresh = self.inner.remainders(query);
        let mut entries = self.entries.lock().unwrap();
        if fresh.unavailable {
            if let Some(e) = entries.get(&key) {
                if now - e.stored_at <= self.staleness {
                    let mut stale = e.result.clone();
                    stale.approximated = true;
                    return stale;
                }
            }
            return fresh;
        }
        entries.insert(
            key,
            CacheEntry {
                result: fresh.clone(),
                stored_at: now,
            },
        );
        fresh
    }
}
