//! Blessing names and blessing patterns.

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const SEPARATOR: char = '/';

/// Reserved final pattern component forcing an exact match.
pub const EOB: &str = "eob";

/// Single-component pattern matching every peer.
pub const UNIVERSAL: &str = "...";

/// Text marker for group components, e.g. `AliceFriends_G`.
pub const GROUP_SUFFIX: &str = "_G";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name component")]
    Empty,
    #[error("name component {0:?} contains '/'")]
    ContainsSeparator(String),
    #[error("{0:?} is reserved")]
    Reserved(String),
    #[error("invalid pattern {pattern:?}: {reason}")]
    Pattern { pattern: String, reason: String },
}

/// Checks one ordinary name component: non-empty, no separator, not reserved.
pub fn validate_component(name: &str) -> Result<(), NameError> {
    if name.is_empty() {
        return Err(NameError::Empty);
    }
    if name.contains(SEPARATOR) {
        return Err(NameError::ContainsSeparator(name.to_string()));
    }
    if name == EOB || name == UNIVERSAL {
        return Err(NameError::Reserved(name.to_string()));
    }
    Ok(())
}

/// A `/`-separated, non-empty sequence of ordinary names.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlessingName(Vec<String>);

impl BlessingName {
    pub fn new(components: Vec<String>) -> Result<Self, NameError> {
        if components.is_empty() {
            return Err(NameError::Empty);
        }
        for c in &components {
            validate_component(c)?;
        }
        Ok(BlessingName(components))
    }

    pub fn components(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Component-wise prefix relation (never text prefix).
    pub fn is_prefix_of(&self, other: &BlessingName) -> bool {
        is_prefix(self, other)
    }

    /// The first `n` components, `1 <= n <= len`.
    pub fn prefix(&self, n: usize) -> BlessingName {
        assert!(n >= 1 && n <= self.0.len());
        BlessingName(self.0[..n].to_vec())
    }

    /// The name with the first `n` components removed, if any remain.
    pub fn suffix_after(&self, n: usize) -> Option<BlessingName> {
        (n < self.0.len()).then(|| BlessingName(self.0[n..].to_vec()))
    }

    pub fn join(&self, ext: &BlessingName) -> BlessingName {
        let mut v = self.0.clone();
        v.extend(ext.0.iter().cloned());
        BlessingName(v)
    }

    pub fn child(&self, component: &str) -> Result<BlessingName, NameError> {
        validate_component(component)?;
        let mut v = self.0.clone();
        v.push(component.to_string());
        Ok(BlessingName(v))
    }
}

pub fn is_prefix(bn1: &BlessingName, bn2: &BlessingName) -> bool {
    bn1.0.len() <= bn2.0.len() && bn1.0.iter().zip(&bn2.0).all(|(a, b)| a == b)
}

impl FromStr for BlessingName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlessingName::new(s.split(SEPARATOR).map(str::to_string).collect())
    }
}

impl fmt::Display for BlessingName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl fmt::Debug for BlessingName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlessingName({self})")
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum PatternComponent {
    Name(String),
    Group(String),
}

/// A non-empty sequence of names and group references, optionally terminated
/// by `eob`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlessingPattern {
    components: Vec<PatternComponent>,
    exact: bool,
    universal: bool,
}

impl BlessingPattern {
    pub fn new(components: Vec<PatternComponent>, exact: bool) -> Result<Self, NameError> {
        let text = || render(&components, exact);
        if components.is_empty() {
            return Err(NameError::Pattern {
                pattern: text(),
                reason: "no components before eob".into(),
            });
        }
        for c in &components {
            match c {
                PatternComponent::Name(n) => validate_component(n).map_err(|e| NameError::Pattern {
                    pattern: text(),
                    reason: e.to_string(),
                })?,
                PatternComponent::Group(g) => validate_group_name(g).map_err(|e| {
                    NameError::Pattern {
                        pattern: text(),
                        reason: e.to_string(),
                    }
                })?,
            }
        }
        Ok(BlessingPattern {
            components,
            exact,
            universal: false,
        })
    }

    /// The pattern `...`, matching any peer.
    pub fn universal() -> Self {
        BlessingPattern {
            components: Vec::new(),
            exact: false,
            universal: true,
        }
    }

    /// Pattern matching exactly the names that have `name` as a prefix.
    pub fn from_name(name: &BlessingName) -> Self {
        BlessingPattern {
            components: name
                .components()
                .iter()
                .cloned()
                .map(PatternComponent::Name)
                .collect(),
            exact: false,
            universal: false,
        }
    }

    pub fn components(&self) -> &[PatternComponent] {
        &self.components
    }

    /// Whether the pattern ends in `eob`.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn is_universal(&self) -> bool {
        self.universal
    }

    pub fn has_groups(&self) -> bool {
        self.components
            .iter()
            .any(|c| matches!(c, PatternComponent::Group(_)))
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.components.iter().filter_map(|c| match c {
            PatternComponent::Group(g) => Some(g.as_str()),
            PatternComponent::Name(_) => None,
        })
    }
}

pub fn validate_group_name(g: &str) -> Result<(), NameError> {
    validate_component(g)?;
    if g.ends_with(GROUP_SUFFIX) {
        return Err(NameError::Reserved(g.to_string()));
    }
    Ok(())
}

fn render(components: &[PatternComponent], exact: bool) -> String {
    let mut parts: Vec<String> = components
        .iter()
        .map(|c| match c {
            PatternComponent::Name(n) => n.clone(),
            PatternComponent::Group(g) => format!("{g}{GROUP_SUFFIX}"),
        })
        .collect();
    if exact {
        parts.push(EOB.to_string());
    }
    parts.join("/")
}

impl FromStr for BlessingPattern {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == UNIVERSAL {
            return Ok(BlessingPattern::universal());
        }
        let err = |reason: &str| NameError::Pattern {
            pattern: s.to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = s.split(SEPARATOR).collect();
        let mut components = Vec::with_capacity(parts.len());
        let mut exact = false;
        for (i, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(err("empty component"));
            }
            if *part == EOB {
                if i + 1 != parts.len() {
                    return Err(err("eob may only appear as the final component"));
                }
                exact = true;
                continue;
            }
            if *part == UNIVERSAL {
                return Err(err("'...' must be the whole pattern"));
            }
            match part.strip_suffix(GROUP_SUFFIX) {
                Some(g) if !g.is_empty() => components.push(PatternComponent::Group(g.to_string())),
                _ => components.push(PatternComponent::Name(part.to_string())),
            }
        }
        BlessingPattern::new(components, exact)
    }
}

impl fmt::Display for BlessingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.universal {
            return f.write_str(UNIVERSAL);
        }
        f.write_str(&render(&self.components, self.exact))
    }
}

impl fmt::Debug for BlessingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlessingPattern({self})")
    }
}
