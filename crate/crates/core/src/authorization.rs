//! Pattern matching, ACLs and the authorization decision.
//!
//! A pattern denotes a set of names; a name `bn` matches when some member of
//! that set is a component-wise prefix of `bn`, or equals `bn` when the
//! pattern ends in `eob`. Sets are never materialized: the matcher walks the
//! pattern against `bn` and asks the group resolver for remainders.

pub use crate::groups::NoGroups;
use crate::groups::{pattern_positions, GroupResolver, Mode};
use crate::pattern::{BlessingName, BlessingPattern, NameError, PatternComponent};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatchMode {
    /// Unreachable groups are treated as empty.
    Allow,
    /// Unreachable groups are treated as containing every name.
    Deny,
}

impl MatchMode {
    pub fn group_mode(self) -> Mode {
        match self {
            MatchMode::Allow => Mode::Under,
            MatchMode::Deny => Mode::Over,
        }
    }
}

/// Whether some name denoted by `p` is a prefix of `bn` (equal to `bn` for
/// `eob` patterns).
pub fn match_pattern(p: &BlessingPattern, bn: &BlessingName, resolver: &dyn GroupResolver, mode: MatchMode) -> bool {
    let (positions, _) = pattern_positions(p, bn, mode.group_mode(), resolver);
    if p.is_exact() {
        positions.contains(&bn.len())
    } else {
        !positions.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Acl {
    pub allow: Vec<BlessingPattern>,
    pub deny: Vec<BlessingPattern>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AclParseError {
    #[error("line {line}: {source}")]
    Pattern { line: usize, source: NameError },
    #[error("line {0}: pattern outside an allow: or deny: section")]
    NoSection(usize),
}

impl Acl {
    pub fn new(allow: Vec<BlessingPattern>, deny: Vec<BlessingPattern>) -> Self {
        Acl { allow, deny }
    }

    pub fn allow_only(allow: Vec<BlessingPattern>) -> Self {
        Acl { allow, deny: Vec::new() }
    }

    /// Allowed iff some allow pattern matches `bn` and no deny pattern
    /// matches `bn` or any of its prefixes.
    pub fn is_authorized(&self, bn: &BlessingName, resolver: &dyn GroupResolver) -> bool {
        is_authorized(bn, self, resolver)
    }

    /// Whether a deny pattern matches `bn` or one of its prefixes.
    pub fn denies(&self, bn: &BlessingName, resolver: &dyn GroupResolver) -> bool {
        (1..=bn.len()).any(|n| {
            let prefix = bn.prefix(n);
            self.deny
                .iter()
                .any(|p| match_pattern(p, &prefix, resolver, MatchMode::Deny))
        })
    }

    /// Warnings about patterns that are legal but probably not intended.
    pub fn lint(&self) -> Vec<String> {
        self.deny
            .iter()
            .filter(|p| p.is_exact())
            .map(|p| format!("deny pattern {p} ends in eob; extensions of matching names are denied anyway"))
            .collect()
    }

    /// Parses the text form. Sections start with `allow:` or `deny:`; a
    /// pattern may follow the keyword on the same line. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<Self, AclParseError> {
        #[derive(Clone, Copy)]
        enum Section {
            Allow,
            Deny,
        }
        let mut acl = Acl::default();
        let mut section = None;
        for (i, raw) in text.lines().enumerate() {
            let mut line = raw.split('#').next().unwrap_or("").trim();
            if let Some(rest) = line.strip_prefix("allow:") {
                section = Some(Section::Allow);
                line = rest.trim();
            } else if let Some(rest) = line.strip_prefix("deny:") {
                section = Some(Section::Deny);
                line = rest.trim();
            }
            if line.is_empty() {
                continue;
            }
            let p: BlessingPattern = line
                .parse()
                .map_err(|source| AclParseError::Pattern { line: i + 1, source })?;
            match section {
                Some(Section::Allow) => acl.allow.push(p),
                Some(Section::Deny) => acl.deny.push(p),
                None => return Err(AclParseError::NoSection(i + 1)),
            }
        }
        Ok(acl)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("allow:\n");
        for p in &self.allow {
            out.push_str(&format!("  {p}\n"));
        }
        out.push_str("deny:\n");
        for p in &self.deny {
            out.push_str(&format!("  {p}\n"));
        }
        out
    }
}

impl fmt::Display for Acl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ps: &[BlessingPattern]| ps.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
        write!(f, "Allow [{}] Deny [{}]", join(&self.allow), join(&self.deny))
    }
}

pub fn is_authorized(bn: &BlessingName, acl: &Acl, resolver: &dyn GroupResolver) -> bool {
    let allowed = acl
        .allow
        .iter()
        .any(|p| match_pattern(p, bn, resolver, MatchMode::Allow));
    allowed && !acl.denies(bn, resolver)
}

/// Denotation of a pattern under a finite group interpretation `rho`.
/// `eob` does not change the set, only how it is matched. Returns `None` for
/// the universal pattern, whose denotation is infinite.
pub fn meaning<F>(p: &BlessingPattern, rho: &F) -> Option<BTreeSet<BlessingName>>
where
    F: Fn(&str) -> BTreeSet<BlessingName>,
{
    if p.is_universal() {
        return None;
    }
    let mut acc: Option<BTreeSet<BlessingName>> = None;
    for comp in p.components() {
        let step: BTreeSet<BlessingName> = match comp {
            PatternComponent::Name(n) => BTreeSet::from([BlessingName::new(vec![n.clone()]).ok()?]),
            PatternComponent::Group(g) => rho(g),
        };
        acc = Some(match acc {
            None => step,
            Some(prev) => prev
                .iter()
                .flat_map(|a| step.iter().map(move |b| a.join(b)))
                .collect(),
        });
    }
    acc
}

/// Union of [`meaning`] over a list of patterns; `None` if any is universal.
pub fn meaning_of_list<F>(ps: &[BlessingPattern], rho: &F) -> Option<BTreeSet<BlessingName>>
where
    F: Fn(&str) -> BTreeSet<BlessingName>,
{
    let mut out = BTreeSet::new();
    for p in ps {
        out.extend(meaning(p, rho)?);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{GroupDefinition, LocalResolver};

    fn bn(s: &str) -> BlessingName {
        s.parse().unwrap()
    }

    fn pat(s: &str) -> BlessingPattern {
        s.parse().unwrap()
    }

    fn friends() -> LocalResolver {
        [GroupDefinition::new("AliceFriends", vec![pat("Bob"), pat("DaveFriends_G")]).unwrap(),
         GroupDefinition::new("DaveFriends", vec![pat("Carol")]).unwrap()]
        .into_iter()
        .collect()
    }

    #[test]
    fn prefix_matching_and_eob() {
        assert!(match_pattern(&pat("Alice"), &bn("Alice/TV"), &NoGroups, MatchMode::Allow));
        assert!(!match_pattern(&pat("Alice/eob"), &bn("Alice/TV"), &NoGroups, MatchMode::Allow));
        assert!(match_pattern(&pat("Alice/eob"), &bn("Alice"), &NoGroups, MatchMode::Allow));
        assert!(!match_pattern(&pat("Alice/TV"), &bn("Alice"), &NoGroups, MatchMode::Allow));
        assert!(match_pattern(&BlessingPattern::universal(), &bn("x"), &NoGroups, MatchMode::Allow));
    }

    #[test]
    fn group_patterns() {
        let r = friends();
        assert!(match_pattern(&pat("AliceFriends_G"), &bn("Bob/Phone"), &r, MatchMode::Allow));
        assert!(match_pattern(&pat("AliceFriends_G/Phone"), &bn("Bob/Phone"), &r, MatchMode::Allow));
        assert!(match_pattern(&pat("AliceFriends_G/Phone"), &bn("Carol/Phone"), &r, MatchMode::Allow));
        assert!(!match_pattern(&pat("AliceFriends_G/Phone"), &bn("Bob/TV"), &r, MatchMode::Allow));
    }

    #[test]
    fn acl_examples() {
        let r = friends();
        let acl = Acl::allow_only(vec![pat("AliceFriends_G")]);
        assert!(acl.is_authorized(&bn("Bob"), &r));
        let acl = Acl::new(vec![pat("AliceFriends_G")], vec![pat("Bob")]);
        assert!(!acl.is_authorized(&bn("Bob"), &r));
        let acl = Acl::allow_only(vec![pat("Bob")]);
        assert!(!acl.is_authorized(&bn("Carol"), &r));
        assert!(!Acl::default().is_authorized(&bn("Bob"), &r));
    }

    #[test]
    fn exact_deny_still_closes_over_extensions() {
        let acl = Acl::new(vec![pat("Alice")], vec![pat("Alice/TV/eob")]);
        assert!(acl.is_authorized(&bn("Alice"), &NoGroups));
        assert!(!acl.is_authorized(&bn("Alice/TV"), &NoGroups));
        assert!(!acl.is_authorized(&bn("Alice/TV/App"), &NoGroups));
        assert_eq!(acl.lint().len(), 1);
    }

    #[test]
    fn unreachable_groups_are_safe() {
        let acl = Acl::new(vec![pat("Alice")], vec![pat("Blocked_G")]);
        assert!(!acl.is_authorized(&bn("Alice"), &NoGroups));
        let acl = Acl::allow_only(vec![pat("Friends_G")]);
        assert!(!acl.is_authorized(&bn("Bob"), &NoGroups));
    }

    #[test]
    fn acl_text_format() {
        let text = "# lock policy\nallow:\n  AliceFrontDoor\n  AliceFriends_G/Phone\ndeny: Mallory\n";
        let acl = Acl::parse(text).unwrap();
        assert_eq!(acl.allow, vec![pat("AliceFrontDoor"), pat("AliceFriends_G/Phone")]);
        assert_eq!(acl.deny, vec![pat("Mallory")]);
        assert_eq!(Acl::parse(&acl.to_text()).unwrap(), acl);
        assert_eq!(Acl::parse("Bob\n").unwrap_err(), AclParseError::NoSection(1));
    }

    #[test]
    fn meaning_cases() {
        let rho = |g: &str| match g {
            "AliceFriends" => BTreeSet::from([bn("Bob"), bn("Carol")]),
            _ => BTreeSet::new(),
        };
        assert_eq!(meaning(&pat("Bob"), &rho).unwrap(), BTreeSet::from([bn("Bob")]));
        assert_eq!(
            meaning(&pat("AliceFriends_G/Phone"), &rho).unwrap(),
            BTreeSet::from([bn("Bob/Phone"), bn("Carol/Phone")])
        );
        assert!(meaning(&pat("Other_G/Phone"), &rho).unwrap().is_empty());
        assert!(meaning_of_list(&[], &rho).unwrap().is_empty());
    }
}
