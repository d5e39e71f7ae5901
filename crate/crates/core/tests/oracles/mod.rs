//! Independent reference implementations used by property and acceptance
//! tests. Nothing here calls the matcher or resolver under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

/// A pattern in oracle form: plain component strings, group references
/// prefixed with `@`, and an exact-match flag.
#[derive(Clone, Debug)]
pub struct OPattern {
    pub parts: Vec<String>,
    pub exact: bool,
}

impl OPattern {
    pub fn text(&self) -> String {
        let mut parts: Vec<String> = self
            .parts
            .iter()
            .map(|p| match p.strip_prefix('@') {
                Some(g) => format!("{g}_G"),
                None => p.clone(),
            })
            .collect();
        if self.exact {
            parts.push("eob".into());
        }
        parts.join("/")
    }
}

pub fn is_prefix(a: &[String], b: &[String]) -> bool {
    a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Group-free pattern match by the set definition: the pattern denotes one
/// name; `bn` matches when that name is a prefix (or, with eob, equal).
pub fn group_free_match(p: &OPattern, bn: &[String]) -> bool {
    let meaning: BTreeSet<Vec<String>> = BTreeSet::from([p.parts.clone()]);
    meaning
        .iter()
        .any(|m| if p.exact { m.as_slice() == bn } else { is_prefix(m, bn) })
}

/// Reference ACL decision for group-free patterns, with deny closure over
/// every prefix of the name.
pub fn acl_oracle(allow: &[OPattern], deny: &[OPattern], bn: &[String]) -> bool {
    let allowed = allow.iter().any(|p| group_free_match(p, bn));
    let denied = (1..=bn.len()).any(|k| deny.iter().any(|p| group_free_match(p, &bn[..k])));
    allowed && !denied
}

/// All names over `alphabet` with 1..=max_len components.
pub fn all_names(alphabet: &[&str], max_len: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &layer {
            for a in alphabet {
                let mut n = prefix.clone();
                n.push(a.to_string());
                next.push(n);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Group definitions in oracle form: group name -> list of patterns.
pub type OGraph = BTreeMap<String, Vec<OPattern>>;

/// Span-based fixed-point membership. `spans[g]` holds every `(i, j)` such
/// that `name[i..j]` derives from `g`. Groups not in `available` denote the
/// empty set (`over == false`) or every non-empty name (`over == true`).
pub fn derivable_spans(
    graph: &OGraph,
    available: &BTreeSet<String>,
    over: bool,
    name: &[String],
    all_groups: &BTreeSet<String>,
) -> BTreeMap<String, BTreeSet<(usize, usize)>> {
    let n = name.len();
    let every_span: BTreeSet<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..=n).map(move |j| (i, j)))
        .collect();
    let mut spans: BTreeMap<String, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for g in all_groups {
        let init = if !available.contains(g) && over {
            every_span.clone()
        } else {
            BTreeSet::new()
        };
        spans.insert(g.clone(), init);
    }
    loop {
        let mut changed = false;
        for (g, pats) in graph {
            if !available.contains(g) {
                continue;
            }
            let mut found = BTreeSet::new();
            for p in pats {
                for i in 0..n {
                    let mut ends = BTreeSet::from([i]);
                    for part in &p.parts {
                        let mut next = BTreeSet::new();
                        for &e in &ends {
                            match part.strip_prefix('@') {
                                Some(h) => {
                                    for &(a, b) in spans.get(h).into_iter().flatten() {
                                        if a == e {
                                            next.insert(b);
                                        }
                                    }
                                }
                                None => {
                                    if e < n && name[e] == *part {
                                        next.insert(e + 1);
                                    }
                                }
                            }
                        }
                        ends = next;
                    }
                    for e in ends {
                        if e > i {
                            found.insert((i, e));
                        }
                    }
                }
            }
            let entry = spans.get_mut(g).expect("initialized");
            let before = entry.len();
            entry.extend(found);
            changed |= entry.len() != before;
        }
        if !changed {
            return spans;
        }
    }
}

/// Consumed counts from position 0 for group `g`.
pub fn oracle_consumed(
    graph: &OGraph,
    available: &BTreeSet<String>,
    over: bool,
    g: &str,
    name: &[String],
) -> BTreeSet<usize> {
    let all: BTreeSet<String> = graph.keys().cloned().chain([g.to_string()]).collect();
    let spans = derivable_spans(graph, available, over, name, &all);
    spans[g]
        .iter()
        .filter(|(i, _)| *i == 0)
        .map(|&(_, j)| j)
        .collect()
}

/// The finite language of an acyclic, fully available graph, by enumeration.
pub fn enumerate_language(graph: &OGraph, g: &str) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for p in &graph[g] {
        let mut acc: BTreeSet<Vec<String>> = BTreeSet::from([vec![]]);
        for part in &p.parts {
            let step: BTreeSet<Vec<String>> = match part.strip_prefix('@') {
                Some(h) => enumerate_language(graph, h),
                None => BTreeSet::from([vec![part.clone()]]),
            };
            acc = acc
                .iter()
                .flat_map(|a| {
                    step.iter().map(move |b| {
                        let mut v = a.clone();
                        v.extend(b.iter().cloned());
                        v
                    })
                })
                .collect();
        }
        out.extend(acc);
    }
    out
}

/// Whether the graph has a reference cycle.
pub fn is_acyclic(graph: &OGraph) -> bool {
    fn visit(g: &str, graph: &OGraph, stack: &mut Vec<String>, done: &mut BTreeSet<String>) -> bool {
        if done.contains(g) {
            return true;
        }
        if stack.iter().any(|s| s == g) {
            return false;
        }
        stack.push(g.to_string());
        for p in graph.get(g).into_iter().flatten() {
            for part in &p.parts {
                if let Some(h) = part.strip_prefix('@') {
                    if !visit(h, graph, stack, done) {
                        return false;
                    }
                }
            }
        }
        stack.pop();
        done.insert(g.to_string());
        true
    }
    let mut done = BTreeSet::new();
    graph.keys().all(|g| visit(g, graph, &mut Vec::new(), &mut done))
}

/// Small deterministic generator so oracle-driven tests do not depend on
/// the code under test for randomness either.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.next() % den < num
    }
}

/// Random graph over groups `g0..g{k-1}`, at most `max_patterns` patterns of
/// 1..=3 parts each, mixing `alphabet` terminals and group references.
pub fn random_graph(rng: &mut SplitMix, max_groups: usize, max_patterns: usize, alphabet: &[&str]) -> OGraph {
    let k = 1 + rng.below(max_groups);
    let mut graph = OGraph::new();
    for gi in 0..k {
        let np = rng.below(max_patterns + 1);
        let mut pats = Vec::new();
        for _ in 0..np {
            let len = 1 + rng.below(3);
            let parts = (0..len)
                .map(|_| {
                    if rng.chance(1, 3) {
                        format!("@g{}", rng.below(k))
                    } else {
                        alphabet[rng.below(alphabet.len())].to_string()
                    }
                })
                .collect();
            pats.push(OPattern { parts, exact: false });
        }
        graph.insert(format!("g{gi}"), pats);
    }
    graph
}
