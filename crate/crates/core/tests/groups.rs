mod oracles;

use bless_core::authorization::{is_authorized, Acl};
use bless_core::groups::{GroupDefinition, GroupResolver, LocalResolver, Mode, RemainderQuery};
use bless_core::pattern::{BlessingName, BlessingPattern};
use oracles::*;
use std::collections::BTreeSet;

const ALPHABET: [&str; 3] = ["a", "b", "c"];

fn resolver_for(graph: &OGraph, available: &BTreeSet<String>) -> LocalResolver {
    graph
        .iter()
        .filter(|(g, _)| available.contains(*g))
        .map(|(g, pats)| {
            let patterns: Vec<BlessingPattern> = pats.iter().map(|p| p.text().parse().unwrap()).collect();
            GroupDefinition::new(g.clone(), patterns).unwrap()
        })
        .collect()
}

fn consumed(r: &LocalResolver, g: &str, name: &[String], mode: Mode) -> BTreeSet<usize> {
    let bn = BlessingName::new(name.to_vec()).unwrap();
    r.remainders(&RemainderQuery::new(g, bn, mode)).consumed
}

#[test]
fn resolver_matches_span_oracle_under_partitions() {
    let mut rng = SplitMix(0x5eed);
    let names = all_names(&ALPHABET, 3);
    let (mut members, mut cyclic, mut approximated) = (0, 0, 0);
    for _ in 0..120 {
        let graph = random_graph(&mut rng, 6, 4, &ALPHABET);
        let groups: Vec<String> = graph.keys().cloned().collect();
        let full: BTreeSet<String> = groups.iter().cloned().collect();
        let partial: BTreeSet<String> = groups.iter().filter(|_| rng.chance(2, 3)).cloned().collect();
        let r_full = resolver_for(&graph, &full);
        let r_part = resolver_for(&graph, &partial);
        cyclic += usize::from(!is_acyclic(&graph));
        for g in &groups {
            for name in &names {
                let exact = oracle_consumed(&graph, &full, false, g, name);
                members += usize::from(!exact.is_empty());
                approximated += usize::from(consumed(&r_part, g, name, Mode::Under) != exact);
                assert_eq!(consumed(&r_full, g, name, Mode::Under), exact, "{graph:?} {g} {name:?}");
                assert_eq!(consumed(&r_full, g, name, Mode::Over), exact);
                assert_eq!(
                    consumed(&r_part, g, name, Mode::Under),
                    oracle_consumed(&graph, &partial, false, g, name)
                );
                assert_eq!(
                    consumed(&r_part, g, name, Mode::Over),
                    oracle_consumed(&graph, &partial, true, g, name)
                );
            }
        }
    }
    assert!(members > 500 && cyclic > 20 && approximated > 100, "{members} {cyclic} {approximated}");
}

#[test]
fn acyclic_remainders_match_language_enumeration() {
    let mut rng = SplitMix(0xacc1);
    let names = all_names(&ALPHABET, 4);
    let mut checked = 0;
    while checked < 60 {
        let graph = random_graph(&mut rng, 4, 3, &ALPHABET);
        if !is_acyclic(&graph) {
            continue;
        }
        checked += 1;
        let full: BTreeSet<String> = graph.keys().cloned().collect();
        let r = resolver_for(&graph, &full);
        for g in graph.keys() {
            let language = enumerate_language(&graph, g);
            for name in &names {
                let expected: BTreeSet<usize> = language
                    .iter()
                    .filter(|m| !m.is_empty() && is_prefix(m, name))
                    .map(Vec::len)
                    .collect();
                assert_eq!(consumed(&r, g, name, Mode::Under), expected, "{g} {name:?}");
            }
        }
    }
}

#[test]
fn authorization_under_partition_is_never_more_permissive() {
    let mut rng = SplitMix(0xa11);
    let names = all_names(&ALPHABET, 3);
    for _ in 0..100 {
        let graph = random_graph(&mut rng, 5, 3, &ALPHABET);
        let groups: Vec<String> = graph.keys().cloned().collect();
        let full: BTreeSet<String> = groups.iter().cloned().collect();
        let partial: BTreeSet<String> = groups.iter().filter(|_| rng.chance(1, 2)).cloned().collect();
        let pick = |rng: &mut SplitMix| -> BlessingPattern {
            format!("{}_G", groups[rng.below(groups.len())]).parse().unwrap()
        };
        let literal = |rng: &mut SplitMix| -> BlessingPattern { ALPHABET[rng.below(3)].parse().unwrap() };
        let acl = Acl::new(vec![pick(&mut rng), literal(&mut rng)], vec![pick(&mut rng)]);
        let r_full = resolver_for(&graph, &full);
        let r_part = resolver_for(&graph, &partial);
        for name in &names {
            let bn = BlessingName::new(name.clone()).unwrap();
            if is_authorized(&bn, &acl, &r_part) {
                assert!(is_authorized(&bn, &acl, &r_full), "{acl} {bn} {graph:?}");
            }
        }
    }
}
