mod common;

use bless_core::audit::{AuditRecord, Decision};
use bless_core::caveats::{Caveat, Discharge};
use bless_core::credentials::{Blessing, Certificate, RootSet};
use bless_core::crypto::Signature;
use bless_core::encoding::{hash_args, Decode, Digest, Encode, Encoder, HashArgs};
use bless_core::groups::{Mode, RemainderQuery};
use chrono::{TimeZone, Utc};
use common::*;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use std::collections::{BTreeSet, HashMap};

fn roundtrip<T: Encode + Decode + PartialEq + std::fmt::Debug>(v: &T) {
    let bytes = v.to_canonical_bytes();
    let back = T::from_canonical_bytes(&bytes).expect("decodes");
    assert_eq!(&back, v);
    assert_eq!(back.to_canonical_bytes(), bytes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn caveats_roundtrip(c in arb_caveat()) {
        roundtrip(&c);
    }

    #[test]
    fn blessings_roundtrip(b in arb_chain()) {
        roundtrip(&b);
        prop_assert_eq!(Blessing::from_text(&b.to_text()).unwrap(), b);
    }

    #[test]
    fn discharges_roundtrip(cavs in prop::collection::vec(arb_caveat(), 0..4), id in any::<[u8; 32]>(), sig in prop::collection::vec(any::<u8>(), 0..80)) {
        roundtrip(&Discharge { caveat_id: Digest(id), caveats: cavs, signature: Signature(sig) });
    }

    #[test]
    fn root_sets_roundtrip(chains in prop::collection::vec(arb_chain(), 0..4)) {
        let roots: RootSet = chains.iter().map(Blessing::root).collect();
        roundtrip(&roots);
    }

    #[test]
    fn audit_records_roundtrip(ms in -1_000_000_000_000i64..4_000_000_000_000, method in "[A-Za-z]{0,8}", names in prop::collection::vec("[A-Za-z/]{0,12}", 0..4), d in 0u8..4) {
        roundtrip(&AuditRecord {
            time: Utc.timestamp_millis_opt(ms).unwrap(),
            method,
            peer_names: names,
            decision: Decision::from_code(d).unwrap(),
        });
    }

    #[test]
    fn queries_roundtrip(parts in prop::collection::vec(arb_component(), 1..5), over in any::<bool>(), assumed in prop::collection::btree_map("[a-z]{1,4}", prop::collection::btree_set(1usize..5, 0..3), 0..3)) {
        let name = parts.join("/").parse().unwrap();
        let mut q = RemainderQuery::new("g", name, if over { Mode::Over } else { Mode::Under });
        q.assumptions = assumed.into_iter()
            .map(|(g, s)| (g, s.into_iter().filter(|&c| c <= parts.len()).collect::<BTreeSet<_>>()))
            .collect();
        roundtrip(&q);
    }

    /// Decoding never panics, and anything accepted re-encodes identically.
    #[test]
    fn decoders_are_strict(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        if let Ok(c) = Caveat::from_canonical_bytes(&bytes) {
            prop_assert_eq!(c.to_canonical_bytes(), bytes.clone());
        }
        if let Ok(b) = Blessing::from_canonical_bytes(&bytes) {
            prop_assert_eq!(b.to_canonical_bytes(), bytes.clone());
        }
        if let Ok(d) = Discharge::from_canonical_bytes(&bytes) {
            prop_assert_eq!(d.to_canonical_bytes(), bytes);
        }
    }
}

#[test]
fn text_and_list_vectors() {
    assert_eq!("TV".to_canonical_bytes(), vec![0, 0, 0, 2, b'T', b'V']);
    let mut enc = Encoder::new();
    Caveat::encode_list(&[], &mut enc);
    assert_eq!(enc.finish(), vec![0, 0, 0, 0]);
}

#[test]
fn hash_argument_boundaries() {
    assert_ne!(hash_args(&[&"ab", &"c"]), hash_args(&[&"a", &"bc"]));
    assert_eq!(hash_args(&[&"x"]), hash_args(&[&"x"]));
    assert_eq!(HashArgs::new().arg("a").arg("b").finish(), hash_args(&[&"a", &"b"]));
}

#[test]
fn distinct_certificates_encode_distinctly() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = arb_chain();
    let mut seen: HashMap<Vec<u8>, Certificate> = HashMap::new();
    let mut certs = 0;
    while certs < 1000 {
        let b = strategy.new_tree(&mut runner).unwrap().current();
        for c in b.chain() {
            certs += 1;
            if let Some(prev) = seen.insert(c.to_canonical_bytes(), c.clone()) {
                assert_eq!(&prev, c, "two certificates share an encoding");
            }
        }
    }
}

#[test]
fn caveat_encoding_is_injective_at_scale() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = arb_caveat();
    let mut seen: HashMap<Vec<u8>, Caveat> = HashMap::new();
    for _ in 0..10_000 {
        let c = strategy.new_tree(&mut runner).unwrap().current();
        if let Some(prev) = seen.insert(c.to_canonical_bytes(), c.clone()) {
            assert_eq!(prev, c, "two caveats share an encoding");
        }
    }
    assert!(seen.len() > 5_000, "generator produced too few distinct values");
}

#[test]
fn chain_hash_changes_when_any_name_changes() {
    let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let (b, _) = honest_chain(7, &names, &[]);
    let base = hash_args(&[&b]);
    for i in 0..3 {
        let mut chain = b.chain().to_vec();
        chain[i].name.push('x');
        let mutated = Blessing::from_chain(chain).unwrap();
        assert_ne!(hash_args(&[&mutated]), base, "mutating certificate {i}");
    }
}
