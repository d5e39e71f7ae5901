#![allow(dead_code)]

use bless_core::caveats::{Caveat, ThirdPartyCaveat};
use bless_core::credentials::{bless, self_blessing, Blessing};
use bless_core::crypto::{KeyPair, SecretKey};
use bless_core::pattern::BlessingPattern;
use chrono::Weekday;
use proptest::prelude::*;

/// Deterministic key pair from a seed.
pub fn key_from_seed(seed: u64) -> KeyPair {
    let mut bytes = [0u8; 32];
    bytes[24..].copy_from_slice(&seed.to_be_bytes());
    bytes[0] = 0x11;
    KeyPair::from_secret(SecretKey::from_scalar_bytes(&bytes).expect("small scalar is valid"))
}

pub fn arb_component() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::sample::select(vec!["Alice", "Bob", "TV", "Phone", "Key", "x"]).prop_map(String::from),
        "[A-Za-z0-9_.-]{1,8}".prop_filter("reserved", |s| s != "eob" && s != "..." && !s.ends_with("_G")),
    ]
}

pub fn arb_group_free_pattern() -> impl Strategy<Value = BlessingPattern> {
    (prop::collection::vec(arb_component(), 1..4), any::<bool>()).prop_map(|(parts, exact)| {
        let mut text = parts.join("/");
        if exact {
            text.push_str("/eob");
        }
        text.parse().unwrap_or_else(|_| BlessingPattern::universal())
    })
}

pub fn arb_first_party() -> impl Strategy<Value = Caveat> {
    prop_oneof![
        any::<i64>().prop_map(Caveat::Expiry),
        prop::collection::vec("[A-Za-z]{0,6}", 0..4).prop_map(Caveat::Method),
        prop::collection::vec(arb_group_free_pattern(), 0..3).prop_map(Caveat::Peer),
        (0u8..7, 0u8..24, 1u8..=24).prop_filter_map("hours", |(d, s, e)| {
            Caveat::schedule(Weekday::try_from(d).unwrap(), s, e).ok()
        }),
        (0x80u8..=0xff, prop::collection::vec(any::<u8>(), 0..16))
            .prop_map(|(t, p)| Caveat::custom(t, p).unwrap()),
    ]
}

pub fn arb_caveat() -> impl Strategy<Value = Caveat> {
    prop_oneof![
        4 => arb_first_party(),
        1 => (any::<[u8; 16]>(), 1u64..1000, arb_first_party(), "[a-z0-9.:]{0,12}").prop_map(
            |(nonce, seed, check, location)| {
                Caveat::ThirdParty(ThirdPartyCaveat {
                    nonce,
                    discharger_key: key_from_seed(seed).public,
                    check: Box::new(check),
                    location,
                })
            }
        ),
    ]
}

/// An honest chain: a self-blessing extended `links` times, each link to a
/// fresh seeded key and carrying the given caveats.
pub fn honest_chain(seed: u64, names: &[String], caveats: &[Vec<Caveat>]) -> (Blessing, Vec<KeyPair>) {
    let keys: Vec<KeyPair> = (0..names.len() as u64).map(|i| key_from_seed(seed * 64 + i + 1)).collect();
    let mut b = self_blessing(&keys[0], &names[0]).unwrap();
    for i in 1..names.len() {
        let cavs = caveats.get(i).cloned().unwrap_or_default();
        b = bless(&keys[i].public, &keys[i - 1].secret, &b, &names[i], cavs).unwrap();
    }
    (b, keys)
}

pub fn arb_chain() -> impl Strategy<Value = Blessing> {
    (1u64..1_000_000, prop::collection::vec(arb_component(), 1..5))
        .prop_flat_map(|(seed, names)| {
            let n = names.len();
            (
                Just(seed),
                Just(names),
                prop::collection::vec(prop::collection::vec(arb_first_party(), 0..3), n),
            )
        })
        .prop_map(|(seed, names, cavs)| honest_chain(seed, &names, &cavs).0)
}
