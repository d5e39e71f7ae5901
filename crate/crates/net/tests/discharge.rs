mod common;

use bless_core::caveat_text::REVOCATION_CHECK;
use bless_core::caveats::{Caveat, ThirdPartyCaveat};
use bless_core::{Acl, Blessing, KeyPair};
use bless_net::discharge::{DischargeService, RevocationList};
use bless_net::messages::CloseCode;
use bless_net::{Client, ClientOptions, DischargeFetcher, Identity, MethodPolicy, NetError, RecordingNetwork, Server, ServerHandle, TcpNetwork};
use bless_core::clock::ManualClock;
use chrono::Duration as Span;
use common::*;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

struct Revocable {
    clock: Arc<ManualClock>,
    list: RevocationList,
    discharger: ServerHandle,
    service: ServerHandle,
    service_calls: Arc<AtomicUsize>,
    guest: Identity,
    guest_blessing: Blessing,
    _dir: tempfile::TempDir,
}

/// Alice runs a revocation discharger and a service admitting `Alice/...`;
/// the guest holds `Alice/Guest` conditioned on id `guest-1` staying
/// unrevoked.
fn revocable() -> Revocable {
    let dir = tempfile::tempdir().unwrap();
    let clock = manual_clock();
    let alice = KeyPair::generate();
    let root = bless_core::self_blessing(&alice, "Alice").unwrap();

    let list = RevocationList::new(dir.path().join("revoked"));
    let d_keys = KeyPair::generate();
    let d_blessing = extend(&alice, &root, &d_keys, "Revoker", vec![]);
    let svc = DischargeService::new(d_keys.secret.clone(), clock.clone()).with_revocation(list.clone());
    let discharger = Server::bind("127.0.0.1:0", config(blessed_identity(d_keys.clone(), d_blessing, &[&root]), verifier(clock.clone())), Arc::new(svc))
        .unwrap()
        .spawn()
        .unwrap();

    let s_keys = KeyPair::generate();
    let s_blessing = extend(&alice, &root, &s_keys, "Service", vec![]);
    let acl = Acl::parse("allow: Alice").unwrap();
    let mut cfg = config(blessed_identity(s_keys, s_blessing, &[&root]), verifier(clock.clone()));
    cfg.handshake_policy = Some(acl.clone());
    let (service, service_calls) = echo_server(cfg, MethodPolicy::Acl(acl));

    let (mut guest, _) = identity("Guest");
    let tpc = ThirdPartyCaveat::new(
        d_keys.public,
        Caveat::custom(REVOCATION_CHECK, b"guest-1".to_vec()).unwrap(),
        discharger.endpoint(),
    )
    .unwrap();
    let guest_blessing = bless_core::bless(&guest.keys.public, &alice.secret, &root, "Guest", vec![Caveat::ThirdParty(tpc)]).unwrap();
    guest.store.add(guest_blessing.clone(), "Alice".parse().unwrap(), "guest", monday_nine()).unwrap();
    guest.roots.add(root.root());
    Revocable {
        clock,
        list,
        discharger,
        service,
        service_calls,
        guest,
        guest_blessing,
        _dir: dir,
    }
}

fn options(r: &Revocable, fetcher: Arc<DischargeFetcher>) -> ClientOptions {
    ClientOptions {
        verifier: verifier(r.clock.clone()),
        fetcher: Some(fetcher),
        ..ClientOptions::default()
    }
}

fn fetcher(r: &Revocable, net: Arc<RecordingNetwork>) -> Arc<DischargeFetcher> {
    Arc::new(DischargeFetcher::new(net, verifier(r.clock.clone()), Duration::from_secs(5)))
}

fn is_client_rejected(e: &NetError) -> bool {
    matches!(e, NetError::Closed { code: CloseCode::CLIENT_REJECTED, .. })
}

#[test]
fn revocation_takes_effect_once_cached_discharges_expire() {
    let r = revocable();
    let net = Arc::new(RecordingNetwork::new(Arc::new(TcpNetwork)));
    let f = fetcher(&r, net.clone());
    let mut c = Client::connect(net.as_ref(), &r.service.endpoint(), &r.guest, &options(&r, f.clone())).unwrap();
    assert_eq!(c.call("Echo", b"1").unwrap().body, b"1");
    c.close();

    r.list.revoke("guest-1").unwrap();
    r.clock.advance(Span::minutes(4));
    let c = Client::connect(net.as_ref(), &r.service.endpoint(), &r.guest, &options(&r, f.clone()));
    assert!(c.is_ok(), "cached discharge still within its lifetime");

    r.clock.advance(Span::minutes(2));
    let err = Client::connect(net.as_ref(), &r.service.endpoint(), &r.guest, &options(&r, f.clone()))
        .err()
        .unwrap();
    assert!(is_client_rejected(&err), "{err}");

    let fresh = fetcher(&r, net.clone());
    let tpc = bless_core::caveats::third_party_caveats(&r.guest_blessing)[0].clone();
    assert!(matches!(fresh.fetch(&tpc, &r.guest), Err(NetError::Refused(_))));
    assert_eq!(r.service_calls.load(Ordering::SeqCst), 1);
}

#[test]
fn issued_discharges_expire_after_their_lifetime() {
    let r = revocable();
    let net = Arc::new(RecordingNetwork::new(Arc::new(TcpNetwork)));
    let f = fetcher(&r, net.clone());
    let tpc = bless_core::caveats::third_party_caveats(&r.guest_blessing)[0].clone();
    let d = f.fetch(&tpc, &r.guest).unwrap();
    assert_eq!(d.expiry(), Some(monday_nine() + Span::minutes(5)));
    assert_eq!(d.caveats, vec![Caveat::expiry(monday_nine() + Span::minutes(5))]);
}

#[test]
fn cached_discharges_need_no_network() {
    let r = revocable();
    let net = Arc::new(RecordingNetwork::new(Arc::new(TcpNetwork)));
    let f = fetcher(&r, net.clone());
    let tpc = bless_core::caveats::third_party_caveats(&r.guest_blessing)[0].clone();
    let first = f.fetch(&tpc, &r.guest).unwrap();
    assert_eq!(net.contacted(), vec![r.discharger.endpoint()]);
    let second = f.fetch(&tpc, &r.guest).unwrap();
    assert_eq!(first, second);
    assert_eq!(net.contacted().len(), 1, "second fetch served from cache");

    r.clock.advance(Span::minutes(5) + Span::seconds(1));
    f.fetch(&tpc, &r.guest).unwrap();
    assert_eq!(net.contacted().len(), 2, "expired entry refetched");
}

#[test]
fn concurrent_requests_are_all_answered() {
    let r = revocable();
    let tpc = bless_core::caveats::third_party_caveats(&r.guest_blessing)[0].clone();
    let guest = Arc::new(r.guest);
    let workers: Vec<_> = (0..16)
        .map(|_| {
            let tpc = tpc.clone();
            let guest = guest.clone();
            let clock = r.clock.clone();
            thread::spawn(move || {
                let net = Arc::new(TcpNetwork);
                let f = DischargeFetcher::new(net, verifier(clock), Duration::from_secs(10));
                (0..4).map(|_| f.fetch(&tpc, &guest).is_ok() as usize).sum::<usize>()
            })
        })
        .collect();
    let ok: usize = workers.into_iter().map(|w| w.join().unwrap()).sum();
    assert_eq!(ok, 64);
}

#[test]
fn wrong_discharger_key_is_refused() {
    let r = revocable();
    let net = Arc::new(RecordingNetwork::new(Arc::new(TcpNetwork)));
    let f = fetcher(&r, net.clone());
    let mut tpc = bless_core::caveats::third_party_caveats(&r.guest_blessing)[0].clone();
    tpc.discharger_key = KeyPair::generate().public;
    let err = f.fetch(&tpc, &r.guest).unwrap_err();
    assert!(matches!(err, NetError::ServerRejected(_)), "{err}");
}
