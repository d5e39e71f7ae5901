#![no_main]

use bless_core::audit::AuditRecord;
use bless_core::groups::RemainderQuery;
use bless_core::{Blessing, Caveat, Decode, Discharge, Encode, PublicKey, RootSet};
use libfuzzer_sys::fuzz_target;

fn roundtrip<T: Decode + Encode>(bytes: &[u8]) {
    if let Ok(v) = T::from_canonical_bytes(bytes) {
        assert_eq!(v.to_canonical_bytes(), bytes);
    }
}

// First byte picks the decoder.
fuzz_target!(|data: &[u8]| {
    let Some((&which, bytes)) = data.split_first() else {
        return;
    };
    match which % 7 {
        0 => roundtrip::<Caveat>(bytes),
        1 => roundtrip::<Blessing>(bytes),
        2 => roundtrip::<Discharge>(bytes),
        3 => roundtrip::<RootSet>(bytes),
        4 => roundtrip::<AuditRecord>(bytes),
        5 => roundtrip::<RemainderQuery>(bytes),
        _ => roundtrip::<PublicKey>(bytes),
    }
});
