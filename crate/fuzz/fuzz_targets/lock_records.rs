#![no_main]

use bless_core::{Decode, Encode};
use bless_net::lockd::{decode_audit_reply, AddAclArgs, LockState, LockStatus};
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
    match which % 4 {
        0 => roundtrip::<LockState>(bytes),
        1 => roundtrip::<LockStatus>(bytes),
        2 => roundtrip::<AddAclArgs>(bytes),
        _ => {
            let _ = decode_audit_reply(bytes);
        }
    }
});
