#![no_main]

use bless_core::caveat_text::parse_caveat;
use bless_core::groups::GroupDefinition;
use bless_core::{Acl, Blessing, BlessingName, BlessingPattern, PublicKey};
use bless_net::group_service::GroupRegistry;
use chrono::{TimeZone, Utc};
use libfuzzer_sys::fuzz_target;

// First byte picks the parser; the rest is the text.
fuzz_target!(|data: &[u8]| {
    let Some((&which, bytes)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(bytes) else {
        return;
    };
    match which % 8 {
        0 => {
            if let Ok(acl) = Acl::parse(text) {
                assert_eq!(Acl::parse(&acl.to_text()).unwrap(), acl);
            }
        }
        1 => {
            if let Ok(def) = GroupDefinition::parse(text) {
                assert_eq!(GroupDefinition::parse(&def.to_text()).unwrap(), def);
            }
        }
        2 => {
            if let Ok(reg) = GroupRegistry::parse(text) {
                assert_eq!(GroupRegistry::parse(&reg.to_text()).unwrap(), reg);
            }
        }
        3 => {
            let _ = parse_caveat(text, Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap());
        }
        4 => {
            if let Ok(p) = text.parse::<BlessingPattern>() {
                assert_eq!(p.to_string().parse::<BlessingPattern>().unwrap(), p);
            }
        }
        5 => {
            if let Ok(n) = text.parse::<BlessingName>() {
                assert_eq!(n.to_string().parse::<BlessingName>().unwrap(), n);
            }
        }
        6 => {
            if let Ok(b) = Blessing::from_text(text) {
                assert_eq!(Blessing::from_text(&b.to_text()).unwrap(), b);
            }
        }
        _ => {
            let _ = PublicKey::from_text(text);
        }
    }
});
