#![no_main]

use bless_net::frame::MessageType;
use bless_net::messages::Message;
use libfuzzer_sys::fuzz_target;

// First byte is the message type, the rest is the body.
fuzz_target!(|data: &[u8]| {
    let Some((&code, body)) = data.split_first() else {
        return;
    };
    let Some(kind) = MessageType::from_code(code) else {
        return;
    };
    if let Ok(m) = Message::decode(kind, body) {
        assert_eq!(m.kind(), kind);
        assert_eq!(m.body(), body);
    }
});
