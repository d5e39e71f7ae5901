#![no_main]

use bless_net::frame::Frame;
use bless_net::messages::Message;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(frame) = Frame::from_bytes(data) else {
        return;
    };
    assert_eq!(frame.to_bytes().unwrap(), data);
    if let Ok(m) = Message::from_frame(&frame) {
        assert_eq!(m.to_frame().to_bytes().unwrap(), data);
    }
});
