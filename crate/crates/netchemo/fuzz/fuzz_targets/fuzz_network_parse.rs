#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = netchemo::parse_network(text) {
        // Any accepted document must survive a serialize/parse round trip.
        let again = netchemo::parse_network(&netchemo::serialize_network(&spec))
            .expect("serialized spec re-parses");
        assert_eq!(spec, again);
    }
});
