#![no_main]

use libfuzzer_sys::fuzz_target;
use thermoclust::lattice::{is_r_connected, Region};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(region) = Region::from_json(text) else {
        return;
    };
    let again = Region::from_json(&region.to_json()).expect("serialized region parses");
    assert_eq!(again, region);
    if region.len() <= 64 {
        let _ = is_r_connected(&region, 1);
    }
});
