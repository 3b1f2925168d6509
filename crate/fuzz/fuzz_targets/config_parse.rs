#![no_main]

use cloc::config::{parse_quantity, Config, Dimension};
use libfuzzer_sys::fuzz_target;

const DIMENSIONS: [Dimension; 4] = [Dimension::Frequency, Dimension::Time, Dimension::Angle, Dimension::Mass];

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = Config::parse(text) else {
        return;
    };
    for key in config.keys() {
        let _ = config.text(key);
        let _ = config.number(key);
        let _ = config.integer(key);
        let _ = config.opt_bool(key);
        for dim in DIMENSIONS {
            if let Ok(v) = config.quantity(key, dim) {
                assert!(v.is_finite(), "accepted non-finite quantity for `{key}`");
            }
            let _ = config.opt_quantity_list(key, dim);
            let _ = parse_quantity(&config.text(key).unwrap_or_default(), dim);
        }
    }
    let _ = config.finish();
});
