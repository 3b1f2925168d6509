#![no_main]

use cloc::design_file::DesignFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(design) = DesignFile::parse(text) {
        // Anything accepted must survive a write/read round trip unchanged.
        let again = DesignFile::parse(&design.to_text()).expect("re-parse of written design");
        assert_eq!(again, design);
    }
});
