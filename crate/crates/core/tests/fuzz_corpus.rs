//! Replays the checked-in fuzz seeds through the same properties the fuzz
//! targets assert, so the corpora stay meaningful on a stable toolchain.

use std::fs;
use std::path::PathBuf;

use cloc::config::Config;
use cloc::design_file::DesignFile;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            let text = fs::read_to_string(&path).unwrap();
            (path, text)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn config_seeds_parse_or_fail_cleanly() {
    let seeds = seeds("config_parse");
    assert!(seeds.len() >= 5);
    let mut accepted = 0;
    for (path, text) in &seeds {
        if let Ok(config) = Config::parse(text) {
            accepted += 1;
            assert!(config.keys().count() > 0, "{}", path.display());
        }
    }
    assert!(
        accepted >= seeds.len() - 1,
        "only the duplicate-key seed should be rejected"
    );
}

#[test]
fn design_seeds_round_trip() {
    for (path, text) in seeds("design_parse") {
        let design = DesignFile::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(DesignFile::parse(&design.to_text()).unwrap(), design);
        assert_eq!(design.to_text(), text, "{}", path.display());
    }
}
