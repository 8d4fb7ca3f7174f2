use std::path::Path;

use wfdem_core::load_farm;
use wfdem_core::synth::{case_farm, Case};

fn farms_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../farms")
}

#[test]
fn shipped_files_match_the_generator() {
    for case in Case::ALL {
        let path = farms_dir().join(format!("{}.json", case.name()));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, case_farm(case).to_json_pretty(), "{} is stale; rerun `wfdem synth`", path.display());
    }
}

#[test]
fn shipped_files_load() {
    for case in Case::ALL {
        let farm = load_farm(farms_dir().join(format!("{}.json", case.name()))).unwrap();
        assert_eq!(farm.wts.len(), 33);
        assert_eq!(farm, case_farm(case));
    }
}
