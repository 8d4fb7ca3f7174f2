use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wfdem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfdem")).args(args).output().unwrap()
}

fn farm(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../farms").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = wfdem(&["all", "--farm", s(&farm("case_b.json")), "--clusters", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("EQ03"));
    assert!(stdout.contains("E' = "));

    let o = wfdem(&["report", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), stdout);

    for kind in ["scatter", "features", "responses"] {
        let before = std::fs::read(out.join(match kind {
            "scatter" => "modescatter.svg",
            "features" => "features.svg",
            _ => "responses.svg",
        }))
        .unwrap();
        let o = wfdem(&["plot", "--out", s(&out), "--kind", kind]);
        assert!(o.status.success());
        let path = String::from_utf8(o.stdout).unwrap();
        assert_eq!(std::fs::read(path.trim()).unwrap(), before, "{kind}");
    }
}

#[test]
fn invalid_farm_fails_in_load_stage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = wfdem(&["all", "--farm", s(&bad), "--out", s(&dir.path().join("out"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage load"));

    let o = wfdem(&["flow", "--farm", s(&dir.path().join("missing.json"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage load"));
}

#[test]
fn stage_subcommands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let f = farm("case_a.json");
    for (cmd, file) in [
        ("flow", "buses.csv"),
        ("modes", "mpf.csv"),
        ("cluster", "groups.json"),
        ("aggregate", "dem.json"),
    ] {
        let out = dir.path().join(cmd);
        let o = wfdem(&[cmd, "--farm", s(&f), "--out", s(&out)]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(file).is_file(), "{cmd}");
        assert!(!out.join("report.json").exists(), "{cmd}");
    }
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let f = farm("case_a.json");
    assert!(!wfdem(&["all", "--farm", s(&f), "--clusters", "0", "--out", s(&out)]).status.success());
    assert!(!wfdem(&["all", "--farm", s(&f), "--clusters", "40", "--out", s(&out)]).status.success());
    assert!(!wfdem(&["plot", "--out", s(&out), "--kind", "pie"]).status.success());
    assert!(!wfdem(&["report", "--out", s(&dir.path().join("empty"))]).status.success());
    assert!(!wfdem(&["all", "--farm", s(&f), "--states", "omega"]).status.success());
}

#[test]
fn auto_clusters_picks_three_groups_for_case_c() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = wfdem(&[
        "all", "--farm", s(&farm("case_c.json")), "--auto-clusters", "--e-target", "0.01", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["clusters"], 3);
    assert_eq!(report["auto_e_target"], 0.01);
}

#[test]
fn synth_writes_the_shipped_farms() {
    let dir = tempfile::tempdir().unwrap();
    let o = wfdem(&["synth", "--out", s(dir.path())]);
    assert!(o.status.success());
    for name in ["case_a", "case_b", "case_c", "case_d", "zero_impedance"] {
        let file = format!("{name}.json");
        assert_eq!(
            std::fs::read(dir.path().join(&file)).unwrap(),
            std::fs::read(farm(&file)).unwrap(),
            "{name}"
        );
    }
}
