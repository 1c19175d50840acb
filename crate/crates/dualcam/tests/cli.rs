mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{synthetic_triple, write_capture};

fn dualcam(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualcam"))
        .arg("--root")
        .arg(root)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn cli_walkthrough() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("root");
    let src = tmp.path().join("session");
    write_capture(&src.join("a"), &synthetic_triple(512, 1));
    std::fs::create_dir_all(&root).unwrap();
    std::fs::write(root.join("dualcam.toml"), "crop_width = 448\ncrop_height = 448\n").unwrap();

    let o = dualcam(&root, &["ingest", src.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "added 1 existing 0 skipped 0");

    let o = dualcam(&root, &["calibrate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--all"));

    let o = dualcam(&root, &["calibrate", "--all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "calibrated 1 failed 0");

    let o = dualcam(&root, &["stats"]);
    let s = stdout(&o);
    assert!(s.contains("acquired    1") && s.contains("calibrated  1") && s.contains("accepted    0"), "{s}");

    let o = dualcam(&root, &["degrade", "--factor", "4"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("degraded 1"));

    let o = dualcam(&root, &["fuse"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("fused 1"));

    let o = dualcam(&root, &["split", "--seed", "5", "--train-frac", "0.5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("train       0"));

    // nothing is accepted yet, so eval has no rows and warns
    let o = dualcam(&root, &["eval", "--protocol", "theoretical", "--outputs", root.join("fused").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("method"));
}

#[test]
fn bad_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("dualcam.toml"), "flow_window = 4\n").unwrap();
    let o = dualcam(tmp.path(), &["stats"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow_window"));
}
