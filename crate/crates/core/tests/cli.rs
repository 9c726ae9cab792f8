use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spatiotrack::sim::{save_script, standard_suite};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spatiotrack")).args(args).output().expect("spawn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["track", "--seq", "x"]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = bin(&["eval", "--gt", s(&missing), "--res", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind="));

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1,1,not-a-number,0,10,10,1\n").unwrap();
    let out = bin(&["eval", "--gt", s(&bad), "--res", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_track_eval_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let script = standard_suite(5).swap_remove(0);
    let path = dir.path().join("scene.toml");
    save_script(&script, &path).unwrap();
    let out = dir.path().join("out");
    assert!(bin(&["simulate", "--script", s(&path), "--out", s(&out)]).status.success());

    let seq = out.join(&script.name);
    let res = dir.path().join("res.txt");
    let det = seq.join("det").join("det.txt");
    let gt = seq.join("gt").join("gt.txt");
    let o = bin(&[
        "track", "--seq", s(&seq), "--det", s(&det), "--out", s(&res),
        "--preset", "compact", "--ablation", "p5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&res).unwrap().lines().count() > 0);

    let o = bin(&["eval", "--gt", s(&gt), "--res", s(&res)]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("MOTA="), "{text}");
    assert!(text.contains("IDS="), "{text}");

    let o = bin(&["overlay", "--seq", s(&seq), "--res", s(&res), "--out", s(&dir.path().join("png"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(dir.path().join("png")).unwrap().count(), script.frames as usize);
}

#[test]
fn eval_perfect_result() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.txt");
    fs::write(&gt, "1,1,10,10,20,40,1,1,1\n2,1,12,10,20,40,1,1,1\n1,2,60,10,20,40,1,1,1\n").unwrap();
    let res = dir.path().join("res.txt");
    fs::write(&res, "1,5,10,10,20,40,0.9,-1,-1,-1\n2,5,12,10,20,40,0.9,-1,-1,-1\n1,6,60,10,20,40,0.9,-1,-1,-1\n").unwrap();
    let o = bin(&["eval", "--gt", s(&gt), "--res", s(&res)]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("MOTA=1.000"), "{text}");
    assert!(text.contains("IDS=0"), "{text}");
}

#[test]
fn gradcheck_small_run_passes() {
    let o = bin(&["gradcheck", "--seed", "3", "--trials", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok"));
}
