use std::path::Path;
use std::process::{Command, Output};

fn merl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_merl")).args(args).output().unwrap()
}

fn small(dir: &Path) -> Vec<String> {
    [
        "--profile",
        "control",
        "--out",
        dir.to_str().unwrap(),
        "--override",
        "hyper.horizon=64",
        "--override",
        "hyper.minibatch_size=32",
        "--override",
        "hyper.epochs=1",
        "--override",
        "hyper.total_steps=256",
        "--override",
        "hidden_sizes=[8]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn profile_prints_loadable_json() {
    let out = merl(&["profile", "shared"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("shared.json");
    std::fs::write(&p, &out.stdout).unwrap();
    let out = merl(&[
        "train",
        "--config",
        p.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "hyper.total_steps=512",
        "--override",
        "hidden_sizes=[8]",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("grid_rooms_a__ve_fs__seed0.metrics.jsonl").exists());

    let out = merl(&["profile", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train".to_string(), "--seeds".into(), "0,1".into()];
    args.extend(small(dir.path()));
    let out = merl(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for s in 0..2 {
        assert!(dir
            .path()
            .join(format!("point_mass_2d__ve_fs__seed{s}.metrics.jsonl"))
            .exists());
    }
    assert!(dir.path().join("config.json").exists());

    let saved = dir.path().join("config.json");
    let again = tempfile::tempdir().unwrap();
    let out = merl(&[
        "train",
        "--config",
        saved.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        again.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let name = "point_mass_2d__ve_fs__seed0.metrics.jsonl";
    assert_eq!(
        std::fs::read(dir.path().join(name)).unwrap(),
        std::fs::read(again.path().join(name)).unwrap()
    );

    let out = merl(&["aggregate", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("| task | baseline | MERL |"));
    assert!(dir.path().join("summary.md").exists());
}

#[test]
fn bad_arguments_exit_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train".to_string()];
    args.extend(small(dir.path()));
    args.extend(["--override".into(), "hyper.gamma=2".into()]);
    let out = merl(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    let out = merl(&["train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_command_passes() {
    let out = merl(&["gradcheck", "--instances", "5"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("combined_shared"));
}
