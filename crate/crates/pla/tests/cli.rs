use std::path::Path;
use std::process::{Command, Output};

use pla::synth::DatasetSpec;

fn pla(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pla")).args(args).current_dir(cwd).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Two training scenes and one evaluation scene from the default fixture.
fn write_small_spec(dir: &Path) {
    let mut spec = DatasetSpec::default_fixture();
    let eval = spec.scenes.iter().find(|s| s.eval).cloned().unwrap();
    spec.scenes.retain(|s| !s.eval);
    spec.scenes.truncate(2);
    spec.scenes.push(eval);
    spec.iterations = 3;
    std::fs::write(dir.join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
}

#[test]
fn full_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_small_spec(d);
    let out = pla(&["synth", "--spec", "spec.json", "--out", "data"], d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = pla(&["associate", "--config", "data/pla.cfg"], d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["scenes"], 2);

    let out = pla(&["train", "--config", "data/pla.cfg", "--iters", "2", "--alphas", "0,0.05,0.05"], d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("2 iterations"));

    for extra in [&[][..], &["--no-calibration"][..]] {
        let mut args = vec!["eval", "--config", "data/pla.cfg"];
        args.extend_from_slice(extra);
        let out = pla(&args, d);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("hIoU"));
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("data/out/report.json")).unwrap()).unwrap();
    assert_eq!(report["calibrated"], false);

    for artifact in ["data/out/model.plam", "data/out/pairs.plap", "data/embeddings.plae", "data/scenes/train/train00.plas"] {
        let out = pla(&["inspect", artifact], d);
        assert_eq!(code(&out), 0, "{artifact}: {}", stderr(&out));
    }
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = pla(&["associate", "--config", "missing.cfg"], d);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing.cfg"));

    let out = pla(&["train"], d);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("scenes"), "{}", stderr(&out));

    assert_eq!(code(&pla(&["associate", "--gamma", "many"], d)), 1);
    assert_eq!(code(&pla(&["frobnicate"], d)), 1);
    assert_eq!(code(&pla(&["train", "--delta", "2"], d)), 1);

    std::fs::write(d.join("junk.bin"), b"JUNKJUNK").unwrap();
    let out = pla(&["inspect", "junk.bin"], d);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("byte 0"), "{}", stderr(&out));

    assert_eq!(code(&pla(&["--help"], d)), 0);
}

#[test]
fn non_finite_loss_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_small_spec(d);
    assert_eq!(code(&pla(&["synth", "--spec", "spec.json", "--out", "data"], d)), 0);
    assert_eq!(code(&pla(&["associate", "--config", "data/pla.cfg"], d)), 0);
    let mut cfg = std::fs::read_to_string(d.join("data/pla.cfg")).unwrap();
    cfg.push_str("score_temperature = 1e-310\n");
    std::fs::write(d.join("data/pla.cfg"), cfg).unwrap();
    let out = pla(&["train", "--config", "data/pla.cfg", "--iters", "1"], d);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("error"));
}
