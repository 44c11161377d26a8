//! End-to-end checks of the command-line binary: exit-code contract,
//! seed-determinism, input-directory integrity, and the full
//! synthesize -> reconstruct -> evaluate loop.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn simtext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simtext"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Every file in `dir` (non-recursive) mapped to its bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            map.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    map
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    assert_eq!(code(&simtext(&["--help"])), 0);
    for sub in ["gen-labels", "reconstruct", "eval", "bench", "synth", "gradcheck"] {
        let out = simtext(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub} --help must exit 0");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&simtext(&[])), 2, "missing subcommand");
    assert_eq!(code(&simtext(&["frobnicate"])), 2, "unknown subcommand");
    assert_eq!(code(&simtext(&["synth", "--bogus-flag"])), 2, "unknown flag");
    let dir = tempfile::tempdir().unwrap();
    let out = simtext(&[
        "eval",
        "--gt",
        dir.path().to_str().unwrap(),
        "--det",
        dir.path().to_str().unwrap(),
        "--format",
        "no-such-format",
    ]);
    assert_eq!(code(&out), 2, "bad enum value");
    assert_eq!(code(&simtext(&["gen-labels"])), 2, "missing required args");
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("does-not-exist");
    let out_dir = dir.path().join("out");
    let out = simtext(&[
        "gen-labels",
        "--in",
        missing.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "missing input directory");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "not_a_knob = 3\n").unwrap();
    let out = simtext(&[
        "--config",
        cfg.to_str().unwrap(),
        "synth",
        "--out",
        out_dir.to_str().unwrap(),
        "--count",
        "1",
    ]);
    assert_eq!(code(&out), 1, "unknown config key");

    let scenes = dir.path().join("scenes");
    assert_eq!(
        code(&simtext(&["synth", "--out", scenes.to_str().unwrap(), "--count", "1"])),
        0
    );
    let out = simtext(&[
        "eval",
        "--gt",
        scenes.to_str().unwrap(),
        "--det",
        scenes.to_str().unwrap(),
        "--iou",
        "1.5",
    ]);
    assert_eq!(code(&out), 1, "out-of-range threshold");
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let res = simtext(&[
            "synth",
            "--out",
            out.to_str().unwrap(),
            "--count",
            "2",
            "--seed",
            seed,
        ]);
        assert_eq!(code(&res), 0);
    }
    let (sa, sb, sc) = (snapshot(&a), snapshot(&b), snapshot(&c));
    assert!(!sa.is_empty());
    assert_eq!(sa, sb, "same seed must reproduce byte-identical outputs");
    assert_ne!(sa, sc, "different seeds must diverge");
}

#[test]
fn gen_labels_writes_masks_without_touching_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    std::fs::create_dir(&gt).unwrap();
    std::fs::write(gt.join("img_1.txt"), "10,10,60,10,60,40,10,40,word\n").unwrap();
    std::fs::write(
        gt.join("img_2.txt"),
        "5,5,45,5,45,25,5,25,abc\n50,30,90,30,90,60,50,60,###\n",
    )
    .unwrap();
    let before = snapshot(&gt);

    let masks = dir.path().join("masks");
    let res = simtext(&[
        "gen-labels",
        "--in",
        gt.to_str().unwrap(),
        "--out",
        masks.to_str().unwrap(),
        "--delta",
        "0.6",
    ]);
    assert_eq!(code(&res), 0);
    let produced = snapshot(&masks);
    assert_eq!(produced.len(), 2);
    for (name, bytes) in &produced {
        assert!(name.ends_with(".pgm"), "unexpected output {name}");
        assert!(bytes.starts_with(b"P5"), "{name} must be a binary PGM");
    }
    assert_eq!(snapshot(&gt), before, "inputs must not be modified");
}

#[test]
fn full_loop_reaches_perfect_score_on_clean_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let dets = dir.path().join("dets");
    let res = simtext(&[
        "synth",
        "--out",
        scenes.to_str().unwrap(),
        "--count",
        "3",
        "--seed",
        "11",
        "--blur-len",
        "1",
    ]);
    assert_eq!(code(&res), 0);
    let res = simtext(&[
        "reconstruct",
        "--in",
        scenes.to_str().unwrap(),
        "--out",
        dets.to_str().unwrap(),
        "--method",
        "similar",
    ]);
    assert_eq!(code(&res), 0);
    let out = simtext(&[
        "eval",
        "--gt",
        scenes.to_str().unwrap(),
        "--det",
        dets.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for needle in ["precision=1.000000", "recall=1.000000", "fmeasure=1.000000", "fp=0"] {
        assert!(text.contains(needle), "expected {needle} in:\n{text}");
    }
}

#[test]
fn config_file_matches_equivalent_flags() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    assert_eq!(
        code(&simtext(&[
            "synth",
            "--out",
            scenes.to_str().unwrap(),
            "--count",
            "2",
            "--seed",
            "5",
            "--blur-len",
            "1",
        ])),
        0
    );
    let cfg = dir.path().join("knobs.toml");
    std::fs::write(&cfg, "delta = 0.9\n").unwrap();

    let by_flag = dir.path().join("by_flag");
    let by_cfg = dir.path().join("by_cfg");
    let by_default = dir.path().join("by_default");
    for (out, extra) in [
        (&by_flag, vec!["--delta", "0.9"]),
        (&by_cfg, vec![]),
        (&by_default, vec![]),
    ] {
        let mut args: Vec<&str> = Vec::new();
        if out == &by_cfg {
            args.extend(["--config", cfg.to_str().unwrap()]);
        }
        args.extend([
            "reconstruct",
            "--in",
            scenes.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        args.extend(extra);
        assert_eq!(code(&simtext(&args)), 0);
    }
    assert_eq!(
        snapshot(&by_flag),
        snapshot(&by_cfg),
        "a config value must act exactly like the flag"
    );
    assert_ne!(
        snapshot(&by_flag),
        snapshot(&by_default),
        "delta 0.9 must differ from the default"
    );
}

#[test]
fn bench_and_gradcheck_report_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    assert_eq!(
        code(&simtext(&[
            "synth",
            "--out",
            scenes.to_str().unwrap(),
            "--count",
            "2",
            "--seed",
            "3",
        ])),
        0
    );
    let out = simtext(&[
        "bench",
        "--maps",
        scenes.to_str().unwrap(),
        "--iters",
        "4",
        "--warmup",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for needle in ["median_us=", "fps=", "expand_median_us="] {
        assert!(text.contains(needle), "expected {needle} in:\n{text}");
    }

    let out = simtext(&["gradcheck", "--count", "5", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("max_rel_err="));
}
