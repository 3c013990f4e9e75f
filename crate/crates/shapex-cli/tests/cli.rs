//! Command-line behavior: exit codes, usage, artifact layout, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_shapex")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("SHAPEX_SEED")
        .output()
        .expect("spawn shapex")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .env_remove("SHAPEX_SEED")
        .output()
        .expect("spawn shapex")
}

/// Small end-to-end workspace shared across tests: data, model, bank, maps.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path();
        let ok = |o: &Output, what: &str| {
            assert!(
                o.status.success(),
                "{what} failed: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        };
        let gen = run_in(
            root,
            &[
                "gen", "--variant", "mcc", "--mode", "h", "--t", "80", "--train", "60", "--test",
                "20", "--motif-len", "16", "--seed", "7", "--out", "data",
            ],
        );
        ok(&gen, "gen");
        let train_bb = run_in(
            root,
            &[
                "train-blackbox",
                "--train",
                "data/train.tsv",
                "--test",
                "data/test.tsv",
                "--out",
                "model.json",
                "--epochs",
                "12",
                "--seed",
                "7",
            ],
        );
        ok(&train_bb, "train-blackbox");
        let train_sh = run_in(
            root,
            &[
                "train-shapelets",
                "--train",
                "data/train.tsv",
                "--out",
                "bank.json",
                "--n",
                "3",
                "--l",
                "8",
                "--epochs",
                "6",
                "--seed",
                "7",
            ],
        );
        ok(&train_sh, "train-shapelets");
        let explain = run_in(
            root,
            &[
                "explain",
                "--data",
                "data/test.tsv",
                "--bank",
                "bank.json",
                "--model",
                "builtin:model.json",
                "--out",
                "maps",
                "--seed",
                "7",
            ],
        );
        ok(&explain, "explain");
        Workspace { dir }
    })
}

#[test]
fn help_exits_zero_for_every_command() {
    for args in [
        vec!["--help"],
        vec!["gen", "--help"],
        vec!["train-blackbox", "--help"],
        vec!["train-shapelets", "--help"],
        vec!["explain", "--help"],
        vec!["eval-saliency", "--help"],
        vec!["eval-occlusion", "--help"],
        vec!["plot", "--help"],
        vec!["plot", "saliency", "--help"],
        vec!["plot", "occlusion", "--help"],
    ] {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("Usage"), "{args:?}: {text}");
    }
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&[
        "gen", "--variant", "mcc", "--mode", "h", "--t", "40", "--train", "4", "--test", "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("--out"), "{text}");
    assert!(text.to_lowercase().contains("usage"), "{text}");
}

#[test]
fn unfittable_motifs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "gen", "--variant", "mcc", "--mode", "h", "--t", "10", "--train", "4", "--test", "2",
            "--motif-len", "40", "--out", "x",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("cannot fit"), "{text}");
}

#[test]
fn gen_writes_balanced_labelled_tsvs() {
    let ws = workspace();
    let train = std::fs::read_to_string(ws.path("data/train.tsv")).unwrap();
    let mut counts = [0usize; 2];
    for line in train.lines() {
        let label: usize = line.split('\t').next().unwrap().parse().unwrap();
        counts[label] += 1;
    }
    assert_eq!(counts[0] + counts[1], 60);
    assert!(counts[0].abs_diff(counts[1]) <= 1);
}

#[test]
fn explain_emits_map_and_shapley_files() {
    let ws = workspace();
    for idx in [0usize, 19] {
        assert!(ws.path(&format!("maps/saliency_{idx:04}.csv")).exists());
    }
    let any_shapley = std::fs::read_dir(ws.path("maps"))
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().starts_with("shapley_"));
    assert!(any_shapley);
}

#[test]
fn eval_saliency_prints_csv_row() {
    let ws = workspace();
    let out = run_in(
        ws.dir.path(),
        &[
            "eval-saliency",
            "--data",
            "data/test.tsv",
            "--maps",
            "maps",
            "--out",
            "metrics.csv",
        ],
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("auprc,aup,aur"), "{text}");
    let metrics = std::fs::read_to_string(ws.path("metrics.csv")).unwrap();
    assert!(metrics.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn eval_occlusion_writes_curve_and_plot_renders() {
    let ws = workspace();
    let out = run_in(
        ws.dir.path(),
        &[
            "eval-occlusion",
            "--data",
            "data/test.tsv",
            "--maps",
            "maps",
            "--model",
            "builtin:model.json",
            "--ratios",
            "0.0,0.25,0.5",
            "--out",
            "curve.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curve = std::fs::read_to_string(ws.path("curve.csv")).unwrap();
    assert!(curve.starts_with("ratio,auroc"));
    assert_eq!(curve.lines().count(), 4);

    let plot = run_in(
        ws.dir.path(),
        &[
            "plot",
            "occlusion",
            "--curves",
            "curve.csv",
            "--out",
            "occ.svg",
        ],
    );
    assert!(plot.status.success());
    let svg = std::fs::read_to_string(ws.path("occ.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let overlay = run_in(
        ws.dir.path(),
        &[
            "plot",
            "saliency",
            "--data",
            "data/test.tsv",
            "--maps",
            "maps",
            "--index",
            "0",
            "--out",
            "overlay.svg",
        ],
    );
    assert!(overlay.status.success());
    assert!(ws.path("overlay.svg").exists());
}

#[test]
fn shape_mismatch_exits_one() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    // A dataset with a different series length than the bank was trained on.
    let gen = run_in(
        dir.path(),
        &[
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "4", "--test", "2",
            "--motif-len", "12", "--out", "other",
        ],
    );
    assert!(gen.status.success());
    let out = Command::new(bin())
        .current_dir(dir.path())
        .args([
            "explain",
            "--data",
            "other/test.tsv",
            "--bank",
            ws.path("bank.json").to_str().unwrap(),
            "--model",
            &format!("builtin:{}", ws.path("model.json").display()),
            "--out",
            "maps2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("shape error"), "{text}");
}

#[test]
fn version_mismatch_names_the_file() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let bank = std::fs::read_to_string(ws.path("bank.json")).unwrap();
    let stale = bank.replacen("\"version\":1", "\"version\":99", 1);
    let stale_path = dir.path().join("stale-bank.json");
    std::fs::write(&stale_path, stale).unwrap();
    let out = Command::new(bin())
        .args([
            "explain",
            "--data",
            ws.path("data/test.tsv").to_str().unwrap(),
            "--bank",
            stale_path.to_str().unwrap(),
            "--model",
            &format!("builtin:{}", ws.path("model.json").display()),
            "--out",
            dir.path().join("m").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("stale-bank.json"), "{text}");
    assert!(text.contains("version"), "{text}");
}

#[test]
fn env_seed_is_default_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let with_env = Command::new(bin())
        .current_dir(dir.path())
        .env("SHAPEX_SEED", "5")
        .args([
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6, ", "--test",
            "2", "--motif-len", "12", "--out", "a",
        ])
        .output()
        .unwrap();
    // Malformed --train value: usage error.
    assert_eq!(with_env.status.code(), Some(2));

    let with_env = Command::new(bin())
        .current_dir(dir.path())
        .env("SHAPEX_SEED", "5")
        .args([
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6", "--test", "2",
            "--motif-len", "12", "--out", "a",
        ])
        .output()
        .unwrap();
    assert!(with_env.status.success());
    let explicit = run_in(
        dir.path(),
        &[
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6", "--test", "2",
            "--motif-len", "12", "--seed", "5", "--out", "b",
        ],
    );
    assert!(explicit.status.success());
    let a = std::fs::read(dir.path().join("a/train.tsv")).unwrap();
    let b = std::fs::read(dir.path().join("b/train.tsv")).unwrap();
    assert_eq!(a, b);

    // An explicit flag beats the environment.
    let flag_wins = Command::new(bin())
        .current_dir(dir.path())
        .env("SHAPEX_SEED", "5")
        .args([
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6", "--test", "2",
            "--motif-len", "12", "--seed", "9", "--out", "c",
        ])
        .output()
        .unwrap();
    assert!(flag_wins.status.success());
    let c = std::fs::read(dir.path().join("c/train.tsv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn config_file_layer_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"seed": 11}"#).unwrap();
    let from_file = run_in(
        dir.path(),
        &[
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6", "--test", "2",
            "--motif-len", "12", "--config", "cfg.json", "--out", "a",
        ],
    );
    assert!(from_file.status.success());
    let reference = run_in(
        dir.path(),
        &[
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6", "--test", "2",
            "--motif-len", "12", "--seed", "11", "--out", "b",
        ],
    );
    assert!(reference.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a/train.tsv")).unwrap(),
        std::fs::read(dir.path().join("b/train.tsv")).unwrap()
    );
    // Flag beats file.
    let flag = run_in(
        dir.path(),
        &[
            "gen", "--variant", "mcc", "--mode", "h", "--t", "60", "--train", "6", "--test", "2",
            "--motif-len", "12", "--config", "cfg.json", "--seed", "12", "--out", "c",
        ],
    );
    assert!(flag.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/train.tsv")).unwrap(),
        std::fs::read(dir.path().join("c/train.tsv")).unwrap()
    );
}

#[test]
fn commands_echo_resolved_config_json() {
    let ws = workspace();
    let out = run_in(
        ws.dir.path(),
        &["eval-saliency", "--data", "data/test.tsv", "--maps", "maps"],
    );
    assert!(out.status.success());
    let first_line = String::from_utf8_lossy(&out.stdout)
        .lines()
        .next()
        .unwrap()
        .to_string();
    let parsed: serde_json::Value = serde_json::from_str(&first_line).unwrap();
    assert_eq!(parsed["command"], "eval-saliency");
    assert!(parsed["config"]["seed"].is_u64());
}

#[test]
fn equal_length_mode_needs_no_bank() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .current_dir(dir.path())
        .args([
            "explain",
            "--data",
            ws.path("data/test.tsv").to_str().unwrap(),
            "--model",
            &format!("builtin:{}", ws.path("model.json").display()),
            "--equal-len",
            "20",
            "--indices",
            "0,1",
            "--out",
            "maps-eq",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("maps-eq/saliency_0000.csv").exists());
    assert!(dir.path().join("maps-eq/saliency_0001.csv").exists());
}

#[test]
fn external_model_spec_works_through_cli() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    // A minimal external model in POSIX shell: echo the request id back with
    // fixed probabilities.
    let script = dir.path().join("mock.sh");
    std::fs::write(
        &script,
        concat!(
            "#!/bin/sh\n",
            "while IFS= read -r line; do\n",
            "  id=$(printf '%s' \"$line\" | sed 's/.*\"id\":\\([0-9]*\\).*/\\1/')\n",
            "  printf '{\"id\":%s,\"probs\":[0.5,0.5]}\\n' \"$id\"\n",
            "done\n"
        ),
    )
    .unwrap();
    let out = Command::new(bin())
        .current_dir(dir.path())
        .args([
            "explain",
            "--data",
            ws.path("data/test.tsv").to_str().unwrap(),
            "--bank",
            ws.path("bank.json").to_str().unwrap(),
            "--model",
            &format!("external:sh {}", script.display()),
            "--indices",
            "0",
            "--out",
            "maps-ext",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("maps-ext/saliency_0000.csv").exists());
}
