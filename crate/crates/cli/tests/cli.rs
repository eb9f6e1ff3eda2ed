use std::path::Path;
use std::process::{Command, Output};

fn avforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avforge"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&avforge(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&avforge(dir.path(), &["prepare", "--bogus"])), 1);
    assert_eq!(code(&avforge(dir.path(), &["prepare"])), 1);
    assert_eq!(code(&avforge(dir.path(), &["--help"])), 0);
}

#[test]
fn prepare_synthetic_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = avforge(d.path(), &["prepare", "--synthetic", "5x100", "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let x = std::fs::read(a.path().join("dataset.jsonl")).unwrap();
    let y = std::fs::read(b.path().join("dataset.jsonl")).unwrap();
    assert_eq!(x.iter().filter(|&&c| c == b'\n').count(), 500);
    assert_eq!(x, y);
}

#[test]
fn missing_dataset_exits_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let o = avforge(dir.path(), &["run", "--dataset", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.jsonl"));
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "classifier = svm\nencoding = emb\n").unwrap();
    let o = avforge(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

const TINY: &str = "\
augment.count = 4
cnn.projection = 8
cnn.kernels = 3
cnn.widths = 8,4
cnn.trunk = 4
cnn.bf_hidden = 4,4
cnn.min_epochs = 1
cnn.max_epochs = 2
cnn.patience = 1
cnn.finetune_epochs = 1
gen.projection = 8
gen.hidden = 8
gen.epochs = 1
";

#[test]
fn pipeline_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("exp.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let ok = |args: &[&str]| {
        let o = avforge(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(&["prepare", "--synthetic", "2x16", "--seed", "3"]);
    ok(&["train-generator", "--config", cfg, "--author", "author00"]);
    let gen = d.join("generator-author00.json");
    ok(&["augment", "--config", cfg, "--author", "author00", "--generator", gen.to_str().unwrap()]);
    let fakes = d.join("forgeries-author00.jsonl");
    assert_eq!(std::fs::read_to_string(&fakes).unwrap().lines().count(), 4);
    ok(&["train-classifier", "--config", cfg, "--author", "author00", "--forgeries", fakes.to_str().unwrap()]);
    let model = d.join("classifier-author00.json");
    ok(&[
        "export-hidden", "--config", cfg, "--author", "author00", "--model", model.to_str().unwrap(),
        "--forgeries", fakes.to_str().unwrap(),
    ]);
    let hidden = d.join("hidden-author00.tsv");
    ok(&["tsne", "--input", hidden.to_str().unwrap(), "--perplexity", "3", "--iterations", "50"]);
    assert!(d.join("hidden-author00-tsne.tsv").exists());

    let report = ok(&["run", "--config", cfg, "--seed", "7"]);
    assert!(report.starts_with("author\tbaseline_f1\taug_f1\tdF1_pct\tbaseline_k\taug_k\tdK_pct\tmcnemar_p\tsignificant\n"));
    assert_eq!(std::fs::read_to_string(d.join("report.tsv")).unwrap(), report);
    let manifest = std::fs::read_to_string(d.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed\t7\n"));
    assert_eq!(ok(&["run", "--config", cfg, "--seed", "7"]), report);
}
