use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use infodemic::pipeline::verify_manifest;

const STAGES: [&str; 5] = ["hydrate", "prepare", "balance", "train", "evaluate"];

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn write_config(dir: &Path) -> PathBuf {
    let synth = data_dir().join("synthetic");
    let text = format!(
        "seed = 2020\n\
         [paths]\n\
         index = {:?}\n\
         fixture = {:?}\n\
         reference = {:?}\n\
         out = \"out\"\n\
         [evaluate]\n\
         repeats = 2\n",
        synth.join("index.csv"),
        synth.join("fixture.jsonl"),
        data_dir().join("reference_means.csv"),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infodemic"))
        .current_dir(dir)
        .env_remove("SOURCE_DATE_EPOCH")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn full_chain(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let cfg = write_config(dir);
    let cfg = cfg.to_str().unwrap();
    for stage in STAGES {
        ok(dir, &["--config", cfg, stage]);
    }
    snapshot(&dir.join("out"))
}

#[test]
fn stage_chain_is_reproducible_and_verifiable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = full_chain(a.path());
    let second = full_chain(b.path());
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &first {
        assert!(second[name] == *bytes, "{} differs between runs", name.display());
    }

    let out = a.path().join("out");
    for stage in STAGES {
        let m = verify_manifest(&out.join(format!("{stage}.manifest.json"))).unwrap();
        assert_eq!(m.command, stage);
    }
    for kind in ["linear_svm", "random_forest", "logreg", "mnb"] {
        assert!(out.join("models").join(format!("{kind}.model")).is_file(), "{kind}");
    }

    let hydrate: serde_json::Value = serde_json::from_slice(&first[Path::new("hydrate.json")]).unwrap();
    let text = hydrate.to_string();
    assert!(text.contains("200") && text.contains("1800"), "{text}");

    let report: serde_json::Value = serde_json::from_slice(&first[Path::new("report.json")]).unwrap();
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 4);
    for m in models {
        assert_eq!(m["folds"].as_array().unwrap().len(), 10);
    }
}

#[test]
fn predict_inspect_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    full_chain(d);
    let model = d.join("out/models/linear_svm.model");
    let model = model.to_str().unwrap();

    let stdout = ok(d, &["predict", "--model", model, "--text", "antibiotics kill coronavirus"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    let (label, score) = lines[0].split_once(' ').unwrap();
    assert!(label == "0" || label == "1", "{stdout}");
    let score: f64 = score.parse().unwrap();
    assert_eq!(label == "1", score >= 0.0);

    let out = Command::new(env!("CARGO_BIN_EXE_infodemic"))
        .args(["predict", "--model", model])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child.stdin.take().unwrap().write_all(b"first line\nsecond line\n")?;
            child.wait_with_output()
        })
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);

    let header: serde_json::Value = serde_json::from_str(&ok(d, &["model", "inspect", model])).unwrap();
    assert!(header.to_string().contains("linear_svm"), "{header}");

    let cfg = d.join("config.toml");
    let cfg = cfg.to_str().unwrap();
    let md = ok(d, &["--config", cfg, "report", "--format", "markdown"]);
    assert!(md.contains("| Model |"), "{md}");
    let csv = ok(d, &["--config", cfg, "report", "--format", "csv"]);
    // Header plus one row per model and fold.
    assert_eq!(csv.lines().count(), 1 + 4 * 10, "{csv}");
    let json = ok(d, &["--config", cfg, "report", "--format", "json"]);
    assert_eq!(json.as_bytes(), std::fs::read(d.join("out/report.json")).unwrap());
    assert_eq!(run(d, &["--config", cfg, "report", "--format", "yaml"]).status.code(), Some(1));
}

#[test]
fn missing_artifact_names_its_producer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for (stage, producer) in [("prepare", "hydrate"), ("balance", "prepare"), ("train", "prepare")] {
        let out = run(dir.path(), &["--config", cfg, stage]);
        assert_eq!(out.status.code(), Some(1), "{stage}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("infodemic {producer}")), "{stage}: {err}");
    }
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "seed = \"many\"\n").unwrap();
    std::fs::write(d.join("unknown.toml"), "[nonsense]\nx = 1\n").unwrap();
    for args in [
        vec!["--config", "bad.toml", "hydrate"],
        vec!["--config", "unknown.toml", "hydrate"],
        vec!["--config", "absent.toml", "hydrate"],
        vec!["frobnicate"],
        vec!["--jobs", "0", "hydrate"],
        vec!["predict", "--model", "absent.model", "--text", "x"],
    ] {
        assert_eq!(run(d, &args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn corrupt_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("index.csv"), "").unwrap();
    std::fs::write(d.join("fixture.jsonl"), "").unwrap();
    std::fs::write(
        d.join("config.toml"),
        "[paths]\nindex = \"index.csv\"\nfixture = \"fixture.jsonl\"\n",
    )
    .unwrap();
    let out = run(d, &["--config", "config.toml", "hydrate"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
