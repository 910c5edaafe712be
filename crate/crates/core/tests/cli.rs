use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "data": {"count": 32, "test_count": 16},
  "trainer": {"epochs": 1, "batch_size": 16, "warmup_epochs": 0},
  "eval": {"probe_epochs": 5, "knn_k": [3]}
}"#;

fn adios(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adios")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn trained_run(tmp: &Path) -> PathBuf {
    let cfg = write_config(tmp, SMALL);
    let run = tmp.join("run");
    let o = adios(&["train", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    run
}

#[test]
fn gen_data_writes_layout_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    assert_eq!(code(&adios(&["gen-data", "--out", p(&out), "--count", "12", "--seed", "1"])), 0);
    assert_eq!(fs::read_dir(out.join("images")).unwrap().count(), 12);
    for f in ["labels.csv", "multilabels.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(out.join("masks").is_dir());
    let first = read_tree(&out);

    let again = adios(&["gen-data", "--out", p(&out), "--count", "12", "--seed", "1"]);
    assert_eq!(code(&again), 2, "non-empty target without --force");
    assert_eq!(code(&adios(&["gen-data", "--out", p(&out), "--count", "12", "--seed", "1", "--force"])), 0);
    assert_eq!(read_tree(&out), first);

    assert_eq!(code(&adios(&["gen-data", "--count", "4"])), 2);
}

#[test]
fn train_config_errors_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), r#"{"trainer": {"lambdaa": 0.5}}"#);
    let o = adios(&["train", "--config", p(&bad), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lambdaa"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), SMALL);
    let run = tmp.path().join("run");
    let o = adios(&["train", "--config", p(&cfg), "--out", p(&run), "--override", "trainer.lambda=0.29"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(run.join("checkpoint").join("manifest.json").is_file());
    assert!(run.join("metrics.csv").is_file());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["trainer"]["lambda"], 0.29);
    assert_eq!(manifest["threads"], 1);

    let o = adios(&["train", "--config", p(&cfg), "--out", p(&run), "--override", "trainer.nope=1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_protocols_and_missing_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained_run(tmp.path());

    let o = adios(&["eval", "--checkpoint", p(&run), "--protocol", "knn"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("protocol,metric,value\n"));
    assert!(text.lines().any(|l| l.starts_with("knn,knn_acc,")), "{text}");
    assert!(!text.contains("linear"));

    let csv = tmp.path().join("all.csv");
    let o = adios(&["eval", "--checkpoint", p(&run.join("checkpoint")), "--protocol", "all", "--out", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    for row in ["knn,knn_acc,", "linear,linear_acc,", "clustering,ari,", "clustering,nmi,", "clustering,fmi,"] {
        assert!(text.contains(row), "{row} missing from {text}");
    }

    let o = adios(&["eval", "--checkpoint", p(&tmp.path().join("absent"))]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&adios(&["eval", "--checkpoint", p(&run), "--protocol", "bogus"])), 2);
}

#[test]
fn gradcheck_exit_codes() {
    let o = adios(&["gradcheck"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7, "{text}");
    assert!(text.contains("max_rel_err"));

    let o = adios(&["gradcheck", "--tol", "1e-12"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL"));
}

#[test]
fn export_masks_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained_run(tmp.path());
    let data = tmp.path().join("d");
    assert_eq!(code(&adios(&["gen-data", "--out", p(&data), "--count", "3"])), 0);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = adios(&["export-masks", "--checkpoint", p(&run), "--images", p(&data), "--out", p(&a), "--crf"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("crf"), "{}", stderr(&o));
    assert_eq!(code(&adios(&["export-masks", "--checkpoint", p(&run), "--images", p(&data), "--out", p(&b)])), 0);
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert_eq!(ta.len(), 3);
    assert_eq!(ta, tb);
    let img = image::open(a.join(&ta[0].0)).unwrap();
    assert_eq!((img.width(), img.height()), (32, 32));
}

#[test]
fn compare_masks_restricted_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("cmp");
    let o = adios(&["compare-masks", "--config", p(&cfg), "--out", p(&out), "--schemes", "gt_object,none", "--seeds", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let agg = fs::read_to_string(out.join("report_aggregate.csv")).unwrap();
    assert!(agg.starts_with("scheme,objective,metric,mean,std\n"), "{agg}");
    assert!(agg.contains("gt_object,simclr,linear_acc,"));
    let long = fs::read_to_string(out.join("report_long.csv")).unwrap();
    assert!(long.starts_with("scheme,objective,seed,metric,value\n"));
    assert!(!long.contains("mae"));
    assert_eq!(code(&adios(&["compare-masks", "--out", p(&out), "--schemes", "bogus"])), 2);
}
