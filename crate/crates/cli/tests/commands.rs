use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn amber(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amber"))
        .args(args)
        .env_remove("AMBER_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

const SHALLOW: &str = r#"{"expert": {"n_refinements": 3}}"#;
const SMALL_NET: &str = r#"{"network": {"latent": 8, "steps": 2}, "buffer": {"node_budget": 3000}}"#;

fn dataset(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> PathBuf {
    let cfg = write(&dir.join("gen.json"), SHALLOW);
    let out = dir.join(format!("data_{seed}"));
    let (tr, te, s) = (n_train.to_string(), n_test.to_string(), seed.to_string());
    ok(&amber(&[
        "generate", "--out", p(&out), "--config", p(&cfg), "--n-train", &tr, "--n-test", &te, "--seed", &s,
    ]));
    out.join("manifest.json")
}

fn trained(dir: &Path, manifest: &Path, steps: usize) -> PathBuf {
    let cfg = write(&dir.join("train.json"), SMALL_NET);
    let ck = dir.join(format!("model_{steps}.ambr"));
    ok(&amber(&[
        "train", "--manifest", p(manifest), "--out", p(&ck), "--config", p(&cfg), "--steps", &steps.to_string(),
    ]));
    ck
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(dir.path(), 2, 3, 4);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let entries = manifest["instances"].as_array().unwrap();
    assert_eq!(entries.len(), 5);
    assert_eq!(entries.iter().filter(|e| e["split"] == "train").count(), 2);
    assert_eq!(entries.iter().filter(|e| e["split"] == "test").count(), 3);
    for e in entries {
        for key in ["geometry", "load", "expert"] {
            assert!(a.parent().unwrap().join(e[key].as_str().unwrap()).exists());
        }
    }

    let other = dir.path().join("again");
    std::fs::create_dir(&other).unwrap();
    let b = dataset(&other, 2, 3, 4);
    for e in entries {
        let f = e["expert"].as_str().unwrap();
        assert_eq!(
            std::fs::read(a.parent().unwrap().join(f)).unwrap(),
            std::fs::read(b.parent().unwrap().join(f)).unwrap()
        );
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("gen.json"), SHALLOW);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let run = Command::new(env!("CARGO_BIN_EXE_amber"))
            .args(["generate", "--out", p(&out), "--config", p(&cfg), "--n-train", "1", "--n-test", "0"])
            .env("AMBER_SEED", seed)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        (run.status.code(), out)
    };
    let (code, out) = run("env", "9");
    assert_eq!(code, Some(0));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(run("bad", "nine").0, Some(1));
}

#[test]
fn usage_and_runtime_exit_codes() {
    assert_eq!(amber(&[]).status.code(), Some(1));
    assert_eq!(amber(&["train", "--agg", "median", "--manifest", "m", "--out", "c"]).status.code(), Some(1));
    assert_eq!(amber(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = amber(&["train", "--manifest", p(&missing), "--out", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_zero_steps_then_infer_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 2, 1);
    let ck = trained(dir.path(), &manifest, 0);
    assert!(ck.exists());
    assert_eq!(std::fs::read_to_string(ck.with_extension("jsonl")).unwrap().lines().count(), 0);

    let data = manifest.parent().unwrap();
    let infer = |out: &Path| {
        ok(&amber(&[
            "infer", "--checkpoint", p(&ck), "--geometry", p(&data.join("geometry_0002.json")),
            "--load", p(&data.join("load_0002.json")), "--steps", "5", "--out", p(out),
        ]))
    };
    let out_a = dir.path().join("seq_a");
    infer(&out_a);
    for t in 0..=5 {
        let mesh = out_a.join(format!("mesh_{t}.tmesh"));
        assert!(mesh.exists(), "missing step {t}");
        let text = std::fs::read_to_string(&mesh).unwrap();
        assert!(text.contains("field predicted_sizing"));
        let svg = std::fs::read_to_string(out_a.join(format!("mesh_{t}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let polygons = doc.descendants().filter(|n| n.has_tag_name("polygon")).count();
        let header: Vec<usize> =
            text.lines().nth(1).unwrap().split_whitespace().map(|n| n.parse().unwrap()).collect();
        let n_elements = header[1];
        assert_eq!(polygons, n_elements);
    }
    assert!(!out_a.join("mesh_6.tmesh").exists());
    let out_b = dir.path().join("seq_b");
    infer(&out_b);
    for t in 0..=5 {
        let name = format!("mesh_{t}.svg");
        assert_eq!(std::fs::read(out_a.join(&name)).unwrap(), std::fs::read(out_b.join(&name)).unwrap());
    }

    let report_path = dir.path().join("report.json");
    let stdout = ok(&amber(&[
        "evaluate", "--checkpoint", p(&ck), "--manifest", p(&manifest), "--steps", "2", "--out", p(&report_path),
    ]));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["geometries"].as_array().unwrap().len(), 2);
    let rows: Vec<Vec<f64>> = stdout
        .lines()
        .skip(1)
        .take_while(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (t, row) in rows.iter().enumerate() {
        let agg = &report["aggregate"];
        assert_eq!(row[0], t as f64);
        assert_eq!(row[1], agg["dcd"][t]["mean"].as_f64().unwrap());
        assert_eq!(row[2], agg["vol_diff"][t]["mean"].as_f64().unwrap());
        assert_eq!(row[3], agg["n_elements"][t]["mean"].as_f64().unwrap());
    }
    if let Some(mean) = report["aggregate"]["ndcd_final"]["mean"].as_f64() {
        assert!(stdout.contains(&format!("mean {mean} ")));
    }

    let out = amber(&["evaluate", "--checkpoint", p(&ck), "--manifest", p(&manifest), "--split", "eval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split is empty"));
}

#[test]
fn log_has_one_line_per_step_and_addition() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 0, 2);
    let ck = trained(dir.path(), &manifest, 17);
    let log = std::fs::read_to_string(ck.with_extension("jsonl")).unwrap();
    let adds = log.lines().filter(|l| l.contains(r#""event":"add""#)).count();
    assert_eq!(adds, 2);
    assert_eq!(log.lines().count(), 17 + adds);
}
