use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_orbitbench"));
    c.env_remove("ORBITBENCH_WORKERS").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn small_config(altitudes: &[f64], radii: &[f64], az_end: f64, az_step: f64, suns: &[&str]) -> Value {
    json!({
        "trial": "cli",
        "sweep": {
            "altitudes_m": altitudes,
            "radii_m": radii,
            "azimuth_start_deg": 0.0,
            "azimuth_end_deg": az_end,
            "azimuth_step_deg": az_step,
            "sun_conditions": suns,
        },
        "scene": { "seed": 3, "terrain_extent_m": 160.0, "terrain_cell_m": 4.0 },
        "intrinsics": { "width_px": 160, "height_px": 160 },
        "workers": 2,
    })
}

fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path -> bytes for every file under `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn generate(dir: &Path, config: &Value, workers: &str) -> PathBuf {
    let cfg = dir.join("config.json");
    write_json(&cfg, config);
    let out = dir.join("trial");
    let o = run(&["generate", "--config", path_str(&cfg), "--out", path_str(&out), "--workers", workers]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_single_frame() {
    let dir = tempfile::tempdir().unwrap();
    let trial = generate(dir.path(), &small_config(&[10.0], &[10.0], 0.0, 2.0, &["noon"]), "1");
    let files = tree(&trial.join("frames"));
    let pngs: Vec<_> = files.keys().filter(|p| !p.to_str().unwrap().ends_with("_id.png")).collect();
    assert_eq!(files.len(), 2);
    assert_eq!(pngs.len(), 1);
    let ann: Value = serde_json::from_slice(&std::fs::read(trial.join("annotations.json")).unwrap()).unwrap();
    assert_eq!(ann["frames"].as_array().unwrap().len(), 1);
    assert_eq!(ann["rendered_frames"].as_array().unwrap().len(), 1);
    assert!(trial.join("scene.json").is_file());
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");

    let mut v = small_config(&[10.0], &[10.0], 0.0, 2.0, &["noon"]);
    v["sweep"]["radii_m"] = json!([-5.0]);
    write_json(&cfg, &v);
    let o = run(&["generate", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.radii_m"));

    let mut v = small_config(&[10.0], &[10.0], 0.0, 2.0, &["noon"]);
    v["scene"]["sead"] = json!(1);
    write_json(&cfg, &v);
    let o = run(&["generate", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));

    let o = run(&["generate", "--config", path_str(&dir.path().join("absent.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write_json(&cfg, &small_config(&[10.0], &[10.0], 0.0, 2.0, &["noon"]));
    let blocker = dir.path().join("plain-file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = run(&["generate", "--config", path_str(&cfg), "--out", path_str(&blocker.join("trial"))]);
    assert_eq!(code(&o), 3);

    let trial = generate(dir.path(), &small_config(&[10.0], &[10.0], 0.0, 2.0, &["noon"]), "1");
    let preds = dir.path().join("p.json");
    let results = dir.path().join("r.json");
    let ann = trial.join("annotations.json");
    assert_eq!(code(&run(&["oracle", "--annotations", path_str(&ann), "--min-pixels", "1", "--out", path_str(&preds)])), 0);
    let args = ["evaluate", "--annotations", path_str(&ann), "--predictions", path_str(&preds), "--out", path_str(&results)];
    assert_eq!(code(&run(&args)), 0);
    let o = run(&["report", "--results", path_str(&results), "--out", path_str(&blocker.join("report"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_evaluate_report_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(&[5.0, 40.0], &[5.0, 30.0], 270.0, 90.0, &["noon", "late_afternoon"]);
    let trial = generate(dir.path(), &config, "2");
    let ann_path = trial.join("annotations.json");
    let ann = path_str(&ann_path);
    let ann_json: Value = serde_json::from_slice(&std::fs::read(&ann_path).unwrap()).unwrap();
    let records = ann_json["frames"].as_array().unwrap();
    assert_eq!(ann_json["rendered_frames"].as_array().unwrap().len(), 32);
    let max_pixels = records.iter().map(|r| r["pixel_count"].as_u64().unwrap()).max().unwrap();

    let preds = dir.path().join("oracle.json");
    assert_eq!(code(&run(&["oracle", "--annotations", ann, "--min-pixels", "1", "--out", path_str(&preds)])), 0);
    let p: Value = serde_json::from_slice(&std::fs::read(&preds).unwrap()).unwrap();
    assert_eq!(p["predictions"].as_array().unwrap().len(), records.len());
    let first = std::fs::read(&preds).unwrap();
    run(&["oracle", "--annotations", ann, "--min-pixels", "1", "--out", path_str(&preds)]);
    assert_eq!(first, std::fs::read(&preds).unwrap());

    let none = dir.path().join("none.json");
    let over = (max_pixels + 1).to_string();
    assert_eq!(code(&run(&["oracle", "--annotations", ann, "--min-pixels", &over, "--out", path_str(&none)])), 0);
    let p: Value = serde_json::from_slice(&std::fs::read(&none).unwrap()).unwrap();
    assert!(p["predictions"].as_array().unwrap().is_empty());

    let results = dir.path().join("results.json");
    let o = run(&["evaluate", "--annotations", ann, "--predictions", path_str(&preds), "--out", path_str(&results)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&std::fs::read(&results).unwrap()).unwrap();
    let defined: Vec<f64> = r["grids"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|g| g["cells"].as_array().unwrap().iter().flat_map(|row| row.as_array().unwrap().clone()))
        .filter_map(|c| c.as_f64())
        .collect();
    assert!(!defined.is_empty());
    assert!(defined.iter().all(|v| *v == 1.0));

    // library call on the same inputs gives the same bytes
    let lib_out = dir.path().join("lib_results.json");
    orbitbench::pipeline::evaluate_files(&ann_path, &preds, &orbitbench::eval::EvalConfig::default(), &lib_out).unwrap();
    assert_eq!(std::fs::read(&results).unwrap(), std::fs::read(&lib_out).unwrap());

    let empty_results = dir.path().join("empty_results.json");
    assert_eq!(code(&run(&["evaluate", "--annotations", ann, "--predictions", path_str(&none), "--out", path_str(&empty_results)])), 0);
    let r: Value = serde_json::from_slice(&std::fs::read(&empty_results).unwrap()).unwrap();
    let cells = &r["grids"][0]["cells"];
    assert!(cells.as_array().unwrap().iter().flat_map(|row| row.as_array().unwrap().clone()).filter_map(|c| c.as_f64()).all(|v| v == 0.0));

    let report = dir.path().join("report");
    assert_eq!(code(&run(&["report", "--results", path_str(&results), "--out", path_str(&report)])), 0);
    let manifest: Value = serde_json::from_slice(&std::fs::read(report.join("manifest.json")).unwrap()).unwrap();
    let listed = manifest["files"].as_array().unwrap();
    assert!(listed.len() >= 3);
    let on_disk = tree(&report);
    assert_eq!(on_disk.len(), listed.len() + 1);
    for f in listed {
        assert!(on_disk.contains_key(Path::new(f["path"].as_str().unwrap())));
    }
    let before = on_disk;
    assert_eq!(code(&run(&["report", "--results", path_str(&results), "--out", path_str(&report)])), 0);
    assert_eq!(before, tree(&report));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["report", "--results", path_str(&missing), "--out", path_str(&report)])), 2);
}

#[test]
fn prediction_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let trial = generate(dir.path(), &small_config(&[10.0], &[10.0], 0.0, 2.0, &["noon"]), "1");
    let ann_path = trial.join("annotations.json");
    let ann = path_str(&ann_path);
    let preds = dir.path().join("p.json");
    let results = dir.path().join("r.json");
    let evaluate = |preds: &Path| run(&["evaluate", "--annotations", ann, "--predictions", path_str(preds), "--out", path_str(&results)]);

    write_json(&preds, &json!({"predictions": [{"frame_id": "cli/9/nope", "bbox": [1, 1, 4, 4], "score": 0.9, "label": "person"}]}));
    let o = evaluate(&preds);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cli/9/nope"));

    write_json(&preds, &json!({"predictions": [{"frame_id": "cli/0/h010.00_r010.00_a000.00", "bbox": [1, 1, 4, 4], "score": 1.5, "label": "person"}]}));
    let o = evaluate(&preds);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("record 0"));

    std::fs::write(&preds, "{\"predictions\": [").unwrap();
    assert_eq!(code(&evaluate(&preds)), 2);

    // a false positive on a rendered frame without ground truth is accepted
    write_json(&preds, &json!({"predictions": [{"frame_id": "cli/0/h010.00_r010.00_a000.00", "bbox": [1, 1, 4, 4], "score": 0.5, "label": "person"}]}));
    assert_eq!(code(&evaluate(&preds)), 0);

    assert_eq!(code(&run(&["evaluate", "--annotations", ann])), 2);
}

#[test]
fn pipeline_is_deterministic_across_worker_counts() {
    let config = small_config(&[5.0, 25.0], &[5.0, 20.0], 300.0, 60.0, &["early_morning", "noon"]);
    let mut trees = Vec::new();
    for workers in ["1", "8"] {
        let dir = tempfile::tempdir().unwrap();
        let trial = generate(dir.path(), &config, workers);
        let ann = trial.join("annotations.json");
        let preds = dir.path().join("out/preds.json");
        let results = dir.path().join("out/results.json");
        assert_eq!(code(&run(&["oracle", "--annotations", path_str(&ann), "--min-pixels", "40", "--out", path_str(&preds)])), 0);
        assert_eq!(
            code(&run(&["evaluate", "--annotations", path_str(&ann), "--predictions", path_str(&preds), "--out", path_str(&results)])),
            0
        );
        assert_eq!(code(&run(&["report", "--results", path_str(&results), "--out", path_str(&dir.path().join("out/report"))])), 0);
        let mut all = tree(&trial);
        all.extend(tree(&dir.path().join("out")).into_iter().map(|(k, v)| (Path::new("out").join(k), v)));
        trees.push(all);
    }
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn workers_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write_json(&cfg, &small_config(&[10.0], &[10.0], 90.0, 90.0, &["noon"]));
    let out = dir.path().join("t");
    let o = bin()
        .args(["generate", "--config", path_str(&cfg), "--out", path_str(&out)])
        .env("ORBITBENCH_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = bin()
        .args(["generate", "--config", path_str(&cfg), "--out", path_str(&out)])
        .env("ORBITBENCH_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
