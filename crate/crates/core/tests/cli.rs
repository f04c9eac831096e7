use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn config(name: &str) -> String {
    format!("{}/configs/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn red(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_red")).args(args).arg("--out").arg(out).output().expect("red runs")
}

fn error_record(output: &Output) -> Value {
    let text = String::from_utf8_lossy(&output.stderr);
    let line = text.lines().last().expect("error record on stderr");
    serde_json::from_str(line).expect("error record is JSON")
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(config(name)).unwrap()).unwrap()
}

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rooms");
    let o = red(&["run", "--config", &config("rooms_analogue"), "--override", "seeds.count=2"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let listed: BTreeMap<String, String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect();
    let on_disk: Vec<String> = files_under(&out).into_iter().filter(|f| f != "manifest.json").collect();
    assert_eq!(listed.keys().cloned().collect::<Vec<_>>(), on_disk);
    for (path, sha) in &listed {
        let bytes = std::fs::read(out.join(path)).unwrap();
        assert_eq!(&hex::encode(Sha256::digest(&bytes)), sha, "{path}");
    }
    assert!(listed.contains_key("strips/seed_0001/strip.pgm"));
    assert_eq!(manifest["statuses"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn trajectory_log_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let o = red(&["run", "--config", &config("diagonal")], tmp.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(tmp.path().join("trajectories.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    let first = &lines[0];
    assert_eq!((first["seed_index"].as_u64(), first["path_index"].as_u64()), (Some(0), Some(0)));
    assert_eq!(lines[1]["path_index"], 1);
    assert_eq!(first["selector"], "reds");
    assert_eq!(first["points"].as_array().unwrap().len(), 5);
    assert_eq!(first["sq_dy"]["first-axis"].as_array().unwrap().len(), 4);
    // The diagonal constraint pins the first coordinate exactly.
    for p in first["points"].as_array().unwrap() {
        assert_eq!(p[0], first["points"][0][0]);
    }
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "method,step,mean_sq_dy_first-axis,mean_sq_dx,count");
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn compare_curves_agree_with_dominance() {
    let tmp = tempfile::tempdir().unwrap();
    let o = red(&["compare", "--config", &config("faces_analogue"), "--override", "seeds.count=6"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(tmp.path().join("plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);

    let comparison = std::fs::read_to_string(tmp.path().join("comparison.csv")).unwrap();
    let at_end: BTreeMap<String, (f64, f64)> = comparison
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|c| c[1] == "5")
        .map(|c| (c[0].to_string(), (c[2].parse().unwrap(), c[3].parse().unwrap())))
        .collect();
    assert_eq!(at_end.len(), 5);
    let dominance = std::fs::read_to_string(tmp.path().join("dominance.csv")).unwrap();
    let rows: Vec<Vec<&str>> = dominance.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    for r in rows {
        let (a, b) = (&at_end[r[0]], &at_end[r[1]]);
        let ddy: f64 = r[3].parse().unwrap();
        let ddx: f64 = r[4].parse().unwrap();
        assert!((ddy - (a.0 - b.0)).abs() < 1e-12);
        assert!((ddx - (a.1 - b.1)).abs() < 1e-12);
        assert_eq!(r[5] == "true", ddy <= 0.0 && ddx >= 0.0);
    }
}

#[test]
fn single_method_compare_has_one_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let o = red(&["compare", "--config", &config("diagonal"), "--methods", "reds-lin"], tmp.path());
    assert!(o.status.success());
    let svg = std::fs::read_to_string(tmp.path().join("plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_eq!(std::fs::read_to_string(tmp.path().join("dominance.csv")).unwrap().lines().count(), 1);
}

#[test]
fn oracle_on_the_diagonal_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = red(&["oracle", "--config", &config("diagonal"), "--samples", "10000"], tmp.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("oracle.csv")).unwrap();
    let gaps: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert_eq!(gaps.len(), 5);
    assert!(gaps.iter().all(|&g| g <= 1e-10), "{gaps:?}");

    let o = red(&["oracle", "--config", &config("diagonal"), "--samples", "9999"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["exit_code"], 2);
}

fn pgm_size(bytes: &[u8]) -> (usize, usize) {
    let header = String::from_utf8_lossy(&bytes[..bytes.len().min(32)]).to_string();
    let mut parts = header.split_ascii_whitespace();
    assert_eq!(parts.next(), Some("P5"));
    let w = parts.next().unwrap().parse().unwrap();
    let h = parts.next().unwrap().parse().unwrap();
    assert_eq!(parts.next(), Some("255"));
    (w, h)
}

#[test]
fn strip_writes_frames_and_a_concatenated_strip() {
    let tmp = tempfile::tempdir().unwrap();
    let o = red(
        &["strip", "--config", &config("region_box"), "--trajectory", "1:0", "--override", "traversal.length=5"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let frames: Vec<String> = files_under(tmp.path()).into_iter().filter(|f| f.starts_with("frame_")).collect();
    assert_eq!(frames.len(), 6);
    let (fw, fh) = pgm_size(&std::fs::read(tmp.path().join("frame_000.pgm")).unwrap());
    let (sw, sh) = pgm_size(&std::fs::read(tmp.path().join("strip.pgm")).unwrap());
    assert_eq!((sw, sh), (6 * fw, fh));
}

#[test]
fn strip_rejects_non_image_generators() {
    let tmp = tempfile::tempdir().unwrap();
    let o = red(&["strip", "--config", &config("sphere"), "--trajectory", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "invalid-config");
}

#[test]
fn schema_violations_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = load("diagonal");
    v["traversal"]["stepsize"] = 1.0.into();
    let path = write_config(tmp.path(), &v);
    let o = red(&["run", "--config", path.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("stepsize"));

    let o = red(&["run", "--config", &config("diagonal"), "--override", "seeds.count=0"], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_nullspace_everywhere_exits_3_with_advisory() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = load("sphere");
    v["fixed_features"][0]["feature"] = serde_json::json!({"kind": "raw"});
    v["traversal"]["method"] = "linear".into();
    let path = write_config(tmp.path(), &v);
    let o = red(&["run", "--config", path.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    let record = error_record(&o);
    assert_eq!(record["exit_code"], 3);
    assert!(record["advisory"].as_str().unwrap().contains("beta_f"));
}

#[test]
fn unwritable_output_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = red(&["run", "--config", &config("diagonal")], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["error"], "io");
}

#[test]
fn overrides_change_the_run_and_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(red(&["run", "--config", &config("diagonal")], &a).status.success());
    assert!(red(&["run", "--config", &config("diagonal"), "--override", "seeds.count=2"], &b).status.success());
    let lines = std::fs::read_to_string(b.join("trajectories.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 4);
    let hash = |d: &Path| -> Value {
        serde_json::from_slice::<Value>(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap()["config_sha256"].clone()
    };
    assert_ne!(hash(&a), hash(&b));
}
