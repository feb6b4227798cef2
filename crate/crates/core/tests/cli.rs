use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geotrav::contrastive::{save_embeddings, EmbeddingMatrix};

fn geotrav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geotrav"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = geotrav(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("one JSON summary line")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Strips the provenance header and blank lines.
fn body(path: PathBuf) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(str::to_string)
        .collect()
}

const CSV_HEADER: &str = "log_id,frame_id,t,x,y,yaw,area_id\n";

fn write_poses(dir: &Path, rows: &[&str]) -> PathBuf {
    let path = dir.join("poses.csv");
    fs::write(&path, format!("{CSV_HEADER}{}\n", rows.join("\n"))).unwrap();
    path
}

#[test]
fn isolated_pair_is_single() {
    let dir = tempfile::tempdir().unwrap();
    write_poses(dir.path(), &["a,0,0,0,0,0,x", "a,1,1,5,0,0,x", "b,0,0,10,2,0.1,x"]);
    let s = ok(dir.path(), &["classify", "--poses", "poses.csv", "--out", "c.csv", "--hist", "h.csv"]);
    assert_eq!(s["single"], 2);
    assert_eq!(s["multi"], 0);
    assert_eq!(body(dir.path().join("h.csv")), ["intersecting_logs,num_logs", "1,2"]);
    assert_eq!(
        body(dir.path().join("c.csv")),
        ["log_id,class,intersecting_logs", "a,single,1", "b,single,1"]
    );
}

#[test]
fn triangle_is_multi() {
    let dir = tempfile::tempdir().unwrap();
    write_poses(dir.path(), &["a,0,0,0,0,0,x", "b,0,0,8,3,1,x", "c,0,0,-4,-6,-2,x"]);
    let s = ok(dir.path(), &["classify", "--poses", "poses.csv", "--out", "c.csv", "--hist", "h.csv"]);
    assert_eq!(s["multi"], 3);
    assert_eq!(body(dir.path().join("h.csv")), ["intersecting_logs,num_logs", "2,3"]);
}

#[test]
fn empty_dataset_classifies_to_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("poses.csv"), CSV_HEADER).unwrap();
    let s = ok(dir.path(), &["classify", "--poses", "poses.csv", "--out", "c.csv", "--hist", "h.csv"]);
    assert_eq!(s["logs"], 0);
    assert_eq!(body(dir.path().join("h.csv")), ["intersecting_logs,num_logs"]);
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = geotrav(dir.path(), &["classify", "--poses", "nope.csv", "--out", "c.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn split_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "poses.csv", "--seed", "11"]);
    ok(d, &["split", "--poses", "poses.csv", "--out", "m1.txt", "--seed", "5"]);
    ok(d, &["split", "--poses", "poses.csv", "--out", "m2.txt", "--seed", "5"]);
    assert_eq!(fs::read(d.join("m1.txt")).unwrap(), fs::read(d.join("m2.txt")).unwrap());
}

#[test]
fn inverted_iou_range_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    write_poses(dir.path(), &["a,0,0,0,0,0,x"]);
    let out = geotrav(
        dir.path(),
        &["graph", "--poses", "poses.csv", "--out", "g.txt", "--iou-min", "0.8", "--iou-max", "0.2"],
    );
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("g.txt").exists());
}

#[test]
fn binary_and_text_graphs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "poses.csv", "--seed", "3"]);
    let a = ok(d, &["graph", "--poses", "poses.csv", "--out", "g.txt"]);
    let b = ok(d, &["graph", "--poses", "poses.csv", "--out", "g.bin"]);
    assert_eq!(a, b);
    let text = geotrav::pose_graph::load_graph(&d.join("g.txt")).unwrap();
    let bin = geotrav::pose_graph::load_graph(&d.join("g.bin")).unwrap();
    assert_eq!(text, bin);
}

#[test]
fn symmetric_embeddings_give_log_k_plus_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (n, k) = (3, 5);
    let mut pairs = String::from("# batch 0\n");
    for i in 0..n {
        pairs.push_str(&format!("PAIR a:0 {i} 0 b:0 {i} 0 0\n"));
    }
    for j in 0..k {
        pairs.push_str(&format!("NEG b:0 {} 1\n", j + 10));
    }
    fs::write(d.join("pairs.txt"), pairs).unwrap();
    let row = vec![0.3, -1.2, 0.5, 2.0];
    let m = EmbeddingMatrix::from_rows(&vec![row; 2 * n + k]).unwrap();
    save_embeddings(&m, &d.join("emb.bin")).unwrap();
    let s = ok(d, &["loss-check", "--pairs", "pairs.txt", "--embeddings", "emb.bin"]);
    let want = ((k + 1) as f64).ln();
    for l in s["per_anchor"].as_array().unwrap() {
        assert!((l.as_f64().unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn embedding_row_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("pairs.txt"), "PAIR a:0 0 0 b:0 0 0 0\nNEG b:0 1 1\n").unwrap();
    save_embeddings(&EmbeddingMatrix::zeros(2, 4), &d.join("emb.bin")).unwrap();
    let out = geotrav(d, &["loss-check", "--pairs", "pairs.txt", "--embeddings", "emb.bin"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = geotrav(d, &["--dump-config", "--seed", "9"]);
    assert!(out.status.success());
    fs::write(d.join("run.toml"), &out.stdout).unwrap();
    let again = geotrav(d, &["--dump-config", "--config", "run.toml"]);
    assert_eq!(out.stdout, again.stdout);
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed = 9"));
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "seed = 1\nbogus = 2\n").unwrap();
    let out = geotrav(dir.path(), &["--dump-config", "--config", "run.toml"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn infeasible_plan_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = geotrav(
        dir.path(),
        &[
            "synth",
            "--out",
            "poses.csv",
            "--logs",
            "4",
            "--plan",
            "0-1:partial,1-2:partial,2-3:partial,0-3:partial",
        ],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn too_many_pairs_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "poses.csv", "--seed", "3"]);
    ok(d, &["graph", "--poses", "poses.csv", "--out", "g.txt"]);
    let out = geotrav(
        d,
        &["sample-pairs", "--poses", "poses.csv", "--graph", "g.txt", "--out", "p.txt", "--pairs", "1000000"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn outputs_carry_config_hash_header() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "poses.csv", "--seed", "3"]);
    let first = fs::read_to_string(d.join("poses.csv")).unwrap();
    let header = first.lines().next().unwrap();
    assert!(header.starts_with("# geotrav "));
    let hash = header.rsplit("config_sha256=").next().unwrap();
    assert_eq!(hash.len(), 64);
    ok(d, &["synth", "--out", "other.csv", "--seed", "4"]);
    let second = fs::read_to_string(d.join("other.csv")).unwrap();
    assert_ne!(second.lines().next().unwrap(), header);
}
