//! End-to-end checks of the command line binary: artifact round-trips,
//! exit codes, and determinism under a fixed seed.

use std::path::{Path, PathBuf};
use std::process::Command;

use polydiff::world::{write_scene, Obstacle, Scene};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_polydiff"))
        .args(args)
        .output()
        .expect("spawn polydiff");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Stdout may carry a human summary before the JSON blob.
fn json_tail(stdout: &str) -> serde_json::Value {
    let start = stdout.find('{').expect("no JSON in stdout");
    serde_json::from_str(&stdout[start..]).expect("stdout JSON parses")
}

/// Overrides that shrink the model and batches so every subprocess call
/// stays in the millisecond range.
const TINY: &[&str] = &[
    "--set",
    "diffusion.timesteps=8",
    "--set",
    "diffusion.mlp.hidden=16",
    "--set",
    "diffusion.mlp.blocks=1",
    "--set",
    "diffusion.mlp.embed_dim=8",
    "--set",
    "train.epochs=40",
    "--set",
    "train.batch=8",
    "--set",
    "bench.batch=6",
    "--set",
    "bench.pool_last=3",
    "--set",
    "bench.gs_batch=12",
];

fn tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = TINY.to_vec();
    v.extend_from_slice(args);
    v
}

fn gen_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let data = dir.join("train.pdif");
    let r = run(&tiny(&[
        "gen-data",
        "-n",
        &n.to_string(),
        "--difficulty",
        "sparse",
        "--seed",
        &seed.to_string(),
        "--out",
        data.to_str().unwrap(),
    ]));
    assert_eq!(r.code, 0, "gen-data failed: {}", r.stderr);
    data
}

fn train_checkpoint(dir: &Path, data: &Path) -> PathBuf {
    let ckpt = dir.join("model.pdmw");
    let r = run(&tiny(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--seed",
        "5",
    ]));
    assert_eq!(r.code, 0, "train failed: {}", r.stderr);
    ckpt
}

#[test]
fn gen_data_rejects_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.pdif");
    let r = run(&["gen-data", "-n", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 2, "stderr: {}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn gen_data_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pdif");
    let b = dir.path().join("b.pdif");
    for out in [&a, &b] {
        let r = run(&tiny(&[
            "gen-data",
            "-n",
            "3",
            "--difficulty",
            "sparse",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn train_writes_a_decreasing_loss_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 100, 3);
    let ckpt = dir.path().join("model.pdmw");
    let r = run(&tiny(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--seed",
        "5",
        "--set",
        "train.epochs=500",
        "--set",
        "train.batch=32",
        "--set",
        "train.lr=0.003",
    ]));
    assert_eq!(r.code, 0, "train failed: {}", r.stderr);
    let losses: Vec<f64> = std::fs::read_to_string(dir.path().join("model.loss.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 500);
    assert!(losses.iter().all(|l| *l > 0.0));
    let (first, last) = (losses[0], losses[losses.len() - 1]);
    assert!(last < first / 2.0, "loss barely moved: {first:.4} -> {last:.4}");
}

#[test]
fn train_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 4, 11);
    let a = train_checkpoint(dir.path(), &data);
    let bytes_a = std::fs::read(&a).unwrap();
    let b = train_checkpoint(dir.path(), &data);
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
}

#[test]
fn resume_without_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 3, 11);
    let r = run(&tiny(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("m.pdmw").to_str().unwrap(),
        "--resume",
        dir.path().join("missing.pdmw").to_str().unwrap(),
    ]));
    assert_eq!(r.code, 3, "stderr: {}", r.stderr);
}

#[test]
fn plan_on_empty_scene_succeeds_with_exact_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 4, 11);
    let ckpt = train_checkpoint(dir.path(), &data);
    let scene_path = dir.path().join("empty.json");
    write_scene(&scene_path, &Scene::empty(0.05)).unwrap();
    let r = run(&tiny(&[
        "plan",
        "--model",
        ckpt.to_str().unwrap(),
        "--scene",
        scene_path.to_str().unwrap(),
        "--start",
        "0.12,0.2",
        "--goal",
        "0.85,0.9",
        "--variant",
        "GPD-1G",
        "--seed",
        "2",
    ]));
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let v = json_tail(&r.stdout);
    assert_eq!(v["success"], true);
    let wp = v["waypoints"].as_array().unwrap();
    let first = wp.first().unwrap().as_array().unwrap();
    let last = wp.last().unwrap().as_array().unwrap();
    assert!((first[0].as_f64().unwrap() - 0.12).abs() < 1e-9);
    assert!((first[1].as_f64().unwrap() - 0.2).abs() < 1e-9);
    assert!((last[0].as_f64().unwrap() - 0.85).abs() < 1e-9);
    assert!((last[1].as_f64().unwrap() - 0.9).abs() < 1e-9);
}

#[test]
fn plan_is_deterministic_in_seed_and_writes_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 4, 11);
    let ckpt = train_checkpoint(dir.path(), &data);
    let scene_path = dir.path().join("empty.json");
    write_scene(&scene_path, &Scene::empty(0.05)).unwrap();
    let csv_path = dir.path().join("plot.csv");
    let args = tiny(&[
        "plan",
        "--model",
        ckpt.to_str().unwrap(),
        "--scene",
        scene_path.to_str().unwrap(),
        "--start",
        "0.1,0.1",
        "--goal",
        "0.9,0.9",
        "--seed",
        "3",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    let a = run(&args);
    assert_eq!(a.code, 0, "stderr: {}", a.stderr);
    let b = run(&args);
    assert_eq!(json_tail(&a.stdout)["waypoints"], json_tail(&b.stdout)["waypoints"]);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x,y,variant,tag");
    assert!(csv.lines().any(|l| l.ends_with(",GPD-1G,path")));
    assert!(csv.lines().any(|l| l.ends_with(",GPD-1G,control")));
}

#[test]
fn plan_refuses_a_checkpoint_with_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.pdmw");
    std::fs::write(&bogus, b"NOPE____definitely not a checkpoint").unwrap();
    let scene_path = dir.path().join("empty.json");
    write_scene(&scene_path, &Scene::empty(0.05)).unwrap();
    let r = run(&[
        "plan",
        "--model",
        bogus.to_str().unwrap(),
        "--scene",
        scene_path.to_str().unwrap(),
        "--start",
        "0.1,0.1",
        "--goal",
        "0.9,0.9",
    ]);
    assert_eq!(r.code, 3, "stderr: {}", r.stderr);
}

#[test]
fn plan_through_a_wall_with_stitching_reports_the_stitch() {
    let dir = tempfile::tempdir().unwrap();
    // This one needs a model whose samples actually stay near the data
    // manifold, otherwise a wild but accidentally free sample can win the
    // pool outright and no stitch happens.
    let data = gen_dataset(dir.path(), 60, 11);
    let ckpt = dir.path().join("model.pdmw");
    let r = run(&[
        "--set",
        "diffusion.timesteps=16",
        "--set",
        "diffusion.mlp.hidden=32",
        "--set",
        "diffusion.mlp.blocks=2",
        "--set",
        "diffusion.mlp.embed_dim=8",
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--seed",
        "5",
        "--set",
        "train.epochs=400",
        "--set",
        "train.batch=16",
        "--set",
        "train.lr=0.003",
    ]);
    assert_eq!(r.code, 0, "train failed: {}", r.stderr);
    // A wall with one slit near the top. The wall runs far past the
    // workspace on both ends so samples cannot sneak around it outside the
    // unit box; straight interpolations fail and a success has to come out
    // of the stitch walk.
    let mut scene = Scene::empty(0.05);
    scene.obstacles.push(Obstacle::Box { min: [0.45, -2.0], max: [0.55, 0.72] });
    scene.obstacles.push(Obstacle::Box { min: [0.45, 0.98], max: [0.55, 3.0] });
    let scene_path = dir.path().join("wall.json");
    write_scene(&scene_path, &scene).unwrap();
    let r = run(&[
        "--set",
        "bench.batch=8",
        "--set",
        "bench.pool_last=3",
        "plan",
        "--model",
        ckpt.to_str().unwrap(),
        "--scene",
        scene_path.to_str().unwrap(),
        "--start",
        "0.15,0.25",
        "--goal",
        "0.85,0.25",
        "--variant",
        "GPDS",
        "--seed",
        "4",
    ]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let v = json_tail(&r.stdout);
    assert_eq!(v["success"], true);
    assert!(
        !v["segments"].as_array().unwrap().is_empty(),
        "expected segment provenance, got {v}"
    );
    assert!(v["stitches"].as_u64().unwrap() >= 1, "no stitches: {v}");
}

#[test]
fn bench_rejects_unknown_variants_and_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 4, 11);
    let ckpt = train_checkpoint(dir.path(), &data);
    let r = run(&tiny(&[
        "bench",
        "--model",
        ckpt.to_str().unwrap(),
        "-n",
        "1",
        "--variants",
        "PD,WARP9",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]));
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("GPDS"), "stderr should list names: {}", r.stderr);
}

#[test]
fn bench_prints_a_summary_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 4, 11);
    let ckpt = train_checkpoint(dir.path(), &data);
    let report = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let r = run(&tiny(&[
        "bench",
        "--model",
        ckpt.to_str().unwrap(),
        "--suite",
        "sparse",
        "-n",
        "2",
        "--variants",
        "PD,GPD-1G",
        "--seed",
        "9",
        "--out",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]));
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let table: Vec<&str> = r.stdout.lines().take_while(|l| !l.starts_with('{')).collect();
    assert!(table[0].starts_with("variant"));
    assert!(table.iter().any(|l| l.starts_with("PD ")));
    assert!(table.iter().any(|l| l.starts_with("GPD-1G")));
    // Report and CSV land on disk with the echoed run configuration.
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["config"]["bench"]["batch"], 6);
    assert_eq!(parsed["problems"], 2);
    let head = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert!(head.starts_with("problem,"));
}

#[test]
fn inspect_names_every_artifact_kind() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 3, 11);
    let ckpt = train_checkpoint(dir.path(), &data);
    let scene_path = dir.path().join("empty.json");
    write_scene(&scene_path, &Scene::empty(0.05)).unwrap();
    for (path, kind) in [(&data, "dataset"), (&ckpt, "checkpoint"), (&scene_path, "scene")] {
        let r = run(&["inspect", path.to_str().unwrap()]);
        assert_eq!(r.code, 0, "stderr: {}", r.stderr);
        assert_eq!(json_tail(&r.stdout)["kind"], *kind, "for {}", path.display());
    }
    let r = run(&["inspect", "Cargo.toml"]);
    assert_eq!(r.code, 3);
}

#[test]
fn unknown_config_keys_are_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.pdif");
    let r = run(&[
        "gen-data",
        "-n",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "trian.epochs=3",
    ]);
    assert_eq!(r.code, 2, "stderr: {}", r.stderr);
    assert!(!out.exists());
}
