use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const MINIMAL: &str = r#"
n = 100
k = 2
seed = 3
strategy = { kind = "factorized", sweeps = 20 }

[params]
within_edges = -2.0
within_two_stars = -0.05
within_triangles = 0.2
between_edges = -5.0
within_same_city = 0.6
between_same_city = 0.3

[[covariates]]
name = "city"
categories = 3
block_affinity = 0.2
"#;

fn hergm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hergm"))
        .args(args)
        .env_remove("HERGM_OUT_DIR")
        .env_remove("HERGM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hergm(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(dir: &Path, name: &str) -> PathBuf {
    let cfg = dir.join("synth.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let out = dir.join(name);
    ok(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    out
}

#[test]
fn synth_writes_reloadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "data");
    for f in ["edges.tsv", "covariates.csv", "truth.json", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let truth = json(&out.join("truth.json"));
    assert_eq!(truth["z"].as_array().unwrap().len(), 100);
    assert_eq!(truth["params"]["within_edges"], -2.0);
    let covs = fs::read_to_string(out.join("covariates.csv")).unwrap();
    assert_eq!(covs.lines().count(), 101);
    let edges = fs::read_to_string(out.join("edges.tsv")).unwrap();
    let m = edges.lines().filter(|l| !l.starts_with('#')).count();
    let st = dir.path().join("st");
    ok(&[
        "stats",
        "--edges",
        s(&out.join("edges.tsv")),
        "--covariates",
        s(&out.join("covariates.csv")),
        "--out",
        s(&st),
    ]);
    let stats = json(&st.join("stats.json"));
    assert_eq!(stats["edges"].as_u64().unwrap() as usize, m);
    assert_eq!(stats["nodes"], 100);
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a");
    let b = synth(dir.path(), "b");
    for f in ["edges.tsv", "covariates.csv", "truth.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let out = dir.path().join("o");
    ok(&[
        "synth",
        "--config",
        s(&cfg),
        "--seed",
        "77",
        "--out",
        s(&out),
    ]);
    assert_eq!(json(&out.join("truth.json"))["seed"], 77);
    assert_eq!(json(&out.join("manifest.json"))["seed"], 77);
}

#[test]
fn invalid_eta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, MINIMAL.replace("k = 2", "k = 2\neta = [0.5, 0.4]")).unwrap();
    let out = hergm(&[
        "synth",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));
}

#[test]
fn every_config_error_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        MINIMAL.replace("k = 2", "k = 2\neta = [0.5, 0.4]\nsweep = 3"),
    )
    .unwrap();
    let out = hergm(&["synth", "--config", s(&cfg)]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2));
    assert!(err.contains("sweep") && err.contains("eta"), "{err}");
}

#[test]
fn estimate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "data");
    let est = dir.path().join("est");
    ok(&[
        "estimate",
        "--edges",
        s(&data.join("edges.tsv")),
        "--covariates",
        s(&data.join("covariates.csv")),
        "--k-max",
        "5",
        "--em-iters",
        "30",
        "--out",
        s(&est),
    ]);
    for f in [
        "blocks.csv",
        "init_blocks.csv",
        "lower_bound.csv",
        "block_sizes.csv",
        "block_size_histogram.csv",
        "coefficients.json",
        "coefficients.csv",
        "manifest.json",
    ] {
        assert!(est.join(f).is_file(), "{f} missing");
    }
    let blocks = fs::read_to_string(est.join("blocks.csv")).unwrap();
    assert!(blocks.starts_with("node_id,block\n"));
    assert_eq!(blocks.lines().count(), 101);
    let trace = fs::read_to_string(est.join("lower_bound.csv")).unwrap();
    assert!(trace.starts_with("iteration,lower_bound,delta\n"));
    let coefs = json(&est.join("coefficients.json"));
    assert!(
        coefs["estimates"]["within_two_stars"]["se"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    let manifest = json(&est.join("manifest.json"));
    assert_eq!(manifest["command"], "estimate");
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|o| o == "coefficients.csv"));
}

#[test]
fn estimate_with_true_blocks_skips_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "data");
    let est = dir.path().join("est");
    ok(&[
        "estimate",
        "--edges",
        s(&data.join("edges.tsv")),
        "--covariates",
        s(&data.join("covariates.csv")),
        "--blocks",
        s(&data.join("truth.json")),
        "--out",
        s(&est),
    ]);
    assert!(!est.join("lower_bound.csv").exists());
    let cmp = dir.path().join("cmp");
    ok(&[
        "compare",
        s(&data.join("truth.json")),
        s(&est.join("blocks.csv")),
        "--out",
        s(&cmp),
    ]);
    assert_eq!(json(&cmp.join("compare.json"))["yule"], 1.0);
}

#[test]
fn no_covariates_flag_reaches_block_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "data");
    let est = dir.path().join("est");
    ok(&[
        "estimate",
        "--edges",
        s(&data.join("edges.tsv")),
        "--covariates",
        s(&data.join("covariates.csv")),
        "--no-covariates",
        "--em-iters",
        "10",
        "--out",
        s(&est),
    ]);
    let manifest = json(&est.join("manifest.json"));
    assert_eq!(manifest["config"]["no_covariates"], true);
    // the structural fit still uses the covariate
    assert!(json(&est.join("coefficients.json"))["estimates"]["within_same_city"].is_object());
}

#[test]
fn missing_covariate_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "data");
    let out = hergm(&[
        "estimate",
        "--edges",
        s(&data.join("edges.tsv")),
        "--covariates",
        s(&data.join("covariates.csv")),
        "--use-covariates",
        "city,income",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("income") && !err.contains("`city`"), "{err}");
}

#[test]
fn malformed_edge_list_is_a_data_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.tsv");
    fs::write(&e, "a\tb\nb\tc\nc d\n").unwrap();
    let out = hergm(&[
        "estimate",
        "--edges",
        s(&e),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("e.tsv:3"));
}

#[test]
fn separation_is_a_numerical_failure() {
    // two disconnected cliques: no between-block link can be fitted
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.tsv");
    let b = dir.path().join("b.csv");
    let mut edges = String::new();
    let mut blocks = String::from("node_id,block\n");
    for c in 0..2 {
        for i in 0..5 {
            blocks.push_str(&format!("n{},{c}\n", 5 * c + i));
            for j in i + 1..5 {
                edges.push_str(&format!("n{}\tn{}\n", 5 * c + i, 5 * c + j));
            }
        }
    }
    fs::write(&e, edges).unwrap();
    fs::write(&b, blocks).unwrap();
    let out = hergm(&[
        "estimate",
        "--edges",
        s(&e),
        "--blocks",
        s(&b),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn stats_of_a_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.tsv");
    fs::write(&e, "x\ty\ny\tz\nz\tx\n").unwrap();
    let out = dir.path().join("st");
    ok(&["stats", "--edges", s(&e), "--out", s(&out)]);
    let st = json(&out.join("stats.json"));
    assert_eq!(
        (
            st["edges"].as_u64(),
            st["two_stars"].as_u64(),
            st["triangles"].as_u64()
        ),
        (Some(3), Some(3), Some(1))
    );
    let hist = fs::read_to_string(out.join("degree_histogram.csv")).unwrap();
    assert_eq!(hist, "degree,nodes\n2,3\n");
}

#[test]
fn stats_of_an_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.tsv");
    fs::write(&e, "# nothing\n").unwrap();
    let out = dir.path().join("st");
    ok(&["stats", "--edges", s(&e), "--out", s(&out)]);
    let st = json(&out.join("stats.json"));
    assert_eq!(st["edges"], 0);
    assert_eq!(st["density"], 0.0);
    assert_eq!(st["triangles"], 0);
}

#[test]
fn stats_show_assortative_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "data");
    let out = dir.path().join("st");
    ok(&[
        "stats",
        "--edges",
        s(&data.join("edges.tsv")),
        "--covariates",
        s(&data.join("covariates.csv")),
        "--blocks",
        s(&data.join("truth.json")),
        "--out",
        s(&out),
    ]);
    let b = &json(&out.join("stats.json"))["blocks"];
    assert!(b["within_density"].as_f64().unwrap() > b["between_density"].as_f64().unwrap());
    assert!(b["within_share"].as_f64().unwrap() > 0.5);
}

fn write_partition(path: &Path, labels: &[(&str, usize)]) {
    let mut s = String::from("node_id,block\n");
    for (id, b) in labels {
        s.push_str(&format!("{id},{b}\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn compare_is_label_free() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_partition(&a, &[("p", 0), ("q", 0), ("r", 1), ("s", 1), ("t", 2)]);
    // rows reordered and labels permuted
    write_partition(&b, &[("t", 0), ("s", 2), ("p", 1), ("r", 2), ("q", 1)]);
    let out = ok(&["compare", s(&a), s(&b), "--out", s(&dir.path().join("c"))]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("yule 1.000000"));
    let self_cmp = dir.path().join("self");
    ok(&["compare", s(&a), s(&a), "--out", s(&self_cmp)]);
    let r = json(&self_cmp.join("compare.json"));
    assert_eq!(r["yule"], 1.0);
    assert_eq!(r["a"]["median"], 2.0);
}

#[test]
fn compare_rejects_different_node_sets() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_partition(&a, &[("p", 0), ("q", 1)]);
    write_partition(&b, &[("p", 0), ("z", 1)]);
    let out = hergm(&["compare", s(&a), s(&b), "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        "n = 30\nk = 2\nsteps = 5000\nburn_in = 1000\ntrace_every = 500\n[params]\nwithin_edges = -1.0\nwithin_two_stars = -0.1\nwithin_triangles = 0.2\nbetween_edges = -3.0\n",
    )
    .unwrap();
    let out = dir.path().join("sim");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 8);
    let again = dir.path().join("sim2");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "1",
        "--out",
        s(&again),
    ]);
    assert_eq!(
        fs::read(out.join("edges.tsv")).unwrap(),
        fs::read(again.join("edges.tsv")).unwrap()
    );
}

#[test]
fn environment_sets_output_dir_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let out = dir.path().join("from_env");
    let status = Command::new(env!("CARGO_BIN_EXE_hergm"))
        .args(["synth", "--config", s(&cfg)])
        .env("HERGM_OUT_DIR", &out)
        .env("HERGM_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("truth.json").is_file());
}

#[test]
fn config_file_drives_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "data");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "edges = \"data/edges.tsv\"\ncovariates = \"data/covariates.csv\"\nblocks = \"data/truth.json\"\nsampling = \"case-control:4\"\nout = \"est\"\n",
    )
    .unwrap();
    ok(&["estimate", "--config", s(&cfg)]);
    let est = dir.path().join("est");
    let c = json(&est.join("coefficients.json"));
    assert_eq!(c["between"]["sampling"]["ratio"], 4);
    let _ = data;
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let data = out.join("data");
        let fit = out.join("fit");
        ok(&[
            "--threads",
            threads,
            "--out",
            s(&data),
            "synth",
            "--config",
            s(&cfg),
        ]);
        ok(&[
            "--threads",
            threads,
            "--out",
            s(&fit),
            "estimate",
            "--edges",
            s(&data.join("edges.tsv")),
            "--covariates",
            s(&data.join("covariates.csv")),
            "--k-max",
            "4",
        ]);
        [
            "data/edges.tsv",
            "fit/blocks.csv",
            "fit/lower_bound.csv",
            "fit/coefficients.json",
        ]
        .map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}
