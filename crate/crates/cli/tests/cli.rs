use std::process::{Command, Output};

fn urnphylo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urnphylo"))
        .args(args)
        .env_remove("URNPHYLO_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn generate_smoke() {
    let o = urnphylo(&["generate", "--model", "yhk", "--n", "6", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# {"));
    assert!(lines[0].contains("\"config_hash\""));
    assert!(lines[1].starts_with('(') && lines[1].ends_with(';'));
    assert!(lines[2].starts_with("# A="));
}

#[test]
fn generate_two_leaves() {
    let o = urnphylo(&["generate", "--model", "pda", "--n", "2", "--seed-tree", "t2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["trees"][0]["newick"], "(1,2);");
    assert_eq!(v["trees"][0]["b"], 1);
    assert_eq!(v["trees"][0]["a"], 0);
}

#[test]
fn generate_is_reproducible() {
    let args = ["generate", "--model", "pda", "--n", "40", "--seed", "9", "--count", "3"];
    assert_eq!(stdout(&urnphylo(&args)), stdout(&urnphylo(&args)));
}

#[test]
fn unrooted_small_needs_no_stats() {
    let o = urnphylo(&["generate", "--model", "yhk", "--unrooted", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--no-stats"));
    let o = urnphylo(&["generate", "--model", "yhk", "--unrooted", "--n", "5", "--no-stats"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_input_exits_2() {
    assert_eq!(urnphylo(&["generate", "--n", "6"]).status.code(), Some(2));
    assert_eq!(urnphylo(&["generate", "--model", "xyz", "--n", "6"]).status.code(), Some(2));
    assert_eq!(urnphylo(&["generate", "--model", "yhk", "--n", "6", "--seed-tree", "(1,2"]).status.code(), Some(2));
    assert_eq!(urnphylo(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(urnphylo(&["simulate", "--model", "yhk", "--n", "10", "--replicates", "1"]).status.code(), Some(2));
}

#[test]
fn enumerate_four_leaf_pda() {
    let v = json(&urnphylo(&["enumerate", "--model", "pda", "--n", "4"]));
    let ab = v["ab"].as_array().unwrap();
    let pairs: Vec<(u64, u64, String)> = ab
        .iter()
        .map(|e| (e["a"].as_u64().unwrap(), e["b"].as_u64().unwrap(), e["p"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(pairs, vec![(0, 2, "1/5".into()), (1, 1, "4/5".into())]);
}

#[test]
fn enumerate_agrees_with_closed_form() {
    let v = json(&urnphylo(&["enumerate", "--model", "yhk", "--n", "8"]));
    assert_eq!(v["closed_form_agrees"], true);
}

#[test]
fn spectral_yhk() {
    let v = json(&urnphylo(&["spectral", "--model", "yhk"]));
    let v1: Vec<&str> = v["spectral"]["v1"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert_eq!(v1, ["1/3", "1/3", "1/6", "1/6"]);
    assert_eq!(v["spectral"]["sigma"][0][0], "23/105");
    assert_eq!(v["spectral"]["sigma_ab"][0][0], "23/420");
}

#[test]
fn spectral_custom_matrix() {
    let v = json(&urnphylo(&["spectral", "--matrix", "2,1;1,2"]));
    assert_eq!(v["spectral"]["exact"], false);
    let o = urnphylo(&["spectral", "--matrix", "0,-1;1,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn urn_run_csv() {
    let o = urnphylo(&["urn-run", "--model", "pda", "--steps", "10", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "step,C1,C2,C3,C4,C5,C6,t,drawn");
    assert_eq!(rows.len(), 12);
    assert!(rows[11].starts_with("10,"));
    // Balanced urn: total grows by 2 per draw from 3.
    assert!(rows[11].contains(",23,"));
}

#[test]
fn simulate_config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("camp.toml");
    std::fs::write(
        &cfg,
        "model = \"yhk\"\nn = 200\nreplicates = 400\nbase_seed = 7\n\n[tolerances]\nmean_se = 3.5\n",
    )
    .unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let printed = stdout(&urnphylo(&["simulate", "--config", cfg_s, "--n", "300", "--print-config"]));
    let table: toml::Table = printed.parse().unwrap();
    assert_eq!(table["n"].as_integer(), Some(300));
    assert_eq!(table["replicates"].as_integer(), Some(400));
    assert_eq!(table["tolerances"]["mean_se"].as_float(), Some(3.5));
    // The emitted effective config parses back to itself.
    let again = dir.path().join("again.toml");
    std::fs::write(&again, &printed).unwrap();
    assert_eq!(stdout(&urnphylo(&["simulate", "--config", again.to_str().unwrap(), "--print-config"])), printed);

    let out = dir.path().join("result.json");
    let raw = dir.path().join("raw.csv");
    let o = urnphylo(&[
        "simulate",
        "--config",
        cfg_s,
        "--out",
        out.to_str().unwrap(),
        "--raw-dump",
        raw.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["metadata"]["base_seed"], 7);
    assert_eq!(v["result"]["metadata"]["replicates"], 400);
    assert_eq!(o.status.code() == Some(0), v["result"]["passed"] == true);
    let raw_text = std::fs::read_to_string(&raw).unwrap();
    assert_eq!(raw_text.lines().count(), 401);
}

#[test]
fn simulate_is_thread_count_independent() {
    let base = ["simulate", "--model", "pda", "--n", "100", "--replicates", "300", "--seed", "4"];
    let one = Command::new(env!("CARGO_BIN_EXE_urnphylo"))
        .args(base)
        .env("URNPHYLO_THREADS", "1")
        .output()
        .unwrap();
    let three = Command::new(env!("CARGO_BIN_EXE_urnphylo"))
        .args(base)
        .env("URNPHYLO_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn unrooted_mismatch_is_config_error() {
    let o = urnphylo(&["simulate", "--model", "yhk", "--unrooted", "--n", "50", "--replicates", "10"]);
    // Default seed for the campaign is the rooted two-leaf tree.
    assert_eq!(o.status.code(), Some(2));
    let o = urnphylo(&["simulate", "--model", "yhk", "--unrooted", "--seed-tree", "star3", "--n", "5", "--replicates", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_spectral_and_urn() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = urnphylo(&["verify", "--suite", "spectral", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["report"]["passed"], true);
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));

    let o = urnphylo(&["verify", "--suite", "urn", "--scale", "quick"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("b-coefficient sum (3,4)"));
}

#[test]
fn verify_rejects_unknown_suite() {
    assert_eq!(urnphylo(&["verify", "--suite", "everything"]).status.code(), Some(2));
}
