use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn sgr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgr"))
        .args(args)
        .env_remove("SGR_PROGRAMMER_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sgr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dead_endpoint() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}

#[test]
fn derive_then_replay_reaches_spice_100() {
    let dir = tempfile::tempdir().unwrap();
    let gold = fixture("gold20.jsonl");
    let edits = dir.path().join("edits.jsonl");
    let refined = dir.path().join("refined.jsonl");
    ok(&["derive-edits", "--input", p(&gold), "--output", p(&edits)]);
    ok(&[
        "refine", "--input", p(&gold), "--programmer", "replay", "--edits", p(&edits), "--iterations", "1",
        "--output", p(&refined), "--trace", p(&dir.path().join("trace")),
    ]);
    let table = ok(&["score", "--pred", p(&refined), "--gold", p(&gold), "--metric", "spice"]);
    let mean = table.lines().last().unwrap();
    assert_eq!(mean.split_whitespace().collect::<Vec<_>>(), ["mean", "100.0"]);
    assert_eq!(table.lines().count(), 22);
    assert!(dir.path().join("trace/trace.jsonl").exists());
    // metadata lands next to the output
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("refined.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["exit_code"], 0);
    assert_eq!(meta["config"]["command"]["command"], "refine");
}

#[test]
fn score_json_stays_in_unit_interval() {
    let gold = fixture("gold20.jsonl");
    let out = ok(&["score", "--pred", p(&gold), "--gold", p(&gold), "--metric", "all", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["mean"]["f1"], 1.0);
    assert_eq!(v["mean"]["bsspice"], 1.0);
    assert_eq!(v["instances"].as_array().unwrap().len(), 20);
}

#[test]
fn unreachable_programmer_exits_4() {
    let gold = fixture("gold20.jsonl");
    let ep = dead_endpoint();
    let args = ["refine", "--input", p(&gold), "--programmer", "remote", "--endpoint", &ep, "--retries", "2", "--backoff-ms", "1"];
    let out = sgr(&args);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    // endpoint taken from the environment
    let out = Command::new(env!("CARGO_BIN_EXE_sgr"))
        .args(["refine", "--input", p(&gold), "--programmer", "remote", "--retries", "1"])
        .env("SGR_PROGRAMMER_ENDPOINT", &ep)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_2() {
    let gold = fixture("gold20.jsonl");
    for args in [
        vec!["refine", "--input", p(&gold), "--programmer", "remote"],
        vec!["refine", "--input", p(&gold), "--programmer", "replay"],
        vec!["refine", "--input", p(&gold), "--edits", p(&gold)],
        vec!["retrieve", "--corpus", p(&gold), "--query", "dog", "--diverse"],
        vec!["score", "--bogus"],
        vec!["corrupt", "--input", p(&gold), "--output", "/dev/null", "--delete-fraction", "2"],
    ] {
        assert_eq!(sgr(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn data_errors_exit_3() {
    assert_eq!(sgr(&["stats", "--input", "/nonexistent.jsonl"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"a\", \"caption\": \"x\", \"graph\": \"( a , b )\"}\n").unwrap();
    let out = sgr(&["stats", "--input", p(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn corrupt_is_seed_deterministic_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let gold = fixture("gold20.jsonl");
    let (a, b, c) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"), dir.path().join("c.jsonl"));
    ok(&["corrupt", "--input", p(&gold), "--output", p(&a), "--seed", "9", "--manifest", "fixture"]);
    ok(&["--seed", "9", "corrupt", "--input", p(&gold), "--output", p(&b)]);
    ok(&["corrupt", "--input", p(&gold), "--output", p(&c), "--seed", "10"]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    // 20 merged rows plus 15 variants each
    assert_eq!(a.iter().filter(|&&x| x == b'\n').count(), 20 * 16);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["splits"]["train"]["count"], 320);
}

#[test]
fn output_order_ignores_job_count() {
    let gold = fixture("gold20.jsonl");
    let one = ok(&["refine", "--input", p(&gold), "--programmer", "heuristic", "--jobs", "1"]);
    let four = ok(&["refine", "--input", p(&gold), "--programmer", "heuristic", "--jobs", "4"]);
    assert_eq!(one, four);
    assert_eq!(one.lines().count(), 20);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sgr.toml");
    std::fs::write(&cfg, "[refine]\nprogrammer = \"oracle\"\niterations = 1\n").unwrap();
    let gold = fixture("gold20.jsonl");
    let refined = dir.path().join("out.jsonl");
    ok(&["--config", p(&cfg), "refine", "--input", p(&gold), "--output", p(&refined)]);
    let table = ok(&["score", "--pred", p(&refined), "--gold", p(&gold)]);
    assert!(table.trim_end().ends_with("100.0"));
    let meta = std::fs::read_to_string(dir.path().join("out.jsonl.meta.json")).unwrap();
    assert!(meta.contains("\"oracle\""));
}

#[test]
fn eval_subcommands() {
    let dfoil = ok(&["eval-dfoil", "--input", p(&fixture("dfoil_dominating.jsonl"))]);
    assert!(dfoil.lines().all(|l| l.contains("accuracy 100.0")), "{dfoil}");
    let ties = ok(&["eval-dfoil", "--input", p(&fixture("dfoil_ties.jsonl")), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&ties).unwrap();
    assert_eq!(v["spice"]["ties"], 20);
    assert_eq!(v["bsspice"]["accuracy"], 0.0);

    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.jsonl");
    std::fs::write(
        &scores,
        "{\"metric\": 1, \"reference\": 1}\n{\"metric\": 1, \"reference\": 2}\n{\"metric\": 2, \"reference\": 3}\n{\"metric\": 3, \"reference\": 3}\n",
    )
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&ok(&["eval-rank", "--input", p(&scores), "--json"])).unwrap();
    assert!((v["kendall_tau_b"].as_f64().unwrap() - 0.8).abs() < 1e-12);

    let errors = ok(&["eval-errors", "--input", p(&fixture("error_annotations.jsonl"))]);
    assert_eq!(errors.lines().count(), 2);

    let hits = ok(&["retrieve", "--corpus", p(&fixture("gold20.jsonl")), "--query", "a dog chases a frisbee", "-k", "1"]);
    assert!(hits.contains("park-04"), "{hits}");
    let diverse = ok(&["retrieve", "--corpus", p(&fixture("gold20.jsonl")), "--diverse", "-k", "3", "--seed", "1"]);
    assert_eq!(diverse, ok(&["retrieve", "--corpus", p(&fixture("gold20.jsonl")), "--diverse", "-k", "3", "--seed", "1"]));
    assert_eq!(diverse.lines().count(), 3);
}
