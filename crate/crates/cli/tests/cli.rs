use std::path::Path;
use std::process::{Command, Output};

fn proxyprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxyprobe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path) {
    let spec = dir.join("spec.toml");
    std::fs::write(&spec, "background_txs = 200\n").unwrap();
    let out = proxyprobe(&["gen-fixture", "--spec", s(&spec), "--out", s(&dir.join("corpus"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(proxyprobe(&[]).status.code(), Some(1));
    assert_eq!(proxyprobe(&["detect", "--bogus"]).status.code(), Some(1));
    assert_eq!(proxyprobe(&["detect", "--out", "p.jsonl"]).status.code(), Some(1));
    assert_eq!(proxyprobe(&["graph", "--corpus", "."]).status.code(), Some(1));
    assert_eq!(proxyprobe(&["stats", "no-such-analysis", "--run", ".", "--out", "x"]).status.code(), Some(1));
    assert_eq!(proxyprobe(&["--help"]).status.code(), Some(0));
}

#[test]
fn stage_subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let c = d.join("corpus");
    let idx = d.join("index");
    let ok = |args: &[&str]| {
        let out = proxyprobe(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(&["ingest", "--traces", s(&c.join("traces.jsonl")), "--contracts", s(&c.join("contracts.jsonl")), "--out", s(&idx)]);
    ok(&["graph", "stats", "--corpus", s(&idx), "--call-type", "delegatecall", "--out", s(&d.join("ratio.csv"))]);
    let ratio = std::fs::read_to_string(d.join("ratio.csv")).unwrap();
    assert!(ratio.starts_with("month,numerator,denominator,ratio"));
    let proxies = d.join("proxies.jsonl");
    ok(&["detect", "--corpus", s(&idx), "--out", s(&proxies)]);
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&proxies).unwrap().lines().next().unwrap()).unwrap();
    for field in ["proxy", "logic_targets", "evidence_count", "first_evidence_tx", "first_evidence_trace"] {
        assert!(!first[field].is_null(), "{field}");
    }
    let score = ok(&["detect", "score", "--corpus", s(&idx), "--ground-truth", s(&c.join("ground_truth.csv"))]);
    let report: serde_json::Value = serde_json::from_slice(&score.stdout).unwrap();
    assert_eq!(report["proxy"]["precision"], 1.0);
    ok(&["lineage", "--corpus", s(&idx), "--proxies", s(&proxies), "--out", s(&d.join("chains.jsonl"))]);
    ok(&["lineage", "catalog", "--index", s(&idx), "--out", s(&d.join("catalog.csv"))]);
    let catalog = std::fs::read_to_string(d.join("catalog.csv")).unwrap();
    assert!(catalog.starts_with("signature,style,context_count,proxy_count,proxy_pct"));
    assert_eq!(catalog.lines().count(), 13);
    ok(&["contexts", "--corpus", s(&idx), "--out", s(&d.join("contexts.jsonl"))]);
    ok(&["classify", "--corpus", s(&idx), "--proxies", s(&proxies), "--state", s(&c.join("state.json")), "--out", s(&d.join("classes.csv"))]);
    let classes = std::fs::read_to_string(d.join("classes.csv")).unwrap();
    assert!(classes.starts_with("proxy,impl_kind,purpose,evidence"));
    for kind in ["Erc1167Minimal", "Erc897", "Erc1967,", "Erc1967Beacon", "Erc1822Uups", "OpenZeppelinLegacy", "GnosisSafeProxy", "Customized"] {
        assert!(classes.contains(kind), "{kind}");
    }
}

#[test]
fn run_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let cfg = d.join("run.toml");
    std::fs::write(
        &cfg,
        "traces = \"corpus/traces.jsonl\"\ncontracts = \"corpus/contracts.jsonl\"\nground_truth = \"corpus/ground_truth.csv\"\nstate = \"corpus/state.json\"\nout = \"run\"\n",
    )
    .unwrap();
    let out = proxyprobe(&["run", "--config", s(&cfg), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("run/manifest.json").exists());
    assert!(d.join("run/run_timings.json").exists());
    let report = d.join("gas.json");
    let out = proxyprobe(&["stats", "gas-cost", "--run", s(&d.join("run")), "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["inputs"]["proxies.jsonl"].is_string());
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.jsonl");
    std::fs::write(&bad, "{oops\n").unwrap();
    let out = proxyprobe(&["ingest", "--traces", s(&bad), "--contracts", s(&bad), "--out", s(&d.join("i")), "--strict"]);
    assert_eq!(out.status.code(), Some(2));
    let out = proxyprobe(&["detect", "--corpus", s(&d.join("missing")), "--out", s(&d.join("p.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = d.join("run.toml");
    std::fs::write(&cfg, format!("traces = \"{}\"\ncontracts = \"{}\"\nout = \"run\"\n", s(&bad), s(&bad))).unwrap();
    assert_eq!(proxyprobe(&["run", "--config", s(&cfg)]).status.code(), Some(2));
    let spec = d.join("deep.toml");
    std::fs::write(&spec, format!("patterns = [\"EOA > {}P\"]\n", "FA > ".repeat(40))).unwrap();
    assert_eq!(proxyprobe(&["gen-fixture", "--spec", s(&spec), "--out", s(&d.join("f"))]).status.code(), Some(2));
}

#[test]
fn gen_fixture_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = proxyprobe(&["gen-fixture", "--preset", "detection", "--seed", "5", "--out", s(&dir.path().join(sub))]);
        assert!(out.status.success());
    }
    for f in ["traces.jsonl", "contracts.jsonl", "ground_truth.csv", "state.json", "plant.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
