mod common;

use std::path::Path;

use campaign_dss::interfaces::cli::run;
use campaign_dss::model;

const SAMPLE: &str = "41,7,3,2,0,270,1,0,1,5,5,222,1,-1,0,1";

fn campaign(store: &Path, args: &[&str]) -> (i32, String) {
    let mut argv = vec!["campaign".to_string(), "--store".into(), store.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bank.csv"), common::to_csv(&common::bank_like(800, 31))).unwrap();
        Workspace { dir }
    }

    fn store(&self) -> std::path::PathBuf {
        self.dir.path().join("store")
    }

    fn data(&self) -> String {
        self.dir.path().join("bank.csv").display().to_string()
    }

    fn run(&self, args: &[&str]) -> (i32, String) {
        campaign(&self.store(), args)
    }
}

#[test]
fn fixture_rules_predict_sample_customer() {
    let w = Workspace::new();
    let (code, out) = w.run(&["predict", "--model", "fixture-rules", "--record", SAMPLE]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("no (rule \"1 - 5\""), "{out}");
    let (code, out) = w.run(&["--format", "json", "predict", "--model", "fixture", "--record", SAMPLE]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!((v["label"].as_str(), v["rule_id"].as_str()), (Some("no"), Some("1 - 5")));
    assert!(!w.store().exists(), "read-only commands must not create the store");
}

#[test]
fn exit_codes() {
    let w = Workspace::new();
    assert_eq!(w.run(&["--help"]).0, 0);
    assert_eq!(w.run(&["frobnicate"]).0, 2);
    assert_eq!(w.run(&["predict", "--record", SAMPLE]).0, 2);
    let (code, out) = w.run(&["predict", "--model", "fixture", "--record", "1,2,3"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.starts_with("error:"));
    assert_eq!(w.run(&["ingest", "--data", "/nonexistent/bank.csv"]).0, 1);
    assert_eq!(w.run(&["predict", "--model", "no-such-model", "--record", SAMPLE]).0, 1);
    assert_eq!(w.run(&["--format", "csv", "rules", "--model", "fixture"]).0, 2);
}

#[test]
fn whatif_month_flip_and_paths() {
    let w = Workspace::new();
    let (code, out) = w.run(&["whatif", "--model", "fixture", "--record", SAMPLE, "--set", "month=jun"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(out, "no (rule \"1 - 5\") -> yes (rule \"1 - 6\"), changed\n");
    let (_, same) = w.run(&["whatif", "--model", "fixture", "--record", SAMPLE, "--set", "month=6"]);
    assert_eq!(same, out);
    let (code, out) = w.run(&["paths", "--model", "fixture", "--record", SAMPLE]);
    assert_eq!(code, 0);
    assert!(out.ends_with("=> rule \"1 - 5\"\n"), "{out}");
    let (code, out) = w.run(&["paths", "--model", "fixture", "--evidence", "poutcome=success"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 4, "{out}");
}

#[test]
fn rules_export_text_and_json() {
    let w = Workspace::new();
    let (code, text) = w.run(&["rules", "--model", "fixture"]);
    assert_eq!(code, 0);
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("duration < 605.5"));
    let (code, json) = w.run(&["--format", "json", "rules", "--model", "fixture"]);
    assert_eq!(code, 0);
    assert!(serde_json::from_str::<serde_json::Value>(&json).is_ok());
}

#[test]
fn train_prune_evaluate_advise_flow() {
    let w = Workspace::new();
    let data = w.data();
    let (code, out) = w.run(&["ingest", "--data", &data, "--evidence", "poutcome=success"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("800 records"));

    let (code, id) = w.run(&["train", "--data", &data, "--criterion", "twoing"]);
    assert_eq!(code, 0, "{id}");
    let id = id.trim().to_string();
    let (code, pruned) = w.run(&["prune", "--model", &id, "--level", "2"]);
    assert_eq!(code, 0, "{pruned}");

    let (code, eval) = w.run(&["--format", "json", "evaluate", "--model", &id, "--data", &data]);
    assert_eq!(code, 0, "{eval}");
    let v: serde_json::Value = serde_json::from_str(&eval).unwrap();
    let m = &v["matrix"];
    let total: u64 = ["tp", "tn", "fp", "fn"].iter().map(|k| m[k].as_u64().unwrap()).sum();
    assert_eq!(total, 800);

    let (code, advice) = w.run(&["advise", "--model", &id, "--data", &data, "--evidence", "poutcome=success"]);
    assert_eq!(code, 0, "{advice}");
    assert!(advice.starts_with("Matching records in the database: "), "{advice}");

    let (code, list) = w.run(&["kb", "list", "--kind", "model"]);
    assert_eq!(code, 0);
    assert_eq!(list.lines().count(), 2);
    let (code, payload) = w.run(&["kb", "get", &id]);
    assert_eq!(code, 0);
    let loaded = model::from_json(&payload).unwrap();
    assert_eq!(loaded.kind(), "tree");
}

#[test]
fn compare_outputs_each_format() {
    let w = Workspace::new();
    let data = w.data();
    let (code, text) = w.run(&["compare", "--data", &data, "--models", "dt,nb"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("DT") || text.contains("dt"), "{text}");
    let (code, csv) = w.run(&["--format", "csv", "compare", "--data", &data, "--models", "dt,nb,lr,knn"]);
    assert_eq!(code, 0, "{csv}");
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert_eq!(w.run(&["compare", "--data", &data, "--models", "dt,svm"]).0, 2);
}

#[test]
fn kb_put_and_get_round_trip() {
    let w = Workspace::new();
    let file = w.dir.path().join("plan.txt");
    std::fs::write(&file, "call tertiary-educated clients in march").unwrap();
    let (code, id) = w.run(&["kb", "put", "--kind", "campaign-plan", "--file", &file.display().to_string(), "--tag", "q1"]);
    assert_eq!(code, 0, "{id}");
    let (code, body) = w.run(&["kb", "get", id.trim()]);
    assert_eq!((code, body.as_str()), (0, "call tertiary-educated clients in march"));
    let (code, out) = w.run(&["--format", "csv", "kb", "list", "--tag", "q1"]);
    assert_eq!(code, 0);
    assert!(out.contains("campaign-plan"));
    w.run(&["kb", "put", "--kind", "note", "--file", &file.display().to_string(), "--tag", "q1"]);
    let (code, out) = w.run(&["--format", "json-lines", "kb", "list", "--tag", "q1"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok_and(|v| v["tags"][0] == "q1")));
    assert_eq!(w.run(&["kb", "put", "--kind", "poster", "--file", "x"]).0, 2);
}
