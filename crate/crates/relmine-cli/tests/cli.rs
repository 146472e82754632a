//! Drives the binary the way an operator would: synthesize a corpus,
//! train, evaluate, explain, sweep. Exercises the documented exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relmine"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary spawns");
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

const TINY_CONFIG: &str = r#"{
  "d_hidden": 8,
  "n_layers": 2,
  "k_sim": 1,
  "k_att": 4,
  "lr": 0.003,
  "weight_decay": 0.0,
  "pretext": { "epochs": 2, "batch_size": 8 },
  "bimodal": { "epochs": 2, "batch_size": 8 },
  "lm": { "d": 16, "n_heads": 2, "n_blocks": 1, "max_len": 288 },
  "lm_warm": { "epochs": 1, "batch_size": 8, "lr": 0.001 }
}"#;

struct Fixture {
    _dir: TempDir,
    corpus: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.jsonl");
        let config = dir.path().join("tiny.json");
        fs::write(&config, TINY_CONFIG).unwrap();
        run_ok(&[
            "synth",
            "--out",
            corpus.to_str().unwrap(),
            "--graphs",
            "30",
            "--questions",
            "4",
            "--topics",
            "2",
            "--categories",
            "2",
            "--planted",
            "1",
            "--interaction-weight",
            "2.0",
            "--dim",
            "8",
            "--seed",
            "77",
        ]);
        Fixture { _dir: dir, corpus, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.corpus.parent().unwrap().join(name)
    }

    fn corpus(&self) -> &str {
        self.corpus.to_str().unwrap()
    }

    fn config(&self) -> &str {
        self.config.to_str().unwrap()
    }
}

#[test]
fn synth_is_deterministic_and_reports_shape() {
    let fx = Fixture::new();
    let stats = stdout_json(&run_ok(&[
        "synth",
        "--out",
        fx.path("again.jsonl").to_str().unwrap(),
        "--graphs",
        "30",
        "--questions",
        "4",
        "--topics",
        "2",
        "--categories",
        "2",
        "--planted",
        "1",
        "--interaction-weight",
        "2.0",
        "--dim",
        "8",
        "--seed",
        "77",
    ]));
    assert_eq!(stats["n_graphs"], 30);
    assert_eq!(stats["questions_per_graph"], 4);
    assert_eq!(fs::read(&fx.corpus).unwrap(), fs::read(fx.path("again.jsonl")).unwrap());
}

#[test]
fn train_eval_explain_roundtrip() {
    let fx = Fixture::new();
    let run_dir = fx.path("run");
    let train_out = run_ok(&[
        "train",
        "--corpus",
        fx.corpus(),
        "--config",
        fx.config(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    let report = stdout_json(&train_out);
    for key in ["accuracy", "macro_f1", "auc", "precision_pos", "recall_pos"] {
        assert!(report["metrics"][key].is_number(), "report carries {key}");
    }
    for file in [
        "model.bin",
        "config.json",
        "structures.json",
        "tokenizer.json",
        "report.json",
        "predictions.json",
        "bimodal_log.json",
    ] {
        assert!(run_dir.join(file).exists(), "{file} saved");
    }

    // Scoring the saved model reproduces the training-time test report.
    let eval_out = run_ok(&[
        "eval",
        "--corpus",
        fx.corpus(),
        "--model",
        run_dir.to_str().unwrap(),
        "--split",
        "test",
    ]);
    assert_eq!(stdout_json(&eval_out), report);

    // Greedy explanations repeat exactly and carry the selected questions.
    let args = [
        "explain",
        "--corpus",
        fx.corpus(),
        "--model",
        run_dir.to_str().unwrap(),
        "--ids",
        "s0,s5",
        "--max-new",
        "6",
    ];
    let first = run_ok(&args);
    let second = run_ok(&args);
    assert_eq!(first.stdout, second.stdout);
    let lines: Vec<serde_json::Value> = String::from_utf8(first.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["respondent_id"], "s0");
    assert_eq!(lines[0]["selected"].as_array().unwrap().len(), 4);
    let label = lines[0]["lm_label"].as_str().unwrap();
    assert!(label == "Yes" || label == "No");
}

#[test]
fn unknown_respondent_is_a_data_error() {
    let fx = Fixture::new();
    let run_dir = fx.path("run");
    run_ok(&[
        "train",
        "--corpus",
        fx.corpus(),
        "--config",
        fx.config(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    let out = bin()
        .args([
            "explain",
            "--corpus",
            fx.corpus(),
            "--model",
            run_dir.to_str().unwrap(),
            "--ids",
            "missing-person",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing-person"));
}

#[test]
fn usage_errors_exit_one() {
    let bad_param = bin()
        .args(["sweep", "--corpus", "x", "--param", "nope", "--values", "1", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(bad_param.status.code(), Some(1));

    let no_subcommand = bin().output().unwrap();
    assert_eq!(no_subcommand.status.code(), Some(1));

    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let fx = Fixture::new();
    let csv_path = fx.path("sweep.csv");
    run_ok(&[
        "sweep",
        "--corpus",
        fx.corpus(),
        "--config",
        fx.config(),
        "--param",
        "k_att",
        "--values",
        "2,4",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,value,accuracy,precision,recall,macro_f1,auc");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("k_att,2,"));
    assert!(lines[2].starts_with("k_att,4,"));
}

#[test]
fn no_llm_ablation_logs_no_generation_loss() {
    let fx = Fixture::new();
    let run_dir = fx.path("ablated");
    run_ok(&[
        "train",
        "--corpus",
        fx.corpus(),
        "--config",
        fx.config(),
        "--ablation",
        "no_latent_learning,no_llm",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    let log: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(run_dir.join("bimodal_log.json")).unwrap())
            .unwrap();
    assert!(!log.is_empty());
    assert!(log.iter().all(|row| row.get("l_gen").is_none()));
    assert!(!run_dir.join("tokenizer.json").exists());
}

#[test]
fn multi_seed_pipeline_aggregates_mean_and_std() {
    let fx = Fixture::new();
    let out_dir = fx.path("multi");
    let agg = stdout_json(&run_ok(&[
        "pipeline",
        "--corpus",
        fx.corpus(),
        "--config",
        fx.config(),
        "--seeds",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(agg["runs"].as_array().unwrap().len(), 2);
    assert!(agg["mean"]["accuracy"].is_number());
    assert!(agg["std"]["accuracy"].is_number());
    assert!(out_dir.join("aggregate.json").exists());
}

const TOY_CODEBOOK: &str = r#"{
  "topics": ["tobacco", "alcohol"],
  "questions": [
    {
      "id": "QN30",
      "text": "Have you ever tried cigarette smoking?",
      "topic": "tobacco",
      "categories": [
        { "code": "1", "label": "Yes" },
        { "code": "2", "label": "No" }
      ]
    },
    {
      "id": "QN40",
      "text": "Have you had at least one drink of alcohol?",
      "topic": "alcohol",
      "categories": [
        { "code": "1", "label": "Yes" },
        { "code": "2", "label": "No" }
      ],
      "missing_label": "Not answered"
    }
  ],
  "user_fields": [
    { "field": "sex", "encoding": "one_hot", "codes": ["1", "2"] },
    { "field": "bmi", "encoding": "numeric" }
  ],
  "age": { "field": "age", "min": 15, "max": 25 },
  "label": { "any_equals": [["QN50", "1"]] }
}"#;

const TOY_SURVEY: &str = "respondent_id,age,sex,bmi,QN30,QN40,QN50\n\
r1,16,1,21.5,1,2,1\n\
r2,17,2,19.0,2,,2\n\
r3,30,1,25.0,1,1,1\n\
r4,15,2,22.2,2,2,2\n\
r5,18,1,20.1,1,1,1\n";

#[test]
fn ingest_builds_graphs_and_applies_the_age_window() {
    let dir = tempfile::tempdir().unwrap();
    let codebook = dir.path().join("codebook.json");
    let survey = dir.path().join("survey.csv");
    fs::write(&codebook, TOY_CODEBOOK).unwrap();
    fs::write(&survey, TOY_SURVEY).unwrap();

    let first = dir.path().join("a.jsonl");
    let stats = stdout_json(&run_ok(&[
        "ingest",
        "--survey",
        survey.to_str().unwrap(),
        "--codebook",
        codebook.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "--dim",
        "12",
    ]));
    // r3 is 30 years old and falls outside the sample window.
    assert_eq!(stats["n_graphs"], 4);
    assert_eq!(stats["n_positive"], 2);
    assert_eq!(stats["questions_per_graph"], 2);

    let second = dir.path().join("b.jsonl");
    run_ok(&[
        "ingest",
        "--survey",
        survey.to_str().unwrap(),
        "--codebook",
        codebook.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--dim",
        "12",
    ]);
    assert_eq!(fs::read(first).unwrap(), fs::read(second).unwrap());
}
