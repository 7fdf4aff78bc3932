use std::path::{Path, PathBuf};
use std::process::Command;

use htax::datagen::{self, CorpusSpec};
use htax::document::{read_jsonl, write_jsonl};
use htax::estimator::{DecodeMode, HierarchicalEstimator, Mode};
use htax::hierarchy::HierarchyTree;
use htax::{report, LabeledDocument, TfidfModel, TrainConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_htax"))
}

fn run(args: &[&str]) -> i32 {
    let argv = std::iter::once("htax").chain(args.iter().copied());
    htax::cli::run(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    tree: HierarchyTree,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let codes: Vec<String> = (1..=3)
            .flat_map(|a| (1..=4).map(move |b| format!("{a}{b}")))
            .collect();
        let tree = HierarchyTree::build(codes, &[1, 1]).unwrap();
        std::fs::write(root.join("tree.txt"), tree.to_hierarchy_text()).unwrap();
        let spec = CorpusSpec { total_docs: 400, seed: 1, ..CorpusSpec::default() };
        let mut docs = datagen::generate_corpus(&tree, &spec).unwrap();
        for (i, d) in docs.iter_mut().enumerate() {
            d.source = ["ads", "survey"][i % 2].to_string();
        }
        let (train, test) = docs.split_at(300);
        write(&root.join("train.jsonl"), train);
        write(&root.join("test.jsonl"), test);
        Fixture { _dir: dir, root, tree }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn write(path: &Path, docs: &[LabeledDocument]) {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, docs).unwrap();
    std::fs::write(path, buf).unwrap();
}

fn read(path: &Path) -> Vec<LabeledDocument> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

#[test]
fn train_persist_evaluate_matches_in_memory() {
    let fx = Fixture::new();
    for mode in [Mode::BottomUp, Mode::TopDown] {
        let model = fx.path(&format!("{mode}.htax"));
        let report_path = fx.path(&format!("{mode}.json"));
        let code = run(&[
            "--seed", "7", "train", "--mode", &mode.to_string(), "--hierarchy", p(&fx.path("tree.txt")),
            "--segments", "1,1", "--data", p(&fx.path("train.jsonl")), "--out", p(&model),
            "--epochs", "4", "--learning-rate", "0.02",
        ]);
        assert_eq!(code, 0);
        assert!(Path::new(&format!("{}.json", model.display())).exists());
        let code = run(&["evaluate", "--model", p(&model), "--data", p(&fx.path("test.jsonl")), "--report", p(&report_path)]);
        assert_eq!(code, 0);

        let train = read(&fx.path("train.jsonl"));
        let texts: Vec<&str> = train.iter().map(|d| d.text.as_str()).collect();
        let tfidf = TfidfModel::fit(&texts, 2).unwrap();
        let config = TrainConfig { epochs: 4, learning_rate: 0.02, seed: 7, ..TrainConfig::default() };
        let est = HierarchicalEstimator::train(mode, &fx.tree, &train, &tfidf, &config).unwrap();
        let in_memory = report::evaluate(&est, &read(&fx.path("test.jsonl")), DecodeMode::LeafArgmax).unwrap();
        let on_disk = std::fs::read_to_string(&report_path).unwrap();
        assert_eq!(on_disk, in_memory.to_json() + "\n", "{mode}");

        let json: serde_json::Value = serde_json::from_str(&on_disk).unwrap();
        let names: Vec<&str> = json["slices"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
        assert_eq!(names, ["overall", "ads", "survey"]);
        assert_eq!(json["slices"][0]["levels"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn predict_writes_top_k_per_level() {
    let fx = Fixture::new();
    let model = fx.path("m.htax");
    assert_eq!(
        run(&["train", "--hierarchy", p(&fx.path("tree.txt")), "--segments", "1,1", "--data", p(&fx.path("train.jsonl")), "--out", p(&model)]),
        0
    );
    let out = fx.path("pred.jsonl");
    assert_eq!(run(&["predict", "--model", p(&model), "--data", p(&fx.path("test.jsonl")), "--top-k", "2", "--out", p(&out)]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 100);
    for line in &lines {
        let levels = line["levels"].as_array().unwrap();
        assert_eq!(levels.len(), 2);
        for level in levels {
            let top = level["top"].as_array().unwrap();
            assert_eq!(top.len(), 2);
            assert!(top[0]["probability"].as_f64() >= top[1]["probability"].as_f64());
        }
        assert_eq!(line["path"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn training_is_deterministic_under_seed() {
    let fx = Fixture::new();
    let train = |name: &str, threads: &str| {
        let out = fx.path(name);
        let code = run(&[
            "--seed", "3", "--threads", threads, "train", "--mode", "top_down", "--hierarchy", p(&fx.path("tree.txt")),
            "--segments", "1,1", "--data", p(&fx.path("train.jsonl")), "--out", p(&out),
        ]);
        assert_eq!(code, 0);
        std::fs::read(out).unwrap()
    };
    assert_eq!(train("a.htax", "1"), train("b.htax", "4"));
}

#[test]
fn usage_errors_exit_2() {
    let status = bin().args(["train", "--bogus"]).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["evaluate", "--model", "m", "--data", "d", "--decode", "sideways"]).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn data_errors_exit_3() {
    let fx = Fixture::new();
    let out = bin()
        .args(["evaluate", "--model", p(&fx.path("missing.htax")), "--data", p(&fx.path("test.jsonl"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.htax"));

    std::fs::write(fx.path("bad.jsonl"), "{not json}\n").unwrap();
    let code = run(&["train", "--hierarchy", p(&fx.path("tree.txt")), "--segments", "1,1", "--data", p(&fx.path("bad.jsonl")), "--out", p(&fx.path("x.htax"))]);
    assert_eq!(code, 3);
    assert!(!fx.path("x.htax").exists());

    // an internal code as a training label
    write(&fx.path("internal.jsonl"), &[LabeledDocument::new("a", "some words", "1")]);
    let code = run(&["train", "--hierarchy", p(&fx.path("tree.txt")), "--segments", "1,1", "--data", p(&fx.path("internal.jsonl")), "--out", p(&fx.path("x.htax"))]);
    assert_eq!(code, 3);
}

#[test]
fn validate_reports_and_strict_mode() {
    let fx = Fixture::new();
    let tree_path = fx.path("tree.txt");
    let tree = p(&tree_path);
    let clean_report = fx.path("clean.json");
    assert_eq!(run(&["validate", "--hierarchy", tree, "--segments", "1,1", "--data", p(&fx.path("test.jsonl")), "--report", p(&clean_report)]), 0);
    let clean: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&clean_report).unwrap()).unwrap();
    assert_eq!(clean["unknown_codes"].as_array().unwrap().len(), 0);
    assert_eq!(clean["empty_texts"].as_array().unwrap().len(), 0);
    assert_eq!(clean["duplicate_ids"].as_array().unwrap().len(), 0);

    let dirty = vec![
        LabeledDocument::new("a", "fine", "11"),
        LabeledDocument::new("b", "unknown code", "19"),
        LabeledDocument::new("c", "   ", "12"),
        LabeledDocument::new("c", "duplicate id", "13"),
    ];
    write(&fx.path("dirty.jsonl"), &dirty);
    let report_path = fx.path("dirty.json");
    let dirty_path = fx.path("dirty.jsonl");
    let args = ["validate", "--hierarchy", tree, "--segments", "1,1", "--data", p(&dirty_path), "--report", p(&report_path)];
    assert_eq!(run(&args), 0);
    let found: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(found["unknown_codes"][0]["code"], "19");
    assert_eq!(found["empty_texts"], serde_json::json!(["c"]));
    assert_eq!(found["duplicate_ids"], serde_json::json!(["c"]));

    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict), 3);

    write(&fx.path("empty_text.jsonl"), &[LabeledDocument::new("z", "", "11")]);
    let status = bin()
        .args(["validate", "--strict", "--hierarchy", tree, "--segments", "1,1", "--data", p(&fx.path("empty_text.jsonl"))])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(3));
}

#[test]
fn synth_split_sample_agree() {
    let fx = Fixture::new();
    let all = fx.path("all.jsonl");
    assert_eq!(run(&["--seed", "2", "synth", "--hierarchy", p(&fx.path("tree.txt")), "--segments", "1,1", "--docs", "500", "--out", p(&all)]), 0);
    assert_eq!(read(&all).len(), 500);

    let (train, test) = (fx.path("tr.jsonl"), fx.path("te.jsonl"));
    assert_eq!(run(&["split", "--data", p(&all), "--train-out", p(&train), "--test-out", p(&test), "--manifest", p(&fx.path("split.json"))]), 0);
    assert_eq!(read(&train).len() + read(&test).len(), 500);

    let sample = fx.path("sample.jsonl");
    assert_eq!(run(&["sample", "--data", p(&all), "--fraction", "0.2", "--strata", "code", "--out", p(&sample)]), 0);
    let n = read(&sample).len();
    assert!((90..=115).contains(&n), "{n}");

    let pairs = fx.path("pairs.jsonl");
    std::fs::write(
        &pairs,
        "{\"coder_a\":\"252101\",\"coder_b\":\"252102\",\"weight\":1.0}\n{\"coder_a\":\"252101\",\"coder_b\":\"261101\",\"weight\":1.0}\n",
    )
    .unwrap();
    let out = fx.path("agree.json");
    assert_eq!(run(&["agree", "--data", p(&pairs), "--digits", "1,4,6", "--out", p(&out)]), 0);
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rates: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["rate"].as_f64().unwrap()).collect();
    assert_eq!(rates, [100.0, 50.0, 0.0]);
    assert_eq!(run(&["agree", "--data", p(&pairs), "--digits", "5"]), 3);
}
