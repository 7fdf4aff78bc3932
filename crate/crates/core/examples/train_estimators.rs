//! Trains bottom-up and top-down estimators on a synthetic corpus and
//! compares their per-level profiles for one text.

use htax::datagen::{self, CorpusSpec};
use htax::hierarchy::HierarchyTree;
use htax::metrics::{self, EvalRecord};
use htax::{DecodeMode, HierarchicalEstimator, Mode, TfidfModel, TrainConfig};

fn main() {
    let codes: Vec<String> = (1..=4)
        .flat_map(|a| (1..=5).flat_map(move |b| (1..=5).map(move |c| format!("{a}{b}{c}"))))
        .collect();
    let tree = HierarchyTree::build(codes, &[1, 1, 1]).unwrap();
    let spec = CorpusSpec { total_docs: 6000, class_token_signal: 0.6, seed: 1, ..CorpusSpec::default() };
    let train = datagen::generate_corpus(&tree, &spec).unwrap();
    let test = datagen::generate_corpus(&tree, &CorpusSpec { total_docs: 1000, seed: 2, ..spec }).unwrap();
    let texts: Vec<&str> = train.iter().map(|d| d.text.as_str()).collect();
    let tfidf = TfidfModel::fit(&texts, 2).unwrap();
    let config = TrainConfig { learning_rate: 0.01, epochs: 8, seed: 1, ..TrainConfig::default() };

    let sample = &test[0];
    println!("text: {}\ntruth: {}\n", sample.text, sample.codes[0]);
    for mode in [Mode::BottomUp, Mode::TopDown] {
        let start = std::time::Instant::now();
        let est = HierarchicalEstimator::train(mode, &tree, &train, &tfidf, &config).unwrap();
        println!("{mode}: {} model(s), trained in {:.2?}", est.model_count(), start.elapsed());

        let profile = est.estimate(&sample.text);
        for level in 1..=profile.level_count() {
            let top: Vec<String> = profile
                .top_k(level, 3)
                .unwrap()
                .iter()
                .map(|(c, p)| format!("{c}={p:.3}"))
                .collect();
            println!("  level {level}: {}", top.join("  "));
        }
        println!("  leaf_argmax path {:?}", profile.predict_path(DecodeMode::LeafArgmax));
        println!("  greedy path      {:?}", profile.predict_path(DecodeMode::Greedy));

        let records: Vec<EvalRecord> = test
            .iter()
            .map(|d| EvalRecord::new(est.estimate(&d.text), vec![tree.lookup(&d.codes[0]).unwrap()], 1.0).unwrap())
            .collect();
        let recalls: Vec<String> = (1..=3)
            .map(|l| format!("{:.3}", metrics::recall_at_k(&records, l, 1).unwrap()))
            .collect();
        println!("  held-out recall@1 by level: {}\n", recalls.join(" / "));
    }
}
