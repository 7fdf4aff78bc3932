//! Scores a trained estimator on a mixed-source test set and prints the
//! per-slice report.

use htax::datagen::{self, CorpusSpec};
use htax::hierarchy::HierarchyTree;
use htax::report;
use htax::{DecodeMode, HierarchicalEstimator, Mode, TfidfModel, TrainConfig};

fn main() {
    let codes: Vec<String> = (1..=3)
        .flat_map(|a| (1..=4).flat_map(move |b| (1..=6).map(move |c| format!("{a}{b}{c}"))))
        .collect();
    let tree = HierarchyTree::build(codes, &[1, 1, 1]).unwrap();
    let spec = CorpusSpec { total_docs: 4000, seed: 3, ..CorpusSpec::default() };
    let train = datagen::generate_corpus(&tree, &spec).unwrap();
    let mut test = datagen::generate_corpus(&tree, &CorpusSpec { total_docs: 600, multi_code_rate: 0.05, seed: 4, ..spec }).unwrap();
    for (i, d) in test.iter_mut().enumerate() {
        d.source = if i % 3 == 0 { "survey" } else { "job_ads" }.to_string();
    }

    let texts: Vec<&str> = train.iter().map(|d| d.text.as_str()).collect();
    let tfidf = TfidfModel::fit(&texts, 2).unwrap();
    let config = TrainConfig { learning_rate: 0.01, epochs: 6, ..TrainConfig::default() };
    let est = HierarchicalEstimator::train(Mode::TopDown, &tree, &train, &tfidf, &config).unwrap();
    let rep = report::evaluate(&est, &test, DecodeMode::LeafArgmax).unwrap();

    for slice in &rep.slices {
        println!("{} ({} records)", slice.name, slice.records);
        println!("  digits  log_loss  r@1    r@3    r@5    path_acc");
        for l in &slice.levels {
            println!(
                "  {:>6}  {:>8.4}  {:.3}  {:.3}  {:.3}  {:.3}",
                l.digits, l.log_loss, l.recall_at_1, l.recall_at_3, l.recall_at_5, l.path_accuracy
            );
        }
    }
    let overall = rep.slice("overall").unwrap();
    println!("\nlevel-1 confusion (row %):");
    for (label, row) in overall.confusion.labels.iter().zip(&overall.confusion.row_percentages) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:5.1}")).collect();
        println!("  {label}: {}", cells.join(" "));
    }
}
