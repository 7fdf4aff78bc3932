//! Stratified sampling and the train/test split with a dictionary source.

use std::collections::BTreeSet;

use htax::datagen::{self, CorpusSpec};
use htax::hierarchy::HierarchyTree;
use htax::sampling::{self, StrataKey};
use htax::LabeledDocument;

fn main() {
    let codes: Vec<String> = (1..=5).flat_map(|a| (1..=8).map(move |b| format!("{a}{b}"))).collect();
    let tree = HierarchyTree::build(codes, &[1, 1]).unwrap();
    let spec = CorpusSpec { total_docs: 400, tail_exponent: 2.0, seed: 9, ..CorpusSpec::default() };
    let mut docs = datagen::generate_corpus(&tree, &spec).unwrap();

    let key = StrataKey::parse("code,chars").unwrap();
    let sample = sampling::stratified_sample(&docs, &key, 0.2, 9).unwrap();
    println!("sampled {} of {} documents from {} strata", sample.documents.len(), docs.len(), sample.manifest.strata.len());
    for s in sample.manifest.strata.iter().take(5) {
        println!("  {:<16} {:>3} -> {}", s.stratum, s.population, s.selected);
    }

    // one dictionary entry per code always goes to training
    for leaf in tree.leaf_codes() {
        docs.push(LabeledDocument::new(format!("dict-{leaf}"), format!("title of {leaf}"), leaf.as_str()).with_source("dictionary"));
    }
    let always: BTreeSet<String> = ["dictionary".to_string()].into();
    let split = sampling::train_test_split(&docs, &always, 0.7, 9).unwrap();
    let singletons = split.manifest.strata.iter().filter(|s| s.population == 1 && !s.always_train).count();
    let covered: BTreeSet<&str> = split.train.iter().map(|d| d.primary_code()).collect();
    println!("\ntrain {} / test {}", split.train.len(), split.test.len());
    println!("{singletons} singleton strata sent to test");
    println!("train covers {} of {} codes", covered.len(), tree.leaf_count());
}
