//! Generates a long-tailed corpus over the KZiS-shaped tree, with the tail
//! exponent tuned so a third of the codes have fewer than ten examples.

use htax::datagen::{self, CorpusSpec};
use htax::hierarchy::kzis;

fn main() {
    let tree = kzis::kzis_shaped_tree().unwrap();
    let total = 60_000;
    let exponent = datagen::tune_tail_exponent(tree.leaf_count(), total, 10, 1.0 / 3.0);
    let spec = CorpusSpec { total_docs: total, tail_exponent: exponent, seed: 1, ..CorpusSpec::default() };
    let docs = datagen::generate_corpus(&tree, &spec).unwrap();
    let counts = datagen::sorted_class_counts(&docs);
    let empty = tree.leaf_count() - counts.len();

    println!("tail exponent {exponent:.4}");
    println!("{} documents over {} codes ({empty} without any)", docs.len(), tree.leaf_count());
    for rank in [1, 10, 100, 500, 1000, 2000] {
        if let Some(c) = counts.get(rank - 1) {
            println!("  rank {rank:>4}: {c} documents");
        }
    }
    let rare = counts.iter().filter(|&&c| c < 10).count() + empty;
    println!("{:.1}% of codes have fewer than 10 documents", 100.0 * rare as f64 / tree.leaf_count() as f64);
    println!("\nexample: {} -> {:?}", docs[0].text, docs[0].codes);
}
