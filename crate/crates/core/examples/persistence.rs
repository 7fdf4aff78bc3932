//! Saves an estimator to an HTAX container, reloads it and checks the
//! reloaded model predicts identically.

use htax::datagen::{self, CorpusSpec};
use htax::hierarchy::HierarchyTree;
use htax::persist::sidecar_path;
use htax::{HierarchicalEstimator, Mode, TfidfModel, TrainConfig};

fn main() {
    let tree = HierarchyTree::build(["00", "01", "02", "10", "11", "12"], &[1, 1]).unwrap();
    let docs = datagen::generate_corpus(&tree, &CorpusSpec { total_docs: 600, ..CorpusSpec::default() }).unwrap();
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let tfidf = TfidfModel::fit(&texts, 2).unwrap();
    let config = TrainConfig { learning_rate: 0.01, ..TrainConfig::default() };
    let est = HierarchicalEstimator::train(Mode::TopDown, &tree, &docs, &tfidf, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.htax");
    est.save(&path).unwrap();
    let size = std::fs::metadata(&path).unwrap().len();
    println!("wrote {} ({size} bytes)", path.display());
    println!("{}", std::fs::read_to_string(sidecar_path(&path)).unwrap());

    let loaded = HierarchicalEstimator::load(&path).unwrap();
    assert_eq!(loaded, est);
    for d in docs.iter().take(3) {
        let (a, b) = (est.estimate(&d.text), loaded.estimate(&d.text));
        assert_eq!(a, b);
        let (leaf, p) = &a.top_k(2, 1).unwrap()[0];
        println!("truth {} -> predicted {leaf} ({p:.3})", d.codes[0]);
    }
    println!("reloaded model predicts identically");
}
