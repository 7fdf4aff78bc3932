//! Fits a TF-IDF model and shows the sparse vectors it produces.

use htax::text::{tokenize, TfidfModel};

fn main() {
    let corpus = [
        "Senior Rust developer, remote",
        "Junior developer (Python) for data team",
        "Warehouse worker, night shifts",
        "Forklift operator / warehouse",
        "Data engineer: Python, Spark",
    ];
    let model = TfidfModel::fit(&corpus, 2).unwrap();
    println!("{} documents, vocabulary (min_df=2): {:?}", model.document_count(), model.tokens());
    for token in model.tokens() {
        println!("  idf({token}) = {:.4}", model.idf(token).unwrap());
    }

    let query = "Python developer in the warehouse data team";
    println!("\ntokens: {:?}", tokenize(query));
    let x = model.vectorize(query);
    for (j, v) in x.iter() {
        println!("  {:<10} {v:.4}", model.tokens()[j]);
    }
    println!("norm {:.6}", x.norm());
    println!("vocabulary hash {}", model.vocabulary_hash());
}
