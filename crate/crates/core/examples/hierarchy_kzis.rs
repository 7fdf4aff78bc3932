//! Builds the KZiS-shaped occupation tree and walks a code's ancestry.

use htax::hierarchy::kzis;

fn main() {
    let tree = kzis::kzis_shaped_tree().expect("built-in code list is valid");
    println!("segments {:?} -> digits {:?}", tree.segment_lengths(), tree.digit_lengths());
    for (level, size) in tree.level_sizes().iter().enumerate() {
        println!("level {} ({} digits): {size} nodes", level + 1, tree.digit_lengths()[level]);
    }

    let leaf = tree.leaf_codes()[1000].clone();
    println!("\nleaf {leaf} ({:?})", leaf);
    for ancestor in tree.ancestor_path(&leaf).unwrap() {
        let parent = ancestor.parent().unwrap();
        println!(
            "  {:<6} level {}  siblings {}",
            ancestor.as_str(),
            ancestor.level(),
            tree.children(&parent).unwrap().len()
        );
    }

    match tree.lookup("25219") {
        Ok(c) => println!("\n25219 parsed as {c:?}"),
        Err(e) => println!("\n25219 rejected: {e}"),
    }
}
