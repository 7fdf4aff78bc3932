//! Agreement rates with confidence intervals and Cohen's kappa between two
//! coders at several digit levels.

use htax::hierarchy::kzis;
use htax::metrics::{self, CoderPair, CoderTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let codes = kzis::kzis_shaped_codes();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // coder B copies coder A, then drifts: a sibling at 6 digits, or a
    // random code altogether
    let pairs: Vec<CoderPair> = (0..500)
        .map(|_| {
            let a = codes[rng.random_range(0..codes.len())].clone();
            let b = match rng.random_range(0..10) {
                0..=5 => a.clone(),
                6..=7 => {
                    let siblings: Vec<&String> = codes.iter().filter(|c| c[..4] == a[..4]).collect();
                    siblings[rng.random_range(0..siblings.len())].clone()
                }
                _ => codes[rng.random_range(0..codes.len())].clone(),
            };
            CoderPair { coder_a: a, coder_b: b, weight: rng.random_range(0.5..2.0) }
        })
        .collect();
    let table = CoderTable::new(pairs, vec![1, 2, 3, 4, 6]);
    println!("digits  agreement   95% CI           kappa");
    for digits in [1, 2, 4, 6] {
        let a = metrics::agreement_rate(&table, digits).unwrap();
        let kappa = metrics::cohens_kappa(&table, digits).unwrap();
        println!("{digits:>6}  {:>8.2}%   [{:.2}, {:.2}]   {kappa:.3}", a.rate, a.ci_low, a.ci_high);
    }

    let textbook = CoderTable::from_counts(&["1", "2"], &[vec![20, 5], vec![10, 15]], vec![1]);
    println!("\n[[20,5],[10,15]] kappa = {:.3}", metrics::cohens_kappa(&textbook, 1).unwrap());
}
