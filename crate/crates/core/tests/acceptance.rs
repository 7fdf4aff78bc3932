//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the terminal.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use htax::datagen::{self, CorpusSpec};
use htax::estimator::{DecodeMode, HierarchicalEstimator, Mode, ProbabilityProfile};
use htax::hierarchy::{kzis, ClassCode, HierarchyTree};
use htax::linear::{self, cce_loss, SoftmaxModel, TrainConfig};
use htax::metrics::{self, CoderTable, EvalRecord};
use htax::report;
use htax::sampling::{self, StrataKey};
use htax::text::{SparseVector, TfidfModel};
use htax::LabeledDocument;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// 3 x 10 x 10 tree with one digit per level: 300 leaves.
fn tree_300() -> HierarchyTree {
    let codes: Vec<String> = (0..3)
        .flat_map(|a| (0..10).flat_map(move |b| (0..10).map(move |c| format!("{a}{b}{c}"))))
        .collect();
    HierarchyTree::build(codes, &[1, 1, 1]).unwrap()
}

fn fig1_tree() -> HierarchyTree {
    HierarchyTree::build(["00", "01", "02", "10", "11", "12"], &[1, 1]).unwrap()
}

fn fit_tfidf(docs: &[LabeledDocument]) -> TfidfModel {
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    TfidfModel::fit(&texts, 2).unwrap()
}

fn fast_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

/// Random text mixing in-vocabulary tokens and unseen ones.
fn random_text(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    let n = rng.random_range(0..12);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.8) {
                vocab[rng.random_range(0..vocab.len())].clone()
            } else {
                format!("unseen{}", rng.random_range(0..1000))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_1() -> Outcome {
    let tree = tree_300();
    let spec = CorpusSpec { total_docs: 3000, seed: 11, ..CorpusSpec::default() };
    let docs = datagen::generate_corpus(&tree, &spec).unwrap();
    let tfidf = fit_tfidf(&docs);
    let vocab = tfidf.tokens().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for mode in [Mode::BottomUp, Mode::TopDown] {
        let est = HierarchicalEstimator::train(mode, &tree, &docs, &tfidf, &fast_config(3, 1)).unwrap();
        for _ in 0..1000 {
            let profile = est.estimate(&random_text(&mut rng, &vocab));
            if let Some(err) = profile.coherence_error(1e-6) {
                return Err(format!("{mode}: {err}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} profiles coherent to 1e-6"))
}

fn criterion_2() -> Outcome {
    let tree = fig1_tree();
    let spec = CorpusSpec { total_docs: 600, tail_exponent: 0.5, seed: 2, ..CorpusSpec::default() };
    let docs = datagen::generate_corpus(&tree, &spec).unwrap();
    let tfidf = fit_tfidf(&docs);
    let config = fast_config(5, 42);
    let est = HierarchicalEstimator::train_bottom_up(&tree, &docs, &tfidf, &config).unwrap();

    // flat softmax trained directly on the same examples
    let leaves = tree.leaf_codes();
    let examples: Vec<(SparseVector, usize)> = docs
        .iter()
        .map(|d| {
            let y = leaves.iter().position(|c| c.as_str() == d.codes[0]).unwrap();
            (tfidf.vectorize(&d.text), y)
        })
        .collect();
    let flat = linear::train_softmax(&examples, leaves.clone(), tfidf.vocabulary_size(), &config).unwrap();

    for (x, _) in &examples {
        let expected = flat.predict_proba(x).unwrap();
        let profile = est.estimate_vector(x).unwrap();
        let leaf_level = profile.level(2).unwrap();
        for ((code, p), (leaf, q)) in leaf_level.iter().zip(leaves.iter().zip(&expected)) {
            check(code == leaf, "leaf order differs")?;
            check(p.to_bits() == q.to_bits(), format!("{code}: {p:e} != {q:e}"))?;
        }
    }
    check(est.leaf_model() == Some(&flat), "parameters differ")?;
    Ok(format!("{} documents, leaf distributions bitwise equal", examples.len()))
}

fn criterion_3() -> Outcome {
    let tree = tree_300();
    let spec = CorpusSpec { total_docs: 3000, seed: 3, ..CorpusSpec::default() };
    let docs = datagen::generate_corpus(&tree, &spec).unwrap();
    let tfidf = fit_tfidf(&docs);
    let est = HierarchicalEstimator::train_top_down(&tree, &docs, &tfidf, &fast_config(3, 3)).unwrap();
    let vocab = tfidf.tokens().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = tfidf.vectorize(&random_text(&mut rng, &vocab));
        let profile = est.estimate_vector(&x).unwrap();
        for leaf in tree.leaf_codes() {
            // product of node conditionals along the root-to-leaf path
            let mut product = 1.0;
            let mut parent = ClassCode::root();
            for node in leaf.ancestors_inclusive() {
                let model = est.node_model(&parent).ok_or(format!("no model at {parent:?}"))?;
                let probs = model.predict_proba(&x).unwrap();
                let i = model.classes().iter().position(|c| *c == node).unwrap();
                product *= probs[i];
                parent = node;
            }
            let got = profile.probability(&leaf).unwrap();
            worst = worst.max((got - product).abs());
        }
    }
    check(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("100 inputs x 300 leaves, max deviation {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let classes = rng.random_range(2..7);
        let n_features = rng.random_range(2..9);
        let codes: Vec<ClassCode> = (0..classes).map(|c| ClassCode::parse(&c.to_string(), &[1]).unwrap()).collect();
        let weights: Vec<f64> = (0..classes * n_features).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..classes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = SoftmaxModel::from_parameters(codes, n_features, weights, bias, TrainConfig::default()).unwrap();
        let mut pairs = Vec::new();
        for j in 0..n_features as u32 {
            if rng.random_bool(0.6) {
                pairs.push((j, rng.random_range(-1.0..1.0)));
            }
        }
        let x = SparseVector::from_pairs(pairs);
        let target = rng.random_range(0..classes);
        let grad = model.gradient(&x, target).unwrap();

        let loss = |m: &SoftmaxModel| cce_loss(&m.predict_proba(&x).unwrap(), target).unwrap();
        let mut numeric = Vec::new();
        for i in 0..model.weights().len() + model.bias().len() {
            let bump = |delta: f64| {
                let mut m = model.clone();
                if i < m.weights().len() {
                    m.weights_mut()[i] += delta;
                } else {
                    let b = i - m.weights().len();
                    m.bias_mut()[b] += delta;
                }
                loss(&m)
            };
            numeric.push((bump(h) - bump(-h)) / (2.0 * h));
        }
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = norm(&analytic) + norm(&numeric);
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        worst = worst.max(rel);
    }
    check(worst <= 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!("50 instances, max relative error {worst:.1e}"))
}

fn leaf_recall(est: &HierarchicalEstimator, docs: &[LabeledDocument]) -> f64 {
    let records: Vec<EvalRecord> = docs
        .iter()
        .map(|d| {
            let truth = vec![est.tree().lookup(&d.codes[0]).unwrap()];
            EvalRecord::new(est.estimate(&d.text), truth, 1.0).unwrap()
        })
        .collect();
    metrics::recall_at_k(&records, est.tree().level_count(), 1).unwrap()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let tree = tree_300();
    let spec = CorpusSpec {
        total_docs: 20_000,
        class_token_signal: 1.0,
        seed: 5,
        ..CorpusSpec::default()
    };
    let train = datagen::generate_corpus(&tree, &spec).unwrap();
    let test = datagen::generate_corpus(&tree, &CorpusSpec { total_docs: 2000, seed: 55, ..spec }).unwrap();
    let tfidf = fit_tfidf(&train);
    // the library default (1e-3) is too cautious for a 10-epoch budget
    let config = TrainConfig { learning_rate: 0.01, epochs: 10, seed: 5, ..TrainConfig::default() };
    let mut parts = Vec::new();
    let mut failed = false;
    for mode in [Mode::BottomUp, Mode::TopDown] {
        let t = Instant::now();
        let est = HierarchicalEstimator::train(mode, &tree, &train, &tfidf, &config).unwrap();
        let recall = leaf_recall(&est, &test);
        failed |= recall < 0.95;
        parts.push(format!("{mode} recall@1 {recall:.4} ({:.1}s)", t.elapsed().as_secs_f64()));
    }
    let elapsed = start.elapsed();
    let summary = format!("lr 0.01, 10 epochs: {}; total {:.1}s", parts.join(", "), elapsed.as_secs_f64());
    if failed || elapsed > Duration::from_secs(60) {
        Err(summary)
    } else {
        Ok(summary)
    }
}

fn criterion_6() -> Outcome {
    let tree = kzis::kzis_shaped_tree().unwrap();
    let total = 60_000;
    let s = datagen::tune_tail_exponent(tree.leaf_count(), total, 10, 1.0 / 3.0);
    let spec = CorpusSpec { total_docs: total, tail_exponent: s, seed: 6, ..CorpusSpec::default() };
    let docs = datagen::generate_corpus(&tree, &spec).unwrap();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        *counts.entry(d.codes[0].as_str()).or_default() += 1;
    }
    // leaves without any document count as rare too
    let rare = tree
        .leaf_codes()
        .iter()
        .filter(|c| counts.get(c.as_str()).copied().unwrap_or(0) < 10)
        .count();
    let share = rare as f64 / tree.leaf_count() as f64;
    let msg = format!("exponent {s:.3}: {:.1}% of {} leaves under 10 documents", 100.0 * share, tree.leaf_count());
    check((share - 1.0 / 3.0).abs() <= 0.10, msg.clone())?;
    Ok(msg)
}

fn criterion_7() -> Outcome {
    let tree = tree_300();
    let spec = CorpusSpec { total_docs: 4000, seed: 7, ..CorpusSpec::default() };
    let docs = datagen::generate_corpus(&tree, &spec).unwrap();
    let tfidf = fit_tfidf(&docs);
    let est = HierarchicalEstimator::train_bottom_up(&tree, &docs, &tfidf, &fast_config(3, 7)).unwrap();
    let test = datagen::generate_corpus(&tree, &CorpusSpec { total_docs: 500, seed: 77, ..spec }).unwrap();
    let records: Vec<EvalRecord> = test
        .iter()
        .map(|d| EvalRecord::new(est.estimate(&d.text), vec![tree.lookup(&d.codes[0]).unwrap()], 1.0).unwrap())
        .collect();
    for level in 1..=3 {
        // exact match of the per-level argmax, computed directly
        let hits = records
            .iter()
            .filter(|r| {
                let entries = r.profile.level(level).unwrap();
                let mut best = &entries[0];
                for e in entries {
                    if e.1 > best.1 {
                        best = e;
                    }
                }
                best.0 == r.true_codes[0].prefix(level)
            })
            .count();
        let accuracy = hits as f64 / records.len() as f64;
        let r1 = metrics::recall_at_k(&records, level, 1).unwrap();
        check((r1 - accuracy).abs() < 1e-12, format!("level {level}: recall@1 {r1} vs accuracy {accuracy}"))?;
        let mut prev = 0.0;
        for k in 1..=12 {
            let r = metrics::recall_at_k(&records, level, k).unwrap();
            check(r + 1e-15 >= prev, format!("level {level}: recall@{k} decreased"))?;
            prev = r;
        }
    }

    let kzis = kzis::kzis_shaped_tree().unwrap();
    let sizes = kzis.level_sizes();
    check(sizes == vec![10, 43, 134, 445, 2911], format!("KZiS level sizes {sizes:?}"))?;
    let uniform: Vec<Vec<(ClassCode, f64)>> = (1..=kzis.level_count())
        .map(|l| {
            let nodes = kzis.level_nodes(l).unwrap();
            let p = 1.0 / nodes.len() as f64;
            nodes.into_iter().map(|c| (c, p)).collect()
        })
        .collect();
    let profile = ProbabilityProfile::from_levels(uniform);
    let truth = vec![kzis.leaf_codes()[1234].clone()];
    let records = vec![EvalRecord::new(profile, truth, 1.0).unwrap()];
    for (l, &size) in sizes.iter().enumerate() {
        let loss = metrics::level_log_loss(&records, l + 1).unwrap();
        check(
            (loss - (size as f64).ln()).abs() <= 1e-9,
            format!("uniform log loss at level {} is {loss}", l + 1),
        )?;
    }
    Ok("recall@1 = accuracy, recall@k monotone, uniform loss = ln(size), sizes 10/43/134/445/2911".into())
}

fn criterion_8() -> Outcome {
    let counts = vec![vec![20, 5], vec![10, 15]];
    let table = CoderTable::from_counts(&["1", "2"], &counts, vec![1]);
    let kappa = metrics::cohens_kappa(&table, 1).unwrap();
    // direct formula on the 2x2 table
    let n = 50.0;
    let po = (20.0 + 15.0) / n;
    let pe = (25.0 / n) * (30.0 / n) + (25.0 / n) * (20.0 / n);
    let oracle = (po - pe) / (1.0 - pe);
    check((kappa - oracle).abs() <= 1e-12 && (kappa - 0.4).abs() <= 1e-12, format!("kappa {kappa}"))?;

    let perfect = CoderTable::from_counts(&["1", "2", "3"], &[vec![7, 0, 0], vec![0, 4, 0], vec![0, 0, 9]], vec![1]);
    let k1 = metrics::cohens_kappa(&perfect, 1).unwrap();
    check((k1 - 1.0).abs() <= 1e-12, format!("perfect agreement kappa {k1}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs = (0..10_000)
        .map(|_| metrics::CoderPair {
            coder_a: rng.random_range(0..10).to_string(),
            coder_b: rng.random_range(0..10).to_string(),
            weight: 1.0,
        })
        .collect();
    let independent = metrics::cohens_kappa(&CoderTable::new(pairs, vec![1]), 1).unwrap();
    check(independent.abs() < 0.05, format!("independent coders kappa {independent}"))?;
    Ok(format!("kappa {kappa:.12}, perfect {k1}, independent {independent:.4}"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sizes: Vec<usize> = (0..1000).map(|_| rng.random_range(1..=120)).collect();
    let mut docs = Vec::new();
    for (h, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            docs.push(LabeledDocument::new(format!("s{h}-{i}"), "text", format!("{h:04}")));
        }
    }
    let key = StrataKey::parse("code").unwrap();
    let sample = sampling::stratified_sample(&docs, &key, 0.2, 9).unwrap();
    let mut drawn: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &sample.documents {
        *drawn.entry(d.codes[0].as_str()).or_default() += 1;
    }
    for (h, &n) in sizes.iter().enumerate() {
        // integer form of max(1, round_half_up(0.2 n))
        let expected = ((2 * n + 5) / 10).max(1);
        let got = drawn.get(format!("{h:04}").as_str()).copied().unwrap_or(0);
        check(got == expected, format!("stratum of {n}: drew {got}, expected {expected}"))?;
    }

    // split: singleton strata go to test, a dictionary source covers every leaf
    let tree = tree_300();
    let spec = CorpusSpec { total_docs: 1500, tail_exponent: 1.3, seed: 9, ..CorpusSpec::default() };
    let mut corpus = datagen::generate_corpus(&tree, &spec).unwrap();
    for leaf in tree.leaf_codes() {
        corpus.push(LabeledDocument::new(format!("dict-{leaf}"), format!("entry {leaf}"), leaf.as_str()).with_source("dictionary"));
    }
    let always: BTreeSet<String> = ["dictionary".to_string()].into();
    let split = sampling::train_test_split(&corpus, &always, 0.7, 9).unwrap();
    let mut per_code: BTreeMap<&str, usize> = BTreeMap::new();
    for d in corpus.iter().filter(|d| d.source != "dictionary") {
        *per_code.entry(d.codes[0].as_str()).or_default() += 1;
    }
    let test_ids: BTreeSet<&str> = split.test.iter().map(|d| d.id.as_str()).collect();
    let singletons: Vec<&LabeledDocument> = corpus
        .iter()
        .filter(|d| d.source != "dictionary" && per_code[d.codes[0].as_str()] == 1)
        .collect();
    check(!singletons.is_empty(), "corpus has no singleton strata")?;
    for d in &singletons {
        check(test_ids.contains(d.id.as_str()), format!("singleton {} not in test", d.id))?;
    }
    let covered: BTreeSet<&str> = split.train.iter().map(|d| d.codes[0].as_str()).collect();
    check(covered.len() == tree.leaf_count(), format!("train covers {} leaves", covered.len()))?;
    check(split.train.len() + split.test.len() == corpus.len(), "split lost documents")?;
    Ok(format!(
        "1000 strata exact; {} singletons in test; train covers all {} leaves",
        singletons.len(),
        tree.leaf_count()
    ))
}

fn criterion_10() -> Outcome {
    let tree = tree_300();
    let mut runs = 0;
    for seed in [10u64, 20, 30] {
        let spec = CorpusSpec { total_docs: 3000, multi_code_rate: 0.1, seed, ..CorpusSpec::default() };
        let docs = datagen::generate_corpus(&tree, &spec).unwrap();
        let mut test = datagen::generate_corpus(&tree, &CorpusSpec { total_docs: 400, seed: seed + 1, ..spec }).unwrap();
        for (i, d) in test.iter_mut().enumerate() {
            d.source = ["ads", "survey"][i % 2].to_string();
        }
        let tfidf = fit_tfidf(&docs);
        for mode in [Mode::BottomUp, Mode::TopDown] {
            let est = HierarchicalEstimator::train(mode, &tree, &docs, &tfidf, &fast_config(2, seed)).unwrap();
            for decode in [DecodeMode::LeafArgmax, DecodeMode::Greedy] {
                let rep = report::evaluate(&est, &test, decode).map_err(|e| format!("{mode}/{decode}: {e}"))?;
                for slice in &rep.slices {
                    let acc: Vec<f64> = slice.levels.iter().map(|l| l.path_accuracy).collect();
                    check(acc.windows(2).all(|w| w[1] <= w[0]), format!("{}: {acc:?}", slice.name))?;
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} evaluation runs, accuracy non-increasing with depth in every slice"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("coherency", criterion_1),
        ("bottom-up equals flat softmax", criterion_2),
        ("top-down chain rule", criterion_3),
        ("gradient check", criterion_4),
        ("separable learning", criterion_5),
        ("long-tail shape", criterion_6),
        ("metric identities", criterion_7),
        ("kappa oracle", criterion_8),
        ("sampling formula and split", criterion_9),
        ("path monotonicity", criterion_10),
    ];
    let limits = [(1usize, Duration::from_secs(30))];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limits.iter().find(|(c, _)| *c == n)) {
            (Ok(msg), Some((_, limit))) if elapsed > *limit => Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS  {name}: {msg} [{:.2}s]", elapsed.as_secs_f64()),
            Err(msg) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {msg} [{:.2}s]", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
