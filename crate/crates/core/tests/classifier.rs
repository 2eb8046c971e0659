mod common;

use forumstrat::classifier::{
    binary_gradient, binary_objective, repeated_holdout, stratified_split, train, HoldoutConfig, Loss, Stratify,
    TrainConfig,
};
use forumstrat::textpipe::{fit_transform, Document, FeatureMatrix, Preprocessor, SparseRow, TfidfConfig};
use forumstrat::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: u32) -> Vec<SparseRow<f64>> {
    (0..n)
        .map(|_| {
            let mut pairs = Vec::new();
            for j in 0..dim {
                if rng.gen_bool(0.3) {
                    pairs.push((j, rng.gen_range(-1.0..1.0)));
                }
            }
            SparseRow::from_pairs(pairs)
        })
        .collect()
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dim = 30;
    let rows = random_rows(&mut rng, 50, dim);
    let targets: Vec<f64> = (0..50).map(|_| if rng.gen_bool(0.4) { 1.0 } else { -1.0 }).collect();
    let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let b = 0.1;
    let lambda = 1e-2;
    let (gw, gb) = binary_gradient(&w, b, &rows, &targets, lambda);
    let h = 1e-6;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
    for _ in 0..10 {
        let j = rng.gen_range(0..dim as usize);
        let mut plus = w.clone();
        let mut minus = w.clone();
        plus[j] += h;
        minus[j] -= h;
        let fd = (binary_objective(&plus, b, &rows, &targets, lambda)
            - binary_objective(&minus, b, &rows, &targets, lambda))
            / (2.0 * h);
        assert!(rel(gw[j], fd) < 1e-5, "coordinate {j}: analytic {} vs numeric {fd}", gw[j]);
    }
    let fd = (binary_objective(&w, b + h, &rows, &targets, lambda) - binary_objective(&w, b - h, &rows, &targets, lambda))
        / (2.0 * h);
    assert!(rel(gb, fd) < 1e-5, "bias: analytic {gb} vs numeric {fd}");
}

fn two_topic_docs() -> Vec<Document> {
    (0..40)
        .map(|i| {
            let (label, words) = if i % 2 == 0 {
                (0, "crypter stub payload builder")
            } else {
                (1, "skin trade game match")
            };
            Document::compose(format!("p{i}"), words, "thread", "board", Some(label))
        })
        .collect()
}

#[test]
fn separable_documents_trained_to_full_accuracy() {
    let docs = two_topic_docs();
    let pre = Preprocessor::english();
    let (_, m) = fit_transform::<f64>(&docs, TfidfConfig::default(), &pre).unwrap();
    let classes = vec!["malware".to_owned(), "games".to_owned()];
    for loss in [Loss::Hinge, Loss::Logistic] {
        let model = train(&m, &classes, &TrainConfig { loss, ..TrainConfig::default() }).unwrap();
        assert_eq!(&model.predict(&m).unwrap().classes, m.labels.as_ref().unwrap());
    }
}

#[test]
fn rescaled_rows_keep_argmax_with_scaled_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = random_rows(&mut rng, 60, 20);
    let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let m = FeatureMatrix {
        n_cols: 20,
        rows,
        labels: Some(labels),
    };
    let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let base = TrainConfig {
        lambda: 0.0,
        ..TrainConfig::default()
    };
    let model = train(&m, &classes, &base).unwrap();
    let c = 4.0;
    // With λ = 0 and η/c, each weight step η·y·x is unchanged; only the
    // bias-to-margin balance moves, so the argmax should mostly survive.
    let scaled = m.scaled(c);
    let cfg = TrainConfig {
        learning_rate: base.learning_rate / c,
        ..base
    };
    let model_scaled = train(&scaled, &classes, &cfg).unwrap();
    let p1 = model.predict(&m).unwrap().classes;
    let p2 = model_scaled.predict(&scaled).unwrap().classes;
    let agree = p1.iter().zip(&p2).filter(|(a, b)| a == b).count();
    assert!(agree as f64 >= 0.9 * p1.len() as f64, "argmax agreement {agree}/{}", p1.len());
}

#[test]
fn holdout_split_arithmetic() {
    // 100 docs in two strata of 60 and 40.
    let keys: Vec<usize> = (0..100).map(|i| usize::from(i % 5 < 2)).collect();
    let (train, test) = stratified_split(&keys, 0.8, 7).unwrap();
    assert_eq!(train.len(), 80);
    assert_eq!(test.len(), 20);
    for k in 0..2 {
        let total = keys.iter().filter(|&&x| x == k).count() as f64;
        let in_train = train.iter().filter(|&&i| keys[i] == k).count() as f64;
        assert!((in_train - 0.8 * total).abs() <= 1.0);
    }
}

#[test]
fn thirty_seed_holdout_covers_every_class_in_training() {
    let cfg = forumstrat::synth::SynthConfig::default();
    let data = common::synth_population(&cfg);
    let cv = forumstrat::centrality::post_degree::<f64>(&data.pop);
    let dist = forumstrat::strata::merge_bins(&forumstrat::strata::induce(&data.pop, &cv).unwrap(), 600).unwrap();
    let spec = forumstrat::strata::SampleSpec::new(forumstrat::strata::Strategy::Proportional, 600, 1);
    let sample = forumstrat::strata::sample(&data.pop, &dist, &spec).unwrap();
    let docs = forumstrat::pipeline::sample_documents(&data.pop, &sample.entries, &data.labels).unwrap();
    let seeds: Vec<u64> = (100..130).collect();
    let runs = repeated_holdout::<f64>(
        &docs,
        &data.classes,
        &Stratify::ClassDistribution,
        &seeds,
        &HoldoutConfig::default(),
        &Preprocessor::english(),
    )
    .unwrap();
    assert_eq!(runs.len(), 30);
    for run in &runs {
        let mut seen = vec![false; data.classes.len()];
        for &i in &run.train {
            seen[docs[i].label.unwrap()] = true;
        }
        assert!(seen.iter().all(|&s| s), "seed {}: a class is missing from training", run.seed);
        assert_eq!(run.train.len() + run.test.len(), docs.len());
    }
}

#[test]
fn holdout_names_small_stratum() {
    let mut docs = two_topic_docs();
    docs[0].label = Some(2);
    let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let err = repeated_holdout::<f64>(
        &docs,
        &classes,
        &Stratify::ClassDistribution,
        &[1],
        &HoldoutConfig::default(),
        &Preprocessor::english(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::StratumTooSmall { ref stratum, size: 1 } if stratum == "class 2"), "{err}");
}

#[test]
fn holdout_by_bins_checks_alignment() {
    let docs = two_topic_docs();
    let classes = vec!["a".to_owned(), "b".to_owned()];
    let err = repeated_holdout::<f64>(
        &docs,
        &classes,
        &Stratify::CentralityBins(vec![0; 3]),
        &[1],
        &HoldoutConfig::default(),
        &Preprocessor::english(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::LengthMismatch { .. }));
    let bins: Vec<usize> = (0..docs.len()).map(|i| i % 4 / 2).collect();
    let runs = repeated_holdout::<f64>(
        &docs,
        &classes,
        &Stratify::CentralityBins(bins),
        &[1, 2],
        &HoldoutConfig::default(),
        &Preprocessor::english(),
    )
    .unwrap();
    assert_eq!(runs.len(), 2);
}
