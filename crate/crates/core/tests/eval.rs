use forumstrat::eval::{
    agreement, agresti_coull, aggregate, disagreement_sample, geometric_mean, precision_recall, DEFAULT_Z,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn gmean_below_arithmetic_mean(v in prop::collection::vec(1e-6f64..1.0, 1..20)) {
        let g = geometric_mean(&v).unwrap();
        let a = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!(g <= a * (1.0 + 1e-12));
        prop_assert!(g >= v.iter().cloned().fold(f64::INFINITY, f64::min) * (1.0 - 1e-12));
    }

    #[test]
    fn intervals_shrink_with_n(p in 0.05f64..0.95, n in 10u64..5000) {
        let width = |n: u64| {
            let x = (p * n as f64).round() as u64;
            let (lo, hi) = agresti_coull(x, n, DEFAULT_Z).unwrap();
            prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
            Ok(hi - lo)
        };
        prop_assert!(width(4 * n)? < width(n)?);
    }

    #[test]
    fn agreement_counts_cover_population(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..400),
    ) {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let r = agreement::<f64>(&a, &b, 4, DEFAULT_Z).unwrap();
        let agree: u64 = r.per_class.iter().map(|c| c.agree).sum();
        let single: u64 = r.per_class.iter().map(|c| c.only_a + c.only_b).sum();
        prop_assert_eq!(2 * agree + single, 2 * a.len() as u64);
        prop_assert_eq!(r.population, a.len());
    }

    #[test]
    fn precision_recall_matches_confusion_matrix(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 1..300),
    ) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let mut cm = [[0usize; 3]; 3];
        for (&t, &p) in truth.iter().zip(&pred) {
            cm[t][p] += 1;
        }
        let r = precision_recall::<f64>(&truth, &pred, 3).unwrap();
        for c in 0..3 {
            let col: usize = (0..3).map(|t| cm[t][c]).sum();
            let row: usize = cm[c].iter().sum();
            let p = if col == 0 { 0.0 } else { cm[c][c] as f64 / col as f64 };
            let rc = if row == 0 { 0.0 } else { cm[c][c] as f64 / row as f64 };
            prop_assert!((r.per_class[c].precision - p).abs() < 1e-15);
            prop_assert!((r.per_class[c].recall - rc).abs() < 1e-15);
            prop_assert_eq!(r.included.contains(&c), row > 0);
        }
    }
}

#[test]
fn aggregate_takes_geometric_means_twice() {
    let r1 = precision_recall::<f64>(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
    let r2 = precision_recall::<f64>(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap();
    let agg = aggregate(&[r1.clone(), r2.clone()]).unwrap();
    let p0 = (r1.per_class[0].precision * r2.per_class[0].precision).sqrt();
    let p1 = (r1.per_class[1].precision * r2.per_class[1].precision).sqrt();
    assert!((agg.precision[0] - p0).abs() < 1e-15);
    assert!((agg.gmean_precision - (p0 * p1).sqrt()).abs() < 1e-15);
    assert_eq!(agg.runs, 2);
}

#[test]
fn disagreement_draws_are_disjoint_and_reproducible() {
    let a: Vec<usize> = (0..2000).map(|i| i % 3).collect();
    let b: Vec<usize> = (0..2000).map(|i| (i / 3) % 3).collect();
    let s = disagreement_sample(&a, &b, 3, 50, 4).unwrap();
    assert_eq!(s, disagreement_sample(&a, &b, 3, 50, 4).unwrap());
    let pos = s.positions();
    let mut uniq = pos.clone();
    uniq.sort_unstable();
    uniq.dedup();
    assert_eq!(uniq.len(), pos.len());
    for (class, picks) in &s.per_class {
        assert!(picks.iter().all(|&i| (a[i] == *class) != (b[i] == *class)));
    }
    assert!(s.shortfalls.is_empty());
    let few = disagreement_sample(&a[..12], &b[..12], 3, 50, 4).unwrap();
    assert_eq!(few.shortfalls.len(), 3);
}
