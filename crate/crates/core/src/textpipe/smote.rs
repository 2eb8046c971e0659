use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, SparseRow};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Parents of one synthetic row: `row = base + u·(neighbor − base)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SyntheticOrigin<T> {
    pub row: usize,
    pub base: usize,
    pub neighbor: usize,
    pub u: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Oversampled<T> {
    pub matrix: FeatureMatrix<T>,
    pub log: Vec<SyntheticOrigin<T>>,
}

/// Indices of the `k` nearest rows (Euclidean) to `of` among `members`,
/// excluding itself. Ties resolve to the lower row index.
fn nearest<T: Scalar>(rows: &[SparseRow<T>], members: &[usize], of: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(T, usize)> = members
        .iter()
        .filter(|&&m| m != of)
        .map(|&m| (rows[of].sq_distance(&rows[m]), m))
        .collect();
    d.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    d.truncate(k);
    d.into_iter().map(|(_, m)| m).collect()
}

/// Synthetic minority oversampling.
///
/// Every class below the majority count gets synthetic rows interpolated
/// between a random member and one of its `k` nearest same-class neighbours
/// (`k` clamped to class size − 1) until it matches the majority. Original
/// rows keep their positions; synthetic rows are appended class by class.
pub fn oversample<T: Scalar>(matrix: &FeatureMatrix<T>, k: usize, seed: u64) -> Result<Oversampled<T>> {
    let labels = matrix
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("oversampling needs labeled rows".into()))?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        classes.entry(c).or_default().push(i);
    }
    let majority = classes.values().map(Vec::len).max().unwrap_or(0);

    let mut out = matrix.clone();
    let mut out_labels = labels.clone();
    let mut log = Vec::new();
    for (&class, members) in &classes {
        let need = majority - members.len();
        if need == 0 {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::SingletonClass(class.to_string()));
        }
        let k_eff = k.min(members.len() - 1);
        let neighbours: Vec<Vec<usize>> = members
            .par_iter()
            .map(|&m| nearest(&matrix.rows, members, m, k_eff))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        for _ in 0..need {
            let pick = rng.gen_range(0..members.len());
            let base = members[pick];
            let neighbor = neighbours[pick][rng.gen_range(0..k_eff)];
            let u = T::from_f64(rng.gen::<f64>()).expect("finite");
            let x = &matrix.rows[base];
            let row = x.zip_with(&matrix.rows[neighbor], |a, b| a + u * (b - a));
            log.push(SyntheticOrigin {
                row: out.rows.len(),
                base,
                neighbor,
                u,
            });
            out.rows.push(row);
            out_labels.push(class);
        }
    }
    out.labels = Some(out_labels);
    Ok(Oversampled { matrix: out, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(classes: &[(usize, usize)]) -> FeatureMatrix<f64> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for &(class, n) in classes {
            for i in 0..n {
                rows.push(SparseRow::from_pairs(vec![
                    (class as u32, 1.0),
                    (10 + (i % 7) as u32, 0.5 + i as f64 / 100.0),
                ]));
                labels.push(class);
            }
        }
        FeatureMatrix {
            n_cols: 20,
            rows,
            labels: Some(labels),
        }
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let m = matrix(&[(0, 5), (1, 5)]);
        let o = oversample(&m, 5, 1).unwrap();
        assert_eq!(o.matrix, m);
        assert!(o.log.is_empty());
    }

    #[test]
    fn counts_match_majority() {
        let m = matrix(&[(0, 100), (1, 20)]);
        let o = oversample(&m, 5, 9).unwrap();
        let labels = o.matrix.labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&c| c == 0).count(), 100);
        assert_eq!(labels.iter().filter(|&&c| c == 1).count(), 100);
        assert_eq!(&o.matrix.rows[..120], &m.rows[..]);
    }

    #[test]
    fn singleton_class_is_named() {
        let m = matrix(&[(0, 4), (3, 1)]);
        match oversample(&m, 5, 1) {
            Err(Error::SingletonClass(c)) => assert_eq!(c, "3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn synthetic_rows_lie_on_parent_segments() {
        let m = matrix(&[(0, 30), (1, 6), (2, 3)]);
        let o = oversample(&m, 2, 4).unwrap();
        for s in &o.log {
            assert!((0.0..=1.0).contains(&s.u));
            let x = m.rows[s.base].to_dense(20);
            let nn = m.rows[s.neighbor].to_dense(20);
            let got = o.matrix.rows[s.row].to_dense(20);
            for c in 0..20 {
                assert!((got[c] - (x[c] + s.u * (nn[c] - x[c]))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        let rows = vec![
            SparseRow::<f64>::from_pairs(vec![(0, 1.0)]),
            SparseRow::from_pairs(vec![(0, 2.0)]),
            SparseRow::from_pairs(vec![(0, 0.0)]),
        ];
        assert_eq!(nearest(&rows, &[0, 1, 2], 0, 1), vec![1]);
    }
}
