use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Document, Preprocessor};
use crate::error::{Error, Result};
use crate::num::{count, Scalar};

/// Sparse vector with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SparseRow<T> {
    pub idx: Vec<u32>,
    pub val: Vec<T>,
}

impl<T: Scalar> SparseRow<T> {
    pub fn from_pairs(mut pairs: Vec<(u32, T)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let (idx, val) = pairs.into_iter().unzip();
        SparseRow { idx, val }
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.idx.iter().map(|&i| i as usize).zip(self.val.iter().copied())
    }

    pub fn norm(&self) -> T {
        self.val.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[T]) -> T {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// Value at a column, zero when absent.
    pub fn get(&self, col: usize) -> T {
        match self.idx.binary_search(&(col as u32)) {
            Ok(k) => self.val[k],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self, n_cols: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_cols];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Merges two rows column-wise with `f(a, b)`; absent entries are zero.
    /// Zero results are dropped.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let (mut i, mut j) = (0, 0);
        let mut out = SparseRow::default();
        let mut push = |c: u32, v: T| {
            if v != T::zero() {
                out.idx.push(c);
                out.val.push(v);
            }
        };
        while i < self.idx.len() || j < other.idx.len() {
            let a = self.idx.get(i).copied().unwrap_or(u32::MAX);
            let b = other.idx.get(j).copied().unwrap_or(u32::MAX);
            if a == b {
                push(a, f(self.val[i], other.val[j]));
                i += 1;
                j += 1;
            } else if a < b {
                push(a, f(self.val[i], T::zero()));
                i += 1;
            } else {
                push(b, f(T::zero(), other.val[j]));
                j += 1;
            }
        }
        out
    }

    pub fn sq_distance(&self, other: &Self) -> T {
        let (mut i, mut j) = (0, 0);
        let mut acc = T::zero();
        while i < self.idx.len() || j < other.idx.len() {
            let a = self.idx.get(i).copied().unwrap_or(u32::MAX);
            let b = other.idx.get(j).copied().unwrap_or(u32::MAX);
            let d = if a == b {
                let d = self.val[i] - other.val[j];
                i += 1;
                j += 1;
                d
            } else if a < b {
                i += 1;
                self.val[i - 1]
            } else {
                j += 1;
                other.val[j - 1]
            };
            acc += d * d;
        }
        acc
    }

    pub fn scale(&mut self, factor: T) {
        self.val.iter_mut().for_each(|v| *v *= factor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    /// Tokens in fewer documents than this are dropped.
    pub min_df: usize,
    /// Keep only the most document-frequent tokens.
    pub max_features: Option<usize>,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_df: 2,
            max_features: None,
        }
    }
}

/// Fitted vocabulary and inverse document frequencies.
///
/// Tokens are ordered lexicographically, so column `i` is the `i`-th token.
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VectorSpace<T> {
    tokens: Vec<String>,
    idf: Vec<T>,
    n_docs: usize,
    config: TfidfConfig,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl<T: Scalar> VectorSpace<T> {
    fn new(tokens: Vec<String>, idf: Vec<T>, n_docs: usize, config: TfidfConfig) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        VectorSpace {
            tokens,
            idf,
            n_docs,
            config,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<T> {
        self.column(token).map(|c| self.idf[c])
    }

    pub fn fitted_documents(&self) -> usize {
        self.n_docs
    }

    pub fn config(&self) -> TfidfConfig {
        self.config
    }

    /// SHA-256 over the tokens in column order, hex encoded.
    pub fn vocabulary_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: VectorSpace<T> = serde_json::from_str(s)?;
        if v.idf.len() != v.tokens.len() {
            return Err(Error::InvalidConfig("idf and vocabulary lengths differ".into()));
        }
        Ok(Self::new(v.tokens, v.idf, v.n_docs, v.config))
    }

    /// tf·idf row of a token list, L2-normalized. Unknown tokens are ignored.
    pub fn vectorize(&self, tokens: &[String]) -> SparseRow<T> {
        let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(c) = self.column(t) {
                *tf.entry(c).or_default() += 1;
            }
        }
        let mut row = SparseRow {
            idx: tf.keys().map(|&c| c as u32).collect(),
            val: tf.iter().map(|(&c, &n)| count::<T>(n) * self.idf[c]).collect(),
        };
        let norm = row.norm();
        if norm > T::zero() {
            row.scale(T::one() / norm);
        }
        row
    }

    /// Vectorizes documents against this space; labels are carried over when
    /// every document has one.
    pub fn transform(&self, docs: &[Document], pre: &Preprocessor) -> FeatureMatrix<T> {
        let rows = docs
            .par_iter()
            .map(|d| self.vectorize(&pre.tokens(&d.text)))
            .collect();
        FeatureMatrix {
            n_cols: self.len(),
            rows,
            labels: docs.iter().map(|d| d.label).collect(),
        }
    }
}

/// Row-aligned sparse features with optional class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureMatrix<T> {
    pub n_cols: usize,
    pub rows: Vec<SparseRow<T>>,
    pub labels: Option<Vec<usize>>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends `extra` all-zero columns.
    pub fn pad_columns(&self, extra: usize) -> Self {
        FeatureMatrix {
            n_cols: self.n_cols + extra,
            ..self.clone()
        }
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.rows.iter_mut().for_each(|r| r.scale(factor));
        out
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        FeatureMatrix {
            n_cols: self.n_cols,
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }
}

/// Fits a vector space on `docs` and vectorizes them.
pub fn fit_transform<T: Scalar>(
    docs: &[Document],
    config: TfidfConfig,
    pre: &Preprocessor,
) -> Result<(VectorSpace<T>, FeatureMatrix<T>)> {
    let tokenized: Vec<Vec<String>> = docs.par_iter().map(|d| pre.tokens(&d.text)).collect();
    if tokenized.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for toks in &tokenized {
        let mut seen: Vec<&str> = toks.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df
        .into_iter()
        .filter(|&(_, n)| n >= config.min_df.max(1))
        .collect();
    if let Some(k) = config.max_features {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        kept.truncate(k);
        kept.sort_by(|a, b| a.0.cmp(b.0));
    }
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary {
            min_df: config.min_df,
        });
    }
    let n = docs.len();
    let idf = kept
        .iter()
        .map(|&(_, d)| (count::<T>(1 + n) / count::<T>(1 + d)).ln() + T::one())
        .collect();
    let tokens = kept.into_iter().map(|(t, _)| t.to_owned()).collect();
    let space = VectorSpace::new(tokens, idf, n, config);
    let rows = tokenized.par_iter().map(|t| space.vectorize(t)).collect();
    let matrix = FeatureMatrix {
        n_cols: space.len(),
        rows,
        labels: docs.iter().map(|d| d.label).collect(),
    };
    Ok((space, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document {
            post_id: text.into(),
            text: text.into(),
            label: None,
        }
    }

    const ALL: TfidfConfig = TfidfConfig {
        min_df: 1,
        max_features: None,
    };

    #[test]
    fn single_document_hand_computed() {
        let pre = Preprocessor::english();
        let (space, m) = fit_transform::<f64>(&[doc("alpha alpha beta")], ALL, &pre).unwrap();
        assert_eq!(space.tokens(), &["alpha", "beta"]);
        // N = 1, df = 1 for both: idf = ln(2/2) + 1 = 1, so the row is (2,1)/sqrt(5).
        assert_eq!(space.idf("alpha"), Some(1.0));
        let row = &m.rows[0];
        assert!((row.get(0) - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((row.get(1) - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((row.get(0) - 0.894).abs() < 5e-4);
        assert!((row.get(1) - 0.447).abs() < 5e-4);
    }

    #[test]
    fn idf_formula() {
        let pre = Preprocessor::english();
        let docs = [doc("alpha beta"), doc("alpha gamma"), doc("alpha")];
        let (space, _) = fit_transform::<f64>(&docs, ALL, &pre).unwrap();
        assert!((space.idf("alpha").unwrap() - 1.0).abs() < 1e-15);
        let expect = (4.0f64 / 2.0).ln() + 1.0;
        assert!((space.idf("beta").unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn min_df_and_max_features() {
        let pre = Preprocessor::english();
        let docs = [doc("alpha beta"), doc("alpha gamma"), doc("alpha beta delta")];
        let (space, _) = fit_transform::<f64>(&docs, TfidfConfig::default(), &pre).unwrap();
        assert_eq!(space.tokens(), &["alpha", "beta"]);
        let cfg = TfidfConfig {
            min_df: 1,
            max_features: Some(1),
        };
        let (space, _) = fit_transform::<f64>(&docs, cfg, &pre).unwrap();
        assert_eq!(space.tokens(), &["alpha"]);
    }

    #[test]
    fn empty_corpus_errors() {
        let pre = Preprocessor::english();
        assert!(matches!(
            fit_transform::<f64>(&[doc("the of"), doc("")], ALL, &pre),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            fit_transform::<f64>(&[doc("alpha"), doc("beta")], TfidfConfig::default(), &pre),
            Err(Error::EmptyVocabulary { .. })
        ));
    }

    #[test]
    fn unseen_tokens_are_ignored_and_rows_are_unit() {
        let pre = Preprocessor::english();
        let (space, m) =
            fit_transform::<f64>(&[doc("alpha beta"), doc("beta gamma")], ALL, &pre).unwrap();
        for r in &m.rows {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
        let t = space.transform(&[doc("zeta omega"), doc("alpha zeta")], &pre);
        assert_eq!(t.rows[0].nnz(), 0);
        assert_eq!(t.rows[1].idx, vec![0]);
    }

    #[test]
    fn refit_is_identical_and_json_roundtrips() {
        let pre = Preprocessor::english();
        let docs = [doc("alpha beta"), doc("beta gamma"), doc("gamma alpha alpha")];
        let (a, _) = fit_transform::<f64>(&docs, ALL, &pre).unwrap();
        let (b, _) = fit_transform::<f64>(&docs, ALL, &pre).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vocabulary_hash(), b.vocabulary_hash());
        let back = VectorSpace::<f64>::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.column("gamma"), Some(2));
    }

    #[test]
    fn sparse_ops() {
        let a = SparseRow::<f64>::from_pairs(vec![(3, 1.0), (1, 2.0)]);
        let b = SparseRow::<f64>::from_pairs(vec![(1, 1.0), (5, 4.0)]);
        assert_eq!(a.idx, vec![1, 3]);
        assert_eq!(a.sq_distance(&b), 1.0 + 1.0 + 16.0);
        let d = a.zip_with(&b, |x, y| x - y);
        assert_eq!(d.idx, vec![1, 3, 5]);
        assert_eq!(d.val, vec![1.0, 1.0, -4.0]);
    }
}
