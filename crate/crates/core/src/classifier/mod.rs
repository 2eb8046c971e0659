//! One-vs-rest linear classifiers trained by seeded SGD.

mod holdout;

pub use holdout::{repeated_holdout, stratified_split, HoldoutConfig, HoldoutRun, Stratify};

use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{count, lit, Scalar};
use crate::textpipe::{FeatureMatrix, SparseRow};

const MODEL_FORMAT: &str = "forumstrat-linear";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Hinge,
    Logistic,
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hinge" => Ok(Loss::Hinge),
            "logistic" | "log" => Ok(Loss::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Initial step size η₀; step `t` uses `η₀ / (1 + η₀·λ·t)`.
    pub learning_rate: f64,
    /// L2 penalty λ on the weights (the bias is not penalized).
    pub lambda: f64,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.1,
            lambda: 1e-4,
            loss: Loss::Hinge,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Class ids and per-class scores for each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub classes: Vec<usize>,
    pub scores: Vec<Vec<T>>,
}

/// Interface shared by trainable classifiers.
pub trait Classifier<T: Scalar>: Sized + Send + Sync {
    fn fit(matrix: &FeatureMatrix<T>, classes: &[String], config: &TrainConfig) -> Result<Self>;

    fn predict(&self, matrix: &FeatureMatrix<T>) -> Result<Prediction<T>>;

    fn write_to(&self, out: &mut dyn Write) -> Result<()>;

    fn read_from(input: &mut dyn BufRead) -> Result<Self>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    pub classes: Vec<String>,
    /// One weight vector per class, each of length `dim`.
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub config: TrainConfig,
    /// Hash of the vector space the model was trained in, if known.
    pub vocabulary_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    scalar: String,
    classes: Vec<String>,
    config: TrainConfig,
    vocabulary_hash: Option<String>,
    dim: usize,
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `-dℓ/dm` for margin `m = y·(w·x + b)`, times `y`.
fn loss_slope<T: Scalar>(loss: Loss, y: T, margin: T) -> T {
    match loss {
        Loss::Hinge => {
            if margin < T::one() {
                y
            } else {
                T::zero()
            }
        }
        Loss::Logistic => y * sigmoid(-margin),
    }
}

/// Trains one binary separator; `w` is kept as `scale · v` so the L2 shrink
/// costs O(1) per step.
fn train_binary<T: Scalar>(
    rows: &[SparseRow<T>],
    targets: &[T],
    dim: usize,
    config: &TrainConfig,
    stream: u64,
) -> (Vec<T>, T) {
    let mut v = vec![T::zero(); dim];
    let mut scale = T::one();
    let mut b = T::zero();
    let eta0 = lit::<T>(config.learning_rate);
    let lambda = lit::<T>(config.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = eta0 / (T::one() + eta0 * lambda * count::<T>(t));
            t += 1;
            let x = &rows[i];
            let y = targets[i];
            let margin = y * (scale * x.dot_dense(&v) + b);
            let g = loss_slope(config.loss, y, margin);
            scale *= T::one() - eta * lambda;
            if scale < lit(1e-9) {
                for w in &mut v {
                    *w *= scale;
                }
                scale = T::one();
            }
            if g != T::zero() {
                let step = eta * g / scale;
                for (j, xv) in x.iter() {
                    v[j] += step * xv;
                }
                b += eta * g;
            }
        }
    }
    for w in &mut v {
        *w *= scale;
    }
    (v, b)
}

/// Mean logistic loss plus `λ/2·‖w‖²` for ±1 targets.
pub fn binary_objective<T: Scalar>(w: &[T], b: T, rows: &[SparseRow<T>], targets: &[T], lambda: T) -> T {
    let n = count::<T>(rows.len());
    let data: T = rows
        .iter()
        .zip(targets)
        .map(|(x, &y)| {
            let m = y * (x.dot_dense(w) + b);
            // ln(1 + e^{-m}) without overflow.
            if m > T::zero() {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        })
        .sum::<T>()
        / n;
    data + lambda / lit(2.0) * w.iter().map(|&v| v * v).sum::<T>()
}

/// Analytic gradient of [`binary_objective`] with respect to `(w, b)`.
pub fn binary_gradient<T: Scalar>(
    w: &[T],
    b: T,
    rows: &[SparseRow<T>],
    targets: &[T],
    lambda: T,
) -> (Vec<T>, T) {
    let n = count::<T>(rows.len());
    let mut gw: Vec<T> = w.iter().map(|&v| lambda * v).collect();
    let mut gb = T::zero();
    for (x, &y) in rows.iter().zip(targets) {
        let m = y * (x.dot_dense(w) + b);
        let c = -y * sigmoid(-m) / n;
        for (j, xv) in x.iter() {
            gw[j] += c * xv;
        }
        gb += c;
    }
    (gw, gb)
}

/// Trains a one-vs-rest model over `classes`; row labels index into it.
pub fn train<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    classes: &[String],
    config: &TrainConfig,
) -> Result<LinearModel<T>> {
    config.validate()?;
    let labels = matrix
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("training needs labeled rows".into()))?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::UnknownClass(bad.to_string()));
    }
    let mut present: Vec<usize> = labels.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::TooFewClasses(present.len()));
    }
    let (weights, bias): (Vec<Vec<T>>, Vec<T>) = (0..classes.len())
        .into_par_iter()
        .map(|c| {
            let targets: Vec<T> = labels
                .iter()
                .map(|&l| if l == c { T::one() } else { -T::one() })
                .collect();
            train_binary(&matrix.rows, &targets, matrix.n_cols, config, c as u64)
        })
        .unzip();
    Ok(LinearModel {
        classes: classes.to_vec(),
        weights,
        bias,
        config: *config,
        vocabulary_hash: None,
    })
}

impl<T: Scalar> LinearModel<T> {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn with_vocabulary_hash(mut self, hash: impl Into<String>) -> Self {
        self.vocabulary_hash = Some(hash.into());
        self
    }

    /// Affine score of every class for one row.
    pub fn scores(&self, row: &SparseRow<T>) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, &b)| row.dot_dense(w) + b)
            .collect()
    }

    /// Argmax with ties going to the lowest class index.
    fn argmax(scores: &[T]) -> usize {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn predict(&self, matrix: &FeatureMatrix<T>) -> Result<Prediction<T>> {
        if matrix.n_cols != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: matrix.n_cols,
            });
        }
        let scores: Vec<Vec<T>> = matrix.rows.par_iter().map(|r| self.scores(r)).collect();
        let classes = scores.iter().map(|s| Self::argmax(s)).collect();
        Ok(Prediction { classes, scores })
    }

    /// Same model over `extra` additional all-zero columns.
    pub fn pad_columns(&self, extra: usize) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            w.resize(w.len() + extra, T::zero());
        }
        out
    }

    /// JSON header line followed by little-endian weights, class by class,
    /// then the biases.
    pub fn write_to(&self, out: &mut dyn Write) -> Result<()> {
        let header = Header {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            scalar: T::NAME.into(),
            classes: self.classes.clone(),
            config: self.config,
            vocabulary_hash: self.vocabulary_hash.clone(),
            dim: self.dim(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        let mut buf = Vec::with_capacity((self.classes.len() * (self.dim() + 1)) * T::BYTES);
        for w in &self.weights {
            for &v in w {
                v.write_le(&mut buf);
            }
        }
        for &b in &self.bias {
            b.write_le(&mut buf);
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(input: &mut dyn BufRead) -> Result<Self> {
        let mut line = Vec::new();
        input.read_until(b'\n', &mut line)?;
        let header: Header = serde_json::from_slice(&line)
            .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
        if header.format != MODEL_FORMAT || header.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        if header.scalar != T::NAME {
            return Err(Error::ModelFormat(format!(
                "model stores {} values, reader expects {}",
                header.scalar,
                T::NAME
            )));
        }
        let k = header.classes.len();
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let expected = k * (header.dim + 1) * T::BYTES;
        if payload.len() != expected {
            return Err(Error::ModelFormat(format!(
                "payload has {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let mut values = payload.chunks_exact(T::BYTES).map(T::read_le);
        let weights = (0..k)
            .map(|_| values.by_ref().take(header.dim).collect())
            .collect();
        let bias = values.collect();
        Ok(LinearModel {
            classes: header.classes,
            weights,
            bias,
            config: header.config,
            vocabulary_hash: header.vocabulary_hash,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }
}

impl<T: Scalar> Classifier<T> for LinearModel<T> {
    fn fit(matrix: &FeatureMatrix<T>, classes: &[String], config: &TrainConfig) -> Result<Self> {
        train(matrix, classes, config)
    }

    fn predict(&self, matrix: &FeatureMatrix<T>) -> Result<Prediction<T>> {
        LinearModel::predict(self, matrix)
    }

    fn write_to(&self, out: &mut dyn Write) -> Result<()> {
        LinearModel::write_to(self, out)
    }

    fn read_from(input: &mut dyn BufRead) -> Result<Self> {
        LinearModel::read_from(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (FeatureMatrix<f64>, Vec<String>) {
        // Class 0 uses columns 0..3, class 1 uses 3..6.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let c = i % 2;
            let a = (c * 3 + i % 3) as u32;
            let b = (c * 3 + (i + 1) % 3) as u32;
            let mut r = SparseRow::from_pairs(vec![(a, 1.0), (b, 0.5)]);
            let n = r.norm();
            r.scale(1.0 / n);
            rows.push(r);
            labels.push(c);
        }
        (
            FeatureMatrix {
                n_cols: 6,
                rows,
                labels: Some(labels),
            },
            vec!["a".into(), "b".into()],
        )
    }

    #[test]
    fn separable_toy_is_fit() {
        let (m, classes) = toy();
        for loss in [Loss::Hinge, Loss::Logistic] {
            let cfg = TrainConfig {
                loss,
                ..TrainConfig::default()
            };
            let model = train(&m, &classes, &cfg).unwrap();
            let p = model.predict(&m).unwrap();
            assert_eq!(&p.classes, m.labels.as_ref().unwrap());
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let (m, classes) = toy();
        let a = train(&m, &classes, &TrainConfig::default()).unwrap();
        let b = train(&m, &classes, &TrainConfig::default()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn single_class_rejected() {
        let (mut m, classes) = toy();
        m.labels = Some(vec![0; m.rows.len()]);
        assert!(matches!(
            train(&m, &classes, &TrainConfig::default()),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn zero_row_goes_to_largest_bias() {
        let model = LinearModel::<f64> {
            classes: vec!["a".into(), "b".into(), "c".into()],
            weights: vec![vec![1.0, 0.0]; 3],
            bias: vec![0.1, 0.7, 0.7],
            config: TrainConfig::default(),
            vocabulary_hash: None,
        };
        let m = FeatureMatrix {
            n_cols: 2,
            rows: vec![SparseRow::from_pairs(vec![])],
            labels: None,
        };
        assert_eq!(model.predict(&m).unwrap().classes, vec![1]);
    }

    #[test]
    fn dimension_mismatch() {
        let (m, classes) = toy();
        let model = train(&m, &classes, &TrainConfig::default()).unwrap();
        assert!(matches!(
            model.predict(&m.pad_columns(1)),
            Err(Error::DimensionMismatch { expected: 6, found: 7 })
        ));
        let padded = model.pad_columns(4).predict(&m.pad_columns(4)).unwrap();
        assert_eq!(padded.scores, model.predict(&m).unwrap().scores);
    }

    #[test]
    fn model_file_round_trip() {
        let (m, classes) = toy();
        let model = train(&m, &classes, &TrainConfig::default())
            .unwrap()
            .with_vocabulary_hash("abc");
        let bytes = model.to_bytes();
        let back = LinearModel::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        assert!(LinearModel::<f32>::from_bytes(&bytes).is_err());
        assert!(LinearModel::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn f32_training_works() {
        let (m, classes) = toy();
        let m32 = FeatureMatrix::<f32> {
            n_cols: m.n_cols,
            rows: m
                .rows
                .iter()
                .map(|r| SparseRow::from_pairs(r.iter().map(|(j, v)| (j as u32, v as f32)).collect()))
                .collect(),
            labels: m.labels.clone(),
        };
        let model = train(&m32, &classes, &TrainConfig::default()).unwrap();
        assert_eq!(&model.predict(&m32).unwrap().classes, m.labels.as_ref().unwrap());
    }
}
