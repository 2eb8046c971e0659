//! Evaluation statistics: per-class precision/recall, geometric-mean
//! aggregation, Cohen's and Fleiss's κ, Agresti–Coull intervals, and
//! population-scale agreement between two classifiers.
//!
//! Labels are dense class indices `0..n_classes`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{count, lit, Scalar};

/// Stand-in for a per-class value of exactly zero inside geometric means.
pub const ZERO_EPSILON: f64 = 1e-6;

/// Default two-sided 95% normal quantile.
pub const DEFAULT_Z: f64 = 1.96;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// `exp(mean(ln v))`. Every value must be positive.
pub fn geometric_mean<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = values.iter().find(|&&v| v <= T::zero() || v.is_nan()) {
        return Err(Error::NonPositive(v.to_f64().unwrap_or(f64::NAN)));
    }
    let mean_ln = values.iter().map(|v| v.ln()).sum::<T>() / count::<T>(values.len());
    Ok(mean_ln.exp())
}

/// Geometric mean with zeros replaced by [`ZERO_EPSILON`]; the flag reports
/// whether a replacement happened.
pub fn geometric_mean_floored<T: Scalar>(values: &[T]) -> Result<(T, bool)> {
    let eps = lit::<T>(ZERO_EPSILON);
    let mut replaced = false;
    let floored: Vec<T> = values
        .iter()
        .map(|&v| {
            if v == T::zero() {
                replaced = true;
                eps
            } else {
                v
            }
        })
        .collect();
    Ok((geometric_mean(&floored)?, replaced))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassScore<T> {
    pub class: usize,
    pub precision: T,
    pub recall: T,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub per_class: Vec<ClassScore<T>>,
    /// Classes the geometric means run over.
    pub included: Vec<usize>,
    pub gmean_precision: T,
    pub gmean_recall: T,
    /// Included classes that never appear among the predictions.
    pub zero_prediction_classes: Vec<usize>,
    /// A zero was replaced by [`ZERO_EPSILON`] in a geometric mean.
    pub epsilon_substituted: bool,
}

impl<T: Scalar> EvalReport<T> {
    /// Recomputes the geometric means over `classes` only.
    pub fn restrict(&self, classes: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        out.included = classes.to_vec();
        out.included.sort_unstable();
        out.included.dedup();
        out.refresh_means()?;
        Ok(out)
    }

    fn refresh_means(&mut self) -> Result<()> {
        let p: Vec<T> = self.included.iter().map(|&c| self.per_class[c].precision).collect();
        let r: Vec<T> = self.included.iter().map(|&c| self.per_class[c].recall).collect();
        let (gp, fp) = geometric_mean_floored(&p)?;
        let (gr, fr) = geometric_mean_floored(&r)?;
        self.gmean_precision = gp;
        self.gmean_recall = gr;
        self.epsilon_substituted = fp || fr;
        self.zero_prediction_classes = self
            .included
            .iter()
            .copied()
            .filter(|&c| self.per_class[c].predicted == 0)
            .collect();
        Ok(())
    }

    pub fn scores(&self) -> ScoreColumn<T> {
        ScoreColumn {
            per_class: self
                .included
                .iter()
                .map(|&c| (c, self.per_class[c].precision, self.per_class[c].recall))
                .collect(),
            gmean_precision: self.gmean_precision,
            gmean_recall: self.gmean_recall,
        }
    }
}

/// Per-class precision `TP/(TP+FP)` and recall `TP/(TP+FN)`. A class that is
/// never predicted gets precision 0; a class with no support gets recall 0.
/// Geometric means run over the classes present in `truth`.
pub fn precision_recall<T: Scalar>(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<EvalReport<T>> {
    check_lengths(truth.len(), predicted.len())?;
    let mut tp = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    let mut npred = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::UnknownClass(t.max(p).to_string()));
        }
        support[t] += 1;
        npred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| {
        if b == 0 {
            T::zero()
        } else {
            count::<T>(a) / count::<T>(b)
        }
    };
    let per_class = (0..n_classes)
        .map(|c| ClassScore {
            class: c,
            precision: ratio(tp[c], npred[c]),
            recall: ratio(tp[c], support[c]),
            support: support[c],
            predicted: npred[c],
        })
        .collect();
    let mut report = EvalReport {
        per_class,
        included: (0..n_classes).filter(|&c| support[c] > 0).collect(),
        gmean_precision: T::zero(),
        gmean_recall: T::zero(),
        zero_prediction_classes: Vec::new(),
        epsilon_substituted: false,
    };
    report.refresh_means()?;
    Ok(report)
}

/// Per-class scores across repeated runs, each averaged geometrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AggregateReport<T> {
    pub runs: usize,
    pub classes: Vec<usize>,
    pub precision: Vec<T>,
    pub recall: Vec<T>,
    /// Fraction of runs in which the class received no predictions.
    pub zero_prediction_rate: Vec<T>,
    pub gmean_precision: T,
    pub gmean_recall: T,
    pub epsilon_substituted: bool,
}

impl<T: Scalar> AggregateReport<T> {
    pub fn scores(&self) -> ScoreColumn<T> {
        ScoreColumn {
            per_class: self
                .classes
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, self.precision[i], self.recall[i]))
                .collect(),
            gmean_precision: self.gmean_precision,
            gmean_recall: self.gmean_recall,
        }
    }
}

/// Geometric mean over runs per class, then over classes. Classes are those
/// included in every report.
pub fn aggregate<T: Scalar>(reports: &[EvalReport<T>]) -> Result<AggregateReport<T>> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    let mut classes: BTreeSet<usize> = first.included.iter().copied().collect();
    for r in &reports[1..] {
        let inc: BTreeSet<usize> = r.included.iter().copied().collect();
        classes = classes.intersection(&inc).copied().collect();
    }
    let classes: Vec<usize> = classes.into_iter().collect();
    let mut flagged = false;
    let mut precision = Vec::with_capacity(classes.len());
    let mut recall = Vec::with_capacity(classes.len());
    let mut zero_rate = Vec::with_capacity(classes.len());
    for &c in &classes {
        let p: Vec<T> = reports.iter().map(|r| r.per_class[c].precision).collect();
        let rc: Vec<T> = reports.iter().map(|r| r.per_class[c].recall).collect();
        let (gp, fp) = geometric_mean_floored(&p)?;
        let (gr, fr) = geometric_mean_floored(&rc)?;
        flagged |= fp || fr;
        precision.push(gp);
        recall.push(gr);
        let zeros = reports.iter().filter(|r| r.per_class[c].predicted == 0).count();
        zero_rate.push(count::<T>(zeros) / count::<T>(reports.len()));
    }
    let (gmean_precision, fp) = geometric_mean_floored(&precision)?;
    let (gmean_recall, fr) = geometric_mean_floored(&recall)?;
    Ok(AggregateReport {
        runs: reports.len(),
        classes,
        precision,
        recall,
        zero_prediction_rate: zero_rate,
        gmean_precision,
        gmean_recall,
        epsilon_substituted: flagged || fp || fr,
    })
}

/// One column group of a precision/recall table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreColumn<T> {
    pub per_class: Vec<(usize, T, T)>,
    pub gmean_precision: T,
    pub gmean_recall: T,
}

/// Aligned-column precision/recall table with a geometric-mean row. With
/// more than one column, absolute and relative changes against the first
/// column are appended.
pub fn render_score_table<T: Scalar>(
    class_names: &[String],
    columns: &[(&str, ScoreColumn<T>)],
) -> String {
    let mut classes: Vec<usize> = columns
        .iter()
        .flat_map(|(_, c)| c.per_class.iter().map(|x| x.0))
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let name_w = class_names
        .iter()
        .map(String::len)
        .chain(["Geometric Mean".len(), "Relative Change".len()])
        .max()
        .unwrap_or(0);
    let col_w = columns.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let lookup = |col: &ScoreColumn<T>, c: usize, recall: bool| {
        col.per_class
            .iter()
            .find(|x| x.0 == c)
            .map(|x| format!("{:.2}", if recall { x.2 } else { x.1 }))
            .unwrap_or_else(|| "-".into())
    };

    let mut out = String::new();
    let width = name_w + 2 * columns.len() * (col_w + 2) + 3;
    let rule = "-".repeat(width);
    let _ = writeln!(out, "{rule}");
    let half = columns.len() * (col_w + 2);
    let _ = writeln!(out, "{:name_w$}  {:<half$}| {:<half$}", "", "Precision", "Recall");
    let mut header = format!("{:<name_w$}  ", "Class");
    for side in 0..2 {
        for (n, _) in columns {
            let _ = write!(header, "{n:>col_w$}  ");
        }
        if side == 0 {
            header.push_str("| ");
        }
    }
    let _ = writeln!(out, "{}", header.trim_end());
    let _ = writeln!(out, "{rule}");
    for &c in &classes {
        let name = class_names.get(c).map(String::as_str).unwrap_or("?");
        let mut line = format!("{name:<name_w$}  ");
        for recall in [false, true] {
            for (_, col) in columns {
                let _ = write!(line, "{:>col_w$}  ", lookup(col, c, recall));
            }
            if !recall {
                line.push_str("| ");
            }
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    let _ = writeln!(out, "{rule}");
    let summary = |label: &str, f: &dyn Fn(T, T) -> String| {
        let mut line = format!("{label:<name_w$}  ");
        for recall in [false, true] {
            for (i, (_, col)) in columns.iter().enumerate() {
                let (base, v) = if recall {
                    (columns[0].1.gmean_recall, col.gmean_recall)
                } else {
                    (columns[0].1.gmean_precision, col.gmean_precision)
                };
                let cell = if i == 0 && label != "Geometric Mean" {
                    "/".to_owned()
                } else {
                    f(base, v)
                };
                let _ = write!(line, "{cell:>col_w$}  ");
            }
            if !recall {
                line.push_str("| ");
            }
        }
        line.trim_end().to_owned()
    };
    let _ = writeln!(out, "{}", summary("Geometric Mean", &|_, v| format!("{v:.2}")));
    if columns.len() > 1 {
        let _ = writeln!(
            out,
            "{}",
            summary("Absolute Change", &|b, v| format!("{:+.2}", v - b))
        );
        let _ = writeln!(
            out,
            "{}",
            summary("Relative Change", &|b, v| {
                if b > T::zero() {
                    format!("{:+.1}%", (v - b) / b * lit(100.0))
                } else {
                    "n/a".into()
                }
            })
        );
    }
    let _ = writeln!(out, "{rule}");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KappaKind {
    Cohen,
    Fleiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KappaResult<T> {
    pub kind: KappaKind,
    pub value: T,
    pub n_items: usize,
    pub n_raters: usize,
}

impl<T: Scalar> KappaResult<T> {
    /// κ above 0.6.
    pub fn is_substantial(&self) -> bool {
        self.value > lit(0.6)
    }

    /// Landis–Koch band.
    pub fn band(&self) -> &'static str {
        let v = self.value.to_f64().unwrap_or(f64::NAN);
        match v {
            v if v < 0.0 => "poor",
            v if v <= 0.2 => "slight",
            v if v <= 0.4 => "fair",
            v if v <= 0.6 => "moderate",
            v if v <= 0.8 => "substantial",
            _ => "almost perfect",
        }
    }
}

/// Cohen's κ for two raters over the same items. Expected agreement is the
/// sum of marginal products; κ is 1 when both observed and expected
/// agreement are 1.
pub fn cohen_kappa<T: Scalar, L: Eq + std::hash::Hash>(a: &[L], b: &[L]) -> Result<KappaResult<T>> {
    check_lengths(a.len(), b.len())?;
    let n = a.len();
    let mut ma: HashMap<&L, usize> = HashMap::new();
    let mut mb: HashMap<&L, usize> = HashMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let nn = count::<T>(n);
    let p_o = count::<T>(agree) / nn;
    // Integer numerator keeps p_e exact up to the final division.
    let pe_num: u128 = ma
        .iter()
        .map(|(k, &ca)| ca as u128 * mb.get(k).copied().unwrap_or(0) as u128)
        .sum();
    let value = if pe_num == (n as u128) * (n as u128) {
        T::one()
    } else {
        let p_e = T::from_u128(pe_num).expect("finite") / (nn * nn);
        (p_o - p_e) / (T::one() - p_e)
    };
    Ok(KappaResult {
        kind: KappaKind::Cohen,
        value,
        n_items: n,
        n_raters: 2,
    })
}

/// Fleiss's κ from an items × categories table of rating counts. Every item
/// must be rated by the same number of raters, at least two.
pub fn fleiss_kappa<T: Scalar>(table: &[Vec<usize>]) -> Result<KappaResult<T>> {
    let first = table.first().ok_or(Error::EmptyInput)?;
    let k = first.len();
    let raters: usize = first.iter().sum();
    for (i, row) in table.iter().enumerate() {
        let r: usize = row.iter().sum();
        if row.len() != k || r != raters {
            return Err(Error::RaggedRatings {
                item: i,
                expected: raters,
                found: r,
            });
        }
    }
    if raters < 2 {
        return Err(Error::InvalidConfig("Fleiss's kappa needs at least two raters per item".into()));
    }
    let n_items = table.len();
    let nr = count::<T>(raters);
    let p_bar = table
        .iter()
        .map(|row| {
            let sq: usize = row.iter().map(|&x| x * x).sum();
            count::<T>(sq - raters) / (nr * (nr - T::one()))
        })
        .sum::<T>()
        / count::<T>(n_items);
    let total = count::<T>(n_items * raters);
    let p_e: T = (0..k)
        .map(|j| {
            let pj = count::<T>(table.iter().map(|r| r[j]).sum()) / total;
            pj * pj
        })
        .sum();
    let value = if (T::one() - p_e).abs() <= T::epsilon() {
        T::one()
    } else {
        (p_bar - p_e) / (T::one() - p_e)
    };
    Ok(KappaResult {
        kind: KappaKind::Fleiss,
        value,
        n_items,
        n_raters: raters,
    })
}

/// Builds the Fleiss count table from per-item rater labels.
pub fn fleiss_table(ratings: &[Vec<usize>], n_categories: usize) -> Result<Vec<Vec<usize>>> {
    ratings
        .iter()
        .map(|item| {
            let mut row = vec![0usize; n_categories];
            for &c in item {
                *row.get_mut(c).ok_or_else(|| Error::UnknownClass(c.to_string()))? += 1;
            }
            Ok(row)
        })
        .collect()
}

/// Agresti–Coull interval for `successes` out of `trials`, clamped to [0, 1].
///
/// `ñ = n + z²`, `p̃ = (X + z²/2) / ñ`, interval `p̃ ± z·sqrt(p̃(1 − p̃)/ñ)`.
pub fn agresti_coull<T: Scalar>(successes: u64, trials: u64, z: T) -> Result<(T, T)> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidProportion { successes, trials });
    }
    let z2 = z * z;
    let n_t = T::from_u64(trials).expect("finite") + z2;
    let p_t = (T::from_u64(successes).expect("finite") + z2 / lit(2.0)) / n_t;
    let half = z * (p_t * (T::one() - p_t) / n_t).sqrt();
    Ok(((p_t - half).max(T::zero()), (p_t + half).min(T::one())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassAgreement<T> {
    pub class: usize,
    pub agree: u64,
    pub only_a: u64,
    pub only_b: u64,
    /// `None` when neither classifier assigned the class.
    pub ci: Option<(T, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AgreementReport<T> {
    pub per_class: Vec<ClassAgreement<T>>,
    pub z: T,
    pub population: usize,
}

impl<T: Scalar> AgreementReport<T> {
    /// Aligned-column agreement table.
    pub fn render_table(&self, class_names: &[String], name_a: &str, name_b: &str) -> String {
        let only_a = format!("#{name_a} only");
        let only_b = format!("#{name_b} only");
        let name_w = class_names.iter().map(String::len).max().unwrap_or(5).max(5);
        let wa = only_a.len().max(10);
        let wb = only_b.len().max(10);
        let mut out = String::new();
        let rule = "-".repeat(name_w + wa + wb + 10 + 14 + 8);
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>10}  {only_a:>wa$}  {only_b:>wb$}  {:>14}",
            "Class", "#Agree", "CI Agreement"
        );
        let _ = writeln!(out, "{rule}");
        for row in &self.per_class {
            let name = class_names.get(row.class).map(String::as_str).unwrap_or("?");
            let ci = row
                .ci
                .map(|(lo, hi)| format!("({lo:.2},{hi:.2})"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{name:<name_w$}  {:>10}  {:>wa$}  {:>wb$}  {ci:>14}",
                row.agree, row.only_a, row.only_b
            );
        }
        let _ = writeln!(out, "{rule}");
        out
    }
}

/// Per-class agreement between two prediction vectors over one universe,
/// with Agresti–Coull intervals on `agree / (agree + only_a + only_b)`.
pub fn agreement<T: Scalar>(
    pred_a: &[usize],
    pred_b: &[usize],
    n_classes: usize,
    z: T,
) -> Result<AgreementReport<T>> {
    if pred_a.len() != pred_b.len() {
        return Err(Error::UniverseMismatch(format!(
            "{} vs {} predictions",
            pred_a.len(),
            pred_b.len()
        )));
    }
    if let Some(&c) = pred_a.iter().chain(pred_b).find(|&&c| c >= n_classes) {
        return Err(Error::UnknownClass(c.to_string()));
    }
    let zero = || vec![[0u64; 3]; n_classes];
    let counts = pred_a
        .par_chunks(1 << 16)
        .zip(pred_b.par_chunks(1 << 16))
        .map(|(ca, cb)| {
            let mut acc = zero();
            for (&a, &b) in ca.iter().zip(cb) {
                if a == b {
                    acc[a][0] += 1;
                } else {
                    acc[a][1] += 1;
                    acc[b][2] += 1;
                }
            }
            acc
        })
        .reduce(zero, |mut x, y| {
            for (r, s) in x.iter_mut().zip(&y) {
                for k in 0..3 {
                    r[k] += s[k];
                }
            }
            x
        });
    let per_class = counts
        .into_iter()
        .enumerate()
        .map(|(class, [agree, only_a, only_b])| {
            let n = agree + only_a + only_b;
            Ok(ClassAgreement {
                class,
                agree,
                only_a,
                only_b,
                ci: if n == 0 {
                    None
                } else {
                    Some(agresti_coull(agree, n, z)?)
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AgreementReport {
        per_class,
        z,
        population: pred_a.len(),
    })
}

/// Pairs two `(post_id, class)` lists on post id. Both must cover the same
/// posts exactly once. Returns ids (sorted) and the aligned class vectors.
pub fn align_predictions(
    a: &[(String, usize)],
    b: &[(String, usize)],
) -> Result<(Vec<String>, Vec<usize>, Vec<usize>)> {
    let sorted = |v: &[(String, usize)]| -> Result<Vec<(String, usize)>> {
        let mut v = v.to_vec();
        v.sort();
        if let Some(w) = v.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::UniverseMismatch(format!("post `{}` listed twice", w[0].0)));
        }
        Ok(v)
    };
    let sa = sorted(a)?;
    let sb = sorted(b)?;
    if sa.len() != sb.len() {
        return Err(Error::UniverseMismatch(format!("{} vs {} posts", sa.len(), sb.len())));
    }
    if let Some((x, y)) = sa.iter().zip(&sb).find(|(x, y)| x.0 != y.0) {
        return Err(Error::UniverseMismatch(format!(
            "post `{}` has no counterpart `{}`",
            x.0, y.0
        )));
    }
    let ids = sa.iter().map(|x| x.0.clone()).collect();
    Ok((
        ids,
        sa.into_iter().map(|x| x.1).collect(),
        sb.into_iter().map(|x| x.1).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementSample {
    /// `(class, positions)` in class order.
    pub per_class: Vec<(usize, Vec<usize>)>,
    /// `(class, available)` for classes with fewer candidates than requested.
    pub shortfalls: Vec<(usize, usize)>,
}

impl DisagreementSample {
    pub fn positions(&self) -> Vec<usize> {
        self.per_class.iter().flat_map(|(_, v)| v.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.per_class.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// For each class, draws `per_class` positions where exactly one classifier
/// assigned that class. A post already drawn for an earlier class is not
/// drawn again. Classes short of candidates return all of them.
pub fn disagreement_sample(
    pred_a: &[usize],
    pred_b: &[usize],
    n_classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<DisagreementSample> {
    if pred_a.len() != pred_b.len() {
        return Err(Error::UniverseMismatch(format!(
            "{} vs {} predictions",
            pred_a.len(),
            pred_b.len()
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be at least 1".into()));
    }
    let mut taken = vec![false; pred_a.len()];
    let mut out = DisagreementSample {
        per_class: Vec::new(),
        shortfalls: Vec::new(),
    };
    for class in 0..n_classes {
        let candidates: Vec<usize> = (0..pred_a.len())
            .filter(|&i| !taken[i] && ((pred_a[i] == class) != (pred_b[i] == class)))
            .collect();
        let picks: Vec<usize> = if candidates.len() <= per_class {
            if candidates.len() < per_class {
                tracing::warn!(class, available = candidates.len(), per_class, "too few disagreements");
                out.shortfalls.push((class, candidates.len()));
            }
            candidates
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(class as u64);
            let mut p: Vec<usize> = index::sample(&mut rng, candidates.len(), per_class)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            p.sort_unstable();
            p
        };
        for &i in &picks {
            taken[i] = true;
        }
        out.per_class.push((class, picks));
    }
    Ok(out)
}
