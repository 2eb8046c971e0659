//! Post distributions induced by member centrality, log-scale binning, and
//! stratified sample generation.
//!
//! Every post is attributed its author's metric value. Bins have exclusive
//! upper bounds at powers of ten; a post belongs to the first bin whose bound
//! exceeds its value. [`merge_bins`] folds adjacent bins left to right until
//! each carries at least `25 / S` of the posts, so a sample of `S` posts can
//! take at least 25 from every bin.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::centrality::{CentralityVector, Metric};
use crate::error::{Error, Result};
use crate::graph::PopulationGraph;
use crate::num::{count, lit, Scalar};

/// Minimum number of posts a sample must be able to take from each bin.
pub const MIN_PER_BIN: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Bin<T> {
    /// Exclusive upper bound on the author metric value.
    pub upper_bound: T,
    pub mass: T,
    /// Population post indices, ascending.
    #[serde(skip)]
    pub posts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedDistribution<T> {
    pub metric: Metric,
    pub bins: Vec<Bin<T>>,
    pub total_posts: usize,
    /// Sample size the bins were merged for, if any.
    pub sample_size: Option<usize>,
}

/// Serializable view of a distribution without post lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DistributionSummary<T> {
    pub metric: Metric,
    pub total_posts: usize,
    pub sample_size: Option<usize>,
    pub min_mass: Option<T>,
    pub bins: Vec<BinSummary<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinSummary<T> {
    pub upper_bound: T,
    pub mass: T,
    pub posts: usize,
}

impl<T: Scalar> InducedDistribution<T> {
    pub fn masses(&self) -> Vec<T> {
        self.bins.iter().map(|b| b.mass).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.posts.len()).collect()
    }

    /// Index of the bin a metric value falls into; values at or above the
    /// last bound go to the last bin, zero and negative values to the first.
    pub fn bin_of(&self, value: T) -> usize {
        self.bins
            .iter()
            .position(|b| value < b.upper_bound)
            .unwrap_or(self.bins.len().saturating_sub(1))
    }

    /// Bin index of every population post.
    pub fn post_bins(&self) -> HashMap<usize, usize> {
        self.bins
            .iter()
            .enumerate()
            .flat_map(|(b, bin)| bin.posts.iter().map(move |&p| (p, b)))
            .collect()
    }

    pub fn summary(&self) -> DistributionSummary<T> {
        DistributionSummary {
            metric: self.metric,
            total_posts: self.total_posts,
            sample_size: self.sample_size,
            min_mass: self
                .sample_size
                .map(|s| count::<T>(MIN_PER_BIN) / count::<T>(s)),
            bins: self
                .bins
                .iter()
                .map(|b| BinSummary {
                    upper_bound: b.upper_bound,
                    mass: b.mass,
                    posts: b.posts.len(),
                })
                .collect(),
        }
    }
}

/// Smallest `k` with `value < 10^k`.
fn decade_exponent<T: Scalar>(value: T) -> i32 {
    let ten = lit::<T>(10.0);
    let mut k = value.log10().floor().to_i32().unwrap_or(0) + 1;
    while ten.powi(k - 1) > value {
        k -= 1;
    }
    while ten.powi(k) <= value {
        k += 1;
    }
    k
}

/// Attributes each post its author's metric value and bins at powers of ten.
/// Only non-empty bins are kept. Members with value zero join the lowest bin.
pub fn induce<T: Scalar>(
    pop: &PopulationGraph,
    cv: &CentralityVector<T>,
) -> Result<InducedDistribution<T>> {
    if cv.len() != pop.member_count() {
        return Err(Error::LengthMismatch {
            left: cv.len(),
            right: pop.member_count(),
        });
    }
    let exponents: Vec<Option<i32>> = cv
        .values
        .iter()
        .map(|&v| (v > T::zero()).then(|| decade_exponent(v)))
        .collect();
    let lowest = exponents
        .iter()
        .flatten()
        .min()
        .copied()
        .ok_or(Error::AllZeroMetric)?;
    let mut grouped: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for post in 0..pop.post_count() {
        let k = exponents[pop.post_member(post)].unwrap_or(lowest);
        grouped.entry(k).or_default().push(post);
    }
    let total = pop.post_count();
    let ten = lit::<T>(10.0);
    let bins = grouped
        .into_iter()
        .map(|(k, posts)| Bin {
            upper_bound: ten.powi(k),
            mass: count::<T>(posts.len()) / count::<T>(total),
            posts,
        })
        .collect();
    Ok(InducedDistribution {
        metric: cv.metric,
        bins,
        total_posts: total,
        sample_size: None,
    })
}

/// Merges adjacent bins in ascending order until every bin holds at least
/// `25 / sample_size` of the mass. A light trailing remainder joins its left
/// neighbour.
pub fn merge_bins<T: Scalar>(
    dist: &InducedDistribution<T>,
    sample_size: usize,
) -> Result<InducedDistribution<T>> {
    if sample_size < MIN_PER_BIN {
        return Err(Error::InvalidSampleSize {
            size: sample_size,
            reason: format!("must be at least {MIN_PER_BIN}"),
        });
    }
    let total = dist.total_posts;
    if total < MIN_PER_BIN {
        return Err(Error::TooFewPosts(total));
    }
    // count / total >= 25 / S, in integers.
    let heavy = |n: usize| (n as u128) * (sample_size as u128) >= (MIN_PER_BIN as u128) * (total as u128);

    let mut merged: Vec<(T, Vec<usize>)> = Vec::new();
    let mut open: Option<(T, Vec<usize>)> = None;
    for bin in &dist.bins {
        let (ub, posts) = open.get_or_insert_with(|| (bin.upper_bound, Vec::new()));
        *ub = bin.upper_bound;
        posts.extend_from_slice(&bin.posts);
        if heavy(posts.len()) {
            merged.extend(open.take());
        }
    }
    if let Some((ub, posts)) = open {
        match merged.last_mut() {
            Some(last) => {
                last.0 = ub;
                last.1.extend(posts);
            }
            None => merged.push((ub, posts)),
        }
    }
    let bins = merged
        .into_iter()
        .map(|(upper_bound, mut posts)| {
            posts.sort_unstable();
            Bin {
                upper_bound,
                mass: count::<T>(posts.len()) / count::<T>(total),
                posts,
            }
        })
        .collect();
    Ok(InducedDistribution {
        metric: dist.metric,
        bins,
        total_posts: total,
        sample_size: Some(sample_size),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Proportional,
    Uniform,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Proportional => "proportional",
            Strategy::Uniform => "uniform",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proportional" => Ok(Strategy::Proportional),
            "uniform" => Ok(Strategy::Uniform),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Largest-remainder apportionment of `size` over integer `counts`, exact.
/// Ties on the remainder go to the lower index.
pub fn proportional_quotas(counts: &[usize], size: usize) -> Vec<usize> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let scaled: Vec<u128> = counts.iter().map(|&c| c as u128 * size as u128).collect();
    let mut quotas: Vec<usize> = scaled.iter().map(|&s| (s / total) as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (scaled[b] % total).cmp(&(scaled[a] % total)).then(a.cmp(&b)));
    let short = size - quotas.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        quotas[i] += 1;
    }
    quotas
}

/// Largest-remainder apportionment over real-valued masses. Products within
/// `1e-9` of an integer are treated as that integer.
pub fn proportional_quotas_from_masses<T: Scalar>(masses: &[T], size: usize) -> Vec<usize> {
    let sum: T = masses.iter().copied().sum();
    if sum <= T::zero() {
        return vec![0; masses.len()];
    }
    let eps = lit::<T>(1e-9);
    let raw: Vec<T> = masses.iter().map(|&m| m / sum * count::<T>(size)).collect();
    let mut quotas: Vec<usize> = raw
        .iter()
        .map(|&r| (r + eps).floor().to_usize().unwrap_or(0))
        .collect();
    let rem: Vec<T> = raw
        .iter()
        .zip(&quotas)
        .map(|(&r, &q)| (r - count::<T>(q)).max(T::zero()))
        .collect();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        rem[b]
            .partial_cmp(&rem[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(size.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    quotas
}

/// `size / bins` per bin, remainder spread over the lowest indices.
pub fn uniform_quotas(bins: usize, size: usize) -> Vec<usize> {
    if bins == 0 {
        return Vec::new();
    }
    let base = size / bins;
    let extra = size % bins;
    (0..bins).map(|b| base + usize::from(b < extra)).collect()
}

/// A previously labeled post that should be reused when it fits a quota.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReusedLabel {
    pub post_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub strategy: Strategy,
    pub size: usize,
    #[serde(default)]
    pub reuse_pool: Vec<ReusedLabel>,
    /// Cap on posts drawn fresh (i.e. needing new annotation).
    #[serde(default)]
    pub max_new_posts: Option<usize>,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(strategy: Strategy, size: usize, seed: u64) -> Self {
        SampleSpec {
            strategy,
            size,
            reuse_pool: Vec::new(),
            max_new_posts: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub post_id: String,
    pub member_id: String,
    pub bin: usize,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StratifiedSample<T> {
    pub entries: Vec<SampleEntry>,
    pub spec: SampleSpec,
    pub quotas: Vec<usize>,
    pub achieved_distribution: Vec<T>,
}

impl<T: Scalar> StratifiedSample<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reused_count(&self) -> usize {
        self.entries.iter().filter(|e| e.reused).count()
    }

    /// `post_id,member_id,bin,reused` with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_entries_csv(&self.entries, writer)
    }
}

pub fn write_entries_csv<W: Write>(entries: &[SampleEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_entries_csv<R: Read>(reader: R) -> Result<Vec<SampleEntry>> {
    let mut r = csv::Reader::from_reader(reader);
    let entries = r.deserialize().collect::<std::result::Result<Vec<SampleEntry>, _>>()?;
    Ok(entries)
}

/// Draws a stratified sample of `spec.size` posts.
///
/// Within a bin, posts from the reuse pool are taken first in `post_id`
/// order; the rest of the quota is drawn uniformly without replacement using
/// a ChaCha8 stream keyed by `(seed, bin index)`.
pub fn sample<T: Scalar>(
    pop: &PopulationGraph,
    dist: &InducedDistribution<T>,
    spec: &SampleSpec,
) -> Result<StratifiedSample<T>> {
    if spec.size == 0 {
        return Err(Error::InvalidSampleSize {
            size: 0,
            reason: "must be positive".into(),
        });
    }
    let n_bins = dist.bins.len();
    let quotas = match spec.strategy {
        Strategy::Proportional => proportional_quotas(&dist.counts(), spec.size),
        Strategy::Uniform => {
            if spec.size < MIN_PER_BIN * n_bins {
                return Err(Error::InvalidSampleSize {
                    size: spec.size,
                    reason: format!(
                        "uniform sampling over {n_bins} bins needs at least {}",
                        MIN_PER_BIN * n_bins
                    ),
                });
            }
            uniform_quotas(n_bins, spec.size)
        }
    };

    let post_bins = dist.post_bins();
    let mut pool_by_bin: Vec<Vec<(String, usize)>> = vec![Vec::new(); n_bins];
    for r in &spec.reuse_pool {
        let pos = pop
            .post_position(&r.post_id)
            .ok_or_else(|| Error::ReuseOutsidePopulation(r.post_id.clone()))?;
        let b = *post_bins
            .get(&pos)
            .ok_or_else(|| Error::ReuseOutsidePopulation(r.post_id.clone()))?;
        pool_by_bin[b].push((r.post_id.clone(), pos));
    }
    for pool in &mut pool_by_bin {
        pool.sort();
        pool.dedup();
    }

    let mut entries = Vec::with_capacity(spec.size);
    let mut fresh_total = 0usize;
    for (b, bin) in dist.bins.iter().enumerate() {
        let quota = quotas[b];
        if quota > bin.posts.len() {
            return Err(Error::BinExhausted {
                bin: b,
                quota,
                available: bin.posts.len(),
            });
        }
        let reused: Vec<usize> = pool_by_bin[b].iter().take(quota).map(|&(_, p)| p).collect();
        let in_pool: std::collections::HashSet<usize> =
            pool_by_bin[b].iter().map(|&(_, p)| p).collect();
        let candidates: Vec<usize> = bin
            .posts
            .iter()
            .copied()
            .filter(|p| !in_pool.contains(p))
            .collect();
        let need = quota - reused.len();
        if need > candidates.len() {
            return Err(Error::BinExhausted {
                bin: b,
                quota,
                available: reused.len() + candidates.len(),
            });
        }
        fresh_total += need;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(b as u64);
        let mut drawn: Vec<usize> = index::sample(&mut rng, candidates.len(), need)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        drawn.sort_unstable();
        let entry = |p: usize, reused: bool| SampleEntry {
            post_id: pop.post(p).id.clone(),
            member_id: pop.member_id(pop.post_member(p)).to_owned(),
            bin: b,
            reused,
        };
        entries.extend(reused.iter().map(|&p| entry(p, true)));
        entries.extend(drawn.iter().map(|&p| entry(p, false)));
    }
    if let Some(cap) = spec.max_new_posts {
        if fresh_total > cap {
            return Err(Error::NewPostCapExceeded {
                needed: fresh_total,
                cap,
            });
        }
    }
    let achieved_distribution = quotas
        .iter()
        .map(|&q| count::<T>(q) / count::<T>(spec.size))
        .collect();
    Ok(StratifiedSample {
        entries,
        spec: spec.clone(),
        quotas,
        achieved_distribution,
    })
}

/// Standard error of a sample proportion, `sqrt(p(1-p)/n)`.
pub fn proportion_std_error<T: Scalar>(p: T, n: usize) -> T {
    (p * (T::one() - p) / count::<T>(n.max(1))).sqrt()
}
