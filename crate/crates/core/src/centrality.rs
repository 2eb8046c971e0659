//! Member centrality over the member–thread interaction graph.
//!
//! Post degree and thread degree are single passes over the weight matrix.
//! Eigenvector centrality runs power iteration on the bipartite adjacency
//! (members and threads as one node set). Betweenness is exact (Brandes) and
//! refuses graphs above a node limit.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PopulationGraph;
use crate::num::{count, lit, Scalar};

pub const DEFAULT_NODE_LIMIT: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "post")]
    PostDegree,
    #[serde(rename = "thread")]
    ThreadDegree,
    #[serde(rename = "eigenvector")]
    Eigenvector,
    #[serde(rename = "betweenness")]
    Betweenness,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PostDegree => "post",
            Metric::ThreadDegree => "thread",
            Metric::Eigenvector => "eigenvector",
            Metric::Betweenness => "betweenness",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post" | "post-degree" => Ok(Metric::PostDegree),
            "thread" | "thread-degree" => Ok(Metric::ThreadDegree),
            "eigenvector" => Ok(Metric::Eigenvector),
            "betweenness" => Ok(Metric::Betweenness),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

/// Power-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenMeta<T> {
    pub iterations: usize,
    pub residual: T,
    pub lambda_max_estimate: T,
    pub converged: bool,
    pub weighted: bool,
}

/// One value per population member, in population member order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CentralityVector<T> {
    pub metric: Metric,
    pub members: Vec<String>,
    pub values: Vec<T>,
    pub meta: Option<EigenMeta<T>>,
}

impl<T: Scalar> CentralityVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> + '_ {
        self.members
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    /// `member_id,value` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["member_id", "value"])?;
        for (id, v) in self.iter() {
            w.write_record([id, &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar describing how the vector was produced.
    pub fn meta_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.metric,
            "members": self.values.len(),
            "scalar": T::NAME,
            "eigen": self.meta,
        })
    }
}

fn from_population<T: Scalar>(
    pop: &PopulationGraph,
    metric: Metric,
    values: Vec<T>,
    meta: Option<EigenMeta<T>>,
) -> CentralityVector<T> {
    CentralityVector {
        metric,
        members: pop.member_ids().map(str::to_owned).collect(),
        values,
        meta,
    }
}

/// Total posts per member: row sums of `W`.
pub fn post_degree<T: Scalar>(pop: &PopulationGraph) -> CentralityVector<T> {
    let w = pop.weights();
    let values = (0..w.rows())
        .map(|m| count(w.row(m).map(|(_, x)| x as usize).sum()))
        .collect();
    from_population(pop, Metric::PostDegree, values, None)
}

/// Distinct threads per member: row sums of `A`.
pub fn thread_degree<T: Scalar>(pop: &PopulationGraph) -> CentralityVector<T> {
    let w = pop.weights();
    let values = (0..w.rows()).map(|m| count(w.row_len(m))).collect();
    from_population(pop, Metric::ThreadDegree, values, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EigenOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// Use `W` instead of `A` as edge weights.
    pub weighted: bool,
}

impl<T: Scalar> Default for EigenOptions<T> {
    fn default() -> Self {
        EigenOptions {
            tol: lit(1e-7),
            max_iter: 100,
            weighted: false,
        }
    }
}

/// Principal eigenvector of the bipartite adjacency over members ∪ threads,
/// members first. Returned vector has unit L2 norm.
///
/// Iterates `x ← (A + I)x / ‖(A + I)x‖` from the all-ones vector. The shift
/// leaves eigenvectors unchanged but breaks the `±λ` symmetry of bipartite
/// spectra, which would otherwise make plain power iteration oscillate.
/// Stops when successive iterates are closer than `tol`.
pub fn eigenvector_bipartite<T: Scalar>(
    pop: &PopulationGraph,
    opts: &EigenOptions<T>,
) -> Result<(Vec<T>, EigenMeta<T>)> {
    if opts.tol <= T::zero() {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let w = pop.weights();
    let wt = pop.thread_members();
    let nm = pop.member_count();
    let nt = pop.thread_count();
    let edge = |x: u32| if opts.weighted { count::<T>(x as usize) } else { T::one() };

    let mut x = vec![T::one(); nm + nt];
    normalize(&mut x);
    let mut iterations = 0;
    let mut residual = T::infinity();
    while iterations < opts.max_iter {
        iterations += 1;
        let (xm, xt) = x.split_at(nm);
        let mut y: Vec<T> = (0..nm)
            .into_par_iter()
            .map(|m| xm[m] + w.row(m).map(|(t, a)| edge(a) * xt[t]).sum::<T>())
            .collect();
        y.par_extend(
            (0..nt)
                .into_par_iter()
                .map(|t| xt[t] + wt.row(t).map(|(m, a)| edge(a) * xm[m]).sum::<T>()),
        );
        normalize(&mut y);
        residual = x
            .iter()
            .zip(&y)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();
        x = y;
        if residual < opts.tol {
            break;
        }
    }
    let (xm, xt) = x.split_at(nm);
    let quad: T = (0..nm)
        .map(|m| w.row(m).map(|(t, a)| edge(a) * xm[m] * xt[t]).sum::<T>())
        .sum();
    let lambda = lit::<T>(2.0) * quad;
    let meta = EigenMeta {
        iterations,
        residual,
        lambda_max_estimate: lambda,
        converged: residual < opts.tol,
        weighted: opts.weighted,
    };
    if !meta.converged {
        tracing::warn!(iterations, residual = %residual, "eigenvector iteration did not converge");
    }
    Ok((x, meta))
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm > T::zero() {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Member components of the bipartite principal eigenvector. A result that
/// hit `max_iter` is returned with `meta.converged == false`.
pub fn eigenvector<T: Scalar>(
    pop: &PopulationGraph,
    opts: &EigenOptions<T>,
) -> Result<CentralityVector<T>> {
    let (mut x, meta) = eigenvector_bipartite(pop, opts)?;
    x.truncate(pop.member_count());
    Ok(from_population(pop, Metric::Eigenvector, x, Some(meta)))
}

/// Neighbour lists of the bipartite graph, members `0..m` then threads `m..m+t`.
pub fn bipartite_adjacency(pop: &PopulationGraph) -> Vec<Vec<usize>> {
    let nm = pop.member_count();
    let mut adj: Vec<Vec<usize>> = (0..nm)
        .map(|m| pop.weights().row(m).map(|(t, _)| nm + t).collect())
        .collect();
    adj.extend((0..pop.thread_count()).map(|t| pop.thread_members().row(t).map(|(m, _)| m).collect()));
    adj
}

/// Exact betweenness on an unweighted undirected graph, summed over ordered
/// pairs (so a path `a–b–c` gives `b` a score of 2).
pub fn brandes<T: Scalar>(adj: &[Vec<usize>]) -> Vec<T> {
    let n = adj.len();
    let sources: Vec<usize> = (0..n).collect();
    let partial: Vec<Vec<f64>> = sources
        .par_chunks(32)
        .map(|chunk| {
            let mut acc = vec![0.0f64; n];
            for &s in chunk {
                let mut order = Vec::with_capacity(n);
                let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
                let mut sigma = vec![0.0f64; n];
                let mut dist = vec![usize::MAX; n];
                sigma[s] = 1.0;
                dist[s] = 0;
                let mut queue = VecDeque::from([s]);
                while let Some(v) = queue.pop_front() {
                    order.push(v);
                    for &w in &adj[v] {
                        if dist[w] == usize::MAX {
                            dist[w] = dist[v] + 1;
                            queue.push_back(w);
                        }
                        if dist[w] == dist[v] + 1 {
                            sigma[w] += sigma[v];
                            preds[w].push(v);
                        }
                    }
                }
                let mut delta = vec![0.0f64; n];
                while let Some(w) = order.pop() {
                    for &v in &preds[w] {
                        delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                    }
                    if w != s {
                        acc[w] += delta[w];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0f64; n];
    // Fixed chunking and in-order summation keep results independent of scheduling.
    for chunk in &partial {
        for (t, c) in total.iter_mut().zip(chunk) {
            *t += c;
        }
    }
    total.into_iter().map(|v| lit(v)).collect()
}

/// Betweenness of every node of the bipartite graph, members first.
pub fn betweenness_bipartite<T: Scalar>(pop: &PopulationGraph, node_limit: usize) -> Result<Vec<T>> {
    let nodes = pop.member_count() + pop.thread_count();
    if nodes > node_limit {
        return Err(Error::TooLargeForBetweenness {
            nodes,
            limit: node_limit,
        });
    }
    Ok(brandes(&bipartite_adjacency(pop)))
}

pub fn betweenness_exact<T: Scalar>(
    pop: &PopulationGraph,
    node_limit: usize,
) -> Result<CentralityVector<T>> {
    let mut all = betweenness_bipartite(pop, node_limit)?;
    all.truncate(pop.member_count());
    Ok(from_population(pop, Metric::Betweenness, all, None))
}

/// Dispatches on `metric` with default options.
pub fn compute<T: Scalar>(
    pop: &PopulationGraph,
    metric: Metric,
    eigen: &EigenOptions<T>,
    node_limit: usize,
) -> Result<CentralityVector<T>> {
    match metric {
        Metric::PostDegree => Ok(post_degree(pop)),
        Metric::ThreadDegree => Ok(thread_degree(pop)),
        Metric::Eigenvector => eigenvector(pop, eigen),
        Metric::Betweenness => betweenness_exact(pop, node_limit),
    }
}
