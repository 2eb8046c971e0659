#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use forumstrat::graph::{ForumGraph, PopulationGraph, PostRecord, SelectionRule};
use forumstrat::synth::{generate, SynthConfig};
use rand::Rng;

pub struct Labeled {
    pub graph: Arc<ForumGraph>,
    pub pop: PopulationGraph,
    pub labels: HashMap<String, usize>,
    pub classes: Vec<String>,
}

pub fn labeled_population(records: Vec<PostRecord>, truth: &[String], classes: Vec<String>) -> Labeled {
    let labels = records
        .iter()
        .zip(truth)
        .map(|(r, l)| (r.post_id.clone(), classes.iter().position(|c| c == l).unwrap()))
        .collect();
    let graph = Arc::new(ForumGraph::ingest(records).unwrap());
    let pop = PopulationGraph::project(graph.clone(), SelectionRule::all()).unwrap();
    Labeled {
        graph,
        pop,
        labels,
        classes,
    }
}

pub fn synth_population(cfg: &SynthConfig) -> Labeled {
    let corpus = generate(cfg).unwrap();
    labeled_population(corpus.records, &corpus.labels, cfg.class_ids())
}

pub fn record(member: usize, thread: usize, post: usize) -> PostRecord {
    PostRecord {
        forum: "f".into(),
        board: format!("b{}", thread % 3),
        thread_id: format!("t{thread}"),
        thread_title: format!("thread {thread}"),
        member_id: format!("m{member}"),
        post_id: format!("p{post}"),
        content: "text".into(),
        post_type: "offer".into(),
        timestamp: Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
    }
}

/// Connected random bipartite forum: member `i` posts in threads `i % t` and
/// `(i + 1) % t`, then `extra` random posts are added.
pub fn random_forum<R: Rng>(rng: &mut R, members: usize, threads: usize, extra: usize) -> Vec<PostRecord> {
    let mut out = Vec::new();
    for i in 0..members {
        out.push(record(i, i % threads, out.len()));
        out.push(record(i, (i + 1) % threads, out.len()));
    }
    for _ in 0..extra {
        let m = rng.gen_range(0..members);
        let t = rng.gen_range(0..threads);
        out.push(record(m, t, out.len()));
    }
    out
}
