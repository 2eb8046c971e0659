mod common;

use std::io::BufReader;
use std::sync::Arc;

use forumstrat::graph::{ForumGraph, PopulationGraph, SelectionRule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_jsonl(records: &[forumstrat::graph::PostRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).unwrap();
        out.push(b'\n');
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jsonl_and_snapshot_round_trip(seed in 0u64..10_000, members in 2usize..40, threads in 1usize..10, extra in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = common::random_forum(&mut rng, members, threads, extra);
        let g = ForumGraph::read_jsonl(BufReader::new(&to_jsonl(&records)[..])).unwrap();
        prop_assert_eq!(g.posts().len(), records.len());
        for (i, r) in records.iter().enumerate() {
            prop_assert_eq!(&g.record(g.post_index(&r.post_id).unwrap()), r);
            prop_assert_eq!(g.post_index(&r.post_id), Some(i));
        }
        let mut snap = Vec::new();
        g.write_snapshot(&mut snap).unwrap();
        let back = ForumGraph::read_snapshot(&snap[..]).unwrap();
        prop_assert_eq!(back.stats(), g.stats());
        prop_assert_eq!(back.interact(), g.interact());
        for i in 0..g.posts().len() {
            prop_assert_eq!(back.record(i), g.record(i));
        }
    }

    #[test]
    fn interact_weights_sum_to_posts(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = common::random_forum(&mut rng, 30, 6, 100);
        let g = Arc::new(ForumGraph::ingest(records).unwrap());
        let total: u64 = g.interact().iter().map(|e| u64::from(e.weight)).sum();
        prop_assert_eq!(total, g.posts().len() as u64);
        let pop = PopulationGraph::project(g.clone(), SelectionRule::all()).unwrap();
        prop_assert_eq!(pop.post_count(), g.posts().len());
        prop_assert_eq!(pop.member_count(), 30);
    }
}
