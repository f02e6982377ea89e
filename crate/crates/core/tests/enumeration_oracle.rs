mod common;

use std::collections::BTreeSet;

use ceb_core::region_graph::{enumerate_candidates, EnumerationCaps, RegionGraph};
use ceb_core::BoundaryKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn connected_subsets_match_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let mut nodes: Vec<u32> = Vec::new();
        let mut next = 1;
        for _ in 0..n {
            next += rng.gen_range(1..=3);
            nodes.push(next);
        }
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.35) {
                    edges.push((nodes[a], nodes[b]));
                }
            }
        }
        let g = RegionGraph::new(
            nodes.iter().map(|&r| (r, 1)),
            edges.iter().map(|&(a, b)| (BoundaryKey::new(a, b), 1)),
        )
        .unwrap();
        let got = enumerate_candidates(&g, EnumerationCaps::default()).unwrap();
        let set: BTreeSet<Vec<u32>> = got.iter().map(|c| c.regions.clone()).collect();
        assert_eq!(set.len(), got.len(), "duplicates");
        assert_eq!(set, common::connected_subsets(&nodes, &edges));
    }
}
