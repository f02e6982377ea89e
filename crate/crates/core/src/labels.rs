//! Boundary labels derived from a ground-truth matching.

use std::collections::BTreeMap;

use crate::matching::MatchingResult;
use crate::region_graph::{InstanceCandidate, RegionGraph};
use crate::watershed::BoundaryKey;

/// TRUE (`true`) or FALSE (`false`) per region-region boundary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundaryLabeling(pub BTreeMap<BoundaryKey, bool>);

impl BoundaryLabeling {
    pub fn get(&self, key: &BoundaryKey) -> Option<bool> {
        self.0.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BoundaryKey, &bool)> {
        self.0.iter()
    }

    pub fn false_edges(&self) -> impl Iterator<Item = BoundaryKey> + '_ {
        self.0.iter().filter(|(_, &v)| !v).map(|(k, _)| *k)
    }
}

/// Edges inside a matched candidate become FALSE; every other edge is TRUE.
pub fn assign_labels(
    result: &MatchingResult,
    cands: &[InstanceCandidate],
    g: &RegionGraph,
) -> BoundaryLabeling {
    let mut labels: BTreeMap<BoundaryKey, bool> = g.edges.keys().map(|&k| (k, true)).collect();
    for &(_, j) in &result.flows {
        let c = &cands[j];
        for (k, v) in labels.iter_mut() {
            if c.contains(k.a) && c.contains(k.b) {
                *v = false;
            }
        }
    }
    BoundaryLabeling(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region_graph::{enumerate_candidates, EnumerationCaps};

    fn path3() -> RegionGraph {
        RegionGraph::new(
            [(1, 2), (2, 2), (3, 2)],
            [(BoundaryKey::new(1, 2), 1), (BoundaryKey::new(2, 3), 1)],
        )
        .unwrap()
    }

    #[test]
    fn matched_pair_makes_its_inner_edge_false() {
        let g = path3();
        let cands = enumerate_candidates(&g, EnumerationCaps::default()).unwrap();
        let pick = |r: &[u32]| cands.iter().position(|c| c.regions == r).unwrap();
        let result = MatchingResult {
            flows: vec![(0, pick(&[1, 2])), (1, pick(&[3]))],
            objective: 2.0,
        };
        let l = assign_labels(&result, &cands, &g);
        assert_eq!(l.get(&BoundaryKey::new(1, 2)), Some(false));
        assert_eq!(l.get(&BoundaryKey::new(2, 3)), Some(true));
    }

    #[test]
    fn nothing_selected_means_all_true() {
        let g = path3();
        let cands = enumerate_candidates(&g, EnumerationCaps::default()).unwrap();
        let l = assign_labels(&MatchingResult::empty(), &cands, &g);
        assert_eq!(l.len(), 2);
        assert!(l.iter().all(|(_, &v)| v));
    }

    #[test]
    fn whole_triangle_selected_makes_all_false() {
        let g = RegionGraph::new(
            [(1, 1), (2, 1), (3, 1)],
            [
                (BoundaryKey::new(1, 2), 1),
                (BoundaryKey::new(2, 3), 1),
                (BoundaryKey::new(1, 3), 1),
            ],
        )
        .unwrap();
        let cands = vec![InstanceCandidate::new(vec![1, 2, 3])];
        let result = MatchingResult {
            flows: vec![(0, 0)],
            objective: 1.0,
        };
        let l = assign_labels(&result, &cands, &g);
        assert_eq!(l.false_edges().count(), 3);
    }
}
