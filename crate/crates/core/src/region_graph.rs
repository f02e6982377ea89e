//! Region adjacency graph and connected-subgraph instance candidates.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{CebError, Result};
use crate::watershed::{BoundaryKey, BoundarySet, Flood, RegionSet};

pub const DEFAULT_MAX_NODES: usize = 20;
pub const DEFAULT_MAX_CANDIDATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionGraph {
    /// Region id to pixel count.
    pub nodes: BTreeMap<u32, usize>,
    /// Boundary key to pixel count.
    pub edges: BTreeMap<BoundaryKey, usize>,
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
}

impl RegionGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = (u32, usize)>,
        edges: impl IntoIterator<Item = (BoundaryKey, usize)>,
    ) -> Result<Self> {
        let nodes: BTreeMap<u32, usize> = nodes.into_iter().collect();
        let mut adjacency: BTreeMap<u32, BTreeSet<u32>> =
            nodes.keys().map(|&r| (r, BTreeSet::new())).collect();
        let mut edge_map = BTreeMap::new();
        for (key, len) in edges {
            for r in [key.a, key.b] {
                if !nodes.contains_key(&r) {
                    return Err(CebError::Structure(format!(
                        "boundary {key} references unknown region {r}"
                    )));
                }
            }
            adjacency.get_mut(&key.a).unwrap().insert(key.b);
            adjacency.get_mut(&key.b).unwrap().insert(key.a);
            edge_map.insert(key, len);
        }
        Ok(RegionGraph {
            nodes,
            edges: edge_map,
            adjacency,
        })
    }

    pub fn neighbors(&self, r: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.get(&r).into_iter().flatten().copied()
    }

    pub fn degree(&self, r: u32) -> usize {
        self.adjacency.get(&r).map_or(0, |s| s.len())
    }

    pub fn contains(&self, r: u32) -> bool {
        self.nodes.contains_key(&r)
    }

    /// Edges incident to `r`.
    pub fn incident(&self, r: u32) -> impl Iterator<Item = BoundaryKey> + '_ {
        self.neighbors(r).map(move |o| BoundaryKey::new(r, o))
    }

    /// Connected components as ascending id lists, ordered by smallest id.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.nodes.keys() {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(r) = stack.pop() {
                for n in self.neighbors(r) {
                    if seen.insert(n) {
                        comp.push(n);
                        stack.push(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected_subset(&self, ids: &[u32]) -> bool {
        if ids.is_empty() {
            return false;
        }
        let set: BTreeSet<u32> = ids.iter().copied().collect();
        let mut seen = BTreeSet::from([ids[0]]);
        let mut stack = vec![ids[0]];
        while let Some(r) = stack.pop() {
            for n in self.neighbors(r) {
                if set.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == set.len()
    }
}

pub fn build_graph(regions: &RegionSet, boundaries: &BoundarySet) -> Result<RegionGraph> {
    RegionGraph::new(
        regions.iter().map(|(&r, px)| (r, px.len())),
        boundaries.iter().map(|(&k, px)| (k, px.len())),
    )
}

pub fn graph_of(flood: &Flood) -> Result<RegionGraph> {
    build_graph(&flood.regions, &flood.boundaries)
}

/// Connected set of regions that may form one instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceCandidate {
    /// Ascending region ids.
    pub regions: Vec<u32>,
}

impl InstanceCandidate {
    pub fn new(mut regions: Vec<u32>) -> Self {
        regions.sort_unstable();
        regions.dedup();
        InstanceCandidate { regions }
    }

    pub fn contains(&self, r: u32) -> bool {
        self.regions.binary_search(&r).is_ok()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationCaps {
    pub max_nodes: usize,
    pub max_candidates: usize,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps {
            max_nodes: DEFAULT_MAX_NODES,
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

/// Enumerates every connected subset of one component. Each subset is grown
/// from its smallest id; vertices popped from the extension set are excluded
/// from later sibling branches, so every subset appears exactly once.
/// `budget` bounds the number of subsets produced.
pub fn enumerate_component(
    g: &RegionGraph,
    component: &[u32],
    budget: usize,
) -> Result<Vec<InstanceCandidate>> {
    let mut out = Vec::new();
    for &root in component {
        let mut current = vec![root];
        let ext: BTreeSet<u32> = g.neighbors(root).filter(|&n| n > root).collect();
        let mut excluded = BTreeSet::new();
        grow(g, root, &mut current, ext, &mut excluded, &mut out, budget).map_err(|_| {
            CebError::Capacity {
                first_region: component[0],
                nodes: component.len(),
                what: format!("more than {budget} candidates"),
            }
        })?;
    }
    out.sort();
    Ok(out)
}

struct Overflow;

fn grow(
    g: &RegionGraph,
    root: u32,
    current: &mut Vec<u32>,
    mut ext: BTreeSet<u32>,
    excluded: &mut BTreeSet<u32>,
    out: &mut Vec<InstanceCandidate>,
    budget: usize,
) -> std::result::Result<(), Overflow> {
    if out.len() >= budget {
        return Err(Overflow);
    }
    out.push(InstanceCandidate::new(current.clone()));
    let mut popped = Vec::new();
    while let Some(u) = ext.pop_first() {
        let mut next_ext = ext.clone();
        for n in g.neighbors(u) {
            if n > root
                && !current.contains(&n)
                && !excluded.contains(&n)
                && !ext.contains(&n)
                && n != u
            {
                next_ext.insert(n);
            }
        }
        current.push(u);
        let r = grow(g, root, current, next_ext, excluded, out, budget);
        current.pop();
        r?;
        excluded.insert(u);
        popped.push(u);
    }
    for u in popped {
        excluded.remove(&u);
    }
    Ok(())
}

/// All connected subgraphs of `g`, sorted lexicographically by id list.
pub fn enumerate_candidates(
    g: &RegionGraph,
    caps: EnumerationCaps,
) -> Result<Vec<InstanceCandidate>> {
    let mut out = Vec::new();
    for comp in g.components() {
        if comp.len() > caps.max_nodes {
            return Err(CebError::Capacity {
                first_region: comp[0],
                nodes: comp.len(),
                what: format!("exceeds max_nodes {}", caps.max_nodes),
            });
        }
        let budget = caps.max_candidates.saturating_sub(out.len());
        out.extend(enumerate_component(g, &comp, budget)?);
    }
    out.sort();
    Ok(out)
}

/// Indices of the candidates containing region `r`.
pub fn candidates_containing(
    g: &RegionGraph,
    r: u32,
    cands: &[InstanceCandidate],
) -> Result<Vec<usize>> {
    if !g.contains(r) {
        return Err(CebError::Invalid(format!("unknown region id {r}")));
    }
    Ok(cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.contains(r))
        .map(|(i, _)| i)
        .collect())
}

/// Region id to the indices of all candidates containing it.
pub fn containment_index(cands: &[InstanceCandidate]) -> BTreeMap<u32, Vec<usize>> {
    let mut k: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, c) in cands.iter().enumerate() {
        for &r in &c.regions {
            k.entry(r).or_default().push(i);
        }
    }
    k
}

/// Boundaries with both end regions inside `regions` (ascending).
pub fn internal_boundaries<'a>(
    regions: &'a [u32],
    boundaries: &'a BoundarySet,
) -> impl Iterator<Item = (&'a BoundaryKey, &'a Vec<usize>)> + 'a {
    boundaries.iter().filter(move |(k, _)| {
        regions.binary_search(&k.a).is_ok() && regions.binary_search(&k.b).is_ok()
    })
}

/// Pixels of a candidate: its member regions plus the boundaries internal to
/// it. Boundary pixels on the candidate's rim are left out. Ascending.
pub fn candidate_mask(
    regions: &[u32],
    region_set: &RegionSet,
    boundaries: &BoundarySet,
) -> Vec<usize> {
    let mut sorted = regions.to_vec();
    sorted.sort_unstable();
    let mut px: Vec<usize> = sorted
        .iter()
        .filter_map(|r| region_set.get(r))
        .flatten()
        .copied()
        .collect();
    for (_, b) in internal_boundaries(&sorted, boundaries) {
        px.extend_from_slice(b);
    }
    px.sort_unstable();
    px
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> RegionGraph {
        RegionGraph::new(
            [(1, 2), (2, 2), (3, 2)],
            [(BoundaryKey::new(1, 2), 1), (BoundaryKey::new(2, 3), 1)],
        )
        .unwrap()
    }

    fn triangle() -> RegionGraph {
        RegionGraph::new(
            [(1, 1), (2, 1), (3, 1)],
            [
                (BoundaryKey::new(1, 2), 1),
                (BoundaryKey::new(2, 3), 1),
                (BoundaryKey::new(1, 3), 1),
            ],
        )
        .unwrap()
    }

    fn ids(c: &[InstanceCandidate]) -> Vec<Vec<u32>> {
        c.iter().map(|c| c.regions.clone()).collect()
    }

    #[test]
    fn path_graph_has_six_candidates() {
        let c = enumerate_candidates(&path3(), EnumerationCaps::default()).unwrap();
        assert_eq!(
            ids(&c),
            vec![
                vec![1],
                vec![1, 2],
                vec![1, 2, 3],
                vec![2],
                vec![2, 3],
                vec![3]
            ]
        );
    }

    #[test]
    fn isolated_node_is_its_own_candidate() {
        let g = RegionGraph::new([(7, 3)], []).unwrap();
        let c = enumerate_candidates(&g, EnumerationCaps::default()).unwrap();
        assert_eq!(ids(&c), vec![vec![7]]);
        assert_eq!(candidates_containing(&g, 7, &c).unwrap(), vec![0]);
    }

    #[test]
    fn triangle_has_all_seven_subsets() {
        let c = enumerate_candidates(&triangle(), EnumerationCaps::default()).unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(candidates_containing(&triangle(), 1, &c).unwrap().len(), 4);
    }

    #[test]
    fn candidates_containing_middle_of_path() {
        let g = path3();
        let c = enumerate_candidates(&g, EnumerationCaps::default()).unwrap();
        let k: Vec<Vec<u32>> = candidates_containing(&g, 2, &c)
            .unwrap()
            .into_iter()
            .map(|i| c[i].regions.clone())
            .collect();
        assert_eq!(k, vec![vec![1, 2], vec![1, 2, 3], vec![2], vec![2, 3]]);
        assert!(candidates_containing(&g, 9, &c).is_err());
    }

    #[test]
    fn dangling_boundary_is_structural_error() {
        let err = RegionGraph::new([(1, 1)], [(BoundaryKey::new(1, 2), 1)]).unwrap_err();
        assert!(matches!(err, CebError::Structure(_)));
    }

    #[test]
    fn caps_are_enforced() {
        let g = triangle();
        let caps = EnumerationCaps {
            max_nodes: 2,
            max_candidates: 100,
        };
        assert!(matches!(
            enumerate_candidates(&g, caps),
            Err(CebError::Capacity { nodes: 3, .. })
        ));
        let caps = EnumerationCaps {
            max_nodes: 20,
            max_candidates: 5,
        };
        assert!(matches!(
            enumerate_candidates(&g, caps),
            Err(CebError::Capacity { .. })
        ));
    }

    #[test]
    fn mask_includes_internal_boundaries_only() {
        let mut regions = RegionSet::new();
        regions.insert(1, vec![0, 1]);
        regions.insert(2, vec![3, 4]);
        let mut boundaries = BoundarySet::new();
        boundaries.insert(BoundaryKey::new(1, 2), vec![2]);
        assert_eq!(
            candidate_mask(&[1, 2], &regions, &boundaries),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(candidate_mask(&[1], &regions, &boundaries), vec![0, 1]);
    }
}
