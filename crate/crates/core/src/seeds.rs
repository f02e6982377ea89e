//! Seed generation from the instance candidate forest.
//!
//! Every distinct (quantized) probability level above 0.5 thresholds the map
//! into connected components. Components at higher levels nest inside
//! components at lower levels, which yields a forest; the deepest components
//! become watershed seeds.

use crate::error::{CebError, Result};
use crate::grid::{component_pixels, label_components, Connectivity, Grid};
use crate::raster::{LabelMap, ProbMap};

/// Probabilities at or below this value never generate candidates.
pub const FOREGROUND_FLOOR: f32 = 0.5;

/// Ascending, merged probability thresholds, all strictly above 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdList(Vec<f32>);

impl ThresholdList {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|&v| v <= FOREGROUND_FLOOR || v > 1.0) {
            return Err(CebError::Invalid("thresholds must lie in (0.5, 1]".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CebError::Invalid(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(ThresholdList(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

/// Collects the distinct values above 0.5 and merges runs closer than
/// `step`: scanning upward, a value joins the current group while it is
/// less than `group_start + step`, and each group is represented by its
/// smallest member. Consecutive thresholds therefore differ by at least
/// `step`, and every pixel of a group passes that group's threshold.
pub fn build_threshold_list(p: &ProbMap, step: f32) -> Result<ThresholdList> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(CebError::Invalid(format!(
            "quantization step {step} must lie in (0, 0.1]"
        )));
    }
    let mut vals: Vec<f32> = p
        .values()
        .iter()
        .copied()
        .filter(|&v| v > FOREGROUND_FLOOR)
        .collect();
    vals.sort_by(f32::total_cmp);
    vals.dedup();
    let mut out: Vec<f32> = Vec::new();
    for v in vals {
        match out.last() {
            Some(&start) if (v as f64) < start as f64 + step as f64 => {}
            _ => out.push(v),
        }
    }
    Ok(ThresholdList(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestNode {
    /// Index into the threshold list that generated this node.
    pub level: usize,
    pub threshold: f32,
    /// Ascending pixel indices.
    pub pixels: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl ForestNode {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateForest {
    pub width: usize,
    pub height: usize,
    pub nodes: Vec<ForestNode>,
}

impl CandidateForest {
    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.parent.is_none())
            .map(|(i, _)| i)
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, _)| i)
    }
}

pub fn build_forest(
    p: &ProbMap,
    thresholds: &ThresholdList,
    conn: Connectivity,
) -> Result<CandidateForest> {
    if thresholds.is_empty() {
        return Err(CebError::Invalid("threshold list is empty".into()));
    }
    let grid = Grid::new(p.width(), p.height());
    let mut nodes: Vec<ForestNode> = Vec::new();
    // node index per component label at the previous level
    let mut prev: Option<(Vec<u32>, Vec<usize>)> = None;
    for (level, &t) in thresholds.values().iter().enumerate() {
        let mask: Vec<bool> = p.values().iter().map(|&v| v >= t).collect();
        let (labels, count) = label_components(grid, &mask, conn);
        let mut ids = Vec::with_capacity(count as usize);
        for pixels in component_pixels(&labels, count) {
            let parent = prev.as_ref().map(|(plabels, pids)| {
                let l = plabels[pixels[0]];
                debug_assert!(l > 0, "higher-level component escaped its parent");
                pids[l as usize - 1]
            });
            let id = nodes.len();
            if let Some(par) = parent {
                nodes[par].children.push(id);
            }
            nodes.push(ForestNode {
                level,
                threshold: t,
                pixels,
                parent,
                children: Vec::new(),
            });
            ids.push(id);
        }
        prev = Some((labels, ids));
    }
    Ok(CandidateForest {
        width: p.width(),
        height: p.height(),
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seed {
    pub id: u32,
    /// Ascending pixel indices.
    pub pixels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedSet {
    pub seeds: Vec<Seed>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn to_labelmap(&self, width: usize, height: usize) -> LabelMap {
        let mut map = LabelMap::zeros(width, height);
        let labels = map.labels_mut();
        for s in &self.seeds {
            for &px in &s.pixels {
                labels[px] = s.id;
            }
        }
        map
    }
}

/// Emits one seed per leaf of the forest pruned to nodes with at least
/// `min_area` pixels. Because areas shrink toward the leaves, the pruned
/// forest keeps every ancestor of a surviving node; a chain whose tip is
/// tiny still seeds from its deepest large-enough node.
///
/// Ids run 1..=n ordered by each seed's first pixel in row-major order.
pub fn extract_seeds(forest: &CandidateForest, min_area: usize) -> SeedSet {
    let min_area = min_area.max(1);
    let mut picked: Vec<&ForestNode> = forest
        .nodes
        .iter()
        .filter(|n| {
            n.area() >= min_area
                && n.children
                    .iter()
                    .all(|&c| forest.nodes[c].area() < min_area)
        })
        .collect();
    picked.sort_by_key(|n| n.pixels[0]);
    SeedSet {
        seeds: picked
            .into_iter()
            .enumerate()
            .map(|(i, n)| Seed {
                id: i as u32 + 1,
                pixels: n.pixels.clone(),
            })
            .collect(),
    }
}

/// Thresholds, forest and seed extraction in one call.
pub fn generate_seeds(
    p: &ProbMap,
    step: f32,
    min_area: usize,
    conn: Connectivity,
) -> Result<SeedSet> {
    let thresholds = build_threshold_list(p, step)?;
    if thresholds.is_empty() {
        return Ok(SeedSet::default());
    }
    let forest = build_forest(p, &thresholds, conn)?;
    Ok(extract_seeds(&forest, min_area))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(w: usize, h: usize, v: &[f32]) -> ProbMap {
        ProbMap::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn duplicate_values_are_removed() {
        let p = map(3, 1, &[0.6, 0.6, 0.8]);
        let t = build_threshold_list(&p, 0.01).unwrap();
        assert_eq!(t.values(), &[0.6, 0.8]);
    }

    #[test]
    fn values_within_a_step_merge() {
        let p = map(2, 1, &[0.601, 0.604]);
        let t = build_threshold_list(&p, 0.01).unwrap();
        assert_eq!(t.values(), &[0.601]);
    }

    #[test]
    fn no_foreground_gives_empty_list() {
        let p = map(3, 1, &[0.5, 0.2, 0.0]);
        assert!(build_threshold_list(&p, 0.01).unwrap().is_empty());
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        let p = map(1, 1, &[0.9]);
        assert!(build_threshold_list(&p, 0.0).is_err());
        assert!(build_threshold_list(&p, 0.5).is_err());
    }

    #[test]
    fn separated_blobs_give_two_roots() {
        let p = map(5, 1, &[0.9, 0.9, 0.1, 0.9, 0.9]);
        let t = build_threshold_list(&p, 0.01).unwrap();
        let f = build_forest(&p, &t, Connectivity::Eight).unwrap();
        assert_eq!(f.roots().count(), 2);
        assert_eq!(f.nodes.len(), 2);
    }

    #[test]
    fn uniform_blob_is_a_single_chain() {
        let p = map(3, 3, &[0.7; 9]);
        let t = build_threshold_list(&p, 0.01).unwrap();
        let f = build_forest(&p, &t, Connectivity::Eight).unwrap();
        assert_eq!(f.nodes.len(), 1);
        let s = extract_seeds(&f, 3);
        assert_eq!(s.len(), 1);
        assert_eq!(s.seeds[0].pixels, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn chain_seeds_from_highest_component() {
        let p = map(3, 1, &[0.6, 0.8, 0.6]);
        let t = build_threshold_list(&p, 0.01).unwrap();
        let f = build_forest(&p, &t, Connectivity::Eight).unwrap();
        let s = extract_seeds(&f, 1);
        assert_eq!(
            s.seeds,
            vec![Seed {
                id: 1,
                pixels: vec![1]
            }]
        );
    }

    #[test]
    fn small_leaves_are_dropped() {
        // three separate blobs of areas 5, 9 and 1
        let mut v = vec![0.0f32; 20 * 3];
        for x in 0..5 {
            v[x] = 0.9;
        }
        for x in 7..16 {
            v[x] = 0.9;
        }
        v[19] = 0.9;
        let p = map(20, 3, &v);
        let f = build_forest(
            &p,
            &build_threshold_list(&p, 0.01).unwrap(),
            Connectivity::Eight,
        )
        .unwrap();
        assert_eq!(f.leaves().count(), 3);
        let s = extract_seeds(&f, 2);
        assert_eq!(s.len(), 2);
        assert_eq!(s.seeds[0].pixels.len(), 5);
        assert_eq!(s.seeds[1].pixels.len(), 9);
        assert!(extract_seeds(&f, 10).is_empty());
    }

    fn random_map(seed: u64, w: usize, h: usize) -> ProbMap {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = (0..w * h)
            .map(|_| (rng.gen_range(0..20) as f32) / 19.0)
            .collect();
        ProbMap::new(w, h, v).unwrap()
    }

    proptest! {
        #[test]
        fn children_nest_inside_parents(seed in 0u64..1000) {
            let p = random_map(seed, 12, 9);
            let t = build_threshold_list(&p, 1.0 / 255.0).unwrap();
            prop_assume!(!t.is_empty());
            let f = build_forest(&p, &t, Connectivity::Eight).unwrap();
            for n in &f.nodes {
                if let Some(par) = n.parent {
                    let parent = &f.nodes[par];
                    prop_assert_eq!(parent.level + 1, n.level);
                    prop_assert!(n.pixels.iter().all(|px| parent.pixels.binary_search(px).is_ok()));
                }
            }
            // same-level nodes are disjoint
            let mut owner = std::collections::HashMap::new();
            for (i, n) in f.nodes.iter().enumerate() {
                for &px in &n.pixels {
                    prop_assert!(owner.insert((n.level, px), i).is_none());
                }
            }
        }

        #[test]
        fn seeds_are_disjoint_and_monotone_in_min_area(seed in 0u64..1000, a in 1usize..6) {
            let p = random_map(seed, 12, 9);
            let t = build_threshold_list(&p, 1.0 / 255.0).unwrap();
            prop_assume!(!t.is_empty());
            let f = build_forest(&p, &t, Connectivity::Eight).unwrap();
            let big = extract_seeds(&f, a + 1);
            let small = extract_seeds(&f, a);
            prop_assert!(small.len() >= big.len());
            let mut seen = vec![false; p.len()];
            for s in &small.seeds {
                for &px in &s.pixels {
                    prop_assert!(!seen[px]);
                    prop_assert!(p.at(px) > FOREGROUND_FLOOR);
                    seen[px] = true;
                }
            }
        }
    }
}
