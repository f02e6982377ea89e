//! Single-frame segmentation and training-label generation.

use std::collections::{BTreeMap, BTreeSet};

use crate::classifier::{binarize, Scorer, DEFAULT_THETA};
use crate::error::{CebError, Result};
use crate::grid::{Connectivity, Grid};
use crate::labels::{assign_labels, BoundaryLabeling};
use crate::matching::{solve_gi, MatchingResult, ScoreMatrix, SolverOptions};
use crate::raster::{LabelMap, ProbMap};
use crate::region_graph::{
    candidate_mask, enumerate_component, graph_of, EnumerationCaps, InstanceCandidate, RegionGraph,
};
use crate::seeds::{generate_seeds, FOREGROUND_FLOOR};
use crate::signature::{extract_all, SignatureConfig, SignatureRecord};
use crate::watershed::{flood, BoundaryKey, Flood, PixelStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Ceb,
    /// Every region-region boundary is taken as TRUE.
    WithoutClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RimPolicy {
    /// Adjacent instance with the higher mean probability, ties to the lower id.
    #[default]
    HigherMean,
    Unassigned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub step: f32,
    pub min_area: usize,
    pub connectivity: Connectivity,
    pub signature: SignatureConfig,
    pub theta: f64,
    pub caps: EnumerationCaps,
    pub mode: Mode,
    pub rim: RimPolicy,
    pub solver: SolverOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            step: 1.0 / 255.0,
            min_area: 3,
            connectivity: Connectivity::Eight,
            signature: SignatureConfig::default(),
            theta: DEFAULT_THETA,
            caps: EnumerationCaps::default(),
            mode: Mode::Ceb,
            rim: RimPolicy::HigherMean,
            solver: SolverOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 0.1) {
            return Err(CebError::Range(format!(
                "step {} must be in (0, 0.1]",
                self.step
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(CebError::Range(format!(
                "theta {} must be in [0,1]",
                self.theta
            )));
        }
        if self.min_area == 0 {
            return Err(CebError::Range("min_area must be at least 1".into()));
        }
        if self.signature.canvas == 0 || self.signature.branch_length == 0 {
            return Err(CebError::Range(
                "canvas and branch length must be positive".into(),
            ));
        }
        if self.caps.max_nodes == 0 || self.caps.max_candidates == 0 {
            return Err(CebError::Range("enumeration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Watershed output, region graph and signatures of one frame.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub frame: usize,
    pub flood: Flood,
    pub graph: RegionGraph,
    pub signatures: Vec<SignatureRecord>,
}

pub fn analyze_frame(p: &ProbMap, frame: usize, cfg: &PipelineConfig) -> Result<FrameAnalysis> {
    cfg.validate()?;
    let fg = p.foreground(FOREGROUND_FLOOR);
    let seeds = generate_seeds(p, cfg.step, cfg.min_area, cfg.connectivity)?;
    let flood = if seeds.is_empty() {
        Flood::unseeded(p.width(), p.height(), &fg)
    } else {
        flood(p, &fg, &seeds, cfg.connectivity)?
    };
    if !flood.unreachable.is_empty() {
        log::info!(
            "frame {frame}: {} foreground pixels reached by no seed",
            flood.unreachable.len()
        );
    }
    let graph = graph_of(&flood)?;
    let signatures = extract_all(&flood, frame, &cfg.signature)?;
    Ok(FrameAnalysis {
        frame,
        flood,
        graph,
        signatures,
    })
}

/// Connected region groups when only the edges in `merge` are kept.
/// Each group ascending; groups ordered by smallest id.
pub fn merge_groups(g: &RegionGraph, merge: &BTreeSet<BoundaryKey>) -> Vec<Vec<u32>> {
    let mut seen = BTreeSet::new();
    let mut groups = Vec::new();
    for &r in g.nodes.keys() {
        if !seen.insert(r) {
            continue;
        }
        let mut group = vec![r];
        let mut stack = vec![r];
        while let Some(u) = stack.pop() {
            for n in g.neighbors(u) {
                if merge.contains(&BoundaryKey::new(u, n)) && seen.insert(n) {
                    group.push(n);
                    stack.push(n);
                }
            }
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// Paints region groups as instances. Ids follow the top-left pixel of each
/// group's mask; rim pixels between two instances, and foreground pixels the
/// flood left unreached, are then placed by `rim`.
pub fn render_instances(
    flood: &Flood,
    p: &ProbMap,
    groups: &[Vec<u32>],
    rim: RimPolicy,
) -> LabelMap {
    let grid = flood.grid();
    let mut masks: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| candidate_mask(g, &flood.regions, &flood.boundaries))
        .filter(|m| !m.is_empty())
        .collect();
    masks.sort_by_key(|m| m[0]);
    let mut labels = vec![0u32; grid.len()];
    let mut mean = vec![0.0f64];
    for (i, m) in masks.iter().enumerate() {
        let id = i as u32 + 1;
        for &px in m {
            labels[px] = id;
        }
        mean.push(m.iter().map(|&px| p.at(px) as f64).sum::<f64>() / m.len() as f64);
    }
    if rim == RimPolicy::HigherMean {
        let region_label: BTreeMap<u32, u32> = flood
            .regions
            .iter()
            .filter_map(|(&r, px)| px.first().map(|&q| (r, labels[q])))
            .collect();
        let painted = labels.clone();
        for (i, s) in flood.status().iter().enumerate() {
            if *s != PixelStatus::Watershed || painted[i] != 0 {
                continue;
            }
            let Some(key) = flood.boundary_at(i) else {
                continue;
            };
            let sides = [region_label[&key.a], region_label[&key.b]];
            labels[i] = choose_rim(grid, &painted, i, sides, &mean);
        }
        // pixels the flood never reached join a neighboring instance,
        // spreading inward pass by pass
        let mut pending: Vec<usize> = flood.unreachable.clone();
        loop {
            let before = pending.len();
            pending.retain(|&i| {
                let mut best: Option<u32> = None;
                for n in grid.neighbors(i, Connectivity::Eight) {
                    let id = labels[n];
                    if id == 0 {
                        continue;
                    }
                    best = Some(match best {
                        Some(b)
                            if mean[b as usize] > mean[id as usize]
                                || (mean[b as usize] == mean[id as usize] && b < id) =>
                        {
                            b
                        }
                        _ => id,
                    });
                }
                match best {
                    Some(id) => {
                        labels[i] = id;
                        false
                    }
                    None => true,
                }
            });
            if pending.len() == before {
                break;
            }
        }
    }
    LabelMap::new(grid.width, grid.height, labels).expect("dimensions match")
}

fn choose_rim(grid: Grid, painted: &[u32], px: usize, sides: [u32; 2], mean: &[f64]) -> u32 {
    let touching: Vec<u32> = sides
        .iter()
        .copied()
        .filter(|&id| {
            grid.neighbors(px, Connectivity::Eight)
                .any(|n| painted[n] == id)
        })
        .collect();
    let pool = if touching.len() == 1 {
        touching
    } else {
        sides.to_vec()
    };
    let mut best = pool[0];
    for &id in &pool[1..] {
        let (a, b) = (mean[id as usize], mean[best as usize]);
        if a > b || (a == b && id < best) {
            best = id;
        }
    }
    best
}

/// Groups formed by merging over FALSE edges of a labeling.
pub fn groups_from_labels(g: &RegionGraph, labels: &BoundaryLabeling) -> Vec<Vec<u32>> {
    merge_groups(g, &labels.false_edges().collect())
}

pub fn frame_scores(
    analysis: &FrameAnalysis,
    scorer: Option<&Scorer>,
    mode: Mode,
) -> Result<BTreeMap<BoundaryKey, f64>> {
    match (mode, scorer) {
        (Mode::WithoutClassifier, _) => {
            Ok(analysis.signatures.iter().map(|r| (r.key, 1.0)).collect())
        }
        (Mode::Ceb, Some(s)) => s.score_all(&analysis.signatures),
        (Mode::Ceb, None) => Err(CebError::Invalid(
            "a scorer is required unless running without the classifier".into(),
        )),
    }
}

/// Seeds, flood, signatures, scores, merge and render for one frame.
pub fn segment_frame_at(
    p: &ProbMap,
    frame: usize,
    scorer: Option<&Scorer>,
    cfg: &PipelineConfig,
) -> Result<LabelMap> {
    let analysis = analyze_frame(p, frame, cfg)?;
    let scores = frame_scores(&analysis, scorer, cfg.mode)?;
    let labels = binarize(&scores, cfg.theta);
    let groups = groups_from_labels(&analysis.graph, &labels);
    Ok(render_instances(&analysis.flood, p, &groups, cfg.rim))
}

pub fn segment_frame(p: &ProbMap, scorer: &Scorer, cfg: &PipelineConfig) -> Result<LabelMap> {
    segment_frame_at(p, 0, Some(scorer), cfg)
}

pub fn segment_frame_wo_cls(p: &ProbMap, cfg: &PipelineConfig) -> Result<LabelMap> {
    let cfg = PipelineConfig {
        mode: Mode::WithoutClassifier,
        ..*cfg
    };
    segment_frame_at(p, 0, None, &cfg)
}

/// Ground truth against connected-subgraph candidates of one frame.
#[derive(Debug, Clone)]
pub struct GiProblem {
    pub candidates: Vec<InstanceCandidate>,
    /// Rows are ground-truth instances in id order, columns candidates.
    pub scores: ScoreMatrix,
    pub gt_ids: Vec<u32>,
    /// Components left out because enumeration exceeded the caps.
    pub skipped: Vec<Vec<u32>>,
}

pub fn gi_problem(
    analysis: &FrameAnalysis,
    gt: &LabelMap,
    caps: EnumerationCaps,
) -> Result<GiProblem> {
    let flood = &analysis.flood;
    if gt.width() != flood.width || gt.height() != flood.height {
        return Err(CebError::Dimension(format!(
            "ground truth is {}x{}, probability map {}x{}",
            gt.width(),
            gt.height(),
            flood.width,
            flood.height
        )));
    }
    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    for comp in analysis.graph.components() {
        let enumerated = if comp.len() > caps.max_nodes {
            Err(CebError::Capacity {
                first_region: comp[0],
                nodes: comp.len(),
                what: format!("exceeds max_nodes {}", caps.max_nodes),
            })
        } else {
            enumerate_component(&analysis.graph, &comp, caps.max_candidates)
        };
        match enumerated {
            Ok(c) => candidates.extend(c),
            Err(e @ CebError::Capacity { .. }) => {
                log::warn!(
                    "frame {}: skipping component for labels: {e}",
                    analysis.frame
                );
                skipped.push(comp);
            }
            Err(e) => return Err(e),
        }
    }
    candidates.sort();

    let gt_ids = gt.instance_ids();
    let row_of: BTreeMap<u32, usize> = gt_ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut gt_area = vec![0usize; gt_ids.len()];
    for &l in gt.labels() {
        if l > 0 {
            gt_area[row_of[&l]] += 1;
        }
    }
    let histogram = |px: &[usize]| {
        let mut h: BTreeMap<usize, usize> = BTreeMap::new();
        for &q in px {
            let l = gt.labels()[q];
            if l > 0 {
                *h.entry(row_of[&l]).or_default() += 1;
            }
        }
        h
    };
    let region_hist: BTreeMap<u32, BTreeMap<usize, usize>> = flood
        .regions
        .iter()
        .map(|(&r, px)| (r, histogram(px)))
        .collect();
    let boundary_hist: BTreeMap<BoundaryKey, BTreeMap<usize, usize>> = flood
        .boundaries
        .iter()
        .map(|(&k, px)| (k, histogram(px)))
        .collect();

    let mut scores = ScoreMatrix::new(gt_ids.len(), candidates.len());
    for (j, c) in candidates.iter().enumerate() {
        let mut area = 0usize;
        let mut inter: BTreeMap<usize, usize> = BTreeMap::new();
        let mut add = |n: usize, h: &BTreeMap<usize, usize>| {
            area += n;
            for (&row, &cnt) in h {
                *inter.entry(row).or_default() += cnt;
            }
        };
        for r in &c.regions {
            add(flood.regions[r].len(), &region_hist[r]);
        }
        for (k, px) in &flood.boundaries {
            if c.contains(k.a) && c.contains(k.b) {
                add(px.len(), &boundary_hist[k]);
            }
        }
        for (row, i) in inter {
            let iou = i as f64 / (area + gt_area[row] - i) as f64;
            scores.set(row, j, iou)?;
        }
    }
    Ok(GiProblem {
        candidates,
        scores,
        gt_ids,
        skipped,
    })
}

/// Signatures of one frame labeled by the ground-truth matching. Records of
/// components skipped for enumeration size are left out.
pub fn make_training_set(
    p: &ProbMap,
    gt: &LabelMap,
    frame: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<SignatureRecord>> {
    let analysis = analyze_frame(p, frame, cfg)?;
    let (records, _) = label_analysis(&analysis, gt, cfg)?;
    Ok(records)
}

pub fn label_analysis(
    analysis: &FrameAnalysis,
    gt: &LabelMap,
    cfg: &PipelineConfig,
) -> Result<(Vec<SignatureRecord>, MatchingResult)> {
    let problem = gi_problem(analysis, gt, cfg.caps)?;
    let result = solve_gi(&problem.scores, &problem.candidates, cfg.solver)?;
    let labels = assign_labels(&result, &problem.candidates, &analysis.graph);
    let skipped: BTreeSet<u32> = problem.skipped.iter().flatten().copied().collect();
    let records = analysis
        .signatures
        .iter()
        .filter(|r| !skipped.contains(&r.key.a))
        .map(|r| SignatureRecord {
            label: labels.get(&r.key),
            ..r.clone()
        })
        .collect();
    Ok((records, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{Seed, SeedSet};

    fn row_flood() -> (ProbMap, Flood) {
        let p = ProbMap::new(5, 1, vec![0.9, 0.8, 0.6, 0.8, 0.9]).unwrap();
        let fg = vec![true; 5];
        let seeds = SeedSet {
            seeds: vec![
                Seed {
                    id: 1,
                    pixels: vec![0],
                },
                Seed {
                    id: 2,
                    pixels: vec![4],
                },
            ],
        };
        let f = flood(&p, &fg, &seeds, Connectivity::Four).unwrap();
        (p, f)
    }

    #[test]
    fn false_boundary_merges_the_row() {
        let (p, f) = row_flood();
        let g = graph_of(&f).unwrap();
        let merge = BTreeSet::from([BoundaryKey::new(1, 2)]);
        let groups = merge_groups(&g, &merge);
        assert_eq!(groups, vec![vec![1, 2]]);
        let l = render_instances(&f, &p, &groups, RimPolicy::HigherMean);
        assert_eq!(l.labels(), &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn true_boundary_leaves_a_rim_pixel() {
        let (p, f) = row_flood();
        let g = graph_of(&f).unwrap();
        let groups = merge_groups(&g, &BTreeSet::new());
        let l = render_instances(&f, &p, &groups, RimPolicy::Unassigned);
        assert_eq!(l.labels(), &[1, 1, 0, 2, 2]);
        // equal means: the tie goes to the lower id
        let l = render_instances(&f, &p, &groups, RimPolicy::HigherMean);
        assert_eq!(l.labels(), &[1, 1, 1, 2, 2]);
    }

    #[test]
    fn rim_goes_to_the_brighter_instance() {
        let p = ProbMap::new(5, 1, vec![0.9, 0.8, 0.6, 0.95, 0.95]).unwrap();
        let seeds = SeedSet {
            seeds: vec![
                Seed {
                    id: 1,
                    pixels: vec![0],
                },
                Seed {
                    id: 2,
                    pixels: vec![4],
                },
            ],
        };
        let f = flood(&p, &[true; 5], &seeds, Connectivity::Four).unwrap();
        let g = graph_of(&f).unwrap();
        let groups = merge_groups(&g, &BTreeSet::new());
        let l = render_instances(&f, &p, &groups, RimPolicy::HigherMean);
        assert_eq!(l.labels(), &[1, 1, 2, 2, 2]);
    }

    fn two_blobs() -> ProbMap {
        let (w, h) = (12, 5);
        let mut v = vec![0.05f32; w * h];
        for y in 1..4 {
            for x in (1..4).chain(7..11) {
                v[y * w + x] = if y == 2 && (x == 2 || x == 8) {
                    0.95
                } else {
                    0.8
                };
            }
        }
        ProbMap::new(w, h, v).unwrap()
    }

    #[test]
    fn separated_blobs_are_two_instances() {
        let p = two_blobs();
        let l = segment_frame_wo_cls(&p, &PipelineConfig::default()).unwrap();
        assert_eq!(l.instance_ids(), vec![1, 2]);
        assert_eq!(l.get(1, 1), 1);
        assert_eq!(l.get(10, 3), 2);
        assert_eq!(l.labels().iter().filter(|&&x| x > 0).count(), 9 + 12);
    }

    #[test]
    fn constant_one_scorer_equals_without_classifier() {
        let p = two_blobs();
        let cfg = PipelineConfig::default();
        let a = segment_frame(&p, &Scorer::Constant(1.0), &cfg).unwrap();
        let b = segment_frame_wo_cls(&p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ceb_mode_needs_a_scorer() {
        let p = two_blobs();
        assert!(segment_frame_at(&p, 0, None, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn blank_map_has_no_instances() {
        let p = ProbMap::new(4, 4, vec![0.1; 16]).unwrap();
        let l = segment_frame_wo_cls(&p, &PipelineConfig::default()).unwrap();
        assert!(l.instance_ids().is_empty());
    }

    fn two_peak_blob() -> ProbMap {
        // one blob, two bright cores joined through a dimmer waist
        let (w, h) = (11, 5);
        let mut v = vec![0.05f32; w * h];
        for y in 1..4 {
            for x in 1..10 {
                v[y * w + x] = 0.8;
            }
        }
        for &c in &[3usize, 7] {
            for y in 1..4 {
                for x in c - 1..=c + 1 {
                    v[y * w + x] = 0.95;
                }
            }
        }
        v[2 * w + 5] = 0.6;
        v[w + 5] = 0.6;
        v[3 * w + 5] = 0.6;
        ProbMap::new(w, h, v).unwrap()
    }

    #[test]
    fn ground_truth_merging_two_regions_labels_their_boundary_false() {
        let p = two_peak_blob();
        let cfg = PipelineConfig::default();
        let fg: Vec<u32> = p.foreground(0.5).iter().map(|&f| f as u32).collect();
        let gt = LabelMap::new(11, 5, fg).unwrap();
        let recs = make_training_set(&p, &gt, 0, &cfg).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].label, Some(false));
        let oracle = Scorer::oracle_from(&recs);
        let l = segment_frame(&p, &oracle, &cfg).unwrap();
        assert_eq!(l, gt);
    }

    #[test]
    fn ground_truth_matching_regions_labels_true_and_empty_gt_too() {
        let p = two_peak_blob();
        let cfg = PipelineConfig::default();
        let a = analyze_frame(&p, 0, &cfg).unwrap();
        let gt = render_instances(
            &a.flood,
            &p,
            &merge_groups(&a.graph, &BTreeSet::new()),
            RimPolicy::Unassigned,
        );
        let recs = make_training_set(&p, &gt, 0, &cfg).unwrap();
        assert!(recs.iter().all(|r| r.label == Some(true)));
        let empty = LabelMap::zeros(11, 5);
        let recs = make_training_set(&p, &empty, 0, &cfg).unwrap();
        assert!(recs.iter().all(|r| r.label == Some(true)));
    }

    #[test]
    fn oversized_components_are_skipped() {
        let p = two_peak_blob();
        let cfg = PipelineConfig {
            caps: EnumerationCaps {
                max_nodes: 1,
                max_candidates: 10,
            },
            ..PipelineConfig::default()
        };
        let gt = LabelMap::zeros(11, 5);
        assert!(make_training_set(&p, &gt, 0, &cfg).unwrap().is_empty());
    }

    #[test]
    fn mismatched_ground_truth_is_rejected() {
        let p = two_peak_blob();
        let gt = LabelMap::zeros(3, 3);
        assert!(matches!(
            make_training_set(&p, &gt, 0, &PipelineConfig::default()),
            Err(CebError::Dimension(_))
        ));
    }
}
