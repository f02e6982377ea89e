//! Temporal consistency across video frames.
//!
//! Each frame starts from its confident boundaries: low-scoring edges are
//! contracted, high-scoring edges removed, and isolated nodes selected as
//! instances. The remaining uncertain graph is resolved iteratively by
//! matching neighbor frames' selected instances against this frame's
//! not-yet-selected candidates; leftovers are finally merged at the plain
//! score threshold.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::classifier::Scorer;
use crate::error::{CebError, Result};
use crate::matching::{solve_ssm, solve_sum, unmatched_left, ScoreMatrix, SolverOptions};
use crate::pipeline::{
    analyze_frame, frame_scores, merge_groups, render_instances, FrameAnalysis, PipelineConfig,
};
use crate::raster::{LabelMap, ProbMap};
use crate::region_graph::{enumerate_candidates, EnumerationCaps, InstanceCandidate, RegionGraph};
use crate::watershed::{BoundaryKey, PixelStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every frame reads the previous iteration's states.
    #[default]
    Synchronous,
    /// Frames update in order, each reading its neighbors' latest states.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalConfig {
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub iterations: usize,
    pub schedule: Schedule,
    /// Threshold for the final selection; scores below it merge.
    pub final_threshold: f64,
    pub caps: EnumerationCaps,
    pub solver: SolverOptions,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            sigma_low: 0.1,
            sigma_high: 0.9,
            iterations: 10,
            schedule: Schedule::Synchronous,
            final_threshold: 0.5,
            caps: EnumerationCaps::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.sigma_low && self.sigma_low <= self.sigma_high && self.sigma_high <= 1.0) {
            return Err(CebError::Range(format!(
                "need 0 <= sigma_low ({}) <= sigma_high ({}) <= 1",
                self.sigma_low, self.sigma_high
            )));
        }
        if !(0.0..=1.0).contains(&self.final_threshold) {
            return Err(CebError::Range(format!(
                "final threshold {} must be in [0,1]",
                self.final_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Owner {
    None,
    Region(u32),
    Boundary(BoundaryKey),
}

/// Per-frame inputs: watershed output, graph and boundary scores.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub analysis: FrameAnalysis,
    pub scores: BTreeMap<BoundaryKey, f64>,
    owners: Vec<Owner>,
}

impl FrameInput {
    pub fn new(analysis: FrameAnalysis, scores: BTreeMap<BoundaryKey, f64>) -> Result<Self> {
        if let Some(k) = analysis
            .graph
            .edges
            .keys()
            .find(|k| !scores.contains_key(k))
        {
            return Err(CebError::MissingScore(format!(
                "frame {} boundary {k}",
                analysis.frame
            )));
        }
        let flood = &analysis.flood;
        let owners = flood
            .status()
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                PixelStatus::Region(r) => Owner::Region(*r),
                PixelStatus::Watershed => flood.boundary_at(i).map_or(Owner::None, Owner::Boundary),
                _ => Owner::None,
            })
            .collect();
        Ok(FrameInput {
            analysis,
            scores,
            owners,
        })
    }

    fn region_area(&self, r: u32) -> usize {
        self.analysis.flood.regions[&r].len()
    }

    /// Pixels of an instance given by its regions (members plus internal
    /// boundaries).
    pub fn mask(&self, regions: &[u32]) -> Vec<usize> {
        let f = &self.analysis.flood;
        crate::region_graph::candidate_mask(regions, &f.regions, &f.boundaries)
    }

    fn area(&self, regions: &BTreeSet<u32>) -> usize {
        let f = &self.analysis.flood;
        let mut a: usize = regions.iter().map(|&r| self.region_area(r)).sum();
        for (k, px) in &f.boundaries {
            if regions.contains(&k.a) && regions.contains(&k.b) {
                a += px.len();
            }
        }
        a
    }
}

/// Reduced-graph edge between two super-nodes with its underlying
/// uncertain boundaries.
pub type GroupEdges = BTreeMap<(u32, u32), Vec<BoundaryKey>>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectionChoice {
    /// Smallest super-node id of the component.
    pub component: u32,
    pub prev_sum: Option<f64>,
    pub next_sum: Option<f64>,
    /// `Some(true)` for the previous frame, `Some(false)` for the next.
    pub chose_prev: Option<bool>,
    pub chosen_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameState {
    pub frame: usize,
    /// Selected instances as ascending region lists, in selection order.
    pub selected: Vec<Vec<u32>>,
    /// Super-nodes still unselected: smallest region id to member regions.
    pub nodes: BTreeMap<u32, Vec<u32>>,
    pub edges: GroupEdges,
    /// Connected subgraphs of the reduced graph, as super-node id lists.
    pub candidates: Vec<InstanceCandidate>,
    pub false_edges: BTreeSet<BoundaryKey>,
    pub true_edges: BTreeSet<BoundaryKey>,
    pub uncertain_edges: BTreeSet<BoundaryKey>,
    /// Direction decisions of the iteration that produced this state.
    pub choices: Vec<DirectionChoice>,
}

impl FrameState {
    pub fn reduced_graph(&self) -> Result<RegionGraph> {
        RegionGraph::new(
            self.nodes.iter().map(|(&id, m)| (id, m.len())),
            self.edges
                .iter()
                .map(|(&(a, b), ks)| (BoundaryKey::new(a, b), ks.len())),
        )
    }

    pub fn candidate_regions(&self, c: &InstanceCandidate) -> Vec<u32> {
        let mut r: Vec<u32> = c
            .regions
            .iter()
            .flat_map(|id| self.nodes[id].iter().copied())
            .collect();
        r.sort_unstable();
        r
    }

    fn refresh_candidates(&mut self, caps: EnumerationCaps) -> Result<()> {
        let g = self.reduced_graph()?;
        self.candidates = enumerate_candidates(&g, caps)?;
        Ok(())
    }
}

pub fn init_state(input: &FrameInput, cfg: &TemporalConfig) -> Result<FrameState> {
    cfg.validate()?;
    let g = &input.analysis.graph;
    let mut false_edges = BTreeSet::new();
    let mut true_edges = BTreeSet::new();
    let mut uncertain_edges = BTreeSet::new();
    for k in g.edges.keys() {
        let s = input.scores[k];
        if s < cfg.sigma_low {
            false_edges.insert(*k);
        } else if s > cfg.sigma_high {
            true_edges.insert(*k);
        } else {
            uncertain_edges.insert(*k);
        }
    }
    let groups = merge_groups(g, &false_edges);
    let super_of: BTreeMap<u32, u32> = groups
        .iter()
        .flat_map(|grp| grp.iter().map(move |&r| (r, grp[0])))
        .collect();
    let mut edges: GroupEdges = BTreeMap::new();
    for k in &uncertain_edges {
        let (a, b) = (super_of[&k.a], super_of[&k.b]);
        if a != b {
            edges.entry((a.min(b), a.max(b))).or_default().push(*k);
        }
    }
    let connected: BTreeSet<u32> = edges.keys().flat_map(|&(a, b)| [a, b]).collect();
    let mut selected = Vec::new();
    let mut nodes = BTreeMap::new();
    for grp in groups {
        if connected.contains(&grp[0]) {
            nodes.insert(grp[0], grp);
        } else {
            selected.push(grp);
        }
    }
    let mut state = FrameState {
        frame: input.analysis.frame,
        selected,
        nodes,
        edges,
        candidates: Vec::new(),
        false_edges,
        true_edges,
        uncertain_edges,
        choices: Vec::new(),
    };
    state.refresh_candidates(cfg.caps)?;
    Ok(state)
}

/// IoU of instances given as pixel masks in another frame against region
/// sets of `frame`.
fn overlap_matrix(
    left: &[Vec<usize>],
    frame: &FrameInput,
    right: &[Vec<u32>],
) -> Result<ScoreMatrix> {
    let mut containing: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let right_sets: Vec<BTreeSet<u32>> =
        right.iter().map(|r| r.iter().copied().collect()).collect();
    for (j, r) in right.iter().enumerate() {
        for &reg in r {
            containing.entry(reg).or_default().push(j);
        }
    }
    let right_area: Vec<usize> = right_sets.iter().map(|s| frame.area(s)).collect();
    let mut m = ScoreMatrix::new(left.len(), right.len());
    for (i, mask) in left.iter().enumerate() {
        let mut hist: BTreeMap<Owner, usize> = BTreeMap::new();
        for &px in mask {
            let o = frame.owners[px];
            if o != Owner::None {
                *hist.entry(o).or_default() += 1;
            }
        }
        let mut touched = BTreeSet::new();
        for o in hist.keys() {
            if let Owner::Region(r) = o {
                touched.extend(containing.get(r).into_iter().flatten().copied());
            }
        }
        for j in touched {
            let set = &right_sets[j];
            let inter: usize = hist
                .iter()
                .filter(|(o, _)| match o {
                    Owner::Region(r) => set.contains(r),
                    Owner::Boundary(k) => set.contains(&k.a) && set.contains(&k.b),
                    Owner::None => false,
                })
                .map(|(_, c)| c)
                .sum();
            let union = mask.len() + right_area[j] - inter;
            if inter > 0 {
                m.set(i, j, inter as f64 / union as f64)?;
            }
        }
    }
    Ok(m)
}

/// Flows of one direction: candidate index and score.
type DirectionFlows = Vec<(usize, f64)>;

/// Selected-selected then selected-unselected matching from one neighbor.
fn propose(
    neighbor: (&FrameInput, &FrameState),
    this: (&FrameInput, &FrameState),
    opts: SolverOptions,
) -> Result<DirectionFlows> {
    let (n_in, n_state) = neighbor;
    let (w_in, w_state) = this;
    let left_masks: Vec<Vec<usize>> = n_state.selected.iter().map(|r| n_in.mask(r)).collect();
    let ssm = solve_ssm(&overlap_matrix(&left_masks, w_in, &w_state.selected)?, opts)?;
    let free: Vec<usize> = unmatched_left(left_masks.len(), &ssm);
    if free.is_empty() || w_state.candidates.is_empty() {
        return Ok(Vec::new());
    }
    let free_masks: Vec<Vec<usize>> = free.iter().map(|&i| left_masks[i].clone()).collect();
    let cand_regions: Vec<Vec<u32>> = w_state
        .candidates
        .iter()
        .map(|c| w_state.candidate_regions(c))
        .collect();
    let scores = overlap_matrix(&free_masks, w_in, &cand_regions)?;
    let sum = solve_sum(&scores, &w_state.candidates, opts)?;
    Ok(sum
        .flows
        .iter()
        .map(|&(i, j)| (j, scores.get(i, j)))
        .collect())
}

/// Picks, per connected component of the reduced graph, the neighbor whose
/// flows into that component score higher (ties to the previous frame) and
/// returns the chosen candidates.
fn resolve(
    state: &FrameState,
    prev: Option<&DirectionFlows>,
    next: Option<&DirectionFlows>,
) -> Result<(Vec<usize>, Vec<DirectionChoice>)> {
    let g = state.reduced_graph()?;
    let mut comp_of: BTreeMap<u32, u32> = BTreeMap::new();
    let comps = g.components();
    for comp in &comps {
        for &n in comp {
            comp_of.insert(n, comp[0]);
        }
    }
    let sums = |flows: Option<&DirectionFlows>| -> Option<BTreeMap<u32, f64>> {
        flows.map(|f| {
            let mut m = BTreeMap::new();
            for &(j, s) in f {
                *m.entry(comp_of[&state.candidates[j].regions[0]])
                    .or_insert(0.0) += s;
            }
            m
        })
    };
    let (ps, ns) = (sums(prev), sums(next));
    let mut chosen = Vec::new();
    let mut choices = Vec::new();
    for comp in &comps {
        let c = comp[0];
        let p = ps.as_ref().map(|m| m.get(&c).copied().unwrap_or(0.0));
        let n = ns.as_ref().map(|m| m.get(&c).copied().unwrap_or(0.0));
        let pick_prev = match (p, n) {
            (Some(p), Some(n)) => Some(p >= n),
            (Some(_), None) => Some(true),
            (None, Some(_)) => Some(false),
            (None, None) => None,
        };
        let (flows, chosen_sum) = match pick_prev {
            Some(true) => (prev, p.unwrap_or(0.0)),
            Some(false) => (next, n.unwrap_or(0.0)),
            None => (None, 0.0),
        };
        if let Some(f) = flows {
            chosen.extend(
                f.iter()
                    .filter(|&&(j, _)| comp_of[&state.candidates[j].regions[0]] == c)
                    .map(|&(j, _)| j),
            );
        }
        choices.push(DirectionChoice {
            component: c,
            prev_sum: p,
            next_sum: n,
            chose_prev: pick_prev,
            chosen_sum,
        });
    }
    chosen.sort_unstable();
    Ok((chosen, choices))
}

fn apply_selection(
    state: &FrameState,
    picked: &[usize],
    caps: EnumerationCaps,
) -> Result<FrameState> {
    let mut next = state.clone();
    let mut removed = BTreeSet::new();
    for &j in picked {
        let c = &state.candidates[j];
        next.selected.push(state.candidate_regions(c));
        removed.extend(c.regions.iter().copied());
    }
    next.nodes.retain(|id, _| !removed.contains(id));
    next.edges
        .retain(|&(a, b), _| !removed.contains(&a) && !removed.contains(&b));
    next.refresh_candidates(caps)?;
    Ok(next)
}

fn step_frame(
    inputs: &[FrameInput],
    states: &[FrameState],
    w: usize,
    cfg: &TemporalConfig,
) -> Result<FrameState> {
    let this = (&inputs[w], &states[w]);
    let prev = if w > 0 {
        Some(propose((&inputs[w - 1], &states[w - 1]), this, cfg.solver)?)
    } else {
        None
    };
    let next = if w + 1 < inputs.len() {
        Some(propose((&inputs[w + 1], &states[w + 1]), this, cfg.solver)?)
    } else {
        None
    };
    let (picked, choices) = resolve(&states[w], prev.as_ref(), next.as_ref())?;
    let mut s = apply_selection(&states[w], &picked, cfg.caps)?;
    s.choices = choices;
    Ok(s)
}

/// One iteration over all frames.
pub fn iterate(
    inputs: &[FrameInput],
    states: &[FrameState],
    cfg: &TemporalConfig,
) -> Result<Vec<FrameState>> {
    match cfg.schedule {
        Schedule::Synchronous => (0..states.len())
            .into_par_iter()
            .map(|w| step_frame(inputs, states, w, cfg))
            .collect(),
        Schedule::Sweep => {
            let mut cur = states.to_vec();
            for w in 0..cur.len() {
                cur[w] = step_frame(inputs, &cur, w, cfg)?;
            }
            Ok(cur)
        }
    }
}

/// Remaining super-nodes merged across group edges holding any boundary
/// scored below the final threshold.
pub fn final_selection(
    input: &FrameInput,
    state: &FrameState,
    cfg: &TemporalConfig,
) -> Vec<Vec<u32>> {
    let g = state.reduced_graph().expect("reduced graph is consistent");
    let merge: BTreeSet<BoundaryKey> = state
        .edges
        .iter()
        .filter(|(_, ks)| ks.iter().any(|k| input.scores[k] < cfg.final_threshold))
        .map(|(&(a, b), _)| BoundaryKey::new(a, b))
        .collect();
    merge_groups(&g, &merge)
        .into_iter()
        .map(|grp| {
            let mut r: Vec<u32> = grp
                .iter()
                .flat_map(|id| state.nodes[id].iter().copied())
                .collect();
            r.sort_unstable();
            r
        })
        .collect()
}

/// Initial states, `cfg.iterations` iterations and the final selection.
/// `observe` sees the states after initialization (iteration 0) and after
/// every iteration.
pub fn run(
    inputs: &[FrameInput],
    cfg: &TemporalConfig,
    mut observe: impl FnMut(usize, &[FrameState]),
) -> Result<Vec<Vec<Vec<u32>>>> {
    cfg.validate()?;
    let mut states: Vec<FrameState> = inputs
        .par_iter()
        .map(|i| init_state(i, cfg))
        .collect::<Result<_>>()?;
    observe(0, &states);
    for t in 1..=cfg.iterations {
        states = iterate(inputs, &states, cfg)?;
        observe(t, &states);
    }
    Ok(inputs
        .iter()
        .zip(&states)
        .map(|(i, s)| {
            let mut all = s.selected.clone();
            all.extend(final_selection(i, s, cfg));
            all
        })
        .collect())
}

pub fn prepare_video(
    frames: &[ProbMap],
    scorer: Option<&Scorer>,
    pcfg: &PipelineConfig,
) -> Result<Vec<FrameInput>> {
    if frames.is_empty() {
        return Err(CebError::Invalid("video has no frames".into()));
    }
    frames
        .par_iter()
        .enumerate()
        .map(|(w, p)| {
            let a = analyze_frame(p, w, pcfg)?;
            let s = frame_scores(&a, scorer, pcfg.mode)?;
            FrameInput::new(a, s)
        })
        .collect()
}

pub fn segment_video_observed(
    frames: &[ProbMap],
    scorer: Option<&Scorer>,
    pcfg: &PipelineConfig,
    tcfg: &TemporalConfig,
    observe: impl FnMut(usize, &[FrameState]),
) -> Result<Vec<LabelMap>> {
    let inputs = prepare_video(frames, scorer, pcfg)?;
    segment_prepared(frames, &inputs, tcfg, pcfg, observe)
}

/// Runs the temporal stage on prepared frames and renders the instances.
pub fn segment_prepared(
    frames: &[ProbMap],
    inputs: &[FrameInput],
    tcfg: &TemporalConfig,
    pcfg: &PipelineConfig,
    observe: impl FnMut(usize, &[FrameState]),
) -> Result<Vec<LabelMap>> {
    let groups = run(inputs, tcfg, observe)?;
    Ok(inputs
        .iter()
        .zip(frames)
        .zip(&groups)
        .map(|((i, p), g)| render_instances(&i.analysis.flood, p, g, pcfg.rim))
        .collect())
}

pub fn segment_video(
    frames: &[ProbMap],
    scorer: Option<&Scorer>,
    pcfg: &PipelineConfig,
    tcfg: &TemporalConfig,
) -> Result<Vec<LabelMap>> {
    segment_video_observed(frames, scorer, pcfg, tcfg, |_, _| {})
}

/// Violations of the selection invariants between two consecutive states
/// of one frame: selections only grow, selected instances and remaining
/// super-nodes partition the frame's regions, and no region is selected
/// twice.
pub fn check_invariants(
    input: &FrameInput,
    before: Option<&FrameState>,
    after: &FrameState,
) -> Vec<String> {
    let mut problems = Vec::new();
    if let Some(b) = before {
        if after.selected.len() < b.selected.len()
            || after.selected[..b.selected.len()] != b.selected[..]
        {
            problems.push(format!(
                "frame {}: selection shrank or changed",
                after.frame
            ));
        }
    }
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    for r in after.selected.iter().flatten() {
        *seen.entry(*r).or_default() += 1;
    }
    if let Some((r, _)) = seen.iter().find(|(_, &c)| c > 1) {
        problems.push(format!("frame {}: region {r} selected twice", after.frame));
    }
    for r in after.nodes.values().flatten() {
        if seen.insert(*r, 1).is_some() {
            problems.push(format!(
                "frame {}: region {r} both selected and unselected",
                after.frame
            ));
        }
    }
    let all: BTreeSet<u32> = input.analysis.flood.regions.keys().copied().collect();
    let covered: BTreeSet<u32> = seen.keys().copied().collect();
    if all != covered {
        problems.push(format!("frame {}: regions not conserved", after.frame));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::ScoreMatrix;
    use crate::pipeline::segment_frame_at;

    fn blob_input(frame: usize, scores: &[f64]) -> (ProbMap, FrameInput) {
        // three bright cores in a row joined by dimmer waists
        let (w, h) = (17, 5);
        let mut v = vec![0.05f32; w * h];
        for y in 1..4 {
            for x in 1..16 {
                v[y * w + x] = 0.8;
            }
        }
        for &c in &[3usize, 8, 13] {
            for y in 1..4 {
                for x in c - 1..=c + 1 {
                    v[y * w + x] = 0.95;
                }
            }
        }
        for &x in &[5usize, 6, 10, 11] {
            for y in 1..4 {
                v[y * w + x] = 0.6;
            }
        }
        let p = ProbMap::new(w, h, v).unwrap();
        let a = analyze_frame(&p, frame, &PipelineConfig::default()).unwrap();
        let keys: Vec<BoundaryKey> = a.graph.edges.keys().copied().collect();
        assert_eq!(keys.len(), scores.len());
        let s = keys.into_iter().zip(scores.iter().copied()).collect();
        (p, FrameInput::new(a, s).unwrap())
    }

    #[test]
    fn confident_scores_select_everything_at_start() {
        let (_, input) = blob_input(0, &[0.95, 0.97]);
        let s = init_state(&input, &TemporalConfig::default()).unwrap();
        assert_eq!(s.selected, vec![vec![1], vec![2], vec![3]]);
        assert!(s.candidates.is_empty());
    }

    #[test]
    fn uncertain_scores_keep_the_graph() {
        let (_, input) = blob_input(0, &[0.5, 0.5]);
        let s = init_state(&input, &TemporalConfig::default()).unwrap();
        assert!(s.selected.is_empty());
        assert_eq!(s.nodes.len(), 3);
        assert_eq!(s.candidates.len(), 6);
    }

    #[test]
    fn low_edge_contracts_and_mid_edge_stays() {
        let (_, input) = blob_input(0, &[0.05, 0.5]);
        let s = init_state(&input, &TemporalConfig::default()).unwrap();
        assert!(s.selected.is_empty());
        assert_eq!(s.nodes, BTreeMap::from([(1, vec![1, 2]), (3, vec![3])]));
        assert_eq!(s.candidates.len(), 3);
    }

    #[test]
    fn final_selection_is_inclusive_at_half() {
        let cfg = TemporalConfig::default();
        let (_, input) = blob_input(0, &[0.3, 0.5]);
        let s = init_state(&input, &cfg).unwrap();
        assert_eq!(final_selection(&input, &s, &cfg), vec![vec![1, 2], vec![3]]);
    }

    #[test]
    fn single_frame_matches_per_frame_segmentation() {
        let (p, input) = blob_input(0, &[0.3, 0.7]);
        let scores: Vec<f64> = input.scores.values().copied().collect();
        let ext: BTreeMap<String, f64> = input
            .analysis
            .signatures
            .iter()
            .zip(&scores)
            .map(|(r, &s)| (r.id.clone(), s))
            .collect();
        let scorer = Scorer::External(ext);
        let pcfg = PipelineConfig::default();
        let video = segment_video(
            std::slice::from_ref(&p),
            Some(&scorer),
            &pcfg,
            &TemporalConfig::default(),
        )
        .unwrap();
        let single = segment_frame_at(&p, 0, Some(&scorer), &pcfg).unwrap();
        assert_eq!(video[0], single);
    }

    #[test]
    fn neighbor_frames_resolve_an_uncertain_frame() {
        // frames 0 and 2 confidently split 1|2|3; frame 1 is uncertain
        let (p0, f0) = blob_input(0, &[0.95, 0.95]);
        let (p1, f1) = blob_input(1, &[0.4, 0.6]);
        let (p2, f2) = blob_input(2, &[0.95, 0.95]);
        let inputs = vec![f0, f1, f2];
        let cfg = TemporalConfig::default();
        let mut log = Vec::new();
        let groups = run(&inputs, &cfg, |t, s| log.push((t, s.to_vec()))).unwrap();
        assert_eq!(groups[1], vec![vec![1], vec![2], vec![3]]);
        assert_eq!(log.len(), 11);
        let it1 = &log[1].1[1];
        assert_eq!(it1.selected.len(), 3);
        assert_eq!(it1.choices.len(), 1);
        assert_eq!(it1.choices[0].chose_prev, Some(true));
        for w in log.windows(2) {
            for f in 0..3 {
                assert!(check_invariants(&inputs[f], Some(&w[0].1[f]), &w[1].1[f]).is_empty());
            }
        }
        let _ = (p0, p1, p2);
    }

    #[test]
    fn stronger_direction_wins() {
        let (_, f1) = blob_input(1, &[0.5, 0.5]);
        let state = init_state(&f1, &TemporalConfig::default()).unwrap();
        let idx = |r: &[u32]| {
            state
                .candidates
                .iter()
                .position(|c| c.regions == r)
                .unwrap()
        };
        let prev = vec![(idx(&[1, 2, 3]), 1.3)];
        let next = vec![(idx(&[1]), 0.9), (idx(&[2, 3]), 0.8)];
        let (picked, choices) = resolve(&state, Some(&prev), Some(&next)).unwrap();
        assert_eq!(picked, vec![idx(&[1]), idx(&[2, 3])]);
        assert_eq!(choices[0].chose_prev, Some(false));
        assert!((choices[0].chosen_sum - 1.7).abs() < 1e-12);
        let tie = vec![(idx(&[1, 2, 3]), 0.9 + 0.8)];
        let (picked, _) = resolve(&state, Some(&tie), Some(&next)).unwrap();
        assert_eq!(picked, vec![idx(&[1, 2, 3])]);
    }

    #[test]
    fn overlap_matrix_matches_direct_iou() {
        let (_, f) = blob_input(0, &[0.5, 0.5]);
        let right = vec![vec![1], vec![1, 2], vec![3]];
        let left = vec![f.mask(&[1, 2])];
        let m: ScoreMatrix = overlap_matrix(&left, &f, &right).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        let a = f.mask(&[1]).len() as f64;
        let b = f.mask(&[1, 2]).len() as f64;
        assert!((m.get(0, 0) - a / b).abs() < 1e-12);
        assert_eq!(m.get(0, 2), 0.0);
    }
}
