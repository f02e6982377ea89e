//! Exact solvers for the integer matching models.
//!
//! All three models share one shape: left items are matched to right items
//! (instance candidates or selected instances), each left item at most once,
//! and the chosen right items must not share a resource. For candidate
//! matching the resources of a candidate are its regions; for
//! selected-selected matching each right item is its own resource, which
//! makes the model a plain one-to-one assignment.
//!
//! The solver splits the problem into blocks of left items that compete for
//! resources and runs a depth-first branch-and-bound on each block. The upper
//! bound adds, for every undecided left item, its best score among the pairs
//! still compatible with the resources in use. A first pass finds the optimal
//! objective; a second pass walks the tree in lexicographic order and returns
//! the first flow set reaching it, which is the lexicographically smallest
//! optimum.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{CebError, Result};
use crate::region_graph::InstanceCandidate;

/// Pairs scoring below this are dropped from every model.
pub const MIN_MATCHABLE_SCORE: f64 = 1e-6;
/// Objectives within this distance count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;

/// Sparse matching scores; absent entries are zero and never matched.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        ScoreMatrix {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_dense(scores: &[Vec<f64>]) -> Result<Self> {
        let rows = scores.len();
        let cols = scores.first().map_or(0, |r| r.len());
        let mut m = ScoreMatrix::new(rows, cols);
        for (i, row) in scores.iter().enumerate() {
            if row.len() != cols {
                return Err(CebError::Dimension("ragged score matrix".into()));
            }
            for (j, &s) in row.iter().enumerate() {
                m.set(i, j, s)?;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, i: usize, j: usize, score: f64) -> Result<()> {
        if i >= self.rows || j >= self.cols {
            return Err(CebError::Dimension(format!(
                "score ({i},{j}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(CebError::Range(format!("score {score} at ({i},{j})")));
        }
        if score > 0.0 {
            self.entries.insert((i, j), score);
        } else {
            self.entries.remove(&(i, j));
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Non-zero entries in (row, col) order.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &s)| (i, j, s))
    }

    pub fn scale(&self, factor: f64) -> ScoreMatrix {
        ScoreMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|(&k, &s)| (k, s * factor))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingResult {
    /// Matched (left, right) index pairs, ascending.
    pub flows: Vec<(usize, usize)>,
    pub objective: f64,
}

impl MatchingResult {
    pub fn empty() -> Self {
        MatchingResult {
            flows: Vec::new(),
            objective: 0.0,
        }
    }

    pub fn right_of(&self, left: usize) -> Option<usize> {
        self.flows.iter().find(|f| f.0 == left).map(|f| f.1)
    }
}

/// Sum of scores over flows, accumulated in flow order.
pub fn objective_of(scores: &ScoreMatrix, flows: &[(usize, usize)]) -> f64 {
    flows.iter().map(|&(i, j)| scores.get(i, j)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub min_score: f64,
    pub node_budget: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            min_score: MIN_MATCHABLE_SCORE,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// Left-to-candidate matching where selected candidates must be
/// region-disjoint. Serves both the ground-truth labeling model and the
/// selected-unselected temporal model.
pub fn solve_gi(
    scores: &ScoreMatrix,
    cands: &[InstanceCandidate],
    opts: SolverOptions,
) -> Result<MatchingResult> {
    if cands.len() != scores.cols() {
        return Err(CebError::Dimension(format!(
            "{} candidates for {} score columns",
            cands.len(),
            scores.cols()
        )));
    }
    let resources: Vec<Vec<u32>> = cands.iter().map(|c| c.regions.clone()).collect();
    solve_packing(scores, &resources, opts)
}

/// Selected-unselected matching; identical in structure to [`solve_gi`]
/// with the neighbor frame's unmatched instances on the left.
pub fn solve_sum(
    scores: &ScoreMatrix,
    cands: &[InstanceCandidate],
    opts: SolverOptions,
) -> Result<MatchingResult> {
    solve_gi(scores, cands, opts)
}

/// One-to-one maximum-weight matching between two selected instance sets.
pub fn solve_ssm(scores: &ScoreMatrix, opts: SolverOptions) -> Result<MatchingResult> {
    let resources: Vec<Vec<u32>> = (0..scores.cols() as u32).map(|j| vec![j]).collect();
    solve_packing(scores, &resources, opts)
}

/// Left indices that appear in no flow.
pub fn unmatched_left(n_left: usize, result: &MatchingResult) -> Vec<usize> {
    let mut matched = vec![false; n_left];
    for &(i, _) in &result.flows {
        if i < n_left {
            matched[i] = true;
        }
    }
    (0..n_left).filter(|&i| !matched[i]).collect()
}

/// Checks the model constraints on a flow set: each left item at most once
/// and chosen right items pairwise resource-disjoint.
pub fn is_feasible(flows: &[(usize, usize)], resources: &[Vec<u32>]) -> bool {
    let mut lefts = std::collections::BTreeSet::new();
    let mut used = std::collections::BTreeSet::new();
    for &(i, j) in flows {
        if !lefts.insert(i) {
            return false;
        }
        for &r in &resources[j] {
            if !used.insert(r) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug)]
struct Option_ {
    col: usize,
    score: f64,
    bits: Vec<u64>,
}

struct Block {
    rows: Vec<usize>,
    /// Per row, options in ascending column order.
    options: Vec<Vec<Option_>>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn build_blocks(scores: &ScoreMatrix, resources: &[Vec<u32>], min_score: f64) -> Vec<Block> {
    let pairs: Vec<(usize, usize, f64)> = scores
        .support()
        .filter(|&(_, _, s)| s >= min_score)
        .collect();
    // rows competing for any resource share a block
    let mut parent: Vec<usize> = (0..scores.rows()).collect();
    let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
    for &(i, j, _) in &pairs {
        for &r in &resources[j] {
            match owner.get(&r) {
                Some(&o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, i));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    owner.insert(r, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for &(i, j, s) in &pairs {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push((i, j, s));
    }
    groups
        .into_values()
        .map(|pairs| {
            let mut local: BTreeMap<u32, usize> = BTreeMap::new();
            for &(_, j, _) in &pairs {
                for &r in &resources[j] {
                    let n = local.len();
                    local.entry(r).or_insert(n);
                }
            }
            let words = local.len().div_ceil(64).max(1);
            let mut by_row: BTreeMap<usize, Vec<Option_>> = BTreeMap::new();
            for (i, j, s) in pairs {
                let mut bits = vec![0u64; words];
                for r in &resources[j] {
                    let b = local[r];
                    bits[b / 64] |= 1 << (b % 64);
                }
                by_row.entry(i).or_default().push(Option_ {
                    col: j,
                    score: s,
                    bits,
                });
            }
            let rows = by_row.keys().copied().collect();
            let options = by_row.into_values().collect();
            Block { rows, options }
        })
        .collect()
}

#[inline]
fn compatible(bits: &[u64], used: &[u64]) -> bool {
    bits.iter().zip(used).all(|(a, b)| a & b == 0)
}

struct Search<'a> {
    block: &'a Block,
    used: Vec<u64>,
    choice: Vec<Option<usize>>,
    nodes: u64,
    budget: u64,
}

impl<'a> Search<'a> {
    fn new(block: &'a Block, budget: u64) -> Self {
        let words = block.options[0][0].bits.len();
        Search {
            block,
            used: vec![0; words],
            choice: vec![None; block.rows.len()],
            nodes: 0,
            budget,
        }
    }

    fn bound(&self, from: usize) -> f64 {
        self.block.options[from..]
            .iter()
            .map(|opts| {
                opts.iter()
                    .filter(|o| compatible(&o.bits, &self.used))
                    .map(|o| o.score)
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            Err(CebError::SolverBudget(self.budget))
        } else {
            Ok(())
        }
    }

    fn take(&mut self, k: usize, o: usize) {
        let bits = &self.block.options[k][o].bits;
        for (u, b) in self.used.iter_mut().zip(bits) {
            *u |= b;
        }
        self.choice[k] = Some(o);
    }

    fn release(&mut self, k: usize, o: usize) {
        let bits = &self.block.options[k][o].bits;
        for (u, b) in self.used.iter_mut().zip(bits) {
            *u &= !b;
        }
        self.choice[k] = None;
    }

    /// Best-first descent: options by descending score, keeps the best value.
    fn maximize(&mut self, k: usize, value: f64, best: &mut f64) -> Result<()> {
        self.tick()?;
        if k == self.block.rows.len() {
            if value > *best {
                *best = value;
            }
            return Ok(());
        }
        if value + self.bound(k) <= *best + TIE_TOLERANCE / 2.0 {
            return Ok(());
        }
        let mut order: Vec<usize> = (0..self.block.options[k].len()).collect();
        order.sort_by(|&a, &b| {
            let (oa, ob) = (&self.block.options[k][a], &self.block.options[k][b]);
            ob.score.total_cmp(&oa.score).then(oa.col.cmp(&ob.col))
        });
        for o in order {
            if !compatible(&self.block.options[k][o].bits, &self.used) {
                continue;
            }
            let s = self.block.options[k][o].score;
            self.take(k, o);
            let r = self.maximize(k + 1, value + s, best);
            self.release(k, o);
            r?;
        }
        self.maximize(k + 1, value, best)
    }

    /// Lexicographic descent that stops at the first flow set within
    /// tolerance of `target`.
    fn first_reaching(&mut self, k: usize, value: f64, target: f64) -> Result<bool> {
        self.tick()?;
        if value + self.bound(k) < target - TIE_TOLERANCE {
            return Ok(false);
        }
        if k == self.block.rows.len() {
            return Ok(true);
        }
        for o in 0..self.block.options[k].len() {
            if !compatible(&self.block.options[k][o].bits, &self.used) {
                continue;
            }
            let s = self.block.options[k][o].score;
            self.take(k, o);
            if self.first_reaching(k + 1, value + s, target)? {
                return Ok(true);
            }
            self.release(k, o);
        }
        self.first_reaching(k + 1, value, target)
    }
}

/// Generic resource-disjoint matching; `resources[j]` lists the resources
/// right item `j` consumes.
pub fn solve_packing(
    scores: &ScoreMatrix,
    resources: &[Vec<u32>],
    opts: SolverOptions,
) -> Result<MatchingResult> {
    if resources.len() != scores.cols() {
        return Err(CebError::Dimension(format!(
            "{} resource lists for {} columns",
            resources.len(),
            scores.cols()
        )));
    }
    let mut flows = Vec::new();
    let mut spent = 0u64;
    for block in build_blocks(scores, resources, opts.min_score) {
        let budget = opts.node_budget.saturating_sub(spent);
        let mut search = Search::new(&block, budget);
        let mut best = 0.0;
        search.maximize(0, 0.0, &mut best)?;
        let reached = search.first_reaching(0, 0.0, best)?;
        debug_assert!(reached, "lexicographic pass must reach the optimum");
        spent += search.nodes;
        for (k, c) in search.choice.iter().enumerate() {
            if let Some(o) = c {
                flows.push((block.rows[k], block.options[k][*o].col));
            }
        }
    }
    flows.sort_unstable();
    let objective = objective_of(scores, &flows);
    Ok(MatchingResult { flows, objective })
}

/// Plain-text listing of a matching model in CPLEX LP syntax, for
/// cross-checking with an external ILP solver.
pub fn lp_listing(
    name: &str,
    scores: &ScoreMatrix,
    resources: &[Vec<u32>],
    min_score: f64,
) -> String {
    let pairs: Vec<(usize, usize, f64)> = scores
        .support()
        .filter(|&(_, _, s)| s >= min_score)
        .collect();
    let var = |i: usize, j: usize| format!("f_{i}_{j}");
    let mut out = String::new();
    let _ = writeln!(out, "\\ {name}");
    let _ = writeln!(out, "Maximize");
    let terms: Vec<String> = pairs
        .iter()
        .map(|&(i, j, s)| format!("{s:.12} {}", var(i, j)))
        .collect();
    let _ = writeln!(
        out,
        " obj: {}",
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        }
    );
    let _ = writeln!(out, "Subject To");
    let mut by_row: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut by_res: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for &(i, j, _) in &pairs {
        by_row.entry(i).or_default().push(var(i, j));
        for &r in &resources[j] {
            by_res.entry(r).or_default().push(var(i, j));
        }
    }
    for (i, vars) in &by_row {
        let _ = writeln!(out, " left_{i}: {} <= 1", vars.join(" + "));
    }
    for (r, vars) in &by_res {
        let _ = writeln!(out, " res_{r}: {} <= 1", vars.join(" + "));
    }
    let _ = writeln!(out, "Binary");
    for &(i, j, _) in &pairs {
        let _ = writeln!(out, " {}", var(i, j));
    }
    let _ = writeln!(out, "End");
    out
}
