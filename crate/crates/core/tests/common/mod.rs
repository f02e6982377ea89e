//! Independent reference implementations used by the integration and
//! acceptance suites. None of these call into the algorithms they check.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::Rng;

use ceb_core::matching::ScoreMatrix;
use ceb_core::raster::ProbMap;
use ceb_core::seeds::{Seed, SeedSet};

pub const UNVISITED: i32 = -1;
pub const INQE: i32 = -2;
pub const MASK: i32 = -3;
pub const WSHD: i32 = 0;
pub const OUTSIDE: i32 = i32::MIN;

const OFFSETS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

fn around(w: usize, h: usize, i: usize, n: usize) -> Vec<usize> {
    let (x, y) = ((i % w) as i64, (i / w) as i64);
    OFFSETS[..n]
        .iter()
        .filter_map(|&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64)
                .then(|| ny as usize * w + nx as usize)
        })
        .collect()
}

/// Status-code flooding driven by a max-priority queue of (value, -index).
/// Returns the final code per pixel (background pixels read `OUTSIDE`) and,
/// for watershed pixels, the pair of regions they separate.
pub fn priority_flood(
    w: usize,
    h: usize,
    p: &[f32],
    fg: &[bool],
    seeds: &[(i32, Vec<usize>)],
    nbhd: usize,
) -> (Vec<i32>, Vec<(i32, i32)>) {
    let mut f: Vec<i32> = fg
        .iter()
        .map(|&b| if b { UNVISITED } else { OUTSIDE })
        .collect();
    for (id, px) in seeds {
        for &i in px {
            f[i] = *id;
        }
    }
    let mut owner: Vec<(i32, i32)> = vec![(0, 0); w * h];
    let mut pq = BinaryHeap::new();
    for i in 0..w * h {
        if f[i] == UNVISITED {
            pq.push((p[i].to_bits(), Reverse(i)));
        }
    }
    let mut fifo = VecDeque::new();
    while let Some(&(level, _)) = pq.peek() {
        let mut batch = Vec::new();
        while pq.peek().is_some_and(|e| e.0 == level) {
            batch.push(pq.pop().unwrap().1 .0);
        }
        for i in batch {
            f[i] = MASK;
            if around(w, h, i, nbhd).iter().any(|&n| f[n] > 0) {
                f[i] = INQE;
                fifo.push_back(i);
            }
        }
        while let Some(i) = fifo.pop_front() {
            for n in around(w, h, i, nbhd) {
                let fn_ = f[n];
                if fn_ > 0 {
                    if f[i] == INQE {
                        f[i] = fn_;
                    } else if f[i] > 0 && f[i] != fn_ {
                        owner[i] = (f[i].min(fn_), f[i].max(fn_));
                        f[i] = WSHD;
                    }
                } else if fn_ == WSHD && f[i] == INQE {
                    owner[i] = owner[n];
                    f[i] = WSHD;
                } else if fn_ == MASK {
                    f[n] = INQE;
                    fifo.push_back(n);
                }
            }
        }
    }
    (f, owner)
}

/// Random map on a few quantized levels so equal-value runs are common,
/// with roughly 15% background, and 2 to 4 single- or two-pixel seeds.
pub fn random_flood_case(rng: &mut impl Rng, w: usize, h: usize) -> (ProbMap, Vec<bool>, SeedSet) {
    let values: Vec<f32> = (0..w * h)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.1
            } else {
                0.5 + rng.gen_range(0..=10) as f32 * 0.045
            }
        })
        .collect();
    let p = ProbMap::new(w, h, values).unwrap();
    let fg = p.foreground(0.5);
    let fg_px: Vec<usize> = (0..w * h).filter(|&i| fg[i]).collect();
    let n = rng.gen_range(2..=4);
    let mut used = BTreeSet::new();
    let mut seeds = Vec::new();
    while seeds.len() < n {
        let s = fg_px[rng.gen_range(0..fg_px.len())];
        if !used.insert(s) {
            continue;
        }
        let mut pixels = vec![s];
        if rng.gen_bool(0.3)
            && s + 1 < w * h
            && !(s + 1).is_multiple_of(w)
            && fg[s + 1]
            && used.insert(s + 1)
        {
            pixels.push(s + 1);
        }
        seeds.push(Seed {
            id: seeds.len() as u32 + 1,
            pixels,
        });
    }
    (p, fg, SeedSet { seeds })
}

/// Exhaustive search over left-item assignments. Returns the best objective
/// (summed in ascending flow order) and one optimal flow set.
pub fn brute_packing(
    scores: &ScoreMatrix,
    resources: &[Vec<u32>],
    min_score: f64,
) -> (f64, Vec<(usize, usize)>) {
    fn go(
        i: usize,
        scores: &ScoreMatrix,
        resources: &[Vec<u32>],
        min_score: f64,
        used_cols: &mut BTreeSet<usize>,
        used_res: &mut BTreeSet<u32>,
        flows: &mut Vec<(usize, usize)>,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if i == scores.rows() {
            let v: f64 = flows.iter().map(|&(a, b)| scores.get(a, b)).sum();
            if v > best.0 {
                *best = (v, flows.clone());
            }
            return;
        }
        go(
            i + 1,
            scores,
            resources,
            min_score,
            used_cols,
            used_res,
            flows,
            best,
        );
        for j in 0..scores.cols() {
            if scores.get(i, j) < min_score || used_cols.contains(&j) {
                continue;
            }
            if resources[j].iter().any(|r| used_res.contains(r)) {
                continue;
            }
            used_cols.insert(j);
            used_res.extend(resources[j].iter().copied());
            flows.push((i, j));
            go(
                i + 1,
                scores,
                resources,
                min_score,
                used_cols,
                used_res,
                flows,
                best,
            );
            flows.pop();
            for r in &resources[j] {
                used_res.remove(r);
            }
            used_cols.remove(&j);
        }
    }
    let mut best = (0.0, Vec::new());
    go(
        0,
        scores,
        resources,
        min_score,
        &mut BTreeSet::new(),
        &mut BTreeSet::new(),
        &mut Vec::new(),
        &mut best,
    );
    best
}

/// Random sparse score matrix with dyadic entries k/64, so that every sum
/// of at most a few dozen terms is exact.
pub fn dyadic_scores(rng: &mut impl Rng, rows: usize, cols: usize, density: f64) -> ScoreMatrix {
    let mut m = ScoreMatrix::new(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen_bool(density) {
                m.set(i, j, rng.gen_range(1..=64) as f64 / 64.0).unwrap();
            }
        }
    }
    m
}

/// All non-empty connected vertex subsets by exhaustive subset scan.
pub fn connected_subsets(nodes: &[u32], edges: &[(u32, u32)]) -> BTreeSet<Vec<u32>> {
    let mut adj: BTreeMap<u32, Vec<u32>> = nodes.iter().map(|&n| (n, Vec::new())).collect();
    for &(a, b) in edges {
        adj.get_mut(&a).unwrap().push(b);
        adj.get_mut(&b).unwrap().push(a);
    }
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << nodes.len()) {
        let set: Vec<u32> = (0..nodes.len())
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| nodes[b])
            .collect();
        let mut seen = BTreeSet::from([set[0]]);
        let mut stack = vec![set[0]];
        while let Some(u) = stack.pop() {
            for &v in &adj[&u] {
                if set.contains(&v) && seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        if seen.len() == set.len() {
            out.insert(set);
        }
    }
    out
}

/// All-pairs geodesic distances inside an 8-connected pixel set, by
/// Floyd-Warshall with unit axial and sqrt(2) diagonal steps. Returns the
/// row-major smallest pair (s <= t) among those at the maximum distance.
pub fn floyd_endpoints(w: usize, set: &[usize]) -> (usize, usize, f64) {
    let pts: Vec<usize> = set
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = pts.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for a in 0..n {
        d[a][a] = 0.0;
        for b in 0..n {
            let (ax, ay) = ((pts[a] % w) as i64, (pts[a] / w) as i64);
            let (bx, by) = ((pts[b] % w) as i64, (pts[b] / w) as i64);
            let (dx, dy) = ((ax - bx).abs(), (ay - by).abs());
            if dx.max(dy) == 1 {
                d[a][b] = if dx + dy == 2 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                let via = d[a][k] + d[k][b];
                if via < d[a][b] {
                    d[a][b] = via;
                }
            }
        }
    }
    let max = d
        .iter()
        .flatten()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    for a in 0..n {
        for b in a..n {
            if (d[a][b] - max).abs() < 1e-9 {
                return (pts[a], pts[b], max);
            }
        }
    }
    unreachable!()
}

/// Random 8-connected pixel set grown by attaching neighbors of already
/// chosen pixels inside a `side`×`side` box.
pub fn random_connected_set(rng: &mut impl Rng, side: usize, size: usize) -> Vec<usize> {
    let start = rng.gen_range(0..side * side);
    let mut set = BTreeSet::from([start]);
    let mut tries = 0;
    while set.len() < size && tries < 10_000 {
        tries += 1;
        let v: Vec<usize> = set.iter().copied().collect();
        let base = v[rng.gen_range(0..v.len())];
        let nb = around(side, side, base, 8);
        set.insert(nb[rng.gen_range(0..nb.len())]);
    }
    set.into_iter().collect()
}

/// Dome-shaped blobs: inside a disk the value falls from 0.95 at the center
/// to 0.55 at the rim; overlapping disks take the maximum.
pub fn dome_map(w: usize, h: usize, disks: &[(f64, f64, f64)]) -> ProbMap {
    let mut v = vec![0.05f32; w * h];
    for y in 0..h {
        for x in 0..w {
            for &(cx, cy, r) in disks {
                let t = (x as f64 - cx).hypot(y as f64 - cy) / r;
                if t < 1.0 {
                    let val = (0.55 + 0.4 * (1.0 - t * t)) as f32;
                    let i = y * w + x;
                    if val > v[i] {
                        v[i] = val;
                    }
                }
            }
        }
    }
    ProbMap::new(w, h, v).unwrap()
}

/// The same map placed at offset (dx, dy) on a larger background canvas.
pub fn translate(p: &ProbMap, dx: usize, dy: usize, pad: usize) -> ProbMap {
    let (w, h) = (p.width() + dx + pad, p.height() + dy + pad);
    let mut v = vec![0.05f32; w * h];
    for y in 0..p.height() {
        for x in 0..p.width() {
            v[(y + dy) * w + x + dx] = p.get(x, y);
        }
    }
    ProbMap::new(w, h, v).unwrap()
}

/// Fixed scenes for the golden signature files: two or three touching
/// disks in various arrangements.
pub fn golden_scenes() -> Vec<(usize, usize, Vec<(f64, f64, f64)>)> {
    vec![
        (40, 30, vec![(13.0, 15.0, 8.0), (26.0, 15.0, 8.0)]),
        (40, 40, vec![(14.0, 14.0, 9.0), (25.0, 25.0, 9.0)]),
        (44, 30, vec![(12.0, 15.0, 7.0), (27.0, 15.0, 10.0)]),
        (30, 44, vec![(15.0, 12.0, 8.0), (15.0, 28.0, 9.0)]),
        (
            52,
            30,
            vec![(11.0, 15.0, 7.0), (25.0, 15.0, 8.0), (40.0, 15.0, 7.0)],
        ),
        (
            44,
            44,
            vec![(14.0, 14.0, 8.0), (29.0, 14.0, 8.0), (21.0, 28.0, 8.0)],
        ),
        (48, 34, vec![(14.0, 17.0, 11.0), (33.0, 17.0, 9.0)]),
        (
            36,
            36,
            vec![(12.0, 12.0, 7.0), (23.0, 14.0, 7.0), (17.0, 24.0, 7.0)],
        ),
        (
            60,
            30,
            vec![
                (10.0, 15.0, 7.0),
                (23.0, 15.0, 7.0),
                (36.0, 15.0, 7.0),
                (49.0, 15.0, 7.0),
            ],
        ),
        (
            40,
            40,
            vec![
                (20.0, 20.0, 6.0),
                (20.0, 8.0, 6.0),
                (31.0, 26.0, 6.0),
                (9.0, 26.0, 6.0),
            ],
        ),
    ]
}

/// 64×64 glyphs: an X (label TRUE) or a T (label FALSE) of random size,
/// stroke width and position.
pub fn x_vs_t(rng: &mut impl Rng, n: usize) -> Vec<ceb_core::signature::SignatureRecord> {
    use ceb_core::raster::BinaryRaster;
    use ceb_core::BoundaryKey;
    (0..n)
        .map(|k| {
            let is_x = k % 2 == 0;
            let size = rng.gen_range(24..=44usize);
            let stroke = rng.gen_range(1..=3usize);
            let ox = rng.gen_range(0..=64 - size);
            let oy = rng.gen_range(0..=64 - size);
            let mut r = BinaryRaster::new(64);
            for a in 0..size {
                for s in 0..stroke {
                    if is_x {
                        let b = (a + s).min(size - 1);
                        r.set(ox + a, oy + b);
                        r.set(ox + size - 1 - a, oy + b);
                    } else {
                        r.set(ox + a, oy + s);
                        r.set(ox + (size / 2 + s).min(size - 1), oy + a);
                    }
                }
            }
            let key = BoundaryKey::new(1, k as u32 + 2);
            ceb_core::signature::SignatureRecord {
                id: format!("glyph{k}"),
                frame: 0,
                key,
                raster: r,
                label: Some(is_x),
                degenerate: false,
            }
        })
        .collect()
}

/// Label map made of a few random overlapping rectangles with ids 1..=n.
pub fn random_labels(rng: &mut impl Rng, w: usize, h: usize, n: u32) -> ceb_core::LabelMap {
    let mut l = vec![0u32; w * h];
    for id in 1..=n {
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (x1, y1) = (
            (x0 + rng.gen_range(1..8)).min(w),
            (y0 + rng.gen_range(1..8)).min(h),
        );
        for y in y0..y1 {
            for x in x0..x1 {
                l[y * w + x] = id;
            }
        }
    }
    ceb_core::LabelMap::new(w, h, l).unwrap()
}

/// The same partition under a random injective renaming of the ids.
pub fn relabel(rng: &mut impl Rng, m: &ceb_core::LabelMap) -> ceb_core::LabelMap {
    use rand::seq::SliceRandom;
    let ids = m.instance_ids();
    let mut fresh: Vec<u32> = (1..=ids.len() as u32 * 3).collect();
    fresh.shuffle(rng);
    let map: BTreeMap<u32, u32> = ids.iter().copied().zip(fresh).collect();
    let l = m
        .labels()
        .iter()
        .map(|&v| if v == 0 { 0 } else { map[&v] })
        .collect();
    ceb_core::LabelMap::new(m.width(), m.height(), l).unwrap()
}
