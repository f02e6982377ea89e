//! Boundary signatures.
//!
//! Foreground-background contours are traced and cut into segments by the
//! region each contour pixel belongs to; together with the region-region
//! boundaries they form the boundary codebook. For each region-region
//! boundary the two geodesically farthest pixels are its endpoints. Around
//! each endpoint, the boundary and its two nearest codebook entries form a
//! fork; pixels sampled along the three branches of both forks are drawn on a
//! small binary canvas.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::contour::find_borders;
use crate::error::{CebError, Result};
use crate::grid::{label_components, Connectivity, Grid, NEIGHBOR_OFFSETS};
use crate::raster::{read_raster, write_raster, BinaryRaster};
use crate::watershed::{BoundaryKey, Flood, PixelStatus};

pub const DEFAULT_CANVAS: usize = 64;
pub const DEFAULT_BRANCH_LENGTH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodebookKey {
    RegionRegion(BoundaryKey),
    /// Contour segment between a background component (0 is the image
    /// exterior) and a region.
    ForegroundBackground {
        background: u32,
        region: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookEntry {
    pub key: CodebookKey,
    pub pixels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryCodebook {
    pub grid: Grid,
    /// Ordered by key.
    pub entries: Vec<CodebookEntry>,
}

impl BoundaryCodebook {
    pub fn get(&self, key: &CodebookKey) -> Option<&CodebookEntry> {
        self.entries
            .binary_search_by(|e| e.key.cmp(key))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn foreground_background(&self) -> impl Iterator<Item = &CodebookEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.key, CodebookKey::ForegroundBackground { .. }))
    }
}

/// Builds the codebook from a flood result. Contour pixels that are not
/// region pixels (watershed or unreached) belong to no segment.
pub fn build_codebook(flood: &Flood) -> BoundaryCodebook {
    let grid = flood.grid();
    let fg = flood.foreground();
    let bg: Vec<bool> = fg.iter().map(|&f| !f).collect();
    let (bg_labels, _) = label_components(grid, &bg, Connectivity::Four);
    // background components touching the image edge merge with the exterior
    let mut exterior = BTreeSet::new();
    for i in 0..grid.len() {
        let (x, y) = grid.xy(i);
        if bg[i] && (x == 0 || y == 0 || x + 1 == grid.width || y + 1 == grid.height) {
            exterior.insert(bg_labels[i]);
        }
    }
    let mut renumber: BTreeMap<u32, u32> = BTreeMap::new();
    for &l in &bg_labels {
        if l > 0 && !exterior.contains(&l) && !renumber.contains_key(&l) {
            let n = renumber.len() as u32 + 1;
            renumber.insert(l, n);
        }
    }
    let bg_component = |px: Option<usize>| -> u32 {
        match px {
            None => 0,
            Some(i) => {
                let l = bg_labels[i];
                renumber.get(&l).copied().unwrap_or(0)
            }
        }
    };

    let mut segments: BTreeMap<CodebookKey, (Vec<usize>, BTreeSet<usize>)> = BTreeMap::new();
    for border in find_borders(grid, &fg) {
        let background = bg_component(border.background);
        for &px in &border.pixels {
            if let PixelStatus::Region(region) = flood.status()[px] {
                let e = segments
                    .entry(CodebookKey::ForegroundBackground { background, region })
                    .or_default();
                if e.1.insert(px) {
                    e.0.push(px);
                }
            }
        }
    }
    let mut entries: Vec<CodebookEntry> = flood
        .boundaries
        .iter()
        .map(|(k, px)| CodebookEntry {
            key: CodebookKey::RegionRegion(*k),
            pixels: px.clone(),
        })
        .collect();
    entries.extend(
        segments
            .into_iter()
            .map(|(key, (pixels, _))| CodebookEntry { key, pixels }),
    );
    entries.sort_by_key(|e| e.key);
    BoundaryCodebook { grid, entries }
}

/// Exact path length `axial + diagonal * sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Geodesic {
    pub axial: u32,
    pub diagonal: u32,
}

impl Geodesic {
    pub fn value(&self) -> f64 {
        self.axial as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }

    fn step(self, diagonal: bool) -> Self {
        if diagonal {
            Geodesic {
                axial: self.axial,
                diagonal: self.diagonal + 1,
            }
        } else {
            Geodesic {
                axial: self.axial + 1,
                diagonal: self.diagonal,
            }
        }
    }
}

impl Ord for Geodesic {
    fn cmp(&self, other: &Self) -> Ordering {
        // compare da against db * sqrt(2) without rounding
        let da = self.axial as i64 - other.axial as i64;
        let db = other.diagonal as i64 - self.diagonal as i64;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a >= 0 && b <= 0 => Ordering::Greater,
            (a, b) if a <= 0 && b >= 0 => Ordering::Less,
            (1, 1) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for Geodesic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distances from `source` to every pixel of `set` reachable
/// through 8-adjacent steps inside the set.
pub fn geodesic_from(grid: Grid, set: &[usize], source: usize) -> HashMap<usize, Geodesic> {
    let members: BTreeSet<usize> = set.iter().copied().collect();
    let mut dist: HashMap<usize, Geodesic> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(source, Geodesic::default());
    heap.push(Reverse((Geodesic::default(), source)));
    while let Some(Reverse((d, p))) = heap.pop() {
        if dist.get(&p).is_some_and(|&best| best < d) {
            continue;
        }
        for &(dx, dy) in &NEIGHBOR_OFFSETS {
            if let Some(q) = grid.offset(p, (dx, dy)) {
                if !members.contains(&q) {
                    continue;
                }
                let nd = d.step(dx != 0 && dy != 0);
                if dist.get(&q).is_none_or(|&cur| nd < cur) {
                    dist.insert(q, nd);
                    heap.push(Reverse((nd, q)));
                }
            }
        }
    }
    dist
}

/// 8-connected pieces of a pixel set, each ascending, ordered by first pixel.
pub fn pieces(grid: Grid, set: &[usize]) -> Vec<Vec<usize>> {
    let members: BTreeSet<usize> = set.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &s in &members {
        if !seen.insert(s) {
            continue;
        }
        let mut piece = vec![s];
        let mut stack = vec![s];
        while let Some(p) = stack.pop() {
            for q in grid.neighbors(p, Connectivity::Eight) {
                if members.contains(&q) && seen.insert(q) {
                    piece.push(q);
                    stack.push(q);
                }
            }
        }
        piece.sort_unstable();
        out.push(piece);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoints {
    pub n1: usize,
    pub n2: usize,
    pub distance: Geodesic,
    /// The boundary was not 8-connected; only its largest piece was used.
    pub disconnected: bool,
}

/// The pixel pair with the largest geodesic distance, ties broken toward
/// the smallest pair in row-major order. A single pixel pairs with itself.
pub fn find_endpoints(grid: Grid, boundary: &[usize]) -> Result<Endpoints> {
    if boundary.is_empty() {
        return Err(CebError::Invalid("boundary has no pixels".into()));
    }
    let parts = pieces(grid, boundary);
    let disconnected = parts.len() > 1;
    let piece = parts
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("non-empty");
    if disconnected {
        log::warn!(
            "boundary with {} pixels splits into {} pieces; using the largest",
            boundary.len(),
            parts.len()
        );
    }
    let mut best: Option<(Geodesic, usize, usize)> = None;
    for &s in piece {
        let dist = geodesic_from(grid, piece, s);
        for &t in piece {
            if t < s {
                continue;
            }
            let d = dist[&t];
            let better = match best {
                None => true,
                Some((bd, b1, b2)) => d > bd || (d == bd && (s, t) < (b1, b2)),
            };
            if better {
                best = Some((d, s, t));
            }
        }
    }
    let (distance, n1, n2) = best.expect("non-empty piece");
    Ok(Endpoints {
        n1,
        n2,
        distance,
        disconnected,
    })
}

fn dist2(grid: Grid, a: usize, b: usize) -> u64 {
    let (ax, ay) = grid.xy(a);
    let (bx, by) = grid.xy(b);
    let dx = ax as i64 - bx as i64;
    let dy = ay as i64 - by as i64;
    (dx * dx + dy * dy) as u64
}

/// Pixel of `set` nearest to `p` (squared distance, then index).
fn nearest_pixel(grid: Grid, set: &[usize], p: usize) -> (u64, usize) {
    set.iter()
        .map(|&q| (dist2(grid, p, q), q))
        .min()
        .expect("non-empty entry")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fork {
    pub first: CodebookKey,
    pub second: CodebookKey,
    /// Fewer than two other entries existed; missing slots repeat the
    /// boundary itself.
    pub degenerate: bool,
}

/// The two codebook entries other than `exclude` closest to `point`
/// (Euclidean distance to their nearest pixel, ties by key).
pub fn nearest_boundaries(codebook: &BoundaryCodebook, point: usize, exclude: CodebookKey) -> Fork {
    let mut ranked: Vec<(u64, CodebookKey)> = codebook
        .entries
        .iter()
        .filter(|e| e.key != exclude && !e.pixels.is_empty())
        .map(|e| (nearest_pixel(codebook.grid, &e.pixels, point).0, e.key))
        .collect();
    ranked.sort();
    let first = ranked.first().map(|r| r.1);
    let second = ranked.get(1).map(|r| r.1);
    Fork {
        first: first.unwrap_or(exclude),
        second: second.unwrap_or(exclude),
        degenerate: second.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignatureConfig {
    pub canvas: usize,
    pub branch_length: usize,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig {
            canvas: DEFAULT_CANVAS,
            branch_length: DEFAULT_BRANCH_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureRecord {
    pub id: String,
    pub frame: usize,
    pub key: BoundaryKey,
    pub raster: BinaryRaster,
    pub label: Option<bool>,
    pub degenerate: bool,
}

pub fn signature_id(frame: usize, key: BoundaryKey) -> String {
    format!("f{frame}_{}_{}", key.a, key.b)
}

/// Up to `n` pixels of `set` closest to `start` along the set (geodesic
/// distance, then index). `start` must belong to `set`.
fn walk(grid: Grid, set: &[usize], start: usize, n: usize) -> Vec<usize> {
    let dist = geodesic_from(grid, set, start);
    let mut reached: Vec<(Geodesic, usize)> = dist.into_iter().map(|(p, d)| (d, p)).collect();
    reached.sort();
    reached.into_iter().take(n).map(|(_, p)| p).collect()
}

/// Draws points on a square canvas: the bounding box is centered, and when
/// it does not fit it is scaled down uniformly with rounding to the nearest
/// cell.
pub fn rasterize(grid: Grid, points: &BTreeSet<usize>, side: usize) -> BinaryRaster {
    let mut raster = BinaryRaster::new(side);
    if points.is_empty() || side == 0 {
        return raster;
    }
    let xy: Vec<(usize, usize)> = points.iter().map(|&p| grid.xy(p)).collect();
    let minx = xy.iter().map(|p| p.0).min().unwrap();
    let maxx = xy.iter().map(|p| p.0).max().unwrap();
    let miny = xy.iter().map(|p| p.1).min().unwrap();
    let maxy = xy.iter().map(|p| p.1).max().unwrap();
    let (w, h) = (maxx - minx + 1, maxy - miny + 1);
    let extent = w.max(h);
    if extent <= side {
        let (ox, oy) = ((side - w) / 2, (side - h) / 2);
        for &(x, y) in &xy {
            raster.set(x - minx + ox, y - miny + oy);
        }
    } else {
        let s = (side - 1) as f64 / (extent - 1) as f64;
        let sw = ((w - 1) as f64 * s).round() as usize + 1;
        let sh = ((h - 1) as f64 * s).round() as usize + 1;
        let (ox, oy) = ((side - sw) / 2, (side - sh) / 2);
        for &(x, y) in &xy {
            let px = (((x - minx) as f64) * s).round() as usize + ox;
            let py = (((y - miny) as f64) * s).round() as usize + oy;
            raster.set(px.min(side - 1), py.min(side - 1));
        }
    }
    raster
}

/// Fork-road samples for one boundary: from each endpoint, up to
/// `branch_length` pixels along the boundary and along each of the two
/// nearest codebook entries (starting at their pixel nearest the endpoint).
pub fn sample_points(
    codebook: &BoundaryCodebook,
    key: BoundaryKey,
    cfg: &SignatureConfig,
) -> Result<(BTreeSet<usize>, bool)> {
    let own = CodebookKey::RegionRegion(key);
    let entry = codebook
        .get(&own)
        .ok_or_else(|| CebError::Invalid(format!("boundary {key} not in codebook")))?;
    let grid = codebook.grid;
    let ends = find_endpoints(grid, &entry.pixels)?;
    let mut points = BTreeSet::new();
    let mut degenerate = false;
    for n in [ends.n1, ends.n2] {
        points.insert(n);
        points.extend(walk(grid, &entry.pixels, n, cfg.branch_length));
        let fork = nearest_boundaries(codebook, n, own);
        degenerate |= fork.degenerate;
        for k in [fork.first, fork.second] {
            if k == own {
                continue;
            }
            let pixels = &codebook.get(&k).expect("key from codebook").pixels;
            let (_, start) = nearest_pixel(grid, pixels, n);
            points.extend(walk(grid, pixels, start, cfg.branch_length));
        }
    }
    Ok((points, degenerate))
}

pub fn extract_signature(
    codebook: &BoundaryCodebook,
    key: BoundaryKey,
    frame: usize,
    cfg: &SignatureConfig,
) -> Result<SignatureRecord> {
    let (points, degenerate) = sample_points(codebook, key, cfg)?;
    Ok(SignatureRecord {
        id: signature_id(frame, key),
        frame,
        key,
        raster: rasterize(codebook.grid, &points, cfg.canvas),
        label: None,
        degenerate,
    })
}

/// One record per region-region boundary, in key order.
pub fn extract_all(
    flood: &Flood,
    frame: usize,
    cfg: &SignatureConfig,
) -> Result<Vec<SignatureRecord>> {
    let codebook = build_codebook(flood);
    flood
        .boundaries
        .keys()
        .map(|&k| extract_signature(&codebook, k, frame, cfg))
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.csv";

/// Writes one 8-bit PGM per record under `dir` and a manifest listing
/// them. Returns the manifest path.
pub fn export_signatures(records: &[SignatureRecord], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CebError::io(dir, e))?;
    let manifest = dir.join(MANIFEST_NAME);
    let mut w = csv::Writer::from_path(&manifest)?;
    w.write_record([
        "signature_id",
        "frame",
        "region_a",
        "region_b",
        "label",
        "path",
    ])?;
    for r in records {
        let name = format!("{}.pgm", r.id);
        write_raster(&r.raster, dir.join(&name))?;
        let label = match r.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        w.write_record([
            r.id.as_str(),
            &r.frame.to_string(),
            &r.key.a.to_string(),
            &r.key.b.to_string(),
            label,
            &name,
        ])?;
    }
    w.flush().map_err(|e| CebError::io(&manifest, e))?;
    Ok(manifest)
}

/// Loads records back from a manifest; raster paths resolve relative to
/// the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<SignatureRecord>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = [
        "signature_id",
        "frame",
        "region_a",
        "region_b",
        "label",
        "path",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CebError::Format(format!(
            "{}: manifest header must be {}",
            path.display(),
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<u64> {
            row[i].parse().map_err(|_| {
                CebError::Format(format!("{}: bad number {:?}", path.display(), &row[i]))
            })
        };
        let label = match &row[4] {
            "" => None,
            "1" | "true" | "TRUE" => Some(true),
            "0" | "false" | "FALSE" => Some(false),
            other => {
                return Err(CebError::Format(format!(
                    "{}: bad label {other:?}",
                    path.display()
                )))
            }
        };
        let (a, b) = (num(2)? as u32, num(3)? as u32);
        if a == b {
            return Err(CebError::Format(format!(
                "{}: boundary with identical regions {a}",
                path.display()
            )));
        }
        out.push(SignatureRecord {
            id: row[0].to_string(),
            frame: num(1)? as usize,
            key: BoundaryKey::new(a, b),
            raster: read_raster(base.join(&row[5]))?,
            label,
            degenerate: false,
        });
    }
    Ok(out)
}
