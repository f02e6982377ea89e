//! Seeded flooding that produces regions and the region-region boundaries
//! (watershed lines) between them.
//!
//! Non-seed foreground pixels are bucketed by their exact probability value
//! and buckets are visited from the highest value down. Within a bucket,
//! pixels touching a labeled region are queued in row-major order; queued
//! pixels adopt a neighbor's region, turn into boundary pixels when they
//! touch a second region, or extend an existing boundary when they only
//! touch boundary pixels. Masked pixels reached by a queued pixel are queued
//! in turn.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{CebError, Result};
use crate::grid::{Connectivity, Grid};
use crate::raster::{LabelMap, ProbMap};
use crate::seeds::SeedSet;

/// Label used for watershed pixels in debug dumps.
pub const WATERSHED_DUMP_ID: u32 = 65535;

/// Unordered pair of distinct region ids, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundaryKey {
    pub a: u32,
    pub b: u32,
}

impl BoundaryKey {
    pub fn new(i: u32, j: u32) -> Self {
        assert_ne!(i, j, "a boundary needs two distinct regions");
        BoundaryKey {
            a: i.min(j),
            b: i.max(j),
        }
    }

    pub fn other(&self, r: u32) -> u32 {
        if r == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn contains(&self, r: u32) -> bool {
        self.a == r || self.b == r
    }
}

impl std::fmt::Display for BoundaryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{{},{}}}", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelStatus {
    /// Outside the foreground set; never touched by the flood.
    Background,
    Unvisited,
    InQueue,
    Mask,
    Watershed,
    Region(u32),
}

impl PixelStatus {
    /// Numeric status code: -1 unvisited, -2 queued, -3 masked, 0 watershed,
    /// positive region id. Background has no code.
    pub fn code(self) -> Option<i64> {
        match self {
            PixelStatus::Background => None,
            PixelStatus::Unvisited => Some(-1),
            PixelStatus::InQueue => Some(-2),
            PixelStatus::Mask => Some(-3),
            PixelStatus::Watershed => Some(0),
            PixelStatus::Region(r) => Some(r as i64),
        }
    }
}

/// Region id to ascending pixel list.
pub type RegionSet = BTreeMap<u32, Vec<usize>>;
/// Boundary key to pixel list in the order the flood appended them.
pub type BoundarySet = BTreeMap<BoundaryKey, Vec<usize>>;

#[derive(Debug, Clone)]
pub struct Flood {
    pub width: usize,
    pub height: usize,
    pub regions: RegionSet,
    pub boundaries: BoundarySet,
    /// Foreground pixels the flood never reached, ascending.
    pub unreachable: Vec<usize>,
    status: Vec<PixelStatus>,
    boundary_of: Vec<Option<BoundaryKey>>,
}

impl Flood {
    pub fn grid(&self) -> Grid {
        Grid::new(self.width, self.height)
    }

    pub fn status(&self) -> &[PixelStatus] {
        &self.status
    }

    /// Boundary a watershed pixel belongs to.
    pub fn boundary_at(&self, idx: usize) -> Option<BoundaryKey> {
        self.boundary_of[idx]
    }

    pub fn region_at(&self, idx: usize) -> Option<u32> {
        match self.status[idx] {
            PixelStatus::Region(r) => Some(r),
            _ => None,
        }
    }

    /// Region ids per pixel with watershed pixels as 65535.
    pub fn to_dump(&self) -> LabelMap {
        let labels = self
            .status
            .iter()
            .map(|s| match s {
                PixelStatus::Region(r) => *r,
                PixelStatus::Watershed => WATERSHED_DUMP_ID,
                _ => 0,
            })
            .collect();
        LabelMap::new(self.width, self.height, labels).expect("dimensions match")
    }

    /// Result of flooding without seeds: every foreground pixel unreached.
    pub fn unseeded(width: usize, height: usize, foreground: &[bool]) -> Self {
        let status: Vec<PixelStatus> = foreground
            .iter()
            .map(|&f| {
                if f {
                    PixelStatus::Unvisited
                } else {
                    PixelStatus::Background
                }
            })
            .collect();
        Flood {
            width,
            height,
            regions: BTreeMap::new(),
            boundaries: BTreeMap::new(),
            unreachable: (0..status.len()).filter(|&i| foreground[i]).collect(),
            boundary_of: vec![None; status.len()],
            status,
        }
    }

    /// Foreground mask the flood ran on.
    pub fn foreground(&self) -> Vec<bool> {
        self.status
            .iter()
            .map(|s| *s != PixelStatus::Background)
            .collect()
    }
}

fn bucket_key(v: f32) -> u32 {
    // non-negative floats order like their bit patterns; fold -0.0 into 0.0
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

pub fn flood(
    p: &ProbMap,
    foreground: &[bool],
    seeds: &SeedSet,
    conn: Connectivity,
) -> Result<Flood> {
    let grid = Grid::new(p.width(), p.height());
    if foreground.len() != grid.len() {
        return Err(CebError::Dimension(format!(
            "foreground mask has {} pixels, map has {}",
            foreground.len(),
            grid.len()
        )));
    }
    if seeds.is_empty() {
        return Err(CebError::NoSeeds);
    }
    let mut status: Vec<PixelStatus> = foreground
        .iter()
        .map(|&f| {
            if f {
                PixelStatus::Unvisited
            } else {
                PixelStatus::Background
            }
        })
        .collect();
    let mut regions: RegionSet = BTreeMap::new();
    for seed in &seeds.seeds {
        if seed.id == 0 {
            return Err(CebError::Invalid("seed ids must be positive".into()));
        }
        if regions.contains_key(&seed.id) {
            return Err(CebError::Invalid(format!("duplicate seed id {}", seed.id)));
        }
        for &px in &seed.pixels {
            match status.get(px) {
                Some(PixelStatus::Unvisited) => status[px] = PixelStatus::Region(seed.id),
                Some(PixelStatus::Region(_)) => {
                    return Err(CebError::Invalid(format!("seeds overlap at pixel {px}")))
                }
                _ => {
                    return Err(CebError::Invalid(format!(
                        "seed {} pixel {px} lies outside the foreground",
                        seed.id
                    )))
                }
            }
        }
        regions.insert(seed.id, Vec::new());
    }

    let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in status.iter().enumerate() {
        if *s == PixelStatus::Unvisited {
            buckets.entry(bucket_key(p.at(i))).or_default().push(i);
        }
    }

    let mut boundaries: BoundarySet = BTreeMap::new();
    let mut boundary_of: Vec<Option<BoundaryKey>> = vec![None; grid.len()];
    let mut queue: VecDeque<usize> = VecDeque::new();

    for pixels in buckets.values().rev() {
        for &px in pixels {
            status[px] = PixelStatus::Mask;
            if grid
                .neighbors(px, conn)
                .any(|n| matches!(status[n], PixelStatus::Region(_)))
            {
                queue.push_back(px);
                status[px] = PixelStatus::InQueue;
            }
        }
        while let Some(px) = queue.pop_front() {
            for n in grid.neighbors(px, conn) {
                match status[n] {
                    PixelStatus::Region(r) => match status[px] {
                        PixelStatus::InQueue => status[px] = PixelStatus::Region(r),
                        PixelStatus::Region(q) if q != r => {
                            let key = BoundaryKey::new(q, r);
                            boundaries.entry(key).or_default().push(px);
                            boundary_of[px] = Some(key);
                            status[px] = PixelStatus::Watershed;
                        }
                        _ => {}
                    },
                    PixelStatus::Watershed => {
                        if status[px] == PixelStatus::InQueue {
                            let key = boundary_of[n].expect("watershed pixel has a key");
                            boundaries.entry(key).or_default().push(px);
                            boundary_of[px] = Some(key);
                            status[px] = PixelStatus::Watershed;
                        }
                    }
                    PixelStatus::Mask => {
                        status[n] = PixelStatus::InQueue;
                        queue.push_back(n);
                    }
                    _ => {}
                }
            }
        }
    }

    let mut unreachable = Vec::new();
    for (i, s) in status.iter().enumerate() {
        match s {
            PixelStatus::Region(r) => regions.get_mut(r).expect("seeded region").push(i),
            PixelStatus::Mask | PixelStatus::Unvisited | PixelStatus::InQueue => {
                unreachable.push(i)
            }
            _ => {}
        }
    }
    if !unreachable.is_empty() {
        log::debug!(
            "flood left {} foreground pixels unreached",
            unreachable.len()
        );
    }

    Ok(Flood {
        width: p.width(),
        height: p.height(),
        regions,
        boundaries,
        unreachable,
        status,
        boundary_of,
    })
}
