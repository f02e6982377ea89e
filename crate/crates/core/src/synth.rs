//! Synthetic probability maps with disk-shaped cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CebError, Result};
use crate::raster::{LabelMap, ProbMap};

const PEAK: f32 = 0.95;
const RIM: f32 = 0.85;
const BACKGROUND: f32 = 0.05;
const PLACEMENT_TRIES: usize = 2000;
/// Minimum gap between cells of different groups, so their blurred
/// foregrounds stay apart.
const GROUP_GAP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub cells: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub blur_sigma: f64,
    pub noise: f64,
    pub seed: u64,
    pub frames: usize,
    /// Displacement of every cell per frame, in pixels.
    pub drift: f64,
    /// Chance that a new cell is placed touching an earlier one.
    pub cluster: f64,
    /// Largest number of cells in one touching group.
    pub max_cluster: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 128,
            height: 128,
            cells: 15,
            radius_min: 7.0,
            radius_max: 11.0,
            blur_sigma: 1.0,
            noise: 0.02,
            seed: 0,
            frames: 1,
            drift: 1.0,
            cluster: 0.6,
            max_cluster: 3,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(CebError::Range("image size must be positive".into()));
        }
        if !(self.radius_min >= 1.0 && self.radius_min <= self.radius_max) {
            return Err(CebError::Range(format!(
                "radius range [{}, {}] invalid",
                self.radius_min, self.radius_max
            )));
        }
        if !(self.blur_sigma >= 0.0 && self.noise >= 0.0 && self.drift >= 0.0) {
            return Err(CebError::Range("blur, noise and drift must be >= 0".into()));
        }
        if self.max_cluster == 0 {
            return Err(CebError::Range("max_cluster must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cluster) {
            return Err(CebError::Range(format!(
                "cluster {} must be in [0,1]",
                self.cluster
            )));
        }
        if self.frames == 0 {
            return Err(CebError::Range("at least one frame".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    /// Touching group the cell was placed in.
    pub group: usize,
}

impl Cell {
    fn fits(&self, w: usize, h: usize) -> bool {
        self.x - self.r >= 1.0
            && self.y - self.r >= 1.0
            && self.x + self.r <= w as f64 - 2.0
            && self.y + self.r <= h as f64 - 2.0
    }

    /// No overlap with any other cell, and a gap to cells of other groups.
    fn clear_of<'a>(&self, others: impl IntoIterator<Item = &'a Cell>) -> bool {
        others.into_iter().all(|o| {
            let gap = if o.group == self.group {
                0.0
            } else {
                GROUP_GAP
            };
            (self.x - o.x).hypot(self.y - o.y) >= self.r + o.r + gap
        })
    }
}

pub fn place_cells(spec: &SynthSpec, rng: &mut impl Rng) -> Result<Vec<Cell>> {
    let mut cells: Vec<Cell> = Vec::with_capacity(spec.cells);
    let mut group_size: Vec<usize> = Vec::new();
    for n in 0..spec.cells {
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let r = rng.gen_range(spec.radius_min..=spec.radius_max);
            let open: Vec<usize> = (0..cells.len())
                .filter(|&k| group_size[cells[k].group] < spec.max_cluster)
                .collect();
            let new_group = group_size.len();
            let cand = if !open.is_empty() && rng.gen_bool(spec.cluster) {
                let k = open[rng.gen_range(0..open.len())];
                let o = cells[k];
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = o.r + r + rng.gen_range(0.0..1.0);
                Cell {
                    x: o.x + d * angle.cos(),
                    y: o.y + d * angle.sin(),
                    r,
                    group: o.group,
                }
            } else {
                Cell {
                    x: rng.gen_range(0.0..spec.width as f64),
                    y: rng.gen_range(0.0..spec.height as f64),
                    r,
                    group: new_group,
                }
            };
            if cand.fits(spec.width, spec.height) && cand.clear_of(&cells) {
                placed = Some(cand);
                break;
            }
        }
        let cell = placed.ok_or_else(|| {
            CebError::Invalid(format!(
                "could not place cell {} of {} after {PLACEMENT_TRIES} tries",
                n + 1,
                spec.cells
            ))
        })?;
        if cell.group == group_size.len() {
            group_size.push(0);
        }
        group_size[cell.group] += 1;
        cells.push(cell);
    }
    Ok(cells)
}

fn gaussian_blur(v: &mut [f32], w: usize, h: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut out = vec![0.0f32; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if horizontal {
                        ((x as isize + o).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + o).clamp(0, h as isize - 1) as usize)
                    };
                    s += wk * src[sy * w + sx] as f64;
                }
                out[y * w + x] = (s / total) as f32;
            }
        }
        out
    };
    let tmp = pass(v, true);
    v.copy_from_slice(&pass(&tmp, false));
}

/// Draws cells as domes (bright centers, dimmer rims), blurs, adds noise.
pub fn render(spec: &SynthSpec, cells: &[Cell], rng: &mut impl Rng) -> Result<(ProbMap, LabelMap)> {
    let (w, h) = (spec.width, spec.height);
    let mut v = vec![BACKGROUND; w * h];
    let mut labels = vec![0u32; w * h];
    for (k, c) in cells.iter().enumerate() {
        let x0 = (c.x - c.r).floor().max(0.0) as usize;
        let y0 = (c.y - c.r).floor().max(0.0) as usize;
        let x1 = ((c.x + c.r).ceil() as usize).min(w - 1);
        let y1 = ((c.y + c.r).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = (x as f64 - c.x).hypot(y as f64 - c.y);
                let i = y * w + x;
                if d <= c.r && labels[i] == 0 {
                    labels[i] = k as u32 + 1;
                    let t = (d / c.r) as f32;
                    v[i] = RIM + (PEAK - RIM) * (1.0 - t * t);
                }
            }
        }
    }
    gaussian_blur(&mut v, w, h, spec.blur_sigma);
    if spec.noise > 0.0 {
        for x in v.iter_mut() {
            *x += rng.gen_range(-spec.noise..=spec.noise) as f32;
        }
    }
    for x in v.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    Ok((ProbMap::new(w, h, v)?, LabelMap::new(w, h, labels)?))
}

pub fn synth_image(spec: &SynthSpec) -> Result<(ProbMap, LabelMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cells = place_cells(spec, &mut rng)?;
    render(spec, &cells, &mut rng)
}

/// Moves each cell by `drift` in a random direction, keeping the old
/// position when the move would leave the image, overlap another cell or
/// close the gap to another group.
pub fn drift_cells(cells: &mut [Cell], spec: &SynthSpec, rng: &mut impl Rng) {
    for k in 0..cells.len() {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let moved = Cell {
            x: cells[k].x + spec.drift * angle.cos(),
            y: cells[k].y + spec.drift * angle.sin(),
            ..cells[k]
        };
        let others = cells[..k].iter().chain(&cells[k + 1..]);
        if moved.fits(spec.width, spec.height) && moved.clear_of(others) {
            cells[k] = moved;
        }
    }
}

/// Frames of drifting cells; cell `k` carries ground-truth id `k + 1` in
/// every frame.
pub fn synth_video(spec: &SynthSpec) -> Result<(Vec<ProbMap>, Vec<LabelMap>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells = place_cells(spec, &mut rng)?;
    let mut maps = Vec::with_capacity(spec.frames);
    let mut gts = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        if f > 0 {
            drift_cells(&mut cells, spec, &mut rng);
        }
        let (p, g) = render(spec, &cells, &mut rng)?;
        maps.push(p);
        gts.push(g);
    }
    Ok((maps, gts))
}
