//! Pixel neighborhoods and connected-component labeling on a row-major grid.

/// Neighbor visiting order: E, W, S, N, SE, SW, NE, NW.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &NEIGHBOR_OFFSETS[..4],
            Connectivity::Eight => &NEIGHBOR_OFFSETS[..],
        }
    }

    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Grid { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn xy(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn offset(&self, idx: usize, (dx, dy): (isize, isize)) -> Option<usize> {
        let (x, y) = self.xy(idx);
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            None
        } else {
            Some(ny as usize * self.width + nx as usize)
        }
    }

    /// In-bounds neighbors of `idx` in the fixed visiting order.
    pub fn neighbors(&self, idx: usize, conn: Connectivity) -> impl Iterator<Item = usize> + '_ {
        conn.offsets()
            .iter()
            .filter_map(move |&o| self.offset(idx, o))
    }
}

/// Labels connected components of `mask`. Returns per-pixel labels (0 for
/// pixels outside the mask, otherwise 1..=n in order of each component's
/// first pixel in row-major order) and the component count.
pub fn label_components(grid: Grid, mask: &[bool], conn: Connectivity) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; grid.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..grid.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in grid.neighbors(p, conn) {
                if mask[q] && labels[q] == 0 {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
    }
    (labels, next)
}

/// Groups pixel indices by component label (index `k` holds label `k + 1`),
/// each list in ascending order.
pub fn component_pixels(labels: &[u32], count: u32) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            out[l as usize - 1].push(i);
        }
    }
    out
}
