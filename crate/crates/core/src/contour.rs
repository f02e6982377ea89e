//! Suzuki-Abe topological border following on a binary mask.
//!
//! Foreground is 8-connected, background 4-connected. Every outer border and
//! every hole border is traced once, in raster order of its starting pixel.

use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Border {
    /// Border pixels in tracing order (unpadded indices); a pixel may repeat
    /// where the border passes through a one-pixel-wide neck.
    pub pixels: Vec<usize>,
    pub is_hole: bool,
    /// A background pixel adjacent to the border, `None` when that
    /// neighbor lies outside the image.
    pub background: Option<usize>,
}

// clockwise in image coordinates (y down), starting east
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_of(from: (isize, isize), to: (isize, isize)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    DIRS.iter()
        .position(|&x| x == d)
        .expect("pixels are 8-adjacent")
}

pub fn find_borders(grid: Grid, mask: &[bool]) -> Vec<Border> {
    let pw = grid.width as isize + 2;
    let ph = grid.height as isize + 2;
    let at = |x: isize, y: isize| (y * pw + x) as usize;
    let mut f = vec![0i32; (pw * ph) as usize];
    for y in 0..grid.height {
        for x in 0..grid.width {
            if mask[grid.idx(x, y)] {
                f[at(x as isize + 1, y as isize + 1)] = 1;
            }
        }
    }
    let unpad = |x: isize, y: isize| -> Option<usize> {
        if x >= 1 && y >= 1 && x <= grid.width as isize && y <= grid.height as isize {
            Some(grid.idx(x as usize - 1, y as usize - 1))
        } else {
            None
        }
    };

    let mut borders = Vec::new();
    let mut nbd = 1i32;
    for y in 1..ph - 1 {
        for x in 1..pw - 1 {
            let v = f[at(x, y)];
            if v == 0 {
                continue;
            }
            let (from, is_hole) = if v == 1 && f[at(x - 1, y)] == 0 {
                ((x - 1, y), false)
            } else if v >= 1 && f[at(x + 1, y)] == 0 {
                ((x + 1, y), true)
            } else {
                continue;
            };
            nbd += 1;
            let start = (x, y);
            let mut pixels = Vec::new();

            // look clockwise from `from` for a non-zero neighbor
            let d0 = dir_of(start, from);
            let first = (0..8)
                .map(|k| (d0 + k) % 8)
                .map(|d| (start.0 + DIRS[d].0, start.1 + DIRS[d].1))
                .find(|&(nx, ny)| f[at(nx, ny)] != 0);
            match first {
                None => {
                    f[at(x, y)] = -nbd;
                    pixels.push(unpad(x, y).unwrap());
                }
                Some(i1) => {
                    let mut i2 = i1;
                    let mut i3 = start;
                    loop {
                        // counterclockwise from the element after i2
                        let d2 = dir_of(i3, i2);
                        let mut east_zero = false;
                        let mut i4 = i3;
                        for k in 1..=8 {
                            let d = (d2 + 8 - k) % 8;
                            let n = (i3.0 + DIRS[d].0, i3.1 + DIRS[d].1);
                            if f[at(n.0, n.1)] != 0 {
                                i4 = n;
                                break;
                            }
                            if d == 0 {
                                east_zero = true;
                            }
                        }
                        let cell = &mut f[at(i3.0, i3.1)];
                        if east_zero {
                            *cell = -nbd;
                        } else if *cell == 1 {
                            *cell = nbd;
                        }
                        pixels.push(unpad(i3.0, i3.1).unwrap());
                        if i4 == start && i3 == i1 {
                            break;
                        }
                        i2 = i3;
                        i3 = i4;
                    }
                }
            }
            borders.push(Border {
                pixels,
                is_hole,
                background: unpad(from.0, from.1),
            });
        }
    }
    borders
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> (Grid, Vec<bool>) {
        let g = Grid::new(rows[0].len(), rows.len());
        let m = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        (g, m)
    }

    #[test]
    fn single_pixel_is_one_outer_border() {
        let (g, m) = mask_from(&["...", ".#.", "..."]);
        let b = find_borders(g, &m);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].pixels, vec![4]);
        assert!(!b[0].is_hole);
    }

    #[test]
    fn square_traces_its_perimeter() {
        let (g, m) = mask_from(&["....", ".##.", ".##.", "...."]);
        let b = find_borders(g, &m);
        assert_eq!(b.len(), 1);
        let mut px = b[0].pixels.clone();
        px.sort_unstable();
        assert_eq!(px, vec![5, 6, 9, 10]);
    }

    #[test]
    fn ring_has_outer_and_hole_borders() {
        let (g, m) = mask_from(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        let b = find_borders(g, &m);
        assert_eq!(b.len(), 2);
        assert!(!b[0].is_hole);
        assert!(b[1].is_hole);
        assert_eq!(b[1].background, Some(12));
        assert_eq!(b[0].pixels.len(), 8);
    }

    #[test]
    fn full_image_border_background_is_outside() {
        let (g, m) = mask_from(&["##", "##"]);
        let b = find_borders(g, &m);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].background, None);
    }

    #[test]
    fn every_four_exposed_pixel_lies_on_a_border() {
        let (g, m) = mask_from(&[
            "..........",
            ".####.....",
            ".#..##.##.",
            ".####..#..",
            "....#.###.",
            "..........",
        ]);
        let b = find_borders(g, &m);
        let on: std::collections::BTreeSet<usize> =
            b.iter().flat_map(|b| b.pixels.iter().copied()).collect();
        for i in 0..g.len() {
            if !m[i] {
                continue;
            }
            let exposed = g
                .neighbors(i, crate::grid::Connectivity::Four)
                .any(|n| !m[n]);
            assert_eq!(on.contains(&i), exposed, "pixel {i}");
        }
    }
}
