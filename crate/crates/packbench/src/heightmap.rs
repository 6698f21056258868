//! 2D heightmaps over a cell lattice, the universal state representation.
//!
//! Heights are integer quanta (see [`crate::units`]). A map is indexed by
//! `(x, y)` with `x` in `0..width` and `y` in `0..length`, stored row-major
//! with `y` fastest.

use crate::error::{PackError, Result};
use crate::units::{is_right_angle, quarter_turns, EMPTY_COLUMN};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Heightmap {
    width: usize,
    length: usize,
    /// Cell edge length in quanta.
    cell_q: i64,
    heights: Vec<i64>,
}

impl Heightmap {
    pub fn new(width: usize, length: usize, cell_q: i64) -> Self {
        assert!(width > 0 && length > 0 && cell_q > 0);
        Heightmap {
            width,
            length,
            cell_q,
            heights: vec![0; width * length],
        }
    }

    pub fn from_heights(width: usize, length: usize, cell_q: i64, heights: Vec<i64>) -> Self {
        assert_eq!(heights.len(), width * length);
        assert!(heights.iter().all(|&h| h >= 0));
        assert!(cell_q > 0);
        Heightmap {
            width,
            length,
            cell_q,
            heights,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn cell_q(&self) -> i64 {
        self.cell_q
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i64 {
        debug_assert!(x < self.width && y < self.length);
        self.heights[x * self.length + y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, h: i64) {
        debug_assert!(x < self.width && y < self.length);
        self.heights[x * self.length + y] = h;
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    /// Maximum height, treating [`EMPTY_COLUMN`] sentinels as absent.
    pub fn max_height(&self) -> i64 {
        self.heights
            .iter()
            .copied()
            .filter(|&h| h < EMPTY_COLUMN)
            .max()
            .unwrap_or(0)
    }

    /// Sum of heights, treating sentinels as zero.
    pub fn height_sum(&self) -> i64 {
        self.heights
            .iter()
            .copied()
            .filter(|&h| h < EMPTY_COLUMN)
            .sum()
    }

    /// Exact lattice rotation by `k` quarter turns counterclockwise.
    ///
    /// One turn maps cell `(x, y)` of a `w x l` map to `(l-1-y, x)` of the
    /// `l x w` result, matching the voxel-grid yaw rotation convention.
    pub fn rot90(&self, k: usize) -> Heightmap {
        let mut out = self.clone();
        for _ in 0..(k % 4) {
            let (w, l) = (out.width, out.length);
            let mut heights = vec![0i64; w * l];
            for x in 0..w {
                for y in 0..l {
                    // (x, y) -> (l-1-y, x) in an l x w map
                    heights[(l - 1 - y) * w + x] = out.get(x, y);
                }
            }
            out = Heightmap {
                width: l,
                length: w,
                cell_q: out.cell_q,
                heights,
            };
        }
        out
    }

    /// 16-bit grayscale PGM dump, one gray level per height quantum.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.heights.len() * 2);
        // PGM raster order is row-by-row top to bottom; emit y rows, x columns.
        out.extend_from_slice(format!("P5\n{} {}\n65535\n", self.width, self.length).as_bytes());
        for y in 0..self.length {
            for x in 0..self.width {
                let v = self.get(x, y).clamp(0, 65535) as u16;
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }
}

/// Top/bottom view pair of an oriented object, sharing one footprint.
///
/// `h_t` is the height of each column's top surface above the object's
/// lowest plane; `h_b` is the gap below each column's lowest occupied
/// voxel. Empty columns carry `h_t = 0` and `h_b = EMPTY_COLUMN`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ViewPair {
    pub h_t: Heightmap,
    pub h_b: Heightmap,
}

impl ViewPair {
    /// Rotate the pair by yaw `psi`.
    ///
    /// Right-angle yaws are exact lattice permutations. Other angles use
    /// nearest-cell resampling around the footprint center followed by
    /// footprint re-tightening.
    pub fn rotate_yaw(&self, psi: f64) -> ViewPair {
        if is_right_angle(psi) {
            let k = quarter_turns(psi);
            return ViewPair {
                h_t: self.h_t.rot90(k),
                h_b: self.h_b.rot90(k),
            };
        }
        self.resample_yaw(psi).tightened()
    }

    fn resample_yaw(&self, psi: f64) -> ViewPair {
        let w = self.h_t.width() as f64;
        let l = self.h_t.length() as f64;
        let (sin, cos) = psi.sin_cos();
        // Rotated footprint bounding rectangle.
        let nw = (w * cos.abs() + l * sin.abs()).ceil() as usize;
        let nl = (w * sin.abs() + l * cos.abs()).ceil() as usize;
        let (cx, cy) = (w / 2.0, l / 2.0);
        let (ncx, ncy) = (nw as f64 / 2.0, nl as f64 / 2.0);
        let cell = self.h_t.cell_q();
        let mut h_t = Heightmap::new(nw.max(1), nl.max(1), cell);
        let mut h_b = h_t.clone();
        for x in 0..h_t.width() {
            for y in 0..h_t.length() {
                // Inverse-rotate the target cell center into source coords.
                let dx = x as f64 + 0.5 - ncx;
                let dy = y as f64 + 0.5 - ncy;
                let sx = cos * dx + sin * dy + cx;
                let sy = -sin * dx + cos * dy + cy;
                let (sxi, syi) = (sx.floor() as i64, sy.floor() as i64);
                if sxi >= 0 && (sxi as f64) < w && syi >= 0 && (syi as f64) < l {
                    let (sxi, syi) = (sxi as usize, syi as usize);
                    h_t.set(x, y, self.h_t.get(sxi, syi));
                    h_b.set(x, y, self.h_b.get(sxi, syi));
                } else {
                    h_b.set(x, y, EMPTY_COLUMN);
                }
            }
        }
        ViewPair { h_t, h_b }
    }

    /// Crop away all-empty boundary rows and columns.
    pub fn tightened(&self) -> ViewPair {
        let (w, l) = (self.h_t.width(), self.h_t.length());
        let occupied = |x: usize, y: usize| self.h_t.get(x, y) > 0;
        let mut x0 = w;
        let mut x1 = 0usize;
        let mut y0 = l;
        let mut y1 = 0usize;
        for x in 0..w {
            for y in 0..l {
                if occupied(x, y) {
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
        }
        if x0 > x1 {
            // Fully empty; keep a single sentinel cell.
            let cell = self.h_t.cell_q();
            let mut h_b = Heightmap::new(1, 1, cell);
            h_b.set(0, 0, EMPTY_COLUMN);
            return ViewPair {
                h_t: Heightmap::new(1, 1, cell),
                h_b,
            };
        }
        let (nw, nl) = (x1 - x0 + 1, y1 - y0 + 1);
        let cell = self.h_t.cell_q();
        let mut h_t = Heightmap::new(nw, nl, cell);
        let mut h_b = Heightmap::new(nw, nl, cell);
        for x in 0..nw {
            for y in 0..nl {
                h_t.set(x, y, self.h_t.get(x0 + x, y0 + y));
                h_b.set(x, y, self.h_b.get(x0 + x, y0 + y));
            }
        }
        ViewPair { h_t, h_b }
    }

    /// Validate that `psi` belongs to a yaw set before rotating.
    pub fn rotate_yaw_checked(&self, psi: f64, yaw_set: &[f64]) -> Result<ViewPair> {
        if !yaw_set.iter().any(|&a| (a - psi).abs() < 1e-9) {
            return Err(PackError::AngleNotInSet(psi));
        }
        Ok(self.rotate_yaw(psi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pair_2x3() -> ViewPair {
        let h_t = Heightmap::from_heights(2, 3, 20, vec![10, 20, 30, 40, 50, 60]);
        let h_b = Heightmap::from_heights(2, 3, 20, vec![0, 5, 10, 0, 5, 10]);
        ViewPair { h_t, h_b }
    }

    #[test]
    fn yaw_zero_is_identity() {
        let p = pair_2x3();
        assert_eq!(p.rotate_yaw(0.0), p);
    }

    #[test]
    fn yaw_pi_twice_is_identity() {
        let p = pair_2x3();
        assert_eq!(p.rotate_yaw(PI).rotate_yaw(PI), p);
    }

    #[test]
    fn quarter_turn_swaps_footprint() {
        let p = pair_2x3();
        let r = p.rotate_yaw(PI / 2.0);
        assert_eq!(r.h_t.width(), 3);
        assert_eq!(r.h_t.length(), 2);
        // (x, y) -> (l-1-y, x): source (0, 0) lands at (2, 0).
        assert_eq!(r.h_t.get(2, 0), p.h_t.get(0, 0));
        assert_eq!(r.h_t.get(0, 1), p.h_t.get(1, 2));
    }

    #[test]
    fn rejects_yaw_outside_set() {
        let p = pair_2x3();
        assert!(p.rotate_yaw_checked(0.3, &[0.0, PI / 2.0]).is_err());
        assert!(p.rotate_yaw_checked(PI / 2.0, &[0.0, PI / 2.0]).is_ok());
    }

    #[test]
    fn pgm_header_and_size() {
        let m = Heightmap::from_heights(2, 2, 20, vec![0, 1, 2, 70000]);
        let pgm = m.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 2\n65535\n"));
        assert_eq!(pgm.len(), 13 + 8);
        // Clamped to 16-bit range.
        assert_eq!(&pgm[pgm.len() - 2..], &65535u16.to_be_bytes());
    }
}
