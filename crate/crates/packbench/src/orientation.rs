//! Discretized placement orientations: a roll/pitch set crossed with an
//! equally spaced yaw set.

use crate::error::{PackError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationGrid {
    /// Ordered (roll, pitch) pairs, radians in [0, 2*pi).
    rp_set: Vec<(f64, f64)>,
    /// Ordered yaw values, radians in [0, 2*pi), first element 0,
    /// equally spaced.
    yaw_set: Vec<f64>,
}

impl OrientationGrid {
    /// Full grid with the given search intervals; the default
    /// interval for all three angles is pi/2.
    pub fn from_intervals(rp_interval: f64, yaw_interval: f64) -> Result<OrientationGrid> {
        let angles = |step: f64| -> Result<Vec<f64>> {
            if step <= 0.0 || step > TAU {
                return Err(PackError::Config(format!("bad search interval {step}")));
            }
            let n = (TAU / step).round() as usize;
            if ((TAU / step) - n as f64).abs() > 1e-9 {
                return Err(PackError::Config(
                    "search interval must divide 2*pi".into(),
                ));
            }
            Ok((0..n).map(|k| k as f64 * step).collect())
        };
        let rp = angles(rp_interval)?;
        let yaw_set = angles(yaw_interval)?;
        let mut rp_set = Vec::with_capacity(rp.len() * rp.len());
        for &roll in &rp {
            for &pitch in &rp {
                rp_set.push((roll, pitch));
            }
        }
        Ok(OrientationGrid { rp_set, yaw_set })
    }

    pub fn rp_set(&self) -> &[(f64, f64)] {
        &self.rp_set
    }

    pub fn yaw_set(&self) -> &[f64] {
        &self.yaw_set
    }

    /// Euler triple for orientation index pair `(i, j)`.
    pub fn euler(&self, i: usize, j: usize) -> (f64, f64, f64) {
        let (roll, pitch) = self.rp_set[i];
        (roll, pitch, self.yaw_set[j])
    }

    pub fn contains_rp(&self, roll: f64, pitch: f64) -> bool {
        self.rp_set
            .iter()
            .any(|&(r, p)| (r - roll).abs() < 1e-9 && (p - pitch).abs() < 1e-9)
    }

    /// All (i, j) index pairs in lexicographic order.
    pub fn index_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.yaw_set.len();
        (0..self.rp_set.len()).flat_map(move |i| (0..m).map(move |j| (i, j)))
    }
}

impl Default for OrientationGrid {
    fn default() -> Self {
        OrientationGrid::from_intervals(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn default_grid_shape() {
        let g = OrientationGrid::default();
        assert_eq!(g.rp_set().len(), 16);
        assert_eq!(g.yaw_set(), &[0.0, FRAC_PI_2, FRAC_PI_2 * 2.0, FRAC_PI_2 * 3.0]);
        assert_eq!(g.index_pairs().count(), 64);
    }

    #[test]
    fn yaw_set_starts_at_zero_equally_spaced() {
        let g = OrientationGrid::from_intervals(FRAC_PI_2, std::f64::consts::FRAC_PI_4).unwrap();
        assert_eq!(g.yaw_set()[0], 0.0);
        let d = g.yaw_set()[1] - g.yaw_set()[0];
        for w in g.yaw_set().windows(2) {
            assert!((w[1] - w[0] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_dividing_interval() {
        assert!(OrientationGrid::from_intervals(1.0, FRAC_PI_2).is_err());
    }
}
