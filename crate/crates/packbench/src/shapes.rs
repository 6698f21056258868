//! Procedural shape families standing in for scanned object datasets.

use crate::error::{PackError, Result};
use crate::object::ObjectModel;
use crate::units::mm_to_q;
use crate::voxel::VoxelGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cuboid,
    Cylinder,
    LSolid,
    TSolid,
    UChannel,
    Bowl,
    Plate,
    SphereCap,
    Peg,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Cuboid,
        Family::Cylinder,
        Family::LSolid,
        Family::TSolid,
        Family::UChannel,
        Family::Bowl,
        Family::Plate,
        Family::SphereCap,
        Family::Peg,
    ];

    /// Convex families used to build easy pools.
    pub fn is_convex(self) -> bool {
        matches!(
            self,
            Family::Cuboid | Family::Cylinder | Family::SphereCap | Family::Peg
        )
    }

    /// Concave or thin families used to build hard pools.
    pub fn is_concave_or_thin(self) -> bool {
        matches!(
            self,
            Family::Bowl | Family::UChannel | Family::Plate | Family::TSolid
        )
    }
}

/// Parametric shape description. `params` are millimeters, per family:
///
/// - cuboid: `[w, l, h]`
/// - cylinder / plate / peg: `[d, h]`
/// - l-solid: `[w, l, h, arm_w, arm_l]` (keep cells with `x < arm_w` or `y < arm_l`)
/// - t-solid: `[w, l, h, cap_d, stem_w]`
/// - u-channel: `[w, l, h, wall]` (gutter open at +z and both y ends)
/// - bowl: `[d, h, wall]` (flat-bottomed cup)
/// - sphere-cap: `[r, cap_h]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub family: Family,
    pub params: Vec<f64>,
    pub scale: f64,
}

impl ShapeSpec {
    fn scaled(&self) -> Vec<f64> {
        self.params.iter().map(|p| p * self.scale).collect()
    }

    /// Scaled bounding-box dimensions in millimeters `(w, l, h)`.
    pub fn bbox_mm(&self) -> Result<(f64, f64, f64)> {
        let p = self.scaled();
        let need = |n: usize| -> Result<()> {
            if p.len() != n || p.iter().any(|&v| v <= 0.0) {
                Err(PackError::DegenerateShape(format!(
                    "{:?} expects {n} positive params",
                    self.family
                )))
            } else {
                Ok(())
            }
        };
        Ok(match self.family {
            Family::Cuboid => {
                need(3)?;
                (p[0], p[1], p[2])
            }
            Family::Cylinder | Family::Plate | Family::Peg => {
                need(2)?;
                (p[0], p[0], p[1])
            }
            Family::LSolid | Family::TSolid => {
                need(5)?;
                (p[0], p[1], p[2])
            }
            Family::UChannel => {
                need(4)?;
                (p[0], p[1], p[2])
            }
            Family::Bowl => {
                need(3)?;
                (p[0], p[0], p[1])
            }
            Family::SphereCap => {
                need(2)?;
                if p[1] > p[0] {
                    return Err(PackError::DegenerateShape(
                        "sphere-cap height exceeds radius".into(),
                    ));
                }
                let a = (2.0 * p[0] * p[1] - p[1] * p[1]).sqrt();
                (2.0 * a, 2.0 * a, p[1])
            }
        })
    }
}

/// Deterministically voxelize a shape: a voxel is occupied iff its center
/// satisfies the family predicate. Identical spec and cell size always
/// produce identical bits.
pub fn build_shape(id: impl Into<String>, spec: &ShapeSpec, cell_mm: f64) -> Result<ObjectModel> {
    let cell_q = mm_to_q(cell_mm);
    if cell_q <= 0 {
        return Err(PackError::Config("cell size must be positive".into()));
    }
    let (w, l, h) = spec.bbox_mm()?;
    let p = spec.scaled();
    let cells = |d: f64| ((d / cell_mm) - 1e-9).ceil().max(1.0) as usize;
    let (nx, ny, nz) = (cells(w), cells(l), cells(h));
    if w < 2.0 * cell_mm || l < 2.0 * cell_mm || h < 2.0 * cell_mm {
        return Err(PackError::DegenerateShape(format!(
            "{:?} thinner than 2 cells on some axis",
            spec.family
        )));
    }
    let fam = spec.family;
    let grid = VoxelGrid::from_fn((nx, ny, nz), cell_q, |x, y, z| {
        let px = (x as f64 + 0.5) * cell_mm;
        let py = (y as f64 + 0.5) * cell_mm;
        let pz = (z as f64 + 0.5) * cell_mm;
        if px >= w || py >= l || pz >= h {
            return false;
        }
        match fam {
            Family::Cuboid => true,
            Family::Cylinder | Family::Plate | Family::Peg => {
                let r = p[0] / 2.0;
                (px - r).powi(2) + (py - r).powi(2) <= r * r
            }
            Family::LSolid => px < p[3] || py < p[4],
            Family::TSolid => py < p[3] || (px - w / 2.0).abs() <= p[4] / 2.0,
            Family::UChannel => px < p[3] || px >= w - p[3] || pz < p[3],
            Family::Bowl => {
                let r = p[0] / 2.0;
                let rad = ((px - r).powi(2) + (py - r).powi(2)).sqrt();
                rad <= r && (pz < p[2] || rad >= r - p[2])
            }
            Family::SphereCap => {
                let (rad, cap_h) = (p[0], p[1]);
                let a = w / 2.0;
                let z0 = cap_h - rad;
                (px - a).powi(2) + (py - a).powi(2) + (pz - z0).powi(2) <= rad * rad
            }
        }
    })?;
    Ok(ObjectModel::new(id, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_is_full_grid() {
        let spec = ShapeSpec {
            family: Family::Cuboid,
            params: vec![40.0, 40.0, 40.0],
            scale: 1.0,
        };
        let m = build_shape("c", &spec, 2.0).unwrap();
        assert_eq!(m.grid.dims(), (20, 20, 20));
        assert!((m.volume_mm3() - 64000.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_dims_rejected() {
        let spec = ShapeSpec {
            family: Family::Cuboid,
            params: vec![40.0, 40.0, 3.0],
            scale: 1.0,
        };
        assert!(build_shape("c", &spec, 2.0).is_err());
    }

    #[test]
    fn bowl_has_rim_and_flat_bottom() {
        let spec = ShapeSpec {
            family: Family::Bowl,
            params: vec![60.0, 40.0, 4.0],
            scale: 1.0,
        };
        let m = build_shape("b", &spec, 2.0).unwrap();
        assert!(m.volume_mm3() < m.bbox_volume_mm3());
        let views = m.grid.top_bottom_views();
        // Flat bottom: every occupied column reaches the zero plane.
        assert!(views
            .h_b
            .heights()
            .iter()
            .all(|&b| b == 0 || b == crate::units::EMPTY_COLUMN));
        // Rim ring: the center column tops out below the rim height.
        let (nx, ny, _) = m.grid.dims();
        let center = views.h_t.get(nx / 2, ny / 2);
        let rim = views.h_t.max_height();
        assert!(center < rim);
        assert_eq!(rim, 400); // 40 mm
    }

    #[test]
    fn sphere_cap_volume_near_analytic() {
        // Cap of height hc from a sphere of radius r: V = pi*hc^2*(3r - hc)/3.
        let (r, hc) = (20.0f64, 12.0f64);
        let spec = ShapeSpec {
            family: Family::SphereCap,
            params: vec![r, hc],
            scale: 1.0,
        };
        let m = build_shape("s", &spec, 1.0).unwrap();
        let analytic = std::f64::consts::PI * hc * hc * (3.0 * r - hc) / 3.0;
        let rel = (m.volume_mm3() - analytic).abs() / analytic;
        assert!(rel < 0.05, "relative volume error {rel}");
    }

    #[test]
    fn deterministic_bits() {
        let spec = ShapeSpec {
            family: Family::UChannel,
            params: vec![60.0, 80.0, 40.0, 10.0],
            scale: 1.07,
        };
        let a = build_shape("u", &spec, 2.0).unwrap();
        let b = build_shape("u", &spec, 2.0).unwrap();
        assert_eq!(a.grid, b.grid);
    }
}
