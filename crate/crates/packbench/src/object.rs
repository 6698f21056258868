//! Packable object models and their cached oriented views.

use crate::error::{PackError, Result};
use crate::heightmap::{Heightmap, ViewPair};
use crate::orientation::OrientationGrid;
use crate::voxel::VoxelGrid;

/// A voxelized rigid object in its canonical stable pose, with derived
/// bounding box, volume, and six principal-view heightmaps.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub id: String,
    pub grid: VoxelGrid,
    /// Bounding box dimensions in quanta.
    pub bbox_q: [i64; 3],
    pub principal_views: [Heightmap; 6],
}

impl ObjectModel {
    pub fn new(id: impl Into<String>, grid: VoxelGrid) -> ObjectModel {
        let (nx, ny, nz) = grid.dims();
        let c = grid.cell_q();
        let bbox_q = [nx as i64 * c, ny as i64 * c, nz as i64 * c];
        let principal_views = grid.principal_views();
        ObjectModel {
            id: id.into(),
            grid,
            bbox_q,
            principal_views,
        }
    }

    pub fn volume_mm3(&self) -> f64 {
        self.grid.volume_mm3()
    }

    /// Bounding-box volume in cubic millimeters, ignoring voids.
    pub fn bbox_volume_mm3(&self) -> f64 {
        let q = crate::units::QUANTA_PER_MM as f64;
        self.bbox_q.iter().map(|&d| d as f64 / q).product()
    }

    /// Top/bottom views after a rigid (roll, pitch) rotation; yaw is
    /// applied separately by heightmap rotation. The angle pair must come
    /// from the configured orientation grid (only discretized scans are
    /// cached).
    pub fn oriented_views(
        &self,
        grid: &OrientationGrid,
        roll: f64,
        pitch: f64,
    ) -> Result<(VoxelGrid, ViewPair)> {
        if !grid.contains_rp(roll, pitch) {
            return Err(PackError::AngleNotInSet(roll.max(pitch)));
        }
        let rotated = self.grid.rotate_euler(roll, pitch, 0.0)?;
        let views = rotated.top_bottom_views();
        Ok((rotated, views))
    }
}

/// One fully oriented instance of an object: rotated voxels plus the
/// matching top/bottom view pair.
#[derive(Debug, Clone)]
pub struct OrientedObject {
    /// Orientation index pair into the [`OrientationGrid`].
    pub index: (usize, usize),
    pub euler: (f64, f64, f64),
    pub grid: VoxelGrid,
    pub views: ViewPair,
}

impl OrientedObject {
    pub fn build(
        object: &ObjectModel,
        orientations: &OrientationGrid,
        i: usize,
        j: usize,
    ) -> Result<OrientedObject> {
        let (roll, pitch, yaw) = orientations.euler(i, j);
        let (rp_grid, rp_views) = object.oriented_views(orientations, roll, pitch)?;
        // Right-angle yaws are exact on both representations. For other
        // yaws the views use nearest-cell resampling and the voxels a
        // general re-rasterization; they may disagree by up to one cell.
        // The views are authoritative for placement, the voxels for
        // stability and overlap checks.
        let grid = rp_grid.rotate_euler(0.0, 0.0, yaw)?;
        let views = rp_views.rotate_yaw(yaw);
        Ok(OrientedObject {
            index: (i, j),
            euler: (roll, pitch, yaw),
            grid,
            views,
        })
    }

    /// Oriented z-extent in quanta (max of the top view).
    pub fn height_q(&self) -> i64 {
        self.views.h_t.max_height()
    }
}

/// All distinct oriented instances of an object, deduplicated by view
/// pair. Duplicates keep the lexicographically smallest (i, j), so
/// planner tie-breaking is unaffected by the deduplication.
pub fn distinct_orientations(
    object: &ObjectModel,
    orientations: &OrientationGrid,
) -> Result<Vec<OrientedObject>> {
    let mut seen: std::collections::HashSet<ViewPair> = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, j) in orientations.index_pairs() {
        let o = OrientedObject::build(object, orientations, i, j)?;
        if seen.insert(o.views.clone()) {
            out.push(o);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize) -> ObjectModel {
        ObjectModel::new(
            "cube",
            VoxelGrid::from_fn((n, n, n), 20, |_, _, _| true).unwrap(),
        )
    }

    #[test]
    fn bbox_volume_examples() {
        // 20x20x20 mm bounding box -> 8000 mm^3.
        let m = cube(10);
        assert!((m.bbox_volume_mm3() - 8000.0).abs() < 1e-9);
    }

    #[test]
    fn bbox_ignores_voids() {
        // L-shape inside a 40x40x20 mm bbox still reports 32000 mm^3.
        let g = VoxelGrid::from_fn((20, 20, 10), 20, |x, y, _| x < 10 || y < 10).unwrap();
        let m = ObjectModel::new("l", g);
        assert!((m.bbox_volume_mm3() - 32000.0).abs() < 1e-9);
    }

    #[test]
    fn full_cube_views_constant() {
        // Unit cube filling a 10x10x10 grid at 2 mm cells: all six views
        // are 10x10 maps of constant 20 mm (200 quanta).
        let m = cube(10);
        for v in &m.principal_views {
            assert_eq!(v.width(), 10);
            assert_eq!(v.length(), 10);
            assert!(v.heights().iter().all(|&h| h == 200));
        }
    }

    #[test]
    fn oriented_views_reject_unlisted_angles() {
        let m = cube(4);
        let g = OrientationGrid::default();
        assert!(m.oriented_views(&g, 0.3, 0.0).is_err());
    }

    #[test]
    fn flat_bottom_has_zero_bottom_view() {
        let m = cube(4);
        let g = OrientationGrid::default();
        let (_, views) = m.oriented_views(&g, 0.0, 0.0).unwrap();
        assert!(views.h_b.heights().iter().all(|&h| h == 0));
    }

    #[test]
    fn dedup_keeps_lex_smallest() {
        let m = cube(4);
        let g = OrientationGrid::default();
        let distinct = distinct_orientations(&m, &g).unwrap();
        // A cube is identical in every right-angle orientation.
        assert_eq!(distinct.len(), 1);
        assert_eq!(distinct[0].index, (0, 0));
    }
}
