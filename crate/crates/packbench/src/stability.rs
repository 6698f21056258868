//! Quasi-static placement stability: the horizontal projection of the
//! object's center of mass must fall inside the convex hull of its
//! contact cells. Substitutes for a dynamics simulator; the position and
//! angle tolerances remain in the interface so a physics backend can
//! slot in behind the same signature.

use crate::error::{PackError, Result};
use crate::heightmap::{Heightmap, ViewPair};
use crate::packing::footprint_origin;
use crate::units::{EMPTY_COLUMN, QUANTA_PER_MM};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityThresholds {
    /// Position tolerance in millimeters (reserved for a dynamics backend).
    pub pos_tol_mm: f64,
    /// Orientation tolerance in radians (reserved for a dynamics backend).
    pub ang_tol_rad: f64,
}

impl Default for StabilityThresholds {
    fn default() -> Self {
        StabilityThresholds {
            pos_tol_mm: 20.0,
            ang_tol_rad: std::f64::consts::FRAC_PI_6,
        }
    }
}

const HULL_EPS: f64 = 1e-6;

/// Returns 1 (true) iff the placement is statically stable.
///
/// Contact cells are footprint cells where the pre-placement box height
/// minus the object's bottom gap equals the drop height exactly (in the
/// height quantum). At least one such cell always exists for a drop
/// height computed from the box map.
pub fn stability_check(
    box_before: &Heightmap,
    views: &ViewPair,
    x: usize,
    y: usize,
    z_q: i64,
    com_xy_mm: [f64; 2],
    _thresholds: &StabilityThresholds,
) -> Result<bool> {
    let (w, l) = (views.h_b.width(), views.h_b.length());
    let (x0, y0) =
        footprint_origin(box_before, w, l, x, y).ok_or(PackError::OutOfBounds { x, y })?;
    let q = QUANTA_PER_MM as f64;
    let cell_mm = box_before.cell_q() as f64 / q;
    let mut contacts: Vec<[f64; 2]> = Vec::new();
    for s in 0..w {
        for t in 0..l {
            let hb = views.h_b.get(s, t);
            if hb >= EMPTY_COLUMN {
                continue;
            }
            let resting = box_before.get(x0 + s, y0 + t) - hb;
            // z = 0 with a clamped negative max also rests on the floor.
            if resting == z_q || (z_q == 0 && hb == 0 && box_before.get(x0 + s, y0 + t) == 0) {
                contacts.push([
                    (x0 + s) as f64 * cell_mm + cell_mm / 2.0,
                    (y0 + t) as f64 * cell_mm + cell_mm / 2.0,
                ]);
            }
        }
    }
    assert!(
        !contacts.is_empty(),
        "drop height must touch at least one contact cell"
    );
    let hull = convex_hull(&mut contacts);
    Ok(point_in_hull(com_xy_mm, &hull))
}

/// Andrew monotone chain; returns the hull counterclockwise, degenerate
/// inputs (1-2 distinct points, collinear sets) pass through reduced.
pub fn convex_hull(points: &mut Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    if points.len() < 3 {
        return points.clone();
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in points.iter() {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Containment with boundary tolerance; handles point and segment hulls.
pub fn point_in_hull(p: [f64; 2], hull: &[[f64; 2]]) -> bool {
    match hull.len() {
        0 => false,
        1 => dist2(p, hull[0]) <= HULL_EPS * HULL_EPS,
        2 => dist_point_segment(p, hull[0], hull[1]) <= HULL_EPS,
        _ => {
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                if cross < -HULL_EPS {
                    return false;
                }
            }
            true
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist2(p, a).sqrt();
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1]]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heightmap::Heightmap;

    fn flat_views(w: usize, l: usize, h: i64) -> ViewPair {
        ViewPair {
            h_t: Heightmap::from_heights(w, l, 20, vec![h; w * l]),
            h_b: Heightmap::new(w, l, 20),
        }
    }

    #[test]
    fn cube_on_floor_is_stable() {
        let map = Heightmap::new(20, 20, 20);
        let v = flat_views(5, 5, 100);
        // Footprint origin (8, 8), center of mass over the middle.
        let com = [
            (8.0 + 2.5) * 2.0, // mm
            (8.0 + 2.5) * 2.0,
        ];
        assert!(
            stability_check(&map, &v, 10, 10, 0, com, &StabilityThresholds::default()).unwrap()
        );
    }

    #[test]
    fn overhung_com_is_unstable() {
        // Single 1-cell support column at height 100; slab rests on it
        // with COM 30 mm beyond the column.
        let mut map = Heightmap::new(30, 30, 20);
        map.set(10, 10, 100);
        let v = flat_views(20, 3, 40);
        let z = crate::packing::compute_z(&map, &v.h_b, 15, 10).unwrap();
        assert_eq!(z, 100);
        let com = [(10.5 * 2.0) + 30.0, 10.5 * 2.0];
        assert!(
            !stability_check(&map, &v, 15, 10, z, com, &StabilityThresholds::default()).unwrap()
        );
    }

    #[test]
    fn bridge_between_towers_is_stable() {
        // Plate across two equal towers, COM between them.
        let mut map = Heightmap::new(30, 30, 20);
        for t in 0..3 {
            map.set(8, 10 + t, 200);
            map.set(16, 10 + t, 200);
        }
        let v = flat_views(11, 3, 40);
        let z = crate::packing::compute_z(&map, &v.h_b, 12, 11).unwrap();
        assert_eq!(z, 200);
        let com = [12.5 * 2.0, 11.5 * 2.0];
        assert!(
            stability_check(&map, &v, 12, 11, z, com, &StabilityThresholds::default()).unwrap()
        );
    }

    #[test]
    fn hull_of_square_contains_center() {
        let mut pts = vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0], [2.0, 1.0]];
        let hull = convex_hull(&mut pts);
        assert_eq!(hull.len(), 4);
        assert!(point_in_hull([2.0, 2.0], &hull));
        assert!(point_in_hull([0.0, 0.0], &hull)); // boundary counts
        assert!(!point_in_hull([5.0, 2.0], &hull));
    }

    #[test]
    fn collinear_hull_degenerates_to_segment() {
        let mut pts = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let hull = convex_hull(&mut pts);
        assert!(point_in_hull([1.5, 1.5], &hull));
        assert!(!point_in_hull([1.5, 1.6], &hull));
    }
}
