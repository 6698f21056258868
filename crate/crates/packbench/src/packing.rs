//! The geometric core of placement planning: drop heights, legality
//! masks, state updates, and exhaustive/voxel oracles for testing.

use crate::error::{PackError, Result};
use crate::heightmap::{Heightmap, ViewPair};
use crate::object::{ObjectModel, OrientedObject};
use crate::units::EMPTY_COLUMN;
use crate::voxel::VoxelGrid;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Fixed packing box geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub width_cells: usize,
    pub length_cells: usize,
    /// Cell edge in quanta.
    pub cell_q: i64,
    /// Height cap in quanta.
    pub height_q: i64,
}

impl BoxSpec {
    pub fn empty_map(&self) -> Heightmap {
        Heightmap::new(self.width_cells, self.length_cells, self.cell_q)
    }
}

/// A committed or candidate placement decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object_id: String,
    /// Index pair into the orientation grid.
    pub orientation: (usize, usize),
    /// Cell indices of the footprint center.
    pub position: (usize, usize),
    /// Drop height in quanta.
    pub z_q: i64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedRecord {
    pub placement: Placement,
    pub stable: bool,
    pub volume_mm3: f64,
}

/// Immutable episode state: box heightmap, placement log, unpacked set.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingState {
    pub box_spec: BoxSpec,
    pub box_map: Heightmap,
    pub packed: Vec<PlacedRecord>,
    pub unpacked: BTreeSet<String>,
}

impl PackingState {
    pub fn new(box_spec: BoxSpec, object_ids: impl IntoIterator<Item = String>) -> PackingState {
        PackingState {
            box_spec,
            box_map: box_spec.empty_map(),
            packed: Vec::new(),
            unpacked: object_ids.into_iter().collect(),
        }
    }

    pub fn packed_volume_mm3(&self) -> f64 {
        self.packed.iter().map(|p| p.volume_mm3).sum()
    }
}

/// Top-left cell of a footprint centered at `(x, y)`, or None if any part
/// clips the box walls. Offsets follow the drop-height formula ranges:
/// `s` spans `[-floor(w/2), ceil(w/2)-1]` and likewise for `t`.
pub fn footprint_origin(
    box_map: &Heightmap,
    w: usize,
    l: usize,
    x: usize,
    y: usize,
) -> Option<(usize, usize)> {
    let x0 = (x as i64) - (w as i64) / 2;
    let y0 = (y as i64) - (l as i64) / 2;
    if x0 < 0
        || y0 < 0
        || x0 + w as i64 > box_map.width() as i64
        || y0 + l as i64 > box_map.length() as i64
    {
        return None;
    }
    Some((x0 as usize, y0 as usize))
}

/// Lowest non-colliding drop height under vertical-only insertion:
/// the max over footprint cells of `H_c - H_b`, clamped below at zero.
/// Empty object columns never constrain.
pub fn compute_z(box_map: &Heightmap, h_b: &Heightmap, x: usize, y: usize) -> Result<i64> {
    let (w, l) = (h_b.width(), h_b.length());
    let (x0, y0) =
        footprint_origin(box_map, w, l, x, y).ok_or(PackError::OutOfBounds { x, y })?;
    let mut z = i64::MIN;
    for s in 0..w {
        for t in 0..l {
            let hb = h_b.get(s, t);
            if hb >= EMPTY_COLUMN {
                continue;
            }
            z = z.max(box_map.get(x0 + s, y0 + t) - hb);
        }
    }
    if z == i64::MIN {
        return Err(PackError::IllegalPlacement("object has no columns".into()));
    }
    Ok(z.max(0))
}

/// Per-cell drop heights for every legal footprint center; `None` marks
/// illegal cells (wall clipping or exceeding the height cap).
pub fn placement_field(
    box_map: &Heightmap,
    views: &ViewPair,
    height_cap_q: i64,
) -> Vec<Option<i64>> {
    let (bw, bl) = (box_map.width(), box_map.length());
    let obj_height = views.h_t.max_height();
    let mut field = vec![None; bw * bl];
    if obj_height > height_cap_q {
        return field;
    }
    for x in 0..bw {
        for y in 0..bl {
            if footprint_origin(box_map, views.h_b.width(), views.h_b.length(), x, y).is_none() {
                continue;
            }
            let z = compute_z(box_map, &views.h_b, x, y).expect("in-bounds footprint");
            if z + obj_height <= height_cap_q {
                field[x * bl + y] = Some(z);
            }
        }
    }
    field
}

/// Boolean legality grid: cell `(x, y)` is legal iff the footprint fits
/// inside the walls and the dropped object stays under the height cap.
pub fn legality_mask(
    box_map: &Heightmap,
    views: &ViewPair,
    height_cap_q: i64,
) -> Vec<bool> {
    placement_field(box_map, views, height_cap_q)
        .iter()
        .map(|z| z.is_some())
        .collect()
}

/// Per-orientation score grid with its legality mask. Illegal cells carry
/// score exactly zero.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub width: usize,
    pub length: usize,
    pub scores: Vec<f64>,
    pub legal: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(width: usize, length: usize, scores: Vec<f64>, legal: Vec<bool>) -> ScoreMatrix {
        assert_eq!(scores.len(), width * length);
        assert_eq!(legal.len(), width * length);
        let mut m = ScoreMatrix {
            width,
            length,
            scores,
            legal,
        };
        m.zero_illegal();
        m
    }

    fn zero_illegal(&mut self) {
        for (s, &ok) in self.scores.iter_mut().zip(&self.legal) {
            if !ok {
                *s = 0.0;
            }
        }
    }

    /// Argmax over legal cells; ties resolve to the lexicographically
    /// smallest `(x, y)`.
    pub fn argmax_legal(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for x in 0..self.width {
            for y in 0..self.length {
                let i = x * self.length + y;
                if self.legal[i] && best.is_none_or(|(_, _, b)| self.scores[i] > b) {
                    best = Some((x, y, self.scores[i]));
                }
            }
        }
        best
    }
}

/// Apply a placement, returning the successor state. The box heightmap is
/// raised to `max(old, z + h_t)` on every occupied footprint column;
/// empty object columns leave it unchanged.
pub fn apply_placement(
    state: &PackingState,
    placement: &Placement,
    views: &ViewPair,
    volume_mm3: f64,
    stable: bool,
) -> Result<PackingState> {
    let (x, y) = placement.position;
    let (w, l) = (views.h_t.width(), views.h_t.length());
    let (x0, y0) = footprint_origin(&state.box_map, w, l, x, y)
        .ok_or(PackError::IllegalPlacement(format!("footprint clips walls at ({x}, {y})")))?;
    let z = compute_z(&state.box_map, &views.h_b, x, y)?;
    if z != placement.z_q {
        return Err(PackError::IllegalPlacement(format!(
            "stale drop height: stated {} computed {}",
            placement.z_q, z
        )));
    }
    if z + views.h_t.max_height() > state.box_spec.height_q {
        return Err(PackError::IllegalPlacement("exceeds box height".into()));
    }
    if !state.unpacked.contains(&placement.object_id) {
        return Err(PackError::IllegalPlacement(format!(
            "object {} is not unpacked",
            placement.object_id
        )));
    }
    let mut next = state.clone();
    for s in 0..w {
        for t in 0..l {
            let ht = views.h_t.get(s, t);
            if ht > 0 {
                let cur = next.box_map.get(x0 + s, y0 + t);
                next.box_map.set(x0 + s, y0 + t, cur.max(z + ht));
            }
        }
    }
    next.unpacked.remove(&placement.object_id);
    next.packed.push(PlacedRecord {
        placement: placement.clone(),
        stable,
        volume_mm3,
    });
    Ok(next)
}

/// Exhaustive placement oracle for small instances: scores every legal
/// `(orientation, x, y)` with the objective on the successor state and
/// returns the argmax, ties broken by `(i, j, x, y)` lexicographic order.
/// Intended for boxes up to roughly 64x64 cells.
pub fn brute_force_best(
    state: &PackingState,
    object: &ObjectModel,
    orientations: &[OrientedObject],
    objective: &dyn Fn(&PackingState) -> f64,
) -> Result<Placement> {
    let mut best: Option<(f64, Placement)> = None;
    for o in orientations {
        let field = placement_field(&state.box_map, &o.views, state.box_spec.height_q);
        let bl = state.box_map.length();
        for x in 0..state.box_map.width() {
            for y in 0..bl {
                let Some(z) = field[x * bl + y] else { continue };
                let candidate = Placement {
                    object_id: object.id.clone(),
                    orientation: o.index,
                    position: (x, y),
                    z_q: z,
                    score: 0.0,
                };
                let next = apply_placement(state, &candidate, &o.views, object.volume_mm3(), true)?;
                let score = objective(&next);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((
                        score,
                        Placement {
                            score,
                            ..candidate
                        },
                    ));
                }
            }
        }
    }
    best.map(|(_, p)| p).ok_or(PackError::NoSpace)
}

/// Voxel-space soundness oracle: reconstructs full 3D occupancy from the
/// placement log and reports any interpenetration or height-cap breach.
/// Drop heights must land on the voxel lattice.
pub fn voxel_overlap_check(
    box_spec: &BoxSpec,
    placed: &[(Placement, VoxelGrid)],
) -> Result<()> {
    let c = box_spec.cell_q;
    let nz = (box_spec.height_q / c) as usize;
    let (bw, bl) = (box_spec.width_cells, box_spec.length_cells);
    let mut occ = vec![false; bw * bl * nz];
    for (p, grid) in placed {
        if p.z_q % c != 0 {
            return Err(PackError::IllegalPlacement(format!(
                "z {} off the voxel lattice for {}",
                p.z_q, p.object_id
            )));
        }
        let (nxo, nyo, nzo) = grid.dims();
        let x0 = p.position.0 as i64 - (nxo as i64) / 2;
        let y0 = p.position.1 as i64 - (nyo as i64) / 2;
        let z0 = p.z_q / c;
        for (vx, vy, vz) in grid.occupied_coords() {
            let (gx, gy, gz) = (x0 + vx as i64, y0 + vy as i64, z0 + vz as i64);
            if gx < 0 || gy < 0 || gz < 0 || gx >= bw as i64 || gy >= bl as i64 {
                return Err(PackError::IllegalPlacement(format!(
                    "{} outside box walls",
                    p.object_id
                )));
            }
            if gz >= nz as i64 {
                return Err(PackError::IllegalPlacement(format!(
                    "{} breaches height cap",
                    p.object_id
                )));
            }
            let _ = nzo;
            let idx = (gx as usize * bl + gy as usize) * nz + gz as usize;
            if occ[idx] {
                return Err(PackError::IllegalPlacement(format!(
                    "interpenetration at ({gx}, {gy}, {gz}) involving {}",
                    p.object_id
                )));
            }
            occ[idx] = true;
        }
    }
    Ok(())
}

/// Independent drop-height oracle via a voxel collision scan. The
/// terrain is solid below the box heightmap; the object is the oriented
/// voxel grid lowered in quantum steps. Collision freedom is monotone in
/// `z`, so the scan binary-searches for the smallest intersection-free
/// drop instead of visiting every quantum.
pub fn collision_scan_z(box_map: &Heightmap, grid: &VoxelGrid, x: usize, y: usize) -> Result<i64> {
    let (nxo, nyo, _) = grid.dims();
    let (x0, y0) =
        footprint_origin(box_map, nxo, nyo, x, y).ok_or(PackError::OutOfBounds { x, y })?;
    let c = grid.cell_q();
    let collides = |z: i64| {
        grid.occupied_coords()
            .any(|(vx, vy, vz)| z + vz as i64 * c < box_map.get(x0 + vx, y0 + vy))
    };
    let mut hi = box_map.max_height(); // always free: every voxel clears the terrain
    if !collides(0) {
        return Ok(0);
    }
    let mut lo = 0i64; // colliding
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if collides(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
