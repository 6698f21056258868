//! Mesh ingestion: ASCII STL and triangle-soup JSON, plus parity-based
//! voxelization for closed orientable meshes.

use crate::error::{PackError, Result};
use crate::units::mm_to_q;
use crate::voxel::VoxelGrid;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type Triangle = [[f64; 3]; 3];

/// Minimal triangle-soup JSON: `{"triangles": [[[x,y,z],[x,y,z],[x,y,z]], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriangleSoup {
    pub triangles: Vec<Triangle>,
}

/// Parse an ASCII STL file. Only `vertex` lines matter; facet normals are
/// recomputed from winding where needed.
pub fn parse_ascii_stl(text: &str) -> Result<Vec<Triangle>> {
    let mut verts: Vec<[f64; 3]> = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        if it.next() == Some("vertex") {
            let mut v = [0.0; 3];
            for c in &mut v {
                *c = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| PackError::Format("malformed STL vertex line".into()))?;
            }
            verts.push(v);
        }
    }
    if verts.is_empty() || !verts.len().is_multiple_of(3) {
        return Err(PackError::Format(format!(
            "STL vertex count {} is not a positive multiple of 3",
            verts.len()
        )));
    }
    Ok(verts.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

fn vertex_key(v: &[f64; 3]) -> (u64, u64, u64) {
    (v[0].to_bits(), v[1].to_bits(), v[2].to_bits())
}

/// Verify the mesh is closed and consistently oriented: every directed
/// edge must be matched by exactly one reverse edge.
type VertexKey = (u64, u64, u64);

fn check_closed(triangles: &[Triangle]) -> Result<()> {
    let mut directed: HashMap<(VertexKey, VertexKey), i64> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let a = vertex_key(&t[k]);
            let b = vertex_key(&t[(k + 1) % 3]);
            if a == b {
                return Err(PackError::OpenMesh("degenerate edge".into()));
            }
            *directed.entry((a, b)).or_insert(0) += 1;
            *directed.entry((b, a)).or_insert(0) -= 1;
        }
    }
    for (edge, balance) in &directed {
        if *balance != 0 {
            return Err(PackError::OpenMesh(format!(
                "unmatched edge (parity violation), imbalance {balance} at {edge:?}"
            )));
        }
    }
    Ok(())
}

/// Voxelize a closed orientable triangle mesh: a voxel is occupied iff
/// its center lies inside the mesh by vertical-ray parity counting.
pub fn voxelize_mesh(triangles: &[Triangle], cell_mm: f64) -> Result<VoxelGrid> {
    if triangles.is_empty() {
        return Err(PackError::OpenMesh("no triangles".into()));
    }
    check_closed(triangles)?;
    let cell_q = mm_to_q(cell_mm);
    if cell_q <= 0 {
        return Err(PackError::Config("cell size must be positive".into()));
    }
    let mut min = [f64::MAX; 3];
    let mut max = [f64::MIN; 3];
    for t in triangles {
        for v in t {
            for a in 0..3 {
                min[a] = min[a].min(v[a]);
                max[a] = max[a].max(v[a]);
            }
        }
    }
    let cells = |d: f64| ((d / cell_mm) - 1e-9).ceil().max(1.0) as usize;
    let (nx, ny, nz) = (
        cells(max[0] - min[0]),
        cells(max[1] - min[1]),
        cells(max[2] - min[2]),
    );
    let mut occupied: Vec<(i64, i64, i64)> = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            // Tiny deterministic offsets keep the ray away from edges and
            // vertices in the generic case.
            let cx = min[0] + (x as f64 + 0.5) * cell_mm + cell_mm * 1.234_567e-7;
            let cy = min[1] + (y as f64 + 0.5) * cell_mm + cell_mm * 2.718_281e-7;
            let mut crossings: Vec<f64> = Vec::new();
            for t in triangles {
                if let Some(z) = vertical_ray_hit(t, cx, cy) {
                    crossings.push(z);
                }
            }
            crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for z in 0..nz {
                let cz = min[2] + (z as f64 + 0.5) * cell_mm;
                let below = crossings.partition_point(|&c| c < cz);
                if below % 2 == 1 {
                    occupied.push((x as i64, y as i64, z as i64));
                }
            }
        }
    }
    if occupied.is_empty() {
        return Err(PackError::EmptyGrid);
    }
    VoxelGrid::from_occupied(&occupied, cell_q)
}

/// Intersection z of the vertical line through `(px, py)` with a
/// triangle, or None if the projection misses or is degenerate.
fn vertical_ray_hit(t: &Triangle, px: f64, py: f64) -> Option<f64> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let d = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    if d.abs() < 1e-12 {
        return None; // projection degenerate (wall parallel to the ray)
    }
    let w0 = ((b[1] - c[1]) * (px - c[0]) + (c[0] - b[0]) * (py - c[1])) / d;
    let w1 = ((c[1] - a[1]) * (px - c[0]) + (a[0] - c[0]) * (py - c[1])) / d;
    let w2 = 1.0 - w0 - w1;
    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
        return None;
    }
    Some(w0 * a[2] + w1 * b[2] + w2 * c[2])
}

/// Triangulated axis-aligned box, used by tests and fixture generation.
pub fn box_mesh(w: f64, l: f64, h: f64) -> Vec<Triangle> {
    let v = |x: f64, y: f64, z: f64| [x, y, z];
    let p = [
        v(0.0, 0.0, 0.0),
        v(w, 0.0, 0.0),
        v(w, l, 0.0),
        v(0.0, l, 0.0),
        v(0.0, 0.0, h),
        v(w, 0.0, h),
        v(w, l, h),
        v(0.0, l, h),
    ];
    // Outward-facing winding per face.
    let quads = [
        [0, 3, 2, 1], // bottom
        [4, 5, 6, 7], // top
        [0, 1, 5, 4], // -y
        [2, 3, 7, 6], // +y
        [0, 4, 7, 3], // -x
        [1, 2, 6, 5], // +x
    ];
    let mut tris = Vec::with_capacity(12);
    for q in quads {
        tris.push([p[q[0]], p[q[1]], p[q[2]]]);
        tris.push([p[q[0]], p[q[2]], p[q[3]]]);
    }
    tris
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{build_shape, Family, ShapeSpec};

    #[test]
    fn box_mesh_matches_build_shape_cuboid() {
        let tris = box_mesh(20.0, 20.0, 20.0);
        let g = voxelize_mesh(&tris, 2.0).unwrap();
        let spec = ShapeSpec {
            family: Family::Cuboid,
            params: vec![20.0, 20.0, 20.0],
            scale: 1.0,
        };
        let m = build_shape("c", &spec, 2.0).unwrap();
        assert_eq!(g, m.grid);
    }

    #[test]
    fn flipped_face_is_open_mesh() {
        let mut tris = box_mesh(20.0, 20.0, 20.0);
        tris[0].swap(0, 1); // reverse winding of one triangle
        let err = voxelize_mesh(&tris, 2.0).unwrap_err();
        assert!(matches!(err, PackError::OpenMesh(_)));
    }

    #[test]
    fn missing_face_is_open_mesh() {
        let mut tris = box_mesh(20.0, 20.0, 20.0);
        tris.pop();
        assert!(matches!(
            voxelize_mesh(&tris, 2.0),
            Err(PackError::OpenMesh(_))
        ));
    }

    #[test]
    fn icosphere_volume_near_analytic() {
        let tris = icosphere(10.0, 2);
        let g = voxelize_mesh(&tris, 1.0).unwrap();
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        let rel = (g.volume_mm3() - analytic).abs() / analytic;
        assert!(rel < 0.05, "relative volume error {rel}");
    }

    #[test]
    fn ascii_stl_roundtrip() {
        let tris = box_mesh(10.0, 10.0, 10.0);
        let mut stl = String::from("solid box\n");
        for t in &tris {
            stl.push_str("facet normal 0 0 0\nouter loop\n");
            for v in t {
                stl.push_str(&format!("vertex {} {} {}\n", v[0], v[1], v[2]));
            }
            stl.push_str("endloop\nendfacet\n");
        }
        stl.push_str("endsolid box\n");
        let parsed = parse_ascii_stl(&stl).unwrap();
        assert_eq!(parsed.len(), 12);
        assert_eq!(voxelize_mesh(&parsed, 2.0).unwrap().dims(), (5, 5, 5));
    }

    /// Icosphere via subdivision, for the analytic volume oracle.
    fn icosphere(r: f64, subdiv: usize) -> Vec<Triangle> {
        let t = (1.0 + 5.0f64.sqrt()) / 2.0;
        let mut verts: Vec<[f64; 3]> = vec![
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let norm = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n * r, v[1] / n * r, v[2] / n * r]
        };
        for v in &mut verts {
            *v = norm(*v);
        }
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdiv {
            let mut next = Vec::new();
            let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let m = norm([
                        (verts[a][0] + verts[b][0]) / 2.0,
                        (verts[a][1] + verts[b][1]) / 2.0,
                        (verts[a][2] + verts[b][2]) / 2.0,
                    ]);
                    verts.push(m);
                    verts.len() - 1
                })
            };
            for f in &faces {
                let ab = midpoint(f[0], f[1], &mut verts);
                let bc = midpoint(f[1], f[2], &mut verts);
                let ca = midpoint(f[2], f[0], &mut verts);
                next.push([f[0], ab, ca]);
                next.push([f[1], bc, ab]);
                next.push([f[2], ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        faces
            .iter()
            .map(|f| [verts[f[0]], verts[f[1]], verts[f[2]]])
            .collect()
    }
}
