//! Voxelized rigid objects: occupancy grids, rigid rotations, and
//! principal/oriented view rendering.

use crate::error::{PackError, Result};
use crate::heightmap::{Heightmap, ViewPair};
use crate::units::{is_right_angle, EMPTY_COLUMN, QUANTA_PER_MM};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Bit-true occupancy grid. The constructor tightens the grid so that it
/// exactly bounds the occupied set on every face.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    nx: usize,
    ny: usize,
    nz: usize,
    /// Voxel edge length in quanta.
    cell_q: i64,
    occ: Vec<bool>,
}

const PKVX_MAGIC: &[u8; 4] = b"PKVX";
const PKVX_VERSION: u16 = 1;

impl VoxelGrid {
    #[inline]
    fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.ny + y) * self.nz + z
    }

    /// Build from a predicate over voxel indices, then tighten.
    pub fn from_fn(
        dims: (usize, usize, usize),
        cell_q: i64,
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Result<VoxelGrid> {
        let (nx, ny, nz) = dims;
        assert!(cell_q > 0);
        let mut occ = vec![false; nx * ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    occ[(x * ny + y) * nz + z] = f(x, y, z);
                }
            }
        }
        let g = VoxelGrid {
            nx,
            ny,
            nz,
            cell_q,
            occ,
        };
        g.tightened()
    }

    /// Build from a list of occupied voxel coordinates, then tighten.
    pub fn from_occupied(coords: &[(i64, i64, i64)], cell_q: i64) -> Result<VoxelGrid> {
        if coords.is_empty() {
            return Err(PackError::EmptyGrid);
        }
        let min = coords.iter().fold((i64::MAX, i64::MAX, i64::MAX), |m, c| {
            (m.0.min(c.0), m.1.min(c.1), m.2.min(c.2))
        });
        let max = coords.iter().fold((i64::MIN, i64::MIN, i64::MIN), |m, c| {
            (m.0.max(c.0), m.1.max(c.1), m.2.max(c.2))
        });
        let (nx, ny, nz) = (
            (max.0 - min.0 + 1) as usize,
            (max.1 - min.1 + 1) as usize,
            (max.2 - min.2 + 1) as usize,
        );
        let mut occ = vec![false; nx * ny * nz];
        for &(x, y, z) in coords {
            let (x, y, z) = (
                (x - min.0) as usize,
                (y - min.1) as usize,
                (z - min.2) as usize,
            );
            occ[(x * ny + y) * nz + z] = true;
        }
        Ok(VoxelGrid {
            nx,
            ny,
            nz,
            cell_q,
            occ,
        })
    }

    fn tightened(&self) -> Result<VoxelGrid> {
        let coords: Vec<(i64, i64, i64)> = self
            .occupied_coords()
            .map(|(x, y, z)| (x as i64, y as i64, z as i64))
            .collect();
        if coords.is_empty() {
            return Err(PackError::EmptyGrid);
        }
        VoxelGrid::from_occupied(&coords, self.cell_q)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn cell_q(&self) -> i64 {
        self.cell_q
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occ[self.idx(x, y, z)]
    }

    pub fn occupied_count(&self) -> u64 {
        self.occ.iter().filter(|&&b| b).count() as u64
    }

    /// Object volume in cubic millimeters: occupied count times cell^3.
    pub fn volume_mm3(&self) -> f64 {
        let cell_mm = self.cell_q as f64 / QUANTA_PER_MM as f64;
        self.occupied_count() as f64 * cell_mm.powi(3)
    }

    pub fn occupied_coords(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (ny, nz) = (self.ny, self.nz);
        self.occ.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| {
            let z = i % nz;
            let y = (i / nz) % ny;
            let x = i / (nz * ny);
            (x, y, z)
        })
    }

    /// Center of mass of the occupied set under uniform density, in quanta
    /// relative to the grid origin.
    pub fn center_of_mass_q(&self) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        let mut n = 0u64;
        for (x, y, z) in self.occupied_coords() {
            sum[0] += x as f64 + 0.5;
            sum[1] += y as f64 + 0.5;
            sum[2] += z as f64 + 0.5;
            n += 1;
        }
        let c = self.cell_q as f64;
        [
            sum[0] / n as f64 * c,
            sum[1] / n as f64 * c,
            sum[2] / n as f64 * c,
        ]
    }

    /// Rigid rotation by Euler angles, `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    ///
    /// Right-angle triples rotate by exact lattice permutation; anything
    /// else maps occupied-voxel centers through the rotation and marks the
    /// nearest cell (no hole closing).
    pub fn rotate_euler(&self, roll: f64, pitch: f64, yaw: f64) -> Result<VoxelGrid> {
        if is_right_angle(roll) && is_right_angle(pitch) && is_right_angle(yaw) {
            let m = int_rotation(roll, pitch, yaw);
            let coords: Vec<(i64, i64, i64)> = self
                .occupied_coords()
                .map(|(x, y, z)| {
                    let v = [x as i64, y as i64, z as i64];
                    (
                        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
                        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
                        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
                    )
                })
                .collect();
            return VoxelGrid::from_occupied(&coords, self.cell_q);
        }
        let m = f64_rotation(roll, pitch, yaw);
        let centers: Vec<[f64; 3]> = self
            .occupied_coords()
            .map(|(x, y, z)| {
                let p = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                [
                    m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
                    m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
                    m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
                ]
            })
            .collect();
        if centers.is_empty() {
            return Err(PackError::EmptyGrid);
        }
        let mut min = [f64::MAX; 3];
        for c in &centers {
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
            }
        }
        let coords: Vec<(i64, i64, i64)> = centers
            .iter()
            .map(|c| {
                (
                    (c[0] - min[0]).round() as i64,
                    (c[1] - min[1]).round() as i64,
                    (c[2] - min[2]).round() as i64,
                )
            })
            .collect();
        VoxelGrid::from_occupied(&coords, self.cell_q)
    }

    /// Column extrema along z: `(min_z, max_z)` for each `(x, y)`.
    fn z_extents(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let mut lo = None;
        let mut hi = None;
        for z in 0..self.nz {
            if self.get(x, y, z) {
                if lo.is_none() {
                    lo = Some(z);
                }
                hi = Some(z);
            }
        }
        lo.map(|l| (l, hi.unwrap()))
    }

    /// Top-view and bottom-view heightmaps relative to the object's lowest
    /// plane (z = 0 of the tightened grid).
    pub fn top_bottom_views(&self) -> ViewPair {
        let mut h_t = Heightmap::new(self.nx, self.ny, self.cell_q);
        let mut h_b = h_t.clone();
        for x in 0..self.nx {
            for y in 0..self.ny {
                match self.z_extents(x, y) {
                    Some((lo, hi)) => {
                        h_t.set(x, y, (hi as i64 + 1) * self.cell_q);
                        h_b.set(x, y, lo as i64 * self.cell_q);
                    }
                    None => {
                        h_b.set(x, y, EMPTY_COLUMN);
                    }
                }
            }
        }
        ViewPair { h_t, h_b }
    }

    /// Six principal-view heightmaps, order: front (-y viewer), rear (+y),
    /// left (-x), right (+x), top (+z), bottom (-z).
    ///
    /// Each cell holds the distance from the view's zero-plane (the
    /// opposite bounding-box face) to the occupied surface nearest the
    /// viewer along the ray; rays hitting nothing read 0.
    pub fn principal_views(&self) -> [Heightmap; 6] {
        let c = self.cell_q;
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let mut front = Heightmap::new(nx, nz, c);
        let mut rear = Heightmap::new(nx, nz, c);
        let mut left = Heightmap::new(ny, nz, c);
        let mut right = Heightmap::new(ny, nz, c);
        let mut top = Heightmap::new(nx, ny, c);
        let mut bottom = Heightmap::new(nx, ny, c);
        for x in 0..nx {
            for y in 0..ny {
                if let Some((lo, hi)) = self.z_extents(x, y) {
                    top.set(x, y, (hi as i64 + 1) * c);
                    bottom.set(x, y, (nz as i64 - lo as i64) * c);
                }
            }
        }
        for x in 0..nx {
            for z in 0..nz {
                let ys: Vec<usize> = (0..ny).filter(|&y| self.get(x, y, z)).collect();
                if let (Some(&lo), Some(&hi)) = (ys.first(), ys.last()) {
                    front.set(x, z, (ny as i64 - lo as i64) * c);
                    rear.set(x, z, (hi as i64 + 1) * c);
                }
            }
        }
        for y in 0..ny {
            for z in 0..nz {
                let xs: Vec<usize> = (0..nx).filter(|&x| self.get(x, y, z)).collect();
                if let (Some(&lo), Some(&hi)) = (xs.first(), xs.last()) {
                    left.set(y, z, (nx as i64 - lo as i64) * c);
                    right.set(y, z, (hi as i64 + 1) * c);
                }
            }
        }
        [front, rear, left, right, top, bottom]
    }

    /// Serialize to the PKVX binary container.
    ///
    /// Layout: magic "PKVX", version u16 LE, dims 3 x u32 LE, cell size in
    /// micrometers u32 LE, then bit-packed occupancy (LSB first) in
    /// row-major order with x fastest, then y, then z.
    pub fn write_pkvx(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(PKVX_MAGIC)?;
        w.write_all(&PKVX_VERSION.to_le_bytes())?;
        for d in [self.nx, self.ny, self.nz] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let cell_um = (self.cell_q * 100) as u32;
        w.write_all(&cell_um.to_le_bytes())?;
        let nbits = self.nx * self.ny * self.nz;
        let mut bytes = vec![0u8; nbits.div_ceil(8)];
        let mut bit = 0usize;
        for z in 0..self.nz {
            for y in 0..self.ny {
                for x in 0..self.nx {
                    if self.get(x, y, z) {
                        bytes[bit / 8] |= 1 << (bit % 8);
                    }
                    bit += 1;
                }
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_pkvx(r: &mut impl Read) -> Result<VoxelGrid> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PKVX_MAGIC {
            return Err(PackError::Format("bad PKVX magic".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != PKVX_VERSION {
            return Err(PackError::Format("unsupported PKVX version".into()));
        }
        let mut b4 = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        r.read_exact(&mut b4)?;
        let cell_um = u32::from_le_bytes(b4);
        if cell_um == 0 || cell_um % 100 != 0 {
            return Err(PackError::Format(
                "cell size must be a positive multiple of 100 um".into(),
            ));
        }
        let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
        let nbits = nx * ny * nz;
        let mut bytes = vec![0u8; nbits.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        let mut occ = vec![false; nbits];
        let mut bit = 0usize;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if bytes[bit / 8] >> (bit % 8) & 1 == 1 {
                        occ[(x * ny + y) * nz + z] = true;
                    }
                    bit += 1;
                }
            }
        }
        let g = VoxelGrid {
            nx,
            ny,
            nz,
            cell_q: (cell_um / 100) as i64,
            occ,
        };
        g.tightened()
    }

    pub fn to_json(&self) -> VoxelGridJson {
        VoxelGridJson {
            dims: [self.nx, self.ny, self.nz],
            cell_mm: self.cell_q as f64 / QUANTA_PER_MM as f64,
            occupied: self
                .occupied_coords()
                .map(|(x, y, z)| [x, y, z])
                .collect(),
        }
    }

    pub fn from_json(j: &VoxelGridJson) -> Result<VoxelGrid> {
        let cell_q = crate::units::mm_to_q(j.cell_mm);
        if cell_q <= 0 {
            return Err(PackError::Format("cell_mm must be positive".into()));
        }
        let coords: Vec<(i64, i64, i64)> = j
            .occupied
            .iter()
            .map(|c| (c[0] as i64, c[1] as i64, c[2] as i64))
            .collect();
        VoxelGrid::from_occupied(&coords, cell_q)
    }
}

/// Human-authored JSON mirror of the PKVX container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoxelGridJson {
    pub dims: [usize; 3],
    pub cell_mm: f64,
    pub occupied: Vec<[usize; 3]>,
}

fn f64_rotation(roll: f64, pitch: f64, yaw: f64) -> [[f64; 3]; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    // Rz(yaw) * Ry(pitch) * Rx(roll)
    [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
}

fn int_rotation(roll: f64, pitch: f64, yaw: f64) -> [[i64; 3]; 3] {
    let m = f64_rotation(roll, pitch, yaw);
    let mut out = [[0i64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[i][j].round() as i64;
            debug_assert!((m[i][j] - out[i][j] as f64).abs() < 1e-9);
        }
    }
    out
}
