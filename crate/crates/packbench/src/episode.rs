//! Random episode-set generation: pools of procedurally generated objects.

use crate::error::Result;
use crate::object::ObjectModel;
use crate::shapes::{build_shape, Family, ShapeSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl std::str::FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty '{other}'")),
        }
    }
}

/// Candidate pool for one packing episode.
#[derive(Debug, Clone)]
pub struct EpisodeSet {
    pub objects: Vec<ObjectModel>,
    pub specs: Vec<ShapeSpec>,
    pub seed: u64,
    pub difficulty: Difficulty,
}

/// JSON manifest listing the specs an episode was generated from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub seed: u64,
    pub difficulty: Difficulty,
    pub cell_mm: f64,
    pub box_mm: [f64; 3],
    pub objects: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(flatten)]
    pub spec: ShapeSpec,
}

impl EpisodeSet {
    pub fn manifest(&self, cell_mm: f64, box_mm: [f64; 3]) -> EpisodeManifest {
        EpisodeManifest {
            seed: self.seed,
            difficulty: self.difficulty,
            cell_mm,
            box_mm,
            objects: self
                .objects
                .iter()
                .zip(&self.specs)
                .map(|(o, s)| ManifestEntry {
                    id: o.id.clone(),
                    spec: s.clone(),
                })
                .collect(),
        }
    }
}

/// Deterministically generate an episode pool.
///
/// Easy pools draw at least 70% from convex families; hard pools draw at
/// least 50% from concave/thin families. Every object is rescaled by a
/// uniform factor in [0.8, 1.2] and checked to admit at least one legal
/// placement in the empty box (regenerated on violation).
pub fn generate_episode(
    seed: u64,
    difficulty: Difficulty,
    pool_size: usize,
    cell_mm: f64,
    box_mm: (f64, f64, f64),
) -> Result<EpisodeSet> {
    assert!(pool_size >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pool_size;
    let mut families: Vec<Family> = Vec::with_capacity(n);
    match difficulty {
        Difficulty::Easy => {
            let convex: Vec<Family> = Family::ALL.iter().copied().filter(|f| f.is_convex()).collect();
            let k = (n * 3).div_ceil(4); // 75% >= the 70% floor
            for _ in 0..k {
                families.push(*convex.choose(&mut rng).unwrap());
            }
            for _ in k..n {
                families.push(*Family::ALL.choose(&mut rng).unwrap());
            }
        }
        Difficulty::Hard => {
            let hard: Vec<Family> = Family::ALL
                .iter()
                .copied()
                .filter(|f| f.is_concave_or_thin())
                .collect();
            let k = (n * 3).div_ceil(5); // 60% >= the 50% floor
            for _ in 0..k {
                families.push(*hard.choose(&mut rng).unwrap());
            }
            for _ in k..n {
                families.push(*Family::ALL.choose(&mut rng).unwrap());
            }
        }
    }
    families.shuffle(&mut rng);

    let mut objects = Vec::with_capacity(n);
    let mut specs = Vec::with_capacity(n);
    for (idx, &family) in families.iter().enumerate() {
        let id = format!("obj-{idx:03}");
        let (model, spec) = sample_feasible(&mut rng, family, &id, cell_mm, box_mm)?;
        objects.push(model);
        specs.push(spec);
    }
    Ok(EpisodeSet {
        objects,
        specs,
        seed,
        difficulty,
    })
}

fn sample_feasible(
    rng: &mut ChaCha8Rng,
    family: Family,
    id: &str,
    cell_mm: f64,
    box_mm: (f64, f64, f64),
) -> Result<(ObjectModel, ShapeSpec)> {
    for attempt in 0..40u32 {
        let shrink = 0.92f64.powi(attempt as i32);
        let spec = sample_spec(rng, family, box_mm, shrink);
        if let Ok(model) = build_shape(id, &spec, cell_mm) {
            if fits_empty_box(&model, cell_mm, box_mm) {
                return Ok((model, spec));
            }
        }
    }
    // Guaranteed-feasible fallback: a small cube.
    let side = (box_mm.0.min(box_mm.1) * 0.12).max(4.0 * cell_mm);
    let spec = ShapeSpec {
        family: Family::Cuboid,
        params: vec![side, side, side.min(box_mm.2 * 0.4)],
        scale: 1.0,
    };
    let model = build_shape(id, &spec, cell_mm)?;
    Ok((model, spec))
}

fn fits_empty_box(model: &ObjectModel, cell_mm: f64, box_mm: (f64, f64, f64)) -> bool {
    let q = crate::units::QUANTA_PER_MM as f64;
    let (w, l, h) = (
        model.bbox_q[0] as f64 / q,
        model.bbox_q[1] as f64 / q,
        model.bbox_q[2] as f64 / q,
    );
    let _ = cell_mm;
    w <= box_mm.0 && l <= box_mm.1 && h <= box_mm.2
}

fn sample_spec(rng: &mut ChaCha8Rng, family: Family, box_mm: (f64, f64, f64), shrink: f64) -> ShapeSpec {
    // Base dimension ranges are tuned for a 400 mm box base and scaled to
    // the actual box so pools stay proportionate at any benchmark size.
    let f = box_mm.0.min(box_mm.1) / 400.0 * shrink;
    let hf = f.min(box_mm.2 / 300.0 * shrink);
    let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.gen_range(lo..hi);
    let params = match family {
        Family::Cuboid => vec![
            u(rng, 40.0, 100.0) * f,
            u(rng, 40.0, 100.0) * f,
            u(rng, 40.0, 100.0) * hf,
        ],
        Family::Cylinder => vec![u(rng, 40.0, 90.0) * f, u(rng, 40.0, 100.0) * hf],
        Family::LSolid => {
            let w = u(rng, 50.0, 100.0) * f;
            let l = u(rng, 50.0, 100.0) * f;
            vec![
                w,
                l,
                u(rng, 30.0, 60.0) * hf,
                w * u(rng, 0.3, 0.6),
                l * u(rng, 0.3, 0.6),
            ]
        }
        Family::TSolid => {
            let w = u(rng, 50.0, 100.0) * f;
            vec![
                w,
                u(rng, 50.0, 100.0) * f,
                u(rng, 30.0, 60.0) * hf,
                u(rng, 15.0, 30.0) * f,
                w * u(rng, 0.25, 0.45),
            ]
        }
        Family::UChannel => vec![
            u(rng, 50.0, 100.0) * f,
            u(rng, 50.0, 100.0) * f,
            u(rng, 30.0, 60.0) * hf,
            u(rng, 9.0, 16.0) * f,
        ],
        Family::Bowl => vec![
            u(rng, 50.0, 100.0) * f,
            u(rng, 25.0, 50.0) * hf,
            u(rng, 7.0, 12.0) * f,
        ],
        Family::Plate => vec![u(rng, 60.0, 120.0) * f, u(rng, 9.0, 16.0) * hf],
        Family::SphereCap => {
            let r = u(rng, 40.0, 80.0) * f;
            vec![r, u(rng, 0.4, 0.8) * r.min(50.0 * hf)]
        }
        Family::Peg => vec![u(rng, 16.0, 30.0) * f, u(rng, 60.0, 120.0) * hf],
    };
    ShapeSpec {
        family,
        params,
        scale: rng.gen_range(0.8..1.2),
    }
}
