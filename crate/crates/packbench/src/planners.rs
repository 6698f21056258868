//! Baseline planners: random, bounding-box-volume sequencing, heightmap
//! minimization, bottom-left-back fill, and stability-constrained HM.

use crate::episode::EpisodeSet;
use crate::error::{PackError, Result};
use crate::heightmap::ViewPair;
use crate::object::{distinct_orientations, ObjectModel, OrientedObject};
use crate::orientation::OrientationGrid;
use crate::packing::{
    compute_z, footprint_origin, placement_field, PackingState, Placement,
};
use crate::stability::{stability_check, StabilityThresholds};
use crate::units::QUANTA_PER_MM;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceRule {
    Random,
    BboxVolumeDesc,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementRule {
    Random,
    Hm,
    PackitBlb,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub sequence_rule: SequenceRule,
    pub placement_rule: PlacementRule,
    pub stability_constrained: bool,
    /// Target coarse lattice resolution for HM candidate positions.
    pub hm_downsample: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            sequence_rule: SequenceRule::BboxVolumeDesc,
            placement_rule: PlacementRule::Hm,
            stability_constrained: false,
            hm_downsample: 50,
            seed: 0,
        }
    }
}

/// Episode pool with cached distinct orientations per object.
///
/// `dedup` holds one entry per distinct view pair (lexicographically
/// smallest orientation indices kept); `index_map` maps every full
/// `(i, j)` pair to its representative, so uniform sampling over the full
/// action space stays possible.
pub struct PreparedPool {
    pub objects: Vec<ObjectModel>,
    pub dedup: Vec<Vec<OrientedObject>>,
    pub index_map: Vec<Vec<((usize, usize), usize)>>,
    pub orientations: OrientationGrid,
}

impl PreparedPool {
    pub fn new(episode: &EpisodeSet, orientations: &OrientationGrid) -> Result<PreparedPool> {
        let mut dedup = Vec::with_capacity(episode.objects.len());
        let mut index_map = Vec::with_capacity(episode.objects.len());
        for obj in &episode.objects {
            let distinct = distinct_orientations(obj, orientations)?;
            let mut map = Vec::new();
            for (i, j) in orientations.index_pairs() {
                let o = OrientedObject::build(obj, orientations, i, j)?;
                let rep = distinct
                    .iter()
                    .position(|d| d.views == o.views)
                    .expect("every orientation has a distinct representative");
                map.push(((i, j), rep));
            }
            dedup.push(distinct);
            index_map.push(map);
        }
        Ok(PreparedPool {
            objects: episode.objects.clone(),
            dedup,
            index_map,
            orientations: orientations.clone(),
        })
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    /// Center of mass of an oriented object placed at `(x, y, z)`, in
    /// millimeters, horizontal components only.
    pub fn com_xy_mm(o: &OrientedObject, state: &PackingState, x: usize, y: usize) -> [f64; 2] {
        let (w, l, _) = o.grid.dims();
        let (x0, y0) = footprint_origin(&state.box_map, w, l, x, y).expect("legal placement");
        let com = o.grid.center_of_mass_q();
        let q = QUANTA_PER_MM as f64;
        let cell = state.box_spec.cell_q as f64;
        [
            (x0 as f64 * cell + com[0]) / q,
            (y0 as f64 * cell + com[1]) / q,
        ]
    }
}

/// One planner step: which object, where, with which distinct orientation.
#[derive(Debug, Clone)]
pub struct StepDecision {
    pub pool_index: usize,
    pub dedup_index: usize,
    pub placement: Placement,
    /// False when a stability-constrained search fell back to an
    /// unstable optimum.
    pub stable_candidate: bool,
}

pub trait PackPolicy {
    fn next_step(
        &mut self,
        state: &PackingState,
        pool: &PreparedPool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<StepDecision>>;
}

/// Descending bounding-box-volume order; ties by object id.
pub fn bbox_sequence(pool: &[ObjectModel]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .bbox_volume_mm3()
            .partial_cmp(&pool[a].bbox_volume_mm3())
            .unwrap()
            .then_with(|| pool[a].id.cmp(&pool[b].id))
    });
    order
}

/// HM candidate cost: the added heightmap volume (in quantum-cell units)
/// and resulting max height for dropping the object at `(x, y)`.
fn hm_cost(
    state: &PackingState,
    views: &ViewPair,
    x: usize,
    y: usize,
) -> Option<(i64, i64, i64)> {
    let (w, l) = (views.h_t.width(), views.h_t.length());
    let (x0, y0) = footprint_origin(&state.box_map, w, l, x, y)?;
    let z = compute_z(&state.box_map, &views.h_b, x, y).ok()?;
    let top = z + views.h_t.max_height();
    if top > state.box_spec.height_q {
        return None;
    }
    let mut added = 0i64;
    let mut new_max = state.box_map.max_height();
    for s in 0..w {
        for t in 0..l {
            let ht = views.h_t.get(s, t);
            if ht > 0 {
                let cur = state.box_map.get(x0 + s, y0 + t);
                let new = cur.max(z + ht);
                added += new - cur;
                new_max = new_max.max(new);
            }
        }
    }
    Some((added, new_max, z))
}

/// Candidate positions: the coarse lattice mapped back to full
/// resolution. A downsample target at or above the box resolution
/// degenerates to the full-resolution scan.
fn coarse_lattice(cells: usize, target: usize) -> Vec<usize> {
    let step = (cells / target.max(1)).max(1);
    (0..cells / step).map(|k| k * step + step / 2).collect()
}

type HmKey = ((i64, i64), (usize, usize), (usize, usize));

fn hm_candidates(
    state: &PackingState,
    orients: &[OrientedObject],
    downsample: usize,
) -> Vec<(HmKey, i64)> {
    let xs = coarse_lattice(state.box_map.width(), downsample);
    let ys = coarse_lattice(state.box_map.length(), downsample);
    let mut out = Vec::new();
    for o in orients {
        for &x in &xs {
            for &y in &ys {
                if let Some((added, new_max, z)) = hm_cost(state, &o.views, x, y) {
                    out.push((((added, new_max), o.index, (x, y)), z));
                }
            }
        }
    }
    out
}

fn refine_candidate(
    state: &PackingState,
    o: &OrientedObject,
    best: (HmKey, i64),
) -> (HmKey, i64) {
    let (x, y) = best.0 .2;
    let mut top = best;
    for dx in -1i64..=1 {
        for dy in -1i64..=1 {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if nx >= state.box_map.width() || ny >= state.box_map.length() {
                continue;
            }
            if let Some((added, new_max, z)) = hm_cost(state, &o.views, nx, ny) {
                let key = ((added, new_max), o.index, (nx, ny));
                if key < top.0 {
                    top = (key, z);
                }
            }
        }
    }
    top
}

/// Heightmap-minimization placement: minimize the post-placement
/// heightmap volume, then the resulting max height, then lexicographic
/// `(i, j, x, y)`. Candidates run on the downsampled lattice and the
/// winner is refined one full-resolution cell around.
pub fn hm_place(
    state: &PackingState,
    object: &ObjectModel,
    orients: &[OrientedObject],
    downsample: usize,
) -> Result<Placement> {
    let cands = hm_candidates(state, orients, downsample);
    let best = cands.into_iter().min_by_key(|(k, _)| *k).ok_or(PackError::NoSpace)?;
    let rep = orients
        .iter()
        .find(|o| o.index == best.0 .1)
        .expect("winning orientation present");
    let (key, z) = refine_candidate(state, rep, best);
    Ok(Placement {
        object_id: object.id.clone(),
        orientation: key.1,
        position: key.2,
        z_q: z,
        score: -(key.0 .0 as f64),
    })
}

/// HM restricted to statically stable candidates; falls back to the
/// unconstrained HM optimum (flagged) when no stable candidate exists.
pub fn stable_hm_place(
    state: &PackingState,
    object: &ObjectModel,
    orients: &[OrientedObject],
    downsample: usize,
    thresholds: &StabilityThresholds,
) -> Result<(Placement, bool)> {
    let mut cands = hm_candidates(state, orients, downsample);
    if cands.is_empty() {
        return Err(PackError::NoSpace);
    }
    cands.sort_by_key(|(k, _)| *k);
    let is_stable = |key: &HmKey, z: i64| -> bool {
        let o = orients.iter().find(|o| o.index == key.1).unwrap();
        let (x, y) = key.2;
        let com = PreparedPool::com_xy_mm(o, state, x, y);
        stability_check(&state.box_map, &o.views, x, y, z, com, thresholds).unwrap_or(false)
    };
    for (key, z) in &cands {
        if is_stable(key, *z) {
            // Refine among stable neighbors only.
            let o = orients.iter().find(|o| o.index == key.1).unwrap();
            let mut top = (*key, *z);
            let refined = refine_candidate(state, o, (*key, *z));
            if refined.0 < top.0 && is_stable(&refined.0, refined.1) {
                top = refined;
            }
            return Ok((
                Placement {
                    object_id: object.id.clone(),
                    orientation: top.0 .1,
                    position: top.0 .2,
                    z_q: top.1,
                    score: -(top.0 .0 .0 as f64),
                },
                true,
            ));
        }
    }
    hm_place(state, object, orients, downsample).map(|p| (p, false))
}

/// Bottom-left-back fill: orientation by descending dimension order onto
/// the x, y, z axes, position minimizing `(z, y, x)`.
pub fn packit_place(
    state: &PackingState,
    object: &ObjectModel,
    orients: &[OrientedObject],
) -> Result<Placement> {
    let mut dims: Vec<i64> = object.bbox_q.to_vec();
    dims.sort_unstable_by(|a, b| b.cmp(a));
    let cell = state.box_spec.cell_q;
    let target = (dims[0] / cell, dims[1] / cell, dims[2] / cell);
    let chosen = orients
        .iter()
        .find(|o| {
            let (nx, ny, nz) = o.grid.dims();
            (nx as i64, ny as i64, nz as i64) == target
        })
        .unwrap_or(&orients[0]);
    let field = placement_field(&state.box_map, &chosen.views, state.box_spec.height_q);
    let bl = state.box_map.length();
    type BlbKey = (i64, usize, usize);
    let mut best: Option<(BlbKey, (usize, usize))> = None;
    for x in 0..state.box_map.width() {
        for y in 0..bl {
            if let Some(z) = field[x * bl + y] {
                let key = (z, y, x);
                if best.as_ref().is_none_or(|(b, _)| key < *b) {
                    best = Some((key, (x, y)));
                }
            }
        }
    }
    let ((z, _, _), pos) = best.ok_or(PackError::NoSpace)?;
    Ok(Placement {
        object_id: object.id.clone(),
        orientation: chosen.index,
        position: pos,
        z_q: z,
        score: -(z as f64),
    })
}

/// Uniform random step: uniform object over the unpacked set, then
/// uniform legal `(orientation, x, y)` over the full orientation grid.
pub fn random_plan_step(
    state: &PackingState,
    pool: &PreparedPool,
    rng: &mut ChaCha8Rng,
) -> Result<Option<StepDecision>> {
    let mut unpacked: Vec<usize> = state
        .unpacked
        .iter()
        .filter_map(|id| pool.index_of(id))
        .collect();
    unpacked.sort_unstable();
    if unpacked.is_empty() {
        return Ok(None);
    }
    let pool_index = unpacked[rng.gen_range(0..unpacked.len())];
    // Legality mask per distinct view pair, weighted by orientation
    // multiplicity so sampling is uniform over the full action set.
    let reps = &pool.dedup[pool_index];
    let fields: Vec<Vec<Option<i64>>> = reps
        .iter()
        .map(|o| placement_field(&state.box_map, &o.views, state.box_spec.height_q))
        .collect();
    let legal_counts: Vec<usize> = fields
        .iter()
        .map(|f| f.iter().filter(|z| z.is_some()).count())
        .collect();
    let total: usize = pool.index_map[pool_index]
        .iter()
        .map(|&(_, rep)| legal_counts[rep])
        .sum();
    if total == 0 {
        return Ok(None);
    }
    let mut pick = rng.gen_range(0..total);
    for &((i, j), rep) in &pool.index_map[pool_index] {
        if pick >= legal_counts[rep] {
            pick -= legal_counts[rep];
            continue;
        }
        let field = &fields[rep];
        let bl = state.box_map.length();
        for x in 0..state.box_map.width() {
            for y in 0..bl {
                if let Some(z) = field[x * bl + y] {
                    if pick == 0 {
                        return Ok(Some(StepDecision {
                            pool_index,
                            dedup_index: rep,
                            placement: Placement {
                                object_id: pool.objects[pool_index].id.clone(),
                                orientation: (i, j),
                                position: (x, y),
                                z_q: z,
                                score: 0.0,
                            },
                            stable_candidate: true,
                        }));
                    }
                    pick -= 1;
                }
            }
        }
        unreachable!("legal count mismatch");
    }
    unreachable!("total legal count mismatch");
}

/// Heuristic planner combining a sequence rule with a placement rule.
pub struct HeuristicPolicy {
    config: PlannerConfig,
    thresholds: StabilityThresholds,
    fixed_order: Option<Vec<usize>>,
    cursor: usize,
}

impl HeuristicPolicy {
    pub fn new(config: PlannerConfig, thresholds: StabilityThresholds) -> HeuristicPolicy {
        HeuristicPolicy {
            config,
            thresholds,
            fixed_order: None,
            cursor: 0,
        }
    }

    fn next_object(
        &mut self,
        state: &PackingState,
        pool: &PreparedPool,
        rng: &mut ChaCha8Rng,
    ) -> Option<usize> {
        match self.config.sequence_rule {
            SequenceRule::BboxVolumeDesc => {
                // Order fixed upfront: bounding-box volumes never change.
                let order = self
                    .fixed_order
                    .get_or_insert_with(|| bbox_sequence(&pool.objects));
                while self.cursor < order.len() {
                    let idx = order[self.cursor];
                    self.cursor += 1;
                    if state.unpacked.contains(&pool.objects[idx].id) {
                        return Some(idx);
                    }
                }
                None
            }
            SequenceRule::Random => {
                let mut unpacked: Vec<usize> = state
                    .unpacked
                    .iter()
                    .filter_map(|id| pool.index_of(id))
                    .collect();
                unpacked.sort_unstable();
                if unpacked.is_empty() {
                    None
                } else {
                    Some(unpacked[rng.gen_range(0..unpacked.len())])
                }
            }
            SequenceRule::Learned => None,
        }
    }
}

impl PackPolicy for HeuristicPolicy {
    fn next_step(
        &mut self,
        state: &PackingState,
        pool: &PreparedPool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<StepDecision>> {
        if state.unpacked.is_empty() {
            return Ok(None);
        }
        if self.config.sequence_rule == SequenceRule::Random
            && self.config.placement_rule == PlacementRule::Random
        {
            return random_plan_step(state, pool, rng);
        }
        let Some(pool_index) = self.next_object(state, pool, rng) else {
            return Ok(None);
        };
        let object = &pool.objects[pool_index];
        let orients = &pool.dedup[pool_index];
        let ds = self.config.hm_downsample;
        let result = match self.config.placement_rule {
            PlacementRule::Hm => {
                if self.config.stability_constrained {
                    stable_hm_place(state, object, orients, ds, &self.thresholds)
                } else {
                    hm_place(state, object, orients, ds).map(|p| (p, true))
                }
            }
            PlacementRule::PackitBlb => packit_place(state, object, orients).map(|p| (p, true)),
            PlacementRule::Random => {
                let field_total: usize = orients
                    .iter()
                    .map(|o| {
                        placement_field(&state.box_map, &o.views, state.box_spec.height_q)
                            .iter()
                            .filter(|z| z.is_some())
                            .count()
                    })
                    .sum();
                if field_total == 0 {
                    return Ok(None);
                }
                // Uniform legal cell for the sequenced object.
                let mut sub = random_uniform_for_object(state, pool, pool_index, rng)?;
                sub.pool_index = pool_index;
                return Ok(Some(sub));
            }
            PlacementRule::Learned => {
                return Err(PackError::Config(
                    "learned placement requires a trained policy".into(),
                ))
            }
        };
        match result {
            Ok((placement, stable_candidate)) => {
                let dedup_index = orients
                    .iter()
                    .position(|o| o.index == placement.orientation)
                    .expect("placement orientation cached");
                Ok(Some(StepDecision {
                    pool_index,
                    dedup_index,
                    placement,
                    stable_candidate,
                }))
            }
            Err(PackError::NoSpace) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

fn random_uniform_for_object(
    state: &PackingState,
    pool: &PreparedPool,
    pool_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StepDecision> {
    let reps = &pool.dedup[pool_index];
    let fields: Vec<Vec<Option<i64>>> = reps
        .iter()
        .map(|o| placement_field(&state.box_map, &o.views, state.box_spec.height_q))
        .collect();
    let legal_counts: Vec<usize> = fields
        .iter()
        .map(|f| f.iter().filter(|z| z.is_some()).count())
        .collect();
    let total: usize = pool.index_map[pool_index]
        .iter()
        .map(|&(_, rep)| legal_counts[rep])
        .sum();
    let mut pick = rng.gen_range(0..total);
    for &((i, j), rep) in &pool.index_map[pool_index] {
        if pick >= legal_counts[rep] {
            pick -= legal_counts[rep];
            continue;
        }
        let field = &fields[rep];
        let bl = state.box_map.length();
        for x in 0..state.box_map.width() {
            for y in 0..bl {
                if let Some(z) = field[x * bl + y] {
                    if pick == 0 {
                        return Ok(StepDecision {
                            pool_index,
                            dedup_index: rep,
                            placement: Placement {
                                object_id: pool.objects[pool_index].id.clone(),
                                orientation: (i, j),
                                position: (x, y),
                                z_q: z,
                                score: 0.0,
                            },
                            stable_candidate: true,
                        });
                    }
                    pick -= 1;
                }
            }
        }
    }
    unreachable!("legal count mismatch")
}
