//! Episode execution: drive a planner against a packing state until
//! termination, score the result, and export plans as JSON plus a PGM
//! frame sequence.

use crate::error::Result;
use crate::heightmap::Heightmap;
use crate::packing::{apply_placement, BoxSpec, PackingState};
use crate::planners::{PackPolicy, PreparedPool};
use crate::rewards::{
    compactness, objective, pyramidality, stability_mean, MetricsRecord, ObjectiveWeights,
    StabilityAggregate,
};
use crate::stability::{stability_check, StabilityThresholds};
use crate::units::QUANTA_PER_MM;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AllPacked,
    NoSpace,
}

/// One executed placement in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step: usize,
    pub object_id: String,
    pub orientation: (usize, usize),
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    pub score: f64,
    pub stable: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub plan: Vec<PlanStep>,
    pub metrics: MetricsRecord,
    pub termination: Termination,
    pub j_trace: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Box heightmap before any placement and after each step.
    pub frames: Vec<Heightmap>,
    pub final_state: PackingState,
}

/// Runs one episode to termination. Latency is wall-clock planning time
/// per object when `timing` is set, exactly zero otherwise so outputs
/// stay byte-reproducible.
pub fn run_episode(
    policy: &mut dyn PackPolicy,
    pool: &PreparedPool,
    box_spec: BoxSpec,
    weights: &ObjectiveWeights,
    thresholds: &StabilityThresholds,
    rng: &mut ChaCha8Rng,
    timing: bool,
) -> Result<EpisodeReport> {
    let mut state = PackingState::new(box_spec, pool.objects.iter().map(|o| o.id.clone()));
    let q = QUANTA_PER_MM as f64;
    let cell_mm = box_spec.cell_q as f64 / q;
    let mut plan = Vec::new();
    let mut j_trace = Vec::new();
    let mut rewards = Vec::new();
    let mut frames = vec![state.box_map.clone()];
    let mut j = 0.0;
    let mut planning_secs = 0.0;
    let max_steps = pool.objects.len();
    let mut termination = Termination::AllPacked;
    for step in 0..max_steps {
        let started = Instant::now();
        let decision = policy.next_step(&state, pool, rng)?;
        if timing {
            planning_secs += started.elapsed().as_secs_f64();
        }
        let Some(d) = decision else {
            termination = if state.unpacked.is_empty() {
                Termination::AllPacked
            } else {
                Termination::NoSpace
            };
            break;
        };
        let rep = &pool.dedup[d.pool_index][d.dedup_index];
        let (x, y) = d.placement.position;
        let com = PreparedPool::com_xy_mm(rep, &state, x, y);
        let stable = stability_check(
            &state.box_map,
            &rep.views,
            x,
            y,
            d.placement.z_q,
            com,
            thresholds,
        )?;
        state = apply_placement(
            &state,
            &d.placement,
            &rep.views,
            pool.objects[d.pool_index].volume_mm3(),
            stable,
        )?;
        let j_next = objective(&state, weights, StabilityAggregate::Latest);
        rewards.push(j_next - j);
        j = j_next;
        j_trace.push(j);
        frames.push(state.box_map.clone());
        let (roll, pitch, yaw) = rep.euler;
        plan.push(PlanStep {
            step,
            object_id: d.placement.object_id.clone(),
            orientation: d.placement.orientation,
            roll,
            pitch,
            yaw,
            x_mm: (x as f64 + 0.5) * cell_mm,
            y_mm: (y as f64 + 0.5) * cell_mm,
            z_mm: d.placement.z_q as f64 / q,
            score: d.placement.score,
            stable,
        });
    }
    let packed_count = state.packed.len();
    let metrics = MetricsRecord {
        compactness: compactness(&state),
        pyramidality: pyramidality(&state),
        stability: stability_mean(&state),
        packed_count,
        latency_per_object_s: if timing && packed_count > 0 {
            planning_secs / packed_count as f64
        } else {
            0.0
        },
    };
    Ok(EpisodeReport {
        plan,
        metrics,
        termination,
        j_trace,
        rewards,
        frames,
        final_state: state,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDocument {
    pub plan: Vec<PlanStep>,
    pub metrics: MetricsRecord,
    pub termination: Termination,
    pub j_trace: Vec<f64>,
    pub config_hash: String,
}

/// Writes `{stem}.plan.json` and `{stem}.frame-NNN.pgm` (initial state
/// plus one frame per step). Output bytes are a pure function of the
/// report and hash.
pub fn export_plan(
    report: &EpisodeReport,
    config_hash: &str,
    dir: &std::path::Path,
    stem: &str,
) -> Result<()> {
    let doc = PlanDocument {
        plan: report.plan.clone(),
        metrics: report.metrics,
        termination: report.termination,
        j_trace: report.j_trace.clone(),
        config_hash: config_hash.to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&doc)?;
    json.push(b'\n');
    std::fs::write(dir.join(format!("{stem}.plan.json")), json)?;
    for (i, frame) in report.frames.iter().enumerate() {
        std::fs::write(dir.join(format!("{stem}.frame-{i:03}.pgm")), frame.to_pgm())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{Difficulty, EpisodeSet};
    use crate::orientation::OrientationGrid;
    use crate::planners::{HeuristicPolicy, PlannerConfig};
    use crate::shapes::{build_shape, Family, ShapeSpec};
    use rand::SeedableRng;

    fn pool_of(cubes: &[(&str, f64)]) -> PreparedPool {
        let objects = cubes
            .iter()
            .map(|(id, mm)| {
                build_shape(
                    *id,
                    &ShapeSpec {
                        family: Family::Cuboid,
                        params: vec![*mm, *mm, *mm],
                        scale: 1.0,
                    },
                    10.0,
                )
                .unwrap()
            })
            .collect();
        PreparedPool::new(
            &EpisodeSet {
                objects,
                specs: Vec::new(),
                seed: 0,
                difficulty: Difficulty::Easy,
            },
            &OrientationGrid::default(),
        )
        .unwrap()
    }

    fn boxspec() -> BoxSpec {
        BoxSpec {
            width_cells: 20,
            length_cells: 20,
            cell_q: 100,
            height_q: 2000,
        }
    }

    fn run(pool: &PreparedPool) -> EpisodeReport {
        let mut policy =
            HeuristicPolicy::new(PlannerConfig::default(), StabilityThresholds::default());
        run_episode(
            &mut policy,
            pool,
            boxspec(),
            &ObjectiveWeights::default(),
            &StabilityThresholds::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
            false,
        )
        .unwrap()
    }

    #[test]
    fn empty_episode_all_packed() {
        let pool = pool_of(&[]);
        let r = run(&pool);
        assert_eq!(r.metrics.packed_count, 0);
        assert_eq!(r.termination, Termination::AllPacked);
        assert_eq!(r.frames.len(), 1);
        assert_eq!(r.metrics.compactness, 0.0);
    }

    #[test]
    fn single_cube_compactness() {
        // One 50 mm cube in a 200x200 box: C = 50^3 / (200*200*50).
        let pool = pool_of(&[("cube", 50.0)]);
        let r = run(&pool);
        assert_eq!(r.metrics.packed_count, 1);
        assert_eq!(r.termination, Termination::AllPacked);
        let expect = 50.0_f64.powi(3) / (200.0 * 200.0 * 50.0);
        assert!((r.metrics.compactness - expect).abs() < 1e-12);
    }

    #[test]
    fn rewards_telescope_to_final_objective() {
        let pool = pool_of(&[("a", 50.0), ("b", 40.0), ("c", 30.0)]);
        let r = run(&pool);
        let total: f64 = r.rewards.iter().sum();
        let j_final = *r.j_trace.last().unwrap();
        assert!((total - j_final).abs() < 1e-9);
    }

    #[test]
    fn latency_zero_when_timing_off() {
        let pool = pool_of(&[("a", 50.0)]);
        let r = run(&pool);
        assert_eq!(r.metrics.latency_per_object_s, 0.0);
    }

    #[test]
    fn no_space_when_box_overflows() {
        // 20 cm cap, three 90 mm towers stacked in a 100x100 base: the
        // third cube cannot fit anywhere.
        let pool = pool_of(&[("a", 90.0), ("b", 90.0), ("c", 90.0)]);
        let mut policy =
            HeuristicPolicy::new(PlannerConfig::default(), StabilityThresholds::default());
        let r = run_episode(
            &mut policy,
            &pool,
            BoxSpec {
                width_cells: 10,
                length_cells: 10,
                cell_q: 100,
                height_q: 2000,
            },
            &ObjectiveWeights::default(),
            &StabilityThresholds::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
            false,
        )
        .unwrap();
        assert_eq!(r.termination, Termination::NoSpace);
        assert_eq!(r.metrics.packed_count, 2);
    }

    #[test]
    fn export_frame_count_and_determinism() {
        let pool = pool_of(&[("a", 50.0), ("b", 40.0)]);
        let r = run(&pool);
        assert_eq!(r.plan.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        export_plan(&r, "deadbeef", dir.path(), "ep").unwrap();
        // Initial frame + one per step.
        for i in 0..3 {
            assert!(dir.path().join(format!("ep.frame-{i:03}.pgm")).exists());
        }
        assert!(!dir.path().join("ep.frame-003.pgm").exists());
        let first = std::fs::read(dir.path().join("ep.plan.json")).unwrap();
        export_plan(&r, "deadbeef", dir.path(), "ep").unwrap();
        let second = std::fs::read(dir.path().join("ep.plan.json")).unwrap();
        assert_eq!(first, second);
        let doc: PlanDocument = serde_json::from_slice(&first).unwrap();
        assert_eq!(doc.plan.len(), 2);
        assert_eq!(doc.config_hash, "deadbeef");
    }
}
