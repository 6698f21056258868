//! Cross-module property tests: oracle equivalences, distribution
//! checks, and determinism.

use packbench::config::ExperimentConfig;
use packbench::episode::{Difficulty, EpisodeSet};
use packbench::heightmap::Heightmap;
use packbench::orientation::OrientationGrid;
use packbench::packing::{collision_scan_z, compute_z, BoxSpec, PackingState};
use packbench::planners::{hm_place, random_plan_step, PreparedPool};
use packbench::shapes::{build_shape, Family, ShapeSpec};
use packbench::sweep::episode_report;
use packbench::voxel::VoxelGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(rng: &mut ChaCha8Rng, max_dim: usize, cell_q: i64) -> VoxelGrid {
    loop {
        let dims = (
            rng.gen_range(1..=max_dim),
            rng.gen_range(1..=max_dim),
            rng.gen_range(1..=max_dim),
        );
        let occ: Vec<bool> = (0..dims.0 * dims.1 * dims.2)
            .map(|_| rng.gen_bool(0.6))
            .collect();
        let (_, ny, nz) = dims;
        if let Ok(g) = VoxelGrid::from_fn(dims, cell_q, |x, y, z| occ[(x * ny + y) * nz + z]) {
            return g;
        }
    }
}

#[test]
fn eq1_matches_collision_oracle_randomized() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..300 {
        let (bw, bl) = (rng.gen_range(6..=20), rng.gen_range(6..=20));
        let cell_q = 100;
        let mut map = Heightmap::new(bw, bl, cell_q);
        for x in 0..bw {
            for y in 0..bl {
                // Terrain heights on the voxel lattice so both paths see
                // identical geometry.
                map.set(x, y, rng.gen_range(0..8) * cell_q);
            }
        }
        let grid = random_grid(&mut rng, 4, cell_q);
        let views = grid.top_bottom_views();
        let (w, l) = (views.h_b.width(), views.h_b.length());
        if w > bw || l > bl {
            continue;
        }
        let x = rng.gen_range(w / 2..=bw - w + w / 2);
        let y = rng.gen_range(l / 2..=bl - l + l / 2);
        let a = compute_z(&map, &views.h_b, x, y);
        let b = collision_scan_z(&map, &grid, x, y);
        match (a, b) {
            (Ok(a), Ok(b)) => assert_eq!(a, b, "case {case} at ({x}, {y})"),
            (a, b) => panic!("case {case}: {a:?} vs {b:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compute_z_never_negative_and_tight(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell_q = 100;
        let mut map = Heightmap::new(10, 10, cell_q);
        for x in 0..10 {
            for y in 0..10 {
                map.set(x, y, rng.gen_range(0..6) * cell_q);
            }
        }
        let grid = random_grid(&mut rng, 3, cell_q);
        let views = grid.top_bottom_views();
        let (w, l) = (views.h_b.width(), views.h_b.length());
        let x = w / 2 + 2;
        let y = l / 2 + 2;
        if let Ok(z) = compute_z(&map, &views.h_b, x, y) {
            prop_assert!(z >= 0);
            // One quantum lower must collide unless already at the floor.
            if z > 0 {
                let oracle = collision_scan_z(&map, &grid, x, y).unwrap();
                prop_assert_eq!(z, oracle);
            }
        }
    }
}

#[test]
fn random_step_uniform_over_symmetric_cells() {
    // A 2x2-cell cube in a 3x3 box has exactly 4 legal centers; 10k
    // seeded draws should be uniform within chi-square tolerance.
    let cube = build_shape(
        "c",
        &ShapeSpec {
            family: Family::Cuboid,
            params: vec![20.0, 20.0, 20.0],
            scale: 1.0,
        },
        10.0,
    )
    .unwrap();
    let pool = PreparedPool::new(
        &EpisodeSet {
            objects: vec![cube],
            specs: Vec::new(),
            seed: 0,
            difficulty: Difficulty::Easy,
        },
        &OrientationGrid::default(),
    )
    .unwrap();
    let state = PackingState::new(
        BoxSpec {
            width_cells: 3,
            length_cells: 3,
            cell_q: 100,
            height_q: 1000,
        },
        ["c".to_string()],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = std::collections::HashMap::new();
    for _ in 0..10_000 {
        let d = random_plan_step(&state, &pool, &mut rng).unwrap().unwrap();
        *counts.entry(d.placement.position).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 4);
    let expected = 2500.0;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < 20.0, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn full_resolution_hm_never_worse_randomized() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cube = build_shape(
        "c",
        &ShapeSpec {
            family: Family::Cuboid,
            params: vec![30.0, 30.0, 30.0],
            scale: 1.0,
        },
        10.0,
    )
    .unwrap();
    let pool = PreparedPool::new(
        &EpisodeSet {
            objects: vec![cube],
            specs: Vec::new(),
            seed: 0,
            difficulty: Difficulty::Easy,
        },
        &OrientationGrid::default(),
    )
    .unwrap();
    for _ in 0..20 {
        let mut state = PackingState::new(
            BoxSpec {
                width_cells: 20,
                length_cells: 20,
                cell_q: 100,
                height_q: 2000,
            },
            ["c".to_string()],
        );
        for _ in 0..30 {
            let (x, y) = (rng.gen_range(0..20), rng.gen_range(0..20));
            state.box_map.set(x, y, rng.gen_range(0..8) * 100);
        }
        let volume_after = |downsample: usize| -> i64 {
            let p = hm_place(&state, &pool.objects[0], &pool.dedup[0], downsample).unwrap();
            let o = pool.dedup[0]
                .iter()
                .find(|o| o.index == p.orientation)
                .unwrap();
            let next = packbench::packing::apply_placement(
                &state,
                &p,
                &o.views,
                pool.objects[0].volume_mm3(),
                true,
            )
            .unwrap();
            next.box_map.height_sum()
        };
        assert!(volume_after(20) <= volume_after(5));
    }
}

#[test]
fn episode_plans_deterministic() {
    let mut c = ExperimentConfig {
        box_width_mm: 200.0,
        box_length_mm: 200.0,
        box_height_mm: 200.0,
        cell_mm: 10.0,
        pool_size: 5,
        hm_downsample: 20,
        ..ExperimentConfig::default()
    };
    for planner in [
        (packbench::planners::SequenceRule::BboxVolumeDesc, packbench::planners::PlacementRule::Hm),
        (packbench::planners::SequenceRule::Random, packbench::planners::PlacementRule::Random),
    ] {
        c.sequence_rule = planner.0;
        c.placement_rule = planner.1;
        let a = episode_report(&c, 11).unwrap();
        let b = episode_report(&c, 11).unwrap();
        assert_eq!(
            serde_json::to_string(&a.plan).unwrap(),
            serde_json::to_string(&b.plan).unwrap()
        );
    }
}
