//! Packing objective: compactness, pyramidality, stability aggregate,
//! and the step reward.

use crate::packing::PackingState;
use crate::units::QUANTA_PER_MM;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            alpha: 0.75,
            beta: 0.25,
            gamma: 0.25,
        }
    }
}

/// Which stability term enters the objective: the latest placement's
/// indicator (used for step rewards) or the episode mean (reported in
/// metrics). Both are defensible readings; the switch keeps them
/// comparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityAggregate {
    Latest,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub compactness: f64,
    pub pyramidality: f64,
    pub stability: f64,
    pub packed_count: usize,
    pub latency_per_object_s: f64,
}

/// Ratio of packed volume to the minimum box able to contain the stack:
/// `C = sum(V_i) / (L * W * h_t)` with `h_t` the max box height. Empty
/// packings read 0.
pub fn compactness(state: &PackingState) -> f64 {
    if state.packed.is_empty() {
        return 0.0;
    }
    let q = QUANTA_PER_MM as f64;
    let base_mm2 = (state.box_spec.width_cells as f64 * state.box_spec.cell_q as f64 / q)
        * (state.box_spec.length_cells as f64 * state.box_spec.cell_q as f64 / q);
    let h_mm = state.box_map.max_height() as f64 / q;
    if h_mm <= 0.0 {
        return 0.0;
    }
    state.packed_volume_mm3() / (base_mm2 * h_mm)
}

/// Ratio of packed volume to the volume under the box heightmap:
/// `P = sum(V_i) / V_p` with `V_p` the heightmap summation times cell
/// area. Empty packings read 0.
pub fn pyramidality(state: &PackingState) -> f64 {
    if state.packed.is_empty() {
        return 0.0;
    }
    let q = QUANTA_PER_MM as f64;
    let cell_mm = state.box_spec.cell_q as f64 / q;
    let v_p = state.box_map.height_sum() as f64 / q * cell_mm * cell_mm;
    if v_p <= 0.0 {
        return 0.0;
    }
    state.packed_volume_mm3() / v_p
}

/// Stability term for the objective under the chosen aggregate.
pub fn stability_term(state: &PackingState, aggregate: StabilityAggregate) -> f64 {
    if state.packed.is_empty() {
        return 0.0;
    }
    match aggregate {
        StabilityAggregate::Latest => {
            if state.packed.last().unwrap().stable {
                1.0
            } else {
                0.0
            }
        }
        StabilityAggregate::Mean => stability_mean(state),
    }
}

/// Fraction of placements judged stable.
pub fn stability_mean(state: &PackingState) -> f64 {
    if state.packed.is_empty() {
        return 0.0;
    }
    state.packed.iter().filter(|p| p.stable).count() as f64 / state.packed.len() as f64
}

/// Objective `J = alpha*C + beta*P + gamma*S`.
pub fn objective(
    state: &PackingState,
    weights: &ObjectiveWeights,
    aggregate: StabilityAggregate,
) -> f64 {
    if state.packed.is_empty() {
        return 0.0;
    }
    weights.alpha * compactness(state)
        + weights.beta * pyramidality(state)
        + weights.gamma * stability_term(state, aggregate)
}

/// Step reward: the change of the objective.
pub fn step_reward(j_next: f64, j_curr: f64) -> f64 {
    j_next - j_curr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heightmap::{Heightmap, ViewPair};
    use crate::packing::{apply_placement, BoxSpec, PackingState, Placement};

    fn place_cuboid(
        state: &PackingState,
        id: &str,
        w: usize,
        l: usize,
        h_q: i64,
        x: usize,
        y: usize,
    ) -> PackingState {
        let cell = state.box_spec.cell_q;
        let views = ViewPair {
            h_t: Heightmap::from_heights(w, l, cell, vec![h_q; w * l]),
            h_b: Heightmap::new(w, l, cell),
        };
        let z = crate::packing::compute_z(&state.box_map, &views.h_b, x, y).unwrap();
        let q = crate::units::QUANTA_PER_MM as f64;
        let vol = (w as f64 * cell as f64 / q) * (l as f64 * cell as f64 / q) * (h_q as f64 / q);
        let p = Placement {
            object_id: id.into(),
            orientation: (0, 0),
            position: (x, y),
            z_q: z,
            score: 0.0,
        };
        apply_placement(state, &p, &views, vol, true).unwrap()
    }

    fn boxspec() -> BoxSpec {
        // 400x400 mm base at 20 mm cells, 300 mm cap.
        BoxSpec {
            width_cells: 20,
            length_cells: 20,
            cell_q: 200,
            height_q: 3000,
        }
    }

    #[test]
    fn slab_filling_base_has_unit_compactness() {
        let state = PackingState::new(boxspec(), ["slab".into()]);
        let state = place_cuboid(&state, "slab", 20, 20, 1000, 10, 10);
        assert!((compactness(&state) - 1.0).abs() < 1e-12);
        assert!((pyramidality(&state) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_cubes_side_by_side() {
        // Two 100 mm cubes in a 400x400 box: C = 2e6 / (400*400*100).
        let state = PackingState::new(boxspec(), ["a".into(), "b".into()]);
        let state = place_cuboid(&state, "a", 5, 5, 1000, 2, 2);
        let state = place_cuboid(&state, "b", 5, 5, 1000, 7, 2);
        assert!((compactness(&state) - 0.125).abs() < 1e-12);
        // Solid aligned columns: P = 1.
        assert!((pyramidality(&state) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_state_reads_zero() {
        let state = PackingState::new(boxspec(), ["a".into()]);
        assert_eq!(compactness(&state), 0.0);
        assert_eq!(pyramidality(&state), 0.0);
        assert_eq!(
            objective(&state, &ObjectiveWeights::default(), StabilityAggregate::Mean),
            0.0
        );
    }

    #[test]
    fn objective_arithmetic() {
        // C=0.4, P=0.8, S=1.0 with default weights -> 0.75.
        let w = ObjectiveWeights::default();
        let j = w.alpha * 0.4 + w.beta * 0.8 + w.gamma * 1.0;
        assert!((j - 0.75).abs() < 1e-12);
    }

    #[test]
    fn alpha_projection() {
        let state = PackingState::new(boxspec(), ["a".into()]);
        let state = place_cuboid(&state, "a", 5, 5, 700, 2, 2);
        let w = ObjectiveWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        assert!(
            (objective(&state, &w, StabilityAggregate::Mean) - compactness(&state)).abs() < 1e-12
        );
    }

    #[test]
    fn step_reward_is_difference() {
        assert!((step_reward(0.42, 0.30) - 0.12).abs() < 1e-12);
        assert_eq!(step_reward(0.5, 0.5), 0.0);
    }

    #[test]
    fn compactness_never_exceeds_pyramidality() {
        let state = PackingState::new(boxspec(), ["a".into(), "b".into(), "c".into()]);
        let state = place_cuboid(&state, "a", 6, 4, 900, 5, 5);
        let state = place_cuboid(&state, "b", 3, 3, 400, 12, 12);
        let state = place_cuboid(&state, "c", 4, 4, 600, 5, 5);
        let (c, p) = (compactness(&state), pyramidality(&state));
        assert!(c <= p + 1e-12, "C={c} P={p}");
        assert!(p <= 1.0 + 1e-12);
    }
}
