//! Height quantum and unit conversions.
//!
//! All heights and lengths are stored as integer multiples of a fixed
//! quantum (0.1 mm) so that geometric predicates are exact and
//! platform-independent.

/// Integer quanta per millimeter (quantum = 0.1 mm).
pub const QUANTA_PER_MM: i64 = 10;

/// Sentinel stored in bottom-view heightmaps for columns with no occupied
/// voxel. Far larger than any box height, so `H_c - H_b` on an empty
/// column can never dominate the drop-height max.
pub const EMPTY_COLUMN: i64 = 1 << 40;

/// Convert millimeters to quanta, rounding to nearest.
pub fn mm_to_q(mm: f64) -> i64 {
    (mm * QUANTA_PER_MM as f64).round() as i64
}

/// Convert quanta to millimeters.
pub fn q_to_mm(q: i64) -> f64 {
    q as f64 / QUANTA_PER_MM as f64
}

/// True if `angle` is an integer multiple of pi/2 (within 1e-9 rad).
pub fn is_right_angle(angle: f64) -> bool {
    let k = angle / std::f64::consts::FRAC_PI_2;
    (k - k.round()).abs() < 1e-9
}

/// Number of quarter turns for a right-angle `angle`, reduced mod 4.
pub fn quarter_turns(angle: f64) -> usize {
    let k = (angle / std::f64::consts::FRAC_PI_2).round() as i64;
    k.rem_euclid(4) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_roundtrip() {
        assert_eq!(mm_to_q(2.0), 20);
        assert_eq!(q_to_mm(25), 2.5);
        assert_eq!(mm_to_q(0.05), 1); // rounds to nearest quantum
    }

    #[test]
    fn right_angles() {
        use std::f64::consts::PI;
        assert!(is_right_angle(0.0));
        assert!(is_right_angle(PI));
        assert!(is_right_angle(3.0 * PI / 2.0));
        assert!(!is_right_angle(PI / 4.0));
        assert_eq!(quarter_turns(PI), 2);
        assert_eq!(quarter_turns(2.0 * PI), 0);
    }
}
