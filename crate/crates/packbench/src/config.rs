//! Flat key=value experiment configuration. Unknown keys are rejected;
//! the canonical serialization is hashed and stamped into every output.

use crate::episode::Difficulty;
use crate::error::{PackError, Result};
use crate::hrl::{FeatureSpec, Stage, TrainSchedule};
use crate::orientation::OrientationGrid;
use crate::packing::BoxSpec;
use crate::planners::{PlannerConfig, PlacementRule, SequenceRule};
use crate::rewards::ObjectiveWeights;
use crate::stability::StabilityThresholds;
use crate::units::QUANTA_PER_MM;
use sha2::{Digest, Sha256};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub box_width_mm: f64,
    pub box_length_mm: f64,
    pub box_height_mm: f64,
    pub cell_mm: f64,
    pub rp_interval_rad: f64,
    pub yaw_interval_rad: f64,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub pos_tol_mm: f64,
    pub ang_tol_rad: f64,
    pub episodes: usize,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub pool_size: usize,
    pub sequence_rule: SequenceRule,
    pub placement_rule: PlacementRule,
    pub stability_constrained: bool,
    pub hm_downsample: usize,
    pub train_res: usize,
    pub stage: u8,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub replay_capacity: usize,
    pub target_refresh: usize,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            box_width_mm: 400.0,
            box_length_mm: 400.0,
            box_height_mm: 300.0,
            cell_mm: 2.0,
            rp_interval_rad: FRAC_PI_2,
            yaw_interval_rad: FRAC_PI_2,
            k: 20,
            alpha: 0.75,
            beta: 0.25,
            gamma: 0.25,
            pos_tol_mm: 20.0,
            ang_tol_rad: FRAC_PI_6,
            episodes: 50,
            seed: 0,
            difficulty: Difficulty::Easy,
            pool_size: 20,
            sequence_rule: SequenceRule::BboxVolumeDesc,
            placement_rule: PlacementRule::Hm,
            stability_constrained: false,
            hm_downsample: 50,
            train_res: 50,
            stage: 1,
            epochs: 100,
            batch_size: 128,
            lr: 1e-3,
            discount: 0.9,
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            replay_capacity: 4096,
            target_refresh: 100,
            timing: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| PackError::Config(format!("bad value for {key}: {v}")))
}

fn parse_seq(v: &str) -> Result<SequenceRule> {
    match v {
        "random" => Ok(SequenceRule::Random),
        "bbox_volume_desc" => Ok(SequenceRule::BboxVolumeDesc),
        "learned" => Ok(SequenceRule::Learned),
        _ => Err(PackError::Config(format!("bad sequence_rule: {v}"))),
    }
}

fn parse_place(v: &str) -> Result<PlacementRule> {
    match v {
        "random" => Ok(PlacementRule::Random),
        "hm" => Ok(PlacementRule::Hm),
        "packit_blb" => Ok(PlacementRule::PackitBlb),
        "learned" => Ok(PlacementRule::Learned),
        _ => Err(PackError::Config(format!("bad placement_rule: {v}"))),
    }
}

fn seq_str(r: SequenceRule) -> &'static str {
    match r {
        SequenceRule::Random => "random",
        SequenceRule::BboxVolumeDesc => "bbox_volume_desc",
        SequenceRule::Learned => "learned",
    }
}

fn place_str(r: PlacementRule) -> &'static str {
    match r {
        PlacementRule::Random => "random",
        PlacementRule::Hm => "hm",
        PlacementRule::PackitBlb => "packit_blb",
        PlacementRule::Learned => "learned",
    }
}

impl ExperimentConfig {
    /// Parses the flat `key = value` format; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PackError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            c.apply(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        ExperimentConfig::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "box_width_mm" => self.box_width_mm = parse(key, v)?,
            "box_length_mm" => self.box_length_mm = parse(key, v)?,
            "box_height_mm" => self.box_height_mm = parse(key, v)?,
            "cell_mm" => self.cell_mm = parse(key, v)?,
            "rp_interval_rad" => self.rp_interval_rad = parse(key, v)?,
            "yaw_interval_rad" => self.yaw_interval_rad = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "pos_tol_mm" => self.pos_tol_mm = parse(key, v)?,
            "ang_tol_rad" => self.ang_tol_rad = parse(key, v)?,
            "episodes" => self.episodes = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "difficulty" => self.difficulty = parse(key, v)?,
            "pool_size" => self.pool_size = parse(key, v)?,
            "sequence_rule" => self.sequence_rule = parse_seq(v)?,
            "placement_rule" => self.placement_rule = parse_place(v)?,
            "stability_constrained" => self.stability_constrained = parse(key, v)?,
            "hm_downsample" => self.hm_downsample = parse(key, v)?,
            "train_res" => self.train_res = parse(key, v)?,
            "stage" => self.stage = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "discount" => self.discount = parse(key, v)?,
            "epsilon_start" => self.epsilon_start = parse(key, v)?,
            "epsilon_end" => self.epsilon_end = parse(key, v)?,
            "replay_capacity" => self.replay_capacity = parse(key, v)?,
            "target_refresh" => self.target_refresh = parse(key, v)?,
            "timing" => {
                self.timing = match v {
                    "real" => true,
                    "off" => false,
                    _ => return Err(PackError::Config(format!("bad timing: {v}"))),
                }
            }
            _ => return Err(PackError::Config(format!("unknown key: {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PackError::Config(m));
        if self.box_width_mm <= 0.0 || self.box_length_mm <= 0.0 || self.box_height_mm <= 0.0 {
            return err("box dimensions must be positive".into());
        }
        if self.cell_mm <= 0.0 {
            return err("cell_mm must be positive".into());
        }
        let cells = |mm: f64| mm / self.cell_mm;
        for (name, mm) in [("box_width_mm", self.box_width_mm), ("box_length_mm", self.box_length_mm)] {
            let c = cells(mm);
            if (c - c.round()).abs() > 1e-9 {
                return err(format!("{name} must be a whole number of cells"));
            }
        }
        if !(0.0..1.0).contains(&self.discount) {
            return err("discount must be in [0, 1)".into());
        }
        let (w, l) = (
            cells(self.box_width_mm).round() as usize,
            cells(self.box_length_mm).round() as usize,
        );
        if self.hm_downsample == 0 {
            return err("hm_downsample must be positive".into());
        }
        if self.hm_downsample < w && w % self.hm_downsample != 0 {
            return err("hm_downsample must divide the box width resolution".into());
        }
        if self.hm_downsample < l && l % self.hm_downsample != 0 {
            return err("hm_downsample must divide the box length resolution".into());
        }
        if !(1..=2).contains(&self.stage) {
            return err("stage must be 1 or 2".into());
        }
        if self.k == 0 || self.pool_size == 0 {
            return err("k and pool_size must be positive".into());
        }
        OrientationGrid::from_intervals(self.rp_interval_rad, self.yaw_interval_rad)?;
        Ok(())
    }

    pub fn box_spec(&self) -> BoxSpec {
        let q = QUANTA_PER_MM as f64;
        BoxSpec {
            width_cells: (self.box_width_mm / self.cell_mm).round() as usize,
            length_cells: (self.box_length_mm / self.cell_mm).round() as usize,
            cell_q: (self.cell_mm * q).round() as i64,
            height_q: (self.box_height_mm * q).round() as i64,
        }
    }

    pub fn orientation_grid(&self) -> Result<OrientationGrid> {
        OrientationGrid::from_intervals(self.rp_interval_rad, self.yaw_interval_rad)
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            sequence_rule: self.sequence_rule,
            placement_rule: self.placement_rule,
            stability_constrained: self.stability_constrained,
            hm_downsample: self.hm_downsample,
            seed: self.seed,
        }
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn thresholds(&self) -> StabilityThresholds {
        StabilityThresholds {
            pos_tol_mm: self.pos_tol_mm,
            ang_tol_rad: self.ang_tol_rad,
        }
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            stage: if self.stage == 1 {
                Stage::WorkerPretrain
            } else {
                Stage::Joint
            },
            epochs: self.epochs,
            worker_update_period: 1,
            manager_update_period: 4,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            discount: self.discount,
            replay_capacity: self.replay_capacity,
            batch_size: self.batch_size,
            lr: self.lr,
            target_refresh: self.target_refresh,
            features: FeatureSpec {
                train_res: self.train_res,
                k: self.k,
            },
        }
    }

    /// Canonical serialization: every key, fixed order, full precision.
    pub fn canonical(&self) -> String {
        let d = match self.difficulty {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        };
        format!(
            "alpha={}\nang_tol_rad={}\nbatch_size={}\nbeta={}\nbox_height_mm={}\n\
             box_length_mm={}\nbox_width_mm={}\ncell_mm={}\ndifficulty={}\ndiscount={}\n\
             episodes={}\nepochs={}\nepsilon_end={}\nepsilon_start={}\ngamma={}\n\
             hm_downsample={}\nk={}\nlr={}\nplacement_rule={}\npool_size={}\n\
             pos_tol_mm={}\nreplay_capacity={}\nrp_interval_rad={}\nseed={}\n\
             sequence_rule={}\nstability_constrained={}\nstage={}\ntarget_refresh={}\n\
             timing={}\ntrain_res={}\nyaw_interval_rad={}\n",
            self.alpha,
            self.ang_tol_rad,
            self.batch_size,
            self.beta,
            self.box_height_mm,
            self.box_length_mm,
            self.box_width_mm,
            self.cell_mm,
            d,
            self.discount,
            self.episodes,
            self.epochs,
            self.epsilon_end,
            self.epsilon_start,
            self.gamma,
            self.hm_downsample,
            self.k,
            self.lr,
            place_str(self.placement_rule),
            self.pool_size,
            self.pos_tol_mm,
            self.replay_capacity,
            self.rp_interval_rad,
            self.seed,
            seq_str(self.sequence_rule),
            self.stability_constrained,
            self.stage,
            self.target_refresh,
            if self.timing { "real" } else { "off" },
            self.train_res,
            self.yaw_interval_rad,
        )
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let b = c.box_spec();
        assert_eq!((b.width_cells, b.length_cells), (200, 200));
        assert_eq!(b.cell_q, 20);
        assert_eq!(b.height_q, 3000);
    }

    #[test]
    fn parses_comments_and_overrides() {
        let c = ExperimentConfig::parse_str(
            "# comment\nseed = 7\nplacement_rule = packit_blb  # inline\n\ncell_mm = 4\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.placement_rule, PlacementRule::PackitBlb);
        assert_eq!(c.cell_mm, 4.0);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = ExperimentConfig::parse_str("no_such_key = 1\n").unwrap_err();
        assert!(e.to_string().contains("unknown key"));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(ExperimentConfig::parse_str("cell_mm = -1\n").is_err());
        assert!(ExperimentConfig::parse_str("discount = 1.5\n").is_err());
        assert!(ExperimentConfig::parse_str("timing = sometimes\n").is_err());
        assert!(ExperimentConfig::parse_str("box_width_mm = 401\n").is_err()); // not whole cells
        assert!(ExperimentConfig::parse_str("hm_downsample = 3\n").is_err()); // 200 % 3 != 0
    }

    #[test]
    fn hash_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig::parse_str("seed = 1\n").unwrap();
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
