use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;

/// Cup with a handle, in the object frame (origin on the table under the cup axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub body_radius: f64,
    pub body_height: f64,
    pub handle_center: [f64; 3],
    pub handle_half_extents: [f64; 3],
    pub grasp_point: [f64; 3],
    /// Approach axis of the hand when grasping.
    pub grasp_direction: [f64; 3],
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            body_radius: 0.04,
            body_height: 0.12,
            handle_center: [-0.09, 0.0, 0.07],
            handle_half_extents: [0.015, 0.005, 0.03],
            grasp_point: [-0.09, 0.0, 0.10],
            grasp_direction: [0.0, 0.0, -1.0],
        }
    }
}

/// Region the object pose is drawn from at reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRegion {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub yaw_deg: [f64; 2],
}

impl Default for SamplingRegion {
    fn default() -> Self {
        Self {
            x: [0.3, 0.6],
            y: [-0.2, 0.2],
            yaw_deg: [-15.0, 15.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Maximum angle between hand axis and grasp direction for alignment.
    pub align_deg: f64,
    /// Radial tolerance around the grasp ray.
    pub corridor_radius: f64,
    /// Hand-to-grasp-point distance counted as "at the grasp point".
    pub near_distance: f64,
    /// Fraction of full closure that counts as a grasp.
    pub closure_fraction: f64,
    /// Extra angle tolerated during Task 2 before the alignment counts as broken.
    pub hysteresis_deg: f64,
    /// Extra radial tolerance during Task 2.
    pub corridor_hysteresis: f64,
    pub drift_distance: f64,
    pub episode_cap: u32,
    pub dt: f64,
    /// Attempts allowed when earlier-task policies build an initial state.
    pub reset_retries: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            align_deg: 10.0,
            corridor_radius: 0.02,
            near_distance: 0.01,
            closure_fraction: 0.7,
            hysteresis_deg: 5.0,
            corridor_hysteresis: 0.01,
            drift_distance: 1.0,
            episode_cap: 400,
            dt: 0.05,
            reset_retries: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionSpec {
    pub link_radius: f64,
    pub gripper_radius: f64,
    pub table_height: f64,
    pub floor_height: f64,
}

impl Default for CollisionSpec {
    fn default() -> Self {
        Self {
            link_radius: 0.03,
            gripper_radius: 0.015,
            table_height: 0.0,
            floor_height: -0.75,
        }
    }
}

/// Everything about the world other than the arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub format_version: u32,
    pub object: ObjectSpec,
    pub sampling: SamplingRegion,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub collision: CollisionSpec,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            format_version: SCENE_FORMAT_VERSION,
            object: ObjectSpec::default(),
            sampling: SamplingRegion::default(),
            thresholds: Thresholds::default(),
            collision: CollisionSpec::default(),
        }
    }
}

impl Scene {
    /// Desk-scale preset: a small sampling region and a 200-step episode cap.
    pub fn toy() -> Self {
        let mut s = Self::default();
        s.sampling = SamplingRegion {
            x: [0.42, 0.48],
            y: [-0.04, 0.04],
            yaw_deg: [-5.0, 5.0],
        };
        s.thresholds.episode_cap = 200;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != SCENE_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: SCENE_FORMAT_VERSION,
            });
        }
        let d = self.object.grasp_direction;
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Scene("grasp_direction must have unit norm".into()));
        }
        let s = &self.sampling;
        for (name, r) in [("x", s.x), ("y", s.y), ("yaw_deg", s.yaw_deg)] {
            if !(r[0] <= r[1]) {
                return Err(Error::Scene(format!("sampling.{name} range is empty")));
            }
        }
        let t = &self.thresholds;
        if !(t.dt > 0.0) || t.episode_cap == 0 {
            return Err(Error::Scene("dt and episode_cap must be positive".into()));
        }
        if !(0.0..=1.0).contains(&t.closure_fraction) {
            return Err(Error::Scene("closure_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scene = toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene serializes")
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}
