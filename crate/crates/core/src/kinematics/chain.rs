use nalgebra::{Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

pub const ARM_JOINTS: usize = 6;
/// Arm joints plus the gripper parameter.
pub const JOINT_COUNT: usize = ARM_JOINTS + 1;
pub const CHAIN_FORMAT_VERSION: u32 = 1;

/// A revolute joint: fixed transform from the parent frame, then rotation about `axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub axis: Unit<Vec3>,
    pub origin: Pose,
    pub lower: f64,
    pub upper: f64,
    pub max_speed: f64,
}

/// The gripper is modeled as one revolute parameter; its angle maps linearly to the
/// finger opening, fully open at `lower`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gripper {
    pub axis: Unit<Vec3>,
    pub origin: Pose,
    pub lower: f64,
    pub upper: f64,
    pub max_speed: f64,
    /// Finger opening in meters at `lower`.
    pub max_opening: f64,
}

impl Gripper {
    /// Fraction closed in `[0, 1]`.
    pub fn closed_fraction(&self, angle: f64) -> f64 {
        ((angle - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0)
    }

    pub fn angle_for_open_fraction(&self, open: f64) -> f64 {
        let open = open.clamp(0.0, 1.0);
        self.upper - open * (self.upper - self.lower)
    }

    pub fn opening_m(&self, angle: f64) -> f64 {
        self.max_opening * (1.0 - self.closed_fraction(angle))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    pub joints: Vec<Joint>,
    pub gripper: Gripper,
    /// Gripper-joint frame to end-effector (tool center point).
    pub tool: Pose,
    /// Reset configuration (6 arm joints + gripper).
    pub home: [f64; JOINT_COUNT],
}

impl KinematicChain {
    pub fn lower(&self, i: usize) -> f64 {
        if i < ARM_JOINTS {
            self.joints[i].lower
        } else {
            self.gripper.lower
        }
    }

    pub fn upper(&self, i: usize) -> f64 {
        if i < ARM_JOINTS {
            self.joints[i].upper
        } else {
            self.gripper.upper
        }
    }

    pub fn max_speed(&self, i: usize) -> f64 {
        if i < ARM_JOINTS {
            self.joints[i].max_speed
        } else {
            self.gripper.max_speed
        }
    }

    pub fn clamp_angle(&self, i: usize, angle: f64) -> f64 {
        angle.clamp(self.lower(i), self.upper(i))
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != ARM_JOINTS {
            return Err(Error::Chain(format!(
                "expected {ARM_JOINTS} arm joints, found {}",
                self.joints.len()
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.lower < j.upper) {
                return Err(Error::Chain(format!("joint {i}: lower must be < upper")));
            }
            if !(j.max_speed > 0.0) {
                return Err(Error::Chain(format!("joint {i}: max_speed must be > 0")));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Chain(format!("joint {i}: axis not unit")));
            }
        }
        let g = &self.gripper;
        if !(g.lower < g.upper) || !(g.max_speed > 0.0) || !(g.max_opening > 0.0) {
            return Err(Error::Chain("gripper limits invalid".into()));
        }
        for (i, &h) in self.home.iter().enumerate() {
            if !(self.lower(i)..=self.upper(i)).contains(&h) {
                return Err(Error::Chain(format!("home angle {i} outside limits")));
            }
        }
        Ok(())
    }

    /// The generic roll-pitch-pitch-roll-pitch-roll arm used by default.
    pub fn generic_6r() -> Self {
        let z = Vec3::z_axis();
        let y = Vec3::y_axis();
        let links = [0.0, 0.15, 0.30, 0.30, 0.10, 0.10];
        let axes = [z, y, y, z, y, z];
        let limits = [
            (-3.0, 3.0),
            (-1.9, 1.9),
            (-2.6, 2.6),
            (-3.0, 3.0),
            (-2.8, 2.8),
            (-3.0, 3.0),
        ];
        let joints = (0..ARM_JOINTS)
            .map(|i| Joint {
                name: format!("joint{}", i + 1),
                axis: axes[i],
                origin: Pose::from_translation(Vec3::new(0.0, 0.0, links[i])),
                lower: limits[i].0,
                upper: limits[i].1,
                max_speed: 1.0,
            })
            .collect();
        Self {
            name: "generic-6r".into(),
            joints,
            gripper: Gripper {
                axis: Vec3::x_axis(),
                origin: Pose::from_translation(Vec3::new(0.0, 0.0, 0.08)),
                lower: 0.0,
                upper: 0.8,
                max_speed: 2.0,
                max_opening: 0.08,
            },
            tool: Pose::from_translation(Vec3::new(0.0, 0.0, 0.04)),
            home: [0.0, 0.1, 1.6, 0.0, 0.6, 0.0, 0.0],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ChainFile = toml::from_str(text).map_err(|e| Error::Chain(e.to_string()))?;
        file.try_into()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&ChainFile::from(self)).expect("chain serializes")
    }

    /// SHA-256 of the canonical serialization; identical for a file and the chain it loads into.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

impl Default for KinematicChain {
    fn default() -> Self {
        Self::generic_6r()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct JointRecord {
    name: String,
    axis: [f64; 3],
    position: [f64; 3],
    orientation: [f64; 4],
    lower: f64,
    upper: f64,
    max_speed: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GripperRecord {
    axis: [f64; 3],
    position: [f64; 3],
    orientation: [f64; 4],
    lower: f64,
    upper: f64,
    max_speed: f64,
    max_opening: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ToolRecord {
    position: [f64; 3],
    orientation: [f64; 4],
}

/// On-disk chain description.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ChainFile {
    format_version: u32,
    name: String,
    home: Vec<f64>,
    tool: ToolRecord,
    gripper: GripperRecord,
    joint: Vec<JointRecord>,
}

fn pose_from(position: [f64; 3], q: [f64; 4], what: &str) -> Result<Pose> {
    Pose::from_wxyz(position, q, 1e-9)
        .ok_or_else(|| Error::Chain(format!("{what}: orientation must be a finite unit quaternion")))
}

fn axis_from(a: [f64; 3], what: &str) -> Result<Unit<Vec3>> {
    let v = Vec3::from(a);
    if !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Chain(format!("{what}: axis must have unit norm")));
    }
    Ok(Unit::new_normalize(v))
}

impl TryFrom<ChainFile> for KinematicChain {
    type Error = Error;

    fn try_from(f: ChainFile) -> Result<Self> {
        if f.format_version != CHAIN_FORMAT_VERSION {
            return Err(Error::Version {
                found: f.format_version,
                expected: CHAIN_FORMAT_VERSION,
            });
        }
        let joints = f
            .joint
            .iter()
            .map(|j| {
                Ok(Joint {
                    name: j.name.clone(),
                    axis: axis_from(j.axis, &j.name)?,
                    origin: pose_from(j.position, j.orientation, &j.name)?,
                    lower: j.lower,
                    upper: j.upper,
                    max_speed: j.max_speed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = &f.gripper;
        let home: [f64; JOINT_COUNT] = f
            .home
            .as_slice()
            .try_into()
            .map_err(|_| Error::Chain(format!("home must list {JOINT_COUNT} angles")))?;
        let chain = KinematicChain {
            name: f.name,
            joints,
            gripper: Gripper {
                axis: axis_from(g.axis, "gripper")?,
                origin: pose_from(g.position, g.orientation, "gripper")?,
                lower: g.lower,
                upper: g.upper,
                max_speed: g.max_speed,
                max_opening: g.max_opening,
            },
            tool: pose_from(f.tool.position, f.tool.orientation, "tool")?,
            home,
        };
        chain.validate()?;
        Ok(chain)
    }
}

impl From<&KinematicChain> for ChainFile {
    fn from(c: &KinematicChain) -> Self {
        ChainFile {
            format_version: CHAIN_FORMAT_VERSION,
            name: c.name.clone(),
            home: c.home.to_vec(),
            tool: ToolRecord {
                position: c.tool.position.into(),
                orientation: c.tool.wxyz(),
            },
            gripper: GripperRecord {
                axis: c.gripper.axis.into_inner().into(),
                position: c.gripper.origin.position.into(),
                orientation: c.gripper.origin.wxyz(),
                lower: c.gripper.lower,
                upper: c.gripper.upper,
                max_speed: c.gripper.max_speed,
                max_opening: c.gripper.max_opening,
            },
            joint: c
                .joints
                .iter()
                .map(|j| JointRecord {
                    name: j.name.clone(),
                    axis: j.axis.into_inner().into(),
                    position: j.origin.position.into(),
                    orientation: j.origin.wxyz(),
                    lower: j.lower,
                    upper: j.upper,
                    max_speed: j.max_speed,
                })
                .collect(),
        }
    }
}

/// Rotation of a joint frame by `angle` about `axis`.
pub(crate) fn joint_rotation(axis: &Unit<Vec3>, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(axis, angle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_valid() {
        let c = KinematicChain::generic_6r();
        c.validate().unwrap();
        assert_eq!(c.joints.len(), 6);
    }

    #[test]
    fn toml_roundtrip_preserves_hash() {
        let c = KinematicChain::generic_6r();
        let text = c.to_toml_string();
        let back = KinematicChain::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
    }

    #[test]
    fn rejects_wrong_joint_count() {
        let mut c = KinematicChain::generic_6r();
        c.joints.pop();
        let text = toml::to_string(&ChainFile::from(&c)).unwrap();
        assert!(matches!(
            KinematicChain::from_toml_str(&text),
            Err(Error::Chain(_))
        ));
    }

    #[test]
    fn rejects_bad_version_and_axis() {
        let c = KinematicChain::generic_6r();
        let text = c.to_toml_string().replace("format_version = 1", "format_version = 9");
        assert!(matches!(
            KinematicChain::from_toml_str(&text),
            Err(Error::Version { found: 9, .. })
        ));
        let mut file = ChainFile::from(&c);
        file.joint[2].axis = [0.0, 2.0, 0.0];
        let text = toml::to_string(&file).unwrap();
        assert!(KinematicChain::from_toml_str(&text).is_err());
    }

    #[test]
    fn gripper_fraction_mapping() {
        let g = KinematicChain::generic_6r().gripper;
        assert_eq!(g.closed_fraction(g.lower), 0.0);
        assert_eq!(g.closed_fraction(g.upper), 1.0);
        assert!((g.angle_for_open_fraction(1.0) - g.lower).abs() < 1e-15);
        assert!((g.opening_m(g.lower) - g.max_opening).abs() < 1e-15);
    }
}
