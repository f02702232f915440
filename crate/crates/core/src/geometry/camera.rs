use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Projection {
    /// Scaled orthographic projection; `scale` maps meters to normalized
    /// device units across the shorter image side.
    WeakPerspective { scale: f64 },
    /// Pinhole projection with a field of view across the shorter image side.
    Perspective { yfov: f64 },
}

/// Camera placed at `translation`, looking down -Z with +Y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub translation: Vec3,
    pub projection: Projection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    translation: [f64; 3],
    projection: Projection,
}

impl CameraPose {
    pub fn new(translation: Vec3, projection: Projection) -> Result<Self> {
        let cam = Self {
            translation,
            projection,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn weak_perspective(translation: Vec3, scale: f64) -> Result<Self> {
        Self::new(translation, Projection::WeakPerspective { scale })
    }

    /// Default framing for synthetic hands: a 0.15 m radius hand fills 75% of the frame.
    pub fn default_weak() -> Self {
        Self {
            translation: Vec3::new(0.0, 0.0, 2.0),
            projection: Projection::WeakPerspective { scale: 5.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.translation.is_finite() {
            return Err(Error::Validation("camera translation must be finite".into()));
        }
        match self.projection {
            Projection::WeakPerspective { scale } if !(scale > 0.0 && scale.is_finite()) => Err(Error::Validation(
                format!("weak perspective scale must be > 0, got {scale}"),
            )),
            Projection::Perspective { yfov } if !(yfov > 0.0 && yfov < PI) => {
                Err(Error::Validation(format!("yfov must lie in (0, pi), got {yfov}")))
            }
            _ => Ok(()),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: CameraJson = serde_json::from_str(s)?;
        Self::new(Vec3::from_array(raw.translation), raw.projection)
    }

    pub fn to_json_string(&self) -> String {
        let raw = CameraJson {
            translation: self.translation.to_array(),
            projection: self.projection,
        };
        serde_json::to_string(&raw).expect("camera serializes")
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }
}
