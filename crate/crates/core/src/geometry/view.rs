use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{rot_x, rot_y, CameraPose, HandMesh, Mat3, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewId {
    Front,
    Rear,
    Left,
    Right,
    Top,
    Bottom,
}

impl ViewId {
    pub const ALL: [ViewId; 6] = [
        ViewId::Front,
        ViewId::Rear,
        ViewId::Left,
        ViewId::Right,
        ViewId::Top,
        ViewId::Bottom,
    ];

    /// The opposite view sharing the same axis.
    pub fn partner(self) -> ViewId {
        match self {
            ViewId::Front => ViewId::Rear,
            ViewId::Rear => ViewId::Front,
            ViewId::Left => ViewId::Right,
            ViewId::Right => ViewId::Left,
            ViewId::Top => ViewId::Bottom,
            ViewId::Bottom => ViewId::Top,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewId::Front => "front",
            ViewId::Rear => "rear",
            ViewId::Left => "left",
            ViewId::Right => "right",
            ViewId::Top => "top",
            ViewId::Bottom => "bottom",
        }
    }

    /// Vertex rotation taking the front view to this view.
    pub fn rotation(self) -> Mat3 {
        let r = match self {
            ViewId::Front => Ok(Mat3::IDENTITY),
            ViewId::Rear => rot_y(PI),
            ViewId::Right => rot_y(FRAC_PI_2),
            ViewId::Left => rot_y(-FRAC_PI_2),
            ViewId::Top => rot_x(FRAC_PI_2),
            ViewId::Bottom => rot_x(-FRAC_PI_2),
        };
        r.expect("finite constant angle")
    }

    /// Camera translation for this view, derived from the front-view translation.
    pub fn camera_translation(self, t: Vec3) -> Vec3 {
        match self {
            ViewId::Front => t,
            ViewId::Rear => Vec3::new(-t.x, t.y, t.z),
            ViewId::Right => Vec3::new(0.0, t.y, -t.x),
            ViewId::Left => Vec3::new(0.0, t.y, t.x),
            ViewId::Top => Vec3::new(t.x, 0.0, t.y),
            ViewId::Bottom => Vec3::new(t.x, 0.0, -t.y),
        }
    }

    pub fn is_side_or_vertical(self) -> bool {
        matches!(self, ViewId::Left | ViewId::Right | ViewId::Top | ViewId::Bottom)
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ViewId::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown view '{s}'")))
    }
}

/// Rotates the mesh vertices into `view` and adjusts the camera translation.
/// The front view returns both inputs unchanged.
pub fn transform_to_view(mesh: &HandMesh, camera: &CameraPose, view: ViewId) -> Result<(HandMesh, CameraPose)> {
    mesh.validate(false)?;
    camera.validate()?;
    if view == ViewId::Front {
        return Ok((mesh.clone(), *camera));
    }
    let rotated = mesh.rotated(&view.rotation());
    let cam = CameraPose {
        translation: view.camera_translation(camera.translation),
        projection: camera.projection,
    };
    Ok((rotated, cam))
}
