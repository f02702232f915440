use crate::error::{Error, Result};
use crate::geometry::{Handedness, Vec3, ViewId};

pub type Rgb = [f64; 3];

pub const BASE_COLOR: Rgb = [1.0, 1.0, 0.9];
pub const BACKGROUND: [u8; 3] = [0, 0, 0];
const LEFT_HAND_OFFSET: Rgb = [-0.1, 0.0, 0.1];

/// Fixed diffuse material. Metallic and roughness are pinned to 0 and 1, so
/// shading reduces to Lambertian reflectance of `albedo()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub base_color: Rgb,
    pub metallic: f64,
    pub roughness: f64,
    pub chroma_offset: Rgb,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            base_color: BASE_COLOR,
            metallic: 0.0,
            roughness: 1.0,
            chroma_offset: [0.0; 3],
        }
    }
}

impl Material {
    pub fn for_hand(handedness: Handedness) -> Self {
        let chroma_offset = match handedness {
            Handedness::Right => [0.0; 3],
            Handedness::Left => LEFT_HAND_OFFSET,
        };
        Self {
            chroma_offset,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.metallic != 0.0 || self.roughness != 1.0 {
            return Err(Error::Validation(format!(
                "material must be metallic 0 / roughness 1, got {} / {}",
                self.metallic, self.roughness
            )));
        }
        Ok(())
    }

    pub fn albedo(&self) -> Rgb {
        std::array::from_fn(|c| (self.base_color[c] + self.chroma_offset[c]).clamp(0.0, 1.0))
    }
}

/// Light travelling along `direction` (unit vector, pointing away from the light).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    pub direction: Vec3,
    pub intensity: Rgb,
}

/// Unattenuated point light in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub intensity: Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightRig {
    pub ambient: Rgb,
    pub directional: Vec<DirectionalLight>,
    pub point: Vec<PointLight>,
    pub raymond: Vec<DirectionalLight>,
}

impl Default for LightRig {
    fn default() -> Self {
        Self {
            ambient: [0.3; 3],
            directional: vec![DirectionalLight {
                direction: Vec3::new(0.0, 0.0, -1.0),
                intensity: [0.4; 3],
            }],
            point: vec![PointLight {
                position: Vec3::new(0.0, 0.0, 2.0),
                intensity: [0.5; 3],
            }],
            raymond: raymond_lights(),
        }
    }
}

/// Three unit-intensity lights 120 degrees apart around the viewing axis,
/// tilted 45 degrees off it on the camera side, all aimed at the origin.
pub fn raymond_lights() -> Vec<DirectionalLight> {
    let tilt = 45f64.to_radians();
    [0.0f64, 120.0, 240.0]
        .iter()
        .map(|az| {
            let az = az.to_radians();
            let from = Vec3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
            DirectionalLight {
                direction: -from.normalized(),
                intensity: [1.0; 3],
            }
        })
        .collect()
}

impl LightRig {
    pub fn ambient_only(ambient: Rgb) -> Self {
        Self {
            ambient,
            directional: Vec::new(),
            point: Vec::new(),
            raymond: Vec::new(),
        }
    }

    /// Default rig plus a compensation light along the viewing axis for the
    /// side and vertical views.
    pub fn for_view(view: ViewId) -> Self {
        let mut rig = Self::default();
        if view.is_side_or_vertical() {
            rig.directional.push(DirectionalLight {
                direction: Vec3::new(0.0, 0.0, -1.0),
                intensity: [0.2; 3],
            });
        }
        rig
    }

    pub fn validate(&self) -> Result<()> {
        let bad_rgb = |c: &Rgb| c.iter().any(|v| !(v.is_finite() && *v >= 0.0));
        if bad_rgb(&self.ambient) {
            return Err(Error::Validation("ambient intensity must be >= 0".into()));
        }
        for l in self.directional.iter().chain(&self.raymond) {
            if (l.direction.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "light direction {:?} is not unit length",
                    l.direction
                )));
            }
            if bad_rgb(&l.intensity) {
                return Err(Error::Validation("light intensity must be >= 0".into()));
            }
        }
        for l in &self.point {
            if bad_rgb(&l.intensity) || !l.position.is_finite() {
                return Err(Error::Validation("invalid point light".into()));
            }
        }
        Ok(())
    }

    /// Incident radiance (before albedo and clamping) at a surface point.
    pub fn incident(&self, normal: Vec3, position: Vec3) -> Rgb {
        let mut total = self.ambient;
        let mut add = |intensity: &Rgb, cos: f64| {
            let cos = cos.max(0.0);
            for c in 0..3 {
                total[c] += intensity[c] * cos;
            }
        };
        for l in self.directional.iter().chain(&self.raymond) {
            add(&l.intensity, normal.dot(-l.direction));
        }
        for l in &self.point {
            add(&l.intensity, normal.dot((l.position - position).normalized()));
        }
        total
    }
}
