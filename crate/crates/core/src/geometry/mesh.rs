use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::error::{Error, Result};

pub const MANO_VERTEX_COUNT: usize = 778;
pub const KEYPOINT_COUNT: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

/// Triangle mesh of a single hand. Faces are CCW, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct HandMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub handedness: Handedness,
    pub keypoints: Option<Vec<Vec3>>,
}

impl HandMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, handedness: Handedness) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            handedness,
            keypoints: None,
        };
        mesh.validate(false)?;
        Ok(mesh)
    }

    pub fn empty(handedness: Handedness) -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            handedness,
            keypoints: None,
        }
    }

    pub fn with_keypoints(mut self, keypoints: Vec<Vec3>) -> Result<Self> {
        self.keypoints = Some(keypoints);
        self.validate(false)?;
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Checks index ranges, degenerate faces and finiteness. `mano_strict`
    /// additionally demands the 778-vertex / 21-keypoint topology.
    pub fn validate(&self, mano_strict: bool) -> Result<()> {
        let n = self.vertices.len();
        if let Some(i) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= n) {
                return Err(Error::Validation(format!(
                    "face {fi} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Validation(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if let Some(kp) = &self.keypoints {
            if kp.len() != KEYPOINT_COUNT {
                return Err(Error::Validation(format!(
                    "expected {KEYPOINT_COUNT} keypoints, got {}",
                    kp.len()
                )));
            }
        }
        if mano_strict {
            if n != MANO_VERTEX_COUNT {
                return Err(Error::Validation(format!(
                    "MANO mesh must have {MANO_VERTEX_COUNT} vertices, got {n}"
                )));
            }
            if self.keypoints.as_ref().map(Vec::len) != Some(KEYPOINT_COUNT) {
                return Err(Error::Validation(format!(
                    "MANO mesh must carry {KEYPOINT_COUNT} keypoints"
                )));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::ZERO;
        }
        let sum = self.vertices.iter().fold(Vec3::ZERO, |acc, &v| acc + v);
        sum * (1.0 / self.vertices.len() as f64)
    }

    /// Translates vertices (and keypoints) so the vertex centroid sits at the origin.
    pub fn centered(&self) -> HandMesh {
        self.translated(-self.centroid())
    }

    pub fn translated(&self, offset: Vec3) -> HandMesh {
        self.map_points(|v| v + offset)
    }

    pub fn rotated(&self, r: &Mat3) -> HandMesh {
        self.map_points(|v| r.apply(v))
    }

    fn map_points(&self, f: impl Fn(Vec3) -> Vec3) -> HandMesh {
        HandMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
            handedness: self.handedness,
            keypoints: self.keypoints.as_ref().map(|k| k.iter().map(|&v| f(v)).collect()),
        }
    }

    /// Largest vertex distance from the origin.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::ZERO; self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            let n = (b - a).cross(c - a);
            for &i in f {
                normals[i as usize] += n;
            }
        }
        normals.into_iter().map(Vec3::normalized).collect()
    }

    /// Mesh mirrored across the YZ plane with winding flipped so faces stay CCW.
    pub fn mirrored_x(&self) -> HandMesh {
        let mut out = self.map_points(|v| Vec3::new(-v.x, v.y, v.z));
        for f in &mut out.faces {
            f.swap(1, 2);
        }
        out
    }

    /// Concatenates another mesh's geometry into this one.
    pub fn append(&mut self, other: &HandMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|f| f.map(|i| i + base)));
    }
}
