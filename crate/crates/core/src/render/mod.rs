//! Deterministic software rendering: geometry pass, Lambertian shading under
//! the fixed light rig, normalized depth maps and silhouette coverage.

pub mod io;
mod lighting;
mod raster;

pub use lighting::{raymond_lights, DirectionalLight, LightRig, Material, PointLight, Rgb, BACKGROUND, BASE_COLOR};
pub use raster::{rasterize, shade, to_byte, Framebuffer, MIN_RESOLUTION};

use crate::error::{Error, Result};
use crate::geometry::{transform_to_view, CameraPose, HandMesh, Projection, ViewId};

pub const DEFAULT_RESOLUTION: (usize, usize) = (512, 512);

/// Single-channel image of reals in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Normalizes the covered depths so the nearest pixel maps to 1 and the
/// farthest to 0. A constant-depth surface maps to 1; background is 0.
pub fn normalize_depth(fb: &Framebuffer) -> DepthImage {
    let covered = fb.depth.iter().copied().filter(|d| d.is_finite());
    let (near, far) = covered.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let span = far - near;
    let data = fb
        .depth
        .iter()
        .map(|&z| {
            if !z.is_finite() {
                0.0
            } else if span > 0.0 {
                (far - z) / span
            } else {
                1.0
            }
        })
        .collect();
    DepthImage {
        width: fb.width,
        height: fb.height,
        data,
    }
}

pub fn render_depth(mesh: &HandMesh, camera: &CameraPose, resolution: (usize, usize)) -> Result<DepthImage> {
    Ok(normalize_depth(&rasterize(mesh, camera, resolution)?))
}

/// Centers the mesh on its vertex centroid, then applies the view transform.
pub fn prepare_view(mesh: &HandMesh, camera: &CameraPose, view: ViewId) -> Result<(HandMesh, CameraPose)> {
    transform_to_view(&mesh.centered(), camera, view)
}

/// Geometry pass for one of the six views.
pub fn rasterize_view(
    mesh: &HandMesh,
    camera: &CameraPose,
    view: ViewId,
    resolution: (usize, usize),
) -> Result<Framebuffer> {
    let (m, c) = prepare_view(mesh, camera, view)?;
    rasterize(&m, &c, resolution)
}

/// Fully shaded render of one view with the view's light rig and the
/// handedness-specific material.
pub fn render_view(
    mesh: &HandMesh,
    camera: &CameraPose,
    view: ViewId,
    resolution: (usize, usize),
) -> Result<Framebuffer> {
    let geom = rasterize_view(mesh, camera, view, resolution)?;
    shade(&geom, &LightRig::for_view(view), &Material::for_hand(mesh.handedness))
}

/// Fraction of pixels covered by the mesh silhouette in `view`. Requires a
/// weak-perspective camera so opposite views are exact mirror images.
pub fn silhouette_area(mesh: &HandMesh, view: ViewId, camera: &CameraPose, resolution: (usize, usize)) -> Result<f64> {
    if !matches!(camera.projection, Projection::WeakPerspective { .. }) {
        return Err(Error::UnsupportedProjection(
            "silhouette area needs a weak-perspective camera".into(),
        ));
    }
    Ok(rasterize_view(mesh, camera, view, resolution)?.covered_fraction())
}
