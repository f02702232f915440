//! Z-buffered triangle rasterization.
//!
//! Pixel centers sit at `(i + 0.5, j + 0.5)` with the origin at the top-left
//! corner. Shared edges follow a top-left fill rule so adjacent triangles
//! never double-cover a pixel. Rows are split into bands that rasterize
//! independently; each band walks the triangles in mesh order, so the output
//! is identical to a sequential pass regardless of thread count.

use rayon::prelude::*;

use super::lighting::{LightRig, Material, BACKGROUND};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, HandMesh, Projection, Vec3};

pub const MIN_RESOLUTION: usize = 8;
const NEAR: f64 = 1e-4;
const BAND_ROWS: usize = 16;

/// Raster output. Depth is camera-space distance along the view axis, `+inf`
/// where nothing was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub depth: Vec<f64>,
    /// Unit surface normal facing the camera, zero on background.
    pub normal: Vec<Vec3>,
    /// World-space surface position, zero on background.
    pub position: Vec<Vec3>,
}

impl Framebuffer {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            rgb: vec![0; n * 3],
            depth: vec![f64::INFINITY; n],
            normal: vec![Vec3::ZERO; n],
            position: vec![Vec3::ZERO; n],
        }
    }

    pub fn is_covered(&self, x: usize, y: usize) -> bool {
        self.depth[y * self.width + x].is_finite()
    }

    pub fn covered_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    pub fn covered_fraction(&self) -> f64 {
        self.covered_count() as f64 / (self.width * self.height) as f64
    }

    /// Boolean coverage mask, row-major.
    pub fn mask(&self) -> Vec<bool> {
        self.depth.iter().map(|d| d.is_finite()).collect()
    }
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    depth: f64,
}

struct Setup {
    v: [ScreenVertex; 3],
    normals: [Vec3; 3],
    positions: [Vec3; 3],
    area: f64,
    perspective: bool,
    min_y: usize,
    max_y: usize,
    min_x: usize,
    max_x: usize,
}

fn check_resolution(width: usize, height: usize) -> Result<()> {
    if width < MIN_RESOLUTION || height < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution {width}x{height} below minimum {MIN_RESOLUTION}x{MIN_RESOLUTION}"
        )));
    }
    Ok(())
}

/// Projects a world point; `None` when it lies behind the near plane of a
/// perspective camera.
fn project(camera: &CameraPose, p: Vec3, width: usize, height: usize) -> Option<ScreenVertex> {
    let rel = p - camera.translation;
    let depth = -rel.z;
    let (nx, ny) = match camera.projection {
        Projection::WeakPerspective { scale } => (scale * rel.x, scale * rel.y),
        Projection::Perspective { yfov } => {
            if depth <= NEAR {
                return None;
            }
            let f = 1.0 / (0.5 * yfov).tan();
            (f * rel.x / depth, f * rel.y / depth)
        }
    };
    let half = 0.5 * width.min(height) as f64;
    Some(ScreenVertex {
        x: 0.5 * width as f64 + nx * half,
        y: 0.5 * height as f64 - ny * half,
        depth,
    })
}

#[inline]
fn edge(a: ScreenVertex, b: ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

#[inline]
fn owns_edge(a: ScreenVertex, b: ScreenVertex) -> bool {
    let dy = b.y - a.y;
    dy > 0.0 || (dy == 0.0 && b.x - a.x < 0.0)
}

fn setup_triangles(mesh: &HandMesh, camera: &CameraPose, width: usize, height: usize) -> Vec<Setup> {
    let normals = mesh.vertex_normals();
    let projected: Vec<Option<ScreenVertex>> = mesh
        .vertices
        .iter()
        .map(|&v| project(camera, v, width, height))
        .collect();
    let perspective = matches!(camera.projection, Projection::Perspective { .. });

    let mut out = Vec::with_capacity(mesh.faces.len());
    for f in &mesh.faces {
        let idx = f.map(|i| i as usize);
        let (Some(a), Some(b), Some(c)) = (projected[idx[0]], projected[idx[1]], projected[idx[2]]) else {
            continue;
        };
        let mut v = [a, b, c];
        let mut order = idx;
        let mut area = edge(v[0], v[1], v[2].x, v[2].y);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            v.swap(1, 2);
            order.swap(1, 2);
            area = -area;
        }
        let min_xf = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_xf = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_yf = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_yf = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        // pixel i is a candidate when its center i + 0.5 lies in [min, max]
        let lo = |m: f64| (m - 0.5).ceil().max(0.0);
        let hi = |m: f64, n: usize| (m - 0.5).floor().min(n as f64 - 1.0);
        let (x0, x1) = (lo(min_xf), hi(max_xf, width));
        let (y0, y1) = (lo(min_yf), hi(max_yf, height));
        if x0 > x1 || y0 > y1 {
            continue;
        }
        out.push(Setup {
            v,
            normals: order.map(|i| normals[i]),
            positions: order.map(|i| mesh.vertices[i]),
            area,
            perspective,
            min_x: x0 as usize,
            max_x: x1 as usize,
            min_y: y0 as usize,
            max_y: y1 as usize,
        });
    }
    out
}

struct BandMut<'a> {
    row0: usize,
    depth: &'a mut [f64],
    normal: &'a mut [Vec3],
    position: &'a mut [Vec3],
}

fn raster_band(band: &mut BandMut<'_>, tris: &[Setup], width: usize, camera: &CameraPose) {
    let rows = band.depth.len() / width;
    let (row0, row1) = (band.row0, band.row0 + rows);
    for t in tris {
        if t.max_y < row0 || t.min_y >= row1 {
            continue;
        }
        let [a, b, c] = t.v;
        let (own0, own1, own2) = (owns_edge(b, c), owns_edge(c, a), owns_edge(a, b));
        for y in t.min_y.max(row0)..=t.max_y.min(row1 - 1) {
            let py = y as f64 + 0.5;
            for x in t.min_x..=t.max_x {
                let px = x as f64 + 0.5;
                let w0 = edge(b, c, px, py);
                let w1 = edge(c, a, px, py);
                let w2 = edge(a, b, px, py);
                let inside = |w: f64, own: bool| w > 0.0 || (w == 0.0 && own);
                if !(inside(w0, own0) && inside(w1, own1) && inside(w2, own2)) {
                    continue;
                }
                let mut bary = [w0 / t.area, w1 / t.area, w2 / t.area];
                let depth = if t.perspective {
                    let inv: f64 = (0..3).map(|k| bary[k] / t.v[k].depth).sum();
                    let z = 1.0 / inv;
                    for (b, v) in bary.iter_mut().zip(&t.v) {
                        *b *= z / v.depth;
                    }
                    z
                } else {
                    // anchored form keeps constant-depth triangles exact
                    a.depth + bary[1] * (b.depth - a.depth) + bary[2] * (c.depth - a.depth)
                };
                let i = (y - row0) * width + x;
                if depth < band.depth[i] {
                    band.depth[i] = depth;
                    let pos = t.positions[0] * bary[0] + t.positions[1] * bary[1] + t.positions[2] * bary[2];
                    let mut n = (t.normals[0] * bary[0] + t.normals[1] * bary[1] + t.normals[2] * bary[2]).normalized();
                    let to_camera = match camera.projection {
                        Projection::WeakPerspective { .. } => Vec3::new(0.0, 0.0, 1.0),
                        Projection::Perspective { .. } => camera.translation - pos,
                    };
                    if n.dot(to_camera) < 0.0 {
                        n = -n;
                    }
                    band.normal[i] = n;
                    band.position[i] = pos;
                }
            }
        }
    }
}

/// Geometry pass: depth, camera-facing normals and world positions.
/// An empty mesh yields an all-background framebuffer.
pub fn rasterize(mesh: &HandMesh, camera: &CameraPose, (width, height): (usize, usize)) -> Result<Framebuffer> {
    check_resolution(width, height)?;
    mesh.validate(false)?;
    camera.validate()?;
    let mut fb = Framebuffer::new(width, height);
    let tris = setup_triangles(mesh, camera, width, height);
    if tris.is_empty() {
        return Ok(fb);
    }
    let chunk = BAND_ROWS * width;
    let mut bands: Vec<BandMut<'_>> = fb
        .depth
        .chunks_mut(chunk)
        .zip(fb.normal.chunks_mut(chunk))
        .zip(fb.position.chunks_mut(chunk))
        .enumerate()
        .map(|(bi, ((depth, normal), position))| BandMut {
            row0: bi * BAND_ROWS,
            depth,
            normal,
            position,
        })
        .collect();
    bands
        .par_iter_mut()
        .for_each(|band| raster_band(band, &tris, width, camera));
    Ok(fb)
}

/// Lambertian shading of a geometry pass. Background stays black.
pub fn shade(geom: &Framebuffer, lights: &LightRig, material: &Material) -> Result<Framebuffer> {
    lights.validate()?;
    material.validate()?;
    let albedo = material.albedo();
    let mut out = geom.clone();
    out.rgb.par_chunks_mut(3).enumerate().for_each(|(i, px)| {
        if !geom.depth[i].is_finite() {
            px.copy_from_slice(&BACKGROUND);
            return;
        }
        let incident = lights.incident(geom.normal[i], geom.position[i]);
        for c in 0..3 {
            px[c] = to_byte(albedo[c] * incident[c]);
        }
    });
    Ok(out)
}

/// Clamps to `[0, 1]` and quantizes with round-half-away-from-zero.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
