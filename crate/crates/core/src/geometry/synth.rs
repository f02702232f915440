//! Procedural test geometry: a capsule-and-ellipsoid hand with per-finger curl,
//! plus a few primitives used by rendering tests.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HandMesh, Handedness, Vec3};
use crate::error::{Error, Result};

const PALM_RADII: Vec3 = Vec3::new(0.045, 0.05, 0.011);
const FINGER_BASE_Y: f64 = 0.04;

/// Per-finger layout: base x, segment lengths, radius, max flex per joint (deg).
struct FingerSpec {
    base: Vec3,
    dir: Vec3,
    flex_axis: Vec3,
    lengths: [f64; 3],
    radius: f64,
    max_flex: [f64; 3],
}

fn finger_specs() -> [FingerSpec; 5] {
    let z = Vec3::new(0.0, 0.0, 1.0);
    let up = |spread: f64| Vec3::new(spread.sin(), spread.cos(), 0.0);
    let thumb_dir = Vec3::new(0.6, 0.8, 0.0);
    let toward_palm = Vec3::new(-0.8, 0.6, 0.0);
    [
        FingerSpec {
            base: Vec3::new(0.035, -0.02, 0.0),
            dir: thumb_dir,
            flex_axis: (z + toward_palm * 0.5).normalized(),
            lengths: [0.032, 0.028, 0.024],
            radius: 0.009,
            max_flex: [50.0, 70.0, 70.0],
        },
        FingerSpec {
            base: Vec3::new(0.028, FINGER_BASE_Y, 0.0),
            dir: up(0.08),
            flex_axis: z,
            lengths: [0.038, 0.024, 0.019],
            radius: 0.0085,
            max_flex: [90.0, 100.0, 70.0],
        },
        FingerSpec {
            base: Vec3::new(0.009, FINGER_BASE_Y, 0.0),
            dir: up(0.0),
            flex_axis: z,
            lengths: [0.042, 0.026, 0.021],
            radius: 0.0085,
            max_flex: [90.0, 100.0, 70.0],
        },
        FingerSpec {
            base: Vec3::new(-0.01, FINGER_BASE_Y, 0.0),
            dir: up(-0.06),
            flex_axis: z,
            lengths: [0.039, 0.025, 0.02],
            radius: 0.008,
            max_flex: [90.0, 100.0, 70.0],
        },
        FingerSpec {
            base: Vec3::new(-0.029, FINGER_BASE_Y, 0.0),
            dir: up(-0.14),
            flex_axis: z,
            lengths: [0.03, 0.019, 0.017],
            radius: 0.0075,
            max_flex: [90.0, 100.0, 70.0],
        },
    ]
}

/// A generated hand together with the analytic placement it was built from.
#[derive(Debug, Clone)]
pub struct SynthHand {
    pub mesh: HandMesh,
    /// Palm center in the output (centered) frame.
    pub palm_center: Vec3,
    /// Fingertip keypoints, thumb first.
    pub fingertips: [Vec3; 5],
}

/// Builds a right hand from five finger curls in `[0, 1]` (thumb first).
/// Palm faces +Z, fingers extend along +Y; the result is centered on its
/// vertex centroid.
pub fn synth_hand(seed: u64, curls: &[f64]) -> Result<HandMesh> {
    Ok(synth_hand_detailed(seed, curls, Handedness::Right)?.mesh)
}

pub fn synth_hand_detailed(seed: u64, curls: &[f64], handedness: Handedness) -> Result<SynthHand> {
    if curls.len() != 5 {
        return Err(Error::InvalidArgument(format!(
            "expected 5 finger curls, got {}",
            curls.len()
        )));
    }
    if let Some(c) = curls.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("curl {c} outside [0, 1]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = ellipsoid(PALM_RADII, 3);
    let mut keypoints = vec![Vec3::new(0.0, -PALM_RADII.y, 0.0)];
    let mut tips = [Vec3::ZERO; 5];

    for (fi, (spec, &curl)) in finger_specs().iter().zip(curls).enumerate() {
        let scale = rng.random_range(0.95..1.05);
        let spread = rng.random_range(-0.03..0.03);
        let (s, c) = f64::sin_cos(spread);
        // spread rotates the finger direction within the palm plane
        let dir = Vec3::new(spec.dir.x * c - spec.dir.y * s, spec.dir.x * s + spec.dir.y * c, 0.0);
        let axis = if fi == 0 {
            spec.flex_axis
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };

        let mut joint = spec.base;
        keypoints.push(joint);
        let mut angle = 0.0;
        for (seg, (&len, &max_deg)) in spec.lengths.iter().zip(&spec.max_flex).enumerate() {
            angle += curl * max_deg.to_radians();
            let d = dir * angle.cos() + axis * angle.sin();
            let next = joint + d * (len * scale);
            let radius = spec.radius * (1.0 - 0.08 * seg as f64);
            mesh.append(&capsule_mesh(joint, next, radius, 10, 3));
            keypoints.push(next);
            joint = next;
        }
        tips[fi] = joint;
    }

    mesh.keypoints = Some(keypoints);
    let offset = -mesh.centroid();
    let mut mesh = mesh.translated(offset);
    let mut palm_center = offset;
    let mut tips = tips.map(|t| t + offset);
    if handedness == Handedness::Left {
        mesh = mesh.mirrored_x();
        palm_center.x = -palm_center.x;
        for t in &mut tips {
            t.x = -t.x;
        }
    }
    mesh.handedness = handedness;
    mesh.validate(false)?;
    Ok(SynthHand {
        mesh,
        palm_center,
        fingertips: tips,
    })
}

/// Icosphere scaled to the given semi-axes.
pub fn ellipsoid(radii: Vec3, subdivisions: usize) -> HandMesh {
    let mut m = icosphere(1.0, subdivisions);
    for v in &mut m.vertices {
        *v = Vec3::new(v.x * radii.x, v.y * radii.y, v.z * radii.z);
    }
    m
}

/// Closed axis-aligned box with outward CCW faces.
pub fn box_mesh(center: Vec3, half: Vec3) -> HandMesh {
    let idx =
        |sx: i32, sy: i32, sz: i32| -> u32 { (((sx + 1) / 2) | (((sy + 1) / 2) << 1) | (((sz + 1) / 2) << 2)) as u32 };
    let mut vertices = vec![Vec3::ZERO; 8];
    for sx in [-1, 1] {
        for sy in [-1, 1] {
            for sz in [-1, 1] {
                vertices[idx(sx, sy, sz) as usize] =
                    center + Vec3::new(sx as f64 * half.x, sy as f64 * half.y, sz as f64 * half.z);
            }
        }
    }
    // (normal axis, s axis, t axis) with s x t = n
    let frames: [([i32; 3], [i32; 3], [i32; 3]); 6] = [
        ([1, 0, 0], [0, 1, 0], [0, 0, 1]),
        ([-1, 0, 0], [0, 0, 1], [0, 1, 0]),
        ([0, 1, 0], [0, 0, 1], [1, 0, 0]),
        ([0, -1, 0], [1, 0, 0], [0, 0, 1]),
        ([0, 0, 1], [1, 0, 0], [0, 1, 0]),
        ([0, 0, -1], [0, 1, 0], [1, 0, 0]),
    ];
    let mut faces = Vec::with_capacity(12);
    for (n, s, t) in frames {
        let corner = |a: i32, b: i32| {
            let c: [i32; 3] = std::array::from_fn(|k| if n[k] != 0 { n[k] } else { a * s[k] + b * t[k] });
            idx(c[0], c[1], c[2])
        };
        let (c00, c10, c11, c01) = (corner(-1, -1), corner(1, -1), corner(1, 1), corner(-1, 1));
        faces.push([c00, c10, c11]);
        faces.push([c00, c11, c01]);
    }
    HandMesh {
        vertices,
        faces,
        handedness: Handedness::Right,
        keypoints: None,
    }
}

/// Closed capsule between `a` and `b`.
pub fn capsule_mesh(a: Vec3, b: Vec3, radius: f64, segments: usize, hemi_rings: usize) -> HandMesh {
    let axis = b - a;
    let d = if axis.norm() > 0.0 {
        axis.normalized()
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let helper = if d.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let u = helper.cross(d).normalized();
    let v = d.cross(u);

    let mut vertices = vec![a - d * radius];
    // polar angle measured from +d; rings run from the `a` cap to the `b` cap
    let mut rings = Vec::with_capacity(2 * hemi_rings);
    for i in 1..=hemi_rings {
        rings.push((a, PI - 0.5 * PI * i as f64 / hemi_rings as f64));
    }
    for i in 0..hemi_rings {
        rings.push((b, 0.5 * PI - 0.5 * PI * i as f64 / hemi_rings as f64));
    }
    for &(center, theta) in &rings {
        let c = center + d * (radius * theta.cos());
        let rho = radius * theta.sin();
        for j in 0..segments {
            let phi = TAU * j as f64 / segments as f64;
            vertices.push(c + (u * phi.cos() + v * phi.sin()) * rho);
        }
    }
    vertices.push(b + d * radius);

    let ring = |k: usize, j: usize| (1 + k * segments + j % segments) as u32;
    let top = (vertices.len() - 1) as u32;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, ring(0, j + 1), ring(0, j)]);
    }
    for k in 0..rings.len() - 1 {
        for j in 0..segments {
            let (a0, b0, c0, d0) = (ring(k, j), ring(k, j + 1), ring(k + 1, j + 1), ring(k + 1, j));
            faces.push([a0, b0, c0]);
            faces.push([a0, c0, d0]);
        }
    }
    let last = rings.len() - 1;
    for j in 0..segments {
        faces.push([ring(last, j), ring(last, j + 1), top]);
    }
    HandMesh {
        vertices,
        faces,
        handedness: Handedness::Right,
        keypoints: None,
    }
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(radius: f64, subdivisions: usize) -> HandMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = ((verts[a as usize] + verts[b as usize]) * 0.5).normalized();
                verts.push(m);
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    HandMesh {
        vertices: vertices.into_iter().map(|v| v * radius).collect(),
        faces,
        handedness: Handedness::Right,
        keypoints: None,
    }
}

/// Axis-aligned rectangle in the plane `z = depth`, facing +Z.
pub fn quad_xy(x0: f64, y0: f64, x1: f64, y1: f64, depth: f64) -> HandMesh {
    HandMesh {
        vertices: vec![
            Vec3::new(x0, y0, depth),
            Vec3::new(x1, y0, depth),
            Vec3::new(x1, y1, depth),
            Vec3::new(x0, y1, depth),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
        handedness: Handedness::Right,
        keypoints: None,
    }
}
