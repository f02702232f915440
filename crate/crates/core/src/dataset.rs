//! Synthetic gesture hands run through view selection, yielding prior
//! bundles for manifests and tensors for training.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::encoders::{text_encoder_stub, GESTURE_LABELS};
use crate::error::Result;
use crate::fusion::{MufenInput, OUTPUT_SIZE};
use crate::geometry::{rot_y, rot_z, synth_hand_detailed, CameraPose, HandMesh, Handedness, ViewId};
use crate::render::{render_view, DepthImage, Framebuffer};
use crate::seed::substream;
use crate::tensor::{Tape, Tensor};
use crate::viewselect::{emit_pair_renders, score_pairs, select_pair_with, PriorBundle, SelectionMode, ViewPair};

/// Finger curls (thumb first) and base in-plane roll for each gesture.
fn gesture_pose(label: &str) -> ([f64; 5], f64) {
    use std::f64::consts::PI;
    match label {
        "call" => ([0.0, 1.0, 1.0, 1.0, 0.0], 0.0),
        "dislike" => ([0.0, 1.0, 1.0, 1.0, 1.0], PI),
        "fist" => ([0.8, 1.0, 1.0, 1.0, 1.0], 0.0),
        "four" => ([1.0, 0.0, 0.0, 0.0, 0.0], 0.0),
        "like" => ([0.0, 1.0, 1.0, 1.0, 1.0], 0.0),
        "mute" => ([0.7, 0.2, 1.0, 1.0, 1.0], 0.0),
        "ok" => ([0.6, 0.7, 0.0, 0.0, 0.0], 0.0),
        "one" => ([1.0, 0.0, 1.0, 1.0, 1.0], 0.0),
        "palm" | "stop" => ([0.0; 5], 0.0),
        "stop_inverted" => ([0.0; 5], PI),
        "peace" | "two_up" => ([1.0, 0.0, 0.0, 1.0, 1.0], 0.0),
        "peace_inverted" | "two_up_inverted" => ([1.0, 0.0, 0.0, 1.0, 1.0], PI),
        "rock" => ([1.0, 0.0, 1.0, 1.0, 0.0], 0.0),
        "three" => ([1.0, 0.0, 0.0, 0.0, 1.0], 0.0),
        "three2" => ([0.0, 0.0, 0.0, 1.0, 1.0], 0.0),
        _ => ([0.5; 5], 0.0),
    }
}

/// Everything needed to regenerate one synthetic hand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandSpec {
    pub index: u64,
    pub label: &'static str,
    pub handedness: Handedness,
    pub curls: [f64; 5],
    pub geometry_seed: u64,
    /// Rotation about +Y, then about +Z (radians).
    pub yaw: f64,
    pub roll: f64,
}

impl HandSpec {
    pub fn generate(root_seed: u64, index: u64) -> Self {
        let mut rng = substream(root_seed, "geometry", &[index]);
        let label = GESTURE_LABELS[rng.random_range(0..GESTURE_LABELS.len())];
        let (base, base_roll) = gesture_pose(label);
        let curls = base.map(|c: f64| (c + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0));
        let handedness = if rng.random_bool(0.5) {
            Handedness::Right
        } else {
            Handedness::Left
        };
        Self {
            index,
            label,
            handedness,
            curls,
            geometry_seed: rng.random(),
            yaw: rng.random_range(-0.6..0.6),
            roll: base_roll + rng.random_range(-0.3..0.3),
        }
    }

    pub fn mesh(&self) -> Result<HandMesh> {
        let hand = synth_hand_detailed(self.geometry_seed, &self.curls, self.handedness)?;
        let r = rot_y(self.yaw)?.mul_mat(&rot_z(self.roll)?);
        Ok(hand.mesh.rotated(&r))
    }
}

#[derive(Debug, Clone)]
pub struct PriorSample {
    pub spec: HandSpec,
    pub mesh: HandMesh,
    pub pairs: Vec<ViewPair>,
    pub prior: PriorBundle,
}

pub fn prior_sample(
    root_seed: u64,
    index: u64,
    camera: &CameraPose,
    resolution: (usize, usize),
    mode: SelectionMode,
) -> Result<PriorSample> {
    let spec = HandSpec::generate(root_seed, index);
    let mesh = spec.mesh()?;
    let pairs = score_pairs(&mesh, camera, resolution)?;
    let pair = select_pair_with(&pairs, mode)?;
    let prior = emit_pair_renders(&mesh, camera, &pair, resolution)?;
    Ok(PriorSample {
        spec,
        mesh,
        pairs,
        prior,
    })
}

/// `[3,H,W]` in `[0, 1]` from an 8-bit framebuffer.
pub fn rgb_tensor(fb: &Framebuffer) -> Tensor {
    let (w, h) = (fb.width, fb.height);
    Tensor::from_fn(&[3, h, w], |i| {
        let (c, px) = (i / (h * w), i % (h * w));
        fb.rgb[px * 3 + c] as f64 / 255.0
    })
}

/// `[1,H,W]` depth map.
pub fn depth_tensor(d: &DepthImage) -> Tensor {
    Tensor::new([1, d.height, d.width], d.data.clone()).expect("depth image shape")
}

/// One conditioning example with its reconstruction target and clean latent.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub index: u64,
    pub label: &'static str,
    pub input: MufenInput,
    /// Front render at the decoder's output size, `[3,225,225]`.
    pub gt: Tensor,
    /// Toy latent `[4,16,16]` in `[-1, 1]`: pooled front RGB plus depth.
    pub z0: Tensor,
}

pub const LATENT_CHANNELS: usize = 4;
pub const LATENT_SIZE: usize = 16;

pub fn train_sample(root_seed: u64, index: u64, image_size: usize) -> Result<TrainSample> {
    let camera = CameraPose::default_weak();
    let s = prior_sample(
        root_seed,
        index,
        &camera,
        (image_size, image_size),
        SelectionMode::PairSum,
    )?;
    let front = render_view(&s.mesh, &camera, ViewId::Front, (image_size, image_size))?;
    let gt = render_view(&s.mesh, &camera, ViewId::Front, (OUTPUT_SIZE, OUTPUT_SIZE))?;
    let depth = depth_tensor(&s.prior.depth_front);

    let tape = Tape::new();
    let stacked = crate::tensor::Var::concat(&[tape.constant(rgb_tensor(&front)), tape.constant(depth.clone())], 0)?;
    let k = image_size / LATENT_SIZE;
    let z0 = stacked.avg_pool2d(k, k)?.value().map(|v| 2.0 * v - 1.0);

    Ok(TrainSample {
        index,
        label: s.spec.label,
        input: MufenInput {
            view_a: rgb_tensor(&s.prior.rgb_a),
            view_b: rgb_tensor(&s.prior.rgb_b),
            depth,
            text: text_encoder_stub(s.spec.label)?,
            bbox: s.prior.bbox,
        },
        gt: rgb_tensor(&gt),
        z0,
    })
}

/// `n` samples in index order; generated in parallel, identical for any
/// thread count.
pub fn train_samples(root_seed: u64, n: usize, image_size: usize) -> Result<Vec<TrainSample>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| train_sample(root_seed, i, image_size))
        .collect()
}
