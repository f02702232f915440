//! Per-modality encoders: convolutional rendering/depth encoders with CBAM,
//! dual-stream fusion of the selected view pair, a bounding-box MLP and a
//! deterministic label-to-vector text stub.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::nn::{grid_to_tokens, tokens_to_grid, Conv2d, Linear};
use crate::tensor::{Bound, ParamStore, Tensor, Var};
use crate::viewselect::BBox;

pub const GRID: usize = 16;
pub const TEXT_DIM: usize = 768;

/// HaGRID gesture classes.
pub const GESTURE_LABELS: [&str; 18] = [
    "call",
    "dislike",
    "fist",
    "four",
    "like",
    "mute",
    "ok",
    "one",
    "palm",
    "peace",
    "peace_inverted",
    "rock",
    "stop",
    "stop_inverted",
    "three",
    "three2",
    "two_up",
    "two_up_inverted",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub out_channels: usize,
    pub grid: usize,
    /// Widths of the four backbone stages (strides 2, 2, 1, 1).
    pub backbone_channels: [usize; 4],
    pub cbam_reduction: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            out_channels: 64,
            grid: GRID,
            backbone_channels: [16, 32, 32, 32],
            cbam_reduction: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid != GRID {
            return Err(Error::Validation(format!(
                "encoder grid must be {GRID}, got {}",
                self.grid
            )));
        }
        if self.out_channels < 8 {
            return Err(Error::Validation(format!(
                "out_channels must be >= 8, got {}",
                self.out_channels
            )));
        }
        if self.backbone_channels.contains(&0) || self.cbam_reduction == 0 {
            return Err(Error::Validation(
                "backbone widths and CBAM reduction must be positive".into(),
            ));
        }
        if self.backbone_channels[3] < 2 {
            return Err(Error::Validation("CBAM needs at least 2 channels".into()));
        }
        Ok(())
    }
}

/// Channel then spatial attention gating.
#[derive(Debug, Clone, Copy)]
pub struct Cbam {
    pub fc1: Linear,
    pub fc2: Linear,
    pub spatial: Conv2d,
    pub channels: usize,
}

/// Gate values from one CBAM pass: `channel[c,1,1]`, `spatial[1,h,w]`.
#[derive(Debug, Clone)]
pub struct CbamTrace<'t> {
    pub channel: Var<'t>,
    pub spatial: Var<'t>,
}

impl Cbam {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        channels: usize,
        reduction: usize,
    ) -> Self {
        let hidden = (channels / reduction).max(1);
        Self {
            fc1: Linear::new(store, rng, &format!("{name}.fc1"), channels, hidden),
            fc2: Linear::new(store, rng, &format!("{name}.fc2"), hidden, channels),
            spatial: Conv2d::new(store, rng, &format!("{name}.spatial"), 2, 1, 7, 1, 3),
            channels,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        Ok(self.forward_traced(p, x)?.0)
    }

    pub fn forward_traced<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<(Var<'t>, CbamTrace<'t>)> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.channels || s[0] < 2 {
            return Err(Error::shape("cbam", &s, &[self.channels, 0, 0]));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let flat = x.reshape(&[c, h * w])?;
        let mlp = |v: Var<'t>| -> Result<Var<'t>> {
            let row = v.transpose()?;
            self.fc2.forward(p, self.fc1.forward(p, row)?.relu()?)
        };
        let pooled = mlp(flat.mean_axis(1)?)?.add(mlp(flat.max_axis(1)?)?)?;
        let channel = pooled.sigmoid()?.reshape(&[c, 1, 1])?;
        let x = x.mul(channel)?;

        let stats = Var::concat(&[x.mean_axis(0)?, x.max_axis(0)?], 0)?;
        let spatial = self.spatial.forward(p, stats)?.sigmoid()?;
        Ok((x.mul(spatial)?, CbamTrace { channel, spatial }))
    }
}

/// Strided convolutional backbone, CBAM and a 1×1 channel projection onto
/// the 16×16 grid. Serves both the RGB renders and the depth map.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub stages: [Conv2d; 4],
    pub cbam: Cbam,
    pub reduce: Conv2d,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        cfg: &EncoderConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let widths = cfg.backbone_channels;
        let strides = [2, 2, 1, 1];
        let mut prev = in_channels;
        let stages = std::array::from_fn(|i| {
            let conv = Conv2d::new(
                store,
                rng,
                &format!("{name}.stage{i}"),
                prev,
                widths[i],
                3,
                strides[i],
                1,
            );
            prev = widths[i];
            conv
        });
        let cbam = Cbam::new(store, rng, &format!("{name}.cbam"), widths[3], cfg.cbam_reduction);
        let reduce = Conv2d::new(
            store,
            rng,
            &format!("{name}.reduce"),
            widths[3],
            cfg.out_channels,
            1,
            1,
            0,
        );
        Ok(Self {
            stages,
            cbam,
            reduce,
            in_channels,
            out_channels: cfg.out_channels,
        })
    }

    /// `image[c,h,w]` with `h, w >= 64` and divisible by 4.
    pub fn forward<'t>(&self, p: &Bound<'t>, image: Var<'t>) -> Result<Var<'t>> {
        let s = image.shape();
        if s.len() != 3 || s[0] != self.in_channels {
            return Err(Error::shape("encoder input", &s, &[self.in_channels, 0, 0]));
        }
        let (h, w) = (s[1], s[2]);
        if h < 64 || w < 64 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "encoder input must be at least 64x64 and divisible by 4, got {h}x{w}"
            )));
        }
        let mut x = image;
        for stage in &self.stages {
            x = stage.forward(p, x)?.relu()?;
        }
        if x.shape()[1..] != [GRID, GRID] {
            x = x.resize_bilinear(GRID, GRID)?;
        }
        let x = self.cbam.forward(p, x)?;
        self.reduce.forward(p, x)
    }
}

/// Fuses the two encoded views of the selected pair with a per-site
/// FC-ReLU-FC stack plus the mean of both streams as residual.
#[derive(Debug, Clone, Copy)]
pub struct DualStream {
    pub fc1: Linear,
    pub fc2: Linear,
    pub channels: usize,
}

impl DualStream {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, channels: usize) -> Self {
        Self {
            fc1: Linear::new(store, rng, &format!("{name}.fc1"), 2 * channels, channels),
            fc2: Linear::new(store, rng, &format!("{name}.fc2"), channels, channels),
            channels,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb || sa.len() != 3 || sa[0] != self.channels {
            return Err(Error::shape("dual_stream", &sa, &sb));
        }
        let tokens = Var::concat(&[grid_to_tokens(a)?, grid_to_tokens(b)?], 1)?;
        let mixed = self.fc2.forward(p, self.fc1.forward(p, tokens)?.relu()?)?;
        let residual = a.add(b)?.scale(0.5)?;
        tokens_to_grid(mixed, sa[1], sa[2])?.add(residual)
    }
}

/// MLP over normalized box corners `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, Copy)]
pub struct BBoxEncoder {
    pub l1: Linear,
    pub l2: Linear,
    pub out_dim: usize,
}

pub const BBOX_HIDDEN: usize = 64;

impl BBoxEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, out_dim: usize) -> Self {
        Self {
            l1: Linear::new(store, rng, &format!("{name}.l1"), 4, BBOX_HIDDEN),
            l2: Linear::new(store, rng, &format!("{name}.l2"), BBOX_HIDDEN, out_dim),
            out_dim,
        }
    }

    /// Returns a `[1, out_dim]` row.
    pub fn forward<'t>(&self, p: &Bound<'t>, bbox: &BBox) -> Result<Var<'t>> {
        bbox.validate()?;
        let tape = p.var(self.l1.w).tape();
        let corners = tape.constant(Tensor::new([1, 4], bbox.to_array().to_vec())?);
        self.forward_var(p, corners)
    }

    /// Differentiable in the corners; `corners[1,4]`.
    pub fn forward_var<'t>(&self, p: &Bound<'t>, corners: Var<'t>) -> Result<Var<'t>> {
        let h = self.l1.forward(p, corners)?.relu()?;
        self.l2.forward(p, h)
    }
}

/// Fixed pseudorandom unit vector derived from a hash of `label`.
pub fn text_encoder_stub(label: &str) -> Result<Tensor> {
    if label.is_empty() {
        return Err(Error::InvalidArgument("text label is empty".into()));
    }
    let digest = Sha256::digest(label.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let v: Vec<f64> = (0..TEXT_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Tensor::new([TEXT_DIM], v.into_iter().map(|x| x / norm).collect())
}

/// Loads an externally computed text embedding (MUFT file of 768 values).
pub fn load_text_features(path: &std::path::Path) -> Result<Tensor> {
    let t = crate::tensor::io::load(path)?;
    if t.numel() != TEXT_DIM {
        return Err(Error::shape("text features", t.shape(), &[TEXT_DIM]));
    }
    t.reshape(&[TEXT_DIM])
}

/// Modality features entering box fusion. Spatial features are `[C,16,16]`,
/// vector features `[1, D]`.
#[derive(Debug, Clone, Default)]
pub struct FeatureBundle<'t> {
    pub mesh: Option<Var<'t>>,
    pub depth: Option<Var<'t>>,
    pub text: Option<Var<'t>>,
    pub bbox: Option<Var<'t>>,
}
