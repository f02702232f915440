//! Box-guided gated fusion, multi-modal concatenation and the multi-modal
//! UNet decoder, plus the assembled network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{BBoxEncoder, ConvEncoder, DualStream, EncoderConfig, FeatureBundle, GRID, TEXT_DIM};
use crate::error::{Error, Result};
use crate::tensor::nn::{attention, grid_to_tokens, tokens_to_grid, AttentionBlock, Conv2d, Linear};
use crate::tensor::{Bound, ParamStore, Tensor, Var};
use crate::viewselect::BBox;

pub const OUTPUT_SIZE: usize = 225;
const DOWN: usize = GRID / 2;

/// Box features query one modality's tokens; the retrieved context is gated
/// per token, added back and projected.
#[derive(Debug, Clone, Copy)]
pub struct BBoxFusion {
    pub transform: Linear,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub gate: Linear,
    pub proj: Linear,
    pub dim: usize,
    pub bbox_dim: usize,
}

/// Intermediate values of one box-fusion pass.
#[derive(Debug, Clone, Copy)]
pub struct FusionTrace<'t> {
    /// Attention of the box query over tokens, `[1, N]`.
    pub attention: Var<'t>,
    /// Per-token gate, `[N, D]`.
    pub gate: Var<'t>,
}

impl BBoxFusion {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize, bbox_dim: usize) -> Self {
        let gate = Linear::new(store, rng, &format!("{name}.gate"), 2 * dim, dim);
        store.set(gate.b, Tensor::zeros(&[dim])).expect("gate bias shape");
        Self {
            transform: Linear::new(store, rng, &format!("{name}.transform"), bbox_dim, dim),
            wq: Linear::new(store, rng, &format!("{name}.q"), dim, dim),
            wk: Linear::new(store, rng, &format!("{name}.k"), dim, dim),
            wv: Linear::new(store, rng, &format!("{name}.v"), dim, dim),
            gate,
            proj: Linear::new(store, rng, &format!("{name}.proj"), dim, dim),
            dim,
            bbox_dim,
        }
    }

    /// `tokens[N, D]`, `bbox_feat[1, Db]` → `[N, D]`.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        tokens: Var<'t>,
        bbox_feat: Var<'t>,
    ) -> Result<(Var<'t>, FusionTrace<'t>)> {
        let (st, sb) = (tokens.shape(), bbox_feat.shape());
        if st.len() != 2 || st[1] != self.dim {
            return Err(Error::shape("bbox_fuse tokens", &st, &[0, self.dim]));
        }
        if sb != [1, self.bbox_dim] {
            return Err(Error::shape("bbox_fuse box", &sb, &[1, self.bbox_dim]));
        }
        let n = st[0];
        let query = self.wq.forward(p, self.transform.forward(p, bbox_feat)?)?;
        let (context, weights) = attention(query, self.wk.forward(p, tokens)?, self.wv.forward(p, tokens)?)?;
        let context = context.broadcast_to(&[n, self.dim])?;
        let gate = self.gate.forward(p, Var::concat(&[tokens, context], 1)?)?.sigmoid()?;
        let out = self.proj.forward(p, tokens.add(gate.mul(context)?)?)?;
        Ok((
            out,
            FusionTrace {
                attention: weights,
                gate,
            },
        ))
    }

    /// Box fusion over a `[D,16,16]` feature grid, keeping the layout.
    pub fn forward_grid<'t>(
        &self,
        p: &Bound<'t>,
        grid: Var<'t>,
        bbox_feat: Var<'t>,
    ) -> Result<(Var<'t>, FusionTrace<'t>)> {
        let s = grid.shape();
        if s.len() != 3 {
            return Err(Error::shape("bbox_fuse grid", &s, &[self.dim, GRID, GRID]));
        }
        let (out, trace) = self.forward(p, grid_to_tokens(grid)?, bbox_feat)?;
        Ok((tokens_to_grid(out, s[1], s[2])?, trace))
    }
}

/// Per-site MLP over the concatenated modality widths.
#[derive(Debug, Clone, Copy)]
pub struct MmConcat {
    pub l1: Linear,
    pub l2: Linear,
    pub channels: usize,
    pub text_dim: usize,
    pub bbox_dim: usize,
}

impl MmConcat {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        channels: usize,
        text_dim: usize,
        bbox_dim: usize,
    ) -> Self {
        let width = 2 * channels + text_dim + bbox_dim;
        Self {
            l1: Linear::new(store, rng, &format!("{name}.l1"), width, channels),
            l2: Linear::new(store, rng, &format!("{name}.l2"), channels, channels),
            channels,
            text_dim,
            bbox_dim,
        }
    }

    /// Vector modalities are broadcast to every grid site before the MLP.
    pub fn forward<'t>(&self, p: &Bound<'t>, bundle: &FeatureBundle<'t>) -> Result<Var<'t>> {
        let mesh = bundle.mesh.ok_or(Error::MissingModality("mesh"))?;
        let depth = bundle.depth.ok_or(Error::MissingModality("depth"))?;
        let text = bundle.text.ok_or(Error::MissingModality("text"))?;
        let bbox = bundle.bbox.ok_or(Error::MissingModality("bbox"))?;
        let grid = [self.channels, GRID, GRID];
        for (op, v) in [("mm_concat mesh", mesh), ("mm_concat depth", depth)] {
            if v.shape() != grid {
                return Err(Error::shape(op, &v.shape(), &grid));
            }
        }
        let n = GRID * GRID;
        let tokens = Var::concat(
            &[
                grid_to_tokens(mesh)?,
                grid_to_tokens(depth)?,
                text.broadcast_to(&[n, self.text_dim])?,
                bbox.broadcast_to(&[n, self.bbox_dim])?,
            ],
            1,
        )?;
        let fused = self.l2.forward(p, self.l1.forward(p, tokens)?.relu()?)?;
        tokens_to_grid(fused, GRID, GRID)
    }
}

/// Attention weights recorded during one decoder pass.
#[derive(Debug, Clone, Copy)]
pub struct UnetTrace<'t> {
    pub down: Var<'t>,
    pub bottleneck: Var<'t>,
    pub cross: Var<'t>,
}

/// Decoder from the unified 16×16 grid to a 225×225 RGB image.
#[derive(Debug, Clone, Copy)]
pub struct MmUnet {
    pub down: Conv2d,
    pub down_attn: AttentionBlock,
    pub mid_attn: AttentionBlock,
    pub up: Conv2d,
    pub cross_attn: AttentionBlock,
    pub head: Conv2d,
    pub channels: usize,
}

impl MmUnet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, channels: usize) -> Result<Self> {
        if channels < 8 {
            return Err(Error::InvalidArgument(format!(
                "decoder width must be >= 8, got {channels}"
            )));
        }
        let c = channels;
        Ok(Self {
            down: Conv2d::new(store, rng, &format!("{name}.down"), c, c, 3, 2, 1),
            down_attn: AttentionBlock::new(store, rng, &format!("{name}.down_attn"), c),
            mid_attn: AttentionBlock::new(store, rng, &format!("{name}.mid_attn"), c),
            up: Conv2d::new(store, rng, &format!("{name}.up"), c, c, 3, 1, 1),
            cross_attn: AttentionBlock::new(store, rng, &format!("{name}.cross_attn"), c),
            head: Conv2d::new(store, rng, &format!("{name}.head"), c, 3, 3, 1, 1),
            channels,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, unified: Var<'t>) -> Result<Var<'t>> {
        Ok(self.forward_traced(p, unified)?.0)
    }

    /// `unified[C,16,16]` → `rgb[3,225,225]` in `(0, 1)`.
    pub fn forward_traced<'t>(&self, p: &Bound<'t>, unified: Var<'t>) -> Result<(Var<'t>, UnetTrace<'t>)> {
        let want = [self.channels, GRID, GRID];
        if unified.shape() != want {
            return Err(Error::shape("mm_unet", &unified.shape(), &want));
        }
        let skip = unified;

        let d = self.down.forward(p, skip)?.relu()?;
        let t = grid_to_tokens(d)?;
        let (a, w_down) = self.down_attn.forward(p, t, t)?;
        let t = t.add(a)?;
        let (a, w_mid) = self.mid_attn.forward(p, t, t)?;
        let t = t.add(a)?;

        let u = tokens_to_grid(t, DOWN, DOWN)?.resize_bilinear(GRID, GRID)?;
        let u = grid_to_tokens(self.up.forward(p, u)?.relu()?)?;
        let (a, w_cross) = self.cross_attn.forward(p, u, grid_to_tokens(skip)?)?;
        let u = tokens_to_grid(u.add(a)?, GRID, GRID)?;

        let rgb = self
            .head
            .forward(p, u.resize_bilinear(OUTPUT_SIZE, OUTPUT_SIZE)?)?
            .sigmoid()?;
        Ok((
            rgb,
            UnetTrace {
                down: w_down,
                bottleneck: w_mid,
                cross: w_cross,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MufenConfig {
    pub encoder: EncoderConfig,
    pub bbox_dim: usize,
    pub text_dim: usize,
}

impl Default for MufenConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            bbox_dim: 64,
            text_dim: TEXT_DIM,
        }
    }
}

impl MufenConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.bbox_dim == 0 || self.text_dim == 0 {
            return Err(Error::Validation("feature widths must be positive".into()));
        }
        Ok(())
    }
}

/// Conditioning inputs for one hand.
#[derive(Debug, Clone)]
pub struct MufenInput {
    /// The two renders of the selected pair, `[3,H,W]` each.
    pub view_a: Tensor,
    pub view_b: Tensor,
    /// Front depth map, `[1,H,W]`.
    pub depth: Tensor,
    /// Text embedding of `text_dim` values.
    pub text: Tensor,
    pub bbox: BBox,
}

/// Full conditioning network: encoders, box fusion of every modality,
/// concatenation MLP and the decoder.
#[derive(Debug, Clone)]
pub struct Mufen {
    pub cfg: MufenConfig,
    pub render_a: ConvEncoder,
    pub render_b: ConvEncoder,
    pub dual: DualStream,
    pub depth: ConvEncoder,
    pub bbox: BBoxEncoder,
    pub fuse_mesh: BBoxFusion,
    pub fuse_depth: BBoxFusion,
    pub fuse_text: BBoxFusion,
    pub fuse_bbox: BBoxFusion,
    pub concat: MmConcat,
    pub unet: MmUnet,
}

/// Outputs of a full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct MufenOutput<'t> {
    /// Unified `[C,16,16]` conditioning grid.
    pub unified: Var<'t>,
    /// Reconstructed hand image `[3,225,225]`.
    pub rgb: Var<'t>,
}

impl Mufen {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, cfg: MufenConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.encoder.out_channels;
        let (db, dt) = (cfg.bbox_dim, cfg.text_dim);
        Ok(Self {
            render_a: ConvEncoder::new(store, rng, "render_a", 3, &cfg.encoder)?,
            render_b: ConvEncoder::new(store, rng, "render_b", 3, &cfg.encoder)?,
            dual: DualStream::new(store, rng, "dual", c),
            depth: ConvEncoder::new(store, rng, "depth", 1, &cfg.encoder)?,
            bbox: BBoxEncoder::new(store, rng, "bbox", db),
            fuse_mesh: BBoxFusion::new(store, rng, "fuse_mesh", c, db),
            fuse_depth: BBoxFusion::new(store, rng, "fuse_depth", c, db),
            fuse_text: BBoxFusion::new(store, rng, "fuse_text", dt, db),
            fuse_bbox: BBoxFusion::new(store, rng, "fuse_bbox", db, db),
            concat: MmConcat::new(store, rng, "concat", c, dt, db),
            unet: MmUnet::new(store, rng, "unet", c)?,
            cfg,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, input: &MufenInput) -> Result<MufenOutput<'t>> {
        let tape = p.var(self.bbox.l1.w).tape();
        if input.text.numel() != self.cfg.text_dim {
            return Err(Error::shape("text features", input.text.shape(), &[self.cfg.text_dim]));
        }
        let a = self.render_a.forward(p, tape.constant(input.view_a.clone()))?;
        let b = self.render_b.forward(p, tape.constant(input.view_b.clone()))?;
        let mesh = self.dual.forward(p, a, b)?;
        let depth = self.depth.forward(p, tape.constant(input.depth.clone()))?;
        let text = tape.constant(input.text.reshape(&[1, self.cfg.text_dim])?);
        let bbox = self.bbox.forward(p, &input.bbox)?;

        let bundle = FeatureBundle {
            mesh: Some(self.fuse_mesh.forward_grid(p, mesh, bbox)?.0),
            depth: Some(self.fuse_depth.forward_grid(p, depth, bbox)?.0),
            text: Some(self.fuse_text.forward(p, text, bbox)?.0),
            bbox: Some(self.fuse_bbox.forward(p, bbox, bbox)?.0),
        };
        let unified = self.concat.forward(p, &bundle)?;
        let rgb = self.unet.forward(p, unified)?;
        Ok(MufenOutput { unified, rgb })
    }
}
