//! Forward diffusion, the denoising and reconstruction losses, and a
//! desk-scale training loop over toy latents.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{TrainSample, LATENT_CHANNELS, LATENT_SIZE};
use crate::encoders::{EncoderConfig, TEXT_DIM};
use crate::error::{Error, Result};
use crate::fusion::{Mufen, MufenConfig, OUTPUT_SIZE};
use crate::seed::substream;
use crate::tensor::nn::Conv2d;
use crate::tensor::{Adam, AdamConfig, Bound, ParamStore, Tape, Tensor, Var};

/// Cumulative signal fractions `alpha_bar[t]` for `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine schedule with offset `s = 0.008`; per-step betas are capped at
    /// 0.999 so the last step keeps a sliver of signal.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        const S: f64 = 0.008;
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + S) / (1.0 + S) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for t in 1..=steps {
            let beta = (1.0 - f(t) / f(t - 1)).clamp(0.0, 0.999);
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar)
    }

    /// Values must lie in `(0, 1]` and decrease strictly.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.is_empty() {
            return Err(Error::Validation("empty noise schedule".into()));
        }
        if alpha_bar.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::Validation("alpha_bar values must lie in (0, 1]".into()));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Validation("alpha_bar must decrease strictly".into()));
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("step {t} outside schedule of {}", self.steps())))
    }

    /// `z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps`.
    pub fn q_sample(&self, z0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        q_sample_with_alpha_bar(z0, self.alpha_bar(t)?, eps)
    }
}

/// The forward draw for an explicit `alpha_bar` in `[0, 1]`.
pub fn q_sample_with_alpha_bar(z0: &Tensor, alpha_bar: f64, eps: &Tensor) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidArgument(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    if z0.shape() != eps.shape() {
        return Err(Error::shape("q_sample", z0.shape(), eps.shape()));
    }
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let data = z0.data().iter().zip(eps.data()).map(|(z, e)| a * z + b * e).collect();
    Tensor::new(z0.shape(), data)
}

/// Noise prediction network `(z_t, t, c) -> eps_hat`.
pub trait EpsModel {
    fn predict<'t>(&self, p: &Bound<'t>, z_t: Var<'t>, t: usize, c: Option<Var<'t>>) -> Result<Var<'t>>;
}

/// Step index and noise for one forward draw.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Tensor,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(schedule: &NoiseSchedule, shape: &[usize], rng: &mut R) -> Self {
        Self {
            t: rng.random_range(0..schedule.steps()),
            eps: Tensor::randn(shape, rng),
        }
    }
}

/// Mean squared error between the drawn noise and the model's prediction
/// from the noised latent.
pub fn denoise_loss<'t, M: EpsModel + ?Sized>(
    model: &M,
    p: &Bound<'t>,
    schedule: &NoiseSchedule,
    z0: &Tensor,
    draw: &NoiseDraw,
    c: Option<Var<'t>>,
) -> Result<Var<'t>> {
    let tape = p.tape();
    let z_t = tape.constant(schedule.q_sample(z0, draw.t, &draw.eps)?);
    let pred = model.predict(p, z_t, draw.t, c)?;
    let eps = tape.constant(draw.eps.clone());
    if pred.shape() != eps.shape() {
        return Err(Error::shape("denoise_loss", &pred.shape(), &eps.shape()));
    }
    pred.mse_loss(eps)
}

/// Mean absolute error between the target and reconstructed hand regions,
/// both `[3,225,225]`.
pub fn rehand_loss<'t>(gt: Var<'t>, recon: Var<'t>) -> Result<Var<'t>> {
    let want = [3, OUTPUT_SIZE, OUTPUT_SIZE];
    for s in [gt.shape(), recon.shape()] {
        if s != want {
            return Err(Error::shape("rehand_loss", &s, &want));
        }
    }
    recon.l1_loss(gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.1 }
    }
}

impl LossWeights {
    pub fn new(lambda: f64) -> Result<Self> {
        let w = Self { lambda };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `ld + lambda * lr`.
pub fn total_loss(ld: f64, lr: f64, w: LossWeights) -> f64 {
    ld + w.lambda * lr
}

pub fn total_loss_var<'t>(ld: Var<'t>, lr: Var<'t>, w: LossWeights) -> Result<Var<'t>> {
    ld.add(lr.scale(w.lambda)?)
}

/// Two-layer conditional conv denoiser over `[4,16,16]` latents.
///
/// The raw network output `h` is combined with the input as
/// `c_skip * z_t + c_out * h`, where `c_skip` is the least-squares
/// prediction of the noise from `z_t` alone and `c_out` scales `h` as a
/// clean-latent estimate. Both depend only on `alpha_bar[t]` and the
/// assumed data scale `sigma_data`.
#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub cond_channels: usize,
    pub sigma_data: f64,
    schedule: NoiseSchedule,
}

impl ToyDenoiser {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cond_channels: usize,
        hidden: usize,
        schedule: NoiseSchedule,
        sigma_data: f64,
    ) -> Result<Self> {
        if hidden == 0 || !(sigma_data.is_finite() && sigma_data > 0.0) {
            return Err(Error::Validation(
                "denoiser needs positive hidden width and sigma_data".into(),
            ));
        }
        let c_in = LATENT_CHANNELS + cond_channels + 1;
        Ok(Self {
            conv1: Conv2d::new(store, rng, &format!("{name}.conv1"), c_in, hidden, 3, 1, 1),
            conv2: Conv2d::new(store, rng, &format!("{name}.conv2"), hidden, LATENT_CHANNELS, 3, 1, 1),
            cond_channels,
            sigma_data,
            schedule,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// `(c_skip, c_out)` at step `t`.
    pub fn preconditioning(&self, t: usize) -> Result<(f64, f64)> {
        let ab = self.schedule.alpha_bar(t)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        let d = ab * self.sigma_data.powi(2) + (1.0 - ab);
        Ok((b / d, -a * b / d))
    }
}

impl EpsModel for ToyDenoiser {
    fn predict<'t>(&self, p: &Bound<'t>, z_t: Var<'t>, t: usize, c: Option<Var<'t>>) -> Result<Var<'t>> {
        let (c_skip, c_out) = self.preconditioning(t)?;
        let tape = z_t.tape();
        let grid = [LATENT_SIZE, LATENT_SIZE];
        let expect = [LATENT_CHANNELS, grid[0], grid[1]];
        if z_t.shape() != expect {
            return Err(Error::shape("toy denoiser latent", &z_t.shape(), &expect));
        }
        let cond = match c {
            Some(c) => c,
            None => tape.constant(Tensor::zeros(&[self.cond_channels, grid[0], grid[1]])),
        };
        let tmap = tape.constant(Tensor::full(
            &[1, grid[0], grid[1]],
            t as f64 / self.schedule.steps() as f64,
        ));
        let x = Var::concat(&[z_t, cond, tmap], 0)?;
        let h = self.conv2.forward(p, self.conv1.forward(p, x)?.relu()?)?;
        z_t.scale(c_skip)?.add(h.scale(c_out)?)
    }
}

/// Network widths for the toy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    /// Channels of the fused conditioning grid.
    pub channels: usize,
    pub backbone_channels: [usize; 4],
    pub cbam_reduction: usize,
    pub bbox_dim: usize,
    pub denoiser_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            channels: 16,
            backbone_channels: [8, 16, 16, 16],
            cbam_reduction: 4,
            bbox_dim: 16,
            denoiser_hidden: 32,
        }
    }
}

impl ModelDims {
    pub fn mufen_config(&self) -> MufenConfig {
        MufenConfig {
            encoder: EncoderConfig {
                out_channels: self.channels,
                backbone_channels: self.backbone_channels,
                cbam_reduction: self.cbam_reduction,
                ..EncoderConfig::default()
            },
            bbox_dim: self.bbox_dim,
            text_dim: TEXT_DIM,
        }
    }
}

/// Toy training run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub samples: usize,
    pub batch_size: usize,
    /// Square render size fed to the encoders; a multiple of 16, at least 64.
    pub image_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub timesteps: usize,
    pub sigma_data: f64,
    pub dims: ModelDims,
    /// Where the CLI writes the loss curve and checkpoint.
    pub output_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 300,
            samples: 64,
            batch_size: 4,
            image_size: 64,
            lr: 1e-3,
            lambda: 0.1,
            timesteps: 100,
            sigma_data: 0.5,
            dims: ModelDims::default(),
            output_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.samples == 0 || self.batch_size == 0 {
            return bad("samples and batch_size must be positive".into());
        }
        if self.image_size < 64 || !self.image_size.is_multiple_of(LATENT_SIZE) {
            return bad(format!(
                "image_size must be a multiple of {LATENT_SIZE} and at least 64, got {}",
                self.image_size
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        LossWeights::new(self.lambda)?;
        if self.timesteps < 2 {
            return bad("timesteps must be at least 2".into());
        }
        if !(self.sigma_data.is_finite() && self.sigma_data > 0.0) {
            return bad("sigma_data must be positive".into());
        }
        if self.dims.channels < 8 || self.dims.denoiser_hidden == 0 || self.dims.bbox_dim == 0 {
            return bad("channels must be at least 8 and widths positive".into());
        }
        self.dims.mufen_config().validate()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// Fusion network plus denoiser sharing one parameter store.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub mufen: Mufen,
    pub denoiser: ToyDenoiser,
}

impl ToyModel {
    pub fn new(store: &mut ParamStore, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(cfg.seed, "init", &[]);
        let mufen = Mufen::new(store, &mut rng, cfg.dims.mufen_config())?;
        let denoiser = ToyDenoiser::new(
            store,
            &mut rng,
            "denoiser",
            cfg.dims.channels,
            cfg.dims.denoiser_hidden,
            NoiseSchedule::cosine(cfg.timesteps)?,
            cfg.sigma_data,
        )?;
        Ok(Self { mufen, denoiser })
    }

    /// `(l_denoise, l_rehand)` for one sample.
    pub fn losses<'t>(&self, p: &Bound<'t>, sample: &TrainSample, draw: &NoiseDraw) -> Result<(Var<'t>, Var<'t>)> {
        let out = self.mufen.forward(p, &sample.input)?;
        let ld = denoise_loss(
            &self.denoiser,
            p,
            self.denoiser.schedule(),
            &sample.z0,
            draw,
            Some(out.unified),
        )?;
        let lr = rehand_loss(p.tape().constant(sample.gt.clone()), out.rgb)?;
        Ok((ld, lr))
    }
}

/// Batch-mean losses at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub l_denoise: f64,
    pub l_rehand: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<LossRecord>,
    /// Combined loss over every sample with fixed draws, before and after.
    pub initial_eval: LossRecord,
    pub final_eval: LossRecord,
    pub store: ParamStore,
    pub model: ToyModel,
}

impl TrainOutcome {
    pub fn eval_ratio(&self) -> f64 {
        self.final_eval.total / self.initial_eval.total
    }
}

fn latent_shape() -> [usize; 3] {
    [LATENT_CHANNELS, LATENT_SIZE, LATENT_SIZE]
}

fn mean_losses(
    model: &ToyModel,
    store: &ParamStore,
    batch: &[(&TrainSample, NoiseDraw)],
    w: LossWeights,
    step: usize,
    with_grads: bool,
) -> Result<(LossRecord, Option<Vec<Tensor>>)> {
    let tape = Tape::new();
    let p = store.bind(&tape);
    let inv = 1.0 / batch.len() as f64;
    let mut acc: Option<(Var<'_>, Var<'_>)> = None;
    for (sample, draw) in batch {
        let (ld, lr) = model.losses(&p, sample, draw)?;
        acc = Some(match acc {
            None => (ld, lr),
            Some((a, b)) => (a.add(ld)?, b.add(lr)?),
        });
    }
    let (ld, lr) = acc.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (ld, lr) = (ld.scale(inv)?, lr.scale(inv)?);
    let total = total_loss_var(ld, lr, w)?;
    let record = LossRecord {
        step,
        l_denoise: ld.item()?,
        l_rehand: lr.item()?,
        total: total.item()?,
    };
    if !record.total.is_finite() {
        return Err(Error::Diverged { step });
    }
    let grads = if with_grads {
        Some(p.grads(&tape.backward(total)?))
    } else {
        None
    };
    Ok((record, grads))
}

/// Combined loss over all samples with draws fixed by the seed.
pub fn evaluate(
    model: &ToyModel,
    store: &ParamStore,
    samples: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<LossRecord> {
    let schedule = model.denoiser.schedule();
    let batch: Vec<_> = samples
        .iter()
        .map(|s| {
            let mut rng = substream(cfg.seed, "eval", &[s.index]);
            (s, NoiseDraw::sample(schedule, &latent_shape(), &mut rng))
        })
        .collect();
    let w = LossWeights::new(cfg.lambda)?;
    Ok(mean_losses(model, store, &batch, w, 0, false)?.0)
}

/// Adam on the combined loss. Batches walk a per-epoch shuffle of the
/// samples; every draw comes from a substream keyed by sample and step, so
/// a seed fixes the whole curve.
pub fn train_toy(cfg: &TrainConfig, samples: &[TrainSample]) -> Result<TrainOutcome> {
    train_toy_with(cfg, samples, |_| {})
}

/// [`train_toy`] with a callback after every step.
pub fn train_toy_with(
    cfg: &TrainConfig,
    samples: &[TrainSample],
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one sample".into()));
    }
    let w = LossWeights::new(cfg.lambda)?;
    let mut store = ParamStore::new();
    let model = ToyModel::new(&mut store, cfg)?;
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &store,
    );
    let initial_eval = evaluate(&model, &store, samples, cfg)?;

    let n = samples.len();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = n;
    let mut epoch = 0u64;
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size.min(n) {
            if cursor == n {
                order = (0..n).collect();
                order.shuffle(&mut substream(cfg.seed, "training-order", &[epoch]));
                epoch += 1;
                cursor = 0;
            }
            let s = &samples[order[cursor]];
            cursor += 1;
            let mut rng = substream(cfg.seed, "training", &[s.index, step as u64]);
            batch.push((
                s,
                NoiseDraw::sample(model.denoiser.schedule(), &latent_shape(), &mut rng),
            ));
        }
        let (record, grads) = mean_losses(&model, &store, &batch, w, step, true).map_err(|e| diverged_at(e, step))?;
        opt.step(&mut store, &grads.expect("gradients requested"))
            .map_err(|e| diverged_at(e, step))?;
        on_step(&record);
        curve.push(record);
    }

    let final_eval = evaluate(&model, &store, samples, cfg)?;
    Ok(TrainOutcome {
        curve,
        initial_eval,
        final_eval,
        store,
        model,
    })
}

fn diverged_at(e: Error, step: usize) -> Error {
    match e {
        Error::Numeric(_) => Error::Diverged { step },
        other => other,
    }
}

/// `step,l_denoise,l_rehand,total` with one row per step.
pub fn write_loss_csv(path: &Path, curve: &[LossRecord]) -> Result<()> {
    let mut out = String::from("step,l_denoise,l_rehand,total\n");
    for r in curve {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.l_denoise, r.l_rehand, r.total));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
