use mufen::diffusion::{denoise_loss, NoiseDraw, NoiseSchedule, ToyDenoiser};
use mufen::encoders::{BBoxEncoder, Cbam, ConvEncoder, DualStream, EncoderConfig, FeatureBundle, GRID};
use mufen::fusion::{BBoxFusion, MmConcat, MmUnet};
use mufen::tensor::gradcheck::{check, check_params, Options};
use mufen::tensor::{ParamStore, Tape, Tensor, Var};
use mufen::viewselect::BBox;
use mufen::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Cases;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, &mut rng(seed))
}

/// Values bounded away from zero, so kinks (relu, abs) sit outside the
/// finite-difference stencil.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    rand(shape, seed).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

fn op<F>(cases: &mut Cases, name: &str, inputs: &[Tensor], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    cases.push((name.to_string(), check(inputs, Options::default(), f).unwrap()));
}

fn opts(max_entries: usize) -> Options {
    Options {
        max_entries,
        ..Options::default()
    }
}

pub fn elementwise() -> Cases {
    let mut c = Vec::new();
    let a = rand(&[2, 3, 4], 1);
    let b = rand(&[3, 1], 2);
    op(&mut c, "add", &[a.clone(), b.clone()], |_, v| v[0].add(v[1]));
    op(&mut c, "sub", &[a.clone(), b.clone()], |_, v| v[1].sub(v[0]));
    op(&mut c, "mul", &[a.clone(), b.clone()], |_, v| v[0].mul(v[1]));
    op(&mut c, "scale", &[a], |_, v| v[0].scale(-2.5)?.add_scalar(1.0));
    op(&mut c, "broadcast_to", &[b], |_, v| v[0].broadcast_to(&[2, 3, 5]));
    c
}

pub fn matrix() -> Cases {
    let mut c = Vec::new();
    let a = rand(&[3, 5], 3);
    let b = rand(&[5, 4], 4);
    op(&mut c, "matmul", &[a.clone(), b], |_, v| v[0].matmul(v[1]));
    op(&mut c, "transpose", std::slice::from_ref(&a), |_, v| v[0].transpose());
    op(&mut c, "reshape", &[a], |_, v| v[0].reshape(&[15]));
    c
}

pub fn activations() -> Cases {
    let mut c = Vec::new();
    let x = away_from_zero(&[4, 6], 5);
    op(&mut c, "relu", std::slice::from_ref(&x), |_, v| v[0].relu());
    op(&mut c, "sigmoid", std::slice::from_ref(&x), |_, v| v[0].sigmoid());
    op(&mut c, "softmax0", std::slice::from_ref(&x), |_, v| v[0].softmax(0));
    op(&mut c, "softmax1", &[x], |_, v| v[0].softmax(1));
    op(&mut c, "softmax_mid", &[rand(&[2, 3, 4], 6)], |_, v| v[0].softmax(1));
    c
}

pub fn reductions() -> Cases {
    let mut c = Vec::new();
    let x = rand(&[3, 4, 5], 7);
    op(&mut c, "sum", std::slice::from_ref(&x), |_, v| v[0].sum());
    op(&mut c, "mean", std::slice::from_ref(&x), |_, v| v[0].mean());
    for axis in 0..3 {
        op(
            &mut c,
            &format!("sum_axis{axis}"),
            std::slice::from_ref(&x),
            move |_, v| v[0].sum_axis(axis),
        );
        op(
            &mut c,
            &format!("mean_axis{axis}"),
            std::slice::from_ref(&x),
            move |_, v| v[0].mean_axis(axis),
        );
        op(
            &mut c,
            &format!("max_axis{axis}"),
            std::slice::from_ref(&x),
            move |_, v| v[0].max_axis(axis),
        );
    }
    c
}

pub fn concat() -> Cases {
    let mut c = Vec::new();
    for axis in 0..3 {
        let mut sa = vec![2, 3, 4];
        let mut sb = vec![2, 3, 4];
        sa[axis] = 1;
        sb[axis] = 3;
        let inputs = [rand(&sa, 8), rand(&sb, 9)];
        op(&mut c, &format!("concat{axis}"), &inputs, move |_, v| {
            Var::concat(v, axis)
        });
    }
    c
}

pub fn convolution() -> Cases {
    let mut c = Vec::new();
    // largest shapes allowed by the contract: 4 channels, 8x8
    let x = rand(&[4, 8, 8], 10);
    for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 3, 7)] {
        let w = rand(&[4, 4, k, k], 11);
        let b = rand(&[4], 12);
        op(
            &mut c,
            &format!("conv2d k{k} s{stride} p{pad}"),
            &[x.clone(), w, b],
            move |_, v| v[0].conv2d(v[1], Some(v[2]), stride, pad),
        );
    }
    let w = rand(&[2, 4, 3, 3], 13);
    op(&mut c, "conv2d_nobias", &[x, w], |_, v| v[0].conv2d(v[1], None, 2, 0));
    c
}

pub fn pooling() -> Cases {
    let mut c = Vec::new();
    let x = rand(&[3, 8, 8], 14);
    op(&mut c, "avg_pool2d", std::slice::from_ref(&x), |_, v| {
        v[0].avg_pool2d(2, 2)
    });
    op(&mut c, "avg_pool2d_overlap", std::slice::from_ref(&x), |_, v| {
        v[0].avg_pool2d(3, 1)
    });
    op(&mut c, "max_pool2d", std::slice::from_ref(&x), |_, v| {
        v[0].max_pool2d(2, 2)
    });
    for (h, w) in [(16, 16), (5, 7), (15, 15), (8, 8)] {
        op(
            &mut c,
            &format!("resize {h}x{w}"),
            std::slice::from_ref(&x),
            move |_, v| v[0].resize_bilinear(h, w),
        );
    }
    c
}

pub fn losses() -> Cases {
    let mut c = Vec::new();
    let a = rand(&[2, 4, 4], 15);
    let d = away_from_zero(&[2, 4, 4], 16).map(|v| v * 0.1);
    let b = Tensor::new(a.shape(), a.data().iter().zip(d.data()).map(|(x, d)| x + d).collect()).unwrap();
    op(&mut c, "l1_loss", &[a.clone(), b.clone()], |_, v| v[0].l1_loss(v[1]));
    op(&mut c, "mse_loss", &[a, b], |_, v| v[0].mse_loss(v[1]));
    c
}

pub fn all_ops() -> Cases {
    [
        elementwise,
        matrix,
        activations,
        reductions,
        concat,
        convolution,
        pooling,
        losses,
    ]
    .into_iter()
    .flat_map(|f| f())
    .collect()
}

pub fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        out_channels: 8,
        backbone_channels: [4, 8, 8, 8],
        cbam_reduction: 2,
        ..EncoderConfig::default()
    }
}

pub fn cbam() -> Cases {
    let mut store = ParamStore::new();
    let cbam = Cbam::new(&mut store, &mut rng(1), "cbam", 8, 2);
    let x = rand(&[8, 6, 6], 2);
    let xc = x.clone();
    let params = check_params(&store, opts(12), |t, p| cbam.forward(p, t.constant(xc.clone()))).unwrap();
    let input = check(&[x], opts(24), |t, v| cbam.forward(&store.bind(t), v[0])).unwrap();
    vec![("cbam params".into(), params), ("cbam input".into(), input)]
}

pub fn rendering_encoder() -> Cases {
    let mut store = ParamStore::new();
    let enc = ConvEncoder::new(&mut store, &mut rng(3), "enc", 3, &small_encoder()).unwrap();
    let img = Tensor::uniform(&[3, 64, 64], 0.0, 1.0, &mut rng(4));
    // thousands of ReLU and max-pool switches: a shorter step crosses fewer
    let o = Options { h: 1e-6, ..opts(6) };
    let r = check_params(&store, o, |t, p| enc.forward(p, t.constant(img.clone()))).unwrap();
    vec![("rendering encoder".into(), r)]
}

pub fn dual_stream() -> Cases {
    let mut store = ParamStore::new();
    let dual = DualStream::new(&mut store, &mut rng(5), "dual", 8);
    let a = rand(&[8, GRID, GRID], 6);
    let b = rand(&[8, GRID, GRID], 7);
    let r = check_params(&store, opts(12), |t, p| {
        dual.forward(p, t.constant(a.clone()), t.constant(b.clone()))
    })
    .unwrap();
    vec![("dual stream".into(), r)]
}

pub fn bbox_fuse() -> Cases {
    let mut store = ParamStore::new();
    let benc = BBoxEncoder::new(&mut store, &mut rng(8), "benc", 4);
    let fuse = BBoxFusion::new(&mut store, &mut rng(9), "fuse", 8, 4);
    let tokens = rand(&[12, 8], 10);
    let bbox = BBox::new(0.2, 0.3, 0.7, 0.9).unwrap();
    let r = check_params(&store, opts(10), |t, p| {
        let feat = benc.forward(p, &bbox)?;
        Ok(fuse.forward(p, t.constant(tokens.clone()), feat)?.0)
    })
    .unwrap();
    vec![("bbox fuse".into(), r)]
}

pub fn mm_concat() -> Cases {
    let mut store = ParamStore::new();
    let cat = MmConcat::new(&mut store, &mut rng(11), "cat", 8, 6, 4);
    let mesh = rand(&[8, GRID, GRID], 12);
    let depth = rand(&[8, GRID, GRID], 13);
    let text = rand(&[1, 6], 14);
    let bbox = rand(&[1, 4], 15);
    let r = check_params(&store, opts(10), |t, p| {
        let bundle = FeatureBundle {
            mesh: Some(t.constant(mesh.clone())),
            depth: Some(t.constant(depth.clone())),
            text: Some(t.constant(text.clone())),
            bbox: Some(t.constant(bbox.clone())),
        };
        cat.forward(p, &bundle)
    })
    .unwrap();
    vec![("mm concat".into(), r)]
}

pub fn mm_unet() -> Cases {
    let mut store = ParamStore::new();
    let unet = MmUnet::new(&mut store, &mut rng(16), "unet", 8).unwrap();
    let grid = rand(&[8, GRID, GRID], 17);
    let r = check_params(&store, opts(4), |t, p| unet.forward(p, t.constant(grid.clone()))).unwrap();
    vec![("mm unet".into(), r)]
}

pub fn denoise_path() -> Cases {
    let schedule = NoiseSchedule::cosine(100).unwrap();
    let mut store = ParamStore::new();
    let den = ToyDenoiser::new(&mut store, &mut rng(18), "den", 8, 6, schedule.clone(), 0.5).unwrap();
    let z0 = Tensor::uniform(&[4, GRID, GRID], -1.0, 1.0, &mut rng(19));
    let c = rand(&[8, GRID, GRID], 20);
    let mut cases = Vec::new();
    for t in [0, 37, 99] {
        let draw = NoiseDraw {
            t,
            eps: rand(&[4, GRID, GRID], 21 + t as u64),
        };
        let params = check_params(&store, opts(12), |tape, p| {
            denoise_loss(&den, p, &schedule, &z0, &draw, Some(tape.constant(c.clone())))
        })
        .unwrap();
        let cond = check(std::slice::from_ref(&c), opts(24), |tape, v| {
            denoise_loss(&den, &store.bind(tape), &schedule, &z0, &draw, Some(v[0]))
        })
        .unwrap();
        cases.push((format!("denoiser params t={t}"), params));
        cases.push((format!("denoiser condition t={t}"), cond));
    }
    cases
}

pub fn all_networks() -> Cases {
    [
        cbam,
        rendering_encoder,
        dual_stream,
        bbox_fuse,
        mm_concat,
        mm_unet,
        denoise_path,
    ]
    .into_iter()
    .flat_map(|f| f())
    .collect()
}
