use mufen::encoders::{BBoxEncoder, Cbam, GRID};
use mufen::fusion::{BBoxFusion, MmUnet, OUTPUT_SIZE};
use mufen::tensor::{ParamStore, Tape, Tensor};
use mufen::viewselect::BBox;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn softmax_rows(name: &str, w: &Tensor) -> Check {
    let cols = *w.shape().last().unwrap();
    for (i, row) in w.data().chunks(cols).enumerate() {
        let sum: f64 = row.iter().sum();
        ensure((sum - 1.0).abs() < 1e-6 && row.iter().all(|v| *v >= 0.0), || {
            format!("{name} row {i} sums to {sum}")
        })?;
    }
    Ok(())
}

fn open_unit(name: &str, t: &Tensor) -> Check {
    let bad = t.data().iter().find(|&&v| !(v > 0.0 && v < 1.0));
    ensure(bad.is_none(), || format!("{name} value {bad:?} outside (0,1)"))
}

/// `C×16×16 → 3×225×225` in (0,1), with every attention row normalized.
pub fn unet(c: usize) -> Check {
    let mut store = ParamStore::new();
    let unet = MmUnet::new(&mut store, &mut rng(40 + c as u64), "unet", c).map_err(|e| e.to_string())?;
    let tape = Tape::new();
    let p = store.bind(&tape);
    let grid = tape.constant(Tensor::randn(&[c, GRID, GRID], &mut rng(41)));
    let (rgb, trace) = unet.forward_traced(&p, grid).map_err(|e| e.to_string())?;
    ensure(rgb.shape() == [3, OUTPUT_SIZE, OUTPUT_SIZE], || {
        format!("unet output {:?}", rgb.shape())
    })?;
    open_unit("unet output", &rgb.value())?;
    softmax_rows("down attention", &trace.down.value())?;
    softmax_rows("bottleneck attention", &trace.bottleneck.value())?;
    softmax_rows("cross attention", &trace.cross.value())?;
    ensure(trace.down.shape() == [64, 64], || {
        format!("down attention {:?}", trace.down.shape())
    })?;
    ensure(trace.cross.shape() == [GRID * GRID, GRID * GRID], || {
        format!("cross attention {:?}", trace.cross.shape())
    })
}

/// Box-fusion attention rows sum to one; fusion and CBAM gates lie in (0,1).
pub fn gates() -> Check {
    let mut store = ParamStore::new();
    let benc = BBoxEncoder::new(&mut store, &mut rng(50), "benc", 8);
    let fuse = BBoxFusion::new(&mut store, &mut rng(51), "fuse", 16, 8);
    let cbam = Cbam::new(&mut store, &mut rng(52), "cbam", 16, 4);
    let tape = Tape::new();
    let p = store.bind(&tape);
    let grid = tape.constant(Tensor::randn(&[16, GRID, GRID], &mut rng(53)).map(|v| 4.0 * v));
    let bbox = BBox::new(0.1, 0.1, 0.5, 0.8).unwrap();
    let feat = benc.forward(&p, &bbox).map_err(|e| e.to_string())?;
    let (out, trace) = fuse.forward_grid(&p, grid, feat).map_err(|e| e.to_string())?;
    ensure(out.shape() == [16, GRID, GRID], || {
        format!("fusion output {:?}", out.shape())
    })?;
    softmax_rows("fusion attention", &trace.attention.value())?;
    open_unit("fusion gate", &trace.gate.value())?;
    let (_, ct) = cbam.forward_traced(&p, grid).map_err(|e| e.to_string())?;
    open_unit("channel gate", &ct.channel.value())?;
    open_unit("spatial gate", &ct.spatial.value())
}
