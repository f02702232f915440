//! Raw numeric kernels on flat row-major buffers.

use rayon::prelude::*;

const PAR_THRESHOLD: usize = 1 << 16;

/// `a[m,k] · b[k,n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let row = |(i, o): (usize, &mut [f64])| {
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (oj, bj) in o.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *oj += aip * bj;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `a[m,k] · b[n,k]ᵀ`.
pub fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let row = |(i, o): (usize, &mut [f64])| {
        let ai = &a[i * k..(i + 1) * k];
        for (j, oj) in o.iter_mut().enumerate() {
            *oj = ai.iter().zip(&b[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `a[k,m]ᵀ · b[k,n]`.
pub fn matmul_at(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let row = |(i, o): (usize, &mut [f64])| {
        for p in 0..k {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            for (oj, bj) in o.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *oj += api * bj;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> Option<(usize, usize)> {
        let hp = self.h + 2 * self.pad;
        let wp = self.w + 2 * self.pad;
        if hp < self.kh || wp < self.kw || self.stride == 0 {
            return None;
        }
        Some(((hp - self.kh) / self.stride + 1, (wp - self.kw) / self.stride + 1))
    }

    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let v = (o * self.stride + k) as isize - self.pad as isize;
        (v >= 0 && (v as usize) < limit).then_some(v as usize)
    }
}

/// Unfolds `x[c,h,w]` into columns `[c·kh·kw, ho·wo]`.
pub fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ho, wo) = g.out_hw().expect("valid conv geometry");
    let ck = g.c * g.kh * g.kw;
    let mut cols = vec![0.0; ck * ho * wo];
    let fill = |(r, row): (usize, &mut [f64])| {
        let c = r / (g.kh * g.kw);
        let ki = (r / g.kw) % g.kh;
        let kj = r % g.kw;
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for oy in 0..ho {
            let Some(sy) = g.src(oy, ki, g.h) else { continue };
            for ox in 0..wo {
                if let Some(sx) = g.src(ox, kj, g.w) {
                    row[oy * wo + ox] = plane[sy * g.w + sx];
                }
            }
        }
    };
    if cols.len() >= PAR_THRESHOLD {
        cols.par_chunks_mut(ho * wo).enumerate().for_each(fill);
    } else {
        cols.chunks_mut(ho * wo).enumerate().for_each(fill);
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto `[c,h,w]`.
pub fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ho, wo) = g.out_hw().expect("valid conv geometry");
    let mut x = vec![0.0; g.c * g.h * g.w];
    let kk = g.kh * g.kw;
    let fill = |(c, plane): (usize, &mut [f64])| {
        for r in 0..kk {
            let (ki, kj) = (r / g.kw, r % g.kw);
            let row = &cols[(c * kk + r) * ho * wo..(c * kk + r + 1) * ho * wo];
            for oy in 0..ho {
                let Some(sy) = g.src(oy, ki, g.h) else { continue };
                for ox in 0..wo {
                    if let Some(sx) = g.src(ox, kj, g.w) {
                        plane[sy * g.w + sx] += row[oy * wo + ox];
                    }
                }
            }
        }
    };
    if x.len() * kk >= PAR_THRESHOLD {
        x.par_chunks_mut(g.h * g.w).enumerate().for_each(fill);
    } else {
        x.chunks_mut(g.h * g.w).enumerate().for_each(fill);
    }
    x
}

/// Source taps for one output coordinate of a half-pixel bilinear resize.
#[derive(Debug, Clone, Copy)]
pub struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub frac: f64,
}

pub fn bilinear_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f64,
            }
        })
        .collect()
}

pub fn resize_forward(x: &[f64], c: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
    let ty = bilinear_taps(h, ho);
    let tx = bilinear_taps(w, wo);
    let mut out = vec![0.0; c * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(ch, o)| {
        let p = &x[ch * h * w..(ch + 1) * h * w];
        for (oy, y) in ty.iter().enumerate() {
            for (ox, xt) in tx.iter().enumerate() {
                let top = p[y.i0 * w + xt.i0] * (1.0 - xt.frac) + p[y.i0 * w + xt.i1] * xt.frac;
                let bot = p[y.i1 * w + xt.i0] * (1.0 - xt.frac) + p[y.i1 * w + xt.i1] * xt.frac;
                o[oy * wo + ox] = top * (1.0 - y.frac) + bot * y.frac;
            }
        }
    });
    out
}

pub fn resize_backward(g: &[f64], c: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
    let ty = bilinear_taps(h, ho);
    let tx = bilinear_taps(w, wo);
    let mut dx = vec![0.0; c * h * w];
    dx.par_chunks_mut(h * w).enumerate().for_each(|(ch, d)| {
        let gp = &g[ch * ho * wo..(ch + 1) * ho * wo];
        for (oy, y) in ty.iter().enumerate() {
            for (ox, xt) in tx.iter().enumerate() {
                let v = gp[oy * wo + ox];
                let (a, b) = ((1.0 - y.frac) * v, y.frac * v);
                d[y.i0 * w + xt.i0] += a * (1.0 - xt.frac);
                d[y.i0 * w + xt.i1] += a * xt.frac;
                d[y.i1 * w + xt.i0] += b * (1.0 - xt.frac);
                d[y.i1 * w + xt.i1] += b * xt.frac;
            }
        }
    });
    dx
}

/// Window origins of a valid (unpadded) pooling pass.
pub fn pool_out(h: usize, w: usize, k: usize, stride: usize) -> Option<(usize, usize)> {
    (k > 0 && stride > 0 && h >= k && w >= k).then(|| ((h - k) / stride + 1, (w - k) / stride + 1))
}
