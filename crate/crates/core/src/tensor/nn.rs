//! Parameterized layers built from tape ops.

use rand::Rng;

use super::{Bound, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

/// `x[n, in] · w[in, out] + b[out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.init_uniform(format!("{name}.w"), &[in_dim, out_dim], in_dim, rng);
        let b = store.init_uniform(format!("{name}.b"), &[out_dim], in_dim, rng);
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(p.var(self.w))?.add(p.var(self.b))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Square `k×k` kernel; `pad` keeps the size at stride 1 for odd `k`
    /// when set to `k / 2`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_ch * k * k;
        let w = store.init_uniform(format!("{name}.w"), &[out_ch, in_ch, k, k], fan_in, rng);
        let b = store.init_uniform(format!("{name}.b"), &[out_ch], fan_in, rng);
        Self { w, b, stride, pad }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.conv2d(p.var(self.w), Some(p.var(self.b)), self.stride, self.pad)
    }
}

/// `[c, h, w]` feature map to `[h·w, c]` tokens.
pub fn grid_to_tokens(x: Var<'_>) -> Result<Var<'_>> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::shape("grid_to_tokens", &s, &[0, 0, 0]));
    }
    x.reshape(&[s[0], s[1] * s[2]])?.transpose()
}

/// Inverse of [`grid_to_tokens`].
pub fn tokens_to_grid(t: Var<'_>, h: usize, w: usize) -> Result<Var<'_>> {
    let s = t.shape();
    if s.len() != 2 || s[0] != h * w {
        return Err(Error::shape("tokens_to_grid", &s, &[h * w, 0]));
    }
    t.transpose()?.reshape(&[s[1], h, w])
}

/// Scaled dot-product attention. `q[m,d]`, `k[n,d]`, `v[n,e]`; returns the
/// attended values `[m,e]` and the row-stochastic weights `[m,n]`.
pub fn attention<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let d = q.shape()[1];
    let weights = q.matmul(k.transpose()?)?.scale(1.0 / (d as f64).sqrt())?.softmax(1)?;
    Ok((weights.matmul(v)?, weights))
}

/// Single-head attention block with learned query/key/value/output maps.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBlock {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl AttentionBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize) -> Self {
        Self {
            q: Linear::new(store, rng, &format!("{name}.q"), dim, dim),
            k: Linear::new(store, rng, &format!("{name}.k"), dim, dim),
            v: Linear::new(store, rng, &format!("{name}.v"), dim, dim),
            o: Linear::new(store, rng, &format!("{name}.o"), dim, dim),
        }
    }

    /// `queries[m,d]` attend over `context[n,d]`; returns output and weights.
    pub fn forward<'t>(&self, p: &Bound<'t>, queries: Var<'t>, context: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let (out, weights) = attention(
            self.q.forward(p, queries)?,
            self.k.forward(p, context)?,
            self.v.forward(p, context)?,
        )?;
        Ok((self.o.forward(p, out)?, weights))
    }
}
