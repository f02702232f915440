//! Hand-region cropping, distribution distances between feature sets, and
//! the paired t-test.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::viewselect::BBox;

pub const CROP_SIZE: usize = 299;

/// Top-left corner `(x, y)` of the crop window centered on the box, shifted
/// the least amount needed to lie inside the frame.
pub fn crop_window(width: usize, height: usize, bbox: &BBox) -> Result<(usize, usize)> {
    if width < CROP_SIZE || height < CROP_SIZE {
        return Err(Error::TooSmall {
            width,
            height,
            min: CROP_SIZE,
        });
    }
    bbox.validate()?;
    let (cx, cy) = bbox.center();
    let place = |c: f64, extent: usize| {
        let start = (c * extent as f64 - CROP_SIZE as f64 / 2.0).floor();
        start.clamp(0.0, (extent - CROP_SIZE) as f64) as usize
    };
    Ok((place(cx, width), place(cy, height)))
}

/// `299×299×3` crop of an interleaved RGB image.
pub fn crop_hand(rgb: &[u8], width: usize, height: usize, bbox: &BBox) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::InvalidArgument(format!(
            "{} bytes for a {width}x{height} RGB image",
            rgb.len()
        )));
    }
    let (x0, y0) = crop_window(width, height, bbox)?;
    let mut out = Vec::with_capacity(CROP_SIZE * CROP_SIZE * 3);
    for y in y0..y0 + CROP_SIZE {
        let row = (y * width + x0) * 3;
        out.extend_from_slice(&rgb[row..row + CROP_SIZE * 3]);
    }
    Ok(out)
}

/// `n` feature vectors of dimension `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    d: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || data.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "{} values for {n} rows of dimension {d}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature set contains non-finite values".into()));
        }
        Ok(Self { d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// From a rank-2 `[n, d]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[n, d] => Self::new(n, d, t.data().to_vec()),
            s => Err(Error::InvalidArgument(format!(
                "feature tensors must be rank 2, got shape {s:?}"
            ))),
        }
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_fn(self.d, |j, _| (0..self.n()).map(|i| self.row(i)[j]).sum::<f64>() / n)
    }

    /// Unbiased (`n - 1`) covariance.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "covariance needs at least 2 rows, got {n}"
            )));
        }
        let mu = self.mean();
        let centered = DMatrix::from_fn(n, self.d, |i, j| self.row(i)[j] - mu[j]);
        Ok(centered.transpose() * &centered / (n - 1) as f64)
    }
}

/// Eigenvalues below `-tol` are an error; those in `[-tol, 0)` become 0.
fn clamped_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut e = SymmetricEigen::new(sym);
    let scale = e.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-8 * scale;
    for v in e.eigenvalues.iter_mut() {
        if *v < -tol {
            return Err(Error::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok(e)
}

fn sqrt_psd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = clamped_eigen(m)?;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    Ok(&e.eigenvectors * d * e.eigenvectors.transpose())
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½)` over Gaussian fits.
///
/// The trace of the square root is evaluated as that of the symmetric
/// `(Σa^½ Σb Σa^½)^½`, which has the same eigenvalues.
pub fn frechet_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.d != b.d {
        return Err(Error::shape("frechet_distance", &[a.d], &[b.d]));
    }
    let (sa, sb) = (a.covariance()?, b.covariance()?);
    let diff = a.mean() - b.mean();
    let root_a = sqrt_psd(sa.clone())?;
    let inner = &root_a * &sb * &root_a;
    let tr_sqrt: f64 = clamped_eigen(inner)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let fd = diff.norm_squared() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    Ok(fd.max(0.0))
}

/// Subset sampling for [`kid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KidOptions {
    pub subsets: usize,
    pub subset_size: usize,
    pub seed: u64,
}

impl KidOptions {
    /// 100 subsets of `min(1000, n)` rows.
    pub fn for_sizes(na: usize, nb: usize, seed: u64) -> Self {
        Self {
            subsets: 100,
            subset_size: na.min(nb).min(1000),
            seed,
        }
    }
}

fn poly_kernel(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / x.len() as f64 + 1.0).powi(3)
}

/// Unbiased MMD² between two equal-size samples, every term a U-statistic
/// over distinct index pairs.
pub fn mmd2_unbiased(x: &[&[f64]], y: &[&[f64]]) -> Result<f64> {
    let m = x.len();
    if m < 2 || y.len() != m {
        return Err(Error::InvalidArgument(format!(
            "MMD needs two samples of equal size >= 2, got {m} and {}",
            y.len()
        )));
    }
    let (mut kxx, mut kyy, mut kxy) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                kxx += poly_kernel(x[i], x[j]);
                kyy += poly_kernel(y[i], y[j]);
                kxy += poly_kernel(x[i], y[j]);
            }
        }
    }
    Ok((kxx + kyy - 2.0 * kxy) / (m * (m - 1)) as f64)
}

/// Rows ranked by a seeded hash of their contents, so the draw is the same
/// for any row order.
fn content_subset(set: &FeatureSet, seed: u64, subset: u64, size: usize) -> Vec<&[f64]> {
    let mut keyed: Vec<([u8; 32], usize)> = (0..set.n())
        .map(|i| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(subset.to_le_bytes());
            for v in set.row(i) {
                h.update(v.to_bits().to_le_bytes());
            }
            (h.finalize().into(), i)
        })
        .collect();
    keyed.sort_unstable();
    keyed[..size].iter().map(|&(_, i)| set.row(i)).collect()
}

/// Kernel distance with `k(x, y) = (xᵀy / d + 1)³`; mean and sample
/// standard deviation of the unbiased MMD² over seeded subsets.
pub fn kid(a: &FeatureSet, b: &FeatureSet, opts: KidOptions) -> Result<(f64, f64)> {
    if a.d != b.d {
        return Err(Error::shape("kid", &[a.d], &[b.d]));
    }
    if opts.subsets == 0 || opts.subset_size < 2 || opts.subset_size > a.n().min(b.n()) {
        return Err(Error::InvalidArgument(format!(
            "subset size {} must be in 2..={} with at least one subset",
            opts.subset_size,
            a.n().min(b.n())
        )));
    }
    let values = (0..opts.subsets as u64)
        .map(|s| {
            let x = content_subset(a, opts.seed, s, opts.subset_size);
            let y = content_subset(b, opts.seed, s, opts.subset_size);
            mmd2_unbiased(&x, &y)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std))
}

/// Per-gesture metric values for two methods; lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureScores {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
    /// Entries where `a` is strictly lower than `b`.
    pub better_count: usize,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_ttest(scores: &GestureScores) -> Result<TTest> {
    let (a, b) = (&scores.a, &scores.b);
    let n = a.len();
    if n != b.len() || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs two aligned lists of length >= 2, got {n} and {}",
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (var / n as f64).sqrt();
    let dof = n - 1;
    Ok(TTest {
        t,
        p: student_t_two_sided(t, dof as f64)?,
        dof,
        better_count: a.iter().zip(b).filter(|(x, y)| x < y).count(),
    })
}

/// `P(|T| > |t|)` for Student's t with `nu` degrees of freedom.
pub fn student_t_two_sided(t: f64, nu: f64) -> Result<f64> {
    let x = nu / (nu + t * t);
    regularized_beta(x, nu / 2.0, 0.5)
}

/// Lanczos approximation (g = 7, nine terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by modified Lentz evaluation of
/// the continued fraction, using the symmetry relation where it converges
/// faster.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || a <= 0.0 || b <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "incomplete beta outside its domain: x={x}, a={a}, b={b}"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(x, a, b)? / a)
    } else {
        Ok(1.0 - front * beta_cf(1.0 - x, b, a)? / b)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    const TOL: f64 = 1e-12;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;
    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOL {
            return Ok(h);
        }
    }
    Err(Error::Numeric("incomplete beta continued fraction".into()))
}
