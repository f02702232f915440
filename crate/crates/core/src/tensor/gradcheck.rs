//! Central finite-difference gradient checking.
//!
//! The checked scalar is `sum(out ⊙ R)` for a fixed random `R`, so every
//! output element contributes with an independent weight.
//!
//! Each probe takes central differences at `h` and `h/2`. When the two
//! disagree by more than `smooth_tol` the probe straddles a kink (a ReLU or
//! max switching), where finite differences say nothing about the
//! derivative; it is counted in [`Report::skipped`] and another entry is
//! probed instead.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Bound, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub h: f64,
    /// Entries probed per input tensor; all of them when the tensor is smaller.
    pub max_entries: usize,
    /// Gradients smaller than this are compared on an absolute scale.
    pub floor: f64,
    /// Relative disagreement between the `h` and `h/2` estimates that marks
    /// a probe as non-smooth.
    pub smooth_tol: f64,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            h: 1e-4,
            max_entries: 24,
            floor: 1e-6,
            smooth_tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worst {
    pub input: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
    pub worst: Option<Worst>,
}

impl Report {
    /// Fraction of probes discarded as non-smooth.
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }
}

/// Compares analytic gradients of `f` with respect to every tensor in
/// `inputs` against central differences.
pub fn check<F>(inputs: &[Tensor], opts: Options, f: F) -> Result<Report>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let r = tape.constant(Tensor::randn(&out.shape(), &mut rng));
    let grads = tape.backward(out.mul(r)?.sum()?)?;
    let weights = r.value();

    let eval = |perturbed: &[Tensor]| -> Result<Tensor> {
        let t = Tape::new();
        let v: Vec<Var<'_>> = perturbed.iter().map(|x| t.constant(x.clone())).collect();
        Ok((*f(&t, &v)?.value()).clone())
    };

    let mut report = Report {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    let mut work = inputs.to_vec();
    let mut central = |i: usize, e: usize, x0: f64, h: f64| -> Result<f64> {
        work[i].data_mut()[e] = x0 + h;
        let plus = eval(&work)?;
        work[i].data_mut()[e] = x0 - h;
        let minus = eval(&work)?;
        work[i].data_mut()[e] = x0;
        Ok(plus
            .data()
            .iter()
            .zip(minus.data())
            .zip(weights.data())
            .map(|((p, m), w)| w * (p - m))
            .sum::<f64>()
            / (2.0 * h))
    };
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[i]);
        let n = input.numel();
        // every entry in random order; probing stops once enough are smooth
        let order = sample(&mut rng, n, n).into_vec();
        let mut smooth = 0;
        for e in order {
            if smooth == opts.max_entries {
                break;
            }
            let x0 = input.data()[e];
            let coarse = central(i, e, x0, opts.h)?;
            let fine = central(i, e, x0, 0.5 * opts.h)?;
            let scale = coarse.abs().max(fine.abs()).max(opts.floor);
            if (coarse - fine).abs() > opts.smooth_tol * scale {
                report.skipped += 1;
                continue;
            }
            smooth += 1;
            // Richardson extrapolation cancels the leading truncation term
            let numeric = (4.0 * fine - coarse) / 3.0;
            let a = analytic.data()[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some(Worst {
                    input: i,
                    entry: e,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}

/// [`check`] over every parameter of `store`.
pub fn check_params<F>(store: &ParamStore, opts: Options, f: F) -> Result<Report>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    let inputs: Vec<Tensor> = store.ids().map(|id| store.get(id).clone()).collect();
    check(&inputs, opts, |tape, vars| {
        f(tape, &Bound::from_vars(tape, vars.to_vec()))
    })
}
