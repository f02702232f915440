//! Gradient-check cases shared by the per-area suites and the acceptance
//! gate. Each case returns named reports; [`passes`] is the verdict.
#![allow(dead_code)]

pub mod contracts;
pub mod grad;
pub mod views;

use mufen::tensor::gradcheck::Report;

pub const TOL: f64 = 1e-4;

pub type Cases = Vec<(String, Report)>;

/// Within tolerance, with most probes landing on smooth points.
pub fn passes(r: &Report) -> bool {
    r.max_rel_err < TOL && r.checked > 0 && r.skipped_fraction() <= 0.5
}

pub fn assert_all(cases: Cases) {
    for (name, r) in cases {
        assert!(passes(&r), "{name}: {r:?}");
    }
}
