//! Finite-difference checks for every differentiable tensor op, plus the
//! broadcasting rule against an index-by-index oracle.

use mufen::tensor::gradcheck::{check, Options};
use mufen::tensor::{broadcast_shape, Tape, Tensor};
use proptest::prelude::*;

mod common;
use common::{assert_all, grad, TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn elementwise_broadcasting_ops() {
    assert_all(grad::elementwise());
}

#[test]
fn matrix_ops() {
    assert_all(grad::matrix());
}

#[test]
fn activations_and_normalizers() {
    assert_all(grad::activations());
}

#[test]
fn reductions() {
    assert_all(grad::reductions());
}

#[test]
fn concat_along_each_axis() {
    assert_all(grad::concat());
}

#[test]
fn convolution() {
    assert_all(grad::convolution());
}

#[test]
fn pooling_and_resize() {
    assert_all(grad::pooling());
}

#[test]
fn losses() {
    assert_all(grad::losses());
}

#[test]
fn conv_matches_direct_loops() {
    let x = rand(&[2, 6, 7], 17);
    let w = rand(&[3, 2, 3, 3], 18);
    let b = rand(&[3], 19);
    let tape = Tape::new();
    let y = tape
        .constant(x.clone())
        .conv2d(tape.constant(w.clone()), Some(tape.constant(b.clone())), 2, 1)
        .unwrap()
        .value();
    assert_eq!(y.shape(), &[3, 3, 4]);
    for o in 0..3 {
        for oy in 0..3 {
            for ox in 0..4 {
                let mut s = b.data()[o];
                for c in 0..2 {
                    for i in 0..3 {
                        for j in 0..3 {
                            let (sy, sx) = ((oy * 2 + i) as isize - 1, (ox * 2 + j) as isize - 1);
                            if (0..6).contains(&sy) && (0..7).contains(&sx) {
                                s += w.at(&[o, c, i, j]) * x.at(&[c, sy as usize, sx as usize]);
                            }
                        }
                    }
                }
                assert!((y.at(&[o, oy, ox]) - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn resize_matches_half_pixel_formula() {
    let x = rand(&[1, 4, 5], 20);
    let tape = Tape::new();
    let y = tape.constant(x.clone()).resize_bilinear(9, 3).unwrap().value();
    let src = |o: usize, n_in: usize, n_out: usize| (((o as f64 + 0.5) * n_in as f64 / n_out as f64) - 0.5).max(0.0);
    for oy in 0..9 {
        for ox in 0..3 {
            let (fy, fx) = (src(oy, 4, 9), src(ox, 5, 3));
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(3), (x0 + 1).min(4));
            let (ly, lx) = (fy - y0 as f64, fx - x0 as f64);
            let v = x.at(&[0, y0, x0]) * (1.0 - ly) * (1.0 - lx)
                + x.at(&[0, y0, x1]) * (1.0 - ly) * lx
                + x.at(&[0, y1, x0]) * ly * (1.0 - lx)
                + x.at(&[0, y1, x1]) * ly * lx;
            assert!((y.at(&[0, oy, ox]) - v).abs() < 1e-12);
        }
    }
}

/// Oracle: an output index maps to an input index by clamping broadcast
/// dimensions to 0 after right-aligning the shapes.
fn oracle_add(a: &Tensor, b: &Tensor, out: &[usize]) -> Vec<f64> {
    let n: usize = out.iter().product();
    (0..n)
        .map(|flat| {
            let mut idx = vec![0; out.len()];
            let mut r = flat;
            for d in (0..out.len()).rev() {
                idx[d] = r % out[d];
                r /= out[d];
            }
            let pick = |t: &Tensor| {
                let pad = out.len() - t.rank();
                let sub: Vec<usize> = t
                    .shape()
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| if s == 1 { 0 } else { idx[i + pad] })
                    .collect();
                t.at(&sub)
            };
            pick(a) + pick(b)
        })
        .collect()
}

#[test]
fn broadcasting_exhaustive_rank_le_4() {
    // every pair of shapes over dims {1, 2, 3} up to rank 4 where one side
    // is a suffix-compatible broadcast of the other
    let mut shapes = vec![vec![]];
    for rank in 1..=4 {
        let mut next = Vec::new();
        for s in shapes.iter().filter(|s: &&Vec<usize>| s.len() == rank - 1) {
            for d in [1, 2, 3] {
                let mut t = s.clone();
                t.push(d);
                next.push(t);
            }
        }
        shapes.extend(next);
    }
    let mut compatible = 0;
    for sa in &shapes {
        for sb in &shapes {
            let tape = Tape::new();
            let a = Tensor::from_fn(sa, |i| i as f64);
            let b = Tensor::from_fn(sb, |i| 100.0 * i as f64);
            let got = tape.constant(a.clone()).add(tape.constant(b.clone()));
            match broadcast_shape(sa, sb) {
                Some(out) => {
                    compatible += 1;
                    let got = got.unwrap().value();
                    assert_eq!(got.shape(), out.as_slice());
                    assert_eq!(got.data(), oracle_add(&a, &b, &out).as_slice(), "{sa:?} {sb:?}");
                }
                None => assert!(got.is_err(), "{sa:?} {sb:?}"),
            }
        }
    }
    assert!(compatible > 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..9, seed in 0u64..1000, scale in 0.1f64..50.0) {
        let tape = Tape::new();
        let x = tape.constant(rand(&[rows, cols], seed).map(|v| v * scale));
        let s = x.softmax(1).unwrap().value();
        for r in 0..rows {
            let total: f64 = (0..cols).map(|c| s.at(&[r, c])).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn random_shape_gradcheck(c in 1usize..5, h in 2usize..9, w in 2usize..9, seed in 0u64..1000) {
        let x = rand(&[c, h, w], seed);
        let r = check(&[x], Options { max_entries: 8, ..Options::default() }, |_, v| {
            v[0].sigmoid()?.resize_bilinear(h + 1, w.max(3) - 1)?.softmax(0)
        }).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }
}
