//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset, e.g.
//! `cargo test --test acceptance -- 3 9`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mufen::dataset::{train_samples, HandSpec};
use mufen::diffusion::{q_sample_with_alpha_bar, total_loss, train_toy, LossWeights, TrainConfig};
use mufen::geometry::{rot_x, rot_y, rot_z, synth_hand, transform_to_view, CameraPose, HandMesh, Vec3, ViewId};
use mufen::metrics::{frechet_distance, kid, paired_ttest, FeatureSet, GestureScores, KidOptions};
use mufen::render::io::{encode_pgm16, encode_ppm};
use mufen::render::{render_depth, render_view, silhouette_area};
use mufen::tensor::Tensor;
use mufen::viewselect::{score_pairs, select_pair, view_areas, PairId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};

mod common;
use common::views::{expected, random_tri};
use common::{contracts, grad, passes};

/// `Ok(detail)` on pass, `Err(detail)` on failure.
type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn hands(n: u64) -> Vec<HandMesh> {
    (0..n).map(|i| HandSpec::generate(2024, i).mesh().unwrap()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn transform_conformance() -> Verdict {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for view in ViewId::ALL {
        for _ in 0..1000 {
            let mesh = random_tri(&mut r);
            let t = [
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
                r.random_range(0.5..4.0),
            ];
            let cam = CameraPose::weak_perspective(Vec3::from_array(t), r.random_range(0.5..8.0)).unwrap();
            let (m, c) = transform_to_view(&mesh, &cam, view).map_err(|e| e.to_string())?;
            for (out, inp) in m.vertices.iter().zip(&mesh.vertices) {
                let (want, _) = expected(view, inp.to_array(), t);
                for (got, want) in out.to_array().iter().zip(want) {
                    worst = worst.max((got - want).abs());
                }
            }
            let (_, want_t) = expected(view, [0.0; 3], t);
            for (got, want) in c.translation.to_array().iter().zip(want_t) {
                worst = worst.max((got - want).abs());
            }
            ensure(c.projection == cam.projection, || format!("{view}: projection changed"))?;
        }
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("6000 inputs, max deviation {worst:e}"))
}

fn rear_involution() -> Verdict {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mesh = random_tri(&mut r);
        let t = Vec3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), 2.0);
        let cam = CameraPose::weak_perspective(t, 5.0).unwrap();
        let (once, cam1) = transform_to_view(&mesh, &cam, ViewId::Rear).unwrap();
        let (twice, cam2) = transform_to_view(&once, &cam1, ViewId::Rear).unwrap();
        for (a, b) in twice.vertices.iter().zip(&mesh.vertices) {
            worst = worst.max(a.max_abs_diff(*b));
        }
        worst = worst.max(cam2.translation.max_abs_diff(cam.translation));
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 meshes and cameras, max deviation {worst:e}"))
}

fn mirror_silhouettes() -> Verdict {
    let cam = CameraPose::default_weak();
    let (mut worst_pair, mut worst_res) = (0.0f64, 0.0f64);
    for (i, mesh) in hands(50).iter().enumerate() {
        let lo = view_areas(mesh, &cam, (512, 512)).unwrap();
        let hi = view_areas(mesh, &cam, (1024, 1024)).unwrap();
        for pair in PairId::ALL {
            let (a, b) = pair.views();
            let idx = |v: ViewId| ViewId::ALL.iter().position(|&w| w == v).unwrap();
            let d = rel(lo[idx(a)], lo[idx(b)]);
            worst_pair = worst_pair.max(d);
            ensure(d <= 0.005, || format!("hand {i} {}: {d:.5}", pair.name()))?;
        }
        for (v, (l, h)) in lo.iter().zip(&hi).enumerate() {
            let d = rel(*l, *h);
            worst_res = worst_res.max(d);
            ensure(d < 0.01, || format!("hand {i} {}: 512 vs 1024 {d:.5}", ViewId::ALL[v]))?;
        }
    }
    Ok(format!(
        "50 hands, worst pair difference {:.3}%, worst 512/1024 difference {:.3}%",
        100.0 * worst_pair,
        100.0 * worst_res
    ))
}

fn view_selection_oracle() -> Verdict {
    let cam = CameraPose::default_weak();
    let res = (256, 256);
    let mut counts = [0usize; 3];
    // arbitrary orientations, so every pair gets selected some of the time
    let mut r = rng(14);
    let oriented: Vec<HandMesh> = hands(100)
        .into_iter()
        .map(|m| {
            let mut angle = || r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let rot = rot_x(angle())
                .unwrap()
                .mul_mat(&rot_y(angle()).unwrap())
                .mul_mat(&rot_z(angle()).unwrap());
            m.rotated(&rot)
        })
        .collect();
    for (i, mesh) in oriented.iter().enumerate() {
        let area = |v| silhouette_area(mesh, v, &cam, res).unwrap();
        let sums: Vec<(PairId, f64)> = PairId::ALL
            .iter()
            .map(|&p| (p, area(p.views().0) + area(p.views().1)))
            .collect();
        let mut best = sums[0];
        for &s in &sums[1..] {
            if s.1 > best.1 {
                best = s;
            }
        }
        let got = select_pair(&score_pairs(mesh, &cam, res).unwrap()).unwrap();
        ensure(got.pair_id == best.0 && got.score == best.1, || {
            format!(
                "hand {i}: selected {} vs exhaustive {}",
                got.pair_id.name(),
                best.0.name()
            )
        })?;
        counts[PairId::ALL.iter().position(|&p| p == best.0).unwrap()] += 1;
    }
    for seed in 0..10 {
        let flat = synth_hand(seed, &[0.0; 5]).unwrap();
        let got = select_pair(&score_pairs(&flat, &cam, res).unwrap()).unwrap();
        ensure(got.pair_id == PairId::FrontRear, || {
            format!("flat palm {seed} selected {}", got.pair_id.name())
        })?;
    }
    Ok(format!(
        "100 hands agree (FrontRear {}, LeftRight {}, TopBottom {}); 10 flat palms select FrontRear",
        counts[0], counts[1], counts[2]
    ))
}

fn rendering_determinism() -> Verdict {
    let cam = CameraPose::default_weak();
    let meshes = hands(3);
    let encode = || {
        let mut out = Vec::new();
        for mesh in &meshes {
            for view in ViewId::ALL {
                let fb = render_view(mesh, &cam, view, (256, 256)).unwrap();
                out.extend(encode_ppm(fb.width, fb.height, &fb.rgb));
            }
            let d = render_depth(mesh, &cam, (256, 256)).unwrap();
            out.extend(encode_pgm16(d.width, d.height, &d.data));
        }
        out
    };
    let base = encode();
    ensure(base == encode(), || "repeat render differs".into())?;
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        ensure(base == pool.install(encode), || {
            format!("{threads}-thread pool differs")
        })?;
    }
    Ok(format!(
        "{} bytes identical across repeats and 1/2/4-thread pools",
        base.len()
    ))
}

fn gradient_checks() -> Verdict {
    let ops = grad::all_ops();
    let nets = grad::all_networks();
    let mut worst = (String::new(), 0.0f64);
    let mut probes = 0;
    for (name, r) in ops.iter().chain(&nets) {
        ensure(passes(r), || format!("{name}: {r:?}"))?;
        probes += r.checked;
        if r.max_rel_err >= worst.1 {
            worst = (name.clone(), r.max_rel_err);
        }
    }
    Ok(format!(
        "{} op checks, {} network checks, {probes} probes; worst {} at {:.2e}",
        ops.len(),
        nets.len(),
        worst.0,
        worst.1
    ))
}

fn shape_range_contracts() -> Verdict {
    contracts::unet(16)?;
    contracts::unet(64)?;
    contracts::gates()?;
    Ok("unet C=16 and C=64 give 3x225x225 in (0,1); softmax rows and gates in range".into())
}

fn loss_composition() -> Verdict {
    let total = total_loss(2.0, 3.0, LossWeights::new(0.1).unwrap());
    ensure(total == 2.3, || format!("total_loss = {total:?}"))?;

    let z0 = Tensor::randn(&[4, 16, 16], &mut rng(3));
    let eps = Tensor::randn(&[4, 16, 16], &mut rng(4));
    ensure(q_sample_with_alpha_bar(&z0, 1.0, &eps).unwrap() == z0, || {
        "alpha_bar=1 is not z0".into()
    })?;
    ensure(q_sample_with_alpha_bar(&z0, 0.0, &eps).unwrap() == eps, || {
        "alpha_bar=0 is not eps".into()
    })?;

    let n = 100_000;
    let mut r = rng(5);
    let (z0, eps) = (Tensor::randn(&[n], &mut r), Tensor::randn(&[n], &mut r));
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let mut worst = 0.0f64;
    for ab in [0.05, 0.3, 0.5, 0.7, 0.95] {
        let zt = q_sample_with_alpha_bar(&z0, ab, &eps).unwrap();
        let want = ab * var(z0.data()) + 1.0 - ab;
        worst = worst.max(rel(var(zt.data()), want));
    }
    ensure(worst < 0.03, || format!("variance off by {:.2}%", 100.0 * worst))?;
    Ok(format!(
        "total_loss(2.0, 3.0, 0.1) == 2.3; endpoints exact; variance within {:.2}%",
        100.0 * worst
    ))
}

fn toy_training() -> Verdict {
    let cfg = TrainConfig::default();
    let start = Instant::now();
    let samples = train_samples(cfg.seed, cfg.samples, cfg.image_size).map_err(|e| e.to_string())?;
    let run = train_toy(&cfg, &samples).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ratio = run.eval_ratio();
    ensure(run.curve.len() == 300 && samples.len() == 64, || {
        "wrong run size".into()
    })?;
    ensure(ratio <= 0.5, || {
        format!(
            "combined loss {:.4} -> {:.4} (ratio {ratio:.3})",
            run.initial_eval.total, run.final_eval.total
        )
    })?;

    // every draw is keyed by (sample, step), so a shorter run with the same
    // seed must reproduce the head of the curve bit for bit
    let prefix = 25;
    let short = train_toy(
        &TrainConfig {
            steps: prefix,
            ..cfg.clone()
        },
        &samples,
    )
    .map_err(|e| e.to_string())?;
    ensure(short.curve[..] == run.curve[..prefix], || {
        "seeded rerun diverges".into()
    })?;
    Ok(format!(
        "combined loss {:.4} -> {:.4} (ratio {ratio:.3}) in {:.0}s; seeded rerun reproduces the first {prefix} steps",
        run.initial_eval.total,
        run.final_eval.total,
        elapsed.as_secs_f64()
    ))
}

fn gaussian(n: usize, d: usize, shift: f64, seed: u64) -> FeatureSet {
    let mut r = rng(seed);
    let data = (0..n * d).map(|_| r.sample::<f64, _>(StandardNormal) + shift).collect();
    FeatureSet::new(n, d, data).unwrap()
}

fn metrics_fidelity() -> Verdict {
    let a = gaussian(1000, 8, 0.0, 6);
    let self_fd = frechet_distance(&a, &a).unwrap();
    ensure(self_fd.abs() < 1e-8, || format!("fd(a,a) = {self_fd:e}"))?;

    let x = gaussian(500, 1, 0.0, 7);
    let raw = gaussian(400, 1, 0.0, 8);
    let y = FeatureSet::new(400, 1, (0..400).map(|i| 3.0 * raw.row(i)[0] - 1.0).collect()).unwrap();
    let stats = |s: &FeatureSet| (s.mean()[0], s.covariance().unwrap()[(0, 0)]);
    let ((mx, vx), (my, vy)) = (stats(&x), stats(&y));
    let closed = (mx - my).powi(2) + vx + vy - 2.0 * (vx * vy).sqrt();
    let one_d = (frechet_distance(&x, &y).unwrap() - closed).abs();
    ensure(one_d < 1e-9, || format!("1-D closed form off by {one_d:e}"))?;

    // shift of 1/√2 per axis in 8 dims puts ‖μ‖² at 4
    let b = gaussian(10_000, 8, 0.0, 9);
    let c = gaussian(10_000, 8, 0.5f64.sqrt(), 10);
    let shift = frechet_distance(&b, &c).unwrap();
    ensure(rel(shift, 4.0) < 0.05, || format!("shift estimate {shift}"))?;

    let p = gaussian(300, 8, 0.0, 11);
    let q = gaussian(300, 8, 0.0, 12);
    let (mean, std) = kid(
        &p,
        &q,
        KidOptions {
            subsets: 100,
            subset_size: 100,
            seed: 0,
        },
    )
    .unwrap();
    ensure(mean.abs() <= 3.0 * std, || {
        format!("same-distribution KID {mean} ± {std}")
    })?;

    let mut r = rng(13);
    let mut worst_p = 0.0f64;
    for n in [3usize, 5, 18, 50] {
        for _ in 0..25 {
            let a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
            let got = paired_ttest(&GestureScores {
                a: a.clone(),
                b: b.clone(),
            })
            .unwrap();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let m = d.iter().sum::<f64>() / n as f64;
            let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let t = m / (sd / (n as f64).sqrt());
            let oracle = 2.0 * StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap().cdf(-t.abs());
            worst_p = worst_p.max((got.p - oracle).abs());
        }
    }
    ensure(worst_p < 1e-10, || format!("t-test p off by {worst_p:e}"))?;
    let base: Vec<f64> = (0..18).map(|i| 30.0 + i as f64).collect();
    let better: Vec<f64> = base.iter().enumerate().map(|(i, v)| v - 1.0 - 0.1 * i as f64).collect();
    let t = paired_ttest(&GestureScores { a: better, b: base }).unwrap();
    ensure(t.better_count == 18, || format!("better_count {}", t.better_count))?;
    Ok(format!(
        "fd(a,a) {self_fd:.1e}; 1-D error {one_d:.1e}; shift {shift:.3} vs 4; KID {mean:.2e} ± {std:.2e}; \
         p error {worst_p:.1e}; better_count 18/18"
    ))
}

struct Criterion {
    id: usize,
    title: &'static str,
    budget: Option<Duration>,
    run: fn() -> Verdict,
}

const fn crit(id: usize, title: &'static str, secs: Option<u64>, run: fn() -> Verdict) -> Criterion {
    let budget = match secs {
        Some(s) => Some(Duration::from_secs(s)),
        None => None,
    };
    Criterion { id, title, budget, run }
}

const CRITERIA: [Criterion; 10] = [
    crit(1, "transform conformance", Some(1), transform_conformance),
    crit(2, "rear-view involution", None, rear_involution),
    crit(
        3,
        "mirror silhouettes and resolution convergence",
        Some(120),
        mirror_silhouettes,
    ),
    crit(4, "view-selection oracle", None, view_selection_oracle),
    crit(5, "rendering determinism", None, rendering_determinism),
    crit(6, "gradient checks", Some(300), gradient_checks),
    crit(7, "shape and range contracts", None, shape_range_contracts),
    crit(8, "loss composition", None, loss_composition),
    crit(9, "toy training", Some(600), toy_training),
    crit(10, "metrics fidelity", None, metrics_fidelity),
];

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "{tag} [{:>2}] {}: {detail} ({:.2}s)",
            c.id,
            c.title,
            elapsed.as_secs_f64()
        );
        failed += outcome.is_err() as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
