use mufen::geometry::synth::icosphere;
use mufen::geometry::{
    load_obj, parse_obj, rot_y, save_obj, synth_hand, synth_hand_detailed, transform_to_view, CameraPose, HandMesh,
    Handedness, Vec3, ViewId,
};
use mufen::render::io::{encode_pgm16, encode_ppm};
use mufen::render::{rasterize_view, render_depth, render_view, silhouette_area};
use mufen::viewselect::{emit_pair_renders, score_pairs, select_pair, BBox, PairId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::views::{expected, random_tri};

#[test]
fn view_transforms_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for view in ViewId::ALL {
        for _ in 0..1000 {
            let mesh = random_tri(&mut rng);
            let t = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..3.0),
            ];
            let cam = CameraPose::weak_perspective(Vec3::from_array(t), 4.0).unwrap();
            let (m, c) = transform_to_view(&mesh, &cam, view).unwrap();
            for (out, inp) in m.vertices.iter().zip(&mesh.vertices) {
                let (want, _) = expected(view, inp.to_array(), t);
                for (got, want) in out.to_array().iter().zip(want) {
                    assert!((got - want).abs() < 1e-12, "{view} vertex");
                }
            }
            let (_, want_t) = expected(view, [0.0; 3], t);
            for (got, want) in c.translation.to_array().iter().zip(want_t) {
                assert!((got - want).abs() < 1e-12, "{view} camera");
            }
            assert_eq!(c.projection, cam.projection);
        }
    }
}

#[test]
fn rear_twice_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cam = CameraPose::default_weak();
    for _ in 0..200 {
        let mesh = random_tri(&mut rng);
        let (once, _) = transform_to_view(&mesh, &cam, ViewId::Rear).unwrap();
        let (twice, _) = transform_to_view(&once, &cam, ViewId::Rear).unwrap();
        for (a, b) in twice.vertices.iter().zip(&mesh.vertices) {
            assert!(a.max_abs_diff(*b) < 1e-12);
        }
    }
}

fn arb_mesh() -> impl Strategy<Value = HandMesh> {
    (3usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), n),
            prop::collection::vec(prop::sample::subsequence((0..n as u32).collect::<Vec<_>>(), 3), 1..8),
        )
            .prop_map(|(vs, fs)| {
                let vertices = vs.into_iter().map(Vec3::from_array).collect();
                let faces = fs.into_iter().map(|f| [f[0], f[1], f[2]]).collect();
                HandMesh::new(vertices, faces, Handedness::Left).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn obj_round_trip(mesh in arb_mesh()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        save_obj(&mesh, &path).unwrap();
        let back = load_obj(&path, Handedness::Left).unwrap();
        prop_assert_eq!(&back.faces, &mesh.faces);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            prop_assert!(a.max_abs_diff(*b) < 1e-6);
        }
    }
}

#[test]
fn obj_parse_errors_carry_line() {
    let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n", Handedness::Right).unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");
}

#[test]
fn flat_hand_fingertips_lie_in_palm_plane() {
    for seed in 0..20 {
        let h = synth_hand_detailed(seed, &[0.0; 5], Handedness::Right).unwrap();
        let max_z = h
            .fingertips
            .iter()
            .map(|p| (p.z - h.palm_center.z).abs())
            .fold(0.0, f64::max);
        assert!(max_z < 0.02, "seed {seed}: {max_z}");
    }
}

#[test]
fn fist_fingertips_close_to_palm() {
    for seed in 0..20 {
        let h = synth_hand_detailed(seed, &[1.0; 5], Handedness::Right).unwrap();
        for tip in &h.fingertips {
            let d = (*tip - h.palm_center).norm();
            assert!(d < 0.05, "seed {seed}: tip {d}");
        }
    }
}

#[test]
fn fingertips_sit_on_the_mesh() {
    // every reported tip is within a finger radius of some vertex
    let h = synth_hand_detailed(4, &[0.3, 0.6, 0.1, 0.9, 0.5], Handedness::Left).unwrap();
    for tip in &h.fingertips {
        let nearest = h
            .mesh
            .vertices
            .iter()
            .map(|v| (*v - *tip).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.012, "{nearest}");
    }
}

/// Coverage by testing every pixel center against every projected triangle,
/// with inclusive edges. Mirrors only the camera model, nothing of the
/// rasterizer's traversal.
fn brute_force_coverage(mesh: &HandMesh, view: ViewId, scale: f64, res: usize) -> usize {
    let c = mesh.vertices.iter().fold(Vec3::new(0.0, 0.0, 0.0), |a, v| a + *v) * (1.0 / mesh.vertices.len() as f64);
    let half = res as f64 / 2.0;
    let pts: Vec<(f64, f64)> = mesh
        .vertices
        .iter()
        .map(|v| {
            let (p, _) = expected(view, (*v - c).to_array(), [0.0; 3]);
            (half + scale * p[0] * half, half - scale * p[1] * half)
        })
        .collect();
    let mut covered = vec![false; res * res];
    for f in &mesh.faces {
        let [a, b, d] = f.map(|i| pts[i as usize]);
        let cross = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        let area = cross(a, b, d.0, d.1);
        if area == 0.0 {
            continue;
        }
        let xs = [a.0, b.0, d.0];
        let ys = [a.1, b.1, d.1];
        let lo = |v: &[f64; 3]| (v.iter().cloned().fold(f64::INFINITY, f64::min).floor().max(0.0)) as usize;
        let hi = |v: &[f64; 3]| (v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(res);
        for y in lo(&ys)..hi(&ys) {
            for x in lo(&xs)..hi(&xs) {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let w = [cross(b, d, px, py), cross(d, a, px, py), cross(a, b, px, py)];
                if w.iter().all(|&wi| wi * area.signum() >= 0.0) {
                    covered[y * res + x] = true;
                }
            }
        }
    }
    covered.iter().filter(|&&c| c).count()
}

#[test]
fn coverage_matches_brute_force() {
    let cam = CameraPose::default_weak();
    let res = 96;
    for seed in 0..4 {
        let mesh = synth_hand(seed, &[0.2 * seed as f64, 0.5, 0.1, 0.8, 0.3]).unwrap();
        for view in ViewId::ALL {
            let fb = rasterize_view(&mesh, &cam, view, (res, res)).unwrap();
            let oracle = brute_force_coverage(&mesh, view, 5.0, res);
            let got = fb.covered_count();
            // only pixel centers exactly on an edge may differ
            assert!(got.abs_diff(oracle) <= 2, "{view}: {got} vs {oracle}");
        }
    }
}

#[test]
fn opposite_views_have_equal_area() {
    let cam = CameraPose::default_weak();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..8 {
        let curls: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let mesh = synth_hand(seed, &curls).unwrap();
        for view in [ViewId::Front, ViewId::Left, ViewId::Top] {
            let a = silhouette_area(&mesh, view, &cam, (256, 256)).unwrap();
            let b = silhouette_area(&mesh, view.partner(), &cam, (256, 256)).unwrap();
            assert!((a - b).abs() <= 0.005 * a.max(b), "{view}: {a} vs {b}");
        }
    }
}

#[test]
fn sphere_area_matches_disc() {
    let (r, scale) = (0.1, 5.0);
    let sphere = icosphere(r, 4);
    let cam = CameraPose::weak_perspective(Vec3::new(0.0, 0.0, 2.0), scale).unwrap();
    let disc = std::f64::consts::PI * (r * scale / 2.0).powi(2);
    for view in ViewId::ALL {
        let a = silhouette_area(&sphere, view, &cam, (512, 512)).unwrap();
        assert!((a - disc).abs() / disc < 0.01, "{view}: {a} vs {disc}");
    }
}

#[test]
fn area_converges_with_resolution() {
    let cam = CameraPose::default_weak();
    for seed in 0..3 {
        let mesh = synth_hand(seed, &[0.5, 0.2, 0.7, 0.1, 0.9]).unwrap();
        let lo = silhouette_area(&mesh, ViewId::Front, &cam, (512, 512)).unwrap();
        let hi = silhouette_area(&mesh, ViewId::Front, &cam, (1024, 1024)).unwrap();
        assert!((lo - hi).abs() / hi < 0.01, "{lo} vs {hi}");
    }
}

#[test]
fn flat_palm_selects_front_rear() {
    let cam = CameraPose::default_weak();
    for seed in 0..5 {
        let mesh = synth_hand(seed, &[0.0; 5]).unwrap();
        let pairs = score_pairs(&mesh, &cam, (128, 128)).unwrap();
        assert_eq!(select_pair(&pairs).unwrap().pair_id, PairId::FrontRear);
    }
}

#[test]
fn palm_turned_sideways_selects_left_right() {
    let cam = CameraPose::default_weak();
    let r = rot_y(std::f64::consts::FRAC_PI_2).unwrap();
    for seed in 0..5 {
        let mesh = synth_hand(seed, &[0.0; 5]).unwrap().rotated(&r);
        let pairs = score_pairs(&mesh, &cam, (128, 128)).unwrap();
        assert_eq!(select_pair(&pairs).unwrap().pair_id, PairId::LeftRight);
    }
}

#[test]
fn selection_is_exhaustive_argmax() {
    let cam = CameraPose::default_weak();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let curls: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let mesh = synth_hand(seed, &curls)
            .unwrap()
            .rotated(&rot_y(rng.random_range(-1.5..1.5)).unwrap());
        let pairs = score_pairs(&mesh, &cam, (96, 96)).unwrap();
        let best = PairId::ALL
            .iter()
            .map(|&p| {
                let (a, b) = p.views();
                let area = |v| silhouette_area(&mesh, v, &cam, (96, 96)).unwrap();
                (p, area(a) + area(b))
            })
            .fold(None, |acc: Option<(PairId, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            })
            .unwrap();
        assert_eq!(select_pair(&pairs).unwrap().pair_id, best.0);
    }
}

#[test]
fn bbox_matches_lit_pixel_scan() {
    let cam = CameraPose::default_weak();
    let res = 160;
    for seed in 0..4 {
        let mesh = synth_hand(seed, &[0.1, 0.9, 0.4, 0.2, 0.6]).unwrap();
        let pair = select_pair(&score_pairs(&mesh, &cam, (res, res)).unwrap()).unwrap();
        let bundle = emit_pair_renders(&mesh, &cam, &pair, (res, res)).unwrap();
        // shaded pixels are never pure black thanks to the ambient term
        let front = render_view(&mesh, &cam, ViewId::Front, (res, res)).unwrap();
        let (mut x0, mut y0, mut x1, mut y1) = (res, res, 0, 0);
        for y in 0..res {
            for x in 0..res {
                let px = &front.rgb[(y * res + x) * 3..][..3];
                if px != [0, 0, 0] {
                    (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1));
                }
            }
        }
        let n = res as f64;
        let want = BBox::new(x0 as f64 / n, y0 as f64 / n, x1 as f64 / n, y1 as f64 / n).unwrap();
        assert_eq!(bundle.bbox, want);
    }
}

#[test]
fn renders_are_bit_identical_across_runs_and_thread_counts() {
    let cam = CameraPose::default_weak();
    let mesh = synth_hand(9, &[0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
    let encode = || {
        let mut out = Vec::new();
        for view in ViewId::ALL {
            let fb = render_view(&mesh, &cam, view, (200, 200)).unwrap();
            out.extend(encode_ppm(fb.width, fb.height, &fb.rgb));
            let d = render_depth(&mesh, &cam, (200, 200)).unwrap();
            out.extend(encode_pgm16(d.width, d.height, &d.data));
        }
        out
    };
    let base = encode();
    assert_eq!(base, encode());
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(base, pool.install(encode), "{threads} threads");
    }
}
