use mufen::geometry::{HandMesh, Handedness, Vec3, ViewId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Closed-form vertex and camera rules per view, written out component by
/// component.
pub fn expected(view: ViewId, v: [f64; 3], t: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let [x, y, z] = v;
    let [tx, ty, tz] = t;
    match view {
        ViewId::Front => ([x, y, z], [tx, ty, tz]),
        ViewId::Rear => ([-x, y, -z], [-tx, ty, tz]),
        ViewId::Right => ([z, y, -x], [0.0, ty, -tx]),
        ViewId::Left => ([-z, y, x], [0.0, ty, tx]),
        ViewId::Top => ([x, -z, y], [tx, 0.0, ty]),
        ViewId::Bottom => ([x, z, -y], [tx, 0.0, -ty]),
    }
}

pub fn random_tri(rng: &mut ChaCha8Rng) -> HandMesh {
    let mut p = || {
        Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    };
    HandMesh::new(vec![p(), p(), p()], vec![[0, 1, 2]], Handedness::Right).unwrap()
}
