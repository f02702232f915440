//! Complementary view pairs scored by silhouette coverage, and packaging of
//! the selected pair's rendering prior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, HandMesh, ViewId};
use crate::render::{normalize_depth, prepare_view, rasterize, render_view, silhouette_area, DepthImage, Framebuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairId {
    FrontRear,
    LeftRight,
    TopBottom,
}

impl PairId {
    /// Fixed order; earlier pairs win ties.
    pub const ALL: [PairId; 3] = [PairId::FrontRear, PairId::LeftRight, PairId::TopBottom];

    pub fn views(self) -> (ViewId, ViewId) {
        match self {
            PairId::FrontRear => (ViewId::Front, ViewId::Rear),
            PairId::LeftRight => (ViewId::Left, ViewId::Right),
            PairId::TopBottom => (ViewId::Top, ViewId::Bottom),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairId::FrontRear => "FrontRear",
            PairId::LeftRight => "LeftRight",
            PairId::TopBottom => "TopBottom",
        }
    }

    pub fn of_view(view: ViewId) -> PairId {
        match view {
            ViewId::Front | ViewId::Rear => PairId::FrontRear,
            ViewId::Left | ViewId::Right => PairId::LeftRight,
            ViewId::Top | ViewId::Bottom => PairId::TopBottom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPair {
    pub pair_id: PairId,
    pub views: (ViewId, ViewId),
    /// Covered fractions of the two member views.
    pub areas: (f64, f64),
    pub score: f64,
}

impl ViewPair {
    pub fn new(pair_id: PairId, areas: (f64, f64)) -> Self {
        Self {
            pair_id,
            views: pair_id.views(),
            areas,
            score: areas.0 + areas.1,
        }
    }
}

/// How a pair is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Largest combined coverage of both views.
    #[default]
    PairSum,
    /// Pair containing the single largest view.
    SingleViewMax,
}

/// Coverage of all six views, in `ViewId::ALL` order.
pub fn view_areas(mesh: &HandMesh, camera: &CameraPose, resolution: (usize, usize)) -> Result<[f64; 6]> {
    let areas: Vec<f64> = ViewId::ALL
        .par_iter()
        .map(|&v| silhouette_area(mesh, v, camera, resolution))
        .collect::<Result<_>>()?;
    Ok(std::array::from_fn(|i| areas[i]))
}

fn pairs_from_areas(areas: &[f64; 6]) -> Vec<ViewPair> {
    let area = |v: ViewId| areas[ViewId::ALL.iter().position(|&w| w == v).expect("view")];
    PairId::ALL
        .iter()
        .map(|&p| {
            let (a, b) = p.views();
            ViewPair::new(p, (area(a), area(b)))
        })
        .collect()
}

/// Scores the three complementary pairs, returned in `PairId::ALL` order.
pub fn score_pairs(mesh: &HandMesh, camera: &CameraPose, resolution: (usize, usize)) -> Result<Vec<ViewPair>> {
    Ok(pairs_from_areas(&view_areas(mesh, camera, resolution)?))
}

pub fn select_pair(pairs: &[ViewPair]) -> Result<ViewPair> {
    select_pair_with(pairs, SelectionMode::PairSum)
}

pub fn select_pair_with(pairs: &[ViewPair], mode: SelectionMode) -> Result<ViewPair> {
    if pairs.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected 3 view pairs, got {}",
            pairs.len()
        )));
    }
    let key = |p: &ViewPair| match mode {
        SelectionMode::PairSum => p.score,
        SelectionMode::SingleViewMax => p.areas.0.max(p.areas.1),
    };
    let mut ordered = pairs.to_vec();
    ordered.sort_by_key(|p| PairId::ALL.iter().position(|&q| q == p.pair_id));
    let mut best = ordered[0];
    for p in &ordered[1..] {
        // strict comparison: ties keep the earlier pair
        if key(p) > key(&best) {
            best = *p;
        }
    }
    Ok(best)
}

/// Hand bounding box as normalized top-left / bottom-right corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !ok || !(self.x0 < self.x1 && self.y0 < self.y1) {
            return Err(Error::InvalidArgument(format!(
                "bounding box corners must satisfy x0<x1, y0<y1: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Tight box around covered pixels; pixel `i` spans `[i, i + 1)`.
    pub fn from_coverage(fb: &Framebuffer) -> Option<BBox> {
        let (w, h) = (fb.width, fb.height);
        let mut x_range = (usize::MAX, 0);
        let mut y_range = (usize::MAX, 0);
        for y in 0..h {
            for x in 0..w {
                if fb.is_covered(x, y) {
                    x_range = (x_range.0.min(x), x_range.1.max(x));
                    y_range = (y_range.0.min(y), y_range.1.max(y));
                }
            }
        }
        (x_range.0 != usize::MAX).then(|| BBox {
            x0: x_range.0 as f64 / w as f64,
            y0: y_range.0 as f64 / h as f64,
            x1: (x_range.1 + 1) as f64 / w as f64,
            y1: (y_range.1 + 1) as f64 / h as f64,
        })
    }
}

/// Training prior for one hand: shaded renders of the selected pair, the
/// front-view depth map and the front-view bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorBundle {
    pub pair: ViewPair,
    pub rgb_a: Framebuffer,
    pub rgb_b: Framebuffer,
    pub depth_front: DepthImage,
    pub bbox: BBox,
}

pub fn emit_pair_renders(
    mesh: &HandMesh,
    camera: &CameraPose,
    pair: &ViewPair,
    resolution: (usize, usize),
) -> Result<PriorBundle> {
    let (front_mesh, front_cam) = prepare_view(mesh, camera, ViewId::Front)?;
    let front = rasterize(&front_mesh, &front_cam, resolution)?;
    let bbox = BBox::from_coverage(&front).ok_or_else(|| Error::EmptySilhouette(ViewId::Front.to_string()))?;
    let (va, vb) = pair.views;
    Ok(PriorBundle {
        pair: *pair,
        rgb_a: render_view(mesh, camera, va, resolution)?,
        rgb_b: render_view(mesh, camera, vb, resolution)?,
        depth_front: normalize_depth(&front),
        bbox,
    })
}
