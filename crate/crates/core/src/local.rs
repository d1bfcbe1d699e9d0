//! Local re-clustering of small candidate regions.
//!
//! Small regions get a square window around them. The window is re-clustered
//! at a finer grid, subregions touching the window border are dropped as
//! incomplete, and the survivors are mapped back into working-image pixels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cluster::{cluster_grid, ThresholdSchedule};
use crate::grid::FeatureGrid;
use crate::label::{PseudoLabel, Stage};
use crate::pool::{mask_nms, mix_snapshots, NmsConfig};
use crate::rle::RleBuilder;
use crate::{Error, Result};

pub const DEFAULT_SMALL_FRACTION: f64 = 1.0 / 1024.0;
pub const DEFAULT_LOCAL_SIZE: usize = 256;
pub const MIN_WINDOW_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSelector {
    pub small_fraction: f64,
}

impl Default for SmallSelector {
    fn default() -> Self {
        Self { small_fraction: DEFAULT_SMALL_FRACTION }
    }
}

impl SmallSelector {
    pub fn validate(&self) -> Result<()> {
        if !(self.small_fraction > 0.0 && self.small_fraction < 1.0) {
            return Err(Error::OutOfRange { what: "small fraction", value: self.small_fraction });
        }
        Ok(())
    }

    pub fn is_small(&self, area_px: u64, image_area_px: u64) -> bool {
        (area_px as f64) < self.small_fraction * image_area_px as f64
    }
}

/// Square crop of the working image, in working-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocalWindow {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    /// Patches per side of the local feature grid.
    pub grid_side: usize,
    /// Index of the small label this window was made for.
    pub source_index: usize,
}

impl LocalWindow {
    /// Stable identifier used to name crop requests and responses.
    pub fn request_id(&self, image_id: &str) -> String {
        format!("{image_id}__{}_{}_{}", self.x, self.y, self.side)
    }
}

/// Splits `pool` into `(small, large)` by area relative to the image.
pub fn select_small(
    pool: Vec<PseudoLabel>,
    selector: &SmallSelector,
    image_area_px: u64,
) -> (Vec<PseudoLabel>, Vec<PseudoLabel>) {
    pool.into_iter().partition(|l| selector.is_small(l.area_px, image_area_px))
}

/// Window of side `clamp(2 * max(bbox_w, bbox_h), 64, min(h, w))` centred on
/// the label's bounding box, shifted to stay inside the image.
pub fn make_window(
    label: &PseudoLabel,
    image_height: usize,
    image_width: usize,
    grid_side: usize,
    source_index: usize,
) -> LocalWindow {
    let b = label.bbox;
    let limit = image_height.min(image_width);
    let side = (2 * b.w.max(b.h)).clamp(MIN_WINDOW_SIDE.min(limit), limit);
    let place = |start: usize, extent: usize, bound: usize| -> usize {
        // Twice the centre, to stay in integers.
        let centre2 = (2 * start + extent) as i64;
        let origin = (centre2 - side as i64).div_euclid(2);
        origin.clamp(0, (bound - side) as i64) as usize
    };
    LocalWindow {
        x: place(b.x, b.w, image_width),
        y: place(b.y, b.h, image_height),
        side,
        grid_side,
        source_index,
    }
}

/// Where local feature grids come from.
pub trait LocalFeatureSource {
    fn local_features(&self, window: &LocalWindow) -> Result<FeatureGrid>;
}

/// Bilinear resampling of the global grid; no second backbone pass needed.
#[derive(Debug, Clone, Copy)]
pub struct ProxySource<'a> {
    pub global: &'a FeatureGrid,
    pub local_size_px: usize,
}

impl LocalFeatureSource for ProxySource<'_> {
    fn local_features(&self, window: &LocalWindow) -> Result<FeatureGrid> {
        proxy_local_features(self.global, window, self.local_size_px)
    }
}

/// Samples the global grid at the centres of a `grid_side x grid_side`
/// lattice spanning the window. Patch centres sit at `(i + 0.5) * stride`;
/// samples outside the outermost centres clamp to the edge.
pub fn proxy_local_features(
    global: &FeatureGrid,
    window: &LocalWindow,
    local_size_px: usize,
) -> Result<FeatureGrid> {
    let n = window.grid_side;
    if n == 0 || !local_size_px.is_multiple_of(n) {
        return Err(Error::InvalidConfig("local size must be a multiple of the local grid side"));
    }
    let stride = global.patch_stride() as f64;
    let cell = window.side as f64 / n as f64;
    let (gh, gw, ch) = (global.height(), global.width(), global.channels());
    let coord = |origin: usize, i: usize, extent: usize| -> (usize, usize, f64) {
        let pixel = origin as f64 + (i as f64 + 0.5) * cell;
        let g = (pixel / stride - 0.5).clamp(0.0, (extent - 1) as f64);
        let lo = libm::floor(g) as usize;
        let hi = (lo + 1).min(extent - 1);
        (lo, hi, g - lo as f64)
    };
    let mut data = Vec::with_capacity(n * n * ch);
    for r in 0..n {
        let (y0, y1, ty) = coord(window.y, r, gh);
        for c in 0..n {
            let (x0, x1, tx) = coord(window.x, c, gw);
            let (f00, f01) = (global.feature(y0, x0), global.feature(y0, x1));
            let (f10, f11) = (global.feature(y1, x0), global.feature(y1, x1));
            for k in 0..ch {
                let top = f00[k] as f64 * (1.0 - tx) + f01[k] as f64 * tx;
                let bottom = f10[k] as f64 * (1.0 - tx) + f11[k] as f64 * tx;
                data.push((top * (1.0 - ty) + bottom * ty) as f32);
            }
        }
    }
    FeatureGrid::new(n, n, ch, local_size_px / n, data)
}

/// Re-clusters one window and returns the interior subregions in
/// working-image coordinates, tagged [`Stage::Local`].
///
/// Border-touching subregions are removed at local resolution, before the
/// local NMS pass.
pub fn recluster_window(
    window: &LocalWindow,
    local_grid: &FeatureGrid,
    schedule: &ThresholdSchedule,
    nms: &NmsConfig,
    image_height: usize,
    image_width: usize,
) -> Result<Vec<PseudoLabel>> {
    if local_grid.height() != window.grid_side || local_grid.width() != window.grid_side {
        return Err(Error::DimensionMismatch {
            left: (local_grid.height(), local_grid.width()),
            right: (window.grid_side, window.grid_side),
        });
    }
    if window.x + window.side > image_width || window.y + window.side > image_height {
        return Err(Error::InvalidConfig("window exceeds image bounds"));
    }
    let agg = cluster_grid(local_grid, schedule);
    let pool: Vec<PseudoLabel> = mix_snapshots(&agg.snapshots, local_grid.patch_stride())
        .into_iter()
        .filter(|l| !l.mask.touches_border())
        .collect();
    let kept = mask_nms(&pool, nms)?;
    let local_px = local_grid.pixel_height();
    Ok(kept
        .into_iter()
        .map(|l| map_to_global(&l, window, local_px, image_height, image_width))
        .filter(|l| l.area_px > 0)
        .collect())
}

/// Nearest-neighbour resampling of a local-resolution label into the window's
/// footprint in the working image.
fn map_to_global(
    label: &PseudoLabel,
    window: &LocalWindow,
    local_px: usize,
    image_height: usize,
    image_width: usize,
) -> PseudoLabel {
    let side = window.side;
    // First global offset whose local source index is >= `l`.
    let ceil_map = |l: usize| (l * side).div_ceil(local_px);
    let mut builder = RleBuilder::new(image_height, image_width);
    for dy in 0..side {
        let ly = dy * local_px / side;
        let gy = window.y + dy;
        for (lx0, lx1) in label.mask.row_spans(ly) {
            let (gx0, gx1) = (window.x + ceil_map(lx0), window.x + ceil_map(lx1));
            builder.push(gy * image_width + gx0, gy * image_width + gx1);
        }
    }
    let mut out = PseudoLabel::new(builder.finish(), Stage::Local, label.merge_threshold);
    out.score = label.score;
    out
}

/// Large global regions plus local survivors, deduplicated by one final NMS.
pub fn assemble_initial_labels(
    large: Vec<PseudoLabel>,
    local_survivors: Vec<PseudoLabel>,
    nms: &NmsConfig,
) -> Result<Vec<PseudoLabel>> {
    let mut all = large;
    all.extend(local_survivors);
    mask_nms(&all, nms)
}
