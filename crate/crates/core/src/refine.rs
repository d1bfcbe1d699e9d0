//! Boundary refinement and the refinement IoU gate.
//!
//! The built-in refiner is plain morphology: closing, then opening, with a
//! 3x3 square element, then hole filling. Pixels outside the image never
//! take part: dilation treats them as unset, erosion ignores them, so a mask
//! touching the image border is not eaten from that side.

use alloc::vec;
use alloc::vec::Vec;

use crate::label::{PseudoLabel, Stage};
use crate::rle::{RleBuilder, RleMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefinerKind {
    #[default]
    BuiltinMorph,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub refiner: RefinerKind,
    pub iou_keep_threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { refiner: RefinerKind::BuiltinMorph, iou_keep_threshold: 0.5 }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.iou_keep_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::OutOfRange { what: "refine iou threshold", value: t });
        }
        Ok(())
    }
}

/// Produces a refined mask for label `index` of the set being gated.
pub trait MaskRefiner {
    fn refine(&self, index: usize, label: &PseudoLabel) -> Result<RleMask>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MorphRefiner;

impl MaskRefiner for MorphRefiner {
    fn refine(&self, _index: usize, label: &PseudoLabel) -> Result<RleMask> {
        Ok(refine_morph(&label.mask))
    }
}

/// Working buffer over a sub-rectangle of the image.
struct Crop {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    // Whether each crop edge coincides with the image edge: left, top, right, bottom.
    at_edge: [bool; 4],
    px: Vec<u8>,
}

impl Crop {
    fn from_mask(mask: &RleMask, pad: usize) -> Self {
        let (ih, iw) = mask.dims();
        let b = mask.bbox();
        let x0 = b.x.saturating_sub(pad);
        let y0 = b.y.saturating_sub(pad);
        let x1 = (b.x + b.w + pad).min(iw);
        let y1 = (b.y + b.h + pad).min(ih);
        let (w, h) = (x1 - x0, y1 - y0);
        let mut px = vec![0u8; w * h];
        for y in y0..y1 {
            for (s, e) in mask.row_spans(y) {
                let (s, e) = (s.max(x0), e.min(x1));
                if e > s {
                    px[(y - y0) * w + (s - x0)..(y - y0) * w + (e - x0)].fill(1);
                }
            }
        }
        Self { x0, y0, w, h, at_edge: [x0 == 0, y0 == 0, x1 == iw, y1 == ih], px }
    }

    fn to_mask(&self, height: usize, width: usize) -> RleMask {
        let mut builder = RleBuilder::new(height, width);
        for y in 0..self.h {
            let row = &self.px[y * self.w..(y + 1) * self.w];
            let base = (self.y0 + y) * width + self.x0;
            let mut x = 0;
            while x < self.w {
                if row[x] == 1 {
                    let s = x;
                    while x < self.w && row[x] == 1 {
                        x += 1;
                    }
                    builder.push(base + s, base + x);
                } else {
                    x += 1;
                }
            }
        }
        builder.finish()
    }

    /// 3-tap min/max along rows then columns. For erosion, a missing
    /// neighbour beyond an image edge is ignored; beyond a crop edge that is
    /// inside the image it counts as unset.
    fn filter(&mut self, erode: bool) {
        let (w, h) = (self.w, self.h);
        let outside = |edge: bool| -> u8 {
            if erode && edge {
                1
            } else {
                0
            }
        };
        let combine = |a: u8, b: u8| if erode { a.min(b) } else { a.max(b) };

        let mut tmp = vec![0u8; w * h];
        let (left, right) = (outside(self.at_edge[0]), outside(self.at_edge[2]));
        for y in 0..h {
            let row = &self.px[y * w..(y + 1) * w];
            for x in 0..w {
                let l = if x > 0 { row[x - 1] } else { left };
                let r = if x + 1 < w { row[x + 1] } else { right };
                tmp[y * w + x] = combine(combine(l, row[x]), r);
            }
        }
        let (top, bottom) = (outside(self.at_edge[1]), outside(self.at_edge[3]));
        for y in 0..h {
            for x in 0..w {
                let u = if y > 0 { tmp[(y - 1) * w + x] } else { top };
                let d = if y + 1 < h { tmp[(y + 1) * w + x] } else { bottom };
                self.px[y * w + x] = combine(combine(u, tmp[y * w + x]), d);
            }
        }
    }

    /// Sets every unset pixel that is not 4-connected to the crop border.
    /// The crop keeps a ring of unset padding wherever it does not reach
    /// the image edge, so "connected to the crop border" equals "connected
    /// to the image border".
    fn fill_holes(&mut self) {
        let (w, h) = (self.w, self.h);
        let mut reach = vec![false; w * h];
        let mut stack = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if (y == 0 || x == 0 || y + 1 == h || x + 1 == w) && self.px[y * w + x] == 0 {
                    reach[y * w + x] = true;
                    stack.push(y * w + x);
                }
            }
        }
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if !reach[j] && self.px[j] == 0 {
                    reach[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        for (p, r) in self.px.iter_mut().zip(&reach) {
            if !*r {
                *p = 1;
            }
        }
    }
}

/// Closing, opening (3x3 square) and hole filling.
pub fn refine_morph(mask: &RleMask) -> RleMask {
    if mask.is_empty() {
        return mask.clone();
    }
    let mut crop = Crop::from_mask(mask, 2);
    crop.filter(false);
    crop.filter(true);
    crop.filter(true);
    crop.filter(false);
    crop.fill_holes();
    crop.to_mask(mask.height(), mask.width())
}

/// Refines every label and keeps those whose IoU between the original and
/// the refined mask reaches `iou_keep_threshold`. Kept labels carry the
/// refined mask and [`Stage::Refined`]. Returns the kept labels together with
/// their input indices.
pub fn gate(
    labels: &[PseudoLabel],
    refiner: &dyn MaskRefiner,
    cfg: &RefineConfig,
) -> Result<(Vec<PseudoLabel>, Vec<usize>)> {
    cfg.validate()?;
    let mut kept = Vec::new();
    let mut indices = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let refined = refiner.refine(i, label)?;
        if label.mask.iou(&refined)? >= cfg.iou_keep_threshold {
            let mut out = label.clone().with_mask(refined);
            out.stage = Stage::Refined;
            kept.push(out);
            indices.push(i);
        }
    }
    Ok((kept, indices))
}
