use crate::rle::RleMask;

/// Axis-aligned pixel box `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn intersects(&self, other: &BBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

/// Pipeline stage that produced a pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Global,
    Local,
    Refined,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Global => "global",
            Stage::Local => "local",
            Stage::Refined => "refined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(Stage::Global),
            "local" => Some(Stage::Local),
            "refined" => Some(Stage::Refined),
            _ => None,
        }
    }
}

/// A machine-generated mask plus its provenance.
///
/// `area_px` and `bbox` are derived from the mask on construction and kept in
/// sync by [`PseudoLabel::with_mask`].
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub mask: RleMask,
    pub area_px: u64,
    pub bbox: BBox,
    pub stage: Stage,
    /// Merging threshold of the snapshot the region was recorded at.
    pub merge_threshold: f64,
    pub score: Option<f64>,
}

impl PseudoLabel {
    pub fn new(mask: RleMask, stage: Stage, merge_threshold: f64) -> Self {
        let area_px = mask.area();
        let bbox = mask.bbox();
        Self { mask, area_px, bbox, stage, merge_threshold, score: None }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    /// Replaces the mask, recomputing area and bounding box.
    pub fn with_mask(mut self, mask: RleMask) -> Self {
        self.area_px = mask.area();
        self.bbox = mask.bbox();
        self.mask = mask;
        self
    }

    /// IoU with a cheap rejection when bounding boxes do not meet.
    pub fn iou(&self, other: &PseudoLabel) -> crate::Result<f64> {
        if self.mask.dims() != other.mask.dims() {
            return Err(crate::Error::DimensionMismatch {
                left: self.mask.dims(),
                right: other.mask.dims(),
            });
        }
        if self.area_px > 0 && other.area_px > 0 && !self.bbox.intersects(&other.bbox) {
            return Ok(0.0);
        }
        self.mask.iou(&other.mask)
    }
}
