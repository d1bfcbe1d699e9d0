//! Run-length encoded binary masks.
//!
//! Pixels are addressed row-major (`index = y * width + x`). Runs alternate
//! off/on and always start with an off-run, which is zero when the first
//! pixel is set. The canonical form has no zero-length runs after the first
//! and no trailing zero run.

use alloc::vec;
use alloc::vec::Vec;

use crate::label::BBox;
use crate::{Error, Result};

/// Uncompressed bit grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl DenseMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![false; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self { height, width, bits }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::LengthMismatch { left: bits.len(), right: height * width });
        }
        Ok(Self { height, width, bits })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    height: usize,
    width: usize,
    runs: Vec<u32>,
}

impl RleMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, runs: vec![(height * width) as u32] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, runs: vec![0, (height * width) as u32] }
    }

    /// Validates a run list and brings it into canonical form.
    pub fn from_runs(height: usize, width: usize, runs: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension);
        }
        let total = (height as u64) * (width as u64);
        let run_sum: u64 = runs.iter().map(|&r| r as u64).sum();
        if run_sum != total {
            return Err(Error::CorruptMask { run_sum, expected: total });
        }
        if total > u32::MAX as u64 {
            return Err(Error::SizeOverflow);
        }
        let raw = Self { height, width, runs };
        Ok(Self::from_intervals(height, width, raw.intervals()))
    }

    /// Builds a mask from sorted, non-overlapping half-open pixel intervals.
    /// Touching intervals are merged.
    pub fn from_intervals(
        height: usize,
        width: usize,
        intervals: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut builder = RleBuilder::new(height, width);
        for (start, end) in intervals {
            builder.push(start, end);
        }
        builder.finish()
    }

    pub fn encode(mask: &DenseMask) -> Self {
        let mut builder = RleBuilder::new(mask.height, mask.width);
        let mut start = None;
        for (i, &on) in mask.bits.iter().enumerate() {
            match (on, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    builder.push(s, i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            builder.push(s, mask.bits.len());
        }
        builder.finish()
    }

    pub fn decode(&self) -> DenseMask {
        let mut out = DenseMask::new(self.height, self.width);
        for (s, e) in self.intervals() {
            out.bits[s..e].iter_mut().for_each(|b| *b = true);
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Half-open intervals of set pixels, in increasing order.
    pub fn intervals(&self) -> Intervals<'_> {
        Intervals { runs: &self.runs, index: 0, pos: 0 }
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Tight bounding box; all zeros for an empty mask.
    pub fn bbox(&self) -> BBox {
        let w = self.width;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut any = false;
        for (s, e) in self.intervals() {
            any = true;
            let (ys, xs) = (s / w, s % w);
            let (ye, xe) = ((e - 1) / w, (e - 1) % w);
            y0 = y0.min(ys);
            y1 = y1.max(ye);
            if ys == ye {
                x0 = x0.min(xs);
                x1 = x1.max(xe);
            } else {
                x0 = 0;
                x1 = w - 1;
            }
        }
        if !any {
            return BBox::default();
        }
        BBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 }
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { left: self.dims(), right: other.dims() });
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &Self) -> Result<u64> {
        self.check_dims(other)?;
        let mut total = 0u64;
        let mut a = self.intervals().peekable();
        let mut b = other.intervals().peekable();
        while let (Some(&(as_, ae)), Some(&(bs, be))) = (a.peek(), b.peek()) {
            let lo = as_.max(bs);
            let hi = ae.min(be);
            if hi > lo {
                total += (hi - lo) as u64;
            }
            if ae <= be {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(total)
    }

    /// Intersection over union. Two empty masks have IoU 1.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(1.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Whether any set pixel lies on the outermost ring of the image.
    pub fn touches_border(&self) -> bool {
        let (h, w) = self.dims();
        self.intervals().any(|(s, e)| {
            let (ys, xs) = (s / w, s % w);
            let (ye, xe) = ((e - 1) / w, (e - 1) % w);
            ys == 0 || ye == h - 1 || ys != ye || xs == 0 || xe == w - 1
        })
    }

    /// Set-pixel column spans of row `y`, as `(x_start, x_end)` half-open pairs.
    pub fn row_spans(&self, y: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        let row_start = y * w;
        let row_end = row_start + w;
        self.intervals()
            .skip_while(move |&(_, e)| e <= row_start)
            .take_while(move |&(s, _)| s < row_end)
            .map(move |(s, e)| (s.max(row_start) - row_start, e.min(row_end) - row_start))
    }
}

pub struct Intervals<'a> {
    runs: &'a [u32],
    index: usize,
    pos: usize,
}

impl Iterator for Intervals<'_> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        while self.index + 1 < self.runs.len() {
            let off = self.runs[self.index] as usize;
            let on = self.runs[self.index + 1] as usize;
            self.index += 2;
            let start = self.pos + off;
            self.pos = start + on;
            if on > 0 {
                return Some((start, self.pos));
            }
        }
        None
    }
}

/// Incremental encoder for masks produced in increasing pixel order.
#[derive(Debug, Clone)]
pub struct RleBuilder {
    height: usize,
    width: usize,
    runs: Vec<u32>,
    cursor: usize,
}

impl RleBuilder {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, runs: Vec::new(), cursor: 0 }
    }

    /// Appends the half-open interval `[start, end)`. Intervals must arrive in
    /// increasing order and may touch the previous one.
    pub fn push(&mut self, start: usize, end: usize) {
        if end <= start {
            return;
        }
        debug_assert!(start >= self.cursor, "intervals must be pushed in order");
        debug_assert!(end <= self.height * self.width);
        if start == self.cursor && !self.runs.is_empty() {
            *self.runs.last_mut().unwrap() += (end - start) as u32;
        } else {
            self.runs.push((start - self.cursor) as u32);
            self.runs.push((end - start) as u32);
        }
        self.cursor = end;
    }

    pub fn finish(mut self) -> RleMask {
        let total = self.height * self.width;
        if self.cursor < total || self.runs.is_empty() {
            self.runs.push((total - self.cursor) as u32);
        }
        RleMask { height: self.height, width: self.width, runs: self.runs }
    }
}
