//! Overlay rendering: every label filled with its own hue at half opacity,
//! hierarchy roots outlined in a darker shade of that hue.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use entity_forge_core::PseudoLabel;
use image::{ImageFormat, RgbImage};

use crate::error::{CliError, Result};
use crate::fsio;
use crate::labels::read_label_dir;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
const GOLDEN: f64 = 0.618_033_988_749_895;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderSummary {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<String>,
}

/// Hue of label `index`, spread by the golden ratio so neighbouring indices
/// look different.
pub fn label_hue(index: usize) -> f64 {
    (0.1 + index as f64 * GOLDEN).fract()
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|t| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn find_image(dir: &Path, id: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS.iter().map(|e| dir.join(format!("{id}.{e}"))).find(|p| p.is_file())
}

/// Nearest-neighbour lookup of label pixels from image coordinates.
struct Scaled<'a> {
    label: &'a PseudoLabel,
    dense: Vec<bool>,
}

impl<'a> Scaled<'a> {
    fn new(label: &'a PseudoLabel, ih: usize, iw: usize) -> Self {
        let (mh, mw) = label.mask.dims();
        let bits = label.mask.decode();
        let mut dense = vec![false; ih * iw];
        for y in 0..ih {
            let my = y * mh / ih;
            for x in 0..iw {
                dense[y * iw + x] = bits.get(my, x * mw / iw);
            }
        }
        Scaled { label, dense }
    }
}

/// Draws `labels` over `base`. Larger labels go first so nested parts stay
/// visible. `roots[i]` marks labels that get an outline.
pub fn overlay(base: &RgbImage, labels: &[PseudoLabel], roots: &[bool]) -> RgbImage {
    let mut img = base.clone();
    let (iw, ih) = (img.width() as usize, img.height() as usize);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[b].area_px.cmp(&labels[a].area_px));
    let mut outlines = Vec::new();
    for &i in &order {
        let scaled = Scaled::new(&labels[i], ih, iw);
        debug_assert_eq!(scaled.label.area_px, labels[i].area_px);
        let fill = hsv_to_rgb(label_hue(i), 0.75, 0.95);
        for (p, px) in img.pixels_mut().enumerate() {
            if scaled.dense[p] {
                for (c, f) in px.0.iter_mut().zip(fill) {
                    *c = (*c as u16 + f as u16).div_ceil(2) as u8;
                }
            }
        }
        if roots.get(i).copied().unwrap_or(false) {
            outlines.push((i, scaled.dense));
        }
    }
    for (i, dense) in outlines {
        let edge = hsv_to_rgb(label_hue(i), 0.75, 0.45);
        for y in 0..ih {
            for x in 0..iw {
                if !dense[y * iw + x] {
                    continue;
                }
                // Only boundaries inside the image; the frame is not an edge.
                let boundary = (x > 0 && !dense[y * iw + x - 1])
                    || (x + 1 < iw && !dense[y * iw + x + 1])
                    || (y > 0 && !dense[(y - 1) * iw + x])
                    || (y + 1 < ih && !dense[(y + 1) * iw + x]);
                if boundary {
                    img.get_pixel_mut(x as u32, y as u32).0 = edge;
                }
            }
        }
    }
    img
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| CliError::Usage(format!("png encoding failed: {e}")))?;
    Ok(buf.into_inner())
}

/// Writes `<out_dir>/<image_id>.png` for every label file whose image is
/// found in `image_dir`. Missing or undecodable images are skipped with a
/// warning.
pub fn render_overlays(image_dir: &Path, labels_dir: &Path, out_dir: &Path) -> Result<RenderSummary> {
    let files = read_label_dir(labels_dir)?;
    fsio::create_dir(out_dir)?;
    let mut summary = RenderSummary::default();
    for (id, (path, file)) in files {
        let Some(image_path) = find_image(image_dir, &id) else {
            log::warn!("{id}: no image in {}", image_dir.display());
            summary.skipped.push(id);
            continue;
        };
        let base = match image::open(&image_path) {
            Ok(i) => i.to_rgb8(),
            Err(e) => {
                log::warn!("{}: {e}", image_path.display());
                summary.skipped.push(id);
                continue;
            }
        };
        let (labels, parents) = file.decode(&path)?;
        let roots: Vec<bool> = parents.iter().map(Option::is_none).collect();
        let img = overlay(&base, &labels, &roots);
        let out = out_dir.join(format!("{id}.png"));
        fsio::write_atomic(&out, &encode_png(&img)?)?;
        summary.written.push(out);
    }
    Ok(summary)
}
