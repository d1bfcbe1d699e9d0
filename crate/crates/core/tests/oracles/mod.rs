//! Slow, obviously-correct reference implementations and random instance
//! generators shared by the integration and acceptance tests.

#![allow(dead_code)]

use entity_forge_core::cluster::{Agglomeration, MergeStep, Snapshot, ThresholdSchedule};
use entity_forge_core::pool::NmsOrdering;
use entity_forge_core::{DenseMask, FeatureGrid, PseudoLabel, RleMask, Stage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- grids

/// Random grid whose features are either small integers (plenty of exact
/// similarity ties) or smooth noise (plenty of near ties).
pub fn random_grid(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> FeatureGrid {
    let quantized = rng.gen_bool(0.5);
    let centres: Vec<Vec<f32>> = (0..4).map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut data = Vec::with_capacity(h * w * c);
    for _ in 0..h * w {
        let base = &centres[rng.gen_range(0..centres.len())];
        for &b in base {
            let v: f32 = if quantized {
                rng.gen_range(-1..=2) as f32
            } else {
                b + rng.gen_range(-0.3..0.3)
            };
            data.push(v);
        }
    }
    FeatureGrid::new(h, w, c, 8, data).unwrap()
}

// ------------------------------------------------------ agglomeration

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Agglomeration by full rescan: every step recomputes the similarity of
/// every adjacent pair of live regions from the patch labelling.
pub fn naive_agglomerate(grid: &FeatureGrid, schedule: &ThresholdSchedule) -> Agglomeration {
    let (h, w) = (grid.height(), grid.width());
    let n = h * w;
    let mut label: Vec<usize> = (0..n).collect();
    let mut sums: Vec<Option<Vec<f64>>> =
        (0..n).map(|p| Some(grid.patch(p).iter().map(|&v| v as f64).collect())).collect();
    let mut merges = Vec::new();
    let mut snapshots = Vec::new();

    for &t in schedule.thresholds() {
        loop {
            let mut pairs = std::collections::BTreeSet::new();
            for r in 0..h {
                for c in 0..w {
                    let p = r * w + c;
                    for q in [if c + 1 < w { Some(p + 1) } else { None }, if r + 1 < h { Some(p + w) } else { None }]
                        .into_iter()
                        .flatten()
                    {
                        let (a, b) = (label[p], label[q]);
                        if a != b {
                            pairs.insert((a.min(b), a.max(b)));
                        }
                    }
                }
            }
            let mut best: Option<(f64, usize, usize)> = None;
            for &(a, b) in &pairs {
                let s = cosine(sums[a].as_ref().unwrap(), sums[b].as_ref().unwrap());
                if best.is_none_or(|(bs, _, _)| s > bs) {
                    best = Some((s, a, b));
                }
            }
            match best {
                Some((s, a, b)) if s >= t => {
                    let k = sums.len();
                    let sa = sums[a].take().unwrap();
                    let sb = sums[b].take().unwrap();
                    sums.push(Some(sa.iter().zip(&sb).map(|(x, y)| x + y).collect()));
                    for l in label.iter_mut() {
                        if *l == a || *l == b {
                            *l = k;
                        }
                    }
                    merges.push(MergeStep { a, b, merged: k, similarity: s });
                }
                _ => break,
            }
        }
        let region_count = sums.iter().filter(|s| s.is_some()).count();
        snapshots.push(Snapshot {
            threshold: t,
            grid_height: h,
            grid_width: w,
            patch_regions: label.clone(),
            region_count,
        });
    }
    Agglomeration { snapshots, merges }
}

// ---------------------------------------------------------------- masks

pub fn random_dense(rng: &mut impl Rng, h: usize, w: usize) -> DenseMask {
    let p: f64 = rng.gen_range(0.0..1.0);
    DenseMask::from_fn(h, w, |_, _| rng.gen_bool(p))
}

pub fn rect(h: usize, w: usize, x: usize, y: usize, rw: usize, rh: usize) -> DenseMask {
    DenseMask::from_fn(h, w, |r, c| r >= y && r < y + rh && c >= x && c < x + rw)
}

pub fn dense_iou(a: &DenseMask, b: &DenseMask) -> f64 {
    let (mut inter, mut uni) = (0u64, 0u64);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as u64;
        uni += (x || y) as u64;
    }
    if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    }
}

pub fn label(mask: DenseMask, threshold: f64) -> PseudoLabel {
    PseudoLabel::new(RleMask::encode(&mask), Stage::Global, threshold)
}

/// Pool of rectangles and jittered near-duplicates so that suppression
/// actually happens.
pub fn random_pool(rng: &mut impl Rng, size: usize, count: usize) -> Vec<PseudoLabel> {
    let thresholds = [0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
    let mut pool: Vec<PseudoLabel> = Vec::with_capacity(count);
    for _ in 0..count {
        let t = *thresholds.choose(rng).unwrap();
        let mask = if !pool.is_empty() && rng.gen_bool(0.5) {
            let base = pool[rng.gen_range(0..pool.len())].mask.decode();
            let mut m = base.clone();
            for _ in 0..rng.gen_range(0..6) {
                let (y, x) = (rng.gen_range(0..size), rng.gen_range(0..size));
                let v = m.get(y, x);
                m.set(y, x, !v);
            }
            m
        } else {
            let (x, y) = (rng.gen_range(0..size - 1), rng.gen_range(0..size - 1));
            let rw = rng.gen_range(1..=size - x);
            let rh = rng.gen_range(1..=size - y);
            rect(size, size, x, y, rw, rh)
        };
        pool.push(label(mask, t));
    }
    pool
}

/// All-pairs NMS on dense masks with its own ordering code.
pub fn naive_nms(pool: &[PseudoLabel], iou_threshold: f64, ordering: NmsOrdering) -> Vec<usize> {
    let dense: Vec<DenseMask> = pool.iter().map(|l| l.mask.decode()).collect();
    let area: Vec<u64> = dense.iter().map(DenseMask::count).collect();
    let mut keyed: Vec<(usize, usize)> = (0..pool.len()).map(|i| (i, i)).collect();
    // Insertion sort: stable by construction.
    let before = |i: usize, j: usize| -> bool {
        match ordering {
            NmsOrdering::AreaDesc => area[i] > area[j],
            NmsOrdering::ThresholdThenArea => {
                let (ti, tj) = (pool[i].merge_threshold, pool[j].merge_threshold);
                ti < tj || (ti == tj && area[i] > area[j])
            }
        }
    };
    for k in 1..keyed.len() {
        let mut m = k;
        while m > 0 && before(keyed[m].0, keyed[m - 1].0) {
            keyed.swap(m, m - 1);
            m -= 1;
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, _) in keyed {
        if kept.iter().all(|&k| dense_iou(&dense[i], &dense[k]) < iou_threshold) {
            kept.push(i);
        }
    }
    kept
}

// ------------------------------------------------------------ matching

/// Size of a maximum bipartite matching over pairs with `iou >= t`, by
/// exhaustive search over ground-truth subsets.
pub fn max_matching(ious: &[Vec<f64>], gt_count: usize, t: f64) -> usize {
    fn go(p: usize, used: u32, ious: &[Vec<f64>], gt_count: usize, t: f64) -> usize {
        if p == ious.len() {
            return 0;
        }
        let mut best = go(p + 1, used, ious, gt_count, t);
        for g in 0..gt_count {
            if used & (1 << g) == 0 && ious[p][g] >= t {
                best = best.max(1 + go(p + 1, used | (1 << g), ious, gt_count, t));
            }
        }
        best
    }
    go(0, 0, ious, gt_count, t)
}

/// Greedy COCO matching written independently: `order` lists prediction
/// indices from the highest score down.
pub fn greedy_matching(ious: &[Vec<f64>], order: &[usize], gt_count: usize, t: f64) -> usize {
    let mut taken = vec![false; gt_count];
    let mut matched = 0;
    for &p in order {
        let mut best: Option<usize> = None;
        for g in 0..gt_count {
            if !taken[g] && ious[p][g] >= t && best.is_none_or(|b| ious[p][g] > ious[p][b]) {
                best = Some(g);
            }
        }
        if let Some(g) = best {
            taken[g] = true;
            matched += 1;
        }
    }
    matched
}

/// Whether every prediction and every ground truth has at most one partner
/// at threshold `t`, the case where greedy and maximum matching coincide.
pub fn degree_at_most_one(ious: &[Vec<f64>], gt_count: usize, t: f64) -> bool {
    let preds_ok = ious.iter().all(|row| row.iter().filter(|&&v| v >= t).count() <= 1);
    let gts_ok = (0..gt_count).all(|g| ious.iter().filter(|row| row[g] >= t).count() <= 1);
    preds_ok && gts_ok
}

/// Ground truth rectangles on a `size x size` canvas plus predictions that
/// jitter them, with distinct random scores.
pub fn random_eval_instance(rng: &mut impl Rng, size: usize) -> (Vec<PseudoLabel>, Vec<PseudoLabel>) {
    let n_gt = rng.gen_range(0..=6);
    let n_pred = rng.gen_range(0..=6);
    let gts: Vec<PseudoLabel> = (0..n_gt)
        .map(|_| {
            let (rw, rh) = (rng.gen_range(4..=size / 2), rng.gen_range(4..=size / 2));
            let (x, y) = (rng.gen_range(0..=size - rw), rng.gen_range(0..=size - rh));
            label(rect(size, size, x, y, rw, rh), 0.5)
        })
        .collect();
    let mut scores: Vec<usize> = (1..=n_pred).collect();
    scores.shuffle(rng);
    let preds = (0..n_pred)
        .map(|i| {
            let mask = if !gts.is_empty() && rng.gen_bool(0.75) {
                let b = gts[rng.gen_range(0..gts.len())].bbox;
                let j = |v: usize, rng: &mut dyn rand::RngCore| {
                    (v as i64 + rng.gen_range(-2..=2)).clamp(0, size as i64) as usize
                };
                let x0 = j(b.x, rng);
                let y0 = j(b.y, rng);
                let x1 = j(b.x + b.w, rng).max(x0 + 1).min(size);
                let y1 = j(b.y + b.h, rng).max(y0 + 1).min(size);
                rect(size, size, x0.min(size - 1), y0.min(size - 1), x1 - x0.min(size - 1), y1 - y0.min(size - 1))
            } else {
                random_dense(rng, size, size)
            };
            label(mask, 0.5).with_score(scores[i] as f64 / (n_pred + 1) as f64)
        })
        .collect();
    (preds, gts)
}

// ------------------------------------------------------------- calculus

pub const FD_STEP: f64 = 1e-6;

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Relative error with a floor on the denominator, so that gradients that
/// are essentially zero are compared in absolute terms.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

// ----------------------------------------------------------- morphology

/// Closing, opening and hole filling over the whole image. Outside pixels
/// count as unset for dilation and are ignored by erosion.
pub fn dense_refine(m: &DenseMask) -> DenseMask {
    let (h, w) = (m.height(), m.width());
    let step = |src: &DenseMask, erode: bool| -> DenseMask {
        DenseMask::from_fn(h, w, |r, c| {
            let mut acc = erode;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (y, x) = (r as i64 + dr, c as i64 + dc);
                    if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
                        continue;
                    }
                    let v = src.get(y as usize, x as usize);
                    acc = if erode { acc && v } else { acc || v };
                }
            }
            acc
        })
    };
    let m = step(&step(m, false), true);
    let m = step(&step(&m, true), false);
    let mut outside = vec![false; h * w];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) && !m.get(r, c) {
                outside[r * w + c] = true;
                stack.push((r, c));
            }
        }
    }
    while let Some((r, c)) = stack.pop() {
        let nbrs = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for (y, x) in nbrs {
            if y < h && x < w && !outside[y * w + x] && !m.get(y, x) {
                outside[y * w + x] = true;
                stack.push((y, x));
            }
        }
    }
    DenseMask::from_fn(h, w, |r, c| !outside[r * w + c])
}

// --------------------------------------------------------------- forests

/// Random parent vector over `n` nodes: nodes are placed in a random order
/// and each picks no parent or one placed before it.
pub fn random_forest(rng: &mut impl Rng, n: usize) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parent = vec![None; n];
    for k in 1..n {
        if rng.gen_bool(0.7) {
            parent[order[k]] = Some(order[rng.gen_range(0..k)]);
        }
    }
    parent
}

// ------------------------------------------------------------ synthetic

/// Piecewise-constant feature field over `k` patch-aligned regions.
pub struct Synthetic {
    pub grid: FeatureGrid,
    /// Region index of every patch, row-major.
    pub patch_labels: Vec<usize>,
    pub region_count: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl Synthetic {
    /// Ground-truth masks at pixel resolution, one per region.
    pub fn masks(&self) -> Vec<RleMask> {
        let s = self.grid.patch_stride();
        let (gh, gw) = (self.grid.height(), self.grid.width());
        (0..self.region_count)
            .map(|k| {
                RleMask::encode(&DenseMask::from_fn(gh * s, gw * s, |r, c| {
                    self.patch_labels[(r / s) * gw + c / s] == k
                }))
            })
            .collect()
    }

    /// Largest pairwise cosine similarity between region vectors.
    pub fn max_cross_similarity(&self) -> f64 {
        let v: Vec<Vec<f64>> =
            self.vectors.iter().map(|x| x.iter().map(|&f| f as f64).collect()).collect();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                worst = worst.max(cosine(&v[i], &v[j]));
            }
        }
        worst
    }
}

/// Guillotine partition of a `side x side` patch grid into `k` rectangles,
/// where two adjacent rectangles may fuse into an L-shape. Every region has
/// at least `min_area` patches and more than a ninth of the largest region,
/// so no region is ever suppressed by a union with its neighbours.
pub fn synthetic_layout(rng: &mut impl Rng, side: usize, k: usize, min_area: usize) -> Vec<usize> {
    loop {
        let mut rects = vec![(0usize, 0usize, side, side)];
        let target = k + usize::from(k >= 2 && rng.gen_bool(0.5));
        let mut ok = true;
        while rects.len() < target {
            let i = (0..rects.len()).max_by_key(|&i| rects[i].2 * rects[i].3).unwrap();
            let (x, y, w, h) = rects[i];
            let vertical = if w == h { rng.gen_bool(0.5) } else { w > h };
            let len = if vertical { w } else { h };
            if len < 4 {
                ok = false;
                break;
            }
            let cut = rng.gen_range(len / 4..=len - len / 4).clamp(1, len - 1);
            rects.swap_remove(i);
            if vertical {
                rects.push((x, y, cut, h));
                rects.push((x + cut, y, w - cut, h));
            } else {
                rects.push((x, y, w, cut));
                rects.push((x, y + cut, w, h - cut));
            }
        }
        if !ok {
            continue;
        }
        let mut labels = vec![0usize; side * side];
        for (i, &(x, y, w, h)) in rects.iter().enumerate() {
            for r in y..y + h {
                for c in x..x + w {
                    labels[r * side + c] = i;
                }
            }
        }
        if rects.len() > k {
            // Fuse the first adjacent pair whose union is not a rectangle.
            let mut fused = false;
            'outer: for a in 0..rects.len() {
                for b in a + 1..rects.len() {
                    let (ra, rb) = (rects[a], rects[b]);
                    let touch_v = (ra.0 + ra.2 == rb.0 || rb.0 + rb.2 == ra.0)
                        && ra.1 < rb.1 + rb.3
                        && rb.1 < ra.1 + ra.3;
                    let touch_h = (ra.1 + ra.3 == rb.1 || rb.1 + rb.3 == ra.1)
                        && ra.0 < rb.0 + rb.2
                        && rb.0 < ra.0 + ra.2;
                    let rectangular = (touch_v && ra.1 == rb.1 && ra.3 == rb.3)
                        || (touch_h && ra.0 == rb.0 && ra.2 == rb.2);
                    if (touch_v || touch_h) && !rectangular {
                        for l in labels.iter_mut() {
                            if *l == b {
                                *l = a;
                            }
                        }
                        fused = true;
                        break 'outer;
                    }
                }
            }
            if !fused {
                continue;
            }
            let mut remap = std::collections::BTreeMap::new();
            for l in labels.iter_mut() {
                let next = remap.len();
                *l = *remap.entry(*l).or_insert(next);
            }
        }
        let mut areas = vec![0usize; k];
        for &l in &labels {
            areas[l] += 1;
        }
        let max = *areas.iter().max().unwrap();
        if areas.iter().all(|&a| a >= min_area && a * 9 > max) {
            return labels;
        }
    }
}

/// `k` region vectors in `c` dimensions with pairwise cosine similarity at
/// most `1 - gap`. Gaps close to 1 use scaled basis vectors, which are
/// exactly orthogonal.
pub fn separated_vectors(rng: &mut impl Rng, k: usize, c: usize, gap: f64) -> Vec<Vec<f32>> {
    assert!(k <= c);
    if gap > 0.9 {
        return (0..k)
            .map(|i| (0..c).map(|j| if i == j { rng.gen_range(0.5f32..2.0) } else { 0.0 }).collect())
            .collect();
    }
    let mut out: Vec<Vec<f32>> = Vec::with_capacity(k);
    while out.len() < k {
        let v: Vec<f32> = (0..c).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let vf: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let fits = out.iter().all(|o| {
            let of: Vec<f64> = o.iter().map(|&x| x as f64).collect();
            cosine(&vf, &of) <= 1.0 - gap
        });
        if fits && dot(&vf, &vf) > 0.0 {
            out.push(v);
        }
    }
    out
}

pub fn synthetic(rng: &mut impl Rng, side: usize, k: usize, gap: f64, stride: usize) -> Synthetic {
    let patch_labels = synthetic_layout(rng, side, k, 4);
    let channels = 16;
    let vectors = separated_vectors(rng, k, channels, gap);
    let grid = FeatureGrid::from_fn(side, side, channels, stride, |r, c, ch| {
        vectors[patch_labels[r * side + c]][ch]
    })
    .unwrap();
    Synthetic { grid, patch_labels, region_count: k, vectors }
}
