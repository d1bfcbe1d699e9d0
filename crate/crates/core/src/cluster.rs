//! Bottom-up agglomerative clustering of patches into regions.
//!
//! Every patch starts as its own region. The globally most similar pair of
//! 4-adjacent regions is merged until the best available similarity drops
//! below each threshold of a decreasing schedule, at which point the current
//! partition is recorded as a snapshot.
//!
//! Regions keep the sum of their members' features rather than the mean.
//! Cosine similarity is scale invariant, so the similarity of two sums equals
//! the similarity of the area-weighted means, and adding sums on merge is
//! exactly the weighted-mean update.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::grid::FeatureGrid;
use crate::label::{PseudoLabel, Stage};
use crate::rle::RleBuilder;
use crate::{Error, Result};

pub const DEFAULT_SCHEDULE: [f64; 6] = [0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

/// Strictly decreasing merging thresholds in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule {
    thresholds: Vec<f64>,
}

impl ThresholdSchedule {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidConfig("threshold schedule is empty"));
        }
        if let Some(&t) = thresholds.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::OutOfRange { what: "merge threshold", value: t });
        }
        if thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("threshold schedule must be strictly decreasing"));
        }
        Ok(Self { thresholds })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self { thresholds: DEFAULT_SCHEDULE.to_vec() }
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch { left: f.len(), right: g.len() });
    }
    Ok(cosine_with_norms(f, norm(f), g, norm(g)))
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

fn cosine_with_norms(f: &[f64], nf: f64, g: &[f64], ng: f64) -> f64 {
    if nf == 0.0 || ng == 0.0 {
        return 0.0;
    }
    let dot: f64 = f.iter().zip(g).map(|(a, b)| a * b).sum();
    dot / (nf * ng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub area_patches: u64,
    pub feature_sum: Vec<f64>,
    norm: f64,
    anchor: usize,
}

impl Region {
    pub fn mean_feature(&self) -> Vec<f64> {
        let a = self.area_patches as f64;
        self.feature_sum.iter().map(|s| s / a).collect()
    }
}

/// Heap entry. Orders by similarity, then prefers the lexicographically
/// smaller `(a, b)` pair.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    similarity: f64,
    a: usize,
    b: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.similarity
            .total_cmp(&other.similarity)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

/// One merge of the agglomeration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub merged: usize,
    pub similarity: f64,
}

/// Partition of the patch grid recorded when the best similarity fell below
/// `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub threshold: f64,
    pub grid_height: usize,
    pub grid_width: usize,
    /// Region id of every patch, row-major.
    pub patch_regions: Vec<usize>,
    pub region_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agglomeration {
    pub snapshots: Vec<Snapshot>,
    pub merges: Vec<MergeStep>,
}

/// Mutable clustering state for one image.
#[derive(Debug, Clone)]
pub struct RegionGraph {
    grid_height: usize,
    grid_width: usize,
    uf_parent: Vec<usize>,
    uf_size: Vec<u32>,
    root_region: Vec<usize>,
    regions: Vec<Option<Region>>,
    adjacency: Vec<BTreeSet<usize>>,
    heap: BinaryHeap<Candidate>,
    alive: usize,
}

impl RegionGraph {
    /// One region per patch, 4-connected, heap primed with every adjacent pair.
    pub fn build(grid: &FeatureGrid) -> Self {
        let (h, w) = (grid.height(), grid.width());
        let n = h * w;
        let mut regions = Vec::with_capacity(2 * n);
        for p in 0..n {
            let feature_sum: Vec<f64> = grid.patch(p).iter().map(|&v| v as f64).collect();
            let norm = norm(&feature_sum);
            regions.push(Some(Region { id: p, area_patches: 1, feature_sum, norm, anchor: p }));
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        let mut heap = BinaryHeap::with_capacity(2 * n);
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                let link = |q: usize, adjacency: &mut Vec<BTreeSet<usize>>| {
                    adjacency[p].insert(q);
                    adjacency[q].insert(p);
                };
                if c + 1 < w {
                    link(p + 1, &mut adjacency);
                }
                if r + 1 < h {
                    link(p + w, &mut adjacency);
                }
            }
        }
        let mut graph = Self {
            grid_height: h,
            grid_width: w,
            uf_parent: (0..n).collect(),
            uf_size: vec![1; n],
            root_region: (0..n).collect(),
            regions,
            adjacency,
            heap: BinaryHeap::new(),
            alive: n,
        };
        for p in 0..n {
            for &q in graph.adjacency[p].range(p + 1..) {
                heap.push(Candidate { similarity: graph.similarity(p, q), a: p, b: q });
            }
        }
        graph.heap = heap;
        graph
    }

    pub fn region_count(&self) -> usize {
        self.alive
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    pub fn region(&self, id: usize) -> Option<&Region> {
        self.regions.get(id).and_then(Option::as_ref)
    }

    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.get(id).into_iter().flatten().copied()
    }

    fn similarity(&self, a: usize, b: usize) -> f64 {
        let (ra, rb) = (self.regions[a].as_ref().unwrap(), self.regions[b].as_ref().unwrap());
        cosine_with_norms(&ra.feature_sum, ra.norm, &rb.feature_sum, rb.norm)
    }

    fn find(&mut self, mut p: usize) -> usize {
        let mut root = p;
        while self.uf_parent[root] != root {
            root = self.uf_parent[root];
        }
        while self.uf_parent[p] != root {
            let next = self.uf_parent[p];
            self.uf_parent[p] = root;
            p = next;
        }
        root
    }

    fn union(&mut self, p: usize, q: usize) -> usize {
        let (mut p, mut q) = (self.find(p), self.find(q));
        if self.uf_size[p] < self.uf_size[q] {
            core::mem::swap(&mut p, &mut q);
        }
        self.uf_parent[q] = p;
        self.uf_size[p] += self.uf_size[q];
        p
    }

    /// Best live candidate, discarding entries that reference merged-away
    /// regions. Region ids are never reused, so a live pair's similarity is
    /// always current.
    fn peek_best(&mut self) -> Option<Candidate> {
        while let Some(&top) = self.heap.peek() {
            if self.regions[top.a].is_some() && self.regions[top.b].is_some() {
                return Some(top);
            }
            self.heap.pop();
        }
        None
    }

    fn merge(&mut self, a: usize, b: usize) -> usize {
        let k = self.regions.len();
        let ra = self.regions[a].take().unwrap();
        let rb = self.regions[b].take().unwrap();
        let feature_sum: Vec<f64> =
            ra.feature_sum.iter().zip(&rb.feature_sum).map(|(x, y)| x + y).collect();
        let norm = norm(&feature_sum);
        self.regions.push(Some(Region {
            id: k,
            area_patches: ra.area_patches + rb.area_patches,
            feature_sum,
            norm,
            anchor: ra.anchor,
        }));

        let root = self.union(ra.anchor, rb.anchor);
        self.root_region[root] = k;

        let na = core::mem::take(&mut self.adjacency[a]);
        let nb = core::mem::take(&mut self.adjacency[b]);
        let mut merged: BTreeSet<usize> = na.union(&nb).copied().collect();
        merged.remove(&a);
        merged.remove(&b);
        for &n in &merged {
            let adj = &mut self.adjacency[n];
            adj.remove(&a);
            adj.remove(&b);
            adj.insert(k);
            self.heap.push(Candidate { similarity: self.similarity(n, k), a: n, b: k });
        }
        self.adjacency.push(merged);
        self.alive -= 1;
        k
    }

    fn snapshot(&mut self, threshold: f64) -> Snapshot {
        let n = self.grid_height * self.grid_width;
        let patch_regions = (0..n)
            .map(|p| {
                let root = self.find(p);
                self.root_region[root]
            })
            .collect();
        Snapshot {
            threshold,
            grid_height: self.grid_height,
            grid_width: self.grid_width,
            patch_regions,
            region_count: self.alive,
        }
    }

    /// Runs the merge loop to completion of `schedule`.
    ///
    /// A snapshot for threshold `t` fires as soon as the best remaining
    /// similarity is strictly below `t` (or no adjacent pair is left).
    pub fn agglomerate(mut self, schedule: &ThresholdSchedule) -> Agglomeration {
        let mut snapshots = Vec::with_capacity(schedule.thresholds().len());
        let mut merges = Vec::new();
        let mut pending = schedule.thresholds().iter().copied().peekable();
        while let Some(&threshold) = pending.peek() {
            let best = self.peek_best();
            match best {
                Some(c) if c.similarity >= threshold => {
                    self.heap.pop();
                    let merged = self.merge(c.a, c.b);
                    merges.push(MergeStep { a: c.a, b: c.b, merged, similarity: c.similarity });
                }
                _ => {
                    snapshots.push(self.snapshot(threshold));
                    pending.next();
                }
            }
        }
        Agglomeration { snapshots, merges }
    }
}

/// Expands a patch partition into one pixel mask per region.
///
/// Regions are emitted in order of their first patch (row-major). Each patch
/// covers a `patch_stride x patch_stride` pixel block.
pub fn regions_to_masks(snapshot: &Snapshot, patch_stride: usize) -> Vec<PseudoLabel> {
    let (gh, gw) = (snapshot.grid_height, snapshot.grid_width);
    let (ph, pw) = (gh * patch_stride, gw * patch_stride);

    let mut compact = alloc::collections::BTreeMap::new();
    let labels: Vec<usize> = snapshot
        .patch_regions
        .iter()
        .map(|&id| {
            let next = compact.len();
            *compact.entry(id).or_insert(next)
        })
        .collect();
    let mut builders = vec![RleBuilder::new(ph, pw); compact.len()];

    for pr in 0..gh {
        let row = &labels[pr * gw..(pr + 1) * gw];
        let mut segments = Vec::new();
        let mut start = 0;
        for c in 1..=gw {
            if c == gw || row[c] != row[start] {
                segments.push((row[start], start * patch_stride, c * patch_stride));
                start = c;
            }
        }
        for y in pr * patch_stride..(pr + 1) * patch_stride {
            for &(label, x0, x1) in &segments {
                builders[label].push(y * pw + x0, y * pw + x1);
            }
        }
    }

    builders
        .into_iter()
        .map(|b| PseudoLabel::new(b.finish(), Stage::Global, snapshot.threshold))
        .collect()
}

/// Builds the graph for `grid` and agglomerates it.
pub fn cluster_grid(grid: &FeatureGrid, schedule: &ThresholdSchedule) -> Agglomeration {
    RegionGraph::build(grid).agglomerate(schedule)
}
