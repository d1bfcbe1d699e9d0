//! Hierarchy forests over pseudo-labels.
//!
//! Two constructions are provided: from pixel coverage between masks
//! ([`build_forest`]), and from a predicted ancestor matrix
//! ([`forest_from_matrix`]). In matrices, entry `[j][i]` marks `j` as an
//! ancestor of `i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::label::PseudoLabel;
use crate::rle::RleMask;
use crate::{Error, Result};

pub const DEFAULT_COVER_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub cover_fraction: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self { cover_fraction: DEFAULT_COVER_FRACTION }
    }
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cover_fraction > 0.5 && self.cover_fraction <= 1.0) {
            return Err(Error::OutOfRange { what: "cover fraction", value: self.cover_fraction });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HierarchyForest {
    pub parent: Vec<Option<usize>>,
    /// Sorted ancestor indices of every node.
    pub ancestors: Vec<Vec<usize>>,
}

impl HierarchyForest {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.parent.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i)
    }

    /// Forest given only by parent links; ancestor sets are the transitive
    /// closure of the links. Returns `None` if the links contain a cycle or an
    /// out-of-range index.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Option<Self> {
        let n = parent.len();
        let mut ancestors = Vec::with_capacity(n);
        for i in 0..n {
            let mut chain = Vec::new();
            let mut cur = parent[i];
            while let Some(p) = cur {
                if p >= n || p == i || chain.contains(&p) || chain.len() > n {
                    return None;
                }
                chain.push(p);
                cur = parent[p];
            }
            chain.sort_unstable();
            ancestors.push(chain);
        }
        Some(Self { parent, ancestors })
    }

    /// Indicator matrix of the ancestor sets, `m[j][i] = 1` iff `j` is an
    /// ancestor of `i`.
    pub fn ancestor_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, anc) in self.ancestors.iter().enumerate() {
            for &j in anc {
                m[j][i] = 1.0;
            }
        }
        m
    }
}

/// Fraction of `i`'s pixels that are also in `j`.
pub fn coverage(i: &RleMask, j: &RleMask) -> Result<f64> {
    let area = i.area();
    if area == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(i.intersection_area(j)? as f64 / area as f64)
}

/// `j` is an ancestor of `i` iff `coverage(i, j) >= cover` and
/// `coverage(j, i) < cover`. The parent is the smallest ancestor by area,
/// ties going to the lower index.
pub fn build_forest(labels: &[PseudoLabel], cfg: &CoverageConfig) -> Result<HierarchyForest> {
    cfg.validate()?;
    let n = labels.len();
    let mut ancestors = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&labels[i], &labels[j]);
            if a.area_px == 0 || b.area_px == 0 {
                if a.mask.dims() != b.mask.dims() {
                    return Err(Error::DimensionMismatch { left: a.mask.dims(), right: b.mask.dims() });
                }
                continue;
            }
            let inter = if a.bbox.intersects(&b.bbox) {
                a.mask.intersection_area(&b.mask)?
            } else if a.mask.dims() != b.mask.dims() {
                return Err(Error::DimensionMismatch { left: a.mask.dims(), right: b.mask.dims() });
            } else {
                0
            };
            let cov_ab = inter as f64 / a.area_px as f64;
            let cov_ba = inter as f64 / b.area_px as f64;
            let covered_a = cov_ab >= cfg.cover_fraction;
            let covered_b = cov_ba >= cfg.cover_fraction;
            if covered_a && !covered_b {
                ancestors[i].push(j);
            } else if covered_b && !covered_a {
                ancestors[j].push(i);
            }
        }
    }
    let parent = ancestors
        .iter_mut()
        .map(|anc| {
            anc.sort_unstable();
            anc.iter().copied().min_by_key(|&j| (labels[j].area_px, j))
        })
        .collect();
    Ok(HierarchyForest { parent, ancestors })
}

/// Reconstructs a forest from a (possibly noisy) ancestor probability matrix.
///
/// Entries strictly above `binarize_threshold` become edges; the diagonal is
/// ignored. While the relation has a cycle, the least confident edge lying on
/// any cycle is removed (ties: lowest `(j, i)`). The parent of `i` is the
/// ancestor with the largest ancestor set of its own, ties by higher
/// confidence `[j][i]`, then lower index.
pub fn forest_from_matrix(matrix: &[Vec<f64>], binarize_threshold: f64) -> Result<HierarchyForest> {
    let n = matrix.len();
    if let Some(row) = matrix.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { left: (n, n), right: (n, row.len()) });
    }
    let mut edge = vec![vec![false; n]; n];
    for j in 0..n {
        for i in 0..n {
            edge[j][i] = j != i && matrix[j][i] > binarize_threshold;
        }
    }

    loop {
        let comp = strongly_connected(&edge);
        let mut weakest: Option<(f64, usize, usize)> = None;
        for j in 0..n {
            for i in 0..n {
                if edge[j][i] && comp[j] == comp[i] {
                    let w = matrix[j][i];
                    let better = match weakest {
                        None => true,
                        Some((bw, _, _)) => w < bw,
                    };
                    if better {
                        weakest = Some((w, j, i));
                    }
                }
            }
        }
        match weakest {
            Some((_, j, i)) => edge[j][i] = false,
            None => break,
        }
    }

    let ancestors: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| edge[j][i]).collect()).collect();
    let parent = (0..n)
        .map(|i| {
            ancestors[i].iter().copied().max_by(|&a, &b| {
                ancestors[a]
                    .len()
                    .cmp(&ancestors[b].len())
                    .then(matrix[a][i].total_cmp(&matrix[b][i]))
                    .then(b.cmp(&a))
            })
        })
        .collect();
    debug_assert!(topological_order(&edge).is_some());
    Ok(HierarchyForest { parent, ancestors })
}

/// Kahn ordering, lowest index first among ready nodes; `None` on a cycle.
pub fn topological_order(edge: &[Vec<bool>]) -> Option<Vec<usize>> {
    let n = edge.len();
    let mut indegree: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| edge[j][i]).count()).collect();
    let mut ready: alloc::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(j) = ready.pop_first() {
        order.push(j);
        for i in 0..n {
            if edge[j][i] {
                indegree[i] -= 1;
                if indegree[i] == 0 {
                    ready.insert(i);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Component id per node (Tarjan, iterative).
fn strongly_connected(edge: &[Vec<bool>]) -> Vec<usize> {
    let n = edge.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut comps = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, next successor to examine)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if let Some(w) = (*next..n).find(|&w| edge[v][w]) {
                *next = w + 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = comps;
                        if w == v {
                            break;
                        }
                    }
                    comps += 1;
                }
            }
        }
    }
    comp
}
