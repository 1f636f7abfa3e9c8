//! LSH Forest over signed random projections.
//!
//! Each of the `l` trees hashes a point to a `k_m`-bit label, one bit per
//! random direction (`1` iff `⟨v, w⟩ ≥ 0`). A tree is the prefix trie of its
//! labels in which a node splits only when two labels collide on its prefix,
//! so a point's leaf sits one level below its longest common prefix with any
//! other point (capped at `k_m`).
//!
//! Each tree is kept as its labels in sorted order: the points under any trie
//! node form a contiguous run, found by binary search. A query descends every
//! tree to the deepest node on its own label, then ascends all trees in
//! lock-step, level by level, collecting distinct ids until `M = c·l`
//! candidates are gathered or the roots are exhausted. Candidates are ranked
//! by exact cosine similarity.

use std::collections::HashSet;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cosine, dot, norm, rng_for, Matrix};
use crate::par::{self, Execution};
use crate::store::SourceStore;

/// Labels are packed MSB-first into a `u64`.
pub const MAX_LABEL_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct HashFunctionSet {
    dim: usize,
    trees: usize,
    depth: usize,
    seed: u64,
    /// `trees × depth × dim`, unit-norm directions.
    directions: Vec<f64>,
}

/// `l` independent sets of `k_m` isotropic unit directions in `ℝ^m`.
pub fn make_hashes(m: usize, l: usize, k_m: usize, seed: u64) -> Result<HashFunctionSet> {
    if m == 0 || l == 0 || k_m == 0 {
        return Err(Error::invalid("hash dimensions must be positive"));
    }
    if k_m > MAX_LABEL_BITS {
        return Err(Error::invalid(format!("label length {k_m} exceeds {MAX_LABEL_BITS}")));
    }
    let mut rng = rng_for(seed, 2);
    let mut directions = Vec::with_capacity(l * k_m * m);
    for _ in 0..l * k_m {
        // resample on the (measure-zero) all-zero draw
        let v = loop {
            let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm(&v);
            if len > 0.0 {
                break v.into_iter().map(|x| x / len).collect::<Vec<f64>>();
            }
        };
        directions.extend(v);
    }
    Ok(HashFunctionSet {
        dim: m,
        trees: l,
        depth: k_m,
        seed,
        directions,
    })
}

impl HashFunctionSet {
    pub(crate) fn from_parts(dim: usize, trees: usize, depth: usize, seed: u64, directions: Vec<f64>) -> Result<Self> {
        if directions.len() != dim * trees * depth || depth > MAX_LABEL_BITS || depth == 0 {
            return Err(Error::invalid("hash direction table has the wrong size"));
        }
        Ok(HashFunctionSet { dim, trees, depth, seed, directions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> usize {
        self.trees
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn direction(&self, tree: usize, bit: usize) -> &[f64] {
        let start = (tree * self.depth + bit) * self.dim;
        &self.directions[start..start + self.dim]
    }

    fn label(&self, v: &[f64], tree: usize) -> u64 {
        let mut label = 0u64;
        for bit in 0..self.depth {
            if dot(v, self.direction(tree, bit)) >= 0.0 {
                label |= 1u64 << (63 - bit);
            }
        }
        label
    }
}

/// A hash label prefix of `len` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitString {
    bits: u64,
    len: usize,
}

impl BitString {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.bits >> (63 - i) & 1 == 1
    }

    pub fn to_vec(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }
}

/// First `depth` bits of `v`'s label in tree `tree_index`.
pub fn hash_bits(v: &[f64], tree_index: usize, depth: usize, hashes: &HashFunctionSet) -> Result<BitString> {
    if v.len() != hashes.dim {
        return Err(Error::dims("hash input", hashes.dim, v.len()));
    }
    if tree_index >= hashes.trees || depth > hashes.depth {
        return Err(Error::invalid("tree index or depth out of range"));
    }
    let full = hashes.label(v, tree_index);
    Ok(BitString {
        bits: full & prefix_mask(depth),
        len: depth,
    })
}

fn prefix_mask(len: usize) -> u64 {
    if len == 0 {
        0
    } else {
        !0u64 << (64 - len)
    }
}

fn common_prefix(a: u64, b: u64, max: usize) -> usize {
    ((a ^ b).leading_zeros() as usize).min(max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    /// Number of trees `l`.
    pub trees: usize,
    /// Maximum label length `k_m`.
    pub max_depth: usize,
    /// Candidate constant `c`; a query scores at most `c·l` points.
    pub candidates_per_tree: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 10,
            max_depth: 32,
            candidates_per_tree: 10,
        }
    }
}

impl ForestParams {
    pub fn candidate_budget(&self) -> usize {
        self.trees * self.candidates_per_tree
    }
}

/// One prefix tree, stored as its leaf table sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PrefixTree {
    pub(crate) labels: Vec<u64>,
    pub(crate) ids: Vec<u32>,
    pub(crate) leaf_depths: Vec<u8>,
}

impl PrefixTree {
    fn build(mut entries: Vec<(u64, u32)>, max_depth: usize) -> Self {
        // stable on insertion order for equal labels
        entries.sort_by_key(|e| e.0);
        let n = entries.len();
        let labels: Vec<u64> = entries.iter().map(|e| e.0).collect();
        let ids = entries.iter().map(|e| e.1).collect();
        let leaf_depths = (0..n)
            .map(|i| {
                let mut lcp = None;
                if i > 0 {
                    lcp = Some(common_prefix(labels[i - 1], labels[i], max_depth));
                }
                if i + 1 < n {
                    let r = common_prefix(labels[i], labels[i + 1], max_depth);
                    lcp = Some(lcp.map_or(r, |l: usize| l.max(r)));
                }
                match lcp {
                    None => 0,
                    Some(l) => (l + 1).min(max_depth) as u8,
                }
            })
            .collect();
        PrefixTree { labels, ids, leaf_depths }
    }

    /// Sorted-position range of points whose label starts with `label`'s
    /// first `len` bits.
    fn prefix_range(&self, label: u64, len: usize) -> (usize, usize) {
        let mask = prefix_mask(len);
        let p = label & mask;
        let lo = self.labels.partition_point(|&x| (x & mask) < p);
        let hi = self.labels.partition_point(|&x| (x & mask) <= p);
        (lo, hi)
    }

    /// Depth of the deepest trie node on `label`'s path.
    fn descend(&self, label: u64, max_depth: usize) -> usize {
        let pos = self.labels.partition_point(|&x| x < label);
        let mut lcp = 0;
        if pos > 0 {
            lcp = common_prefix(self.labels[pos - 1], label, max_depth);
        }
        if pos < self.labels.len() {
            lcp = lcp.max(common_prefix(self.labels[pos], label, max_depth));
        }
        let (lo, hi) = self.prefix_range(label, lcp);
        if hi - lo == 1 {
            // the path ends at that point's leaf, which may sit above lcp
            self.leaf_depths[lo] as usize
        } else {
            lcp
        }
    }

    /// Sorted position of `id`'s entry.
    fn position_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }
}

/// Top-k neighbors, sorted by similarity descending then id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub neighbors: Vec<(u32, f64)>,
}

impl NeighborSet {
    pub fn ids(&self) -> Vec<u32> {
        self.neighbors.iter().map(|n| n.0).collect()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

fn rank(points: &Matrix, candidates: impl Iterator<Item = u32>, q: &[f64], k: usize) -> NeighborSet {
    let mut scored: Vec<(u32, f64)> = candidates.map(|id| (id, cosine(points.row(id as usize), q))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    NeighborSet { neighbors: scored }
}

/// Exact top-k by cosine similarity, ties broken by ascending id.
pub fn brute_force_knn(points: &SourceStore, q: &[f64], k: usize) -> Result<NeighborSet> {
    if points.is_empty() {
        return Err(Error::EmptyForest);
    }
    if q.len() != points.dim() {
        return Err(Error::dims("brute-force query", points.dim(), q.len()));
    }
    Ok(rank(points.matrix(), 0..points.len() as u32, q, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryStats {
    /// Points scored exactly.
    pub candidates: usize,
    /// Deepest node reached across trees during descent.
    pub max_depth: usize,
}

/// Shorthand for [`LshForest::build`].
pub fn build_forest(points: &SourceStore, l: usize, k_m: usize, c_cand: usize, seed: u64) -> Result<LshForest> {
    let params = ForestParams {
        trees: l,
        max_depth: k_m,
        candidates_per_tree: c_cand,
    };
    LshForest::build(points, params, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshForest {
    pub(crate) hashes: HashFunctionSet,
    pub(crate) params: ForestParams,
    pub(crate) points: Matrix,
    pub(crate) trees: Vec<PrefixTree>,
}

impl LshForest {
    /// Index every row of `points`, in row order.
    pub fn build(points: &SourceStore, params: ForestParams, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyForest);
        }
        if params.candidates_per_tree == 0 {
            return Err(Error::invalid("candidate constant must be positive"));
        }
        let hashes = make_hashes(points.dim(), params.trees, params.max_depth, seed)?;
        let matrix = points.matrix().clone();
        Self::from_hashes(hashes, params, matrix)
    }

    pub(crate) fn from_hashes(hashes: HashFunctionSet, params: ForestParams, points: Matrix) -> Result<Self> {
        let trees = (0..hashes.trees)
            .map(|t| {
                let entries = (0..points.rows())
                    .map(|i| (hashes.label(points.row(i), t), i as u32))
                    .collect();
                PrefixTree::build(entries, hashes.depth)
            })
            .collect();
        Ok(LshForest {
            hashes,
            params,
            points,
            trees,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn params(&self) -> ForestParams {
        self.params
    }

    pub fn hashes(&self) -> &HashFunctionSet {
        &self.hashes
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    /// Depth of `id`'s leaf in tree `tree`.
    pub fn leaf_depth(&self, tree: usize, id: u32) -> Option<usize> {
        let t = self.trees.get(tree)?;
        t.position_of(id).map(|p| t.leaf_depths[p] as usize)
    }

    /// Ids stored in the leaf reached by descending `v`'s label in `tree`.
    pub fn leaf_members(&self, tree: usize, v: &[f64]) -> Vec<u32> {
        let t = &self.trees[tree];
        let label = self.hashes.label(v, tree);
        let depth = t.descend(label, self.hashes.depth);
        let (lo, hi) = t.prefix_range(label, depth);
        t.ids[lo..hi].to_vec()
    }

    pub fn query(&self, q: &[f64], k: usize) -> Result<NeighborSet> {
        self.query_with_stats(q, k).map(|r| r.0)
    }

    pub fn query_with_stats(&self, q: &[f64], k: usize) -> Result<(NeighborSet, QueryStats)> {
        if self.is_empty() {
            return Err(Error::EmptyForest);
        }
        if q.len() != self.dim() {
            return Err(Error::dims("forest query", self.dim(), q.len()));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let budget = self.params.candidate_budget();
        let max_bits = self.hashes.depth;
        let labels: Vec<u64> = (0..self.trees.len()).map(|t| self.hashes.label(q, t)).collect();
        let depths: Vec<usize> = self
            .trees
            .iter()
            .zip(&labels)
            .map(|(t, &l)| t.descend(l, max_bits))
            .collect();
        let top = depths.iter().copied().max().unwrap_or(0);

        let mut seen: HashSet<u32> = HashSet::with_capacity(budget);
        let mut order: Vec<u32> = Vec::with_capacity(budget);
        // per tree, the sorted range already scanned
        let mut scanned: Vec<Option<(usize, usize)>> = vec![None; self.trees.len()];
        'ascent: for level in (0..=top).rev() {
            for (t, tree) in self.trees.iter().enumerate() {
                if depths[t] < level {
                    continue;
                }
                let (lo, hi) = tree.prefix_range(labels[t], level);
                let fresh: Box<dyn Iterator<Item = usize>> = match scanned[t] {
                    None => Box::new(lo..hi),
                    Some((plo, phi)) => Box::new((lo..plo).chain(phi..hi)),
                };
                for pos in fresh {
                    let id = tree.ids[pos];
                    if seen.insert(id) {
                        order.push(id);
                        if order.len() >= budget {
                            break 'ascent;
                        }
                    }
                }
                scanned[t] = Some((lo, hi));
            }
        }
        let stats = QueryStats {
            candidates: order.len(),
            max_depth: top,
        };
        Ok((rank(&self.points, order.into_iter(), q, k), stats))
    }

    pub fn query_batch(&self, exec: Execution, queries: &[Vec<f64>], k: usize) -> Result<Vec<NeighborSet>> {
        par::map_slice(exec, queries, |q| self.query(q, k)).into_iter().collect()
    }

    pub fn point(&self, id: u32) -> &[f64] {
        self.points.row(id as usize)
    }
}
