#![allow(dead_code)]

pub mod gradcheck;

use lshinfuse::linalg::{norm, rng_for, Matrix};
use lshinfuse::lsh_forest::{brute_force_knn, hash_bits, LshForest};
use lshinfuse::SourceStore;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = rng_for(seed, 1000);
    Matrix::from_vec(n, dim, (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}

pub fn unit_rows(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut m = gaussian(n, dim, seed);
    for r in 0..n {
        let len = norm(m.row(r));
        m.row_mut(r).iter_mut().for_each(|x| *x /= len);
    }
    m
}

pub fn unit_store(n: usize, dim: usize, seed: u64) -> SourceStore {
    SourceStore::new(unit_rows(n, dim, seed), "random").unwrap()
}

/// Mean fraction of the exact top-k that the forest returns.
pub fn recall_at(forest: &LshForest, store: &SourceStore, queries: &Matrix, k: usize) -> f64 {
    let mut total = 0.0;
    for q in 0..queries.rows() {
        let exact = brute_force_knn(store, queries.row(q), k).unwrap().ids();
        let got = forest.query(queries.row(q), k).unwrap().ids();
        total += got.iter().filter(|id| exact.contains(id)).count() as f64 / k as f64;
    }
    total / queries.rows() as f64
}

fn packed_label(forest: &LshForest, v: &[f64], tree: usize) -> u64 {
    let depth = forest.hashes().depth();
    let bits = hash_bits(v, tree, depth, forest.hashes()).unwrap();
    (0..depth).fold(0u64, |acc, i| (acc << 1) | bits.get(i) as u64) << (64 - depth)
}

/// Recall of an idealized forest that scores the `M` points sharing the
/// longest label prefix with the query in any tree. Independent of the
/// forest's trie code; only the hash functions are shared.
pub fn prefix_oracle_recall(forest: &LshForest, store: &SourceStore, queries: &Matrix, k: usize) -> f64 {
    let trees = forest.params().trees;
    let budget = forest.params().candidate_budget();
    let depth = forest.hashes().depth() as u32;
    let labels: Vec<Vec<u64>> = (0..trees)
        .map(|t| (0..store.len()).map(|i| packed_label(forest, store.row(i), t)).collect())
        .collect();
    let mut total = 0.0;
    for q in 0..queries.rows() {
        let ql: Vec<u64> = (0..trees).map(|t| packed_label(forest, queries.row(q), t)).collect();
        let mut scored: Vec<(usize, u32)> = (0..store.len())
            .map(|i| (i, (0..trees).map(|t| (labels[t][i] ^ ql[t]).leading_zeros().min(depth)).max().unwrap()))
            .collect();
        scored.sort_by_key(|s| std::cmp::Reverse(s.1));
        let candidates: Vec<u32> = scored.iter().take(budget).map(|s| s.0 as u32).collect();
        let exact = brute_force_knn(store, queries.row(q), k).unwrap().ids();
        total += exact.iter().filter(|e| candidates.contains(e)).count() as f64 / k as f64;
    }
    total / queries.rows() as f64
}
