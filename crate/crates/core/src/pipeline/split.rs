use log::warn;
use rand::seq::SliceRandom;

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::linalg::rng_for;

/// Per-class document indices, in corpus order.
fn by_class(corpus: &LabeledCorpus) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); corpus.num_classes()];
    for (i, d) in corpus.documents.iter().enumerate() {
        groups[d.label].push(i);
    }
    groups
}

/// Stratified k-fold partition, returned as `(train, test)` pairs.
///
/// Each class is shuffled and dealt round-robin across folds, continuing the
/// deal from where the previous class stopped so fold sizes differ by at most
/// one. If some present class has fewer documents than `folds`, the whole
/// corpus is shuffled and dealt instead.
pub fn kfold_split(corpus: &LabeledCorpus, folds: usize, seed: u64) -> Result<Vec<(LabeledCorpus, LabeledCorpus)>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if corpus.len() < folds {
        return Err(Error::invalid(format!("{} documents cannot fill {folds} folds", corpus.len())));
    }
    let mut rng = rng_for(seed, 6);
    let groups = by_class(corpus);
    let stratify = groups.iter().all(|g| g.is_empty() || g.len() >= folds);
    let mut order: Vec<usize> = Vec::with_capacity(corpus.len());
    if stratify {
        for mut g in groups {
            g.shuffle(&mut rng);
            order.extend(g);
        }
    } else {
        warn!("a class has fewer than {folds} documents; falling back to unstratified folds");
        order.extend(0..corpus.len());
        order.shuffle(&mut rng);
    }
    let mut assignment = vec![0usize; corpus.len()];
    for (slot, &doc) in order.iter().enumerate() {
        assignment[doc] = slot % folds;
    }
    Ok((0..folds)
        .map(|f| {
            let test: Vec<usize> = (0..corpus.len()).filter(|&i| assignment[i] == f).collect();
            let train: Vec<usize> = (0..corpus.len()).filter(|&i| assignment[i] != f).collect();
            (corpus.subset(&train), corpus.subset(&test))
        })
        .collect())
}

/// Class-proportional subsample keeping `round(fraction · count)` documents
/// per class, at least one for every non-empty class.
///
/// Each class is shuffled once per seed and a prefix is taken, so smaller
/// fractions select subsets of larger ones.
pub fn fraction_subset(train: &LabeledCorpus, fraction: f64, seed: u64) -> Result<LabeledCorpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(train.clone());
    }
    let mut rng = rng_for(seed, 7);
    let mut keep = Vec::new();
    for mut g in by_class(train) {
        if g.is_empty() {
            continue;
        }
        g.shuffle(&mut rng);
        let n = ((g.len() as f64 * fraction).round() as usize).clamp(1, g.len());
        keep.extend_from_slice(&g[..n]);
    }
    keep.sort_unstable();
    Ok(train.subset(&keep))
}
