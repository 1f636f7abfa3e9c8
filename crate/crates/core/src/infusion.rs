//! Attention over retrieved source embeddings, fused prediction and the
//! representation penalty.
//!
//! For a target context vector `c` and retrieved source rows `z_1 … z_k`:
//!
//! ```text
//! α_i = softmax_i(c·z_i)          z_s = Σ α_i z_i
//! s   = [c, z_s]                  y   = softmax(sᵀ W⁽¹⁾)
//! loss = −log y[label] + λ‖z_s − c‖²
//! ```
//!
//! Source rows are frozen: gradients reach `c` through the concatenation,
//! the attention weights and the penalty, and reach `W⁽¹⁾` directly.

use crate::error::{Error, Result};
use crate::linalg::{dot, rng_for, softmax, squared_distance, Matrix};

pub use crate::store::SourceStore;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub weights: Vec<f64>,
    pub fused: Vec<f64>,
    /// Store ids of the attended rows, when known.
    pub neighbor_ids: Vec<u32>,
}

/// Soft attention with raw dot-product scores, max-subtracted before `exp`.
pub fn attend(c: &[f64], neighbors: &[&[f64]]) -> Result<AttentionResult> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighbors);
    }
    let m = c.len();
    if let Some(z) = neighbors.iter().find(|z| z.len() != m) {
        return Err(Error::dims("attention neighbor", m, z.len()));
    }
    let scores: Vec<f64> = neighbors.iter().map(|z| dot(c, z)).collect();
    let weights = softmax(&scores);
    let mut fused = vec![0.0; m];
    for (a, z) in weights.iter().zip(neighbors) {
        for (f, x) in fused.iter_mut().zip(z.iter()) {
            *f += a * x;
        }
    }
    Ok(AttentionResult {
        weights,
        fused,
        neighbor_ids: Vec::new(),
    })
}

/// Classifier output layer. Exactly one head is live per model phase: the
/// baseline head reads `c` alone, the infused head reads `[c, z_s]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierHead {
    /// `W⁰ ∈ ℝ^{m×u}`.
    Baseline(Matrix),
    /// `W⁽¹⁾ ∈ ℝ^{2m×u}`.
    Infused(Matrix),
}

impl ClassifierHead {
    pub fn baseline(latent_dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, 4);
        ClassifierHead::Baseline(Matrix::uniform(latent_dim, classes, crate::encoder::INIT_SCALE, &mut rng))
    }

    pub fn infused(latent_dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, 5);
        ClassifierHead::Infused(Matrix::uniform(2 * latent_dim, classes, crate::encoder::INIT_SCALE, &mut rng))
    }

    pub fn weights(&self) -> &Matrix {
        match self {
            ClassifierHead::Baseline(w) | ClassifierHead::Infused(w) => w,
        }
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        match self {
            ClassifierHead::Baseline(w) | ClassifierHead::Infused(w) => w,
        }
    }

    pub fn classes(&self) -> usize {
        self.weights().cols()
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            ClassifierHead::Baseline(w) => w.rows(),
            ClassifierHead::Infused(w) => w.rows() / 2,
        }
    }

    pub fn is_infused(&self) -> bool {
        matches!(self, ClassifierHead::Infused(_))
    }

    pub fn parameter_count(&self) -> usize {
        self.weights().as_slice().len()
    }
}

/// `softmax(cᵀW⁰)`.
pub fn baseline_predict(c: &[f64], head: &ClassifierHead) -> Result<Vec<f64>> {
    let ClassifierHead::Baseline(w) = head else {
        return Err(Error::Phase("baseline prediction needs the baseline head".into()));
    };
    if c.len() != w.rows() {
        return Err(Error::dims("baseline head input", w.rows(), c.len()));
    }
    Ok(softmax(&w.vec_mul(c)))
}

fn concat(c: &[f64], z_s: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(c.len() + z_s.len());
    s.extend_from_slice(c);
    s.extend_from_slice(z_s);
    s
}

/// `softmax([c, z_s]ᵀ W⁽¹⁾)`.
pub fn fuse_predict(c: &[f64], z_s: &[f64], head: &ClassifierHead) -> Result<Vec<f64>> {
    let ClassifierHead::Infused(w) = head else {
        return Err(Error::Phase("fused prediction needs the infused head".into()));
    };
    if c.len() + z_s.len() != w.rows() || c.len() != z_s.len() {
        return Err(Error::dims("infused head input", w.rows(), c.len() + z_s.len()));
    }
    Ok(softmax(&w.vec_mul(&concat(c, z_s))))
}

/// `λ‖z_s − z_t‖²`.
pub fn penalty(z_s: &[f64], z_t: &[f64], lambda: f64) -> f64 {
    debug_assert_eq!(z_s.len(), z_t.len());
    lambda * squared_distance(z_s, z_t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfusionGrads {
    pub loss: f64,
    pub grad_c: Vec<f64>,
    /// Same shape as `W⁽¹⁾`.
    pub grad_head: Matrix,
    pub attention: AttentionResult,
    pub probabilities: Vec<f64>,
}

/// Forward and backward pass of cross-entropy plus penalty for one instance.
/// The penalty's target latent is `c` itself.
pub fn infusion_backward(
    c: &[f64],
    neighbors: &[&[f64]],
    head: &ClassifierHead,
    label: usize,
    lambda: f64,
) -> Result<InfusionGrads> {
    let attention = attend(c, neighbors)?;
    let probabilities = fuse_predict(c, &attention.fused, head)?;
    if label >= probabilities.len() {
        return Err(Error::invalid(format!("label {label} out of range")));
    }
    let m = c.len();
    let w = head.weights();
    let s = concat(c, &attention.fused);
    let loss = -probabilities[label].ln() + penalty(&attention.fused, c, lambda);

    let mut grad_logits = probabilities.clone();
    grad_logits[label] -= 1.0;
    let mut grad_head = Matrix::zeros(w.rows(), w.cols());
    grad_head.add_outer(&s, &grad_logits, 1.0);

    let grad_s = w.mul_vec(&grad_logits);
    let diff: Vec<f64> = attention.fused.iter().zip(c).map(|(z, x)| z - x).collect();

    // concatenation path and the −2λ(z_s − c) penalty term
    let mut grad_c: Vec<f64> = grad_s[..m].iter().zip(&diff).map(|(g, d)| g - 2.0 * lambda * d).collect();
    let grad_fused: Vec<f64> = grad_s[m..].iter().zip(&diff).map(|(g, d)| g + 2.0 * lambda * d).collect();

    // attention path: ∂L/∂score_i = α_i (g·z_i − Σ_j α_j g·z_j), score_i = c·z_i
    let gz: Vec<f64> = neighbors.iter().map(|z| dot(&grad_fused, z)).collect();
    let mean_gz = dot(&attention.weights, &gz);
    for ((a, g), z) in attention.weights.iter().zip(&gz).zip(neighbors) {
        let coeff = a * (g - mean_gz);
        if coeff == 0.0 {
            continue;
        }
        for (gc, x) in grad_c.iter_mut().zip(z.iter()) {
            *gc += coeff * x;
        }
    }

    Ok(InfusionGrads {
        loss,
        grad_c,
        grad_head,
        attention,
        probabilities,
    })
}

/// Cross-entropy gradient for the baseline head: `(loss, ∂/∂c, ∂/∂W⁰, probabilities)`.
pub fn baseline_backward(c: &[f64], head: &ClassifierHead, label: usize) -> Result<(f64, Vec<f64>, Matrix, Vec<f64>)> {
    let probabilities = baseline_predict(c, head)?;
    if label >= probabilities.len() {
        return Err(Error::invalid(format!("label {label} out of range")));
    }
    let w = head.weights();
    let loss = -probabilities[label].ln();
    let mut grad_logits = probabilities.clone();
    grad_logits[label] -= 1.0;
    let mut grad_head = Matrix::zeros(w.rows(), w.cols());
    grad_head.add_outer(c, &grad_logits, 1.0);
    let grad_c = w.mul_vec(&grad_logits);
    Ok((loss, grad_c, grad_head, probabilities))
}
