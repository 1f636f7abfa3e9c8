//! Vocabulary, tokenization and the mean-pooled context encoder.
//!
//! A document `x = (x_1, …, x_T)` is encoded as
//! `c = ReLU(Wᵀ · (1/T) Σ_t E[x_t])`, with `E ∈ ℝ^{|V|×n}` the word embeddings
//! and `W ∈ ℝ^{n×m}` the projection into the latent space. Any encoder with
//! the same `TokenSequence → ContextVector` contract and exact gradients can
//! replace it.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::linalg::{rng_for, Matrix};

pub const UNK: u32 = 0;
pub const PAD: u32 = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

/// Half-width of the uniform initialization range.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list. The first two entries
    /// must be the UNK and PAD markers.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[UNK as usize] != UNK_TOKEN || tokens[PAD as usize] != PAD_TOKEN {
            return Err(Error::invalid("vocabulary must start with <unk>, <pad>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>id` lines, in id order.
    pub fn write_tsv(&self, mut out: impl Write) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn read_tsv(input: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let (token, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::invalid(format!("vocabulary line {} lacks a tab", lineno + 1)))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("vocabulary line {}: bad id {id:?}", lineno + 1)))?;
            if id != tokens.len() {
                return Err(Error::invalid(format!(
                    "vocabulary line {}: id {id} out of sequence",
                    lineno + 1
                )));
            }
            tokens.push(token.to_string());
        }
        Vocabulary::from_tokens(tokens)
    }
}

/// Lowercased alphanumeric runs of `text`.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Every token occurring at least `min_count` times, ordered by descending
/// frequency then lexicographically, after the UNK and PAD markers.
pub fn build_vocab(corpus: &LabeledCorpus, min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in &corpus.documents {
        for w in split_words(&doc.text) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_count.max(1) && w != UNK_TOKEN && w != PAD_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![UNK_TOKEN.to_string(), PAD_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(w, _)| w));
    Vocabulary::from_tokens(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Out-of-vocabulary words map to UNK; text without words maps to `[PAD]`.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenSequence {
    let ids: Vec<u32> = split_words(text).map(|w| vocab.id(&w).unwrap_or(UNK)).collect();
    if ids.is_empty() {
        TokenSequence(vec![PAD])
    } else {
        TokenSequence(ids)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `|V| × n` word embeddings.
    pub embedding: Matrix,
    /// `n × m` projection.
    pub projection: Matrix,
}

impl EncoderParams {
    pub fn new(embedding: Matrix, projection: Matrix) -> Result<Self> {
        if embedding.cols() != projection.rows() {
            return Err(Error::dims("encoder word dim", embedding.cols(), projection.rows()));
        }
        if !embedding.is_finite() || !projection.is_finite() {
            return Err(Error::NonFinite("encoder parameters"));
        }
        Ok(EncoderParams { embedding, projection })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn word_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.embedding.as_slice().len() + self.projection.as_slice().len()
    }
}

/// Uniform `[-0.05, 0.05]` initialization, deterministic in `seed`.
pub fn init_params(vocab_size: usize, word_dim: usize, latent_dim: usize, seed: u64) -> EncoderParams {
    let mut rng = rng_for(seed, 1);
    let embedding = Matrix::uniform(vocab_size, word_dim, INIT_SCALE, &mut rng);
    let projection = Matrix::uniform(word_dim, latent_dim, INIT_SCALE, &mut rng);
    EncoderParams { embedding, projection }
}

/// Latent document embedding; every component is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(pub Vec<f64>);

impl ContextVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Mean-pooled word vector `o`.
    pub pooled: Vec<f64>,
    /// `Wᵀo` before the ReLU.
    pub pre_activation: Vec<f64>,
    pub context: ContextVector,
}

fn check_tokens(tokens: &TokenSequence, params: &EncoderParams) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::invalid("empty token sequence"));
    }
    let size = params.vocab_size();
    match tokens.ids().iter().find(|&&id| id as usize >= size) {
        Some(&id) => Err(Error::TokenOutOfRange { id, size }),
        None => Ok(()),
    }
}

pub fn encode_traced(tokens: &TokenSequence, params: &EncoderParams) -> Result<EncoderTrace> {
    check_tokens(tokens, params)?;
    let n = params.word_dim();
    let mut pooled = vec![0.0; n];
    for &id in tokens.ids() {
        for (p, e) in pooled.iter_mut().zip(params.embedding.row(id as usize)) {
            *p += e;
        }
    }
    let inv_t = 1.0 / tokens.len() as f64;
    pooled.iter_mut().for_each(|p| *p *= inv_t);
    let pre_activation = params.projection.vec_mul(&pooled);
    let context = ContextVector(pre_activation.iter().map(|&x| x.max(0.0)).collect());
    Ok(EncoderTrace {
        pooled,
        pre_activation,
        context,
    })
}

pub fn encode(tokens: &TokenSequence, params: &EncoderParams) -> Result<ContextVector> {
    encode_traced(tokens, params).map(|t| t.context)
}

/// Gradients of a scalar loss with respect to the encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    /// Dense `n × m` gradient of the projection.
    pub projection: Matrix,
    /// Embedding-row gradients for the distinct token ids present, ascending.
    pub embedding_rows: Vec<(u32, Vec<f64>)>,
}

impl EncoderGrads {
    /// `ΔE += scale·rows`, `ΔW += scale·projection`.
    pub fn accumulate_into(&self, embedding: &mut Matrix, projection: &mut Matrix, scale: f64) {
        for (id, g) in &self.embedding_rows {
            for (d, x) in embedding.row_mut(*id as usize).iter_mut().zip(g) {
                *d += scale * x;
            }
        }
        for (d, x) in projection.as_mut_slice().iter_mut().zip(self.projection.as_slice()) {
            *d += scale * x;
        }
    }
}

/// Backward pass through the ReLU (inactive at exactly 0), projection and mean pooling.
pub fn encode_backward_traced(
    tokens: &TokenSequence,
    params: &EncoderParams,
    trace: &EncoderTrace,
    grad_c: &[f64],
) -> Result<EncoderGrads> {
    let m = params.latent_dim();
    if grad_c.len() != m {
        return Err(Error::dims("context gradient", m, grad_c.len()));
    }
    if trace.pre_activation.len() != m || trace.pooled.len() != params.word_dim() {
        return Err(Error::dims("encoder trace", m, trace.pre_activation.len()));
    }
    let grad_pre: Vec<f64> = grad_c
        .iter()
        .zip(&trace.pre_activation)
        .map(|(g, &z)| if z > 0.0 { *g } else { 0.0 })
        .collect();

    let mut projection = Matrix::zeros(params.word_dim(), m);
    projection.add_outer(&trace.pooled, &grad_pre, 1.0);

    let grad_pooled = params.projection.mul_vec(&grad_pre);
    let inv_t = 1.0 / tokens.len() as f64;
    let mut ids: Vec<u32> = tokens.ids().to_vec();
    ids.sort_unstable();
    let mut embedding_rows: Vec<(u32, Vec<f64>)> = Vec::new();
    for chunk in ids.chunk_by(|a, b| a == b) {
        let scale = chunk.len() as f64 * inv_t;
        embedding_rows.push((chunk[0], grad_pooled.iter().map(|g| g * scale).collect()));
    }
    Ok(EncoderGrads {
        projection,
        embedding_rows,
    })
}

pub fn encode_backward(tokens: &TokenSequence, params: &EncoderParams, grad_c: &[f64]) -> Result<EncoderGrads> {
    let trace = encode_traced(tokens, params)?;
    encode_backward_traced(tokens, params, &trace, grad_c)
}
