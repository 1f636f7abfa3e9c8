use log::debug;
use rand::seq::SliceRandom;

use crate::clustering::sparsify_source_with;
use crate::corpus::LabeledCorpus;
use crate::encoder::{
    build_vocab, encode, encode_backward_traced, encode_traced, init_params, tokenize, EncoderGrads, TokenSequence,
};
use crate::error::{Error, Result};
use crate::infusion::{
    attend, baseline_backward, baseline_predict, fuse_predict, infusion_backward, AttentionResult, ClassifierHead,
    SourceStore,
};
use crate::linalg::{norm, rng_for, Matrix};
use crate::lsh_forest::LshForest;
use crate::par::{self, Execution};

use super::optim::{lr_at, Adam, RowAdam};
use super::{ModelParams, Phase, TrainingConfig};

// RNG streams derived from the config seed
const STREAM_SHUFFLE: u64 = 100;
const FOREST_SEED_SALT: u64 = 0x5eed_f0e5;
const CLUSTER_SEED_SALT: u64 = 0xc1a5_7e25;
const HEAD_SEED_SALT: u64 = 0x4ead;

/// Mean training loss per epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

fn prepare(corpus: &LabeledCorpus, model: &ModelParams) -> Vec<(TokenSequence, usize)> {
    corpus
        .documents
        .iter()
        .map(|d| (tokenize(&d.text, &model.vocab), d.label))
        .collect()
}

fn check_classes(train: &LabeledCorpus) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if train.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Gradient contributions of one instance.
struct InstanceGrad {
    loss: f64,
    head: Matrix,
    encoder: Option<EncoderGrads>,
}

/// Sums per-instance gradients (in order) and applies one Adam step.
struct Optimizer {
    embedding: RowAdam,
    projection: Adam,
    head: Adam,
}

impl Optimizer {
    fn new(model: &ModelParams) -> Self {
        Optimizer {
            embedding: RowAdam::new(model.encoder.vocab_size(), model.encoder.word_dim()),
            projection: Adam::new(model.encoder.projection.as_slice().len()),
            head: Adam::new(model.head.parameter_count()),
        }
    }

    fn apply(&mut self, model: &mut ModelParams, grads: Vec<InstanceGrad>, lr: f64, train_encoder: bool) -> f64 {
        let scale = 1.0 / grads.len() as f64;
        let w = model.head.weights();
        let mut head = Matrix::zeros(w.rows(), w.cols());
        let mut projection = Matrix::zeros(model.encoder.word_dim(), model.encoder.latent_dim());
        let mut rows: std::collections::BTreeMap<u32, Vec<f64>> = std::collections::BTreeMap::new();
        let mut loss = 0.0;
        for g in &grads {
            loss += g.loss;
            for (d, x) in head.as_mut_slice().iter_mut().zip(g.head.as_slice()) {
                *d += scale * x;
            }
            if let Some(enc) = &g.encoder {
                for (d, x) in projection.as_mut_slice().iter_mut().zip(enc.projection.as_slice()) {
                    *d += scale * x;
                }
                for (id, r) in &enc.embedding_rows {
                    let acc = rows.entry(*id).or_insert_with(|| vec![0.0; r.len()]);
                    for (d, x) in acc.iter_mut().zip(r) {
                        *d += scale * x;
                    }
                }
            }
        }
        self.head.step(model.head.weights_mut().as_mut_slice(), head.as_slice(), lr);
        if train_encoder {
            self.projection.step(model.encoder.projection.as_mut_slice(), projection.as_slice(), lr);
            let rows: Vec<(u32, Vec<f64>)> = rows.into_iter().collect();
            self.embedding.step(&mut model.encoder.embedding, &rows, lr);
        }
        loss * scale
    }
}

fn run_epochs<F>(
    model: &mut ModelParams,
    data: &[(TokenSequence, usize)],
    config: &TrainingConfig,
    train_encoder: bool,
    exec: Execution,
    instance: F,
) -> Result<TrainReport>
where
    F: Fn(&ModelParams, &TokenSequence, usize) -> Result<InstanceGrad> + Sync + Send,
{
    let mut optimizer = Optimizer::new(model);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        let mut rng = rng_for(config.seed, STREAM_SHUFFLE + epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let snapshot: &ModelParams = model;
            let grads = par::map_slice(exec, batch, |&i| instance(snapshot, &data[i].0, data[i].1))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let n = grads.len() as f64;
            total += optimizer.apply(model, grads, lr, train_encoder) * n;
        }
        let mean = total / data.len() as f64;
        debug!("epoch {epoch}: lr {lr:.5} loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Train the target-only baseline: softmax over `cᵀW⁰` with cross-entropy.
pub fn pretrain(train: &LabeledCorpus, config: &TrainingConfig) -> Result<ModelParams> {
    pretrain_with_report(Execution::default(), train, config).map(|r| r.0)
}

pub fn pretrain_with_report(
    exec: Execution,
    train: &LabeledCorpus,
    config: &TrainingConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    check_classes(train)?;
    let vocab = build_vocab(train, config.min_count)?;
    let encoder = init_params(vocab.len(), config.word_dim, config.latent_dim, config.seed);
    let head = ClassifierHead::baseline(config.latent_dim, train.num_classes(), config.seed ^ HEAD_SEED_SALT);
    let mut model = ModelParams::new(config.clone(), vocab, train.classes.clone(), encoder, head)?;
    let data = prepare(train, &model);
    let report = run_epochs(&mut model, &data, config, true, exec, |m, tokens, label| {
        let trace = encode_traced(tokens, &m.encoder)?;
        let (loss, grad_c, head, _) = baseline_backward(trace.context.as_slice(), &m.head, label)?;
        let encoder = encode_backward_traced(tokens, &m.encoder, &trace, &grad_c)?;
        Ok(InstanceGrad {
            loss,
            head,
            encoder: Some(encoder),
        })
    })?;
    Ok((model, report))
}

/// Encode every document and L2-normalize the rows. All-zero embeddings are
/// kept as zeros and listed in [`SourceStore::zero_rows`].
pub fn export_embeddings(model: &ModelParams, corpus: &LabeledCorpus) -> Result<SourceStore> {
    let m = model.latent_dim();
    let rows = par::map_slice(Execution::default(), &corpus.documents, |d| {
        encode(&tokenize(&d.text, &model.vocab), &model.encoder)
    });
    let mut data = Vec::with_capacity(corpus.len() * m);
    for c in rows {
        let c = c?;
        let len = norm(c.as_slice());
        if len > 0.0 {
            data.extend(c.as_slice().iter().map(|x| x / len));
        } else {
            data.extend_from_slice(c.as_slice());
        }
    }
    SourceStore::new(Matrix::from_vec(corpus.len(), m, data), corpus.name.clone())
}

/// Concatenated (and if needed sparsified) source rows behind an LSH Forest.
#[derive(Debug, Clone)]
pub struct Retriever {
    pub store: SourceStore,
    pub forest: LshForest,
}

/// Each store larger than `cluster_cap` is replaced by its k-means centroids,
/// then all stores are concatenated and indexed.
pub fn build_retriever(stores: &[SourceStore], config: &TrainingConfig) -> Result<Retriever> {
    if stores.is_empty() {
        return Err(Error::invalid("infusion needs at least one source store"));
    }
    if let Some(s) = stores.iter().find(|s| s.dim() != config.latent_dim) {
        return Err(Error::dims("source store row", config.latent_dim, s.dim()));
    }
    let sparse = stores
        .iter()
        .map(|s| sparsify_source_with(s, config.cluster_cap, config.kmeans_max_iter, config.seed ^ CLUSTER_SEED_SALT))
        .collect::<Result<Vec<_>>>()?;
    let store = SourceStore::concat(&sparse)?;
    let forest = LshForest::build(&store, config.forest_params(), config.seed ^ FOREST_SEED_SALT)?;
    Ok(Retriever { store, forest })
}

impl Retriever {
    /// Neighbor ids for a query; with `exclude_self` the top-ranked hit is
    /// dropped (unless it is the only one).
    pub fn neighbors(&self, c: &[f64], k: usize, exclude_self: bool) -> Result<Vec<u32>> {
        let want = if exclude_self { k + 1 } else { k };
        let mut ids = self.forest.query(c, want)?.ids();
        if exclude_self && ids.len() > 1 {
            ids.remove(0);
        }
        Ok(ids)
    }

    pub fn rows(&self, ids: &[u32]) -> Vec<&[f64]> {
        ids.iter().map(|&i| self.store.row(i as usize)).collect()
    }

    pub fn attend(&self, c: &[f64], k: usize, exclude_self: bool) -> Result<AttentionResult> {
        let ids = self.neighbors(c, k, exclude_self)?;
        let mut result = attend(c, &self.rows(&ids))?;
        result.neighbor_ids = ids;
        Ok(result)
    }
}

/// Retrain with instance infusion.
///
/// The encoder is inherited from `baseline` and trained jointly (unless
/// `freeze_encoder`); the baseline head is replaced by a fresh `2m × u` head.
/// Source rows stay frozen.
pub fn infuse_train(
    baseline: &ModelParams,
    stores: &[SourceStore],
    train: &LabeledCorpus,
    config: &TrainingConfig,
) -> Result<ModelParams> {
    infuse_train_with_report(Execution::default(), baseline, stores, train, config).map(|r| r.0)
}

pub fn infuse_train_with_report(
    exec: Execution,
    baseline: &ModelParams,
    stores: &[SourceStore],
    train: &LabeledCorpus,
    config: &TrainingConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if baseline.phase() != Phase::Baseline {
        return Err(Error::Phase("infusion starts from a baseline model".into()));
    }
    check_classes(train)?;
    if train.classes != baseline.classes {
        return Err(Error::invalid("training classes differ from the baseline model's"));
    }
    if config.latent_dim != baseline.latent_dim() {
        return Err(Error::dims("config latent_dim vs baseline", baseline.latent_dim(), config.latent_dim));
    }
    let retriever = build_retriever(stores, config)?;
    let head = ClassifierHead::infused(baseline.latent_dim(), baseline.num_classes(), config.seed ^ HEAD_SEED_SALT);
    let mut model = ModelParams::new(
        config.clone(),
        baseline.vocab.clone(),
        baseline.classes.clone(),
        baseline.encoder.clone(),
        head,
    )?;
    let data = prepare(train, &model);
    let train_encoder = !config.freeze_encoder;
    let (k, lambda, exclude) = (config.neighbors, config.lambda, config.exclude_self);
    let report = run_epochs(&mut model, &data, config, train_encoder, exec, |m, tokens, label| {
        let trace = encode_traced(tokens, &m.encoder)?;
        let c = trace.context.as_slice();
        let ids = retriever.neighbors(c, k, exclude)?;
        let g = infusion_backward(c, &retriever.rows(&ids), &m.head, label, lambda)?;
        let encoder = if train_encoder {
            Some(encode_backward_traced(tokens, &m.encoder, &trace, &g.grad_c)?)
        } else {
            None
        };
        Ok(InstanceGrad {
            loss: g.loss,
            head: g.grad_head,
            encoder,
        })
    })?;
    Ok((model, report))
}

/// A model ready for prediction, with its retrieval index when infused.
pub enum Predictor<'a> {
    Baseline(&'a ModelParams),
    Infused(&'a ModelParams, Retriever),
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a ModelParams, stores: Option<&[SourceStore]>) -> Result<Self> {
        match (model.phase(), stores) {
            (Phase::Baseline, _) => Ok(Predictor::Baseline(model)),
            (Phase::Infused, Some(s)) if !s.is_empty() => Ok(Predictor::Infused(model, build_retriever(s, &model.config)?)),
            (Phase::Infused, _) => Err(Error::Phase("an infused model needs its source stores".into())),
        }
    }

    pub fn model(&self) -> &ModelParams {
        match self {
            Predictor::Baseline(m) | Predictor::Infused(m, _) => m,
        }
    }

    /// Class probabilities and, for infused models, the attention used.
    pub fn predict_text(&self, text: &str) -> Result<(Vec<f64>, Option<AttentionResult>)> {
        let model = self.model();
        let c = encode(&tokenize(text, &model.vocab), &model.encoder)?;
        match self {
            Predictor::Baseline(m) => Ok((baseline_predict(c.as_slice(), &m.head)?, None)),
            Predictor::Infused(m, r) => {
                // test documents are not in the store, so no self-exclusion here
                let att = r.attend(c.as_slice(), m.config.neighbors, false)?;
                let y = fuse_predict(c.as_slice(), &att.fused, &m.head)?;
                Ok((y, Some(att)))
            }
        }
    }
}
