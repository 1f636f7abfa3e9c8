//! Instance-infused text classification.
//!
//! A target-dataset classifier is pre-trained on its own, then retrained with
//! an extra input: a soft-attention blend of source-dataset instance
//! embeddings retrieved through an LSH Forest. A squared-distance penalty
//! pulls the target representation toward the retrieved blend.
//!
//! Module map:
//!
//! * [`encoder`]: vocabulary, tokenization and the mean-pooled context encoder.
//! * [`lsh_forest`]: signed-random-projection LSH Forest and the brute-force oracle.
//! * [`clustering`]: k-means sparsification of large source stores.
//! * [`infusion`]: attention, fused prediction, penalty and their gradients.
//! * [`pipeline`]: training, evaluation, cross-validation and sweeps.
//! * [`corpus`]: class-per-directory corpora.
//! * [`synth`]: synthetic corpora for tests and demos.
//! * [`io`]: binary and TSV file formats.
//!
//! Data-parallel loops go through [`par`]; building without the default
//! `parallel` feature runs everything sequentially with identical results.

pub mod clustering;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod infusion;
pub mod io;
pub mod linalg;
pub mod lsh_forest;
pub mod par;
pub mod pipeline;
pub mod store;
pub mod synth;

pub use clustering::{kmeans, sparsify_source, ClusterModel};
pub use corpus::{load_corpus, Document, LabeledCorpus};
pub use encoder::{
    build_vocab, encode, encode_backward, init_params, tokenize, ContextVector, EncoderGrads,
    EncoderParams, TokenSequence, Vocabulary,
};
pub use error::{Error, Result};
pub use infusion::{
    attend, fuse_predict, infusion_backward, penalty, AttentionResult, ClassifierHead,
    SourceStore,
};
pub use lsh_forest::{brute_force_knn, make_hashes, BitString, HashFunctionSet, LshForest, NeighborSet};
pub use par::Execution;
pub use pipeline::{
    evaluate, export_embeddings, fraction_subset, infuse_train, kfold_split, lr_at, pretrain,
    Metrics, ModelParams, Phase, TrainingConfig,
};
