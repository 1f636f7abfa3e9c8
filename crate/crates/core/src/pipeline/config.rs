use std::fmt::Write as _;
use std::str::FromStr;

use crate::clustering::{DEFAULT_CAP, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::lsh_forest::ForestParams;

/// Hyper-parameters and protocol knobs.
///
/// Stored on disk as flat `key = value` lines; `#` starts a comment. The
/// defaults are the BBC Sports column of the reference protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Word vector dimension `n`.
    pub word_dim: usize,
    /// Context vector dimension `m`.
    pub latent_dim: usize,
    /// Retrieved neighbors `k`.
    pub neighbors: usize,
    /// Penalty scale `λ`.
    pub lambda: f64,
    pub epochs: usize,
    pub folds: usize,
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub lr_decay: f64,
    pub lr_decay_period: usize,
    pub min_count: usize,
    pub exclude_self: bool,
    pub freeze_encoder: bool,
    pub lsh_trees: usize,
    pub lsh_max_depth: usize,
    pub lsh_candidates: usize,
    pub cluster_cap: usize,
    pub kmeans_max_iter: usize,
    /// Source dataset names, informational.
    pub sources: Vec<String>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig::bbc_sport()
    }
}

impl TrainingConfig {
    fn shared(batch_size: usize, epochs: usize) -> Self {
        TrainingConfig {
            batch_size,
            learning_rate: 0.01,
            word_dim: 300,
            latent_dim: 50,
            neighbors: 5,
            lambda: 1e-4,
            epochs,
            folds: 10,
            fractions: vec![0.3, 0.5, 0.7, 0.9, 1.0],
            seed: 0,
            lr_decay: 0.3,
            lr_decay_period: 10,
            min_count: 2,
            exclude_self: false,
            freeze_encoder: false,
            lsh_trees: 10,
            lsh_max_depth: 32,
            lsh_candidates: 10,
            cluster_cap: DEFAULT_CAP,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            sources: Vec::new(),
        }
    }

    pub fn news20() -> Self {
        Self::shared(256, 30)
    }

    pub fn bbc() -> Self {
        Self::shared(32, 20)
    }

    pub fn bbc_sport() -> Self {
        Self::shared(16, 20)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "news20" => Some(Self::news20()),
            "bbc" => Some(Self::bbc()),
            "bbc_sport" | "bbcsport" => Some(Self::bbc_sport()),
            _ => None,
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            trees: self.lsh_trees,
            max_depth: self.lsh_max_depth,
            candidates_per_tree: self.lsh_candidates,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("word_dim", self.word_dim),
            ("latent_dim", self.latent_dim),
            ("neighbors", self.neighbors),
            ("folds", self.folds),
            ("lr_decay_period", self.lr_decay_period),
            ("lsh_trees", self.lsh_trees),
            ("lsh_max_depth", self.lsh_max_depth),
            ("lsh_candidates", self.lsh_candidates),
            ("cluster_cap", self.cluster_cap),
            ("kmeans_max_iter", self.kmeans_max_iter),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::Config("lr_decay must be in (0, 1)".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("fraction {f} outside (0, 1]")));
        }
        if self.lsh_max_depth > crate::lsh_forest::MAX_LABEL_BITS {
            return Err(Error::Config("lsh_max_depth must be at most 64".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. `preset` resets every field to
    /// that preset's values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
            }
        }
        match key {
            "preset" => {
                *self = TrainingConfig::preset(value)
                    .ok_or_else(|| Error::Config(format!("unknown preset {value:?}")))?
            }
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "word_dim" => self.word_dim = num(key, value)?,
            "latent_dim" => self.latent_dim = num(key, value)?,
            "neighbors" => self.neighbors = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "folds" => self.folds = num(key, value)?,
            "fractions" => {
                self.fractions = value
                    .split(',')
                    .map(|f| num(key, f.trim()))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "lr_decay_period" => self.lr_decay_period = num(key, value)?,
            "min_count" => self.min_count = num(key, value)?,
            "exclude_self" => self.exclude_self = flag(key, value)?,
            "freeze_encoder" => self.freeze_encoder = flag(key, value)?,
            "lsh_trees" => self.lsh_trees = num(key, value)?,
            "lsh_max_depth" => self.lsh_max_depth = num(key, value)?,
            "lsh_candidates" => self.lsh_candidates = num(key, value)?,
            "cluster_cap" => self.cluster_cap = num(key, value)?,
            "kmeans_max_iter" => self.kmeans_max_iter = num(key, value)?,
            "sources" => {
                self.sources = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainingConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Canonical `key = value` text; [`TrainingConfig::parse`] reads it back
    /// to an equal config.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let fractions: Vec<String> = self.fractions.iter().map(|f| format!("{f:?}")).collect();
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "word_dim = {}", self.word_dim);
        let _ = writeln!(s, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(s, "neighbors = {}", self.neighbors);
        let _ = writeln!(s, "lambda = {:?}", self.lambda);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "folds = {}", self.folds);
        let _ = writeln!(s, "fractions = {}", fractions.join(","));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "lr_decay = {:?}", self.lr_decay);
        let _ = writeln!(s, "lr_decay_period = {}", self.lr_decay_period);
        let _ = writeln!(s, "min_count = {}", self.min_count);
        let _ = writeln!(s, "exclude_self = {}", self.exclude_self);
        let _ = writeln!(s, "freeze_encoder = {}", self.freeze_encoder);
        let _ = writeln!(s, "lsh_trees = {}", self.lsh_trees);
        let _ = writeln!(s, "lsh_max_depth = {}", self.lsh_max_depth);
        let _ = writeln!(s, "lsh_candidates = {}", self.lsh_candidates);
        let _ = writeln!(s, "cluster_cap = {}", self.cluster_cap);
        let _ = writeln!(s, "kmeans_max_iter = {}", self.kmeans_max_iter);
        let _ = writeln!(s, "sources = {}", self.sources.join(","));
        s
    }
}
