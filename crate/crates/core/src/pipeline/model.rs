use std::fmt;

use crate::encoder::{EncoderParams, Vocabulary};
use crate::error::{Error, Result};
use crate::infusion::ClassifierHead;

use super::TrainingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Baseline,
    Infused,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Baseline => "baseline",
            Phase::Infused => "infused",
        })
    }
}

/// Trainable state of a classifier plus everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: TrainingConfig,
    pub vocab: Vocabulary,
    pub classes: Vec<String>,
    pub encoder: EncoderParams,
    pub head: ClassifierHead,
}

impl ModelParams {
    pub fn new(
        config: TrainingConfig,
        vocab: Vocabulary,
        classes: Vec<String>,
        encoder: EncoderParams,
        head: ClassifierHead,
    ) -> Result<Self> {
        if encoder.vocab_size() != vocab.len() {
            return Err(Error::dims("embedding rows vs vocabulary", vocab.len(), encoder.vocab_size()));
        }
        if head.latent_dim() != encoder.latent_dim() {
            return Err(Error::dims("head input", encoder.latent_dim(), head.latent_dim()));
        }
        if head.classes() != classes.len() {
            return Err(Error::dims("head classes", classes.len(), head.classes()));
        }
        Ok(ModelParams {
            config,
            vocab,
            classes,
            encoder,
            head,
        })
    }

    pub fn phase(&self) -> Phase {
        if self.head.is_infused() {
            Phase::Infused
        } else {
            Phase::Baseline
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    /// Encoder plus the active head.
    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.head.parameter_count()
    }
}
