//! k-fold cross-validation runs and fraction sweeps.

use crate::corpus::LabeledCorpus;
use crate::error::Result;
use crate::infusion::SourceStore;
use crate::par::{self, Execution};

use super::metrics::{evaluate_with, Metrics, MetricsRow};
use super::split::{fraction_subset, kfold_split};
use super::train::{export_embeddings, infuse_train_with_report, pretrain_with_report, Predictor};
use super::TrainingConfig;

/// Where infusion retrieves from.
#[derive(Debug, Clone)]
pub enum SourcePlan {
    /// Fixed stores exported from separately trained source models.
    Stores(Vec<SourceStore>),
    /// Each fold's own baseline embeddings of its training split, with the
    /// top-ranked (self) neighbor dropped during training.
    SameDataset,
    /// Baseline only.
    None,
}

/// One infused model trained per fold on top of the shared baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct InfusionVariant {
    /// Written to the CSV `phase` column.
    pub phase: String,
    pub lambda: f64,
}

impl InfusionVariant {
    pub fn with_penalty(lambda: f64) -> Self {
        InfusionVariant {
            phase: "infused".into(),
            lambda,
        }
    }

    pub fn without_penalty() -> Self {
        InfusionVariant {
            phase: "infused-nopenalty".into(),
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvPlan {
    pub run_id: String,
    pub source: SourcePlan,
    pub variants: Vec<InfusionVariant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub fraction: f64,
    pub baseline: Metrics,
    /// `(phase, metrics)` per variant, in plan order.
    pub infused: Vec<(String, Metrics)>,
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(fold as u64 + 1)
}

fn run_fold(
    exec: Execution,
    fold: usize,
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    fraction: f64,
    plan: &CvPlan,
    config: &TrainingConfig,
) -> Result<FoldOutcome> {
    let fold_config = TrainingConfig {
        seed: fold_seed(config.seed, fold),
        ..config.clone()
    };
    let train = fraction_subset(train, fraction, fold_config.seed)?;
    let (baseline, _) = pretrain_with_report(exec, &train, &fold_config)?;
    let baseline_metrics = evaluate_with(exec, &Predictor::new(&baseline, None)?, test, fold)?;

    let (stores, exclude_self) = match &plan.source {
        SourcePlan::Stores(s) => (s.clone(), config.exclude_self),
        SourcePlan::SameDataset => (vec![export_embeddings(&baseline, &train)?], true),
        SourcePlan::None => (Vec::new(), false),
    };
    let mut infused = Vec::with_capacity(plan.variants.len());
    if !stores.is_empty() {
        for variant in &plan.variants {
            let variant_config = TrainingConfig {
                lambda: variant.lambda,
                exclude_self,
                ..fold_config.clone()
            };
            let (model, _) = infuse_train_with_report(exec, &baseline, &stores, &train, &variant_config)?;
            let predictor = Predictor::new(&model, Some(&stores))?;
            infused.push((variant.phase.clone(), evaluate_with(exec, &predictor, test, fold)?));
        }
    }
    Ok(FoldOutcome {
        fold,
        fraction,
        baseline: baseline_metrics,
        infused,
    })
}

/// Stratified k-fold run at one training fraction. Folds are independent and
/// may run in parallel; results come back in fold order.
pub fn cross_validate(
    exec: Execution,
    target: &LabeledCorpus,
    fraction: f64,
    plan: &CvPlan,
    config: &TrainingConfig,
) -> Result<Vec<FoldOutcome>> {
    config.validate()?;
    let folds = kfold_split(target, config.folds, config.seed)?;
    par::map_slice(exec, &folds.iter().enumerate().collect::<Vec<_>>(), |(i, (train, test))| {
        run_fold(exec, *i, train, test, fraction, plan, config)
    })
    .into_iter()
    .collect()
}

fn sources_label(plan: &CvPlan, target: &LabeledCorpus) -> String {
    match &plan.source {
        SourcePlan::Stores(s) => s.iter().map(|s| s.tag.as_str()).collect::<Vec<_>>().join("+"),
        SourcePlan::SameDataset => target.name.clone(),
        SourcePlan::None => String::new(),
    }
}

/// CSV rows for fold outcomes: the baseline row first, then each variant.
pub fn outcome_rows(outcomes: &[FoldOutcome], plan: &CvPlan, target: &LabeledCorpus) -> Vec<MetricsRow> {
    let sources = sources_label(plan, target);
    let mut rows = Vec::new();
    for o in outcomes {
        rows.push(MetricsRow {
            run_id: plan.run_id.clone(),
            fold: o.fold,
            phase: "baseline".into(),
            fraction: o.fraction,
            sources: String::new(),
            accuracy: o.baseline.accuracy,
            macro_f1: o.baseline.macro_f1,
        });
        for (phase, m) in &o.infused {
            rows.push(MetricsRow {
                run_id: plan.run_id.clone(),
                fold: o.fold,
                phase: phase.clone(),
                fraction: o.fraction,
                sources: sources.clone(),
                accuracy: m.accuracy,
                macro_f1: m.macro_f1,
            });
        }
    }
    rows
}

/// Cross-validation at every fraction; outcomes grouped by fraction in the
/// given order.
pub fn sweep(
    exec: Execution,
    target: &LabeledCorpus,
    fractions: &[f64],
    plan: &CvPlan,
    config: &TrainingConfig,
) -> Result<Vec<FoldOutcome>> {
    let mut all = Vec::new();
    for &f in fractions {
        all.extend(cross_validate(exec, target, f, plan, config)?);
    }
    Ok(all)
}

/// Mean accuracy of the baseline and of each variant over a set of folds.
pub fn mean_accuracy(outcomes: &[FoldOutcome]) -> (f64, Vec<(String, f64)>) {
    let n = outcomes.len().max(1) as f64;
    let baseline = outcomes.iter().map(|o| o.baseline.accuracy).sum::<f64>() / n;
    let mut variants: Vec<(String, f64)> = Vec::new();
    if let Some(first) = outcomes.first() {
        for (i, (phase, _)) in first.infused.iter().enumerate() {
            let mean = outcomes.iter().map(|o| o.infused[i].1.accuracy).sum::<f64>() / n;
            variants.push((phase.clone(), mean));
        }
    }
    (baseline, variants)
}
