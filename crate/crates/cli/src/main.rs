use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use lshinfuse::clustering::sparsify_source_with;
use lshinfuse::io::{load_model, load_store, save_model, save_store, write_attention_tsv, write_embeddings_tsv};
use lshinfuse::pipeline::{
    evaluate_with, outcome_rows, sweep, write_metrics_csv, CvPlan, InfusionVariant, MetricsRow, Predictor,
    SourcePlan,
};
use lshinfuse::synth::{separable_toy, SurrogateSpec};
use lshinfuse::{
    export_embeddings, infuse_train, load_corpus, pretrain, Execution, LabeledCorpus, SourceStore, TrainingConfig,
};

#[derive(Parser)]
#[command(name = "lshinfuse", version, about = "Instance-infused text classification with LSH Forest retrieval")]
struct Cli {
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target-only baseline.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a corpus with a model and write the normalized rows as a source store.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store tag; defaults to the corpus directory name.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Replace a store larger than the cap by k-means centroids.
    Cluster {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        cap: usize,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain a baseline with instance infusion.
    Infuse {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        source: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the config echoed in the baseline model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        exclude_self: bool,
        #[arg(long)]
        freeze_encoder: bool,
    },
    /// Score a model on a corpus and write one metrics row.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        source: Vec<PathBuf>,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value = "eval")]
        run_id: String,
    },
    /// k-fold cross-validation of baseline and infused models at several training fractions.
    Sweep {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "same_dataset")]
        source: Vec<PathBuf>,
        /// Retrieve from each fold's own training embeddings, skipping the top hit.
        #[arg(long)]
        same_dataset: bool,
        /// Also train an infused model without the penalty term.
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value = "sweep")]
        run_id: String,
    },
    /// Write `id, label, embedding` TSV lines for external visualization.
    DumpEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the neighbors and attention weights an infused model uses per document.
    DumpAttention {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        source: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic class-per-directory corpus.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Toy,
    SportLike,
    NewsLike,
}

type BoxError = Box<dyn std::error::Error>;

fn read_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainingConfig, BoxError> {
    let mut config = match path {
        Some(p) => TrainingConfig::parse(&fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?)?,
        None => TrainingConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn load_stores(paths: &[PathBuf]) -> Result<Vec<SourceStore>, BoxError> {
    Ok(paths.iter().map(|p| load_store(p)).collect::<Result<Vec<_>, _>>()?)
}

fn create(path: &Path) -> Result<BufWriter<File>, BoxError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| format!("{}: {e}", path.display()))?))
}

fn run(cli: Cli) -> Result<(), BoxError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Pretrain { data, config, out } => {
            let config = read_config(config.as_deref(), cli.seed)?;
            let corpus = load_corpus(&data)?;
            let model = pretrain(&corpus, &config)?;
            save_model(&out, &model)?;
            info!("wrote {} ({} parameters)", out.display(), model.parameter_count());
        }
        Command::ExportEmbeddings { model, data, out, tag } => {
            let model = load_model(&model)?;
            let corpus = load_corpus(&data)?;
            let mut store = export_embeddings(&model, &corpus)?;
            if let Some(t) = tag {
                store.tag = t;
            }
            save_store(&out, &store)?;
            info!("wrote {} rows to {}", store.len(), out.display());
        }
        Command::Cluster { store, cap, max_iter, out } => {
            if cap == 0 {
                return Err("cap must be positive".into());
            }
            let s = load_store(&store)?;
            let sparse = sparsify_source_with(&s, cap, max_iter, cli.seed.unwrap_or(0))?;
            save_store(&out, &sparse)?;
            info!("{} rows -> {}", s.len(), sparse.len());
        }
        Command::Infuse {
            baseline,
            source,
            data,
            config,
            out,
            exclude_self,
            freeze_encoder,
        } => {
            let baseline = load_model(&baseline)?;
            let mut config = match config {
                Some(p) => read_config(Some(&p), cli.seed)?,
                None => TrainingConfig {
                    seed: cli.seed.unwrap_or(baseline.config.seed),
                    ..baseline.config.clone()
                },
            };
            config.exclude_self |= exclude_self;
            config.freeze_encoder |= freeze_encoder;
            let stores = load_stores(&source)?;
            config.sources = stores.iter().map(|s| s.tag.clone()).collect();
            let corpus = load_corpus(&data)?;
            let model = infuse_train(&baseline, &stores, &corpus, &config)?;
            save_model(&out, &model)?;
            info!("wrote {} ({} parameters)", out.display(), model.parameter_count());
        }
        Command::Evaluate {
            model,
            data,
            source,
            metrics,
            run_id,
        } => {
            let model = load_model(&model)?;
            let corpus = load_corpus(&data)?;
            let stores = load_stores(&source)?;
            let predictor = Predictor::new(&model, (!stores.is_empty()).then_some(stores.as_slice()))?;
            let m = evaluate_with(exec, &predictor, &corpus, 0)?;
            let sources = match &predictor {
                Predictor::Infused(_, r) => r.store.tag.clone(),
                Predictor::Baseline(_) => String::new(),
            };
            let row = MetricsRow {
                run_id,
                fold: 0,
                phase: model.phase().to_string(),
                fraction: 1.0,
                sources,
                accuracy: m.accuracy,
                macro_f1: m.macro_f1,
            };
            let mut w = create(&metrics)?;
            write_metrics_csv(&[row], &mut w)?;
            w.flush()?;
            println!("accuracy {:.4} macro-F1 {:.4}", m.accuracy, m.macro_f1);
        }
        Command::Sweep {
            fractions,
            data,
            source,
            same_dataset,
            ablation,
            config,
            metrics,
            run_id,
        } => {
            let config = read_config(config.as_deref(), cli.seed)?;
            let fractions = fractions.unwrap_or_else(|| config.fractions.clone());
            let target = load_corpus(&data)?;
            let source = if same_dataset {
                SourcePlan::SameDataset
            } else if source.is_empty() {
                SourcePlan::None
            } else {
                SourcePlan::Stores(load_stores(&source)?)
            };
            let mut variants = vec![InfusionVariant::with_penalty(config.lambda)];
            if ablation {
                variants.push(InfusionVariant::without_penalty());
            }
            let plan = CvPlan {
                run_id,
                source,
                variants,
            };
            let outcomes = sweep(exec, &target, &fractions, &plan, &config)?;
            let rows = outcome_rows(&outcomes, &plan, &target);
            let mut w = create(&metrics)?;
            write_metrics_csv(&rows, &mut w)?;
            w.flush()?;
            print_summary(&rows);
        }
        Command::DumpEmbeddings { model, data, out } => {
            let model = load_model(&model)?;
            let corpus = load_corpus(&data)?;
            let store = export_embeddings(&model, &corpus)?;
            let mut w = create(&out)?;
            write_embeddings_tsv(&corpus, &store, &mut w)?;
            w.flush()?;
        }
        Command::DumpAttention { model, data, source, out } => {
            let model = load_model(&model)?;
            let corpus = load_corpus(&data)?;
            let stores = load_stores(&source)?;
            let predictor = Predictor::new(&model, Some(&stores))?;
            let mut rows = Vec::with_capacity(corpus.len());
            for d in &corpus.documents {
                let (_, att) = predictor.predict_text(&d.text)?;
                rows.push((d.id.as_str(), att.ok_or("model is not infused")?));
            }
            let mut w = create(&out)?;
            write_attention_tsv(rows.iter().map(|(id, a)| (*id, a)), &mut w)?;
            w.flush()?;
        }
        Command::Synth { kind, out, scale } => {
            let seed = cli.seed.unwrap_or(0);
            let corpus: LabeledCorpus = match kind {
                SynthKind::Toy => separable_toy(((20.0 * scale).round() as usize).max(2), seed),
                SynthKind::SportLike => SurrogateSpec::sport_like().scaled(scale).generate(seed),
                SynthKind::NewsLike => SurrogateSpec::news_like().scaled(scale).generate(seed),
            };
            corpus.write_to_dir(&out)?;
            info!("wrote {} documents to {}", corpus.len(), out.display());
        }
    }
    Ok(())
}

fn print_summary(rows: &[MetricsRow]) {
    let mut groups: Vec<(String, String, f64, f64, usize)> = Vec::new();
    for r in rows {
        let fraction = format!("{:.2}", r.fraction);
        match groups.iter_mut().find(|g| g.0 == fraction && g.1 == r.phase) {
            Some(g) => {
                g.2 += r.accuracy;
                g.3 += r.macro_f1;
                g.4 += 1;
            }
            None => groups.push((fraction, r.phase.clone(), r.accuracy, r.macro_f1, 1)),
        }
    }
    for (fraction, phase, acc, f1, n) in groups {
        println!("fraction {fraction} {phase:<18} accuracy {:.4} macro-F1 {:.4}", acc / n as f64, f1 / n as f64);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
