//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion.
//!
//! Criteria fall into two groups. Gating criteria check properties of the
//! code (gradients, invariants, bounds, determinism) and make the target exit
//! non-zero when they fail. Reported criteria compare accuracies on text
//! corpora; their verdict is printed but only gates under
//! `ACCEPTANCE_STRICT=1`.
//!
//! Environment:
//! * `LSHINFUSE_TARGET_DIR`, `LSHINFUSE_SOURCE_DIR`: class-per-directory
//!   corpora for the accuracy criteria. Both must be set; otherwise the
//!   synthetic sport-like target and news-like source are used.
//! * `ACCEPTANCE_SEEDS`: number of seeds for the accuracy criteria (default 5).
//! * `ACCEPTANCE_STRICT=1`: reported criteria gate too.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::gradcheck::{self, MASKS, TOL};
use common::{gaussian, prefix_oracle_recall, recall_at, unit_rows, unit_store};
use lshinfuse::clustering::kmeans;
use lshinfuse::corpus::{load_corpus, LabeledCorpus};
use lshinfuse::infusion::{attend, penalty};
use lshinfuse::linalg::{dot, rng_for};
use lshinfuse::lsh_forest::{brute_force_knn, ForestParams, LshForest};
use lshinfuse::par::Execution;
use lshinfuse::pipeline::{
    cross_validate, export_embeddings, infuse_train, mean_accuracy, outcome_rows, pretrain, write_metrics_csv, CvPlan,
    FoldOutcome, InfusionVariant, SourcePlan, TrainingConfig,
};
use lshinfuse::synth::SurrogateSpec;
use rand::Rng;

const GAP_POINTS: f64 = 2.0;
const ABLATION_SLACK: f64 = 0.5;
const SWEEP_SLACK: f64 = 0.5;
const RECALL_TARGET: f64 = 0.9;
const ATTENTION_DRAWS: usize = 1000;
const ATTENTION_TOL: f64 = 1e-9;
const RUNTIME_LIMIT: Duration = Duration::from_secs(30 * 60);

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Gating,
    Reported,
}

struct Verdict {
    id: &'static str,
    kind: Kind,
    pass: bool,
}

struct Suite {
    verdicts: Vec<Verdict>,
}

impl Suite {
    fn record(&mut self, id: &'static str, kind: Kind, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if kind == Kind::Reported { " [reported]" } else { "" };
        println!("{tag} {id}{note}: {detail}");
        self.verdicts.push(Verdict { id, kind, pass });
    }
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn corpora() -> (LabeledCorpus, LabeledCorpus, &'static str) {
    if let (Ok(t), Ok(s)) = (std::env::var("LSHINFUSE_TARGET_DIR"), std::env::var("LSHINFUSE_SOURCE_DIR")) {
        let target = load_corpus(Path::new(&t)).expect("target corpus loads");
        let source = load_corpus(Path::new(&s)).expect("source corpus loads");
        return (target, source, "corpora from environment");
    }
    (SurrogateSpec::sport_like().generate(11), SurrogateSpec::news_like().generate(12), "synthetic surrogates")
}

struct SeedRun {
    baseline: f64,
    infused: f64,
    nopenalty: f64,
    store: lshinfuse::SourceStore,
    elapsed: Duration,
}

fn run_seed(target: &LabeledCorpus, source: &LabeledCorpus, seed: u64) -> SeedRun {
    let source_model = pretrain(source, &TrainingConfig { seed, ..TrainingConfig::bbc() }).expect("source pretrain");
    let mut store = export_embeddings(&source_model, source).expect("export");
    store.tag = source.name.clone();
    let plan = CvPlan {
        run_id: format!("seed{seed}"),
        source: SourcePlan::Stores(vec![store.clone()]),
        variants: vec![InfusionVariant::with_penalty(1e-4), InfusionVariant::without_penalty()],
    };
    let config = TrainingConfig { seed, ..TrainingConfig::bbc_sport() };
    let start = Instant::now();
    let outcomes = cross_validate(Execution::default(), target, 1.0, &plan, &config).expect("cross-validation");
    let elapsed = start.elapsed();
    let (baseline, variants) = mean_accuracy(&outcomes);
    SeedRun {
        baseline,
        infused: variants[0].1,
        nopenalty: variants[1].1,
        store,
        elapsed,
    }
}

fn accuracy_criteria(suite: &mut Suite) {
    let (target, source, origin) = corpora();
    let seeds = env_usize("ACCEPTANCE_SEEDS", 5).max(1);
    println!(
        "accuracy criteria on {origin}: target {} ({} docs), source {} ({} docs), {seeds} seeds",
        target.name,
        target.len(),
        source.name,
        source.len()
    );
    let mut runs = Vec::new();
    for seed in 0..seeds as u64 {
        let r = run_seed(&target, &source, seed);
        println!(
            "  seed {seed}: baseline {:.2} infused {:.2} infused-nopenalty {:.2} ({:.0}s)",
            pct(r.baseline),
            pct(r.infused),
            pct(r.nopenalty),
            r.elapsed.as_secs_f64()
        );
        runs.push(r);
    }
    let n = runs.len() as f64;
    let mean = |f: fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let (base, inf, nop) = (mean(|r| r.baseline), mean(|r| r.infused), mean(|r| r.nopenalty));

    suite.record(
        "C1 infusion gap",
        Kind::Reported,
        pct(inf - base) >= GAP_POINTS,
        format!(
            "mean infused {:.2} - baseline {:.2} = {:+.2} points (need >= {GAP_POINTS:.1})",
            pct(inf),
            pct(base),
            pct(inf - base)
        ),
    );
    suite.record(
        "C2 penalty ablation",
        Kind::Reported,
        pct(inf) >= pct(nop) - ABLATION_SLACK,
        format!("infused {:.2} vs infused-nopenalty {:.2} (need >= nopenalty - {ABLATION_SLACK})", pct(inf), pct(nop)),
    );

    let first = &runs[0];
    let plan = CvPlan {
        run_id: "sweep".into(),
        source: SourcePlan::Stores(vec![first.store.clone()]),
        variants: vec![InfusionVariant::with_penalty(1e-4)],
    };
    let config = TrainingConfig::bbc_sport();
    let mut points = Vec::new();
    for fraction in [0.3, 0.5, 0.7] {
        let outcomes: Vec<FoldOutcome> =
            cross_validate(Execution::default(), &target, fraction, &plan, &config).expect("sweep");
        let (b, v) = mean_accuracy(&outcomes);
        points.push((fraction, b, v[0].1));
    }
    points.push((1.0, first.baseline, first.infused));
    let detail: Vec<String> =
        points.iter().map(|(f, b, i)| format!("{f:.1}: {:.2}/{:.2}", pct(*b), pct(*i))).collect();
    let ok = points.iter().all(|(_, b, i)| pct(*i) >= pct(*b) - SWEEP_SLACK);
    suite.record(
        "C3 fraction sweep",
        Kind::Reported,
        ok,
        format!("baseline/infused per fraction {} (need infused >= baseline - {SWEEP_SLACK})", detail.join(", ")),
    );
    let (at07, full) = (points[2].2, first.baseline);
    println!(
        "  note: infused@0.7 {:.2} {} baseline@1.0 {:.2}",
        pct(at07),
        if at07 >= full { ">=" } else { "<" },
        pct(full)
    );

    suite.record(
        "C11 runtime",
        Kind::Gating,
        first.elapsed <= RUNTIME_LIMIT,
        format!("one 10-fold run took {:.0}s (limit {}s)", first.elapsed.as_secs_f64(), RUNTIME_LIMIT.as_secs()),
    );
}

fn lsh_criteria(suite: &mut Suite) {
    let store = unit_store(5000, 50, 1);
    let queries = unit_rows(500, 50, 2);
    let forest = LshForest::build(&store, ForestParams::default(), 3).expect("forest");
    let recall = recall_at(&forest, &store, &queries, 5);
    let oracle = prefix_oracle_recall(&forest, &store, &queries, 5);
    suite.record(
        "C4a LSH recall",
        Kind::Reported,
        recall >= RECALL_TARGET,
        format!(
            "recall@5 {recall:.3} on 5000 random unit vectors in 50 dims (need >= {RECALL_TARGET}); \
             idealized longest-prefix selection with the same hashes gets {oracle:.3}"
        ),
    );

    let mut exact = true;
    let mut cases = 0;
    for seed in 0..20u64 {
        let n = 5 + seed as usize * 5;
        let small = unit_store(n, 12, 100 + seed);
        let forest = LshForest::build(&small, ForestParams::default(), seed).expect("forest");
        let qs = unit_rows(10, 12, 200 + seed);
        for q in 0..qs.rows() {
            for k in [1, 5, n.min(10)] {
                exact &= forest.query(qs.row(q), k).unwrap() == brute_force_knn(&small, qs.row(q), k).unwrap();
                cases += 1;
            }
        }
    }
    suite.record("C4b LSH exact when n <= M", Kind::Gating, exact, format!("{cases} queries on stores of 5..100 points"));

    let params = ForestParams::default();
    let budget = params.candidate_budget();
    let queries = unit_rows(50, 50, 5);
    let mut worst = Vec::new();
    for n in [1_000, 10_000, 50_000] {
        let store = unit_store(n, 50, n as u64);
        let forest = LshForest::build(&store, params, 3).expect("forest");
        let max = (0..queries.rows())
            .map(|q| forest.query_with_stats(queries.row(q), 5).unwrap().1.candidates)
            .max()
            .unwrap();
        worst.push((n, max));
    }
    let detail: Vec<String> = worst.iter().map(|(n, c)| format!("n={n}: {c}")).collect();
    suite.record(
        "C5 candidate bound",
        Kind::Gating,
        worst.iter().all(|&(_, c)| c <= budget),
        format!("max scored candidates {} (bound c*l = {budget})", detail.join(", ")),
    );
}

fn gradient_criterion(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let mut instances = 0;
    for seed in 0..24u64 {
        for mask in MASKS {
            for infused in [true, false] {
                let r = gradcheck::check(seed, mask, infused);
                worst = worst.max(r.encoder_e).max(r.encoder_w).max(r.head).max(r.context);
                instances += 1;
            }
        }
    }
    suite.record(
        "C6 gradients",
        Kind::Gating,
        instances >= 20 && worst < TOL,
        format!("{instances} instances incl. all-active/all-inactive/one-active masks, max rel err {worst:.2e} (need < {TOL:e})"),
    );
}

fn attention_criterion(suite: &mut Suite) {
    let mut rng = rng_for(7, 1000);
    let mut ok = true;
    for _ in 0..ATTENTION_DRAWS {
        let m = rng.random_range(1..=16);
        let k = rng.random_range(1..=8);
        let scale = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let c: Vec<f64> = (0..m).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let zs: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = zs.iter().map(Vec::as_slice).collect();
        let a = attend(&c, &refs).expect("attention");
        ok &= a.weights.iter().all(|&w| w > 0.0 && w <= 1.0);
        ok &= (a.weights.iter().sum::<f64>() - 1.0).abs() < ATTENTION_TOL;
        for d in 0..m {
            let lo = zs.iter().map(|z| z[d]).fold(f64::INFINITY, f64::min);
            let hi = zs.iter().map(|z| z[d]).fold(f64::NEG_INFINITY, f64::max);
            ok &= a.fused[d] >= lo - ATTENTION_TOL && a.fused[d] <= hi + ATTENTION_TOL;
        }
        // the highest-scoring neighbor carries the largest weight
        let scores: Vec<f64> = zs.iter().map(|z| dot(&c, z)).collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let top = a.weights.iter().cloned().fold(0.0, f64::max);
        ok &= scores.iter().zip(&a.weights).all(|(s, w)| *s < best || *w == top);
        ok &= penalty(&a.fused, &a.fused, 1e-4) == 0.0;
        ok &= penalty(&a.fused, &c, 1.0) >= 0.0;
    }
    suite.record(
        "C7 attention invariants",
        Kind::Gating,
        ok,
        format!("{ATTENTION_DRAWS} draws: weights a distribution, fused vector in the convex hull, penalty >= 0"),
    );
}

fn kmeans_criterion(suite: &mut Suite) {
    let mut monotone = true;
    for seed in 0..100u64 {
        let points = gaussian(20 + (seed as usize * 7) % 200, 2 + seed as usize % 5, seed);
        let model = kmeans(&points, 1 + seed as usize % 12, 100, seed).expect("kmeans");
        monotone &= model.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs());
    }
    let mut zero = true;
    for seed in 0..10u64 {
        let points = gaussian(15 + seed as usize, 3, seed + 300);
        zero &= kmeans(&points, points.rows(), 100, seed).expect("kmeans").inertia == 0.0;
    }
    suite.record(
        "C8 k-means",
        Kind::Gating,
        monotone && zero,
        format!("inertia monotone on 100 problems: {monotone}; K = n gives zero inertia: {zero}"),
    );
}

fn determinism_criterion(suite: &mut Suite) {
    let target = SurrogateSpec::sport_like().scaled(0.25).generate(21);
    let source = SurrogateSpec::news_like().scaled(0.1).generate(22);
    let config = TrainingConfig {
        epochs: 5,
        folds: 3,
        seed: 9,
        ..TrainingConfig::bbc_sport()
    };
    let run = |exec: Execution| -> Vec<u8> {
        let source_model = pretrain(&source, &config).expect("source pretrain");
        let plan = CvPlan {
            run_id: "det".into(),
            source: SourcePlan::Stores(vec![export_embeddings(&source_model, &source).expect("export")]),
            variants: vec![InfusionVariant::with_penalty(1e-4), InfusionVariant::without_penalty()],
        };
        let outcomes = cross_validate(exec, &target, 1.0, &plan, &config).expect("cross-validation");
        let mut csv = Vec::new();
        write_metrics_csv(&outcome_rows(&outcomes, &plan, &target), &mut csv).expect("csv");
        csv
    };
    let a = run(Execution::default());
    let b = run(Execution::default());
    let c = run(Execution::Sequential);
    suite.record(
        "C9 determinism",
        Kind::Gating,
        a == b && a == c,
        format!("{} CSV bytes; repeat run identical: {}; sequential run identical: {}", a.len(), a == b, a == c),
    );
}

fn parameter_criterion(suite: &mut Suite) {
    let target = SurrogateSpec::sport_like().scaled(0.1).generate(31);
    let config = TrainingConfig { epochs: 1, ..TrainingConfig::bbc_sport() };
    let baseline = pretrain(&target, &config).expect("pretrain");
    let store = export_embeddings(&baseline, &target).expect("export");
    let infused = infuse_train(&baseline, &[store], &target, &config).expect("infuse");
    let (m, u) = (config.latent_dim, target.num_classes());
    let head = infused.parameter_count() - infused.encoder.parameter_count();
    suite.record(
        "C10 parameter count",
        Kind::Gating,
        head == 2 * m * u,
        format!("infused head has {head} parameters, 2*m*u = {}", 2 * m * u),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not meaningful for this target
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let mut suite = Suite { verdicts: Vec::new() };

    gradient_criterion(&mut suite);
    attention_criterion(&mut suite);
    kmeans_criterion(&mut suite);
    parameter_criterion(&mut suite);
    lsh_criteria(&mut suite);
    determinism_criterion(&mut suite);
    accuracy_criteria(&mut suite);

    let failed: Vec<&Verdict> = suite.verdicts.iter().filter(|v| !v.pass).collect();
    let gating: Vec<&str> =
        failed.iter().filter(|v| strict || v.kind == Kind::Gating).map(|v| v.id).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s{}",
        suite.verdicts.len() - failed.len(),
        suite.verdicts.len(),
        start.elapsed().as_secs_f64(),
        if strict { " (strict)" } else { "" }
    );
    if gating.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("gating failures: {}", gating.join(", "));
        ExitCode::FAILURE
    }
}
