mod config;

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use segroute::metrics::{classification_report, roc_auc, ClassificationReport, ConfusionCounts};
use segroute::models::protocol::{serve, Handler};
use segroute::models::{ClassLabel, ClassWeights, Classifier, LinearClassifier, Segmenter, TrainConfig};
use segroute::occlusion::{occlusion_map, OcclusionSpec};
use segroute::phantom::{generate_cohort_with, write_cohort, PhantomKind, PhantomSpec};
use segroute::pipeline::{
    load_manifest, read_results_csv, results_to_csv, results_to_jsonl, run_adaptive, run_generic, run_optimal,
    training_features, RunOptions,
};
use segroute::preprocess::{preprocess_for_classification, AugmentSpec, WindowSpec};
use segroute::stats::{boxplot, compare_methods, BoxplotStats, DEFAULT_ALPHA};
use segroute::volume::{read_svol, write_svol, Payload};
use segroute::{Dims, Error, Result};

use config::{build_segmenter, RunConfig, SegmenterSpec};

#[derive(Parser)]
#[command(name = "segroute", version, about = "Classification-routed adaptive segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom cohort and merge it into DIR/manifest.jsonl.
    PhantomGen(PhantomGenArgs),
    /// Train the reference linear classifier.
    Train(TrainArgs),
    /// Run one workflow over a manifest.
    Run(RunArgs),
    /// Paired signed-rank comparison of two results files.
    Compare(CompareArgs),
    /// Occlusion sensitivity map for a trained classifier.
    Occlusion(OcclusionArgs),
    /// Per-category summary and boxplot data.
    Report(ReportArgs),
    /// Serve in-process models over the line protocol on stdin/stdout.
    Serve(ServeArgs),
}

#[derive(Args)]
struct PhantomGenArgs {
    #[arg(long)]
    kind: PhantomKind,
    #[arg(long)]
    count: usize,
    #[arg(long, env = "SEGROUTE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Edge length of the cubic grid.
    #[arg(long, default_value_t = 96)]
    size: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training manifests; repeat to combine.
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    /// LABEL=WEIGHT; repeatable. Defaults to PLD=4 and MCC=1.
    #[arg(long = "class-weight")]
    class_weight: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, env = "SEGROUTE_SEED", default_value_t = 0)]
    seed: u64,
    /// Apply random rotations and flips seeded by --seed and the scan id.
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Generic,
    Optimal,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// Results CSV; a JSON-lines mirror is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Parallel scans; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args)]
struct OcclusionArgs {
    #[arg(long)]
    model: PathBuf,
    /// HU volumes are preprocessed first; Real volumes are used as given.
    #[arg(long)]
    volume: PathBuf,
    #[arg(long, default_value_t = 16)]
    patch: usize,
    #[arg(long, default_value_t = 8)]
    stride: usize,
    #[arg(long, default_value_t = 0.0)]
    fill: f64,
    /// Defaults to the model's positive label.
    #[arg(long)]
    target: Option<ClassLabel>,
    /// Map as SVOL; per-patch deltas go to the same stem with `.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Linear classifier JSON.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Segmenter spec JSON, e.g. {"type":"threshold",...}.
    #[arg(long)]
    segmenter: Option<PathBuf>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::File {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn phantom_gen(a: PhantomGenArgs) -> Result<bool> {
    let template = PhantomSpec {
        dims: Dims::cube(a.size),
        ..PhantomSpec::new(a.kind, a.seed)
    };
    let records = generate_cohort_with(&template, a.kind, a.count, a.seed)?;
    let manifest = write_cohort(&records, &a.out)?;
    eprintln!("wrote {} {} phantoms to {}", records.len(), a.kind.as_str(), manifest.display());
    Ok(true)
}

fn train(a: TrainArgs) -> Result<bool> {
    let mut weights = if a.class_weight.is_empty() {
        ClassWeights::default()
    } else {
        ClassWeights::uniform()
    };
    if !a.class_weight.is_empty() {
        let mut map = BTreeMap::new();
        for entry in &a.class_weight {
            let (l, w) = ClassWeights::parse_entry(entry)?;
            map.insert(l, w);
        }
        weights = ClassWeights::new(map)?;
    }
    let mut data = Vec::new();
    for m in &a.manifest {
        data.extend(load_manifest(m)?);
    }
    let augment = a.augment.then(|| AugmentSpec::standard(a.seed));
    let features = training_features(&data, &WindowSpec::default(), augment.as_ref(), a.jobs)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let model = segroute::models::train_linear_classifier(&features, &weights, &cfg)?;

    let scores: Vec<f64> = features.iter().map(|(f, _)| model.positive_probability(f)).collect();
    let truth: Vec<bool> = features.iter().map(|(_, l)| *l == model.positive_label).collect();
    let hits = scores.iter().zip(&truth).filter(|(&p, &t)| (p > 0.5) == t).count();
    model.save(&a.out)?;
    eprintln!(
        "trained on {} scans; training AUC {:.4}, accuracy {:.4}",
        data.len(),
        roc_auc(&scores, &truth).unwrap_or(f64::NAN),
        hits as f64 / data.len() as f64
    );
    Ok(true)
}

fn run(a: RunArgs) -> Result<bool> {
    let cfg = RunConfig::load(&a.config)?;
    let data = load_manifest(&cfg.manifest)?;
    let registry = cfg.build_registry()?;
    let opts = RunOptions {
        window: cfg.window,
        jobs: a.jobs,
        keep_masks: false,
    };
    let results = match a.mode {
        Mode::Adaptive => {
            let classifier = cfg.build_classifier()?;
            run_adaptive(classifier.as_ref(), &registry, &data, &opts)?
        }
        Mode::Generic => run_generic(&registry, &data, &opts)?,
        Mode::Optimal => run_optimal(&registry, &data, &opts)?,
    };
    write_file(&a.out, results_to_csv(&results))?;
    write_file(&a.out.with_extension("jsonl"), results_to_jsonl(&results)?)?;
    let failures: Vec<_> = results.iter().filter(|r| r.is_failure()).collect();
    for f in &failures {
        eprintln!("{}: {}", f.id, f.error.as_deref().unwrap_or_default());
    }
    eprintln!("{} scans, {} failed", results.len(), failures.len());
    Ok(failures.is_empty())
}

fn compare(a: CompareArgs) -> Result<bool> {
    let ra = read_results_csv(&a.a)?;
    let rb = read_results_csv(&a.b)?;
    let pairs = |rows: &[segroute::pipeline::ResultRow], path: &Path| -> Result<Vec<(String, f64)>> {
        rows.iter()
            .map(|r| {
                r.dice
                    .map(|d| (r.id.clone(), d))
                    .ok_or_else(|| Error::Pairing(format!("{}: scan {} has no Dice", path.display(), r.id)))
            })
            .collect()
    };
    let groups: BTreeMap<String, String> = ra.iter().map(|r| (r.id.clone(), r.category.clone())).collect();
    let report = compare_methods(
        &pairs(&ra, &a.a)?,
        &pairs(&rb, &a.b)?,
        |id| groups[id].clone(),
        a.alpha,
    )?;
    write_file(&a.out, report.to_csv())?;
    Ok(true)
}

fn occlusion(a: OcclusionArgs) -> Result<bool> {
    let model = LinearClassifier::load(&a.model)?;
    let v = read_svol(&a.volume)?;
    let input = match v.payload() {
        Payload::Hu(_) => preprocess_for_classification(&v, &WindowSpec::default())?,
        _ => v,
    };
    let target = a.target.unwrap_or_else(|| model.positive_label.clone());
    let spec = OcclusionSpec {
        fill_value: a.fill,
        ..OcclusionSpec::new([a.patch; 3], [a.stride; 3], target)
    };
    let map = occlusion_map(&model, &input, &spec)?;
    write_svol(&map.map, &a.out)?;
    write_file(&a.out.with_extension("csv"), map.deltas_csv())?;
    Ok(true)
}

#[derive(Serialize)]
struct FileSummary {
    path: PathBuf,
    n: usize,
    failures: usize,
    overall: Option<BoxplotStats>,
    categories: BTreeMap<String, BoxplotStats>,
    /// Present when the file has predicted labels for both classes.
    classification: Option<ClassificationReport>,
}

fn report(a: ReportArgs) -> Result<bool> {
    let mut files = Vec::new();
    for path in &a.results {
        let rows = read_results_csv(path)?;
        let dice: Vec<f64> = rows.iter().filter_map(|r| r.dice).collect();
        let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &rows {
            if let Some(d) = r.dice {
                by_cat.entry(r.category.clone()).or_default().push(d);
            }
        }
        let categories = by_cat
            .into_iter()
            .map(|(k, v)| Ok((k, boxplot(&v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let classified: Vec<_> = rows
            .iter()
            .filter_map(|r| r.predicted_label.as_ref().map(|p| (&r.true_label, p)))
            .collect();
        let classification = if classified.len() == rows.len() && !rows.is_empty() {
            let pld = ClassLabel::pld();
            let counts = ConfusionCounts::tally(classified, &pld);
            classification_report(&counts, "PLD", "MCC").ok()
        } else {
            None
        };
        files.push(FileSummary {
            path: path.clone(),
            n: rows.len(),
            failures: rows.iter().filter(|r| r.dice.is_none()).count(),
            overall: if dice.is_empty() { None } else { Some(boxplot(&dice)?) },
            categories,
            classification,
        });
    }
    let mut text = serde_json::to_string_pretty(&files)?;
    text.push('\n');
    write_file(&a.out, text)?;
    Ok(true)
}

fn serve_cmd(a: ServeArgs) -> Result<bool> {
    let classifier = a.classifier.as_ref().map(LinearClassifier::load).transpose()?;
    let segmenter = match &a.segmenter {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::File {
                path: p.clone(),
                source: e,
            })?;
            let spec: SegmenterSpec = serde_json::from_str(&text)?;
            Some(build_segmenter(&spec)?)
        }
        None => None,
    };
    if classifier.is_none() && segmenter.is_none() {
        return Err(Error::Validation("serve needs --classifier and/or --segmenter".into()));
    }
    let handler = Handler {
        classifier: classifier.as_ref().map(|c| c as &dyn Classifier),
        segmenter: segmenter.as_deref().map(|s| s as &dyn Segmenter),
    };
    let stdin = std::io::stdin();
    serve(&handler, BufReader::new(stdin.lock()), BufWriter::new(std::io::stdout().lock()))?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::PhantomGen(a) => phantom_gen(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Occlusion(a) => occlusion(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
