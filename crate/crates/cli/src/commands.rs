//! One function per subcommand. Every command reads its inputs, runs the
//! corresponding library pipeline, writes its outputs atomically, and
//! drops a reproduction manifest next to the primary output.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use reqsense_core::datagen::{generate_signal_dataset, generate_toy_dataset};
use reqsense_core::dsp::{
    compute_normalization, normalize, NormalizationConstant, SpectrogramExtractor,
};
use reqsense_core::io::{
    self, atomic_write, parse_signal_spec, parse_sweep_options, parse_toy_spec,
    parse_train_options, read_feature_set, read_model, read_signal_dataset, read_toy_dataset,
    write_eval_summary, write_feature_set, write_model, write_report_csv, write_report_table,
    write_roc_csv, write_signal_dataset, write_sweep_csv, write_sweep_summary, write_toy_dataset,
};
use reqsense_core::metrics::{bootstrap_fp_se, roc as roc_curve, toy_predictions, weighted_roc_sweep};
use reqsense_core::models::product_forward;
use reqsense_core::reqloss::LabeledPrediction;
use reqsense_core::rng::SeededRng;
use reqsense_core::trainer::{evaluate, run_training, split_dataset, FeatureSample, FeatureSet};
use reqsense_core::{Error, Result};

use crate::manifest::{manifest_path, RunManifest};

fn threads_parser() -> clap::builder::RangedI64ValueParser<u32> {
    clap::value_parser!(u32).range(1..)
}

/// Reads a configuration/spec file, turning "not found" into a usage
/// error that names the path (the file is an argument the user typed).
fn read_config_text(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == ErrorKind::NotFound => Err(Error::config(format!(
            "configuration file `{}` not found",
            path.display()
        ))),
        Err(e) => Err(e.into()),
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold.is_finite() && (0.0..=1.0).contains(&threshold)) {
        return Err(Error::config(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    Ok(())
}

/// A sibling path in the primary output's directory.
fn sibling(out: &Path, name: &str) -> PathBuf {
    match out.parent() {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

// ---------------------------------------------------------------------------
// gen-signals
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct GenSignalsArgs {
    /// Generator configuration file (defaults describe the standard
    /// 1,000/98,000/2,000 dataset)
    #[arg(long, alias = "config", value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Override the generator seed from the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset CSV
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn gen_signals(a: GenSignalsArgs) -> Result<u8> {
    let text = match &a.spec {
        Some(p) => read_config_text(p)?,
        None => String::new(),
    };
    let mut spec = parse_signal_spec(&text)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let groups = generate_signal_dataset(&spec)?;
    write_signal_dataset(&a.out, &groups)?;
    let mut m = RunManifest::new("gen-signals");
    m.seed(spec.seed);
    if let Some(p) = &a.spec {
        m.config(p)?;
    }
    m.output("dataset", &a.out);
    m.write(&manifest_path(&a.out))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// gen-toy
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct GenToyArgs {
    /// Generator configuration file (defaults: 100,000 class-0 and 1,000
    /// class-1 points)
    #[arg(long, alias = "config", value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Override the generator seed from the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset CSV
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn gen_toy(a: GenToyArgs) -> Result<u8> {
    let text = match &a.spec {
        Some(p) => read_config_text(p)?,
        None => String::new(),
    };
    let mut spec = parse_toy_spec(&text)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let points = generate_toy_dataset(spec.n_class0, spec.n_class1, spec.seed)?;
    write_toy_dataset(&a.out, &points)?;
    let mut m = RunManifest::new("gen-toy");
    m.seed(spec.seed);
    if let Some(p) = &a.spec {
        m.config(p)?;
    }
    m.output("dataset", &a.out);
    m.write(&manifest_path(&a.out))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct FeaturesArgs {
    /// Input signal dataset CSV
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Output feature CSV
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Number of seeded calibration samples for the normalization constant
    #[arg(long, default_value_t = 4096)]
    pub calibration_size: usize,
    /// Reuse a stored normalization constant instead of calibrating
    #[arg(long, value_name = "C")]
    pub norm_constant: Option<f64>,
    /// Seed of the calibration subset draw
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn features(a: FeaturesArgs) -> Result<u8> {
    let groups = read_signal_dataset(&a.data)?;
    if groups.is_empty() {
        return Err(Error::config(format!(
            "dataset `{}` holds no groups",
            a.data.display()
        )));
    }
    let extractor = SpectrogramExtractor::new();
    let mut m = RunManifest::new("features");

    let c = match a.norm_constant {
        Some(v) => NormalizationConstant::new(v)?,
        None => {
            let seed = a.seed.unwrap_or(io::DEFAULT_SEED);
            let k = a.calibration_size.min(groups.len());
            if k == 0 {
                return Err(Error::config("calibration_size must be > 0"));
            }
            let mut rng = SeededRng::new(seed);
            let picks = rng.sample_indices(groups.len(), k);
            let subset: Vec<_> = picks.iter().map(|&i| extractor.extract(&groups[i])).collect();
            m.seed(seed);
            m.extra("calibration_size", k);
            compute_normalization(&subset)?
        }
    };

    let mut samples = Vec::with_capacity(groups.len());
    for group in groups {
        let spec = extractor.extract(&group);
        samples.push(FeatureSample::new(normalize(&spec, c), group.label()));
    }
    write_feature_set(&a.out, &FeatureSet { samples })?;

    m.input("dataset", &a.data)?;
    m.output("features", &a.out);
    m.extra("normalization_constant", c.value());
    m.write(&manifest_path(&a.out))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    /// Input feature CSV
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Training configuration file (all keys optional)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the training seed from the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output model file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-stage report CSV (default: `report.csv` next to the model)
    #[arg(long, value_name = "FILE")]
    pub report_csv: Option<PathBuf>,
    /// Human-readable report table (default: `report.txt` next to the model)
    #[arg(long, value_name = "FILE")]
    pub report_table: Option<PathBuf>,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn train(a: TrainArgs) -> Result<u8> {
    let text = match &a.config {
        Some(p) => read_config_text(p)?,
        None => String::new(),
    };
    let mut opts = parse_train_options(&text)?;
    if let Some(seed) = a.seed {
        opts.config.seed = seed;
    }
    let set = read_feature_set(&a.features)?;
    let split = split_dataset(&set, opts.train_fraction, opts.config.seed)?;
    let outcome = run_training(&set, &split, &opts.requirements, &opts.config)?;

    let report_csv = a
        .report_csv
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "report.csv"));
    let report_table = a
        .report_table
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "report.txt"));
    write_model(&a.out, &outcome.weights)?;
    write_report_csv(&report_csv, &outcome.report)?;
    write_report_table(&report_table, &outcome.phase1, &outcome.report)?;

    let mut m = RunManifest::new("train");
    m.seed(opts.config.seed);
    if let Some(p) = &a.config {
        m.config(p)?;
    }
    m.input("features", &a.features)?;
    m.output("model", &a.out);
    m.output("report_csv", &report_csv);
    m.output("report_table", &report_table);
    let report = &outcome.report;
    m.extra("train_size", report.train_size);
    m.extra("train_class1", report.train_class1);
    m.extra("train_class0", report.train_class0);
    m.extra("val_size", report.val_size);
    m.extra("total_iters", report.stages.iter().map(|s| u64::from(s.iters)).sum::<u64>());
    m.extra("total_grad_evals", report.total_grad_evals);
    m.extra(
        "peak_active",
        report.stages.iter().map(|s| s.peak_active).max().unwrap_or(0),
    );
    m.extra("requirements_met", report.requirements_met);
    m.extra("dead_model", report.dead_model);
    m.extra("run_truncated", report.run_truncated);
    m.write(&manifest_path(&a.out))?;

    if outcome.report.dead_model {
        eprintln!(
            "training ended with a dead model (nothing classified as positive); \
             best-effort weights and reports were written"
        );
        return Ok(1);
    }
    if !outcome.report.requirements_met {
        eprintln!(
            "training finished without satisfying the requirements; \
             best-effort weights and reports were written"
        );
        return Ok(1);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// eval / roc
// ---------------------------------------------------------------------------

/// Which side of the seeded train/validation split to score.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    /// Every sample in the feature file
    All,
    /// The training part of the split
    Train,
    /// The validation part of the split
    Val,
}

impl Part {
    fn as_str(self) -> &'static str {
        match self {
            Part::All => "all",
            Part::Train => "train",
            Part::Val => "val",
        }
    }
}

/// Resolves the index list for a part, reproducing the training split
/// from the same configuration (train_fraction and seed).
fn part_indices(
    set: &FeatureSet,
    part: Part,
    config: Option<&PathBuf>,
    seed_override: Option<u64>,
) -> Result<Vec<usize>> {
    if part == Part::All {
        return Ok((0..set.len()).collect());
    }
    let text = match config {
        Some(p) => read_config_text(p)?,
        None => String::new(),
    };
    let mut opts = parse_train_options(&text)?;
    if let Some(seed) = seed_override {
        opts.config.seed = seed;
    }
    let split = split_dataset(set, opts.train_fraction, opts.config.seed)?;
    Ok(match part {
        Part::All => unreachable!("handled above"),
        Part::Train => split.train,
        Part::Val => split.validation,
    })
}

#[derive(Args)]
pub struct EvalArgs {
    /// Saved model file
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Input feature CSV
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Training configuration used to reproduce the split (for --part
    /// train/val)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the split seed from the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which part of the split to evaluate
    #[arg(long, value_enum, default_value_t = Part::All)]
    pub part: Part,
    /// Hard decision threshold
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Output summary file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn eval(a: EvalArgs) -> Result<u8> {
    check_threshold(a.threshold)?;
    let w = read_model(&a.model)?;
    let set = read_feature_set(&a.features)?;
    let idx = part_indices(&set, a.part, a.config.as_ref(), a.seed)?;
    let ev = evaluate(&w, &set, &idx, a.threshold);
    write_eval_summary(&a.out, &ev, a.threshold)?;

    let mut m = RunManifest::new("eval");
    if let Some(p) = &a.config {
        m.config(p)?;
    }
    m.input("model", &a.model)?;
    m.input("features", &a.features)?;
    m.output("summary", &a.out);
    m.extra("part", a.part.as_str());
    m.extra("threshold", a.threshold);
    m.write(&manifest_path(&a.out))?;
    Ok(0)
}

#[derive(Args)]
pub struct RocArgs {
    /// Saved model file
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Input feature CSV
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Training configuration used to reproduce the split (for --part
    /// train/val)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the split seed from the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which part of the split to score
    #[arg(long, value_enum, default_value_t = Part::All)]
    pub part: Part,
    /// Output curve CSV; the AUC lands in `<out>.summary`
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn roc(a: RocArgs) -> Result<u8> {
    let w = read_model(&a.model)?;
    let set = read_feature_set(&a.features)?;
    let idx = part_indices(&set, a.part, a.config.as_ref(), a.seed)?;
    let preds: Vec<LabeledPrediction> = idx
        .iter()
        .map(|&i| {
            let s = &set.samples[i];
            LabeledPrediction {
                y_pred: product_forward(s.energy, &s.spec, &w).p,
                label: s.label,
            }
        })
        .collect();
    let curve = roc_curve(&preds)?;
    write_roc_csv(&a.out, &curve)?;
    let summary = summary_path(&a.out);
    atomic_write(&summary, |out| {
        use std::io::Write as _;
        writeln!(out, "auc = {}", curve.auc)?;
        writeln!(out, "points = {}", curve.points.len())?;
        Ok(())
    })?;

    let mut m = RunManifest::new("roc");
    if let Some(p) = &a.config {
        m.config(p)?;
    }
    m.input("model", &a.model)?;
    m.input("features", &a.features)?;
    m.output("curve", &a.out);
    m.output("summary", &summary);
    m.extra("part", a.part.as_str());
    m.write(&manifest_path(&a.out))?;
    Ok(0)
}

/// `<out>.summary` next to the primary output.
fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".summary");
    PathBuf::from(name)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SweepArgs {
    /// Input toy dataset CSV
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Sweep configuration file (ratios, fit and bootstrap knobs)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the bootstrap seed from the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output combined curve CSV; per-ratio curves and a summary are
    /// written next to it
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Worker threads (the pipeline is sequential; accepted for interface
    /// stability)
    #[arg(long, default_value_t = 1, value_parser = threads_parser())]
    pub threads: u32,
}

pub fn sweep(a: SweepArgs) -> Result<u8> {
    let text = match &a.config {
        Some(p) => read_config_text(p)?,
        None => String::new(),
    };
    let mut opts = parse_sweep_options(&text)?;
    if let Some(seed) = a.seed {
        opts.bootstrap_seed = seed;
    }
    check_threshold(opts.threshold)?;
    let resamples = u32::try_from(opts.bootstrap_resamples)
        .map_err(|_| Error::config("bootstrap_resamples is too large"))?;
    let points = read_toy_dataset(&a.data)?;
    let entries = weighted_roc_sweep(&points, &opts.ratios, &opts.fit)?;
    // One independent bootstrap stream per ratio.
    let fp_ses: Vec<f64> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let preds = toy_predictions(&points, &e.weights);
            bootstrap_fp_se(
                &preds,
                opts.threshold,
                resamples,
                opts.bootstrap_seed.wrapping_add(i as u64),
            )
        })
        .collect::<Result<_>>()?;

    write_sweep_csv(&a.out, &entries)?;
    let summary = summary_path(&a.out);
    write_sweep_summary(&summary, &entries, &fp_ses)?;

    let mut m = RunManifest::new("sweep");
    m.seed(opts.bootstrap_seed);
    if let Some(p) = &a.config {
        m.config(p)?;
    }
    m.input("dataset", &a.data)?;
    m.output("curves", &a.out);
    m.output("summary", &summary);
    for e in &entries {
        let path = ratio_curve_path(&a.out, e.ratio);
        write_roc_csv(&path, &e.curve)?;
        m.output("ratio_curve", &path);
    }
    m.write(&manifest_path(&a.out))?;
    Ok(0)
}

/// Per-ratio curve path: `sweep.csv` + ratio 10 → `sweep_ratio_10.csv`.
fn ratio_curve_path(out: &Path, ratio: f64) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".to_string());
    let ext = out
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    sibling(out, &format!("{stem}_ratio_{ratio}{ext}"))
}
