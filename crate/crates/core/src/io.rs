//! File formats and persistence.
//!
//! Everything that crosses a process boundary lives here: dataset and
//! feature CSV files, the structured-text model format, training reports,
//! metric exports, and flat `key = value` run configurations. All numeric
//! text is locale-independent; floats are written with the shortest
//! representation that parses back to the identical value, so every
//! round trip in this module is value-exact. Writers are atomic: content
//! goes to a sibling temp file that is renamed over the target only after
//! a successful flush.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::{SignalDatasetSpec, SourceKind, TimeSeriesGroup, ToyPoint2D, GROUP_LEN};
use crate::dsp::{Spectrogram, N_BINS, N_WINDOWS, SPEC_LEN};
use crate::error::{Error, Result};
use crate::metrics::{RocCurve, SweepEntry, ToyFitConfig};
use crate::models::{CnnWeights, GateWeights, ProductModelWeights, FLAT_LEN, HIDDEN, N_KERNELS};
use crate::reqloss::{LambdaPair, RequirementSpec};
use crate::trainer::{
    Convergence, Evaluation, FeatureSample, FeatureSet, Phase1Report, TrainConfig, TrainReport,
};

/// Default seed used by generator configs when none is given.
pub const DEFAULT_SEED: u64 = 42;
/// Default train share of the stratified split.
pub const DEFAULT_TRAIN_FRACTION: f64 = 2.0 / 3.0;
/// Default true-positive requirement (fraction of class 1).
pub const DEFAULT_TP_FRACTION: f64 = 0.5;
/// Default false-positive budget (fraction of class 0).
pub const DEFAULT_FP_FRACTION: f64 = 0.001;

/// Opens a file for buffered line reading, adding the path to any error.
fn open_lines(path: &Path) -> Result<std::io::Lines<BufReader<File>>> {
    let file = File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?;
    Ok(BufReader::new(file).lines())
}

// ---------------------------------------------------------------------------
// Atomic writing
// ---------------------------------------------------------------------------

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Runs `write` against a buffered temp file next to `path`, then renames
/// it over `path`. On any failure the temp file is removed and the target
/// is left untouched.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write(&mut out)?;
        out.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------
// Signal dataset CSV: `label,source,s0,...,s767`
// ---------------------------------------------------------------------------

fn signal_header() -> String {
    let mut h = String::from("label,source");
    for i in 0..GROUP_LEN {
        h.push_str(",s");
        h.push_str(&i.to_string());
    }
    h
}

/// Writes a signal dataset as CSV with header `label,source,s0,...,s767`.
pub fn write_signal_dataset(path: &Path, groups: &[TimeSeriesGroup]) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "{}", signal_header())?;
        for g in groups {
            write!(out, "{},{}", g.label(), g.source().as_str())?;
            for s in g.samples() {
                write!(out, ",{s}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    })
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("invalid number `{field}`")))
}

fn parse_label(field: &str, line: usize) -> Result<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::parse(line, format!("label must be 0 or 1, got `{other}`"))),
    }
}

/// Reads a signal dataset CSV written by [`write_signal_dataset`].
///
/// # Errors
/// Line-numbered parse errors for a bad header, wrong sample count,
/// unknown source, or a label inconsistent with its source.
pub fn read_signal_dataset(path: &Path) -> Result<Vec<TimeSeriesGroup>> {
    let mut lines = open_lines(path)?;
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::parse(1, "empty file; expected dataset header")),
    };
    if header != signal_header() {
        return Err(Error::parse(1, "bad header; expected `label,source,s0,...,s767`"));
    }
    let mut groups = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = parse_label(
            fields.next().ok_or_else(|| Error::parse(lineno, "missing label"))?,
            lineno,
        )?;
        let source_field = fields
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing source"))?;
        let source = SourceKind::parse(source_field.trim())
            .ok_or_else(|| Error::parse(lineno, format!("unknown source `{source_field}`")))?;
        if label != source.label() {
            return Err(Error::parse(
                lineno,
                format!("label {label} inconsistent with source `{source_field}`"),
            ));
        }
        let mut samples = Vec::with_capacity(GROUP_LEN);
        for field in fields {
            samples.push(parse_f64(field, lineno)?);
        }
        if samples.len() != GROUP_LEN {
            return Err(Error::parse(
                lineno,
                format!("expected {GROUP_LEN} samples, got {}", samples.len()),
            ));
        }
        groups.push(TimeSeriesGroup::new(samples, source)?);
    }
    Ok(groups)
}

// ---------------------------------------------------------------------------
// Toy dataset CSV: `label,x,y`
// ---------------------------------------------------------------------------

/// Writes the 2D toy dataset as CSV with header `label,x,y`.
pub fn write_toy_dataset(path: &Path, points: &[ToyPoint2D]) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "label,x,y")?;
        for p in points {
            writeln!(out, "{},{},{}", p.label, p.x, p.y)?;
        }
        Ok(())
    })
}

/// Reads a toy dataset CSV written by [`write_toy_dataset`].
pub fn read_toy_dataset(path: &Path) -> Result<Vec<ToyPoint2D>> {
    let mut lines = open_lines(path)?;
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::parse(1, "empty file; expected toy header")),
    };
    if header != "label,x,y" {
        return Err(Error::parse(1, "bad header; expected `label,x,y`"));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                lineno,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        points.push(ToyPoint2D {
            label: parse_label(fields[0], lineno)?,
            x: parse_f64(fields[1], lineno)?,
            y: parse_f64(fields[2], lineno)?,
        });
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Feature CSV: `label,a_1_1,...,a_21_64`
// ---------------------------------------------------------------------------

fn feature_header() -> String {
    let mut h = String::from("label");
    for i in 1..=N_WINDOWS {
        for j in 1..=N_BINS {
            h.push_str(&format!(",a_{i}_{j}"));
        }
    }
    h
}

/// Writes a feature set as CSV with header `label,a_1_1,...,a_21_64`,
/// row-major over (window, bin).
pub fn write_feature_set(path: &Path, set: &FeatureSet) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "{}", feature_header())?;
        for sample in &set.samples {
            write!(out, "{}", sample.label)?;
            for a in sample.spec.flat().iter() {
                write!(out, ",{a}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    })
}

/// Reads a feature CSV written by [`write_feature_set`], recomputing each
/// sample's mean energy from its amplitudes.
pub fn read_feature_set(path: &Path) -> Result<FeatureSet> {
    let mut lines = open_lines(path)?;
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::parse(1, "empty file; expected feature header")),
    };
    if header != feature_header() {
        return Err(Error::parse(1, "bad header; expected `label,a_1_1,...,a_21_64`"));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = parse_label(
            fields.next().ok_or_else(|| Error::parse(lineno, "missing label"))?,
            lineno,
        )?;
        let mut amps = Vec::with_capacity(SPEC_LEN);
        for field in fields {
            amps.push(parse_f64(field, lineno)?);
        }
        if amps.len() != SPEC_LEN {
            return Err(Error::parse(
                lineno,
                format!("expected {SPEC_LEN} amplitudes, got {}", amps.len()),
            ));
        }
        let spec = Spectrogram::from_flat(amps)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        samples.push(FeatureSample::new(spec, label));
    }
    Ok(FeatureSet { samples })
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &str = "product-model v1";
const MODEL_CONSTRAINTS: &str = "constraints kernel-unit-norm dense-unit-range";

fn tensor_shape(name: &str) -> Option<(usize, usize)> {
    match name {
        "w11" | "w12" | "w2a" | "w2b" | "dense2_bias" => Some((1, 1)),
        "conv_kernels" => Some((N_KERNELS, 9)),
        "conv_biases" => Some((1, N_KERNELS)),
        "dense1" => Some((FLAT_LEN, HIDDEN)),
        "dense1_bias" | "dense2" => Some((1, HIDDEN)),
        _ => None,
    }
}

fn write_tensor(out: &mut impl Write, name: &str, rows: usize, cols: usize, vals: &[f64]) -> Result<()> {
    debug_assert_eq!(vals.len(), rows * cols);
    writeln!(out, "tensor {name} {rows} {cols}")?;
    for row in vals.chunks(cols) {
        let mut first = true;
        for v in row {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Saves product-model weights as a structured text document: a format
/// header, the freeze flag, the constraint set in force, and one block per
/// weight tensor (name, shape, row-major values).
pub fn write_model(path: &Path, w: &ProductModelWeights) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "{MODEL_MAGIC}")?;
        writeln!(out, "frozen-gate-p1 {}", w.frozen_gate_p1)?;
        writeln!(out, "{MODEL_CONSTRAINTS}")?;
        write_tensor(out, "w11", 1, 1, &[w.gate.w11])?;
        write_tensor(out, "w12", 1, 1, &[w.gate.w12])?;
        write_tensor(out, "w2a", 1, 1, &[w.gate.w2a])?;
        write_tensor(out, "w2b", 1, 1, &[w.gate.w2b])?;
        let kernels: Vec<f64> = w.cnn.conv_kernels.iter().flatten().copied().collect();
        write_tensor(out, "conv_kernels", N_KERNELS, 9, &kernels)?;
        write_tensor(out, "conv_biases", 1, N_KERNELS, &w.cnn.conv_biases)?;
        write_tensor(out, "dense1", FLAT_LEN, HIDDEN, &w.cnn.dense1)?;
        write_tensor(out, "dense1_bias", 1, HIDDEN, &w.cnn.dense1_bias)?;
        write_tensor(out, "dense2", 1, HIDDEN, &w.cnn.dense2)?;
        write_tensor(out, "dense2_bias", 1, 1, &[w.cnn.dense2_bias])?;
        Ok(())
    })
}

/// Loads a model document written by [`write_model`]. Tensors may appear
/// in any order but each must appear exactly once with its exact shape.
pub fn read_model(path: &Path) -> Result<ProductModelWeights> {
    let text = fs::read_to_string(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?;
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file; expected model header"))?;
    if magic.trim() != MODEL_MAGIC {
        return Err(Error::parse(1, format!("bad model header; expected `{MODEL_MAGIC}`")));
    }
    let (_, freeze_line) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "missing `frozen-gate-p1` line"))?;
    let frozen_gate_p1 = match freeze_line.trim() {
        "frozen-gate-p1 true" => true,
        "frozen-gate-p1 false" => false,
        _ => return Err(Error::parse(2, "expected `frozen-gate-p1 true|false`")),
    };
    let (_, constraints) = lines
        .next()
        .ok_or_else(|| Error::parse(3, "missing constraints line"))?;
    if constraints.trim() != MODEL_CONSTRAINTS {
        return Err(Error::parse(3, format!("expected `{MODEL_CONSTRAINTS}`")));
    }

    let mut tensors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    while let Some((i, line)) = lines.next() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(Error::parse(lineno, "expected `tensor <name> <rows> <cols>`"));
        }
        let name = parts[1];
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid row count `{}`", parts[2])))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid column count `{}`", parts[3])))?;
        let expected = tensor_shape(name)
            .ok_or_else(|| Error::parse(lineno, format!("unknown tensor `{name}`")))?;
        if (rows, cols) != expected {
            return Err(Error::parse(
                lineno,
                format!("tensor `{name}` has shape {rows}x{cols}, expected {}x{}", expected.0, expected.1),
            ));
        }
        let mut vals = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (j, row_line) = lines.next().ok_or_else(|| {
                Error::parse(lineno, format!("tensor `{name}` truncated after {r} of {rows} rows"))
            })?;
            let row_no = j + 1;
            let row: Vec<f64> = row_line
                .split_whitespace()
                .map(|f| parse_f64(f, row_no))
                .collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Error::parse(
                    row_no,
                    format!("tensor `{name}` row has {} values, expected {cols}", row.len()),
                ));
            }
            vals.extend_from_slice(&row);
        }
        if tensors.insert(name.to_string(), vals).is_some() {
            return Err(Error::parse(lineno, format!("duplicate tensor `{name}`")));
        }
    }

    let mut take = |name: &str| -> Result<Vec<f64>> {
        tensors
            .remove(name)
            .ok_or_else(|| Error::parse(1, format!("missing tensor `{name}`")))
    };
    let scalar = |vals: Vec<f64>| vals[0];

    let gate = GateWeights {
        w11: scalar(take("w11")?),
        w12: scalar(take("w12")?),
        w2a: scalar(take("w2a")?),
        w2b: scalar(take("w2b")?),
    };
    let kernel_vals = take("conv_kernels")?;
    let mut conv_kernels = [[0.0; 9]; N_KERNELS];
    for (k, chunk) in kernel_vals.chunks(9).enumerate() {
        conv_kernels[k].copy_from_slice(chunk);
    }
    let conv_biases_v = take("conv_biases")?;
    let mut conv_biases = [0.0; N_KERNELS];
    conv_biases.copy_from_slice(&conv_biases_v);
    let dense1 = take("dense1")?.into_boxed_slice();
    let dense1_bias_v = take("dense1_bias")?;
    let mut dense1_bias = [0.0; HIDDEN];
    dense1_bias.copy_from_slice(&dense1_bias_v);
    let dense2_v = take("dense2")?;
    let mut dense2 = [0.0; HIDDEN];
    dense2.copy_from_slice(&dense2_v);
    let dense2_bias = scalar(take("dense2_bias")?);

    Ok(ProductModelWeights {
        gate,
        cnn: CnnWeights {
            conv_kernels,
            conv_biases,
            dense1,
            dense1_bias,
            dense2,
            dense2_bias,
        },
        frozen_gate_p1,
    })
}

// ---------------------------------------------------------------------------
// Training reports
// ---------------------------------------------------------------------------

/// The machine-readable per-stage report.
pub fn write_report_csv(path: &Path, report: &TrainReport) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(
            out,
            "stage,lambda0,lambda1,loss_train,loss_val,tp_train,tp_val,fp_train,fp_val,peak_active,iters,seconds"
        )?;
        for s in &report.stages {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.stage,
                s.lambda0,
                s.lambda1,
                s.loss_train,
                s.loss_val,
                s.tp_train,
                s.tp_val,
                s.fp_train,
                s.fp_val,
                s.peak_active,
                s.iters,
                s.seconds
            )?;
        }
        Ok(())
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// The human-readable report: phase-1 diagnostics, the per-stage table,
/// and the run summary flags.
pub fn write_report_table(path: &Path, phase1: &Phase1Report, report: &TrainReport) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "two-phase training report")?;
        writeln!(out)?;
        writeln!(out, "phase 1 (energy gate)")?;
        writeln!(out, "  w11        = {}", phase1.w11)?;
        writeln!(out, "  w12        = {}", phase1.w12)?;
        writeln!(out, "  final loss = {:.6e}", phase1.final_loss)?;
        writeln!(out, "  iterations = {}", phase1.iterations)?;
        writeln!(out, "  subset     = {} samples", phase1.subset_size)?;
        writeln!(out, "  converged  = {}", yes_no(phase1.converged))?;
        writeln!(out)?;
        writeln!(out, "phase 2 (requirement loss)")?;
        writeln!(
            out,
            "  {:<5} {:>8} {:>8} {:>12} {:>12} {:>9} {:>9} {:>9} {:>9} {:>11} {:>6} {:>8}  {:<13} {:<10} {:>10}",
            "stage", "lambda0", "lambda1", "loss_train", "loss_val", "tp_train",
            "tp_val", "fp_train", "fp_val", "peak_active", "iters", "seconds", "stop", "oscillated", "grad_evals"
        )?;
        for s in &report.stages {
            writeln!(
                out,
                "  {:<5} {:>8} {:>8} {:>12.6} {:>12.6} {:>8.3}% {:>8.3}% {:>8.4}% {:>8.4}% {:>11} {:>6} {:>8.1} {:<14} {:<10} {:>10}",
                s.stage,
                s.lambda0,
                s.lambda1,
                s.loss_train,
                s.loss_val,
                s.tp_train * 100.0,
                s.tp_val * 100.0,
                s.fp_train * 100.0,
                s.fp_val * 100.0,
                s.peak_active,
                s.iters,
                s.seconds,
                s.stop.as_str(),
                yes_no(s.oscillated),
                s.grad_evals
            )?;
        }
        writeln!(out)?;
        writeln!(out, "summary")?;
        writeln!(out, "  requirements met : {}", yes_no(report.requirements_met))?;
        writeln!(out, "  dead model       : {}", yes_no(report.dead_model))?;
        writeln!(out, "  run truncated    : {}", yes_no(report.run_truncated))?;
        writeln!(out, "  total sample-gradient evaluations: {}", report.total_grad_evals)?;
        writeln!(
            out,
            "  train split      : {} samples ({} class-1, {} class-0)",
            report.train_size, report.train_class1, report.train_class0
        )?;
        writeln!(out, "  validation split : {} samples", report.val_size)?;
        Ok(())
    })
}

/// A hard-threshold evaluation summary as `key = value` lines.
pub fn write_eval_summary(path: &Path, eval: &Evaluation, threshold: f64) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "threshold = {threshold}")?;
        writeln!(out, "tp_fraction = {}", eval.tp_fraction)?;
        writeln!(out, "fp_fraction = {}", eval.fp_fraction)?;
        writeln!(out, "tp = {}", eval.tp)?;
        writeln!(out, "fp = {}", eval.fp)?;
        writeln!(out, "n_class1 = {}", eval.n_class1)?;
        writeln!(out, "n_class0 = {}", eval.n_class0)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Metric exports
// ---------------------------------------------------------------------------

/// Writes one ROC curve as CSV: `threshold,fp_fraction,tp_fraction`.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "threshold,fp_fraction,tp_fraction")?;
        for p in &curve.points {
            writeln!(out, "{},{},{}", p.threshold, p.fp_fraction, p.tp_fraction)?;
        }
        Ok(())
    })
}

/// Writes all sweep curves into one CSV keyed by the class-weight ratio:
/// `class_weight_ratio,threshold,fp_fraction,tp_fraction`.
pub fn write_sweep_csv(path: &Path, entries: &[SweepEntry]) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "class_weight_ratio,threshold,fp_fraction,tp_fraction")?;
        for e in entries {
            for p in &e.curve.points {
                writeln!(out, "{},{},{},{}", e.ratio, p.threshold, p.fp_fraction, p.tp_fraction)?;
            }
        }
        Ok(())
    })
}

/// Writes the per-ratio sweep summary: fitted weights, AUC, the
/// threshold-0.5 operating point with its bootstrap standard error, and
/// the divergence flag. `fp_ses[i]` belongs to `entries[i]`.
///
/// # Errors
/// Configuration error if the two slices disagree in length.
pub fn write_sweep_summary(path: &Path, entries: &[SweepEntry], fp_ses: &[f64]) -> Result<()> {
    if entries.len() != fp_ses.len() {
        return Err(Error::config(format!(
            "sweep summary needs one standard error per entry; got {} entries and {} errors",
            entries.len(),
            fp_ses.len()
        )));
    }
    atomic_write(path, |out| {
        for (e, se) in entries.iter().zip(fp_ses) {
            writeln!(out, "ratio = {}", e.ratio)?;
            writeln!(out, "  weights = {} {} {}", e.weights.a, e.weights.b, e.weights.c)?;
            writeln!(out, "  auc = {}", e.curve.auc)?;
            writeln!(out, "  operating_fp_fraction = {}", e.operating_point.fp_fraction)?;
            writeln!(out, "  operating_fp_se = {se}")?;
            writeln!(out, "  operating_tp_fraction = {}", e.operating_point.tp_fraction)?;
            writeln!(out, "  diverged = {}", e.diverged)?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Flat key = value configuration
// ---------------------------------------------------------------------------

/// A parsed flat `key = value` configuration. `#` starts a comment; blank
/// lines are ignored; duplicate keys are rejected. Typed `take_*` accessors
/// consume entries, and [`KeyValues::finish`] fails loudly on whatever
/// remains, so misspelled keys never pass silently.
#[derive(Debug)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    /// Parses configuration text.
    pub fn parse(text: &str) -> Result<KeyValues> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(lineno, "empty key"));
            }
            if entries
                .insert(key.to_string(), (lineno, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::parse(lineno, format!("duplicate key `{key}`")));
            }
        }
        Ok(KeyValues { entries })
    }

    /// Removes and returns a raw entry.
    pub fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("key `{key}`: invalid {what} `{v}`"))),
        }
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take_parsed(key, "number")
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take_parsed(key, "integer")
    }

    pub fn take_u32(&mut self, key: &str) -> Result<Option<u32>> {
        self.take_parsed(key, "integer")
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take_parsed(key, "integer")
    }

    /// Rejects any keys that were never consumed.
    ///
    /// # Errors
    /// Configuration error naming every unknown key and the line of the
    /// first one.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let mut by_line: Vec<(usize, String)> = self
            .entries
            .into_iter()
            .map(|(k, (line, _))| (line, k))
            .collect();
        by_line.sort_unstable();
        let names: Vec<String> = by_line.iter().map(|(_, k)| format!("`{k}`")).collect();
        Err(Error::config(format!(
            "unknown key(s) at line {}: {}",
            by_line[0].0,
            names.join(", ")
        )))
    }
}

fn parse_lambda_schedule(value: &str, line: usize) -> Result<Vec<LambdaPair>> {
    value
        .split(',')
        .map(|pair| {
            let (a, b) = pair.trim().split_once(':').ok_or_else(|| {
                Error::parse(line, format!("lambda pair `{pair}` must be `lambda0:lambda1`"))
            })?;
            let l0 = parse_f64(a, line)?;
            let l1 = parse_f64(b, line)?;
            LambdaPair::new(l0, l1)
        })
        .collect()
}

/// Everything the training command reads from its configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub config: TrainConfig,
    pub requirements: RequirementSpec,
    pub train_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            config: TrainConfig::default(),
            requirements: RequirementSpec::new(DEFAULT_TP_FRACTION, DEFAULT_FP_FRACTION)
                .expect("default requirements are valid"),
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

/// Parses a training configuration. Keys match [`TrainConfig`] field names
/// (with the `convergence` pair flattened to `rel_loss_tol` / `patience`
/// and the schedule written `l0:l1,l0:l1,...`), plus the requirement
/// fractions `tp_fraction` / `fp_fraction` and the split `train_fraction`.
/// Every key is optional; omitted keys keep their defaults.
pub fn parse_train_options(text: &str) -> Result<TrainOptions> {
    let mut kv = KeyValues::parse(text)?;
    let d = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: kv.take_f64("learning_rate")?.unwrap_or(d.learning_rate),
        batch_size: kv.take_usize("batch_size")?.unwrap_or(d.batch_size),
        lambda_schedule: match kv.take_raw("lambda_schedule") {
            Some((line, v)) => parse_lambda_schedule(&v, line)?,
            None => d.lambda_schedule,
        },
        max_active_samples: kv
            .take_usize("max_active_samples")?
            .unwrap_or(d.max_active_samples),
        phase1_subset_size: kv
            .take_usize("phase1_subset_size")?
            .unwrap_or(d.phase1_subset_size),
        phase1_iters: kv.take_u32("phase1_iters")?.unwrap_or(d.phase1_iters),
        max_stage_iters: kv.take_u32("max_stage_iters")?.unwrap_or(d.max_stage_iters),
        convergence: Convergence {
            rel_loss_tol: kv
                .take_f64("rel_loss_tol")?
                .unwrap_or(d.convergence.rel_loss_tol),
            patience: kv.take_u32("patience")?.unwrap_or(d.convergence.patience),
        },
        seed: kv.take_u64("seed")?.unwrap_or(d.seed),
    };
    let requirements = RequirementSpec::new(
        kv.take_f64("tp_fraction")?.unwrap_or(DEFAULT_TP_FRACTION),
        kv.take_f64("fp_fraction")?.unwrap_or(DEFAULT_FP_FRACTION),
    )?;
    let train_fraction = kv.take_f64("train_fraction")?.unwrap_or(DEFAULT_TRAIN_FRACTION);
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    kv.finish()?;
    config.validate()?;
    Ok(TrainOptions {
        config,
        requirements,
        train_fraction,
    })
}

/// Parses a signal-dataset generator configuration. All keys optional;
/// the defaults describe the seeded default dataset.
pub fn parse_signal_spec(text: &str) -> Result<SignalDatasetSpec> {
    let mut kv = KeyValues::parse(text)?;
    let mut spec = SignalDatasetSpec::new(
        kv.take_usize("n_motion")?.unwrap_or(1000),
        kv.take_usize("n_easy_noise")?.unwrap_or(98000),
        kv.take_usize("n_spurious_noise")?.unwrap_or(2000),
        kv.take_u64("seed")?.unwrap_or(DEFAULT_SEED),
    );
    let m = &mut spec.motion;
    if let Some(v) = kv.take_u32("motion_components_lo")? {
        m.components_lo = v;
    }
    if let Some(v) = kv.take_u32("motion_components_hi")? {
        m.components_hi = v;
    }
    if let Some(v) = kv.take_f64("motion_freq_lo_hz")? {
        m.freq_lo_hz = v;
    }
    if let Some(v) = kv.take_f64("motion_freq_hi_hz")? {
        m.freq_hi_hz = v;
    }
    if let Some(v) = kv.take_f64("motion_amp_lo")? {
        m.amp_lo = v;
    }
    if let Some(v) = kv.take_f64("motion_amp_hi")? {
        m.amp_hi = v;
    }
    if let Some(v) = kv.take_f64("motion_envelope_frac_lo")? {
        m.envelope_frac_lo = v;
    }
    if let Some(v) = kv.take_f64("motion_envelope_frac_hi")? {
        m.envelope_frac_hi = v;
    }
    if let Some(v) = kv.take_f64("motion_center_frac_lo")? {
        m.center_frac_lo = v;
    }
    if let Some(v) = kv.take_f64("motion_center_frac_hi")? {
        m.center_frac_hi = v;
    }
    if let Some(v) = kv.take_f64("easy_noise_sigma")? {
        spec.easy_noise.sigma = v;
    }
    let s = &mut spec.spurious;
    if let Some(v) = kv.take_u32("spurious_bursts_lo")? {
        s.bursts_lo = v;
    }
    if let Some(v) = kv.take_u32("spurious_bursts_hi")? {
        s.bursts_hi = v;
    }
    if let Some(v) = kv.take_usize("spurious_burst_len_lo")? {
        s.burst_len_lo = v;
    }
    if let Some(v) = kv.take_usize("spurious_burst_len_hi")? {
        s.burst_len_hi = v;
    }
    if let Some(v) = kv.take_f64("spurious_amp_factor_lo")? {
        s.amp_factor_lo = v;
    }
    if let Some(v) = kv.take_f64("spurious_amp_factor_hi")? {
        s.amp_factor_hi = v;
    }
    kv.finish()?;
    spec.validate()?;
    Ok(spec)
}

/// Counts and seed for the 2D toy dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyDatasetSpec {
    pub n_class0: usize,
    pub n_class1: usize,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        ToyDatasetSpec {
            n_class0: 100_000,
            n_class1: 1000,
            seed: DEFAULT_SEED,
        }
    }
}

/// Parses a toy-dataset generator configuration.
pub fn parse_toy_spec(text: &str) -> Result<ToyDatasetSpec> {
    let mut kv = KeyValues::parse(text)?;
    let d = ToyDatasetSpec::default();
    let spec = ToyDatasetSpec {
        n_class0: kv.take_usize("n_class0")?.unwrap_or(d.n_class0),
        n_class1: kv.take_usize("n_class1")?.unwrap_or(d.n_class1),
        seed: kv.take_u64("seed")?.unwrap_or(d.seed),
    };
    kv.finish()?;
    Ok(spec)
}

/// Options of the class-weight ROC sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub ratios: Vec<f64>,
    pub fit: ToyFitConfig,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub threshold: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            ratios: crate::metrics::DEFAULT_SWEEP_RATIOS.to_vec(),
            fit: ToyFitConfig::default(),
            bootstrap_resamples: 1000,
            bootstrap_seed: DEFAULT_SEED,
            threshold: 0.5,
        }
    }
}

/// Parses a sweep configuration: `ratios` as a comma list plus the toy-fit
/// and bootstrap knobs.
pub fn parse_sweep_options(text: &str) -> Result<SweepOptions> {
    let mut kv = KeyValues::parse(text)?;
    let d = SweepOptions::default();
    let ratios = match kv.take_raw("ratios") {
        Some((line, v)) => v
            .split(',')
            .map(|r| parse_f64(r, line))
            .collect::<Result<Vec<f64>>>()?,
        None => d.ratios,
    };
    let opts = SweepOptions {
        ratios,
        fit: ToyFitConfig {
            learning_rate: kv.take_f64("learning_rate")?.unwrap_or(d.fit.learning_rate),
            iters: kv.take_u32("iters")?.unwrap_or(d.fit.iters),
        },
        bootstrap_resamples: kv
            .take_usize("bootstrap_resamples")?
            .unwrap_or(d.bootstrap_resamples),
        bootstrap_seed: kv.take_u64("bootstrap_seed")?.unwrap_or(d.bootstrap_seed),
        threshold: kv.take_f64("threshold")?.unwrap_or(d.threshold),
    };
    kv.finish()?;
    Ok(opts)
}
