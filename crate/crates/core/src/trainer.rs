//! Two-phase training of the gated product model.
//!
//! Phase 1 fits the scalar energy gate (w11, w12) with class-balanced
//! binary cross entropy on a subset holding every class-1 sample plus a
//! seeded random class-0 fill. Phase 2 freezes (w11, w12) and runs
//! projected gradient descent on the requirement loss over the remaining
//! parameters, annealing the λ pair through a fixed schedule while only
//! ever evaluating the model on the active samples the gate admits.

use std::time::Instant;

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::models::{
    apply_constraints, gate_score, product_forward_cached, sigmoid, BackpropSample, GateWeights,
    ProductModelWeights, SampleCache,
};
use crate::reqloss::{
    requirement_loss, requirement_loss_grad, LabeledPrediction, LambdaPair, RequirementSpec,
    Requirements, FTP_FLOOR,
};
use crate::rng::SeededRng;

/// Convergence knobs shared by both phases: a stage (phase 2) stops after
/// `patience` consecutive iterations whose relative loss change is below
/// `rel_loss_tol`; phase 1 uses the same pair on per-1000-iteration round
/// means to derive its convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub rel_loss_tol: f64,
    pub patience: u32,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence {
            rel_loss_tol: 1e-4,
            patience: 20,
        }
    }
}

/// All training hyperparameters. `seed` drives every stochastic choice:
/// the phase-1 subset fill uses the stream seeded with `seed + 1` and the
/// CNN initialization the stream seeded with `seed + 2`, so a config is a
/// complete recipe for a bit-reproducible run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Phase-1 minibatch size; phase 2 always uses the full active set.
    pub batch_size: usize,
    pub lambda_schedule: Vec<LambdaPair>,
    pub max_active_samples: usize,
    pub phase1_subset_size: usize,
    /// Phase 1 runs exactly this many iterations; convergence is reported,
    /// not used to stop early (the balanced-BCE tail matters more than the
    /// loss plateau suggests).
    pub phase1_iters: u32,
    /// Safety cap per phase-2 stage; the loss-zero / patience / active-set
    /// rules almost always fire first.
    pub max_stage_iters: u32,
    pub convergence: Convergence,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 32768,
            lambda_schedule: vec![
                LambdaPair::new(0.49, 0.49).expect("valid default lambda"),
                LambdaPair::new(0.245, 0.49).expect("valid default lambda"),
                LambdaPair::new(0.1225, 0.245).expect("valid default lambda"),
            ],
            max_active_samples: 65536,
            phase1_subset_size: 65536,
            phase1_iters: 50000,
            max_stage_iters: 2000,
            convergence: Convergence::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// # Errors
    /// Configuration error when any count is zero, the learning rate or
    /// tolerances are not positive, the λ schedule is empty or leaves
    /// (0, 0.5], or the schedule increases in either component.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be finite and > 0"));
        }
        if self.batch_size == 0
            || self.max_active_samples == 0
            || self.phase1_subset_size == 0
            || self.phase1_iters == 0
            || self.max_stage_iters == 0
            || self.convergence.patience == 0
        {
            return Err(Error::config("all counts must be > 0"));
        }
        if !(self.convergence.rel_loss_tol.is_finite() && self.convergence.rel_loss_tol > 0.0) {
            return Err(Error::config("rel_loss_tol must be finite and > 0"));
        }
        if self.lambda_schedule.is_empty() {
            return Err(Error::config("lambda_schedule must be non-empty"));
        }
        for pair in self.lambda_schedule.windows(2) {
            if pair[1].lambda0() > pair[0].lambda0() || pair[1].lambda1() > pair[0].lambda1() {
                return Err(Error::config(
                    "lambda_schedule must be non-increasing componentwise",
                ));
            }
        }
        Ok(())
    }
}

/// One featurized sample: the normalized spectrogram, its derived mean
/// energy, and the class label.
#[derive(Debug, Clone)]
pub struct FeatureSample {
    pub spec: Spectrogram,
    pub energy: f64,
    pub label: u8,
}

impl FeatureSample {
    /// Builds a sample from a normalized spectrogram, deriving the energy.
    pub fn new(spec: Spectrogram, label: u8) -> Self {
        let energy = crate::dsp::mean_energy(&spec);
        FeatureSample { spec, energy, label }
    }
}

/// An in-memory feature dataset.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub samples: Vec<FeatureSample>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn class_indices(&self, idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut class0 = Vec::new();
        let mut class1 = Vec::new();
        for &i in idx {
            if self.samples[i].label == 1 {
                class1.push(i);
            } else {
                class0.push(i);
            }
        }
        (class0, class1)
    }
}

/// Index partition produced by [`split_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified seeded split: within each class the indices are shuffled and
/// the first ceil(fraction · n) go to the training part, so both classes
/// appear on both sides. Returned index lists are sorted ascending, fixing
/// the summation order used everywhere downstream.
///
/// # Errors
/// Configuration error if the fraction leaves (0, 1) or any class has
/// fewer than 2 samples.
pub fn split_dataset(set: &FeatureSet, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let (class0, class1) = set.class_indices(&all);
    if class0.len() < 2 || class1.len() < 2 {
        return Err(Error::config(format!(
            "split needs at least 2 samples per class; got {} class-0 and {} class-1",
            class0.len(),
            class1.len()
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in [class0, class1] {
        let mut idx = class;
        rng.shuffle(&mut idx);
        let n_train = (idx.len() as f64 * train_fraction).ceil() as usize;
        // The ceiling can only reach the full class when fraction · n
        // rounds up to n; keep one sample for validation in that case.
        let n_train = n_train.min(idx.len() - 1).max(1);
        train.extend_from_slice(&idx[..n_train]);
        validation.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitIndices { train, validation })
}

/// Diagnostics from the phase-1 fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Report {
    pub w11: f64,
    pub w12: f64,
    /// Class-balanced BCE over the phase-1 subset at the final weights.
    pub final_loss: f64,
    pub iterations: u32,
    pub subset_size: usize,
    /// True when the trailing `patience` per-1000-iteration round means
    /// each changed by less than `rel_loss_tol` relative — the fit settled
    /// well before the iteration cap.
    pub converged: bool,
}

/// Fits the energy gate (w11, w12) by minibatch gradient descent on the
/// class-balanced binary cross entropy of p1 = S(w11·energy + w12).
///
/// The subset holds every class-1 training sample plus a seeded random
/// class-0 fill up to `phase1_subset_size`, shuffled once; batches cycle
/// through it in fixed order with the gradient rescaled by
/// subset_size / batch_size. Runs exactly `phase1_iters` iterations.
///
/// # Errors
/// Configuration error if the config is invalid or a class is missing.
pub fn train_phase1(
    set: &FeatureSet,
    train_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<(GateWeights, Phase1Report)> {
    cfg.validate()?;
    let (class0, class1) = set.class_indices(train_idx);
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::config(format!(
            "phase 1 needs both classes; got {} class-0 and {} class-1",
            class0.len(),
            class1.len()
        )));
    }
    let mut rng = SeededRng::new(cfg.seed.wrapping_add(1));
    let fill = cfg
        .phase1_subset_size
        .saturating_sub(class1.len())
        .min(class0.len());
    let mut subset: Vec<usize> = class1.clone();
    subset.extend(rng.sample_indices(class0.len(), fill).iter().map(|&j| class0[j]));
    rng.shuffle(&mut subset);

    let energies: Vec<f64> = subset.iter().map(|&i| set.samples[i].energy).collect();
    let labels: Vec<u8> = subset.iter().map(|&i| set.samples[i].label).collect();
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    let weight1 = 0.5 / n1 as f64;
    let weight0 = 0.5 / n0 as f64;
    let scale = labels.len() as f64 / cfg.batch_size as f64;
    let n_batches = labels.len().div_ceil(cfg.batch_size);

    let balanced_loss = |w11: f64, w12: f64| -> f64 {
        let mut loss = 0.0;
        for (e, &y) in energies.iter().zip(&labels) {
            let p = sigmoid(w11 * e + w12).clamp(1e-300, 1.0 - 1e-16);
            loss += if y == 1 {
                -weight1 * p.ln()
            } else {
                -weight0 * (1.0 - p).ln()
            };
        }
        loss
    };

    let mut w11 = 0.0f64;
    let mut w12 = 0.0f64;
    let mut round_losses = Vec::new();
    for it in 0..cfg.phase1_iters {
        let b = it as usize % n_batches;
        let lo = b * cfg.batch_size;
        let hi = (lo + cfg.batch_size).min(labels.len());
        let mut g11 = 0.0;
        let mut g12 = 0.0;
        for (e, &y) in energies[lo..hi].iter().zip(&labels[lo..hi]) {
            let p = sigmoid(w11 * e + w12);
            let weight = if y == 1 { weight1 } else { weight0 };
            let r = (p - y as f64) * weight * scale;
            g11 += r * e;
            g12 += r;
        }
        w11 -= cfg.learning_rate * g11;
        w12 -= cfg.learning_rate * g12;
        if (it + 1) % 1000 == 0 || it + 1 == cfg.phase1_iters {
            round_losses.push(balanced_loss(w11, w12));
        }
    }

    let patience = cfg.convergence.patience as usize;
    let converged = round_losses.len() > patience
        && round_losses
            .windows(2)
            .rev()
            .take(patience)
            .all(|w| (w[0] - w[1]).abs() < cfg.convergence.rel_loss_tol * w[0].abs().max(1e-300));
    let final_loss = *round_losses.last().expect("at least one round");
    Ok((
        GateWeights::from_phase1(w11, w12),
        Phase1Report {
            w11,
            w12,
            final_loss,
            iterations: cfg.phase1_iters,
            subset_size: labels.len(),
            converged,
        },
    ))
}

/// Why a phase-2 stage stopped iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The requirement loss reached exactly zero.
    Zero,
    /// Relative loss change stayed below tolerance for `patience`
    /// iterations.
    Flat,
    /// The active set exceeded `max_active_samples`.
    MaxActive,
    /// The per-stage iteration safety cap was hit.
    IterCap,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Zero => "loss-zero",
            StopReason::Flat => "flat",
            StopReason::MaxActive => "max-active",
            StopReason::IterCap => "iteration-cap",
        }
    }
}

/// One completed λ stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub loss_train: f64,
    pub loss_val: f64,
    pub tp_train: f64,
    pub tp_val: f64,
    pub fp_train: f64,
    pub fp_val: f64,
    /// Largest active-sample count over iterations that evaluated the
    /// model; a set that trips the max-active stop is never evaluated and
    /// therefore not counted.
    pub peak_active: usize,
    /// Weight updates performed in this stage.
    pub iters: u32,
    pub seconds: f64,
    pub stop: StopReason,
    /// True if the recorded in-stage loss ever increased between
    /// consecutive updates (diagnostic, not a failure).
    pub oscillated: bool,
    /// Per-sample gradient evaluations spent in this stage.
    pub grad_evals: u64,
}

/// Everything a training run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub stages: Vec<StageRecord>,
    /// True when the final stage's training loss is exactly zero.
    pub requirements_met: bool,
    /// True when fractional true positives hit the ε floor at a stage end
    /// (the model classifies essentially nothing as positive).
    pub dead_model: bool,
    /// True when a stage began with an over-cap active set, aborting the
    /// remaining schedule.
    pub run_truncated: bool,
    pub total_grad_evals: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub train_class1: usize,
    pub train_class0: usize,
}

/// Hard-threshold evaluation counts of the product model over a set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub tp_fraction: f64,
    pub fp_fraction: f64,
    pub tp: u64,
    pub fp: u64,
    pub n_class1: u64,
    pub n_class0: u64,
}

/// Classifies every indexed sample at `p > threshold` and reports per-class
/// fractions. The CNN runs only where the gate score exceeds the threshold:
/// p = gate · p2 < gate, so a sample whose gate already fails the threshold
/// is negative without evaluating p2.
pub fn evaluate(
    w: &ProductModelWeights,
    set: &FeatureSet,
    idx: &[usize],
    threshold: f64,
) -> Evaluation {
    let mut eval = Evaluation {
        tp_fraction: 0.0,
        fp_fraction: 0.0,
        tp: 0,
        fp: 0,
        n_class1: 0,
        n_class0: 0,
    };
    for &i in idx {
        let sample = &set.samples[i];
        if sample.label == 1 {
            eval.n_class1 += 1;
        } else {
            eval.n_class0 += 1;
        }
        let gate = gate_score(sample.energy, &w.gate);
        if gate <= threshold {
            continue;
        }
        let out = crate::models::product_forward(sample.energy, &sample.spec, w);
        if out.p > threshold {
            if sample.label == 1 {
                eval.tp += 1;
            } else {
                eval.fp += 1;
            }
        }
    }
    if eval.n_class1 > 0 {
        eval.tp_fraction = eval.tp as f64 / eval.n_class1 as f64;
    }
    if eval.n_class0 > 0 {
        eval.fp_fraction = eval.fp as f64 / eval.n_class0 as f64;
    }
    eval
}

/// Requirement loss over all indexed samples, evaluating the CNN only
/// where the gate admits a nonzero fractional positive. Exclusion is
/// exact: a skipped class-0 sample has p = gate·p2 < 1/2 − λ0 and thus
/// contributes exactly zero, so this equals the full fixed-order sum.
fn requirement_loss_over(
    w: &ProductModelWeights,
    set: &FeatureSet,
    idx: &[usize],
    reqs: &Requirements,
    lambdas: &LambdaPair,
) -> (f64, f64, f64) {
    let thr0 = 0.5 - lambdas.lambda0();
    let thr1 = 0.5 - lambdas.lambda1();
    let mut ffp = 0.0;
    let mut ftp = 0.0;
    for &i in idx {
        let sample = &set.samples[i];
        let gate = gate_score(sample.energy, &w.gate);
        let thr = if sample.label == 1 { thr1 } else { thr0 };
        if gate < thr {
            continue;
        }
        let out = crate::models::product_forward(sample.energy, &sample.spec, w);
        let fp = crate::reqloss::fractional_positive(
            out.p,
            if sample.label == 1 {
                lambdas.lambda1()
            } else {
                lambdas.lambda0()
            },
        );
        if sample.label == 1 {
            ftp += fp;
        } else {
            ffp += fp;
        }
    }
    (requirement_loss(ffp, ftp, reqs), ffp, ftp)
}

struct ActiveForward {
    caches: Vec<SampleCache>,
    preds: Vec<LabeledPrediction>,
    indices: Vec<usize>,
}

/// Forward passes over `class0_active ++ class1` in ascending-index order
/// within each group, caching activations for backprop.
fn forward_active(
    w: &ProductModelWeights,
    set: &FeatureSet,
    class0_active: &[usize],
    class1: &[usize],
) -> ActiveForward {
    let total = class0_active.len() + class1.len();
    let mut caches = Vec::with_capacity(total);
    let mut preds = Vec::with_capacity(total);
    let mut indices = Vec::with_capacity(total);
    for &i in class0_active.iter().chain(class1.iter()) {
        let sample = &set.samples[i];
        let (out, cache) = product_forward_cached(sample.energy, &sample.spec, w);
        caches.push(cache);
        preds.push(LabeledPrediction {
            y_pred: out.p,
            label: sample.label,
        });
        indices.push(i);
    }
    ActiveForward {
        caches,
        preds,
        indices,
    }
}

/// Phase 2: for each λ pair in schedule order, runs projected gradient
/// descent on the requirement loss over (w2a, w2b) and the CNN weights,
/// with (w11, w12) frozen and the active set recomputed every iteration.
///
/// A stage stops when the loss reaches exactly zero, the relative loss
/// change stays below tolerance for `patience` iterations, the active set
/// exceeds `max_active_samples`, or the safety iteration cap fires; the
/// stage is then recorded and the run moves to the next λ pair. A stage
/// whose *initial* active set is already over the cap aborts the remaining
/// schedule. Returns the weights with the lowest stage-end training loss
/// (ties favor later stages) and the full report.
///
/// # Errors
/// Configuration error for invalid config, missing classes, or
/// requirements that don't fit the class counts.
pub fn train_phase2(
    set: &FeatureSet,
    train_idx: &[usize],
    val_idx: &[usize],
    w: ProductModelWeights,
    req_spec: &RequirementSpec,
    cfg: &TrainConfig,
) -> Result<(ProductModelWeights, TrainReport)> {
    cfg.validate()?;
    let (mut class0, mut class1) = set.class_indices(train_idx);
    class0.sort_unstable();
    class1.sort_unstable();
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::config(format!(
            "phase 2 needs both classes; got {} class-0 and {} class-1",
            class0.len(),
            class1.len()
        )));
    }
    let reqs_train = req_spec.realize(class1.len(), class0.len())?;
    let (val_class0, val_class1) = set.class_indices(val_idx);
    let reqs_val = if val_class0.is_empty() || val_class1.is_empty() {
        None
    } else {
        Some(req_spec.realize(val_class1.len(), val_class0.len())?)
    };

    let mut w = ProductModelWeights {
        frozen_gate_p1: true,
        ..w
    };
    let frozen_w11 = w.gate.w11.to_bits();
    let frozen_w12 = w.gate.w12.to_bits();

    let mut report = TrainReport {
        stages: Vec::with_capacity(cfg.lambda_schedule.len()),
        requirements_met: false,
        dead_model: false,
        run_truncated: false,
        total_grad_evals: 0,
        train_size: train_idx.len(),
        val_size: val_idx.len(),
        train_class1: class1.len(),
        train_class0: class0.len(),
    };
    let mut best: Option<(f64, ProductModelWeights)> = None;

    for (stage, lambdas) in cfg.lambda_schedule.clone().into_iter().enumerate() {
        let thr0 = 0.5 - lambdas.lambda0();
        let started = Instant::now();
        let mut peak_active = 0usize;
        let mut grad_evals = 0u64;
        let mut updates = 0u32;
        let mut stop = StopReason::IterCap;
        let mut prev_loss: Option<f64> = None;
        let mut flat_streak = 0u32;
        let mut oscillated = false;
        let mut initial_overflow = false;

        for _ in 0..cfg.max_stage_iters {
            // The active set follows (w2a, w2b), so recompute it first.
            let active0: Vec<usize> = class0
                .iter()
                .copied()
                .filter(|&i| gate_score(set.samples[i].energy, &w.gate) >= thr0)
                .collect();
            let n_active = active0.len() + class1.len();
            if n_active > cfg.max_active_samples {
                if updates == 0 {
                    initial_overflow = true;
                }
                stop = StopReason::MaxActive;
                break;
            }
            peak_active = peak_active.max(n_active);

            let fwd = forward_active(&w, set, &active0, &class1);
            let preds0: Vec<f64> = fwd.preds[..active0.len()].iter().map(|p| p.y_pred).collect();
            let preds1: Vec<f64> = fwd.preds[active0.len()..].iter().map(|p| p.y_pred).collect();
            let ffp = crate::reqloss::ffp(&preds0, lambdas.lambda0());
            let ftp = crate::reqloss::ftp(&preds1, lambdas.lambda1());
            let loss = requirement_loss(ffp, ftp, &reqs_train);
            if let Some(prev) = prev_loss {
                if loss > prev {
                    oscillated = true;
                }
                let rel = (prev - loss).abs() / prev.abs().max(1e-300);
                flat_streak = if rel < cfg.convergence.rel_loss_tol {
                    flat_streak + 1
                } else {
                    0
                };
            }
            prev_loss = Some(loss);
            // Debug-mode spot check of the exclusion invariant: the
            // active-set loss must equal the full-set loss bitwise.
            #[cfg(debug_assertions)]
            if updates % 16 == 0 {
                let (full_loss, _, _) =
                    requirement_loss_over(&w, set, train_idx, &reqs_train, &lambdas);
                debug_assert_eq!(
                    full_loss.to_bits(),
                    loss.to_bits(),
                    "active-set loss {loss} != full-set loss {full_loss}"
                );
            }
            if loss == 0.0 {
                stop = StopReason::Zero;
                break;
            }
            if flat_streak >= cfg.convergence.patience {
                stop = StopReason::Flat;
                break;
            }

            grad_evals += n_active as u64;
            let upstream = requirement_loss_grad(&fwd.preds, &reqs_train, &lambdas);
            let batch: Vec<BackpropSample<'_>> = fwd
                .indices
                .iter()
                .zip(fwd.caches.iter())
                .zip(upstream.iter())
                .map(|((&i, cache), &du)| BackpropSample {
                    spec: &set.samples[i].spec,
                    cache,
                    upstream: du,
                })
                .collect();
            let grads = crate::models::product_backward(&batch, &w);
            w.gate.w2a -= cfg.learning_rate * grads.w2a;
            w.gate.w2b -= cfg.learning_rate * grads.w2b;
            let cnn = &mut w.cnn;
            for (k, gk) in cnn.conv_kernels.iter_mut().zip(grads.cnn.conv_kernels.iter()) {
                for (wv, gv) in k.iter_mut().zip(gk.iter()) {
                    *wv -= cfg.learning_rate * gv;
                }
            }
            for (b, g) in cnn.conv_biases.iter_mut().zip(grads.cnn.conv_biases.iter()) {
                *b -= cfg.learning_rate * g;
            }
            for (wv, gv) in cnn.dense1.iter_mut().zip(grads.cnn.dense1.iter()) {
                *wv -= cfg.learning_rate * gv;
            }
            for (b, g) in cnn.dense1_bias.iter_mut().zip(grads.cnn.dense1_bias.iter()) {
                *b -= cfg.learning_rate * g;
            }
            for (wv, gv) in cnn.dense2.iter_mut().zip(grads.cnn.dense2.iter()) {
                *wv -= cfg.learning_rate * gv;
            }
            cnn.dense2_bias -= cfg.learning_rate * grads.cnn.dense2_bias;
            apply_constraints(cnn);
            updates += 1;
        }

        if initial_overflow {
            // The new λ admits more samples than the cap before any
            // optimization happened; the schedule cannot proceed.
            report.run_truncated = true;
            break;
        }

        let (loss_train, _, ftp_train) =
            requirement_loss_over(&w, set, train_idx, &reqs_train, &lambdas);
        let (loss_val, _, _) = match &reqs_val {
            Some(reqs) => requirement_loss_over(&w, set, val_idx, reqs, &lambdas),
            None => (f64::NAN, 0.0, 0.0),
        };
        if ftp_train <= FTP_FLOOR {
            report.dead_model = true;
        }
        let eval_train = evaluate(&w, set, train_idx, 0.5);
        let eval_val = evaluate(&w, set, val_idx, 0.5);
        report.total_grad_evals += grad_evals;
        report.stages.push(StageRecord {
            stage,
            lambda0: lambdas.lambda0(),
            lambda1: lambdas.lambda1(),
            loss_train,
            loss_val,
            tp_train: eval_train.tp_fraction,
            tp_val: eval_val.tp_fraction,
            fp_train: eval_train.fp_fraction,
            fp_val: eval_val.fp_fraction,
            peak_active,
            iters: updates,
            seconds: started.elapsed().as_secs_f64(),
            stop,
            oscillated,
            grad_evals,
        });
        match &best {
            Some((best_loss, _)) if *best_loss < loss_train => {}
            _ => best = Some((loss_train, w.clone())),
        }
    }

    let mut final_w = match best {
        Some((_, bw)) => bw,
        None => w,
    };
    report.requirements_met =
        !report.run_truncated && report.stages.last().is_some_and(|s| s.loss_train == 0.0);
    assert_eq!(final_w.gate.w11.to_bits(), frozen_w11, "w11 must stay frozen");
    assert_eq!(final_w.gate.w12.to_bits(), frozen_w12, "w12 must stay frozen");
    final_w.frozen_gate_p1 = true;
    Ok((final_w, report))
}

/// A complete training run: the fitted model plus both phases' reports.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ProductModelWeights,
    pub phase1: Phase1Report,
    pub report: TrainReport,
}

/// Runs the whole procedure — phase 1, model assembly, phase 2 — on an
/// existing split. The CNN initialization draws from the stream seeded
/// with `cfg.seed + 2`.
pub fn run_training(
    set: &FeatureSet,
    split: &SplitIndices,
    req_spec: &RequirementSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let (gate, phase1) = train_phase1(set, &split.train, cfg)?;
    let mut rng = SeededRng::new(cfg.seed.wrapping_add(2));
    let w = ProductModelWeights {
        gate,
        cnn: crate::models::CnnWeights::init(&mut rng),
        frozen_gate_p1: true,
    };
    let (weights, report) = train_phase2(set, &split.train, &split.validation, w, req_spec, cfg)?;
    Ok(TrainOutcome {
        weights,
        phase1,
        report,
    })
}
