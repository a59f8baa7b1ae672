//! Evaluation utilities: ROC curves with trapezoidal AUC, the class-weight
//! sweep demonstration on the 2D toy problem, and a bootstrap noise
//! estimate for comparing operating points.

use crate::datagen::ToyPoint2D;
use crate::error::{Error, Result};
use crate::models::{
    toy_logistic_backward, toy_logistic_forward, toy_logistic_loss, ClassWeights,
    ToyLogisticWeights,
};
use crate::reqloss::LabeledPrediction;
use crate::rng::SeededRng;

/// One ROC point: the operating point reached by classifying positive at
/// `prediction >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fp_fraction: f64,
    pub tp_fraction: f64,
    pub threshold: f64,
}

/// A receiver operating curve with its trapezoidal area.
///
/// Points are sorted by threshold descending, beginning at the (0, 0)
/// anchor (threshold +∞) and ending at (1, 1) (threshold = the smallest
/// predicted value). Both fractions are non-decreasing along the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Re-integrates the stored points; equals `self.auc` by construction.
    pub fn trapezoid_auc(&self) -> f64 {
        trapezoid(&self.points)
    }
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fp_fraction - w[0].fp_fraction) * (w[1].tp_fraction + w[0].tp_fraction))
        .sum::<f64>()
        / 2.0
}

/// Builds the ROC curve by sweeping the threshold over the distinct
/// predicted values, grouping tied predictions into one step.
///
/// # Errors
/// Configuration error unless both classes are present.
pub fn roc(predictions: &[LabeledPrediction]) -> Result<RocCurve> {
    let n1 = predictions.iter().filter(|p| p.label == 1).count();
    let n0 = predictions.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::config(format!(
            "ROC needs both classes; got {n0} class-0 and {n1} class-1 samples"
        )));
    }
    let mut sorted: Vec<&LabeledPrediction> = predictions.iter().collect();
    sorted.sort_by(|a, b| b.y_pred.total_cmp(&a.y_pred));

    let mut points = Vec::with_capacity(sorted.len() + 1);
    points.push(RocPoint {
        fp_fraction: 0.0,
        tp_fraction: 0.0,
        threshold: f64::INFINITY,
    });
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].y_pred;
        while i < sorted.len() && sorted[i].y_pred == threshold {
            if sorted[i].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fp_fraction: fp as f64 / n0 as f64,
            tp_fraction: tp as f64 / n1 as f64,
            threshold,
        });
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// Configuration of the toy logistic fits inside [`weighted_roc_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyFitConfig {
    /// Full-batch gradient-descent step size on the weight-normalized mean
    /// loss.
    pub learning_rate: f64,
    /// Fixed iteration count; the objective is convex and low-dimensional,
    /// so a generous cap substitutes for a convergence test.
    pub iters: u32,
}

impl Default for ToyFitConfig {
    fn default() -> Self {
        ToyFitConfig {
            learning_rate: 0.5,
            iters: 2000,
        }
    }
}

/// A threshold-0.5 operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub fp_fraction: f64,
    pub tp_fraction: f64,
}

/// The per-ratio outcome of [`weighted_roc_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    /// The class-1:class-0 weight ratio this model was trained with.
    pub ratio: f64,
    pub weights: ToyLogisticWeights,
    pub operating_point: OperatingPoint,
    pub curve: RocCurve,
    /// True if the fit produced a non-finite loss or weights; the reported
    /// weights are then the last finite iterate.
    pub diverged: bool,
}

/// Fits the toy logistic model by full-batch gradient descent on the
/// class-weighted binary cross entropy, normalized by the total sample
/// weight. Returns the weights and a divergence flag.
pub fn fit_toy_logistic(
    points: &[ToyPoint2D],
    class_weights: &ClassWeights,
    cfg: &ToyFitConfig,
) -> (ToyLogisticWeights, bool) {
    let total_weight: f64 = points
        .iter()
        .map(|p| {
            if p.label == 1 {
                class_weights.class1
            } else {
                class_weights.class0
            }
        })
        .sum();
    let mut w = ToyLogisticWeights {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };
    for _ in 0..cfg.iters {
        let mut grad = [0.0f64; 3];
        for p in points {
            let g = toy_logistic_backward(p, &w, class_weights);
            grad[0] += g[0];
            grad[1] += g[1];
            grad[2] += g[2];
        }
        let next = ToyLogisticWeights {
            a: w.a - cfg.learning_rate * grad[0] / total_weight,
            b: w.b - cfg.learning_rate * grad[1] / total_weight,
            c: w.c - cfg.learning_rate * grad[2] / total_weight,
        };
        if !(next.a.is_finite() && next.b.is_finite() && next.c.is_finite()) {
            return (w, true);
        }
        w = next;
    }
    let loss: f64 = points
        .iter()
        .map(|p| toy_logistic_loss(p, &w, class_weights))
        .sum();
    (w, !loss.is_finite())
}

/// Scores `points` with `w` and pairs each probability with its label.
pub fn toy_predictions(points: &[ToyPoint2D], w: &ToyLogisticWeights) -> Vec<LabeledPrediction> {
    points
        .iter()
        .map(|p| LabeledPrediction {
            y_pred: toy_logistic_forward(p, w),
            label: p.label,
        })
        .collect()
}

fn operating_point_at(predictions: &[LabeledPrediction], threshold: f64) -> OperatingPoint {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut n1 = 0u64;
    let mut n0 = 0u64;
    for p in predictions {
        if p.label == 1 {
            n1 += 1;
            if p.y_pred > threshold {
                tp += 1;
            }
        } else {
            n0 += 1;
            if p.y_pred > threshold {
                fp += 1;
            }
        }
    }
    OperatingPoint {
        fp_fraction: fp as f64 / n0.max(1) as f64,
        tp_fraction: tp as f64 / n1.max(1) as f64,
    }
}

/// Trains the toy model once per class-weight ratio (class-1 weight =
/// ratio, class-0 weight = 1) and reports each fit's ROC curve and its
/// threshold-0.5 operating point. Deterministic: entries come back in the
/// order the ratios were given.
///
/// # Errors
/// Configuration error if `ratios` is empty, any ratio is not finite and
/// positive, or either class has fewer than two points.
pub fn weighted_roc_sweep(
    points: &[ToyPoint2D],
    ratios: &[f64],
    cfg: &ToyFitConfig,
) -> Result<Vec<SweepEntry>> {
    if ratios.is_empty() {
        return Err(Error::config("weight-ratio sweep needs at least one ratio"));
    }
    let n1 = points.iter().filter(|p| p.label == 1).count();
    let n0 = points.len() - n1;
    if n0 < 2 || n1 < 2 {
        return Err(Error::config(format!(
            "sweep needs at least two points per class; got {n0} class-0 and {n1} class-1"
        )));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let cw = ClassWeights::new(1.0, ratio)?;
            let (weights, diverged) = fit_toy_logistic(points, &cw, cfg);
            let predictions = toy_predictions(points, &weights);
            let curve = roc(&predictions)?;
            Ok(SweepEntry {
                ratio,
                weights,
                operating_point: operating_point_at(&predictions, 0.5),
                curve,
                diverged,
            })
        })
        .collect()
}

/// Default weight ratios for the sweep.
pub const DEFAULT_SWEEP_RATIOS: [f64; 5] = [1.0, 3.0, 10.0, 30.0, 100.0];

/// Bootstrap standard error of the class-0 false-positive fraction at the
/// given threshold: resamples the class-0 predictions with replacement
/// `resamples` times and returns the standard deviation of the resampled
/// fractions.
///
/// # Errors
/// Configuration error if there are no class-0 predictions or fewer than
/// two resamples.
pub fn bootstrap_fp_se(
    predictions: &[LabeledPrediction],
    threshold: f64,
    resamples: u32,
    seed: u64,
) -> Result<f64> {
    let hits: Vec<bool> = predictions
        .iter()
        .filter(|p| p.label == 0)
        .map(|p| p.y_pred > threshold)
        .collect();
    if hits.is_empty() {
        return Err(Error::config("bootstrap needs class-0 predictions"));
    }
    if resamples < 2 {
        return Err(Error::config("bootstrap needs at least two resamples"));
    }
    let mut rng = SeededRng::new(seed);
    let n = hits.len();
    let mut fractions = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        let mut count = 0u64;
        for _ in 0..n {
            if hits[rng.below(n as u64) as usize] {
                count += 1;
            }
        }
        fractions.push(count as f64 / n as f64);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>()
        / (fractions.len() - 1) as f64;
    Ok(var.sqrt())
}
