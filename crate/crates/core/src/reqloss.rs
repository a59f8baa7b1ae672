//! The smoothed fractional-positive loss machinery.
//!
//! A hard positive count is not differentiable, so each prediction is
//! widened into a box of half-width λ and height 1/(2λ) centered on the
//! predicted probability; the mass of that box above the decision threshold
//! 1/2 is the sample's *fractional positive*. Summing fractional positives
//! over the negative/positive class gives FFP/FTP, and the requirement loss
//! penalizes only the side of each requirement that is violated:
//!
//! ```text
//! E_FP = (FFP/FP_req − 1)·θ(FFP − FP_req)
//! E_TP = (TP_req/FTP − 1)·θ(TP_req − FTP)
//! E    = √(E_FP² + E_TP²)
//! ```
//!
//! with θ(0) = 0, so a requirement met exactly contributes nothing and
//! E = 0 is the attainable optimum.

use crate::error::{Error, Result};

/// Lower clamp applied to FTP inside `E_TP` so a model with no class-1
/// support overlap produces an enormous-but-finite loss instead of a
/// division by zero.
pub const FTP_FLOOR: f64 = 1e-12;

/// Asymmetric classification requirements, converted once per dataset from
/// user-facing fractions to the absolute counts the loss operates on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Requirements {
    tp_req_fraction: f64,
    fp_req_fraction: f64,
    tp_req_count: f64,
    fp_req_count: f64,
}

impl Requirements {
    /// Converts fractional requirements into counts for a dataset with the
    /// given class sizes. Counts may be non-integer; no rounding occurs.
    ///
    /// # Errors
    /// Configuration error unless `tp_req_fraction ∈ (0, 1]`,
    /// `fp_req_fraction ∈ (0, 1)`, and both derived counts are > 0.
    pub fn from_fractions(
        tp_req_fraction: f64,
        fp_req_fraction: f64,
        n_class1: usize,
        n_class0: usize,
    ) -> Result<Self> {
        if !(tp_req_fraction > 0.0 && tp_req_fraction <= 1.0) {
            return Err(Error::config(format!(
                "tp requirement fraction must be in (0, 1], got {tp_req_fraction}"
            )));
        }
        if !(fp_req_fraction > 0.0 && fp_req_fraction < 1.0) {
            return Err(Error::config(format!(
                "fp requirement fraction must be in (0, 1), got {fp_req_fraction}"
            )));
        }
        let tp_req_count = tp_req_fraction * n_class1 as f64;
        let fp_req_count = fp_req_fraction * n_class0 as f64;
        if tp_req_count <= 0.0 || fp_req_count <= 0.0 {
            return Err(Error::config(format!(
                "requirement counts must be > 0 (tp {tp_req_count}, fp {fp_req_count}); \
                 both classes must be non-empty"
            )));
        }
        Ok(Requirements {
            tp_req_fraction,
            fp_req_fraction,
            tp_req_count,
            fp_req_count,
        })
    }

    /// Minimum fraction of class-1 samples that must be detected.
    pub fn tp_req_fraction(&self) -> f64 {
        self.tp_req_fraction
    }

    /// Maximum fraction of class-0 samples that may fire.
    pub fn fp_req_fraction(&self) -> f64 {
        self.fp_req_fraction
    }

    /// TP_req: minimum fractional-true-positive count.
    pub fn tp_req_count(&self) -> f64 {
        self.tp_req_count
    }

    /// FP_req: maximum fractional-false-positive count.
    pub fn fp_req_count(&self) -> f64 {
        self.fp_req_count
    }
}

/// Dataset-independent requirement fractions, realized into absolute
/// [`Requirements`] once class counts are known (training and validation
/// parts get their own counts from the same fractions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementSpec {
    tp_fraction: f64,
    fp_fraction: f64,
}

impl RequirementSpec {
    /// # Errors
    /// Configuration error unless `tp_fraction ∈ (0, 1]` and
    /// `fp_fraction ∈ (0, 1)`.
    pub fn new(tp_fraction: f64, fp_fraction: f64) -> Result<Self> {
        // Reuse the count-level validation against nominal sizes.
        Requirements::from_fractions(tp_fraction, fp_fraction, 1, 1)?;
        Ok(RequirementSpec {
            tp_fraction,
            fp_fraction,
        })
    }

    pub fn tp_fraction(&self) -> f64 {
        self.tp_fraction
    }

    pub fn fp_fraction(&self) -> f64 {
        self.fp_fraction
    }

    /// Scales the fractions by the given class sizes.
    ///
    /// # Errors
    /// Configuration error when a class is empty (zero counts).
    pub fn realize(&self, n_class1: usize, n_class0: usize) -> Result<Requirements> {
        Requirements::from_fractions(self.tp_fraction, self.fp_fraction, n_class1, n_class0)
    }
}

/// A pair of smoothing half-widths: λ0 for the negative class, λ1 for the
/// positive class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPair {
    lambda0: f64,
    lambda1: f64,
}

impl LambdaPair {
    /// # Errors
    /// Configuration error unless both values lie in (0, 0.5].
    pub fn new(lambda0: f64, lambda1: f64) -> Result<Self> {
        for (name, v) in [("lambda0", lambda0), ("lambda1", lambda1)] {
            if !(v > 0.0 && v <= 0.5) {
                return Err(Error::config(format!("{name} must be in (0, 0.5], got {v}")));
            }
        }
        Ok(LambdaPair { lambda0, lambda1 })
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
}

/// The fractional positive of one prediction: the closed-form integral over
/// (1/2, ∞) of the height-1/(2λ) box on [y_pred − λ, y_pred + λ]:
/// clamp((y_pred + λ − 1/2)/(2λ), 0, 1).
#[inline]
pub fn fractional_positive(y_pred: f64, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    ((y_pred + lambda - 0.5) / (2.0 * lambda)).clamp(0.0, 1.0)
}

/// Derivative of [`fractional_positive`] with respect to `y_pred`:
/// 1/(2λ) strictly inside the support (1/2 − λ, 1/2 + λ), else 0.
/// At the two kink points the derivative is defined as 0.
#[inline]
pub fn fractional_positive_grad(y_pred: f64, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    if y_pred > 0.5 - lambda && y_pred < 0.5 + lambda {
        1.0 / (2.0 * lambda)
    } else {
        0.0
    }
}

/// Fractional false positives: the sum of fractional positives over
/// class-0 predictions. An absolute count, not a fraction. Summation runs
/// in slice order from an explicit +0.0 accumulator, so results are
/// bit-reproducible and an empty or all-zero sum is +0.0 — the sign a
/// filtered-out subset must share with the full sum it stands in for.
pub fn ffp(predictions_class0: &[f64], lambda0: f64) -> f64 {
    predictions_class0
        .iter()
        .fold(0.0, |acc, &p| acc + fractional_positive(p, lambda0))
}

/// Fractional true positives: the sum of fractional positives over class-1
/// predictions.
pub fn ftp(predictions_class1: &[f64], lambda1: f64) -> f64 {
    predictions_class1
        .iter()
        .fold(0.0, |acc, &p| acc + fractional_positive(p, lambda1))
}

/// The two violation terms (E_FP, E_TP) of the requirement loss.
fn violation_terms(ffp_val: f64, ftp_val: f64, req: &Requirements) -> (f64, f64) {
    let e_fp = if ffp_val > req.fp_req_count() {
        ffp_val / req.fp_req_count() - 1.0
    } else {
        0.0
    };
    let ftp_floored = ftp_val.max(FTP_FLOOR);
    let e_tp = if ftp_floored < req.tp_req_count() {
        req.tp_req_count() / ftp_floored - 1.0
    } else {
        0.0
    };
    (e_fp, e_tp)
}

/// The requirement loss E = √(E_FP² + E_TP²). Zero exactly when
/// FFP ≤ FP_req and FTP ≥ TP_req.
pub fn requirement_loss(ffp_val: f64, ftp_val: f64, req: &Requirements) -> f64 {
    let (e_fp, e_tp) = violation_terms(ffp_val, ftp_val, req);
    (e_fp * e_fp + e_tp * e_tp).sqrt()
}

/// A prediction together with its class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPrediction {
    pub y_pred: f64,
    pub label: u8,
}

/// Per-sample gradient of the requirement loss with respect to each
/// predicted probability. Defined as all-zero when E = 0.
///
/// For class-0 sample i: ∂E/∂p_i = (E_FP/E)·(1/FP_req)·fp'(p_i, λ0).
/// For class-1 sample i: ∂E/∂p_i = (E_TP/E)·(−TP_req/FTP²)·fp'(p_i, λ1),
/// with FTP floored at [`FTP_FLOOR`].
pub fn requirement_loss_grad(
    predictions: &[LabeledPrediction],
    req: &Requirements,
    lambdas: &LambdaPair,
) -> Vec<f64> {
    let mut ffp_val = 0.0;
    let mut ftp_val = 0.0;
    for p in predictions {
        if p.label == 0 {
            ffp_val += fractional_positive(p.y_pred, lambdas.lambda0());
        } else {
            ftp_val += fractional_positive(p.y_pred, lambdas.lambda1());
        }
    }
    let (e_fp, e_tp) = violation_terms(ffp_val, ftp_val, req);
    let e = (e_fp * e_fp + e_tp * e_tp).sqrt();
    if e == 0.0 {
        return vec![0.0; predictions.len()];
    }
    let ftp_floored = ftp_val.max(FTP_FLOOR);
    let coeff0 = e_fp / e / req.fp_req_count();
    let coeff1 = e_tp / e * (-req.tp_req_count() / (ftp_floored * ftp_floored));
    predictions
        .iter()
        .map(|p| {
            if p.label == 0 {
                coeff0 * fractional_positive_grad(p.y_pred, lambdas.lambda0())
            } else {
                coeff1 * fractional_positive_grad(p.y_pred, lambdas.lambda1())
            }
        })
        .collect()
}

/// Indices of samples whose gate score is ≥ 1/2 − λ0. The complement
/// provably contributes exactly zero loss and zero gradient, because the
/// second model factor cannot raise the product above the gate score.
/// Indices are returned in ascending order, preserving summation order
/// between active-set and full-set evaluations.
pub fn active_samples(gate_scores: &[f64], lambda0: f64) -> Vec<usize> {
    debug_assert!(lambda0 > 0.0);
    let threshold = 0.5 - lambda0;
    gate_scores
        .iter()
        .enumerate()
        .filter(|(_, &g)| g >= threshold)
        .map(|(i, _)| i)
        .collect()
}
