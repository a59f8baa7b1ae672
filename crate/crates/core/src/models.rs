//! Probability models and their hand-derived gradients.
//!
//! Three models live here:
//!
//! * the scalar energy gate `p1(e) = S(w11·e + w12)`, fitted in phase 1;
//! * the small constrained CNN `p2` over 21×64 spectrograms;
//! * the gated product `p = S(w2a·L(p1) + w2b) · p2`, whose gate factor
//!   bounds the product and thereby licenses active-sample filtering.
//!
//! A 2D linear logistic model for the class-weight demonstration rounds out
//! the set. No autodiff: backward passes are written against exactly these
//! architectures and validated by finite differences in the test suite.

use crate::dsp::{Spectrogram, N_BINS, N_WINDOWS};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Rows of the valid 3×3 convolution output: 21 − 2.
pub const CONV_ROWS: usize = N_WINDOWS - 2;
/// Columns of the valid 3×3 convolution output: 64 − 2.
pub const CONV_COLS: usize = N_BINS - 2;
/// Number of convolution kernels.
pub const N_KERNELS: usize = 5;
/// Pooled rows: floor(19/3) with the remainder row dropped.
pub const POOL_ROWS: usize = CONV_ROWS / 3;
/// Pooled columns: floor(62/3) with the remainder columns dropped.
pub const POOL_COLS: usize = CONV_COLS / 3;
/// Flattened feature count: 6·20·5.
pub const FLAT_LEN: usize = POOL_ROWS * POOL_COLS * N_KERNELS;
/// Hidden units in the first dense layer.
pub const HIDDEN: usize = 10;

/// Clamp bound for probabilities entering the logit.
pub const LOGIT_CLAMP: f64 = 1e-9;

/// Numerically stable sigmoid.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse sigmoid. The caller is responsible for keeping `p` inside
/// (0, 1); see [`clamped_logit`].
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logit of `p` clamped into [1e-9, 1 − 1e-9], so saturated gates produce
/// large finite logits instead of infinities.
#[inline]
pub fn clamped_logit(p: f64) -> f64 {
    logit(p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP))
}

/// Gate parameters: the phase-1 energy filter (w11, w12) and the phase-2
/// logit rescaling (w2a, w2b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateWeights {
    pub w11: f64,
    pub w12: f64,
    pub w2a: f64,
    pub w2b: f64,
}

impl GateWeights {
    /// Identity phase-2 rescaling around a fitted phase-1 filter: with
    /// (w2a, w2b) = (1, 0) the gate score initially reproduces p1.
    pub fn from_phase1(w11: f64, w12: f64) -> Self {
        GateWeights {
            w11,
            w12,
            w2a: 1.0,
            w2b: 0.0,
        }
    }
}

/// The energy-filter probability p1 = S(w11·energy + w12).
#[inline]
pub fn p1_forward(energy: f64, gate: &GateWeights) -> f64 {
    sigmoid(gate.w11 * energy + gate.w12)
}

/// All second-stage CNN parameters.
///
/// Constraint set: every 3×3 kernel has unit L2 norm; convolution biases,
/// dense weights and dense biases all lie in [0, 1]. [`apply_constraints`]
/// re-establishes the set after every optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnWeights {
    /// Five 3×3 kernels, each row-major.
    pub conv_kernels: [[f64; 9]; N_KERNELS],
    pub conv_biases: [f64; N_KERNELS],
    /// 600×10 weights, laid out `[input · HIDDEN + unit]`.
    pub dense1: Box<[f64]>,
    pub dense1_bias: [f64; HIDDEN],
    pub dense2: [f64; HIDDEN],
    pub dense2_bias: f64,
}

/// Scale of the uniform initialization of the first dense layer.
///
/// Deliberately small: pooled spectral features are O(1)–O(10), so larger
/// first-layer weights would saturate the output sigmoid at initialization
/// and stall gradient flow through the [0,1]-constrained dense stack.
pub const DENSE1_INIT_SCALE: f64 = 0.01;

impl CnnWeights {
    /// Seeded initialization: kernels drawn uniform(−1, 1) then projected
    /// to unit norm; first dense layer uniform(0, [`DENSE1_INIT_SCALE`]);
    /// biases 0.05 except the output stage; output weights and bias zero,
    /// which starts p2 at exactly 0.5 with live gradients.
    pub fn init(rng: &mut SeededRng) -> Self {
        let mut conv_kernels = [[0.0; 9]; N_KERNELS];
        for kernel in conv_kernels.iter_mut() {
            for w in kernel.iter_mut() {
                *w = rng.uniform_in(-1.0, 1.0);
            }
        }
        let mut dense1 = vec![0.0; FLAT_LEN * HIDDEN].into_boxed_slice();
        for w in dense1.iter_mut() {
            *w = rng.uniform_in(0.0, DENSE1_INIT_SCALE);
        }
        let mut cnn = CnnWeights {
            conv_kernels,
            conv_biases: [0.05; N_KERNELS],
            dense1,
            dense1_bias: [0.05; HIDDEN],
            dense2: [0.0; HIDDEN],
            dense2_bias: 0.0,
        };
        apply_constraints(&mut cnn);
        cnn
    }

    /// All-zero weight gradients buffer shaped like `self`.
    pub fn zero_grads(&self) -> CnnGrads {
        CnnGrads {
            conv_kernels: [[0.0; 9]; N_KERNELS],
            conv_biases: [0.0; N_KERNELS],
            dense1: vec![0.0; FLAT_LEN * HIDDEN].into_boxed_slice(),
            dense1_bias: [0.0; HIDDEN],
            dense2: [0.0; HIDDEN],
            dense2_bias: 0.0,
        }
    }
}

/// Gradient accumulator matching [`CnnWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct CnnGrads {
    pub conv_kernels: [[f64; 9]; N_KERNELS],
    pub conv_biases: [f64; N_KERNELS],
    pub dense1: Box<[f64]>,
    pub dense1_bias: [f64; HIDDEN],
    pub dense2: [f64; HIDDEN],
    pub dense2_bias: f64,
}

/// The complete product model: gate + CNN + the phase-2 freeze flag for
/// (w11, w12).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductModelWeights {
    pub gate: GateWeights,
    pub cnn: CnnWeights,
    pub frozen_gate_p1: bool,
}

/// Activations cached by [`p2_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct P2Cache {
    /// For each pooled cell, the flat conv-grid index (row·62 + col) of the
    /// max element. Ties go to the smallest flat index.
    pub pool_src: [u16; FLAT_LEN],
    /// Pooled (post-ReLU) features, flattened (row, col, kernel) row-major.
    pub flat: [f64; FLAT_LEN],
    /// Pre-activations of the first dense layer.
    pub z1: [f64; HIDDEN],
    /// The output probability.
    pub q: f64,
}

/// CNN forward pass: valid 3×3 convolution (19×62×5), ReLU, 3×3 max-pool
/// with stride 3 (6×20×5, remainder dropped), flatten (600), dense→10 with
/// ReLU, dense→1 with sigmoid.
pub fn p2_forward(spec: &Spectrogram, cnn: &CnnWeights) -> (f64, P2Cache) {
    let a = spec.flat();
    let mut pool_src = [0u16; FLAT_LEN];
    let mut flat = [0.0f64; FLAT_LEN];

    // One conv map at a time keeps the working set small.
    let mut conv = [0.0f64; CONV_ROWS * CONV_COLS];
    for k in 0..N_KERNELS {
        let kernel = &cnn.conv_kernels[k];
        let bias = cnn.conv_biases[k];
        for ci in 0..CONV_ROWS {
            for cj in 0..CONV_COLS {
                let mut acc = bias;
                for di in 0..3 {
                    let row = &a[(ci + di) * N_BINS + cj..(ci + di) * N_BINS + cj + 3];
                    acc += kernel[di * 3] * row[0]
                        + kernel[di * 3 + 1] * row[1]
                        + kernel[di * 3 + 2] * row[2];
                }
                conv[ci * CONV_COLS + cj] = acc.max(0.0);
            }
        }
        for pi in 0..POOL_ROWS {
            for pj in 0..POOL_COLS {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0u16;
                for di in 0..3 {
                    for dj in 0..3 {
                        let idx = (pi * 3 + di) * CONV_COLS + (pj * 3 + dj);
                        let v = conv[idx];
                        if v > best {
                            best = v;
                            best_idx = idx as u16;
                        }
                    }
                }
                let cell = (pi * POOL_COLS + pj) * N_KERNELS + k;
                flat[cell] = best;
                pool_src[cell] = best_idx;
            }
        }
    }

    let mut z1 = cnn.dense1_bias;
    for (f, &x) in flat.iter().enumerate() {
        if x != 0.0 {
            let row = &cnn.dense1[f * HIDDEN..(f + 1) * HIDDEN];
            for u in 0..HIDDEN {
                z1[u] += row[u] * x;
            }
        }
    }
    let mut z2 = cnn.dense2_bias;
    for u in 0..HIDDEN {
        z2 += cnn.dense2[u] * z1[u].max(0.0);
    }
    let q = sigmoid(z2);
    (
        q,
        P2Cache {
            pool_src,
            flat,
            z1,
            q,
        },
    )
}

/// Everything [`product_forward`] computes for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductOutput {
    /// The product probability p = gate_score · p2.
    pub p: f64,
    /// The gate factor S(w2a·L(p1) + w2b).
    pub gate_score: f64,
    /// The CNN factor.
    pub p2: f64,
}

/// Per-sample cache for [`product_backward`].
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub p2: P2Cache,
    /// The raw phase-1 probability, before logit clamping.
    pub p1: f64,
    /// L(p1) after clamping.
    pub l: f64,
    pub gate_score: f64,
    pub energy: f64,
}

/// Product-model forward pass returning the probability and both factors.
pub fn product_forward(energy: f64, spec: &Spectrogram, w: &ProductModelWeights) -> ProductOutput {
    let (out, _) = product_forward_cached(energy, spec, w);
    out
}

/// Forward pass that also returns the activation cache for backprop.
pub fn product_forward_cached(
    energy: f64,
    spec: &Spectrogram,
    w: &ProductModelWeights,
) -> (ProductOutput, SampleCache) {
    let p1 = p1_forward(energy, &w.gate);
    let l = clamped_logit(p1);
    let gate_score = sigmoid(w.gate.w2a * l + w.gate.w2b);
    let (q, p2_cache) = p2_forward(spec, &w.cnn);
    (
        ProductOutput {
            p: gate_score * q,
            gate_score,
            p2: q,
        },
        SampleCache {
            p2: p2_cache,
            p1,
            l,
            gate_score,
            energy,
        },
    )
}

/// Gate score alone — what active-sample selection thresholds. Cheap: no
/// CNN evaluation.
#[inline]
pub fn gate_score(energy: f64, gate: &GateWeights) -> f64 {
    let l = clamped_logit(p1_forward(energy, gate));
    sigmoid(gate.w2a * l + gate.w2b)
}

/// Gradients of a scalar loss with respect to all product-model parameters.
/// `w11`/`w12` are exactly zero while the gate's phase-1 part is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub w11: f64,
    pub w12: f64,
    pub w2a: f64,
    pub w2b: f64,
    pub cnn: CnnGrads,
}

/// One sample's contribution to a backward pass: its input spectrogram,
/// the forward cache, and the upstream ∂loss/∂p.
pub struct BackpropSample<'a> {
    pub spec: &'a Spectrogram,
    pub cache: &'a SampleCache,
    pub upstream: f64,
}

/// Reverse-mode gradients of the loss through the product model, summed
/// over the batch in slice order (deterministic).
pub fn product_backward(batch: &[BackpropSample<'_>], w: &ProductModelWeights) -> ModelGrads {
    let mut grads = ModelGrads {
        w11: 0.0,
        w12: 0.0,
        w2a: 0.0,
        w2b: 0.0,
        cnn: w.cnn.zero_grads(),
    };

    for sample in batch {
        if sample.upstream == 0.0 {
            continue;
        }
        let cache = sample.cache;
        let g = cache.gate_score;
        let q = cache.p2.q;

        // Gate branch: p = g·q, g = S(w2a·l + w2b).
        let dgate = sample.upstream * q * g * (1.0 - g);
        grads.w2a += dgate * cache.l;
        grads.w2b += dgate;
        if !w.frozen_gate_p1 {
            // l = L(clamp(p1)), dl/d(w11·e + w12) = 1 inside the clamp.
            if cache.p1 > LOGIT_CLAMP && cache.p1 < 1.0 - LOGIT_CLAMP {
                let dl = dgate * w.gate.w2a;
                grads.w11 += dl * cache.energy;
                grads.w12 += dl;
            }
        }

        // CNN branch: p = g·q.
        let dz2 = sample.upstream * g * q * (1.0 - q);
        let mut dz1 = [0.0f64; HIDDEN];
        for u in 0..HIDDEN {
            let h = cache.p2.z1[u].max(0.0);
            grads.cnn.dense2[u] += dz2 * h;
            if cache.p2.z1[u] > 0.0 {
                dz1[u] = dz2 * w.cnn.dense2[u];
            }
        }
        grads.cnn.dense2_bias += dz2;

        let a = sample.spec.flat();
        for f in 0..FLAT_LEN {
            let x = cache.p2.flat[f];
            // Pooled activations are post-ReLU: where x = 0 the dense1
            // weight gradient vanishes and the ReLU blocks the conv path.
            if x == 0.0 {
                continue;
            }
            let wrow = &w.cnn.dense1[f * HIDDEN..(f + 1) * HIDDEN];
            let grow = &mut grads.cnn.dense1[f * HIDDEN..(f + 1) * HIDDEN];
            let mut dflat = 0.0;
            for u in 0..HIDDEN {
                grow[u] += x * dz1[u];
                dflat += wrow[u] * dz1[u];
            }
            // Route through the max-pool: gradient reaches the argmax conv
            // cell of this pooled feature.
            if dflat != 0.0 {
                let k = f % N_KERNELS;
                let src = cache.p2.pool_src[f] as usize;
                let ci = src / CONV_COLS;
                let cj = src % CONV_COLS;
                let gk = &mut grads.cnn.conv_kernels[k];
                for di in 0..3 {
                    let row = &a[(ci + di) * N_BINS + cj..(ci + di) * N_BINS + cj + 3];
                    gk[di * 3] += dflat * row[0];
                    gk[di * 3 + 1] += dflat * row[1];
                    gk[di * 3 + 2] += dflat * row[2];
                }
                grads.cnn.conv_biases[k] += dflat;
            }
        }
        for u in 0..HIDDEN {
            grads.cnn.dense1_bias[u] += dz1[u];
        }
    }
    grads
}

/// The canonical unit kernel substituted for an exactly-zero kernel during
/// constraint projection: 1 at the center, 0 elsewhere.
pub const CANONICAL_KERNEL: [f64; 9] = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];

/// Projects weights back onto the constraint set: kernels rescaled to unit
/// L2 norm (a zero kernel becomes [`CANONICAL_KERNEL`]); dense weights and
/// all biases clamped into [0, 1].
pub fn apply_constraints(cnn: &mut CnnWeights) {
    for kernel in cnn.conv_kernels.iter_mut() {
        let norm = kernel.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            *kernel = CANONICAL_KERNEL;
        } else {
            for w in kernel.iter_mut() {
                *w /= norm;
            }
        }
    }
    for b in cnn.conv_biases.iter_mut() {
        *b = b.clamp(0.0, 1.0);
    }
    for w in cnn.dense1.iter_mut() {
        *w = w.clamp(0.0, 1.0);
    }
    for b in cnn.dense1_bias.iter_mut() {
        *b = b.clamp(0.0, 1.0);
    }
    for w in cnn.dense2.iter_mut() {
        *w = w.clamp(0.0, 1.0);
    }
    cnn.dense2_bias = cnn.dense2_bias.clamp(0.0, 1.0);
}

/// Weights of the 2D toy logistic model P(x, y) = S(a·x + b·y + c).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyLogisticWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Per-class weights of the toy model's weighted binary cross entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub class0: f64,
    pub class1: f64,
}

impl ClassWeights {
    /// # Errors
    /// Configuration error unless both weights are finite and > 0.
    pub fn new(class0: f64, class1: f64) -> Result<Self> {
        if !(class0.is_finite() && class0 > 0.0 && class1.is_finite() && class1 > 0.0) {
            return Err(Error::config(format!(
                "class weights must be finite and > 0, got ({class0}, {class1})"
            )));
        }
        Ok(ClassWeights { class0, class1 })
    }
}

/// Toy model forward pass.
#[inline]
pub fn toy_logistic_forward(point: &crate::datagen::ToyPoint2D, w: &ToyLogisticWeights) -> f64 {
    sigmoid(w.a * point.x + w.b * point.y + w.c)
}

/// Gradient of the class-weighted binary cross entropy of one point with
/// respect to (a, b, c): weight·(p − label)·(x, y, 1).
pub fn toy_logistic_backward(
    point: &crate::datagen::ToyPoint2D,
    w: &ToyLogisticWeights,
    class_weights: &ClassWeights,
) -> [f64; 3] {
    let p = toy_logistic_forward(point, w);
    let weight = if point.label == 1 {
        class_weights.class1
    } else {
        class_weights.class0
    };
    let dz = weight * (p - point.label as f64);
    [dz * point.x, dz * point.y, dz]
}

/// The class-weighted binary cross entropy of one point, clamped away from
/// log(0).
pub fn toy_logistic_loss(
    point: &crate::datagen::ToyPoint2D,
    w: &ToyLogisticWeights,
    class_weights: &ClassWeights,
) -> f64 {
    let p = toy_logistic_forward(point, w).clamp(1e-300, 1.0 - 1e-16);
    let weight = if point.label == 1 {
        class_weights.class1
    } else {
        class_weights.class0
    };
    if point.label == 1 {
        -weight * p.ln()
    } else {
        -weight * (1.0 - p).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ToyPoint2D;
    use crate::dsp::SPEC_LEN;
    use approx::assert_abs_diff_eq;

    fn random_spec(rng: &mut SeededRng, scale: f64) -> Spectrogram {
        let vals: Vec<f64> = (0..SPEC_LEN).map(|_| rng.uniform() * scale).collect();
        Spectrogram::from_flat(vals).unwrap()
    }

    #[test]
    fn sigmoid_logit_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(logit(sigmoid(3.7)), 3.7, epsilon = 1e-12);
        assert!(sigmoid(-36.0) > 0.0);
        assert_abs_diff_eq!(clamped_logit(1.0), logit(1.0 - LOGIT_CLAMP), epsilon = 1e-9);
    }

    #[test]
    fn p1_forward_basics() {
        let gate = GateWeights {
            w11: 2.0,
            w12: 0.0,
            w2a: 1.0,
            w2b: 0.0,
        };
        assert_eq!(p1_forward(0.0, &gate), 0.5);
        let flat = GateWeights { w11: 0.0, ..gate };
        assert_eq!(p1_forward(1.0, &flat), p1_forward(100.0, &flat));
        assert!(p1_forward(2.0, &gate) > p1_forward(1.0, &gate));
    }

    #[test]
    fn p2_zero_input_zero_biases_gives_half() {
        let mut rng = SeededRng::new(1);
        let mut cnn = CnnWeights::init(&mut rng);
        cnn.conv_biases = [0.0; N_KERNELS];
        cnn.dense1_bias = [0.0; HIDDEN];
        cnn.dense2_bias = 0.0;
        let spec = Spectrogram::from_flat(vec![0.0; SPEC_LEN]).unwrap();
        let (q, _) = p2_forward(&spec, &cnn);
        assert_eq!(q, 0.5);
    }

    #[test]
    fn flatten_size_is_600() {
        assert_eq!(FLAT_LEN, 600);
        assert_eq!(POOL_ROWS, 6);
        assert_eq!(POOL_COLS, 20);
    }

    #[test]
    fn p2_output_is_probability_under_fuzz() {
        let mut rng = SeededRng::new(2);
        for trial in 0..1000 {
            let mut cnn = CnnWeights::init(&mut rng);
            // Random feasible-ish weights beyond the init distribution.
            for k in cnn.conv_kernels.iter_mut() {
                for w in k.iter_mut() {
                    *w = rng.uniform_in(-1.0, 1.0);
                }
            }
            apply_constraints(&mut cnn);
            let spec = random_spec(&mut rng, 10.0);
            let (q, _) = p2_forward(&spec, &cnn);
            assert!(q > 0.0 && q < 1.0, "trial {trial}: q = {q}");
        }
    }

    #[test]
    fn product_never_exceeds_gate() {
        let mut rng = SeededRng::new(3);
        for _ in 0..200 {
            let w = ProductModelWeights {
                gate: GateWeights {
                    w11: rng.uniform_in(-2.0, 2.0),
                    w12: rng.uniform_in(-2.0, 2.0),
                    w2a: rng.uniform_in(-2.0, 2.0),
                    w2b: rng.uniform_in(-2.0, 2.0),
                },
                cnn: CnnWeights::init(&mut rng),
                frozen_gate_p1: true,
            };
            let spec = random_spec(&mut rng, 5.0);
            let out = product_forward(rng.uniform_in(0.0, 30.0), &spec, &w);
            assert!(out.p <= out.gate_score);
            assert_abs_diff_eq!(out.p, out.gate_score * out.p2, epsilon = 1e-15);
        }
    }

    #[test]
    fn gate_score_matches_product_forward() {
        let mut rng = SeededRng::new(4);
        let w = ProductModelWeights {
            gate: GateWeights {
                w11: 1.3,
                w12: -5.0,
                w2a: 0.7,
                w2b: -1.1,
            },
            cnn: CnnWeights::init(&mut rng),
            frozen_gate_p1: true,
        };
        let spec = random_spec(&mut rng, 2.0);
        for e in [0.0, 0.5, 3.0, 40.0] {
            let out = product_forward(e, &spec, &w);
            assert_eq!(out.gate_score, gate_score(e, &w.gate));
        }
    }

    #[test]
    fn gate_at_half_p1_is_sigmoid_w2b() {
        // p1 = 0.5 → logit 0 → gate = S(w2b).
        let gate = GateWeights {
            w11: 0.0,
            w12: 0.0,
            w2a: 3.0,
            w2b: -0.7,
        };
        assert_abs_diff_eq!(gate_score(12.3, &gate), sigmoid(-0.7), epsilon = 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = SeededRng::new(5);
        let w = ProductModelWeights {
            gate: GateWeights::from_phase1(1.0, -2.0),
            cnn: CnnWeights::init(&mut rng),
            frozen_gate_p1: false,
        };
        let spec = random_spec(&mut rng, 3.0);
        let (_, cache) = product_forward_cached(1.5, &spec, &w);
        let grads = product_backward(
            &[BackpropSample {
                spec: &spec,
                cache: &cache,
                upstream: 0.0,
            }],
            &w,
        );
        assert_eq!(grads.w2a, 0.0);
        assert_eq!(grads.w2b, 0.0);
        assert!(grads.cnn.dense2.iter().all(|&g| g == 0.0));
        assert!(grads.cnn.conv_kernels.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn frozen_gate_reports_exact_zero_gate_p1_grads() {
        let mut rng = SeededRng::new(6);
        let w = ProductModelWeights {
            gate: GateWeights::from_phase1(1.0, -2.0),
            cnn: CnnWeights::init(&mut rng),
            frozen_gate_p1: true,
        };
        let spec = random_spec(&mut rng, 3.0);
        let (_, cache) = product_forward_cached(1.5, &spec, &w);
        let grads = product_backward(
            &[BackpropSample {
                spec: &spec,
                cache: &cache,
                upstream: 1.0,
            }],
            &w,
        );
        assert_eq!(grads.w11, 0.0);
        assert_eq!(grads.w12, 0.0);
        assert!(grads.w2a != 0.0 || grads.w2b != 0.0);
    }

    #[test]
    fn apply_constraints_examples() {
        let mut rng = SeededRng::new(7);
        let mut cnn = CnnWeights::init(&mut rng);
        let third = 1.0 / 3.0;
        cnn.conv_kernels[0] = [third; 9];
        let feasible = cnn.conv_kernels[0];
        apply_constraints(&mut cnn);
        for (a, b) in cnn.conv_kernels[0].iter().zip(feasible.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }

        let direction = cnn.conv_kernels[1];
        for w in cnn.conv_kernels[1].iter_mut() {
            *w *= 7.0;
        }
        apply_constraints(&mut cnn);
        for (a, b) in cnn.conv_kernels[1].iter().zip(direction.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        cnn.dense1[0] = -0.2;
        cnn.dense1[1] = 1.7;
        apply_constraints(&mut cnn);
        assert_eq!(cnn.dense1[0], 0.0);
        assert_eq!(cnn.dense1[1], 1.0);

        cnn.conv_kernels[2] = [0.0; 9];
        apply_constraints(&mut cnn);
        assert_eq!(cnn.conv_kernels[2], CANONICAL_KERNEL);
    }

    #[test]
    fn constraints_hold_exactly_after_projection() {
        let mut rng = SeededRng::new(8);
        for _ in 0..50 {
            let mut cnn = CnnWeights::init(&mut rng);
            for k in cnn.conv_kernels.iter_mut() {
                for w in k.iter_mut() {
                    *w = rng.uniform_in(-10.0, 10.0);
                }
            }
            for w in cnn.dense1.iter_mut() {
                *w = rng.uniform_in(-3.0, 3.0);
            }
            cnn.dense2_bias = rng.uniform_in(-3.0, 3.0);
            apply_constraints(&mut cnn);
            for k in &cnn.conv_kernels {
                let norm = k.iter().map(|w| w * w).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12, "kernel norm {norm}");
            }
            assert!(cnn.dense1.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!((0.0..=1.0).contains(&cnn.dense2_bias));
        }
    }

    #[test]
    fn toy_forward_flat_weights_give_half() {
        let w = ToyLogisticWeights { a: 0.0, b: 0.0, c: 0.0 };
        for p in [
            ToyPoint2D { x: 0.0, y: 0.0, label: 0 },
            ToyPoint2D { x: 5.0, y: -3.0, label: 1 },
        ] {
            assert_eq!(toy_logistic_forward(&p, &w), 0.5);
        }
    }

    #[test]
    fn toy_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(9);
        let cw = ClassWeights::new(1.0, 7.0).unwrap();
        for _ in 0..50 {
            let point = ToyPoint2D {
                x: rng.normal(),
                y: rng.normal(),
                label: (rng.uniform() < 0.5) as u8,
            };
            let w = ToyLogisticWeights {
                a: rng.normal(),
                b: rng.normal(),
                c: rng.normal(),
            };
            let g = toy_logistic_backward(&point, &w, &cw);
            let h = 1e-6;
            let perturbed = [
                ToyLogisticWeights { a: w.a + h, ..w },
                ToyLogisticWeights { b: w.b + h, ..w },
                ToyLogisticWeights { c: w.c + h, ..w },
            ];
            let minus = [
                ToyLogisticWeights { a: w.a - h, ..w },
                ToyLogisticWeights { b: w.b - h, ..w },
                ToyLogisticWeights { c: w.c - h, ..w },
            ];
            for i in 0..3 {
                let fd = (toy_logistic_loss(&point, &perturbed[i], &cw)
                    - toy_logistic_loss(&point, &minus[i], &cw))
                    / (2.0 * h);
                let scale = fd.abs().max(g[i].abs()).max(1e-9);
                assert!((g[i] - fd).abs() / scale < 1e-4, "coord {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn toy_gradient_scales_linearly_with_class_weights() {
        let point = ToyPoint2D { x: 0.7, y: -1.2, label: 1 };
        let w = ToyLogisticWeights { a: 0.3, b: 0.2, c: -0.1 };
        let g1 = toy_logistic_backward(&point, &w, &ClassWeights::new(1.0, 3.0).unwrap());
        let g2 = toy_logistic_backward(&point, &w, &ClassWeights::new(2.0, 6.0).unwrap());
        for i in 0..3 {
            assert_abs_diff_eq!(g2[i], 2.0 * g1[i], epsilon = 1e-12);
        }
    }
}
