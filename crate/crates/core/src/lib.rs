//! Training binary classifiers directly against asymmetric operating-point
//! requirements on heavily skewed data.
//!
//! The library covers the full pipeline for a motion-vs-noise sensing task:
//!
//! * [`datagen`] — seeded synthetic time-series corpus (motion bursts, easy
//!   background noise, spurious wideband interference) and a 2D toy set;
//! * [`dsp`] — windowed-DFT spectrogram features and energy summaries;
//! * [`reqloss`] — the smoothed fractional-positive counts and the
//!   requirement loss built from TP/FP targets, with analytic gradients;
//! * [`models`] — the gated product model (energy gate × small CNN) and a
//!   toy logistic model, with hand-written backward passes;
//! * [`trainer`] — the two-phase training procedure with active-sample
//!   filtering and the evaluation report;
//! * [`metrics`] — ROC curves, AUC, and class-weight sweeps;
//! * [`io`] — plain-text dataset/feature/model/report round-tripping.
//!
//! Everything is deterministic given a seed: one [`rng::SeededRng`] stream
//! drives generation, another drives training, and all reductions run in a
//! fixed order so that repeat runs produce byte-identical artifacts.

pub mod datagen;
pub mod dsp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod models;
pub mod reqloss;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
