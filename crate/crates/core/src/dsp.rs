//! Spectrogram feature extraction.
//!
//! Converts a 768-sample group into a 21×64 amplitude spectrogram:
//! the group mean is subtracted, 21 sliding windows of 128 samples
//! (step 32) are tapered with a symmetric Hanning window and transformed
//! with an unnormalized forward DFT, and the magnitudes of coefficients
//! 1..=64 are kept (the DC term is dropped). A dataset-level normalization
//! constant rescales amplitudes so that the calibration set has unit mean
//! power, and the scalar mean-energy feature drives the gate model.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::datagen::{TimeSeriesGroup, GROUP_LEN};
use crate::error::{Error, Result};

/// Samples per analysis window.
pub const WINDOW_LEN: usize = 128;
/// Hop between consecutive windows.
pub const WINDOW_STEP: usize = 32;
/// Number of windows per group: (768 − 128)/32 + 1.
pub const N_WINDOWS: usize = (GROUP_LEN - WINDOW_LEN) / WINDOW_STEP + 1;
/// Frequency bins kept per window (coefficients 1..=64; DC dropped).
pub const N_BINS: usize = WINDOW_LEN / 2;
/// Flattened spectrogram size.
pub const SPEC_LEN: usize = N_WINDOWS * N_BINS;

/// A 21×64 grid of non-negative spectral amplitudes, row-major over
/// (window, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    amps: Box<[f64; SPEC_LEN]>,
}

impl Spectrogram {
    /// Wraps a flat row-major amplitude buffer.
    ///
    /// # Errors
    /// Returns a shape error if the buffer is not 21·64 long, and a
    /// configuration error if any amplitude is negative or non-finite.
    pub fn from_flat(amps: Vec<f64>) -> Result<Self> {
        if amps.len() != SPEC_LEN {
            return Err(Error::shape(
                format!("{SPEC_LEN} amplitudes"),
                format!("{}", amps.len()),
            ));
        }
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::config("spectrogram amplitudes must be finite and >= 0"));
        }
        let boxed: Box<[f64; SPEC_LEN]> = amps.into_boxed_slice().try_into().expect("length checked");
        Ok(Spectrogram { amps: boxed })
    }

    /// Amplitude at window `i` (0-based, < 21) and bin `j` (0-based, < 64).
    #[inline]
    pub fn at(&self, window: usize, bin: usize) -> f64 {
        self.amps[window * N_BINS + bin]
    }

    /// Flat row-major view over (window, bin).
    #[inline]
    pub fn flat(&self) -> &[f64; SPEC_LEN] {
        &self.amps
    }
}

/// Dataset-level normalization constant: the mean power of the mean power
/// spectrum over a calibration subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConstant {
    value: f64,
}

impl NormalizationConstant {
    /// Wraps a precomputed constant.
    ///
    /// # Errors
    /// Configuration error unless the value is finite and > 0.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::config(format!(
                "normalization constant must be finite and > 0, got {value}"
            )));
        }
        Ok(NormalizationConstant { value })
    }

    /// The constant's value.
    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }
}

/// The symmetric 128-point Hanning taper, w[n] = 0.5·(1 − cos(2πn/127)).
pub fn hanning_window() -> [f64; WINDOW_LEN] {
    let mut w = [0.0; WINDOW_LEN];
    for (n, slot) in w.iter_mut().enumerate() {
        *slot = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / (WINDOW_LEN - 1) as f64).cos());
    }
    w
}

/// Reusable spectrogram extractor holding the FFT plan and taper.
///
/// Construction is cheap but not free; callers extracting many groups
/// should reuse one instance (it is `Send + Sync`).
pub struct SpectrogramExtractor {
    fft: Arc<dyn Fft<f64>>,
    taper: [f64; WINDOW_LEN],
}

impl Default for SpectrogramExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectrogramExtractor {
    /// Plans the 128-point transform.
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        SpectrogramExtractor {
            fft: planner.plan_fft_forward(WINDOW_LEN),
            taper: hanning_window(),
        }
    }

    /// Extracts the 21×64 amplitude spectrogram of one group.
    pub fn extract(&self, group: &TimeSeriesGroup) -> Spectrogram {
        let samples = group.samples();
        let mean = samples.iter().sum::<f64>() / GROUP_LEN as f64;

        let mut amps = vec![0.0f64; SPEC_LEN].into_boxed_slice();
        let mut buf = [Complex64::new(0.0, 0.0); WINDOW_LEN];
        for w in 0..N_WINDOWS {
            let start = w * WINDOW_STEP;
            for n in 0..WINDOW_LEN {
                buf[n] = Complex64::new((samples[start + n] - mean) * self.taper[n], 0.0);
            }
            self.fft.process(&mut buf);
            for j in 0..N_BINS {
                amps[w * N_BINS + j] = buf[j + 1].norm();
            }
        }
        let amps: Box<[f64; SPEC_LEN]> = amps.try_into().expect("length is SPEC_LEN");
        Spectrogram { amps }
    }
}

/// Computes the normalization constant of a calibration set: the per-bin
/// power is averaged over all samples and windows first, then averaged
/// over the 64 bins.
///
/// # Errors
/// Configuration error when `spectrograms` is empty.
pub fn compute_normalization(spectrograms: &[Spectrogram]) -> Result<NormalizationConstant> {
    if spectrograms.is_empty() {
        return Err(Error::config("cannot compute normalization of an empty calibration set"));
    }
    let denom = (spectrograms.len() * N_WINDOWS) as f64;
    let mut c = 0.0;
    for j in 0..N_BINS {
        let mut bin_power = 0.0;
        for spec in spectrograms {
            for i in 0..N_WINDOWS {
                let a = spec.at(i, j);
                bin_power += a * a;
            }
        }
        c += bin_power / denom;
    }
    NormalizationConstant::new(c / N_BINS as f64)
}

/// Rescales a spectrogram so the calibration set's mean power becomes 1:
/// every amplitude is divided by √c.
pub fn normalize(spec: &Spectrogram, c: NormalizationConstant) -> Spectrogram {
    let scale = 1.0 / c.value().sqrt();
    let mut amps = spec.amps.clone();
    for a in amps.iter_mut() {
        *a *= scale;
    }
    Spectrogram { amps }
}

/// The scalar mean-energy feature ⟨E⟩ = ΣΣ A_ij² / (21·64).
pub fn mean_energy(spec: &Spectrogram) -> f64 {
    spec.amps.iter().map(|a| a * a).sum::<f64>() / SPEC_LEN as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TimeSeriesGroup;

    fn group_of(samples: Vec<f64>) -> TimeSeriesGroup {
        TimeSeriesGroup::new(samples, crate::datagen::SourceKind::EasyNoise).unwrap()
    }

    #[test]
    fn window_count_closed_form() {
        assert_eq!(N_WINDOWS, 21);
        assert_eq!(N_BINS, 64);
        assert_eq!(SPEC_LEN, 1344);
    }

    #[test]
    fn all_zero_input_gives_all_zero_spectrogram() {
        let ex = SpectrogramExtractor::new();
        let spec = ex.extract(&group_of(vec![0.0; GROUP_LEN]));
        assert!(spec.flat().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn constant_input_gives_all_zero_spectrogram() {
        let ex = SpectrogramExtractor::new();
        let spec = ex.extract(&group_of(vec![3.25; GROUP_LEN]));
        // Mean subtraction removes the constant exactly.
        assert!(spec.flat().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn constant_shift_leaves_spectrogram_unchanged() {
        let ex = SpectrogramExtractor::new();
        let mut rng = crate::rng::SeededRng::new(4);
        let base: Vec<f64> = (0..GROUP_LEN).map(|_| rng.normal()).collect();
        let shifted: Vec<f64> = base.iter().map(|s| s + 17.5).collect();
        let a = ex.extract(&group_of(base));
        let b = ex.extract(&group_of(shifted));
        for (x, y) in a.flat().iter().zip(b.flat()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn bin_center_cosine_concentrates_energy() {
        // f = 240·k/128 Hz lands exactly on bin k of every window.
        let k = 10;
        let ex = SpectrogramExtractor::new();
        let samples: Vec<f64> = (0..GROUP_LEN)
            .map(|n| (2.0 * std::f64::consts::PI * k as f64 * n as f64 / WINDOW_LEN as f64).cos())
            .collect();
        let spec = ex.extract(&group_of(samples));
        for w in 0..N_WINDOWS {
            let peak = spec.at(w, k - 1); // bin j holds coefficient j+1
            for j in 0..N_BINS {
                if (j as i64 - (k - 1) as i64).abs() > 1 {
                    assert!(
                        spec.at(w, j) < peak * 0.01,
                        "window {w} bin {j}: {} vs peak {peak}",
                        spec.at(w, j)
                    );
                }
            }
        }
    }

    #[test]
    fn normalization_trivial_cases() {
        let ones = Spectrogram::from_flat(vec![1.0; SPEC_LEN]).unwrap();
        assert_eq!(compute_normalization(std::slice::from_ref(&ones)).unwrap().value(), 1.0);

        let twos = Spectrogram::from_flat(vec![2.0; SPEC_LEN]).unwrap();
        assert_eq!(compute_normalization(std::slice::from_ref(&twos)).unwrap().value(), 4.0);

        let zeros = Spectrogram::from_flat(vec![0.0; SPEC_LEN]).unwrap();
        let c = compute_normalization(&[zeros, ones]).unwrap();
        assert!((c.value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalization_of_empty_set_is_config_error() {
        assert!(matches!(compute_normalization(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn normalize_trivial_cases() {
        let twos = Spectrogram::from_flat(vec![2.0; SPEC_LEN]).unwrap();
        let unchanged = normalize(&twos, NormalizationConstant::new(1.0).unwrap());
        assert_eq!(unchanged, twos);
        let unit = normalize(&twos, NormalizationConstant::new(4.0).unwrap());
        assert!(unit.flat().iter().all(|&a| (a - 1.0).abs() < 1e-15));
    }

    #[test]
    fn normalization_closure_property() {
        let mut rng = crate::rng::SeededRng::new(8);
        let ex = SpectrogramExtractor::new();
        let specs: Vec<Spectrogram> = (0..5)
            .map(|_| {
                let s: Vec<f64> = (0..GROUP_LEN).map(|_| rng.normal()).collect();
                ex.extract(&group_of(s))
            })
            .collect();
        let c = compute_normalization(&specs).unwrap();
        let renormed: Vec<Spectrogram> = specs.iter().map(|s| normalize(s, c)).collect();
        let c2 = compute_normalization(&renormed).unwrap();
        assert!((c2.value() - 1.0).abs() < 1e-12, "closure gave {}", c2.value());
    }

    #[test]
    fn mean_energy_examples() {
        let zeros = Spectrogram::from_flat(vec![0.0; SPEC_LEN]).unwrap();
        assert_eq!(mean_energy(&zeros), 0.0);
        let ones = Spectrogram::from_flat(vec![1.0; SPEC_LEN]).unwrap();
        assert!((mean_energy(&ones) - 1.0).abs() < 1e-15);
        let mut single = vec![0.0; SPEC_LEN];
        single[5] = 2.0;
        let spec = Spectrogram::from_flat(single).unwrap();
        assert!((mean_energy(&spec) - 4.0 / 1344.0).abs() < 1e-18);
    }

    #[test]
    fn mean_energy_is_permutation_invariant() {
        let mut rng = crate::rng::SeededRng::new(21);
        let vals: Vec<f64> = (0..SPEC_LEN).map(|_| rng.uniform()).collect();
        let mut permuted = vals.clone();
        rng.shuffle(&mut permuted);
        let a = Spectrogram::from_flat(vals).unwrap();
        let b = Spectrogram::from_flat(permuted).unwrap();
        assert!((mean_energy(&a) - mean_energy(&b)).abs() < 1e-12);
    }
}
