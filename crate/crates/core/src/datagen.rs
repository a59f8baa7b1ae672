//! Synthetic dataset generation.
//!
//! Two generators live here: raw 240 Hz time-series groups that mimic the
//! three signal populations of a motion-sensing deployment (motion,
//! low-amplitude background noise, and rare impulsive interference), and a
//! two-Gaussian 2D toy dataset used by the class-weight ROC demonstration.
//! Both are pure functions of their spec and seed.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Samples per group: 3.2 s at 240 Hz.
pub const GROUP_LEN: usize = 768;
/// Nominal sample rate of the simulated sensor.
pub const SAMPLE_RATE_HZ: f64 = 240.0;

/// Which generator produced a group. Provenance only — training never
/// sees this field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Motion,
    EasyNoise,
    SpuriousNoise,
}

impl SourceKind {
    /// The class label implied by the source: 1 for motion, 0 otherwise.
    pub fn label(self) -> u8 {
        match self {
            SourceKind::Motion => 1,
            SourceKind::EasyNoise | SourceKind::SpuriousNoise => 0,
        }
    }

    /// Stable identifier used in dataset files.
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Motion => "motion",
            SourceKind::EasyNoise => "easy_noise",
            SourceKind::SpuriousNoise => "spurious_noise",
        }
    }

    /// Parses the identifier written by [`SourceKind::as_str`].
    pub fn parse(s: &str) -> Option<SourceKind> {
        match s {
            "motion" => Some(SourceKind::Motion),
            "easy_noise" => Some(SourceKind::EasyNoise),
            "spurious_noise" => Some(SourceKind::SpuriousNoise),
            _ => None,
        }
    }
}

/// One fixed-length window of raw sensor samples with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesGroup {
    samples: Vec<f64>,
    source: SourceKind,
}

impl TimeSeriesGroup {
    /// Builds a group, deriving the label from the source kind so the
    /// label-purity invariant holds by construction.
    ///
    /// # Errors
    /// Shape error unless exactly [`GROUP_LEN`] samples are supplied.
    pub fn new(samples: Vec<f64>, source: SourceKind) -> Result<Self> {
        if samples.len() != GROUP_LEN {
            return Err(Error::shape(
                format!("{GROUP_LEN} samples"),
                format!("{}", samples.len()),
            ));
        }
        Ok(TimeSeriesGroup { samples, source })
    }

    /// The raw samples (length 768).
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Class label: 1 = motion, 0 = noise.
    pub fn label(&self) -> u8 {
        self.source.label()
    }

    /// Generator provenance.
    pub fn source(&self) -> SourceKind {
        self.source
    }
}

/// Parameters of the motion generator: a sum of Doppler-like sinusoids
/// under a Gaussian amplitude envelope, over the background noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionParams {
    /// Number of sinusoid components, drawn uniformly from this inclusive range.
    pub components_lo: u32,
    pub components_hi: u32,
    /// Component frequency range in Hz.
    pub freq_lo_hz: f64,
    pub freq_hi_hz: f64,
    /// Total peak amplitude range; split evenly across components.
    pub amp_lo: f64,
    pub amp_hi: f64,
    /// Envelope extent as a fraction of the group (σ = frac·768/4).
    pub envelope_frac_lo: f64,
    pub envelope_frac_hi: f64,
    /// Envelope center as a fraction of the group length.
    pub center_frac_lo: f64,
    pub center_frac_hi: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            components_lo: 1,
            components_hi: 3,
            freq_lo_hz: 5.0,
            freq_hi_hz: 40.0,
            amp_lo: 1.2,
            amp_hi: 2.0,
            envelope_frac_lo: 0.5,
            envelope_frac_hi: 1.0,
            center_frac_lo: 0.25,
            center_frac_hi: 0.75,
        }
    }
}

/// Parameters of the easy-noise generator: i.i.d. Gaussian samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EasyNoiseParams {
    /// Standard deviation of the background noise floor.
    pub sigma: f64,
}

impl Default for EasyNoiseParams {
    fn default() -> Self {
        // One order of magnitude below the motion peak amplitude.
        EasyNoiseParams { sigma: 0.1 }
    }
}

/// Parameters of the spurious-noise generator: short Gaussian bursts over
/// the noise floor.
///
/// Burst strength is expressed relative to the motion generator's peak
/// amplitude. The defaults keep typical burst *energy* below the typical
/// motion energy while the burst *amplitude* stays well above the noise
/// floor: spurious groups then straddle the upper end of the energy range,
/// which is what makes them hard negatives for the second-stage model
/// instead of trivially separable outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousParams {
    /// Number of bursts per group, inclusive range.
    pub bursts_lo: u32,
    pub bursts_hi: u32,
    /// Burst length range in samples, inclusive.
    pub burst_len_lo: usize,
    pub burst_len_hi: usize,
    /// Burst standard deviation as a multiple of the motion peak amplitude.
    pub amp_factor_lo: f64,
    pub amp_factor_hi: f64,
}

impl Default for SpuriousParams {
    fn default() -> Self {
        SpuriousParams {
            bursts_lo: 1,
            bursts_hi: 2,
            burst_len_lo: 10,
            burst_len_hi: 30,
            amp_factor_lo: 0.1,
            amp_factor_hi: 0.45,
        }
    }
}

/// Full description of a synthetic signal dataset. Identical specs produce
/// bit-identical datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDatasetSpec {
    pub n_motion: usize,
    pub n_easy_noise: usize,
    pub n_spurious_noise: usize,
    pub seed: u64,
    pub motion: MotionParams,
    pub easy_noise: EasyNoiseParams,
    pub spurious: SpuriousParams,
}

impl SignalDatasetSpec {
    /// A spec with the given counts and seed and default generator params.
    pub fn new(n_motion: usize, n_easy_noise: usize, n_spurious_noise: usize, seed: u64) -> Self {
        SignalDatasetSpec {
            n_motion,
            n_easy_noise,
            n_spurious_noise,
            seed,
            motion: MotionParams::default(),
            easy_noise: EasyNoiseParams::default(),
            spurious: SpuriousParams::default(),
        }
    }

    /// Checks all invariants.
    ///
    /// # Errors
    /// Configuration error for a zero-sample dataset or inconsistent
    /// parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let total = self.n_motion + self.n_easy_noise + self.n_spurious_noise;
        if total == 0 {
            return Err(Error::config("dataset spec has zero total samples"));
        }
        let m = &self.motion;
        if m.components_lo == 0 || m.components_lo > m.components_hi {
            return Err(Error::config("motion component count range is invalid"));
        }
        for (name, lo, hi) in [
            ("motion frequency", m.freq_lo_hz, m.freq_hi_hz),
            ("motion amplitude", m.amp_lo, m.amp_hi),
            ("motion envelope fraction", m.envelope_frac_lo, m.envelope_frac_hi),
            ("motion center fraction", m.center_frac_lo, m.center_frac_hi),
            (
                "spurious amplitude factor",
                self.spurious.amp_factor_lo,
                self.spurious.amp_factor_hi,
            ),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
                return Err(Error::config(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if m.freq_hi_hz >= SAMPLE_RATE_HZ / 2.0 {
            return Err(Error::config("motion frequencies must stay below Nyquist (120 Hz)"));
        }
        if self.easy_noise.sigma <= 0.0 || !self.easy_noise.sigma.is_finite() {
            return Err(Error::config("easy-noise sigma must be finite and > 0"));
        }
        let s = &self.spurious;
        if s.bursts_lo == 0 || s.bursts_lo > s.bursts_hi {
            return Err(Error::config("spurious burst count range is invalid"));
        }
        if s.burst_len_lo == 0 || s.burst_len_lo > s.burst_len_hi || s.burst_len_hi > GROUP_LEN {
            return Err(Error::config("spurious burst length range is invalid"));
        }
        Ok(())
    }
}

fn generate_motion(rng: &mut SeededRng, p: &MotionParams, noise_sigma: f64) -> Vec<f64> {
    let k = rng.int_in(p.components_lo as u64, p.components_hi as u64) as usize;
    let total_amp = rng.uniform_in(p.amp_lo, p.amp_hi);
    let comp_amp = total_amp / k as f64;
    let mut freqs = Vec::with_capacity(k);
    let mut phases = Vec::with_capacity(k);
    for _ in 0..k {
        freqs.push(rng.uniform_in(p.freq_lo_hz, p.freq_hi_hz));
        phases.push(rng.uniform_in(0.0, 2.0 * std::f64::consts::PI));
    }
    let center = rng.uniform_in(p.center_frac_lo, p.center_frac_hi) * GROUP_LEN as f64;
    let env_frac = rng.uniform_in(p.envelope_frac_lo, p.envelope_frac_hi);
    let env_sigma = env_frac * GROUP_LEN as f64 / 4.0;

    let mut samples = Vec::with_capacity(GROUP_LEN);
    for n in 0..GROUP_LEN {
        let t = n as f64 / SAMPLE_RATE_HZ;
        let mut s = 0.0;
        for c in 0..k {
            s += comp_amp * (2.0 * std::f64::consts::PI * freqs[c] * t + phases[c]).sin();
        }
        let d = n as f64 - center;
        s *= (-d * d / (2.0 * env_sigma * env_sigma)).exp();
        samples.push(s + rng.normal_with(0.0, noise_sigma));
    }
    samples
}

fn generate_easy_noise(rng: &mut SeededRng, p: &EasyNoiseParams) -> Vec<f64> {
    (0..GROUP_LEN).map(|_| rng.normal_with(0.0, p.sigma)).collect()
}

fn generate_spurious(
    rng: &mut SeededRng,
    p: &SpuriousParams,
    motion_amp_hi: f64,
    noise_sigma: f64,
) -> Vec<f64> {
    let mut samples: Vec<f64> = (0..GROUP_LEN).map(|_| rng.normal_with(0.0, noise_sigma)).collect();
    let bursts = rng.int_in(p.bursts_lo as u64, p.bursts_hi as u64);
    for _ in 0..bursts {
        let len = rng.int_in(p.burst_len_lo as u64, p.burst_len_hi as u64) as usize;
        let start = rng.below((GROUP_LEN - len + 1) as u64) as usize;
        let sigma = rng.uniform_in(p.amp_factor_lo, p.amp_factor_hi) * motion_amp_hi;
        for s in &mut samples[start..start + len] {
            *s += rng.normal_with(0.0, sigma);
        }
    }
    samples
}

/// Generates the full signal dataset described by `spec`, in a
/// seed-determined shuffled order.
///
/// # Errors
/// Configuration error when the spec fails validation.
pub fn generate_signal_dataset(spec: &SignalDatasetSpec) -> Result<Vec<TimeSeriesGroup>> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let total = spec.n_motion + spec.n_easy_noise + spec.n_spurious_noise;
    let mut groups = Vec::with_capacity(total);
    for _ in 0..spec.n_motion {
        let s = generate_motion(&mut rng, &spec.motion, spec.easy_noise.sigma);
        groups.push(TimeSeriesGroup::new(s, SourceKind::Motion)?);
    }
    for _ in 0..spec.n_easy_noise {
        let s = generate_easy_noise(&mut rng, &spec.easy_noise);
        groups.push(TimeSeriesGroup::new(s, SourceKind::EasyNoise)?);
    }
    for _ in 0..spec.n_spurious_noise {
        let s = generate_spurious(&mut rng, &spec.spurious, spec.motion.amp_hi, spec.easy_noise.sigma);
        groups.push(TimeSeriesGroup::new(s, SourceKind::SpuriousNoise)?);
    }
    rng.shuffle(&mut groups);
    Ok(groups)
}

/// One point of the 2D toy dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyPoint2D {
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

/// Center of the toy class-1 Gaussian; class 0 sits at the origin. Both
/// have unit isotropic covariance, giving enough overlap that class
/// weighting visibly moves the threshold-0.5 operating point.
pub const TOY_CLASS1_CENTER: (f64, f64) = (2.5, 2.5);

/// Generates the two-Gaussian toy dataset in a seed-determined shuffled
/// order.
///
/// # Errors
/// Configuration error when either count is zero.
pub fn generate_toy_dataset(n_class0: usize, n_class1: usize, seed: u64) -> Result<Vec<ToyPoint2D>> {
    if n_class0 == 0 || n_class1 == 0 {
        return Err(Error::config("toy dataset needs at least one point per class"));
    }
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(n_class0 + n_class1);
    for _ in 0..n_class0 {
        points.push(ToyPoint2D {
            x: rng.normal(),
            y: rng.normal(),
            label: 0,
        });
    }
    for _ in 0..n_class1 {
        points.push(ToyPoint2D {
            x: TOY_CLASS1_CENTER.0 + rng.normal(),
            y: TOY_CLASS1_CENTER.1 + rng.normal(),
            label: 1,
        });
    }
    rng.shuffle(&mut points);
    Ok(points)
}

/// Mean power of a group after removing its mean — the quantity the
/// power-separation tests are stated over.
pub fn group_power(group: &TimeSeriesGroup) -> f64 {
    let samples = group.samples();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_bookkeeping_single_easy_group() {
        let spec = SignalDatasetSpec::new(0, 1, 0, 7);
        let data = generate_signal_dataset(&spec).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].label(), 0);
        assert_eq!(data[0].source(), SourceKind::EasyNoise);
    }

    #[test]
    fn determinism_same_spec_same_output() {
        let spec = SignalDatasetSpec::new(2, 3, 1, 1);
        let a = generate_signal_dataset(&spec).unwrap();
        let b = generate_signal_dataset(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_differs() {
        let a = generate_signal_dataset(&SignalDatasetSpec::new(1, 1, 1, 1)).unwrap();
        let b = generate_signal_dataset(&SignalDatasetSpec::new(1, 1, 1, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_total_is_config_error() {
        let err = generate_signal_dataset(&SignalDatasetSpec::new(0, 0, 0, 1)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn label_purity() {
        let spec = SignalDatasetSpec::new(5, 5, 5, 3);
        for g in generate_signal_dataset(&spec).unwrap() {
            assert_eq!(g.label() == 1, g.source() == SourceKind::Motion);
        }
    }

    #[test]
    fn counts_per_source_are_preserved() {
        let spec = SignalDatasetSpec::new(4, 7, 2, 9);
        let data = generate_signal_dataset(&spec).unwrap();
        let count = |k: SourceKind| data.iter().filter(|g| g.source() == k).count();
        assert_eq!(count(SourceKind::Motion), 4);
        assert_eq!(count(SourceKind::EasyNoise), 7);
        assert_eq!(count(SourceKind::SpuriousNoise), 2);
    }

    #[test]
    fn motion_vs_easy_power_separation() {
        let spec = SignalDatasetSpec::new(100, 100, 0, 11);
        let data = generate_signal_dataset(&spec).unwrap();
        let mean_power = |k: SourceKind| {
            let powers: Vec<f64> = data
                .iter()
                .filter(|g| g.source() == k)
                .map(group_power)
                .collect();
            powers.iter().sum::<f64>() / powers.len() as f64
        };
        let ratio = mean_power(SourceKind::Motion) / mean_power(SourceKind::EasyNoise);
        assert!(ratio >= 10.0, "power ratio {ratio} below 10");
    }

    #[test]
    fn motion_easy_power_overlap_below_five_percent() {
        let spec = SignalDatasetSpec::new(1000, 1000, 0, 13);
        let data = generate_signal_dataset(&spec).unwrap();
        let powers = |k: SourceKind| -> Vec<f64> {
            data.iter().filter(|g| g.source() == k).map(group_power).collect()
        };
        let motion = powers(SourceKind::Motion);
        let easy = powers(SourceKind::EasyNoise);
        let easy_max = easy.iter().cloned().fold(f64::MIN, f64::max);
        let motion_min = motion.iter().cloned().fold(f64::MAX, f64::min);
        let overlapping = motion.iter().filter(|&&p| p <= easy_max).count()
            + easy.iter().filter(|&&p| p >= motion_min).count();
        assert!(
            (overlapping as f64) < 0.05 * 2000.0,
            "{overlapping} of 2000 samples in the overlap region"
        );
    }

    #[test]
    fn toy_counts_and_labels() {
        let points = generate_toy_dataset(100, 10, 5).unwrap();
        assert_eq!(points.len(), 110);
        assert_eq!(points.iter().filter(|p| p.label == 0).count(), 100);
        let tiny = generate_toy_dataset(1, 1, 5).unwrap();
        assert_eq!(tiny.len(), 2);
        assert_eq!(tiny.iter().filter(|p| p.label == 1).count(), 1);
    }

    #[test]
    fn toy_zero_count_is_config_error() {
        assert!(generate_toy_dataset(0, 1, 1).is_err());
        assert!(generate_toy_dataset(1, 0, 1).is_err());
    }

    #[test]
    fn toy_determinism() {
        let a = generate_toy_dataset(50, 50, 123).unwrap();
        let b = generate_toy_dataset(50, 50, 123).unwrap();
        assert_eq!(a, b);
    }
}
