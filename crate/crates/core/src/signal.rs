//! Test-signal generation and Leq level calibration.
//!
//! Two stimuli drive every simulated recording: a pink-noise interferer and a
//! repetitive harmonic "riff" standing in for an amplified guitar. Both are
//! normalized to [`NORMALIZED_RMS`] before any acoustic calibration is applied.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RMS (full-scale) of freshly generated signals.
pub const NORMALIZED_RMS: f64 = 0.25;

/// Lowest sample rate the generators accept.
pub const MIN_SAMPLE_RATE: u32 = 8000;

/// Pink-noise energy below this frequency is removed.
const PINK_LOW_CUTOFF_HZ: f64 = 20.0;

const RIFF_NOTES_PER_PATTERN: usize = 8;
const RIFF_HARMONICS: usize = 6;
const RIFF_MIN_HARMONICS: usize = 4;
const RIFF_MULTIPLIERS: [u32; 4] = [1, 2, 3, 4];
const RIFF_ATTACK_S: f64 = 0.005;
const RIFF_RELEASE_S: f64 = 0.01;
/// Amplitude decay time constant of a plucked note.
const RIFF_DECAY_S: f64 = 0.4;

/// A uniformly sampled mono waveform in full-scale units.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl SignalBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn rms(&self) -> f64 {
        self.mean_square().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }
}

/// Affine bridge between digital RMS level and acoustic dB SPL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelMapping {
    /// dB SPL assigned to a digital RMS of 1.0.
    pub full_scale_spl_db: f64,
}

impl Default for LevelMapping {
    fn default() -> Self {
        Self {
            full_scale_spl_db: 120.0,
        }
    }
}

impl LevelMapping {
    pub fn new(full_scale_spl_db: f64) -> Result<Self> {
        let m = Self { full_scale_spl_db };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.full_scale_spl_db.is_finite() && self.full_scale_spl_db > 0.0) {
            return Err(Error::Config(format!(
                "full_scale_spl_db must be finite and positive, got {}",
                self.full_scale_spl_db
            )));
        }
        Ok(())
    }
}

fn check_generator_args(duration_s: f64, sample_rate: u32) -> Result<usize> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Argument(format!(
            "duration must be positive, got {duration_s} s"
        )));
    }
    if sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::Argument(format!(
            "sample rate must be at least {MIN_SAMPLE_RATE} Hz, got {sample_rate}"
        )));
    }
    let len = (duration_s * sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::Argument(format!(
            "duration {duration_s} s yields no samples at {sample_rate} Hz"
        )));
    }
    Ok(len)
}

fn normalize_rms(samples: &mut [f64]) {
    let ms = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    if ms > 0.0 {
        let g = NORMALIZED_RMS / ms.sqrt();
        samples.iter_mut().for_each(|s| *s *= g);
    }
}

/// Pink noise shaped in the frequency domain: complex Gaussian bins weighted
/// by 1/sqrt(f) above 20 Hz, then one inverse DFT over the whole buffer.
pub fn gen_pink_noise(duration_s: f64, sample_rate: u32, seed: u64) -> Result<SignalBuffer> {
    let n = check_generator_args(duration_s, sample_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bin_hz = sample_rate as f64 / n as f64;

    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let f = k as f64 * bin_hz;
        if f < PINK_LOW_CUTOFF_HZ {
            continue;
        }
        let w = f.sqrt().recip();
        if 2 * k == n {
            // Nyquist bin of an even-length transform must be real.
            spectrum[k] = Complex64::new(re * w, 0.0);
        } else {
            spectrum[k] = Complex64::new(re * w, im * w);
            spectrum[n - k] = spectrum[k].conj();
        }
    }

    FftPlanner::<f64>::new()
        .plan_fft_inverse(n)
        .process(&mut spectrum);
    let mut samples: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    normalize_rms(&mut samples);
    Ok(SignalBuffer::from_parts_unchecked(samples, sample_rate))
}

/// Parameters of the harmonic riff surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiffParams {
    pub fundamental_hz: f64,
    pub pattern_period_s: f64,
}

impl Default for RiffParams {
    fn default() -> Self {
        Self {
            fundamental_hz: 196.0,
            pattern_period_s: 1.5,
        }
    }
}

/// Repetitive tonal riff. One pattern of eight notes is synthesized and tiled,
/// so the waveform repeats exactly every `round(pattern_period_s * sample_rate)`
/// samples. Every partial is an integer multiple of `fundamental_hz`.
pub fn gen_riff(
    duration_s: f64,
    sample_rate: u32,
    fundamental_hz: f64,
    pattern_period_s: f64,
    seed: u64,
) -> Result<SignalBuffer> {
    let n = check_generator_args(duration_s, sample_rate)?;
    if !(40.0..=2000.0).contains(&fundamental_hz) {
        return Err(Error::Argument(format!(
            "fundamental must lie in [40, 2000] Hz, got {fundamental_hz}"
        )));
    }
    if !(pattern_period_s >= 0.1 && pattern_period_s <= duration_s) {
        return Err(Error::Argument(format!(
            "pattern period must lie in [0.1 s, duration], got {pattern_period_s} s"
        )));
    }

    let sr = sample_rate as f64;
    let partial_limit = 0.45 * sr;
    let pattern_len = (pattern_period_s * sr).round() as usize;
    let mut allowed: Vec<u32> = RIFF_MULTIPLIERS
        .iter()
        .copied()
        .filter(|&m| RIFF_MIN_HARMONICS as f64 * m as f64 * fundamental_hz < partial_limit)
        .collect();
    if allowed.is_empty() {
        allowed.push(1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pattern = vec![0.0; pattern_len];
    let attack_len = (RIFF_ATTACK_S * sr).round().max(1.0);
    let release_len = (RIFF_RELEASE_S * sr).round().max(1.0);
    let decay = (RIFF_DECAY_S * sr).recip();

    for note in 0..RIFF_NOTES_PER_PATTERN {
        let start = note * pattern_len / RIFF_NOTES_PER_PATTERN;
        let end = (note + 1) * pattern_len / RIFF_NOTES_PER_PATTERN;
        let len = end - start;
        // The first note always sounds the root.
        let mult = if note == 0 {
            1
        } else {
            allowed[rng.random_range(0..allowed.len())]
        };
        let velocity: f64 = rng.random_range(0.6..1.0);
        let phases: [f64; RIFF_HARMONICS] =
            std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));

        for (i, out) in pattern[start..end].iter_mut().enumerate() {
            let t = i as f64 / sr;
            let attack = (i as f64 / attack_len).min(1.0);
            let release = ((len - i) as f64 / release_len).min(1.0);
            let env = velocity
                * (0.5 - 0.5 * (PI * attack).cos())
                * (0.5 - 0.5 * (PI * release).cos())
                * (-(i as f64) * decay).exp();
            let mut acc = 0.0;
            for (h, phase) in phases.iter().enumerate() {
                let f = mult as f64 * (h + 1) as f64 * fundamental_hz;
                if f >= partial_limit {
                    break;
                }
                acc += (2.0 * PI * f * t + phase).sin() / (h + 1) as f64;
            }
            *out = env * acc;
        }
    }

    let mut samples: Vec<f64> = pattern.iter().copied().cycle().take(n).collect();
    normalize_rms(&mut samples);
    Ok(SignalBuffer::from_parts_unchecked(samples, sample_rate))
}

/// Equivalent continuous level over the whole buffer, unweighted.
///
/// An all-zero buffer reports `f64::NEG_INFINITY`.
pub fn leq(signal: &SignalBuffer, mapping: LevelMapping) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::Argument("Leq of an empty signal".into()));
    }
    let ms = signal.mean_square();
    if ms == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(mapping.full_scale_spl_db + 10.0 * ms.log10())
}

/// Linear gain bringing `signal` to `target_db` Leq.
pub fn calibrate_gain(signal: &SignalBuffer, target_db: f64, mapping: LevelMapping) -> Result<f64> {
    if !target_db.is_finite() {
        return Err(Error::Argument(format!(
            "target level {target_db} dB is not finite"
        )));
    }
    let current = leq(signal, mapping)?;
    if !current.is_finite() {
        return Err(Error::Calibration("signal has zero energy".into()));
    }
    Ok(10f64.powf((target_db - current) / 20.0))
}
