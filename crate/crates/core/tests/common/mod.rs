//! Welch-averaged periodogram shared by the spectral oracles.

#![allow(dead_code)]

use std::f64::consts::PI;

use closemic::SignalBuffer;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub const OCTAVE_CENTRES_HZ: [f64; 7] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

/// Mean power per bin over Hann-windowed frames with 50 % overlap.
pub fn welch(signal: &SignalBuffer, frame: usize) -> (Vec<f64>, usize) {
    let x = signal.samples();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame);
    let w: Vec<f64> = (0..frame)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / frame as f64).cos())
        .collect();
    let mut acc = vec![0.0; frame / 2 + 1];
    let mut frames = 0;
    let mut start = 0;
    while start + frame <= x.len() {
        let mut buf: Vec<Complex64> = x[start..start + frame]
            .iter()
            .zip(&w)
            .map(|(s, w)| Complex64::new(s * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        frames += 1;
        start += frame / 2;
    }
    acc.iter_mut().for_each(|a| *a /= frames as f64);
    (acc, frames)
}

/// Mean per-bin power in the octave band centred on `fc`.
pub fn band_density(psd: &[f64], bin_hz: f64, fc: f64) -> f64 {
    let lo = fc / 2f64.sqrt();
    let hi = fc * 2f64.sqrt();
    let bins: Vec<f64> = psd
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * bin_hz;
            f >= lo && f < hi
        })
        .map(|(_, p)| *p)
        .collect();
    bins.iter().sum::<f64>() / bins.len() as f64
}

/// Least-squares slope of band density (dB) against octave number.
pub fn slope_db_per_octave(psd: &[f64], bin_hz: f64) -> f64 {
    let pts: Vec<(f64, f64)> = OCTAVE_CENTRES_HZ
        .iter()
        .map(|&fc: &f64| (fc.log2(), 10.0 * band_density(psd, bin_hz, fc).log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
