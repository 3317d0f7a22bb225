//! Short-time Fourier analysis.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic (DFT-even) coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            other => Err(Error::Argument(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub frame_length: usize,
    pub hop_length: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            frame_length: 2048,
            hop_length: 1024,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    pub fn new(frame_length: usize, hop_length: usize, window: Window) -> Result<Self> {
        let p = Self {
            frame_length,
            hop_length,
            window,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_length.is_power_of_two() {
            return Err(Error::Argument(format!(
                "frame length must be a power of two, got {}",
                self.frame_length
            )));
        }
        if self.hop_length == 0 || self.hop_length > self.frame_length {
            return Err(Error::Argument(format!(
                "hop length must lie in [1, {}], got {}",
                self.frame_length, self.hop_length
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// Number of full frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            1 + (len - self.frame_length) / self.hop_length
        }
    }
}

/// One-sided complex STFT, indexed `(frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.params.frame_length as f64
    }

    /// Debug dump with columns `frame,bin,real,imag`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "frame,bin,real,imag").map_err(io)?;
        for ((m, k), c) in self.bins.indexed_iter() {
            writeln!(w, "{m},{k},{},{}", c.re, c.im).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Windowed DFT of every full frame; a trailing partial frame is dropped.
pub fn stft(signal: &SignalBuffer, params: StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let n = params.frame_length;
    if signal.len() < n {
        return Err(Error::Argument(format!(
            "signal of {} samples is shorter than one {n}-sample frame",
            signal.len()
        )));
    }
    let frames = params.frame_count(signal.len());
    let bins = params.bin_count();
    let window = params.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let mut out = Array2::<Complex64>::zeros((frames, bins));
    let x = signal.samples();

    for (m, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = m * params.hop_length;
        for ((b, &s), &w) in buf.iter_mut().zip(&x[start..start + n]).zip(&window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (o, &b) in row.iter_mut().zip(&buf[..bins]) {
            *o = b;
        }
    }

    Ok(Spectrogram {
        bins: out,
        params,
        sample_rate: signal.sample_rate(),
    })
}

pub fn magnitude(spec: &Spectrogram) -> Array2<f64> {
    spec.bins.mapv(|c| c.norm())
}
