//! Mono 16-bit PCM WAV import/export.
//!
//! Quantization is plain rounding with no dither, so exports are
//! byte-deterministic. Writes go through a temporary file in the destination
//! directory and are renamed into place only on success.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

const PCM_SCALE: f64 = i16::MAX as f64;

pub fn write_wav(path: &Path, signal: &SignalBuffer) -> Result<()> {
    if let Some(i) = signal.samples().iter().position(|s| s.abs() > 1.0) {
        return Err(Error::Contract(format!(
            "sample {i} exceeds full scale ({:.4}); refusing to clip {}",
            signal.samples()[i],
            path.display()
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    {
        let mut writer =
            hound::WavWriter::new(BufWriter::new(tmp.as_file()), spec).map_err(wav_err)?;
        for &s in signal.samples() {
            writer
                .write_sample((s * PCM_SCALE).round() as i16)
                .map_err(wav_err)?;
        }
        writer.finalize().map_err(wav_err)?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads a mono 16-bit PCM file.
pub fn read_wav(path: &Path) -> Result<SignalBuffer> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::Argument(format!(
            "{}: expected mono 16-bit PCM, found {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    SignalBuffer::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::gen_riff;

    #[test]
    fn round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("riff.wav");
        let s = gen_riff(0.5, 44100, 196.0, 0.25, 3).unwrap().scaled(0.5);
        write_wav(&path, &s).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 44100);
        assert_eq!(back.len(), s.len());
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 0.5 / PCM_SCALE + 1e-12);
        }
        // Re-export of the quantized signal is lossless.
        let path2 = dir.path().join("again.wav");
        write_wav(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn refuses_over_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hot.wav");
        let s = SignalBuffer::new(vec![0.0, 1.2, 0.0], 44100).unwrap();
        assert!(matches!(write_wav(&path, &s), Err(Error::Contract(_))));
        assert!(!path.exists());
    }

    #[test]
    fn missing_file_is_a_wav_error() {
        let err = read_wav(Path::new("/nonexistent/x.wav")).unwrap_err();
        assert!(matches!(err, Error::Wav { .. }));
    }
}
