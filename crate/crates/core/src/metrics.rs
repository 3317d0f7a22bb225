//! Binary time-frequency masking and signal-to-interference ratio.
//!
//! The mask keeps every bin where the target magnitude is at least the
//! interferer magnitude (ties go to the target). SIR is the dB ratio of the
//! squared Frobenius norms of the masked target and masked interferer.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;
use crate::spectral::{magnitude, stft, StftParams};

/// 0/1 mask with the dimensions of the magnitude pair it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    entries: Array2<u8>,
}

impl BinaryMask {
    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn ones(&self) -> usize {
        self.entries.iter().filter(|&&e| e == 1).count()
    }

    pub fn density(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.ones() as f64 / self.entries.len() as f64
        }
    }

    /// Strict complement: the interferer-side mask.
    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            entries: self.entries.mapv(|e| 1 - e),
        }
    }

    /// `self ⊙ values`
    pub fn apply(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        if values.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: values.dim(),
            });
        }
        Ok(Zip::from(&self.entries)
            .and(values)
            .map_collect(|&m, &v| if m == 1 { v } else { 0.0 }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirResult {
    #[serde(with = "db_sentinel")]
    pub sir_db: f64,
    pub masked_source_energy: f64,
    pub masked_noise_energy: f64,
    pub mask_density: f64,
}

impl SirResult {
    pub fn is_infinite(&self) -> bool {
        self.sir_db.is_infinite()
    }
}

/// Serializes infinite dB values as the strings `"inf"` / `"-inf"`.
pub mod db_sentinel {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn format(v: f64) -> String {
        if v == f64::INFINITY {
            "inf".to_string()
        } else if v == f64::NEG_INFINITY {
            "-inf".to_string()
        } else {
            format!("{v}")
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(&format(*v))
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

fn check_dims(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

pub fn binary_mask(source_mag: &Array2<f64>, noise_mag: &Array2<f64>) -> Result<BinaryMask> {
    check_dims(source_mag, noise_mag)?;
    let entries = Zip::from(source_mag)
        .and(noise_mag)
        .map_collect(|&s, &n| u8::from(s >= n));
    Ok(BinaryMask { entries })
}

pub fn sir(source_mag: &Array2<f64>, noise_mag: &Array2<f64>) -> Result<SirResult> {
    let mask = binary_mask(source_mag, noise_mag)?;
    if source_mag.iter().all(|&s| s == 0.0) {
        return Err(Error::UndefinedSir);
    }
    let masked_s = mask.apply(source_mag)?;
    let masked_n = mask.apply(noise_mag)?;
    let es: f64 = masked_s.iter().map(|v| v * v).sum();
    let en: f64 = masked_n.iter().map(|v| v * v).sum();
    finish(es, en, mask.density())
}

fn finish(es: f64, en: f64, mask_density: f64) -> Result<SirResult> {
    let sir_db = match (es > 0.0, en > 0.0) {
        (true, true) => 10.0 * (es / en).log10(),
        (true, false) => f64::INFINITY,
        // Only 0 = 0 ties were kept: the ratio carries no information.
        (false, _) => return Err(Error::UndefinedSir),
    };
    Ok(SirResult {
        sir_db,
        masked_source_energy: es,
        masked_noise_energy: en,
        mask_density,
    })
}

/// Independent per-bin re-derivation of [`sir`], used to cross-check it.
pub fn sir_oracle(source_mag: &Array2<f64>, noise_mag: &Array2<f64>) -> Result<SirResult> {
    let (rows, cols) = source_mag.dim();
    if noise_mag.dim() != (rows, cols) {
        return Err(Error::DimensionMismatch {
            left: (rows, cols),
            right: noise_mag.dim(),
        });
    }
    let mut any_source = false;
    let mut es = 0.0;
    let mut en = 0.0;
    let mut kept = 0usize;
    for m in 0..rows {
        for k in 0..cols {
            let s = source_mag[[m, k]];
            let n = noise_mag[[m, k]];
            if s != 0.0 {
                any_source = true;
            }
            if s < n {
                continue;
            }
            kept += 1;
            es += s * s;
            en += n * n;
        }
    }
    if !any_source || es == 0.0 {
        return Err(Error::UndefinedSir);
    }
    let sir_db = if en == 0.0 {
        f64::INFINITY
    } else {
        10.0 * es.log10() - 10.0 * en.log10()
    };
    Ok(SirResult {
        sir_db,
        masked_source_energy: es,
        masked_noise_energy: en,
        mask_density: kept as f64 / (rows * cols) as f64,
    })
}

/// SIR of a separately captured (target-only, interferer-only) pair.
pub fn evaluate_pair(
    source_only: &SignalBuffer,
    noise_only: &SignalBuffer,
    params: StftParams,
) -> Result<SirResult> {
    if source_only.len() != noise_only.len() {
        return Err(Error::Argument(format!(
            "pair length mismatch: {} vs {} samples",
            source_only.len(),
            noise_only.len()
        )));
    }
    if source_only.sample_rate() != noise_only.sample_rate() {
        return Err(Error::Argument(format!(
            "pair sample-rate mismatch: {} vs {} Hz",
            source_only.sample_rate(),
            noise_only.sample_rate()
        )));
    }
    let s = magnitude(&stft(source_only, params)?);
    let n = magnitude(&stft(noise_only, params)?);
    sir(&s, &n)
}
