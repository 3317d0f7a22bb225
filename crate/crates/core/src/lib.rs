//! Deterministic close-miking simulator.
//!
//! Renders what omni and cardioid microphones capture from a tonal target and
//! a pink-noise interferer in a parametrically reverberant room, then scores
//! each placement by the signal-to-interference ratio of a binary
//! time-frequency mask.

pub mod campaign;
pub mod error;
pub mod metrics;
pub mod placement;
pub mod scene;
pub mod signal;
pub mod spectral;
pub mod wav;

pub use error::{Error, ErrorKind, Result};
pub use metrics::{binary_mask, evaluate_pair, sir, sir_oracle, BinaryMask, SirResult};
pub use scene::{Directivity, Role, RoomSpec, SceneConfig, SceneFile};
pub use signal::{calibrate_gain, gen_pink_noise, gen_riff, leq, LevelMapping, SignalBuffer};
pub use spectral::{magnitude, stft, Spectrogram, StftParams, Window};
