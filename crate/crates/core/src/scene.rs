//! Rendering of what a microphone captures from one active source.
//!
//! Each capture is the sum of a free-field direct path (inverse-distance law,
//! scaled by the microphone's polar pattern) and, in a reverberant room, a
//! statistical diffuse tail. Sources are calibrated the way a sound level meter
//! would see them: omnidirectional, at the microphone point, total field.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, calibrate_gain, leq, LevelMapping, RiffParams, SignalBuffer};
use crate::wav;

/// Closest source-microphone distance the inverse-distance law accepts.
pub const MIN_DISTANCE_M: f64 = 0.01;

/// Amplitude decay constant of the diffuse tail: ln(10^3), i.e. -60 dB at t = rt60.
const DECAY_CONSTANT: f64 = 6.91;

/// Sabine critical-distance coefficient, r_c = 0.057 sqrt(V / RT60).
const CRITICAL_DISTANCE_COEFF: f64 = 0.057;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directivity {
    Omni,
    Cardioid,
}

impl Directivity {
    /// On-axis to diffuse-field sensitivity ratio (energy).
    pub fn directivity_factor(self) -> f64 {
        match self {
            Directivity::Omni => 1.0,
            Directivity::Cardioid => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Directivity::Omni => "omni",
            Directivity::Cardioid => "cardioid",
        }
    }
}

impl std::fmt::Display for Directivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Directivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omni" => Ok(Directivity::Omni),
            "cardioid" => Ok(Directivity::Cardioid),
            other => Err(Error::Argument(format!("unknown directivity '{other}'"))),
        }
    }
}

pub fn directivity_gain(d: Directivity, incidence_deg: f64) -> f64 {
    match d {
        Directivity::Omni => 1.0,
        Directivity::Cardioid => ((1.0 + incidence_deg.to_radians().cos()) / 2.0).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Noise,
}

impl Role {
    fn stream(self) -> u64 {
        match self {
            Role::Target => 1,
            Role::Noise => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub signal: SignalBuffer,
    pub position: [f64; 2],
    /// Leq at the microphone point, all paths included.
    pub target_spl_db: f64,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicSpec {
    #[serde(rename = "position_m")]
    pub position: [f64; 2],
    /// Rotation of the microphone axis away from the noise source, measured
    /// from the line joining the microphone to the target.
    pub axis_angle_deg: f64,
    pub directivity: Directivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Broadband reverberation time; 0 selects free field.
    pub rt60_s: f64,
    pub volume_m3: f64,
    pub reverb_seed: u64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            rt60_s: 1.2,
            volume_m3: 3000.0,
            reverb_seed: 11,
        }
    }
}

impl RoomSpec {
    pub fn free_field() -> Self {
        Self {
            rt60_s: 0.0,
            ..Self::default()
        }
    }

    pub fn is_free_field(&self) -> bool {
        self.rt60_s == 0.0
    }

    pub fn critical_distance_m(&self) -> f64 {
        CRITICAL_DISTANCE_COEFF * (self.volume_m3 / self.rt60_s).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rt60_s.is_finite() && self.rt60_s >= 0.0) {
            return Err(Error::Config(format!(
                "rt60_s must be >= 0, got {}",
                self.rt60_s
            )));
        }
        if !(self.volume_m3.is_finite() && self.volume_m3 > 0.0) {
            return Err(Error::Config(format!(
                "volume_m3 must be > 0, got {}",
                self.volume_m3
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub target: SourceSpec,
    pub noise: SourceSpec,
    pub mic: MicSpec,
    pub room: RoomSpec,
    pub sample_rate: u32,
    pub ref_distance_m: f64,
    pub mapping: LevelMapping,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

impl SceneConfig {
    pub fn source(&self, role: Role) -> &SourceSpec {
        match role {
            Role::Target => &self.target,
            Role::Noise => &self.noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.mapping.validate()?;
        if !(self.ref_distance_m.is_finite() && self.ref_distance_m > 0.0) {
            return Err(Error::Config(format!(
                "ref_distance_m must be > 0, got {}",
                self.ref_distance_m
            )));
        }
        let finite = |p: [f64; 2]| p.iter().all(|v| v.is_finite());
        if !finite(self.mic.position) || !self.mic.axis_angle_deg.is_finite() {
            return Err(Error::Config("microphone geometry must be finite".into()));
        }
        for role in [Role::Target, Role::Noise] {
            let src = self.source(role);
            if src.role != role {
                return Err(Error::Config(format!(
                    "{role:?} slot holds a {:?} source",
                    src.role
                )));
            }
            if !finite(src.position) || !src.target_spl_db.is_finite() {
                return Err(Error::Config(format!(
                    "{role:?} geometry/level must be finite"
                )));
            }
            if src.signal.sample_rate() != self.sample_rate {
                return Err(Error::Config(format!(
                    "{role:?} signal is at {} Hz, scene at {} Hz",
                    src.signal.sample_rate(),
                    self.sample_rate
                )));
            }
            if self.distance_m(role) < MIN_DISTANCE_M {
                return Err(Error::Singularity {
                    distance_m: self.distance_m(role),
                });
            }
        }
        if self.target.signal.len() != self.noise.signal.len() {
            return Err(Error::Config(format!(
                "target and noise signals differ in length ({} vs {})",
                self.target.signal.len(),
                self.noise.signal.len()
            )));
        }
        Ok(())
    }

    pub fn distance_m(&self, role: Role) -> f64 {
        norm(sub(self.source(role).position, self.mic.position))
    }

    /// Direction (radians) the microphone axis points along.
    fn axis_bearing(&self) -> f64 {
        let t = sub(self.target.position, self.mic.position);
        let n = sub(self.noise.position, self.mic.position);
        let bearing = t[1].atan2(t[0]);
        // Rotate away from the noise side; clockwise when collinear.
        let cross = t[0] * n[1] - t[1] * n[0];
        let sense = if cross >= 0.0 { -1.0 } else { 1.0 };
        bearing + sense * self.mic.axis_angle_deg.to_radians()
    }

    /// Angle in [0, 180] degrees between the microphone axis and the source.
    pub fn incidence_deg(&self, role: Role) -> f64 {
        let v = sub(self.source(role).position, self.mic.position);
        let diff = v[1].atan2(v[0]) - self.axis_bearing();
        diff.sin().atan2(diff.cos()).abs().to_degrees()
    }

    /// Moves the target along its current bearing to `distance_m` from the
    /// microphone and sets the axis rotation.
    pub fn with_placement(&self, distance_m: f64, axis_angle_deg: f64) -> Result<SceneConfig> {
        let t = sub(self.target.position, self.mic.position);
        let r = norm(t);
        if r == 0.0 {
            return Err(Error::Config("target coincides with the microphone".into()));
        }
        let mut scene = self.clone();
        scene.target.position = [
            self.mic.position[0] + t[0] / r * distance_m,
            self.mic.position[1] + t[1] / r * distance_m,
        ];
        scene.mic.axis_angle_deg = axis_angle_deg;
        Ok(scene)
    }
}

/// Noise-source placement relative to the microphone, in the layout used by
/// the campaign: target on the +x axis, noise counter-clockwise from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub noise_distance_m: f64,
    /// Noise incidence on the microphone axis at zero rotation.
    pub noise_incidence_deg: f64,
    pub ref_distance_m: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            noise_distance_m: 2.0,
            noise_incidence_deg: 60.0,
            ref_distance_m: 1.0,
        }
    }
}

impl Layout {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_distance_m.is_finite() && self.noise_distance_m >= MIN_DISTANCE_M) {
            return Err(Error::Config(format!(
                "noise_distance_m must be >= {MIN_DISTANCE_M}, got {}",
                self.noise_distance_m
            )));
        }
        if !(self.noise_incidence_deg.is_finite()
            && self.noise_incidence_deg > 0.0
            && self.noise_incidence_deg < 180.0)
        {
            return Err(Error::Config(format!(
                "noise_incidence_deg must lie in (0, 180), got {}",
                self.noise_incidence_deg
            )));
        }
        if !(self.ref_distance_m.is_finite() && self.ref_distance_m > 0.0) {
            return Err(Error::Config("ref_distance_m must be > 0".into()));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn scene(
        &self,
        target_signal: SignalBuffer,
        noise_signal: SignalBuffer,
        distance_m: f64,
        axis_angle_deg: f64,
        directivity: Directivity,
        source_spl_db: f64,
        noise_spl_db: f64,
        room: RoomSpec,
        mapping: LevelMapping,
    ) -> SceneConfig {
        let sample_rate = target_signal.sample_rate();
        let a = self.noise_incidence_deg.to_radians();
        SceneConfig {
            target: SourceSpec {
                signal: target_signal,
                position: [distance_m, 0.0],
                target_spl_db: source_spl_db,
                role: Role::Target,
            },
            noise: SourceSpec {
                signal: noise_signal,
                position: [
                    self.noise_distance_m * a.cos(),
                    self.noise_distance_m * a.sin(),
                ],
                target_spl_db: noise_spl_db,
                role: Role::Noise,
            },
            mic: MicSpec {
                position: [0.0, 0.0],
                axis_angle_deg,
                directivity,
            },
            room,
            sample_rate,
            ref_distance_m: self.ref_distance_m,
            mapping,
        }
    }
}

/// Inverse-distance law, no propagation delay.
pub fn propagate_direct(
    signal: &SignalBuffer,
    distance_m: f64,
    ref_distance_m: f64,
) -> Result<SignalBuffer> {
    if distance_m.is_nan() || distance_m < MIN_DISTANCE_M {
        return Err(Error::Singularity { distance_m });
    }
    if !(ref_distance_m > 0.0 && ref_distance_m.is_finite()) {
        return Err(Error::Argument(format!(
            "reference distance must be positive, got {ref_distance_m}"
        )));
    }
    Ok(signal.scaled(ref_distance_m / distance_m))
}

fn diffuse_impulse_response(room: &RoomSpec, sample_rate: u32, role: Role) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(room.reverb_seed);
    rng.set_stream(role.stream());
    let len = ((room.rt60_s * sample_rate as f64).round() as usize).max(1);
    let k = DECAY_CONSTANT / (room.rt60_s * sample_rate as f64);
    (0..len)
        .map(|n| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (-k * n as f64).exp()
        })
        .collect()
}

/// Linear convolution truncated to the length of `x`.
fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let size = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut out = vec![Complex64::default(); size];
        for (o, &s) in out.iter_mut().zip(v) {
            o.re = s;
        }
        out
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let norm = 1.0 / size as f64;
    a[..x.len()].iter().map(|c| c.re * norm).collect()
}

/// Diffuse reverberant tail captured from `signal` at `distance_m`.
///
/// Energy is set so that, for an omni capture, direct-to-reverberant energy
/// at distance r equals (r_c / r)^2; a directional capture divides the tail
/// energy by the pattern's directivity factor. The noise shaping comes from
/// `room.reverb_seed` on a per-role stream.
pub fn render_reverb_tail(
    signal: &SignalBuffer,
    room: &RoomSpec,
    distance_m: f64,
    ref_distance_m: f64,
    directivity: Directivity,
    role: Role,
) -> Result<SignalBuffer> {
    room.validate()?;
    if room.is_free_field() {
        return Err(Error::Contract(
            "reverb tail requested for a free-field room (rt60 = 0)".into(),
        ));
    }
    if signal.is_empty() {
        return Ok(signal.clone());
    }
    let direct = propagate_direct(signal, distance_m, ref_distance_m)?;
    let rc = room.critical_distance_m();
    let tail_energy =
        direct.energy() * (distance_m / rc).powi(2) / directivity.directivity_factor();

    let h = diffuse_impulse_response(room, signal.sample_rate(), role);
    let mut tail = convolve_truncated(signal.samples(), &h);
    let raw: f64 = tail.iter().map(|v| v * v).sum();
    if raw > 0.0 {
        let g = (tail_energy / raw).sqrt();
        tail.iter_mut().for_each(|v| *v *= g);
    }
    Ok(SignalBuffer::from_parts_unchecked(
        tail,
        signal.sample_rate(),
    ))
}

/// The distance-independent parts of a source's capture, so one scene's
/// renderings can be recombined cheaply across placements and patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePaths {
    dry: SignalBuffer,
    /// Omni diffuse tail; independent of distance by construction.
    diffuse: Option<SignalBuffer>,
    ref_distance_m: f64,
}

impl SourcePaths {
    pub fn prepare(scene: &SceneConfig, role: Role) -> Result<Self> {
        let src = scene.source(role);
        let diffuse = if scene.room.is_free_field() {
            None
        } else {
            Some(render_reverb_tail(
                &src.signal,
                &scene.room,
                scene.ref_distance_m,
                scene.ref_distance_m,
                Directivity::Omni,
                role,
            )?)
        };
        Ok(Self {
            dry: src.signal.clone(),
            diffuse,
            ref_distance_m: scene.ref_distance_m,
        })
    }

    /// Unit-gain capture through `directivity` at the given distance and incidence.
    pub fn capture(
        &self,
        distance_m: f64,
        incidence_deg: f64,
        directivity: Directivity,
    ) -> Result<SignalBuffer> {
        if distance_m.is_nan() || distance_m < MIN_DISTANCE_M {
            return Err(Error::Singularity { distance_m });
        }
        let direct_gain =
            directivity_gain(directivity, incidence_deg) * self.ref_distance_m / distance_m;
        let samples = match &self.diffuse {
            None => self.dry.samples().iter().map(|s| direct_gain * s).collect(),
            Some(tail) => {
                let tail_gain = directivity.directivity_factor().sqrt().recip();
                self.dry
                    .samples()
                    .iter()
                    .zip(tail.samples())
                    .map(|(s, t)| direct_gain * s + tail_gain * t)
                    .collect()
            }
        };
        Ok(SignalBuffer::from_parts_unchecked(
            samples,
            self.dry.sample_rate(),
        ))
    }
}

/// Unit-gain capture of one source through the scene's microphone.
pub fn render_capture(scene: &SceneConfig, role: Role) -> Result<SignalBuffer> {
    scene.validate()?;
    SourcePaths::prepare(scene, role)?.capture(
        scene.distance_m(role),
        scene.incidence_deg(role),
        scene.mic.directivity,
    )
}

/// Unit-gain capture of one source as an omni level meter at the microphone
/// point sees it.
pub fn render_meter(scene: &SceneConfig, role: Role) -> Result<SignalBuffer> {
    scene.validate()?;
    SourcePaths::prepare(scene, role)?.capture(scene.distance_m(role), 0.0, Directivity::Omni)
}

/// Gain that brings the source's metered Leq at the microphone point to its
/// `target_spl_db`. Only the selected source is active.
pub fn calibrate_source(scene: &SceneConfig, role: Role) -> Result<f64> {
    let metered = render_meter(scene, role)?;
    calibrate_gain(&metered, scene.source(role).target_spl_db, scene.mapping).map_err(|e| match e {
        Error::Calibration(msg) => Error::Calibration(format!("{role:?} source: {msg}")),
        other => other,
    })
}

/// A source rendered at its calibrated level.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedCapture {
    pub gain: f64,
    /// Omni meter reading after calibration, dB SPL.
    pub metered_leq_db: f64,
    pub capture: SignalBuffer,
}

/// Calibrates and renders one source from prepared paths. Every public
/// rendering route ends here so cached and fresh evaluations agree exactly.
pub fn calibrated_capture(
    scene: &SceneConfig,
    role: Role,
    paths: &SourcePaths,
) -> Result<CalibratedCapture> {
    let r = scene.distance_m(role);
    let metered = paths.capture(r, 0.0, Directivity::Omni)?;
    let gain =
        calibrate_gain(&metered, scene.source(role).target_spl_db, scene.mapping).map_err(|e| {
            match e {
                Error::Calibration(msg) => Error::Calibration(format!("{role:?} source: {msg}")),
                other => other,
            }
        })?;
    let metered_leq_db = leq(&metered.scaled(gain), scene.mapping)?;
    let capture = paths
        .capture(r, scene.incidence_deg(role), scene.mic.directivity)?
        .scaled(gain);
    Ok(CalibratedCapture {
        gain,
        metered_leq_db,
        capture,
    })
}

// ---------------------------------------------------------------------------
// Scene description files
// ---------------------------------------------------------------------------

/// How a source signal is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SignalSpec {
    Riff {
        fundamental_hz: f64,
        pattern_period_s: f64,
        seed: u64,
    },
    Pink {
        seed: u64,
    },
    /// Mono 16-bit PCM file; relative paths resolve against the scene file.
    Wav {
        path: PathBuf,
    },
}

impl SignalSpec {
    pub fn riff(params: RiffParams, seed: u64) -> Self {
        SignalSpec::Riff {
            fundamental_hz: params.fundamental_hz,
            pattern_period_s: params.pattern_period_s,
            seed,
        }
    }

    pub fn generate(
        &self,
        duration_s: f64,
        sample_rate: u32,
        base_dir: &Path,
    ) -> Result<SignalBuffer> {
        match self {
            SignalSpec::Riff {
                fundamental_hz,
                pattern_period_s,
                seed,
            } => signal::gen_riff(
                duration_s,
                sample_rate,
                *fundamental_hz,
                *pattern_period_s,
                *seed,
            ),
            SignalSpec::Pink { seed } => signal::gen_pink_noise(duration_s, sample_rate, *seed),
            SignalSpec::Wav { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let s = wav::read_wav(&full)?;
                if s.sample_rate() != sample_rate {
                    return Err(Error::Config(format!(
                        "{}: sample rate {} Hz differs from scene rate {sample_rate} Hz",
                        full.display(),
                        s.sample_rate()
                    )));
                }
                let n = (duration_s * sample_rate as f64).round() as usize;
                if s.len() < n {
                    return Err(Error::Config(format!(
                        "{}: {} samples, scene needs {n}",
                        full.display(),
                        s.len()
                    )));
                }
                let mut v = s.into_samples();
                v.truncate(n);
                SignalBuffer::new(v, sample_rate)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub signal: SignalSpec,
    pub position_m: [f64; 2],
    pub spl_db: f64,
}

/// JSON scene description mirroring [`SceneConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    #[serde(default = "default_ref_distance")]
    pub ref_distance_m: f64,
    #[serde(default)]
    pub level_mapping: LevelMapping,
    pub target: SourceFile,
    pub noise: SourceFile,
    pub mic: MicSpec,
    pub room: RoomSpec,
}

fn default_ref_distance() -> f64 {
    1.0
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Generates the signals and assembles a validated scene. `base_dir`
    /// anchors relative WAV paths.
    pub fn build(&self, base_dir: &Path) -> Result<SceneConfig> {
        let target = self
            .target
            .signal
            .generate(self.duration_s, self.sample_rate_hz, base_dir)?;
        let noise = self
            .noise
            .signal
            .generate(self.duration_s, self.sample_rate_hz, base_dir)?;
        let scene = SceneConfig {
            target: SourceSpec {
                signal: target,
                position: self.target.position_m,
                target_spl_db: self.target.spl_db,
                role: Role::Target,
            },
            noise: SourceSpec {
                signal: noise,
                position: self.noise.position_m,
                target_spl_db: self.noise.spl_db,
                role: Role::Noise,
            },
            mic: self.mic,
            room: self.room,
            sample_rate: self.sample_rate_hz,
            ref_distance_m: self.ref_distance_m,
            mapping: self.level_mapping,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// The default lateral-noise layout with the target 0.12 m away.
    pub fn example() -> Self {
        let layout = Layout::default();
        let a = layout.noise_incidence_deg.to_radians();
        SceneFile {
            sample_rate_hz: 44100,
            duration_s: 2.0,
            ref_distance_m: layout.ref_distance_m,
            level_mapping: LevelMapping::default(),
            target: SourceFile {
                signal: SignalSpec::riff(RiffParams::default(), 1),
                position_m: [0.12, 0.0],
                spl_db: 100.0,
            },
            noise: SourceFile {
                signal: SignalSpec::Pink { seed: 7 },
                position_m: [
                    layout.noise_distance_m * a.cos(),
                    layout.noise_distance_m * a.sin(),
                ],
                spl_db: 94.0,
            },
            mic: MicSpec {
                position: [0.0, 0.0],
                axis_angle_deg: 0.0,
                directivity: Directivity::Cardioid,
            },
            room: RoomSpec::default(),
        }
    }
}
