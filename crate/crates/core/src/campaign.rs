//! The measurement campaign: every (microphone, angle, distance, source SPL,
//! noise SPL) condition rendered, paired, and scored.
//!
//! Recording sets come in odd/even pairs per (microphone, angle): the odd set
//! holds noise-only captures and the even set the matching source-only
//! captures. One grid row is the SIR of one such pair at equal indices.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{db_sentinel, evaluate_pair, SirResult};
use crate::scene::{
    calibrated_capture, Directivity, Layout, Role, RoomSpec, SceneConfig, SourcePaths,
};
use crate::signal::{gen_pink_noise, gen_riff, LevelMapping, RiffParams, SignalBuffer};
use crate::spectral::StftParams;
use crate::wav;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str =
    "mic,angle_deg,distance_m,source_spl_db,noise_spl_db,sir_db,mask_density";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub riff: u64,
    pub pink: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { riff: 1, pink: 7 }
    }
}

/// Campaign configuration. Every field has a documented default, so `{}` is a
/// valid configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Source-microphone distances for on-axis sets, increasing.
    pub distances_m: Vec<f64>,
    /// Distances for angled sets, increasing.
    pub angled_distances_m: Vec<f64>,
    /// Target levels at the microphone point, in table order.
    pub source_spls_db: Vec<f64>,
    /// Interferer levels at the microphone point, in table order.
    pub noise_spls_db: Vec<f64>,
    pub mics: Vec<Directivity>,
    /// 0 runs on-axis sets; other angles run angled cardioid sets.
    pub angles_deg: Vec<f64>,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    /// Signal length used with `--fast`.
    pub fast_duration_s: f64,
    pub riff: RiffParams,
    pub seeds: Seeds,
    pub room: RoomSpec,
    pub layout: Layout,
    pub stft: StftParams,
    pub level_mapping: LevelMapping,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            distances_m: vec![
                0.03, 0.06, 0.09, 0.12, 0.15, 0.18, 0.21, 0.24, 0.27, 0.30, 0.65, 1.00,
            ],
            angled_distances_m: vec![0.03, 0.06, 0.09, 0.12, 0.15],
            source_spls_db: vec![100.0, 97.0, 94.0],
            noise_spls_db: vec![100.0, 97.0, 94.0, 91.0, 88.0],
            mics: vec![Directivity::Omni, Directivity::Cardioid],
            angles_deg: vec![0.0, 30.0, 45.0],
            sample_rate_hz: 44100,
            duration_s: 15.0,
            fast_duration_s: 2.0,
            riff: RiffParams::default(),
            seeds: Seeds::default(),
            room: RoomSpec::default(),
            layout: Layout::default(),
            stft: StftParams::default(),
            level_mapping: LevelMapping::default(),
        }
    }
}

fn check_increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{name} is empty")));
    }
    if v.iter()
        .any(|d| !(d.is_finite() && *d >= crate::scene::MIN_DISTANCE_M))
    {
        return Err(Error::Config(format!("{name} entries must be >= 0.01 m")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn check_levels(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!(
            "{name} must be a non-empty list of finite levels"
        )));
    }
    Ok(())
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_increasing("distances_m", &self.distances_m)?;
        check_increasing("angled_distances_m", &self.angled_distances_m)?;
        check_levels("source_spls_db", &self.source_spls_db)?;
        check_levels("noise_spls_db", &self.noise_spls_db)?;
        if self.mics.is_empty() {
            return Err(Error::Config("mics is empty".into()));
        }
        if self.angles_deg.is_empty()
            || self
                .angles_deg
                .iter()
                .any(|a| !(a.is_finite() && (0.0..=180.0).contains(a)))
        {
            return Err(Error::Config(
                "angles_deg must hold angles in [0, 180]".into(),
            ));
        }
        for d in [self.duration_s, self.fast_duration_s] {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!(
                    "durations must be positive, got {d}"
                )));
            }
        }
        if self.sample_rate_hz < crate::signal::MIN_SAMPLE_RATE {
            return Err(Error::Config(format!(
                "sample_rate_hz must be >= {}",
                crate::signal::MIN_SAMPLE_RATE
            )));
        }
        self.room.validate()?;
        self.layout.validate()?;
        self.stft
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.level_mapping.validate()?;
        Ok(())
    }

    /// (mic, angle) blocks in enumeration order.
    fn blocks(&self) -> Vec<(Directivity, f64)> {
        let mut out = Vec::new();
        for &mic in &self.mics {
            for &angle in &self.angles_deg {
                // Omni is only recorded on axis.
                if mic == Directivity::Omni && angle != 0.0 {
                    continue;
                }
                out.push((mic, angle));
            }
        }
        out
    }

    pub fn distances_for(&self, angle_deg: f64) -> &[f64] {
        if angle_deg == 0.0 {
            &self.distances_m
        } else {
            &self.angled_distances_m
        }
    }
}

/// One recording condition. Indices are 1-based positions in the tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub mic: Directivity,
    pub angle_deg: f64,
    pub distance_index: usize,
    pub source_spl_index: usize,
    pub noise_spl_index: usize,
    pub distance_m: f64,
    pub source_spl_db: f64,
    pub noise_spl_db: f64,
}

/// Ordered by (mic, angle, distance, source SPL, noise SPL).
pub fn enumerate_conditions(config: &CampaignConfig) -> Vec<Condition> {
    let mut out = Vec::new();
    for (mic, angle_deg) in config.blocks() {
        for (di, &distance_m) in config.distances_for(angle_deg).iter().enumerate() {
            for (si, &source_spl_db) in config.source_spls_db.iter().enumerate() {
                for (ni, &noise_spl_db) in config.noise_spls_db.iter().enumerate() {
                    out.push(Condition {
                        mic,
                        angle_deg,
                        distance_index: di + 1,
                        source_spl_index: si + 1,
                        noise_spl_index: ni + 1,
                        distance_m,
                        source_spl_db,
                        noise_spl_db,
                    });
                }
            }
        }
    }
    out
}

/// Names the odd (noise-only) and even (source-only) recording sets of one
/// (mic, angle) block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingSetPair {
    pub mic: Directivity,
    pub angle_deg: f64,
    pub noise_set: String,
    pub source_set: String,
}

pub fn recording_sets(config: &CampaignConfig) -> Vec<RecordingSetPair> {
    config
        .blocks()
        .into_iter()
        .enumerate()
        .map(|(i, (mic, angle_deg))| RecordingSetPair {
            mic,
            angle_deg,
            noise_set: format!("R{}", 2 * i + 1),
            source_set: format!("R{}", 2 * i + 2),
        })
        .collect()
}

/// Result of one condition, with the calibration readings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionOutcome {
    pub result: SirResult,
    pub source_leq_db: f64,
    pub noise_leq_db: f64,
    pub source_capture: SignalBuffer,
    pub noise_capture: SignalBuffer,
}

/// A base scene with both sources' distance-independent paths rendered once.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub base: SceneConfig,
    target: SourcePaths,
    noise: SourcePaths,
}

impl PreparedScene {
    pub fn new(base: SceneConfig) -> Result<Self> {
        base.validate()?;
        let target = SourcePaths::prepare(&base, Role::Target)?;
        let noise = SourcePaths::prepare(&base, Role::Noise)?;
        Ok(Self {
            base,
            target,
            noise,
        })
    }

    /// The base scene with the target moved to `distance_m`, the microphone
    /// rotated by `angle_deg`, and the pattern and levels replaced.
    pub fn scene_for(
        &self,
        mic: Directivity,
        distance_m: f64,
        angle_deg: f64,
        source_spl_db: f64,
        noise_spl_db: f64,
    ) -> Result<SceneConfig> {
        let mut scene = self.base.with_placement(distance_m, angle_deg)?;
        scene.mic.directivity = mic;
        scene.target.target_spl_db = source_spl_db;
        scene.noise.target_spl_db = noise_spl_db;
        Ok(scene)
    }

    /// Calibrates both sources independently, renders the two single-source
    /// captures, and scores the pair.
    pub fn evaluate(&self, scene: &SceneConfig, params: StftParams) -> Result<ConditionOutcome> {
        let source = calibrated_capture(scene, Role::Target, &self.target)?;
        let noise = calibrated_capture(scene, Role::Noise, &self.noise)?;
        let result = evaluate_pair(&source.capture, &noise.capture, params)?;
        Ok(ConditionOutcome {
            result,
            source_leq_db: source.metered_leq_db,
            noise_leq_db: noise.metered_leq_db,
            source_capture: source.capture,
            noise_capture: noise.capture,
        })
    }

    pub fn run(&self, cond: &Condition, params: StftParams) -> Result<ConditionOutcome> {
        let scene = self.scene_for(
            cond.mic,
            cond.distance_m,
            cond.angle_deg,
            cond.source_spl_db,
            cond.noise_spl_db,
        )?;
        self.evaluate(&scene, params)
    }
}

/// Evaluates one condition from scratch.
pub fn run_condition(
    cond: &Condition,
    base: &SceneConfig,
    params: StftParams,
) -> Result<SirResult> {
    Ok(PreparedScene::new(base.clone())?.run(cond, params)?.result)
}

/// Signals used by every condition of a campaign.
pub fn campaign_signals(
    config: &CampaignConfig,
    duration_s: f64,
) -> Result<(SignalBuffer, SignalBuffer)> {
    let riff = gen_riff(
        duration_s,
        config.sample_rate_hz,
        config.riff.fundamental_hz,
        config.riff.pattern_period_s,
        config.seeds.riff,
    )?;
    let pink = gen_pink_noise(duration_s, config.sample_rate_hz, config.seeds.pink)?;
    Ok((riff, pink))
}

/// The campaign's base scene (first distance, on axis, cardioid, first levels).
pub fn base_scene(config: &CampaignConfig, duration_s: f64) -> Result<SceneConfig> {
    let (riff, pink) = campaign_signals(config, duration_s)?;
    Ok(config.layout.scene(
        riff,
        pink,
        config.distances_m[0],
        0.0,
        Directivity::Cardioid,
        config.source_spls_db[0],
        config.noise_spls_db[0],
        config.room,
        config.level_mapping,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMetadata {
    pub schema_version: u32,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub fast: bool,
    pub seeds: Seeds,
    pub riff: RiffParams,
    pub stft: StftParams,
    pub room: RoomSpec,
    pub layout: Layout,
    pub level_mapping: LevelMapping,
    pub recording_sets: Vec<RecordingSetPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRow {
    pub condition: Condition,
    pub result: SirResult,
    /// Metered Leq of each source at the microphone point after calibration.
    pub source_leq_db: f64,
    pub noise_leq_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirGrid {
    pub metadata: GridMetadata,
    pub rows: Vec<GridRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSummary {
    pub finite: usize,
    pub infinite: usize,
    /// Mean over finite rows only.
    pub mean_sir_db: Option<f64>,
}

impl SirGrid {
    pub fn find(
        &self,
        mic: Directivity,
        angle_deg: f64,
        distance_index: usize,
        source_spl_index: usize,
        noise_spl_index: usize,
    ) -> Option<&GridRow> {
        self.rows.iter().find(|r| {
            let c = &r.condition;
            c.mic == mic
                && c.angle_deg == angle_deg
                && c.distance_index == distance_index
                && c.source_spl_index == source_spl_index
                && c.noise_spl_index == noise_spl_index
        })
    }

    /// Sentinel rows are counted, not averaged.
    pub fn summary(&self) -> GridSummary {
        let finite: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.result.sir_db)
            .filter(|v| v.is_finite())
            .collect();
        GridSummary {
            finite: finite.len(),
            infinite: self.rows.len() - finite.len(),
            mean_sir_db: (!finite.is_empty())
                .then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let c = &r.condition;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.mic,
                c.angle_deg,
                c.distance_m,
                c.source_spl_db,
                c.noise_spl_db,
                db_sentinel::format(r.result.sir_db),
                r.result.mask_density
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn export_grid(grid: &SirGrid, format: ExportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => grid.to_csv(),
        ExportFormat::Json => grid.to_json(),
    };
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub fast: bool,
    /// Directory receiving per-condition source/noise WAV captures.
    pub dump_wav: Option<PathBuf>,
}

fn wav_name(sets: &[RecordingSetPair], c: &Condition, role: Role) -> String {
    let pair = sets
        .iter()
        .find(|p| p.mic == c.mic && p.angle_deg == c.angle_deg)
        .expect("condition belongs to an enumerated block");
    let set = match role {
        Role::Target => &pair.source_set,
        Role::Noise => &pair.noise_set,
    };
    format!(
        "{set}_{}_{}deg_d{:02}_s{}_n{}.wav",
        c.mic, c.angle_deg, c.distance_index, c.source_spl_index, c.noise_spl_index
    )
}

/// Runs every condition. Conditions are evaluated in parallel; the grid is
/// assembled in enumeration order, so results do not depend on scheduling.
pub fn run_campaign(
    config: &CampaignConfig,
    options: &RunOptions,
    progress: &(dyn Fn(&GridRow) + Sync),
) -> Result<SirGrid> {
    config.validate()?;
    let duration_s = if options.fast {
        config.fast_duration_s
    } else {
        config.duration_s
    };
    let prepared = PreparedScene::new(base_scene(config, duration_s)?)?;
    let conditions = enumerate_conditions(config);
    let sets = recording_sets(config);

    let outcomes: Vec<(Condition, Result<GridRow>)> = conditions
        .par_iter()
        .map(|cond| {
            let row = prepared.run(cond, config.stft).and_then(|o| {
                if let Some(dir) = &options.dump_wav {
                    wav::write_wav(
                        &dir.join(wav_name(&sets, cond, Role::Target)),
                        &o.source_capture,
                    )?;
                    wav::write_wav(
                        &dir.join(wav_name(&sets, cond, Role::Noise)),
                        &o.noise_capture,
                    )?;
                }
                let row = GridRow {
                    condition: *cond,
                    result: o.result,
                    source_leq_db: o.source_leq_db,
                    noise_leq_db: o.noise_leq_db,
                };
                progress(&row);
                Ok(row)
            });
            (*cond, row)
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (cond, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(format!(
                "{} {}deg d={} m S={} dB N={} dB: {e}",
                cond.mic, cond.angle_deg, cond.distance_m, cond.source_spl_db, cond.noise_spl_db
            )),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Contract(format!(
            "{} of {} conditions failed:\n  {}",
            failures.len(),
            conditions.len(),
            failures.join("\n  ")
        )));
    }

    Ok(SirGrid {
        metadata: GridMetadata {
            schema_version: SCHEMA_VERSION,
            sample_rate_hz: config.sample_rate_hz,
            duration_s,
            fast: options.fast,
            seeds: config.seeds,
            riff: config.riff,
            stft: config.stft,
            room: config.room,
            layout: config.layout,
            level_mapping: config.level_mapping,
            recording_sets: sets,
        },
        rows,
    })
}
