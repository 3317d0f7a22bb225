//! Search for the microphone distance and rotation that maximize SIR.
//!
//! A coarse grid covers the whole space; the best column's distance bracket
//! is then refined by golden-section search on a 3-point median-smoothed
//! objective. The reported optimum is the best raw evaluation seen anywhere.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::campaign::PreparedScene;
use crate::error::{Error, Result};
use crate::metrics::db_sentinel;
use crate::scene::{SceneConfig, MIN_DISTANCE_M};
use crate::spectral::StftParams;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Iteration cap for the golden-section loop; the bracket shrinks by 1/phi
/// per step so this is never reached for sane tolerances.
const MAX_GOLDEN_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub distance_bounds_m: [f64; 2],
    /// Equal bounds pin the rotation and collapse the angle axis to one column.
    pub angle_bounds_deg: [f64; 2],
    pub n_distance: usize,
    pub n_angle: usize,
    pub refine_tolerance_m: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            distance_bounds_m: [0.03, 0.30],
            angle_bounds_deg: [0.0, 45.0],
            n_distance: 10,
            n_angle: 4,
            refine_tolerance_m: 0.005,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let [dmin, dmax] = self.distance_bounds_m;
        let [amin, amax] = self.angle_bounds_deg;
        if !(dmin.is_finite() && dmax.is_finite() && dmin < dmax) {
            return Err(Error::Argument(format!(
                "distance bounds must satisfy min < max, got [{dmin}, {dmax}]"
            )));
        }
        if dmin < MIN_DISTANCE_M {
            return Err(Error::Argument(format!(
                "distance lower bound {dmin} m is below {MIN_DISTANCE_M} m"
            )));
        }
        if !(amin.is_finite() && amax.is_finite() && amin <= amax) {
            return Err(Error::Argument(format!(
                "angle bounds must satisfy min <= max, got [{amin}, {amax}]"
            )));
        }
        if self.n_distance < 2 || self.n_angle < 2 {
            return Err(Error::Argument(format!(
                "grid resolution must be at least 2x2, got {}x{}",
                self.n_distance, self.n_angle
            )));
        }
        if !(self.refine_tolerance_m.is_finite() && self.refine_tolerance_m > 0.0) {
            return Err(Error::Argument(format!(
                "refine tolerance must be positive, got {}",
                self.refine_tolerance_m
            )));
        }
        Ok(())
    }

    pub fn distances(&self) -> Vec<f64> {
        linspace(self.distance_bounds_m, self.n_distance)
    }

    pub fn angles(&self) -> Vec<f64> {
        if self.angle_bounds_deg[0] == self.angle_bounds_deg[1] {
            vec![self.angle_bounds_deg[0]]
        } else {
            linspace(self.angle_bounds_deg, self.n_angle)
        }
    }
}

fn linspace([lo, hi]: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub distance_m: f64,
    pub angle_deg: f64,
    #[serde(with = "db_sentinel")]
    pub sir_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub best_distance_m: f64,
    pub best_angle_deg: f64,
    #[serde(with = "db_sentinel")]
    pub best_sir_db: f64,
    pub evaluations: usize,
    pub coarse_evaluations: usize,
    pub trace: Vec<TracePoint>,
}

/// Scores one placement of the template: target at `distance_m`, axis rotated
/// by `angle_deg`, both sources recalibrated at the microphone.
pub fn evaluate_placement(
    prepared: &PreparedScene,
    distance_m: f64,
    angle_deg: f64,
    params: StftParams,
) -> Result<f64> {
    let base = &prepared.base;
    let scene = prepared.scene_for(
        base.mic.directivity,
        distance_m,
        angle_deg,
        base.target.target_spl_db,
        base.noise.target_spl_db,
    )?;
    Ok(prepared.evaluate(&scene, params)?.result.sir_db)
}

struct Refiner<'a> {
    prepared: &'a PreparedScene,
    params: StftParams,
    angle_deg: f64,
    bounds: [f64; 2],
    seen: HashMap<u64, f64>,
    trace: Vec<TracePoint>,
}

impl Refiner<'_> {
    fn raw(&mut self, d: f64) -> Result<f64> {
        let d = d.clamp(self.bounds[0], self.bounds[1]);
        if let Some(&v) = self.seen.get(&d.to_bits()) {
            return Ok(v);
        }
        let v = evaluate_placement(self.prepared, d, self.angle_deg, self.params)?;
        self.seen.insert(d.to_bits(), v);
        self.trace.push(TracePoint {
            distance_m: d,
            angle_deg: self.angle_deg,
            sir_db: v,
        });
        Ok(v)
    }

    fn smoothed(&mut self, d: f64, half_width: f64) -> Result<f64> {
        let mut v = [
            self.raw(d - half_width)?,
            self.raw(d)?,
            self.raw(d + half_width)?,
        ];
        v.sort_by(f64::total_cmp);
        Ok(v[1])
    }
}

pub fn optimize_placement(
    template: &SceneConfig,
    space: &SearchSpace,
    params: StftParams,
) -> Result<PlacementResult> {
    space.validate()?;
    params.validate()?;
    let prepared = PreparedScene::new(template.clone())?;
    let distances = space.distances();
    let angles = space.angles();

    let grid: Vec<(f64, f64)> = angles
        .iter()
        .flat_map(|&a| distances.iter().map(move |&d| (d, a)))
        .collect();
    let coarse: Vec<TracePoint> = grid
        .par_iter()
        .map(|&(d, a)| {
            evaluate_placement(&prepared, d, a, params).map(|sir_db| TracePoint {
                distance_m: d,
                angle_deg: a,
                sir_db,
            })
        })
        .collect::<Result<_>>()?;

    let best_coarse = argmax(&coarse);
    let best_angle = coarse[best_coarse].angle_deg;
    let column = best_coarse % distances.len();
    let lo = distances[column.saturating_sub(1)];
    let hi = distances[(column + 1).min(distances.len() - 1)];

    let mut refiner = Refiner {
        prepared: &prepared,
        params,
        angle_deg: best_angle,
        bounds: space.distance_bounds_m,
        seen: coarse
            .iter()
            .filter(|p| p.angle_deg == best_angle)
            .map(|p| (p.distance_m.to_bits(), p.sir_db))
            .collect(),
        trace: Vec::new(),
    };

    let half_width = space.refine_tolerance_m / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = refiner.smoothed(c, half_width)?;
    let mut fd = refiner.smoothed(d, half_width)?;
    for _ in 0..MAX_GOLDEN_STEPS {
        if b - a <= space.refine_tolerance_m {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = refiner.smoothed(c, half_width)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = refiner.smoothed(d, half_width)?;
        }
    }
    refiner.raw(0.5 * (a + b))?;

    let coarse_evaluations = coarse.len();
    let mut trace = coarse;
    trace.extend(refiner.trace);
    let best = trace[argmax(&trace)];
    Ok(PlacementResult {
        best_distance_m: best.distance_m,
        best_angle_deg: best.angle_deg,
        best_sir_db: best.sir_db,
        evaluations: trace.len(),
        coarse_evaluations,
        trace,
    })
}

/// First index of the maximum SIR.
fn argmax(points: &[TracePoint]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.sir_db.total_cmp(&points[best].sir_db).is_gt() {
            best = i;
        }
    }
    best
}
