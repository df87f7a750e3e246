//! Monte-Carlo calibration experiments over seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::extrinsic_error;
use crate::optimizer::SolveError;
use crate::pipeline::{calibrate, PipelineConfig, PipelineError};
use crate::scene_sim::{generate_scene, perturb_extrinsics, simulate, Preset, SceneConfig, SensorConfig, TargetKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub target_kind: TargetKind,
    pub target_count: usize,
    pub lidar_sigma: f64,
    pub pixel_sigma: f64,
    pub seeds: Vec<u64>,
    /// Fraction of target landmarks held out for evaluation.
    pub test_fraction: f64,
    /// Initial extrinsic perturbation.
    pub perturbation_deg: f64,
    pub perturbation_m: f64,
    pub reassociate: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            preset: Preset::Scattered,
            target_kind: TargetKind::Chessboard,
            target_count: 4,
            lidar_sigma: 0.01,
            pixel_sigma: 0.5,
            seeds: (0..20).collect(),
            test_fraction: 0.5,
            perturbation_deg: 2.0,
            perturbation_m: 0.05,
            reassociate: true,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.into()));
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test fraction must lie in (0, 1)");
        }
        if self.lidar_sigma < 0.0 || self.pixel_sigma < 0.0 || self.perturbation_deg < 0.0 || self.perturbation_m < 0.0 {
            return bad("noise levels and perturbations must be non-negative");
        }
        if self.target_count == 0 {
            return bad("target count must be positive");
        }
        Ok(())
    }

    pub fn scene_config(&self, seed: u64) -> SceneConfig {
        SceneConfig { seed, preset: self.preset, target_kind: self.target_kind, target_count: self.target_count, ..Default::default() }
    }

    pub fn sensor_config(&self) -> SensorConfig {
        let mut s = SensorConfig { lidar_sigma: self.lidar_sigma, ..Default::default() };
        s.camera.pixel_sigma = self.pixel_sigma;
        if self.lidar_sigma == 0.0 && self.pixel_sigma == 0.0 {
            s = SensorConfig::noiseless();
        }
        s
    }

    /// Pipeline settings; zero noise levels fall back to the default weights.
    pub fn pipeline_config(&self, seed: u64) -> PipelineConfig {
        let base = PipelineConfig::default();
        let pick = |s: f64, d: f64| if s > 0.0 { s } else { d };
        PipelineConfig {
            pixel_sigma: pick(self.pixel_sigma, base.pixel_sigma),
            lidar_sigma: pick(self.lidar_sigma, base.lidar_sigma),
            corner_sigma: pick(self.lidar_sigma, base.corner_sigma),
            test_fraction: self.test_fraction,
            split_seed: seed,
            reassociate: self.reassociate,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub rotation_deg: Option<f64>,
    pub translation_m: Option<f64>,
    pub heldout_rms: Option<f64>,
    pub iterations: Option<usize>,
    /// False when the solver stopped at its iteration limit; the estimate is still recorded.
    pub converged: bool,
    pub error: Option<String>,
}

/// Median and quartiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Quartiles { q1: at(0.25), median: at(0.5), q3: at(0.75) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub spec: ExperimentSpec,
    pub rotation_deg: Option<Quartiles>,
    pub translation_m: Option<Quartiles>,
    pub heldout_rms: Option<Quartiles>,
    pub failures: usize,
    /// Sorted by seed.
    pub records: Vec<SeedRecord>,
}

/// Runs the full pipeline for one seed.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> SeedRecord {
    let mut record = SeedRecord {
        seed,
        rotation_deg: None,
        translation_m: None,
        heldout_rms: None,
        iterations: None,
        converged: false,
        error: None,
    };
    let scene = match generate_scene(&spec.scene_config(seed)) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let outcome = simulate(&scene, &spec.sensor_config(), seed).map_err(|e| e.to_string()).and_then(|data| {
        let init = perturb_extrinsics(&scene.extrinsics, spec.perturbation_deg, spec.perturbation_m, seed);
        match calibrate(&data, &init, &spec.pipeline_config(seed)) {
            Ok(run) => Ok((run.report, run.heldout_rms, None)),
            Err(PipelineError::Solve(e @ SolveError::NonConvergence { .. })) => {
                let SolveError::NonConvergence { report } = &e else { unreachable!() };
                Ok(((**report).clone(), None, Some(e.to_string())))
            }
            Err(e) => Err(e.to_string()),
        }
    });
    match outcome {
        Ok((report, heldout, error)) => {
            let (r, t) = extrinsic_error(&report.extrinsics, &scene.extrinsics);
            record.rotation_deg = Some(r);
            record.translation_m = Some(t);
            record.heldout_rms = heldout;
            record.iterations = Some(report.iterations);
            record.converged = report.converged;
            record.error = error;
        }
        Err(e) => record.error = Some(e),
    }
    record
}

/// Runs every seed in parallel; failed seeds are recorded, not fatal. Seeds
/// whose solve hit the iteration limit still contribute their final estimate.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<EvalResult, ExperimentError> {
    spec.validate()?;
    let mut records: Vec<SeedRecord> = spec.seeds.par_iter().map(|&s| run_seed(spec, s)).collect();
    records.sort_by_key(|r| r.seed);
    let collect = |f: fn(&SeedRecord) -> Option<f64>| records.iter().filter_map(f).collect::<Vec<f64>>();
    Ok(EvalResult {
        spec: spec.clone(),
        rotation_deg: Quartiles::of(&collect(|r| r.rotation_deg)),
        translation_m: Quartiles::of(&collect(|r| r.translation_m)),
        heldout_rms: Quartiles::of(&collect(|r| r.heldout_rms)),
        failures: records.iter().filter(|r| r.error.is_some()).count(),
        records,
    })
}
