use std::path::Path;

use lidarcam::experiment::ExperimentSpec;
use lidarcam::pipeline::PipelineConfig;
use lidarcam::scene_sim::io::read_json;
use lidarcam::scene_sim::{Preset, SceneConfig, SensorConfig, TargetKind};
use serde::{Deserialize, Serialize};

use crate::CommonArgs;

/// Settings file accepted by `--config`; every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub scene: SceneConfig,
    pub sensors: SensorConfig,
    pub pipeline: PipelineConfig,
    pub experiment: ExperimentSpec,
    /// Initial extrinsic perturbation for single calibrations.
    pub perturbation_deg: f64,
    pub perturbation_m: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            scene: SceneConfig::default(),
            sensors: SensorConfig::default(),
            pipeline: PipelineConfig { test_fraction: 0.5, ..Default::default() },
            experiment: ExperimentSpec::default(),
            perturbation_deg: 2.0,
            perturbation_m: 0.05,
        }
    }
}

impl CliConfig {
    /// Loads `--config` (if any) and applies the command-line overrides.
    pub fn resolve(args: &CommonArgs) -> Result<CliConfig, String> {
        let mut cfg = match &args.config {
            Some(path) => read_json::<CliConfig>(Path::new(path)).map_err(|e| e.to_string())?,
            None => CliConfig::default(),
        };
        if let Some(seed) = args.seed {
            cfg.scene.seed = seed;
            cfg.pipeline.split_seed = seed;
        }
        if let Some(seeds) = &args.seeds {
            cfg.experiment.seeds = parse_seeds(seeds)?;
        }
        if let Some(preset) = &args.preset {
            let p: Preset = preset.parse()?;
            cfg.scene.preset = p;
            cfg.experiment.preset = p;
        }
        if let Some(kind) = &args.target_kind {
            let k: TargetKind = kind.parse()?;
            cfg.scene.target_kind = k;
            cfg.experiment.target_kind = k;
        }
        if let Some(s) = args.lidar_sigma {
            cfg.sensors.lidar_sigma = s;
            cfg.experiment.lidar_sigma = s;
            if s > 0.0 {
                cfg.pipeline.lidar_sigma = s;
                cfg.pipeline.corner_sigma = s;
            }
        }
        if let Some(s) = args.pixel_sigma {
            cfg.sensors.camera.pixel_sigma = s;
            cfg.experiment.pixel_sigma = s;
            if s > 0.0 {
                cfg.pipeline.pixel_sigma = s;
            }
        }
        if args.no_reassociate {
            cfg.pipeline.reassociate = false;
            cfg.experiment.reassociate = false;
        }
        Ok(cfg)
    }
}

/// Parses `a..b` (half-open), `a..=b`, or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let bad = |e: std::num::ParseIntError| format!("invalid seed list {text:?}: {e}");
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (a.trim().parse().map_err(bad)?..=b.trim().parse().map_err(bad)?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect()
    } else {
        text.split(',').map(|s| s.trim().parse::<u64>().map_err(bad)).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed list {text:?} is empty"));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_seeds("5, 1,9").unwrap(), vec![5, 1, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
