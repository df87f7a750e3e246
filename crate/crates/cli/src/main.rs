//! `lidarcam` command-line entry point.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lidarcam", version, about = "LiDAR-camera extrinsic calibration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON settings file (scene, sensors, pipeline, experiment sections).
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Scene, noise and split seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment seeds: `a..b`, `a..=b` or `1,2,3`.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "lidarcam-out")]
    pub out: String,
    /// Scene preset: scattered, centralized or single-shot.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Target kind: chessboard, polygon or box.
    #[arg(long, global = true)]
    pub target_kind: Option<String>,
    /// LiDAR range noise, meters.
    #[arg(long, global = true)]
    pub lidar_sigma: Option<f64>,
    /// Pixel noise, pixels.
    #[arg(long, global = true)]
    pub pixel_sigma: Option<f64>,
    /// Associate landmarks once instead of refreshing during the solve.
    #[arg(long, global = true)]
    pub no_reassociate: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scene and simulate the laser scan and camera pass.
    Simulate,
    /// Segment a laser scan into planes.
    Segment {
        /// Scan as PLY or a sensor JSON file from `simulate`; simulated from the seed if omitted.
        #[arg(long)]
        input: Option<String>,
    },
    /// Calibrate from simulated or saved sensor data.
    Calibrate {
        /// Sensor JSON from `simulate`; requires `--scene`.
        #[arg(long, requires = "scene")]
        input: Option<String>,
        /// Scene JSON from `simulate` (ground truth for the initial guess and errors).
        #[arg(long)]
        scene: Option<String>,
    },
    /// Report extrinsic and held-out errors of a calibration.
    Evaluate {
        /// Calibration JSON from `calibrate`; requires `--scene`.
        #[arg(long, requires = "scene")]
        estimate: Option<String>,
        #[arg(long)]
        scene: Option<String>,
    },
    /// Check the nullspace of the plane and point observability matrices.
    Observability {
        /// Custom scenario JSON (`{"kind": "plane" | "point", ...}`); runs the standard cases if omitted.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Placement determinant sweeps and a recommended layout.
    Placement {
        #[arg(long, default_value_t = 4)]
        targets: usize,
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
        /// Extrinsic rotation used in the sweeps, radians.
        #[arg(long, default_value_t = 0.3)]
        theta: f64,
        #[arg(long, default_value_t = 180)]
        steps: usize,
        /// Largest y separation of the distance sweep, meters.
        #[arg(long, default_value_t = 2.0)]
        max_separation: f64,
    },
    /// Monte-Carlo calibration over seeds.
    Experiment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::CliConfig::resolve(&cli.common).and_then(|cfg| {
        let out = std::path::PathBuf::from(&cli.common.out);
        std::fs::create_dir_all(&out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
        let ctx = commands::Context { cfg, out };
        match &cli.command {
            Command::Simulate => commands::simulate(&ctx),
            Command::Segment { input } => commands::segment(&ctx, input.as_deref()),
            Command::Calibrate { input, scene } => commands::calibrate(&ctx, input.as_deref(), scene.as_deref()),
            Command::Evaluate { estimate, scene } => commands::evaluate(&ctx, estimate.as_deref(), scene.as_deref()),
            Command::Observability { scenario } => commands::observability(&ctx, scenario.as_deref()),
            Command::Placement { targets, radius, theta, steps, max_separation } => {
                commands::placement(&ctx, *targets, *radius, *theta, *steps, *max_separation)
            }
            Command::Experiment => commands::experiment(&ctx),
        }
    });
    match result {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
