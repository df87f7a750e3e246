use std::path::{Path, PathBuf};

use lidarcam::evaluation::extrinsic_error;
use lidarcam::experiment::{run_experiment, EvalResult};
use lidarcam::geometry::RigidPose;
use lidarcam::observability::{verify_plane_cases, verify_point_cases, verify_standard_cases, CaseReport, PlaneScenario, PointScenario};
use lidarcam::optimizer::{SolveError, SolveReport};
use lidarcam::pipeline::{calibrate as run_calibration, CalibrationRun, PipelineError};
use lidarcam::placement::{beta_sweep, distance_sweep, recommend_placement, PlatePose2D};
use lidarcam::scene_sim::io::{read_json, read_ply, write_json, write_ply};
use lidarcam::scene_sim::{generate_scene, perturb_extrinsics, simulate as run_simulation, Scene, SensorData};
use lidarcam::segmentation::{segment as run_segmentation, Segmentation};
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;

pub struct Context {
    pub cfg: CliConfig,
    pub out: PathBuf,
}

pub enum Outcome {
    Success,
    /// Some seeds or cases failed; results were still written.
    Partial,
}

type CmdResult = Result<Outcome, String>;

/// Angular tolerance for matching computed and analytic nullspaces.
const ANGLE_TOL: f64 = 1e-6;
const PRODUCT_TOL: f64 = 1e-10;

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), String> {
        write_json(&self.path(name), value).map_err(|e| e.to_string())
    }

    fn scene(&self) -> Result<Scene, String> {
        generate_scene(&self.cfg.scene).map_err(|e| e.to_string())
    }

    fn simulate(&self, scene: &Scene) -> Result<SensorData, String> {
        run_simulation(scene, &self.cfg.sensors, self.cfg.scene.seed).map_err(|e| e.to_string())
    }
}

pub fn simulate(ctx: &Context) -> CmdResult {
    let scene = ctx.scene()?;
    let data = ctx.simulate(&scene)?;
    ctx.write("scene.json", &scene)?;
    ctx.write("sensors.json", &data)?;
    write_ply(&ctx.path("scan.ply"), &data.scan).map_err(|e| e.to_string())?;
    println!(
        "simulated {} targets, {} laser points, {} keyframes, {} landmarks -> {}",
        scene.targets.len(),
        data.scan.points.len(),
        data.camera.keyframes.len(),
        data.camera.landmarks.len(),
        ctx.out.display()
    );
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SegmentReport<'a> {
    points: usize,
    segments: usize,
    segmentation: &'a Segmentation,
}

pub fn segment(ctx: &Context, input: Option<&str>) -> CmdResult {
    let points = match input {
        Some(path) if path.ends_with(".ply") => read_ply(Path::new(path)).map_err(|e| e.to_string())?.points,
        Some(path) => read_json::<SensorData>(Path::new(path)).map_err(|e| e.to_string())?.scan.points,
        None => ctx.simulate(&ctx.scene()?)?.scan.points,
    };
    let seg = run_segmentation(&points, &ctx.cfg.pipeline.segmentation).map_err(|e| e.to_string())?;
    ctx.write("segmentation.json", &SegmentReport { points: points.len(), segments: seg.segments.len(), segmentation: &seg })?;
    println!("{} planes from {} points", seg.segments.len(), points.len());
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub converged: bool,
    pub error: Option<String>,
    pub ground_truth: RigidPose,
    pub rotation_error_deg: f64,
    pub translation_error_m: f64,
    pub run: Option<CalibrationRun>,
    /// Report of a solve that stopped at its iteration limit.
    pub unconverged: Option<SolveReport>,
}

impl CalibrationFile {
    fn extrinsics(&self) -> Option<RigidPose> {
        self.run.as_ref().map(|r| r.report.extrinsics).or(self.unconverged.as_ref().map(|r| r.extrinsics))
    }
}

pub fn calibrate(ctx: &Context, input: Option<&str>, scene_path: Option<&str>) -> CmdResult {
    let (scene, data) = match (input, scene_path) {
        (Some(i), Some(s)) => (
            read_json::<Scene>(Path::new(s)).map_err(|e| e.to_string())?,
            read_json::<SensorData>(Path::new(i)).map_err(|e| e.to_string())?,
        ),
        (None, Some(s)) => {
            let scene = read_json::<Scene>(Path::new(s)).map_err(|e| e.to_string())?;
            let data = ctx.simulate(&scene)?;
            (scene, data)
        }
        _ => {
            let scene = ctx.scene()?;
            let data = ctx.simulate(&scene)?;
            (scene, data)
        }
    };
    let file = calibrate_file(ctx, &scene, &data)?;
    ctx.write("calibration.json", &file)?;
    println!(
        "rotation error {:.6} deg, translation error {:.6} m, converged {}",
        file.rotation_error_deg, file.translation_error_m, file.converged
    );
    Ok(if file.converged { Outcome::Success } else { Outcome::Partial })
}

fn calibrate_file(ctx: &Context, scene: &Scene, data: &SensorData) -> Result<CalibrationFile, String> {
    let initial = perturb_extrinsics(&scene.extrinsics, ctx.cfg.perturbation_deg, ctx.cfg.perturbation_m, ctx.cfg.scene.seed);
    let (run, unconverged, error) = match run_calibration(data, &initial, &ctx.cfg.pipeline) {
        Ok(run) => (Some(run), None, None),
        Err(PipelineError::Solve(SolveError::NonConvergence { report })) => {
            (None, Some(*report), Some("solver stopped at its iteration limit".to_string()))
        }
        Err(e) => return Err(e.to_string()),
    };
    let mut file = CalibrationFile {
        converged: run.is_some(),
        error,
        ground_truth: scene.extrinsics,
        rotation_error_deg: 0.0,
        translation_error_m: 0.0,
        run,
        unconverged,
    };
    let est = file.extrinsics().expect("either a run or a report");
    (file.rotation_error_deg, file.translation_error_m) = extrinsic_error(&est, &scene.extrinsics);
    Ok(file)
}

#[derive(Serialize)]
struct EvaluationReport {
    rotation_error_deg: f64,
    translation_error_m: f64,
    heldout_rms_m: Option<f64>,
    test_landmarks: usize,
}

pub fn evaluate(ctx: &Context, estimate: Option<&str>, scene_path: Option<&str>) -> CmdResult {
    let (file, scene) = match (estimate, scene_path) {
        (Some(e), Some(s)) => (
            read_json::<CalibrationFile>(Path::new(e)).map_err(|e| e.to_string())?,
            read_json::<Scene>(Path::new(s)).map_err(|e| e.to_string())?,
        ),
        _ => {
            let scene = ctx.scene()?;
            let data = ctx.simulate(&scene)?;
            (calibrate_file(ctx, &scene, &data)?, scene)
        }
    };
    let est = file.extrinsics().ok_or("calibration file holds no estimate")?;
    let (rot, trans) = extrinsic_error(&est, &scene.extrinsics);
    let report = EvaluationReport {
        rotation_error_deg: rot,
        translation_error_m: trans,
        heldout_rms_m: file.run.as_ref().and_then(|r| r.heldout_rms),
        test_landmarks: file.run.as_ref().map_or(0, |r| r.test.len()),
    };
    ctx.write("evaluation.json", &report)?;
    println!("rotation {rot:.6} deg, translation {trans:.6} m, held-out {:?}", report.heldout_rms_m);
    Ok(if file.converged { Outcome::Success } else { Outcome::Partial })
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ScenarioFile {
    Plane(PlaneScenario),
    Point(PointScenario),
}

#[derive(Serialize)]
struct CaseEntry {
    matches: bool,
    error: Option<String>,
    report: Option<CaseReport>,
}

pub fn observability(ctx: &Context, scenario: Option<&str>) -> CmdResult {
    let results = match scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
            vec![match file {
                ScenarioFile::Plane(s) => verify_plane_cases(&s),
                ScenarioFile::Point(s) => verify_point_cases(&s),
            }]
        }
        None => verify_standard_cases(),
    };
    let entries: Vec<CaseEntry> = results
        .into_iter()
        .map(|r| match r {
            Ok(report) => CaseEntry { matches: report.matches(ANGLE_TOL, PRODUCT_TOL), error: None, report: Some(report) },
            Err(e) => CaseEntry { matches: false, error: Some(e.to_string()), report: None },
        })
        .collect();
    for e in &entries {
        match (&e.report, &e.error) {
            (Some(r), _) => println!(
                "{:?} x{}: null dim {} (expected {}), matches {}",
                r.kind, r.count, r.null_dimension, r.expected_dimension, e.matches
            ),
            (None, Some(err)) => println!("error: {err}"),
            _ => {}
        }
    }
    ctx.write("observability.json", &entries)?;
    Ok(if entries.iter().all(|e| e.matches) { Outcome::Success } else { Outcome::Partial })
}

#[derive(Serialize)]
struct PlacementReport {
    theta: f64,
    best_beta: f64,
    recommended: Vec<PlatePose2D>,
}

pub fn placement(ctx: &Context, targets: usize, radius: f64, theta: f64, steps: usize, max_separation: f64) -> CmdResult {
    let points = [
        nalgebra::Vector2::new(1.0, 0.5),
        nalgebra::Vector2::new(1.0, -0.5),
        nalgebra::Vector2::new(0.5, 1.0),
    ];
    let betas = beta_sweep(points, theta, steps);
    let distances = distance_sweep(theta, max_separation, steps);
    write_csv(&ctx.path("placement_beta.csv"), &betas)?;
    write_csv(&ctx.path("placement_distance.csv"), &distances)?;
    let best_beta = betas.iter().max_by(|a, b| a.brute_force.total_cmp(&b.brute_force)).map_or(0.0, |r| r.beta);
    let recommended = recommend_placement(targets, radius).map_err(|e| e.to_string())?;
    ctx.write("placement.json", &PlacementReport { theta, best_beta, recommended })?;
    println!("best beta {:.4} rad over {} steps; {} plates recommended", best_beta, steps, targets);
    Ok(Outcome::Success)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    for r in rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RecordRow {
    seed: u64,
    rotation_deg: Option<f64>,
    translation_m: Option<f64>,
    heldout_rms: Option<f64>,
    iterations: Option<usize>,
    converged: bool,
    error: Option<String>,
}

pub fn experiment(ctx: &Context) -> CmdResult {
    let result: EvalResult = run_experiment(&ctx.cfg.experiment).map_err(|e| e.to_string())?;
    ctx.write("experiment.json", &result)?;
    let rows: Vec<RecordRow> = result
        .records
        .iter()
        .map(|r| RecordRow {
            seed: r.seed,
            rotation_deg: r.rotation_deg,
            translation_m: r.translation_m,
            heldout_rms: r.heldout_rms,
            iterations: r.iterations,
            converged: r.converged,
            error: r.error.clone(),
        })
        .collect();
    write_csv(&ctx.path("experiment.csv"), &rows)?;
    println!(
        "{} {:?}: median rotation {:?} deg, translation {:?} m, held-out {:?} m, {} failures",
        result.spec.preset,
        result.spec.target_kind,
        result.rotation_deg.map(|q| q.median),
        result.translation_m.map(|q| q.median),
        result.heldout_rms.map(|q| q.median),
        result.failures
    );
    Ok(if result.failures == 0 { Outcome::Success } else { Outcome::Partial })
}
