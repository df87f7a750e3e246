use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, SymmetricEigen, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{CalibrationGraph, CostBreakdown, HuberDeltas, Linearized};
use super::{PlaneFactor, PointFactor, SolveError};
use crate::geometry::{RigidPose, SmallAngle};

const MAX_LAMBDA: f64 = 1e14;
const MIN_LAMBDA: f64 = 1e-15;
const SCHUR_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeMode {
    /// Every keyframe pose, including the extrinsic, is free.
    #[default]
    Free,
    /// Hold the first keyframe (the extrinsic) at its initial value.
    FixFirstKeyframe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Relative cost decrease below which an accepted step ends the solve.
    pub cost_tolerance: f64,
    /// Step norm relative to the state norm.
    pub step_tolerance: f64,
    /// Infinity norm of the gradient.
    pub gradient_tolerance: f64,
    pub huber: HuberDeltas,
    pub gauge: GaugeMode,
    /// Accepted iterations between association refreshes; 0 disables periodic refreshes.
    pub reassociate_every: usize,
    /// Upper bound on refresh rounds, after which associations stay fixed.
    pub max_reassociations: usize,
    /// Relative eigenvalue threshold of the Jacobi-scaled reduced system.
    pub singular_tolerance: f64,
    pub check_singularity: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iterations: 200,
            initial_lambda: 1e-4,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            huber: HuberDeltas::default(),
            gauge: GaugeMode::Free,
            reassociate_every: 5,
            max_reassociations: 6,
            singular_tolerance: 1e-10,
            check_singularity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    StepTolerance,
    DampingSaturated,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub breakdown: CostBreakdown,
    pub converged: bool,
    pub termination: Termination,
    pub extrinsics: RigidPose,
    pub keyframes: Vec<RigidPose>,
    pub landmarks: Vec<Vector3<f64>>,
    pub plane_factors: usize,
    pub point_factors: usize,
    pub reassociations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Recomputes laser alignment factors for the current graph state.
pub trait Reassociator: Sync {
    fn reassociate(&self, graph: &CalibrationGraph) -> (Vec<PlaneFactor>, Vec<PointFactor>);
}

/// Gauss–Newton normal equations split into pose and landmark blocks.
struct NormalEquations {
    hpp: Vec<Matrix6<f64>>,
    bp: Vec<Vector6<f64>>,
    hll: Vec<Matrix3<f64>>,
    bl: Vec<Vector3<f64>>,
    /// Per landmark: `(keyframe, H_pl)` couplings.
    hpl: Vec<Vec<(usize, Matrix6x3<f64>)>>,
    fixed_first: bool,
}

struct Step {
    poses: Vec<Vector6<f64>>,
    landmarks: Vec<Vector3<f64>>,
}

impl Step {
    fn norm(&self) -> f64 {
        let s: f64 = self.poses.iter().map(|v| v.norm_squared()).sum::<f64>()
            + self.landmarks.iter().map(|v| v.norm_squared()).sum::<f64>();
        s.sqrt()
    }
}

impl NormalEquations {
    fn build(graph: &CalibrationGraph, lin: &[Linearized], fixed_first: bool) -> Self {
        let nk = graph.keyframes.len();
        let nl = graph.landmarks.len();
        let mut ne = NormalEquations {
            hpp: vec![Matrix6::zeros(); nk],
            bp: vec![Vector6::zeros(); nk],
            hll: vec![Matrix3::zeros(); nl],
            bl: vec![Vector3::zeros(); nl],
            hpl: vec![Vec::new(); nl],
            fixed_first,
        };
        for l in lin {
            match *l {
                Linearized::Reprojection { keyframe, landmark, r, jp, jl, w } => {
                    ne.hpp[keyframe] += w * jp.transpose() * jp;
                    ne.bp[keyframe] += w * jp.transpose() * r;
                    ne.hll[landmark] += w * jl.transpose() * jl;
                    ne.bl[landmark] += w * jl.transpose() * r;
                    let block = w * jp.transpose() * jl;
                    let list = &mut ne.hpl[landmark];
                    match list.iter_mut().find(|(k, _)| *k == keyframe) {
                        Some((_, m)) => *m += block,
                        None => list.push((keyframe, block)),
                    }
                }
                Linearized::Plane { landmark, r, jl, w } => {
                    ne.hll[landmark] += w * jl.transpose() * jl;
                    ne.bl[landmark] += w * jl.transpose() * r;
                }
                Linearized::Point { landmark, r, w } => {
                    ne.hll[landmark] += w * Matrix3::identity();
                    ne.bl[landmark] += w * r;
                }
                Linearized::Inactive => {}
            }
        }
        if fixed_first {
            ne.bp[0] = Vector6::zeros();
            for list in &mut ne.hpl {
                list.retain(|(k, _)| *k != 0);
            }
        }
        ne
    }

    fn gradient_inf_norm(&self) -> f64 {
        let p = self.bp.iter().map(|v| v.amax()).fold(0.0, f64::max);
        let l = self.bl.iter().map(|v| v.amax()).fold(0.0, f64::max);
        p.max(l)
    }

    fn first_free(&self) -> usize {
        usize::from(self.fixed_first)
    }

    /// Reduced camera system `S = H_pp − H_pl V⁻¹ H_lp` and right-hand side,
    /// with multiplicative damping `λ·diag(H)`.
    // Fixed chunking keeps the summation order independent of thread count.
    fn schur(&self, lambda: f64) -> (DMatrix<f64>, DVector<f64>, Vec<Matrix3<f64>>) {
        let nk = self.hpp.len();
        let n = 6 * nk;
        let vinv: Vec<Matrix3<f64>> = self
            .hll
            .iter()
            .map(|h| {
                let mut d = *h;
                for i in 0..3 {
                    d[(i, i)] += lambda * h[(i, i)];
                }
                pseudo_inverse3(&d)
            })
            .collect();
        let landmarks: Vec<usize> = (0..self.hll.len()).collect();
        let partials: Vec<(DMatrix<f64>, DVector<f64>)> = landmarks
            .par_chunks(SCHUR_CHUNK)
            .map(|chunk| {
                let mut s = DMatrix::<f64>::zeros(n, n);
                let mut rhs = DVector::<f64>::zeros(n);
                for &j in chunk {
                    let list = &self.hpl[j];
                    let vi = &vinv[j];
                    for (k1, w1) in list {
                        let wv = w1 * vi;
                        let r = wv * self.bl[j];
                        let mut seg = rhs.fixed_rows_mut::<6>(6 * k1);
                        seg -= r;
                        for (k2, w2) in list {
                            let m = wv * w2.transpose();
                            let mut blk = s.fixed_view_mut::<6, 6>(6 * k1, 6 * k2);
                            blk -= m;
                        }
                    }
                }
                (s, rhs)
            })
            .collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (ps, pr) in &partials {
            s += ps;
            rhs += pr;
        }
        for k in 0..nk {
            let mut h = self.hpp[k];
            for i in 0..6 {
                h[(i, i)] += lambda * self.hpp[k][(i, i)].max(1e-12);
            }
            let mut blk = s.fixed_view_mut::<6, 6>(6 * k, 6 * k);
            blk += h;
            let mut seg = rhs.fixed_rows_mut::<6>(6 * k);
            seg += self.bp[k];
        }
        if self.fixed_first {
            for i in 0..6 {
                s.row_mut(i).fill(0.0);
                s.column_mut(i).fill(0.0);
                s[(i, i)] = 1.0;
                rhs[i] = 0.0;
            }
        }
        (s, rhs, vinv)
    }

    fn solve(&self, lambda: f64) -> Option<Step> {
        let (s, rhs, vinv) = self.schur(lambda);
        let chol = s.cholesky()?;
        let dp = chol.solve(&(-rhs));
        if dp.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let poses: Vec<Vector6<f64>> = (0..self.hpp.len()).map(|k| dp.fixed_rows::<6>(6 * k).into_owned()).collect();
        let landmarks = (0..self.hll.len())
            .map(|j| {
                let mut b = self.bl[j];
                for (k, w) in &self.hpl[j] {
                    b += w.transpose() * poses[*k];
                }
                -(vinv[j] * b)
            })
            .collect();
        Some(Step { poses, landmarks })
    }

    /// Jacobi-scaled spectrum test on the undamped reduced system.
    fn check_singular(&self, tol: f64) -> Result<(), SolveError> {
        let (s, _, _) = self.schur(0.0);
        let start = 6 * self.first_free();
        let n = s.nrows() - start;
        if n == 0 {
            return Ok(());
        }
        let sub = s.view((start, start), (n, n)).into_owned();
        let diag: Vec<f64> = (0..n).map(|i| sub[(i, i)]).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let empty = diag.iter().filter(|&&d| d <= tol * dmax).count();
        if dmax <= 0.0 || empty > 0 {
            return Err(SolveError::SingularNormalEquations { condition: f64::INFINITY, nullity: empty.max(1) });
        }
        let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let scaled = DMatrix::from_fn(n, n, |i, j| sub[(i, j)] * scale[i] * scale[j]);
        let eig = SymmetricEigen::new(scaled).eigenvalues;
        let emax = eig.max();
        let emin = eig.min();
        let nullity = eig.iter().filter(|&&e| e <= tol * emax).count();
        if nullity > 0 {
            let condition = if emin > 0.0 { emax / emin } else { f64::INFINITY };
            return Err(SolveError::SingularNormalEquations { condition, nullity });
        }
        Ok(())
    }
}

fn pseudo_inverse3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*m);
    let emax = eig.eigenvalues.amax();
    if emax <= 0.0 {
        return Matrix3::zeros();
    }
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        let e = eig.eigenvalues[i];
        if e > 1e-14 * emax {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / e;
        }
    }
    out
}

fn apply_step(graph: &CalibrationGraph, step: &Step) -> CalibrationGraph {
    let mut g = graph.clone();
    for (pose, d) in g.keyframes.iter_mut().zip(&step.poses) {
        let theta = SmallAngle(d.fixed_rows::<3>(0).into_owned());
        *pose = pose.retract(&theta, &d.fixed_rows::<3>(3).into_owned());
    }
    for (l, d) in g.landmarks.iter_mut().zip(&step.landmarks) {
        *l += d;
    }
    g
}

fn state_norm(graph: &CalibrationGraph) -> f64 {
    let s: f64 = graph.keyframes.iter().map(|p| p.translation.norm_squared() + 1.0).sum::<f64>()
        + graph.landmarks.iter().map(|l| l.norm_squared()).sum::<f64>();
    s.sqrt()
}

/// Levenberg–Marquardt with a landmark Schur complement and Huber IRLS weights.
///
/// When a `reassociator` is given, alignment factors are refreshed every
/// `reassociate_every` accepted steps and once more after convergence.
pub fn solve(
    graph: &CalibrationGraph,
    config: &SolveConfig,
    reassociator: Option<&dyn Reassociator>,
) -> Result<SolveReport, SolveError> {
    graph.validate()?;
    let deltas = config.huber;
    let fixed_first = config.gauge == GaugeMode::FixFirstKeyframe;
    let mut g = graph.clone();
    let mut cost = g.cost(&deltas);
    let initial_cost = cost.total();
    let mut lambda = config.initial_lambda;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut accepted_since = 0;
    let mut reassociations = 0;
    let mut rounds = 0;
    let mut checked = !config.check_singularity;
    let mut outcome: Option<Termination> = None;

    while iterations < config.max_iterations {
        let lin = g.linearize(&deltas);
        let ne = NormalEquations::build(&g, &lin, fixed_first);
        if !checked {
            checked = true;
            ne.check_singular(config.singular_tolerance)?;
        }
        let mut done = None;
        if ne.gradient_inf_norm() <= config.gradient_tolerance {
            done = Some(Termination::GradientTolerance);
        } else {
            while iterations < config.max_iterations {
                iterations += 1;
                let Some(step) = ne.solve(lambda) else {
                    trace.push(IterationRecord { iteration: iterations, cost: cost.total(), lambda, step_norm: f64::NAN, accepted: false });
                    lambda *= 10.0;
                    if lambda > MAX_LAMBDA {
                        done = Some(Termination::DampingSaturated);
                        break;
                    }
                    continue;
                };
                let step_norm = step.norm();
                if step_norm <= config.step_tolerance * (state_norm(&g) + config.step_tolerance) {
                    trace.push(IterationRecord { iteration: iterations, cost: cost.total(), lambda, step_norm, accepted: false });
                    done = Some(Termination::StepTolerance);
                    break;
                }
                let candidate = apply_step(&g, &step);
                let new_cost = candidate.cost(&deltas);
                let accepted = new_cost.total() <= cost.total();
                trace.push(IterationRecord {
                    iteration: iterations,
                    cost: if accepted { new_cost.total() } else { cost.total() },
                    lambda,
                    step_norm,
                    accepted,
                });
                if accepted {
                    let old = cost.total();
                    let rel = if old > 0.0 { (old - new_cost.total()) / old } else { 0.0 };
                    g = candidate;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(MIN_LAMBDA);
                    accepted_since += 1;
                    if rel < config.cost_tolerance {
                        done = Some(Termination::CostTolerance);
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > MAX_LAMBDA {
                    done = Some(Termination::DampingSaturated);
                    break;
                }
            }
        }

        if let Some(r) = reassociator.filter(|_| rounds < config.max_reassociations) {
            let periodic = config.reassociate_every > 0 && accepted_since >= config.reassociate_every;
            if periodic || done.is_some() {
                rounds += 1;
                accepted_since = 0;
                let (planes, points) = r.reassociate(&g);
                if planes != g.planes || points != g.points {
                    g.planes = planes;
                    g.points = points;
                    reassociations += 1;
                    cost = g.cost(&deltas);
                    lambda = lambda.max(config.initial_lambda);
                    done = None;
                }
            }
        }
        if done.is_some() {
            outcome = done;
            break;
        }
    }

    let report = SolveReport {
        iterations,
        initial_cost,
        final_cost: cost.total(),
        breakdown: cost,
        converged: outcome.is_some(),
        termination: outcome.unwrap_or(Termination::MaxIterations),
        extrinsics: g.extrinsics(),
        keyframes: g.keyframes.clone(),
        landmarks: g.landmarks.clone(),
        plane_factors: g.planes.len(),
        point_factors: g.points.len(),
        reassociations,
        trace,
    };
    if report.converged {
        Ok(report)
    } else {
        Err(SolveError::NonConvergence { report: Box::new(report) })
    }
}
