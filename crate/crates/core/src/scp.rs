//! Penalized-trust-region sequential convex programming.

use log::{debug, info};
use serde::{Deserialize, Serialize};
use slewplan_conic::{solve, ConicError, Settings, SolveStatus};

use crate::config::{ConfigError, ScpConfig};
use crate::dynamics::{quat_of, rk4_integrate_fn, DynamicsError, InputVec, Model, SatelliteParams, StateVec, Trajectory};
use crate::quat::{slerp, UnitQuaternion};
use crate::transcription::{
    assemble_min_time, assemble_multi_target, DecisionStack, PointingScheduleSpec, ScalingMap,
    TranscriptionError,
};

#[derive(Debug, thiserror::Error)]
pub enum ScpError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error("malformed subproblem at iteration {iteration}: {source}")]
    Malformed { iteration: usize, source: ConicError },
}

#[derive(Debug, Clone)]
pub enum Problem {
    /// Rest-to-rest slew from `x0` to attitude `q_final`.
    MinTime { x0: StateVec, q_final: UnitQuaternion },
    MultiTarget { x0: StateVec, spec: PointingScheduleSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub j_vc: f64,
    pub j_tr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(rename = "J_vc")]
    pub j_vc: f64,
    #[serde(rename = "J_tr")]
    pub j_tr: f64,
    pub objective: f64,
    pub t_f: f64,
    pub solver_status: String,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpFailure {
    pub iteration: usize,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScpResult {
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub stack: DecisionStack,
    pub t_f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<ScpFailure>,
}

impl ScpResult {
    /// Algorithm flag: 1 when converged.
    pub fn flag(&self) -> u8 {
        u8::from(self.converged)
    }

    pub fn history_json(&self) -> String {
        serde_json::to_string_pretty(&self.history).expect("history serializes")
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.history.last()
    }
}

/// SLERP attitudes, zero rates, momenta and torques.
pub fn initial_guess(q0: &UnitQuaternion, qf: &UnitQuaternion, k: usize, tf: f64) -> DecisionStack {
    let x = (0..k)
        .map(|i| {
            let t = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
            let mut x = StateVec::zeros();
            x.fixed_rows_mut::<4>(0).copy_from(&slerp(q0, qf, t).as_vec4());
            x
        })
        .collect();
    DecisionStack {
        x,
        u: vec![InputVec::zeros(); k],
        tf,
        v: vec![StateVec::zeros(); k.saturating_sub(1)],
    }
}

/// Piecewise SLERP through the observation attitudes, holding the last one.
pub fn schedule_initial_guess(q0: &UnitQuaternion, spec: &PointingScheduleSpec) -> DecisionStack {
    let mut anchors: Vec<(usize, UnitQuaternion)> = vec![(0, *q0)];
    let mut obs: Vec<_> = spec.observations.iter().map(|o| (o.node, o.q)).collect();
    obs.sort_by_key(|o| o.0);
    for (n, q) in obs {
        let (ln, lq) = *anchors.last().expect("nonempty");
        if n == ln {
            if n > 0 {
                *anchors.last_mut().expect("nonempty") = (n, q);
            }
            continue;
        }
        // keep the hemisphere continuous along the path
        let q = if lq.dot(&q) < 0.0 { q.neg() } else { q };
        anchors.push((n, q));
    }
    let mut stack = initial_guess(q0, q0, spec.k, spec.t_f);
    for (i, x) in stack.x.iter_mut().enumerate() {
        let seg = anchors.partition_point(|a| a.0 <= i);
        let q = if seg >= anchors.len() {
            anchors[anchors.len() - 1].1
        } else {
            let (n0, q0) = anchors[seg - 1];
            let (n1, q1) = anchors[seg];
            slerp(&q0, &q1, (i - n0) as f64 / (n1 - n0) as f64)
        };
        x.fixed_rows_mut::<4>(0).copy_from(&q.as_vec4());
    }
    stack
}

/// `1.2 · 2√(θ λ_max(J) / τ_min)`, with τ_min the weakest principal-axis torque.
pub fn tf_guess(p: &SatelliteParams, theta: f64) -> f64 {
    let lmax = p.j.symmetric_eigenvalues().max();
    let tau = (0..3).map(|a| p.axis_torque(a)).fold(f64::INFINITY, f64::min);
    1.2 * 2.0 * (theta.abs() * lmax / tau).sqrt()
}

/// `J_vc = w_vc Σ‖v̂_k‖₁` and `J_tr = Σ‖w_tr(ẑ_k − ẑ̄_k)‖₂` on scaled variables.
pub fn evaluate_penalties(
    current: &DecisionStack,
    previous: &DecisionStack,
    map: &ScalingMap,
    cfg: &ScpConfig,
) -> Penalties {
    let c = current.scale(map);
    let p = previous.scale(map);
    let j_vc = cfg.w_vc * c.v.iter().map(|v| v.abs().sum()).sum::<f64>();
    let dt = c.tf - p.tf;
    let j_tr = (0..c.x.len())
        .map(|k| {
            let dx = (c.x[k] - p.x[k]).norm_squared();
            let du = (c.u[k] - p.u[k]).norm_squared();
            cfg.w_tr * (dx + du + dt * dt).sqrt()
        })
        .sum();
    Penalties { j_vc, j_tr }
}

pub fn run(model: &Model, problem: &Problem, cfg: &ScpConfig) -> Result<ScpResult, ScpError> {
    let initial = match problem {
        Problem::MinTime { x0, q_final } => {
            let q0 = UnitQuaternion::from_vec4(quat_of(x0)).map_err(|_| TranscriptionError::NonUnitBoundary("initial"))?;
            let tf = tf_guess(&model.params, q0.angle_to(q_final)).max(10.0 * cfg.t_min_floor);
            initial_guess(&q0, q_final, cfg.k, tf)
        }
        Problem::MultiTarget { x0, spec } => {
            let q0 = UnitQuaternion::from_vec4(quat_of(x0)).map_err(|_| TranscriptionError::NonUnitBoundary("initial"))?;
            let mut s = schedule_initial_guess(&q0, spec);
            s.x[0] = *x0;
            s
        }
    };
    run_from(model, problem, cfg, initial)
}

/// Runs from a caller-supplied first nominal.
pub fn run_from(
    model: &Model,
    problem: &Problem,
    cfg: &ScpConfig,
    initial: DecisionStack,
) -> Result<ScpResult, ScpError> {
    cfg.validate()?;
    initial.check()?;
    let map = cfg.scaling.map(&model.params, initial.tf);
    let settings = Settings::default();
    let mut nominal = initial;
    let mut history = Vec::new();
    for it in 1..=cfg.n_max {
        let tr = match problem {
            Problem::MinTime { x0, q_final } => assemble_min_time(model, &nominal, x0, q_final, cfg, &map)?,
            Problem::MultiTarget { x0, spec } => assemble_multi_target(model, &nominal, x0, spec, cfg, &map)?,
        };
        let sol = solve(&tr.program, &settings).map_err(|source| ScpError::Malformed { iteration: it, source })?;
        if sol.status != SolveStatus::Optimal {
            info!("subproblem {it} ended with status {}", sol.status);
            return Ok(ScpResult {
                converged: false,
                iterations: it,
                t_f: nominal.tf,
                stack: nominal,
                history,
                failure: Some(ScpFailure {
                    iteration: it,
                    status: sol.status.to_string(),
                }),
            });
        }
        let next = tr.layout.extract(&sol.x, &map, nominal.tf);
        let pen = evaluate_penalties(&next, &nominal, &map, cfg);
        debug!(
            "scp {it}: J_vc={:.3e} J_tr={:.3e} obj={:.6} t_f={:.4} ipm={}",
            pen.j_vc, pen.j_tr, sol.pobj, next.tf, sol.iterations
        );
        history.push(IterationRecord {
            iteration: it,
            j_vc: pen.j_vc,
            j_tr: pen.j_tr,
            objective: sol.pobj,
            t_f: next.tf,
            solver_status: sol.status.to_string(),
            solver_iterations: sol.iterations,
        });
        nominal = next;
        if pen.j_vc <= cfg.eps_vc && pen.j_tr <= cfg.eps_tr {
            return Ok(ScpResult {
                converged: true,
                iterations: it,
                t_f: nominal.tf,
                stack: nominal,
                history,
                failure: None,
            });
        }
    }
    Ok(ScpResult {
        converged: false,
        iterations: cfg.n_max,
        t_f: nominal.tf,
        stack: nominal,
        history,
        failure: None,
    })
}

/// Re-integrates the nonlinear dynamics from the first node under the
/// stack's piecewise-linear input, with `substeps` RK4 steps per interval.
pub fn replay(model: &Model, stack: &DecisionStack, substeps: usize) -> Result<Trajectory, DynamicsError> {
    let k = stack.nodes();
    let t = stack.times();
    let input = |s: f64| {
        let pos = (s / stack.tf * (k - 1) as f64).clamp(0.0, (k - 1) as f64);
        let i = (pos.floor() as usize).min(k - 2);
        let l = pos - i as f64;
        stack.u[i] * (1.0 - l) + stack.u[i + 1] * l
    };
    rk4_integrate_fn(model, &stack.x[0], input, t[0], t[k - 1], substeps * (k - 1))
}
