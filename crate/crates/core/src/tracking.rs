//! Time-varying LQR tracking of a reference trajectory: error-state
//! linearization, zero-order-hold discretization, Riccati gains, closed- and
//! open-loop simulation, and attitude/rate error metrics.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    omega_of, quat_of, rk4_integrate_fn, rotor_of, DynamicsError, InputVec, Model, SatelliteParams, StateVec,
    Trajectory,
};
use crate::quat::{cross_matrix, error_quaternion, rotation_vector, UnitQuaternion, Vec3};
use crate::transcription::{DecisionStack, Observation, FOH_SUBSTEPS};

pub const NE: usize = 10;

pub type ErrorVec = SVector<f64, NE>;
pub type ErrA = SMatrix<f64, NE, NE>;
pub type ErrB = SMatrix<f64, NE, 4>;
pub type Gain = SMatrix<f64, 4, NE>;

#[derive(Debug, thiserror::Error)]
pub enum TrackingError {
    #[error("R + BᵀPB is not positive definite at step {0}")]
    NotPositiveDefinite(usize),
    #[error("horizon mismatch: {0}")]
    Horizon(String),
    #[error("empty observation set")]
    EmptySet,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: ErrA,
    pub r: SMatrix<f64, 4, 4>,
    pub alpha: f64,
    pub q_terminal: ErrA,
}

impl Default for LqrWeights {
    fn default() -> Self {
        let mut d = ErrorVec::zeros();
        d.fixed_rows_mut::<3>(0).fill(10.0);
        d.fixed_rows_mut::<3>(3).fill(1.0);
        d.fixed_rows_mut::<4>(6).fill(0.01);
        let q = ErrA::from_diagonal(&d);
        Self {
            q,
            r: SMatrix::identity(),
            alpha: 100.0,
            q_terminal: q,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GainSchedule {
    /// One gain per interval, `K − 1` in total.
    pub gains: Vec<Gain>,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub q_e_max: f64,
    pub q_e_avg: f64,
    pub w_e_max: f64,
    pub w_e_avg: f64,
}

/// Linearized error dynamics about a reference node with rate `w` and rotor momentum `r`.
pub fn error_jacobians(w: &Vec3, r: &nalgebra::Vector4<f64>, p: &SatelliteParams) -> (ErrA, ErrB) {
    let ji = p.j_inv();
    let wx = cross_matrix(w);
    let h = p.j * w + p.ar * r;
    let mut a = ErrA::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-wx));
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-ji * (wx * p.j - cross_matrix(&h))));
    a.fixed_view_mut::<3, 4>(3, 6).copy_from(&(-ji * wx * p.ar));
    let mut b = ErrB::zeros();
    b.fixed_view_mut::<3, 4>(3, 0).copy_from(&(-ji * p.ar));
    b.fixed_view_mut::<4, 4>(6, 0).copy_from(&SMatrix::<f64, 4, 4>::identity());
    (a, b)
}

/// Zero-order-hold discretization through the exponential of `[[A, B], [0, 0]]·Δt`.
pub fn discretize_zoh<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    dt: f64,
) -> (SMatrix<f64, N, N>, SMatrix<f64, N, M>) {
    let mut aug = DMatrix::<f64>::zeros(N + M, N + M);
    aug.view_mut((0, 0), (N, N)).copy_from(&(a * dt));
    aug.view_mut((0, N), (N, M)).copy_from(&(b * dt));
    let e = aug.exp();
    (
        SMatrix::from_fn(|i, j| e[(i, j)]),
        SMatrix::from_fn(|i, j| e[(i, N + j)]),
    )
}

/// Finite-horizon Riccati recursion with `P_{K−1} = Q_term`. `q[k]` weights
/// node `k < K − 1`; returns the `K − 1` gains and all `K` cost-to-go matrices.
pub fn riccati(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    q: &[DMatrix<f64>],
    r: &DMatrix<f64>,
    q_term: &DMatrix<f64>,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>), TrackingError> {
    let n = a.len();
    if b.len() != n || q.len() != n {
        return Err(TrackingError::Horizon(format!(
            "{} A, {} B and {} Q matrices",
            n,
            b.len(),
            q.len()
        )));
    }
    let mut p = vec![q_term.clone(); n + 1];
    let mut gains = vec![DMatrix::zeros(r.nrows(), q_term.nrows()); n];
    for k in (0..n).rev() {
        let pn = &p[k + 1];
        let s = r + b[k].transpose() * pn * &b[k];
        let chol = s.cholesky().ok_or(TrackingError::NotPositiveDefinite(k))?;
        let g = chol.solve(&(b[k].transpose() * pn * &a[k]));
        let acl = &a[k] - &b[k] * &g;
        let pk = &q[k] + g.transpose() * r * &g + acl.transpose() * pn * &acl;
        p[k] = (&pk + pk.transpose()) * 0.5;
        gains[k] = g;
    }
    Ok((gains, p))
}

/// Gains along a reference trajectory; nodes in `observed` get weight `α Q`.
pub fn riccati_gains(
    reference: &DecisionStack,
    p: &SatelliteParams,
    w: &LqrWeights,
    observed: &[usize],
) -> Result<GainSchedule, TrackingError> {
    let k = reference.nodes();
    if k < 2 {
        return Err(TrackingError::Horizon("at least two nodes are required".into()));
    }
    let dt = reference.tf / (k - 1) as f64;
    let mut ad = Vec::with_capacity(k - 1);
    let mut bd = Vec::with_capacity(k - 1);
    let mut qs = Vec::with_capacity(k - 1);
    for i in 0..k - 1 {
        let x = &reference.x[i];
        let (a, b) = error_jacobians(&omega_of(x), &rotor_of(x), p);
        let (a, b) = discretize_zoh(&a, &b, dt);
        ad.push(DMatrix::from_column_slice(NE, NE, a.as_slice()));
        bd.push(DMatrix::from_column_slice(NE, 4, b.as_slice()));
        let scale = if observed.contains(&i) { w.alpha } else { 1.0 };
        qs.push(DMatrix::from_column_slice(NE, NE, (w.q * scale).as_slice()));
    }
    let r = DMatrix::from_column_slice(4, 4, w.r.as_slice());
    let qt = DMatrix::from_column_slice(NE, NE, w.q_terminal.as_slice());
    let (gains, _) = riccati(&ad, &bd, &qs, &r, &qt)?;
    Ok(GainSchedule {
        gains: gains.iter().map(|g| Gain::from_column_slice(g.as_slice())).collect(),
        dt,
    })
}

/// `[φ; δω; δr]` of `x` relative to the reference state `xr`.
pub fn error_state(x: &StateVec, xr: &StateVec) -> ErrorVec {
    let q = UnitQuaternion::from_vec4(quat_of(x)).unwrap_or_else(|_| UnitQuaternion::identity());
    let qr = UnitQuaternion::from_vec4(quat_of(xr)).unwrap_or_else(|_| UnitQuaternion::identity());
    let mut e = ErrorVec::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&rotation_vector(&error_quaternion(&q, &qr)));
    e.fixed_rows_mut::<3>(3).copy_from(&(omega_of(x) - omega_of(xr)));
    e.fixed_rows_mut::<4>(6).copy_from(&(rotor_of(x) - rotor_of(xr)));
    e
}

/// Simulates the true dynamics from the reference's initial state. The
/// reference input is linearly interpolated; in closed loop a feedback
/// correction is held over each interval. Torques are clamped to `±u_max` of
/// `p_true`. Returns node samples with `FOH_SUBSTEPS` RK4 steps per interval.
pub fn simulate(
    reference: &DecisionStack,
    gains: Option<&GainSchedule>,
    p_true: &SatelliteParams,
    mode: Mode,
) -> Result<Trajectory, TrackingError> {
    let k = reference.nodes();
    if k < 2 {
        return Err(TrackingError::Horizon("at least two nodes are required".into()));
    }
    let gains = match (mode, gains) {
        (Mode::ClosedLoop, Some(g)) if g.gains.len() == k - 1 => Some(g),
        (Mode::ClosedLoop, _) => return Err(TrackingError::Horizon("closed loop needs K − 1 gains".into())),
        (Mode::OpenLoop, _) => None,
    };
    let model = Model::new(p_true)?;
    let dt = reference.tf / (k - 1) as f64;
    let clamp = |u: InputVec| u.map(|v| v.clamp(-p_true.u_max, p_true.u_max));
    let mut traj = Trajectory::default();
    let mut x = reference.x[0];
    for i in 0..k - 1 {
        let du = gains.map_or(InputVec::zeros(), |g| -g.gains[i] * error_state(&x, &reference.x[i]));
        let (u0, u1) = (reference.u[i], reference.u[i + 1]);
        let t0 = dt * i as f64;
        let input = |t: f64| {
            let s = ((t - t0) / dt).clamp(0.0, 1.0);
            clamp(u0 * (1.0 - s) + u1 * s + du)
        };
        let seg = rk4_integrate_fn(&model, &x, input, t0, t0 + dt, FOH_SUBSTEPS)?;
        traj.t.push(t0);
        traj.x.push(x);
        traj.u.push(seg.u[0]);
        x = *seg.x.last().expect("segment has samples");
    }
    traj.t.push(reference.tf);
    traj.x.push(x);
    traj.u.push(clamp(reference.u[k - 1]));
    Ok(traj)
}

/// `‖q̄⁺q − qᴵ‖` with the error quaternion's scalar part made nonnegative.
pub fn attitude_error(q: &UnitQuaternion, desired: &UnitQuaternion) -> f64 {
    let e = error_quaternion(q, desired);
    let e = if e.scalar() < 0.0 { e.neg() } else { e };
    (e.as_vec4() - UnitQuaternion::identity().as_vec4()).norm()
}

/// Per-observation attitude and rate errors of node states `x`.
pub fn observation_errors(x: &[StateVec], set: &[Observation]) -> Result<Vec<(f64, f64)>, TrackingError> {
    if set.is_empty() {
        return Err(TrackingError::EmptySet);
    }
    set.iter()
        .map(|o| {
            let xk = x
                .get(o.node)
                .ok_or_else(|| TrackingError::Horizon(format!("node {} beyond {} samples", o.node, x.len())))?;
            let q = UnitQuaternion::from_vec4(quat_of(xk)).map_err(|e| TrackingError::Horizon(e.to_string()))?;
            Ok((attitude_error(&q, &o.q), (omega_of(xk) - o.w).norm()))
        })
        .collect()
}

pub fn error_metrics(x: &[StateVec], set: &[Observation]) -> Result<ErrorMetrics, TrackingError> {
    let errs = observation_errors(x, set)?;
    let n = errs.len() as f64;
    Ok(ErrorMetrics {
        q_e_max: errs.iter().map(|e| e.0).fold(0.0, f64::max),
        q_e_avg: errs.iter().map(|e| e.0).sum::<f64>() / n,
        w_e_max: errs.iter().map(|e| e.1).fold(0.0, f64::max),
        w_e_avg: errs.iter().map(|e| e.1).sum::<f64>() / n,
    })
}

/// Observations that ask the simulated run to follow the reference at `nodes`.
pub fn reference_observations(reference: &DecisionStack, nodes: &[usize]) -> Vec<Observation> {
    nodes
        .iter()
        .filter(|&&k| k < reference.nodes())
        .map(|&k| Observation {
            node: k,
            q: UnitQuaternion::from_vec4(quat_of(&reference.x[k])).unwrap_or_else(|_| UnitQuaternion::identity()),
            w: omega_of(&reference.x[k]),
        })
        .collect()
}

/// The strongly perturbed inertia used to stress the tracker, kg·m².
pub fn perturbed_inertia() -> Matrix3<f64> {
    Matrix3::new(15.0, -1.0, 2.0, -1.0, 7.0, -3.0, 2.0, -3.0, 9.0)
}
