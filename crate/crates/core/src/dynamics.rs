//! Gyrostat equations of motion, their Jacobians, RK4 integration and
//! power/energy functionals.

use nalgebra::{Matrix3, Matrix3x4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::quat::{cross_matrix, omega_matrix, xi_matrix, UnitQuaternion, Vec3};

pub const NX: usize = 11;
pub const NU: usize = 4;

pub type StateVec = SVector<f64, NX>;
pub type InputVec = SVector<f64, NU>;
pub type MatX = SMatrix<f64, NX, NX>;
pub type MatXU = SMatrix<f64, NX, NU>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("invalid satellite parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state derivative at t = {t} s")]
    NonFinite { t: f64 },
    #[error("{0}")]
    Input(String),
}

/// Spacecraft inertia, rotor geometry and actuator limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteParams {
    /// inertia, kg·m²
    pub j: Matrix3<f64>,
    /// rotor spin axes as columns
    pub ar: Matrix3x4<f64>,
    /// N·m·s
    pub r_max: f64,
    /// N·m
    pub u_max: f64,
    /// rotor inertia about its spin axis, kg·m²
    pub jr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl SatelliteParams {
    /// Reference small satellite with a four-rotor pyramid.
    pub fn reference() -> Self {
        let (a, b) = (0.68, 0.26);
        Self {
            j: Matrix3::from_diagonal(&Vec3::new(8.5, 8.5, 6.0)),
            ar: Matrix3x4::new(
                -a, a, a, -a, //
                -a, -a, a, a, //
                b, b, b, b,
            ),
            r_max: 0.8,
            u_max: 0.06,
            jr: 0.0096,
            p_max: None,
            e_max: None,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.to_string()));
        if self.j.iter().any(|v| !v.is_finite()) || self.ar.iter().any(|v| !v.is_finite()) {
            return bad("non-finite entries");
        }
        if (self.j - self.j.transpose()).abs().max() > 1e-9 * self.j.abs().max() {
            return bad("J is not symmetric");
        }
        if self.j.symmetric_eigenvalues().min() <= 0.0 {
            return bad("J is not positive definite");
        }
        for c in 0..4 {
            if (self.ar.column(c).norm() - 1.0).abs() > 1e-2 {
                return bad(&format!("A_r column {c} is not unit norm"));
            }
        }
        if !(self.r_max > 0.0 && self.u_max > 0.0 && self.jr > 0.0) {
            return bad("r_max, u_max and Jr must be positive");
        }
        if self.p_max.is_some_and(|v| !(v > 0.0)) || self.e_max.is_some_and(|v| !(v > 0.0)) {
            return bad("P_max and E_max must be positive when set");
        }
        Ok(())
    }

    pub fn j_inv(&self) -> Matrix3<f64> {
        self.j.try_inverse().expect("J validated as positive definite")
    }

    /// Principal-axis torque authority `Σᵢ |A_r[axis, i]| · u_max`.
    pub fn axis_torque(&self, axis: usize) -> f64 {
        self.ar.row(axis).iter().map(|v| v.abs()).sum::<f64>() * self.u_max
    }

    /// Principal-axis momentum capacity `Σᵢ |A_r[axis, i]| · r_max`.
    pub fn axis_momentum(&self, axis: usize) -> f64 {
        self.ar.row(axis).iter().map(|v| v.abs()).sum::<f64>() * self.r_max
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `x = [q; ω; r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyrostatState {
    pub q: UnitQuaternion,
    pub w: Vec3,
    pub r: Vector4<f64>,
}

impl GyrostatState {
    pub fn rest(q: UnitQuaternion) -> Self {
        Self {
            q,
            w: Vec3::zeros(),
            r: Vector4::zeros(),
        }
    }

    pub fn to_vec(&self) -> StateVec {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&self.q.as_vec4());
        x.fixed_rows_mut::<3>(4).copy_from(&self.w);
        x.fixed_rows_mut::<4>(7).copy_from(&self.r);
        x
    }

    /// Normalizes the quaternion block.
    pub fn from_vec(x: &StateVec) -> Result<Self, crate::quat::QuatError> {
        Ok(Self {
            q: UnitQuaternion::from_vec4(quat_of(x))?,
            w: omega_of(x),
            r: rotor_of(x),
        })
    }
}

pub fn quat_of(x: &StateVec) -> Vector4<f64> {
    x.fixed_rows::<4>(0).into_owned()
}

pub fn omega_of(x: &StateVec) -> Vec3 {
    x.fixed_rows::<3>(4).into_owned()
}

pub fn rotor_of(x: &StateVec) -> Vector4<f64> {
    x.fixed_rows::<4>(7).into_owned()
}

/// Precomputed quantities for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: SatelliteParams,
    pub j_inv: Matrix3<f64>,
}

impl Model {
    pub fn new(params: &SatelliteParams) -> Result<Self, DynamicsError> {
        params.validate()?;
        Ok(Self {
            params: params.clone(),
            j_inv: params.j_inv(),
        })
    }

    /// `f(x, u) = [½Ωq; −J⁻¹(ω×(Jω + A_r r) + A_r u); u]`
    pub fn f(&self, x: &StateVec, u: &InputVec) -> StateVec {
        let p = &self.params;
        let q = quat_of(x);
        let w = omega_of(x);
        let r = rotor_of(x);
        let h = p.j * w + p.ar * r;
        let qd = omega_matrix(&w) * q * 0.5;
        let wd = -self.j_inv * (w.cross(&h) + p.ar * u);
        let mut out = StateVec::zeros();
        out.fixed_rows_mut::<4>(0).copy_from(&qd);
        out.fixed_rows_mut::<3>(4).copy_from(&wd);
        out.fixed_rows_mut::<4>(7).copy_from(u);
        out
    }

    /// `(∂f/∂x, ∂f/∂u)`
    pub fn jacobians(&self, x: &StateVec, _u: &InputVec) -> (MatX, MatXU) {
        let p = &self.params;
        let q = quat_of(x);
        let w = omega_of(x);
        let r = rotor_of(x);
        let h = p.j * w + p.ar * r;
        let wx = cross_matrix(&w);
        let mut a = MatX::zeros();
        a.fixed_view_mut::<4, 4>(0, 0).copy_from(&(omega_matrix(&w) * 0.5));
        a.fixed_view_mut::<4, 3>(0, 4).copy_from(&(xi_matrix(&q) * 0.5));
        a.fixed_view_mut::<3, 3>(4, 4)
            .copy_from(&(-self.j_inv * (wx * p.j - cross_matrix(&h))));
        a.fixed_view_mut::<3, 4>(4, 7).copy_from(&(-self.j_inv * wx * p.ar));
        let mut b = MatXU::zeros();
        b.fixed_view_mut::<3, 4>(4, 0).copy_from(&(-self.j_inv * p.ar));
        b.fixed_view_mut::<4, 4>(7, 0).copy_from(&nalgebra::Matrix4::identity());
        (a, b)
    }

    /// Linearization of `F = t_f f` about `(x̄, ū, t̄_f)`:
    /// `A = t̄_f ∂f/∂x`, `B = t̄_f ∂f/∂u`, `Σ = f`, `e = −(A x̄ + B ū)`.
    pub fn normalized_jacobians(&self, x: &StateVec, u: &InputVec, tf: f64) -> Linearization {
        let (dfx, dfu) = self.jacobians(x, u);
        let a = dfx * tf;
        let b = dfu * tf;
        let sigma = self.f(x, u);
        let e = -(a * x + b * u);
        Linearization { a, b, sigma, e }
    }

    /// `Σᵢ |uᵢ rᵢ| / J_r`, watts.
    pub fn power(&self, x: &StateVec, u: &InputVec) -> f64 {
        instantaneous_power(&rotor_of(x), u, self.params.jr)
    }
}

#[derive(Debug, Clone)]
pub struct Linearization {
    pub a: MatX,
    pub b: MatXU,
    pub sigma: StateVec,
    pub e: StateVec,
}

pub fn instantaneous_power(r: &Vector4<f64>, u: &InputVec, jr: f64) -> f64 {
    r.iter().zip(u.iter()).map(|(r, u)| (u * r).abs()).sum::<f64>() / jr
}

/// Trapezoidal cumulative energy. Errors with fewer than two samples.
pub fn cumulative_energy(t: &[f64], power: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    if t.len() < 2 || t.len() != power.len() {
        return Err(DynamicsError::Input("energy needs at least two matching samples".into()));
    }
    let mut e = Vec::with_capacity(t.len());
    e.push(0.0);
    for i in 1..t.len() {
        let prev = e[i - 1];
        e.push(prev + 0.5 * (t[i] - t[i - 1]) * (power[i] + power[i - 1]));
    }
    Ok(e)
}

/// Piecewise-linear input `u(t)` through knots; held constant beyond the ends.
#[derive(Debug, Clone)]
pub struct InputSignal {
    pub t: Vec<f64>,
    pub u: Vec<InputVec>,
}

impl InputSignal {
    pub fn new(t: Vec<f64>, u: Vec<InputVec>) -> Result<Self, DynamicsError> {
        if t.is_empty() || t.len() != u.len() {
            return Err(DynamicsError::Input("input knots and values must match".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DynamicsError::Input("input knot times must increase".into()));
        }
        Ok(Self { t, u })
    }

    pub fn constant(u: InputVec) -> Self {
        Self {
            t: vec![0.0],
            u: vec![u],
        }
    }

    pub fn eval(&self, t: f64) -> InputVec {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.u[0];
        }
        if t >= self.t[n - 1] {
            return self.u[n - 1];
        }
        let i = self.t.partition_point(|&x| x <= t).saturating_sub(1).min(n - 2);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let l = (t - t0) / (t1 - t0);
        self.u[i] * (1.0 - l) + self.u[i + 1] * l
    }
}

/// Sampled trajectory; `u[i]` is the input applied at `t[i]`.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<StateVec>,
    pub u: Vec<InputVec>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn power(&self, jr: f64) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.u)
            .map(|(x, u)| instantaneous_power(&rotor_of(x), u, jr))
            .collect()
    }

    pub fn energy(&self, jr: f64) -> Result<Vec<f64>, DynamicsError> {
        cumulative_energy(&self.t, &self.power(jr))
    }
}

fn rk4_step<U: Fn(f64) -> InputVec>(
    model: &Model,
    x: &StateVec,
    u: &U,
    t: f64,
    h: f64,
) -> Result<StateVec, DynamicsError> {
    let eval = |x: &StateVec, t: f64| {
        let d = model.f(x, &u(t));
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(DynamicsError::NonFinite { t })
        }
    };
    let k1 = eval(x, t)?;
    let k2 = eval(&(x + k1 * (h / 2.0)), t + h / 2.0)?;
    let k3 = eval(&(x + k2 * (h / 2.0)), t + h / 2.0)?;
    let k4 = eval(&(x + k3 * h), t + h)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Fixed-step RK4 from `t0` to `tf`, renormalizing the quaternion after every step.
/// Returns `steps + 1` samples including both ends.
pub fn rk4_integrate(
    model: &Model,
    x0: &StateVec,
    u: &InputSignal,
    t0: f64,
    tf: f64,
    steps: usize,
) -> Result<Trajectory, DynamicsError> {
    rk4_integrate_fn(model, x0, |t| u.eval(t), t0, tf, steps)
}

/// [`rk4_integrate`] with an arbitrary input function.
pub fn rk4_integrate_fn<U: Fn(f64) -> InputVec>(
    model: &Model,
    x0: &StateVec,
    u: U,
    t0: f64,
    tf: f64,
    steps: usize,
) -> Result<Trajectory, DynamicsError> {
    if steps == 0 || !(tf > t0) {
        return Err(DynamicsError::Input("need steps ≥ 1 and tf > t0".into()));
    }
    let h = (tf - t0) / steps as f64;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
    };
    let mut x = *x0;
    traj.t.push(t0);
    traj.x.push(x);
    traj.u.push(u(t0));
    for i in 0..steps {
        let t = t0 + h * i as f64;
        x = rk4_step(model, &x, &u, t, h)?;
        let qn = quat_of(&x).norm();
        x.fixed_rows_mut::<4>(0).unscale_mut(qn);
        let tn = t0 + h * (i + 1) as f64;
        traj.t.push(tn);
        traj.x.push(x);
        traj.u.push(u(tn));
    }
    Ok(traj)
}

pub const CSV_HEADER: [&str; 18] = [
    "t", "q1", "q2", "q3", "q4", "wx", "wy", "wz", "r1", "r2", "r3", "r4", "u1", "u2", "u3", "u4", "power_w",
    "energy_j",
];

impl Trajectory {
    pub fn write_csv<W: std::io::Write>(&self, out: W, jr: f64) -> Result<(), DynamicsError> {
        let io = |e: csv::Error| DynamicsError::Input(e.to_string());
        let power = self.power(jr);
        let energy = self.energy(jr)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(io)?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(18);
            row.push(self.t[i]);
            row.extend(self.x[i].iter());
            row.extend(self.u[i].iter());
            row.push(power[i]);
            row.push(energy[i]);
            w.write_record(row.iter().map(|v| format!("{v:.12e}"))).map_err(io)?;
        }
        w.flush().map_err(|e| DynamicsError::Input(e.to_string()))?;
        Ok(())
    }

    /// Reads the columns written by [`Trajectory::write_csv`]; power and
    /// energy are recomputed rather than read.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, DynamicsError> {
        let err = |m: String| DynamicsError::Input(m);
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(err(format!("unexpected trajectory header: {header:?}")));
        }
        let mut traj = Trajectory::default();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(format!("row {}: {e}", line + 2)))?;
            traj.t.push(v[0]);
            traj.x.push(StateVec::from_column_slice(&v[1..12]));
            traj.u.push(InputVec::from_column_slice(&v[12..16]));
        }
        Ok(traj)
    }

    /// Largest violations of the unit-norm and actuator-bound invariants:
    /// `(max |‖q‖−1|, max excess of |rᵢ| over r_max, max excess of |uᵢ| over u_max)`.
    pub fn invariant_violations(&self, p: &SatelliteParams) -> (f64, f64, f64) {
        let mut out = (0.0f64, 0.0f64, 0.0f64);
        for (x, u) in self.x.iter().zip(&self.u) {
            out.0 = out.0.max((quat_of(x).norm() - 1.0).abs());
            out.1 = out.1.max(rotor_of(x).amax() - p.r_max);
            out.2 = out.2.max(u.amax() - p.u_max);
        }
        out
    }
}
