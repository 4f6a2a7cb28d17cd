//! Campaign of minimum-time rest-to-rest slews over a grid of axis-angle
//! rotations, per-axis power-law time and linear energy fits, and queries.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScpConfig;
use crate::dynamics::{GyrostatState, Model, SatelliteParams};
use crate::geometry::SlewTimeModel;
use crate::quat::{equidistributed_axes, error_quaternion, AxisAngle, UnitQuaternion, Vec3};
use crate::scp::{self, Problem};
use crate::transcription::FOH_SUBSTEPS;

#[derive(Debug, thiserror::Error)]
pub enum AtlasError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("axis {axis}: {found} converged angles above 1°, need at least 4")]
    InsufficientPoints { axis: usize, found: usize },
    #[error("atlas is empty")]
    Empty,
    #[error("rotation outside the tabulated range and no fit for axis {0}")]
    NoFit(usize),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationGrid {
    pub axes: Vec<Vec3>,
    pub angles_deg: Vec<f64>,
}

/// `{−180, −175, …, −15} ∪ {−10, …, −1} ∪ {1, …, 10} ∪ {15, …, 180}`.
pub fn default_angles() -> Vec<f64> {
    let neg: Vec<f64> = (3..=36).rev().map(|i| -5.0 * i as f64).chain((1..=10).rev().map(|i| -(i as f64))).collect();
    let mut out = neg.clone();
    out.extend(neg.iter().rev().map(|a| -a));
    out
}

impl RotationGrid {
    pub fn full() -> Self {
        Self {
            axes: equidistributed_axes(100),
            angles_deg: default_angles(),
        }
    }

    pub fn desk() -> Self {
        Self {
            axes: equidistributed_axes(12),
            angles_deg: vec![-120.0, -90.0, -60.0, -30.0, -10.0, -5.0, 5.0, 10.0, 30.0, 60.0, 90.0, 120.0],
        }
    }

    pub fn principal(axis: usize, angles_deg: Vec<f64>) -> Self {
        Self {
            axes: vec![Vec3::ith(axis, 1.0)],
            angles_deg,
        }
    }

    pub fn validate(&self) -> Result<(), AtlasError> {
        if self.axes.is_empty() || self.angles_deg.is_empty() {
            return Err(AtlasError::Grid("needs at least one axis and one angle".into()));
        }
        if self.axes.iter().any(|a| !(a.norm() > 0.0 && a.iter().all(|v| v.is_finite()))) {
            return Err(AtlasError::Grid("axes must be nonzero and finite".into()));
        }
        if self.angles_deg.iter().any(|a| *a == 0.0 || !(a.abs() <= 180.0)) {
            return Err(AtlasError::Grid("angles must be nonzero and within ±180°".into()));
        }
        if self.angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AtlasError::Grid("angles must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.len() * self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub axis_idx: usize,
    pub angle_deg: f64,
    pub t_min_s: f64,
    pub energy_j: f64,
    pub converged: bool,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub axis_idx: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub r2_time: f64,
    pub r2_energy: f64,
    pub n: usize,
}

impl AxisFit {
    pub fn time(&self, theta: f64) -> f64 {
        self.a * theta.abs().powf(self.b)
    }

    pub fn energy(&self, theta: f64) -> f64 {
        (self.c * theta.abs() + self.d).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlewAtlas {
    pub params_hash: String,
    pub scp: ScpConfig,
    pub axes: Vec<[f64; 3]>,
    pub angles_deg: Vec<f64>,
    pub entries: Vec<AtlasEntry>,
    #[serde(default)]
    pub fits: Vec<AxisFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlewEstimate {
    pub min_time: f64,
    pub energy: f64,
}

/// Solves one rest-to-rest slew from identity and measures its energy on a
/// dense re-integration of the optimized input.
pub fn solve_instance(
    model: &Model,
    cfg: &ScpConfig,
    axis: &Vec3,
    angle_deg: f64,
) -> Result<(scp::ScpResult, f64), AtlasError> {
    let qf = AxisAngle::new(*axis, angle_deg.to_radians())
        .map_err(|e| AtlasError::Grid(e.to_string()))?
        .to_quaternion();
    let problem = Problem::MinTime {
        x0: GyrostatState::rest(UnitQuaternion::identity()).to_vec(),
        q_final: qf,
    };
    let res = scp::run(model, &problem, cfg).map_err(|e| AtlasError::Grid(e.to_string()))?;
    let dense = scp::replay(model, &res.stack, FOH_SUBSTEPS)?;
    let energy = *dense.energy(model.params.jr)?.last().expect("replay has samples");
    Ok((res, energy))
}

/// Runs every grid instance on a pool of `jobs` threads.
pub fn build_atlas(
    grid: &RotationGrid,
    p: &SatelliteParams,
    cfg: &ScpConfig,
    jobs: usize,
) -> Result<SlewAtlas, AtlasError> {
    grid.validate()?;
    let model = Model::new(p)?;
    let tasks: Vec<(usize, f64)> = (0..grid.axes.len())
        .flat_map(|i| grid.angles_deg.iter().map(move |a| (i, *a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AtlasError::Pool(e.to_string()))?;
    let entries: Vec<AtlasEntry> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, angle)| {
                let axis = grid.axes[i].normalize();
                match solve_instance(&model, cfg, &axis, angle) {
                    Ok((res, energy)) => {
                        if !res.converged {
                            let status = res.failure.as_ref().map_or("iteration limit".to_string(), |f| f.status.clone());
                            warn!("axis {i} {axis:?} angle {angle}°: not converged ({status})");
                        }
                        AtlasEntry {
                            axis_idx: i,
                            angle_deg: angle,
                            t_min_s: res.t_f,
                            energy_j: energy,
                            converged: res.converged,
                            iters: res.iterations,
                        }
                    }
                    Err(e) => {
                        warn!("axis {i} {axis:?} angle {angle}°: {e}");
                        AtlasEntry {
                            axis_idx: i,
                            angle_deg: angle,
                            t_min_s: f64::NAN,
                            energy_j: f64::NAN,
                            converged: false,
                            iters: 0,
                        }
                    }
                }
            })
            .collect()
    });
    let atlas = SlewAtlas {
        params_hash: p.hash(),
        scp: cfg.clone(),
        axes: grid.axes.iter().map(|a| a.normalize().into()).collect(),
        angles_deg: grid.angles_deg.clone(),
        entries,
        fits: Vec::new(),
    };
    for (axis, angle) in atlas.monotonicity_violations() {
        warn!("axis {axis}: minimum time decreases at {angle}°");
    }
    info!(
        "atlas: {}/{} instances converged",
        atlas.entries.iter().filter(|e| e.converged).count(),
        atlas.entries.len()
    );
    Ok(atlas)
}

/// Ordinary least squares `y = m x + k`, with the coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let m = sxy / sxx;
    let k = my - m * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - m * a - k).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (m, k, r2)
}

/// `T = a θ^b` (log-log least squares) and `E = c θ + d` from `(θ [rad], T, E)` samples.
pub fn fit_samples(axis_idx: usize, samples: &[(f64, f64, f64)]) -> Result<AxisFit, AtlasError> {
    let pts: Vec<_> = samples.iter().filter(|s| s.0.abs() > 1f64.to_radians()).collect();
    if pts.len() < 4 {
        return Err(AtlasError::InsufficientPoints {
            axis: axis_idx,
            found: pts.len(),
        });
    }
    let lx: Vec<f64> = pts.iter().map(|s| s.0.abs().ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|s| s.1.ln()).collect();
    let (b, la, r2_time) = linear_fit(&lx, &ly);
    let th: Vec<f64> = pts.iter().map(|s| s.0.abs()).collect();
    let en: Vec<f64> = pts.iter().map(|s| s.2).collect();
    let (c, d, r2_energy) = linear_fit(&th, &en);
    Ok(AxisFit {
        axis_idx,
        a: la.exp(),
        b,
        c,
        d,
        r2_time,
        r2_energy,
        n: pts.len(),
    })
}

impl SlewAtlas {
    pub fn axis(&self, i: usize) -> Vec3 {
        Vec3::from(self.axes[i])
    }

    fn converged_on(&self, axis: usize) -> impl Iterator<Item = &AtlasEntry> {
        self.entries.iter().filter(move |e| e.axis_idx == axis && e.converged)
    }

    pub fn fit_models(&self) -> Result<Vec<AxisFit>, AtlasError> {
        if self.entries.is_empty() {
            return Err(AtlasError::Empty);
        }
        (0..self.axes.len())
            .map(|i| {
                let s: Vec<_> = self
                    .converged_on(i)
                    .map(|e| (e.angle_deg.to_radians(), e.t_min_s, e.energy_j))
                    .collect();
                fit_samples(i, &s)
            })
            .collect()
    }

    /// `(axis, angle)` pairs where minimum time drops as |θ| grows on the same side.
    pub fn monotonicity_violations(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.axes.len() {
            for sign in [-1.0, 1.0] {
                let mut side: Vec<_> = self.converged_on(i).filter(|e| e.angle_deg * sign > 0.0).collect();
                side.sort_by(|a, b| a.angle_deg.abs().total_cmp(&b.angle_deg.abs()));
                for w in side.windows(2) {
                    if w[1].t_min_s < w[0].t_min_s * (1.0 - 1e-3) {
                        out.push((i, w[1].angle_deg));
                    }
                }
            }
        }
        out
    }

    /// Rest-to-rest time and energy from `from` to `to`: nearest tabulated axis
    /// (either sign), linear in angle between converged knots with an implicit
    /// zero knot, and the axis fit beyond the tabulated range.
    pub fn query(&self, from: &UnitQuaternion, to: &UnitQuaternion) -> Result<SlewEstimate, AtlasError> {
        if self.axes.is_empty() || self.entries.is_empty() {
            return Err(AtlasError::Empty);
        }
        let rel = AxisAngle::from_quaternion(&error_quaternion(to, from));
        if rel.angle() == 0.0 {
            return Ok(SlewEstimate {
                min_time: 0.0,
                energy: 0.0,
            });
        }
        let dir = rel.axis();
        let (idx, sign) = (0..self.axes.len())
            .map(|i| {
                let d = self.axis(i).dot(&dir);
                (i, if d >= 0.0 { 1.0 } else { -1.0 }, d.abs())
            })
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .map(|(i, s, _)| (i, s))
            .expect("nonempty axes");
        let theta = sign * rel.angle().to_degrees();
        let mut knots: Vec<(f64, f64, f64)> = self
            .converged_on(idx)
            .map(|e| (e.angle_deg, e.t_min_s, e.energy_j))
            .chain(std::iter::once((0.0, 0.0, 0.0)))
            .collect();
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
        if theta >= lo && theta <= hi && knots.len() > 1 {
            let j = knots.partition_point(|k| k.0 <= theta).clamp(1, knots.len() - 1);
            let (a, b) = (knots[j - 1], knots[j]);
            if theta == a.0 {
                return Ok(SlewEstimate {
                    min_time: a.1,
                    energy: a.2,
                });
            }
            let l = (theta - a.0) / (b.0 - a.0);
            return Ok(SlewEstimate {
                min_time: a.1 + l * (b.1 - a.1),
                energy: a.2 + l * (b.2 - a.2),
            });
        }
        let fit = self.fits.iter().find(|f| f.axis_idx == idx).ok_or(AtlasError::NoFit(idx))?;
        let th = theta.to_radians();
        Ok(SlewEstimate {
            min_time: fit.time(th),
            energy: fit.energy(th),
        })
    }
}

impl SlewTimeModel for SlewAtlas {
    fn slew_time(&self, from: &UnitQuaternion, to: &UnitQuaternion) -> f64 {
        self.query(from, to).map_or(f64::INFINITY, |e| e.min_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub time: f64,
    /// The rotors would exceed `r_max` before the switching time.
    pub saturated: bool,
}

/// Bang-bang double-integrator time `2√(θ J_axis / τ_axis)` about a principal axis.
pub fn analytic_oracle(p: &SatelliteParams, axis: usize, theta: f64) -> OracleEstimate {
    let tau = p.axis_torque(axis);
    let time = 2.0 * (theta.abs() * p.j[(axis, axis)] / tau).sqrt();
    let saturated = time / 2.0 > p.r_max / p.u_max;
    if saturated {
        warn!("axis {axis}, θ = {theta} rad: rotor momentum saturates before the switch; oracle is optimistic");
    }
    OracleEstimate { time, saturated }
}
