//! Circular-orbit and spherical-Earth geometry, target pointing frames,
//! access windows and the sweep-pattern schedule generator.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quat::{UnitQuaternion, Vec3};
use crate::transcription::{Observation, PointingScheduleSpec};

pub const EARTH_RADIUS_KM: f64 = 6378.137;
pub const MU_KM3_S2: f64 = 398600.4418;
pub const EARTH_RATE: f64 = 7.2921159e-5;
pub const DEFAULT_MAX_OFF_NADIR_DEG: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid orbit: {0}")]
    InvalidOrbit(String),
    #[error("invalid target {id}: {reason}")]
    InvalidTarget { id: String, reason: String },
    #[error("pointing frame is degenerate: velocity is parallel to the line of sight")]
    DegeneratePointing,
    #[error("no feasible observation within the horizon")]
    NoFeasibleObservation,
    #[error("targets file: {0}")]
    Csv(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircularOrbit {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub arg_lat_deg: f64,
    #[serde(default)]
    pub epoch_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitState {
    pub pos: Vec3,
    pub vel: Vec3,
}

impl CircularOrbit {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.altitude_km > 0.0 && self.altitude_km.is_finite()) {
            return Err(GeometryError::InvalidOrbit("altitude must be positive".into()));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(GeometryError::InvalidOrbit("inclination must lie in [0, 180] deg".into()));
        }
        if !(self.raan_deg.is_finite() && self.arg_lat_deg.is_finite() && self.epoch_s.is_finite()) {
            return Err(GeometryError::InvalidOrbit("angles and epoch must be finite".into()));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    pub fn mean_motion(&self) -> f64 {
        (MU_KM3_S2 / self.radius().powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion()
    }

    /// ECI position (km) and velocity (km/s) at time `t`.
    pub fn propagate(&self, t: f64) -> OrbitState {
        let r = self.radius();
        let n = self.mean_motion();
        let u = self.arg_lat_deg.to_radians() + n * (t - self.epoch_s);
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), self.raan_deg.to_radians())
            * Rotation3::from_axis_angle(&Vec3::x_axis(), self.inclination_deg.to_radians());
        let (s, c) = u.sin_cos();
        OrbitState {
            pos: rot * Vec3::new(r * c, r * s, 0.0),
            vel: rot * Vec3::new(-r * n * s, r * n * c, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTarget {
    pub id: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub region: String,
}

impl GroundTarget {
    /// Validates latitude and wraps longitude into `(−180, 180]`.
    pub fn new(id: impl Into<String>, lat_deg: f64, lon_deg: f64, region: impl Into<String>) -> Result<Self, GeometryError> {
        let id = id.into();
        if !(lat_deg.abs() <= 90.0) || !lon_deg.is_finite() {
            return Err(GeometryError::InvalidTarget {
                id,
                reason: format!("latitude {lat_deg} / longitude {lon_deg} out of range"),
            });
        }
        let mut lon = (lon_deg + 180.0).rem_euclid(360.0) - 180.0;
        if lon == -180.0 {
            lon = 180.0;
        }
        Ok(Self {
            id,
            lat_deg,
            lon_deg: lon,
            region: region.into(),
        })
    }

    pub fn ecef(&self) -> Vec3 {
        let (sl, cl) = self.lat_deg.to_radians().sin_cos();
        let (so, co) = self.lon_deg.to_radians().sin_cos();
        Vec3::new(cl * co, cl * so, sl) * EARTH_RADIUS_KM
    }
}

/// Earth-fixed position rotated into ECI by the Earth rotation angle `ω_E t`.
pub fn target_eci(target: &GroundTarget, t: f64) -> Vec3 {
    Rotation3::from_axis_angle(&Vec3::z_axis(), EARTH_RATE * t) * target.ecef()
}

/// Attitude of the frame with z along the line of sight and x along the
/// velocity component orthogonal to it.
pub fn pointing_quaternion(sat: &OrbitState, target: &Vec3) -> Result<UnitQuaternion, GeometryError> {
    let los = target - sat.pos;
    let z = los.try_normalize(1e-12).ok_or(GeometryError::DegeneratePointing)?;
    let xv = sat.vel - z * sat.vel.dot(&z);
    if xv.norm() <= 1e-9 * sat.vel.norm().max(1e-300) {
        return Err(GeometryError::DegeneratePointing);
    }
    let x = xv.normalize();
    let y = z.cross(&x);
    Ok(UnitQuaternion::from_rotation_matrix(&Matrix3::from_columns(&[x, y, z])))
}

pub fn off_nadir_deg(sat: &OrbitState, target: &Vec3) -> f64 {
    let los = target - sat.pos;
    let c = (-sat.pos).dot(&los) / (sat.pos.norm() * los.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// The satellite is above the target's local horizon.
pub fn line_of_sight_clear(sat: &OrbitState, target: &Vec3) -> bool {
    (sat.pos - target).dot(target) > 0.0
}

pub fn accessible(sat: &OrbitState, target: &Vec3, max_off_nadir_deg: f64) -> bool {
    line_of_sight_clear(sat, target) && off_nadir_deg(sat, target) <= max_off_nadir_deg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAccess {
    pub target_id: String,
    /// Closed intervals `[first, last]` of accessible sample times.
    pub windows: Vec<(f64, f64)>,
}

fn sample_times(horizon: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = (horizon / step + 1e-9).floor() as usize;
    (0..=n).map(move |i| i as f64 * step)
}

/// Access intervals over `[0, horizon]`, sampled every `step` seconds.
pub fn access_windows(
    orbit: &CircularOrbit,
    targets: &[GroundTarget],
    horizon: f64,
    max_off_nadir_deg: f64,
    step: f64,
) -> Vec<TargetAccess> {
    assert!(step > 0.0, "access step must be positive");
    let states: Vec<(f64, OrbitState)> = sample_times(horizon, step).map(|t| (t, orbit.propagate(t))).collect();
    targets
        .par_iter()
        .map(|tg| {
            let mut windows = Vec::new();
            let mut open: Option<(f64, f64)> = None;
            for (t, s) in &states {
                if accessible(s, &target_eci(tg, *t), max_off_nadir_deg) {
                    open = Some(open.map_or((*t, *t), |(a, _)| (a, *t)));
                } else if let Some(w) = open.take() {
                    windows.push(w);
                }
            }
            windows.extend(open);
            TargetAccess {
                target_id: tg.id.clone(),
                windows,
            }
        })
        .collect()
}

/// Estimated rest-to-rest slew time between two attitudes.
pub trait SlewTimeModel {
    fn slew_time(&self, from: &UnitQuaternion, to: &UnitQuaternion) -> f64;
}

impl<F: Fn(&UnitQuaternion, &UnitQuaternion) -> f64> SlewTimeModel for F {
    fn slew_time(&self, from: &UnitQuaternion, to: &UnitQuaternion) -> f64 {
        self(from, to)
    }
}

/// Axis-independent power law `T = a θ^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSlewModel {
    pub a: f64,
    pub b: f64,
}

impl PowerLawSlewModel {
    /// Bang-bang double-integrator bound of the slowest principal axis.
    pub fn principal_bound(p: &crate::dynamics::SatelliteParams) -> Self {
        let a = (0..3)
            .map(|i| 2.0 * (p.j[(i, i)] / p.axis_torque(i)).sqrt())
            .fold(0.0, f64::max);
        Self { a, b: 0.5 }
    }
}

impl SlewTimeModel for PowerLawSlewModel {
    fn slew_time(&self, from: &UnitQuaternion, to: &UnitQuaternion) -> f64 {
        self.a * from.angle_to(to).powf(self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t_s: f64,
    pub q: UnitQuaternion,
    pub w: [f64; 3],
    /// Set on observation samples; `None` on the zero-rate holds around them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingSchedule {
    pub sample_s: f64,
    pub entries: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub target_id: String,
    pub region: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub schedule: PointingSchedule,
    pub skipped: Vec<SkippedTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sample_s: f64,
    pub horizon_s: f64,
    pub max_off_nadir_deg: f64,
    /// Multiplier on the model's slew time before rounding up to whole samples;
    /// a piecewise-linear torque on the sample grid cannot switch instantly.
    #[serde(default = "default_slew_margin")]
    pub slew_margin: f64,
    /// Stop after this many observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_observations: Option<usize>,
}

fn default_slew_margin() -> f64 {
    1.25
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sample_s: 1.0,
            horizon_s: 600.0,
            max_off_nadir_deg: DEFAULT_MAX_OFF_NADIR_DEG,
            slew_margin: default_slew_margin(),
            max_observations: None,
        }
    }
}

impl PointingSchedule {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::Schedule(m));
        if !(self.sample_s > 0.0) {
            return bad("sample_s must be positive".into());
        }
        if self.entries.is_empty() {
            return bad("no entries".into());
        }
        for w in self.entries.windows(2) {
            if !(w[1].t_s > w[0].t_s) {
                return bad(format!("times not strictly increasing at t = {}", w[1].t_s));
            }
        }
        for e in &self.entries {
            if !e.t_s.is_finite() || e.w.iter().any(|v| !v.is_finite()) {
                return bad(format!("non-finite entry at t = {}", e.t_s));
            }
            let off = (e.t_s - self.entries[0].t_s) / self.sample_s;
            if (off - off.round()).abs() > 1e-6 {
                return bad(format!("t = {} is not on the sample grid", e.t_s));
            }
        }
        Ok(())
    }

    /// Entries whose gap to the predecessor is shorter than the model's slew time.
    pub fn audit(&self, model: &dyn SlewTimeModel) -> Vec<(usize, f64, f64)> {
        self.entries
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let gap = w[1].t_s - w[0].t_s;
                let need = model.slew_time(&w[0].q, &w[1].q);
                (gap + 1e-9 < need).then_some((i + 1, gap, need))
            })
            .collect()
    }

    /// Multi-target problem starting at the first entry. Nodes are one sample
    /// apart; the horizon runs to the last entry unless `t_f` extends it.
    pub fn to_spec(&self, t_f: Option<f64>, gamma: f64, rho: f64) -> Result<PointingScheduleSpec, GeometryError> {
        self.validate()?;
        let t0 = self.entries[0].t_s;
        let span = self.entries.last().expect("nonempty").t_s - t0;
        let t_f = t_f.unwrap_or(span.max(self.sample_s));
        if span > t_f + 1e-9 {
            return Err(GeometryError::Schedule(format!(
                "entries span {span} s beyond the horizon t_f = {t_f} s"
            )));
        }
        let k = (t_f / self.sample_s).round() as usize + 1;
        if ((k - 1) as f64 * self.sample_s - t_f).abs() > 1e-6 {
            return Err(GeometryError::Schedule("t_f is not a whole number of samples".into()));
        }
        let mut prev: Option<UnitQuaternion> = None;
        let observations = self
            .entries
            .iter()
            .map(|e| {
                let q = match prev {
                    Some(p) if p.dot(&e.q) < 0.0 => e.q.neg(),
                    _ => e.q,
                };
                prev = Some(q);
                Observation {
                    node: ((e.t_s - t0) / self.sample_s).round() as usize,
                    q,
                    w: Vec3::from(e.w),
                }
            })
            .collect();
        Ok(PointingScheduleSpec {
            k,
            t_f: (k - 1) as f64 * self.sample_s,
            gamma,
            rho,
            observations,
        })
    }
}

struct Candidate<'a> {
    target: &'a GroundTarget,
    windows: Vec<(f64, f64)>,
    along: f64,
    cross: f64,
}

impl Candidate<'_> {
    fn first_access(&self) -> f64 {
        self.windows.first().map_or(f64::INFINITY, |w| w.0)
    }
}

/// Boustrophedon order: rows across the ground track, visited in order of
/// first access, each row swept starting from its earliest-accessible end.
fn sweep_order(mut members: Vec<Candidate<'_>>) -> Vec<Candidate<'_>> {
    if members.len() <= 1 {
        return members;
    }
    let mut gaps: Vec<f64> = members
        .iter()
        .enumerate()
        .map(|(i, a)| {
            members
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| ((a.along - b.along).powi(2) + (a.cross - b.cross).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let tol = 0.5 * gaps[gaps.len() / 2];
    members.sort_by(|a, b| a.along.total_cmp(&b.along));
    let mut rows: Vec<Vec<Candidate<'_>>> = Vec::new();
    for m in members {
        match rows.last_mut() {
            Some(row) if (m.along - row[0].along).abs() <= tol => row.push(m),
            _ => rows.push(vec![m]),
        }
    }
    let first = |r: &Vec<Candidate<'_>>| r.iter().map(Candidate::first_access).fold(f64::INFINITY, f64::min);
    rows.sort_by(|a, b| first(a).total_cmp(&first(b)));
    let mut out = Vec::new();
    let mut forward = None;
    for mut row in rows {
        row.sort_by(|a, b| a.cross.total_cmp(&b.cross));
        let dir = forward.unwrap_or_else(|| row[0].first_access() <= row[row.len() - 1].first_access());
        if !dir {
            row.reverse();
        }
        forward = Some(!dir);
        out.extend(row);
    }
    out
}

/// Greedy sweep-pattern schedule. Regions are taken in order of first access
/// and finished before the next; inside a region targets are swept row by row.
/// Each observation is flanked by zero-rate holds at the neighboring samples,
/// and consecutive attitudes are at least one (rounded-up) slew time apart.
pub fn build_sweep_schedule(
    orbit: &CircularOrbit,
    targets: &[GroundTarget],
    model: &dyn SlewTimeModel,
    cfg: &SweepConfig,
) -> Result<ScheduleReport, GeometryError> {
    orbit.validate()?;
    if !(cfg.sample_s > 0.0 && cfg.horizon_s > 0.0 && cfg.slew_margin >= 1.0) {
        return Err(GeometryError::Schedule(
            "sample_s and horizon_s must be positive and slew_margin at least 1".into(),
        ));
    }
    let access = access_windows(orbit, targets, cfg.horizon_s, cfg.max_off_nadir_deg, cfg.sample_s);
    let mut regions: BTreeMap<&str, Vec<Candidate<'_>>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for (tg, acc) in targets.iter().zip(access) {
        if acc.windows.is_empty() {
            skipped.push(SkippedTarget {
                target_id: tg.id.clone(),
                region: tg.region.clone(),
                reason: "never accessible within the horizon".into(),
            });
            continue;
        }
        let s = orbit.propagate(acc.windows[0].0);
        let rel = target_eci(tg, acc.windows[0].0) - s.pos;
        let h = s.pos.cross(&s.vel).normalize();
        regions.entry(tg.region.as_str()).or_default().push(Candidate {
            target: tg,
            along: rel.dot(&s.vel.normalize()),
            cross: rel.dot(&h),
            windows: acc.windows,
        });
    }
    let mut regions: Vec<Vec<Candidate<'_>>> = regions.into_values().collect();
    let region_first = |r: &Vec<Candidate<'_>>| r.iter().map(Candidate::first_access).fold(f64::INFINITY, f64::min);
    regions.sort_by(|a, b| region_first(a).total_cmp(&region_first(b)));

    let dt = cfg.sample_s;
    let pointing = |tg: &GroundTarget, t: f64| pointing_quaternion(&orbit.propagate(t), &target_eci(tg, t));
    let mut entries: Vec<ScheduleEntry> = Vec::new();
    let limit = cfg.max_observations.unwrap_or(usize::MAX);
    let mut observed = 0usize;
    for region in regions {
        for c in sweep_order(region) {
            let skip = |reason: &str| SkippedTarget {
                target_id: c.target.id.clone(),
                region: c.target.region.clone(),
                reason: reason.into(),
            };
            if observed >= limit {
                skipped.push(skip("observation limit reached"));
                continue;
            }
            // the pre-observation hold at t − dt must trail the last entry by a full slew
            let last = entries.last().map(|e| (e.t_s, e.q));
            let mut chosen = None;
            'windows: for &(w0, w1) in &c.windows {
                let mut t = last.map_or(w0, |(tl, _)| w0.max(tl + 2.0 * dt));
                while t <= w1 + 1e-9 {
                    let Ok(q) = pointing(c.target, t) else { break };
                    let Some((tl, ql)) = last else {
                        chosen = Some((t, q));
                        break 'windows;
                    };
                    let need = (cfg.slew_margin * model.slew_time(&ql, &q) / dt - 1e-9).ceil().max(1.0) * dt;
                    let earliest = tl + dt + need;
                    if t + 1e-9 >= earliest {
                        chosen = Some((t, q));
                        break 'windows;
                    }
                    t = ((earliest - 1e-9) / dt).ceil() * dt;
                }
            }
            let Some((t, q)) = chosen else {
                skipped.push(skip("slew time exceeds the remaining access window"));
                continue;
            };
            let tl = entries.last().map(|e| e.t_s);
            let zero = [0.0; 3];
            if t - dt >= 0.0 && tl.map_or(true, |tl| t - dt > tl + 1e-9) {
                entries.push(ScheduleEntry {
                    t_s: t - dt,
                    q,
                    w: zero,
                    target_id: None,
                });
            }
            entries.push(ScheduleEntry {
                t_s: t,
                q,
                w: zero,
                target_id: Some(c.target.id.clone()),
            });
            if t + dt <= cfg.horizon_s + 1e-9 {
                entries.push(ScheduleEntry {
                    t_s: t + dt,
                    q,
                    w: zero,
                    target_id: None,
                });
            }
            observed += 1;
        }
    }
    if observed == 0 {
        return Err(GeometryError::NoFeasibleObservation);
    }
    // hemisphere continuity along the schedule
    for i in 1..entries.len() {
        if entries[i - 1].q.dot(&entries[i].q) < 0.0 {
            entries[i].q = entries[i].q.neg();
        }
    }
    Ok(ScheduleReport {
        schedule: PointingSchedule {
            sample_s: dt,
            entries,
        },
        skipped,
    })
}

#[derive(Debug, Deserialize)]
struct TargetRow {
    id: String,
    lat_deg: f64,
    lon_deg: f64,
    region: String,
}

/// Reads `id,lat_deg,lon_deg,region` rows.
pub fn read_targets_csv<R: std::io::Read>(input: R) -> Result<Vec<GroundTarget>, GeometryError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<TargetRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| GeometryError::Csv(format!("row {}: {e}", i + 2)))?;
            GroundTarget::new(row.id, row.lat_deg, row.lon_deg, row.region)
        })
        .collect()
}

/// Regular lattice of `rows × cols` targets spaced `spacing_km` apart,
/// centred on the ground point below the orbit at `t_center`, with rows along
/// the ground track.
pub fn synthetic_lattice(
    orbit: &CircularOrbit,
    t_center: f64,
    rows: usize,
    cols: usize,
    spacing_km: f64,
    region: &str,
) -> Vec<GroundTarget> {
    let s = orbit.propagate(t_center);
    let earth = Rotation3::from_axis_angle(&Vec3::z_axis(), -EARTH_RATE * t_center);
    let up = s.pos.normalize();
    let along = (s.vel - up * s.vel.dot(&up)).normalize();
    let cross = up.cross(&along);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let da = (i as f64 - (rows - 1) as f64 / 2.0) * spacing_km;
            let dc = (j as f64 - (cols - 1) as f64 / 2.0) * spacing_km;
            let p = earth * (up * EARTH_RADIUS_KM + along * da + cross * dc);
            let p = p.normalize();
            let lat = p.z.asin().to_degrees();
            let lon = p.y.atan2(p.x).to_degrees();
            out.push(
                GroundTarget::new(format!("{region}-{i}-{j}"), lat, lon, region).expect("lattice point is valid"),
            );
        }
    }
    out
}

/// Sun-synchronous 710 km orbit over two 2×3 lattices of targets 8 km apart,
/// sampled every second, capped at 12 observations.
pub fn desk_scenario() -> (CircularOrbit, Vec<GroundTarget>, SweepConfig) {
    let orbit = CircularOrbit {
        altitude_km: 710.0,
        inclination_deg: 98.5,
        raan_deg: 30.0,
        arg_lat_deg: 10.0,
        epoch_s: 0.0,
    };
    let mut targets = synthetic_lattice(&orbit, 150.0, 2, 3, 8.0, "a");
    targets.extend(synthetic_lattice(&orbit, 220.0, 2, 3, 8.0, "b"));
    let cfg = SweepConfig {
        sample_s: 1.0,
        horizon_s: 600.0,
        max_off_nadir_deg: DEFAULT_MAX_OFF_NADIR_DEG,
        slew_margin: default_slew_margin(),
        max_observations: Some(12),
    };
    (orbit, targets, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sso() -> CircularOrbit {
        CircularOrbit {
            altitude_km: 710.0,
            inclination_deg: 98.5,
            raan_deg: 30.0,
            arg_lat_deg: 10.0,
            epoch_s: 0.0,
        }
    }

    #[test]
    fn equatorial_orbit_starts_on_x() {
        let o = CircularOrbit {
            altitude_km: 500.0,
            inclination_deg: 0.0,
            raan_deg: 0.0,
            arg_lat_deg: 0.0,
            epoch_s: 0.0,
        };
        let s = o.propagate(0.0);
        assert_relative_eq!(s.pos, Vec3::new(EARTH_RADIUS_KM + 500.0, 0.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn circular_motion_invariants() {
        let o = sso();
        let r = o.radius();
        for t in [0.0, 123.4, 2000.0, 5900.0] {
            let s = o.propagate(t);
            assert_relative_eq!(s.pos.norm() / r, 1.0, epsilon = 1e-9);
            assert!(s.pos.dot(&s.vel).abs() < 1e-9 * r);
            assert_relative_eq!(s.vel.norm(), (MU_KM3_S2 / r).sqrt(), epsilon = 1e-9);
        }
        assert_relative_eq!(o.period(), 2.0 * std::f64::consts::PI * (r.powi(3) / MU_KM3_S2).sqrt(), epsilon = 1e-9);
        assert!((o.period() / 5926.0 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn target_positions() {
        let pole = GroundTarget::new("n", 90.0, 40.0, "r").unwrap();
        assert_relative_eq!(target_eci(&pole, 1234.0), Vec3::new(0.0, 0.0, EARTH_RADIUS_KM), epsilon = 1e-9);
        let o = GroundTarget::new("o", 0.0, 0.0, "r").unwrap();
        assert_relative_eq!(target_eci(&o, 0.0), Vec3::new(EARTH_RADIUS_KM, 0.0, 0.0), epsilon = 1e-12);
        let g = GroundTarget::new("g", 37.0, -122.0, "r").unwrap();
        let day = 2.0 * std::f64::consts::PI / EARTH_RATE;
        assert!((target_eci(&g, day) - target_eci(&g, 0.0)).norm() < 1e-6);
        assert_eq!(GroundTarget::new("w", 0.0, 190.0, "r").unwrap().lon_deg, -170.0);
        assert_eq!(GroundTarget::new("w", 0.0, -180.0, "r").unwrap().lon_deg, 180.0);
        assert!(GroundTarget::new("bad", 91.0, 0.0, "r").is_err());
    }

    #[test]
    fn nadir_pointing_frame() {
        let s = OrbitState {
            pos: Vec3::new(7000.0, 0.0, 0.0),
            vel: Vec3::new(0.0, 7.5, 0.0),
        };
        let q = pointing_quaternion(&s, &Vec3::new(EARTH_RADIUS_KM, 0.0, 0.0)).unwrap();
        let m = q.to_rotation_matrix();
        assert_relative_eq!(m.column(2).into_owned(), -Vec3::x(), epsilon = 1e-12);
        assert_relative_eq!(m.column(0).into_owned(), Vec3::y(), epsilon = 1e-12);
        assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-12);
        let back = UnitQuaternion::from_rotation_matrix(&m);
        assert_relative_eq!(back.dot(&q).abs(), 1.0, epsilon = 1e-12);
        let along = OrbitState {
            pos: s.pos,
            vel: Vec3::new(-7.5, 0.0, 0.0),
        };
        assert_eq!(
            pointing_quaternion(&along, &Vec3::new(EARTH_RADIUS_KM, 0.0, 0.0)),
            Err(GeometryError::DegeneratePointing)
        );
    }

    #[test]
    fn nadir_accessible_antipode_occluded() {
        let o = sso();
        let s = o.propagate(0.0);
        let p = s.pos.normalize();
        let tg = GroundTarget::new("sub", p.z.asin().to_degrees(), p.y.atan2(p.x).to_degrees(), "r").unwrap();
        let anti = GroundTarget::new("anti", -tg.lat_deg, tg.lon_deg + 180.0, "r").unwrap();
        let acc = access_windows(&o, &[tg, anti], 10.0, 45.0, 1.0);
        assert_eq!(acc[0].windows.first().map(|w| w.0), Some(0.0));
        assert!(acc[1].windows.is_empty());
    }

    #[test]
    fn pointing_is_continuous_over_a_pass() {
        let o = sso();
        let tg = &synthetic_lattice(&o, 300.0, 1, 1, 8.0, "r")[0];
        let mut prev: Option<UnitQuaternion> = None;
        for t in (0..=600).map(f64::from) {
            let s = o.propagate(t);
            if !accessible(&s, &target_eci(tg, t), 60.0) {
                continue;
            }
            let q = pointing_quaternion(&s, &target_eci(tg, t)).unwrap();
            if let Some(p) = prev {
                assert!(p.angle_to(&q).to_degrees() < 5.0);
            }
            prev = Some(q);
        }
        assert!(prev.is_some());
    }

    #[test]
    fn targets_csv() {
        let csv = "id,lat_deg,lon_deg,region\na,10.5,200,r1\nb,-3,4,r2\n";
        let t = read_targets_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].lon_deg, -160.0);
        assert!(read_targets_csv("id,lat_deg,lon_deg,region\nx,abc,1,r\n".as_bytes()).is_err());
    }

    #[test]
    fn lattice_is_evenly_spaced() {
        let o = sso();
        let l = synthetic_lattice(&o, 100.0, 3, 3, 8.0, "r");
        let d = (l[0].ecef() - l[1].ecef()).norm();
        assert!((d - 8.0).abs() < 0.01, "{d}");
    }
}
