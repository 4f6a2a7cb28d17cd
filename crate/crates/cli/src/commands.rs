use std::path::Path;

use log::{info, warn};
use nalgebra::{Matrix3, Vector4};
use serde::Serialize;
use slewplan_core::atlas::{build_atlas, default_angles, AtlasError, RotationGrid, SlewAtlas};
use slewplan_core::config::ScpConfig;
use slewplan_core::dynamics::{GyrostatState, Model, SatelliteParams, Trajectory};
use slewplan_core::geometry::{
    build_sweep_schedule, desk_scenario, read_targets_csv, CircularOrbit, GeometryError, PointingSchedule,
    PowerLawSlewModel, SlewTimeModel, SweepConfig,
};
use slewplan_core::quat::{equidistributed_axes, AxisAngle, UnitQuaternion, Vec3};
use slewplan_core::scp::{self, Problem, ScpError, ScpResult};
use slewplan_core::tracking::{
    error_metrics, reference_observations, riccati_gains, simulate, ErrorMetrics, LqrWeights, Mode,
};
use slewplan_core::transcription::{DecisionStack, PointingScheduleSpec, FOH_SUBSTEPS};

use crate::run::{
    parse_axis, parse_floats, parse_quat, CliError, CliResult, Run, EXIT_FAILURE, EXIT_NOT_CONVERGED, EXIT_OK,
};
use crate::{AtlasBuildArgs, AtlasFitArgs, AtlasQueryArgs, ModeArg, PlanArgs, ScheduleBuildArgs, SlewArgs, TrackArgs};

fn json<T: serde::de::DeserializeOwned>(run: &mut Run, name: &str, path: &Path) -> CliResult<T> {
    let text = run.input(name, path)?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn scp_error(e: ScpError) -> CliError {
    match e {
        ScpError::Config(e) => CliError::config(e.to_string()),
        other => CliError::failure(other.to_string()),
    }
}

fn model(p: &SatelliteParams) -> CliResult<Model> {
    Model::new(p).map_err(|e| CliError::config(e.to_string()))
}

fn exit_code(res: &ScpResult) -> i32 {
    match &res.failure {
        _ if res.converged => EXIT_OK,
        Some(f) if f.status == "numerical" => EXIT_FAILURE,
        _ => EXIT_NOT_CONVERGED,
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    converged: bool,
    flag: u8,
    iterations: usize,
    t_f_s: f64,
    energy_j: f64,
    j_vc: Option<f64>,
    j_tr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<ErrorMetrics>,
}

/// Writes the dense replay, node solution and iteration history; returns the replayed energy.
fn write_solution(run: &mut Run, m: &Model, res: &ScpResult) -> CliResult<f64> {
    let dense = scp::replay(m, &res.stack, FOH_SUBSTEPS).map_err(|e| CliError::failure(e.to_string()))?;
    let energy = dense
        .energy(m.params.jr)
        .map_err(|e| CliError::failure(e.to_string()))?
        .last()
        .copied()
        .unwrap_or(0.0);
    run.write_trajectory("trajectory.csv", &dense, &m.params)?;
    run.write_json("solution.json", &res.stack)?;
    run.write_json("history.json", &res.history)?;
    Ok(energy)
}

fn summarize<'a>(res: &'a ScpResult, energy: f64, metrics: Option<ErrorMetrics>) -> Summary<'a> {
    Summary {
        converged: res.converged,
        flag: res.flag(),
        iterations: res.iterations,
        t_f_s: res.t_f,
        energy_j: energy,
        j_vc: res.last().map(|r| r.j_vc),
        j_tr: res.last().map(|r| r.j_tr),
        failure: res.failure.as_ref().map(|f| f.status.as_str()),
        metrics,
    }
}

fn report(res: &ScpResult) {
    if res.converged {
        println!("converged in {} iterations, t_f = {:.4} s", res.iterations, res.t_f);
    } else {
        let why = res.failure.as_ref().map_or("iteration limit".to_string(), |f| f.status.clone());
        println!("not converged after {} iterations ({why})", res.iterations);
    }
}

pub fn slew(run: &mut Run, a: &SlewArgs) -> CliResult<i32> {
    let p = run.params(a.config.params.as_deref())?;
    let cfg = run.scp(ScpConfig::min_time(), a.config.scp.as_deref(), &a.config.set)?;
    run.hash_value("scp", &cfg);
    let q0 = a.from_quat.as_deref().map(parse_quat).transpose()?.unwrap_or_else(UnitQuaternion::identity);
    let qf = match (a.angle_deg, a.to_quat.as_deref()) {
        (Some(deg), _) => {
            let axis = parse_axis(&a.axis)?;
            let aa = AxisAngle::new(axis, deg.to_radians()).map_err(|e| CliError::config(e.to_string()))?;
            if aa.angle() == 0.0 {
                return Err(CliError::config("zero rotation: nothing to slew"));
            }
            q0.mul(&aa.to_quaternion())
        }
        (None, Some(q)) => parse_quat(q)?,
        (None, None) => unreachable!("clap requires a target"),
    };
    if q0.angle_to(&qf) == 0.0 {
        return Err(CliError::config("zero rotation: initial and final attitudes coincide"));
    }
    let m = model(&p)?;
    let problem = Problem::MinTime {
        x0: GyrostatState::rest(q0).to_vec(),
        q_final: qf,
    };
    let res = scp::run(&m, &problem, &cfg).map_err(scp_error)?;
    let energy = write_solution(run, &m, &res)?;
    run.write_json("summary.json", &summarize(&res, energy, None))?;
    report(&res);
    Ok(exit_code(&res))
}

pub fn plan(run: &mut Run, a: &PlanArgs) -> CliResult<i32> {
    let p = run.params(a.config.params.as_deref())?;
    let schedule: PointingSchedule = json(run, "schedule", &a.schedule)?;
    let mut cfg = run.scp(ScpConfig::multi_target(), a.config.scp.as_deref(), &a.config.set)?;
    let spec = schedule
        .to_spec(cfg.t_f, cfg.gamma, cfg.rho)
        .map_err(|e| CliError::config(format!("{}: {e}", a.schedule.display())))?;
    if cfg.k != spec.k {
        info!("K = {} from the schedule's sample time and horizon", spec.k);
        cfg.k = spec.k;
    }
    run.hash_value("scp", &cfg);
    let first = &schedule.entries[0];
    let x0 = GyrostatState {
        q: first.q,
        w: Vec3::from(first.w),
        r: Vector4::zeros(),
    }
    .to_vec();
    let m = model(&p)?;
    let res = scp::run(&m, &Problem::MultiTarget { x0, spec: spec.clone() }, &cfg).map_err(scp_error)?;
    let energy = write_solution(run, &m, &res)?;
    let metrics = error_metrics(&res.stack.x, &spec.observations).map_err(|e| CliError::failure(e.to_string()))?;
    run.write_json("spec.json", &spec)?;
    run.write_json("metrics.json", &metrics)?;
    run.write_json("summary.json", &summarize(&res, energy, Some(metrics)))?;
    report(&res);
    println!("q_e avg {:.3e}, max {:.3e}", metrics.q_e_avg, metrics.q_e_max);
    Ok(exit_code(&res))
}

fn parse_axes(s: &str) -> CliResult<Vec<Vec3>> {
    if let Ok(n) = s.trim().parse::<usize>() {
        if n == 0 {
            return Err(CliError::config("--axes must be at least 1"));
        }
        return Ok(equidistributed_axes(n));
    }
    s.split(';').map(parse_axis).collect()
}

pub fn atlas_build(run: &mut Run, a: &AtlasBuildArgs) -> CliResult<i32> {
    let p = run.params(a.config.params.as_deref())?;
    let cfg = run.scp(ScpConfig::min_time(), a.config.scp.as_deref(), &a.config.set)?;
    run.hash_value("scp", &cfg);
    let grid = RotationGrid {
        axes: parse_axes(&a.axes)?,
        angles_deg: match &a.angles {
            Some(s) => parse_floats(s, None)?,
            None => default_angles(),
        },
    };
    grid.validate().map_err(|e| CliError::config(e.to_string()))?;
    run.hash_value("grid", &grid);
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    info!("{} instances on {jobs} threads", grid.len());
    let atlas = build_atlas(&grid, &p, &cfg, jobs).map_err(|e| match e {
        AtlasError::Grid(m) => CliError::config(m),
        other => CliError::failure(other.to_string()),
    })?;
    run.write_json("atlas.json", &atlas)?;
    let ok = atlas.entries.iter().filter(|e| e.converged).count();
    println!("{ok}/{} instances converged", atlas.entries.len());
    Ok(if ok == atlas.entries.len() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn atlas_fit(run: &mut Run, a: &AtlasFitArgs) -> CliResult<i32> {
    let mut atlas: SlewAtlas = json(run, "atlas", &a.atlas)?;
    atlas.fits = atlas.fit_models().map_err(|e| CliError::failure(e.to_string()))?;
    run.write_json("atlas.json", &atlas)?;
    run.write_json("fits.json", &atlas.fits)?;
    for f in &atlas.fits {
        println!(
            "axis {}: T = {:.4} θ^{:.4} (R² {:.4}), E = {:.4} θ + {:.4} (R² {:.4})",
            f.axis_idx, f.a, f.b, f.r2_time, f.c, f.d, f.r2_energy
        );
    }
    Ok(EXIT_OK)
}

pub fn atlas_query(run: &mut Run, a: &AtlasQueryArgs) -> CliResult<i32> {
    let atlas: SlewAtlas = json(run, "atlas", &a.atlas)?;
    let from = a.from_quat.as_deref().map(parse_quat).transpose()?.unwrap_or_else(UnitQuaternion::identity);
    let to = match (a.angle_deg, a.to_quat.as_deref()) {
        (Some(deg), _) => {
            let aa = AxisAngle::new(parse_axis(&a.axis)?, deg.to_radians()).map_err(|e| CliError::config(e.to_string()))?;
            from.mul(&aa.to_quaternion())
        }
        (None, Some(q)) => parse_quat(q)?,
        (None, None) => unreachable!("clap requires a target"),
    };
    let est = atlas.query(&from, &to).map_err(|e| CliError::failure(e.to_string()))?;
    run.write_json("estimate.json", &est)?;
    println!("min_time {:.4} s, energy {:.4} J", est.min_time, est.energy);
    Ok(EXIT_OK)
}

pub fn schedule_build(run: &mut Run, a: &ScheduleBuildArgs) -> CliResult<i32> {
    let (orbit, targets, mut sweep) = if a.desk {
        desk_scenario()
    } else {
        let (tp, op) = (a.targets.as_deref().expect("clap"), a.orbit.as_deref().expect("clap"));
        let text = run.input("targets", tp)?;
        let targets = read_targets_csv(text.as_bytes()).map_err(|e| CliError::config(format!("{}: {e}", tp.display())))?;
        let orbit: CircularOrbit = json(run, "orbit", op)?;
        orbit.validate().map_err(|e| CliError::config(format!("{}: {e}", op.display())))?;
        (orbit, targets, SweepConfig::default())
    };
    if let Some(v) = a.max_off_nadir {
        sweep.max_off_nadir_deg = v;
    }
    if let Some(v) = a.sample_s {
        sweep.sample_s = v;
    }
    if let Some(v) = a.horizon_s {
        sweep.horizon_s = v;
    }
    if let Some(v) = a.slew_margin {
        sweep.slew_margin = v;
    }
    if a.max_observations.is_some() {
        sweep.max_observations = a.max_observations;
    }
    if !(sweep.sample_s > 0.0 && sweep.horizon_s > 0.0 && sweep.slew_margin >= 1.0) {
        return Err(CliError::config("--sample-s and --horizon-s must be positive and --slew-margin at least 1"));
    }
    if !(sweep.max_off_nadir_deg > 0.0 && sweep.max_off_nadir_deg < 90.0) {
        return Err(CliError::config("--max-off-nadir must lie in (0, 90) degrees"));
    }
    run.hash_value("sweep", &sweep);
    run.hash_value("orbit", &orbit);
    let slew_model: Box<dyn SlewTimeModel> = match &a.atlas {
        Some(path) => Box::new(json::<SlewAtlas>(run, "atlas", path)?),
        None => Box::new(PowerLawSlewModel::principal_bound(&run.params(a.params.as_deref())?)),
    };
    let report = build_sweep_schedule(&orbit, &targets, slew_model.as_ref(), &sweep).map_err(|e| match e {
        GeometryError::InvalidOrbit(_) | GeometryError::InvalidTarget { .. } | GeometryError::Csv(_) => {
            CliError::config(e.to_string())
        }
        other => CliError::failure(other.to_string()),
    })?;
    run.write_json("schedule.json", &report.schedule)?;
    run.write_json("skipped.json", &report.skipped)?;
    for s in &report.skipped {
        warn!("skipped {} ({}): {}", s.target_id, s.region, s.reason);
    }
    let audit = report.schedule.audit(slew_model.as_ref());
    let observed = report.schedule.entries.iter().filter(|e| e.target_id.is_some()).count();
    println!(
        "{observed} observations, {} entries, {} targets skipped",
        report.schedule.entries.len(),
        report.skipped.len()
    );
    if let Some((i, gap, need)) = audit.first() {
        return Err(CliError::failure(format!(
            "slew-time audit failed at entry {i}: gap {gap:.3} s, slew needs {need:.3} s"
        )));
    }
    Ok(EXIT_OK)
}

fn load_reference(run: &mut Run, path: &Path) -> CliResult<DecisionStack> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let stack = if is_json {
        json::<DecisionStack>(run, "traj", path)?
    } else {
        let text = run.input("traj", path)?;
        let t = Trajectory::read_csv(text.as_bytes()).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if t.len() < 2 {
            return Err(CliError::config(format!("{}: at least two samples are required", path.display())));
        }
        let tf = t.t[t.len() - 1] - t.t[0];
        let dt = tf / (t.len() - 1) as f64;
        if t.t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1.0)) {
            return Err(CliError::config(format!("{}: samples must be evenly spaced", path.display())));
        }
        DecisionStack {
            x: t.x,
            u: t.u,
            tf,
            v: Vec::new(),
        }
    };
    stack
        .check()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(stack)
}

#[derive(Serialize)]
struct TrackMetrics {
    q_e_max: f64,
    q_e_avg: f64,
    w_e_max: f64,
    w_e_avg: f64,
    mode: &'static str,
    inertia_used: [[f64; 3]; 3],
}

pub fn track(run: &mut Run, a: &TrackArgs) -> CliResult<i32> {
    let p = run.params(a.params.as_deref())?;
    let reference = load_reference(run, &a.traj)?;
    let mut truth = p.clone();
    if let Some(path) = &a.perturb_inertia {
        let rows: [[f64; 3]; 3] = json(run, "perturb_inertia", path)?;
        truth.j = Matrix3::from_fn(|i, j| rows[i][j]);
        truth
            .validate()
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    }
    let nodes: Vec<usize> = match &a.spec {
        Some(path) => {
            let spec: PointingScheduleSpec = json(run, "spec", path)?;
            if spec.k != reference.nodes() {
                return Err(CliError::config(format!(
                    "{}: K = {} but the reference has {} nodes",
                    path.display(),
                    spec.k,
                    reference.nodes()
                )));
            }
            spec.observations.iter().map(|o| o.node).collect()
        }
        None => (0..reference.nodes()).collect(),
    };
    let (mode, label) = match a.mode {
        ModeArg::Cl => (Mode::ClosedLoop, "cl"),
        ModeArg::Ol => (Mode::OpenLoop, "ol"),
    };
    let gains = match mode {
        Mode::ClosedLoop => Some(
            riccati_gains(&reference, &p, &LqrWeights::default(), &nodes).map_err(|e| CliError::failure(e.to_string()))?,
        ),
        Mode::OpenLoop => None,
    };
    let sim = simulate(&reference, gains.as_ref(), &truth, mode).map_err(|e| CliError::failure(e.to_string()))?;
    let m = error_metrics(&sim.x, &reference_observations(&reference, &nodes))
        .map_err(|e| CliError::failure(e.to_string()))?;
    run.write_trajectory("trajectory.csv", &sim, &truth)?;
    run.write_json(
        "metrics.json",
        &TrackMetrics {
            q_e_max: m.q_e_max,
            q_e_avg: m.q_e_avg,
            w_e_max: m.w_e_max,
            w_e_avg: m.w_e_avg,
            mode: label,
            inertia_used: std::array::from_fn(|i| std::array::from_fn(|j| truth.j[(i, j)])),
        },
    )?;
    println!(
        "{label}: q_e max {:.3e} avg {:.3e}, w_e max {:.3e} avg {:.3e}",
        m.q_e_max, m.q_e_avg, m.w_e_max, m.w_e_avg
    );
    Ok(EXIT_OK)
}
