use slewplan_core::atlas::{analytic_oracle, build_atlas, solve_instance, RotationGrid, SlewAtlas};
use slewplan_core::config::ScpConfig;
use slewplan_core::dynamics::{rotor_of, Model, SatelliteParams};
use slewplan_core::quat::{AxisAngle, UnitQuaternion, Vec3};

fn model() -> Model {
    Model::new(&SatelliteParams::reference()).unwrap()
}

fn rot(axis: Vec3, deg: f64) -> UnitQuaternion {
    AxisAngle::new(axis, deg.to_radians()).unwrap().to_quaternion()
}

#[test]
fn x_axis_sixty_degrees_near_double_integrator() {
    let m = model();
    let (res, energy) = solve_instance(&m, &ScpConfig::min_time(), &Vec3::x(), 60.0).unwrap();
    assert!(res.converged);
    let oracle = analytic_oracle(&m.params, 0, 60f64.to_radians());
    assert!(!oracle.saturated);
    assert!((res.t_f - oracle.time).abs() / oracle.time < 0.02, "{} vs {}", res.t_f, oracle.time);
    assert!(energy > 0.0);
}

#[test]
fn opposite_angles_take_the_same_time() {
    let m = model();
    let cfg = ScpConfig::min_time();
    let (a, _) = solve_instance(&m, &cfg, &Vec3::z(), 45.0).unwrap();
    let (b, _) = solve_instance(&m, &cfg, &Vec3::z(), -45.0).unwrap();
    assert!((a.t_f - b.t_f).abs() / a.t_f < 0.01);
}

#[test]
fn rotor_momentum_stays_bounded() {
    let m = model();
    let (res, _) = solve_instance(&m, &ScpConfig::min_time(), &Vec3::y(), 120.0).unwrap();
    assert!(res.converged);
    let peak = res.stack.x.iter().map(|x| rotor_of(x).amax()).fold(0.0, f64::max);
    assert!(peak <= m.params.r_max * (1.0 + 1e-6), "peak {peak}");
}

fn tiny() -> SlewAtlas {
    let grid = RotationGrid::principal(0, vec![-60.0, -30.0, 10.0, 20.0, 30.0, 60.0]);
    let mut atlas = build_atlas(&grid, &SatelliteParams::reference(), &ScpConfig::min_time(), 2).unwrap();
    atlas.fits = atlas.fit_models().unwrap();
    atlas
}

#[test]
fn tiny_atlas_round_trips_and_queries() {
    let atlas = tiny();
    assert!(atlas.entries.iter().all(|e| e.converged));
    assert!(atlas.monotonicity_violations().is_empty());

    let text = serde_json::to_string(&atlas).unwrap();
    let back: SlewAtlas = serde_json::from_str(&text).unwrap();
    assert_eq!(back, atlas);

    let id = UnitQuaternion::identity();
    for e in &atlas.entries {
        let est = atlas.query(&id, &rot(Vec3::x(), e.angle_deg)).unwrap();
        assert!((est.min_time - e.t_min_s).abs() < 1e-9 * e.t_min_s);
        assert!((est.energy - e.energy_j).abs() < 1e-9 * e.energy_j.max(1.0));
    }

    let mid = atlas.query(&id, &rot(Vec3::x(), 45.0)).unwrap().min_time;
    let (t30, t60) = (atlas.entries[4].t_min_s, atlas.entries[5].t_min_s);
    assert!(mid > t30 && mid < t60);

    let fit = &atlas.fits[0];
    let beyond = atlas.query(&id, &rot(Vec3::x(), 90.0)).unwrap().min_time;
    assert!((beyond - fit.time(90f64.to_radians())).abs() < 1e-12);
    assert!(beyond > t60);
    assert_eq!(atlas.query(&id, &id).unwrap().min_time, 0.0);
}

#[test]
fn invalid_grids_are_rejected() {
    let p = SatelliteParams::reference();
    let cfg = ScpConfig::min_time();
    for angles in [vec![], vec![0.0, 10.0], vec![10.0, 5.0], vec![200.0]] {
        assert!(build_atlas(&RotationGrid::principal(0, angles), &p, &cfg, 1).is_err());
    }
}
