use nalgebra::{DMatrix, SMatrix, Vector3, Vector4};
use proptest::prelude::*;
use slewplan_core::config::ScpConfig;
use slewplan_core::dynamics::*;
use slewplan_core::quat::{hamilton, rotation_vector, error_quaternion, AxisAngle, UnitQuaternion};
use slewplan_core::scp::{run, Problem};
use slewplan_core::tracking::*;
use slewplan_core::transcription::{DecisionStack, Observation};

fn params() -> SatelliteParams {
    SatelliteParams::reference()
}

fn compose(xr: &StateVec, e: &ErrorVec) -> StateVec {
    let phi = Vector3::new(e[0], e[1], e[2]);
    let n = phi.norm();
    let s = if n < 1e-12 { 0.5 } else { (n / 2.0).sin() / n };
    let dq = Vector4::new(phi[0] * s, phi[1] * s, phi[2] * s, (n / 2.0).cos());
    let mut x = *xr;
    x.fixed_rows_mut::<4>(0).copy_from(&hamilton(&quat_of(xr), &dq));
    for i in 0..7 {
        x[4 + i] += e[3 + i];
    }
    x
}

fn phi(x: &StateVec, xr: &StateVec) -> Vector3<f64> {
    let q = UnitQuaternion::from_vec4(quat_of(x)).unwrap();
    let qr = UnitQuaternion::from_vec4(quat_of(xr)).unwrap();
    rotation_vector(&error_quaternion(&q, &qr))
}

/// Time derivative of the nonlinear error state.
fn error_rate(m: &Model, xr: &StateVec, ur: &InputVec, e: &ErrorVec, du: &InputVec) -> ErrorVec {
    let x = compose(xr, e);
    let u = ur + du;
    let (f, fr) = (m.f(&x, &u), m.f(xr, ur));
    let h = 1e-6;
    let dphi = (phi(&(x + f * h), &(xr + fr * h)) - phi(&(x - f * h), &(xr - fr * h))) / (2.0 * h);
    let mut out = ErrorVec::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&dphi);
    out.fixed_rows_mut::<3>(3).copy_from(&(omega_of(&f) - omega_of(&fr)));
    out.fixed_rows_mut::<4>(6).copy_from(&(u - ur));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn jacobians_match_nonlinear_error_dynamics(
        q in prop::array::uniform4(-1.0f64..1.0).prop_filter("nonzero", |v| Vector4::from(*v).norm() > 0.2),
        w in prop::array::uniform3(-0.1f64..0.1),
        r in prop::array::uniform4(-0.5f64..0.5),
        ur in prop::array::uniform4(-0.05f64..0.05),
    ) {
        let m = Model::new(&params()).unwrap();
        let xr = GyrostatState {
            q: UnitQuaternion::from_vec4(Vector4::from(q)).unwrap(),
            w: Vector3::from(w),
            r: Vector4::from(r),
        }
        .to_vec();
        let ur = InputVec::from(ur);
        let (a, b) = error_jacobians(&Vector3::from(w), &Vector4::from(r), &m.params);
        let eps = 1e-4;
        for j in 0..NE {
            let mut e = ErrorVec::zeros();
            e[j] = eps;
            let col = (error_rate(&m, &xr, &ur, &e, &InputVec::zeros())
                - error_rate(&m, &xr, &ur, &(-e), &InputVec::zeros()))
                / (2.0 * eps);
            prop_assert!((col - a.column(j)).amax() < 1e-5, "A column {}: {} vs {}", j, col, a.column(j));
        }
        for j in 0..4 {
            let mut du = InputVec::zeros();
            du[j] = eps;
            let col = (error_rate(&m, &xr, &ur, &ErrorVec::zeros(), &du)
                - error_rate(&m, &xr, &ur, &ErrorVec::zeros(), &(-du)))
                / (2.0 * eps);
            prop_assert!((col - b.column(j)).amax() < 1e-5, "B column {}", j);
        }
    }

    #[test]
    fn zoh_semigroup(
        w in prop::array::uniform3(-0.2f64..0.2),
        r in prop::array::uniform4(-0.8f64..0.8),
        dt in 0.05f64..2.0,
    ) {
        let (a, b) = error_jacobians(&Vector3::from(w), &Vector4::from(r), &params());
        let (ah, bh) = discretize_zoh(&a, &b, dt / 2.0);
        let (af, bf) = discretize_zoh(&a, &b, dt);
        prop_assert!((ah * ah - af).amax() < 1e-10);
        prop_assert!((ah * bh + bh - bf).amax() < 1e-10);
    }

    #[test]
    fn cost_to_go_is_symmetric_and_psd(seed in prop::array::uniform32(any::<u8>())) {
        let mut it = seed.iter().cycle().map(|b| *b as f64 / 127.5 - 1.0);
        let mut next = move || it.next().unwrap();
        let n = 3;
        let h = 8;
        let a: Vec<DMatrix<f64>> = (0..h).map(|_| DMatrix::from_fn(n, n, |_, _| 1.5 * next())).collect();
        let b: Vec<DMatrix<f64>> = (0..h).map(|_| DMatrix::from_fn(n, 2, |_, _| next())).collect();
        let l = DMatrix::from_fn(n, n, |_, _| next());
        let q = vec![&l * l.transpose(); h];
        let r = DMatrix::identity(2, 2) * 0.5;
        let (_, ps) = riccati(&a, &b, &q, &r, &q[0]).unwrap();
        for p in &ps {
            prop_assert!((p - p.transpose()).amax() <= 1e-12 * p.amax().max(1.0));
            prop_assert!(p.clone().symmetric_eigenvalues().min() >= -1e-10 * p.amax().max(1.0));
        }
    }

    #[test]
    fn average_never_exceeds_maximum(
        errs in prop::collection::vec((prop::array::uniform4(-1.0f64..1.0), prop::array::uniform3(-0.1f64..0.1)), 1..20)
    ) {
        let mut x = Vec::new();
        let mut set = Vec::new();
        for (i, (q, w)) in errs.iter().enumerate() {
            let Ok(q) = UnitQuaternion::from_vec4(Vector4::from(*q)) else { continue };
            x.push(GyrostatState { q, w: Vector3::from(*w), r: Vector4::zeros() }.to_vec());
            set.push(Observation { node: i.min(x.len() - 1), q: UnitQuaternion::identity(), w: Vector3::zeros() });
        }
        prop_assume!(!set.is_empty());
        let m = error_metrics(&x, &set).unwrap();
        prop_assert!(m.q_e_avg <= m.q_e_max + 1e-15 && m.q_e_avg >= 0.0);
        prop_assert!(m.w_e_avg <= m.w_e_max + 1e-15 && m.w_e_avg >= 0.0);
    }
}

fn reference() -> DecisionStack {
    let m = Model::new(&params()).unwrap();
    let qf = AxisAngle::new(Vector3::new(1.0, 0.0, 1.0), 0.6).unwrap().to_quaternion();
    let x0 = GyrostatState::rest(UnitQuaternion::identity()).to_vec();
    let res = run(&m, &Problem::MinTime { x0, q_final: qf }, &ScpConfig::min_time()).unwrap();
    assert!(res.converged);
    res.stack
}

#[test]
fn nominal_open_loop_replays_the_reference() {
    let r = reference();
    let sim = simulate(&r, None, &params(), Mode::OpenLoop).unwrap();
    let dev = sim.x.iter().zip(&r.x).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    assert!(dev < 1e-6, "deviation {dev:e}");
    let m = error_metrics(&sim.x, &reference_observations(&r, &[r.nodes() - 1])).unwrap();
    assert!(m.q_e_max < 1e-6);
}

#[test]
fn unit_alpha_ignores_the_observation_set() {
    let r = reference();
    let mut w = LqrWeights::default();
    w.alpha = 1.0;
    let a = riccati_gains(&r, &params(), &w, &[]).unwrap();
    let b = riccati_gains(&r, &params(), &w, &[3, 10, 20]).unwrap();
    assert_eq!(a.gains, b.gains);
    w.alpha = 100.0;
    let c = riccati_gains(&r, &params(), &w, &[3, 10, 20]).unwrap();
    assert!(a.gains.iter().zip(&c.gains).any(|(x, y)| (x - y).amax() > 1e-6));
}

#[test]
fn feedback_recovers_from_an_initial_offset() {
    let r = reference();
    let p = params();
    let gains = riccati_gains(&r, &p, &LqrWeights::default(), &[r.nodes() - 1]).unwrap();
    let mut truth = p.clone();
    truth.j = perturbed_inertia();
    let last = [r.nodes() - 1];
    let set = reference_observations(&r, &last);
    let open = error_metrics(&simulate(&r, Some(&gains), &truth, Mode::OpenLoop).unwrap().x, &set).unwrap();
    let closed = error_metrics(&simulate(&r, Some(&gains), &truth, Mode::ClosedLoop).unwrap().x, &set).unwrap();
    assert!(closed.q_e_max < open.q_e_max);
    let clamped = simulate(&r, Some(&gains), &truth, Mode::ClosedLoop).unwrap();
    assert!(clamped.u.iter().all(|u| u.amax() <= p.u_max + 1e-15));
}

#[test]
fn identical_trajectories_have_zero_error() {
    let r = reference();
    let nodes: Vec<usize> = (0..r.nodes()).collect();
    let m = error_metrics(&r.x, &reference_observations(&r, &nodes)).unwrap();
    assert!(m.q_e_max < 1e-12 && m.w_e_max == 0.0);
    assert!(error_metrics(&r.x, &[]).is_err());
}

#[test]
fn closed_loop_requires_a_full_gain_schedule() {
    let r = reference();
    let short = GainSchedule { gains: vec![SMatrix::zeros(); 2], dt: 1.0 };
    assert!(simulate(&r, Some(&short), &params(), Mode::ClosedLoop).is_err());
    assert!(simulate(&r, None, &params(), Mode::ClosedLoop).is_err());
}
