use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use slewplan_conic::{solve, AffineExpr, Cone, ConeProgram, CscMatrix, ProgramBuilder, Settings, SolveStatus};

fn opts() -> Settings {
    Settings::default()
}

#[test]
fn orthant_lower_bound() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_vars(1);
    pb.add_cost(x, 1.0);
    pb.add_nonneg(AffineExpr::var(x).plus(-3.0));
    let sol = solve(&pb.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-7);
}

#[test]
fn min_norm_on_a_line() {
    // Lagrangian: ∇‖v‖ = v/‖v‖ = λ(1,1) ⇒ x = y; with x + y = 2 ⇒ (1,1), objective √2.
    let mut pb = ProgramBuilder::new();
    let v = pb.add_vars(3); // x, y, t
    pb.add_cost(v + 2, 1.0);
    pb.add_eq(AffineExpr::var(v).term(v + 1, 1.0).plus(-2.0));
    pb.add_soc(vec![AffineExpr::var(v + 2), AffineExpr::var(v), AffineExpr::var(v + 1)]);
    let sol = solve(&pb.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.pobj, 2f64.sqrt(), epsilon = 1e-7);
}

#[test]
fn infeasible_orthant_pair() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_vars(1);
    pb.add_cost(x, 1.0);
    pb.add_nonneg(AffineExpr::var(x).plus(-1.0));
    pb.add_nonneg(AffineExpr::new().term(x, -1.0));
    let sol = solve(&pb.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_ray() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_vars(2);
    pb.add_cost(x, -1.0);
    pb.add_nonneg(AffineExpr::var(x));
    pb.add_eq(AffineExpr::var(x + 1).plus(-1.0));
    let sol = solve(&pb.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

#[test]
fn infeasible_soc() {
    // ‖x‖ ≤ 1 and x₁ ≥ 2
    let mut pb = ProgramBuilder::new();
    let x = pb.add_vars(2);
    pb.add_cost(x + 1, 1.0);
    pb.add_soc(vec![AffineExpr::constant(1.0), AffineExpr::var(x), AffineExpr::var(x + 1)]);
    pb.add_nonneg(AffineExpr::var(x).plus(-2.0));
    let sol = solve(&pb.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn malformed_program_is_an_error_not_a_panic() {
    let p = ConeProgram {
        c: vec![1.0, 2.0],
        a: CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0)]),
        b: vec![1.0],
        cones: vec![Cone::NonNegative(2)],
    };
    assert!(solve(&p, &opts()).is_err());
}

/// Rest-to-rest double integrator `J θ̈ = u`, FOH torque at K nodes over a fixed
/// horizon `T`, minimizing the peak torque. Torque needed scales as `1/T²`, so the
/// minimum time at torque limit `τ` is `T √(u*/τ)`.
fn double_integrator(k: usize, theta: f64, inertia: f64, horizon: f64) -> (f64, Vec<f64>) {
    let h = horizon / (k - 1) as f64;
    let mut pb = ProgramBuilder::new();
    let th = pb.add_vars(k);
    let om = pb.add_vars(k);
    let u = pb.add_vars(k);
    let peak = pb.add_vars(1);
    pb.add_cost(peak, 1.0);
    for i in 0..k - 1 {
        pb.add_eq(
            AffineExpr::var(om + i + 1)
                .term(om + i, -1.0)
                .term(u + i, -h / (2.0 * inertia))
                .term(u + i + 1, -h / (2.0 * inertia)),
        );
        pb.add_eq(
            AffineExpr::var(th + i + 1)
                .term(th + i, -1.0)
                .term(om + i, -h)
                .term(u + i, -h * h / (3.0 * inertia))
                .term(u + i + 1, -h * h / (6.0 * inertia)),
        );
    }
    pb.add_eq(AffineExpr::var(th));
    pb.add_eq(AffineExpr::var(om));
    pb.add_eq(AffineExpr::var(th + k - 1).plus(-theta));
    pb.add_eq(AffineExpr::var(om + k - 1));
    for i in 0..k {
        pb.add_nonneg(AffineExpr::var(peak).term(u + i, -1.0));
        pb.add_nonneg(AffineExpr::var(peak).term(u + i, 1.0));
    }
    let sol = solve(&pb.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    (sol.x[peak], sol.x[u..u + k].to_vec())
}

#[test]
fn double_integrator_min_time_is_bang_bang() {
    let (theta, inertia, tau) = (1.0, 8.5, 0.1);
    let horizon = 20.0;
    let (peak, u) = double_integrator(50, theta, inertia, horizon);
    let t_min = horizon * (peak / tau).sqrt();
    let analytic = 2.0 * (theta * inertia / tau).sqrt();
    assert!((t_min - analytic).abs() / analytic < 0.01, "{t_min} vs {analytic}");
    let saturated = u.iter().filter(|v| v.abs() >= 0.99 * peak).count();
    assert!(saturated as f64 >= 0.9 * u.len() as f64, "{saturated} of {}", u.len());
    assert!(u[0] > 0.0 && u[u.len() - 1] < 0.0);
}

/// Plants a known primal-dual optimum: pick x*, complementary (s*, z*) ∈ K×K,
/// then set b = A x* + s* and c = −Aᵀ z*. The optimal value is cᵀx*.
fn planted(seed: u64) -> (ConeProgram, f64) {
    planted_with(seed, false)
}

/// With `unique`, every orthant row is active with a positive multiplier and there
/// are at least `n` of them, which pins down a unique minimizer.
fn planted_with(seed: u64, unique: bool) -> (ConeProgram, f64) {
    use rand_like::Lcg;
    let mut rng = Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407));
    let n = 4 + (rng.next() * 8.0) as usize;
    let n_eq = 1 + (rng.next() * 2.0) as usize;
    let n_nn = if unique { n + 1 } else { 3 + (rng.next() * 5.0) as usize };
    let socs: Vec<usize> = (0..1 + (rng.next() * 3.0) as usize).map(|_| 2 + (rng.next() * 4.0) as usize).collect();
    let m = n_eq + n_nn + socs.iter().sum::<usize>();
    let mut trip = Vec::new();
    for r in 0..m {
        for c in 0..n {
            if rng.next() < 0.5 || c == r % n {
                trip.push((r, c, rng.next() * 2.0 - 1.0));
            }
        }
    }
    let a = CscMatrix::from_triplets(m, n, &trip);
    let x: Vec<f64> = (0..n).map(|_| rng.next() * 2.0 - 1.0).collect();
    let mut s = vec![0.0; m];
    let mut z = vec![0.0; m];
    for i in 0..n_eq {
        z[i] = rng.next() * 2.0 - 1.0;
    }
    for i in n_eq..n_eq + n_nn {
        if !unique && rng.next() < 0.5 {
            s[i] = rng.next() + 0.1;
        } else {
            z[i] = rng.next() + 0.1;
        }
    }
    let mut off = n_eq + n_nn;
    for &d in &socs {
        let u: Vec<f64> = (0..d - 1).map(|_| rng.next() * 2.0 - 1.0).collect();
        let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (ts, tz) = (rng.next() + 0.2, rng.next() + 0.2);
        match (rng.next() * 3.0) as usize {
            0 => {
                s[off] = ts * nu;
                z[off] = tz * nu;
                for j in 1..d {
                    s[off + j] = ts * u[j - 1];
                    z[off + j] = -tz * u[j - 1];
                }
            }
            1 => {
                s[off] = ts * (nu + 1.0);
                for j in 1..d {
                    s[off + j] = ts * u[j - 1];
                }
            }
            _ => {
                z[off] = tz * (nu + 1.0);
                for j in 1..d {
                    z[off + j] = tz * u[j - 1];
                }
            }
        }
        off += d;
    }
    let mut b = a.mul_vec(&x);
    for i in 0..m {
        b[i] += s[i];
    }
    let c: Vec<f64> = a.tmul_vec(&z).iter().map(|v| -v).collect();
    let opt: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    let mut cones = vec![Cone::Zero(n_eq), Cone::NonNegative(n_nn)];
    cones.extend(socs.iter().map(|&d| Cone::SecondOrder(d)));
    (ConeProgram { c, a, b, cones }, opt)
}

mod rand_like {
    pub struct Lcg(pub u64);
    impl Lcg {
        pub fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }
}

#[test]
fn planted_socp_suite() {
    let mut failures = Vec::new();
    for seed in 0..25 {
        let (p, opt) = planted(seed);
        let sol = solve(&p, &opts()).unwrap();
        if sol.status != SolveStatus::Optimal || (sol.pobj - opt).abs() > 1e-6 * (1.0 + opt.abs()) {
            failures.push((seed, sol.status, sol.pobj, opt, sol.iterations));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn optimal_solutions_meet_the_status_contract() {
    let settings = opts();
    for seed in 100..110 {
        let (p, _) = planted(seed);
        let sol = solve(&p, &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.gap_abs <= settings.gap_tol || sol.gap_rel <= settings.gap_tol);
        assert!(sol.pres <= settings.feas_tol && sol.dres <= settings.feas_tol);
        let comp: f64 = sol.s.iter().zip(&sol.y).map(|(a, b)| a * b).sum();
        assert!(comp.abs() <= 10.0 * settings.gap_tol * (1.0 + sol.pobj.abs()), "{comp}");
        assert!(sol.pobj >= sol.dobj - 1e-8 * (1.0 + sol.pobj.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deterministic_iterates(seed in 0u64..10_000) {
        let (p, _) = planted(seed);
        let a = solve(&p, &opts()).unwrap();
        let b = solve(&p, &opts()).unwrap();
        prop_assert_eq!(a.iterations, b.iterations);
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.trace.len(), b.trace.len());
    }

    #[test]
    fn cost_scaling_leaves_argmin_unchanged(seed in 0u64..10_000) {
        let (p, _) = planted_with(seed, true);
        let mut p10 = p.clone();
        p10.c.iter_mut().for_each(|v| *v *= 10.0);
        let a = solve(&p, &opts()).unwrap();
        let b = solve(&p10, &opts()).unwrap();
        prop_assert_eq!(a.status, SolveStatus::Optimal);
        prop_assert_eq!(b.status, SolveStatus::Optimal);
        for (u, v) in a.x.iter().zip(&b.x) {
            prop_assert!((u - v).abs() <= 1e-7 * (1.0 + u.abs()), "{} vs {}", u, v);
        }
    }

    #[test]
    fn weak_duality_at_optimum(seed in 0u64..10_000) {
        let (p, opt) = planted(seed);
        let sol = solve(&p, &opts()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(sol.pobj >= sol.dobj - 1e-8 * (1.0 + opt.abs()));
        prop_assert!((sol.pobj - opt).abs() <= 1e-6 * (1.0 + opt.abs()));
    }
}
