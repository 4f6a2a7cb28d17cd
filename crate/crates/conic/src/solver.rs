//! Homogeneous self-dual primal-dual interior-point method with Nesterov–Todd
//! scaling and Mehrotra predictor-corrector steps.

use serde::{Deserialize, Serialize};

use crate::cones::ConeSet;
use crate::equilibrate::{equilibrate, Scaling};
use crate::kkt::KktSystem;
use crate::program::ConeProgram;
use crate::sparse::{dot, inf_norm, CscMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
    Numerical,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Numerical => "numerical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Settings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub infeas_tol: f64,
    pub max_iters: usize,
    pub static_reg: f64,
    pub refine_steps: usize,
    pub equilibrate_iters: usize,
    pub step_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            infeas_tol: 1e-8,
            max_iters: 150,
            static_reg: 1e-8,
            refine_steps: 1,
            equilibrate_iters: 10,
            step_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationInfo {
    pub iter: usize,
    pub pobj: f64,
    pub dobj: f64,
    pub gap: f64,
    pub pres: f64,
    pub dres: f64,
    pub mu: f64,
    pub step: f64,
    pub sigma: f64,
}

/// Result of a solve. `x` is the primal point, `y` the cone dual, `s` the slack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: SolveStatus,
    pub pobj: f64,
    pub dobj: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub pres: f64,
    pub dres: f64,
    pub iterations: usize,
    pub trace: Vec<IterationInfo>,
}

impl ConeSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap_abs: f64,
    gap_rel: f64,
    pres: f64,
    dres: f64,
}

struct Problem<'a> {
    a: &'a CscMatrix,
    b: &'a [f64],
    c: &'a [f64],
}

fn metrics(orig: &Problem, sc: &Scaling, x: &[f64], s: &[f64], z: &[f64], tau: f64) -> (Metrics, [Vec<f64>; 3]) {
    let xu = sc.unscale_x(x, tau);
    let su = sc.unscale_s(s, tau);
    let zu = sc.unscale_z(z, tau);
    let mut rp = orig.a.mul_vec(&xu);
    for i in 0..rp.len() {
        rp[i] += su[i] - orig.b[i];
    }
    let mut rd = orig.a.tmul_vec(&zu);
    for j in 0..rd.len() {
        rd[j] += orig.c[j];
    }
    let pobj = dot(orig.c, &xu);
    let dobj = -dot(orig.b, &zu);
    let pres = inf_norm(&rp) / (1.0 + inf_norm(orig.b).max(inf_norm(&xu)).max(inf_norm(&su)));
    let dres = inf_norm(&rd) / (1.0 + inf_norm(orig.c).max(inf_norm(&zu)));
    let gap_abs = (pobj - dobj).abs();
    let gap_rel = gap_abs / pobj.abs().min(dobj.abs()).max(1.0);
    (
        Metrics {
            pobj,
            dobj,
            gap_abs,
            gap_rel,
            pres,
            dres,
        },
        [xu, su, zu],
    )
}

/// Solves `min cᵀx s.t. Ax + s = b, s ∈ K`.
///
/// Returns an error only for structurally malformed programs; every numerical
/// outcome is reported through [`ConeSolution::status`].
pub fn solve(p: &ConeProgram, settings: &Settings) -> Result<ConeSolution, ConicError> {
    let diag = p.validate();
    if !diag.is_ok() {
        return Err(ConicError::Malformed(diag.errors.join("; ")));
    }
    let (n, m) = (p.num_vars(), p.num_rows());
    let mut cones = ConeSet::new(&p.cones);

    if m == 0 {
        let status = if inf_norm(&p.c) == 0.0 {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        };
        return Ok(ConeSolution {
            x: vec![0.0; n],
            y: Vec::new(),
            s: Vec::new(),
            status,
            pobj: 0.0,
            dobj: 0.0,
            gap_abs: 0.0,
            gap_rel: 0.0,
            pres: 0.0,
            dres: inf_norm(&p.c),
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let (a, c, b, sc) = equilibrate(&p.a, &p.c, &p.b, &cones, settings.equilibrate_iters);
    let orig = Problem {
        a: &p.a,
        b: &p.b,
        c: &p.c,
    };
    let nu = cones.degree as f64;

    let mut kkt = KktSystem::new(&a, &cones, settings.static_reg, settings.refine_steps)
        .map_err(ConicError::Malformed)?;

    // Initial point: W = I, least-squares primal and minimum-norm dual.
    let fail = |status: SolveStatus, iters: usize, trace: Vec<IterationInfo>| ConeSolution {
        x: vec![f64::NAN; n],
        y: vec![f64::NAN; m],
        s: vec![f64::NAN; m],
        status,
        pobj: f64::NAN,
        dobj: f64::NAN,
        gap_abs: f64::NAN,
        gap_rel: f64::NAN,
        pres: f64::NAN,
        dres: f64::NAN,
        iterations: iters,
        trace,
    };
    let e = ones_interior(&cones);
    if cones.update_scaling(&e, &e).is_none() {
        return Ok(fail(SolveStatus::Numerical, 0, Vec::new()));
    }
    if kkt.update(&cones).is_err() {
        return Ok(fail(SolveStatus::Numerical, 0, Vec::new()));
    }
    let mut rhs = vec![0.0; n + m];
    rhs[n..].copy_from_slice(&b);
    let sol = kkt.solve(&a, &cones, &rhs);
    let mut x = sol[..n].to_vec();
    let mut s: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
    let mut rhs = vec![0.0; n + m];
    for j in 0..n {
        rhs[j] = -c[j];
    }
    let sol = kkt.solve(&a, &cones, &rhs);
    let mut z = sol[n..].to_vec();
    zero_equality_slack(&cones, &mut s);
    cones.shift_to_interior(&mut s);
    cones.shift_to_interior(&mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut trace = Vec::new();
    let mut last_step = 0.0;
    let mut last_sigma = 0.0;
    let status;
    let mut iter = 0;
    let mut best: Option<(Metrics, [Vec<f64>; 3])> = None;

    loop {
        // residuals of the homogeneous embedding
        let mut r1 = a.tmul_vec(&z);
        for j in 0..n {
            r1[j] += c[j] * tau;
        }
        let mut r2 = a.mul_vec(&x);
        for i in 0..m {
            r2[i] += s[i] - b[i] * tau;
        }
        let r3 = dot(&c, &x) + dot(&b, &z) + kappa;
        let mu = (cones.complementarity(&s, &z) + tau * kappa) / (nu + 1.0);

        let (met, unscaled) = metrics(&orig, &sc, &x, &s, &z, tau);
        trace.push(IterationInfo {
            iter,
            pobj: met.pobj,
            dobj: met.dobj,
            gap: met.gap_abs,
            pres: met.pres,
            dres: met.dres,
            mu,
            step: last_step,
            sigma: last_sigma,
        });
        log::trace!(
            "ipm {iter:3} pobj {:+.8e} dobj {:+.8e} gap {:.2e} pres {:.2e} dres {:.2e} mu {:.2e} tau {:.2e} kappa {:.2e}",
            met.pobj, met.dobj, met.gap_abs, met.pres, met.dres, mu, tau, kappa
        );

        let feasible = met.pres <= settings.feas_tol && met.dres <= settings.feas_tol;
        let gap_ok = met.gap_abs <= settings.gap_tol || met.gap_rel <= settings.gap_tol;
        if !met.pobj.is_finite() || !met.dobj.is_finite() {
            status = SolveStatus::Numerical;
            break;
        }
        best = Some((met, unscaled));
        if feasible && gap_ok {
            status = SolveStatus::Optimal;
            break;
        }
        if let Some(cert) = certificate(&orig, &sc, &x, &s, &z, tau, kappa, settings.infeas_tol) {
            status = cert;
            break;
        }
        if iter >= settings.max_iters {
            status = SolveStatus::MaxIters;
            break;
        }
        iter += 1;

        let lambda = match cones.update_scaling(&s, &z) {
            Some(l) => l,
            None => {
                status = SolveStatus::Numerical;
                break;
            }
        };
        if kkt.update(&cones).is_err() {
            status = SolveStatus::Numerical;
            break;
        }

        // constant system
        let mut rhs1 = vec![0.0; n + m];
        for j in 0..n {
            rhs1[j] = -c[j];
        }
        rhs1[n..].copy_from_slice(&b);
        let sol1 = kkt.solve(&a, &cones, &rhs1);
        let (x1, z1) = sol1.split_at(n);
        let denom = dot(&c, x1) + dot(&b, z1) - kappa / tau;

        let direction = |eta: f64, ds_rhs: &[f64], dk_rhs: f64| -> Option<Dir> {
            // W (λ \ d_s)
            let mut tmp = vec![0.0; m];
            cones.inv_circ(&lambda, ds_rhs, &mut tmp);
            let mut wl = vec![0.0; m];
            cones.apply_w(&tmp, &mut wl, false);
            let mut rhs2 = vec![0.0; n + m];
            for j in 0..n {
                rhs2[j] = -eta * r1[j];
            }
            for i in 0..m {
                rhs2[n + i] = -eta * r2[i] - wl[i];
            }
            let sol2 = kkt.solve(&a, &cones, &rhs2);
            let (x2, z2) = sol2.split_at(n);
            let dtau = (-eta * r3 - dot(&c, x2) - dot(&b, z2) - dk_rhs / tau) / denom;
            let dx: Vec<f64> = (0..n).map(|j| x2[j] + dtau * x1[j]).collect();
            let dz: Vec<f64> = (0..m).map(|i| z2[i] + dtau * z1[i]).collect();
            let mut w2dz = vec![0.0; m];
            cones.apply_w2(&dz, &mut w2dz);
            let ds: Vec<f64> = (0..m).map(|i| wl[i] - w2dz[i]).collect();
            let dkappa = (dk_rhs - kappa * dtau) / tau;
            let ok = dx.iter().chain(&dz).chain(&ds).all(|v| v.is_finite()) && dtau.is_finite() && dkappa.is_finite();
            ok.then_some(Dir {
                dx,
                dz,
                ds,
                dtau,
                dkappa,
            })
        };
        let max_step = |d: &Dir| -> f64 {
            let mut alpha = cones.step_length(&s, &d.ds).min(cones.step_length(&z, &d.dz));
            if d.dtau < 0.0 {
                alpha = alpha.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                alpha = alpha.min(-kappa / d.dkappa);
            }
            alpha
        };

        // predictor
        let mut ds_aff = vec![0.0; m];
        cones.circ(&lambda, &lambda, &mut ds_aff);
        ds_aff.iter_mut().for_each(|v| *v = -*v);
        let Some(aff) = direction(1.0, &ds_aff, -tau * kappa) else {
            status = SolveStatus::Numerical;
            break;
        };
        let alpha_aff = max_step(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // corrector
        let mut winv_ds = vec![0.0; m];
        cones.apply_w(&aff.ds, &mut winv_ds, true);
        let mut w_dz = vec![0.0; m];
        cones.apply_w(&aff.dz, &mut w_dz, false);
        let mut cross = vec![0.0; m];
        cones.circ(&winv_ds, &w_dz, &mut cross);
        let mut ds_comb: Vec<f64> = (0..m).map(|i| ds_aff[i] - cross[i]).collect();
        cones.add_scaled_identity(&mut ds_comb, sigma * mu);
        let dk_comb = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
        let Some(dir) = direction(1.0 - sigma, &ds_comb, dk_comb) else {
            status = SolveStatus::Numerical;
            break;
        };
        let alpha = (settings.step_fraction * max_step(&dir)).min(1.0);
        if !(alpha > 1e-10) {
            status = SolveStatus::Numerical;
            break;
        }
        for j in 0..n {
            x[j] += alpha * dir.dx[j];
        }
        for i in 0..m {
            s[i] += alpha * dir.ds[i];
            z[i] += alpha * dir.dz[i];
        }
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        last_step = alpha;
        last_sigma = sigma;
    }

    let Some((met, [xu, su, zu])) = best else {
        return Ok(fail(status, iter, trace));
    };
    let (x_out, s_out, y_out) = match status {
        SolveStatus::Infeasible => (vec![f64::NAN; n], vec![f64::NAN; m], sc.unscale_z(&z, 1.0)),
        SolveStatus::Unbounded => (sc.unscale_x(&x, 1.0), sc.unscale_s(&s, 1.0), vec![f64::NAN; m]),
        _ => (xu, su, zu),
    };
    Ok(ConeSolution {
        x: x_out,
        y: y_out,
        s: s_out,
        status,
        pobj: met.pobj,
        dobj: met.dobj,
        gap_abs: met.gap_abs,
        gap_rel: met.gap_rel,
        pres: met.pres,
        dres: met.dres,
        iterations: iter,
        trace,
    })
}

struct Dir {
    dx: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

fn ones_interior(cones: &ConeSet) -> Vec<f64> {
    let mut e = vec![0.0; cones.dim];
    cones.add_scaled_identity(&mut e, 1.0);
    for (ci, cone) in cones.cones.iter().enumerate() {
        if let crate::cones::Cone::Zero(k) = cone {
            let off = cones.offsets[ci];
            e[off..off + k].iter_mut().for_each(|v| *v = 1.0);
        }
    }
    e
}

fn zero_equality_slack(cones: &ConeSet, s: &mut [f64]) {
    cones.add_identity(s, 0.0);
}

/// Infeasibility certificates from the unnormalized embedding iterate.
#[allow(clippy::too_many_arguments)]
fn certificate(
    orig: &Problem,
    sc: &Scaling,
    x: &[f64],
    s: &[f64],
    z: &[f64],
    tau: f64,
    kappa: f64,
    tol: f64,
) -> Option<SolveStatus> {
    if tau > 1e-3 * kappa {
        return None;
    }
    let zu = sc.unscale_z(z, 1.0);
    let bz = dot(orig.b, &zu);
    if bz < 0.0 {
        let atz = orig.a.tmul_vec(&zu);
        if inf_norm(&atz) <= tol * (-bz) {
            return Some(SolveStatus::Infeasible);
        }
    }
    let xu = sc.unscale_x(x, 1.0);
    let cx = dot(orig.c, &xu);
    if cx < 0.0 {
        let su = sc.unscale_s(s, 1.0);
        let mut ax = orig.a.mul_vec(&xu);
        for i in 0..ax.len() {
            ax[i] += su[i];
        }
        if inf_norm(&ax) <= tol * (-cx) {
            return Some(SolveStatus::Unbounded);
        }
    }
    None
}
