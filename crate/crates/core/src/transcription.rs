//! Discrete convex subproblems: scaling, FOH discretization with multiple
//! shooting, and assembly of the minimum-time and multi-target programs.

use nalgebra::{SMatrix, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slewplan_conic::{AffineExpr, ConeProgram, ProgramBuilder};

use crate::config::ScpConfig;
use crate::dynamics::{
    quat_of, rotor_of, InputVec, MatX, MatXU, Model, SatelliteParams, StateVec, NU, NX,
};
use crate::quat::{error_matrix, UnitQuaternion, Vec3};

/// Substeps per interval for the discretization integrals.
pub const FOH_SUBSTEPS: usize = 10;
/// Power products below this magnitude get a zero gradient.
pub const POWER_DEAD_ZONE: f64 = 1e-9;

const NZ: usize = NX + NU;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranscriptionError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{0} quaternion is not unit norm")]
    NonUnitBoundary(&'static str),
    #[error("observation set is empty")]
    EmptyObservations,
    #[error("observation node {node} outside 0..{k}")]
    ObservationOutOfRange { node: usize, k: usize },
    #[error("non-finite discretization on interval {interval}")]
    Blowup { interval: usize },
    #[error("inconsistent stack: {0}")]
    Shape(String),
}

/// Per-node states and inputs, final time and per-interval virtual controls.
/// Physical units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStack {
    pub x: Vec<StateVec>,
    pub u: Vec<InputVec>,
    pub tf: f64,
    pub v: Vec<StateVec>,
}

impl DecisionStack {
    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    pub fn check(&self) -> Result<(), TranscriptionError> {
        let k = self.x.len();
        if k < 2 {
            return Err(TranscriptionError::TooFewNodes(k));
        }
        if self.u.len() != k || !(self.v.is_empty() || self.v.len() == k - 1) {
            return Err(TranscriptionError::Shape(format!(
                "{} states, {} inputs, {} virtual controls",
                k,
                self.u.len(),
                self.v.len()
            )));
        }
        if !(self.tf > 0.0) {
            return Err(TranscriptionError::Shape("t_f must be positive".into()));
        }
        Ok(())
    }

    /// Normalized node times `τ_k = k/(K−1)`.
    pub fn tau(&self) -> Vec<f64> {
        node_grid(self.nodes())
    }

    /// Physical node times.
    pub fn times(&self) -> Vec<f64> {
        self.tau().iter().map(|t| t * self.tf).collect()
    }

    pub fn scale(&self, map: &ScalingMap) -> DecisionStack {
        DecisionStack {
            x: self.x.iter().map(|x| map.scale_state(x)).collect(),
            u: self.u.iter().map(|u| map.scale_input(u)).collect(),
            tf: map.scale_time(self.tf),
            v: self.v.iter().map(|v| v.component_div(&map.sx)).collect(),
        }
    }

    pub fn unscale(&self, map: &ScalingMap) -> DecisionStack {
        DecisionStack {
            x: self.x.iter().map(|x| map.unscale_state(x)).collect(),
            u: self.u.iter().map(|u| map.unscale_input(u)).collect(),
            tf: map.unscale_time(self.tf),
            v: self.v.iter().map(|v| v.component_mul(&map.sx)).collect(),
        }
    }
}

pub fn node_grid(k: usize) -> Vec<f64> {
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

/// `physical = scale ⊙ scaled + offset`, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub sx: StateVec,
    pub ox: StateVec,
    pub su: InputVec,
    pub ou: InputVec,
    pub st: f64,
    pub ot: f64,
}

impl ScalingMap {
    pub fn identity() -> Self {
        Self {
            sx: StateVec::repeat(1.0),
            ox: StateVec::zeros(),
            su: InputVec::repeat(1.0),
            ou: InputVec::zeros(),
            st: 1.0,
            ot: 0.0,
        }
    }

    /// Quaternion unscaled, body rate by the largest rate the rotors can
    /// absorb about a principal axis, rotor momentum by `r_max`, torque by
    /// `u_max`, time by `t_ref`.
    pub fn from_params(p: &SatelliteParams, t_ref: f64) -> Self {
        let w_ref = (0..3)
            .map(|a| p.axis_momentum(a) / p.j[(a, a)])
            .fold(0.0, f64::max);
        let mut sx = StateVec::repeat(1.0);
        for i in 4..7 {
            sx[i] = w_ref;
        }
        for i in 7..11 {
            sx[i] = p.r_max;
        }
        Self {
            sx,
            ox: StateVec::zeros(),
            su: InputVec::repeat(p.u_max),
            ou: InputVec::zeros(),
            st: t_ref,
            ot: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sx.iter().chain(self.su.iter()).chain([&self.st]).all(|s| s.is_finite() && *s > 0.0)
    }

    pub fn scale_state(&self, x: &StateVec) -> StateVec {
        (x - self.ox).component_div(&self.sx)
    }

    pub fn unscale_state(&self, x: &StateVec) -> StateVec {
        x.component_mul(&self.sx) + self.ox
    }

    pub fn scale_input(&self, u: &InputVec) -> InputVec {
        (u - self.ou).component_div(&self.su)
    }

    pub fn unscale_input(&self, u: &InputVec) -> InputVec {
        u.component_mul(&self.su) + self.ou
    }

    pub fn scale_time(&self, t: f64) -> f64 {
        (t - self.ot) / self.st
    }

    pub fn unscale_time(&self, t: f64) -> f64 {
        t * self.st + self.ot
    }
}

/// `x_{k+1} = A_k x_k + B⁻_k u_k + B⁺_k u_{k+1} + Σ_k t_f + e_k`
#[derive(Debug, Clone)]
pub struct DiscreteLtvSystem {
    pub tau: Vec<f64>,
    pub a: Vec<MatX>,
    pub bm: Vec<MatXU>,
    pub bp: Vec<MatXU>,
    pub sigma: Vec<StateVec>,
    pub e: Vec<StateVec>,
    /// Nonlinear propagation of each nominal node to the end of its interval.
    pub x_prop: Vec<StateVec>,
}

impl DiscreteLtvSystem {
    pub fn nodes(&self) -> usize {
        self.tau.len()
    }

    pub fn propagate(&self, k: usize, x: &StateVec, u0: &InputVec, u1: &InputVec, tf: f64) -> StateVec {
        self.a[k] * x + self.bm[k] * u0 + self.bp[k] * u1 + self.sigma[k] * tf + self.e[k]
    }
}

type Aug = SMatrix<f64, NX, 22>;

fn foh_rhs(model: &Model, m: &Aug, u0: &InputVec, u1: &InputVec, lm: f64, tf: f64) -> Aug {
    let x: StateVec = m.column(0).into_owned();
    let lp = 1.0 - lm;
    let u = u0 * lm + u1 * lp;
    let f = model.f(&x, &u);
    let (dfx, dfu) = model.jacobians(&x, &u);
    let a = dfx * tf;
    let b = dfu * tf;
    let mut d = a * m;
    d.set_column(0, &(f * tf));
    let mut bl = d.fixed_view_mut::<NX, NU>(0, 12);
    bl += b * lm;
    let mut br = d.fixed_view_mut::<NX, NU>(0, 16);
    br += b * lp;
    let mut c = d.column_mut(20);
    c += f;
    let mut c = d.column_mut(21);
    c -= a * x + b * u;
    d
}

fn foh_interval(
    model: &Model,
    x0: &StateVec,
    u0: &InputVec,
    u1: &InputVec,
    tf: f64,
    dtau: f64,
    substeps: usize,
) -> Aug {
    let mut m = Aug::zeros();
    m.set_column(0, x0);
    m.fixed_view_mut::<NX, NX>(0, 1).fill_with_identity();
    let h = dtau / substeps as f64;
    for s in 0..substeps {
        // λ⁻ at the start, midpoint and end of the substep
        let l0 = 1.0 - s as f64 / substeps as f64;
        let lh = 1.0 - (s as f64 + 0.5) / substeps as f64;
        let l1 = 1.0 - (s + 1) as f64 / substeps as f64;
        let k1 = foh_rhs(model, &m, u0, u1, l0, tf);
        let k2 = foh_rhs(model, &(m + k1 * (h / 2.0)), u0, u1, lh, tf);
        let k3 = foh_rhs(model, &(m + k2 * (h / 2.0)), u0, u1, lh, tf);
        let k4 = foh_rhs(model, &(m + k3 * h), u0, u1, l1, tf);
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    m
}

/// Exact FOH discretization about `nominal`; each interval is integrated
/// from its own nominal node.
pub fn discretize_foh(model: &Model, nominal: &DecisionStack) -> Result<DiscreteLtvSystem, TranscriptionError> {
    discretize_foh_with(model, nominal, FOH_SUBSTEPS)
}

pub fn discretize_foh_with(
    model: &Model,
    nominal: &DecisionStack,
    substeps: usize,
) -> Result<DiscreteLtvSystem, TranscriptionError> {
    nominal.check()?;
    let k = nominal.nodes();
    let dtau = 1.0 / (k - 1) as f64;
    let blocks: Vec<Aug> = (0..k - 1)
        .into_par_iter()
        .map(|i| {
            let m = foh_interval(model, &nominal.x[i], &nominal.u[i], &nominal.u[i + 1], nominal.tf, dtau, substeps);
            if m.iter().all(|v| v.is_finite()) {
                Ok(m)
            } else {
                Err(TranscriptionError::Blowup { interval: i })
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(DiscreteLtvSystem {
        tau: nominal.tau(),
        a: blocks.iter().map(|m| m.fixed_view::<NX, NX>(0, 1).into_owned()).collect(),
        bm: blocks.iter().map(|m| m.fixed_view::<NX, NU>(0, 12).into_owned()).collect(),
        bp: blocks.iter().map(|m| m.fixed_view::<NX, NU>(0, 16).into_owned()).collect(),
        sigma: blocks.iter().map(|m| m.column(20).into_owned()).collect(),
        e: blocks.iter().map(|m| m.column(21).into_owned()).collect(),
        x_prop: blocks.iter().map(|m| m.column(0).into_owned()).collect(),
    })
}

/// Desired attitude and rate at an observation node (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub node: usize,
    pub q: UnitQuaternion,
    #[serde(default = "Vec3::zeros")]
    pub w: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingScheduleSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub t_f: f64,
    pub gamma: f64,
    pub rho: f64,
    pub observations: Vec<Observation>,
}

impl PointingScheduleSpec {
    pub fn validate(&self) -> Result<(), TranscriptionError> {
        if self.k < 2 {
            return Err(TranscriptionError::TooFewNodes(self.k));
        }
        if self.observations.is_empty() {
            return Err(TranscriptionError::EmptyObservations);
        }
        for o in &self.observations {
            if o.node >= self.k {
                return Err(TranscriptionError::ObservationOutOfRange { node: o.node, k: self.k });
            }
        }
        if !(self.t_f > 0.0) {
            return Err(TranscriptionError::Shape("t_f must be positive".into()));
        }
        Ok(())
    }
}

/// Column positions of the decision variables in a transcribed program.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub k: usize,
    /// `[x̂_k, û_k]` blocks of 15 per node.
    pub nodes: usize,
    pub tf: Option<usize>,
    pub v_plus: usize,
    pub v_minus: usize,
    /// Trust-region epigraphs, one per node.
    pub eta: usize,
    pub n: usize,
}

impl Layout {
    pub fn x(&self, k: usize, i: usize) -> usize {
        self.nodes + NZ * k + i
    }

    pub fn u(&self, k: usize, i: usize) -> usize {
        self.nodes + NZ * k + NX + i
    }

    pub fn vp(&self, k: usize, i: usize) -> usize {
        self.v_plus + NX * k + i
    }

    pub fn vm(&self, k: usize, i: usize) -> usize {
        self.v_minus + NX * k + i
    }

    /// Physical stack from a primal solution. `tf_fixed` is used when the
    /// program has no final-time column.
    pub fn extract(&self, sol: &[f64], map: &ScalingMap, tf_fixed: f64) -> DecisionStack {
        let scaled = DecisionStack {
            x: (0..self.k).map(|k| StateVec::from_fn(|i, _| sol[self.x(k, i)])).collect(),
            u: (0..self.k).map(|k| InputVec::from_fn(|i, _| sol[self.u(k, i)])).collect(),
            tf: self.tf.map_or(map.scale_time(tf_fixed), |j| sol[j]),
            v: (0..self.k - 1)
                .map(|k| StateVec::from_fn(|i, _| sol[self.vp(k, i)] - sol[self.vm(k, i)]))
                .collect(),
        };
        scaled.unscale(map)
    }
}

/// A subproblem ready for the cone solver.
#[derive(Debug, Clone)]
pub struct Transcribed {
    pub program: ConeProgram,
    pub layout: Layout,
    pub map: ScalingMap,
}

/// Effective actuator limits after overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub r_max: f64,
    pub u_max: f64,
    pub w_max: Option<f64>,
}

impl Limits {
    pub fn new(p: &SatelliteParams, cfg: &ScpConfig) -> Self {
        Self {
            r_max: cfg.bounds.r_max.unwrap_or(p.r_max),
            u_max: cfg.bounds.u_max.unwrap_or(p.u_max),
            w_max: cfg.bounds.w_max,
        }
    }
}

struct Assembler<'a> {
    b: ProgramBuilder,
    lay: Layout,
    map: &'a ScalingMap,
}

impl<'a> Assembler<'a> {
    fn new(k: usize, with_tf: bool, map: &'a ScalingMap) -> Self {
        let mut b = ProgramBuilder::new();
        let nodes = b.add_vars(NZ * k);
        let tf = with_tf.then(|| b.add_vars(1));
        let v_plus = b.add_vars(NX * (k - 1));
        let v_minus = b.add_vars(NX * (k - 1));
        let eta = b.add_vars(k);
        let n = b.num_vars();
        Self {
            b,
            lay: Layout { k, nodes, tf, v_plus, v_minus, eta, n },
            map,
        }
    }

    fn px(&self, k: usize, i: usize) -> AffineExpr {
        AffineExpr::new().term(self.lay.x(k, i), self.map.sx[i]).plus(self.map.ox[i])
    }

    fn pu(&self, k: usize, i: usize) -> AffineExpr {
        AffineExpr::new().term(self.lay.u(k, i), self.map.su[i]).plus(self.map.ou[i])
    }

    fn ptf(&self) -> Option<AffineExpr> {
        self.lay.tf.map(|j| AffineExpr::new().term(j, self.map.st).plus(self.map.ot))
    }

    fn dynamics(&mut self, sys: &DiscreteLtvSystem, tf_fixed: f64) {
        for k in 0..self.lay.k - 1 {
            for i in 0..NX {
                let mut row = self.px(k + 1, i);
                for j in 0..NX {
                    row.add_scaled(&self.px(k, j), -sys.a[k][(i, j)]);
                }
                for j in 0..NU {
                    row.add_scaled(&self.pu(k, j), -sys.bm[k][(i, j)]);
                    row.add_scaled(&self.pu(k + 1, j), -sys.bp[k][(i, j)]);
                }
                match self.ptf() {
                    Some(t) => row.add_scaled(&t, -sys.sigma[k][i]),
                    None => row.constant -= sys.sigma[k][i] * tf_fixed,
                }
                row.constant -= sys.e[k][i];
                let mut row = row.scaled(1.0 / self.map.sx[i]);
                row.add_term(self.lay.vp(k, i), -1.0);
                row.add_term(self.lay.vm(k, i), 1.0);
                self.b.add_eq(row);
            }
        }
    }

    fn pin_state(&mut self, k: usize, rows: std::ops::Range<usize>, value: &StateVec) {
        for i in rows {
            self.b.add_eq(self.px(k, i).plus(-value[i]).scaled(1.0 / self.map.sx[i]));
        }
    }

    fn boxes(&mut self, lim: &Limits) {
        let two_sided = |b: &mut ProgramBuilder, e: AffineExpr, bound: f64| {
            b.add_nonneg(e.clone().scaled(-1.0 / bound).plus(1.0));
            b.add_nonneg(e.scaled(1.0 / bound).plus(1.0));
        };
        for k in 0..self.lay.k {
            for i in 0..4 {
                let e = self.px(k, 7 + i);
                two_sided(&mut self.b, e, lim.r_max);
                let e = self.pu(k, i);
                two_sided(&mut self.b, e, lim.u_max);
            }
            if let Some(w) = lim.w_max {
                for i in 0..3 {
                    let e = self.px(k, 4 + i);
                    two_sided(&mut self.b, e, w);
                }
            }
        }
    }

    fn virtual_controls(&mut self, w_vc: f64) {
        for j in self.lay.v_plus..self.lay.v_plus + 2 * NX * (self.lay.k - 1) {
            self.b.add_nonneg(AffineExpr::var(j));
            self.b.add_cost(j, w_vc);
        }
    }

    fn trust_region(&mut self, nominal_scaled: &DecisionStack, w_tr: f64) {
        for k in 0..self.lay.k {
            let mut rows = vec![AffineExpr::var(self.lay.eta + k)];
            for i in 0..NX {
                rows.push(AffineExpr::new().term(self.lay.x(k, i), w_tr).plus(-w_tr * nominal_scaled.x[k][i]));
            }
            for i in 0..NU {
                rows.push(AffineExpr::new().term(self.lay.u(k, i), w_tr).plus(-w_tr * nominal_scaled.u[k][i]));
            }
            if let Some(j) = self.lay.tf {
                rows.push(AffineExpr::new().term(j, w_tr).plus(-w_tr * nominal_scaled.tf));
            }
            self.b.add_soc(rows);
            self.b.add_cost(self.lay.eta + k, 1.0);
        }
    }

    fn power_energy(&mut self, nominal: &DecisionStack, p: &SatelliteParams) {
        let rows = convexify_power_energy(self, nominal, p);
        for r in rows.power.into_iter().chain(rows.energy) {
            if !r.terms.is_empty() {
                self.b.add_nonneg(r);
            }
        }
    }

    fn finish(self) -> (ProgramBuilder, Layout) {
        (self.b, self.lay)
    }
}

/// Per-node linear power rows and one energy row, each meaning `row ≥ 0`.
#[derive(Debug, Clone, Default)]
pub struct PowerEnergyRows {
    pub power: Vec<AffineExpr>,
    pub energy: Option<AffineExpr>,
}

/// Coefficients of the linearized `Σᵢ|uᵢrᵢ|/J_r` about `(r̄, ū)`:
/// returns `(∂/∂r, ∂/∂u, constant)`.
pub fn linearized_power(r: &Vector4<f64>, u: &InputVec, jr: f64) -> (Vector4<f64>, InputVec, f64) {
    let mut dr = Vector4::zeros();
    let mut du = InputVec::zeros();
    let mut c = 0.0;
    for i in 0..4 {
        let prod = u[i] * r[i];
        if prod.abs() <= POWER_DEAD_ZONE {
            continue;
        }
        let s = prod.signum();
        dr[i] = s * u[i] / jr;
        du[i] = s * r[i] / jr;
        c -= s * prod / jr;
    }
    (dr, du, c)
}

fn convexify_power_energy(asm: &Assembler, nominal: &DecisionStack, p: &SatelliteParams) -> PowerEnergyRows {
    let mut out = PowerEnergyRows::default();
    if p.p_max.is_none() && p.e_max.is_none() {
        return out;
    }
    let k = asm.lay.k;
    let mut h_lin = Vec::with_capacity(k);
    for n in 0..k {
        let r = rotor_of(&nominal.x[n]);
        let (dr, du, c) = linearized_power(&r, &nominal.u[n], p.jr);
        let mut e = AffineExpr::constant(c);
        for i in 0..4 {
            e.add_scaled(&asm.px(n, 7 + i), dr[i]);
            e.add_scaled(&asm.pu(n, i), du[i]);
        }
        h_lin.push(e);
    }
    if let Some(pm) = p.p_max.filter(|v| v.is_finite()) {
        out.power = h_lin.iter().map(|h| h.clone().scaled(-1.0 / pm).plus(1.0)).collect();
    }
    if let Some(em) = p.e_max.filter(|v| v.is_finite()) {
        let mut e = AffineExpr::new();
        let w = 1.0 / (k - 1) as f64;
        for (n, h) in h_lin.iter().enumerate() {
            e.add_scaled(h, w * nominal.tf);
            if let Some(t) = asm.ptf() {
                let hbar = crate::dynamics::instantaneous_power(&rotor_of(&nominal.x[n]), &nominal.u[n], p.jr);
                e.add_scaled(&t, w * hbar);
                e.constant -= w * hbar * nominal.tf;
            }
        }
        out.energy = Some(e.scaled(-1.0 / em).plus(1.0));
    }
    out
}

/// Power/energy rows for a nominal, in the variable layout of a
/// minimum-time (`with_tf`) or fixed-horizon program.
pub fn power_energy_rows(
    nominal: &DecisionStack,
    p: &SatelliteParams,
    map: &ScalingMap,
    with_tf: bool,
) -> Result<(PowerEnergyRows, Layout), TranscriptionError> {
    nominal.check()?;
    let asm = Assembler::new(nominal.nodes(), with_tf, map);
    Ok((convexify_power_energy(&asm, nominal, p), asm.lay.clone()))
}

fn check_unit(q: &UnitQuaternion, what: &'static str) -> Result<(), TranscriptionError> {
    if (q.as_vec4().norm() - 1.0).abs() > 1e-9 {
        Err(TranscriptionError::NonUnitBoundary(what))
    } else {
        Ok(())
    }
}

/// Rest-to-rest minimum-time subproblem about `nominal`. The initial state is
/// pinned completely; the final attitude and rate are pinned.
pub fn assemble_min_time(
    model: &Model,
    nominal: &DecisionStack,
    x_init: &StateVec,
    q_final: &UnitQuaternion,
    cfg: &ScpConfig,
    map: &ScalingMap,
) -> Result<Transcribed, TranscriptionError> {
    nominal.check()?;
    if (quat_of(x_init).norm() - 1.0).abs() > 1e-9 {
        return Err(TranscriptionError::NonUnitBoundary("initial"));
    }
    check_unit(q_final, "final")?;
    let sys = discretize_foh(model, nominal)?;
    let p = &model.params;
    let lim = Limits::new(p, cfg);
    let k = nominal.nodes();
    let mut asm = Assembler::new(k, true, map);
    asm.dynamics(&sys, nominal.tf);
    asm.pin_state(0, 0..NX, x_init);
    let mut x_final = StateVec::zeros();
    x_final.fixed_rows_mut::<4>(0).copy_from(&q_final.as_vec4());
    asm.pin_state(k - 1, 0..7, &x_final);
    asm.boxes(&lim);
    let tf = asm.ptf().expect("min-time layout has t_f");
    asm.b.add_nonneg(tf.plus(-cfg.t_min_floor).scaled(1.0 / map.st));
    asm.virtual_controls(cfg.w_vc);
    asm.trust_region(&nominal.scale(map), cfg.w_tr);
    asm.power_energy(nominal, p);
    let j = asm.lay.tf.expect("t_f column");
    asm.b.add_cost(j, map.st);
    let (b, layout) = asm.finish();
    Ok(Transcribed {
        program: b.build(),
        layout,
        map: map.clone(),
    })
}

/// Fixed-horizon multi-target subproblem. Only the initial attitude and rate
/// are pinned; the terminal state is free.
pub fn assemble_multi_target(
    model: &Model,
    nominal: &DecisionStack,
    x_init: &StateVec,
    spec: &PointingScheduleSpec,
    cfg: &ScpConfig,
    map: &ScalingMap,
) -> Result<Transcribed, TranscriptionError> {
    nominal.check()?;
    spec.validate()?;
    if nominal.nodes() != spec.k {
        return Err(TranscriptionError::Shape(format!(
            "nominal has {} nodes but the schedule has {}",
            nominal.nodes(),
            spec.k
        )));
    }
    if (quat_of(x_init).norm() - 1.0).abs() > 1e-9 {
        return Err(TranscriptionError::NonUnitBoundary("initial"));
    }
    let sys = discretize_foh(model, nominal)?;
    let p = &model.params;
    let lim = Limits::new(p, cfg);
    let k = spec.k;
    let mut asm = Assembler::new(k, false, map);
    asm.dynamics(&sys, spec.t_f);
    asm.pin_state(0, 0..7, x_init);
    asm.boxes(&lim);
    asm.virtual_controls(cfg.w_vc);
    asm.trust_region(&nominal.scale(map), cfg.w_tr);
    asm.power_energy(nominal, p);

    let constraint = cfg.constraint_mode();
    for o in &spec.observations {
        let m = error_matrix(&o.q);
        let q_err: Vec<AffineExpr> = (0..4)
            .map(|r| {
                let mut e = AffineExpr::constant(if r == 3 { -1.0 } else { 0.0 });
                for c in 0..4 {
                    e.add_scaled(&asm.px(o.node, c), m[(r, c)]);
                }
                e
            })
            .collect();
        let w_err: Vec<AffineExpr> = (0..3).map(|i| asm.px(o.node, 4 + i).plus(-o.w[i])).collect();
        if constraint {
            bound_norm(&mut asm.b, q_err, cfg.eps_q);
            bound_norm(&mut asm.b, w_err, cfg.eps_w);
        } else {
            let eq = asm.b.add_vars(1);
            asm.b.add_cost(eq, 1.0);
            asm.b.add_soc(std::iter::once(AffineExpr::var(eq)).chain(q_err).collect());
            let ew = asm.b.add_vars(1);
            asm.b.add_cost(ew, spec.gamma);
            asm.b.add_soc(std::iter::once(AffineExpr::var(ew)).chain(w_err).collect());
        }
    }
    for n in 0..k {
        let mu = asm.b.add_vars(1);
        asm.b.add_cost(mu, spec.rho);
        let mut rows = vec![AffineExpr::var(mu)];
        rows.extend((0..NU).map(|i| asm.pu(n, i)));
        asm.b.add_soc(rows);
    }
    let (b, layout) = asm.finish();
    Ok(Transcribed {
        program: b.build(),
        layout,
        map: map.clone(),
    })
}

fn bound_norm(b: &mut ProgramBuilder, rows: Vec<AffineExpr>, eps: Option<f64>) {
    match eps {
        None => {}
        Some(e) if e.is_infinite() => {}
        Some(e) if e == 0.0 => {
            for r in rows {
                b.add_eq(r);
            }
        }
        Some(e) => {
            b.add_soc(std::iter::once(AffineExpr::constant(e)).chain(rows).collect());
        }
    }
}
