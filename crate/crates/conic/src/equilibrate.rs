//! Ruiz equilibration of `A` with cone-uniform row scaling, plus cost scaling.

use crate::cones::{Cone, ConeSet};
use crate::sparse::{inf_norm, CscMatrix};

const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

/// `Â = E A D`, `ĉ = σ D c`, `b̂ = E b`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub cost: f64,
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            d: vec![1.0; n],
            e: vec![1.0; m],
            cost: 1.0,
        }
    }

    /// `x = D x̂`
    pub fn unscale_x(&self, xh: &[f64], div: f64) -> Vec<f64> {
        xh.iter().zip(&self.d).map(|(x, d)| x * d / div).collect()
    }

    /// `s = E⁻¹ ŝ`
    pub fn unscale_s(&self, sh: &[f64], div: f64) -> Vec<f64> {
        sh.iter().zip(&self.e).map(|(s, e)| s / e / div).collect()
    }

    /// `z = E ẑ / σ`
    pub fn unscale_z(&self, zh: &[f64], div: f64) -> Vec<f64> {
        zh.iter().zip(&self.e).map(|(z, e)| z * e / (self.cost * div)).collect()
    }
}

fn inv_sqrt(norm: f64) -> f64 {
    if norm <= 0.0 || !norm.is_finite() {
        1.0
    } else {
        (1.0 / norm.sqrt()).clamp(MIN_SCALE, MAX_SCALE)
    }
}

/// Returns the scaled `(Â, ĉ, b̂)` and the scaling that produced them.
pub(crate) fn equilibrate(
    a: &CscMatrix,
    c: &[f64],
    b: &[f64],
    cones: &ConeSet,
    iters: usize,
) -> (CscMatrix, Vec<f64>, Vec<f64>, Scaling) {
    let (n, m) = (a.ncols, a.nrows);
    let mut ah = a.clone();
    let mut sc = Scaling::identity(n, m);
    for _ in 0..iters {
        let cn = ah.col_inf_norms();
        let rn = ah.row_inf_norms();
        let dd: Vec<f64> = cn.iter().map(|&v| inv_sqrt(v)).collect();
        let mut de: Vec<f64> = rn.iter().map(|&v| inv_sqrt(v)).collect();
        for (ci, cone) in cones.cones.iter().enumerate() {
            if let Cone::SecondOrder(k) = cone {
                let off = cones.offsets[ci];
                let blk = rn[off..off + k].iter().fold(0.0_f64, |acc, v| acc.max(*v));
                let v = inv_sqrt(blk);
                de[off..off + k].iter_mut().for_each(|x| *x = v);
            }
        }
        for j in 0..n {
            sc.d[j] = (sc.d[j] * dd[j]).clamp(MIN_SCALE, MAX_SCALE);
        }
        for i in 0..m {
            sc.e[i] = (sc.e[i] * de[i]).clamp(MIN_SCALE, MAX_SCALE);
        }
        ah = a.clone();
        ah.scale(&sc.e, &sc.d);
    }
    let mut ch: Vec<f64> = c.iter().zip(&sc.d).map(|(c, d)| c * d).collect();
    let cn = inf_norm(&ch);
    sc.cost = if cn > 0.0 { (1.0 / cn).clamp(MIN_SCALE, MAX_SCALE) } else { 1.0 };
    ch.iter_mut().for_each(|v| *v *= sc.cost);
    let bh: Vec<f64> = b.iter().zip(&sc.e).map(|(b, e)| b * e).collect();
    (ah, ch, bh, sc)
}
