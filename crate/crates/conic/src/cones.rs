//! Cone definitions and the symmetric-cone algebra the interior-point method
//! needs: Jordan products, Nesterov–Todd scaling, and step-to-boundary.

use serde::{Deserialize, Serialize};

/// One block of the slack cone `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "dim", rename_all = "snake_case")]
pub enum Cone {
    /// `{0}ⁿ`: equality rows.
    Zero(usize),
    /// `ℝ₊ⁿ`.
    NonNegative(usize),
    /// `{(t, x) : ‖x‖₂ ≤ t}` of total dimension `n`.
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNegative(n) | Cone::SecondOrder(n) => n,
        }
    }

    /// Barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::NonNegative(n) => n,
            Cone::SecondOrder(_) => 1,
        }
    }
}

/// Per-block NT scaling. `W` is symmetric for every supported cone.
#[derive(Debug, Clone)]
pub(crate) enum BlockScaling {
    Zero,
    NonNegative {
        /// diagonal of W
        w: Vec<f64>,
    },
    SecondOrder {
        eta: f64,
        /// normalized scaling point w̄
        wbar: Vec<f64>,
    },
}

/// The full cone `K` as an ordered product of blocks.
#[derive(Debug, Clone)]
pub(crate) struct ConeSet {
    pub cones: Vec<Cone>,
    pub offsets: Vec<usize>,
    pub dim: usize,
    pub degree: usize,
    pub scalings: Vec<BlockScaling>,
}

fn soc_residual(v: &[f64]) -> f64 {
    let tail: f64 = v[1..].iter().map(|x| x * x).sum();
    (v[0] - tail.sqrt()) * (v[0] + tail.sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl ConeSet {
    pub fn new(cones: &[Cone]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut dim = 0;
        for c in cones {
            offsets.push(dim);
            dim += c.dim();
        }
        let degree = cones.iter().map(Cone::degree).sum();
        let scalings = cones
            .iter()
            .map(|c| match *c {
                Cone::Zero(_) => BlockScaling::Zero,
                Cone::NonNegative(n) => BlockScaling::NonNegative { w: vec![1.0; n] },
                Cone::SecondOrder(n) => {
                    let mut wbar = vec![0.0; n];
                    wbar[0] = 1.0;
                    BlockScaling::SecondOrder { eta: 1.0, wbar }
                }
            })
            .collect();
        Self {
            cones: cones.to_vec(),
            offsets,
            dim,
            degree,
            scalings,
        }
    }

    fn block<'a>(&self, i: usize, v: &'a [f64]) -> &'a [f64] {
        &v[self.offsets[i]..self.offsets[i] + self.cones[i].dim()]
    }

    fn block_mut<'a>(&self, i: usize, v: &'a mut [f64]) -> &'a mut [f64] {
        &mut v[self.offsets[i]..self.offsets[i] + self.cones[i].dim()]
    }

    /// Smallest "eigenvalue" over the non-zero blocks (∞ if there are none).
    pub fn min_eig(&self, v: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for (i, cone) in self.cones.iter().enumerate() {
            let b = self.block(i, v);
            match cone {
                Cone::Zero(_) => {}
                Cone::NonNegative(_) => {
                    for &x in b {
                        m = m.min(x);
                    }
                }
                Cone::SecondOrder(_) => m = m.min(b[0] - norm(&b[1..])),
            }
        }
        m
    }

    /// `v ← v + alpha·e` on the non-zero blocks; zero-cone entries are zeroed.
    pub fn add_identity(&self, v: &mut [f64], alpha: f64) {
        for (i, cone) in self.cones.iter().enumerate() {
            let b = self.block_mut(i, v);
            match cone {
                Cone::Zero(_) => b.iter_mut().for_each(|x| *x = 0.0),
                Cone::NonNegative(_) => b.iter_mut().for_each(|x| *x += alpha),
                Cone::SecondOrder(_) => b[0] += alpha,
            }
        }
    }

    /// Shifts `v` into the interior when it is not already comfortably inside.
    /// Zero-cone entries are left alone.
    pub fn shift_to_interior(&self, v: &mut [f64]) {
        let m = self.min_eig(v);
        if m.is_finite() && m <= 1e-8 {
            self.add_scaled_identity(v, 1.0 - m);
        }
    }

    /// Computes NT scalings at the strictly interior pair `(s, z)` and returns λ = W z.
    pub fn update_scaling(&mut self, s: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let mut lambda = vec![0.0; self.dim];
        for i in 0..self.cones.len() {
            let (off, n) = (self.offsets[i], self.cones[i].dim());
            let sb = &s[off..off + n];
            let zb = &z[off..off + n];
            let lb = &mut lambda[off..off + n];
            match &mut self.scalings[i] {
                BlockScaling::Zero => {}
                BlockScaling::NonNegative { w } => {
                    for j in 0..n {
                        if !(sb[j] > 0.0 && zb[j] > 0.0) {
                            return None;
                        }
                        w[j] = (sb[j] / zb[j]).sqrt();
                        lb[j] = (sb[j] * zb[j]).sqrt();
                    }
                }
                BlockScaling::SecondOrder { eta, wbar } => {
                    let sres = soc_residual(sb);
                    let zres = soc_residual(zb);
                    if !(sres > 0.0 && zres > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                        return None;
                    }
                    let (sn, zn) = (sres.sqrt(), zres.sqrt());
                    let sbar: Vec<f64> = sb.iter().map(|x| x / sn).collect();
                    let zbar: Vec<f64> = zb.iter().map(|x| x / zn).collect();
                    let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                    for j in 1..n {
                        wbar[j] = (sbar[j] - zbar[j]) / (2.0 * gamma);
                    }
                    *eta = (sres / zres).powf(0.25);
                    let mut wz = vec![0.0; n];
                    soc_apply_w(*eta, wbar, zb, &mut wz, false);
                    lb.copy_from_slice(&wz);
                }
            }
        }
        Some(lambda)
    }

    /// `out = W v` (or `W⁻¹ v` when `inverse`).
    pub fn apply_w(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        for i in 0..self.cones.len() {
            let (off, n) = (self.offsets[i], self.cones[i].dim());
            let vb = &v[off..off + n];
            let ob = &mut out[off..off + n];
            match &self.scalings[i] {
                BlockScaling::Zero => ob.iter_mut().for_each(|x| *x = 0.0),
                BlockScaling::NonNegative { w } => {
                    for j in 0..n {
                        ob[j] = if inverse { vb[j] / w[j] } else { vb[j] * w[j] };
                    }
                }
                BlockScaling::SecondOrder { eta, wbar } => soc_apply_w(*eta, wbar, vb, ob, inverse),
            }
        }
    }

    /// `out = W² v`.
    pub fn apply_w2(&self, v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.dim];
        self.apply_w(v, &mut tmp, false);
        self.apply_w(&tmp, out, false);
    }

    /// Dense `W²` block for block `i`, row-major, for KKT assembly.
    pub fn w2_block(&self, i: usize) -> Vec<f64> {
        let n = self.cones[i].dim();
        let mut out = vec![0.0; n * n];
        match &self.scalings[i] {
            BlockScaling::Zero => {}
            BlockScaling::NonNegative { w } => {
                for j in 0..n {
                    out[j * n + j] = w[j] * w[j];
                }
            }
            BlockScaling::SecondOrder { eta, wbar } => {
                // W = η [w0 w1ᵀ; w1 I + w1w1ᵀ/(1+w0)], so W² = η² (2 w̄w̄ᵀ − J) with J = diag(1, −I).
                let e2 = eta * eta;
                for r in 0..n {
                    for c in 0..n {
                        let mut v = 2.0 * wbar[r] * wbar[c];
                        if r == c {
                            v += if r == 0 { -1.0 } else { 1.0 };
                        }
                        out[r * n + c] = e2 * v;
                    }
                }
            }
        }
        out
    }

    /// Jordan product `u ∘ v`.
    pub fn circ(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for (i, cone) in self.cones.iter().enumerate() {
            let off = self.offsets[i];
            let n = cone.dim();
            let (ub, vb) = (&u[off..off + n], &v[off..off + n]);
            let ob = &mut out[off..off + n];
            match cone {
                Cone::Zero(_) => ob.iter_mut().for_each(|x| *x = 0.0),
                Cone::NonNegative(_) => {
                    for j in 0..n {
                        ob[j] = ub[j] * vb[j];
                    }
                }
                Cone::SecondOrder(_) => {
                    ob[0] = ub.iter().zip(vb).map(|(a, b)| a * b).sum();
                    for j in 1..n {
                        ob[j] = ub[0] * vb[j] + vb[0] * ub[j];
                    }
                }
            }
        }
    }

    /// Solves `λ ∘ x = v` for `x`.
    pub fn inv_circ(&self, lambda: &[f64], v: &[f64], out: &mut [f64]) {
        for (i, cone) in self.cones.iter().enumerate() {
            let off = self.offsets[i];
            let n = cone.dim();
            let (lb, vb) = (&lambda[off..off + n], &v[off..off + n]);
            let ob = &mut out[off..off + n];
            match cone {
                Cone::Zero(_) => ob.iter_mut().for_each(|x| *x = 0.0),
                Cone::NonNegative(_) => {
                    for j in 0..n {
                        ob[j] = vb[j] / lb[j];
                    }
                }
                Cone::SecondOrder(_) => {
                    let rho = soc_residual(lb);
                    let tail: f64 = lb[1..].iter().zip(&vb[1..]).map(|(a, b)| a * b).sum();
                    let x0 = (lb[0] * vb[0] - tail) / rho;
                    ob[0] = x0;
                    for j in 1..n {
                        ob[j] = (vb[j] - x0 * lb[j]) / lb[0];
                    }
                }
            }
        }
    }

    /// Adds `alpha·e` to the non-zero blocks without touching zero-cone entries.
    pub fn add_scaled_identity(&self, v: &mut [f64], alpha: f64) {
        for (i, cone) in self.cones.iter().enumerate() {
            let b = self.block_mut(i, v);
            match cone {
                Cone::Zero(_) => {}
                Cone::NonNegative(_) => b.iter_mut().for_each(|x| *x += alpha),
                Cone::SecondOrder(_) => b[0] += alpha,
            }
        }
    }

    /// Largest `α ≥ 0` with `u + α du ∈ K` (may be +∞).
    pub fn step_length(&self, u: &[f64], du: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (i, cone) in self.cones.iter().enumerate() {
            let ub = self.block(i, u);
            let db = self.block(i, du);
            match cone {
                Cone::Zero(_) => {}
                Cone::NonNegative(_) => {
                    for (x, d) in ub.iter().zip(db) {
                        if *d < 0.0 {
                            alpha = alpha.min(-x / d);
                        }
                    }
                }
                Cone::SecondOrder(_) => alpha = alpha.min(soc_step(ub, db)),
            }
        }
        alpha
    }

    /// `sᵀz` restricted to the non-zero blocks.
    pub fn complementarity(&self, s: &[f64], z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, cone) in self.cones.iter().enumerate() {
            if matches!(cone, Cone::Zero(_)) {
                continue;
            }
            acc += self.block(i, s).iter().zip(self.block(i, z)).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }
}

fn soc_apply_w(eta: f64, wbar: &[f64], v: &[f64], out: &mut [f64], inverse: bool) {
    let n = v.len();
    let w0 = wbar[0];
    let tail: f64 = wbar[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    let (sign, scale) = if inverse { (-1.0, 1.0 / eta) } else { (1.0, eta) };
    out[0] = scale * (w0 * v[0] + sign * tail);
    let coef = sign * v[0] + tail / (1.0 + w0);
    for j in 1..n {
        out[j] = scale * (v[j] + coef * wbar[j]);
    }
}

/// Largest step keeping `u + α d` inside the second-order cone.
fn soc_step(u: &[f64], d: &[f64]) -> f64 {
    // q(α) = a α² + 2 b α + c, with c = u0² − ‖u1‖² > 0 at an interior point.
    let a = d[0] * d[0] - d[1..].iter().map(|x| x * x).sum::<f64>();
    let b = u[0] * d[0] - u[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>();
    let c = soc_residual(u).max(0.0);
    let mut best = f64::INFINITY;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            best = -c / (2.0 * b);
        }
    } else {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // numerically stable pair of roots
            let qq = -(b + b.signum() * sq);
            let mut roots = Vec::with_capacity(2);
            if qq != 0.0 {
                roots.push(qq / a);
                roots.push(c / qq);
            } else {
                roots.push(0.0);
            }
            for r in roots {
                if r > 0.0 {
                    best = best.min(r);
                }
            }
        }
    }
    // the linear constraint on the cone axis is implied, but guard against round-off
    if d[0] < 0.0 {
        best = best.min(-u[0] / d[0]);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(cones: &[Cone]) -> ConeSet {
        ConeSet::new(cones)
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let mut k = set(&[Cone::NonNegative(2), Cone::SecondOrder(4)]);
        let s = [2.0, 0.5, 3.0, 1.0, -0.5, 0.7];
        let z = [0.3, 4.0, 2.0, -0.3, 0.4, 1.1];
        let lambda = k.update_scaling(&s, &z).unwrap();
        let mut winv_s = vec![0.0; 6];
        k.apply_w(&s, &mut winv_s, true);
        for (a, b) in lambda.iter().zip(&winv_s) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // W W⁻¹ = I
        let v = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
        let (mut t, mut back) = (vec![0.0; 6], vec![0.0; 6]);
        k.apply_w(&v, &mut t, false);
        k.apply_w(&t, &mut back, true);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        // dense W² agrees with applying W twice
        let block = k.w2_block(1);
        let mut w2v = vec![0.0; 6];
        k.apply_w2(&v, &mut w2v);
        for r in 0..4 {
            let dense: f64 = (0..4).map(|c| block[r * 4 + c] * v[2 + c]).sum();
            assert!((dense - w2v[2 + r]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_jordan_product_round_trips() {
        let k = set(&[Cone::SecondOrder(3), Cone::NonNegative(1)]);
        let lambda = [2.0, 0.5, -0.7, 1.5];
        let v = [0.3, -1.0, 2.0, 0.25];
        let mut x = vec![0.0; 4];
        k.inv_circ(&lambda, &v, &mut x);
        let mut back = vec![0.0; 4];
        k.circ(&lambda, &x, &mut back);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let k = set(&[Cone::SecondOrder(3)]);
        let u = [1.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        let a = k.step_length(&u, &d);
        assert!((a - 1.0).abs() < 1e-12);
        // moving along the axis never leaves the cone
        assert!(k.step_length(&u, &[1.0, 0.0, 0.0]).is_infinite());
        let d = [-1.0, 0.0, 0.0];
        assert!((k.step_length(&u, &d) - 1.0).abs() < 1e-12);
    }
}
