//! Quasi-definite KKT system
//! `[[δI, Aᵀ], [A, −(W² + δI)]]` with a fixed sparsity pattern, refilled each iteration.

use crate::cones::{Cone, ConeSet};
use crate::ldl::LdlFactor;
use crate::sparse::{inf_norm, CscMatrix};

pub(crate) struct KktSystem {
    n: usize,
    m: usize,
    values: Vec<f64>,
    /// per cone: `(slot, local row, local col)` of its `W²` entries (upper triangle)
    w2_slots: Vec<Vec<(usize, usize, usize)>>,
    factor: LdlFactor,
    static_reg: f64,
    refine_steps: usize,
}

impl KktSystem {
    pub fn new(a: &CscMatrix, cones: &ConeSet, static_reg: f64, refine_steps: usize) -> Result<Self, String> {
        let (n, m) = (a.ncols, a.nrows);
        // row-wise view of A for the Aᵀ block columns
        let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (r, c, v) in a.triplets() {
            row_entries[r].push((c, v));
        }

        let mut colptr = Vec::with_capacity(n + m + 1);
        let mut rowval = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for j in 0..n {
            rowval.push(j);
            values.push(static_reg);
            colptr.push(rowval.len());
        }
        let mut w2_slots = vec![Vec::new(); cones.cones.len()];
        for (ci, cone) in cones.cones.iter().enumerate() {
            let off = cones.offsets[ci];
            for local in 0..cone.dim() {
                let i = off + local;
                for &(c, v) in &row_entries[i] {
                    rowval.push(c);
                    values.push(v);
                }
                let first = match cone {
                    Cone::SecondOrder(_) => 0,
                    _ => local,
                };
                for lr in first..=local {
                    w2_slots[ci].push((rowval.len(), lr, local));
                    rowval.push(n + off + lr);
                    values.push(if lr == local { -static_reg } else { 0.0 });
                }
                colptr.push(rowval.len());
            }
        }
        let signs: Vec<f64> = (0..n + m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let factor = LdlFactor::new(n + m, &colptr, &rowval, &signs)?;
        log::debug!("kkt: dim {}, nnz(K) {}, nnz(L) {}", n + m, rowval.len(), factor.nnz_l());
        Ok(Self {
            n,
            m,
            values,
            w2_slots,
            factor,
            static_reg,
            refine_steps,
        })
    }

    /// Refills the `W²` blocks from the current scaling and factors.
    pub fn update(&mut self, cones: &ConeSet) -> Result<(), String> {
        for (ci, slots) in self.w2_slots.iter().enumerate() {
            let n = cones.cones[ci].dim();
            let block = cones.w2_block(ci);
            for &(slot, r, c) in slots {
                let reg = if r == c { self.static_reg } else { 0.0 };
                self.values[slot] = -(block[r * n + c] + reg);
            }
        }
        self.factor.factor(&self.values)
    }

    /// Unregularized product `[[0, Aᵀ], [A, −W²]] v`.
    fn apply_k0(&self, a: &CscMatrix, cones: &ConeSet, v: &[f64], out: &mut [f64]) {
        let (vx, vz) = v.split_at(self.n);
        let (ox, oz) = out.split_at_mut(self.n);
        ox.iter_mut().for_each(|x| *x = 0.0);
        a.gemv_t(1.0, vz, ox);
        cones.apply_w2(vz, oz);
        oz.iter_mut().for_each(|x| *x = -*x);
        a.gemv(1.0, vx, oz);
    }

    /// Solves `K₀ [x; z] = rhs` using the regularized factor plus iterative refinement.
    pub fn solve(&self, a: &CscMatrix, cones: &ConeSet, rhs: &[f64]) -> Vec<f64> {
        let dim = self.n + self.m;
        let mut sol = rhs.to_vec();
        self.factor.solve(&mut sol);
        if self.refine_steps == 0 {
            return sol;
        }
        let mut kx = vec![0.0; dim];
        let residual = |sol: &[f64], kx: &mut [f64]| -> Vec<f64> {
            self.apply_k0(a, cones, sol, kx);
            rhs.iter().zip(kx.iter()).map(|(r, k)| r - k).collect()
        };
        let mut res = residual(&sol, &mut kx);
        let mut rnorm = inf_norm(&res);
        let scale = 1.0 + inf_norm(rhs);
        for _ in 0..self.refine_steps {
            if rnorm <= 1e-14 * scale {
                break;
            }
            let mut corr = res.clone();
            self.factor.solve(&mut corr);
            let cand: Vec<f64> = sol.iter().zip(&corr).map(|(s, c)| s + c).collect();
            let cres = residual(&cand, &mut kx);
            let cnorm = inf_norm(&cres);
            if cnorm < rnorm {
                sol = cand;
                res = cres;
                rnorm = cnorm;
            } else {
                break;
            }
        }
        sol
    }
}
