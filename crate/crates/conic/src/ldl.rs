//! Sparse LDLᵀ factorization of quasi-definite matrices (up-looking, QDLDL-style)
//! with an AMD fill-reducing ordering computed once per sparsity pattern.

const NONE: usize = usize::MAX;

/// Symbolic + numeric LDLᵀ factor of a symmetric matrix given by its upper triangle.
#[derive(Debug, Clone)]
pub(crate) struct LdlFactor {
    n: usize,
    /// `perm[k]` = original index of the k-th pivot
    perm: Vec<usize>,
    /// original upper-triangle entry index -> index in the permuted upper triangle
    map: Vec<usize>,
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// expected pivot signs, permuted order
    signs: Vec<f64>,
    pub reg_eps: f64,
    pub reg_delta: f64,
    /// number of pivots bumped by dynamic regularization in the last factorization
    pub bumped: usize,
}

impl LdlFactor {
    /// `colptr/rowval` describe the upper triangle (rows ≤ col) in CSC form.
    /// `signs[i]` is the expected sign of pivot `i` (+1 or −1).
    pub fn new(n: usize, colptr: &[usize], rowval: &[usize], signs: &[f64]) -> Result<Self, String> {
        let nnz = colptr[n];
        for c in 0..n {
            for p in colptr[c]..colptr[c + 1] {
                if rowval[p] > c {
                    return Err(format!("entry ({}, {c}) is below the diagonal", rowval[p]));
                }
            }
        }
        let (perm, pinv) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let (p, pinv, _) = amd::order::<usize>(n, colptr, rowval, &amd::Control::default())
                .map_err(|s| format!("AMD ordering failed: {s:?}"))?;
            (p, pinv)
        };

        // permuted upper triangle with a map from original entries
        let mut counts = vec![0usize; n + 1];
        let mut tagged = Vec::with_capacity(nnz);
        for c in 0..n {
            for p in colptr[c]..colptr[c + 1] {
                let (a, b) = (pinv[rowval[p]], pinv[c]);
                let (r, cc) = if a <= b { (a, b) } else { (b, a) };
                counts[cc + 1] += 1;
                tagged.push((cc, r, p));
            }
        }
        tagged.sort_unstable();
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let mut map = vec![0usize; nnz];
        let mut ai = Vec::with_capacity(nnz);
        for (k, &(_, r, p)) in tagged.iter().enumerate() {
            map[p] = k;
            ai.push(r);
        }
        let ap = counts;

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in ap[j]..ap[j + 1] {
                let mut i = ai[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut psigns = vec![1.0; n];
        for i in 0..n {
            psigns[pinv[i]] = signs[i];
        }

        Ok(Self {
            n,
            perm,
            map,
            ap,
            ai,
            ax: vec![0.0; nnz],
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            signs: psigns,
            reg_eps: 1e-13,
            reg_delta: 2e-7,
            bumped: 0,
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. `values` are the upper-triangle entries in the
    /// original CSC order passed to [`LdlFactor::new`].
    pub fn factor(&mut self, values: &[f64]) -> Result<(), String> {
        let n = self.n;
        for (p, &v) in values.iter().enumerate() {
            self.ax[self.map[p]] = v;
        }
        let mut y = vec![0.0; n];
        let mut used = vec![false; n];
        let mut yidx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.bumped = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y[b] = self.ax[p];
                if !used[b] {
                    used[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if used[nx] {
                            break;
                        }
                        used[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        yidx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = yidx[i];
                let slot = next_space[c];
                let yc = y[c];
                for j in self.lp[c]..slot {
                    y[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                self.lx[slot] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[slot];
                next_space[c] += 1;
                y[c] = 0.0;
                used[c] = false;
            }
            if self.signs[k] * self.d[k] <= self.reg_eps {
                self.d[k] = self.signs[k] * self.reg_delta;
                self.bumped += 1;
            }
            if !self.d[k].is_finite() {
                return Err(format!("non-finite pivot at {k}"));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `L D Lᵀ x = b` in place (original ordering).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }
}
