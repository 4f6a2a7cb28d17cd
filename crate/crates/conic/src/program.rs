//! Canonical conic program `min cᵀx  s.t.  A x + s = b,  s ∈ K`, a row builder,
//! structural validation, and the JSON debug container.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cones::Cone;
use crate::sparse::CscMatrix;

/// `min cᵀx  s.t.  A x + s = b,  s ∈ K` with `K` an ordered product of cones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

/// JSON debug container. `A` is stored in triplet form so the file can be
/// loaded by other tools without a CSC reader.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgramDump {
    pub n: usize,
    pub m: usize,
    pub c: Vec<f64>,
    /// `[row, col, value]`
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn is_empty(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        let (n, m) = (self.c.len(), self.b.len());
        if self.a.ncols != n {
            d.errors.push(format!("A has {} columns but c has length {n}", self.a.ncols));
        }
        if self.a.nrows != m {
            d.errors.push(format!("A has {} rows but b has length {m}", self.a.nrows));
        }
        if self.a.colptr.len() != self.a.ncols + 1
            || self.a.rowval.len() != self.a.nzval.len()
            || self.a.colptr.last().copied() != Some(self.a.nzval.len())
        {
            d.errors.push("A has inconsistent CSC storage".into());
            return d;
        }
        if self.a.rowval.iter().any(|&r| r >= self.a.nrows) {
            d.errors.push("A has a row index out of range".into());
            return d;
        }
        let cone_dim: usize = self.cones.iter().map(Cone::dim).sum();
        if cone_dim != m {
            d.errors.push(format!("cone dimensions sum to {cone_dim} but the slack dimension is {m}"));
        }
        for (i, cone) in self.cones.iter().enumerate() {
            if cone.dim() == 0 {
                d.errors.push(format!("cone {i} ({cone:?}) is empty"));
            }
        }
        let nonfinite = |v: &[f64]| v.iter().any(|x| !x.is_finite());
        if nonfinite(&self.c) || nonfinite(&self.b) || nonfinite(&self.a.nzval) {
            d.errors.push("program data contains non-finite values".into());
        }
        if cone_dim != m || self.a.ncols != n || self.a.nrows != m {
            return d;
        }

        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (r, c, v) in self.a.triplets() {
            if v != 0.0 {
                rows[r].push((c, v));
            }
        }
        // Constant entries are meaningful inside a second-order cone, nowhere else.
        let mut offset = 0;
        for cone in &self.cones {
            for r in offset..offset + cone.dim() {
                if rows[r].is_empty() && !matches!(cone, Cone::SecondOrder(_)) {
                    d.errors.push(format!("row {r} of A is all zero"));
                }
            }
            offset += cone.dim();
        }

        // Cheap rank heuristic on the equality block: identical normalized rows.
        let nzero: usize = self
            .cones
            .iter()
            .map(|c| if let Cone::Zero(k) = c { *k } else { 0 })
            .sum();
        let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        let mut offset = 0;
        for cone in &self.cones {
            if let Cone::Zero(k) = cone {
                for r in offset..offset + k {
                    let row = &rows[r];
                    if row.is_empty() {
                        continue;
                    }
                    let pivot = row[0].1;
                    let key: Vec<(usize, u64)> =
                        row.iter().map(|&(c, v)| (c, (v / pivot).to_bits())).collect();
                    if let Some(&prev) = seen.get(&key) {
                        d.warnings.push(format!(
                            "equality rows {prev} and {r} are parallel; the equality block is rank deficient"
                        ));
                    } else {
                        seen.insert(key, r);
                    }
                }
            }
            offset += cone.dim();
        }
        if nzero > n {
            d.warnings.push(format!("{nzero} equality rows exceed {n} variables"));
        }
        d
    }

    pub fn to_dump(&self) -> ProgramDump {
        ProgramDump {
            n: self.c.len(),
            m: self.b.len(),
            c: self.c.clone(),
            a: self.a.triplets().collect(),
            b: self.b.clone(),
            cones: self.cones.clone(),
        }
    }

    pub fn from_dump(d: &ProgramDump) -> Self {
        Self {
            c: d.c.clone(),
            a: CscMatrix::from_triplets(d.m, d.n, &d.a),
            b: d.b.clone(),
            cones: d.cones.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.to_dump())
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        let d: ProgramDump = serde_json::from_str(s)?;
        Ok(Self::from_dump(&d))
    }
}

/// `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(idx: usize) -> Self {
        Self {
            terms: vec![(idx, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, idx: usize, coef: f64) -> Self {
        self.terms.push((idx, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, idx: usize, coef: f64) {
        self.terms.push((idx, coef));
    }

    /// `self += coef · other`
    pub fn add_scaled(&mut self, other: &AffineExpr, coef: f64) {
        if coef == 0.0 {
            return;
        }
        self.terms.extend(other.terms.iter().map(|&(j, v)| (j, v * coef)));
        self.constant += other.constant * coef;
    }

    pub fn scaled(mut self, coef: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= coef;
        }
        self.constant *= coef;
        self
    }

    /// Value at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, v)| v * x[j]).sum::<f64>() + self.constant
    }
}

/// Where a constraint row landed in the assembled program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Eq(usize),
    NonNeg(usize),
    Soc { block: usize, row: usize },
}

/// Accumulates variables, costs, and constraints of the form `expr ∈ cone`
/// and lays them out as zero → nonnegative → second-order blocks.
#[derive(Debug, Clone, Default)]
pub struct ProgramBuilder {
    n: usize,
    c: Vec<f64>,
    eq: Vec<AffineExpr>,
    nonneg: Vec<AffineExpr>,
    soc: Vec<Vec<AffineExpr>>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` variables and returns the index of the first.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let start = self.n;
        self.n += count;
        self.c.resize(self.n, 0.0);
        start
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn add_cost(&mut self, idx: usize, coef: f64) {
        self.c[idx] += coef;
    }

    /// `expr = 0`
    pub fn add_eq(&mut self, e: AffineExpr) -> RowRef {
        self.eq.push(e);
        RowRef::Eq(self.eq.len() - 1)
    }

    /// `expr ≥ 0`
    pub fn add_nonneg(&mut self, e: AffineExpr) -> RowRef {
        self.nonneg.push(e);
        RowRef::NonNeg(self.nonneg.len() - 1)
    }

    /// `‖(e₁, …, e_{n-1})‖₂ ≤ e₀`
    pub fn add_soc(&mut self, es: Vec<AffineExpr>) -> RowRef {
        assert!(!es.is_empty(), "second-order cone needs at least one row");
        self.soc.push(es);
        RowRef::Soc {
            block: self.soc.len() - 1,
            row: 0,
        }
    }

    /// Row index of a constraint in the assembled program.
    pub fn row_index(&self, r: RowRef) -> usize {
        match r {
            RowRef::Eq(i) => i,
            RowRef::NonNeg(i) => self.eq.len() + i,
            RowRef::Soc { block, row } => {
                self.eq.len() + self.nonneg.len() + self.soc[..block].iter().map(Vec::len).sum::<usize>() + row
            }
        }
    }

    pub fn build(&self) -> ConeProgram {
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let push = |e: &AffineExpr, trip: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
            let r = b.len();
            for &(j, v) in &e.terms {
                trip.push((r, j, -v));
            }
            b.push(e.constant);
        };
        for e in &self.eq {
            push(e, &mut trip, &mut b);
        }
        for e in &self.nonneg {
            push(e, &mut trip, &mut b);
        }
        for blk in &self.soc {
            for e in blk {
                push(e, &mut trip, &mut b);
            }
        }
        let mut cones = Vec::new();
        if !self.eq.is_empty() {
            cones.push(Cone::Zero(self.eq.len()));
        }
        if !self.nonneg.is_empty() {
            cones.push(Cone::NonNegative(self.nonneg.len()));
        }
        cones.extend(self.soc.iter().map(|blk| Cone::SecondOrder(blk.len())));
        ConeProgram {
            c: self.c.clone(),
            a: CscMatrix::from_triplets(b.len(), self.n, &trip),
            b,
            cones,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConeProgram {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_vars(2);
        pb.add_cost(x, 1.0);
        pb.add_eq(AffineExpr::var(x).term(x + 1, 1.0).plus(-2.0));
        pb.add_nonneg(AffineExpr::var(x));
        pb.add_soc(vec![AffineExpr::constant(5.0), AffineExpr::var(x), AffineExpr::var(x + 1)]);
        pb.build()
    }

    #[test]
    fn builder_layout_is_zero_nonneg_soc() {
        let p = tiny();
        assert_eq!(p.cones, vec![Cone::Zero(1), Cone::NonNegative(1), Cone::SecondOrder(3)]);
        assert_eq!(p.b, vec![-2.0, 0.0, 5.0, 0.0, 0.0]);
        assert!(p.validate().is_empty());
    }

    #[test]
    fn mismatch_is_reported() {
        let mut p = tiny();
        p.cones.push(Cone::NonNegative(2));
        let d = p.validate();
        assert!(d.errors.iter().any(|e| e.contains("sum to 7")), "{d:?}");
    }

    #[test]
    fn duplicated_equality_row_warns() {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_vars(2);
        pb.add_eq(AffineExpr::var(x).term(x + 1, 2.0).plus(-1.0));
        pb.add_eq(AffineExpr::new().term(x, 3.0).term(x + 1, 6.0).plus(-3.0));
        let d = pb.build().validate();
        assert!(d.errors.is_empty());
        assert_eq!(d.warnings.len(), 1);
        assert!(d.warnings[0].contains("rank deficient"));
    }

    #[test]
    fn zero_row_and_empty_cone_are_errors() {
        let p = ConeProgram {
            c: vec![1.0],
            a: CscMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]),
            b: vec![0.0, 1.0],
            cones: vec![Cone::NonNegative(2), Cone::SecondOrder(0)],
        };
        let d = p.validate();
        assert!(d.errors.iter().any(|e| e.contains("row 1")));
        assert!(d.errors.iter().any(|e| e.contains("empty")));
    }

    #[test]
    fn json_round_trip() {
        let p = tiny();
        let s = p.to_json().unwrap();
        assert_eq!(ConeProgram::from_json(&s).unwrap(), p);
    }
}
