use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::expr::{CExpr, LinExpr, MatExpr};
use crate::ipm::{self, ConeKind, IpmSettings, Outcome, StdProblem};
use crate::SolveError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Cone tag of a variable block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Free,
    NonNeg,
    /// Hermitian `d×d` positive semidefinite block (`d²` real parameters).
    HermPsd(usize),
}

#[derive(Clone, Debug)]
pub struct Block {
    pub name: String,
    pub cone: Cone,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConstraintId(pub usize);

#[derive(Clone, Debug)]
enum Con {
    /// `e = 0`.
    Eq(LinExpr),
    /// `e ≥ 0`.
    Ge(LinExpr),
    /// Hermitian part `⪰ 0`.
    Psd(MatExpr),
    /// Hermitian matrix `= 0`.
    HermEq(MatExpr),
    /// General complex matrix `= 0`.
    MatEq(MatExpr),
}

/// Parameter layout of a Hermitian block: diagonal entries, then `(re, im)`
/// pairs for `i < j`.
pub fn hermitian_from_vars(d: usize, offset: usize) -> MatExpr {
    let mut m = MatExpr::zeros(d, d);
    for i in 0..d {
        m.set(i, i, CExpr { constant: C64::default(), terms: vec![(offset + i, C64::new(1.0, 0.0))] });
    }
    let mut k = offset + d;
    for i in 0..d {
        for j in i + 1..d {
            m.set(i, j, CExpr { constant: C64::default(), terms: vec![(k, C64::new(1.0, 0.0)), (k + 1, C64::new(0.0, 1.0))] });
            m.set(j, i, CExpr { constant: C64::default(), terms: vec![(k, C64::new(1.0, 0.0)), (k + 1, C64::new(0.0, -1.0))] });
            k += 2;
        }
    }
    m
}

/// Dual-basis matrix for the Hermitian parametrization: given per-parameter
/// values `g_k`, returns `Y` with `⟨Y, H(u)⟩ = Σ g_k u_k`.
pub fn hermitian_dual_basis(d: usize, g: &[LinExpr]) -> MatExpr {
    assert_eq!(g.len(), d * d);
    let mut m = MatExpr::zeros(d, d);
    for i in 0..d {
        m.set(i, i, CExpr::real(&g[i]));
    }
    let mut k = d;
    let half = C64::new(0.5, 0.0);
    let ihalf = C64::new(0.0, 0.5);
    for i in 0..d {
        for j in i + 1..d {
            let mut e = CExpr::real(&g[k]).scaled(half);
            e.add_scaled(&CExpr::real(&g[k + 1]), ihalf);
            let e = e.compress();
            m.set(j, i, e.conj());
            m.set(i, j, e);
            k += 2;
        }
    }
    m
}

/// Real-symmetric embedding `H = A + iB ↦ [[A, -B], [B, A]]` of the Hermitian
/// part of a square complex expression.
pub(crate) fn realify_entry(m: &MatExpr, a: usize, b: usize) -> LinExpr {
    let d = m.nrows();
    let (bi, i) = (a / d, a % d);
    let (bj, j) = (b / d, b % d);
    // Hermitian part entry
    let mut h = m.get(i, j).scaled(C64::new(0.5, 0.0));
    h.add_scaled(&m.get(j, i).conj(), C64::new(0.5, 0.0));
    let h = h.compress();
    match (bi, bj) {
        (0, 0) | (1, 1) => h.re(),
        (0, 1) => -h.im(),
        _ => h.im(),
    }
}

/// Inverse of the dual realification: `Z_r = [[P, Q], [Qᵀ, S]] ↦ (P+S) + i(Qᵀ−Q)`,
/// so that `⟨Y, H⟩ = ⟨Z_r, R(H)⟩`.
pub(crate) fn derealify_dual(zr: &DMatrix<f64>) -> DMatrix<C64> {
    let d = zr.nrows() / 2;
    DMatrix::from_fn(d, d, |i, j| {
        let p = zr[(i, j)];
        let s = zr[(d + i, d + j)];
        let q = zr[(i, d + j)];
        let qt = zr[(d + i, j)];
        C64::new(p + s, qt - q)
    })
}

/// Solver accuracy controls.
#[derive(Clone, Copy, Debug)]
pub struct Settings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { tol: 1e-8, max_iter: 120 }
    }
}

impl Settings {
    /// Defaults, with `DYNRES_SOLVER_TOL` overriding the tolerance when set.
    pub fn from_env() -> Self {
        let mut s = Settings::default();
        if let Some(t) = std::env::var("DYNRES_SOLVER_TOL").ok().and_then(|v| v.parse::<f64>().ok()) {
            if t > 0.0 && t < 1e-2 {
                s.tol = t;
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
}

/// Multiplier attached to one constraint.
///
/// Convention: with `φ` the objective in minimization form (negated for
/// `Maximize`), `∇φ = Σ μ ∇g` where `μ ≥ 0` for `≥`-constraints and
/// `μ ⪰ 0` (Hermitian) for PSD constraints.
#[derive(Clone, Debug, PartialEq)]
pub enum Dual {
    Scalar(f64),
    Matrix(DMatrix<C64>),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    pub duals: Vec<Dual>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl Solution {
    pub fn value(&self, e: &LinExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn matrix(&self, m: &MatExpr) -> DMatrix<C64> {
        m.eval(&self.x)
    }

    pub fn dual(&self, id: ConstraintId) -> &Dual {
        &self.duals[id.0]
    }

    pub fn dual_scalar(&self, id: ConstraintId) -> f64 {
        match &self.duals[id.0] {
            Dual::Scalar(v) => *v,
            other => panic!("constraint {} has a non-scalar dual {other:?}", id.0),
        }
    }

    pub fn dual_matrix(&self, id: ConstraintId) -> DMatrix<C64> {
        match &self.duals[id.0] {
            Dual::Matrix(m) => m.clone(),
            other => panic!("constraint {} has a non-matrix dual {other:?}", id.0),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Optimal, or inaccurate but with residuals and gap small enough to be
    /// trusted at user-facing tolerance.
    pub fn is_usable(&self) -> bool {
        match self.status {
            Status::Optimal => true,
            Status::Inaccurate => {
                self.primal_residual < 1e-6
                    && self.dual_residual < 1e-6
                    && self.gap.abs() < 1e-6 * (1.0 + self.objective.abs())
            }
            _ => false,
        }
    }
}

/// A conic program over real scalar variables organised in named blocks.
#[derive(Clone, Debug)]
pub struct Program {
    sense: Sense,
    nvars: usize,
    blocks: Vec<Block>,
    objective: LinExpr,
    cons: Vec<Con>,
    block_cons: Vec<MatExpr>,
    nonneg_vars: Vec<usize>,
}

struct RowMap {
    kind: RowKind,
}

enum RowKind {
    Eq(Vec<usize>),
    NonNeg(usize),
    Psd(usize),
}

impl Program {
    pub fn new(sense: Sense) -> Self {
        Program { sense, nvars: 0, blocks: Vec::new(), objective: LinExpr::zero(), cons: Vec::new(), block_cons: Vec::new(), nonneg_vars: Vec::new() }
    }

    pub fn minimize() -> Self {
        Self::new(Sense::Minimize)
    }

    pub fn maximize() -> Self {
        Self::new(Sense::Maximize)
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    fn push_block(&mut self, name: &str, cone: Cone, len: usize) -> usize {
        let offset = self.nvars;
        self.blocks.push(Block { name: name.to_string(), cone, offset, len });
        self.nvars += len;
        offset
    }

    pub fn free(&mut self, name: &str, n: usize) -> Vec<LinExpr> {
        let o = self.push_block(name, Cone::Free, n);
        (o..o + n).map(LinExpr::var).collect()
    }

    pub fn scalar(&mut self, name: &str) -> LinExpr {
        self.free(name, 1).pop().unwrap()
    }

    pub fn nonneg(&mut self, name: &str, n: usize) -> Vec<LinExpr> {
        let o = self.push_block(name, Cone::NonNeg, n);
        self.nonneg_vars.extend(o..o + n);
        (o..o + n).map(LinExpr::var).collect()
    }

    /// Free Hermitian matrix variable.
    pub fn hermitian(&mut self, name: &str, d: usize) -> MatExpr {
        let o = self.push_block(name, Cone::Free, d * d);
        hermitian_from_vars(d, o)
    }

    /// Hermitian PSD matrix variable.
    pub fn psd(&mut self, name: &str, d: usize) -> MatExpr {
        let o = self.push_block(name, Cone::HermPsd(d), d * d);
        let m = hermitian_from_vars(d, o);
        self.block_cons.push(m.clone());
        m
    }

    /// General complex matrix variable (real and imaginary part per entry).
    pub fn complex_matrix(&mut self, name: &str, rows: usize, cols: usize) -> MatExpr {
        let o = self.push_block(name, Cone::Free, 2 * rows * cols);
        MatExpr::from_fn(rows, cols, |i, j| {
            let k = o + 2 * (i * cols + j);
            CExpr { constant: C64::default(), terms: vec![(k, C64::new(1.0, 0.0)), (k + 1, C64::new(0.0, 1.0))] }
        })
    }

    fn check(&self, vars: impl IntoIterator<Item = usize>) {
        for v in vars {
            assert!(v < self.nvars, "expression references undeclared variable {v}");
        }
    }

    fn push(&mut self, c: Con) -> ConstraintId {
        match &c {
            Con::Eq(e) | Con::Ge(e) => self.check(e.terms.iter().map(|t| t.0)),
            Con::Psd(m) | Con::HermEq(m) | Con::MatEq(m) => self.check(m.variables()),
        }
        self.cons.push(c);
        ConstraintId(self.cons.len() - 1)
    }

    /// `e = 0`.
    pub fn add_eq(&mut self, e: LinExpr) -> ConstraintId {
        self.push(Con::Eq(e.compress()))
    }

    /// `e ≥ 0`.
    pub fn add_ge(&mut self, e: LinExpr) -> ConstraintId {
        self.push(Con::Ge(e.compress()))
    }

    /// `lhs ≤ rhs`.
    pub fn add_le(&mut self, lhs: LinExpr, rhs: LinExpr) -> ConstraintId {
        self.add_ge(rhs - lhs)
    }

    /// Hermitian part of `m` is PSD.
    pub fn add_psd(&mut self, m: MatExpr) -> ConstraintId {
        assert_eq!(m.nrows(), m.ncols(), "PSD constraint on non-square expression");
        self.push(Con::Psd(m))
    }

    /// `m = 0` for a Hermitian expression (`d²` real equations).
    pub fn add_herm_eq(&mut self, m: MatExpr) -> ConstraintId {
        assert_eq!(m.nrows(), m.ncols());
        self.push(Con::HermEq(m))
    }

    /// `m = 0` entrywise for a general complex expression.
    pub fn add_mat_eq(&mut self, m: MatExpr) -> ConstraintId {
        self.push(Con::MatEq(m))
    }

    pub fn set_objective(&mut self, e: LinExpr) {
        self.check(e.terms.iter().map(|t| t.0));
        self.objective = e.compress();
    }

    pub fn solve(&self) -> Result<Solution, SolveError> {
        self.solve_with(&Settings::from_env())
    }

    pub fn solve_with(&self, settings: &Settings) -> Result<Solution, SolveError> {
        let n = self.nvars;
        let sign = if self.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut c = DVector::zeros(n);
        for &(i, v) in &self.objective.terms {
            c[i] += sign * v;
        }

        let mut eq_rows: Vec<LinExpr> = Vec::new();
        let mut nn_rows: Vec<LinExpr> = Vec::new();
        let mut psd_rows: Vec<(usize, Vec<LinExpr>)> = Vec::new();
        let mut maps: Vec<RowMap> = Vec::new();

        let herm_eq_rows = |m: &MatExpr| -> Vec<LinExpr> {
            let d = m.nrows();
            let mut rows = Vec::with_capacity(d * d);
            let half = C64::new(0.5, 0.0);
            let entry = |i: usize, j: usize| {
                let mut h = m.get(i, j).scaled(half);
                h.add_scaled(&m.get(j, i).conj(), half);
                h.compress()
            };
            for i in 0..d {
                rows.push(entry(i, i).re());
            }
            for i in 0..d {
                for j in i + 1..d {
                    let e = entry(i, j);
                    rows.push(e.re());
                    rows.push(e.im());
                }
            }
            rows
        };

        let psd_of = |m: &MatExpr| -> (usize, Vec<LinExpr>) {
            let d = m.nrows();
            let two = 2 * d;
            let mut rows = Vec::with_capacity(two * (two + 1) / 2);
            for b in 0..two {
                for a in b..two {
                    let mut e = realify_entry(m, a, b);
                    if a != b {
                        e = e.scaled(std::f64::consts::SQRT_2);
                    }
                    rows.push(e);
                }
            }
            (two, rows)
        };

        for con in &self.cons {
            let kind = match con {
                Con::Eq(e) => {
                    eq_rows.push(e.clone());
                    RowKind::Eq(vec![eq_rows.len() - 1])
                }
                Con::Ge(e) => {
                    nn_rows.push(e.clone());
                    RowKind::NonNeg(nn_rows.len() - 1)
                }
                Con::HermEq(m) => {
                    let start = eq_rows.len();
                    eq_rows.extend(herm_eq_rows(m));
                    RowKind::Eq((start..eq_rows.len()).collect())
                }
                Con::MatEq(m) => {
                    let start = eq_rows.len();
                    for (_, _, e) in m.entries() {
                        eq_rows.push(e.clone().compress().re());
                        eq_rows.push(e.clone().compress().im());
                    }
                    RowKind::Eq((start..eq_rows.len()).collect())
                }
                Con::Psd(m) => {
                    psd_rows.push(psd_of(m));
                    RowKind::Psd(psd_rows.len() - 1)
                }
            };
            maps.push(RowMap { kind });
        }
        for m in &self.block_cons {
            psd_rows.push(psd_of(m));
        }
        for &v in &self.nonneg_vars {
            nn_rows.push(LinExpr::var(v));
        }

        // Constant nonnegativity rows are checked and dropped.
        let mut nn_keep = Vec::new();
        for (k, e) in nn_rows.iter().enumerate() {
            if e.is_constant() {
                if e.constant < -1e-9 {
                    return Ok(self.trivial(Status::Infeasible, maps.len()));
                }
            } else {
                nn_keep.push(k);
            }
        }

        // Equality presolve: drop dependent rows, detect inconsistent ones.
        let (eq_keep, inconsistent) = independent_rows(&eq_rows, n);
        if inconsistent {
            return Ok(self.trivial(Status::Infeasible, maps.len()));
        }

        let p = eq_keep.len();
        let mut a = DMatrix::zeros(p, n);
        let mut b = DVector::zeros(p);
        for (r, &k) in eq_keep.iter().enumerate() {
            for &(j, v) in &eq_rows[k].terms {
                a[(r, j)] += v;
            }
            b[r] = -eq_rows[k].constant;
        }

        let mut g: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut h: Vec<f64> = Vec::new();
        let mut cones = Vec::new();
        let push_row = |e: &LinExpr, g: &mut Vec<Vec<(usize, f64)>>, h: &mut Vec<f64>| {
            // s = e(x) = const + coef·x  ⇒  h = const, G = -coef
            g.push(e.terms.iter().filter(|t| t.1 != 0.0).map(|&(j, v)| (j, -v)).collect());
            h.push(e.constant);
        };
        if !nn_keep.is_empty() {
            for &k in &nn_keep {
                push_row(&nn_rows[k], &mut g, &mut h);
            }
            cones.push(ConeKind::NonNeg(nn_keep.len()));
        }
        let mut psd_offsets = Vec::new();
        for (m, rows) in &psd_rows {
            psd_offsets.push(g.len());
            for e in rows {
                push_row(e, &mut g, &mut h);
            }
            cones.push(ConeKind::Psd(*m));
        }

        let std = StdProblem { n, c, a, b, g, h: DVector::from_vec(h), cones };
        let ipm_set = IpmSettings {
            feastol: settings.tol,
            abstol: settings.tol,
            reltol: settings.tol,
            max_iter: settings.max_iter,
        };
        let res = ipm::solve(&std, &ipm_set);
        let status = match res.outcome {
            Outcome::Optimal => Status::Optimal,
            Outcome::PrimalInfeasible => Status::Infeasible,
            Outcome::DualInfeasible => Status::Unbounded,
            Outcome::Inaccurate => Status::Inaccurate,
        };

        // Map multipliers back; kept equality rows carry -y.
        let mut yfull = vec![0.0; eq_rows.len()];
        for (r, &k) in eq_keep.iter().enumerate() {
            yfull[k] = -res.y[r];
        }
        let nn_off_of = |k: usize| nn_keep.iter().position(|&q| q == k);
        let nn_base = 0usize;
        let duals = maps
            .iter()
            .map(|m| match &m.kind {
                RowKind::Eq(rows) if rows.len() == 1 => Dual::Scalar(yfull[rows[0]]),
                RowKind::Eq(rows) => Dual::Vector(rows.iter().map(|&r| yfull[r]).collect()),
                RowKind::NonNeg(k) => Dual::Scalar(nn_off_of(*k).map_or(0.0, |pos| res.z[nn_base + pos])),
                RowKind::Psd(idx) => {
                    let (two, _) = &psd_rows[*idx];
                    let off = psd_offsets[*idx];
                    let len = two * (two + 1) / 2;
                    let zr = ipm::smat(&res.z.as_slice()[off..off + len], *two);
                    Dual::Matrix(derealify_dual(&zr))
                }
            })
            .collect();

        let x: Vec<f64> = res.x.iter().copied().collect();
        let objective = match status {
            Status::Infeasible => {
                if self.sense == Sense::Minimize {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Status::Unbounded => {
                if self.sense == Sense::Minimize {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            _ => self.objective.eval(&x),
        };
        if status == Status::Inaccurate {
            log::debug!(
                "solver inaccurate after {} iterations: pres {:.1e} dres {:.1e} gap {:.1e}",
                res.iterations,
                res.pres,
                res.dres,
                res.gap
            );
        }
        Ok(Solution {
            status,
            objective,
            x,
            duals,
            iterations: res.iterations,
            primal_residual: res.pres,
            dual_residual: res.dres,
            gap: res.gap,
        })
    }

    fn trivial(&self, status: Status, ncons: usize) -> Solution {
        Solution {
            status,
            objective: if self.sense == Sense::Minimize { f64::INFINITY } else { f64::NEG_INFINITY },
            x: vec![0.0; self.nvars],
            duals: vec![Dual::Scalar(0.0); ncons],
            iterations: 0,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            gap: f64::NAN,
        }
    }
}

/// Selects a maximal linearly independent subset of equality rows
/// (`terms·x + constant = 0`) by modified Gram–Schmidt. Returns the kept
/// indices and whether a dependent row contradicts the others.
/// Greedy selection of linearly independent equality rows (`expr = 0`) by
/// sparse Gaussian elimination with in-row partial pivoting. Returns the
/// kept indices and whether the system is inconsistent.
pub(crate) fn independent_rows(rows: &[LinExpr], n: usize) -> (Vec<usize>, bool) {
    use std::cmp::Reverse;
    use std::collections::{BinaryHeap, HashMap};

    // basis[k] = (sparse row, rhs, pivot variable)
    let mut basis: Vec<(Vec<(usize, f64)>, f64, usize)> = Vec::new();
    let mut pivot_of: Vec<Option<usize>> = vec![None; n];
    let mut keep = Vec::new();
    for (k, e) in rows.iter().enumerate() {
        let mut v: HashMap<usize, f64> = HashMap::with_capacity(e.terms.len());
        for &(j, c) in &e.terms {
            *v.entry(j).or_insert(0.0) += c;
        }
        let mut rhs = -e.constant;
        let norm0 = v.values().map(|x| x * x).sum::<f64>().sqrt();
        let scale = norm0.max(rhs.abs()).max(1e-300);
        if norm0 <= 1e-12 * scale.max(1.0) {
            if rhs.abs() > 1e-9 * (1.0f64).max(scale) {
                return (keep, true);
            }
            continue;
        }
        // Eliminate earlier pivots in insertion order; a basis row contains no
        // pivot older than its own, so each pivot is visited at most once.
        let mut heap: BinaryHeap<Reverse<usize>> = v.keys().filter_map(|&j| pivot_of[j]).map(Reverse).collect();
        let mut last = None;
        while let Some(Reverse(b)) = heap.pop() {
            if last == Some(b) {
                continue;
            }
            last = Some(b);
            let (row, beta, p) = &basis[b];
            let Some(&vp) = v.get(p) else { continue };
            let piv = row.iter().find(|t| t.0 == *p).map(|t| t.1).unwrap_or(1.0);
            let f = vp / piv;
            for &(j, c) in row {
                if j == *p {
                    v.remove(&j);
                    continue;
                }
                let slot = v.entry(j).or_insert(0.0);
                let fresh = *slot == 0.0;
                *slot -= f * c;
                if fresh {
                    if let Some(m) = pivot_of[j] {
                        if m > b {
                            heap.push(Reverse(m));
                        }
                    }
                }
            }
            rhs -= f * beta;
        }
        v.retain(|_, x| x.abs() > 1e-14 * norm0);
        let nv = v.values().map(|x| x * x).sum::<f64>().sqrt();
        if nv <= 1e-10 * norm0 {
            if rhs.abs() > 1e-7 * (1.0 + (-e.constant).abs()) {
                return (keep, true);
            }
            continue;
        }
        let (&p, _) = v.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(a.0))).unwrap();
        let mut row: Vec<(usize, f64)> = v.into_iter().map(|(j, c)| (j, c / nv)).collect();
        row.sort_unstable_by_key(|t| t.0);
        pivot_of[p] = Some(basis.len());
        basis.push((row, rhs / nv, p));
        keep.push(k);
    }
    (keep, false)
}
