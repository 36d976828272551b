//! Affine expressions over the scalar decision variables of a [`Program`](crate::Program).
//!
//! [`LinExpr`] is a real scalar, [`CExpr`] a complex scalar and [`MatExpr`] a
//! complex matrix whose entries are [`CExpr`]s. Complex arithmetic stays on
//! this side of the solver boundary; realification happens at compile time.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::tensor::{partial_transpose_source, permutation_source, Split};

fn merge<T: Copy + AddAssign + PartialEq + Default>(terms: &mut Vec<(usize, T)>) {
    if terms.len() < 2 {
        terms.retain(|t| t.1 != T::default());
        return;
    }
    terms.sort_unstable_by_key(|t| t.0);
    let mut out: Vec<(usize, T)> = Vec::with_capacity(terms.len());
    for &(i, v) in terms.iter() {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out.retain(|t| t.1 != T::default());
    *terms = out;
}

/// Real affine expression `constant + Σ coef·x[var]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { constant: c, terms: Vec::new() }
    }

    pub fn var(i: usize) -> Self {
        LinExpr { constant: 0.0, terms: vec![(i, 1.0)] }
    }

    pub fn term(i: usize, c: f64) -> Self {
        LinExpr { constant: 0.0, terms: vec![(i, c)] }
    }

    pub fn compress(mut self) -> Self {
        merge(&mut self.terms);
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    pub fn add_scaled(&mut self, other: &LinExpr, a: f64) {
        self.constant += a * other.constant;
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, a * c)));
    }

    pub fn scaled(&self, a: f64) -> LinExpr {
        LinExpr { constant: a * self.constant, terms: self.terms.iter().map(|&(i, c)| (i, a * c)).collect() }
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a LinExpr>>(items: I) -> LinExpr {
        let mut out = LinExpr::zero();
        for e in items {
            out.add_scaled(e, 1.0);
        }
        out.compress()
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

macro_rules! lin_binop {
    ($tr:ident, $f:ident, $sign:expr) => {
        impl $tr<LinExpr> for LinExpr {
            type Output = LinExpr;
            fn $f(mut self, rhs: LinExpr) -> LinExpr {
                self.add_scaled(&rhs, $sign);
                self.compress()
            }
        }
        impl $tr<&LinExpr> for LinExpr {
            type Output = LinExpr;
            fn $f(mut self, rhs: &LinExpr) -> LinExpr {
                self.add_scaled(rhs, $sign);
                self.compress()
            }
        }
        impl $tr<&LinExpr> for &LinExpr {
            type Output = LinExpr;
            fn $f(self, rhs: &LinExpr) -> LinExpr {
                let mut out = self.clone();
                out.add_scaled(rhs, $sign);
                out.compress()
            }
        }
        impl $tr<f64> for LinExpr {
            type Output = LinExpr;
            fn $f(mut self, rhs: f64) -> LinExpr {
                self.constant += $sign * rhs;
                self
            }
        }
        impl $tr<f64> for &LinExpr {
            type Output = LinExpr;
            fn $f(self, rhs: f64) -> LinExpr {
                let mut out = self.clone();
                out.constant += $sign * rhs;
                out
            }
        }
    };
}
lin_binop!(Add, add, 1.0);
lin_binop!(Sub, sub, -1.0);

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, a: f64) -> LinExpr {
        self.scaled(a)
    }
}

impl Mul<f64> for &LinExpr {
    type Output = LinExpr;
    fn mul(self, a: f64) -> LinExpr {
        self.scaled(a)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Neg for &LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

/// Complex affine expression.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CExpr {
    pub constant: C64,
    pub terms: Vec<(usize, C64)>,
}

impl CExpr {
    pub fn constant(c: C64) -> Self {
        CExpr { constant: c, terms: Vec::new() }
    }

    pub fn real(e: &LinExpr) -> Self {
        CExpr {
            constant: C64::new(e.constant, 0.0),
            terms: e.terms.iter().map(|&(i, c)| (i, C64::new(c, 0.0))).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == C64::default() && self.terms.is_empty()
    }

    pub fn compress(mut self) -> Self {
        merge(&mut self.terms);
        self
    }

    pub fn add_scaled(&mut self, other: &CExpr, a: C64) {
        if a == C64::default() {
            return;
        }
        self.constant += a * other.constant;
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, a * c)));
    }

    pub fn scaled(&self, a: C64) -> CExpr {
        let mut out = CExpr::default();
        out.add_scaled(self, a);
        out
    }

    pub fn conj(&self) -> CExpr {
        CExpr { constant: self.constant.conj(), terms: self.terms.iter().map(|&(i, c)| (i, c.conj())).collect() }
    }

    pub fn re(&self) -> LinExpr {
        LinExpr {
            constant: self.constant.re,
            terms: self.terms.iter().filter(|t| t.1.re != 0.0).map(|&(i, c)| (i, c.re)).collect(),
        }
    }

    pub fn im(&self) -> LinExpr {
        LinExpr {
            constant: self.constant.im,
            terms: self.terms.iter().filter(|t| t.1.im != 0.0).map(|&(i, c)| (i, c.im)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<C64>()
    }
}

/// Complex matrix of affine expressions, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    data: Vec<CExpr>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatExpr { rows, cols, data: vec![CExpr::default(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> CExpr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        MatExpr { rows, cols, data }
    }

    pub fn constant(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| CExpr::constant(m[(i, j)]))
    }

    /// `s · M` for a scalar expression `s` and a constant matrix `M`.
    pub fn scalar_times(s: &LinExpr, m: &DMatrix<C64>) -> Self {
        let cs = CExpr::real(s);
        Self::from_fn(m.nrows(), m.ncols(), |i, j| cs.scaled(m[(i, j)]))
    }

    /// `Σ_k x[vars[k]] · basis[k]` with real variables.
    pub fn linear_combination(vars: &[usize], basis: &[DMatrix<C64>]) -> Self {
        let (r, c) = basis[0].shape();
        let mut out = Self::zeros(r, c);
        for (&v, b) in vars.iter().zip(basis) {
            for i in 0..r {
                for j in 0..c {
                    let z = b[(i, j)];
                    if z != C64::default() {
                        out.data[i * c + j].terms.push((v, z));
                    }
                }
            }
        }
        out.compressed()
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &CExpr {
        &self.data[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut CExpr {
        &mut self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: CExpr) {
        self.data[i * self.cols + j] = e;
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &CExpr)> {
        let c = self.cols;
        self.data.iter().enumerate().map(move |(k, e)| (k / c, k % c, e))
    }

    fn compressed(mut self) -> Self {
        for e in &mut self.data {
            let t = std::mem::take(e);
            *e = t.compress();
        }
        self
    }

    fn zip_with(&self, other: &MatExpr, a: C64) -> MatExpr {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in matrix expression");
        let mut out = self.clone();
        for (o, e) in out.data.iter_mut().zip(&other.data) {
            o.add_scaled(e, a);
        }
        out.compressed()
    }

    pub fn add(&self, other: &MatExpr) -> MatExpr {
        self.zip_with(other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &MatExpr) -> MatExpr {
        self.zip_with(other, C64::new(-1.0, 0.0))
    }

    pub fn add_const(&self, m: &DMatrix<C64>) -> MatExpr {
        assert_eq!(self.shape(), m.shape());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j].constant += m[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, a: f64) -> MatExpr {
        self.scale_c(C64::new(a, 0.0))
    }

    pub fn scale_c(&self, a: C64) -> MatExpr {
        MatExpr { rows: self.rows, cols: self.cols, data: self.data.iter().map(|e| e.scaled(a)).collect() }
    }

    /// Adds `s · M` in place.
    pub fn add_scalar_times(&mut self, s: &LinExpr, m: &DMatrix<C64>) {
        let cs = CExpr::real(s);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let z = m[(i, j)];
                if z != C64::default() {
                    self.data[i * self.cols + j].add_scaled(&cs, z);
                }
            }
        }
        let t = std::mem::replace(self, MatExpr::zeros(0, 0));
        *self = t.compressed();
    }

    /// `C · self`.
    pub fn lmul(&self, c: &DMatrix<C64>) -> MatExpr {
        assert_eq!(c.ncols(), self.rows);
        let mut out = MatExpr::zeros(c.nrows(), self.cols);
        for i in 0..c.nrows() {
            for k in 0..self.rows {
                let a = c[(i, k)];
                if a == C64::default() {
                    continue;
                }
                for j in 0..self.cols {
                    out.data[i * self.cols + j].add_scaled(&self.data[k * self.cols + j], a);
                }
            }
        }
        out.compressed()
    }

    /// `self · C`.
    pub fn rmul(&self, c: &DMatrix<C64>) -> MatExpr {
        assert_eq!(c.nrows(), self.cols);
        let mut out = MatExpr::zeros(self.rows, c.ncols());
        for k in 0..self.cols {
            for j in 0..c.ncols() {
                let a = c[(k, j)];
                if a == C64::default() {
                    continue;
                }
                for i in 0..self.rows {
                    out.data[i * c.ncols() + j].add_scaled(&self.data[i * self.cols + k], a);
                }
            }
        }
        out.compressed()
    }

    /// `A · self · B`.
    pub fn sandwich(&self, a: &DMatrix<C64>, b: &DMatrix<C64>) -> MatExpr {
        self.lmul(a).rmul(b)
    }

    /// `C ⊗ self`.
    pub fn kron_left(&self, c: &DMatrix<C64>) -> MatExpr {
        let (r, s) = (self.rows, self.cols);
        let mut out = MatExpr::zeros(c.nrows() * r, c.ncols() * s);
        let oc = out.cols;
        for a in 0..c.nrows() {
            for b in 0..c.ncols() {
                let z = c[(a, b)];
                if z == C64::default() {
                    continue;
                }
                for i in 0..r {
                    for j in 0..s {
                        out.data[(a * r + i) * oc + b * s + j] = self.data[i * s + j].scaled(z);
                    }
                }
            }
        }
        out
    }

    /// `self ⊗ C`.
    pub fn kron_right(&self, c: &DMatrix<C64>) -> MatExpr {
        let (r, s) = (c.nrows(), c.ncols());
        let mut out = MatExpr::zeros(self.rows * r, self.cols * s);
        let oc = out.cols;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let e = &self.data[i * self.cols + j];
                if e.is_zero() {
                    continue;
                }
                for a in 0..r {
                    for b in 0..s {
                        let z = c[(a, b)];
                        if z != C64::default() {
                            out.data[(i * r + a) * oc + j * s + b] = e.scaled(z);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> MatExpr {
        MatExpr::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> MatExpr {
        MatExpr::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// `(X + X†)/2`.
    pub fn hermitian_part(&self) -> MatExpr {
        assert_eq!(self.rows, self.cols);
        let half = C64::new(0.5, 0.0);
        MatExpr::from_fn(self.rows, self.cols, |i, j| {
            let mut e = self.get(i, j).scaled(half);
            e.add_scaled(&self.get(j, i).conj(), half);
            e.compress()
        })
    }

    pub fn trace(&self) -> CExpr {
        let mut out = CExpr::default();
        for i in 0..self.rows.min(self.cols) {
            out.add_scaled(self.get(i, i), C64::new(1.0, 0.0));
        }
        out.compress()
    }

    /// `Re Tr(C† X)`.
    pub fn inner(&self, c: &DMatrix<C64>) -> LinExpr {
        assert_eq!(self.shape(), c.shape());
        let mut out = CExpr::default();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let z = c[(i, j)];
                if z != C64::default() {
                    out.add_scaled(&self.data[i * self.cols + j], z.conj());
                }
            }
        }
        out.compress().re()
    }

    /// Partial trace of a square operator over the flagged subsystems.
    pub fn partial_trace(&self, dims: &[usize], traced: &[bool]) -> MatExpr {
        assert_eq!(self.rows, self.cols);
        let split = Split::new(dims, traced);
        assert_eq!(split.total(), self.rows, "dims do not match operator size");
        let table = split.table();
        let one = C64::new(1.0, 0.0);
        let kept = split.kept();
        let mut out = MatExpr::zeros(kept, kept);
        for i in 0..kept {
            for j in 0..kept {
                let e = &mut out.data[i * kept + j];
                for t in 0..split.traced() {
                    e.add_scaled(&self.data[table[i][t] * self.cols + table[j][t]], one);
                }
            }
        }
        out.compressed()
    }

    pub fn partial_transpose(&self, dims: &[usize], mask: &[bool]) -> MatExpr {
        assert_eq!(self.rows, self.cols);
        MatExpr::from_fn(self.rows, self.cols, |i, j| {
            let (a, b) = partial_transpose_source(i, j, dims, mask);
            self.get(a, b).clone()
        })
    }

    /// Reorders tensor factors: output factor `k` is input factor `perm[k]`.
    pub fn permute(&self, dims: &[usize], perm: &[usize]) -> MatExpr {
        let src = permutation_source(dims, perm);
        MatExpr::from_fn(self.rows, self.cols, |i, j| self.get(src[i], src[j]).clone())
    }

    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatExpr {
        MatExpr::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j).clone())
    }

    /// Assembles a block matrix; `None` blocks are zero. Every block row must
    /// contain at least one block fixing its height, likewise for columns.
    pub fn block(blocks: &[Vec<Option<&MatExpr>>]) -> MatExpr {
        let nbr = blocks.len();
        let nbc = blocks[0].len();
        let mut heights = vec![0; nbr];
        let mut widths = vec![0; nbc];
        for (bi, row) in blocks.iter().enumerate() {
            assert_eq!(row.len(), nbc);
            for (bj, b) in row.iter().enumerate() {
                if let Some(m) = b {
                    heights[bi] = m.rows;
                    widths[bj] = m.cols;
                }
            }
        }
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = MatExpr::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                if let Some(m) = b {
                    assert_eq!(m.shape(), (heights[bi], widths[bj]), "inconsistent block sizes");
                    for i in 0..m.rows {
                        for j in 0..m.cols {
                            out.data[(r0 + i) * cols + c0 + j] = m.data[i * m.cols + j].clone();
                        }
                    }
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }

    /// Coefficient matrix of variable `v` (linear part only).
    pub fn coefficient(&self, v: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).terms.iter().filter(|t| t.0 == v).map(|t| t.1).sum()
        })
    }

    pub fn constant_part(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).constant)
    }

    /// Sorted list of variables that appear.
    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.data.iter().flat_map(|e| e.terms.iter().map(|t| t.0)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn linexpr_merges_terms() {
        let e = LinExpr::var(3) + LinExpr::term(1, 2.0) - LinExpr::var(3) + 4.0;
        assert_eq!(e.terms, vec![(1, 2.0)]);
        assert_eq!(e.constant, 4.0);
    }

    #[test]
    fn inner_product_matches_trace() {
        let x = [0.3, -1.2];
        let b0 = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let b1 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
        let m = MatExpr::linear_combination(&[0, 1], &[b0, b1]);
        let q = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(-0.7, 0.0)]);
        let val = m.inner(&q).eval(&x);
        let direct = (q.adjoint() * m.eval(&x)).trace().re;
        assert!((val - direct).abs() < 1e-12);
    }

    #[test]
    fn kron_and_partial_trace_agree_with_dense() {
        let x = [0.4, 0.9, -0.3];
        let basis: Vec<DMatrix<C64>> = (0..3)
            .map(|k| DMatrix::from_fn(2, 2, |i, j| c((i + 2 * j + k) as f64, (i as f64 - j as f64) * k as f64)))
            .collect();
        let m = MatExpr::linear_combination(&[0, 1, 2], &basis);
        let a = DMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64 * 0.1, 0.05 * i as f64));
        let left = m.kron_left(&a).eval(&x);
        let dense = a.kronecker(&m.eval(&x));
        assert!((left - &dense).norm() < 1e-12);
        let pt = m.kron_left(&a).partial_trace(&[3, 2], &[true, false]).eval(&x);
        let expect = m.eval(&x) * a.trace();
        assert!((pt - expect).norm() < 1e-12);
    }
}
