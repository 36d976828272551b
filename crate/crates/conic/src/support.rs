//! Conic membership descriptions of convex channel sets and their support
//! functions.
//!
//! A [`MembershipTemplate`] describes `O = {J(u) : E u = b, u ∈ K}` with `J`
//! linear and `K` a product of free, orthant and Hermitian PSD blocks. It can
//! be instantiated inside a [`Program`] (optionally scaled, giving the cone
//! over `O`), or dualized to emit the robust counterpart of
//! `sup_{J ∈ O} ⟨Q, J⟩ ≤ λ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::expr::{LinExpr, MatExpr};
use crate::model::{hermitian_dual_basis, hermitian_from_vars, independent_rows, Cone, Program};
use crate::SupportError;

#[derive(Clone, Debug)]
struct TBlock {
    cone: Cone,
    offset: usize,
    len: usize,
}

/// Builder for a [`MembershipTemplate`]; variables are local to the template.
#[derive(Clone, Debug, Default)]
pub struct TemplateBuilder {
    nvars: usize,
    blocks: Vec<TBlock>,
    eqs: Vec<LinExpr>,
}

impl TemplateBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn block(&mut self, cone: Cone, len: usize) -> usize {
        let offset = self.nvars;
        self.blocks.push(TBlock { cone, offset, len });
        self.nvars += len;
        offset
    }

    pub fn free(&mut self, n: usize) -> Vec<LinExpr> {
        let o = self.block(Cone::Free, n);
        (o..o + n).map(LinExpr::var).collect()
    }

    pub fn nonneg(&mut self, n: usize) -> Vec<LinExpr> {
        let o = self.block(Cone::NonNeg, n);
        (o..o + n).map(LinExpr::var).collect()
    }

    pub fn psd(&mut self, d: usize) -> MatExpr {
        let o = self.block(Cone::HermPsd(d), d * d);
        hermitian_from_vars(d, o)
    }

    pub fn hermitian(&mut self, d: usize) -> MatExpr {
        let o = self.block(Cone::Free, d * d);
        hermitian_from_vars(d, o)
    }

    /// `e = 0`; constants scale with the cone parameter on instantiation.
    pub fn eq(&mut self, e: LinExpr) {
        self.eqs.push(e.compress());
    }

    /// Hermitian `m = 0`.
    pub fn herm_eq(&mut self, m: &MatExpr) {
        let d = m.nrows();
        let h = m.hermitian_part();
        for i in 0..d {
            self.eq(h.get(i, i).re());
        }
        for i in 0..d {
            for j in i + 1..d {
                self.eq(h.get(i, j).re());
                self.eq(h.get(i, j).im());
            }
        }
    }

    /// Finishes the template. `choi` must be linear (no constant part) in the
    /// template variables. `strong_duality` asserts a strictly feasible point
    /// (or a polyhedral cone), which licenses [`MembershipTemplate::dualize_support`].
    pub fn finish(self, choi: MatExpr, strong_duality: bool) -> MembershipTemplate {
        assert_eq!(choi.nrows(), choi.ncols(), "Choi expression must be square");
        assert!(
            choi.constant_part().iter().all(|z| z.norm() < 1e-14),
            "Choi expression must be linear in template variables"
        );
        let (keep, inconsistent) = independent_rows(&self.eqs, self.nvars);
        assert!(!inconsistent, "template equalities are inconsistent");
        let eqs = keep.into_iter().map(|k| self.eqs[k].clone()).collect();
        let coeffs = (0..self.nvars).map(|v| choi.coefficient(v)).collect();
        MembershipTemplate { nvars: self.nvars, blocks: self.blocks, choi, eqs, coeffs, strong_duality }
    }
}

#[derive(Clone, Debug)]
pub struct MembershipTemplate {
    nvars: usize,
    blocks: Vec<TBlock>,
    choi: MatExpr,
    eqs: Vec<LinExpr>,
    coeffs: Vec<DMatrix<C64>>,
    pub strong_duality: bool,
}

impl MembershipTemplate {
    pub fn dim(&self) -> usize {
        self.choi.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn num_eqs(&self) -> usize {
        self.eqs.len()
    }

    /// Adds the template variables to `prog` and returns the Choi expression
    /// of a member of `scale · O`.
    pub fn instantiate(&self, prog: &mut Program, scale: &LinExpr) -> MatExpr {
        let mut map = vec![0usize; self.nvars];
        for b in &self.blocks {
            let start = prog.num_vars();
            match b.cone {
                Cone::Free => {
                    prog.free("tmpl", b.len);
                }
                Cone::NonNeg => {
                    prog.nonneg("tmpl", b.len);
                }
                Cone::HermPsd(d) => {
                    prog.psd("tmpl", d);
                }
            }
            for k in 0..b.len {
                map[b.offset + k] = start + k;
            }
        }
        for e in &self.eqs {
            let mut out = LinExpr::zero();
            for &(v, c) in &e.terms {
                out.terms.push((map[v], c));
            }
            out.add_scaled(scale, e.constant);
            prog.add_eq(out);
        }
        let d = self.dim();
        let mut choi = MatExpr::zeros(d, d);
        for (i, j, e) in self.choi.entries() {
            let mut t = e.clone();
            for term in &mut t.terms {
                term.0 = map[term.0];
            }
            choi.set(i, j, t);
        }
        choi
    }

    /// Emits constraints in fresh dual variables equivalent (under strong
    /// duality) to `sup_{J ∈ O} ⟨Q, J⟩ ≤ bound`. Weak duality makes the
    /// emitted constraints sufficient in every case; the flag guards necessity.
    pub fn dualize_support(&self, prog: &mut Program, q: &MatExpr, bound: &LinExpr) -> Result<(), SupportError> {
        if !self.strong_duality {
            return Err(SupportError::MissingSlater);
        }
        let y = prog.free("support_dual", self.eqs.len());
        // bound ≥ bᵀy with b = -constant
        let mut slack = bound.clone();
        for (yi, e) in y.iter().zip(&self.eqs) {
            slack.add_scaled(yi, e.constant);
        }
        prog.add_ge(slack);
        // r_k = (Eᵀy)_k − ⟨Q, J_k⟩
        let mut r: Vec<LinExpr> = vec![LinExpr::zero(); self.nvars];
        for (yi, e) in y.iter().zip(&self.eqs) {
            for &(v, c) in &e.terms {
                r[v].add_scaled(yi, c);
            }
        }
        for (k, rk) in r.iter_mut().enumerate() {
            if self.coeffs[k].iter().any(|z| *z != C64::default()) {
                let c = q.inner(&self.coeffs[k]);
                rk.add_scaled(&c, -1.0);
            }
        }
        let r: Vec<LinExpr> = r.into_iter().map(LinExpr::compress).collect();
        for b in &self.blocks {
            let rs = &r[b.offset..b.offset + b.len];
            match b.cone {
                Cone::Free => {
                    for e in rs {
                        prog.add_eq(e.clone());
                    }
                }
                Cone::NonNeg => {
                    for e in rs {
                        prog.add_ge(e.clone());
                    }
                }
                Cone::HermPsd(d) => {
                    prog.add_psd(hermitian_dual_basis(d, rs));
                }
            }
        }
        Ok(())
    }

    /// Coefficient matrix of every template variable in the Choi expression.
    pub fn choi_coefficients(&self) -> &[DMatrix<C64>] {
        &self.coeffs
    }

    /// Dense `(E, b)` of the independent template equalities `E u = b`.
    pub fn equalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut e = DMatrix::zeros(self.eqs.len(), self.nvars);
        let mut b = DVector::zeros(self.eqs.len());
        for (r, row) in self.eqs.iter().enumerate() {
            for &(v, c) in &row.terms {
                e[(r, v)] += c;
            }
            b[r] = -row.constant;
        }
        (e, b)
    }

    /// Choi matrix for a template variable assignment.
    pub fn choi_of(&self, u: &[f64]) -> DMatrix<C64> {
        self.choi.eval(u)
    }

    /// A point of the affine hull `J({u : E u = b})` and an orthonormal
    /// (Hilbert–Schmidt) basis of its direction space, with relative rank
    /// cutoff `cutoff`. Equals `aff(O)` when a strictly feasible point exists.
    pub fn affine_hull(&self, cutoff: f64) -> (DMatrix<C64>, Vec<DMatrix<C64>>) {
        let (e, b) = self.equalities();
        let n = self.nvars;
        // min-norm particular solution and nullspace from the Gram matrix EᵀE
        let gram = e.transpose() * &e;
        let eig = SymmetricEigen::new(gram);
        let maxev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut u0 = DVector::zeros(n);
        let etb = e.transpose() * &b;
        let mut null = Vec::new();
        for k in 0..n {
            let lam = eig.eigenvalues[k];
            let v = eig.eigenvectors.column(k);
            if lam > 1e-11 * maxev && e.nrows() > 0 {
                u0 += v * (v.dot(&etb) / lam);
            } else {
                null.push(v.clone_owned());
            }
        }
        let base = self.choi_of(u0.as_slice());
        let dirs: Vec<DMatrix<C64>> = null
            .iter()
            .map(|v| {
                let mut m = DMatrix::zeros(self.dim(), self.dim());
                for (k, &c) in v.iter().enumerate() {
                    if c != 0.0 {
                        m += &self.coeffs[k] * C64::new(c, 0.0);
                    }
                }
                m
            })
            .collect();
        (base, orthonormal_span(&dirs, cutoff))
    }
}

/// Orthonormal basis (Hilbert–Schmidt inner product, Hermitian matrices) of
/// the span of `mats`, numerical rank cutoff relative to the largest
/// singular value.
pub fn orthonormal_span(mats: &[DMatrix<C64>], cutoff: f64) -> Vec<DMatrix<C64>> {
    if mats.is_empty() {
        return Vec::new();
    }
    let d = mats[0].nrows();
    let dim = d * d;
    let to_real = |m: &DMatrix<C64>| -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        let mut k = 0;
        for i in 0..d {
            v[k] = m[(i, i)].re;
            k += 1;
        }
        for i in 0..d {
            for j in i + 1..d {
                let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
                v[k] = std::f64::consts::SQRT_2 * z.re;
                v[k + 1] = std::f64::consts::SQRT_2 * z.im;
                k += 2;
            }
        }
        v
    };
    let cols: Vec<DVector<f64>> = mats.iter().map(to_real).collect();
    let m = DMatrix::from_columns(&cols);
    let svd = m.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] > cutoff * smax {
            let v = u.column(k);
            let mut h = DMatrix::zeros(d, d);
            let mut idx = 0;
            for i in 0..d {
                h[(i, i)] = C64::new(v[idx], 0.0);
                idx += 1;
            }
            for i in 0..d {
                for j in i + 1..d {
                    let z = C64::new(v[idx], v[idx + 1]) / std::f64::consts::SQRT_2;
                    h[(i, j)] = z;
                    h[(j, i)] = z.conj();
                    idx += 2;
                }
            }
            out.push(h);
        }
    }
    out
}

/// Support bound from an explicit generating family: `⟨Q, V⟩ ≤ bound` for
/// every generator (exact for polytopes).
pub fn support_from_generators(prog: &mut Program, q: &MatExpr, bound: &LinExpr, generators: &[DMatrix<C64>]) {
    for v in generators {
        prog.add_ge(bound - &q.inner(v));
    }
}
