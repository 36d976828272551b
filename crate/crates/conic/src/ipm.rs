//! Homogeneous self-dual interior-point method for
//!
//! ```text
//! minimize cᵀx  subject to  Gx + s = h,  Ax = b,  s ∈ K
//! ```
//!
//! where `K` is a product of a nonnegative orthant and real symmetric PSD
//! cones in scaled-vectorized (`svec`) form. Nesterov–Todd scaling with a
//! Mehrotra predictor–corrector step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ConeKind {
    NonNeg(usize),
    Psd(usize),
}

impl ConeKind {
    pub(crate) fn rows(&self) -> usize {
        match *self {
            ConeKind::NonNeg(l) => l,
            ConeKind::Psd(m) => m * (m + 1) / 2,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            ConeKind::NonNeg(l) => l,
            ConeKind::Psd(m) => m,
        }
    }
}

pub(crate) struct StdProblem {
    pub n: usize,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Sparse rows of `G`, one per cone coordinate.
    pub g: Vec<Vec<(usize, f64)>>,
    pub h: DVector<f64>,
    pub cones: Vec<ConeKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Inaccurate,
}

pub(crate) struct IpmResult {
    pub outcome: Outcome,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub iterations: usize,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct IpmSettings {
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    pub max_iter: usize,
}

pub(crate) fn svec_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // entries preceding column j in the lower triangle: Σ_{k<j} (m - k)
    j * m - (j * j - j) / 2 + (i - j)
}

pub(crate) fn smat(v: &[f64], m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, m);
    let mut k = 0;
    for j in 0..m {
        out[(j, j)] = v[k];
        k += 1;
        for i in j + 1..m {
            let x = v[k] / SQRT2;
            out[(i, j)] = x;
            out[(j, i)] = x;
            k += 1;
        }
    }
    out
}

pub(crate) fn svec_into(a: &DMatrix<f64>, out: &mut [f64]) {
    let m = a.nrows();
    let mut k = 0;
    for j in 0..m {
        out[k] = a[(j, j)];
        k += 1;
        for i in j + 1..m {
            out[k] = 0.5 * (a[(i, j)] + a[(j, i)]) * SQRT2;
            k += 1;
        }
    }
}

struct Cone {
    kind: ConeKind,
    offset: usize,
    /// Columns of `G` touching this cone.
    cols: Vec<usize>,
    /// PSD only: per touched column, the full symmetric coefficient matrix as
    /// a list of `(row, col, value)` entries.
    colmats: Vec<Vec<(usize, usize, f64)>>,
}

enum Scale {
    NonNeg { w: Vec<f64> },
    Psd { r: DMatrix<f64>, rinv: DMatrix<f64> },
}

struct Scaling {
    scales: Vec<Scale>,
    /// Scaled point λ = W z = W⁻ᵀ s in cone coordinates.
    lambda: DVector<f64>,
    /// Eigenvalues of λ per cone (the entries themselves for the orthant).
    lamvals: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
enum Op {
    W,
    Wt,
    WtW,
    WtWinv,
}

fn sym_eig(m: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(m.clone())
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = sym_eig(m);
    let vals = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
}

struct Solver<'a> {
    p: &'a StdProblem,
    cones: Vec<Cone>,
    at: DMatrix<f64>,
    ata: DMatrix<f64>,
    mdim: usize,
}

struct Kkt {
    k1: Cholesky<f64, Dyn>,
    schur: Option<Cholesky<f64, Dyn>>,
}

fn chol_reg(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 {
        return Cholesky::new(m);
    }
    let maxd = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut delta = 1e-13 * maxd;
    for i in 0..n {
        m[(i, i)] += delta;
    }
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
        let bump = delta * 99.0;
        for i in 0..n {
            m[(i, i)] += bump;
        }
        delta *= 100.0;
    }
    None
}

impl<'a> Solver<'a> {
    fn new(p: &'a StdProblem) -> Self {
        let mut cones = Vec::new();
        let mut offset = 0;
        for &kind in &p.cones {
            let rows = kind.rows();
            let mut cols: Vec<usize> =
                (offset..offset + rows).flat_map(|r| p.g[r].iter().map(|t| t.0)).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut colmats = Vec::new();
            if let ConeKind::Psd(m) = kind {
                let mut pos = vec![usize::MAX; p.n];
                for (k, &c) in cols.iter().enumerate() {
                    pos[c] = k;
                }
                colmats = vec![Vec::new(); cols.len()];
                let mut r = offset;
                for j in 0..m {
                    for i in j..m {
                        for &(c, v) in &p.g[r] {
                            let list = &mut colmats[pos[c]];
                            if i == j {
                                list.push((i, i, v));
                            } else {
                                list.push((i, j, v / SQRT2));
                                list.push((j, i, v / SQRT2));
                            }
                        }
                        r += 1;
                    }
                }
            }
            cones.push(Cone { kind, offset, cols, colmats });
            offset += rows;
        }
        let at = p.a.transpose();
        let ata = &at * &p.a;
        Solver { p, cones, at, ata, mdim: offset }
    }

    fn gx(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.mdim, self.p.g.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum::<f64>()))
    }

    fn gtz(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p.n);
        for (r, row) in self.p.g.iter().enumerate() {
            let zr = z[r];
            if zr != 0.0 {
                for &(j, v) in row {
                    out[j] += v * zr;
                }
            }
        }
        out
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.mdim);
        for c in &self.cones {
            match c.kind {
                ConeKind::NonNeg(l) => e.rows_mut(c.offset, l).fill(1.0),
                ConeKind::Psd(m) => {
                    for j in 0..m {
                        e[c.offset + svec_index(m, j, j)] = 1.0;
                    }
                }
            }
        }
        e
    }

    fn dot(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(v)
    }

    /// Largest `t` with `u + t e` in the cone boundary, i.e. `-min eig(u)`.
    fn max_neg_eig(&self, u: &DVector<f64>) -> f64 {
        let mut t = f64::NEG_INFINITY;
        for c in &self.cones {
            match c.kind {
                ConeKind::NonNeg(l) => {
                    for k in 0..l {
                        t = t.max(-u[c.offset + k]);
                    }
                }
                ConeKind::Psd(m) => {
                    let mat = smat(&u.as_slice()[c.offset..c.offset + c.kind.rows()], m);
                    let e = sym_eig(&mat);
                    t = t.max(-e.eigenvalues.min());
                }
            }
        }
        t
    }

    fn scaling(&self, s: &DVector<f64>, z: &DVector<f64>) -> Scaling {
        let mut scales = Vec::with_capacity(self.cones.len());
        let mut lambda = DVector::zeros(self.mdim);
        let mut lamvals = Vec::with_capacity(self.cones.len());
        for c in &self.cones {
            match c.kind {
                ConeKind::NonNeg(l) => {
                    let mut w = Vec::with_capacity(l);
                    let mut lv = Vec::with_capacity(l);
                    for k in 0..l {
                        let (sk, zk) = (s[c.offset + k], z[c.offset + k]);
                        w.push((sk / zk).sqrt());
                        let lam = (sk * zk).sqrt();
                        lambda[c.offset + k] = lam;
                        lv.push(lam);
                    }
                    scales.push(Scale::NonNeg { w });
                    lamvals.push(lv);
                }
                ConeKind::Psd(m) => {
                    let rows = c.kind.rows();
                    let smat_ = smat(&s.as_slice()[c.offset..c.offset + rows], m);
                    let zmat = smat(&z.as_slice()[c.offset..c.offset + rows], m);
                    let ls = sym_sqrt(&smat_);
                    let lz = sym_sqrt(&zmat);
                    let svd = (&lz * &ls).svd(true, true);
                    let u = svd.u.unwrap();
                    let vt = svd.v_t.unwrap();
                    let sig = svd.singular_values;
                    let isq = sig.map(|x| 1.0 / x.max(1e-300).sqrt());
                    let r = &ls * vt.transpose() * DMatrix::from_diagonal(&isq);
                    let rinv = DMatrix::from_diagonal(&isq) * u.transpose() * &lz;
                    for j in 0..m {
                        lambda[c.offset + svec_index(m, j, j)] = sig[j];
                    }
                    lamvals.push(sig.iter().copied().collect());
                    scales.push(Scale::Psd { r, rinv });
                }
            }
        }
        Scaling { scales, lambda, lamvals }
    }

    fn apply(&self, sc: &Scaling, op: Op, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.mdim);
        for (c, scale) in self.cones.iter().zip(&sc.scales) {
            let rows = c.kind.rows();
            match scale {
                Scale::NonNeg { w } => {
                    for k in 0..rows {
                        let x = v[c.offset + k];
                        out[c.offset + k] = match op {
                            Op::W | Op::Wt => w[k] * x,
                            Op::WtW => w[k] * w[k] * x,
                            Op::WtWinv => x / (w[k] * w[k]),
                        };
                    }
                }
                Scale::Psd { r, rinv } => {
                    let m = r.nrows();
                    let vm = smat(&v.as_slice()[c.offset..c.offset + rows], m);
                    let res = match op {
                        Op::W => r.transpose() * vm * r,
                        Op::Wt => r * vm * r.transpose(),
                        Op::WtW => {
                            let q = r * r.transpose();
                            &q * vm * &q
                        }
                        Op::WtWinv => {
                            let p = rinv.transpose() * rinv;
                            &p * vm * &p
                        }
                    };
                    svec_into(&res, &mut out.as_mut_slice()[c.offset..c.offset + rows]);
                }
            }
        }
        out
    }

    fn jordan(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.mdim);
        for c in &self.cones {
            let rows = c.kind.rows();
            match c.kind {
                ConeKind::NonNeg(_) => {
                    for k in c.offset..c.offset + rows {
                        out[k] = u[k] * v[k];
                    }
                }
                ConeKind::Psd(m) => {
                    let um = smat(&u.as_slice()[c.offset..c.offset + rows], m);
                    let vm = smat(&v.as_slice()[c.offset..c.offset + rows], m);
                    let prod = (&um * &vm + &vm * &um) * 0.5;
                    svec_into(&prod, &mut out.as_mut_slice()[c.offset..c.offset + rows]);
                }
            }
        }
        out
    }

    /// Solves `λ ∘ x = u` for `x`.
    fn lam_div(&self, sc: &Scaling, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.mdim);
        for (c, lv) in self.cones.iter().zip(&sc.lamvals) {
            match c.kind {
                ConeKind::NonNeg(l) => {
                    for k in 0..l {
                        out[c.offset + k] = u[c.offset + k] / lv[k];
                    }
                }
                ConeKind::Psd(m) => {
                    let mut k = c.offset;
                    for j in 0..m {
                        for i in j..m {
                            out[k] = 2.0 * u[k] / (lv[i] + lv[j]);
                            k += 1;
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest step `α` with `λ + α d` in the cone (∞ when unbounded).
    fn max_step(&self, sc: &Scaling, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for (c, lv) in self.cones.iter().zip(&sc.lamvals) {
            match c.kind {
                ConeKind::NonNeg(l) => {
                    for k in 0..l {
                        let dk = d[c.offset + k];
                        if dk < 0.0 {
                            alpha = alpha.min(-lv[k] / dk);
                        }
                    }
                }
                ConeKind::Psd(m) => {
                    let rows = c.kind.rows();
                    let mut dm = smat(&d.as_slice()[c.offset..c.offset + rows], m);
                    for i in 0..m {
                        for j in 0..m {
                            dm[(i, j)] /= (lv[i] * lv[j]).sqrt();
                        }
                    }
                    let tmin = sym_eig(&dm).eigenvalues.min();
                    if tmin < 0.0 {
                        alpha = alpha.min(-1.0 / tmin);
                    }
                }
            }
        }
        alpha
    }

    fn factor(&self, sc: Option<&Scaling>) -> Option<Kkt> {
        let mut h = self.ata.clone();
        for (ci, c) in self.cones.iter().enumerate() {
            match c.kind {
                ConeKind::NonNeg(l) => {
                    for k in 0..l {
                        let weight = match sc.map(|s| &s.scales[ci]) {
                            Some(Scale::NonNeg { w }) => 1.0 / (w[k] * w[k]),
                            _ => 1.0,
                        };
                        let row = &self.p.g[c.offset + k];
                        for &(i, gi) in row {
                            for &(j, gj) in row {
                                h[(i, j)] += weight * gi * gj;
                            }
                        }
                    }
                }
                ConeKind::Psd(m) => {
                    let pmat = match sc.map(|s| &s.scales[ci]) {
                        Some(Scale::Psd { rinv, .. }) => rinv.transpose() * rinv,
                        _ => DMatrix::identity(m, m),
                    };
                    let k = c.cols.len();
                    let dense_cut = 2 * m;
                    for kk in 0..k {
                        let ent = &c.colmats[kk];
                        let t = if ent.len() > dense_cut {
                            let mut gm = DMatrix::zeros(m, m);
                            for &(a, b, v) in ent {
                                gm[(a, b)] += v;
                            }
                            &pmat * gm * &pmat
                        } else {
                            let mut t = DMatrix::zeros(m, m);
                            for &(a, b, v) in ent {
                                // t += v * P[:,a] P[b,:]
                                for jj in 0..m {
                                    let pb = v * pmat[(b, jj)];
                                    if pb != 0.0 {
                                        for ii in 0..m {
                                            t[(ii, jj)] += pmat[(ii, a)] * pb;
                                        }
                                    }
                                }
                            }
                            t
                        };
                        let ck = c.cols[kk];
                        for ll in 0..=kk {
                            let val: f64 = c.colmats[ll].iter().map(|&(a, b, v)| v * t[(b, a)]).sum();
                            let cl = c.cols[ll];
                            h[(cl, ck)] += val;
                            if cl != ck {
                                h[(ck, cl)] += val;
                            }
                        }
                    }
                }
            }
        }
        let k1 = chol_reg(h)?;
        let schur = if self.p.a.nrows() > 0 {
            let kinv_at = k1.solve(&self.at);
            let s = &self.p.a * kinv_at;
            Some(chol_reg(s)?)
        } else {
            None
        };
        Some(Kkt { k1, schur })
    }

    fn solve_once(
        &self,
        kkt: &Kkt,
        sc: Option<&Scaling>,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let wr3 = match sc {
            Some(sc) => self.apply(sc, Op::WtWinv, r3),
            None => r3.clone(),
        };
        let f1 = r1 + self.gtz(&wr3);
        let base = &f1 + &self.at * r2;
        let t = kkt.k1.solve(&base);
        let (dx, dy) = match &kkt.schur {
            Some(s) => {
                let dy = s.solve(&(&self.p.a * &t - r2));
                let dx = kkt.k1.solve(&(&base - &self.at * &dy));
                (dx, dy)
            }
            None => (t, DVector::zeros(0)),
        };
        let gdx = self.gx(&dx) - r3;
        let dz = match sc {
            Some(sc) => self.apply(sc, Op::WtWinv, &gdx),
            None => gdx,
        };
        (dx, dy, dz)
    }

    fn solve(
        &self,
        kkt: &Kkt,
        sc: Option<&Scaling>,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (mut dx, mut dy, mut dz) = self.solve_once(kkt, sc, r1, r2, r3);
        for _ in 0..2 {
            let e1 = r1 - (&self.at * &dy + self.gtz(&dz));
            let e2 = r2 - &self.p.a * &dx;
            let wdz = match sc {
                Some(sc) => self.apply(sc, Op::WtW, &dz),
                None => dz.clone(),
            };
            let e3 = r3 - (self.gx(&dx) - wdz);
            let scale = r1.norm() + r2.norm() + r3.norm() + 1e-300;
            if (e1.norm() + e2.norm() + e3.norm()) / scale < 1e-14 {
                break;
            }
            let (cx, cy, cz) = self.solve_once(kkt, sc, &e1, &e2, &e3);
            dx += cx;
            dy += cy;
            dz += cz;
        }
        (dx, dy, dz)
    }
}

pub(crate) fn solve(p: &StdProblem, set: &IpmSettings) -> IpmResult {
    let solver = Solver::new(p);
    let n = p.n;
    let np = p.a.nrows();
    let mdim = solver.mdim;
    let deg: usize = p.cones.iter().map(|c| c.degree()).sum();

    let empty = |outcome| IpmResult {
        outcome,
        x: DVector::zeros(n),
        y: DVector::zeros(np),
        z: DVector::zeros(mdim),
        iterations: 0,
        pres: f64::NAN,
        dres: f64::NAN,
        gap: f64::NAN,
    };

    let resx0 = p.c.norm().max(1.0);
    let resy0 = p.b.norm().max(1.0);
    let resz0 = p.h.norm().max(1.0);

    let Some(kkt0) = solver.factor(None) else {
        return empty(Outcome::Inaccurate);
    };
    let (mut x, _, dz) = solver.solve(&kkt0, None, &DVector::zeros(n), &p.b, &p.h);
    let mut s = -dz;
    let (_, mut y, mut z) = solver.solve(&kkt0, None, &(-&p.c), &DVector::zeros(np), &DVector::zeros(mdim));
    let e = solver.identity();
    let nrms = s.norm();
    let ts = solver.max_neg_eig(&s);
    if mdim > 0 {
        if ts >= -1e-8 * nrms.max(1.0) {
            s += &e * (1.0 + ts);
        }
        let nrmz = z.norm();
        let tz = solver.max_neg_eig(&z);
        if tz >= -1e-8 * nrmz.max(1.0) {
            z += &e * (1.0 + tz);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut best: Option<(f64, IpmResult)> = None;
    let mut last_pres = f64::INFINITY;
    let mut last_dres = f64::INFINITY;

    for iter in 0..=set.max_iter {
        let ax = &p.a * &x;
        let gx = solver.gx(&x);
        let aty = &solver.at * &y;
        let gtz = solver.gtz(&z);
        let rx = &aty + &gtz + &p.c * tau;
        let ry = &ax - &p.b * tau;
        let rz = &gx + &s - &p.h * tau;
        let cx = p.c.dot(&x);
        let by = p.b.dot(&y);
        let hz = p.h.dot(&z);
        let rt = kappa + cx + by + hz;
        let sz = solver.dot(&s, &z);
        let mu = (sz + tau * kappa) / (deg as f64 + 1.0);

        let pres = (ry.norm() / resy0).max(rz.norm() / resz0) / tau;
        let dres = rx.norm() / resx0 / tau;
        let pcost = cx / tau;
        let dcost = -(by + hz) / tau;
        let gap = sz / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        last_pres = pres;
        last_dres = dres;

        let snapshot = |outcome| IpmResult {
            outcome,
            x: &x / tau,
            y: &y / tau,
            z: &z / tau,
            iterations: iter,
            pres,
            dres,
            gap,
        };
        if pres <= set.feastol && dres <= set.feastol && (gap <= set.abstol || relgap <= set.reltol) {
            return snapshot(Outcome::Optimal);
        }
        let merit = pres.max(dres).max(relgap.min(gap));
        if best.as_ref().map_or(true, |b| merit < b.0) && merit.is_finite() {
            best = Some((merit, snapshot(Outcome::Inaccurate)));
        }
        if by + hz < 0.0 {
            let pinf = (&aty + &gtz).norm() / resx0 / -(by + hz);
            if pinf <= set.feastol {
                let mut r = snapshot(Outcome::PrimalInfeasible);
                let scale = -(by + hz);
                r.y = &y / scale;
                r.z = &z / scale;
                return r;
            }
        }
        if cx < 0.0 {
            let dinf = ((&ax).norm() / resy0).max((&gx + &s).norm() / resz0) / -cx;
            if dinf <= set.feastol {
                let mut r = snapshot(Outcome::DualInfeasible);
                r.x = &x / -cx;
                return r;
            }
        }
        if iter == set.max_iter {
            break;
        }

        let sc = solver.scaling(&s, &z);
        let Some(kkt) = solver.factor(Some(&sc)) else {
            break;
        };
        let gvec = (-&p.c, p.b.clone(), p.h.clone());
        let (gx_, gy_, gz_) = solver.solve(&kkt, Some(&sc), &gvec.0, &gvec.1, &gvec.2);
        let qg = p.c.dot(&gx_) + p.b.dot(&gy_) + p.h.dot(&gz_);

        let lam = &sc.lambda;
        let lamsq = solver.jordan(lam, lam);

        let step = |eta: f64, rhs_c: &DVector<f64>, rhs_t: f64| {
            let rtil = solver.lam_div(&sc, rhs_c);
            let wtr = solver.apply(&sc, Op::Wt, &rtil);
            let r1 = -&rx * eta;
            let r2 = -&ry * eta;
            let r3 = -&rz * eta - &wtr;
            let (fx, fy, fz) = solver.solve(&kkt, Some(&sc), &r1, &r2, &r3);
            let qf = p.c.dot(&fx) + p.b.dot(&fy) + p.h.dot(&fz);
            let dtau = (-eta * rt - rhs_t / tau - qf) / (qg - kappa / tau);
            let dx = fx + &gx_ * dtau;
            let dy = fy + &gy_ * dtau;
            let dz = fz + &gz_ * dtau;
            let dzt = solver.apply(&sc, Op::W, &dz);
            let dst = &rtil - &dzt;
            let ds = solver.apply(&sc, Op::Wt, &dst);
            let dkappa = (rhs_t - kappa * dtau) / tau;
            (dx, dy, dz, ds, dtau, dkappa, dst, dzt)
        };

        // predictor
        let rhs_c = -&lamsq;
        let (_, _, _, _, dtau_a, dkappa_a, dst_a, dzt_a) = step(1.0, &rhs_c, -tau * kappa);
        let mut alpha = solver.max_step(&sc, &dst_a).min(solver.max_step(&sc, &dzt_a));
        if dtau_a < 0.0 {
            alpha = alpha.min(-tau / dtau_a);
        }
        if dkappa_a < 0.0 {
            alpha = alpha.min(-kappa / dkappa_a);
        }
        let alpha_a = alpha.min(1.0);
        let sigma = (1.0 - alpha_a).max(0.0).powi(3);

        // corrector
        let rhs_c = -&lamsq - solver.jordan(&dst_a, &dzt_a) + &e * (sigma * mu);
        let rhs_t = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, dy, dz, ds, dtau, dkappa, dst, dzt) = step(1.0 - sigma, &rhs_c, rhs_t);
        let mut alpha = solver.max_step(&sc, &dst).min(solver.max_step(&sc, &dzt));
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        let alpha = (0.99 * alpha).min(1.0);
        if !alpha.is_finite() || alpha < 1e-12 {
            break;
        }
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &ds * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau > 0.0 && kappa > 0.0) || !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    log::debug!("interior point stopped without convergence (pres {last_pres:.2e}, dres {last_dres:.2e})");
    match best {
        Some((_, r)) => r,
        None => empty(Outcome::Inaccurate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_layout() {
        let m = 3;
        let mut seen = vec![false; 6];
        for j in 0..m {
            for i in j..m {
                let k = svec_index(m, i, j);
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert_eq!(svec_index(3, 0, 0), 0);
        assert_eq!(svec_index(3, 1, 0), 1);
        assert_eq!(svec_index(3, 1, 1), 3);
        assert_eq!(svec_index(3, 2, 2), 5);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let mut v = vec![0.0; 6];
        svec_into(&a, &mut v);
        assert!((smat(&v, 3) - &a).norm() < 1e-12);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let mut w = vec![0.0; 6];
        svec_into(&b, &mut w);
        let dot: f64 = v.iter().zip(&w).map(|(p, q)| p * q).sum();
        assert!((dot - a.dot(&b)).abs() < 1e-12);
    }
}
