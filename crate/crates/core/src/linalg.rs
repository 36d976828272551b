//! Dense complex matrix helpers shared by every module.

use dynres_conic::tensor::{partial_transpose_source, permutation_source, Split};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let e = hermitize(m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = CMat::from_columns(&idx.iter().map(|&i| e.eigenvectors.column(i).clone_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

pub fn min_eig(m: &CMat) -> f64 {
    eigh(m).0.first().copied().unwrap_or(0.0)
}

pub fn max_eig(m: &CMat) -> f64 {
    eigh(m).0.last().copied().unwrap_or(0.0)
}

/// `f` applied to the spectrum of a Hermitian matrix.
pub fn spectral_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(f(v))));
    &vecs * CMat::from_diagonal(&d) * vecs.adjoint()
}

pub fn psd_sqrt(m: &CMat) -> CMat {
    spectral_map(m, |v| v.max(0.0).sqrt())
}

/// Pseudo-inverse square root with relative eigenvalue cutoff.
pub fn pinv_sqrt(m: &CMat, cutoff: f64) -> CMat {
    let top = max_eig(m).max(0.0);
    spectral_map(m, |v| if v > cutoff * top && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
}

/// Clips the spectrum to `[lo, hi]`.
pub fn clamp_spectrum(m: &CMat, lo: f64, hi: f64) -> CMat {
    spectral_map(m, |v| v.clamp(lo, hi))
}

pub fn trace_norm(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn partial_trace(m: &CMat, dims: &[usize], traced: &[bool]) -> CMat {
    let s = Split::new(dims, traced);
    let table = s.table();
    let k = s.kept();
    CMat::from_fn(k, k, |i, j| (0..s.traced()).map(|t| m[(table[i][t], table[j][t])]).sum())
}

/// Trace over the second factor of a bipartite `a ⊗ b` operator.
pub fn trace_second(m: &CMat, a: usize, b: usize) -> CMat {
    partial_trace(m, &[a, b], &[false, true])
}

pub fn trace_first(m: &CMat, a: usize, b: usize) -> CMat {
    partial_trace(m, &[a, b], &[true, false])
}

pub fn partial_transpose(m: &CMat, dims: &[usize], mask: &[bool]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let (a, b) = partial_transpose_source(i, j, dims, mask);
        m[(a, b)]
    })
}

pub fn permute(m: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let src = permutation_source(dims, perm);
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(src[i], src[j])])
}

/// Unnormalised maximally entangled operator `Σ_ij |ii⟩⟨jj|`.
pub fn omega(d: usize) -> CMat {
    let mut m = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = c(1.0);
        }
    }
    m
}

pub fn is_diagonal(m: &CMat, tol: f64) -> bool {
    m.iter().enumerate().all(|(k, z)| k % (m.nrows() + 1) == 0 || z.norm() <= tol)
}

pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn random_unitary(d: usize, rng: &mut impl Rng) -> CMat {
    let qr = ginibre(d, d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DVector::from_iterator(d, (0..d).map(|i| {
        let z = r[(i, i)];
        if z.norm() > 0.0 {
            z / z.norm()
        } else {
            c(1.0)
        }
    }));
    q * CMat::from_diagonal(&phases)
}

/// Random density matrix of given rank (induced measure).
pub fn random_density(d: usize, rank: usize, rng: &mut impl Rng) -> CMat {
    let g = ginibre(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = m.trace();
    m / t
}

pub fn random_pure(d: usize, rng: &mut impl Rng) -> DVector<C64> {
    let v = ginibre(d, 1, rng).column(0).clone_owned();
    let n = v.norm();
    v / c(n)
}

/// Kraus operators of a random channel built from a Haar isometry.
pub fn random_kraus(d_in: usize, d_out: usize, rank: usize, rng: &mut impl Rng) -> Vec<CMat> {
    let big = d_out * rank;
    let u = random_unitary(big.max(d_in), rng);
    let v = u.columns(0, d_in).rows(0, big).clone_owned();
    // orthonormal columns when big >= d_in
    (0..rank).map(|k| CMat::from_fn(d_out, d_in, |a, i| v[(k * d_out + a, i)])).collect()
}

pub fn outer(v: &DVector<C64>) -> CMat {
    v * v.adjoint()
}

pub fn to_re_im(m: &CMat) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect();
    let im = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect();
    (re, im)
}

pub fn from_re_im(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Option<CMat> {
    let rows = re.len();
    let cols = re.first().map_or(0, |r| r.len());
    if re.iter().any(|r| r.len() != cols) {
        return None;
    }
    if let Some(im) = im {
        if im.len() != rows || im.iter().any(|r| r.len() != cols) {
            return None;
        }
    }
    Some(CMat::from_fn(rows, cols, |i, j| C64::new(re[i][j], im.map_or(0.0, |m| m[i][j]))))
}
