//! Channels as Choi matrices `J = Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)` on `in ⊗ out`,
//! normalised so that `Tr_out J = I_in`.

use dynres_conic::{MatExpr, Program};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c, eigh, eye, hermiticity_defect, hermitize, kron, CMat};
use crate::optim;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_FLOOR: f64 = -1e-9;
pub const TP_TOL: f64 = 1e-9;

/// Hermitian operator; construction checks hermiticity and then stores the
/// exactly symmetrised matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: CMat,
}

impl HermitianMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        let defect = hermiticity_defect(&m);
        if defect > HERMITIAN_TOL * (1.0 + m.norm()) {
            return Err(Error::Validation(format!("matrix is not Hermitian (defect {defect:.2e})")));
        }
        Ok(HermitianMatrix { m: hermitize(&m) })
    }

    /// Symmetrises without checking.
    pub fn symmetrized(m: &CMat) -> Self {
        HermitianMatrix { m: hermitize(m) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.m).0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eig(&self.m)
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }
}

impl From<HermitianMatrix> for CMat {
    fn from(h: HermitianMatrix) -> CMat {
        h.m
    }
}

/// Unit vector on `ref ⊗ in`.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    pub dim_ref: usize,
    pub dim_in: usize,
    pub amplitudes: DVector<C64>,
}

impl PureState {
    pub fn new(dim_ref: usize, dim_in: usize, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != dim_ref * dim_in {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a {dim_ref}x{dim_in} system",
                amplitudes.len()
            )));
        }
        let n2 = amplitudes.norm_squared();
        if (n2 - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("state has squared norm {n2}")));
        }
        Ok(PureState { dim_ref, dim_in, amplitudes })
    }

    /// `ψ_ρ = (√ρ ⊗ I) Σ_k |kk⟩`: its reference marginal is `ρ` and
    /// `id ⊗ E(ψ_ρ) = (√ρ ⊗ I) J_E (√ρ ⊗ I)`.
    pub fn purification(rho: &CMat) -> Self {
        let d = rho.nrows();
        let s = linalg::psd_sqrt(rho);
        let mut v = DVector::from_fn(d * d, |k, _| s[(k / d, k % d)]);
        let n = v.norm();
        v /= c(n);
        PureState { dim_ref: d, dim_in: d, amplitudes: v }
    }

    pub fn density(&self) -> CMat {
        linalg::outer(&self.amplitudes)
    }

    pub fn reference_marginal(&self) -> CMat {
        linalg::trace_second(&self.density(), self.dim_ref, self.dim_in)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    d_in: usize,
    d_out: usize,
    choi: HermitianMatrix,
}

fn check_choi(d_in: usize, d_out: usize, choi: &CMat) -> Result<()> {
    let n = d_in * d_out;
    if choi.nrows() != n || choi.ncols() != n {
        return Err(Error::Dimension(format!(
            "Choi matrix is {}x{}, expected {n}x{n} for d_in={d_in}, d_out={d_out}",
            choi.nrows(),
            choi.ncols()
        )));
    }
    let mineig = linalg::min_eig(choi);
    if mineig < PSD_FLOOR {
        return Err(Error::Validation(format!("Choi matrix not PSD (min eigenvalue {mineig:.3e})")));
    }
    let t = linalg::trace_second(choi, d_in, d_out);
    let dev = (t - eye(d_in)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > TP_TOL {
        return Err(Error::Validation(format!("Tr_out J deviates from identity by {dev:.3e} (not trace preserving)")));
    }
    Ok(())
}

impl Channel {
    pub fn new(d_in: usize, d_out: usize, choi: CMat) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Dimension("channel dimensions must be positive".into()));
        }
        let h = HermitianMatrix::new(choi)?;
        check_choi(d_in, d_out, h.matrix())?;
        Ok(Channel { d_in, d_out, choi: h })
    }

    /// Nearest-valid repair of a numerically produced Choi matrix: clips
    /// negative eigenvalues and renormalises with `(T^{-1/2} ⊗ I)` on the
    /// input, where `T = Tr_out J`.
    pub fn repaired(d_in: usize, d_out: usize, choi: &CMat) -> Result<Self> {
        let j = linalg::clamp_spectrum(&hermitize(choi), 0.0, f64::INFINITY);
        let t = linalg::trace_second(&j, d_in, d_out);
        if linalg::min_eig(&t) <= 1e-12 {
            return Err(Error::Validation("repair impossible: Tr_out J is singular".into()));
        }
        let n = kron(&linalg::pinv_sqrt(&t, 0.0), &eye(d_out));
        Channel::new(d_in, d_out, hermitize(&(&n * j * &n)))
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_in, self.d_out)
    }

    pub fn choi(&self) -> &CMat {
        self.choi.matrix()
    }

    pub fn choi_hermitian(&self) -> &HermitianMatrix {
        &self.choi
    }

    /// Normalised Choi state `J / d_in`.
    pub fn choi_state(&self) -> CMat {
        self.choi() / c(self.d_in as f64)
    }

    pub fn identity(d: usize) -> Self {
        Channel { d_in: d, d_out: d, choi: HermitianMatrix { m: linalg::omega(d) } }
    }

    /// `ρ ↦ U ρ U†` (also isometries `V: in → out`).
    pub fn unitary(u: &CMat) -> Result<Self> {
        let (d_out, d_in) = u.shape();
        choi_of_kraus(std::slice::from_ref(u), d_in, d_out)
    }

    /// Replacement channel `ρ ↦ Tr(ρ) σ`.
    pub fn replacement(d_in: usize, sigma: &CMat) -> Result<Self> {
        let d_out = sigma.nrows();
        Channel::new(d_in, d_out, kron(&eye(d_in), sigma))
    }

    /// Preparation of a pure state (trivial input).
    pub fn preparation(phi: &DVector<C64>) -> Result<Self> {
        let n = phi.norm();
        let v = phi / c(n);
        Channel::new(1, phi.len(), linalg::outer(&v))
    }

    pub fn preparation_of(sigma: &CMat) -> Result<Self> {
        Channel::new(1, sigma.nrows(), sigma.clone())
    }

    /// `ρ ↦ (1−p) ρ + p Tr(ρ) I/d`.
    pub fn depolarizing(d: usize, p: f64) -> Self {
        let j = linalg::omega(d) * c(1.0 - p) + eye(d * d) * c(p / d as f64);
        Channel { d_in: d, d_out: d, choi: HermitianMatrix { m: j } }
    }

    /// `ρ ↦ (1−q) ρ + q diag(ρ)`.
    pub fn dephasing(d: usize, q: f64) -> Self {
        let mut j = linalg::omega(d) * c(1.0 - q);
        for i in 0..d {
            j[(i * d + i, i * d + i)] += c(q);
        }
        Channel { d_in: d, d_out: d, choi: HermitianMatrix { m: j } }
    }

    pub fn amplitude_damping(gamma: f64) -> Self {
        let k0 = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c((1.0 - gamma).sqrt())]);
        let k1 = CMat::from_row_slice(2, 2, &[c(0.0), c(gamma.sqrt()), c(0.0), c(0.0)]);
        choi_of_kraus(&[k0, k1], 2, 2).expect("amplitude damping is CPTP")
    }

    /// Classical channel `|i⟩⟨i| ↦ Σ_a p(a|i) |a⟩⟨a|` with dephased input;
    /// `table[i][a] = p(a|i)`.
    pub fn classical(table: &[Vec<f64>]) -> Result<Self> {
        let d_in = table.len();
        let d_out = table.first().map_or(0, |r| r.len());
        let mut j = CMat::zeros(d_in * d_out, d_in * d_out);
        for (i, row) in table.iter().enumerate() {
            if row.len() != d_out {
                return Err(Error::Dimension("ragged classical table".into()));
            }
            for (a, &p) in row.iter().enumerate() {
                j[(i * d_out + a, i * d_out + a)] = c(p);
            }
        }
        Channel::new(d_in, d_out, j)
    }

    /// Convex (or affine) combination of equal-signature channels.
    pub fn mix(parts: &[(f64, &Channel)]) -> Result<Self> {
        let (w0, first) = parts.first().ok_or_else(|| Error::Validation("empty mixture".into()))?;
        let mut j = first.choi() * c(*w0);
        for (w, ch) in &parts[1..] {
            if ch.dims() != first.dims() {
                return Err(Error::Dimension("mixing channels with different signatures".into()));
            }
            j += ch.choi() * c(*w);
        }
        Channel::new(first.d_in, first.d_out, j)
    }

    /// `after ∘ self`.
    pub fn then(&self, after: &Channel) -> Result<Self> {
        if after.d_in != self.d_out {
            return Err(Error::Dimension(format!("cannot compose: {} outputs into {} inputs", self.d_out, after.d_in)));
        }
        let j = apply_raw(after, self.choi(), self.d_in);
        Channel::new(self.d_in, after.d_out, hermitize(&j))
    }

    /// `self ⊗ other` with input `in₁ ⊗ in₂` and output `out₁ ⊗ out₂`.
    pub fn tensor(&self, other: &Channel) -> Self {
        let big = kron(self.choi(), other.choi());
        let dims = [self.d_in, self.d_out, other.d_in, other.d_out];
        let j = linalg::permute(&big, &dims, &[0, 2, 1, 3]);
        Channel { d_in: self.d_in * other.d_in, d_out: self.d_out * other.d_out, choi: HermitianMatrix { m: j } }
    }

    /// Kraus operators from the eigendecomposition of the Choi matrix.
    pub fn kraus(&self) -> Vec<CMat> {
        let (vals, vecs) = eigh(self.choi());
        let top = vals.last().copied().unwrap_or(0.0).max(0.0);
        let mut out = Vec::new();
        for (k, &v) in vals.iter().enumerate().rev() {
            if v <= 1e-13 * top.max(1.0) {
                continue;
            }
            let s = v.sqrt();
            out.push(CMat::from_fn(self.d_out, self.d_in, |a, i| vecs[(i * self.d_out + a, k)] * c(s)));
        }
        out
    }

    /// `id ⊗ E` on an operator of `ref ⊗ in`.
    pub fn apply(&self, input: &HermitianMatrix) -> Result<HermitianMatrix> {
        apply_channel(self, input)
    }

    /// `E(X)` for an operator on the input alone.
    pub fn apply_local(&self, x: &CMat) -> CMat {
        apply_raw(self, x, 1)
    }

    /// `id⊗E(x)` for `x` on ref⊗in, reference dimension inferred.
    pub fn apply_extended(&self, x: &CMat) -> CMat {
        apply_raw(self, x, x.nrows() / self.d_in)
    }

    pub fn is_classical(&self, tol: f64) -> bool {
        linalg::is_diagonal(self.choi(), tol)
    }

    /// Pure-output channels are exactly those with a rank-one Choi matrix.
    pub fn is_pure_output(&self, tol: f64) -> bool {
        let (vals, _) = eigh(self.choi());
        let top = vals.last().copied().unwrap_or(0.0);
        top >= self.d_in as f64 * (1.0 - tol)
    }
}

/// Choi matrix `Σ_k vec(K_k) vec(K_k)†` with `vec(K)_{(i,a)} = K_{a,i}`.
pub fn choi_of_kraus(kraus: &[CMat], d_in: usize, d_out: usize) -> Result<Channel> {
    let mut sum = CMat::zeros(d_in, d_in);
    let mut j = CMat::zeros(d_in * d_out, d_in * d_out);
    for (k, op) in kraus.iter().enumerate() {
        if op.shape() != (d_out, d_in) {
            return Err(Error::Dimension(format!("Kraus operator {k} is {:?}, expected ({d_out}, {d_in})", op.shape())));
        }
        sum += op.adjoint() * op;
        let v = DVector::from_fn(d_in * d_out, |r, _| op[(r % d_out, r / d_out)]);
        j += &v * v.adjoint();
    }
    let dev = (&sum - eye(d_in)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > 1e-9 {
        return Err(Error::Validation(format!("Kraus completeness Σ K†K = I violated by {dev:.3e}")));
    }
    Channel::new(d_in, d_out, j)
}

/// `out[(r,a),(r',b)] = Σ_ij X[(r,i),(r',j)] J[(i,a),(j,b)]`.
fn apply_raw(ch: &Channel, x: &CMat, d_ref: usize) -> CMat {
    let (di, dout) = (ch.d_in, ch.d_out);
    let j = ch.choi();
    let mut out = CMat::zeros(d_ref * dout, d_ref * dout);
    for r in 0..d_ref {
        for rp in 0..d_ref {
            for i in 0..di {
                for jj in 0..di {
                    let xv = x[(r * di + i, rp * di + jj)];
                    if xv == C64::default() {
                        continue;
                    }
                    for a in 0..dout {
                        for b in 0..dout {
                            out[(r * dout + a, rp * dout + b)] += xv * j[(i * dout + a, jj * dout + b)];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn apply_channel(ch: &Channel, input: &HermitianMatrix) -> Result<HermitianMatrix> {
    let n = input.dim();
    if n % ch.d_in != 0 {
        return Err(Error::Dimension(format!("input dimension {n} is not a multiple of d_in = {}", ch.d_in)));
    }
    Ok(HermitianMatrix::symmetrized(&apply_raw(ch, input.matrix(), n / ch.d_in)))
}

fn check_state(rho: &CMat, what: &str) -> Result<()> {
    if hermiticity_defect(rho) > 1e-8 {
        return Err(Error::Validation(format!("{what} is not Hermitian")));
    }
    let m = linalg::min_eig(rho);
    if m < PSD_FLOOR {
        return Err(Error::Validation(format!("{what} is not PSD (min eigenvalue {m:.3e})")));
    }
    let t = rho.trace().re;
    if (t - 1.0).abs() > 1e-8 {
        return Err(Error::Validation(format!("{what} has trace {t}")));
    }
    Ok(())
}

/// `‖√ρ √σ‖₁` without input validation.
pub fn root_fidelity_unchecked(rho: &CMat, sigma: &CMat) -> f64 {
    linalg::trace_norm(&(linalg::psd_sqrt(rho) * linalg::psd_sqrt(sigma)))
}

/// `F(ρ, σ) = ‖√ρ √σ‖₁²`.
pub fn state_fidelity(rho: &CMat, sigma: &CMat) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::Dimension("fidelity of differently sized states".into()));
    }
    check_state(rho, "first state")?;
    check_state(sigma, "second state")?;
    Ok(root_fidelity_unchecked(rho, sigma).powi(2).clamp(0.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct FidelityReport {
    /// Certified worst-case fidelity (lower bound from the conic program).
    pub value: f64,
    /// Fidelity attained by the witness input (upper bound).
    pub upper: f64,
    /// Input attaining `upper`.
    pub witness: PureState,
    /// Fidelity of the normalised Choi states.
    pub choi_fidelity: f64,
    pub diagnostic: Option<String>,
}

/// Output fidelity of two channels on `ψ_ρ`.
pub fn input_fidelity(ch1: &Channel, ch2: &Channel, rho: &CMat) -> f64 {
    let s = kron(&linalg::psd_sqrt(rho), &eye(ch1.d_out));
    let a = &s * ch1.choi() * &s;
    let b = &s * ch2.choi() * &s;
    root_fidelity_unchecked(&a, &b).powi(2)
}

/// `min_ψ F(id⊗E₁(ψ), id⊗E₂(ψ))` over pure inputs with reference dimension
/// `d_in`.
pub fn worst_case_fidelity(ch1: &Channel, ch2: &Channel) -> Result<FidelityReport> {
    if ch1.dims() != ch2.dims() {
        return Err(Error::Dimension(format!("signatures {:?} and {:?} differ", ch1.dims(), ch2.dims())));
    }
    let (d, dout) = ch1.dims();
    let choi_fidelity = root_fidelity_unchecked(&ch1.choi_state(), &ch2.choi_state()).powi(2).min(1.0);

    if ch1.is_classical(1e-12) && ch2.is_classical(1e-12) {
        // phase-twirling both wires makes the optimal input a basis state
        let mut best = (f64::INFINITY, 0);
        for i in 0..d {
            let bc: f64 = (0..dout)
                .map(|a| {
                    let k = i * dout + a;
                    (ch1.choi()[(k, k)].re.max(0.0) * ch2.choi()[(k, k)].re.max(0.0)).sqrt()
                })
                .sum();
            if bc < best.0 {
                best = (bc, i);
            }
        }
        let f = best.0.min(1.0).powi(2);
        let mut amp = DVector::zeros(d * d);
        amp[best.1 * d + best.1] = c(1.0);
        return Ok(FidelityReport {
            value: f,
            upper: f,
            witness: PureState { dim_ref: d, dim_in: d, amplitudes: amp },
            choi_fidelity,
            diagnostic: None,
        });
    }

    let mut p = Program::maximize();
    let lam = p.scalar("lambda");
    // [[J₁, Y], [Y†, J₂]] ⪰ 0  ⇔  Y = V₁ K V₂†, ‖K‖ ≤ 1 with J_k = V_k V_k†;
    // the factored form keeps the program strictly feasible.
    let v1 = psd_factor(ch1.choi());
    let v2 = psd_factor(ch2.choi());
    let k = p.complex_matrix("K", v1.ncols(), v2.ncols());
    let ka = k.adjoint();
    let i1 = MatExpr::constant(&eye(v1.ncols()));
    let i2 = MatExpr::constant(&eye(v2.ncols()));
    p.add_psd(MatExpr::block(&[vec![Some(&i1), Some(&k)], vec![Some(&ka), Some(&i2)]]));
    let y = k.lmul(&v1).rmul(&v2.adjoint());
    let h = y.partial_trace(&[d, dout], &[false, true]).hermitian_part();
    let cid = p.add_psd(h.sub(&MatExpr::scalar_times(&lam, &eye(d))));
    p.set_objective(lam.clone());
    let sol = p.solve_with(&dynres_conic::Settings::from_env()).map_err(|e| Error::Validation(e.to_string()))?;
    if !sol.is_usable() {
        return Err(Error::solver(sol.status, "worst-case fidelity"));
    }
    let root = sol.value(&lam).clamp(0.0, 1.0);
    let lower = root * root;
    let mut rho = hermitize(&sol.dual_matrix(cid));
    rho = linalg::clamp_spectrum(&rho, 0.0, f64::INFINITY);
    let tr = rho.trace().re;
    rho = if tr > 1e-12 { rho / c(tr) } else { eye(d) / c(d as f64) };

    let mut best_rho = rho.clone();
    let mut upper = input_fidelity(ch1, ch2, &rho);
    if upper - lower > 1e-7 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut starts = vec![linalg::psd_sqrt(&rho), eye(d) / c((d as f64).sqrt())];
        starts.push(linalg::ginibre(d, d, &mut rng));
        for a0 in starts {
            let x0: Vec<f64> = a0.iter().flat_map(|z| [z.re, z.im]).collect();
            let obj = |x: &[f64]| {
                let r = rho_from_params(x, d);
                input_fidelity(ch1, ch2, &r)
            };
            let (x, v) = optim::nelder_mead(obj, &x0, 0.1, 400 * x0.len() as u64);
            if v < upper {
                upper = v;
                best_rho = rho_from_params(&x, d);
            }
            if upper - lower <= 1e-7 {
                break;
            }
        }
    }
    let diagnostic = if upper - lower > 1e-5 {
        let msg = format!("worst-case fidelity bounds differ: lower {lower:.8}, upper {upper:.8}");
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    };
    Ok(FidelityReport {
        value: lower.min(upper),
        upper,
        witness: PureState::purification(&best_rho),
        choi_fidelity,
        diagnostic,
    })
}

/// `V` with `V V† = M` and full column rank.
pub(crate) fn psd_factor(m: &CMat) -> CMat {
    let (vals, vecs) = eigh(m);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let cols: Vec<_> = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-12 * top.max(1e-300))
        .map(|(k, &v)| vecs.column(k) * c(v.sqrt()))
        .collect();
    if cols.is_empty() {
        return CMat::zeros(m.nrows(), 1);
    }
    CMat::from_columns(&cols)
}

pub(crate) fn rho_from_params(x: &[f64], d: usize) -> CMat {
    let a = CMat::from_fn(d, d, |i, j| {
        let k = 2 * (j * d + i);
        C64::new(x[k], x[k + 1])
    });
    let m = &a * a.adjoint();
    let t = m.trace().re.max(1e-300);
    m / c(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_choi_is_rank_one() {
        let id = Channel::identity(2);
        assert!((id.choi().trace().re - 2.0).abs() < 1e-12);
        assert!(id.is_pure_output(1e-12));
    }

    #[test]
    fn depolarizing_fidelity_formula() {
        let r = worst_case_fidelity(&Channel::identity(2), &Channel::depolarizing(2, 0.2)).unwrap();
        assert!((r.value - (1.0 - 0.75 * 0.2)).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn tensor_of_identities() {
        let id = Channel::identity(2).tensor(&Channel::identity(3));
        assert!((id.choi() - Channel::identity(6).choi()).norm() < 1e-12);
    }
}
