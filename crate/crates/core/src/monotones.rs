//! Resource monotones as conic programs: robustness (generalised and
//! standard), hypothesis-testing and min-relative-entropy measures with
//! their affine variants, the distillation-fidelity measure `G`, and
//! fidelity-smoothed robustness.
//!
//! Every program is written in Choi variables with the input state
//! parametrised by its reference marginal `ρ`, so that
//! `⟨P, id⊗L(ψ_ρ)⟩ = ⟨Q, J_L⟩` with `Q = (√ρ⊗I) P (√ρ⊗I)` and
//! `0 ⪯ Q ⪯ ρ⊗I`.

use crate::channelcore::{psd_factor, rho_from_params, worst_case_fidelity, Channel, HermitianMatrix, PureState};
use crate::error::{Error, Result};
use crate::freesets::{diag_expr, Exactness, FreeSetDescriptor};
use crate::linalg::{self, c, eye, kron, CMat};
use crate::optim;
use dynres_conic::{Dual, LinExpr, MatExpr, Program, Settings, Solution, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Values above this are reported as `+∞`.
pub const DIVERGENCE_CAP: f64 = 1e6;
/// Relative cutoff of the pseudo-inverse used to recover `P*` from `Q*`.
pub const PINV_CUTOFF: f64 = 1e-10;
const CUT_TOL: f64 = 1e-5;
const MAX_CUTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotoneKind {
    RMax,
    RS,
    /// `R_{O;Õ}` for an arbitrary intermediate set `Õ`.
    Robustness,
    RMin,
    RMinAff,
    RH,
    RHAff,
    G,
    GAff,
}

impl MonotoneKind {
    pub fn is_affine(self) -> bool {
        matches!(self, MonotoneKind::RMinAff | MonotoneKind::RHAff | MonotoneKind::GAff)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundDirection {
    Exact,
    /// The true value is at least the reported one.
    Lower,
    /// The true value is at most the reported one.
    Upper,
}

impl BoundDirection {
    pub(crate) fn from_exactness(e: Exactness) -> Self {
        match e {
            Exactness::Exact => BoundDirection::Exact,
            // every monotone here optimises against O; enlarging O moves
            // R and G down, shrinking it moves them up
            Exactness::OuterRelaxation => BoundDirection::Lower,
            Exactness::InnerApproximation => BoundDirection::Upper,
        }
    }

    pub fn combine(self, other: BoundDirection) -> Self {
        match (self, other) {
            (BoundDirection::Exact, o) | (o, BoundDirection::Exact) => o,
            (a, b) if a == b => a,
            // opposite directions: no certified side
            _ => BoundDirection::Lower,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundDirection::Exact => "exact",
            BoundDirection::Lower => "lower",
            BoundDirection::Upper => "upper",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothMetric {
    WorstCase,
    Choi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothMethod {
    /// One program; the worst-case constraint is encoded exactly.
    Exact,
    /// Input-state fidelity cuts added until the worst-case constraint holds.
    CuttingPlane,
}

#[derive(Clone, Copy, Debug)]
pub struct Options {
    /// Use diagonal (LP) variables when channel and free set are classical.
    pub classical_reduction: bool,
    pub settings: Settings,
}

impl Default for Options {
    fn default() -> Self {
        Options { classical_reduction: true, settings: Settings::from_env() }
    }
}

/// Optimal primal objects of a monotone program, as far as they exist.
#[derive(Clone, Debug, Default)]
pub struct Optimizers {
    /// Reference marginal `ρ*` of the optimal input.
    pub rho: Option<CMat>,
    pub input_state: Option<PureState>,
    /// `Q*` (or `W*`) in Choi-pairing form.
    pub q: Option<HermitianMatrix>,
    /// `P*` (or the effect built from `W*`), `0 ⪯ P ⪯ I`.
    pub effect: Option<HermitianMatrix>,
    /// Robustness decomposition channel `M` (mixed in with weight `r`).
    pub decomposition: Option<Channel>,
    /// Free channel `(E + r M)/(1 + r)`.
    pub free_point: Option<Channel>,
    pub weight: Option<f64>,
    /// Smoothed channel `E′`.
    pub smoothed: Option<Channel>,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub status: Status,
    pub iterations: usize,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub multipliers: Vec<Dual>,
}

impl Certificate {
    pub(crate) fn of(sol: &Solution) -> Self {
        Certificate {
            status: sol.status,
            iterations: sol.iterations,
            gap: sol.gap,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            multipliers: sol.duals.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonotoneResult {
    pub kind: MonotoneKind,
    pub value: f64,
    pub optimizers: Optimizers,
    pub certificate: Option<Certificate>,
    pub bound_direction: BoundDirection,
    /// Set when an iterative method stopped before meeting its tolerance.
    pub inaccurate: bool,
    pub notes: Vec<String>,
}

impl MonotoneResult {
    pub(crate) fn new(kind: MonotoneKind, value: f64, dir: BoundDirection) -> Self {
        MonotoneResult {
            kind,
            value,
            optimizers: Optimizers::default(),
            certificate: None,
            bound_direction: dir,
            inaccurate: false,
            notes: Vec::new(),
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

fn check_dims(ch: &Channel, desc: &FreeSetDescriptor) -> Result<()> {
    if ch.dims() != desc.dims() {
        return Err(Error::Dimension(format!(
            "channel signature {:?} does not match {} {:?}",
            ch.dims(),
            desc.name,
            desc.dims()
        )));
    }
    Ok(())
}

fn solve(p: &Program, opts: &Options, what: &str) -> Result<Solution> {
    let sol = p.solve_with(&opts.settings).map_err(|e| Error::Validation(e.to_string()))?;
    if sol.status == Status::Infeasible || sol.is_usable() {
        Ok(sol)
    } else {
        Err(Error::solver(sol.status, what))
    }
}

fn use_lp(ch: &Channel, desc: &FreeSetDescriptor, opts: &Options) -> bool {
    opts.classical_reduction && desc.is_classical() && ch.is_classical(1e-12)
}

/// Input-marginal and test-operator variables: either full Hermitian PSD
/// blocks or diagonal nonnegative vectors.
struct TestVars {
    rho: MatExpr,
    q: MatExpr,
}

fn test_vars(p: &mut Program, d_in: usize, d_out: usize, lp: bool) -> TestVars {
    let n = d_in * d_out;
    if lp {
        let r = p.nonneg("rho", d_in);
        let q = p.nonneg("q", n);
        for i in 0..d_in {
            for a in 0..d_out {
                p.add_ge(r[i].clone() - q[i * d_out + a].clone());
            }
        }
        p.add_eq(LinExpr::sum(&r) - 1.0);
        TestVars { rho: diag_expr(&r, d_in), q: diag_expr(&q, n) }
    } else {
        let rho = p.psd("rho", d_in);
        let q = p.psd("Q", n);
        p.add_psd(rho.kron_right(&eye(d_out)).sub(&q));
        p.add_eq(rho.trace().re() - 1.0);
        TestVars { rho, q }
    }
}

fn clean_density(m: &CMat) -> CMat {
    let r = linalg::clamp_spectrum(&linalg::hermitize(m), 0.0, f64::INFINITY);
    let t = r.trace().re;
    if t > 1e-14 {
        r / c(t)
    } else {
        eye(m.nrows()) / c(m.nrows() as f64)
    }
}

/// `P = (ρ^{-1/2}⊗I) Q (ρ^{-1/2}⊗I)` clamped to `[0, I]`.
pub fn effect_from_q(rho: &CMat, q: &CMat, d_out: usize) -> CMat {
    let s = kron(&linalg::pinv_sqrt(rho, PINV_CUTOFF), &eye(d_out));
    linalg::clamp_spectrum(&(&s * q * &s), 0.0, 1.0)
}

fn fill_test_optimizers(opt: &mut Optimizers, rho: CMat, q: CMat, d_out: usize) {
    let rho = clean_density(&rho);
    let q = linalg::hermitize(&q);
    opt.effect = Some(HermitianMatrix::symmetrized(&effect_from_q(&rho, &q, d_out)));
    opt.input_state = Some(PureState::purification(&rho));
    opt.q = Some(HermitianMatrix::symmetrized(&q));
    opt.rho = Some(rho);
}

// ---------------------------------------------------------------- robustness

pub fn r_max(ch: &Channel, o: &FreeSetDescriptor) -> Result<MonotoneResult> {
    let mut r = robustness(ch, o, &o.allowed())?;
    r.kind = MonotoneKind::RMax;
    Ok(r)
}

pub fn r_s(ch: &Channel, o: &FreeSetDescriptor) -> Result<MonotoneResult> {
    let mut r = robustness(ch, o, o)?;
    r.kind = MonotoneKind::RS;
    Ok(r)
}

/// `R_{O;Õ}(E) = min{1 + r : (E + r M)/(1 + r) ∈ O, M ∈ Õ}`.
pub fn robustness(ch: &Channel, o: &FreeSetDescriptor, o_tilde: &FreeSetDescriptor) -> Result<MonotoneResult> {
    robustness_with(ch, o, o_tilde, &Options::default())
}

pub fn robustness_with(
    ch: &Channel,
    o: &FreeSetDescriptor,
    o_tilde: &FreeSetDescriptor,
    opts: &Options,
) -> Result<MonotoneResult> {
    check_dims(ch, o)?;
    check_dims(ch, o_tilde)?;
    let mut p = Program::minimize();
    let j = MatExpr::constant(ch.choi());
    let parts = robustness_vars(&mut p, &j, o, o_tilde);
    p.set_objective(parts.t.clone());
    let sol = solve(&p, opts, "robustness")?;
    let dir = BoundDirection::from_exactness(o.exactness()).combine(BoundDirection::from_exactness(o_tilde.exactness()));
    let mut res = MonotoneResult::new(MonotoneKind::Robustness, f64::INFINITY, dir);
    if sol.status == Status::Infeasible {
        res.notes.push(format!("no decomposition with weight below {DIVERGENCE_CAP:e}"));
        return Ok(res);
    }
    let t = sol.value(&parts.t).max(1.0);
    res.value = if t >= DIVERGENCE_CAP * (1.0 - 1e-9) { f64::INFINITY } else { t };
    parts.fill(&sol, ch.d_in(), ch.d_out(), &mut res.optimizers);
    res.certificate = Some(Certificate::of(&sol));
    Ok(res)
}

struct RobustParts {
    t: LinExpr,
    f: MatExpr,
    x: MatExpr,
}

impl RobustParts {
    fn fill(&self, sol: &Solution, d_in: usize, d_out: usize, opt: &mut Optimizers) {
        let t = sol.value(&self.t).max(1.0);
        opt.weight = Some(t - 1.0);
        if let Ok(f) = Channel::repaired(d_in, d_out, &(sol.matrix(&self.f) / c(t))) {
            opt.free_point = Some(f);
        }
        if t - 1.0 > 1e-9 {
            if let Ok(m) = Channel::repaired(d_in, d_out, &(sol.matrix(&self.x) / c(t - 1.0))) {
                opt.decomposition = Some(m);
            }
        }
    }
}

/// `J + X = F` with `F ∈ t·O`, `X ∈ (t − 1)·Õ`, `1 ≤ t ≤ cap`.
fn robustness_vars(p: &mut Program, j: &MatExpr, o: &FreeSetDescriptor, o_tilde: &FreeSetDescriptor) -> RobustParts {
    let t = p.scalar("t");
    p.add_ge(t.clone() - 1.0);
    p.add_le(t.clone(), LinExpr::constant(DIVERGENCE_CAP));
    let f = o.member(p, &t);
    let x = o_tilde.member(p, &(t.clone() - 1.0));
    p.add_herm_eq(j.add(&x).sub(&f));
    RobustParts { t, f, x }
}

// ------------------------------------------------------- hypothesis testing

/// `R_H^ε` (or its affine variant) through the single-program minimax
/// form `min_ρ {λ : sup_O ⟨Q, J_M⟩ ≤ λ, 0 ⪯ Q ⪯ ρ⊗I, ⟨Q, J_E⟩ ≥ 1 − ε}`,
/// value `1/λ`.
pub fn hypothesis_testing(ch: &Channel, desc: &FreeSetDescriptor, eps: f64, affine: bool) -> Result<MonotoneResult> {
    hypothesis_testing_with(ch, desc, eps, affine, &Options::default())
}

pub fn hypothesis_testing_with(
    ch: &Channel,
    desc: &FreeSetDescriptor,
    eps: f64,
    affine: bool,
    opts: &Options,
) -> Result<MonotoneResult> {
    check_dims(ch, desc)?;
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Validation(format!("ε = {eps} outside [0, 1)")));
    }
    let kind = if affine { MonotoneKind::RHAff } else { MonotoneKind::RH };
    let dir = BoundDirection::from_exactness(desc.exactness());
    let (d_in, d_out) = ch.dims();
    let lp = use_lp(ch, desc, opts);

    if eps == 0.0 {
        return min_entropy_exact(ch, desc, affine, kind, dir, opts);
    }

    let mut p = Program::minimize();
    let lam = p.scalar("lambda");
    let v = test_vars(&mut p, d_in, d_out, lp);
    p.add_ge(v.q.inner(ch.choi()) - (1.0 - eps));
    if affine {
        desc.affine_constraints(&mut p, &v.q, &lam)?;
    } else {
        desc.support_le(&mut p, &v.q, &lam)?;
    }
    p.set_objective(lam.clone());
    let sol = solve(&p, opts, "hypothesis testing")?;
    if sol.status == Status::Infeasible {
        // cannot happen for ε < 1 (Q = (1 − ε)ρ⊗I is feasible)
        return Err(Error::solver(sol.status, "hypothesis testing"));
    }
    let l = sol.value(&lam);
    let mut res = MonotoneResult::new(kind, value_of_inverse(l), dir);
    fill_test_optimizers(&mut res.optimizers, sol.matrix(&v.rho), sol.matrix(&v.q), d_out);
    res.certificate = Some(Certificate::of(&sol));
    Ok(res)
}

/// Outcome of the max–min evaluation of `1/R_H^ε` by cutting planes.
#[derive(Clone, Debug)]
pub struct MinimaxReport {
    /// `R_H^ε` read off the best free channel found.
    pub value: f64,
    /// Bracket `[1/upper_inverse, 1/lower_inverse]` on `R_H^ε`.
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `1/R_H^ε = max_{M ∈ O} min_{ρ, Q} ⟨Q, J_M⟩` evaluated as an explicit
/// max–min: the inner test problem is solved for fixed `M`, and the outer
/// concave maximisation runs Kelley's method on the inner optimal tests
/// (each `Q_k` is a supergradient at `M_k`). Independent of the single
/// program used by [`hypothesis_testing`].
pub fn hypothesis_testing_minimax(
    ch: &Channel,
    desc: &FreeSetDescriptor,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<MinimaxReport> {
    check_dims(ch, desc)?;
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Validation(format!("ε = {eps} outside [0, 1)")));
    }
    let opts = Options { classical_reduction: false, ..Options::default() };
    let (d_in, d_out) = ch.dims();
    let inner = |jm: &CMat| -> Result<(f64, CMat)> {
        let mut p = Program::minimize();
        let v = test_vars(&mut p, d_in, d_out, false);
        p.add_ge(v.q.inner(ch.choi()) - (1.0 - eps));
        p.set_objective(v.q.inner(jm));
        let sol = solve(&p, &opts, "minimax inner test")?;
        Ok((sol.objective, linalg::hermitize(&sol.matrix(&v.q))))
    };
    let start = desc
        .slater_point()
        .cloned()
        .or_else(|| desc.generators().and_then(|g| g.first().cloned()))
        .ok_or_else(|| Error::Unsupported(format!("{} has no interior point to start from", desc.name)))?;
    let (mut best, q0) = inner(&start)?;
    let mut cuts = vec![q0];
    let mut upper = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut p = Program::maximize();
        let s = p.scalar("s");
        let m = desc.member(&mut p, &LinExpr::constant(1.0));
        for q in &cuts {
            p.add_ge(m.inner(q) - s.clone());
        }
        p.add_le(s.clone(), LinExpr::constant(1.0));
        p.set_objective(s.clone());
        let sol = solve(&p, &opts, "minimax master")?;
        upper = upper.min(sol.value(&s));
        let jm = linalg::hermitize(&sol.matrix(&m));
        let (f, q) = inner(&jm)?;
        best = best.max(f);
        if upper - best <= tol {
            converged = true;
            break;
        }
        cuts.push(q);
    }
    Ok(MinimaxReport {
        value: value_of_inverse(best),
        lower: value_of_inverse(upper),
        upper: value_of_inverse(best),
        iterations,
        converged,
    })
}

fn value_of_inverse(l: f64) -> f64 {
    if l <= 1.0 / DIVERGENCE_CAP {
        f64::INFINITY
    } else {
        (1.0 / l).max(1.0)
    }
}

/// ε = 0: `⟨ρ⊗I − Q, J_E⟩ = 0` with `ρ⊗I − Q ⪰ 0` confines `ρ⊗I − Q` to the
/// kernel of `J_E`; substituting `ρ⊗I − Q = K S K†` keeps the program
/// strictly feasible.
fn min_entropy_exact(
    ch: &Channel,
    desc: &FreeSetDescriptor,
    affine: bool,
    kind: MonotoneKind,
    dir: BoundDirection,
    opts: &Options,
) -> Result<MonotoneResult> {
    let (d_in, d_out) = ch.dims();
    let n = d_in * d_out;
    let (vals, vecs) = linalg::eigh(ch.choi());
    let top = vals.last().copied().unwrap_or(1.0);
    let kernel: Vec<usize> = (0..n).filter(|&k| vals[k] <= 1e-9 * top).collect();
    if kernel.is_empty() {
        // full-rank Choi: Q = ρ⊗I is forced and every TP member gives 1
        let mut res = MonotoneResult::new(kind, 1.0, dir);
        let rho = eye(d_in) / c(d_in as f64);
        let q = kron(&rho, &eye(d_out));
        fill_test_optimizers(&mut res.optimizers, rho, q, d_out);
        res.notes.push("full-rank Choi matrix".into());
        return Ok(res);
    }
    let lp = use_lp(ch, desc, opts);
    let mut p = Program::minimize();
    let lam = p.scalar("lambda");
    let (rho, q) = if lp {
        let r = p.nonneg("rho", d_in);
        p.add_eq(LinExpr::sum(&r) - 1.0);
        let mut qs = Vec::with_capacity(n);
        // kernel of a diagonal Choi = zero diagonal entries
        let zero: Vec<bool> = (0..n).map(|k| ch.choi()[(k, k)].re <= 1e-9 * top).collect();
        let s = p.nonneg("s", n);
        for k in 0..n {
            let i = k / d_out;
            if zero[k] {
                let e = r[i].clone() - s[k].clone();
                p.add_ge(e.clone());
                qs.push(e);
            } else {
                p.add_eq(s[k].clone());
                qs.push(r[i].clone());
            }
        }
        let rho = diag_expr(&r, d_in);
        let q = MatExpr::from_fn(n, n, |a, b| {
            if a == b {
                dynres_conic::CExpr::real(&qs[a])
            } else {
                dynres_conic::CExpr::default()
            }
        });
        (rho, q)
    } else {
        let kmat = CMat::from_columns(&kernel.iter().map(|&k| vecs.column(k).clone_owned()).collect::<Vec<_>>());
        let rho = p.psd("rho", d_in);
        p.add_eq(rho.trace().re() - 1.0);
        let s = p.psd("S", kernel.len());
        let q = rho.kron_right(&eye(d_out)).sub(&s.lmul(&kmat).rmul(&kmat.adjoint()));
        p.add_psd(q.clone());
        (rho, q)
    };
    if affine {
        desc.affine_constraints(&mut p, &q, &lam)?;
    } else {
        desc.support_le(&mut p, &q, &lam)?;
    }
    p.set_objective(lam.clone());
    let sol = solve(&p, opts, "min-relative entropy")?;
    if sol.status == Status::Infeasible {
        return Err(Error::solver(sol.status, "min-relative entropy"));
    }
    let mut res = MonotoneResult::new(kind, value_of_inverse(sol.value(&lam)), dir);
    fill_test_optimizers(&mut res.optimizers, sol.matrix(&rho), sol.matrix(&q), d_out);
    res.certificate = Some(Certificate::of(&sol));
    Ok(res)
}

// ------------------------------------------------------ min-relative entropy

/// `R_min` (= `R_H^0`) or `R_{min,aff}`.
///
/// The affine variant constrains the support projector of the output itself
/// (`⟨Π_{id⊗E(ψ)}, id⊗M(ψ)⟩ = λ ∀M`), which is not convex in `ψ`; it is
/// minimised by an augmented-Lagrangian multistart search over `ρ`. An empty
/// feasible set gives 0 and `λ = 0` gives `+∞`.
pub fn min_relative_entropy(ch: &Channel, desc: &FreeSetDescriptor, affine: bool) -> Result<MonotoneResult> {
    min_relative_entropy_with(ch, desc, affine, &Options::default())
}

pub fn min_relative_entropy_with(
    ch: &Channel,
    desc: &FreeSetDescriptor,
    affine: bool,
    opts: &Options,
) -> Result<MonotoneResult> {
    if !affine {
        let mut r = hypothesis_testing_with(ch, desc, 0.0, false, opts)?;
        r.kind = MonotoneKind::RMin;
        return Ok(r);
    }
    check_dims(ch, desc)?;
    let mut notes = Vec::new();
    if !ch.is_pure_output(1e-9) {
        let msg = "channel is not pure-output; using the support-projector form".to_string();
        log::warn!("{msg}");
        notes.push(msg);
    }
    let aff = desc.affine_basis()?;
    let (d_in, d_out) = ch.dims();
    let j = ch.choi().clone();
    let q_of = |rho: &CMat| projector_q(&j, rho, d_out);
    let lam_of = |q: &CMat| linalg::inner(q, &aff.base);
    let cons_of = |q: &CMat| aff.directions.iter().map(|dk| linalg::inner(q, dk)).collect::<Vec<f64>>();
    let dir = BoundDirection::from_exactness(desc.exactness());

    let mut best: Option<(f64, CMat)> = None;
    if d_in == 1 {
        let rho = eye(1);
        let q = q_of(&rho);
        if cons_of(&q).iter().all(|v| v.abs() <= 1e-7) {
            best = Some((lam_of(&q), rho));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xa11e);
        let mut starts = vec![eye(d_in)];
        for _ in 0..6 {
            starts.push(linalg::ginibre(d_in, d_in, &mut rng));
        }
        for a0 in starts {
            let x0: Vec<f64> = a0.iter().flat_map(|z| [z.re, z.im]).collect();
            let f_lam = |x: &[f64]| lam_of(&q_of(&rho_from_params(x, d_in)));
            let f_con = |x: &[f64]| cons_of(&q_of(&rho_from_params(x, d_in)));
            if let Some(x) = augmented_lagrangian(&f_lam, &f_con, &x0) {
                let rho = rho_from_params(&x, d_in);
                let l = f_lam(&x);
                if best.as_ref().is_none_or(|b| l < b.0) {
                    best = Some((l, rho));
                }
            }
        }
    }
    let mut res = MonotoneResult::new(MonotoneKind::RMinAff, 0.0, dir);
    res.notes = notes;
    match best {
        None => res.notes.push("no input satisfies the affine constraints".into()),
        Some((l, rho)) => {
            res.value = if l <= 1.0 / DIVERGENCE_CAP { f64::INFINITY } else { 1.0 / l };
            let q = q_of(&rho);
            fill_test_optimizers(&mut res.optimizers, rho, q, d_out);
        }
    }
    res.notes.push("nonconvex multistart search".into());
    Ok(res)
}

/// `(√ρ⊗I) Π (√ρ⊗I)` with `Π` the support projector of `(√ρ⊗I) J (√ρ⊗I)`.
fn projector_q(j: &CMat, rho: &CMat, d_out: usize) -> CMat {
    let s = kron(&linalg::psd_sqrt(rho), &eye(d_out));
    let out = &s * j * &s;
    let (vals, vecs) = linalg::eigh(&out);
    let top = vals.last().copied().unwrap_or(0.0).max(1e-300);
    let mut pi = CMat::zeros(out.nrows(), out.nrows());
    for (k, &v) in vals.iter().enumerate() {
        if v > 1e-9 * top {
            let col = vecs.column(k);
            pi += &col * col.adjoint();
        }
    }
    &s * pi * &s
}

/// Minimises `f` subject to `g(x) = 0`; returns a point with
/// `max |g| ≤ 1e-9` or `None`.
fn augmented_lagrangian(f: &dyn Fn(&[f64]) -> f64, g: &dyn Fn(&[f64]) -> Vec<f64>, x0: &[f64]) -> Option<Vec<f64>> {
    let m = g(x0).len();
    let mut mu = vec![0.0; m];
    let mut pen = 10.0;
    let mut x = x0.to_vec();
    let viol = |x: &[f64]| g(x).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut last = viol(&x);
    for _ in 0..40 {
        let obj = |y: &[f64]| {
            let gv = g(y);
            f(y) + gv.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() + 0.5 * pen * gv.iter().map(|a| a * a).sum::<f64>()
        };
        let (y, _) = optim::lbfgs(obj, &x, 300);
        let (y, _) = optim::nelder_mead(obj, &y, 1e-3, 200 * y.len() as u64);
        x = y;
        let gv = g(&x);
        for (u, v) in mu.iter_mut().zip(&gv) {
            *u += pen * v;
        }
        let v = viol(&x);
        if v < 1e-8 {
            break;
        }
        if v > 0.25 * last {
            pen *= 4.0;
        }
        last = v;
    }
    // Gauss–Newton projection onto g = 0
    for _ in 0..30 {
        let gv = g(&x);
        let v = gv.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if v < 1e-13 {
            break;
        }
        let n = x.len();
        let mut jac = nalgebra::DMatrix::<f64>::zeros(m, n);
        let mut y = x.clone();
        for k in 0..n {
            let h = 1e-7 * (1.0 + x[k].abs());
            y[k] = x[k] + h;
            let gp = g(&y);
            y[k] = x[k] - h;
            let gm = g(&y);
            y[k] = x[k];
            for r in 0..m {
                jac[(r, k)] = (gp[r] - gm[r]) / (2.0 * h);
            }
        }
        let Ok(pinv) = jac.pseudo_inverse(1e-10) else { break };
        let step = pinv * nalgebra::DVector::from_vec(gv);
        for k in 0..n {
            x[k] -= step[k];
        }
    }
    (viol(&x) <= 1e-9).then_some(x)
}

// ------------------------------------------------------------------ G measure

/// `G(E; m) = max_ρ {⟨W, J_E⟩ : 0 ⪯ W ⪯ ρ⊗I, sup_O ⟨W, J_M⟩ ≤ 1/m}`, or its
/// affine variant with `⟨W, J_M⟩ = 1/m` for all `M ∈ O` (0 when infeasible).
pub fn g_measure(ch: &Channel, desc: &FreeSetDescriptor, m: f64, affine: bool) -> Result<MonotoneResult> {
    g_measure_with(ch, desc, m, affine, &Options::default())
}

pub fn g_measure_with(
    ch: &Channel,
    desc: &FreeSetDescriptor,
    m: f64,
    affine: bool,
    opts: &Options,
) -> Result<MonotoneResult> {
    check_dims(ch, desc)?;
    if m.is_nan() || m <= 0.0 {
        return Err(Error::Validation(format!("G measure needs m > 0, got {m}")));
    }
    let kind = if affine { MonotoneKind::GAff } else { MonotoneKind::G };
    let dir = BoundDirection::from_exactness(desc.exactness());
    let (d_in, d_out) = ch.dims();
    let lp = use_lp(ch, desc, opts);
    let inv = if m.is_infinite() { 0.0 } else { 1.0 / m };
    let mut p = Program::maximize();
    let v = test_vars(&mut p, d_in, d_out, lp);
    let bound = LinExpr::constant(inv);
    if affine {
        desc.affine_constraints(&mut p, &v.q, &bound)?;
    } else {
        desc.support_le(&mut p, &v.q, &bound)?;
    }
    p.set_objective(v.q.inner(ch.choi()));
    let sol = solve(&p, opts, "G measure")?;
    let mut res = MonotoneResult::new(kind, 0.0, dir);
    if sol.status == Status::Infeasible {
        res.notes.push("affine constraints admit no test operator".into());
        res.certificate = Some(Certificate::of(&sol));
        return Ok(res);
    }
    res.value = sol.objective.clamp(0.0, 1.0);
    fill_test_optimizers(&mut res.optimizers, sol.matrix(&v.rho), sol.matrix(&v.q), d_out);
    res.certificate = Some(Certificate::of(&sol));
    Ok(res)
}

// ------------------------------------------------------------------ smoothing

/// Smoothed robustness `min{R(E′) : F(E′, E) ≥ 1 − ε, E′ ∈ O_all}` for
/// `kind ∈ {RMax, RS}`.
pub fn smooth(
    kind: MonotoneKind,
    ch: &Channel,
    desc: &FreeSetDescriptor,
    eps: f64,
    metric: SmoothMetric,
) -> Result<MonotoneResult> {
    let o_tilde = match kind {
        MonotoneKind::RMax => desc.allowed(),
        MonotoneKind::RS => desc.clone(),
        other => {
            return Err(Error::Unsupported(format!(
                "smoothing is implemented for robustness measures only, not {other:?}"
            )))
        }
    };
    let mut r = smooth_robustness(ch, desc, &o_tilde, eps, metric, SmoothMethod::Exact, &Options::default())?;
    r.kind = kind;
    Ok(r)
}

pub fn smooth_robustness(
    ch: &Channel,
    o: &FreeSetDescriptor,
    o_tilde: &FreeSetDescriptor,
    eps: f64,
    metric: SmoothMetric,
    method: SmoothMethod,
    opts: &Options,
) -> Result<MonotoneResult> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Validation(format!("ε = {eps} outside [0, 1)")));
    }
    if eps == 0.0 {
        let mut r = robustness_with(ch, o, o_tilde, opts)?;
        r.optimizers.smoothed = Some(ch.clone());
        return Ok(r);
    }
    check_dims(ch, o)?;
    let all = o.allowed();
    let (d_in, d_out) = ch.dims();
    let lp = opts.classical_reduction && all.is_classical() && ch.is_classical(1e-12);
    let root = (1.0 - eps).sqrt();
    let dir = BoundDirection::from_exactness(o.exactness()).combine(BoundDirection::from_exactness(o_tilde.exactness()));

    let build = |cuts: &[CMat]| -> (Program, MatExpr, RobustParts) {
        let mut p = Program::minimize();
        let jp = all.member(&mut p, &LinExpr::constant(1.0));
        let parts = robustness_vars(&mut p, &jp, o, o_tilde);
        p.set_objective(parts.t.clone());
        if lp {
            classical_fidelity_cut(&mut p, &jp, ch, root, metric, method == SmoothMethod::CuttingPlane, cuts);
        } else if method == SmoothMethod::Exact || metric == SmoothMetric::Choi {
            let v = psd_factor(ch.choi());
            let z = fidelity_block(&mut p, &jp, &v);
            let tz = z.partial_trace(&[d_in, d_out], &[false, true]);
            match metric {
                SmoothMetric::WorstCase => {
                    p.add_psd(tz.sub(&MatExpr::constant(&(eye(d_in) * c(root)))));
                }
                SmoothMetric::Choi => {
                    p.add_ge(tz.trace().re() - d_in as f64 * root);
                }
            }
        } else {
            for rho in cuts {
                let s = kron(&linalg::psd_sqrt(rho), &eye(d_out));
                let vk = psd_factor(&(&s * ch.choi() * &s));
                let a = jp.sandwich(&s, &s);
                let y = fidelity_block(&mut p, &a, &vk);
                p.add_ge(y.trace().re() - root);
            }
        }
        (p, jp, parts)
    };

    let cutting = method == SmoothMethod::CuttingPlane && metric == SmoothMetric::WorstCase;
    let mut cuts = vec![eye(d_in) / c(d_in as f64)];
    let mut inaccurate = false;
    let mut iterations = 0;
    let (sol, jp, parts) = loop {
        iterations += 1;
        let (p, jp, parts) = build(&cuts);
        let sol = solve(&p, opts, "smoothed robustness")?;
        if sol.status == Status::Infeasible || !cutting {
            break (sol, jp, parts);
        }
        let cand = Channel::repaired(d_in, d_out, &sol.matrix(&jp))?;
        let rep = worst_case_fidelity(&cand, ch)?;
        if rep.value >= 1.0 - eps - CUT_TOL {
            break (sol, jp, parts);
        }
        if iterations >= MAX_CUTS {
            inaccurate = true;
            break (sol, jp, parts);
        }
        cuts.push(rep.witness.reference_marginal());
    };

    let mut res = MonotoneResult::new(MonotoneKind::Robustness, f64::INFINITY, dir);
    res.inaccurate = inaccurate;
    if cutting {
        res.notes.push(format!("cutting-plane iterations: {iterations}"));
    }
    if sol.status == Status::Infeasible {
        return Ok(res);
    }
    let t = sol.value(&parts.t).max(1.0);
    res.value = if t >= DIVERGENCE_CAP * (1.0 - 1e-9) { f64::INFINITY } else { t };
    parts.fill(&sol, d_in, d_out, &mut res.optimizers);
    res.optimizers.smoothed = Some(Channel::repaired(d_in, d_out, &sol.matrix(&jp))?);
    res.certificate = Some(Certificate::of(&sol));
    Ok(res)
}

/// Returns `Z = V W` with `[[A, Z†], [Z, V V†]] ⪰ 0`, via the reduced block
/// `[[A, W†], [W, I]] ⪰ 0`.
fn fidelity_block(p: &mut Program, a: &MatExpr, v: &CMat) -> MatExpr {
    let r = v.ncols();
    let w = p.complex_matrix("W", r, a.nrows());
    let wa = w.adjoint();
    let id = MatExpr::constant(&eye(r));
    p.add_psd(MatExpr::block(&[vec![Some(a), Some(&wa)], vec![Some(&w), Some(&id)]]));
    w.lmul(v)
}

/// Diagonal channels: `z_k² ≤ j′_k e_k` (2×2 blocks) with per-input sums
/// `Σ_a z_{(i,a)} ≥ √(1−ε)` (worst case) or a total `≥ d_in √(1−ε)` (Choi).
/// With `cutting` set, only the inputs listed in `cuts` (basis-diagonal
/// marginals) are constrained.
fn classical_fidelity_cut(
    p: &mut Program,
    jp: &MatExpr,
    ch: &Channel,
    root: f64,
    metric: SmoothMetric,
    cutting: bool,
    cuts: &[CMat],
) {
    let (d_in, d_out) = ch.dims();
    let n = d_in * d_out;
    let z = p.nonneg("z", n);
    for k in 0..n {
        let e = ch.choi()[(k, k)].re.max(0.0);
        if e <= 0.0 {
            p.add_eq(z[k].clone());
            continue;
        }
        let jk = jp.get(k, k).re();
        let blk = MatExpr::from_fn(2, 2, |a, b| match (a, b) {
            (0, 0) => dynres_conic::CExpr::real(&jk),
            (1, 1) => dynres_conic::CExpr::constant(c(e)),
            _ => dynres_conic::CExpr::real(&z[k]),
        });
        p.add_psd(blk);
    }
    let row = |i: usize| LinExpr::sum(&z[i * d_out..(i + 1) * d_out]);
    match metric {
        SmoothMetric::Choi => {
            p.add_ge(LinExpr::sum(&z) - d_in as f64 * root);
        }
        SmoothMetric::WorstCase if cutting => {
            for rho in cuts {
                let mut e = LinExpr::constant(-root);
                for i in 0..d_in {
                    e.add_scaled(&row(i), rho[(i, i)].re);
                }
                p.add_ge(e);
            }
        }
        SmoothMetric::WorstCase => {
            for i in 0..d_in {
                p.add_ge(row(i) - root);
            }
        }
    }
}

/// Dispatch by kind with default options (`m` is used by `G` only).
pub fn compute(
    kind: MonotoneKind,
    ch: &Channel,
    desc: &FreeSetDescriptor,
    eps: f64,
    m: f64,
) -> Result<MonotoneResult> {
    match kind {
        MonotoneKind::RMax if eps > 0.0 => smooth(kind, ch, desc, eps, SmoothMetric::WorstCase),
        MonotoneKind::RS if eps > 0.0 => smooth(kind, ch, desc, eps, SmoothMetric::WorstCase),
        MonotoneKind::RMax => r_max(ch, desc),
        MonotoneKind::RS => r_s(ch, desc),
        MonotoneKind::Robustness => Err(Error::Unsupported("general robustness needs an explicit intermediate set".into())),
        MonotoneKind::RMin => min_relative_entropy(ch, desc, false),
        MonotoneKind::RMinAff => min_relative_entropy(ch, desc, true),
        MonotoneKind::RH => hypothesis_testing(ch, desc, eps, false),
        MonotoneKind::RHAff => hypothesis_testing(ch, desc, eps, true),
        MonotoneKind::G => g_measure(ch, desc, m, false),
        MonotoneKind::GAff => g_measure(ch, desc, m, true),
    }
}
