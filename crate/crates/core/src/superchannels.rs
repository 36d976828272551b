//! Superchannels and the explicit free transformations.
//!
//! Two forms are supported: the general form `Θ(L) = post ∘ (L ⊗ id_mem) ∘
//! pre` and the measure-and-prepare form
//! `Θ(L) = ⟨P, id⊗L(ψ)⟩ A + ⟨I − P, id⊗L(ψ)⟩ B`, which is what the
//! achievability constructions produce: `ψ, P` come from the
//! hypothesis-testing program of the source and `A, B` from the smoothed
//! robustness decomposition of the target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channelcore::{worst_case_fidelity, Channel, HermitianMatrix, PureState};
use crate::error::{Error, Result};
use crate::freesets::{Exactness, FreeSetDescriptor};
use crate::linalg::{self, c, eye, kron, CMat};
use crate::monotones::{self, Options, SmoothMethod, SmoothMetric};
use crate::scenarios::Scenario;
use dynres_conic::{LinExpr, Program};

/// Trace-distance slack allowed when checking that outputs are free.
pub const FREENESS_TOL: f64 = 1e-6;
const EFFECT_TOL: f64 = 1e-9;
const PRECONDITION_RTOL: f64 = 1e-6;
const PURITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Hypothesis testing against `O`, standard robustness of the target.
    Standard,
    /// Hypothesis testing against `aff(O)`, generalised robustness of the target.
    Affine,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Standard => "standard",
            Route::Affine => "affine",
        }
    }
}

/// Which fidelity guarantee a construction carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guarantee {
    /// `1 − ε − 2δ` for arbitrary targets.
    General,
    /// `1 − ε − δ` for pure-output targets.
    PureOutput,
}

#[derive(Clone, Debug)]
pub enum Form {
    General {
        /// `in′ → in ⊗ mem`.
        pre: Channel,
        /// `out ⊗ mem → out′`.
        post: Channel,
        memory: usize,
    },
    MeasurePrepare {
        input_state: PureState,
        /// Effect on `ref ⊗ out`, `0 ⪯ P ⪯ I`.
        effect: HermitianMatrix,
        /// Prepared on outcome `P`.
        accept: Channel,
        /// Prepared on outcome `I − P`.
        reject: Channel,
    },
}

#[derive(Clone, Debug)]
pub struct Superchannel {
    form: Form,
    input: (usize, usize),
    output: (usize, usize),
}

impl Superchannel {
    pub fn identity(d_in: usize, d_out: usize) -> Self {
        Superchannel {
            form: Form::General { pre: Channel::identity(d_in), post: Channel::identity(d_out), memory: 1 },
            input: (d_in, d_out),
            output: (d_in, d_out),
        }
    }

    pub fn general(pre: Channel, post: Channel, memory: usize) -> Result<Self> {
        if memory == 0 || pre.d_out() % memory != 0 || post.d_in() % memory != 0 {
            return Err(Error::Dimension(format!(
                "memory dimension {memory} does not divide pre output {} and post input {}",
                pre.d_out(),
                post.d_in()
            )));
        }
        // valid pre/post channels make the induced map CPTP-preserving
        let input = (pre.d_out() / memory, post.d_in() / memory);
        let output = (pre.d_in(), post.d_out());
        Ok(Superchannel { form: Form::General { pre, post, memory }, input, output })
    }

    pub fn pre_post(pre: Channel, post: Channel) -> Result<Self> {
        Superchannel::general(pre, post, 1)
    }

    pub fn measure_prepare(input_state: PureState, effect: HermitianMatrix, accept: Channel, reject: Channel) -> Result<Self> {
        if accept.dims() != reject.dims() {
            return Err(Error::Dimension(format!(
                "prepared channels have signatures {:?} and {:?}",
                accept.dims(),
                reject.dims()
            )));
        }
        let n = effect.dim();
        if n % input_state.dim_ref != 0 {
            return Err(Error::Dimension(format!(
                "effect dimension {n} is not a multiple of the reference dimension {}",
                input_state.dim_ref
            )));
        }
        let eig = effect.eigenvalues();
        let (lo, hi) = (eig.first().copied().unwrap_or(0.0), eig.last().copied().unwrap_or(0.0));
        if lo < -EFFECT_TOL || hi > 1.0 + EFFECT_TOL {
            return Err(Error::Validation(format!("effect spectrum [{lo:.3e}, {hi:.3e}] leaves [0, 1]")));
        }
        let input = (input_state.dim_in, n / input_state.dim_ref);
        let output = accept.dims();
        Ok(Superchannel { form: Form::MeasurePrepare { input_state, effect, accept, reject }, input, output })
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    /// `(d_in, d_out)` of the channels Θ accepts.
    pub fn input_signature(&self) -> (usize, usize) {
        self.input
    }

    pub fn output_signature(&self) -> (usize, usize) {
        self.output
    }

    /// For the measure-prepare form, the operator `B` on `in ⊗ out` with
    /// `⟨P, id⊗L(ψ)⟩ = ⟨B, J_L⟩`: `B = (A†⊗I) P (A⊗I)` where `ψ = (A⊗I)Σ|kk⟩`.
    pub fn pairing(&self) -> Option<CMat> {
        let Form::MeasurePrepare { input_state, effect, .. } = &self.form else {
            return None;
        };
        let (dr, di) = (input_state.dim_ref, input_state.dim_in);
        let a = CMat::from_fn(dr, di, |r, k| input_state.amplitudes[r * di + k]);
        let s = kron(&a, &eye(self.input.1));
        Some(linalg::hermitize(&(s.adjoint() * effect.matrix() * s)))
    }

    /// Weight `⟨P, id⊗L(ψ)⟩` of the accepting branch (measure-prepare form).
    pub fn acceptance(&self, l: &Channel) -> Result<f64> {
        self.check_input(l)?;
        let b = self.pairing().ok_or_else(|| Error::Unsupported("acceptance weight of a general-form superchannel".into()))?;
        Ok(linalg::inner(&b, l.choi()).clamp(0.0, 1.0))
    }

    fn check_input(&self, l: &Channel) -> Result<()> {
        if l.dims() != self.input {
            return Err(Error::Dimension(format!(
                "superchannel expects channels {:?}, got {:?}",
                self.input,
                l.dims()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, l: &Channel) -> Result<Channel> {
        self.check_input(l)?;
        match &self.form {
            Form::General { pre, post, memory } => pre.then(&l.tensor(&Channel::identity(*memory)))?.then(post),
            Form::MeasurePrepare { accept, reject, .. } => {
                let t = self.acceptance(l)?;
                mix_pair(t, accept, reject)
            }
        }
    }
}

/// `Θ(L)` as a Choi matrix-carrying channel.
pub fn apply_superchannel(theta: &Superchannel, l: &Channel) -> Result<Channel> {
    theta.apply(l)
}

fn mix_pair(t: f64, a: &Channel, b: &Channel) -> Result<Channel> {
    let t = t.clamp(0.0, 1.0);
    Channel::mix(&[(t, a), (1.0 - t, b)])
}

// ------------------------------------------------------------------ freeness

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Measure-prepare form: the image of `O` is the segment between the
    /// outputs at the extreme acceptance weights, both of which are checked.
    WeightRange,
    /// Every vertex of a polytope `O` is checked (convexity covers the rest).
    Generators,
    /// Random members only; passing is evidence, not proof.
    Sampled,
}

#[derive(Clone, Debug)]
pub struct FreenessReport {
    pub pass: bool,
    pub regime: Regime,
    pub checked: usize,
    /// Largest trace distance of an output to `O′`.
    pub worst_distance: f64,
    /// Range of the acceptance weight over `O` (measure-prepare form).
    pub weight_range: Option<(f64, f64)>,
    pub violating_input: Option<Channel>,
    pub violating_output: Option<Channel>,
    /// Separating functional of the worst output.
    pub witness: Option<HermitianMatrix>,
}

struct Probe {
    input: Channel,
    output: Channel,
}

/// Checks `Θ(M) ∈ O′` for `M ∈ O`; see [`Regime`] for what is covered.
pub fn verify_freeness(
    theta: &Superchannel,
    o: &FreeSetDescriptor,
    o_prime: &FreeSetDescriptor,
    n_samples: usize,
    seed: u64,
) -> Result<FreenessReport> {
    if theta.input_signature() != o.dims() || theta.output_signature() != o_prime.dims() {
        return Err(Error::Dimension(format!(
            "superchannel {:?} → {:?} does not map {} to {}",
            theta.input_signature(),
            theta.output_signature(),
            o.name,
            o_prime.name
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weight_range = None;
    let (regime, probes) = match (&theta.form, theta.pairing()) {
        (Form::MeasurePrepare { accept, reject, .. }, Some(b)) if o.exactness() != Exactness::InnerApproximation => {
            let (lo, hi) = weight_extremes(o, &b)?;
            weight_range = Some((lo.0, hi.0));
            let probes = [lo, hi]
                .into_iter()
                .map(|(t, m)| Ok(Probe { input: m, output: mix_pair(t, accept, reject)? }))
                .collect::<Result<Vec<_>>>()?;
            (Regime::WeightRange, probes)
        }
        _ => {
            let mut inputs = Vec::new();
            if let Some(g) = o.generators() {
                for v in g {
                    inputs.push(Channel::repaired(o.d_in(), o.d_out(), v)?);
                }
            }
            let regime = if o.is_polytope() && o.exactness() == Exactness::Exact {
                Regime::Generators
            } else {
                Regime::Sampled
            };
            inputs.extend(o.sample_members(n_samples, &mut rng)?);
            let probes = inputs
                .into_iter()
                .map(|m| Ok(Probe { output: theta.apply(&m)?, input: m }))
                .collect::<Result<Vec<_>>>()?;
            (regime, probes)
        }
    };

    let checks: Vec<_> = probes.par_iter().map(|p| o_prime.membership_check_tol(&p.output, FREENESS_TOL)).collect();
    let mut report = FreenessReport {
        pass: true,
        regime,
        checked: probes.len(),
        worst_distance: 0.0,
        weight_range,
        violating_input: None,
        violating_output: None,
        witness: None,
    };
    let mut worst = None;
    for (k, chk) in checks.into_iter().enumerate() {
        let m = chk?;
        if m.distance >= report.worst_distance {
            report.worst_distance = m.distance;
            worst = Some((k, m));
        }
    }
    if let Some((k, m)) = worst {
        if !m.member {
            report.pass = false;
            report.violating_input = Some(probes[k].input.clone());
            report.violating_output = Some(probes[k].output.clone());
            report.witness = m.witness;
        }
    }
    Ok(report)
}

/// `min` and `max` of `⟨B, J_M⟩` over `M ∈ O` with attaining members.
fn weight_extremes(o: &FreeSetDescriptor, b: &CMat) -> Result<((f64, Channel), (f64, Channel))> {
    let (d_in, d_out) = o.dims();
    if let (true, Some(g)) = (o.is_polytope(), o.generators()) {
        let vals: Vec<f64> = g.iter().map(|v| linalg::inner(b, v)).collect();
        let arg = |better: fn(f64, f64) -> bool| {
            (0..vals.len()).fold(0, |best, k| if better(vals[k], vals[best]) { k } else { best })
        };
        let (lo, hi) = (arg(|a, b| a < b), arg(|a, b| a > b));
        return Ok((
            (vals[lo], Channel::repaired(d_in, d_out, &g[lo])?),
            (vals[hi], Channel::repaired(d_in, d_out, &g[hi])?),
        ));
    }
    let extreme = |maximize: bool| -> Result<(f64, Channel)> {
        let mut p = if maximize { Program::maximize() } else { Program::minimize() };
        let m = o.member(&mut p, &LinExpr::constant(1.0));
        p.set_objective(m.inner(b));
        let sol = p.solve_with(&dynres_conic::Settings::from_env()).map_err(|e| Error::Validation(e.to_string()))?;
        if !sol.is_usable() {
            return Err(Error::solver(sol.status, format!("acceptance range over {}", o.name)));
        }
        Ok((sol.objective, Channel::repaired(d_in, d_out, &sol.matrix(&m))?))
    };
    Ok((extreme(false)?, extreme(true)?))
}

// -------------------------------------------------------------- construction

#[derive(Clone, Debug)]
pub struct ConstructOptions {
    /// Random members of `O` checked when freeness cannot be settled exactly.
    pub n_samples: usize,
    pub seed: u64,
    /// Record robustness values of source and output.
    pub ledger: bool,
    pub monotone: Options,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        ConstructOptions { n_samples: 8, seed: 0, ledger: true, monotone: Options::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub quantity: String,
    #[serde(with = "crate::io::num")]
    pub before: f64,
    #[serde(with = "crate::io::num")]
    pub after: f64,
}

#[derive(Clone, Debug)]
pub struct TransformationCertificate {
    pub guarantee: Guarantee,
    pub route: Route,
    pub fidelity_achieved: f64,
    pub fidelity_guarantee: f64,
    /// Hypothesis-testing value of the source (left side of the precondition).
    pub resource: f64,
    /// Smoothed robustness of the target (right side of the precondition).
    pub cost: f64,
    pub freeness: FreenessReport,
    pub ledger: Vec<LedgerEntry>,
    pub notes: Vec<String>,
}

impl TransformationCertificate {
    pub fn holds(&self) -> bool {
        self.freeness.pass && self.fidelity_achieved >= self.fidelity_guarantee - 1e-5
    }
}

#[derive(Clone, Debug)]
pub struct Transformation {
    pub superchannel: Superchannel,
    pub certificate: TransformationCertificate,
}

fn labels(route: Route, test_eps: f64, smooth_eps: f64) -> (String, String) {
    match route {
        Route::Standard => (format!("R_H^{test_eps}(E)"), format!("R_s^{smooth_eps}(N)")),
        Route::Affine => (format!("R_H,aff^{test_eps}(E)"), format!("R_max^{smooth_eps}(N)")),
    }
}

/// Free superchannel with `F(Θ(E), N) ≥ 1 − ε − 2δ`, built from the
/// `δ`-hypothesis-testing optimizers of `E` and the `ε`-smoothed target.
/// Requires `R_H^δ(E) ≥ R_s^ε(N)` (standard) or
/// `R_{H,aff}^δ(E) ≥ R_max^ε(N)` (affine), and `ε + 2δ < 1`.
pub fn construct_thm1(
    e: &Channel,
    n: &Channel,
    o: &FreeSetDescriptor,
    o_prime: &FreeSetDescriptor,
    eps: f64,
    delta: f64,
    route: Route,
) -> Result<Transformation> {
    construct_thm1_with(e, n, o, o_prime, eps, delta, route, &ConstructOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn construct_thm1_with(
    e: &Channel,
    n: &Channel,
    o: &FreeSetDescriptor,
    o_prime: &FreeSetDescriptor,
    eps: f64,
    delta: f64,
    route: Route,
    opts: &ConstructOptions,
) -> Result<Transformation> {
    if eps < 0.0 || delta < 0.0 || eps + 2.0 * delta >= 1.0 {
        return Err(Error::Validation(format!("need ε, δ ≥ 0 with ε + 2δ < 1 (ε = {eps}, δ = {delta})")));
    }
    build(e, n, o, o_prime, delta, eps, route, Guarantee::General, 1.0 - eps - 2.0 * delta, opts)
}

/// Pure-output targets: the `ε`-hypothesis-testing optimizers of `E` and the
/// `δ`-smoothed target give `F(Θ(E), N) ≥ 1 − ε − δ`.
pub fn construct_thm3(
    e: &Channel,
    n: &Channel,
    o: &FreeSetDescriptor,
    o_prime: &FreeSetDescriptor,
    eps: f64,
    delta: f64,
    route: Route,
) -> Result<Transformation> {
    construct_thm3_with(e, n, o, o_prime, eps, delta, route, &ConstructOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn construct_thm3_with(
    e: &Channel,
    n: &Channel,
    o: &FreeSetDescriptor,
    o_prime: &FreeSetDescriptor,
    eps: f64,
    delta: f64,
    route: Route,
    opts: &ConstructOptions,
) -> Result<Transformation> {
    if !n.is_pure_output(PURITY_TOL) {
        return Err(Error::Precondition(
            "target is not pure-output (rank-one Choi matrix); use construct_thm1 instead".into(),
        ));
    }
    if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&delta) {
        return Err(Error::Validation(format!("ε = {eps} and δ = {delta} must lie in [0, 1)")));
    }
    build(e, n, o, o_prime, eps, delta, route, Guarantee::PureOutput, 1.0 - eps - delta, opts)
}

#[allow(clippy::too_many_arguments)]
fn build(
    e: &Channel,
    n: &Channel,
    o: &FreeSetDescriptor,
    o_prime: &FreeSetDescriptor,
    test_eps: f64,
    smooth_eps: f64,
    route: Route,
    guarantee: Guarantee,
    fidelity_guarantee: f64,
    opts: &ConstructOptions,
) -> Result<Transformation> {
    for (ch, d, what) in [(e, o, "source"), (n, o_prime, "target")] {
        if ch.dims() != d.dims() {
            return Err(Error::Dimension(format!("{what} signature {:?} does not match {} {:?}", ch.dims(), d.name, d.dims())));
        }
    }
    let affine = route == Route::Affine;
    let rh = monotones::hypothesis_testing_with(e, o, test_eps, affine, &opts.monotone)?;
    let o_tilde = if affine { o_prime.allowed() } else { o_prime.clone() };
    let sm = monotones::smooth_robustness(n, o_prime, &o_tilde, smooth_eps, SmoothMetric::WorstCase, SmoothMethod::Exact, &opts.monotone)?;
    if sm.inaccurate {
        return Err(Error::Precondition("smoothed target did not converge; refusing to certify".into()));
    }
    let (resource, cost) = (rh.value, sm.value);
    let (lr, lc) = labels(route, test_eps, smooth_eps);
    if !cost.is_finite() || resource < cost * (1.0 - PRECONDITION_RTOL) {
        return Err(Error::Precondition(format!("{lr} = {resource} < {lc} = {cost}")));
    }

    let missing = |what: &str| Error::Precondition(format!("optimizer `{what}` unavailable"));
    let psi = rh.optimizers.input_state.clone().ok_or_else(|| missing("input state"))?;
    let effect = rh.optimizers.effect.clone().ok_or_else(|| missing("effect"))?;
    let target = sm.optimizers.smoothed.clone().unwrap_or_else(|| n.clone());
    let free = sm.optimizers.free_point.clone().ok_or_else(|| missing("free point"))?;
    let weight = sm.optimizers.weight.unwrap_or(0.0);
    let decomposition = sm.optimizers.decomposition.clone().filter(|_| weight > 1e-9);
    let reject = match (route, decomposition) {
        (_, None) => free,
        (Route::Standard, Some(q)) => q,
        // Ñ + (R − 1) Q = R F with R = resource, from Ñ + (R_max − 1) Q₀ = R_max F
        (Route::Affine, Some(q0)) if resource.is_finite() && resource - 1.0 > 1e-12 => {
            let a = (cost - 1.0).max(0.0);
            let b = (resource - cost).max(0.0);
            Channel::mix(&[(a / (a + b), &q0), (b / (a + b), &free)])?
        }
        (Route::Affine, Some(_)) => free,
    };

    let theta = Superchannel::measure_prepare(psi, effect, target, reject)?;
    let out = theta.apply(e)?;
    let fidelity_achieved = worst_case_fidelity(&out, n)?.value;
    let freeness = verify_freeness(&theta, o, o_prime, opts.n_samples, opts.seed)?;

    let mut ledger = vec![LedgerEntry { quantity: format!("{lr} vs {lc}"), before: resource, after: cost }];
    if opts.ledger {
        let a = monotones::robustness_with(e, o, &o.allowed(), &opts.monotone)?;
        let b = monotones::robustness_with(&out, o_prime, &o_prime.allowed(), &opts.monotone)?;
        ledger.push(LedgerEntry { quantity: "R_max".into(), before: a.value, after: b.value });
        let a = monotones::robustness_with(e, o, o, &opts.monotone)?;
        let b = monotones::robustness_with(&out, o_prime, o_prime, &opts.monotone)?;
        ledger.push(LedgerEntry { quantity: "R_s".into(), before: a.value, after: b.value });
    }
    let mut notes = vec!["optimal (P, ψ) taken as returned by the solver; any optimizer certifies".to_string()];
    for d in [o, o_prime] {
        if d.exactness() != Exactness::Exact {
            notes.push(format!("{} is not exact ({:?}); certificate holds relative to it", d.name, d.exactness()));
        }
    }
    notes.extend(rh.notes);
    notes.extend(sm.notes);
    Ok(Transformation {
        superchannel: theta,
        certificate: TransformationCertificate {
            guarantee,
            route,
            fidelity_achieved,
            fidelity_guarantee,
            resource,
            cost,
            freeness,
            ledger,
            notes,
        },
    })
}

// -------------------------------------------------------------------- random

fn random_stochastic(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let w: Vec<f64> = (0..cols).map(|_| rng.sample::<f64, _>(rand_distr::Exp1)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

fn random_channel(d_in: usize, d_out: usize, rank: usize, rng: &mut impl Rng) -> Result<Channel> {
    // an isometry into out ⊗ env needs d_out · rank ≥ d_in
    let rank = rank.max(d_in.div_ceil(d_out));
    crate::choi_of_kraus(&linalg::random_kraus(d_in, d_out, rank, rng), d_in, d_out)
}

/// Random general-form superchannel `(d_in, d_out) → (new_in, new_out)`
/// with a `memory`-dimensional side wire.
pub fn random_superchannel(
    (d_in, d_out): (usize, usize),
    (new_in, new_out): (usize, usize),
    memory: usize,
    rng: &mut impl Rng,
) -> Result<Superchannel> {
    let pre = random_channel(new_in, d_in * memory, 2, rng)?;
    let post = random_channel(d_out * memory, new_out, 2, rng)?;
    Superchannel::general(pre, post, memory)
}

/// Memoryless `post ∘ L ∘ pre` with random pre/post channels; free for
/// theories closed under composition (replacement, PPT, separable, all).
pub fn random_pre_post(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Superchannel> {
    Superchannel::pre_post(random_channel(d_in, d_in, 2, rng)?, random_channel(d_out, d_out, 2, rng)?)
}

/// Local classical wiring of a box: independent stochastic relabelling of
/// each party's input and output. Preserves local and no-signalling boxes.
pub fn random_local_wiring(s: Scenario, rng: &mut impl Rng) -> Result<Superchannel> {
    let px = Channel::classical(&random_stochastic(s.n_x, s.n_x, rng))?;
    let py = Channel::classical(&random_stochastic(s.n_y, s.n_y, rng))?;
    let pa = Channel::classical(&random_stochastic(s.n_a, s.n_a, rng))?;
    let pb = Channel::classical(&random_stochastic(s.n_b, s.n_b, rng))?;
    Superchannel::pre_post(px.tensor(&py), pa.tensor(&pb))
}

/// Random measure-prepare superchannel preparing members of `O′` on both
/// branches (free for any `O`).
pub fn random_free_measure_prepare(
    input: (usize, usize),
    o_prime: &FreeSetDescriptor,
    rng: &mut impl Rng,
) -> Result<Superchannel> {
    let (d_in, d_out) = input;
    let psi = PureState::new(d_in, d_in, linalg::random_pure(d_in * d_in, rng))?;
    let n = d_in * d_out;
    let u = linalg::random_unitary(n, rng);
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| c(rng.random::<f64>())));
    let effect = HermitianMatrix::symmetrized(&(&u * diag * u.adjoint()));
    let mut m = o_prime.sample_members(2, rng)?;
    let b = m.pop().expect("two samples");
    let a = m.pop().expect("two samples");
    Superchannel::measure_prepare(psi, effect, a, b)
}
