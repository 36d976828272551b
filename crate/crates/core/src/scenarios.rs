//! Bell boxes and measurement sets as classical / measurement channels.
//!
//! Classical wires are dephased in the computational basis, so a box
//! `p(ab|xy)` is the channel with diagonal Choi matrix
//! `Σ p(ab|xy) |xy⟩⟨xy| ⊗ |ab⟩⟨ab|`. All box monotones then reduce to linear
//! programs over probability tables.

use dynres_conic::{MatExpr, Program, Status};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channelcore::Channel;
use crate::error::{Error, Result};
use crate::freesets::{response_functions, FreeSetDescriptor};
use crate::linalg::{self, c, eye, CMat};
use crate::monotones::{self, BoundDirection, Certificate, MonotoneKind, MonotoneResult, Options};

pub const VERTEX_CAP: usize = 10_000;
pub const BOX_TOL: f64 = 1e-10;
pub const POVM_TOL: f64 = 1e-9;

/// Bell scenario `(n_x, n_y, n_a, n_b)`: Alice's and Bob's settings and
/// outcomes. Box Choi matrices use input `(x, y)` and output `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub n_x: usize,
    pub n_y: usize,
    pub n_a: usize,
    pub n_b: usize,
}

impl Scenario {
    pub const CHSH: Scenario = Scenario { n_x: 2, n_y: 2, n_a: 2, n_b: 2 };

    pub fn new(n_x: usize, n_y: usize, n_a: usize, n_b: usize) -> Result<Self> {
        if n_x == 0 || n_y == 0 || n_a == 0 || n_b == 0 {
            return Err(Error::Dimension("scenario sizes must be positive".into()));
        }
        Ok(Scenario { n_x, n_y, n_a, n_b })
    }

    pub fn d_in(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn d_out(&self) -> usize {
        self.n_a * self.n_b
    }

    pub fn table_len(&self) -> usize {
        self.d_in() * self.d_out()
    }

    /// Diagonal position of `p(ab|xy)` in the Choi matrix.
    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        (x * self.n_y + y) * self.d_out() + a * self.n_b + b
    }

    /// Scenario of two boxes used side by side, each party holding both halves.
    pub fn product(&self, other: &Scenario) -> Scenario {
        Scenario {
            n_x: self.n_x * other.n_x,
            n_y: self.n_y * other.n_y,
            n_a: self.n_a * other.n_a,
            n_b: self.n_b * other.n_b,
        }
    }

    pub fn num_vertices(&self) -> Option<usize> {
        let pa = (self.n_a as u128).checked_pow(self.n_x as u32)?;
        let pb = (self.n_b as u128).checked_pow(self.n_y as u32)?;
        usize::try_from(pa.checked_mul(pb)?).ok()
    }

    /// Deterministic local strategies `a = f(x)`, `b = g(y)` as flattened
    /// tables indexed by [`Scenario::index`].
    pub fn deterministic_boxes(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.num_vertices().filter(|&n| n <= VERTEX_CAP).ok_or_else(|| {
            Error::Unsupported(format!("local polytope of {self:?} exceeds {VERTEX_CAP} vertices"))
        })?;
        let fa = (self.n_a).pow(self.n_x as u32);
        let mut out = Vec::with_capacity(n);
        for f in 0..fa {
            for g in 0..n / fa {
                let mut t = vec![0.0; self.table_len()];
                for x in 0..self.n_x {
                    let a = (f / self.n_a.pow(x as u32)) % self.n_a;
                    for y in 0..self.n_y {
                        let b = (g / self.n_b.pow(y as u32)) % self.n_b;
                        t[self.index(x, y, a, b)] = 1.0;
                    }
                }
                out.push(t);
            }
        }
        Ok(out)
    }
}

// ------------------------------------------------------------------ boxes

/// Conditional probability table `p(ab|xy)` satisfying normalisation and
/// no-signalling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellBox {
    scenario: Scenario,
    table: Vec<f64>,
}

impl BellBox {
    /// Validates nonnegativity, normalisation and no-signalling (all within
    /// [`BOX_TOL`]); small negative entries are clipped.
    pub fn new(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        let s = scenario;
        if table.len() != s.table_len() {
            return Err(Error::Dimension(format!("box table has {} entries, scenario needs {}", table.len(), s.table_len())));
        }
        if let Some(k) = table.iter().position(|p| !p.is_finite() || *p < -BOX_TOL) {
            return Err(Error::Validation(format!("box entry {k} = {} is not a probability", table[k])));
        }
        let table: Vec<f64> = table.into_iter().map(|p| p.max(0.0)).collect();
        let p = |x, y, a, b| table[s.index(x, y, a, b)];
        for x in 0..s.n_x {
            for y in 0..s.n_y {
                let tot: f64 = (0..s.n_a).flat_map(|a| (0..s.n_b).map(move |b| (a, b))).map(|(a, b)| p(x, y, a, b)).sum();
                if (tot - 1.0).abs() > BOX_TOL {
                    return Err(Error::Validation(format!("Σ_ab p(ab|x={x},y={y}) = {tot}, expected 1")));
                }
            }
        }
        for x in 0..s.n_x {
            for a in 0..s.n_a {
                let marg = |y| (0..s.n_b).map(|b| p(x, y, a, b)).sum::<f64>();
                for y in 1..s.n_y {
                    let gap = (marg(y) - marg(0)).abs();
                    if gap > BOX_TOL {
                        return Err(Error::Validation(format!(
                            "signalling: Alice marginal p(a={a}|x={x}) differs between y=0 and y={y} by {gap:.3e}"
                        )));
                    }
                }
            }
        }
        for y in 0..s.n_y {
            for b in 0..s.n_b {
                let marg = |x| (0..s.n_a).map(|a| p(x, y, a, b)).sum::<f64>();
                for x in 1..s.n_x {
                    let gap = (marg(x) - marg(0)).abs();
                    if gap > BOX_TOL {
                        return Err(Error::Validation(format!(
                            "signalling: Bob marginal p(b={b}|y={y}) differs between x=0 and x={x} by {gap:.3e}"
                        )));
                    }
                }
            }
        }
        Ok(BellBox { scenario, table })
    }

    pub fn from_fn(scenario: Scenario, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let s = scenario;
        let mut t = vec![0.0; s.table_len()];
        for x in 0..s.n_x {
            for y in 0..s.n_y {
                for a in 0..s.n_a {
                    for b in 0..s.n_b {
                        t[s.index(x, y, a, b)] = f(x, y, a, b);
                    }
                }
            }
        }
        Self::new(s, t)
    }

    /// Popescu–Rohrlich box `p(ab|xy) = ½[a ⊕ b = xy]`.
    pub fn pr() -> Self {
        Self::from_fn(Scenario::CHSH, |x, y, a, b| if (a ^ b) == (x & y) { 0.5 } else { 0.0 }).expect("PR box is valid")
    }

    pub fn white_noise(scenario: Scenario) -> Self {
        let u = 1.0 / scenario.d_out() as f64;
        Self::from_fn(scenario, |_, _, _, _| u).expect("uniform box is valid")
    }

    /// `B_p = (1 − p) B_PR + p B_random`.
    pub fn isotropic(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("isotropic weight p = {p} outside [0, 1]")));
        }
        Self::pr().mix(&Self::white_noise(Scenario::CHSH), p)
    }

    /// Local deterministic box `a = f[x]`, `b = g[y]`.
    pub fn deterministic(scenario: Scenario, f: &[usize], g: &[usize]) -> Result<Self> {
        if f.len() != scenario.n_x || g.len() != scenario.n_y {
            return Err(Error::Dimension("response functions must cover every setting".into()));
        }
        if f.iter().any(|&a| a >= scenario.n_a) || g.iter().any(|&b| b >= scenario.n_b) {
            return Err(Error::Validation("response function outcome out of range".into()));
        }
        Self::from_fn(scenario, |x, y, a, b| if f[x] == a && g[y] == b { 1.0 } else { 0.0 })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn p(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.table[self.scenario.index(x, y, a, b)]
    }

    /// `(1 − w) self + w other`.
    pub fn mix(&self, other: &BellBox, w: f64) -> Result<Self> {
        if self.scenario != other.scenario {
            return Err(Error::Dimension("mixing boxes of different scenarios".into()));
        }
        let t = self.table.iter().zip(&other.table).map(|(p, q)| (1.0 - w) * p + w * q).collect();
        Self::new(self.scenario, t)
    }

    /// Two boxes side by side: Alice's setting is `(x₁, x₂)`, outcome
    /// `(a₁, a₂)`, likewise for Bob.
    pub fn tensor(&self, other: &BellBox) -> BellBox {
        let (s, o) = (self.scenario, other.scenario);
        let ps = s.product(&o);
        let mut t = vec![0.0; ps.table_len()];
        for x1 in 0..s.n_x {
            for y1 in 0..s.n_y {
                for a1 in 0..s.n_a {
                    for b1 in 0..s.n_b {
                        let p1 = self.p(x1, y1, a1, b1);
                        if p1 == 0.0 {
                            continue;
                        }
                        for x2 in 0..o.n_x {
                            for y2 in 0..o.n_y {
                                for a2 in 0..o.n_a {
                                    for b2 in 0..o.n_b {
                                        let k = ps.index(x1 * o.n_x + x2, y1 * o.n_y + y2, a1 * o.n_a + a2, b1 * o.n_b + b2);
                                        t[k] = p1 * other.p(x2, y2, a2, b2);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        // products of valid tables are valid; skip the tolerance re-check
        BellBox { scenario: ps, table: t }
    }

    pub fn tensor_power(&self, n: usize) -> Result<BellBox> {
        if n == 0 {
            return Err(Error::Validation("tensor power needs n ≥ 1".into()));
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.tensor(self);
        }
        Ok(out)
    }

    pub fn has_full_support(&self) -> bool {
        self.table.iter().all(|&p| p > 0.0)
    }

    pub fn to_channel(&self) -> Channel {
        let s = self.scenario;
        let mut j = CMat::zeros(s.table_len(), s.table_len());
        for (k, &p) in self.table.iter().enumerate() {
            j[(k, k)] = c(p);
        }
        Channel::new(s.d_in(), s.d_out(), j).expect("box tables are normalised")
    }
}

pub fn box_to_channel(b: &BellBox) -> Channel {
    b.to_channel()
}

/// Reads the table off a classical channel's Choi diagonal.
pub fn channel_to_box(ch: &Channel, scenario: Scenario) -> Result<BellBox> {
    if ch.dims() != (scenario.d_in(), scenario.d_out()) {
        return Err(Error::Dimension(format!("channel {:?} does not fit scenario {scenario:?}", ch.dims())));
    }
    if !ch.is_classical(BOX_TOL) {
        return Err(Error::Validation("channel Choi matrix is not diagonal".into()));
    }
    BellBox::new(scenario, (0..scenario.table_len()).map(|k| ch.choi()[(k, k)].re).collect())
}

// ------------------------------------------------------------------ box monotones

#[derive(Clone, Debug)]
pub struct BoxMonotones {
    pub r_max: MonotoneResult,
    pub r_s: MonotoneResult,
    pub r_min: MonotoneResult,
}

/// `R_min` of a box against the local polytope. Full-support tables have a
/// full-rank Choi matrix, so the only zero-error test is `P = I` and the
/// value is 1 without touching the polytope (which keeps large scenarios
/// such as two CHSH copies tractable).
pub fn box_r_min(b: &BellBox) -> Result<MonotoneResult> {
    if b.has_full_support() {
        let mut r = MonotoneResult::new(MonotoneKind::RMin, 1.0, BoundDirection::Exact);
        r.notes.push("full-support table: Choi matrix has trivial kernel".into());
        return Ok(r);
    }
    let local = FreeSetDescriptor::local_boxes(b.scenario)?;
    monotones::min_relative_entropy(&b.to_channel(), &local, false)
}

/// `R_max`, `R_s` and `R_min` against local boxes (`O_all` = no-signalling).
pub fn box_monotones(b: &BellBox) -> Result<BoxMonotones> {
    box_monotones_with(b, &Options::default())
}

pub fn box_monotones_with(b: &BellBox, opts: &Options) -> Result<BoxMonotones> {
    let local = FreeSetDescriptor::local_boxes(b.scenario)?;
    let ch = b.to_channel();
    let r_max = monotones::robustness_with(&ch, &local, &local.allowed(), opts).map(|mut r| {
        r.kind = MonotoneKind::RMax;
        r
    })?;
    let r_s = monotones::robustness_with(&ch, &local, &local, opts).map(|mut r| {
        r.kind = MonotoneKind::RS;
        r
    })?;
    let r_min = if b.has_full_support() { box_r_min(b)? } else { monotones::min_relative_entropy_with(&ch, &local, false, opts)? };
    Ok(BoxMonotones { r_max, r_s, r_min })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub p: f64,
    pub r_max: f64,
    pub r_s: f64,
    pub r_min: f64,
    pub bound_direction: BoundDirection,
}

/// Monotones of the isotropic box along `p_grid`, in grid order.
pub fn isotropic_scan(p_grid: &[f64]) -> Result<Vec<ScanRow>> {
    p_grid
        .par_iter()
        .map(|&p| {
            let m = box_monotones(&BellBox::isotropic(p)?)?;
            let dir = m.r_max.bound_direction.combine(m.r_s.bound_direction).combine(m.r_min.bound_direction);
            Ok(ScanRow { p, r_max: m.r_max.value, r_s: m.r_s.value, r_min: m.r_min.value, bound_direction: dir })
        })
        .collect()
}

/// `n` equally spaced points of `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

// ------------------------------------------------------------------ POVMs

/// Measurement set `{M_{a|x}}` on a `d`-dimensional system.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmSet {
    d: usize,
    elements: Vec<Vec<CMat>>,
}

impl PovmSet {
    /// Checks `Σ_a M_{a|x} = I` and `M_{a|x} ⪰ 0` within [`POVM_TOL`].
    pub fn new(d: usize, elements: Vec<Vec<CMat>>) -> Result<Self> {
        if d == 0 || elements.is_empty() || elements[0].is_empty() {
            return Err(Error::Dimension("POVM set needs d ≥ 1, one setting and one outcome".into()));
        }
        let na = elements[0].len();
        for (x, row) in elements.iter().enumerate() {
            if row.len() != na {
                return Err(Error::Dimension(format!("setting {x} has {} outcomes, expected {na}", row.len())));
            }
            let mut total = CMat::zeros(d, d);
            for (a, m) in row.iter().enumerate() {
                if m.shape() != (d, d) {
                    return Err(Error::Dimension(format!("M[{a}|{x}] has shape {:?}, expected ({d}, {d})", m.shape())));
                }
                if linalg::hermiticity_defect(m) > POVM_TOL {
                    return Err(Error::Validation(format!("M[{a}|{x}] is not Hermitian")));
                }
                let lo = linalg::min_eig(m);
                if lo < -POVM_TOL {
                    return Err(Error::Validation(format!("M[{a}|{x}] has eigenvalue {lo:.3e} < 0")));
                }
                total += m;
            }
            let dev = (total - eye(d)).norm();
            if dev > POVM_TOL {
                return Err(Error::Validation(format!("Σ_a M[a|{x}] deviates from I by {dev:.3e}")));
            }
        }
        let elements = elements.iter().map(|row| row.iter().map(linalg::hermitize).collect()).collect();
        Ok(PovmSet { d, elements })
    }

    /// Rank-one projective measurements onto the columns of each unitary.
    pub fn projective(bases: &[CMat]) -> Result<Self> {
        let d = bases.first().map_or(0, |u| u.nrows());
        let elements = bases
            .iter()
            .map(|u| (0..u.ncols()).map(|a| linalg::outer(&u.column(a).into_owned())).collect())
            .collect();
        Self::new(d, elements)
    }

    /// Qubit Pauli-Z and Pauli-X measurements.
    pub fn xz() -> Self {
        let h = 1.0 / 2f64.sqrt();
        let hadamard = CMat::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)]);
        Self::projective(&[eye(2), hadamard]).expect("computational and Hadamard bases")
    }

    /// Uniformly random projective measurements, one basis per setting.
    pub fn random_projective(d: usize, settings: usize, rng: &mut impl Rng) -> Self {
        let bases: Vec<CMat> = (0..settings).map(|_| linalg::random_unitary(d, rng)).collect();
        Self::projective(&bases).expect("unitary columns form a basis")
    }

    /// `M ↦ η M + (1 − η) Tr(M) I/d` on every element.
    pub fn noisy(&self, eta: f64) -> Result<Self> {
        let d = self.d as f64;
        let elements = self
            .elements
            .iter()
            .map(|row| row.iter().map(|m| m * c(eta) + eye(self.d) * c((1.0 - eta) * m.trace().re / d)).collect())
            .collect();
        Self::new(self.d, elements)
    }

    /// Every element `I / n_a`.
    pub fn trivial(d: usize, settings: usize, outcomes: usize) -> Self {
        let m = eye(d) / c(outcomes as f64);
        Self::new(d, vec![vec![m; outcomes]; settings]).expect("uniform POVM")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn settings(&self) -> usize {
        self.elements.len()
    }

    pub fn outcomes(&self) -> usize {
        self.elements[0].len()
    }

    pub fn elements(&self) -> &[Vec<CMat>] {
        &self.elements
    }

    pub fn element(&self, x: usize, a: usize) -> &CMat {
        &self.elements[x][a]
    }

    pub fn to_channel(&self) -> Channel {
        povm_to_channel(self)
    }
}

/// `E_M(σ ⊗ ρ) = Σ ⟨x|σ|x⟩ Tr(M_{a|x} ρ) |a⟩⟨a|`: input is the setting
/// register (dephased) times the system, output the outcome.
pub fn povm_to_channel(s: &PovmSet) -> Channel {
    let (d, nx, na) = (s.d, s.settings(), s.outcomes());
    let n = nx * d * na;
    let mut j = CMat::zeros(n, n);
    for x in 0..nx {
        for a in 0..na {
            let m = &s.elements[x][a];
            for i in 0..d {
                for k in 0..d {
                    j[((x * d + i) * na + a, (x * d + k) * na + a)] = m[(k, i)];
                }
            }
        }
    }
    Channel::repaired(nx * d, na, &j).expect("POVM channels are CPTP")
}

/// Inverse of [`povm_to_channel`] on its range.
pub fn channel_to_povm(ch: &Channel, d: usize, settings: usize) -> Result<PovmSet> {
    let na = ch.d_out();
    if ch.d_in() != d * settings {
        return Err(Error::Dimension(format!("channel input {} ≠ {settings}·{d}", ch.d_in())));
    }
    let j = ch.choi();
    let elements = (0..settings)
        .map(|x| (0..na).map(|a| CMat::from_fn(d, d, |k, i| j[((x * d + i) * na + a, (x * d + k) * na + a)])).collect())
        .collect();
    PovmSet::new(d, elements)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncompatLevel {
    /// Parent-POVM program on the measurement set itself.
    Povm,
    /// Generalised robustness of the embedded channel against compatible sets.
    Channel,
}

/// Generalised incompatibility robustness
/// `min{1 + r : (M + rN)/(1 + r) jointly measurable, N any POVM set}`.
pub fn incompatibility_robustness(s: &PovmSet, level: IncompatLevel) -> Result<MonotoneResult> {
    incompatibility_robustness_with(s, level, &Options::default())
}

pub fn incompatibility_robustness_with(s: &PovmSet, level: IncompatLevel, opts: &Options) -> Result<MonotoneResult> {
    match level {
        IncompatLevel::Channel => {
            let o = FreeSetDescriptor::compatible_povms(s.d, s.settings(), s.outcomes());
            let mut r = monotones::robustness_with(&s.to_channel(), &o, &o.allowed(), opts)?;
            r.notes.push("channel-level robustness of the measurement channel".into());
            Ok(r)
        }
        IncompatLevel::Povm => parent_povm_robustness(s, opts),
    }
}

/// `min t : Σ_λ G_λ = t I, Σ_{λ(x)=a} G_λ ⪰ M_{a|x}, G_λ ⪰ 0`, with `λ`
/// ranging over deterministic response functions.
fn parent_povm_robustness(s: &PovmSet, opts: &Options) -> Result<MonotoneResult> {
    let (d, nx, na) = (s.d, s.settings(), s.outcomes());
    let lambdas = response_functions(nx, na);
    let mut p = Program::minimize();
    let t = p.scalar("t");
    let g: Vec<MatExpr> = (0..lambdas.len()).map(|l| p.psd(&format!("G{l}"), d)).collect();
    let mut total = MatExpr::scalar_times(&t, &eye(d)).scale(-1.0);
    for gl in &g {
        total = total.add(gl);
    }
    p.add_herm_eq(total);
    for x in 0..nx {
        for a in 0..na {
            let mut m = MatExpr::constant(&(-s.elements[x][a].clone()));
            for (l, lam) in lambdas.iter().enumerate() {
                if lam[x] == a {
                    m = m.add(&g[l]);
                }
            }
            p.add_psd(m);
        }
    }
    p.set_objective(t.clone());
    let sol = p.solve_with(&opts.settings).map_err(|e| Error::Validation(e.to_string()))?;
    if !sol.is_usable() || sol.status == Status::Infeasible {
        return Err(Error::solver(sol.status, "parent POVM program"));
    }
    let mut r = MonotoneResult::new(MonotoneKind::Robustness, sol.value(&t).max(1.0), BoundDirection::Exact);
    r.certificate = Some(Certificate::of(&sol));
    r.notes.push(format!("parent POVM over {} response functions", lambdas.len()));
    Ok(r)
}
