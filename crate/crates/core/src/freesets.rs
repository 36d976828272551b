//! Descriptors of free channel sets `O` and allowed sets `O_all`.
//!
//! Every descriptor carries a conic membership template (so that `t · O` can
//! be instantiated inside any program), optionally a finite generating
//! family, and the flags needed to decide how support functions and affine
//! hulls may be emitted.

use std::sync::OnceLock;

use dynres_conic::{orthonormal_span, support_from_generators, LinExpr, MatExpr, MembershipTemplate, Program, TemplateBuilder};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channelcore::{Channel, HermitianMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, kron, CMat};
use crate::scenarios::Scenario;

pub const AFFINE_RANK_CUTOFF: f64 = 1e-8;
pub const MEMBER_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimClass {
    Full,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    Exact,
    OuterRelaxation,
    InnerApproximation,
}

/// Bipartition `[a_in, b_in, a_out, b_out]` of a bipartite channel.
pub type Parts = [usize; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Replacement,
    AllChannels,
    ClassicalChannels,
    Ppt { parts: Option<Parts> },
    SepRelax { parts: Option<Parts>, level: usize },
    LocalBoxes { scenario: Scenario },
    NsBoxes { scenario: Scenario },
    CompatiblePovms { d: usize, settings: usize, outcomes: usize },
    PovmChannels { d: usize, settings: usize, outcomes: usize },
    GenericPolytope,
    Singleton,
}

/// A point of `aff(O)` and an orthonormal basis of its direction space.
#[derive(Clone, Debug)]
pub struct AffineBasis {
    pub base: CMat,
    pub directions: Vec<CMat>,
}

#[derive(Debug)]
pub struct FreeSetDescriptor {
    pub name: String,
    pub family: Family,
    d_in: usize,
    d_out: usize,
    template: MembershipTemplate,
    generators: Option<Vec<CMat>>,
    /// Generators are the vertices of a polytope (support is a max over them).
    polytope: bool,
    slater_point: Option<CMat>,
    exactness: Exactness,
    classical: bool,
    affine: OnceLock<std::result::Result<AffineBasis, String>>,
}

impl Clone for FreeSetDescriptor {
    fn clone(&self) -> Self {
        FreeSetDescriptor {
            name: self.name.clone(),
            family: self.family.clone(),
            d_in: self.d_in,
            d_out: self.d_out,
            template: self.template.clone(),
            generators: self.generators.clone(),
            polytope: self.polytope,
            slater_point: self.slater_point.clone(),
            exactness: self.exactness,
            classical: self.classical,
            affine: OnceLock::new(),
        }
    }
}

/// Outcome of [`FreeSetDescriptor::membership_check`].
#[derive(Clone, Debug)]
pub struct Membership {
    pub member: bool,
    /// `min_{M ∈ O} ‖J_ch − J_M‖₁`.
    pub distance: f64,
    /// Separating functional `X` (`−I ⪯ X ⪯ I`) when not a member.
    pub witness: Option<HermitianMatrix>,
    /// `⟨X, J_ch⟩`.
    pub witness_value: f64,
    /// Certified upper bound on `max_{M ∈ O} ⟨X, J_M⟩`.
    pub witness_bound: f64,
}

fn trace_preserving(b: &mut TemplateBuilder, j: &MatExpr, d_in: usize, d_out: usize) {
    b.herm_eq(&j.partial_trace(&[d_in, d_out], &[false, true]).add_const(&(-eye(d_in))));
}

pub(crate) fn diag_expr(vars: &[LinExpr], n: usize) -> MatExpr {
    let idx: Vec<usize> = vars.iter().map(|v| v.terms[0].0).collect();
    let basis: Vec<CMat> = (0..n)
        .map(|k| {
            let mut m = CMat::zeros(n, n);
            m[(k, k)] = c(1.0);
            m
        })
        .collect();
    MatExpr::linear_combination(&idx, &basis)
}

fn diag_matrix(t: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(t.len(), t.iter().map(|&v| c(v))))
}

/// `Σ_{x,a} |x⟩⟨x| ⊗ M_{a|x}ᵀ ⊗ |a⟩⟨a|` with input `(x, system)` and output `a`.
pub(crate) fn povm_choi_expr(elems: &[Vec<MatExpr>], d: usize) -> MatExpr {
    let nx = elems.len();
    let na = elems[0].len();
    let n = nx * d * na;
    let mut out = MatExpr::zeros(n, n);
    for (x, row) in elems.iter().enumerate() {
        for (a, m) in row.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    out.set((x * d + i) * na + a, (x * d + j) * na + a, m.get(j, i).clone());
                }
            }
        }
    }
    out
}

/// Deterministic response functions `λ: settings → outcomes`.
pub fn response_functions(settings: usize, outcomes: usize) -> Vec<Vec<usize>> {
    let n = outcomes.pow(settings as u32);
    (0..n).map(|l| (0..settings).map(|x| (l / outcomes.pow(x as u32)) % outcomes).collect()).collect()
}

impl FreeSetDescriptor {
    #[allow(clippy::too_many_arguments)]
    fn build(
        name: impl Into<String>,
        family: Family,
        d_in: usize,
        d_out: usize,
        template: MembershipTemplate,
        generators: Option<Vec<CMat>>,
        polytope: bool,
        slater_point: Option<CMat>,
        exactness: Exactness,
        classical: bool,
    ) -> Self {
        FreeSetDescriptor {
            name: name.into(),
            family,
            d_in,
            d_out,
            template,
            generators,
            polytope,
            slater_point,
            exactness,
            classical,
            affine: OnceLock::new(),
        }
    }

    /// Replacement channels `R_σ`, Choi `I ⊗ σ`.
    pub fn replacement_channels(d_in: usize, d_out: usize) -> Self {
        let mut b = TemplateBuilder::new();
        let sigma = b.psd(d_out);
        b.eq(sigma.trace().re() - 1.0);
        let choi = sigma.kron_left(&eye(d_in));
        let template = b.finish(choi, true);
        // pure states spanning the Hermitian matrices
        let mut gens = Vec::new();
        for a in 0..d_out {
            let mut v = DVector::zeros(d_out);
            v[a] = c(1.0);
            gens.push(kron(&eye(d_in), &linalg::outer(&v)));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for a in 0..d_out {
            for bb in a + 1..d_out {
                for ph in [c(1.0), num_complex::Complex64::new(0.0, 1.0)] {
                    let mut v = DVector::zeros(d_out);
                    v[a] = c(s);
                    v[bb] = ph * s;
                    gens.push(kron(&eye(d_in), &linalg::outer(&v)));
                }
            }
        }
        let slater = kron(&eye(d_in), &(eye(d_out) / c(d_out as f64)));
        Self::build(
            format!("replacement({d_in},{d_out})"),
            Family::Replacement,
            d_in,
            d_out,
            template,
            Some(gens),
            false,
            Some(slater),
            Exactness::Exact,
            false,
        )
    }

    /// Every channel with the given signature.
    pub fn all_channels(d_in: usize, d_out: usize) -> Self {
        let mut b = TemplateBuilder::new();
        let j = b.psd(d_in * d_out);
        trace_preserving(&mut b, &j, d_in, d_out);
        let template = b.finish(j, true);
        Self::build(
            format!("all({d_in},{d_out})"),
            Family::AllChannels,
            d_in,
            d_out,
            template,
            None,
            false,
            Some(eye(d_in * d_out) / c(d_out as f64)),
            Exactness::Exact,
            false,
        )
    }

    /// Classical channels `p(a|i)`, diagonal Choi.
    pub fn classical_channels(d_in: usize, d_out: usize) -> Self {
        let n = d_in * d_out;
        let mut b = TemplateBuilder::new();
        let p = b.nonneg(n);
        for i in 0..d_in {
            b.eq(LinExpr::sum(&p[i * d_out..(i + 1) * d_out]) - 1.0);
        }
        let template = b.finish(diag_expr(&p, n), true);
        Self::build(
            format!("classical({d_in},{d_out})"),
            Family::ClassicalChannels,
            d_in,
            d_out,
            template,
            None,
            false,
            Some(eye(n) / c(d_out as f64)),
            Exactness::Exact,
            true,
        )
    }

    fn split(parts: Option<Parts>, d_in: usize, d_out: usize) -> (Vec<usize>, Vec<bool>) {
        match parts {
            None => (vec![d_in, d_out], vec![false, true]),
            Some(p) => (p.to_vec(), vec![false, true, false, true]),
        }
    }

    fn ppt_impl(parts: Option<Parts>, d_in: usize, d_out: usize) -> (TemplateBuilder, MatExpr) {
        let (dims, mask) = Self::split(parts, d_in, d_out);
        let mut b = TemplateBuilder::new();
        let j = b.psd(d_in * d_out);
        let jt = b.psd(d_in * d_out);
        b.herm_eq(&jt.sub(&j.partial_transpose(&dims, &mask)));
        trace_preserving(&mut b, &j, d_in, d_out);
        (b, j)
    }

    /// Channels with PPT Choi matrix across the input/output cut.
    pub fn ppt_channels(d_in: usize, d_out: usize) -> Self {
        let (b, j) = Self::ppt_impl(None, d_in, d_out);
        Self::build(
            format!("ppt({d_in},{d_out})"),
            Family::Ppt { parts: None },
            d_in,
            d_out,
            b.finish(j, true),
            None,
            false,
            Some(eye(d_in * d_out) / c(d_out as f64)),
            Exactness::Exact,
            false,
        )
    }

    /// Bipartite channels `A_in B_in → A_out B_out` with PPT Choi matrix
    /// across the `A | B` cut (dims `[a_in, b_in, a_out, b_out]`).
    pub fn ppt_bipartite(parts: Parts) -> Self {
        let (d_in, d_out) = (parts[0] * parts[1], parts[2] * parts[3]);
        let (b, j) = Self::ppt_impl(Some(parts), d_in, d_out);
        Self::build(
            format!("ppt-bipartite({parts:?})"),
            Family::Ppt { parts: Some(parts) },
            d_in,
            d_out,
            b.finish(j, true),
            None,
            false,
            Some(eye(d_in * d_out) / c(d_out as f64)),
            Exactness::Exact,
            false,
        )
    }

    fn sep_impl(parts: Option<Parts>, level: usize, d_in: usize, d_out: usize) -> (TemplateBuilder, MatExpr) {
        {
            let (dims, mask) = Self::split(parts, d_in, d_out);
            let (mut b, j) = Self::ppt_impl(parts, d_in, d_out);
            // reorder factors to (A, B)
            let a_idx: Vec<usize> = (0..dims.len()).filter(|&k| !mask[k]).collect();
            let b_idx: Vec<usize> = (0..dims.len()).filter(|&k| mask[k]).collect();
            let perm: Vec<usize> = a_idx.iter().chain(&b_idx).copied().collect();
            let da: usize = a_idx.iter().map(|&k| dims[k]).product();
            let db: usize = b_idx.iter().map(|&k| dims[k]).product();
            let jab = j.permute(&dims, &perm);
            if level >= 2 {
                let mut xdims = vec![da];
                xdims.extend(std::iter::repeat(db).take(level));
                let n: usize = xdims.iter().product();
                let xi = b.psd(n);
                for k in 1..level {
                    let mut sw: Vec<usize> = (0..=level).collect();
                    sw.swap(k, k + 1);
                    b.herm_eq(&xi.sub(&xi.permute(&xdims, &sw)));
                }
                let mut traced = vec![false, false];
                traced.extend(std::iter::repeat(true).take(level - 1));
                b.herm_eq(&xi.partial_trace(&xdims, &traced).sub(&jab));
                let mut pt = vec![true];
                pt.extend(std::iter::repeat(false).take(level));
                let xt = b.psd(n);
                b.herm_eq(&xt.sub(&xi.partial_transpose(&xdims, &pt)));
            }
            (b, j)
        }
    }

    /// Outer relaxation of channels with separable Choi matrix (in/out cut):
    /// PPT plus a PPT symmetric extension on `level` copies of the output.
    pub fn sep_channels_relax(d_in: usize, d_out: usize, level: usize) -> Self {
        let (b, j) = Self::sep_impl(None, level, d_in, d_out);
        Self::build(
            format!("sep-relax({d_in},{d_out};k={level})"),
            Family::SepRelax { parts: None, level },
            d_in,
            d_out,
            b.finish(j, true),
            None,
            false,
            Some(eye(d_in * d_out) / c(d_out as f64)),
            Exactness::OuterRelaxation,
            false,
        )
    }

    /// Bipartite analogue of [`Self::sep_channels_relax`] across the `A | B` cut,
    /// extending the `B` side.
    pub fn sep_bipartite_relax(parts: Parts, level: usize) -> Self {
        let (d_in, d_out) = (parts[0] * parts[1], parts[2] * parts[3]);
        let (b, j) = Self::sep_impl(Some(parts), level, d_in, d_out);
        Self::build(
            format!("sep-relax-bipartite({parts:?};k={level})"),
            Family::SepRelax { parts: Some(parts), level },
            d_in,
            d_out,
            b.finish(j, true),
            None,
            false,
            Some(eye(d_in * d_out) / c(d_out as f64)),
            Exactness::OuterRelaxation,
            false,
        )
    }

    fn vertex_template(vertices: &[CMat]) -> MembershipTemplate {
        let mut b = TemplateBuilder::new();
        let w = b.nonneg(vertices.len());
        b.eq(LinExpr::sum(&w) - 1.0);
        let idx: Vec<usize> = w.iter().map(|v| v.terms[0].0).collect();
        b.finish(MatExpr::linear_combination(&idx, vertices), true)
    }

    /// Local (LOSR-simulable) boxes: convex hull of deterministic strategies.
    pub fn local_boxes(scenario: Scenario) -> Result<Self> {
        let verts: Vec<CMat> = scenario.deterministic_boxes()?.iter().map(|t| diag_matrix(t)).collect();
        let template = Self::vertex_template(&verts);
        let n = scenario.d_in() * scenario.d_out();
        Ok(Self::build(
            format!("local-boxes({},{},{},{})", scenario.n_x, scenario.n_y, scenario.n_a, scenario.n_b),
            Family::LocalBoxes { scenario },
            scenario.d_in(),
            scenario.d_out(),
            template,
            Some(verts),
            true,
            Some(eye(n) / c(scenario.d_out() as f64)),
            Exactness::Exact,
            true,
        ))
    }

    /// No-signalling boxes (normalised, nonnegative, no-signalling marginals).
    pub fn ns_boxes(scenario: Scenario) -> Self {
        let s = scenario;
        let n = s.d_in() * s.d_out();
        let mut b = TemplateBuilder::new();
        let p = b.nonneg(n);
        let at = |x, y, a, bb| p[s.index(x, y, a, bb)].clone();
        for x in 0..s.n_x {
            for y in 0..s.n_y {
                let mut e = LinExpr::constant(-1.0);
                for a in 0..s.n_a {
                    for bb in 0..s.n_b {
                        e = e + at(x, y, a, bb);
                    }
                }
                b.eq(e);
            }
        }
        for x in 0..s.n_x {
            for a in 0..s.n_a {
                for y in 1..s.n_y {
                    let mut e = LinExpr::zero();
                    for bb in 0..s.n_b {
                        e = e + at(x, y, a, bb) - at(x, 0, a, bb);
                    }
                    b.eq(e);
                }
            }
        }
        for y in 0..s.n_y {
            for bb in 0..s.n_b {
                for x in 1..s.n_x {
                    let mut e = LinExpr::zero();
                    for a in 0..s.n_a {
                        e = e + at(x, y, a, bb) - at(0, y, a, bb);
                    }
                    b.eq(e);
                }
            }
        }
        let template = b.finish(diag_expr(&p, n), true);
        Self::build(
            format!("ns-boxes({},{},{},{})", s.n_x, s.n_y, s.n_a, s.n_b),
            Family::NsBoxes { scenario: s },
            s.d_in(),
            s.d_out(),
            template,
            None,
            false,
            Some(eye(n) / c(s.d_out() as f64)),
            Exactness::Exact,
            true,
        )
    }

    /// Measurement channels of jointly measurable POVM sets, via a parent
    /// POVM over all deterministic response functions.
    pub fn compatible_povms(d: usize, settings: usize, outcomes: usize) -> Self {
        let lambdas = response_functions(settings, outcomes);
        let mut b = TemplateBuilder::new();
        let g: Vec<MatExpr> = lambdas.iter().map(|_| b.psd(d)).collect();
        let mut total = MatExpr::constant(&(-eye(d)));
        for gl in &g {
            total = total.add(gl);
        }
        b.herm_eq(&total);
        let elems: Vec<Vec<MatExpr>> = (0..settings)
            .map(|x| {
                (0..outcomes)
                    .map(|a| {
                        let mut m = MatExpr::zeros(d, d);
                        for (l, lam) in lambdas.iter().enumerate() {
                            if lam[x] == a {
                                m = m.add(&g[l]);
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect();
        let choi = povm_choi_expr(&elems, d);
        let template = b.finish(choi, true);
        let slater = Self::uniform_povm_choi(d, settings, outcomes);
        Self::build(
            format!("compatible-povms({d},{settings},{outcomes})"),
            Family::CompatiblePovms { d, settings, outcomes },
            settings * d,
            outcomes,
            template,
            None,
            false,
            Some(slater),
            Exactness::Exact,
            false,
        )
    }

    /// Measurement channels of arbitrary POVM sets.
    pub fn povm_channels(d: usize, settings: usize, outcomes: usize) -> Self {
        let mut b = TemplateBuilder::new();
        let elems: Vec<Vec<MatExpr>> = (0..settings).map(|_| (0..outcomes).map(|_| b.psd(d)).collect()).collect();
        for row in &elems {
            let mut total = MatExpr::constant(&(-eye(d)));
            for m in row {
                total = total.add(m);
            }
            b.herm_eq(&total);
        }
        let template = b.finish(povm_choi_expr(&elems, d), true);
        Self::build(
            format!("povm-channels({d},{settings},{outcomes})"),
            Family::PovmChannels { d, settings, outcomes },
            settings * d,
            outcomes,
            template,
            None,
            false,
            Some(Self::uniform_povm_choi(d, settings, outcomes)),
            Exactness::Exact,
            false,
        )
    }

    fn uniform_povm_choi(d: usize, settings: usize, outcomes: usize) -> CMat {
        eye(settings * d * outcomes) / c(outcomes as f64)
    }

    /// User-supplied polytope theory given by its vertices.
    pub fn generic_polytope(d_in: usize, d_out: usize, vertices: Vec<CMat>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Validation("polytope needs at least one vertex".into()));
        }
        for (k, v) in vertices.iter().enumerate() {
            Channel::new(d_in, d_out, v.clone()).map_err(|e| Error::Validation(format!("vertex {k}: {e}")))?;
        }
        let classical = vertices.iter().all(|v| linalg::is_diagonal(v, 1e-12));
        let template = Self::vertex_template(&vertices);
        let centre = vertices.iter().fold(CMat::zeros(d_in * d_out, d_in * d_out), |a, v| a + v) / c(vertices.len() as f64);
        Ok(Self::build(
            format!("polytope({d_in},{d_out};{} vertices)", vertices.len()),
            Family::GenericPolytope,
            d_in,
            d_out,
            template,
            Some(vertices),
            true,
            Some(centre),
            Exactness::Exact,
            classical,
        ))
    }

    /// The set `{M₀}`.
    pub fn singleton(ch: &Channel) -> Self {
        let v = ch.choi().clone();
        let template = Self::vertex_template(std::slice::from_ref(&v));
        let classical = ch.is_classical(1e-12);
        Self::build("singleton", Family::Singleton, ch.d_in(), ch.d_out(), template, Some(vec![v.clone()]), true, Some(v), Exactness::Exact, classical)
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

    pub fn exactness(&self) -> Exactness {
        self.exactness
    }

    pub fn is_classical(&self) -> bool {
        self.classical
    }

    pub fn is_polytope(&self) -> bool {
        self.polytope
    }

    pub fn generators(&self) -> Option<&[CMat]> {
        self.generators.as_deref()
    }

    pub fn slater_point(&self) -> Option<&CMat> {
        self.slater_point.as_ref()
    }

    pub fn template(&self) -> &MembershipTemplate {
        &self.template
    }

    /// The allowed set `O_all` of the theory this descriptor belongs to.
    pub fn allowed(&self) -> FreeSetDescriptor {
        match &self.family {
            Family::LocalBoxes { scenario } | Family::NsBoxes { scenario } => Self::ns_boxes(*scenario),
            Family::CompatiblePovms { d, settings, outcomes } | Family::PovmChannels { d, settings, outcomes } => {
                Self::povm_channels(*d, *settings, *outcomes)
            }
            Family::ClassicalChannels => Self::classical_channels(self.d_in, self.d_out),
            Family::GenericPolytope | Family::Singleton if self.classical => Self::classical_channels(self.d_in, self.d_out),
            _ => Self::all_channels(self.d_in, self.d_out),
        }
    }

    fn check_dims(&self, ch: &Channel) -> Result<()> {
        if ch.dims() != self.dims() {
            return Err(Error::Dimension(format!(
                "channel signature {:?} does not match descriptor {} {:?}",
                ch.dims(),
                self.name,
                self.dims()
            )));
        }
        Ok(())
    }

    /// Adds template variables to `prog`; returns the Choi expression of a
    /// member of `scale · O`.
    pub fn member(&self, prog: &mut Program, scale: &LinExpr) -> MatExpr {
        self.template.instantiate(prog, scale)
    }

    /// Emits `sup_{M ∈ O} ⟨Q, J_M⟩ ≤ bound`.
    pub fn support_le(&self, prog: &mut Program, q: &MatExpr, bound: &LinExpr) -> Result<()> {
        if self.polytope {
            support_from_generators(prog, q, bound, self.generators.as_deref().unwrap_or_default());
            return Ok(());
        }
        Ok(self.template.dualize_support(prog, q, bound)?)
    }

    /// `aff(O)`: from the template null space when a strictly feasible point
    /// is known, otherwise from differences of generators.
    pub fn affine_basis(&self) -> Result<&AffineBasis> {
        let r = self.affine.get_or_init(|| {
            if self.template.strong_duality && self.slater_point.is_some() && !self.polytope {
                let (base, directions) = self.template.affine_hull(AFFINE_RANK_CUTOFF);
                Ok(AffineBasis { base, directions })
            } else if let Some(g) = &self.generators {
                let diffs: Vec<CMat> = g[1..].iter().map(|v| v - &g[0]).collect();
                Ok(AffineBasis { base: g[0].clone(), directions: orthonormal_span(&diffs, AFFINE_RANK_CUTOFF) })
            } else {
                Err(format!("{} has neither generators nor a strictly feasible point", self.name))
            }
        });
        r.as_ref().map_err(|e| Error::Unsupported(e.clone()))
    }

    /// Emits `⟨Q, J_M⟩ = λ` for every `M ∈ O` (one equality per affine-hull
    /// basis element plus one for the base point). Returns the number emitted.
    pub fn affine_constraints(&self, prog: &mut Program, q: &MatExpr, lambda: &LinExpr) -> Result<usize> {
        let aff = self.affine_basis()?;
        prog.add_eq(q.inner(&aff.base) - lambda.clone());
        for dir in &aff.directions {
            prog.add_eq(q.inner(dir));
        }
        Ok(1 + aff.directions.len())
    }

    pub fn affine_dimension(&self) -> Result<usize> {
        Ok(self.affine_basis()?.directions.len())
    }

    /// Full-dimensional iff `aff(O)` has the dimension of `aff(O_all)`.
    pub fn dim_classify(&self) -> DimClass {
        let own = self.affine_dimension();
        let all = self.allowed().affine_dimension();
        match (own, all) {
            (Ok(a), Ok(b)) if a < b => DimClass::Reduced,
            (Ok(_), Ok(_)) => DimClass::Full,
            _ => DimClass::Reduced,
        }
    }

    /// Separation program `max ⟨X, J_ch⟩ − sup_O ⟨X, J_M⟩` over `−I ⪯ X ⪯ I`,
    /// whose value is the trace distance of `J_ch` to `O`.
    pub fn membership_check(&self, ch: &Channel) -> Result<Membership> {
        self.membership_check_tol(ch, MEMBER_TOL)
    }

    pub fn membership_check_tol(&self, ch: &Channel, tol: f64) -> Result<Membership> {
        self.check_dims(ch)?;
        let n = self.d_in * self.d_out;
        let mut p = Program::maximize();
        let lam = p.scalar("lambda");
        let x = if self.classical && ch.is_classical(1e-12) {
            let v = p.free("x", n);
            for e in &v {
                p.add_ge(e.clone() + 1.0);
                p.add_ge(LinExpr::constant(1.0) - e.clone());
            }
            diag_expr(&v, n)
        } else {
            let x = p.hermitian("X", n);
            p.add_psd(MatExpr::constant(&eye(n)).sub(&x));
            p.add_psd(MatExpr::constant(&eye(n)).add(&x));
            x
        };
        self.support_le(&mut p, &x, &lam)?;
        p.set_objective(x.inner(ch.choi()) - lam.clone());
        let sol = p.solve_with(&dynres_conic::Settings::from_env()).map_err(|e| Error::Validation(e.to_string()))?;
        if !sol.is_usable() {
            return Err(Error::solver(sol.status, format!("membership in {}", self.name)));
        }
        let distance = sol.objective.max(0.0);
        let xm = sol.matrix(&x);
        let member = distance <= tol;
        Ok(Membership {
            member,
            distance,
            witness: (!member).then(|| HermitianMatrix::symmetrized(&xm)),
            witness_value: linalg::inner(&xm, ch.choi()),
            witness_bound: sol.value(&lam),
        })
    }
}

impl FreeSetDescriptor {
    /// Random members of `O`: Dirichlet mixtures of the vertices for
    /// polytopes, otherwise mixtures of pairs of exposed points
    /// `argmax_{M ∈ O} ⟨H, J_M⟩` for Gaussian `H`.
    pub fn sample_members(&self, n: usize, rng: &mut impl rand::Rng) -> Result<Vec<Channel>> {
        let (d_in, d_out) = self.dims();
        if let (true, Some(g)) = (self.polytope, self.generators.as_deref()) {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let w: Vec<f64> = (0..g.len()).map(|_| rng.sample::<f64, _>(rand_distr::Exp1)).collect();
                let s: f64 = w.iter().sum();
                let j = g.iter().zip(&w).fold(CMat::zeros(g[0].nrows(), g[0].ncols()), |acc, (v, &wk)| acc + v * c(wk / s));
                out.push(Channel::repaired(d_in, d_out, &j)?);
            }
            return Ok(out);
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = (self.exposed_point(rng)?, self.exposed_point(rng)?);
            let w: f64 = rng.random();
            out.push(Channel::repaired(d_in, d_out, &(a * c(w) + b * c(1.0 - w)))?);
        }
        Ok(out)
    }

    fn exposed_point(&self, rng: &mut impl rand::Rng) -> Result<CMat> {
        let nn = self.d_in * self.d_out;
        let h = if self.classical {
            diag_matrix(&(0..nn).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect::<Vec<_>>())
        } else {
            linalg::hermitize(&linalg::ginibre(nn, nn, rng))
        };
        let mut p = Program::maximize();
        let m = self.member(&mut p, &LinExpr::constant(1.0));
        p.set_objective(m.inner(&h));
        let sol = p.solve_with(&dynres_conic::Settings::from_env()).map_err(|e| Error::Validation(e.to_string()))?;
        if !sol.is_usable() {
            return Err(Error::solver(sol.status, format!("sampling {}", self.name)));
        }
        Ok(sol.matrix(&m))
    }
}
