//! Versioned JSON documents (`"schema": "dynres/1"`) for channels, boxes,
//! measurement sets, free-set descriptors, superchannels and results.
//!
//! Every document is an object with `schema` and `type` keys; matrices are
//! `{"re": [[..]], "im": [[..]]}` (`im` optional). Parse failures name the
//! offending field path.

use std::path::Path;

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::channelcore::{Channel, HermitianMatrix, PureState};
use crate::error::{Error, Result};
use crate::freesets::{Exactness, Family, FreeSetDescriptor};
use crate::linalg::{self, CMat};
use crate::monotones::{BoundDirection, MonotoneKind, MonotoneResult};
use crate::scenarios::{BellBox, PovmSet, Scenario};
use crate::superchannels::{
    FreenessReport, Form, Guarantee, LedgerEntry, Regime, Route, Superchannel, TransformationCertificate,
};
use crate::tasks::{Check, RateKind, RateResult, Target, TransformOptions, TransformReport, Verdict};

pub const SCHEMA: &str = "dynres/1";

/// Non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod num {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixDoc {
    pub fn of(m: &CMat) -> Self {
        let (re, im) = linalg::to_re_im(m);
        let imag = im.iter().flatten().any(|&v| v != 0.0);
        MatrixDoc { re, im: imag.then_some(im) }
    }

    fn to_matrix(&self, field: &str) -> Result<CMat> {
        linalg::from_re_im(&self.re, self.im.as_deref())
            .ok_or_else(|| Error::schema(field, "ragged matrix or mismatched re/im shapes"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub d_in: usize,
    pub d_out: usize,
    pub choi: MatrixDoc,
}

impl ChannelDoc {
    pub fn of(ch: &Channel) -> Self {
        ChannelDoc { d_in: ch.d_in(), d_out: ch.d_out(), choi: MatrixDoc::of(ch.choi()) }
    }

    fn to_channel(&self, field: &str) -> Result<Channel> {
        let j = self.choi.to_matrix(&format!("{field}choi"))?;
        Channel::new(self.d_in, self.d_out, j).map_err(|e| Error::schema(format!("{field}choi"), e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    /// `[n_x, n_y, n_a, n_b]`.
    pub scenario: [usize; 4],
    /// `table[x][y][a][b] = p(ab|xy)`.
    pub table: Vec<Vec<Vec<Vec<f64>>>>,
}

impl BoxDoc {
    pub fn of(b: &BellBox) -> Self {
        let s = b.scenario();
        let table = (0..s.n_x)
            .map(|x| (0..s.n_y).map(|y| (0..s.n_a).map(|a| (0..s.n_b).map(|bb| b.p(x, y, a, bb)).collect()).collect()).collect())
            .collect();
        BoxDoc { scenario: [s.n_x, s.n_y, s.n_a, s.n_b], table }
    }

    fn to_box(&self) -> Result<BellBox> {
        let [nx, ny, na, nb] = self.scenario;
        let s = Scenario::new(nx, ny, na, nb).map_err(|e| Error::schema("scenario", e.to_string()))?;
        let mut flat = vec![0.0; s.table_len()];
        if self.table.len() != nx {
            return Err(Error::schema("table", format!("expected {nx} settings x, got {}", self.table.len())));
        }
        for (x, tx) in self.table.iter().enumerate() {
            if tx.len() != ny {
                return Err(Error::schema(format!("table[{x}]"), format!("expected {ny} settings y")));
            }
            for (y, txy) in tx.iter().enumerate() {
                if txy.len() != na || txy.iter().any(|r| r.len() != nb) {
                    return Err(Error::schema(format!("table[{x}][{y}]"), format!("expected a {na}x{nb} array")));
                }
                for (a, row) in txy.iter().enumerate() {
                    for (b, &p) in row.iter().enumerate() {
                        flat[s.index(x, y, a, b)] = p;
                    }
                }
            }
        }
        BellBox::new(s, flat).map_err(|e| Error::schema("table", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmDoc {
    pub d: usize,
    /// `elements[x][a] = M_{a|x}`.
    pub elements: Vec<Vec<MatrixDoc>>,
}

impl PovmDoc {
    pub fn of(s: &PovmSet) -> Self {
        PovmDoc { d: s.d(), elements: s.elements().iter().map(|row| row.iter().map(MatrixDoc::of).collect()).collect() }
    }

    fn to_povm(&self) -> Result<PovmSet> {
        let mut elems = Vec::with_capacity(self.elements.len());
        for (x, row) in self.elements.iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (a, m) in row.iter().enumerate() {
                r.push(m.to_matrix(&format!("elements[{x}][{a}]"))?);
            }
            elems.push(r);
        }
        PovmSet::new(self.d, elems).map_err(|e| Error::schema("elements", e.to_string()))
    }
}

// `flatten` and `deny_unknown_fields` do not combine in serde.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorDoc {
    pub name: String,
    #[serde(flatten)]
    pub family: Family,
    pub d_in: usize,
    pub d_out: usize,
    pub exactness: Exactness,
    pub classical: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<MatrixDoc>>,
}

impl DescriptorDoc {
    pub fn of(d: &FreeSetDescriptor) -> Self {
        let generators = match d.family {
            Family::GenericPolytope | Family::Singleton => d.generators().map(|g| g.iter().map(MatrixDoc::of).collect()),
            _ => None,
        };
        DescriptorDoc {
            name: d.name.clone(),
            family: d.family.clone(),
            d_in: d.d_in(),
            d_out: d.d_out(),
            exactness: d.exactness(),
            classical: d.is_classical(),
            generators,
        }
    }

    fn to_descriptor(&self) -> Result<FreeSetDescriptor> {
        let (di, dout) = (self.d_in, self.d_out);
        let gens = || -> Result<Vec<CMat>> {
            let g = self.generators.as_ref().ok_or_else(|| Error::schema("generators", "required for this family"))?;
            g.iter().enumerate().map(|(k, m)| m.to_matrix(&format!("generators[{k}]"))).collect()
        };
        let wrap = |r: Result<FreeSetDescriptor>| r.map_err(|e| Error::schema("family", e.to_string()));
        let desc = match &self.family {
            Family::Replacement => FreeSetDescriptor::replacement_channels(di, dout),
            Family::AllChannels => FreeSetDescriptor::all_channels(di, dout),
            Family::ClassicalChannels => FreeSetDescriptor::classical_channels(di, dout),
            Family::Ppt { parts: None } => FreeSetDescriptor::ppt_channels(di, dout),
            Family::Ppt { parts: Some(p) } => FreeSetDescriptor::ppt_bipartite(*p),
            Family::SepRelax { parts: None, level } => FreeSetDescriptor::sep_channels_relax(di, dout, *level),
            Family::SepRelax { parts: Some(p), level } => FreeSetDescriptor::sep_bipartite_relax(*p, *level),
            Family::LocalBoxes { scenario } => wrap(FreeSetDescriptor::local_boxes(*scenario))?,
            Family::NsBoxes { scenario } => FreeSetDescriptor::ns_boxes(*scenario),
            Family::CompatiblePovms { d, settings, outcomes } => FreeSetDescriptor::compatible_povms(*d, *settings, *outcomes),
            Family::PovmChannels { d, settings, outcomes } => FreeSetDescriptor::povm_channels(*d, *settings, *outcomes),
            Family::GenericPolytope => wrap(FreeSetDescriptor::generic_polytope(di, dout, gens()?))?,
            Family::Singleton => {
                let g = gens()?;
                let first = g.into_iter().next().ok_or_else(|| Error::schema("generators", "singleton needs one matrix"))?;
                let ch = Channel::new(di, dout, first).map_err(|e| Error::schema("generators[0]", e.to_string()))?;
                FreeSetDescriptor::singleton(&ch)
            }
        };
        if desc.dims() != (di, dout) {
            return Err(Error::schema("d_in", format!("family has signature {:?}, document says ({di}, {dout})", desc.dims())));
        }
        if desc.exactness() != self.exactness {
            return Err(Error::schema("exactness", format!("family is {:?}", desc.exactness())));
        }
        Ok(desc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PureStateDoc {
    pub dim_ref: usize,
    pub dim_in: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SuperchannelDoc {
    General {
        pre: ChannelDoc,
        post: ChannelDoc,
        memory: usize,
    },
    MeasurePrepare {
        input_state: PureStateDoc,
        effect: MatrixDoc,
        accept: ChannelDoc,
        reject: ChannelDoc,
    },
}

impl SuperchannelDoc {
    pub fn of(t: &Superchannel) -> Self {
        match t.form() {
            Form::General { pre, post, memory } => {
                SuperchannelDoc::General { pre: ChannelDoc::of(pre), post: ChannelDoc::of(post), memory: *memory }
            }
            Form::MeasurePrepare { input_state, effect, accept, reject } => {
                let a = &input_state.amplitudes;
                let imag = a.iter().any(|z| z.im != 0.0);
                SuperchannelDoc::MeasurePrepare {
                    input_state: PureStateDoc {
                        dim_ref: input_state.dim_ref,
                        dim_in: input_state.dim_in,
                        re: a.iter().map(|z| z.re).collect(),
                        im: imag.then(|| a.iter().map(|z| z.im).collect()),
                    },
                    effect: MatrixDoc::of(effect.matrix()),
                    accept: ChannelDoc::of(accept),
                    reject: ChannelDoc::of(reject),
                }
            }
        }
    }

    fn to_superchannel(&self) -> Result<Superchannel> {
        match self {
            SuperchannelDoc::General { pre, post, memory } => {
                Superchannel::general(pre.to_channel("pre.")?, post.to_channel("post.")?, *memory)
                    .map_err(|e| Error::schema("memory", e.to_string()))
            }
            SuperchannelDoc::MeasurePrepare { input_state, effect, accept, reject } => {
                let s = input_state;
                if s.im.as_ref().is_some_and(|im| im.len() != s.re.len()) {
                    return Err(Error::schema("input_state.im", "length differs from re"));
                }
                let amps = DVector::from_iterator(
                    s.re.len(),
                    s.re.iter().enumerate().map(|(k, &r)| num_complex::Complex64::new(r, s.im.as_ref().map_or(0.0, |im| im[k]))),
                );
                let psi = PureState::new(s.dim_ref, s.dim_in, amps).map_err(|e| Error::schema("input_state", e.to_string()))?;
                let p = HermitianMatrix::new(effect.to_matrix("effect")?).map_err(|e| Error::schema("effect", e.to_string()))?;
                Superchannel::measure_prepare(psi, p, accept.to_channel("accept.")?, reject.to_channel("reject.")?)
                    .map_err(|e| Error::schema("effect", e.to_string()))
            }
        }
    }
}

// ------------------------------------------------------------------ results

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotoneRecord {
    pub kind: MonotoneKind,
    pub theory: String,
    #[serde(with = "num")]
    pub eps: f64,
    #[serde(with = "num")]
    pub value: f64,
    pub bound_direction: BoundDirection,
    pub inaccurate: bool,
    pub notes: Vec<String>,
}

impl MonotoneRecord {
    pub fn of(r: &MonotoneResult, theory: &str, eps: f64) -> Self {
        MonotoneRecord {
            kind: r.kind,
            theory: theory.to_string(),
            eps,
            value: r.value,
            bound_direction: r.bound_direction,
            inaccurate: r.inaccurate,
            notes: r.notes.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreenessRecord {
    pub pass: bool,
    pub regime: Regime,
    pub checked: usize,
    #[serde(with = "num")]
    pub worst_distance: f64,
    #[serde(default)]
    pub weight_range: Option<(f64, f64)>,
}

impl FreenessRecord {
    pub fn of(f: &FreenessReport) -> Self {
        FreenessRecord {
            pass: f.pass,
            regime: f.regime,
            checked: f.checked,
            worst_distance: f.worst_distance,
            weight_range: f.weight_range,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRecord {
    pub guarantee: Guarantee,
    pub route: Route,
    pub fidelity_achieved: f64,
    pub fidelity_guarantee: f64,
    #[serde(with = "num")]
    pub resource: f64,
    #[serde(with = "num")]
    pub cost: f64,
    pub holds: bool,
    pub freeness: FreenessRecord,
    pub ledger: Vec<LedgerEntry>,
    pub notes: Vec<String>,
}

impl CertificateRecord {
    pub fn of(c: &TransformationCertificate) -> Self {
        CertificateRecord {
            guarantee: c.guarantee,
            route: c.route,
            fidelity_achieved: c.fidelity_achieved,
            fidelity_guarantee: c.fidelity_guarantee,
            resource: c.resource,
            cost: c.cost,
            holds: c.holds(),
            freeness: FreenessRecord::of(&c.freeness),
            ledger: c.ledger.clone(),
            notes: c.notes.clone(),
        }
    }
}

/// Outcome of a transformation request: the converse checks, and either the
/// obstruction or the certified superchannel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecord {
    pub verdict: Verdict,
    pub theory_from: String,
    pub theory_to: String,
    pub eps: f64,
    pub delta: f64,
    pub route: Route,
    #[serde(default)]
    pub obstruction: Option<String>,
    pub checks: Vec<Check>,
    pub bound_direction: BoundDirection,
    pub notes: Vec<String>,
    #[serde(default)]
    pub certificate: Option<CertificateRecord>,
    #[serde(default)]
    pub superchannel: Option<SuperchannelDoc>,
}

impl TransformRecord {
    pub fn of(r: &TransformReport, theory_from: &str, theory_to: &str, opts: &TransformOptions) -> Self {
        TransformRecord {
            verdict: r.verdict,
            theory_from: theory_from.to_string(),
            theory_to: theory_to.to_string(),
            eps: opts.eps,
            delta: opts.delta,
            route: opts.route,
            obstruction: r.obstruction.clone(),
            checks: r.checks.clone(),
            bound_direction: r.bound_direction,
            notes: r.notes.clone(),
            certificate: r.transformation.as_ref().map(|t| CertificateRecord::of(&t.certificate)),
            superchannel: r.transformation.as_ref().map(|t| SuperchannelDoc::of(&t.superchannel)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRecord {
    pub kind: RateKind,
    #[serde(with = "num")]
    pub eps: f64,
    #[serde(with = "num")]
    pub value: f64,
    #[serde(with = "num")]
    pub lower: f64,
    #[serde(with = "num")]
    pub upper: f64,
    pub exact: bool,
    #[serde(with = "num")]
    pub monotone: f64,
    #[serde(default)]
    pub target: Option<Target>,
    pub bound_direction: BoundDirection,
    #[serde(default)]
    pub certificate: Option<CertificateRecord>,
    pub notes: Vec<String>,
}

impl RateRecord {
    pub fn of(r: &RateResult, eps: f64) -> Self {
        RateRecord {
            kind: r.kind,
            eps,
            value: r.value,
            lower: r.lower,
            upper: r.upper,
            exact: r.exact,
            monotone: r.monotone,
            target: r.target.clone(),
            bound_direction: r.bound_direction,
            certificate: r.transformation.as_ref().map(|t| CertificateRecord::of(&t.certificate)),
            notes: r.notes.clone(),
        }
    }
}

// ------------------------------------------------------------------ documents

#[derive(Clone, Debug)]
pub enum Artifact {
    Channel(Channel),
    Box(BellBox),
    Povm(PovmSet),
    Descriptor(FreeSetDescriptor),
    Superchannel(Superchannel),
    Monotone(MonotoneRecord),
    Rate(RateRecord),
    Transform(TransformRecord),
}

impl Artifact {
    pub fn type_name(&self) -> &'static str {
        match self {
            Artifact::Channel(_) => "channel",
            Artifact::Box(_) => "box",
            Artifact::Povm(_) => "povm",
            Artifact::Descriptor(_) => "descriptor",
            Artifact::Superchannel(_) => "superchannel",
            Artifact::Monotone(_) => "monotone-result",
            Artifact::Rate(_) => "rate-result",
            Artifact::Transform(_) => "transform-result",
        }
    }

    pub fn into_superchannel(self) -> Result<Superchannel> {
        match self {
            Artifact::Superchannel(t) => Ok(t),
            Artifact::Transform(TransformRecord { superchannel: Some(doc), .. }) => doc.to_superchannel(),
            other => Err(Error::schema("type", format!("expected a superchannel, got {}", other.type_name()))),
        }
    }

    /// The channel an input artifact stands for (boxes and measurement
    /// sets through their embeddings).
    pub fn into_channel(self) -> Result<Channel> {
        match self {
            Artifact::Channel(c) => Ok(c),
            Artifact::Box(b) => Ok(b.to_channel()),
            Artifact::Povm(p) => Ok(p.to_channel()),
            other => Err(Error::schema("type", format!("expected a channel, box or povm document, got {}", other.type_name()))),
        }
    }
}

/// Wraps a body in the versioned envelope.
pub fn document(kind: &str, body: &impl Serialize) -> Result<Value> {
    let mut map = Map::new();
    map.insert("schema".into(), Value::String(SCHEMA.into()));
    map.insert("type".into(), Value::String(kind.into()));
    match serde_json::to_value(body)? {
        Value::Object(fields) => map.extend(fields),
        _ => return Err(Error::schema("type", "document body must be an object")),
    }
    Ok(Value::Object(map))
}

pub fn to_value(a: &Artifact) -> Result<Value> {
    match a {
        Artifact::Channel(c) => document("channel", &ChannelDoc::of(c)),
        Artifact::Box(b) => document("box", &BoxDoc::of(b)),
        Artifact::Povm(p) => document("povm", &PovmDoc::of(p)),
        Artifact::Descriptor(d) => document("descriptor", &DescriptorDoc::of(d)),
        Artifact::Superchannel(s) => document("superchannel", &SuperchannelDoc::of(s)),
        Artifact::Monotone(r) => document("monotone-result", r),
        Artifact::Rate(r) => document("rate-result", r),
        Artifact::Transform(r) => document("transform-result", r),
    }
}

pub fn to_string(a: &Artifact) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_value(a)?)?)
}

fn body<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(if path == "." { "(document)".to_string() } else { path }, e.into_inner().to_string())
    })
}

pub fn from_value(v: Value) -> Result<Artifact> {
    let Value::Object(mut map) = v else {
        return Err(Error::schema("(document)", "expected a JSON object"));
    };
    match map.remove("schema") {
        Some(Value::String(s)) if s == SCHEMA => {}
        Some(other) => return Err(Error::schema("schema", format!("unsupported schema {other}, expected {SCHEMA:?}"))),
        None => return Err(Error::schema("schema", "missing")),
    }
    let kind = match map.remove("type") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(Error::schema("type", format!("expected a string, got {other}"))),
        None => return Err(Error::schema("type", "missing")),
    };
    let v = Value::Object(map);
    Ok(match kind.as_str() {
        "channel" => Artifact::Channel(body::<ChannelDoc>(v)?.to_channel("")?),
        "box" => Artifact::Box(body::<BoxDoc>(v)?.to_box()?),
        "povm" => Artifact::Povm(body::<PovmDoc>(v)?.to_povm()?),
        "descriptor" => Artifact::Descriptor(body::<DescriptorDoc>(v)?.to_descriptor()?),
        "superchannel" => Artifact::Superchannel(body::<SuperchannelDoc>(v)?.to_superchannel()?),
        "monotone-result" => Artifact::Monotone(body(v)?),
        "rate-result" => Artifact::Rate(body(v)?),
        "transform-result" => Artifact::Transform(body(v)?),
        other => return Err(Error::schema("type", format!("unknown document type {other:?}"))),
    })
}

pub fn from_str(text: &str) -> Result<Artifact> {
    let v: Value = serde_json::from_str(text)?;
    from_value(v)
}

pub fn read(path: impl AsRef<Path>) -> Result<Artifact> {
    from_str(&std::fs::read_to_string(path)?)
}

pub fn write(path: impl AsRef<Path>, a: &Artifact) -> Result<()> {
    let mut s = to_string(a)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
