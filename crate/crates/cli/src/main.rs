//! `dynres`: monotones, transformation checks, rate sweeps, the isotropic
//! box scan, incompatibility robustness and freeness verification.
//!
//! Exit status: 0 success, 2 a negative scientific answer (infeasible or
//! undecided transformation, non-free superchannel), 1 errors.

mod theory;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynres::io::{self, Artifact, MonotoneRecord, RateRecord, TransformRecord};
use dynres::monotones::{self, BoundDirection, MonotoneKind, MonotoneResult, SmoothMetric};
use dynres::scenarios::{self, IncompatLevel};
use dynres::superchannels::{self, ConstructOptions, Regime, Route};
use dynres::tasks::{self, CodeClass, RateOptions, TransformOptions, Verdict};
use dynres::{worst_case_fidelity, Channel, FreeSetDescriptor};
use rayon::prelude::*;
use serde::Serialize;

use theory::{Hint, TheoryArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] dynres::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "dynres", version, about = "One-shot resource monotones and transformations of quantum channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one monotone of a channel, box or measurement set.
    Monotone(MonotoneArgs),
    /// Decide whether `--from` can be converted into `--to` by free superchannels.
    Transform(TransformArgs),
    /// One-shot quantum capacity and simulation cost (or entanglement rates) over an ε grid.
    Rates(RatesArgs),
    /// R_max, R_s and R_min of the isotropic box B_p along a grid of p.
    ScanIsotropic(ScanArgs),
    /// Incompatibility robustness of a measurement set.
    Incompat(IncompatArgs),
    /// Check that a superchannel maps free channels to free channels.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    Rmax,
    Rs,
    Rmin,
    RminAff,
    Rh,
    RhAff,
    G,
    GAff,
}

impl Measure {
    fn kind(self) -> MonotoneKind {
        match self {
            Measure::Rmax => MonotoneKind::RMax,
            Measure::Rs => MonotoneKind::RS,
            Measure::Rmin => MonotoneKind::RMin,
            Measure::RminAff => MonotoneKind::RMinAff,
            Measure::Rh => MonotoneKind::RH,
            Measure::RhAff => MonotoneKind::RHAff,
            Measure::G => MonotoneKind::G,
            Measure::GAff => MonotoneKind::GAff,
        }
    }

    fn label(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum RouteArg {
    #[default]
    Standard,
    Affine,
}

impl From<RouteArg> for Route {
    fn from(r: RouteArg) -> Route {
        match r {
            RouteArg::Standard => Route::Standard,
            RouteArg::Affine => Route::Affine,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum MetricArg {
    #[default]
    WorstCase,
    Choi,
}

impl From<MetricArg> for SmoothMetric {
    fn from(m: MetricArg) -> SmoothMetric {
        match m {
            MetricArg::WorstCase => SmoothMetric::WorstCase,
            MetricArg::Choi => SmoothMetric::Choi,
        }
    }
}

fn parse_eps(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if (0.0..1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside [0, 1)"))
    }
}

#[derive(Args)]
struct MonotoneArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    measure: Measure,
    /// Type-I error of rh / rh-aff, smoothing radius of rmax / rs.
    #[arg(long, default_value_t = 0.0, value_parser = parse_eps)]
    eps: f64,
    /// Fidelity-measure argument `m` of g / g-aff.
    #[arg(long)]
    m: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    metric: MetricArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    theory: TheoryArgs,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    to: PathBuf,
    /// Theory of the target (default: same name as --theory).
    #[arg(long)]
    theory_to: Option<String>,
    #[arg(long, default_value_t = 0.0, value_parser = parse_eps)]
    eps: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_eps)]
    delta: f64,
    #[arg(long, value_enum, default_value_t)]
    route: RouteArg,
    #[arg(long, value_enum, default_value_t)]
    metric: MetricArg,
    /// Seed of the sampled freeness check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    theory: TheoryArgs,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Code class: ns | ppt | sep-relax.
    #[arg(long, default_value = "ns")]
    theory: String,
    /// Comma-separated ε grid.
    #[arg(long, value_delimiter = ',', default_value = "0", value_parser = parse_eps)]
    eps: Vec<f64>,
    /// Bipartite split `a_in,b_in,a_out,b_out`: entanglement rates instead of Q / C.
    #[arg(long, value_parser = parse_parts_arg)]
    parts: Option<dynres::freesets::Parts>,
    #[arg(long, value_enum, default_value_t)]
    metric: MetricArg,
    /// Skip building the achieving superchannels.
    #[arg(long)]
    no_certificate: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_parts_arg(s: &str) -> std::result::Result<dynres::freesets::Parts, String> {
    let v: Vec<usize> = s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| e.to_string())).collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected a_in,b_in,a_out,b_out".to_string())
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, default_value_t = 41)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum LevelArg {
    Povm,
    Channel,
    #[default]
    Both,
}

#[derive(Args)]
struct IncompatArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    level: LevelArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Superchannel document, or a transform result carrying one.
    #[arg(long)]
    superchannel: PathBuf,
    #[arg(long)]
    theory_to: Option<String>,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional source and target: also report F(Θ(E), N).
    #[arg(long, requires = "to")]
    from: Option<PathBuf>,
    #[arg(long, requires = "from")]
    to: Option<PathBuf>,
    #[command(flatten)]
    theory: TheoryArgs,
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        format!("{x}")
    }
}

fn read_channel(path: &Path) -> Result<(Channel, Artifact)> {
    let a = io::read(path)?;
    let hint = a.clone();
    Ok((a.into_channel()?, hint))
}

fn write_json(path: &Path, a: &Artifact) -> Result<()> {
    io::write(path, a)?;
    Ok(())
}

fn with_out<T>(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<T>) -> Result<T> {
    match path {
        Some(p) => {
            let mut file = File::create(p)?;
            let r = f(&mut file)?;
            file.flush()?;
            Ok(r)
        }
        None => f(&mut std::io::stdout().lock()),
    }
}

fn report(label: &str, r: &MonotoneResult) {
    println!("{label} {} bound_direction={}", num(r.value), r.bound_direction.as_str());
    for n in &r.notes {
        println!("note: {n}");
    }
}

fn cmd_monotone(a: MonotoneArgs) -> Result<ExitCode> {
    let (ch, art) = read_channel(&a.input)?;
    let hint = Hint::of(&art);
    let name = theory::theory_name(a.theory.theory.as_deref(), hint)?;
    let kind = a.measure.kind();
    let r = match (&art, name.as_str(), kind) {
        // support argument; avoids enumerating large local polytopes
        (Artifact::Box(b), "local-boxes", MonotoneKind::RMin) if b.has_full_support() => scenarios::box_r_min(b)?,
        _ => {
            let o = theory::resolve(&name, ch.dims(), hint, &a.theory)?;
            match kind {
                MonotoneKind::RMax | MonotoneKind::RS if a.eps > 0.0 => {
                    monotones::smooth(kind, &ch, &o, a.eps, a.metric.into())?
                }
                MonotoneKind::G | MonotoneKind::GAff => {
                    let m = a.m.ok_or_else(|| CliError::Usage("g / g-aff need --m".into()))?;
                    monotones::compute(kind, &ch, &o, a.eps, m)?
                }
                _ => monotones::compute(kind, &ch, &o, a.eps, 0.0)?,
            }
        }
    };
    report(&a.measure.label(), &r);
    if let Some(p) = &a.out {
        write_json(p, &Artifact::Monotone(MonotoneRecord::of(&r, &name, a.eps)))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_transform(a: TransformArgs) -> Result<ExitCode> {
    let (e, ea) = read_channel(&a.from)?;
    let (n, na) = read_channel(&a.to)?;
    let (he, hn) = (Hint::of(&ea), Hint::of(&na));
    let name_from = theory::theory_name(a.theory.theory.as_deref(), he)?;
    let name_to = match &a.theory_to {
        Some(t) => t.clone(),
        None => theory::theory_name(a.theory.theory.as_deref(), hn)?,
    };
    // the target theory infers its own scenario / qudit from the target
    let to_args = TheoryArgs { scenario: None, qudit: None, ..a.theory.clone() };
    let o_prime = theory::resolve(&name_to, n.dims(), hn, &to_args)?;
    let o = match theory::resolve(&name_from, e.dims(), he, &a.theory) {
        Ok(o) => Some(o),
        Err(CliError::Lib(err @ dynres::Error::Unsupported(_))) if matches!(he, Hint::Box(_)) => {
            println!("note: source theory unavailable ({err})");
            None
        }
        Err(err) => return Err(err),
    };
    let opts = TransformOptions {
        eps: a.eps,
        delta: a.delta,
        route: a.route.into(),
        metric: a.metric.into(),
        construct: ConstructOptions { n_samples: a.samples, seed: a.seed, ..ConstructOptions::default() },
    };
    let r = tasks::assess_transformation(&e, &n, o.as_ref(), &o_prime, &opts)?;
    for c in &r.checks {
        println!(
            "check {}: {} vs {} holds={} decisive={} bound_direction={}",
            c.condition,
            num(c.source),
            num(c.target),
            c.holds,
            c.decisive,
            c.bound_direction.as_str()
        );
    }
    let verdict = match r.verdict {
        Verdict::Feasible => "feasible",
        Verdict::Infeasible => "infeasible",
        Verdict::Undecided => "undecided",
    };
    println!("verdict {verdict} bound_direction={}", r.bound_direction.as_str());
    if let Some(ob) = &r.obstruction {
        println!("obstruction: {ob}");
    }
    if let Some(t) = &r.transformation {
        let c = &t.certificate;
        println!(
            "certificate fidelity {} guarantee {} freeness={} regime={:?} bound_direction={}",
            num(c.fidelity_achieved),
            num(c.fidelity_guarantee),
            c.freeness.pass,
            c.freeness.regime,
            r.bound_direction.as_str()
        );
    }
    for note in &r.notes {
        println!("note: {note}");
    }
    if let Some(p) = &a.out {
        write_json(p, &Artifact::Transform(TransformRecord::of(&r, &name_from, &name_to, &opts)))?;
    }
    Ok(if r.verdict == Verdict::Feasible { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

#[derive(Serialize)]
struct RateRow {
    eps: f64,
    q: f64,
    q_lower: f64,
    q_upper: f64,
    q_exact: bool,
    c: f64,
    c_lower: f64,
    c_upper: f64,
    c_exact: bool,
    bound_direction: BoundDirection,
}

fn cmd_rates(a: RatesArgs) -> Result<ExitCode> {
    let (e, _) = read_channel(&a.input)?;
    let class = CodeClass::parse(&a.theory)?;
    let opts = RateOptions {
        certificate: !a.no_certificate,
        construct: ConstructOptions { seed: a.seed, ..ConstructOptions::default() },
        metric: a.metric.into(),
    };
    let rows: Vec<(tasks::RateResult, tasks::RateResult)> = a
        .eps
        .par_iter()
        .map(|&eps| -> Result<_> {
            Ok(match a.parts {
                Some(p) => {
                    let r = tasks::channel_entanglement_rates_with(&e, p, class, eps, &opts)?;
                    (r.distillable, r.cost)
                }
                None => {
                    let r = tasks::capacity_suite_with(&e, class, eps, &opts)?;
                    (r.q, r.c)
                }
            })
        })
        .collect::<Result<_>>()?;
    with_out(a.out.as_deref(), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for (&eps, (q, c)) in a.eps.iter().zip(&rows) {
            csv.serialize(RateRow {
                eps,
                q: q.value,
                q_lower: q.lower,
                q_upper: q.upper,
                q_exact: q.exact,
                c: c.value,
                c_lower: c.lower,
                c_upper: c.upper,
                c_exact: c.exact,
                bound_direction: q.bound_direction.combine(c.bound_direction),
            })?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if let Some(p) = &a.out {
        // one JSON record per grid point next to the CSV
        for (&eps, (q, c)) in a.eps.iter().zip(&rows) {
            for r in [q, c] {
                let kind = match r.kind {
                    tasks::RateKind::Distillable => "distillable",
                    tasks::RateKind::Cost => "cost",
                };
                let path = p.with_extension(format!("{kind}-eps{eps}.json"));
                write_json(&path, &Artifact::Rate(RateRecord::of(r, eps)))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan(a: ScanArgs) -> Result<ExitCode> {
    let rows = scenarios::isotropic_scan(&scenarios::unit_grid(a.points))?;
    with_out(a.out.as_deref(), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_incompat(a: IncompatArgs) -> Result<ExitCode> {
    let s = match io::read(&a.input)? {
        Artifact::Povm(s) => s,
        other => return Err(CliError::Usage(format!("expected a povm document, got {}", other.type_name()))),
    };
    let levels: &[(IncompatLevel, &str)] = match a.level {
        LevelArg::Povm => &[(IncompatLevel::Povm, "povm")],
        LevelArg::Channel => &[(IncompatLevel::Channel, "channel")],
        LevelArg::Both => &[(IncompatLevel::Povm, "povm"), (IncompatLevel::Channel, "channel")],
    };
    if a.out.is_some() && levels.len() > 1 {
        return Err(CliError::Usage("--out needs a single --level".into()));
    }
    for &(level, label) in levels {
        let r = scenarios::incompatibility_robustness(&s, level)?;
        report(label, &r);
        if let Some(p) = &a.out {
            write_json(p, &Artifact::Monotone(MonotoneRecord::of(&r, &format!("compatible-povms/{label}"), 0.0)))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let theta = io::read(&a.superchannel)?.into_superchannel()?;
    let (ha, hb) = match (&a.from, &a.to) {
        (Some(f), Some(t)) => (Some(read_channel(f)?), Some(read_channel(t)?)),
        _ => (None, None),
    };
    let hint_in = ha.as_ref().map_or(Hint::Plain, |(_, x)| Hint::of(x));
    let hint_out = hb.as_ref().map_or(Hint::Plain, |(_, x)| Hint::of(x));
    let name = theory::theory_name(a.theory.theory.as_deref(), hint_in)?;
    let name_to = a.theory_to.clone().unwrap_or_else(|| name.clone());
    let o: FreeSetDescriptor = theory::resolve(&name, theta.input_signature(), hint_in, &a.theory)?;
    let to_args = TheoryArgs { scenario: None, qudit: None, ..a.theory.clone() };
    let o_prime = theory::resolve(&name_to, theta.output_signature(), hint_out, &to_args)?;
    let f = superchannels::verify_freeness(&theta, &o, &o_prime, a.samples, a.seed)?;
    // sampled checks only bound the worst distance from below
    let dir = if f.regime == Regime::Sampled { BoundDirection::Lower } else { BoundDirection::Exact };
    println!(
        "freeness pass={} regime={:?} checked={} worst_distance={} bound_direction={}",
        f.pass,
        f.regime,
        f.checked,
        num(f.worst_distance),
        dir.as_str()
    );
    if let (Some((e, _)), Some((n, _))) = (&ha, &hb) {
        let fid = worst_case_fidelity(&theta.apply(e)?, n)?;
        println!("fidelity {} bound_direction={}", num(fid.value), BoundDirection::Exact.as_str());
    }
    Ok(if f.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Monotone(a) => cmd_monotone(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Rates(a) => cmd_rates(a),
        Command::ScanIsotropic(a) => cmd_scan(a),
        Command::Incompat(a) => cmd_incompat(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
