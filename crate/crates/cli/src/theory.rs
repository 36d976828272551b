//! Theory names → free-set descriptors, with dimensions taken from the
//! artifact the theory applies to.

use clap::Args;
use dynres::freesets::Parts;
use dynres::io::{self, Artifact};
use dynres::scenarios::Scenario;
use dynres::FreeSetDescriptor;

use crate::CliError;

#[derive(Args, Clone, Debug, Default)]
pub struct TheoryArgs {
    /// local-boxes | ns-boxes | replacement | all-channels | classical | ppt |
    /// sep-relax | compatible-povms | povm-channels | <descriptor.json>
    #[arg(long)]
    pub theory: Option<String>,
    /// Bell scenario `nx,ny,na,nb` (default: from the box, or CHSH).
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    /// Bipartite split `a_in,b_in,a_out,b_out` for ppt / sep-relax.
    #[arg(long, value_parser = parse_parts)]
    pub parts: Option<Parts>,
    /// Symmetric-extension level of sep-relax.
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    /// Qudit dimension of measurement theories (default: from the POVM).
    #[arg(long)]
    pub qudit: Option<usize>,
}

fn parse_list<const N: usize>(s: &str) -> Result<[usize; N], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected {N} comma-separated integers, got {}", v.len()))
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    let [nx, ny, na, nb] = parse_list::<4>(s)?;
    Scenario::new(nx, ny, na, nb).map_err(|e| e.to_string())
}

fn parse_parts(s: &str) -> Result<Parts, String> {
    parse_list::<4>(s)
}

/// What an input artifact says about the structure of its theory.
#[derive(Clone, Copy, Debug)]
pub enum Hint {
    Plain,
    Box(Scenario),
    Povm { d: usize },
}

impl Hint {
    pub fn of(a: &Artifact) -> Hint {
        match a {
            Artifact::Box(b) => Hint::Box(b.scenario()),
            Artifact::Povm(p) => Hint::Povm { d: p.d() },
            _ => Hint::Plain,
        }
    }

    pub fn default_theory(self) -> Option<&'static str> {
        match self {
            Hint::Box(_) => Some("local-boxes"),
            Hint::Povm { .. } => Some("compatible-povms"),
            Hint::Plain => None,
        }
    }
}

pub fn theory_name(explicit: Option<&str>, hint: Hint) -> Result<String, CliError> {
    explicit
        .or(hint.default_theory())
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage("channel inputs need --theory".into()))
}

pub fn resolve(name: &str, dims: (usize, usize), hint: Hint, args: &TheoryArgs) -> Result<FreeSetDescriptor, CliError> {
    let (d_in, d_out) = dims;
    let scenario = || -> Result<Scenario, CliError> {
        if let Some(s) = args.scenario {
            return Ok(s);
        }
        match hint {
            Hint::Box(s) => Ok(s),
            _ if dims == (4, 4) => Ok(Scenario::CHSH),
            _ => Err(CliError::Usage(format!("box theory on a {d_in}→{d_out} channel needs --scenario"))),
        }
    };
    let povm = || -> Result<(usize, usize, usize), CliError> {
        let d = args.qudit.or(match hint {
            Hint::Povm { d } => Some(d),
            _ => None,
        });
        let d = d.ok_or_else(|| CliError::Usage("measurement theory needs --qudit".into()))?;
        if d == 0 || d_in % d != 0 {
            return Err(CliError::Usage(format!("qudit dimension {d} does not divide the input dimension {d_in}")));
        }
        Ok((d, d_in / d, d_out))
    };
    let desc = match name {
        "local-boxes" => FreeSetDescriptor::local_boxes(scenario()?)?,
        "ns-boxes" => FreeSetDescriptor::ns_boxes(scenario()?),
        "replacement" => FreeSetDescriptor::replacement_channels(d_in, d_out),
        "all-channels" => FreeSetDescriptor::all_channels(d_in, d_out),
        "classical" => FreeSetDescriptor::classical_channels(d_in, d_out),
        "ppt" => match args.parts {
            Some(p) => FreeSetDescriptor::ppt_bipartite(p),
            None => FreeSetDescriptor::ppt_channels(d_in, d_out),
        },
        "sep-relax" => match args.parts {
            Some(p) => FreeSetDescriptor::sep_bipartite_relax(p, args.level),
            None => FreeSetDescriptor::sep_channels_relax(d_in, d_out, args.level),
        },
        "compatible-povms" => {
            let (d, s, o) = povm()?;
            FreeSetDescriptor::compatible_povms(d, s, o)
        }
        "povm-channels" => {
            let (d, s, o) = povm()?;
            FreeSetDescriptor::povm_channels(d, s, o)
        }
        path if path.ends_with(".json") => match io::read(path)? {
            Artifact::Descriptor(d) => d,
            other => {
                return Err(CliError::Usage(format!("{path} holds a {} document, not a descriptor", other.type_name())))
            }
        },
        other => return Err(CliError::Usage(format!("unknown theory {other:?}"))),
    };
    if desc.dims() != dims {
        return Err(CliError::Usage(format!(
            "theory {} acts on {:?} channels, the input is {d_in}→{d_out}",
            desc.name,
            desc.dims()
        )));
    }
    Ok(desc)
}
