//! Writes the standard input documents used by the guide and the CLI tests:
//! `cargo run --example artifacts -- <dir>`.

use std::path::PathBuf;

use dynres::io::{self, Artifact};
use dynres::scenarios::{BellBox, PovmSet};
use dynres::Channel;

fn main() -> dynres::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let mut docs = vec![
        ("pr.json".to_string(), Artifact::Box(BellBox::pr())),
        ("xz.json".to_string(), Artifact::Povm(PovmSet::xz())),
        ("xz-noisy0.8.json".to_string(), Artifact::Povm(PovmSet::noisy(&PovmSet::xz(), 0.8)?)),
        ("id2.json".to_string(), Artifact::Channel(Channel::identity(2))),
        ("dephasing0.1.json".to_string(), Artifact::Channel(Channel::dephasing(2, 0.1))),
        ("depolarizing0.2.json".to_string(), Artifact::Channel(Channel::depolarizing(2, 0.2))),
    ];
    for p in [0.01, 0.1, 0.2, 0.5] {
        let b = BellBox::isotropic(p)?;
        docs.push((format!("bp{p}-x2.json"), Artifact::Box(b.tensor_power(2)?)));
        docs.push((format!("bp{p}.json"), Artifact::Box(b)));
    }
    for (name, doc) in &docs {
        io::write(dir.join(name), doc)?;
    }
    println!("wrote {} documents to {}", docs.len(), dir.display());
    Ok(())
}
