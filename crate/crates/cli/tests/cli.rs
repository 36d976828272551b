use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynres::io::{self, Artifact};
use dynres::scenarios::{BellBox, PovmSet};
use dynres::tasks::Verdict;
use dynres::Channel;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynres")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn put(dir: &Path, name: &str, a: Artifact) -> String {
    let p = dir.join(name);
    io::write(&p, &a).unwrap();
    p.to_string_lossy().into_owned()
}

struct Fixture {
    dir: TempDir,
    pr: String,
    bp: String,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let pr = put(dir.path(), "pr.json", Artifact::Box(BellBox::pr()));
        let bp = put(dir.path(), "bp0.2.json", Artifact::Box(BellBox::isotropic(0.2).unwrap()));
        Fixture { dir, pr, bp }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn monotone_of_pr_box() {
    let f = Fixture::new();
    let out = f.path("m.json");
    let o = run(&["monotone", "--measure", "rmax", "--theory", "local-boxes", "--in", &f.pr, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("rmax 1.333333 bound_direction=exact"), "{}", stdout(&o));
    let Artifact::Monotone(m) = io::read(&out).unwrap() else { panic!("not a monotone record") };
    assert!((m.value - 4.0 / 3.0).abs() < 1e-6);
    let o = run(&["monotone", "--measure", "rs", "--in", &f.pr]);
    assert!(stdout(&o).contains("rs 1.500000 bound_direction=exact"), "{}", stdout(&o));
}

#[test]
fn transform_to_pr_is_obstructed() {
    let f = Fixture::new();
    let out = f.path("t.json");
    let o = run(&["transform", "--from", &f.bp, "--to", &f.pr, "--eps", "0.05", "--out", out.to_str().unwrap()]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(2), "{s}");
    assert!(s.contains("verdict infeasible"), "{s}");
    assert!(s.contains("R_min(E) = 1.000000 < R_min(N) = 1.333333"), "{s}");
    assert!(s.lines().filter(|l| l.starts_with("check")).all(|l| l.contains("bound_direction=")));
    let Artifact::Transform(t) = io::read(&out).unwrap() else { panic!("not a transform record") };
    assert_eq!(t.verdict, Verdict::Infeasible);
    assert!(t.obstruction.is_some());
}

#[test]
fn two_copies_still_obstructed_by_support() {
    let f = Fixture::new();
    for p in [0.01, 0.1, 0.5] {
        let b2 = BellBox::isotropic(p).unwrap().tensor_power(2).unwrap();
        let src = put(f.dir.path(), "b2.json", Artifact::Box(b2));
        let o = run(&["transform", "--from", &src, "--to", &f.pr]);
        let s = stdout(&o);
        assert_eq!(o.status.code(), Some(2), "{s}");
        assert!(s.contains("obstruction: R_min(E) >= R_min(N) fails: 1.000000 < 1.333333"), "{s}");
    }
}

#[test]
fn feasible_transform_verifies() {
    let f = Fixture::new();
    let out = f.path("t.json");
    let o = run(&["transform", "--from", &f.pr, "--to", &f.bp, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict feasible"));
    let o = run(&["verify", "--superchannel", out.to_str().unwrap(), "--theory", "local-boxes", "--from", &f.pr, "--to", &f.bp]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}");
    assert!(s.contains("freeness pass=true"), "{s}");
    let fid: f64 = s.lines().find_map(|l| l.strip_prefix("fidelity ")).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!(fid >= 1.0 - 1e-5);
}

#[test]
fn scan_is_deterministic_and_anchored() {
    let f = Fixture::new();
    let (a, b) = (f.path("a.csv"), f.path("b.csv"));
    for p in [&a, &b] {
        let o = run(&["scan-isotropic", "--points", "41", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let mut rdr = csv::Reader::from_path(&a).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["p", "r_max", "r_s", "r_min", "bound_direction"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 41);
    let v = |k: usize| rows[0][k].parse::<f64>().unwrap();
    assert_eq!(v(0), 0.0);
    assert!((v(1) - 4.0 / 3.0).abs() < 1e-6 && (v(2) - 1.5).abs() < 1e-6 && (v(3) - 4.0 / 3.0).abs() < 1e-6);
    assert!(rows.iter().all(|r| &r[4] == "exact"));
}

#[test]
fn rates_of_identity() {
    let f = Fixture::new();
    let id = put(f.dir.path(), "id2.json", Artifact::Channel(Channel::identity(2)));
    let out = f.path("rates.csv");
    let o = run(&["rates", "--in", &id, "--theory", "ns", "--eps", "0,0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        assert_eq!((&r[1], &r[5], &r[9]), ("1.0", "1.0", "exact"));
    }
    let side = out.with_extension("distillable-eps0.json");
    assert!(matches!(io::read(side).unwrap(), Artifact::Rate(_)));
}

#[test]
fn incompat_levels_agree() {
    let f = Fixture::new();
    let xz = put(f.dir.path(), "xz.json", Artifact::Povm(PovmSet::xz()));
    let o = run(&["incompat", "--in", &xz]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0));
    let vals: Vec<f64> = s
        .lines()
        .filter(|l| l.starts_with("povm ") || l.starts_with("channel "))
        .map(|l| l.split(' ').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 2);
    assert!((vals[0] - vals[1]).abs() < 1e-5);
}

#[test]
fn malformed_input_names_the_field() {
    let f = Fixture::new();
    let mut v = io::to_value(&Artifact::Box(BellBox::pr())).unwrap();
    v["table"][0][1][1] = serde_json::json!([0.5, "half"]);
    let p = f.path("bad.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let o = run(&["monotone", "--measure", "rmax", "--in", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("table[0][1][1][1]"), "{err}");

    let o = run(&["monotone", "--measure", "rmax", "--in", f.path("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["monotone", "--measure", "rmax", "--in", &f.pr, "--eps", "1.5"]);
    assert_ne!(o.status.code(), Some(0));
}
