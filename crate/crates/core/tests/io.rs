use dynres::io::{self, Artifact, MonotoneRecord};
use dynres::linalg::{self, CMat};
use dynres::monotones::{self, BoundDirection, MonotoneKind};
use dynres::scenarios::{BellBox, PovmSet, Scenario};
use dynres::superchannels::Superchannel;
use dynres::{choi_of_kraus, Channel, Error, FreeSetDescriptor, HermitianMatrix, PureState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn max_dev(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Emit, parse, emit again: the two JSON values must coincide.
fn round_trip(a: &Artifact) -> Artifact {
    let text = io::to_string(a).unwrap();
    let back = io::from_str(&text).unwrap();
    assert_eq!(io::to_value(&back).unwrap(), io::to_value(a).unwrap(), "{text}");
    back
}

fn schema_field(e: Error) -> String {
    match e {
        Error::Schema { field, .. } => field,
        other => panic!("expected a schema error, got {other}"),
    }
}

#[test]
fn channels_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (di, dout) in [(2, 2), (2, 3), (3, 2)] {
        let ch = choi_of_kraus(&linalg::random_kraus(di, dout, 2, &mut rng), di, dout).unwrap();
        let Artifact::Channel(back) = round_trip(&Artifact::Channel(ch.clone())) else { panic!() };
        assert_eq!(back.dims(), (di, dout));
        assert!(max_dev(back.choi(), ch.choi()) == 0.0);
    }
    // Real Choi matrices omit the imaginary part.
    let v = io::to_value(&Artifact::Channel(Channel::identity(2))).unwrap();
    assert!(v["choi"].get("im").is_none());
    assert_eq!(v["schema"], "dynres/1");
    assert_eq!(v["type"], "channel");
}

#[test]
fn boxes_use_nested_tables() {
    let pr = BellBox::pr();
    let v = io::to_value(&Artifact::Box(pr.clone())).unwrap();
    assert_eq!(v["scenario"], json!([2, 2, 2, 2]));
    assert_eq!(v["table"][1][1][0][1], json!(0.5));
    assert_eq!(v["table"][1][1][0][0], json!(0.0));
    let Artifact::Box(back) = round_trip(&Artifact::Box(pr.clone())) else { panic!() };
    assert_eq!(back.table(), pr.table());
    round_trip(&Artifact::Box(BellBox::isotropic(0.2).unwrap()));
    let s = Scenario::new(3, 2, 2, 3).unwrap();
    round_trip(&Artifact::Box(BellBox::white_noise(s)));
}

#[test]
fn signalling_box_is_rejected_with_reason() {
    let mut v = io::to_value(&Artifact::Box(BellBox::pr())).unwrap();
    v["table"][0][0] = json!([[1.0, 0.0], [0.0, 0.0]]);
    v["table"][0][1] = json!([[0.0, 0.0], [0.0, 1.0]]);
    let e = io::from_value(v).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("signalling"), "{msg}");
    assert_eq!(schema_field(e), "table");
}

#[test]
fn povms_round_trip_with_complex_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = PovmSet::random_projective(2, 2, &mut rng);
    assert!(s.elements().iter().flatten().any(|m| m.iter().any(|z| z.im.abs() > 1e-6)));
    let Artifact::Povm(back) = round_trip(&Artifact::Povm(s.clone())) else { panic!() };
    for (x, row) in s.elements().iter().enumerate() {
        for (a, m) in row.iter().enumerate() {
            assert!(max_dev(m, &back.elements()[x][a]) < 1e-15);
        }
    }
    round_trip(&Artifact::Povm(PovmSet::noisy(&PovmSet::xz(), 0.8).unwrap()));
}

#[test]
fn every_descriptor_family_round_trips() {
    let s = Scenario::CHSH;
    let vertex = CMat::from_diagonal(&nalgebra::DVector::from_element(4, linalg::c(0.5)));
    let descs = vec![
        FreeSetDescriptor::replacement_channels(2, 3),
        FreeSetDescriptor::all_channels(2, 2),
        FreeSetDescriptor::classical_channels(3, 2),
        FreeSetDescriptor::ppt_channels(4, 4),
        FreeSetDescriptor::ppt_bipartite([2, 2, 2, 2]),
        FreeSetDescriptor::sep_channels_relax(4, 4, 2),
        FreeSetDescriptor::local_boxes(s).unwrap(),
        FreeSetDescriptor::ns_boxes(s),
        FreeSetDescriptor::compatible_povms(2, 2, 2),
        FreeSetDescriptor::povm_channels(2, 2, 2),
        FreeSetDescriptor::generic_polytope(2, 2, vec![Channel::identity(2).choi().clone(), vertex.clone()]).unwrap(),
        FreeSetDescriptor::singleton(&Channel::depolarizing(2, 0.5)),
    ];
    for d in descs {
        let Artifact::Descriptor(back) = round_trip(&Artifact::Descriptor(d.clone())) else { panic!() };
        assert_eq!(back.family, d.family);
        assert_eq!(back.dims(), d.dims());
        assert_eq!(back.exactness(), d.exactness());
    }
}

#[test]
fn superchannels_round_trip_and_act_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pre = choi_of_kraus(&linalg::random_kraus(2, 4, 2, &mut rng), 2, 4).unwrap();
    let post = choi_of_kraus(&linalg::random_kraus(4, 2, 2, &mut rng), 4, 2).unwrap();
    let general = Superchannel::general(pre, post, 2).unwrap();
    let psi = PureState::purification(&linalg::random_density(2, 2, &mut rng));
    let p = HermitianMatrix::new(Channel::identity(2).choi_state()).unwrap();
    let mp = Superchannel::measure_prepare(psi, p, Channel::identity(2), Channel::depolarizing(2, 1.0)).unwrap();
    let l = choi_of_kraus(&linalg::random_kraus(2, 2, 2, &mut rng), 2, 2).unwrap();
    for t in [general, mp] {
        let Artifact::Superchannel(back) = round_trip(&Artifact::Superchannel(t.clone())) else { panic!() };
        assert!(max_dev(back.apply(&l).unwrap().choi(), t.apply(&l).unwrap().choi()) < 1e-12);
    }
}

#[test]
fn results_encode_infinities_as_strings() {
    let r = monotones::r_max(&BellBox::pr().to_channel(), &FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap()).unwrap();
    let rec = MonotoneRecord::of(&r, "local-boxes", 0.0);
    assert_eq!(rec.bound_direction, BoundDirection::Exact);
    round_trip(&Artifact::Monotone(rec.clone()));
    let inf = MonotoneRecord { kind: MonotoneKind::RMin, value: f64::INFINITY, ..rec };
    let v = io::to_value(&Artifact::Monotone(inf.clone())).unwrap();
    assert_eq!(v["value"], "inf");
    let Artifact::Monotone(back) = round_trip(&Artifact::Monotone(inf)) else { panic!() };
    assert_eq!(back.value, f64::INFINITY);
}

#[test]
fn malformed_documents_name_the_field() {
    let good = io::to_value(&Artifact::Channel(Channel::identity(2))).unwrap();

    let mut v = good.clone();
    v["schema"] = json!("dynres/0");
    assert_eq!(schema_field(io::from_value(v).unwrap_err()), "schema");

    let mut v = good.clone();
    v.as_object_mut().unwrap().remove("type");
    assert_eq!(schema_field(io::from_value(v).unwrap_err()), "type");

    let mut v = good.clone();
    v["choi"]["re"][1][2] = json!("x");
    assert_eq!(schema_field(io::from_value(v).unwrap_err()), "choi.re[1][2]");

    let mut v = good.clone();
    v["d_out"] = Value::Null;
    assert_eq!(schema_field(io::from_value(v).unwrap_err()), "d_out");

    let mut v = good.clone();
    v["choi"]["re"][0][0] = json!(2.0);
    let e = io::from_value(v).unwrap_err();
    assert_eq!(schema_field(e), "choi");

    let mut v = good;
    v["type"] = json!("tensor");
    assert_eq!(schema_field(io::from_value(v).unwrap_err()), "type");
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pr.json");
    io::write(&path, &Artifact::Box(BellBox::pr())).unwrap();
    let ch = io::read(&path).unwrap().into_channel().unwrap();
    assert!(max_dev(ch.choi(), BellBox::pr().to_channel().choi()) == 0.0);
}
