mod common;

use common::{boxch, idx, isotropic, local, local_distance, pr, table, vertices};
use dynres::linalg::{self, c, eye, kron, CMat};
use dynres::monotones;
use dynres::scenarios::Scenario;
use dynres::superchannels::{self as sc, Form, Regime, Route, Superchannel};
use dynres::{choi_of_kraus, worst_case_fidelity, Channel, Error, FreeSetDescriptor, HermitianMatrix, PureState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_dev(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn identity_superchannel_is_trivial() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let id = Superchannel::identity(2, 3);
    for _ in 0..5 {
        let l = choi_of_kraus(&linalg::random_kraus(2, 3, 2, &mut rng), 2, 3).unwrap();
        assert!(max_dev(id.apply(&l).unwrap().choi(), l.choi()) < 1e-12);
    }
    let ppt = FreeSetDescriptor::ppt_channels(2, 2);
    let r = sc::verify_freeness(&Superchannel::identity(2, 2), &ppt, &ppt, 4, 3).unwrap();
    assert!(r.pass);
    assert_eq!(r.regime, Regime::Sampled);
    let l = local();
    let r = sc::verify_freeness(&Superchannel::identity(4, 4), &l, &l, 4, 3).unwrap();
    assert!(r.pass);
    assert_eq!(r.regime, Regime::Generators);
    assert!(r.checked >= 16);
}

/// Kraus operators of `post ∘ (L ⊗ id_m) ∘ pre` multiplied out by hand.
#[test]
fn general_form_matches_kraus_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (new_in, d_in, d_out, new_out, m) = (2, 2, 3, 2, 2);
    let ka = linalg::random_kraus(new_in, d_in * m, 2, &mut rng);
    let kl = linalg::random_kraus(d_in, d_out, 3, &mut rng);
    let kb = linalg::random_kraus(d_out * m, new_out, 3, &mut rng);
    let pre = choi_of_kraus(&ka, new_in, d_in * m).unwrap();
    let post = choi_of_kraus(&kb, d_out * m, new_out).unwrap();
    let l = choi_of_kraus(&kl, d_in, d_out).unwrap();
    let theta = Superchannel::general(pre, post, m).unwrap();
    assert_eq!(theta.input_signature(), (d_in, d_out));
    assert_eq!(theta.output_signature(), (new_in, new_out));

    let mut ks = Vec::new();
    for a in &ka {
        for k in &kl {
            for b in &kb {
                ks.push(b * kron(k, &eye(m)) * a);
            }
        }
    }
    let oracle = choi_of_kraus(&ks, new_in, new_out).unwrap();
    assert!(max_dev(theta.apply(&l).unwrap().choi(), oracle.choi()) < 1e-10);
}

#[test]
fn measure_prepare_is_linear_and_matches_its_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let all = FreeSetDescriptor::all_channels(2, 2);
    let theta = sc::random_free_measure_prepare((2, 2), &all, &mut rng).unwrap();
    let l1 = choi_of_kraus(&linalg::random_kraus(2, 2, 2, &mut rng), 2, 2).unwrap();
    let l2 = choi_of_kraus(&linalg::random_kraus(2, 2, 3, &mut rng), 2, 2).unwrap();
    let mid = Channel::mix(&[(0.5, &l1), (0.5, &l2)]).unwrap();
    let lhs = theta.apply(&mid).unwrap();
    let rhs = (theta.apply(&l1).unwrap().choi() + theta.apply(&l2).unwrap().choi()) * c(0.5);
    assert!(max_dev(lhs.choi(), &rhs) < 1e-9);

    // weight computed directly as ⟨P, id⊗L(ψ)⟩ on the state
    let Form::MeasurePrepare { input_state, effect, accept, reject } = theta.form() else { panic!() };
    let out_state = l1.apply_extended(&input_state.density());
    let t = linalg::inner(effect.matrix(), &out_state);
    let want = accept.choi() * c(t) + reject.choi() * c(1.0 - t);
    assert!(max_dev(theta.apply(&l1).unwrap().choi(), &want) < 1e-10);
}

#[test]
fn invalid_superchannels_are_rejected() {
    let psi = PureState::purification(&(eye(2) / c(2.0)));
    let bad = HermitianMatrix::symmetrized(&(eye(4) * c(1.5)));
    let a = Channel::identity(2);
    assert!(Superchannel::measure_prepare(psi.clone(), bad, a.clone(), a.clone()).is_err());
    let ok = HermitianMatrix::symmetrized(&(eye(4) * c(0.5)));
    assert!(Superchannel::measure_prepare(psi, ok, a.clone(), Channel::depolarizing(3, 0.1)).is_err());
    assert!(Superchannel::general(Channel::identity(3), Channel::identity(2), 2).is_err());
    let theta = Superchannel::identity(2, 2);
    assert!(matches!(theta.apply(&Channel::identity(3)), Err(Error::Dimension(_))));
}

#[test]
fn superchannels_do_not_increase_distinguishability() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..4 {
        let e1 = choi_of_kraus(&linalg::random_kraus(2, 2, 2, &mut rng), 2, 2).unwrap();
        let e2 = choi_of_kraus(&linalg::random_kraus(2, 2, 2, &mut rng), 2, 2).unwrap();
        let theta = sc::random_superchannel((2, 2), (2, 2), 2, &mut rng).unwrap();
        let before = worst_case_fidelity(&e1, &e2).unwrap().value;
        let after = worst_case_fidelity(&theta.apply(&e1).unwrap(), &theta.apply(&e2).unwrap()).unwrap().value;
        assert!(after >= before - 1e-6, "{after} < {before}");
    }
}

#[test]
fn self_transformation_of_a_free_channel() {
    let l = local();
    let n = boxch(&isotropic(0.7));
    let t = sc::construct_thm1(&n, &n, &l, &l, 0.0, 0.0, Route::Standard).unwrap();
    assert!(t.certificate.fidelity_achieved > 1.0 - 1e-6);
    assert!(t.certificate.holds());
    // every input is sent to N itself
    let out = t.superchannel.apply(&boxch(&pr())).unwrap();
    assert!(max_dev(out.choi(), n.choi()) < 1e-6);
}

#[test]
fn identity_to_identity_under_replacement_channels() {
    let rep = FreeSetDescriptor::replacement_channels(2, 2);
    let id = Channel::identity(2);
    let t = sc::construct_thm1(&id, &id, &rep, &rep, 0.0, 0.0, Route::Affine).unwrap();
    let cert = &t.certificate;
    assert!(cert.fidelity_achieved > 1.0 - 1e-5, "{}", cert.fidelity_achieved);
    assert!(cert.freeness.pass);
    assert!((cert.resource - 4.0).abs() < 1e-5 && (cert.cost - 4.0).abs() < 1e-5);
    // replacement inputs land in the replacement set: Tr_in-independent output
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let sigma = linalg::random_density(2, 2, &mut rng);
        let out = t.superchannel.apply(&Channel::replacement(2, &sigma).unwrap()).unwrap();
        let tau = linalg::trace_first(out.choi(), 2, 2) / c(2.0);
        assert!(max_dev(out.choi(), &kron(&eye(2), &tau)) < 1e-6);
    }
    // the standard route needs R_s, which diverges for reduced-dimensional sets
    match sc::construct_thm1(&id, &id, &rep, &rep, 0.0, 0.0, Route::Standard) {
        Err(Error::Precondition(msg)) => assert!(msg.contains("inf"), "{msg}"),
        other => panic!("expected precondition failure, got {other:?}"),
    }
}

#[test]
fn pr_box_to_isotropic_boxes() {
    let l = local();
    let e = boxch(&pr());
    for p in [0.2, 0.3, 0.5] {
        let n = boxch(&isotropic(p));
        let t = sc::construct_thm1(&e, &n, &l, &l, 0.0, 0.0, Route::Standard).unwrap();
        let cert = &t.certificate;
        assert!((cert.resource - 4.0 / 3.0).abs() < 1e-6);
        assert!((cert.cost - (1.5 - p).max(1.0)).abs() < 1e-6);
        assert!(cert.fidelity_achieved > 1.0 - 1e-6);
        assert!(cert.freeness.pass);
        // all 16 deterministic boxes are mapped into the local polytope
        for v in vertices() {
            let out = t.superchannel.apply(&boxch(&v)).unwrap();
            assert!(local_distance(&table(&out)) < 1e-6);
        }
    }
    // R_s(B_p) = 3/2 − p exceeds 4/3 for p < 1/6
    let n = boxch(&isotropic(0.05));
    match sc::construct_thm1(&e, &n, &l, &l, 0.0, 0.0, Route::Standard) {
        Err(Error::Precondition(msg)) => assert!(msg.contains("1.45") && msg.contains("1.33"), "{msg}"),
        other => panic!("expected precondition failure, got {other:?}"),
    }
}

#[test]
fn adversarial_superchannel_fails_with_a_bell_witness() {
    let l = local();
    // measure input (0,0) and prepare PR on outcome a = b = 0
    let mut amp = nalgebra::DVector::zeros(16);
    amp[0] = c(1.0);
    let psi = PureState::new(4, 4, amp).unwrap();
    let mut p = CMat::zeros(16, 16);
    p[(0, 0)] = c(1.0);
    let theta =
        Superchannel::measure_prepare(psi, HermitianMatrix::symmetrized(&p), boxch(&pr()), boxch(&isotropic(1.0))).unwrap();
    let r = sc::verify_freeness(&theta, &l, &l, 0, 0).unwrap();
    assert!(!r.pass);
    assert_eq!(r.regime, Regime::WeightRange);
    let (lo, hi) = r.weight_range.unwrap();
    assert!(lo.abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
    let x = r.witness.unwrap();
    let out = r.violating_output.unwrap();
    let vmax = vertices().iter().map(|v| (0..16).map(|k| x.matrix()[(k, k)].re * v[k]).sum::<f64>()).fold(f64::MIN, f64::max);
    assert!(linalg::inner(x.matrix(), out.choi()) > vmax + 1e-3);
    let _ = idx;
}

#[test]
fn pure_output_construction() {
    let rep = FreeSetDescriptor::replacement_channels(2, 2);
    let dep = Channel::depolarizing(2, 0.3);
    assert!(matches!(
        sc::construct_thm3(&dep, &dep, &rep, &rep, 0.0, 0.0, Route::Affine),
        Err(Error::Precondition(_))
    ));
    let id = Channel::identity(2);
    let t = sc::construct_thm3(&id, &id, &rep, &rep, 0.0, 0.0, Route::Affine).unwrap();
    assert!(t.certificate.fidelity_achieved > 1.0 - 1e-5);

    // noisy source: find the least ε with R_{H,aff}^ε(E) ≥ R_max(id₂) = 4
    let e = Channel::depolarizing(2, 0.1);
    let eps = (1..=40)
        .map(|k| k as f64 * 0.01)
        .find(|&eps| monotones::hypothesis_testing(&e, &rep, eps, true).unwrap().value >= 4.0)
        .unwrap();
    let t = sc::construct_thm3(&e, &id, &rep, &rep, eps, 0.0, Route::Affine).unwrap();
    let cert = &t.certificate;
    assert!((cert.fidelity_guarantee - (1.0 - eps)).abs() < 1e-12);
    assert!(cert.fidelity_achieved >= cert.fidelity_guarantee - 1e-5);
    assert!(cert.freeness.pass);
    // one step smaller ε cannot be certified
    assert!(sc::construct_thm3(&e, &id, &rep, &rep, eps - 0.01, 0.0, Route::Affine).is_err());
}

#[test]
fn distilling_pr_from_noisy_boxes_is_blocked() {
    let l = local();
    let target = boxch(&pr());
    for p in [0.1, 0.3] {
        let src = boxch(&isotropic(p));
        for eps in [0.0, 0.05, 0.1] {
            match sc::construct_thm1(&src, &target, &l, &l, eps, 0.0, Route::Standard) {
                Err(Error::Precondition(_)) => {}
                other => panic!("p = {p}, ε = {eps}: {other:?}"),
            }
        }
    }
}

#[test]
fn local_wirings_are_free_and_monotone() {
    let l = local();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let theta = sc::random_local_wiring(Scenario::CHSH, &mut rng).unwrap();
        let r = sc::verify_freeness(&theta, &l, &l, 4, 1).unwrap();
        assert!(r.pass);
        for v in vertices() {
            assert!(local_distance(&table(&theta.apply(&boxch(&v)).unwrap())) < 1e-9);
        }
        let e = boxch(&isotropic(0.2));
        let out = theta.apply(&e).unwrap();
        assert!(monotones::r_max(&out, &l).unwrap().value <= monotones::r_max(&e, &l).unwrap().value + 1e-6);
    }
}

#[test]
fn certificate_ledger_records_non_increasing_robustness() {
    let l = local();
    let t = sc::construct_thm1(&boxch(&pr()), &boxch(&isotropic(0.3)), &l, &l, 0.0, 0.0, Route::Standard).unwrap();
    for entry in t.certificate.ledger.iter().skip(1) {
        assert!(entry.after <= entry.before + 1e-6, "{entry:?}");
    }
    let rs_out = t.certificate.ledger.iter().find(|e| e.quantity == "R_s").unwrap().after;
    assert!((rs_out - 1.2).abs() < 1e-5);
}

#[test]
fn pre_post_processing_preserves_ppt_channels() {
    let ppt = FreeSetDescriptor::ppt_channels(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let theta = sc::random_pre_post(2, 2, &mut rng).unwrap();
    let r = sc::verify_freeness(&theta, &ppt, &ppt, 3, 2).unwrap();
    assert!(r.pass);
    // partial transpose of outputs of random EB inputs stays PSD
    for _ in 0..5 {
        let ks = linalg::random_kraus(2, 1, 3, &mut rng);
        let mut j = CMat::zeros(4, 4);
        for k in &ks {
            j += kron(&(k.adjoint() * k).transpose(), &linalg::random_density(2, 2, &mut rng));
        }
        let out = theta.apply(&Channel::new(2, 2, j).unwrap()).unwrap();
        assert!(linalg::min_eig(&linalg::partial_transpose(out.choi(), &[2, 2], &[true, false])) > -1e-9);
    }
}
