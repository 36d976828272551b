mod common;

use std::time::Instant;

use dynres::linalg::{self, c, kron, outer};
use nalgebra::DVector;
use dynres::monotones::{self, BoundDirection};
use dynres::scenarios::BellBox;
use dynres::superchannels::Route;
use dynres::tasks::{
    capacity_suite, channel_entanglement_rates, distillable_resource, distillation_fidelity_bounds,
    max_entangled, preparation_monotones, resource_cost, state_monotones, CodeClass, RateOptions, TargetSet,
};
use dynres::{Channel, FreeSetDescriptor};
use dynres_conic::Program;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ket(d: usize, k: usize) -> DVector<num_complex::Complex64> {
    let mut v = DVector::zeros(d);
    v[k] = c(1.0);
    v
}

#[test]
fn floor_and_ceiling_over_ladders() {
    let t = TargetSet::from_values(&[1.5, 1.0, 4.0 / 3.0]).unwrap();
    assert_eq!(t.floor_t(1.4).unwrap().value, 4.0 / 3.0);
    assert_eq!(t.ceil_t(1.4).unwrap().value, 1.5);
    assert_eq!(t.floor_t(1.5).unwrap().value, 1.5);
    assert!(t.ceil_t(1.6).is_err());
    assert!(t.floor_t(0.5).is_err());
    assert!(TargetSet::from_values(&[1.0, 1.0]).is_err());
    assert!(TargetSet::from_values(&[]).is_err());

    let ppt = TargetSet::identity_family(CodeClass::Ppt).unwrap();
    assert_eq!(ppt.floor_t(3.7).unwrap().index, 3);
    assert_eq!(ppt.ceil_t(3.7).unwrap().index, 4);
    assert_eq!(ppt.floor_t(3.0 - 1e-9).unwrap().index, 3);
    let ns = TargetSet::identity_family(CodeClass::Ns).unwrap();
    assert_eq!(ns.floor_t(4.0).unwrap().index, 2);
    assert_eq!(ns.ceil_t(4.0).unwrap().index, 2);
    assert_eq!(ns.ceil_t(4.1).unwrap().index, 3);
    assert!((ns.rate(9.0) - 3f64.log2()).abs() < 1e-12);
}

#[test]
fn identity_families_verify_their_flags() {
    for class in [CodeClass::Ns, CodeClass::Ppt, CodeClass::SepRelax] {
        let t0 = Instant::now();
        let t = TargetSet::identity_family(class).unwrap();
        println!("{class:?}: {:?} in {:?}", t.verification, t0.elapsed());
        assert!(t.flags.pure_output);
        assert!(t.is_pinched(), "{class:?}: {:?}", t.verification);
        assert_eq!(t.flags.rmin_aff_equals_rmax, class == CodeClass::Ns);
    }
}

#[test]
fn noiseless_channels_transmit_log_d() {
    for d in [2, 3] {
        let rep = capacity_suite(&Channel::identity(d), CodeClass::Ns, 0.0).unwrap();
        assert!(rep.q.exact && rep.c.exact);
        assert!((rep.q.value - (d as f64).log2()).abs() < 1e-12, "{}", rep.q.value);
        assert!((rep.c.value - (d as f64).log2()).abs() < 1e-12, "{}", rep.c.value);
        assert!((rep.q.monotone - (d * d) as f64).abs() < 1e-5);
        let tr = rep.q.transformation.as_ref().expect("certificate");
        assert!(tr.certificate.holds());
    }
    let rep = capacity_suite(&Channel::identity(2), CodeClass::SepRelax, 0.0).unwrap();
    assert_eq!(rep.q.target.as_ref().unwrap().index, 2);
    assert!((rep.q.value - 1.0).abs() < 1e-12);
    // relaxed free set is larger, so the robustness is a lower bound
    assert_eq!(rep.c.bound_direction, BoundDirection::Lower);
    assert!((rep.c.value - 1.0).abs() < 1e-12, "{}", rep.c.value);
}

#[test]
fn noisy_pr_boxes_distil_nothing() {
    let local = common::local();
    let targets = TargetSet::explicit(vec![("PR".into(), BellBox::pr().to_channel(), local.clone())], false).unwrap();
    assert!(!targets.flags.pure_output);
    let t = targets.floor_t(1.4).unwrap();
    assert!((t.value - 4.0 / 3.0).abs() < 1e-6 && (t.companion - 1.5).abs() < 1e-6);
    for p in [0.01, 0.2] {
        let e = BellBox::isotropic(p).unwrap().to_channel();
        let r = distillable_resource(&e, &local, &targets, 0.0).unwrap();
        assert!(!r.feasible() && !r.exact);
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert!(r.notes.iter().any(|n| n.contains("no feasible target")), "{:?}", r.notes);
    }
}

#[test]
fn ns_capacity_of_dephasing_matches_the_g_duality() {
    let (q, eps) = (0.2, 0.05);
    let e = Channel::dephasing(2, q);
    let o = FreeSetDescriptor::replacement_channels(2, 2);
    let targets = TargetSet::identity_family(CodeClass::Ns).unwrap();
    let opts = RateOptions { certificate: false, ..RateOptions::default() };
    let r = dynres::tasks::distillable_resource_with(&e, &o, &targets, eps, &opts).unwrap();
    let x = r.monotone;
    // G_aff(E; m) ≥ 1 − ε exactly when R_H,aff^ε(E) ≥ m
    let g = |m: f64| monotones::g_measure(&e, &o, m, true).unwrap().value;
    assert!(g(x * (1.0 - 1e-4)) >= 1.0 - eps - 1e-6);
    assert!(g(x * (1.0 + 1e-3)) < 1.0 - eps);
    let d = (x.sqrt() + 1e-9).floor();
    assert!((r.value - 0.5 * (d * d).log2()).abs() < 1e-12);
}

#[test]
fn ns_capacity_is_monotone_and_below_cost() {
    let opts = RateOptions { certificate: false, ..RateOptions::default() };
    let o = FreeSetDescriptor::replacement_channels(2, 2);
    let targets = TargetSet::identity_family(CodeClass::Ns).unwrap();
    for p in [0.05, 0.3] {
        let e = Channel::depolarizing(2, p);
        let mut last = f64::NEG_INFINITY;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let r = dynres::tasks::distillable_resource_with(&e, &o, &targets, eps, &opts).unwrap();
            assert!(r.monotone >= last - 1e-6, "p={p} eps={eps}: {} < {last}", r.monotone);
            last = r.monotone;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..20 {
        let rank = 1 + k % 3;
        let e = dynres::choi_of_kraus(&linalg::random_kraus(2, 2, rank.max(1), &mut rng), 2, 2).unwrap();
        let q = dynres::tasks::distillable_resource_with(&e, &o, &targets, 0.0, &opts).unwrap();
        let cost = dynres::tasks::resource_cost_with(&e, &o, &targets, 0.0, &opts).unwrap();
        assert!(cost.value >= q.value - 1e-9, "{} < {}", cost.value, q.value);
        assert!(cost.monotone >= q.monotone - 1e-5);
    }
}

#[test]
fn costs_of_free_and_noisy_channels() {
    let o = FreeSetDescriptor::replacement_channels(2, 2);
    let targets = TargetSet::identity_family(CodeClass::Ns).unwrap();
    let free = Channel::replacement(2, &(linalg::eye(2) * c(0.5))).unwrap();
    let r = resource_cost(&free, &o, &targets, 0.0).unwrap();
    assert_eq!(r.value, 0.0);
    let e = Channel::depolarizing(2, 0.3);
    let r = resource_cost(&e, &o, &targets, 0.01).unwrap();
    let x = monotones::smooth(monotones::MonotoneKind::RMax, &e, &o, 0.01, monotones::SmoothMetric::WorstCase).unwrap().value;
    assert!((r.monotone - x).abs() < 1e-6);
    let d = (x.sqrt() - 1e-9).ceil();
    assert!((r.value - 0.5 * (d * d).log2()).abs() < 1e-12);
    if let Some(tr) = &r.transformation {
        assert!(tr.certificate.holds());
    }
}

#[test]
fn rate_duality_under_ppt_codes() {
    let opts = RateOptions { certificate: false, ..RateOptions::default() };
    for p in [0.0, 0.2, 0.6] {
        let e = Channel::depolarizing(2, p);
        let rep = dynres::tasks::capacity_suite_with(&e, CodeClass::Ppt, 0.0, &opts).unwrap();
        assert!(rep.c.value >= rep.q.value - 1e-12);
    }
}

/// Independent PPT fidelity oracle: `max ⟨φ⁺_d, σ⟩` over PPT states.
fn ppt_overlap(d: usize) -> f64 {
    let mut p = Program::maximize();
    let s = p.psd("s", d * d);
    p.add_eq(s.trace().re() - 1.0);
    p.add_psd(s.partial_transpose(&[d, d], &[false, true]));
    p.set_objective(s.inner(&outer(&max_entangled(d))));
    p.solve().unwrap().objective
}

#[test]
fn bell_state_preparation_rates() {
    assert!((1.0 / ppt_overlap(2) - 2.0).abs() < 1e-6);
    let bell = Channel::preparation(&max_entangled(2)).unwrap();
    let r = channel_entanglement_rates(&bell, [1, 1, 2, 2], CodeClass::Ppt, 0.0).unwrap();
    assert!((r.distillable.value - 1.0).abs() < 1e-12, "{}", r.distillable.value);
    assert!((r.cost.value - 1.0).abs() < 1e-12);
    assert!(r.distillable.exact);
    // product state preparation is free
    let zero = ket(4, 0);
    let prod = Channel::preparation(&zero).unwrap();
    let r = channel_entanglement_rates(&prod, [1, 1, 2, 2], CodeClass::Ppt, 0.0).unwrap();
    assert_eq!(r.distillable.value, 0.0);
    assert_eq!(r.cost.value, 0.0);
}

#[test]
fn preparation_monotones_reduce_to_state_monotones() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..4 {
        let phi = linalg::random_pure(4, &mut rng);
        let rho = outer(&phi);
        let s = state_monotones(&rho, (2, 2), CodeClass::Ppt).unwrap();
        let ch = preparation_monotones(&rho, (2, 2), CodeClass::Ppt).unwrap();
        assert!((s.r_max - ch.r_max).abs() < 1e-6, "{s:?} {ch:?}");
        assert!((s.r_s - ch.r_s).abs() < 1e-6, "{s:?} {ch:?}");
        assert!((s.r_min - ch.r_min).abs() < 1e-6, "{s:?} {ch:?}");
    }
    // product states are free at both levels
    let prod = kron(&outer(&ket(2, 0)), &outer(&ket(2, 1)));
    let s = state_monotones(&prod, (2, 2), CodeClass::SepRelax).unwrap();
    assert!((s.r_max - 1.0).abs() < 1e-6 && (s.r_s - 1.0).abs() < 1e-6 && (s.r_min - 1.0).abs() < 1e-6);
}

#[test]
fn distillation_fidelity_sandwich() {
    let o = FreeSetDescriptor::replacement_channels(2, 2);
    let id = Channel::identity(2);
    let b = distillation_fidelity_bounds(&id, &id, &o, &o, Route::Affine).unwrap();
    assert!((b.upper - 1.0).abs() < 1e-6 && (b.lower - 1.0).abs() < 1e-6);
    assert!((b.achieved.unwrap() - 1.0).abs() < 1e-5);

    for p in [0.1, 0.5] {
        let e = Channel::depolarizing(2, p);
        let b = distillation_fidelity_bounds(&e, &id, &o, &o, Route::Affine).unwrap();
        assert!(b.exact, "{} vs {}", b.upper, b.lower);
        let a = b.achieved.unwrap();
        assert!((a - b.lower).abs() < 1e-5, "{a} vs {}", b.lower);
        assert!(b.freeness.as_ref().unwrap().pass);
        // entanglement fidelity of the depolarising channel with the identity
        assert!((b.lower - (1.0 - 0.75 * p)).abs() < 1e-5, "{}", b.lower);
    }

    let local = common::local();
    let pr = BellBox::pr().to_channel();
    let e = BellBox::isotropic(0.2).unwrap().to_channel();
    let b = distillation_fidelity_bounds(&e, &pr, &local, &local, Route::Standard).unwrap();
    assert!((b.m_upper - 4.0 / 3.0).abs() < 1e-6 && (b.m_lower - 1.5).abs() < 1e-6);
    assert!(b.lower <= b.upper + 1e-7);
    assert!(b.achieved.unwrap() >= b.lower - 1e-5);
    assert!(b.freeness.as_ref().unwrap().pass);
}
