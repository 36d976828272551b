mod common;

use common::{idx, local_distance, table, vertices};
use dynres::linalg::{self, c, eye, CMat};
use dynres::monotones::{self, BoundDirection, Options};
use dynres::scenarios::{
    box_monotones, box_monotones_with, box_r_min, channel_to_box, channel_to_povm, incompatibility_robustness,
    isotropic_scan, povm_to_channel, unit_grid, BellBox, IncompatLevel, PovmSet, Scenario,
};
use dynres::FreeSetDescriptor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chsh_win(t: &[f64]) -> f64 {
    let mut w = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if (a ^ b) == (x & y) {
                        w += t[idx(x, y, a, b)] / 4.0;
                    }
                }
            }
        }
    }
    w
}

#[test]
fn embeddings_of_standard_boxes() {
    let pr = BellBox::pr();
    let j = pr.to_channel();
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let want = if (a ^ b) == (x & y) { 0.5 } else { 0.0 };
                    assert_eq!(j.choi()[(idx(x, y, a, b), idx(x, y, a, b))].re, want);
                }
            }
        }
    }
    assert!(linalg::is_diagonal(j.choi(), 0.0));
    let noise = BellBox::white_noise(Scenario::CHSH).to_channel();
    assert!((noise.choi() - eye(16) * c(0.25)).norm() < 1e-15);

    // a = x, b = y is a permutation of the input onto the output
    let det = BellBox::deterministic(Scenario::CHSH, &[0, 1], &[0, 1]).unwrap();
    let t = table(&det.to_channel());
    assert_eq!(t.iter().filter(|&&v| v == 1.0).count(), 4);
    for x in 0..2 {
        for y in 0..2 {
            assert_eq!(t[idx(x, y, x, y)], 1.0);
        }
    }

    for b in [pr, BellBox::isotropic(0.37).unwrap(), det] {
        let back = channel_to_box(&b.to_channel(), Scenario::CHSH).unwrap();
        assert_eq!(back, b);
    }
}

#[test]
fn invalid_tables_are_rejected() {
    let s = Scenario::CHSH;
    // Bob's outcome copies Alice's setting
    let sig = BellBox::from_fn(s, |x, _, a, b| if a == 0 && b == x { 1.0 } else { 0.0 });
    let msg = sig.unwrap_err().to_string();
    assert!(msg.contains("marginal") && msg.contains("Bob"), "{msg}");
    let mut t = common::pr();
    t[0] += 1e-6;
    assert!(BellBox::new(s, t).unwrap_err().to_string().contains("expected 1"));
    assert!(BellBox::new(s, vec![0.25; 15]).is_err());
    let mut t = common::isotropic(0.5);
    t[0] = -0.1;
    t[1] += 0.1;
    assert!(BellBox::new(s, t).is_err());
    assert!(BellBox::isotropic(1.2).is_err());
}

#[test]
fn tensor_powers_stay_normalised_and_no_signalling() {
    let b = BellBox::isotropic(0.1).unwrap();
    let b2 = b.tensor_power(2).unwrap();
    assert_eq!(b2.scenario(), Scenario::new(4, 4, 4, 4).unwrap());
    // re-validate through the checked constructor
    let again = BellBox::new(b2.scenario(), b2.table().to_vec()).unwrap();
    assert_eq!(again, b2);
    for x1 in 0..2 {
        for x2 in 0..2 {
            for a1 in 0..2 {
                for a2 in 0..2 {
                    let want = b.p(x1, 1, a1, 0) * b.p(x2, 0, a2, 1);
                    let got = b2.p(x1 * 2 + x2, 2, a1 * 2 + a2, 1);
                    assert!((want - got).abs() < 1e-15);
                }
            }
        }
    }
    let ch = b2.to_channel();
    assert!(linalg::min_eig(ch.choi()) > 0.0);
}

#[test]
fn isotropic_monotones_match_chsh_witness_and_explicit_decompositions() {
    let vs = vertices();
    // local vertex losing CHSH three times out of four: a = 0, b = y
    let loser = vs.iter().find(|v| (chsh_win(v) - 0.25).abs() < 1e-12).unwrap().clone();
    let anti_pr: Vec<f64> = common::pr().iter().enumerate().map(|(k, _)| {
        let (xy, ab) = (k / 4, k % 4);
        let (x, y, a, b) = (xy / 2, xy % 2, ab / 2, ab % 2);
        if (a ^ b) != (x & y) { 0.5 } else { 0.0 }
    }).collect();
    for p in [0.0, 0.1, 0.25, 0.4, 0.5, 0.8, 1.0] {
        let t = common::isotropic(p);
        let w = chsh_win(&t);
        // any local box wins with probability at most 3/4 and at least 1/4
        let rmax_lb = (4.0 * w / 3.0).max(1.0);
        let rs_lb = (2.0 * w - 0.5).max(1.0);
        let mix = |m: &[f64], r: f64| -> Vec<f64> { t.iter().zip(m).map(|(a, b)| (a + r * b) / (1.0 + r)).collect() };
        assert!(local_distance(&mix(&anti_pr, rmax_lb - 1.0)) < 1e-7);
        assert!(local_distance(&mix(&loser, rs_lb - 1.0)) < 1e-7);

        let m = box_monotones(&BellBox::isotropic(p).unwrap()).unwrap();
        assert!((m.r_max.value - rmax_lb).abs() < 1e-6, "p={p}: {}", m.r_max.value);
        assert!((m.r_s.value - rs_lb).abs() < 1e-6, "p={p}: {}", m.r_s.value);
        let want_min = if p == 0.0 { 4.0 / 3.0 } else { 1.0 };
        assert!((m.r_min.value - want_min).abs() < 1e-6, "p={p}: {}", m.r_min.value);
        assert_eq!(m.r_max.bound_direction, BoundDirection::Exact);
    }
}

#[test]
fn isotropic_scan_endpoints_and_tsirelson_anchor() {
    let tsirelson = 1.0 - 2f64.sqrt() / 2.0;
    let mut grid = unit_grid(11);
    grid.push(tsirelson);
    let rows = isotropic_scan(&grid).unwrap();
    assert_eq!(rows.len(), 12);
    let first = rows[0];
    assert_eq!(first.p, 0.0);
    assert!((first.r_max - 4.0 / 3.0).abs() < 1e-6);
    assert!((first.r_s - 1.5).abs() < 1e-6);
    assert!((first.r_min - 4.0 / 3.0).abs() < 1e-6);
    let last = rows[10];
    assert!((last.r_max - 1.0).abs() < 1e-6 && (last.r_s - 1.0).abs() < 1e-6 && (last.r_min - 1.0).abs() < 1e-9);
    // regression anchor: (2 + √2)/3
    let ts = rows[11];
    assert!((ts.r_max - (2.0 + 2f64.sqrt()) / 3.0).abs() < 1e-6, "{}", ts.r_max);
    assert!((ts.r_s - (0.5 + 2f64.sqrt() / 2.0)).abs() < 1e-6, "{}", ts.r_s);
    for w in rows[..11].windows(2) {
        assert!(w[1].r_max <= w[0].r_max + 1e-7 && w[1].r_s <= w[0].r_s + 1e-7);
    }
    assert_eq!(unit_grid(41).len(), 41);
    assert_eq!(unit_grid(41)[40], 1.0);
}

#[test]
fn noisy_boxes_cannot_be_distilled_at_zero_error() {
    for p in [0.01, 0.1, 0.5] {
        let b = BellBox::isotropic(p).unwrap();
        // through the polytope program, without the full-support shortcut
        let direct = monotones::min_relative_entropy(&b.to_channel(), &common::local(), false).unwrap();
        assert!((direct.value - 1.0).abs() < 1e-7, "{}", direct.value);
        for n in [1, 2] {
            let bn = b.tensor_power(n).unwrap();
            assert!(linalg::min_eig(bn.to_channel().choi()) > 0.0);
            assert_eq!(box_r_min(&bn).unwrap().value, 1.0);
        }
    }
    assert!((box_r_min(&BellBox::pr()).unwrap().value - 4.0 / 3.0).abs() < 1e-6);
}

#[test]
fn polytope_lp_and_channel_sdp_agree_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vs = vertices();
    let sdp = Options { classical_reduction: false, ..Options::default() };
    for _ in 0..4 {
        let q: f64 = rng.gen_range(0.0..0.6);
        let k = rng.gen_range(0..16);
        let t: Vec<f64> = common::pr().iter().zip(&vs[k]).map(|(a, b)| (1.0 - q) * a + q * b).collect();
        let b = BellBox::new(Scenario::CHSH, t).unwrap();
        let lp = box_monotones(&b).unwrap();
        let full = box_monotones_with(&b, &sdp).unwrap();
        assert!((lp.r_max.value - full.r_max.value).abs() < 1e-6);
        assert!((lp.r_s.value - full.r_s.value).abs() < 1e-6);
        assert!((lp.r_min.value - full.r_min.value).abs() < 1e-6);
    }
}

fn mats_close(a: &CMat, b: &CMat, tol: f64) -> bool {
    (a - b).norm() < tol
}

#[test]
fn povm_embedding_layout_and_round_trip() {
    let s = PovmSet::xz();
    let ch = povm_to_channel(&s);
    assert_eq!(ch.dims(), (4, 2));
    // setting x = 1, state |+⟩: outcome 0 with certainty
    let mut rho = CMat::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            rho[(2 + i, 2 + j)] = c(0.5);
        }
    }
    let out = ch.apply_local(&rho);
    assert!((out[(0, 0)].re - 1.0).abs() < 1e-12);
    // off-diagonal setting coherences are discarded
    let mut coh = rho.clone();
    coh[(0, 2)] = c(0.3);
    coh[(2, 0)] = c(0.3);
    assert!(mats_close(&ch.apply_local(&coh), &out, 1e-12));
    let back = channel_to_povm(&ch, 2, 2).unwrap();
    for x in 0..2 {
        for a in 0..2 {
            assert!(mats_close(back.element(x, a), s.element(x, a), 1e-12));
        }
    }
    // complex elements survive the transpose convention
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = PovmSet::random_projective(2, 2, &mut rng);
    let back = channel_to_povm(&povm_to_channel(&r), 2, 2).unwrap();
    for x in 0..2 {
        for a in 0..2 {
            assert!(mats_close(back.element(x, a), r.element(x, a), 1e-12));
        }
    }
}

#[test]
fn invalid_povm_sets_are_rejected() {
    let half = eye(2) * c(0.5);
    assert!(PovmSet::new(2, vec![vec![half.clone(), half.clone() * c(0.9)]]).is_err());
    let mut neg = half.clone();
    neg[(0, 0)] = c(-0.1);
    let mut other = half.clone();
    other[(0, 0)] = c(1.1);
    assert!(PovmSet::new(2, vec![vec![neg, other]]).unwrap_err().to_string().contains("eigenvalue"));
    assert!(PovmSet::new(2, vec![vec![half.clone(), half.clone()], vec![eye(2)]]).is_err());
}

#[test]
fn compatible_sets_have_unit_robustness() {
    let trivial = PovmSet::trivial(2, 2, 2);
    let desc = FreeSetDescriptor::compatible_povms(2, 2, 2);
    assert!(desc.membership_check(&trivial.to_channel()).unwrap().member);
    for level in [IncompatLevel::Povm, IncompatLevel::Channel] {
        assert!((incompatibility_robustness(&trivial, level).unwrap().value - 1.0).abs() < 1e-6);
    }
    // depolarised X/Z at visibility 0.6 < 1/√2 has a parent POVM
    let noisy = PovmSet::xz().noisy(0.6).unwrap();
    assert!((incompatibility_robustness(&noisy, IncompatLevel::Povm).unwrap().value - 1.0).abs() < 1e-6);
    assert!(desc.membership_check(&noisy.to_channel()).unwrap().member);
}

#[test]
fn xz_pair_levels_agree() {
    let s = PovmSet::xz();
    let desc = FreeSetDescriptor::compatible_povms(2, 2, 2);
    assert!(!desc.membership_check(&s.to_channel()).unwrap().member);
    let povm = incompatibility_robustness(&s, IncompatLevel::Povm).unwrap().value;
    let chan = incompatibility_robustness(&s, IncompatLevel::Channel).unwrap().value;
    assert!((povm - chan).abs() < 1e-5, "{povm} vs {chan}");
    // mixing with I/2 at weight √2 − 1 reaches visibility 1/√2, which is compatible
    assert!(povm > 1.0 + 1e-3 && povm <= 2f64.sqrt() + 1e-6, "{povm}");
    assert!((incompatibility_robustness(&s.noisy(1.0 / 2f64.sqrt()).unwrap(), IncompatLevel::Povm).unwrap().value - 1.0).abs() < 1e-6);
}

#[test]
fn random_projective_pairs_levels_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let s = PovmSet::random_projective(2, 2, &mut rng);
        let povm = incompatibility_robustness(&s, IncompatLevel::Povm).unwrap().value;
        let chan = incompatibility_robustness(&s, IncompatLevel::Channel).unwrap().value;
        assert!((povm - chan).abs() < 1e-5, "{povm} vs {chan}");
        assert!(povm >= 1.0);
    }
}
