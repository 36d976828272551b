use dynres::freesets::{response_functions, Family};
use dynres::linalg::{self, c, eye, kron, CMat};
use dynres::scenarios::Scenario;
use dynres::{Channel, DimClass, FreeSetDescriptor};
use dynres_conic::{LinExpr, MatExpr, Program};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pr_table() -> Vec<f64> {
    let s = Scenario::CHSH;
    let mut t = vec![0.0; 16];
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if (a ^ b) == (x & y) {
                        t[s.index(x, y, a, b)] = 0.5;
                    }
                }
            }
        }
    }
    t
}

fn diag(t: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(t.len(), t.iter().map(|&v| c(v))))
}

/// Independently enumerated deterministic CHSH boxes.
fn chsh_vertices() -> Vec<Vec<f64>> {
    let s = Scenario::CHSH;
    let mut out = Vec::new();
    for a0 in 0..2 {
        for a1 in 0..2 {
            for b0 in 0..2 {
                for b1 in 0..2 {
                    let mut t = vec![0.0; 16];
                    for x in 0..2 {
                        for y in 0..2 {
                            let a = if x == 0 { a0 } else { a1 };
                            let b = if y == 0 { b0 } else { b1 };
                            t[s.index(x, y, a, b)] = 1.0;
                        }
                    }
                    out.push(t);
                }
            }
        }
    }
    out
}

#[test]
fn replacement_member() {
    let desc = FreeSetDescriptor::replacement_channels(2, 2);
    let ch = Channel::replacement(2, &(eye(2) * c(0.5))).unwrap();
    let m = desc.membership_check(&ch).unwrap();
    assert!(m.member, "distance {}", m.distance);
    let far = desc.membership_check(&Channel::identity(2)).unwrap();
    assert!(!far.member);
}

#[test]
fn identity_is_not_ppt() {
    let desc = FreeSetDescriptor::ppt_channels(2, 2);
    let m = desc.membership_check(&Channel::identity(2)).unwrap();
    assert!(!m.member);
    let x = m.witness.unwrap();
    assert!(m.witness_value > m.witness_bound + 1e-3);
    // the certified bound really dominates sampled PPT members: random
    // measure-and-prepare (entanglement-breaking ⊂ PPT) channels
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let j = eb_choi(2, 2, 3, &mut rng);
        assert!(linalg::inner(x.matrix(), &j) <= m.witness_bound + 1e-6);
    }
}

#[test]
fn pr_box_is_not_local_and_witness_is_bell_inequality() {
    let desc = FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap();
    let pr = Channel::new(4, 4, diag(&pr_table())).unwrap();
    let m = desc.membership_check(&pr).unwrap();
    assert!(!m.member);
    let x = m.witness.unwrap();
    let lhs = linalg::inner(x.matrix(), pr.choi());
    let local_max = chsh_vertices().iter().map(|v| linalg::inner(x.matrix(), &diag(v))).fold(f64::MIN, f64::max);
    assert!(lhs > local_max + 1e-3, "{lhs} vs {local_max}");
    assert!((local_max - m.witness_bound).abs() < 1e-6);
}

/// Random entanglement-breaking Choi `Σ_k M_kᵀ ⊗ σ_k`.
fn eb_choi(d_in: usize, d_out: usize, outcomes: usize, rng: &mut impl Rng) -> CMat {
    let ks = linalg::random_kraus(d_in, 1, outcomes, rng);
    let mut j = CMat::zeros(d_in * d_out, d_in * d_out);
    for k in &ks {
        let m = k.adjoint() * k;
        let sigma = linalg::random_density(d_out, d_out, rng);
        j += kron(&m.transpose(), &sigma);
    }
    j
}

#[test]
fn sep_relaxation_contains_separable_channels() {
    let desc = FreeSetDescriptor::sep_channels_relax(2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let ch = Channel::new(2, 2, eb_choi(2, 2, 3, &mut rng)).unwrap();
        let m = desc.membership_check(&ch).unwrap();
        assert!(m.member, "distance {}", m.distance);
    }
    assert!(!desc.membership_check(&Channel::identity(2)).unwrap().member);
}

#[test]
fn affine_constraints_for_replacement_channels() {
    let desc = FreeSetDescriptor::replacement_channels(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let target = linalg::random_density(4, 4, &mut rng);
    let mut p = Program::maximize();
    let q = p.hermitian("Q", 4);
    let lam = p.scalar("lambda");
    p.add_psd(MatExpr::constant(&eye(4)).sub(&q));
    p.add_psd(MatExpr::constant(&eye(4)).add(&q));
    let count = desc.affine_constraints(&mut p, &q, &lam).unwrap();
    assert_eq!(count, 4);
    p.set_objective(q.inner(&target));
    let sol = p.solve().unwrap();
    let qm = sol.matrix(&q);
    let l = sol.value(&lam);
    // out-marginal structure: Tr_in Q ∝ I
    let marg = linalg::trace_first(&qm, 2, 2);
    assert!((&marg - eye(2) * c(marg.trace().re / 2.0)).norm() < 1e-7);
    for _ in 0..1000 {
        let sigma = linalg::random_density(2, 2, &mut rng);
        let v = linalg::inner(&qm, &kron(&eye(2), &sigma));
        assert!((v - l).abs() < 1e-7);
    }
}

#[test]
fn local_polytope_affine_hull_has_eight_directions() {
    let desc = FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap();
    assert_eq!(desc.generators().unwrap().len(), 16);
    assert_eq!(desc.affine_dimension().unwrap(), 8);
    // independent rank computation on vertex differences
    let v = chsh_vertices();
    let m = DMatrix::from_fn(16, 15, |i, k| v[k + 1][i] - v[0][i]);
    let rank = m.svd(false, false).singular_values.iter().filter(|s| **s > 1e-9).count();
    assert_eq!(rank, 8);
    let ns = FreeSetDescriptor::ns_boxes(Scenario::CHSH);
    assert_eq!(ns.affine_dimension().unwrap(), 8);
}

#[test]
fn singleton_has_one_equality() {
    let desc = FreeSetDescriptor::singleton(&Channel::depolarizing(2, 0.3));
    let mut p = Program::minimize();
    let q = p.hermitian("Q", 4);
    let lam = p.scalar("l");
    assert_eq!(desc.affine_constraints(&mut p, &q, &lam).unwrap(), 1);
}

#[test]
fn dimension_classes() {
    assert_eq!(FreeSetDescriptor::replacement_channels(2, 2).dim_classify(), DimClass::Reduced);
    assert_eq!(FreeSetDescriptor::replacement_channels(3, 3).dim_classify(), DimClass::Reduced);
    assert_eq!(FreeSetDescriptor::ppt_channels(2, 2).dim_classify(), DimClass::Full);
    assert_eq!(FreeSetDescriptor::all_channels(2, 3).dim_classify(), DimClass::Full);
    assert_eq!(FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap().dim_classify(), DimClass::Full);
    assert_eq!(FreeSetDescriptor::compatible_povms(2, 2, 2).dim_classify(), DimClass::Full);
    let a = FreeSetDescriptor::replacement_channels(2, 2).affine_dimension().unwrap();
    assert_eq!(a, 3);
    assert_eq!(FreeSetDescriptor::all_channels(2, 2).affine_dimension().unwrap(), 12);
}

#[test]
fn replacement_support_matches_sampling() {
    let desc = FreeSetDescriptor::replacement_channels(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = linalg::ginibre(4, 4, &mut rng);
    let qm = linalg::hermitize(&g);
    let mut p = Program::minimize();
    let lam = p.scalar("lambda");
    desc.support_le(&mut p, &MatExpr::constant(&qm), &lam).unwrap();
    p.set_objective(lam.clone());
    let bound = p.solve().unwrap().objective;
    let exact = linalg::max_eig(&linalg::trace_first(&qm, 2, 2));
    assert!((bound - exact).abs() < 1e-6);
    for _ in 0..1000 {
        let sigma = linalg::random_density(2, 2, &mut rng);
        assert!(linalg::inner(&qm, &kron(&eye(2), &sigma)) <= bound + 1e-6);
    }
}

#[test]
fn ppt_support_matches_primal() {
    let desc = FreeSetDescriptor::ppt_channels(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..3 {
        let qm = linalg::hermitize(&linalg::ginibre(4, 4, &mut rng));
        let mut p = Program::minimize();
        let lam = p.scalar("lambda");
        desc.support_le(&mut p, &MatExpr::constant(&qm), &lam).unwrap();
        p.set_objective(lam.clone());
        let dual = p.solve().unwrap().objective;
        // direct primal over PPT Choi matrices, written out by hand
        let mut p = Program::maximize();
        let j = p.psd("J", 4);
        p.add_psd(j.partial_transpose(&[2, 2], &[false, true]));
        p.add_herm_eq(j.partial_trace(&[2, 2], &[false, true]).add_const(&(-eye(2))));
        p.set_objective(j.inner(&qm));
        let primal = p.solve().unwrap().objective;
        assert!((dual - primal).abs() < 1e-6, "{dual} vs {primal}");
    }
}

#[test]
fn slater_points_are_strictly_interior_members() {
    let descs = vec![
        FreeSetDescriptor::replacement_channels(2, 2),
        FreeSetDescriptor::all_channels(2, 2),
        FreeSetDescriptor::ppt_channels(2, 2),
        FreeSetDescriptor::sep_channels_relax(2, 2, 2),
        FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap(),
        FreeSetDescriptor::ns_boxes(Scenario::CHSH),
        FreeSetDescriptor::compatible_povms(2, 2, 2),
        FreeSetDescriptor::povm_channels(2, 2, 2),
    ];
    for d in descs {
        let s = d.slater_point().unwrap().clone();
        assert!(linalg::min_eig(&s) >= 1e-6, "{}", d.name);
        let ch = Channel::new(d.d_in(), d.d_out(), s).unwrap();
        assert!(d.membership_check(&ch).unwrap().member, "{}", d.name);
        if let Some(gens) = d.generators() {
            for g in gens {
                let ch = Channel::new(d.d_in(), d.d_out(), g.clone()).unwrap();
                assert!(d.membership_check(&ch).unwrap().distance < 1e-8, "{}", d.name);
            }
        }
    }
}

/// `min ‖p − Σ w_k v_k‖₁` over the simplex, written as an LP with slacks.
fn l1_distance_to_hull(p: &[f64], verts: &[Vec<f64>]) -> f64 {
    let mut prog = Program::minimize();
    let w = prog.nonneg("w", verts.len());
    let s = prog.nonneg("s", p.len());
    prog.add_eq(LinExpr::sum(&w) - 1.0);
    for i in 0..p.len() {
        let mut e = LinExpr::constant(p[i]);
        for (k, v) in verts.iter().enumerate() {
            e = e - w[k].clone() * v[i];
        }
        prog.add_ge(s[i].clone() - e.clone());
        prog.add_ge(s[i].clone() + e);
    }
    prog.set_objective(LinExpr::sum(&s));
    prog.solve().unwrap().objective
}

#[test]
fn polytope_membership_agrees_with_hull_lp() {
    let desc = FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap();
    let verts = chsh_vertices();
    let pr = pr_table();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut members = 0;
    for k in 0..1000 {
        // mixtures of PR, vertices and arbitrary classical noise
        let mut t = vec![0.0; 16];
        let wpr: f64 = rng.random_range(0.0..0.6);
        for (i, v) in t.iter_mut().enumerate() {
            *v += wpr * pr[i];
        }
        let mut rest = 1.0 - wpr;
        if k % 3 == 0 {
            let noise: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
            let q: f64 = rng.random_range(0.0..0.3) * rest;
            for xy in 0..4 {
                let z: f64 = noise[xy * 4..xy * 4 + 4].iter().sum();
                for ab in 0..4 {
                    t[xy * 4 + ab] += q * noise[xy * 4 + ab] / z;
                }
            }
            rest -= q;
        }
        let ws: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let z: f64 = ws.iter().sum();
        for (v, wv) in verts.iter().zip(&ws) {
            for i in 0..16 {
                t[i] += rest * wv / z * v[i];
            }
        }
        let ch = Channel::new(4, 4, diag(&t)).unwrap();
        let m = desc.membership_check(&ch).unwrap();
        let oracle = l1_distance_to_hull(&t, &verts);
        assert!((m.distance - oracle).abs() < 1e-6, "{} vs {oracle}", m.distance);
        assert_eq!(m.member, oracle <= 1e-7);
        members += m.member as usize;
    }
    assert!(members > 100 && members < 900, "{members}");
}

#[test]
fn povm_descriptors() {
    let comp = FreeSetDescriptor::compatible_povms(2, 2, 2);
    assert!(matches!(comp.family, Family::CompatiblePovms { .. }));
    assert_eq!(response_functions(2, 2).len(), 4);
    // trivial POVMs M_{a|x} = I/2 are compatible
    let j = eye(8) * c(0.5);
    assert!(comp.membership_check(&Channel::new(4, 2, j).unwrap()).unwrap().member);
    // Z and X projective measurements are not
    let z = [CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]), CMat::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)])];
    let x = [
        CMat::from_row_slice(2, 2, &[c(0.5), c(0.5), c(0.5), c(0.5)]),
        CMat::from_row_slice(2, 2, &[c(0.5), c(-0.5), c(-0.5), c(0.5)]),
    ];
    let mut j = CMat::zeros(8, 8);
    for (s, ms) in [z, x].iter().enumerate() {
        for (a, m) in ms.iter().enumerate() {
            for i in 0..2 {
                for k in 0..2 {
                    j[((s * 2 + i) * 2 + a, (s * 2 + k) * 2 + a)] = m[(k, i)];
                }
            }
        }
    }
    let ch = Channel::new(4, 2, j).unwrap();
    assert!(!comp.membership_check(&ch).unwrap().member);
    assert!(FreeSetDescriptor::povm_channels(2, 2, 2).membership_check(&ch).unwrap().member);
}
