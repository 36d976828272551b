#![allow(dead_code)]

use dynres::linalg::{c, CMat};
use dynres::scenarios::Scenario;
use dynres::{Channel, FreeSetDescriptor};
use dynres_conic::{LinExpr, Program};
use nalgebra::DVector;

pub fn idx(x: usize, y: usize, a: usize, b: usize) -> usize {
    (x * 2 + y) * 4 + a * 2 + b
}

pub fn pr() -> Vec<f64> {
    let mut t = vec![0.0; 16];
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if (a ^ b) == (x & y) {
                        t[idx(x, y, a, b)] = 0.5;
                    }
                }
            }
        }
    }
    t
}

pub fn isotropic(p: f64) -> Vec<f64> {
    pr().iter().map(|v| (1.0 - p) * v + p * 0.25).collect()
}

/// The 16 deterministic CHSH strategies `a = f(x)`, `b = g(y)`.
pub fn vertices() -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for s in 0..16usize {
        let (a0, a1, b0, b1) = (s & 1, (s >> 1) & 1, (s >> 2) & 1, (s >> 3) & 1);
        let mut t = vec![0.0; 16];
        for x in 0..2 {
            for y in 0..2 {
                t[idx(x, y, if x == 0 { a0 } else { a1 }, if y == 0 { b0 } else { b1 })] = 1.0;
            }
        }
        out.push(t);
    }
    out
}

pub fn boxch(t: &[f64]) -> Channel {
    Channel::new(4, 4, CMat::from_diagonal(&DVector::from_iterator(16, t.iter().map(|&v| c(v))))).unwrap()
}

pub fn table(ch: &Channel) -> Vec<f64> {
    (0..16).map(|k| ch.choi()[(k, k)].re).collect()
}

pub fn local() -> FreeSetDescriptor {
    FreeSetDescriptor::local_boxes(Scenario::CHSH).unwrap()
}

/// ℓ₁ distance of a table to the convex hull of the 16 vertices.
pub fn local_distance(t: &[f64]) -> f64 {
    let mut p = Program::minimize();
    let w = p.nonneg("w", 16);
    let sp = p.nonneg("sp", 16);
    let sm = p.nonneg("sm", 16);
    p.add_eq(LinExpr::sum(&w) - 1.0);
    let vs = vertices();
    for i in 0..16 {
        let mut e = LinExpr::constant(-t[i]) + sp[i].clone() - sm[i].clone();
        for k in 0..16 {
            e = e + w[k].clone() * vs[k][i];
        }
        p.add_eq(e);
    }
    p.set_objective(LinExpr::sum(&sp) + LinExpr::sum(&sm));
    p.solve().unwrap().objective
}
