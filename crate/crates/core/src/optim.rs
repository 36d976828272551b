//! Small unconstrained local optimizers for the few nonconvex searches
//! (pure-input refinement, affine min-entropy), wrapping `argmin`.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::LBFGS;

struct Fun<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Fun<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok((self.f)(x))
    }
}

impl<F: Fn(&[f64]) -> f64> Gradient for Fun<'_, F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(numeric_gradient(self.f, x))
    }
}

/// Central-difference gradient.
pub fn numeric_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * (1.0 + x[k].abs());
            y[k] = x[k] + h;
            let fp = f(&y);
            y[k] = x[k] - h;
            let fm = f(&y);
            y[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Nelder–Mead from an axis-aligned simplex of edge `step` around `x0`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_iter: u64) -> (Vec<f64>, f64) {
    let mut simplex = vec![x0.to_vec()];
    for k in 0..x0.len() {
        let mut v = x0.to_vec();
        v[k] += step;
        simplex.push(v);
    }
    let fallback = (x0.to_vec(), f(x0));
    let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-13) else {
        return fallback;
    };
    let run = Executor::new(Fun { f: &f }, solver).configure(|s| s.max_iters(max_iter)).run();
    match run {
        Ok(res) => {
            let st = res.state();
            match st.get_best_param() {
                Some(p) => (p.clone(), st.get_best_cost()),
                None => fallback,
            }
        }
        Err(_) => fallback,
    }
}

/// L-BFGS with finite-difference gradients; falls back to the start point
/// when the line search fails immediately.
pub fn lbfgs(f: impl Fn(&[f64]) -> f64, x0: &[f64], max_iter: u64) -> (Vec<f64>, f64) {
    let fallback = (x0.to_vec(), f(x0));
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 8)
        .with_tolerance_grad(1e-11)
        .and_then(|s| s.with_tolerance_cost(1e-15));
    let Ok(solver) = solver else {
        return fallback;
    };
    let run = Executor::new(Fun { f: &f }, solver)
        .configure(|s| s.param(x0.to_vec()).max_iters(max_iter))
        .run();
    match run {
        Ok(res) => {
            let st = res.state();
            match st.get_best_param() {
                Some(p) if st.get_best_cost() <= fallback.1 => (p.clone(), st.get_best_cost()),
                _ => fallback,
            }
        }
        Err(_) => fallback,
    }
}
