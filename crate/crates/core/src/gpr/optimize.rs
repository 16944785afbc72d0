//! Derivative-free minimization over a box, built on argmin's Nelder–Mead.

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;

/// Penalty slope for simplex vertices that leave the box. Vertices are
/// evaluated at their projection onto the box, and the penalty pulls the
/// simplex back inside.
const OUTSIDE_PENALTY: f64 = 1e3;

/// Stand-in objective value for points where the objective is undefined.
const FAILED_VALUE: f64 = 1e300;

struct Boxed<'a, F> {
    f: &'a F,
    lower: &'a [f64],
    upper: &'a [f64],
}

impl<F: Fn(&[f64]) -> Option<f64>> CostFunction for Boxed<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, ArgminError> {
        let (q, outside) = project(p, self.lower, self.upper);
        let value = (self.f)(&q).filter(|v| v.is_finite()).unwrap_or(FAILED_VALUE);
        Ok(value + OUTSIDE_PENALTY * outside)
    }
}

fn project(p: &[f64], lower: &[f64], upper: &[f64]) -> (Vec<f64>, f64) {
    let mut outside = 0.0;
    let q = p
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| {
            outside += (lo - v).max(0.0) + (v - hi).max(0.0);
            v.clamp(lo, hi)
        })
        .collect();
    (q, outside)
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Stops after `max_iters` iterations or once the standard deviation of the
/// simplex values drops below `tol`. `f` returns `None` where it is undefined. Returns the best point found
/// (inside the box) and its objective value.
pub fn minimize_in_box<F>(
    f: &F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iters: u64,
    tol: f64,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let (start, _) = project(x0, lower, upper);
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let step = 0.1 * (upper[i] - lower[i]);
        let mut v = start.clone();
        v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let cost = Boxed { f, lower, upper };
    let start_value = cost.cost(&start).unwrap_or(FAILED_VALUE);
    let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(tol) else {
        return (start, start_value);
    };
    let best = Executor::new(cost, solver)
        .configure(|state| state.max_iters(max_iters))
        .run()
        .ok()
        .and_then(|res| {
            let state = res.state();
            state.best_param.clone().map(|p| (p, state.best_cost))
        });
    match best {
        Some((p, value)) if value <= start_value => (project(&p, lower, upper).0, value),
        _ => (start, start_value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let f = |x: &[f64]| Some((x[0] - 1.0).powi(2) + 10.0 * (x[1] + 0.5).powi(2));
        let (x, v) = minimize_in_box(&f, &[0.0, 0.0], &[-3.0, -3.0], &[3.0, 3.0], 500, 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 0.5).abs() < 1e-4, "{x:?}");
        assert!(v < 1e-7);
    }

    #[test]
    fn respects_the_box() {
        let f = |x: &[f64]| Some((x[0] - 5.0).powi(2) + x[1].powi(2));
        let (x, _) = minimize_in_box(&f, &[0.0, 1.0], &[-1.0, -1.0], &[2.0, 2.0], 500, 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-3, "{x:?}");
        assert!(x[0] <= 2.0);
    }

    #[test]
    fn undefined_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.5 { None } else { Some((x[0] - 1.0).powi(2)) };
        let (x, v) = minimize_in_box(&f, &[0.8], &[0.0], &[2.0], 300, 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-4 && v < 1e-7);
    }
}
