//! Limited-memory BFGS with box constraints.
//!
//! Each iteration follows the classical bound-constrained scheme: a
//! generalized Cauchy point along the projected steepest-descent path of the
//! quadratic model, minimization of the model over the variables that are
//! free at that point, and a backtracking line search on the feasible segment
//! towards the subspace minimizer. The problems solved here have at most a
//! few dozen parameters, so the limited-memory matrix is formed densely from
//! the stored correction pairs instead of through the compact representation.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::shape("lower and upper bounds differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::invalid("every lower bound must not exceed its upper bound"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// `|P(x - g) - x|_inf`.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((xi, gi), (l, u))| ((xi - gi).clamp(*l, *u) - xi).abs())
            .fold(0.0, f64::max)
    }

    pub fn at_bound(&self, x: &[f64], i: usize) -> bool {
        x[i] <= self.lower[i] || x[i] >= self.upper[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbOptions {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the relative decrease of `f` falls to this level; 0 disables.
    pub ftol: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            ftol: 0.0,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub pg_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Trial points rejected because the objective was undefined there.
    pub domain_rejections: usize,
    pub termination: Termination,
}

/// Objective values: `Ok(None)` marks a point outside the objective's domain.
pub type Evaluation = Result<Option<(f64, Vec<f64>)>>;

/// Minimize `objective` over the box. `converged(f, pg_inf)` decides when the
/// projected gradient is small enough.
pub fn minimize<F, C>(
    mut objective: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &LbfgsbOptions,
    converged: C,
) -> Result<LbfgsbResult>
where
    F: FnMut(&[f64]) -> Evaluation,
    C: Fn(f64, f64) -> bool,
{
    let dim = bounds.dim();
    if x0.len() != dim {
        return Err(Error::shape(format!("start has length {}, bounds {}", x0.len(), dim)));
    }
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut evaluations = 1;
    let mut domain_rejections = 0;
    let (mut f, mut g) = match objective(&x)? {
        Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        _ => {
            return Err(Error::NotConverged(
                "objective is undefined or non-finite at the starting point".into(),
            ))
        }
    };
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    let termination = loop {
        let pg = bounds.projected_gradient_norm(&x, &g);
        if converged(f, pg) {
            break Termination::Converged;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }

        let b = limited_memory_matrix(dim, &pairs);
        let gv = DVector::from_column_slice(&g);
        let xc = cauchy_point(&x, &gv, &b, bounds);
        let xbar = subspace_minimizer(&x, &xc, &gv, &b, bounds);
        let d = DVector::from_iterator(dim, xbar.iter().zip(&x).map(|(a, b)| a - b));
        let gd = gv.dot(&d);
        if !(gd < 0.0) {
            if !pairs.is_empty() {
                pairs.clear();
                continue;
            }
            break Termination::LineSearchFailed;
        }

        let mut alpha = if pairs.is_empty() { (1.0 / d.norm()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..opts.max_line_search {
            let mut trial: Vec<f64> = x.iter().zip(d.iter()).map(|(xi, di)| xi + alpha * di).collect();
            bounds.project(&mut trial);
            evaluations += 1;
            let Some((f_new, g_new)) = objective(&trial)? else {
                domain_rejections += 1;
                alpha *= 0.1;
                continue;
            };
            if !f_new.is_finite() || g_new.iter().any(|v| !v.is_finite()) {
                alpha *= 0.1;
                continue;
            }
            let gnd: f64 = g_new.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
            let armijo = f_new <= f + 1e-4 * alpha * gd;
            // approximate Wolfe: tolerates round-off in f near a minimizer
            let approx_wolfe = f_new <= f + 1e-10 * f.abs().max(1e-300)
                && gnd >= 0.9 * gd
                && gnd <= -0.8 * gd;
            if armijo || approx_wolfe {
                accepted = Some((trial, f_new, g_new));
                break;
            }
            let denom = 2.0 * (f_new - f - gd * alpha);
            let interp = if denom > 0.0 { -gd * alpha * alpha / denom } else { 0.5 * alpha };
            alpha = interp.clamp(0.1 * alpha, 0.5 * alpha);
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if !pairs.is_empty() {
                pairs.clear();
                continue;
            }
            break Termination::LineSearchFailed;
        };

        iterations += 1;
        let s = DVector::from_iterator(dim, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(dim, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > f64::EPSILON * y.norm_squared() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if opts.ftol > 0.0 && decrease <= opts.ftol * f.abs().max(1.0) {
            let pg = bounds.projected_gradient_norm(&x, &g);
            break if converged(f, pg) {
                Termination::Converged
            } else {
                Termination::FunctionTolerance
            };
        }
    };

    let pg_norm = bounds.projected_gradient_norm(&x, &g);
    Ok(LbfgsbResult {
        x,
        f,
        grad: g,
        pg_norm,
        iterations,
        evaluations,
        domain_rejections,
        termination,
    })
}

/// BFGS updates of `theta I` by the stored pairs, oldest first, with
/// `theta = y'y / s'y` of the newest pair.
fn limited_memory_matrix(dim: usize, pairs: &VecDeque<(DVector<f64>, DVector<f64>)>) -> DMatrix<f64> {
    let theta = pairs
        .back()
        .map_or(1.0, |(s, y)| y.norm_squared() / s.dot(y));
    let mut b = DMatrix::<f64>::identity(dim, dim) * theta;
    for (s, y) in pairs {
        let bs = &b * s;
        let sbs = s.dot(&bs);
        let ys = y.dot(s);
        b -= &bs * bs.transpose() / sbs;
        b += y * y.transpose() / ys;
    }
    b
}

/// First local minimizer of the quadratic model along `P(x - t g)`.
fn cauchy_point(x: &[f64], g: &DVector<f64>, b: &DMatrix<f64>, bounds: &Bounds) -> Vec<f64> {
    let dim = x.len();
    let mut breaks: Vec<(f64, usize)> = Vec::new();
    let mut d = DVector::<f64>::zeros(dim);
    for i in 0..dim {
        let t = if g[i] < 0.0 {
            (x[i] - bounds.upper[i]) / g[i]
        } else if g[i] > 0.0 {
            (x[i] - bounds.lower[i]) / g[i]
        } else {
            f64::INFINITY
        };
        if t > 0.0 {
            d[i] = -g[i];
            if t.is_finite() {
                breaks.push((t, i));
            }
        }
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut z = DVector::<f64>::zeros(dim);
    let mut t_prev = 0.0;
    let mut next = 0;
    loop {
        let bd = b * &d;
        let fp = g.dot(&d) + z.dot(&bd);
        let fpp = d.dot(&bd);
        if fp >= 0.0 || d.iter().all(|&v| v == 0.0) {
            break;
        }
        let t_next = breaks.get(next).map_or(f64::INFINITY, |b| b.0);
        let dt = t_next - t_prev;
        let dt_star = if fpp > 0.0 { -fp / fpp } else { f64::INFINITY };
        if dt_star < dt {
            z.axpy(dt_star, &d, 1.0);
            break;
        }
        if !t_next.is_finite() {
            // unbounded descent along a free direction with nonpositive curvature
            break;
        }
        z.axpy(dt, &d, 1.0);
        t_prev = t_next;
        while next < breaks.len() && breaks[next].0 <= t_next {
            let i = breaks[next].1;
            z[i] = if d[i] > 0.0 { bounds.upper[i] - x[i] } else { bounds.lower[i] - x[i] };
            d[i] = 0.0;
            next += 1;
        }
    }
    let mut xc: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| a + b).collect();
    bounds.project(&mut xc);
    xc
}

/// Minimize the model over the variables free at the Cauchy point, then
/// truncate the step to stay inside the box.
fn subspace_minimizer(x: &[f64], xc: &[f64], g: &DVector<f64>, b: &DMatrix<f64>, bounds: &Bounds) -> Vec<f64> {
    let free: Vec<usize> = (0..xc.len())
        .filter(|&i| xc[i] > bounds.lower[i] && xc[i] < bounds.upper[i])
        .collect();
    if free.is_empty() {
        return xc.to_vec();
    }
    let z = DVector::from_iterator(xc.len(), xc.iter().zip(x).map(|(a, b)| a - b));
    let r = g + b * z;
    let k = free.len();
    let bff = DMatrix::from_fn(k, k, |i, j| b[(free[i], free[j])]);
    let rf = DVector::from_fn(k, |i, _| -r[free[i]]);
    let du = match bff.cholesky() {
        Some(ch) => ch.solve(&rf),
        None => rf,
    };
    let mut alpha: f64 = 1.0;
    for (j, &i) in free.iter().enumerate() {
        if du[j] > 0.0 {
            alpha = alpha.min((bounds.upper[i] - xc[i]) / du[j]);
        } else if du[j] < 0.0 {
            alpha = alpha.min((bounds.lower[i] - xc[i]) / du[j]);
        }
    }
    let mut out = xc.to_vec();
    for (j, &i) in free.iter().enumerate() {
        out[i] += alpha * du[j];
    }
    bounds.project(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Evaluation {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok(Some((f, g)))
    }

    fn unbounded(dim: usize) -> Bounds {
        Bounds::new(vec![-1e10; dim], vec![1e10; dim]).unwrap()
    }

    #[test]
    fn rosenbrock_unconstrained() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &unbounded(2), &LbfgsbOptions::default(), |_, pg| pg < 1e-9)
            .unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_with_active_bound() {
        // minimizer over b <= 0.5 lies on the bound
        let bounds = Bounds::new(vec![-2.0, -2.0], vec![2.0, 0.5]).unwrap();
        let r = minimize(rosenbrock, &[-1.2, 0.0], &bounds, &LbfgsbOptions::default(), |_, pg| pg < 1e-9).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.x[1], 0.5);
        // on b = 0.5 the minimizer solves d/da [(1-a)^2 + 100 (0.5 - a^2)^2] = 0
        let a = r.x[0];
        let da = -2.0 * (1.0 - a) - 400.0 * a * (0.5 - a * a);
        assert!(da.abs() < 1e-8);
    }

    #[test]
    fn quadratic_box_solution_is_projection() {
        // f = |x - c|^2 with c outside the box: solution is the projection of c
        let c = [3.0, -4.0, 0.25, 10.0];
        let obj = |x: &[f64]| -> Evaluation {
            let f = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            let g = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            Ok(Some((f, g)))
        };
        let bounds = Bounds::new(vec![-1.0; 4], vec![1.0; 4]).unwrap();
        let r = minimize(obj, &[0.0; 4], &bounds, &LbfgsbOptions::default(), |_, pg| pg < 1e-12).unwrap();
        for (a, b) in r.x.iter().zip([1.0, -1.0, 0.25, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_holes_are_backtracked() {
        // log barrier: undefined for x <= 0, minimum at x = 1
        let obj = |x: &[f64]| -> Evaluation {
            if x[0] <= 0.0 {
                return Ok(None);
            }
            Ok(Some((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]])))
        };
        let r = minimize(obj, &[20.0], &unbounded(1), &LbfgsbOptions::default(), |_, pg| pg < 1e-10).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_start() {
        let obj = |_: &[f64]| -> Evaluation { Ok(None) };
        assert!(minimize(obj, &[0.0], &unbounded(1), &LbfgsbOptions::default(), |_, _| false).is_err());
    }
}
