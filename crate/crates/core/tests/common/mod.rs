#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Laplace, Normal, StudentsT};

use pstar::likelihood::Likelihood;
use pstar::simulate::{simulate, CovariateConfig, Design, SimulationOptions};
use pstar::{ErrorDensity, ModelSpec, PanelData, ParameterVector, WeightMatrix};

pub fn model1_theta() -> ParameterVector {
    ParameterVector {
        phi0: 0.6,
        phi: vec![-0.274],
        beta: vec![],
        lambda: vec![1.5],
        gamma: vec![vec![0.75, -0.35]],
    }
}

/// p = 1, two regressors, one neuron and no linear term.
pub fn model1_spec(n1: usize, n2: usize, density: ErrorDensity) -> ModelSpec {
    ModelSpec::new(Arc::new(WeightMatrix::queen_lattice(n1, n2).unwrap()), 1, 2, 1, density).with_linear(false)
}

pub fn model1_panel(spec: &ModelSpec, t_len: usize, seed: u64) -> PanelData {
    let cfg = CovariateConfig::paper_design();
    simulate(spec, &model1_theta(), Design::Generate(&cfg), &SimulationOptions::new(t_len, seed))
        .unwrap()
        .panel
}

pub fn density_ln_pdf(d: ErrorDensity, s: f64) -> f64 {
    match d {
        ErrorDensity::Normal => Normal::new(0.0, 1.0).unwrap().ln_pdf(s),
        ErrorDensity::ScaledT { nu } => StudentsT::new(0.0, ((nu - 2.0) / nu).sqrt(), nu).unwrap().ln_pdf(s),
        ErrorDensity::Laplace => Laplace::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap().ln_pdf(s),
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dense evaluation: `T ln|det(I - phi0 W)|` from an LU factorization plus
/// the density summed over residuals built from the dense `W`.
pub fn dense_log_likelihood(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> f64 {
    let n = spec.n();
    let w = spec.weights.to_dense();
    let a0 = DMatrix::<f64>::identity(n, n) - &w * theta.phi0;
    let det = a0.clone().lu().determinant();
    let mut total = data.t_len() as f64 * det.abs().ln();
    for t in 0..data.t_len() {
        let y = &data.y[t + spec.p];
        let x = &data.x[t];
        let mut eps = &a0 * y;
        for lag in 1..=spec.p {
            eps -= &w * &data.y[t + spec.p - lag] * theta.phi[lag - 1];
        }
        for s in 0..n {
            let mut v = eps[s];
            for (k, b) in theta.beta.iter().enumerate() {
                v -= x[(s, k)] * b;
            }
            for (i, lam) in theta.lambda.iter().enumerate() {
                let z: f64 = (0..spec.q).map(|k| x[(s, k)] * theta.gamma[i][k]).sum();
                v -= lam * logistic(z);
            }
            total += density_ln_pdf(spec.density, v);
        }
    }
    total
}

/// Random small instance: lattice, lags, neurons, parameters and panel.
pub struct Instance {
    pub spec: ModelSpec,
    pub theta: ParameterVector,
    pub data: PanelData,
}

pub fn random_instance(seed: u64, density: ErrorDensity, max_side: usize, max_t: usize, max_h: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = rng.random_range(3..=max_side);
    let n2 = rng.random_range(3..=max_side);
    random_instance_on(seed, density, n1, n2, max_t, max_h)
}

pub fn random_instance_on(seed: u64, density: ErrorDensity, n1: usize, n2: usize, max_t: usize, max_h: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let p = rng.random_range(0..=2);
    let q = rng.random_range(1..=3);
    let h = rng.random_range(0..=max_h);
    let t_len = rng.random_range(1..=max_t);
    let linear = rng.random_bool(0.7);
    let spec = ModelSpec::new(Arc::new(WeightMatrix::queen_lattice(n1, n2).unwrap()), p, q, h, density)
        .with_linear(linear);
    let mut u = |a: f64, b: f64| rng.random_range(a..b);
    let theta = ParameterVector {
        phi0: u(-0.8, 0.8),
        phi: (0..p).map(|_| u(-0.4, 0.4)).collect(),
        beta: if linear { (0..q).map(|_| u(-1.0, 1.0)).collect() } else { vec![] },
        lambda: (0..h).map(|_| u(-2.0, 2.0)).collect(),
        gamma: (0..h).map(|_| (0..q).map(|_| u(-1.5, 1.5)).collect()).collect(),
    };
    let n = n1 * n2;
    let y = (0..p + t_len)
        .map(|_| DVector::from_fn(n, |_, _| u(-2.0, 2.0)))
        .collect();
    let x = (0..t_len)
        .map(|_| DMatrix::from_fn(n, q, |_, _| u(-2.0, 2.0)))
        .collect();
    let data = PanelData::new(y, x, p).unwrap();
    Instance { spec, theta, data }
}

/// Relative error with an absolute floor for entries near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(1.0)
}

/// Central differences of the log-likelihood, step `1e-6` relative.
pub fn fd_gradient(lik: &Likelihood<'_>, theta: &ParameterVector) -> Vec<f64> {
    let layout = lik.layout();
    let x0 = theta.to_vec();
    (0..x0.len())
        .map(|k| {
            let h = 1e-6 * x0[k].abs().max(1.0);
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = lik.log_likelihood(&ParameterVector::from_slice(&layout, &xp).unwrap()).unwrap();
            let fm = lik.log_likelihood(&ParameterVector::from_slice(&layout, &xm).unwrap()).unwrap();
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn fd_hessian(lik: &Likelihood<'_>, theta: &ParameterVector) -> DMatrix<f64> {
    let layout = lik.layout();
    let x0 = theta.to_vec();
    let d = x0.len();
    let mut h = DMatrix::zeros(d, d);
    for k in 0..d {
        let step = 1e-5 * x0[k].abs().max(1.0);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[k] += step;
        xm[k] -= step;
        let gp = lik.gradient(&ParameterVector::from_slice(&layout, &xp).unwrap()).unwrap();
        let gm = lik.gradient(&ParameterVector::from_slice(&layout, &xm).unwrap()).unwrap();
        h.set_column(k, &((gp - gm) / (2.0 * step)));
    }
    h
}

