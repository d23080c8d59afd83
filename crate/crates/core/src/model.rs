//! Model specification, parameter layout, panel data and the sigmoid network term.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::ErrorDensity;
use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

/// Logistic function, evaluated without overflow for either sign.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Structural description of a model: lags, regressors, neurons and density.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub weights: Arc<WeightMatrix>,
    /// Temporal autoregressive order.
    pub p: usize,
    /// Columns of each covariate matrix `X_t`.
    pub q: usize,
    /// Hidden neurons.
    pub h: usize,
    /// Whether the linear term `X_t beta` is present.
    pub linear: bool,
    /// Whether column 0 of `X_t` is the constant 1.
    pub include_intercept: bool,
    pub density: ErrorDensity,
}

impl ModelSpec {
    pub fn new(weights: Arc<WeightMatrix>, p: usize, q: usize, h: usize, density: ErrorDensity) -> Self {
        Self {
            weights,
            p,
            q,
            h,
            linear: true,
            include_intercept: false,
            density,
        }
    }

    pub fn with_linear(mut self, linear: bool) -> Self {
        self.linear = linear;
        self
    }

    pub fn with_intercept(mut self, include_intercept: bool) -> Self {
        self.include_intercept = include_intercept;
        self
    }

    pub fn with_density(mut self, density: ErrorDensity) -> Self {
        self.density = density;
        self
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    pub fn layout(&self) -> Layout {
        Layout {
            p: self.p,
            q: self.q,
            h: self.h,
            n_beta: if self.linear { self.q } else { 0 },
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.h > 0 && self.q == 0 {
            return Err(Error::invalid("hidden neurons require at least one regressor (q >= 1)"));
        }
        if self.include_intercept && self.q == 0 {
            return Err(Error::invalid("include_intercept requires q >= 1"));
        }
        Ok(())
    }
}

/// Offsets of each parameter block in the flat vector
/// `(phi0, phi_1..phi_p, beta, lambda, gamma row-major by neuron)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub p: usize,
    pub q: usize,
    pub h: usize,
    pub n_beta: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        1 + self.p + self.n_beta + self.h + self.h * self.q
    }
    pub fn phi(&self, lag: usize) -> usize {
        lag
    }
    pub fn beta_start(&self) -> usize {
        1 + self.p
    }
    pub fn lambda_start(&self) -> usize {
        1 + self.p + self.n_beta
    }
    pub fn gamma_start(&self, neuron: usize) -> usize {
        self.lambda_start() + self.h + neuron * self.q
    }

    /// Human-readable parameter names in layout order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..=self.p {
            out.push(format!("phi{i}"));
        }
        for k in 0..self.n_beta {
            out.push(format!("beta{}", k + 1));
        }
        for i in 0..self.h {
            out.push(format!("lambda{}", i + 1));
        }
        for i in 0..self.h {
            for k in 0..self.q {
                out.push(format!("gamma{}.{}", i + 1, k + 1));
            }
        }
        out
    }
}

/// Parameter vector in structured form. Serialized with keys
/// `phi0`, `phi`, `beta`, `lambda`, `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub phi0: f64,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<Vec<f64>>,
}

impl ParameterVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let l = spec.layout();
        Self {
            phi0: 0.0,
            phi: vec![0.0; l.p],
            beta: vec![0.0; l.n_beta],
            lambda: vec![0.0; l.h],
            gamma: vec![vec![0.0; l.q]; l.h],
        }
    }

    pub fn check_shape(&self, spec: &ModelSpec) -> Result<()> {
        let l = spec.layout();
        if self.phi.len() != l.p
            || self.beta.len() != l.n_beta
            || self.lambda.len() != l.h
            || self.gamma.len() != l.h
            || self.gamma.iter().any(|g| g.len() != l.q)
        {
            return Err(Error::shape(format!(
                "parameter blocks (phi {}, beta {}, lambda {}, gamma {}x{:?}) do not match model \
                 (p = {}, beta {}, h = {}, q = {})",
                self.phi.len(),
                self.beta.len(),
                self.lambda.len(),
                self.gamma.len(),
                self.gamma.first().map(Vec::len),
                l.p,
                l.n_beta,
                l.h,
                l.q
            )));
        }
        if !self.to_vec().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("parameter vector contains non-finite values"));
        }
        Ok(())
    }

    /// `phi_i` for `i = 0..=p`.
    pub fn phi_at(&self, lag: usize) -> f64 {
        if lag == 0 {
            self.phi0
        } else {
            self.phi[lag - 1]
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.phi.len() + self.beta.len() + self.lambda.len() * (1 + self.gamma.first().map_or(0, Vec::len)));
        v.push(self.phi0);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.lambda);
        for g in &self.gamma {
            v.extend_from_slice(g);
        }
        v
    }

    pub fn from_slice(layout: &Layout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::shape(format!(
                "flat parameter vector has length {}, expected {}",
                x.len(),
                layout.dim()
            )));
        }
        let b = layout.beta_start();
        let l = layout.lambda_start();
        Ok(Self {
            phi0: x[0],
            phi: x[1..b].to_vec(),
            beta: x[b..l].to_vec(),
            lambda: x[l..l + layout.h].to_vec(),
            gamma: (0..layout.h)
                .map(|i| {
                    let g = layout.gamma_start(i);
                    x[g..g + layout.q].to_vec()
                })
                .collect(),
        })
    }
}

/// Map `theta` to its identified representative: every neuron with a
/// negative first input weight is sign-flipped through `F(x) = 1 - F(-x)`,
/// its old output weight moving into the intercept, and neurons are then
/// ordered by output weight descending.
pub fn canonicalize(theta: &ParameterVector, include_intercept: bool) -> Result<ParameterVector> {
    let mut out = theta.clone();
    for i in 0..out.lambda.len() {
        if out.gamma[i].first().is_some_and(|&g| g < 0.0) {
            if !include_intercept || out.beta.is_empty() {
                return Err(Error::Unsupported(format!(
                    "neuron {} has gamma_{}1 < 0 but the model has no intercept to absorb a sign flip",
                    i + 1,
                    i + 1
                )));
            }
            let lam = out.lambda[i];
            out.beta[0] += lam;
            out.lambda[i] = -lam;
            for g in out.gamma[i].iter_mut() {
                *g = -*g;
            }
        }
    }
    let mut order: Vec<usize> = (0..out.lambda.len()).collect();
    order.sort_by(|&a, &b| out.lambda[b].total_cmp(&out.lambda[a]));
    let lambda = order.iter().map(|&i| out.lambda[i]).collect();
    let gamma = order.iter().map(|&i| out.gamma[i].clone()).collect();
    out.lambda = lambda;
    out.gamma = gamma;
    Ok(out)
}

/// Observed panel: `p` presample slices followed by `T` sample slices of `Y`,
/// and the `T` covariate matrices of the sample window.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    /// `y[0..p]` is `Y_{1-p}..Y_0`; `y[p + t - 1]` is `Y_t` for `t = 1..T`.
    pub y: Vec<DVector<f64>>,
    /// `x[t - 1]` is the `n x q` matrix `X_t`.
    pub x: Vec<DMatrix<f64>>,
    pub p: usize,
}

impl PanelData {
    pub fn new(y: Vec<DVector<f64>>, x: Vec<DMatrix<f64>>, p: usize) -> Result<Self> {
        let d = Self { y, x, p };
        d.check_internal()?;
        Ok(d)
    }

    fn check_internal(&self) -> Result<()> {
        if self.y.len() != self.p + self.x.len() {
            return Err(Error::shape(format!(
                "{} Y slices for p = {} and T = {} (expected p + T)",
                self.y.len(),
                self.p,
                self.x.len()
            )));
        }
        if self.x.is_empty() {
            return Err(Error::shape("panel has no sample periods"));
        }
        let n = self.y[0].len();
        let q = self.x[0].ncols();
        if self.y.iter().any(|v| v.len() != n) {
            return Err(Error::shape("Y slices differ in length"));
        }
        if self.x.iter().any(|m| m.nrows() != n || m.ncols() != q) {
            return Err(Error::shape(format!("every X_t must be {n} x {q}")));
        }
        if self.y.iter().any(|v| v.iter().any(|a| !a.is_finite()))
            || self.x.iter().any(|m| m.iter().any(|a| !a.is_finite()))
        {
            return Err(Error::invalid("panel contains non-finite values"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y[0].len()
    }

    pub fn q(&self) -> usize {
        self.x[0].ncols()
    }

    /// Sample length `T`.
    pub fn t_len(&self) -> usize {
        self.x.len()
    }

    /// `Y_{t - lag}` for sample index `t` in `0..T` (i.e. period `t + 1`).
    pub fn y_lag(&self, t: usize, lag: usize) -> &DVector<f64> {
        &self.y[self.p + t - lag]
    }

    /// Check the panel against a model, including full column rank of each `X_t`.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.check_internal()?;
        if self.n() != spec.n() {
            return Err(Error::shape(format!(
                "panel has {} locations, weight matrix has {}",
                self.n(),
                spec.n()
            )));
        }
        if self.p != spec.p {
            return Err(Error::shape(format!(
                "panel carries {} presample slices, model has p = {}",
                self.p, spec.p
            )));
        }
        if self.q() != spec.q {
            return Err(Error::shape(format!(
                "panel has {} covariates, model has q = {}",
                self.q(),
                spec.q
            )));
        }
        if spec.q > 0 {
            for (t, x) in self.x.iter().enumerate() {
                if (x.transpose() * x).cholesky().is_none() {
                    return Err(Error::invalid(format!("X_{} is not of full column rank", t + 1)));
                }
            }
        }
        Ok(())
    }
}

/// Network output `sum_i lambda_i F(x_s' gamma_i)` for every row of `x`.
pub fn nn_component(x: &DMatrix<f64>, lambda: &[f64], gamma: &[Vec<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(x.nrows());
    for (lam, g) in lambda.iter().zip(gamma) {
        let g = DVector::from_column_slice(g);
        let act = x * g;
        for (o, a) in out.iter_mut().zip(act.iter()) {
            *o += lam * sigmoid(*a);
        }
    }
    out
}

/// Conditional residuals `eps_t(theta)` for `t = 1..T`.
pub fn residuals(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    theta.check_shape(spec)?;
    if data.n() != spec.n() || data.p != spec.p || data.q() != spec.q {
        return Err(Error::shape("panel dimensions do not match the model"));
    }
    let w = &spec.weights;
    let wy: Vec<DVector<f64>> = data.y.iter().map(|y| w.mul_dvec(y)).collect();
    Ok((0..data.t_len())
        .map(|t| residual_slice(theta, data, &wy, t))
        .collect())
}

/// One residual slice from pre-multiplied spatial lags `wy[j] = W y[j]`.
pub(crate) fn residual_slice(
    theta: &ParameterVector,
    data: &PanelData,
    wy: &[DVector<f64>],
    t: usize,
) -> DVector<f64> {
    let p = data.p;
    let mut eps = data.y[p + t].clone();
    for lag in 0..=p {
        eps.axpy(-theta.phi_at(lag), &wy[p + t - lag], 1.0);
    }
    let x = &data.x[t];
    if !theta.beta.is_empty() {
        eps -= x * DVector::from_column_slice(&theta.beta);
    }
    if !theta.lambda.is_empty() {
        eps -= nn_component(x, &theta.lambda, &theta.gamma);
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        for x in [-3.0, -0.2, 0.7, 12.0] {
            assert_relative_eq!(sigmoid(x), 1.0 - sigmoid(-x), epsilon = 1e-15);
        }
    }

    #[test]
    fn nn_component_examples() {
        let x = DMatrix::zeros(4, 2);
        let out = nn_component(&x, &[1.5], &[vec![0.3, -2.0]]);
        assert!(out.iter().all(|&v| v == 0.75));
        assert_eq!(nn_component(&x, &[], &[]), DVector::zeros(4));
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let out = nn_component(&x, &[1.5], &[vec![0.75, -0.35]]);
        assert_relative_eq!(out[0], 1.5 / (1.0 + (-0.4f64).exp()), epsilon = 1e-15);
        assert_relative_eq!(out[0], 0.898031, epsilon = 1e-6);
    }

    fn spec_2x2(p: usize, q: usize, h: usize) -> ModelSpec {
        ModelSpec::new(
            Arc::new(WeightMatrix::queen_lattice(2, 2).unwrap()),
            p,
            q,
            h,
            ErrorDensity::Normal,
        )
    }

    #[test]
    fn residuals_examples() {
        let spec = spec_2x2(0, 0, 0);
        let data = PanelData::new(vec![DVector::from_element(4, 1.0)], vec![DMatrix::zeros(4, 0)], 0).unwrap();
        let mut theta = ParameterVector::zeros(&spec);
        let eps = residuals(&spec, &theta, &data).unwrap();
        assert_eq!(eps[0], data.y[0]);
        theta.phi0 = 0.5;
        let eps = residuals(&spec, &theta, &data).unwrap();
        for v in eps[0].iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn layout_round_trip() {
        let spec = spec_2x2(2, 3, 2);
        let l = spec.layout();
        assert_eq!(l.dim(), 3 + 3 + 2 + 6);
        let x: Vec<f64> = (0..l.dim()).map(|i| i as f64).collect();
        let theta = ParameterVector::from_slice(&l, &x).unwrap();
        assert_eq!(theta.phi, vec![1.0, 2.0]);
        assert_eq!(theta.gamma[1], vec![11.0, 12.0, 13.0]);
        assert_eq!(theta.to_vec(), x);
        assert_eq!(l.names()[l.gamma_start(1)], "gamma2.1");
        let no_linear = spec.clone().with_linear(false);
        assert_eq!(no_linear.dim(), 3 + 2 + 6);
    }

    #[test]
    fn canonicalize_examples() {
        let theta = ParameterVector {
            phi0: 0.2,
            phi: vec![0.1],
            beta: vec![0.4, 1.0],
            lambda: vec![2.0, 0.8],
            gamma: vec![vec![0.7, 0.1], vec![0.3, -1.0]],
        };
        assert_eq!(canonicalize(&theta, true).unwrap(), theta);

        let mut swapped = theta.clone();
        swapped.lambda = vec![0.8, 2.0];
        swapped.gamma = vec![vec![0.3, -1.0], vec![0.7, 0.1]];
        assert_eq!(canonicalize(&swapped, true).unwrap(), theta);

        let flip = ParameterVector {
            phi0: 0.0,
            phi: vec![],
            beta: vec![0.2, 0.0],
            lambda: vec![1.5],
            gamma: vec![vec![-0.75, 0.35]],
        };
        let c = canonicalize(&flip, true).unwrap();
        assert_eq!(c.lambda, vec![-1.5]);
        assert_eq!(c.gamma, vec![vec![0.75, -0.35]]);
        assert_relative_eq!(c.beta[0], 1.7, epsilon = 1e-15);
        assert!(canonicalize(&flip, false).is_err());
    }

    #[test]
    fn panel_validation() {
        let spec = spec_2x2(1, 1, 0);
        let y = vec![DVector::zeros(4); 3];
        let x = vec![DMatrix::from_element(4, 1, 1.0); 2];
        let data = PanelData::new(y.clone(), x, 1).unwrap();
        assert!(data.validate(&spec).is_ok());
        let rank_deficient = PanelData::new(y.clone(), vec![DMatrix::zeros(4, 1); 2], 1).unwrap();
        assert!(rank_deficient.validate(&spec).is_err());
        assert!(PanelData::new(y, vec![DMatrix::zeros(4, 1); 3], 1).is_err());
    }
}
