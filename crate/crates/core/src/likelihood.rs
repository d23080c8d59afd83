//! Conditional log-likelihood with analytic gradient and Hessian.
//!
//! For a panel with `T` sample periods
//!
//! ```text
//! L(theta) = T ln|I - phi0 W| + sum_t sum_s ln f(eps_{s,t}(theta))
//! ```
//!
//! Writing `D_t = d eps_t / d theta` (an `n x dim` matrix), `V_t = f'/f` and
//! `U_t = d^2 ln f` evaluated entrywise at the residuals:
//!
//! ```text
//! grad L = sum_t D_t' V_t                       - T tr(W A0^{-1}) e_0
//! hess L = sum_t D_t' diag(U_t) D_t + sum_s V_s d^2 eps_s - T tr((W A0^{-1})^2) e_0 e_0'
//! ```
//!
//! where the only nonzero second derivatives of the residual are the
//! `(lambda_i, gamma_i)` and `(gamma_i, gamma_i)` blocks of the network.
//! Per-period work runs through [`crate::par`] and is summed in period order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{sigmoid, Layout, ModelSpec, PanelData, ParameterVector};
use crate::par;
use crate::weights::TracePower;

/// Precomputed spatial lags for one (spec, panel) pair.
#[derive(Debug)]
pub struct Likelihood<'a> {
    spec: &'a ModelSpec,
    data: &'a PanelData,
    layout: Layout,
    /// `W y[j]` for every stored slice, presample included.
    wy: Vec<DVector<f64>>,
}

/// Residual-level quantities for one parameter vector.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// Flat parameter vector the caches were built from.
    stamp: Vec<f64>,
    theta: ParameterVector,
    slices: Vec<SliceCache>,
}

#[derive(Debug, Clone)]
struct SliceCache {
    eps: DVector<f64>,
    /// `f'/f` at the residuals.
    score: DVector<f64>,
    /// Sigmoid activations, one vector per neuron.
    act: Vec<DVector<f64>>,
}

impl Workspace {
    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn stamp(&self) -> &[f64] {
        &self.stamp
    }

    pub fn residuals(&self) -> Vec<DVector<f64>> {
        self.slices.iter().map(|s| s.eps.clone()).collect()
    }

    pub fn scores(&self) -> Vec<DVector<f64>> {
        self.slices.iter().map(|s| s.score.clone()).collect()
    }
}

impl<'a> Likelihood<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a PanelData) -> Result<Self> {
        spec.validate()?;
        if data.n() != spec.n() || data.p != spec.p || data.q() != spec.q {
            return Err(Error::shape(format!(
                "panel (n = {}, p = {}, q = {}) does not match model (n = {}, p = {}, q = {})",
                data.n(),
                data.p,
                data.q(),
                spec.n(),
                spec.p,
                spec.q
            )));
        }
        let w = &spec.weights;
        let wy = par::map_slice(&data.y, |y| w.mul_dvec(y));
        Ok(Self {
            spec,
            data,
            layout: spec.layout(),
            wy,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn data(&self) -> &PanelData {
        self.data
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Number of observations `n T`.
    pub fn n_obs(&self) -> usize {
        self.data.n() * self.data.t_len()
    }

    /// `W y` for stored slice `j` (presample slices first).
    pub fn spatial_lag(&self, j: usize) -> &DVector<f64> {
        &self.wy[j]
    }

    fn parse(&self, x: &[f64]) -> Result<ParameterVector> {
        ParameterVector::from_slice(&self.layout, x)
    }

    pub fn workspace(&self, theta: &ParameterVector) -> Result<Workspace> {
        theta.check_shape(self.spec)?;
        let density = self.spec.density;
        let slices = par::map_indexed(self.data.t_len(), |t| {
            let x = &self.data.x[t];
            let act: Vec<DVector<f64>> = theta
                .gamma
                .iter()
                .map(|g| (x * DVector::from_column_slice(g)).map(sigmoid))
                .collect();
            let p = self.data.p;
            let mut eps = self.data.y[p + t].clone();
            for lag in 0..=p {
                eps.axpy(-theta.phi_at(lag), &self.wy[p + t - lag], 1.0);
            }
            if !theta.beta.is_empty() {
                eps -= x * DVector::from_column_slice(&theta.beta);
            }
            for (lam, a) in theta.lambda.iter().zip(&act) {
                eps.axpy(-lam, a, 1.0);
            }
            let score = eps.map(|e| density.score(e));
            SliceCache { eps, score, act }
        });
        Ok(Workspace {
            stamp: theta.to_vec(),
            theta: theta.clone(),
            slices,
        })
    }

    pub fn residuals(&self, theta: &ParameterVector) -> Result<Vec<DVector<f64>>> {
        Ok(self.workspace(theta)?.residuals())
    }

    /// Log-likelihood; `-inf` when `phi0` lies outside the admissible interval.
    pub fn log_likelihood(&self, theta: &ParameterVector) -> Result<f64> {
        theta.check_shape(self.spec)?;
        let log_det = match self.spec.weights.log_det_a0(theta.phi0) {
            Ok(v) => v,
            Err(Error::Domain { phi0, limit }) => {
                log::debug!("log-likelihood at phi0 = {phi0} outside (-{limit}, {limit}): -inf");
                return Ok(f64::NEG_INFINITY);
            }
            Err(e) => return Err(e),
        };
        let ws = self.workspace(theta)?;
        Ok(self.log_likelihood_from(&ws, log_det))
    }

    fn log_likelihood_from(&self, ws: &Workspace, log_det: f64) -> f64 {
        let density = self.spec.density;
        let per_t: Vec<f64> = par::map_slice(&ws.slices, |s| s.eps.iter().map(|&e| density.log_pdf(e)).sum());
        self.data.t_len() as f64 * log_det + per_t.iter().sum::<f64>()
    }

    /// `d eps_t / d theta` for sample index `t`, an `n x dim` matrix.
    fn residual_jacobian(&self, ws: &Workspace, t: usize) -> DMatrix<f64> {
        let l = self.layout;
        let n = self.data.n();
        let p = self.data.p;
        let x = &self.data.x[t];
        let cache = &ws.slices[t];
        let mut d = DMatrix::<f64>::zeros(n, l.dim());
        for lag in 0..=p {
            d.column_mut(l.phi(lag)).copy_from(&(-&self.wy[p + t - lag]));
        }
        for k in 0..l.n_beta {
            d.column_mut(l.beta_start() + k).copy_from(&(-x.column(k)));
        }
        for (i, a) in cache.act.iter().enumerate() {
            d.column_mut(l.lambda_start() + i).copy_from(&(-a));
            let lam = ws.theta.lambda[i];
            let g0 = l.gamma_start(i);
            for s in 0..n {
                let fp = a[s] * (1.0 - a[s]);
                for k in 0..l.q {
                    d[(s, g0 + k)] = -lam * fp * x[(s, k)];
                }
            }
        }
        d
    }

    pub fn gradient_from(&self, ws: &Workspace) -> Result<DVector<f64>> {
        let trace = self.spec.weights.trace_w_a0inv(ws.theta.phi0, TracePower::One)?;
        let per_t = par::map_indexed(self.data.t_len(), |t| {
            let d = self.residual_jacobian(ws, t);
            d.tr_mul(&ws.slices[t].score)
        });
        let mut g = DVector::zeros(self.dim());
        for gt in &per_t {
            g += gt;
        }
        g[0] -= self.data.t_len() as f64 * trace;
        Ok(g)
    }

    pub fn gradient(&self, theta: &ParameterVector) -> Result<DVector<f64>> {
        let ws = self.workspace(theta)?;
        self.gradient_from(&ws)
    }

    /// Log-likelihood and gradient from one residual pass.
    pub fn value_and_gradient(&self, theta: &ParameterVector) -> Result<(f64, DVector<f64>)> {
        let log_det = self.spec.weights.log_det_a0(theta.phi0)?;
        let ws = self.workspace(theta)?;
        let value = self.log_likelihood_from(&ws, log_det);
        let grad = self.gradient_from(&ws)?;
        Ok((value, grad))
    }

    /// Flat-vector entry point used by the optimizer. `Ok(None)` signals a
    /// `phi0` outside the admissible interval.
    pub fn value_and_gradient_flat(&self, x: &[f64]) -> Result<Option<(f64, DVector<f64>)>> {
        let theta = self.parse(x)?;
        match self.value_and_gradient(&theta) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Domain { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Analytic Hessian of the log-likelihood.
    pub fn hessian(&self, theta: &ParameterVector) -> Result<DMatrix<f64>> {
        if !self.spec.density.has_curvature() {
            return Err(Error::Unsupported(format!(
                "the {} density has no second derivative at 0; the Hessian (and sandwich covariance) \
                 is unavailable, only point estimates and the score outer product are",
                self.spec.density
            )));
        }
        let trace2 = self.spec.weights.trace_w_a0inv(theta.phi0, TracePower::Two)?;
        let ws = self.workspace(theta)?;
        let l = self.layout;
        let density = self.spec.density;
        let per_t = par::map_indexed(self.data.t_len(), |t| {
            let cache = &ws.slices[t];
            let x = &self.data.x[t];
            let d = self.residual_jacobian(&ws, t);
            let mut ud = d.clone();
            for (s, mut row) in ud.row_iter_mut().enumerate() {
                row *= density.curvature(cache.eps[s]);
            }
            let mut h = d.tr_mul(&ud);
            // V_s * d^2 eps_s / d theta^2, nonzero only in the network blocks
            for (i, a) in cache.act.iter().enumerate() {
                let lam = ws.theta.lambda[i];
                let li = l.lambda_start() + i;
                let g0 = l.gamma_start(i);
                for s in 0..x.nrows() {
                    let v = cache.score[s];
                    let fp = a[s] * (1.0 - a[s]);
                    let fpp = fp * (1.0 - 2.0 * a[s]);
                    for k in 0..l.q {
                        let xk = x[(s, k)];
                        let c = -v * fp * xk;
                        h[(li, g0 + k)] += c;
                        h[(g0 + k, li)] += c;
                        let base = -lam * v * fpp * xk;
                        for m in 0..l.q {
                            h[(g0 + k, g0 + m)] += base * x[(s, m)];
                        }
                    }
                }
            }
            h
        });
        let mut h = DMatrix::zeros(l.dim(), l.dim());
        for ht in &per_t {
            h += ht;
        }
        h[(0, 0)] -= self.data.t_len() as f64 * trace2;

        let asym = (&h - h.transpose()).amax();
        let scale = h.amax().max(1.0);
        if asym > 1e-9 * scale {
            return Err(Error::Singular(format!("Hessian asymmetry {asym:.3e} before symmetrization")));
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Per-observation score contributions `d l_{s,t} / d theta`, one row per
    /// `(t, s)` in period-major order, with
    /// `l_{s,t} = (1/n) ln|A0| + ln f(eps_{s,t})`. Rows sum to the gradient.
    pub fn score_contributions(&self, theta: &ParameterVector) -> Result<DMatrix<f64>> {
        let trace = self.spec.weights.trace_w_a0inv(theta.phi0, TracePower::One)?;
        let ws = self.workspace(theta)?;
        let n = self.data.n();
        let share = -trace / n as f64;
        let blocks = par::map_indexed(self.data.t_len(), |t| {
            let mut r = self.residual_jacobian(&ws, t);
            for (s, mut row) in r.row_iter_mut().enumerate() {
                row *= ws.slices[t].score[s];
            }
            r.column_mut(0).add_scalar_mut(share);
            r
        });
        let mut out = DMatrix::zeros(self.n_obs(), self.dim());
        for (t, b) in blocks.iter().enumerate() {
            out.rows_mut(t * n, n).copy_from(b);
        }
        Ok(out)
    }

    /// `B = (1/nT) sum_{s,t} (d l_{s,t}/d theta)(d l_{s,t}/d theta)'`.
    pub fn score_outer_product(&self, theta: &ParameterVector) -> Result<DMatrix<f64>> {
        let trace = self.spec.weights.trace_w_a0inv(theta.phi0, TracePower::One)?;
        let ws = self.workspace(theta)?;
        let n = self.data.n();
        let share = -trace / n as f64;
        let per_t = par::map_indexed(self.data.t_len(), |t| {
            let mut r = self.residual_jacobian(&ws, t);
            for (s, mut row) in r.row_iter_mut().enumerate() {
                row *= ws.slices[t].score[s];
            }
            r.column_mut(0).add_scalar_mut(share);
            r.tr_mul(&r)
        });
        let mut b = DMatrix::zeros(self.dim(), self.dim());
        for bt in &per_t {
            b += bt;
        }
        Ok(b / self.n_obs() as f64)
    }
}

pub fn log_likelihood(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<f64> {
    Likelihood::new(spec, data)?.log_likelihood(theta)
}

pub fn gradient(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<DVector<f64>> {
    Likelihood::new(spec, data)?.gradient(theta)
}

pub fn hessian(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<DMatrix<f64>> {
    Likelihood::new(spec, data)?.hessian(theta)
}

pub fn score_outer_product(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<DMatrix<f64>> {
    Likelihood::new(spec, data)?.score_outer_product(theta)
}
