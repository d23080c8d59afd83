//! Maximum-likelihood fitting: multi-start box-constrained quasi-Newton,
//! canonicalization, sandwich covariance and likelihood-ratio tests.

use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::causality::{check_causal, CausalityReport, DEFAULT_CAUSAL_MARGIN};
use crate::error::{Error, Result};
use crate::likelihood::Likelihood;
use crate::model::{canonicalize, Layout, ModelSpec, PanelData, ParameterVector};
use crate::optim::{minimize, Bounds, LbfgsbOptions, Termination};
use crate::par;
use crate::simulate::stream_seed;

/// Output weights below this magnitude leave the neuron's input weights
/// unidentified.
const DEGENERATE_LAMBDA: f64 = 1e-3;
const Z_95: f64 = 1.959_963_984_540_054;

/// Box limits per parameter block. `phi0` is bounded by
/// `phi0_fraction / tau_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundSpec {
    pub phi0_fraction: f64,
    pub phi: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self {
            phi0_fraction: 0.995,
            phi: 3.0,
            beta: 50.0,
            lambda: 50.0,
            gamma: 25.0,
        }
    }
}

impl BoundSpec {
    pub fn to_bounds(&self, spec: &ModelSpec) -> Result<Bounds> {
        let l = spec.layout();
        let phi0 = self.phi0_fraction * spec.weights.phi0_limit()?;
        let mut upper = Vec::with_capacity(l.dim());
        upper.push(phi0);
        upper.extend(std::iter::repeat_n(self.phi, l.p));
        upper.extend(std::iter::repeat_n(self.beta, l.n_beta));
        upper.extend(std::iter::repeat_n(self.lambda, l.h));
        upper.extend(std::iter::repeat_n(self.gamma, l.h * l.q));
        let lower = upper.iter().map(|u| -u).collect();
        Bounds::new(lower, upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub bounds: BoundSpec,
    /// Relative change of the objective that ends a non-smooth (Laplace) fit.
    pub ftol_nonsmooth: f64,
    /// Optional user-supplied first start.
    #[serde(skip)]
    pub start: Option<ParameterVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 5,
            seed: 1,
            tol: 1e-8,
            max_iter: 500,
            memory: 10,
            bounds: BoundSpec::default(),
            ftol_nonsmooth: 1e-12,
            start: None,
        }
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, Serialize)]
pub struct StartRecord {
    pub index: usize,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Option<Termination>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Sandwich {
    pub omega: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub n_obs: usize,
}

impl Sandwich {
    pub fn std_errors(&self) -> Vec<f64> {
        let n = self.n_obs as f64;
        self.omega.diagonal().iter().map(|v| (v / n).sqrt()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Canonical estimate (raw optimizer output when canonicalization fails).
    pub theta: ParameterVector,
    pub names: Vec<String>,
    pub loglik: f64,
    /// Projected-gradient infinity norm of `L` at the estimate.
    pub gradient_norm: f64,
    /// Covariance of `theta` itself, `Omega / nT`.
    pub covariance: Option<DMatrix<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub ci95: Option<Vec<(f64, f64)>>,
    pub covariance_note: Option<String>,
    pub n_starts: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub best_start: usize,
    pub starts: Vec<StartRecord>,
    pub aic: f64,
    pub n_obs: usize,
    pub causality: Option<CausalityReport>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct ParameterRow<'a> {
    name: &'a str,
    estimate: f64,
    std_error: Option<f64>,
    ci95: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct FitRecord<'a> {
    theta: &'a ParameterVector,
    parameters: Vec<ParameterRow<'a>>,
    loglik: f64,
    aic: f64,
    gradient_norm: f64,
    converged: bool,
    termination: Termination,
    n_starts: usize,
    n_iterations: usize,
    best_start: usize,
    n_obs: usize,
    covariance: Option<Vec<Vec<f64>>>,
    covariance_note: &'a Option<String>,
    causality: &'a Option<CausalityReport>,
    warnings: &'a [String],
    starts: &'a [StartRecord],
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let flat = self.theta.to_vec();
        let parameters = self
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| ParameterRow {
                name,
                estimate: flat[i],
                std_error: self.std_errors.as_ref().map(|s| s[i]),
                ci95: self.ci95.as_ref().map(|c| c[i]),
            })
            .collect();
        FitRecord {
            theta: &self.theta,
            parameters,
            loglik: self.loglik,
            aic: self.aic,
            gradient_norm: self.gradient_norm,
            converged: self.converged,
            termination: self.termination,
            n_starts: self.n_starts,
            n_iterations: self.n_iterations,
            best_start: self.best_start,
            n_obs: self.n_obs,
            covariance: self
                .covariance
                .as_ref()
                .map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect()),
            covariance_note: &self.covariance_note,
            causality: &self.causality,
            warnings: &self.warnings,
            starts: &self.starts,
        }
        .serialize(serializer)
    }
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Estimates with standard errors and 95% intervals, one row per parameter.
    pub fn table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat = self.theta.to_vec();
        match (&self.std_errors, &self.ci95) {
            (Some(se), Some(ci)) => {
                writeln!(f, "{:<12} {:>10} {:>10}   {:<22}", "Parameter", "Estimate", "Std.", "95% C.I.")?;
                for (i, name) in self.names.iter().enumerate() {
                    let ci_text = format!("({:.4}, {:.4})", ci[i].0, ci[i].1);
                    writeln!(f, "{name:<12} {:>10.4} {:>10.4}   {ci_text:<22}", flat[i], se[i])?;
                }
            }
            _ => {
                writeln!(f, "{:<12} {:>10}", "Parameter", "Estimate")?;
                for (i, name) in self.names.iter().enumerate() {
                    writeln!(f, "{name:<12} {:>10.4}", flat[i])?;
                }
            }
        }
        writeln!(f, "log-likelihood {:.4}   AIC {:.4}   nT = {}", self.loglik, self.aic, self.n_obs)?;
        writeln!(
            f,
            "converged: {} ({:?}, {} iterations, best of {} starts)",
            self.converged, self.termination, self.n_iterations, self.n_starts
        )?;
        if let Some(c) = &self.causality {
            writeln!(f, "causal: {} (max root modulus {:.4})", c.causal, c.max_root_modulus)?;
        }
        if let Some(note) = &self.covariance_note {
            writeln!(f, "note: {note}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Gaussian profile of the linear STAR model `A0 Y_t = sum_i phi_i W Y_{t-i} + X_t b`
/// over a grid of `phi0`. Returns `(phi0, [phi_1..phi_p, b])`.
fn linear_profile(lik: &Likelihood<'_>, limit: f64) -> Result<(f64, DVector<f64>)> {
    let spec = lik.spec();
    let data = lik.data();
    let (p, q, n) = (spec.p, spec.q, spec.n());
    let k = p + q;
    let t_len = data.t_len();
    let regressors = |t: usize| -> DMatrix<f64> {
        let mut r = DMatrix::zeros(n, k);
        for lag in 1..=p {
            r.set_column(lag - 1, lik.spatial_lag(t + p - lag));
        }
        if q > 0 {
            r.columns_mut(p, q).copy_from(&data.x[t]);
        }
        r
    };
    let mut m = DMatrix::<f64>::zeros(k, k);
    let mut ry = DVector::<f64>::zeros(k);
    let mut rwy = DVector::<f64>::zeros(k);
    let (mut yy, mut ywy, mut wywy) = (0.0, 0.0, 0.0);
    for t in 0..t_len {
        let r = regressors(t);
        let y = &data.y[t + p];
        let wy = lik.spatial_lag(t + p);
        m += r.tr_mul(&r);
        ry += r.tr_mul(y);
        rwy += r.tr_mul(wy);
        yy += y.dot(y);
        ywy += y.dot(wy);
        wywy += wy.dot(wy);
    }
    let solve = |c: &DVector<f64>| -> DVector<f64> {
        if k == 0 {
            return DVector::zeros(0);
        }
        match m.clone().cholesky() {
            Some(ch) => ch.solve(c),
            None => m
                .clone()
                .svd(true, true)
                .solve(c, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(k)),
        }
    };
    let nt = (n * t_len) as f64;
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    let steps = 39;
    for g in 0..steps {
        let phi0 = limit * 0.95 * (2.0 * g as f64 / (steps - 1) as f64 - 1.0);
        let c = &ry - &rwy * phi0;
        let coef = solve(&c);
        let zz = yy - 2.0 * phi0 * ywy + phi0 * phi0 * wywy;
        let rss = (zz - c.dot(&coef)).max(1e-300);
        let prof = t_len as f64 * spec.weights.log_det_a0(phi0)? - 0.5 * nt * rss.ln();
        if best.as_ref().is_none_or(|b| prof > b.0) {
            best = Some((prof, phi0, coef));
        }
    }
    let (_, phi0, coef) = best.expect("grid is nonempty");
    Ok((phi0, coef))
}

/// Starting points: the first from a linear fit plus small descending output
/// weights and standard-normal input weights, the rest multiplicative
/// jitters of it. Every start has `gamma_{i1} > 0` and lies inside the bounds.
pub fn initial_points(spec: &ModelSpec, data: &PanelData, n_starts: usize, seed: u64) -> Result<Vec<ParameterVector>> {
    initial_points_with(spec, data, n_starts, seed, &BoundSpec::default())
}

fn initial_points_with(
    spec: &ModelSpec,
    data: &PanelData,
    n_starts: usize,
    seed: u64,
    bound_spec: &BoundSpec,
) -> Result<Vec<ParameterVector>> {
    if n_starts == 0 {
        return Err(Error::invalid("n_starts must be at least 1"));
    }
    data.validate(spec)?;
    let lik = Likelihood::new(spec, data)?;
    let bounds = bound_spec.to_bounds(spec)?;
    let (phi0, coef) = linear_profile(&lik, spec.weights.phi0_limit()?)?;
    let mut base = ParameterVector::zeros(spec);
    base.phi0 = phi0;
    for i in 0..spec.p {
        base.phi[i] = coef[i];
    }
    if spec.linear {
        for k in 0..spec.q {
            base.beta[k] = coef[spec.p + k];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
    for i in 0..spec.h {
        base.lambda[i] = 0.5 / (i + 1) as f64;
        for k in 0..spec.q {
            base.gamma[i][k] = StandardNormal.sample(&mut rng);
        }
        base.gamma[i][0] = base.gamma[i][0].abs();
    }
    // near zero the network is linear with slope lambda * gamma / 4, so the
    // linear-fit covariate coefficients point a second base at the first neuron
    let mut bases = vec![base.clone()];
    if spec.h > 0 && spec.q > 0 {
        if let Some((lambda, gamma)) = neuron_from_slope(data, &coef.as_slice()[spec.p..], spec.linear) {
            let mut slope = base;
            slope.lambda[0] = lambda;
            slope.gamma[0] = gamma;
            bases.push(slope);
        }
    }
    let layout = spec.layout();
    let mut out = Vec::with_capacity(n_starts);
    for s in 0..n_starts {
        let x = if s < bases.len() {
            bases[s].to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, s as u64));
            bases[s % bases.len()]
                .to_vec()
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v * (1.0 + 0.5 * z)
                })
                .collect()
        };
        out.push(finish_start(&layout, x, &bounds)?);
    }
    Ok(out)
}

fn neuron_from_slope(data: &PanelData, b: &[f64], linear: bool) -> Option<(f64, Vec<f64>)> {
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return None;
    }
    let sign = if b[0] < 0.0 { -1.0 } else { 1.0 };
    let dir: Vec<f64> = b.iter().map(|v| sign * v / norm).collect();
    let (mut sum, mut sq, mut count) = (0.0, 0.0, 0.0);
    for x in &data.x {
        for s in 0..x.nrows() {
            let z: f64 = dir.iter().enumerate().map(|(k, d)| d * x[(s, k)]).sum();
            sum += z;
            sq += z * z;
            count += 1.0;
        }
    }
    let mean = sum / count;
    let sd = (sq / count - mean * mean).max(0.0).sqrt();
    if !(sd > 1e-12) {
        return None;
    }
    let gamma: Vec<f64> = dir.iter().map(|d| d / sd).collect();
    let lambda = if linear { 0.5 } else { 4.0 * sign * norm * sd };
    Some((lambda, gamma))
}

fn finish_start(layout: &Layout, mut x: Vec<f64>, bounds: &Bounds) -> Result<ParameterVector> {
    bounds.project(&mut x);
    let mut theta = ParameterVector::from_slice(layout, &x)?;
    for g in theta.gamma.iter_mut() {
        if let Some(first) = g.first_mut() {
            *first = first.abs().max(1e-3);
        }
    }
    Ok(theta)
}

struct StartOutcome {
    record: StartRecord,
    x: Option<Vec<f64>>,
}

/// Fit by maximum likelihood.
pub fn fit(spec: &ModelSpec, data: &PanelData, options: &FitOptions) -> Result<FitResult> {
    data.validate(spec)?;
    if options.n_starts == 0 {
        return Err(Error::invalid("n_starts must be at least 1"));
    }
    let lik = Likelihood::new(spec, data)?;
    let layout = spec.layout();
    let bounds = options.bounds.to_bounds(spec)?;
    let n_obs = lik.n_obs();
    let nt = n_obs as f64;
    let mut starts = initial_points_with(spec, data, options.n_starts, options.seed, &options.bounds)?;
    if let Some(user) = &options.start {
        user.check_shape(spec)?;
        starts[0] = user.clone();
    }
    let smooth = spec.density.has_curvature();
    let opt = LbfgsbOptions {
        memory: options.memory,
        max_iter: options.max_iter,
        ftol: if smooth { 0.0 } else { options.ftol_nonsmooth },
        ..LbfgsbOptions::default()
    };
    let tol = options.tol;
    // the optimizer sees -L / nT; convert back for the convergence rule
    let converged_rule = move |f: f64, pg: f64| pg * nt <= tol * (1.0 + (f * nt).abs());

    let outcomes: Vec<StartOutcome> = par::map_indexed(starts.len(), |index| {
        let objective = |x: &[f64]| -> crate::optim::Evaluation {
            Ok(lik
                .value_and_gradient_flat(x)?
                .map(|(v, g)| (-v / nt, g.iter().map(|gi| -gi / nt).collect())))
        };
        match minimize(objective, &starts[index].to_vec(), &bounds, &opt, converged_rule) {
            Ok(r) => {
                let converged = match r.termination {
                    Termination::Converged => true,
                    Termination::FunctionTolerance => !smooth,
                    _ => false,
                };
                StartOutcome {
                    record: StartRecord {
                        index,
                        loglik: Some(-r.f * nt),
                        iterations: r.iterations,
                        evaluations: r.evaluations,
                        termination: Some(r.termination),
                        converged,
                        error: None,
                    },
                    x: Some(r.x),
                }
            }
            Err(e) => StartOutcome {
                record: StartRecord {
                    index,
                    loglik: None,
                    iterations: 0,
                    evaluations: 0,
                    termination: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
                x: None,
            },
        }
    });

    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        let Some(ll) = o.record.loglik else { continue };
        if best.is_none_or(|b| ll > outcomes[b].record.loglik.unwrap_or(f64::NEG_INFINITY)) {
            best = Some(i);
        }
    }
    let records: Vec<StartRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let all_failed_search = outcomes
        .iter()
        .all(|o| o.x.is_none() || (o.record.termination == Some(Termination::LineSearchFailed) && !o.record.converged));
    let Some(best) = best.filter(|_| !all_failed_search) else {
        let detail = records
            .iter()
            .map(|r| {
                format!(
                    "start {}: {}",
                    r.index + 1,
                    r.error
                        .clone()
                        .unwrap_or_else(|| format!("{:?}, loglik {:?}", r.termination, r.loglik))
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::NotConverged(format!("all starts failed: {detail}")));
    };

    let raw_x = outcomes[best].x.clone().expect("best start has a point");
    let raw = ParameterVector::from_slice(&layout, &raw_x)?;
    let raw_ll = outcomes[best].record.loglik.expect("best start has a value");
    let mut warnings = Vec::new();
    let theta = match canonicalize(&raw, spec.include_intercept) {
        Ok(c) => {
            let ll = lik.log_likelihood(&c)?;
            if (ll - raw_ll).abs() > 1e-8 * (1.0 + raw_ll.abs()) {
                warnings.push(format!(
                    "canonicalization changed the log-likelihood from {raw_ll} to {ll}; reporting the raw optimum"
                ));
                raw.clone()
            } else {
                c
            }
        }
        Err(e) => {
            warnings.push(format!("estimate left uncanonicalized: {e}"));
            raw.clone()
        }
    };
    let (loglik, grad) = lik.value_and_gradient(&theta)?;
    let theta_x = theta.to_vec();
    let gradient_norm = bounds.projected_gradient_norm(&theta_x, &(-&grad).as_slice().to_vec());
    let converged = outcomes[best].record.converged;

    let phi0_hi = bounds.upper[0];
    if (theta.phi0.abs() - phi0_hi).abs() <= 1e-6 * phi0_hi {
        warnings.push(format!("phi0 = {:.6} is pinned at its bound {:.6}", theta.phi0, phi0_hi));
    }
    for (i, lam) in theta.lambda.iter().enumerate() {
        if lam.abs() < DEGENERATE_LAMBDA {
            warnings.push(format!(
                "lambda_{} = {lam:.2e} is near zero; gamma_{} is not identified",
                i + 1,
                i + 1
            ));
        }
    }
    if !converged {
        warnings.push(format!(
            "optimizer did not converge ({:?}); projected gradient {gradient_norm:.3e}",
            outcomes[best].record.termination
        ));
    }
    let causality = match check_causal(spec, &theta, DEFAULT_CAUSAL_MARGIN) {
        Ok(r) => {
            if !r.causal {
                warnings.push(format!(
                    "estimate is not causal (max root modulus {:.4})",
                    r.max_root_modulus
                ));
            }
            Some(r)
        }
        Err(e) => {
            warnings.push(format!("causality check failed: {e}"));
            None
        }
    };

    let (mut covariance, mut std_errors, mut ci95, mut covariance_note) = (None, None, None, None);
    if smooth {
        match sandwich_covariance(spec, &theta, data) {
            Ok(sw) => {
                let se = sw.std_errors();
                ci95 = Some(theta_x.iter().zip(&se).map(|(v, s)| (v - Z_95 * s, v + Z_95 * s)).collect());
                covariance = Some(&sw.omega / nt);
                std_errors = Some(se);
            }
            Err(e) => covariance_note = Some(format!("covariance unavailable: {e}")),
        }
    } else {
        covariance_note = Some(format!(
            "the {} density has no second derivative at 0, so the sandwich covariance is unavailable; \
             point estimates only",
            spec.density
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }

    let k = layout.dim();
    Ok(FitResult {
        theta,
        names: layout.names(),
        loglik,
        gradient_norm,
        covariance,
        std_errors,
        ci95,
        covariance_note,
        n_starts: options.n_starts,
        n_iterations: outcomes[best].record.iterations,
        converged,
        termination: outcomes[best].record.termination.expect("best start terminated"),
        best_start: best,
        starts: records,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        n_obs,
        causality,
        warnings,
    })
}

/// `Omega = A^{-1} B A^{-1}` with `A = -H / nT` and `B` the score outer product.
pub fn sandwich_covariance(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<Sandwich> {
    let lik = Likelihood::new(spec, data)?;
    let n_obs = lik.n_obs();
    let a_hat = lik.hessian(theta)? / -(n_obs as f64);
    let b_hat = lik.score_outer_product(theta)?;
    let eig = a_hat.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(v.abs())));
    if !(lo > 0.0) {
        return Err(Error::Singular(format!(
            "A-hat is not positive definite (smallest eigenvalue {lo:.3e}, condition number {:.3e})",
            hi / lo.abs().max(f64::MIN_POSITIVE)
        )));
    }
    let a_inv = a_hat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("A-hat Cholesky failed (condition number {:.3e})", hi / lo)))?
        .inverse();
    let omega = &a_inv * &b_hat * &a_inv;
    let omega = (&omega + omega.transpose()) * 0.5;
    Ok(Sandwich {
        omega,
        a_hat,
        b_hat,
        n_obs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrTest {
    pub stat: f64,
    pub df: usize,
    pub pvalue: f64,
}

/// `2 (L_full - L_nested)` against a chi-square(df) reference. The reference
/// is approximate when the extra neurons are unidentified under the null.
pub fn likelihood_ratio_test(full: &FitResult, nested: &FitResult, df: usize) -> Result<LrTest> {
    lr_test_from_logliks(full.loglik, nested.loglik, df)
}

pub fn lr_test_from_logliks(full: f64, nested: f64, df: usize) -> Result<LrTest> {
    if df == 0 {
        return Err(Error::invalid("likelihood-ratio df must be at least 1"));
    }
    if nested > full + 1e-6 {
        return Err(Error::invalid(format!(
            "nested log-likelihood {nested} exceeds the full model's {full}; models do not nest or a fit did not converge"
        )));
    }
    let stat = (2.0 * (full - nested)).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(LrTest {
        stat,
        df,
        pvalue: chi.sf(stat),
    })
}
