//! Panel simulation from a causal parameter vector.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::causality::{check_causal, DEFAULT_CAUSAL_MARGIN};
use crate::error::{Error, Result};
use crate::model::{nn_component, ModelSpec, PanelData, ParameterVector};

pub const DEFAULT_BURN_IN: usize = 200;

/// SplitMix64 finalizer: maps `(base, stream)` to a well-mixed seed.
pub fn stream_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Distribution of one generated covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum ColumnDist {
    Normal {
        #[serde(default)]
        mean: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

/// Covariate generator: an optional leading intercept column followed by
/// i.i.d. columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateConfig {
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub columns: Vec<ColumnDist>,
}

impl CovariateConfig {
    pub fn q(&self) -> usize {
        usize::from(self.intercept) + self.columns.len()
    }

    /// The two regressors of the lattice experiments, `N(0, 1.5^2)` and `N(0, 3^2)`.
    pub fn paper_design() -> Self {
        Self {
            intercept: false,
            columns: vec![
                ColumnDist::Normal { mean: 0.0, sd: 1.5 },
                ColumnDist::Normal { mean: 0.0, sd: 3.0 },
            ],
        }
    }
}

/// `steps` covariate matrices of shape `n x q`, i.i.d. across locations and
/// periods within each column. Each column draws from its own seed stream.
pub fn generate_covariates(config: &CovariateConfig, n: usize, steps: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    let q = config.q();
    if q == 0 {
        return Err(Error::invalid("covariate config has no columns"));
    }
    let mut out = vec![DMatrix::<f64>::zeros(n, q); steps];
    let offset = usize::from(config.intercept);
    if config.intercept {
        for m in out.iter_mut() {
            m.column_mut(0).fill(1.0);
        }
    }
    for (k, col) in config.columns.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, k as u64));
        let c = offset + k;
        match *col {
            ColumnDist::Normal { mean, sd } => {
                let d = Normal::new(mean, sd)
                    .map_err(|e| Error::invalid(format!("covariate column {}: {e}", k + 1)))?;
                for m in out.iter_mut() {
                    for s in 0..n {
                        m[(s, c)] = d.sample(&mut rng);
                    }
                }
            }
            ColumnDist::Uniform { low, high } => {
                let d = Uniform::new(low, high)
                    .map_err(|e| Error::invalid(format!("covariate column {}: {e}", k + 1)))?;
                for m in out.iter_mut() {
                    for s in 0..n {
                        m[(s, c)] = d.sample(&mut rng);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Where the covariates of a simulation come from.
#[derive(Debug, Clone, Copy)]
pub enum Design<'a> {
    Generate(&'a CovariateConfig),
    /// Exactly `burn_in + p + T` matrices, one per simulated step.
    Fixed(&'a [DMatrix<f64>]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationOptions {
    /// Retained sample length `T`.
    pub t_len: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Inject `eps = 0` (noiseless data, for recovery checks).
    pub zero_noise: bool,
}

impl SimulationOptions {
    pub fn new(t_len: usize, seed: u64) -> Self {
        Self {
            t_len,
            burn_in: DEFAULT_BURN_IN,
            seed,
            zero_noise: false,
        }
    }

    pub fn steps(&self, p: usize) -> usize {
        self.burn_in + p + self.t_len
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: PanelData,
    /// Injected errors for the `T` retained sample periods.
    pub noise: Vec<DVector<f64>>,
}

/// Iterate `Y_t = A0^{-1}(sum_i phi_i W Y_{t-i} + X_t beta + F(X_t gamma') lambda + eps_t)`
/// from a zero state and keep the last `p + T` slices.
pub fn simulate(
    spec: &ModelSpec,
    theta: &ParameterVector,
    design: Design<'_>,
    opts: &SimulationOptions,
) -> Result<Simulation> {
    spec.validate()?;
    theta.check_shape(spec)?;
    if opts.t_len == 0 {
        return Err(Error::invalid("simulation length T must be at least 1"));
    }
    let report = check_causal(spec, theta, DEFAULT_CAUSAL_MARGIN)?;
    if !report.causal {
        return Err(Error::NonCausal {
            max_modulus: report.max_root_modulus,
        });
    }
    spec.weights.check_phi0(theta.phi0)?;

    let n = spec.n();
    let p = spec.p;
    let steps = opts.steps(p);
    let generated;
    let xs: &[DMatrix<f64>] = match design {
        Design::Generate(cfg) => {
            if cfg.q() != spec.q {
                return Err(Error::shape(format!(
                    "covariate config yields q = {}, model has q = {}",
                    cfg.q(),
                    spec.q
                )));
            }
            generated = generate_covariates(cfg, n, steps, stream_seed(opts.seed, 0))?;
            &generated
        }
        Design::Fixed(xs) => {
            if xs.len() != steps {
                return Err(Error::shape(format!(
                    "fixed design has {} slices, simulation needs burn_in + p + T = {steps}",
                    xs.len()
                )));
            }
            if xs.iter().any(|m| m.nrows() != n || m.ncols() != spec.q) {
                return Err(Error::shape(format!("fixed design slices must be {n} x {}", spec.q)));
            }
            xs
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(opts.seed, 1));
    let beta = DVector::from_column_slice(&theta.beta);
    let w = &spec.weights;
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut noise_kept = Vec::with_capacity(opts.t_len);
    let mut eps = vec![0.0; n];

    for k in 0..steps {
        if !opts.zero_noise {
            spec.density.fill(&mut rng, &mut eps);
        }
        let x = &xs[k];
        let mut rhs = DVector::from_column_slice(&eps);
        if !theta.beta.is_empty() {
            rhs += x * &beta;
        }
        if !theta.lambda.is_empty() {
            rhs += nn_component(x, &theta.lambda, &theta.gamma);
        }
        let mut lagged = DVector::<f64>::zeros(n);
        for lag in 1..=p.min(k) {
            lagged.axpy(theta.phi[lag - 1], &ys[k - lag], 1.0);
        }
        if p > 0 {
            rhs += w.mul_dvec(&lagged);
        }
        ys.push(w.solve_a0_dvec(theta.phi0, &rhs)?);
        if k >= steps - opts.t_len {
            noise_kept.push(DVector::from_column_slice(&eps));
        }
    }

    let y = ys.split_off(steps - opts.t_len - p);
    let x = xs[steps - opts.t_len..].to_vec();
    Ok(Simulation {
        panel: PanelData::new(y, x, p)?,
        noise: noise_kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ErrorDensity;
    use crate::model::residuals;
    use crate::weights::WeightMatrix;
    use std::sync::Arc;

    fn model1(n1: usize, n2: usize) -> (ModelSpec, ParameterVector) {
        let spec = ModelSpec::new(
            Arc::new(WeightMatrix::queen_lattice(n1, n2).unwrap()),
            1,
            2,
            1,
            ErrorDensity::Normal,
        )
        .with_linear(false);
        let theta = ParameterVector {
            phi0: 0.6,
            phi: vec![-0.274],
            beta: vec![],
            lambda: vec![1.5],
            gamma: vec![vec![0.75, -0.35]],
        };
        (spec, theta)
    }

    #[test]
    fn deterministic_and_round_trips() {
        let (spec, theta) = model1(5, 5);
        let cfg = CovariateConfig::paper_design();
        let opts = SimulationOptions::new(8, 3);
        let a = simulate(&spec, &theta, Design::Generate(&cfg), &opts).unwrap();
        let b = simulate(&spec, &theta, Design::Generate(&cfg), &opts).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.panel.y.len(), 9);
        assert_eq!(a.panel.x.len(), 8);
        let eps = residuals(&spec, &theta, &a.panel).unwrap();
        for (e, injected) in eps.iter().zip(&a.noise) {
            assert!((e - injected).amax() < 1e-9);
        }
    }

    #[test]
    fn rejects_noncausal_and_bad_design() {
        let (spec, mut theta) = model1(3, 3);
        let cfg = CovariateConfig::paper_design();
        let opts = SimulationOptions::new(4, 1);
        theta.phi[0] = 1.5;
        assert!(matches!(
            simulate(&spec, &theta, Design::Generate(&cfg), &opts),
            Err(Error::NonCausal { .. })
        ));
        theta.phi[0] = -0.274;
        let one_col = CovariateConfig {
            intercept: false,
            columns: vec![ColumnDist::Normal { mean: 0.0, sd: 1.0 }],
        };
        assert!(simulate(&spec, &theta, Design::Generate(&one_col), &opts).is_err());
        let short = vec![DMatrix::zeros(9, 2); 3];
        assert!(simulate(&spec, &theta, Design::Fixed(&short), &opts).is_err());
    }

    #[test]
    fn intercept_column_is_ones() {
        let cfg = CovariateConfig {
            intercept: true,
            columns: vec![ColumnDist::Uniform { low: -1.0, high: 1.0 }],
        };
        let xs = generate_covariates(&cfg, 6, 4, 9).unwrap();
        assert!(xs.iter().all(|m| m.column(0).iter().all(|&v| v == 1.0)));
        assert!(xs.iter().all(|m| m.column(1).iter().all(|&v| (-1.0..1.0).contains(&v))));
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, 0), stream_seed(1, 1));
        assert_ne!(stream_seed(1, 0), stream_seed(2, 0));
    }
}
