//! Monte-Carlo replication: simulate and fit independently `R` times.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{fit, FitOptions};
use crate::model::{ModelSpec, ParameterVector};
use crate::par;
use crate::simulate::{generate_covariates, simulate, stream_seed, CovariateConfig, Design, SimulationOptions};

#[derive(Debug, Clone)]
pub struct ReplicateOptions {
    pub replicates: usize,
    pub t_len: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Draw the covariates once and reuse them in every replicate.
    pub fixed_design: bool,
    pub fit: FitOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub estimate: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub replicates: usize,
    pub successes: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation of the estimates (denominator `R - 1`).
    pub empirical_sd: Vec<f64>,
    /// Mean over successful replicates of the sandwich standard errors.
    pub asymptotic_sd: Option<Vec<f64>>,
    pub records: Vec<ReplicateRecord>,
}

pub fn run_replicates(
    spec: &ModelSpec,
    theta: &ParameterVector,
    covariates: &CovariateConfig,
    opts: &ReplicateOptions,
) -> Result<ReplicateSummary> {
    if opts.replicates < 2 {
        return Err(Error::invalid("at least 2 replicates are needed"));
    }
    theta.check_shape(spec)?;
    let sim_base = SimulationOptions {
        t_len: opts.t_len,
        burn_in: opts.burn_in,
        seed: 0,
        zero_noise: false,
    };
    let fixed = if opts.fixed_design {
        Some(generate_covariates(
            covariates,
            spec.n(),
            sim_base.steps(spec.p),
            stream_seed(opts.seed, u64::MAX),
        )?)
    } else {
        None
    };

    let records = par::map_indexed(opts.replicates, |index| {
        let seed = stream_seed(opts.seed, index as u64);
        let design = match &fixed {
            Some(xs) => Design::Fixed(xs),
            None => Design::Generate(covariates),
        };
        let sim_opts = SimulationOptions { seed, ..sim_base };
        let fit_opts = FitOptions {
            seed,
            ..opts.fit.clone()
        };
        let outcome = simulate(spec, theta, design, &sim_opts).and_then(|sim| fit(spec, &sim.panel, &fit_opts));
        match outcome {
            Ok(r) => ReplicateRecord {
                index,
                seed,
                estimate: Some(r.theta.to_vec()),
                std_errors: r.std_errors.clone(),
                loglik: Some(r.loglik),
                converged: r.converged,
                error: (!r.converged).then(|| format!("not converged ({:?})", r.termination)),
            },
            Err(e) => ReplicateRecord {
                index,
                seed,
                estimate: None,
                std_errors: None,
                loglik: None,
                converged: false,
                error: Some(e.to_string()),
            },
        }
    });

    let names = spec.layout().names();
    let dim = names.len();
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.converged && r.estimate.is_some()).collect();
    let successes = ok.len();
    let mut mean = vec![f64::NAN; dim];
    let mut empirical_sd = vec![f64::NAN; dim];
    if successes > 0 {
        for k in 0..dim {
            let vals: Vec<f64> = ok.iter().map(|r| r.estimate.as_ref().expect("filtered")[k]).collect();
            let m = vals.iter().sum::<f64>() / successes as f64;
            mean[k] = m;
            if successes > 1 {
                let ss: f64 = vals.iter().map(|v| (v - m).powi(2)).sum();
                empirical_sd[k] = (ss / (successes - 1) as f64).sqrt();
            }
        }
    }
    let with_se: Vec<&Vec<f64>> = ok.iter().filter_map(|r| r.std_errors.as_ref()).collect();
    let asymptotic_sd = (!with_se.is_empty()).then(|| {
        (0..dim)
            .map(|k| with_se.iter().map(|se| se[k]).sum::<f64>() / with_se.len() as f64)
            .collect()
    });

    Ok(ReplicateSummary {
        names,
        truth: theta.to_vec(),
        replicates: opts.replicates,
        successes,
        mean,
        empirical_sd,
        asymptotic_sd,
        records,
    })
}

impl fmt::Display for ReplicateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>9} {:>9} {:>11} {:>11}",
            "Parameter", "True", "Mean", "(Emp. SD)", "[Asy. SD]"
        )?;
        for (k, name) in self.names.iter().enumerate() {
            let asy = self
                .asymptotic_sd
                .as_ref()
                .map_or_else(|| "-".to_string(), |a| format!("[{:.4}]", a[k]));
            writeln!(
                f,
                "{name:<12} {:>9.4} {:>9.4} {:>11} {:>11}",
                self.truth[k],
                self.mean[k],
                format!("({:.4})", self.empirical_sd[k]),
                asy
            )?;
        }
        writeln!(f, "successful replicates: {} of {}", self.successes, self.replicates)
    }
}
