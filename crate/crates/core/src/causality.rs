//! Causality of the temporal operator and its moving-average expansion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParameterVector};

pub const DEFAULT_CAUSAL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalityReport {
    pub causal: bool,
    pub max_root_modulus: f64,
}

/// Roots of `det[z^p A0 - sum_k phi_k W z^{p-k}] = 0`.
///
/// Since every `A_k` is a polynomial in `W`, the determinant factors over
/// the eigenvalues `tau` of `W` into scalar polynomials
/// `(1 - phi0 tau) z^p - sum_k phi_k tau z^{p-k}`.
pub fn check_causal(spec: &ModelSpec, theta: &ParameterVector, margin: f64) -> Result<CausalityReport> {
    theta.check_shape(spec)?;
    if spec.p == 0 {
        return Ok(CausalityReport {
            causal: true,
            max_root_modulus: 0.0,
        });
    }
    let ev = spec.weights.eigenvalues()?;
    let mut max_mod = 0.0f64;
    let mut last: Option<f64> = None;
    for &tau in ev {
        // the spectrum is sorted; skip numerically repeated eigenvalues
        if last.is_some_and(|l| (l - tau).abs() <= 1e-12) {
            continue;
        }
        last = Some(tau);
        max_mod = max_mod.max(max_root_modulus_for(theta, tau)?);
    }
    Ok(CausalityReport {
        causal: max_mod <= 1.0 - margin,
        max_root_modulus: max_mod,
    })
}

fn max_root_modulus_for(theta: &ParameterVector, tau: f64) -> Result<f64> {
    let lead = 1.0 - theta.phi0 * tau;
    if lead.abs() < 1e-12 {
        return Err(Error::Domain {
            phi0: theta.phi0,
            limit: 1.0 / tau.abs(),
        });
    }
    // monic form z^p - sum_k c_k z^{p-k}
    let c: Vec<f64> = theta.phi.iter().map(|phi| phi * tau / lead).collect();
    Ok(match c.len() {
        1 => c[0].abs(),
        2 => {
            // z^2 - c1 z - c2
            let disc = c[0] * c[0] + 4.0 * c[1];
            if disc >= 0.0 {
                let s = disc.sqrt();
                let r1 = 0.5 * (c[0] + s);
                let r2 = 0.5 * (c[0] - s);
                r1.abs().max(r2.abs())
            } else {
                // complex pair, |z|^2 = product of roots = -c2
                (-c[1]).sqrt()
            }
        }
        p => {
            let mut companion = DMatrix::<f64>::zeros(p, p);
            for k in 0..p {
                companion[(0, k)] = c[k];
            }
            for k in 1..p {
                companion[(k, k - 1)] = 1.0;
            }
            companion
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }
    })
}

fn require_causal(spec: &ModelSpec, theta: &ParameterVector) -> Result<()> {
    let report = check_causal(spec, theta, DEFAULT_CAUSAL_MARGIN)?;
    if !report.causal {
        return Err(Error::NonCausal {
            max_modulus: report.max_root_modulus,
        });
    }
    Ok(())
}

/// Dense `Psi_0..Psi_J` with `Psi_0 = I` and
/// `Psi_j = sum_{k=1}^{min(j,p)} A0^{-1} A_k Psi_{j-k}`, `A_k = phi_k W`.
pub fn psi_expansion(spec: &ModelSpec, theta: &ParameterVector, j_max: usize) -> Result<Vec<DMatrix<f64>>> {
    require_causal(spec, theta)?;
    let n = spec.n();
    let w = spec.weights.to_dense();
    let a0 = DMatrix::<f64>::identity(n, n) - &w * theta.phi0;
    let lu = a0.lu();
    let a0inv_w = lu
        .solve(&w)
        .ok_or_else(|| Error::Singular("A0 is singular".into()))?;
    let mut psi = Vec::with_capacity(j_max + 1);
    psi.push(DMatrix::<f64>::identity(n, n));
    for j in 1..=j_max {
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for k in 1..=j.min(spec.p) {
            let phi = theta.phi[k - 1];
            if phi != 0.0 {
                acc += (&a0inv_w * &psi[j - k]) * phi;
            }
        }
        psi.push(acc);
    }
    Ok(psi)
}

/// Matrix-free `Psi_j v` for `j = 0..=J`, using sparse `A0` solves.
pub fn psi_apply(spec: &ModelSpec, theta: &ParameterVector, v: &DVector<f64>, j_max: usize) -> Result<Vec<DVector<f64>>> {
    require_causal(spec, theta)?;
    let w = &spec.weights;
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(j_max + 1);
    out.push(v.clone());
    for j in 1..=j_max {
        let mut acc = DVector::<f64>::zeros(v.len());
        for k in 1..=j.min(spec.p) {
            acc.axpy(theta.phi[k - 1], &out[j - k], 1.0);
        }
        // A0^{-1} W commute, so apply W once to the combined vector
        let wv = w.mul_dvec(&acc);
        out.push(w.solve_a0_dvec(theta.phi0, &wv)?);
    }
    Ok(out)
}

/// Induced infinity norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ErrorDensity;
    use crate::weights::WeightMatrix;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn spec(p: usize, n1: usize, n2: usize) -> ModelSpec {
        ModelSpec::new(
            Arc::new(WeightMatrix::queen_lattice(n1, n2).unwrap()),
            p,
            2,
            1,
            ErrorDensity::Normal,
        )
    }

    fn theta(phi0: f64, phi: Vec<f64>) -> ParameterVector {
        ParameterVector {
            phi0,
            phi,
            beta: vec![0.0, 0.0],
            lambda: vec![1.5],
            gamma: vec![vec![0.75, -0.35]],
        }
    }

    #[test]
    fn eq2_parameters_are_causal() {
        let s = spec(1, 4, 4);
        let r = check_causal(&s, &theta(0.6, vec![-0.274]), DEFAULT_CAUSAL_MARGIN).unwrap();
        assert!(r.causal);
        assert_relative_eq!(r.max_root_modulus, 0.685, epsilon = 1e-9);
    }

    #[test]
    fn trivial_and_explosive() {
        let s = spec(1, 3, 3);
        let r = check_causal(&s, &theta(0.0, vec![0.0]), DEFAULT_CAUSAL_MARGIN).unwrap();
        assert!(r.causal);
        assert_eq!(r.max_root_modulus, 0.0);
        let r = check_causal(&s, &theta(0.0, vec![1.2]), DEFAULT_CAUSAL_MARGIN).unwrap();
        assert!(!r.causal);
        assert_relative_eq!(r.max_root_modulus, 1.2, epsilon = 1e-10);
        let s0 = spec(0, 3, 3);
        assert!(check_causal(&s0, &theta(0.9, vec![]), 0.0).unwrap().causal);
    }

    #[test]
    fn higher_order_roots_match_companion() {
        // p = 2 closed form against p = 3 companion with a zero last coefficient
        let s2 = spec(2, 3, 3);
        let s3 = spec(3, 3, 3);
        for (a, b) in [(0.3, 0.2), (0.5, -0.6), (-0.4, 0.1)] {
            let r2 = check_causal(&s2, &theta(0.4, vec![a, b]), 0.0).unwrap();
            let r3 = check_causal(&s3, &theta(0.4, vec![a, b, 0.0]), 0.0).unwrap();
            assert_relative_eq!(r2.max_root_modulus, r3.max_root_modulus, epsilon = 1e-8);
        }
    }

    #[test]
    fn psi_zero_lags_vanish() {
        let s = spec(2, 3, 3);
        let psi = psi_expansion(&s, &theta(0.5, vec![0.0, 0.0]), 4).unwrap();
        assert_eq!(psi[0], DMatrix::identity(9, 9));
        assert!(psi[1..].iter().all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn psi_p1_is_power() {
        let s = spec(1, 3, 3);
        let th = theta(0.6, vec![-0.274]);
        let psi = psi_expansion(&s, &th, 3).unwrap();
        let w = s.weights.to_dense();
        let a0 = DMatrix::identity(9, 9) - &w * 0.6;
        let m = a0.try_inverse().unwrap() * &w * -0.274;
        let m2 = &m * &m;
        assert!((&psi[2] - &m2).abs().max() < 1e-14);
        assert!((&psi[1] - &m).abs().max() < 1e-14);
    }

    #[test]
    fn psi_decays_and_matches_matrix_free() {
        let s = spec(1, 3, 3);
        let th = theta(0.6, vec![-0.274]);
        let psi = psi_expansion(&s, &th, 20).unwrap();
        assert!(inf_norm(&psi[20]) < 1e-3);
        let v = DVector::from_fn(9, |i, _| (i as f64).sin());
        let applied = psi_apply(&s, &th, &v, 20).unwrap();
        for j in [0, 1, 5, 20] {
            let direct = &psi[j] * &v;
            assert!((&direct - &applied[j]).amax() < 1e-10);
        }
    }

    #[test]
    fn psi_rejects_noncausal() {
        let s = spec(1, 3, 3);
        assert!(matches!(
            psi_expansion(&s, &theta(0.0, vec![1.5]), 3),
            Err(Error::NonCausal { .. })
        ));
    }
}
