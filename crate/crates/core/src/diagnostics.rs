//! Residual diagnostics: Moran's I, QQ data and lattice heatmap grids.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::likelihood::Likelihood;
use crate::model::{ModelSpec, PanelData, ParameterVector};
use crate::par;
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoranResult {
    pub i: f64,
    pub expected: f64,
    pub variance: f64,
    pub z: f64,
    /// Two-sided normal p-value of `z`.
    pub pvalue: f64,
}

/// Moran's I with its standardized statistic under the normality null.
pub fn morans_i(w: &WeightMatrix, v: &[f64]) -> Result<MoranResult> {
    let n = w.n();
    if v.len() != n {
        return Err(Error::shape(format!("vector has length {}, W is {n} x {n}", v.len())));
    }
    if n < 3 {
        return Err(Error::invalid("Moran's I needs at least 3 locations"));
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ee: f64 = e.iter().map(|x| x * x).sum();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    if ee <= (1e-14 * scale).powi(2) * n as f64 {
        return Err(Error::invalid("Moran's I is undefined for a constant vector"));
    }
    let we = w.mul_vec(&e);
    let ewe: f64 = e.iter().zip(&we).map(|(a, b)| a * b).sum();

    // S0 = sum w_ij, S1 = 1/2 sum (w_ij + w_ji)^2, S2 = sum_i (w_i. + w_.i)^2
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut row_sum = vec![0.0; n];
    let mut col_sum = vec![0.0; n];
    for i in 0..n {
        for (j, wij) in w.row(i) {
            s0 += wij;
            row_sum[i] += wij;
            col_sum[j] += wij;
            let wji = w.get(j, i);
            s1 += 0.5 * (wij + wji).powi(2);
        }
    }
    // pairs with w_ij = 0 but w_ji > 0 are not visited above
    for i in 0..n {
        for (j, wij) in w.row(i) {
            if w.get(j, i) == 0.0 {
                s1 += 0.5 * wij * wij;
            }
        }
    }
    let s2: f64 = row_sum.iter().zip(&col_sum).map(|(r, c)| (r + c).powi(2)).sum();

    let nf = n as f64;
    let i_stat = nf / s0 * ewe / ee;
    let expected = -1.0 / (nf - 1.0);
    let variance = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0) - expected * expected;
    let z = (i_stat - expected) / variance.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let pvalue = 2.0 * std_normal.sf(z.abs());
    Ok(MoranResult {
        i: i_stat,
        expected,
        variance,
        z,
        pvalue,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualDiagnostics {
    /// `eps_t(theta)` for each sample period.
    #[serde(skip)]
    pub residuals: Vec<DVector<f64>>,
    pub moran: Vec<MoranResult>,
    /// `(theoretical quantile, sorted residual)` pairs over the pooled residuals.
    #[serde(skip)]
    pub qq: Vec<(f64, f64)>,
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
    pub median_moran_pvalue: f64,
}

pub fn residual_diagnostics(spec: &ModelSpec, theta: &ParameterVector, data: &PanelData) -> Result<ResidualDiagnostics> {
    let lik = Likelihood::new(spec, data)?;
    let residuals = lik.residuals(theta)?;
    let w = &spec.weights;
    let moran = par::map_slice(&residuals, |e| morans_i(w, e.as_slice()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut pooled: Vec<f64> = residuals.iter().flat_map(|e| e.iter().copied()).collect();
    let count = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / count;
    let m2 = pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
    let m4 = pooled.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / count;
    pooled.sort_by(f64::total_cmp);
    let qq = pooled
        .iter()
        .enumerate()
        .map(|(i, &r)| (spec.density.quantile((i as f64 + 0.5) / count), r))
        .collect();

    let mut pvals: Vec<f64> = moran.iter().map(|m| m.pvalue).collect();
    pvals.sort_by(f64::total_cmp);
    let k = pvals.len();
    let median_moran_pvalue = if k % 2 == 1 {
        pvals[k / 2]
    } else {
        0.5 * (pvals[k / 2 - 1] + pvals[k / 2])
    };

    Ok(ResidualDiagnostics {
        residuals,
        moran,
        qq,
        mean,
        variance: m2,
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        median_moran_pvalue,
    })
}

/// Arrange a lattice vector as an `n1 x n2` grid, location `r * n2 + c` at `(r, c)`.
pub fn heatmap_grid(y: &[f64], lattice_dims: Option<(usize, usize)>) -> Result<DMatrix<f64>> {
    let (n1, n2) = lattice_dims.ok_or_else(|| Error::invalid("heatmap grids need lattice data"))?;
    if y.len() != n1 * n2 {
        return Err(Error::shape(format!("vector has length {}, lattice is {n1} x {n2}", y.len())));
    }
    Ok(DMatrix::from_row_slice(n1, n2, y))
}

/// Headerless CSV, one grid row per line.
pub fn write_grid(path: &Path, grid: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in grid.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line + 1,
                    msg: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Parse {
                line: line + 1,
                msg: "ragged grid row".into(),
            });
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}
