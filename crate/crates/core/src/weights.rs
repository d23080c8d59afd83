//! Spatial weight matrices and the algebra of `A0 = I - phi0 * W`.
//!
//! Every matrix built here has the form `W = D^{-1} A` with `A` a symmetric,
//! nonnegative adjacency and `D` either the diagonal of row sums (row
//! standardization) or the identity. `W` is therefore similar to the symmetric
//! matrix `S = D^{-1/2} A D^{-1/2}`, which gives a real spectrum, a symmetric
//! eigensolver for the log-determinant, and a symmetric positive definite
//! system for solving with `A0` whenever `phi0` is admissible.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse spatial weight matrix in compressed-row form.
#[derive(Debug)]
pub struct WeightMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// Entries of `W`.
    vals: Vec<f64>,
    /// Entries of the symmetric similar matrix `S`.
    sym_vals: Vec<f64>,
    /// `sqrt(d_i)`; all ones when the matrix is not row-standardized.
    sqrt_scale: Vec<f64>,
    standardized: bool,
    lattice_dims: Option<(usize, usize)>,
    eigenvalues: OnceLock<std::result::Result<Vec<f64>, String>>,
}

/// Which power of `W A0^{-1}` a trace is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TracePower {
    One,
    Two,
}

impl WeightMatrix {
    /// Queen-contiguity lattice with `n1` rows and `n2` columns, row-standardized.
    ///
    /// Location `s = r * n2 + c` (row-major).
    pub fn queen_lattice(n1: usize, n2: usize) -> Result<Self> {
        Self::queen(n1, n2, true)
    }

    /// Binary queen-contiguity lattice without row standardization.
    pub fn queen_lattice_unstandardized(n1: usize, n2: usize) -> Result<Self> {
        Self::queen(n1, n2, false)
    }

    fn queen(n1: usize, n2: usize, standardize: bool) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::invalid("lattice dimensions must be positive"));
        }
        if n1 * n2 < 2 {
            return Err(Error::IsolatedNodes(vec![0]));
        }
        let n = n1 * n2;
        let mut neighbors = vec![Vec::with_capacity(8); n];
        for r in 0..n1 {
            for c in 0..n2 {
                let s = r * n2 + c;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr < 0 || cc < 0 || rr >= n1 as i64 || cc >= n2 as i64 {
                            continue;
                        }
                        neighbors[s].push(rr as usize * n2 + cc as usize);
                    }
                }
            }
        }
        let mut w = Self::from_neighbor_lists(neighbors, standardize)?;
        w.lattice_dims = Some((n1, n2));
        Ok(w)
    }

    /// Row-standardized weights from undirected edges `(i, j)`, 0-based.
    ///
    /// Duplicate edges and both orientations of the same edge are merged.
    pub fn from_adjacency(pairs: &[(usize, usize)], n: usize) -> Result<Self> {
        Self::from_pairs(pairs, n, true)
    }

    /// Binary symmetric weights without row standardization.
    pub fn from_adjacency_unstandardized(pairs: &[(usize, usize)], n: usize) -> Result<Self> {
        Self::from_pairs(pairs, n, false)
    }

    fn from_pairs(pairs: &[(usize, usize)], n: usize, standardize: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("adjacency must have at least one location"));
        }
        let mut neighbors = vec![Vec::new(); n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "edge {k} = ({i}, {j}) has an index outside [0, {n})"
                )));
            }
            if i == j {
                return Err(Error::invalid(format!("edge {k} is a self-pair ({i}, {i})")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Self::from_neighbor_lists(neighbors, standardize)
    }

    fn from_neighbor_lists(mut neighbors: Vec<Vec<usize>>, standardize: bool) -> Result<Self> {
        let n = neighbors.len();
        for list in neighbors.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let isolated: Vec<usize> = (0..n).filter(|&i| neighbors[i].is_empty()).collect();
        if !isolated.is_empty() {
            return Err(Error::IsolatedNodes(isolated));
        }

        let degree: Vec<f64> = neighbors.iter().map(|l| l.len() as f64).collect();
        let sqrt_scale: Vec<f64> = if standardize {
            degree.iter().map(|d| d.sqrt()).collect()
        } else {
            vec![1.0; n]
        };

        let nnz: usize = neighbors.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        let mut sym_vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, list) in neighbors.iter().enumerate() {
            for &j in list {
                cols.push(j);
                if standardize {
                    vals.push(1.0 / degree[i]);
                    sym_vals.push(1.0 / (degree[i] * degree[j]).sqrt());
                } else {
                    vals.push(1.0);
                    sym_vals.push(1.0);
                }
            }
            row_ptr.push(cols.len());
        }

        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
            sym_vals,
            sqrt_scale,
            standardized: standardize,
            lattice_dims: None,
            eigenvalues: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lattice_dims(&self) -> Option<(usize, usize)> {
        self.lattice_dims
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Nonzero entries `(j, w_ij)` of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    /// `w_ij`, zero when `j` is not a neighbor of `i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Undirected edge list `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz() / 2);
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `W x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_into(x, &mut out);
        out
    }

    pub fn mul_dvec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    fn sym_mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.sym_vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Dense symmetric matrix similar to `W`.
    pub fn symmetric_form(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] = self.sym_vals[k];
            }
        }
        m
    }

    /// Real spectrum of `W`, sorted descending. Computed once and cached.
    pub fn eigenvalues(&self) -> Result<&[f64]> {
        let cached = self.eigenvalues.get_or_init(|| {
            let sym = self.symmetric_form();
            let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
            if ev.iter().any(|v| !v.is_finite()) {
                return Err("eigensolver produced non-finite values".to_string());
            }
            ev.sort_by(|a, b| b.total_cmp(a));
            Ok(ev)
        });
        cached.as_deref().map_err(|e| Error::Singular(e.clone()))
    }

    /// `max_i |tau_i|`. Equal to one for any row-standardized matrix.
    pub fn spectral_radius(&self) -> Result<f64> {
        if self.standardized {
            return Ok(1.0);
        }
        let ev = self.eigenvalues()?;
        Ok(ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Half-width of the admissible interval for `phi0`.
    pub fn phi0_limit(&self) -> Result<f64> {
        Ok(1.0 / self.spectral_radius()?)
    }

    pub fn check_phi0(&self, phi0: f64) -> Result<()> {
        let limit = self.phi0_limit()?;
        if phi0.is_finite() && phi0.abs() < limit {
            Ok(())
        } else {
            Err(Error::Domain { phi0, limit })
        }
    }

    /// `ln |I - phi0 W| = sum_i ln(1 - phi0 tau_i)`.
    pub fn log_det_a0(&self, phi0: f64) -> Result<f64> {
        self.check_phi0(phi0)?;
        let ev = self.eigenvalues()?;
        Ok(ev.iter().map(|&t| (-phi0 * t).ln_1p()).sum())
    }

    /// `tr(W A0^{-1})` or `tr((W A0^{-1})^2)` from the cached spectrum.
    pub fn trace_w_a0inv(&self, phi0: f64, power: TracePower) -> Result<f64> {
        self.check_phi0(phi0)?;
        let ev = self.eigenvalues()?;
        Ok(match power {
            TracePower::One => ev.iter().map(|&t| t / (1.0 - phi0 * t)).sum(),
            TracePower::Two => ev
                .iter()
                .map(|&t| {
                    let r = t / (1.0 - phi0 * t);
                    r * r
                })
                .sum(),
        })
    }

    /// Solve `(I - phi0 W) x = b`.
    ///
    /// Runs conjugate gradients on the symmetric positive definite system
    /// `(I - phi0 S) D^{1/2} x = D^{1/2} b`. The returned `x` satisfies
    /// `|A0 x - b|_inf <= 1e-12 (1 + |b|_inf)`.
    pub fn solve_a0(&self, phi0: f64, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::shape(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.n
            )));
        }
        self.check_phi0(phi0)?;
        let n = self.n;
        let b_inf = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if b_inf == 0.0 {
            return Ok(vec![0.0; n]);
        }
        if phi0 == 0.0 {
            return Ok(b.to_vec());
        }
        let tol = 1e-12 * (1.0 + b_inf);

        let rhs: Vec<f64> = b.iter().zip(&self.sqrt_scale).map(|(v, s)| v * s).collect();
        let mut y = rhs.clone();
        let mut sy = vec![0.0; n];
        self.sym_mul_into(&y, &mut sy);
        // r = rhs - (y - phi0 S y) = phi0 S y for the initial guess y = rhs
        let mut r: Vec<f64> = sy.iter().map(|v| phi0 * v).collect();
        let mut d = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let mut ad = vec![0.0; n];
        let max_iter = 10 * n + 100;

        for _ in 0..max_iter {
            // residual in the original coordinates is D^{-1/2} r
            let res_inf = r
                .iter()
                .zip(&self.sqrt_scale)
                .fold(0.0f64, |m, (v, s)| m.max((v / s).abs()));
            if res_inf <= 0.25 * tol {
                break;
            }
            self.sym_mul_into(&d, &mut ad);
            for (a, dv) in ad.iter_mut().zip(&d) {
                *a = dv - phi0 * *a;
            }
            let dad: f64 = d.iter().zip(&ad).map(|(a, b)| a * b).sum();
            if dad <= 0.0 || !dad.is_finite() {
                return Err(Error::Singular(format!(
                    "I - phi0 W is not positive definite in the symmetric metric (phi0 = {phi0})"
                )));
            }
            let alpha = rr / dad;
            for i in 0..n {
                y[i] += alpha * d[i];
                r[i] -= alpha * ad[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                d[i] = r[i] + beta * d[i];
            }
        }

        let x: Vec<f64> = y.iter().zip(&self.sqrt_scale).map(|(v, s)| v / s).collect();

        // verify against the unsymmetrized operator
        let mut wx = vec![0.0; n];
        self.mul_into(&x, &mut wx);
        let res = x
            .iter()
            .zip(&wx)
            .zip(b)
            .fold(0.0f64, |m, ((xi, wxi), bi)| m.max((xi - phi0 * wxi - bi).abs()));
        if res > tol {
            return Err(Error::Singular(format!(
                "A0 solve did not reach tolerance: residual {res:.3e} > {tol:.3e}"
            )));
        }
        Ok(x)
    }

    pub fn solve_a0_dvec(&self, phi0: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve_a0(phi0, b.as_slice()).map(DVector::from_vec)
    }

    /// Sum of all weights, `S0` in Moran's notation.
    pub fn total_weight(&self) -> f64 {
        self.vals.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row_entries(w: &WeightMatrix, i: usize) -> Vec<f64> {
        w.row(i).map(|(_, v)| v).collect()
    }

    #[test]
    fn queen_3x3_weights() {
        let w = WeightMatrix::queen_lattice(3, 3).unwrap();
        let center = row_entries(&w, 4);
        assert_eq!(center.len(), 8);
        assert!(center.iter().all(|&v| v == 1.0 / 8.0));
        for corner in [0, 2, 6, 8] {
            let r = row_entries(&w, corner);
            assert_eq!(r.len(), 3);
            assert!(r.iter().all(|&v| v == 1.0 / 3.0));
        }
        let edge = row_entries(&w, 1);
        assert_eq!(edge.len(), 5);
        assert!(edge.iter().all(|&v| v == 0.2));
    }

    #[test]
    fn queen_rejects_single_cell() {
        assert!(matches!(WeightMatrix::queen_lattice(1, 1), Err(Error::IsolatedNodes(_))));
        assert!(WeightMatrix::queen_lattice(0, 3).is_err());
    }

    #[test]
    fn queen_2x2_all_thirds() {
        let w = WeightMatrix::queen_lattice(2, 2).unwrap();
        for i in 0..4 {
            let r = row_entries(&w, i);
            assert_eq!(r.len(), 3);
            assert!(r.iter().all(|&v| v == 1.0 / 3.0));
        }
    }

    #[test]
    fn row_sums_and_zero_diagonal() {
        for (a, b) in [(2, 3), (5, 4), (7, 7), (1, 6)] {
            let w = WeightMatrix::queen_lattice(a, b).unwrap();
            for i in 0..w.n() {
                let s: f64 = w.row(i).map(|(_, v)| v).sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert_eq!(w.get(i, i), 0.0);
                assert!(w.row(i).all(|(_, v)| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn adjacency_single_pair() {
        let w = WeightMatrix::from_adjacency(&[(0, 1)], 2).unwrap();
        let d = w.to_dense();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn adjacency_path_of_three() {
        let w = WeightMatrix::from_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let d = w.to_dense();
        assert_eq!(d.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn adjacency_errors() {
        match WeightMatrix::from_adjacency(&[], 2) {
            Err(Error::IsolatedNodes(v)) => assert_eq!(v, vec![0, 1]),
            other => panic!("expected isolated nodes, got {other:?}"),
        }
        assert!(WeightMatrix::from_adjacency(&[(0, 0)], 2).is_err());
        assert!(WeightMatrix::from_adjacency(&[(0, 2)], 2).is_err());
        match WeightMatrix::from_adjacency(&[(0, 1)], 3) {
            Err(Error::IsolatedNodes(v)) => assert_eq!(v, vec![2]),
            other => panic!("expected isolated node 2, got {other:?}"),
        }
    }

    #[test]
    fn eigenvalues_2x2_lattice() {
        let w = WeightMatrix::queen_lattice(2, 2).unwrap();
        let ev = w.eigenvalues().unwrap();
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-12);
        for &v in &ev[1..] {
            assert_relative_eq!(v, -1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalues_path() {
        let w = WeightMatrix::from_adjacency(&[(0, 1)], 2).unwrap();
        let ev = w.eigenvalues().unwrap();
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(ev[1], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn log_det_small_cases() {
        let w = WeightMatrix::queen_lattice(2, 2).unwrap();
        assert_eq!(w.log_det_a0(0.0).unwrap(), 0.0);
        let expected = 0.5f64.ln() + 3.0 * (7.0f64 / 6.0).ln();
        assert_relative_eq!(w.log_det_a0(0.5).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(w.log_det_a0(0.5).unwrap(), -0.230695, epsilon = 1e-6);
        assert!(matches!(w.log_det_a0(1.0), Err(Error::Domain { .. })));
        assert!(w.log_det_a0(-1.2).is_err());
    }

    #[test]
    fn traces_small_cases() {
        let w = WeightMatrix::queen_lattice(2, 2).unwrap();
        assert!(w.trace_w_a0inv(0.0, TracePower::One).unwrap().abs() < 1e-12);
        assert_relative_eq!(
            w.trace_w_a0inv(0.5, TracePower::One).unwrap(),
            2.0 - 6.0 / 7.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            w.trace_w_a0inv(0.5, TracePower::Two).unwrap(),
            4.0 + 12.0 / 49.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn solve_small_cases() {
        let w = WeightMatrix::queen_lattice(2, 2).unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0];
        assert_eq!(w.solve_a0(0.0, &b).unwrap(), b);
        assert_eq!(w.solve_a0(0.5, &[0.0; 4]).unwrap(), vec![0.0; 4]);
        let x = w.solve_a0(0.5, &[1.0; 4]).unwrap();
        for v in x {
            assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        }
        assert!(w.solve_a0(0.5, &[1.0; 3]).is_err());
        assert!(w.solve_a0(1.0, &[1.0; 4]).is_err());
    }

    #[test]
    fn unstandardized_spectrum_sets_limit() {
        let w = WeightMatrix::from_adjacency_unstandardized(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        // triangle: eigenvalues 2, -1, -1
        assert_relative_eq!(w.spectral_radius().unwrap(), 2.0, epsilon = 1e-12);
        assert!(w.log_det_a0(0.49).is_ok());
        assert!(w.log_det_a0(0.51).is_err());
        let x = w.solve_a0(0.3, &[1.0, 2.0, 3.0]).unwrap();
        let d = w.to_dense();
        let a0 = DMatrix::<f64>::identity(3, 3) - d * 0.3;
        let back = a0 * DVector::from_vec(x);
        assert_relative_eq!(back[2], 3.0, epsilon = 1e-11);
    }
}
