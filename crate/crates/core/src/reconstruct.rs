//! Closed-form fusion of the noisy estimate, the blocks' sparse
//! approximations, and the block-mean smoothness prior.
//!
//! The objective
//!
//! ```text
//! lambda |y - x|^2 + sum_i |R_i x - D s_i|^2 + beta sum_i |R_i x - m_i|^2
//! ```
//!
//! has the diagonal Hessian `lambda I + (1 + beta) sum_i R_i^T R_i`, so its
//! minimizer is computed voxel by voxel:
//!
//! ```text
//! x_v = (lambda y_v + sum_{i∋v} (D s_i)_v + beta sum_{i∋v} m_i) / (lambda + (1 + beta) c_v)
//! ```
//!
//! with `c_v` the number of blocks covering `v`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::blocks::{coverage_counts, BlockGeometry};
use crate::datacube::Datacube;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::sparse_mmv::SparseCodeSet;

/// Subsets whose approximations are formed together before accumulation.
const BATCH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconParams {
    /// Weight of the fidelity term `|y - x|^2`.
    pub lambda: f64,
    /// Weight of the block-mean smoothness term.
    pub beta: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self { lambda: 0.5, beta: 0.1 }
    }
}

impl ReconParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.beta >= 0.0) || !self.lambda.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda and beta must be finite and >= 0, got {} and {}",
                self.lambda, self.beta
            )));
        }
        Ok(())
    }
}

fn check_inputs(y: &Datacube, dict: &Dictionary, codes: &SparseCodeSet, means: &[f64], geometry: &BlockGeometry) -> Result<()> {
    geometry.check_cube(y)?;
    let n = geometry.n_blocks();
    if codes.n_blocks() != n || codes.codes.len() != codes.grouping.n_subsets() {
        return Err(Error::DimensionMismatch(format!(
            "codes cover {} blocks, geometry has {n}",
            codes.n_blocks()
        )));
    }
    if means.len() != n {
        return Err(Error::DimensionMismatch(format!("{} block means for {n} blocks", means.len())));
    }
    if dict.r() != geometry.r() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary rows {} vs block length {}",
            dict.r(),
            geometry.r()
        )));
    }
    for (j, code) in codes.codes.iter().enumerate() {
        if code.width() != codes.grouping.range(j).len() || code.support.iter().any(|&a| a >= dict.k()) {
            return Err(Error::DimensionMismatch(format!("code of subset {j} does not fit")));
        }
    }
    Ok(())
}

/// `sum_i R_i^T D s_i` and `sum_i R_i^T m_i`, accumulated in block order.
fn accumulate(dict: &Dictionary, codes: &SparseCodeSet, means: &[f64], geometry: &BlockGeometry) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny, nb) = geometry.cube;
    let mut sparse = vec![0.0; nx * ny * nb];
    let mut smooth = vec![0.0; nx * ny * nb];
    let n_subsets = codes.codes.len();
    for start in (0..n_subsets).step_by(BATCH) {
        let end = (start + BATCH).min(n_subsets);
        let approximations: Vec<Array2<f64>> = codes.codes[start..end]
            .par_iter()
            .map(|code| code.approximation(dict))
            .collect();
        for (offset, approx) in approximations.iter().enumerate() {
            let j = start + offset;
            for (c, i) in codes.grouping.range(j).enumerate() {
                let column = approx.column(c);
                let m = means[i];
                geometry.for_each_voxel(i, |e, v| {
                    sparse[v] += column[e];
                    smooth[v] += m;
                });
            }
        }
    }
    (sparse, smooth)
}

/// Minimizer of the fusion objective; see the module docs.
pub fn fuse(
    y: &Datacube,
    dict: &Dictionary,
    codes: &SparseCodeSet,
    means: &[f64],
    geometry: &BlockGeometry,
    params: &ReconParams,
) -> Result<Datacube> {
    params.validate()?;
    check_inputs(y, dict, codes, means, geometry)?;
    let (sparse, smooth) = accumulate(dict, codes, means, geometry);
    let coverage = coverage_counts(geometry);
    let mut out = Vec::with_capacity(y.len());
    for (v, &yv) in y.values().iter().enumerate() {
        let denom = params.lambda + (1.0 + params.beta) * coverage[v] as f64;
        if denom <= 0.0 {
            return Err(Error::Numerical(format!(
                "zero denominator at voxel {v}: lambda = 0 and no covering block"
            )));
        }
        out.push((params.lambda * yv + sparse[v] + params.beta * smooth[v]) / denom);
    }
    Datacube::new(y.nx(), y.ny(), y.nb(), out).map_err(|e| Error::Numerical(e.to_string()))
}

/// Value of the fusion objective at `x`.
pub fn objective(
    x: &Datacube,
    y: &Datacube,
    dict: &Dictionary,
    codes: &SparseCodeSet,
    means: &[f64],
    geometry: &BlockGeometry,
    params: &ReconParams,
) -> Result<f64> {
    x.ensure_same_dims(y, "objective")?;
    check_inputs(y, dict, codes, means, geometry)?;
    let fidelity: f64 = x.values().iter().zip(y.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    let xv = x.values();
    let mut sparse = 0.0;
    let mut smooth = 0.0;
    for (j, code) in codes.codes.iter().enumerate() {
        let approx = code.approximation(dict);
        for (c, i) in codes.grouping.range(j).enumerate() {
            let column = approx.column(c);
            let m = means[i];
            geometry.for_each_voxel(i, |e, v| {
                let d = xv[v] - column[e];
                sparse += d * d;
                let d = xv[v] - m;
                smooth += d * d;
            });
        }
    }
    Ok(params.lambda * fidelity + sparse + params.beta * smooth)
}
