//! Joint sparse coding of block subsets with Simultaneous Orthogonal Matching
//! Pursuit (SOMP). Every column of a subset shares one support; single-vector
//! OMP is the one-column case.
//!
//! Correlations are tracked through the dictionary Gram matrix: with
//! `P = D^T Omega` and `G = D^T D`, the correlation of every atom with the
//! current residual is `P - G[:, S] C`, so the `r x k` product is paid once
//! per subset rather than once per greedy step.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::blocks::{extract_range, group, BlockGeometry, SubsetGrouping};
use crate::datacube::Datacube;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

/// Largest accepted condition number of the selected atoms' Gram matrix.
const MAX_GRAM_CONDITION: f64 = 1e12;
const EXACT_RESIDUAL_BELOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SompConfig {
    /// Maximum support size `T`.
    pub max_atoms: usize,
    /// Stop once `|Omega - D S|_F <= residual_tol * |Omega|_F`.
    pub residual_tol: f64,
    /// Also stop once the residual RMS per entry is at most this (an
    /// absolute, noise-level bound); 0 disables it.
    pub noise_floor: f64,
}

impl Default for SompConfig {
    fn default() -> Self {
        Self {
            max_atoms: 8,
            residual_tol: 1e-3,
            noise_floor: 0.0,
        }
    }
}

impl SompConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_atoms == 0 || self.max_atoms > k {
            return Err(Error::InvalidArgument(format!(
                "max atoms must be in 1..={k}, got {}",
                self.max_atoms
            )));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "residual tolerance must be >= 0, got {}",
                self.residual_tol
            )));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise floor must be finite and >= 0, got {}",
                self.noise_floor
            )));
        }
        Ok(())
    }
}

/// Sparse code of one subset: a support shared by all columns and the
/// `|support| x l` coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCode {
    pub support: Vec<usize>,
    pub coeffs: Array2<f64>,
    /// Set when pursuit stopped early because the next atom made the
    /// selected Gram matrix numerically singular.
    pub ill_conditioned: bool,
}

impl JointCode {
    pub fn empty(width: usize) -> Self {
        Self {
            support: Vec::new(),
            coeffs: Array2::zeros((0, width)),
            ill_conditioned: false,
        }
    }

    /// Number of columns `l` coded jointly.
    pub fn width(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `D_S C`, the `r x l` approximation of the subset.
    pub fn approximation(&self, dict: &Dictionary) -> Array2<f64> {
        if self.support.is_empty() {
            return Array2::zeros((dict.r(), self.width()));
        }
        dict.atoms().select(Axis(1), &self.support).dot(&self.coeffs)
    }

    /// `Omega - D_S C`.
    pub fn residual(&self, subset: ArrayView2<f64>, dict: &Dictionary) -> Array2<f64> {
        &subset - &self.approximation(dict)
    }

    pub fn residual_energy(&self, subset: ArrayView2<f64>, dict: &Dictionary) -> f64 {
        self.residual(subset, dict).iter().map(|v| v * v).sum()
    }
}

/// Reusable SOMP solver holding the Gram matrix of one dictionary.
pub struct SparseCoder<'a> {
    dict: &'a Dictionary,
    gram: Array2<f64>,
    cfg: SompConfig,
}

impl<'a> SparseCoder<'a> {
    pub fn new(dict: &'a Dictionary, cfg: SompConfig) -> Result<Self> {
        cfg.validate(dict.k())?;
        let atoms = dict.atoms();
        Ok(Self {
            dict,
            gram: atoms.t().dot(atoms),
            cfg,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    /// Codes one `r x l` subset.
    pub fn code(&self, subset: ArrayView2<f64>) -> Result<JointCode> {
        let r = self.dict.r();
        if subset.nrows() != r || subset.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "subset is {}x{}, dictionary expects {r} rows and at least one column",
                subset.nrows(),
                subset.ncols()
            )));
        }
        let l = subset.ncols();
        let k = self.dict.k();
        let limit = self.cfg.max_atoms.min(r).min(k);

        let norm2: f64 = subset.iter().map(|v| v * v).sum();
        let floor2 = self.cfg.noise_floor * self.cfg.noise_floor * (r * l) as f64;
        let stop2 = (self.cfg.residual_tol * self.cfg.residual_tol * norm2).max(floor2);
        let proj = self.dict.atoms().t().dot(&subset);

        let mut support: Vec<usize> = Vec::with_capacity(limit);
        let mut selected = vec![false; k];
        let mut coeffs = Array2::<f64>::zeros((0, l));
        let mut corr = proj.clone();
        let mut residual2 = norm2;
        let mut ill_conditioned = false;

        while support.len() < limit && residual2 > stop2 {
            let mut best = 0.0;
            let mut best_atom = None;
            for (a, row) in corr.outer_iter().enumerate() {
                if selected[a] {
                    continue;
                }
                let score: f64 = row.iter().map(|c| c * c).sum();
                if score > best {
                    best = score;
                    best_atom = Some(a);
                }
            }
            let Some(atom) = best_atom else { break };

            support.push(atom);
            let Some(next) = self.refit(&support, &proj) else {
                support.pop();
                ill_conditioned = true;
                break;
            };
            selected[atom] = true;
            coeffs = next;
            let gram_cols = self.gram.select(Axis(1), &support);
            corr = &proj - &gram_cols.dot(&coeffs);
            let explained: f64 = coeffs
                .iter()
                .zip(proj.select(Axis(0), &support).iter())
                .map(|(c, p)| c * p)
                .sum();
            residual2 = (norm2 - explained).max(0.0);
            // The Gram-based estimate loses relative accuracy to cancellation
            // once most of the energy is explained; recompute it directly.
            if residual2 < EXACT_RESIDUAL_BELOW * norm2 {
                let approx = self.dict.atoms().select(Axis(1), &support).dot(&coeffs);
                residual2 = subset.iter().zip(approx.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }

        Ok(JointCode {
            support,
            coeffs,
            ill_conditioned,
        })
    }

    /// Least-squares coefficients on `support`, or `None` if the support's
    /// Gram matrix is numerically singular.
    fn refit(&self, support: &[usize], proj: &Array2<f64>) -> Option<Array2<f64>> {
        let n = support.len();
        let l = proj.ncols();
        let gram = DMatrix::from_fn(n, n, |i, j| self.gram[[support[i], support[j]]]);
        let eig = SymmetricEigen::new(gram.clone());
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if !(lo > 0.0) || hi / lo > MAX_GRAM_CONDITION {
            return None;
        }
        let rhs = DMatrix::from_fn(n, l, |i, c| proj[[support[i], c]]);
        let solved = gram.cholesky()?.solve(&rhs);
        Some(Array2::from_shape_fn((n, l), |(i, c)| solved[(i, c)]))
    }
}

/// SOMP on an `r x l` subset.
pub fn somp(subset: ArrayView2<f64>, dict: &Dictionary, cfg: &SompConfig) -> Result<JointCode> {
    SparseCoder::new(dict, *cfg)?.code(subset)
}

/// OMP on a single vector; identical to [`somp`] on the one-column matrix.
pub fn omp(vector: ArrayView1<f64>, dict: &Dictionary, cfg: &SompConfig) -> Result<JointCode> {
    let column = vector.insert_axis(Axis(1));
    somp(column, dict, cfg)
}

/// Codes for every block of a geometry, one [`JointCode`] per subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodeSet {
    pub grouping: SubsetGrouping,
    pub codes: Vec<JointCode>,
}

impl SparseCodeSet {
    pub fn n_blocks(&self) -> usize {
        self.grouping.n_blocks
    }

    /// Support and coefficient column of block `i`.
    pub fn block(&self, i: usize) -> (&[usize], ArrayView1<'_, f64>) {
        let (j, c) = self.grouping.locate(i);
        let code = &self.codes[j];
        (&code.support, code.coeffs.slice(s![.., c]))
    }

    pub fn mean_support(&self) -> f64 {
        let total: usize = self.codes.iter().map(|c| c.support.len()).sum();
        total as f64 / self.codes.len().max(1) as f64
    }

    pub fn ill_conditioned_count(&self) -> usize {
        self.codes.iter().filter(|c| c.ill_conditioned).count()
    }
}

/// Groups all blocks of `y` into raster subsets of width `l` and codes each
/// against `dict`. Subsets are coded in parallel.
pub fn code_all(
    y: &Datacube,
    geometry: &BlockGeometry,
    dict: &Dictionary,
    l: usize,
    cfg: &SompConfig,
) -> Result<SparseCodeSet> {
    geometry.check_cube(y)?;
    if dict.r() != geometry.r() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} rows, blocks have {}",
            dict.r(),
            geometry.r()
        )));
    }
    let grouping = group(geometry.n_blocks(), l)?;
    let coder = SparseCoder::new(dict, *cfg)?;
    let codes = (0..grouping.n_subsets())
        .into_par_iter()
        .map(|j| {
            let subset = extract_range(y, geometry, grouping.range(j))?;
            coder.code(subset.columns.view())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseCodeSet { grouping, codes })
}
