//! Overlapping 3D block extraction, raster enumeration, MMV subset grouping,
//! block means, and coverage counts.
//!
//! Block `i` is the sub-volume of size `nx_b x ny_b x b` whose origin is the
//! `i`-th entry of the raster enumeration (x fastest, then y, then t). Its
//! vectorized form uses the same x/y/t ordering as [`Datacube`], so column
//! entry `(t * ny_b + y) * nx_b + x` is voxel `origin + (x, y, t)`.

use std::ops::Range;

use ndarray::Array2;

use crate::datacube::Datacube;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeometry {
    pub block: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub cube: (usize, usize, usize),
}

impl BlockGeometry {
    pub fn new(block: (usize, usize, usize), stride: (usize, usize, usize), cube: (usize, usize, usize)) -> Result<Self> {
        let axes = [(block.0, stride.0, cube.0, 'x'), (block.1, stride.1, cube.1, 'y'), (block.2, stride.2, cube.2, 't')];
        for (size, step, extent, axis) in axes {
            if size == 0 || size > extent {
                return Err(Error::InvalidArgument(format!(
                    "block size {size} along {axis} must be in 1..={extent}"
                )));
            }
            if step == 0 {
                return Err(Error::InvalidArgument(format!("stride along {axis} must be positive")));
            }
        }
        Ok(Self { block, stride, cube })
    }

    /// Fully overlapping (stride 1) geometry.
    pub fn dense(block: (usize, usize, usize), cube: (usize, usize, usize)) -> Result<Self> {
        Self::new(block, (1, 1, 1), cube)
    }

    /// Block vector length `r`.
    pub fn r(&self) -> usize {
        self.block.0 * self.block.1 * self.block.2
    }

    /// Number of block positions along each axis.
    pub fn positions(&self) -> (usize, usize, usize) {
        let count = |n: usize, size: usize, step: usize| (n - size) / step + 1;
        (
            count(self.cube.0, self.block.0, self.stride.0),
            count(self.cube.1, self.block.1, self.stride.1),
            count(self.cube.2, self.block.2, self.stride.2),
        )
    }

    pub fn n_blocks(&self) -> usize {
        let (px, py, pt) = self.positions();
        px * py * pt
    }

    /// Origin of block `i` in raster order.
    #[inline]
    pub fn origin(&self, i: usize) -> (usize, usize, usize) {
        let (px, py, _) = self.positions();
        let ix = i % px;
        let iy = (i / px) % py;
        let it = i / (px * py);
        (ix * self.stride.0, iy * self.stride.1, it * self.stride.2)
    }

    pub(crate) fn check_cube(&self, x: &Datacube) -> Result<()> {
        if x.dims() != self.cube {
            return Err(Error::DimensionMismatch(format!(
                "geometry built for {:?}, cube is {:?}",
                self.cube,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Calls `f(j, v)` for every entry `j` of block `i`, with `v` the linear
    /// voxel index it maps to.
    #[inline]
    pub(crate) fn for_each_voxel(&self, i: usize, mut f: impl FnMut(usize, usize)) {
        let (ox, oy, ot) = self.origin(i);
        let (bx, by, bt) = self.block;
        let (nx, ny, _) = self.cube;
        let mut j = 0;
        for t in 0..bt {
            for y in 0..by {
                let row = ((ot + t) * ny + oy + y) * nx + ox;
                for x in 0..bx {
                    f(j, row + x);
                    j += 1;
                }
            }
        }
    }
}

/// Block origins in raster order.
pub fn enumerate_blocks(geometry: &BlockGeometry) -> Vec<(usize, usize, usize)> {
    (0..geometry.n_blocks()).map(|i| geometry.origin(i)).collect()
}

/// Vectorized block `i` of `x` written into `out` (length `r`).
pub fn extract_block_into(x: &Datacube, geometry: &BlockGeometry, i: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), geometry.r());
    let (bx, by, bt) = geometry.block;
    let (ox, oy, ot) = geometry.origin(i);
    let values = x.values();
    let (nx, ny, _) = geometry.cube;
    let mut j = 0;
    for t in 0..bt {
        for y in 0..by {
            let row = ((ot + t) * ny + oy + y) * nx + ox;
            out[j..j + bx].copy_from_slice(&values[row..row + bx]);
            j += bx;
        }
    }
}

/// Blocks as columns of an `r x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub columns: Array2<f64>,
}

impl BlockMatrix {
    pub fn r(&self) -> usize {
        self.columns.nrows()
    }

    pub fn n_blocks(&self) -> usize {
        self.columns.ncols()
    }
}

/// All blocks of `x` as an `r x N` matrix.
pub fn extract(x: &Datacube, geometry: &BlockGeometry) -> Result<BlockMatrix> {
    extract_range(x, geometry, 0..geometry.n_blocks())
}

/// Blocks `range` of `x` as an `r x range.len()` matrix.
pub fn extract_range(x: &Datacube, geometry: &BlockGeometry, range: Range<usize>) -> Result<BlockMatrix> {
    geometry.check_cube(x)?;
    if range.end > geometry.n_blocks() {
        return Err(Error::InvalidArgument(format!(
            "block range {range:?} exceeds {} blocks",
            geometry.n_blocks()
        )));
    }
    let r = geometry.r();
    let n = range.len();
    // Fill column-major, then view as r x n.
    let mut data = vec![0.0; r * n];
    for (c, i) in range.enumerate() {
        extract_block_into(x, geometry, i, &mut data[c * r..(c + 1) * r]);
    }
    let columns = Array2::from_shape_vec((n, r), data)
        .expect("shape")
        .reversed_axes();
    Ok(BlockMatrix { columns })
}

/// Accumulates `R_i^T column_i` over all blocks and divides by coverage.
/// Voxels not covered by any block are zero.
pub fn overlap_average(blocks: &BlockMatrix, geometry: &BlockGeometry) -> Result<Datacube> {
    if blocks.r() != geometry.r() || blocks.n_blocks() != geometry.n_blocks() {
        return Err(Error::DimensionMismatch(format!(
            "block matrix {}x{} vs geometry {}x{}",
            blocks.r(),
            blocks.n_blocks(),
            geometry.r(),
            geometry.n_blocks()
        )));
    }
    // Compensated accumulation: unmodified blocks average back to the input
    // bit-for-bit.
    let (nx, ny, nb) = geometry.cube;
    let mut hi = vec![0.0; nx * ny * nb];
    let mut lo = vec![0.0; nx * ny * nb];
    for (i, column) in blocks.columns.columns().into_iter().enumerate() {
        geometry.for_each_voxel(i, |j, v| {
            let (s, e) = two_sum(hi[v], column[j]);
            hi[v] = s;
            lo[v] += e;
        });
    }
    let counts = coverage_counts(geometry);
    let values = hi
        .iter()
        .zip(&lo)
        .zip(&counts)
        .map(|((&h, &l), &c)| {
            if c == 0 {
                return 0.0;
            }
            let c = c as f64;
            let q = h / c;
            let rem = (-q).mul_add(c, h) + l;
            q + rem / c
        })
        .collect();
    Datacube::new(nx, ny, nb, values)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Contiguous raster-order partition of `N` blocks into subsets of width `l`;
/// the last subset is ragged when `l` does not divide `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetGrouping {
    pub l: usize,
    pub n_blocks: usize,
}

impl SubsetGrouping {
    pub fn n_subsets(&self) -> usize {
        self.n_blocks.div_ceil(self.l)
    }

    pub fn range(&self, j: usize) -> Range<usize> {
        let start = j * self.l;
        start..(start + self.l).min(self.n_blocks)
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n_subsets()).map(|j| self.range(j))
    }

    /// `(subset, column)` of block `i`.
    #[inline]
    pub fn locate(&self, i: usize) -> (usize, usize) {
        (i / self.l, i % self.l)
    }
}

pub fn group(n_blocks: usize, l: usize) -> Result<SubsetGrouping> {
    if n_blocks == 0 || l == 0 {
        return Err(Error::InvalidArgument(format!(
            "grouping needs N >= 1 and l >= 1, got N={n_blocks}, l={l}"
        )));
    }
    Ok(SubsetGrouping { l, n_blocks })
}

/// Mean of each column.
pub fn block_means(blocks: &BlockMatrix) -> Vec<f64> {
    let r = blocks.r() as f64;
    blocks.columns.columns().into_iter().map(|c| c.sum() / r).collect()
}

/// Mean of every block of `x`, computed from a summed-volume table without
/// materializing the blocks.
pub fn block_means_of(x: &Datacube, geometry: &BlockGeometry) -> Result<Vec<f64>> {
    geometry.check_cube(x)?;
    let (nx, ny, nb) = x.dims();
    // table[(t * (ny+1) + y) * (nx+1) + x] = sum over [0,x) x [0,y) x [0,t)
    let (sx, sy) = (nx + 1, ny + 1);
    let mut table = vec![0.0; sx * sy * (nb + 1)];
    let at = |x: usize, y: usize, t: usize| (t * sy + y) * sx + x;
    for t in 0..nb {
        for y in 0..ny {
            let mut row = 0.0;
            for xi in 0..nx {
                row += x.get(xi, y, t);
                table[at(xi + 1, y + 1, t + 1)] =
                    row + table[at(xi + 1, y, t + 1)] + table[at(xi + 1, y + 1, t)] - table[at(xi + 1, y, t)];
            }
        }
    }
    let (bx, by, bt) = geometry.block;
    let r = geometry.r() as f64;
    Ok((0..geometry.n_blocks())
        .map(|i| {
            let (x0, y0, t0) = geometry.origin(i);
            let (x1, y1, t1) = (x0 + bx, y0 + by, t0 + bt);
            let s = table[at(x1, y1, t1)] - table[at(x0, y1, t1)] - table[at(x1, y0, t1)] - table[at(x1, y1, t0)]
                + table[at(x0, y0, t1)]
                + table[at(x0, y1, t0)]
                + table[at(x1, y0, t0)]
                - table[at(x0, y0, t0)];
            s / r
        })
        .collect())
}

/// Number of blocks containing each voxel: the diagonal of `sum_i R_i^T R_i`.
pub fn coverage_counts(geometry: &BlockGeometry) -> Vec<u32> {
    let axis = |n: usize, size: usize, step: usize| -> Vec<u32> {
        let positions = (n - size) / step + 1;
        let mut counts = vec![0u32; n];
        for p in 0..positions {
            for c in &mut counts[p * step..p * step + size] {
                *c += 1;
            }
        }
        counts
    };
    let (nx, ny, nb) = geometry.cube;
    let cx = axis(nx, geometry.block.0, geometry.stride.0);
    let cy = axis(ny, geometry.block.1, geometry.stride.1);
    let ct = axis(nb, geometry.block.2, geometry.stride.2);
    let mut out = Vec::with_capacity(nx * ny * nb);
    for &t in &ct {
        for &y in &cy {
            for &x in &cx {
                out.push(x * y * t);
            }
        }
    }
    out
}
