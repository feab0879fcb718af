//! Seeded fixtures shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use thzcube::blocks::{group, BlockGeometry};
use thzcube::phantom::LayeredPhantomSpec;
use thzcube::sparse_mmv::{JointCode, SparseCodeSet};
use thzcube::{Datacube, Dictionary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_cube(rng: &mut impl Rng, nx: usize, ny: usize, nb: usize) -> Datacube {
    Datacube::from_fn(nx, ny, nb, |_, _, _| gaussian(rng)).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || gaussian(rng))
}

pub fn random_dictionary(rng: &mut impl Rng, r: usize, k: usize) -> Dictionary {
    Dictionary::from_unnormalized(random_matrix(rng, r, k)).unwrap()
}

/// Random cube of at most `max`^3 voxels with a random block geometry
/// (block sizes up to the cube, strides up to the block size plus one).
pub fn random_geometry(rng: &mut impl Rng, max: usize) -> BlockGeometry {
    let mut axis = || {
        let n = rng.random_range(1..=max);
        let b = rng.random_range(1..=n);
        let s = rng.random_range(1..=b + 1);
        (n, b, s)
    };
    let (x, y, t) = (axis(), axis(), axis());
    BlockGeometry::new((x.1, y.1, t.1), (x.2, y.2, t.2), (x.0, y.0, t.0)).unwrap()
}

/// Random codes for every block of `geometry`: subsets of width `l`, each
/// with a random support of up to `max_support` atoms.
pub fn random_codes(rng: &mut impl Rng, geometry: &BlockGeometry, k: usize, l: usize, max_support: usize) -> SparseCodeSet {
    let grouping = group(geometry.n_blocks(), l).unwrap();
    let codes = grouping
        .ranges()
        .map(|range| {
            let size = rng.random_range(0..=max_support.min(k));
            let support = rand::seq::index::sample(rng, k, size).into_vec();
            JointCode {
                support,
                coeffs: random_matrix(rng, size, range.len()),
                ill_conditioned: false,
            }
        })
        .collect();
    SparseCodeSet { grouping, codes }
}

/// Layered phantom on a small grid with delays scaled to fit `nb = 64`.
pub fn small_layered(nx: usize, ny: usize, seed: u64) -> LayeredPhantomSpec {
    LayeredPhantomSpec {
        surface_peak_index: 10,
        buried_depth_delay: 22,
        layer_thickness_delay: 12,
        peak_width: 3.0,
        seed,
        ..LayeredPhantomSpec::tshape(nx, ny, 64)
    }
}

/// Writes `text` to `dir/name` and returns the path.
pub fn write_file(dir: &std::path::Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}
