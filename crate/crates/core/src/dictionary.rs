//! Dictionary container, separable overcomplete-DCT initialization, the K-SVD
//! atom update, and the alternating SOMP / K-SVD training loop.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blocks::{extract_range, group, BlockGeometry};
use crate::datacube::Datacube;
use crate::error::{Error, Result};
use crate::sparse_mmv::{code_all, JointCode, SompConfig, SparseCodeSet, SparseCoder};

const UNIT_NORM_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 50;
const POWER_REL_TOL: f64 = 1e-12;

/// `r x k` matrix of unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    /// Wraps atoms that are already unit norm.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        check_finite(&atoms)?;
        for (a, col) in atoms.axis_iter(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidArgument(format!("atom {a} has norm {norm}")));
            }
        }
        Ok(Self { atoms })
    }

    /// Normalizes every column and applies the sign convention.
    pub fn from_unnormalized(mut atoms: Array2<f64>) -> Result<Self> {
        check_finite(&atoms)?;
        for (a, mut col) in atoms.axis_iter_mut(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidArgument(format!("atom {a} is zero")));
            }
            col.mapv_inplace(|v| v / norm);
            canonical_sign(&mut col);
        }
        Ok(Self { atoms })
    }

    pub fn r(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn k(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn atom(&self, a: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(a)
    }

    /// Largest absolute inner product between distinct atoms.
    pub fn mutual_coherence(&self) -> f64 {
        let gram = self.atoms.t().dot(&self.atoms);
        let mut mu = 0.0f64;
        for i in 0..self.k() {
            for j in 0..i {
                mu = mu.max(gram[[i, j]].abs());
            }
        }
        mu
    }
}

fn check_finite(atoms: &Array2<f64>) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidArgument("dictionary has no atoms".into()));
    }
    if atoms.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("dictionary has non-finite entries".into()));
    }
    Ok(())
}

/// Flips `col` so its first nonzero entry is positive.
fn canonical_sign(col: &mut ndarray::ArrayViewMut1<f64>) {
    if let Some(first) = col.iter().find(|v| **v != 0.0) {
        if *first < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Per-axis overcomplete DCT: `k` columns `cos(pi (i + 1/2) j / k)` over `n`
/// samples, non-DC columns mean-removed, all columns unit norm.
fn dct_axis(n: usize, k: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, k), |(i, j)| {
        (std::f64::consts::PI * (i as f64 + 0.5) * j as f64 / k as f64).cos()
    });
    for (j, mut col) in m.axis_iter_mut(Axis(1)).enumerate() {
        if j > 0 {
            let mean = col.mean().unwrap_or(0.0);
            col.mapv_inplace(|v| v - mean);
        }
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    m
}

/// Separable 3D DCT dictionary with `k` atoms for blocks of `geometry`.
///
/// Per-axis atom counts scale the block dimensions by a common factor
/// `(k / r)^(1/d)` over the `d` non-singleton axes; 3D atoms are Kronecker
/// products in raster frequency order (x fastest) truncated to `k`.
pub fn dct_init(r: usize, k: usize, geometry: &BlockGeometry) -> Result<Dictionary> {
    if r != geometry.r() {
        return Err(Error::DimensionMismatch(format!(
            "r = {r} but blocks have {} entries",
            geometry.r()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("dictionary needs at least one atom".into()));
    }
    let (bx, by, bt) = geometry.block;
    let dims = [bx, by, bt];
    let active = dims.iter().filter(|&&n| n > 1).count();
    if active == 0 && k > 1 {
        return Err(Error::InvalidArgument(format!(
            "cannot build {k} distinct atoms for 1x1x1 blocks"
        )));
    }
    if k < r {
        log::warn!("undercomplete dictionary: k = {k} < r = {r}");
    }
    let scale = if active == 0 {
        1.0
    } else {
        (k as f64 / r as f64).powf(1.0 / active as f64)
    };
    let counts = dims.map(|n| if n > 1 { ((n as f64 * scale) - 1e-9).ceil().max(1.0) as usize } else { 1 });
    if counts.iter().product::<usize>() < k {
        return Err(Error::InvalidArgument(format!(
            "per-axis atom counts {counts:?} cannot supply {k} atoms"
        )));
    }
    let [ax, ay, at] = [dct_axis(bx, counts[0]), dct_axis(by, counts[1]), dct_axis(bt, counts[2])];

    let mut atoms = Array2::zeros((r, k));
    let mut a = 0;
    'outer: for jt in 0..counts[2] {
        for jy in 0..counts[1] {
            for jx in 0..counts[0] {
                if a == k {
                    break 'outer;
                }
                let mut col = atoms.column_mut(a);
                let mut e = 0;
                for t in 0..bt {
                    for y in 0..by {
                        for x in 0..bx {
                            col[e] = ax[[x, jx]] * ay[[y, jy]] * at[[t, jt]];
                            e += 1;
                        }
                    }
                }
                a += 1;
            }
        }
    }
    Dictionary::from_unnormalized(atoms)
}

/// Outcome of one K-SVD sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KsvdReport {
    /// Atoms no block used (or whose restricted error was zero).
    pub unused: Vec<usize>,
    /// Atoms re-seeded from the worst-represented block column.
    pub replaced: Vec<usize>,
    /// `sum_j |Omega_j - D S_j|_F^2` before and after the sweep.
    pub error_before: f64,
    pub error_after: f64,
}

/// One K-SVD sweep over all atoms, in index order.
///
/// For each atom, the blocks whose (shared) support contains it are gathered,
/// the error without that atom's contribution is formed, and the atom and its
/// coefficient row are replaced by the principal singular pair of that error.
/// Coefficients in `codes` are updated in place; supports are unchanged.
pub fn ksvd_update(
    dict: &Dictionary,
    subsets: &[Array2<f64>],
    codes: &mut [JointCode],
    replace_unused: bool,
) -> Result<(Dictionary, KsvdReport)> {
    if subsets.len() != codes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} subsets but {} codes",
            subsets.len(),
            codes.len()
        )));
    }
    let (r, k) = (dict.r(), dict.k());
    for (j, (subset, code)) in subsets.iter().zip(codes.iter()).enumerate() {
        if subset.nrows() != r || code.width() != subset.ncols() || code.coeffs.nrows() != code.support.len() {
            return Err(Error::DimensionMismatch(format!("subset {j} does not match its code")));
        }
        if code.support.iter().any(|&a| a >= k) {
            return Err(Error::InvalidArgument(format!("subset {j} references an atom >= {k}")));
        }
    }

    // Column-major residual E = X - D C over all columns of all subsets.
    let offsets: Vec<usize> = subsets
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.ncols();
            Some(o)
        })
        .collect();
    let total: usize = subsets.iter().map(|s| s.ncols()).sum();
    let mut residual = vec![0.0; r * total];
    for (j, (subset, code)) in subsets.iter().zip(codes.iter()).enumerate() {
        let e = code.residual(subset.view(), dict);
        for (c, col) in e.axis_iter(Axis(1)).enumerate() {
            let base = (offsets[j] + c) * r;
            for (dst, v) in residual[base..base + r].iter_mut().zip(col) {
                *dst = *v;
            }
        }
    }
    let error_before = residual.iter().map(|v| v * v).sum();

    let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for (j, code) in codes.iter().enumerate() {
        for (p, &a) in code.support.iter().enumerate() {
            users[a].push((j, p));
        }
    }

    let mut atoms = dict.atoms().clone();
    let mut unused = Vec::new();
    let mut restricted: Vec<f64> = Vec::new();
    let mut u = vec![0.0; r];
    let mut w = vec![0.0; r];
    let mut v: Vec<f64> = Vec::new();

    for a in 0..k {
        if users[a].is_empty() {
            unused.push(a);
            continue;
        }
        let atom: Vec<f64> = atoms.column(a).to_vec();
        // Restricted error E_a = E + d_a c_a over the users' columns.
        restricted.clear();
        for &(j, p) in &users[a] {
            for c in 0..codes[j].width() {
                let coef = codes[j].coeffs[[p, c]];
                let base = (offsets[j] + c) * r;
                restricted.extend(residual[base..base + r].iter().zip(&atom).map(|(e, d)| e + d * coef));
            }
        }
        let m = restricted.len() / r;
        let energy: f64 = restricted.iter().map(|x| x * x).sum();
        v.resize(m, 0.0);

        if energy == 0.0 {
            for &(j, p) in &users[a] {
                codes[j].coeffs.row_mut(p).fill(0.0);
            }
            write_back(&mut residual, &restricted, &users[a], codes, &offsets, r, None);
            unused.push(a);
            continue;
        }

        u.copy_from_slice(&atom);
        principal_pair(&restricted, r, &mut u, &mut v, &mut w);
        // Sign convention: first nonzero entry of the atom is positive.
        if let Some(first) = u.iter().find(|x| **x != 0.0) {
            if *first < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        atoms.column_mut(a).iter_mut().zip(&u).for_each(|(d, x)| *d = *x);
        let mut col = 0;
        for &(j, p) in &users[a] {
            for c in 0..codes[j].width() {
                codes[j].coeffs[[p, c]] = v[col];
                col += 1;
            }
        }
        write_back(&mut residual, &restricted, &users[a], codes, &offsets, r, Some((&u, &v)));
    }

    let mut replaced = Vec::new();
    if replace_unused && !unused.is_empty() {
        let mut norms: Vec<(usize, f64)> = residual
            .chunks_exact(r)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>())
            .enumerate()
            .filter(|(_, n)| *n > 0.0)
            .collect();
        // Largest residual first; index breaks ties.
        norms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (&a, &(c, n)) in unused.iter().zip(&norms) {
            let norm = n.sqrt();
            let src = &residual[c * r..(c + 1) * r];
            let mut col = atoms.column_mut(a);
            col.iter_mut().zip(src).for_each(|(d, x)| *d = x / norm);
            canonical_sign(&mut col);
            replaced.push(a);
        }
    }

    let error_after = residual.iter().map(|v| v * v).sum();
    let dictionary = Dictionary::from_unnormalized(atoms)?;
    Ok((
        dictionary,
        KsvdReport {
            unused,
            replaced,
            error_before,
            error_after,
        },
    ))
}

/// Principal left singular vector of the column-major `r x m` matrix `e` by
/// power iteration on `E E^T`, warm-started from `u`. On return `u` is unit
/// norm and `v = E^T u` (so `u v^T` is the best rank-1 fit for this `u`).
/// Starting from the current atom, the captured energy `|E^T u|^2` never
/// decreases across iterations.
fn principal_pair(e: &[f64], r: usize, u: &mut [f64], v: &mut [f64], w: &mut [f64]) {
    let mul_t = |u: &[f64], v: &mut [f64]| {
        for (vc, col) in v.iter_mut().zip(e.chunks_exact(r)) {
            *vc = col.iter().zip(u).map(|(a, b)| a * b).sum();
        }
    };
    let mul = |v: &[f64], w: &mut [f64]| {
        w.fill(0.0);
        for (vc, col) in v.iter().zip(e.chunks_exact(r)) {
            for (wi, ci) in w.iter_mut().zip(col) {
                *wi += ci * vc;
            }
        }
    };

    mul_t(u, v);
    let mut captured: f64 = v.iter().map(|x| x * x).sum();
    if captured == 0.0 {
        // The atom is orthogonal to every column: restart from the largest one.
        let (c, _) = e
            .chunks_exact(r)
            .map(|col| col.iter().map(|x| x * x).sum::<f64>())
            .enumerate()
            .fold((0, 0.0), |best, (c, n)| if n > best.1 { (c, n) } else { best });
        let col = &e[c * r..(c + 1) * r];
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().zip(col).for_each(|(ui, x)| *ui = x / norm);
        mul_t(u, v);
        captured = v.iter().map(|x| x * x).sum();
    }

    for _ in 0..POWER_MAX_ITERS {
        mul(v, w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let prev_u = u.to_vec();
        let prev_v = v.to_vec();
        u.iter_mut().zip(w.iter()).for_each(|(ui, wi)| *ui = wi / norm);
        mul_t(u, v);
        let next: f64 = v.iter().map(|x| x * x).sum();
        if next < captured {
            // Rounding at convergence; keep the better pair.
            u.copy_from_slice(&prev_u);
            v.copy_from_slice(&prev_v);
            break;
        }
        let gain = next - captured;
        captured = next;
        if gain <= POWER_REL_TOL * captured {
            break;
        }
    }
}

fn write_back(
    residual: &mut [f64],
    restricted: &[f64],
    users: &[(usize, usize)],
    codes: &[JointCode],
    offsets: &[usize],
    r: usize,
    pair: Option<(&[f64], &[f64])>,
) {
    let mut col = 0;
    for &(j, _) in users {
        for c in 0..codes[j].width() {
            let base = (offsets[j] + c) * r;
            let src = &restricted[col * r..(col + 1) * r];
            let dst = &mut residual[base..base + r];
            match pair {
                Some((u, v)) => {
                    let coef = v[col];
                    for ((d, s), ui) in dst.iter_mut().zip(src).zip(u) {
                        *d = s - ui * coef;
                    }
                }
                None => dst.copy_from_slice(src),
            }
            col += 1;
        }
    }
}

/// Settings for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of atoms `k`.
    pub atoms: usize,
    /// Maximum number of SOMP + K-SVD alternations.
    pub iterations: usize,
    /// Subset width `l` for joint coding.
    pub l: usize,
    pub somp: SompConfig,
    pub replace_unused: bool,
    /// Cap on the number of blocks used for training; whole subsets are drawn
    /// at random (seeded) when the enumeration is larger.
    pub max_training_blocks: usize,
    /// Stop once the relative drop of the coding error between alternations
    /// falls below this.
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            atoms: 256,
            iterations: 15,
            l: 10,
            somp: SompConfig::default(),
            replace_unused: true,
            max_training_blocks: 40_000,
            plateau_tol: 1e-4,
            seed: 0,
        }
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dictionary: Dictionary,
    /// Codes of every block from a final coding pass with the learned dictionary.
    pub codes: SparseCodeSet,
    /// Training-set coding error `sum_j |Omega_j - D S_j|_F^2` after each
    /// alternation's coding step.
    pub coding_error: Vec<f64>,
    /// The same error after each alternation's K-SVD step.
    pub ksvd_error: Vec<f64>,
    pub training_blocks: usize,
}

/// Learns a dictionary from the blocks of `y` by alternating SOMP over all
/// training subsets with a K-SVD sweep, starting from the DCT dictionary.
pub fn train(y: &Datacube, geometry: &BlockGeometry, cfg: &TrainConfig) -> Result<TrainOutput> {
    let (dictionary, coding_error, ksvd_error, training_blocks) = learn(y, geometry, cfg)?;
    let codes = code_all(y, geometry, &dictionary, cfg.l, &cfg.somp)?;
    Ok(TrainOutput {
        dictionary,
        codes,
        coding_error,
        ksvd_error,
        training_blocks,
    })
}

/// The alternation loop of [`train`] without the final all-blocks coding pass.
pub fn learn(y: &Datacube, geometry: &BlockGeometry, cfg: &TrainConfig) -> Result<(Dictionary, Vec<f64>, Vec<f64>, usize)> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument("training needs at least one iteration".into()));
    }
    geometry.check_cube(y)?;
    cfg.somp.validate(cfg.atoms)?;
    let grouping = group(geometry.n_blocks(), cfg.l)?;

    let n_subsets = grouping.n_subsets();
    let wanted = (cfg.max_training_blocks / cfg.l).max(1);
    let chosen: Vec<usize> = if wanted >= n_subsets {
        (0..n_subsets).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked = index::sample(&mut rng, n_subsets, wanted).into_vec();
        picked.sort_unstable();
        picked
    };
    let subsets: Vec<Array2<f64>> = chosen
        .par_iter()
        .map(|&j| extract_range(y, geometry, grouping.range(j)).map(|b| b.columns))
        .collect::<Result<_>>()?;
    let training_blocks = subsets.iter().map(|s| s.ncols()).sum();

    let mut dict = dct_init(geometry.r(), cfg.atoms, geometry)?;
    let mut codes: Option<Vec<JointCode>> = None;
    let mut coding_error = Vec::with_capacity(cfg.iterations);
    let mut ksvd_error = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let coder = SparseCoder::new(&dict, cfg.somp)?;
        let previous = codes.take();
        let coded: Vec<(JointCode, f64)> = subsets
            .par_iter()
            .enumerate()
            .map(|(j, subset)| {
                let fresh = coder.code(subset.view())?;
                let fresh_err = fresh.residual_energy(subset.view(), &dict);
                // Greedy pursuit can lose to the K-SVD-refined code it
                // replaces; keeping the better one makes the error monotone.
                if let Some(prev) = previous.as_ref().map(|p| &p[j]) {
                    let prev_err = prev.residual_energy(subset.view(), &dict);
                    if prev_err < fresh_err {
                        return Ok((prev.clone(), prev_err));
                    }
                }
                Ok((fresh, fresh_err))
            })
            .collect::<Result<_>>()?;
        let error: f64 = coded.iter().map(|(_, e)| e).sum();
        let mut current: Vec<JointCode> = coded.into_iter().map(|(c, _)| c).collect();
        coding_error.push(error);

        let (next, report) = ksvd_update(&dict, &subsets, &mut current, cfg.replace_unused)?;
        log::debug!(
            "alternation {}: coding error {error:.6e}, after K-SVD {:.6e}, {} unused atoms",
            it + 1,
            report.error_after,
            report.unused.len()
        );
        ksvd_error.push(report.error_after);
        dict = next;
        codes = Some(current);

        if it > 0 {
            let prev = coding_error[it - 1];
            if prev > 0.0 && (prev - error) / prev < cfg.plateau_tol {
                break;
            }
        }
    }
    Ok((dict, coding_error, ksvd_error, training_blocks))
}

/// Writes a dictionary file: `THZD`, version 1, `r`, `k` as little-endian
/// `u32`, then `r * k` little-endian `f64` in column-major order.
pub fn write_dictionary(dict: &Dictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + 8 * dict.r() * dict.k());
    buf.extend_from_slice(b"THZD");
    for w in [1u32, dict.r() as u32, dict.k() as u32] {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    for col in dict.atoms().axis_iter(Axis(1)) {
        for v in col {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 {
        return Err(format_err("file shorter than the header".into()));
    }
    if &bytes[..4] != b"THZD" {
        return Err(format_err(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != 1 {
        return Err(format_err(format!("unsupported version {}", word(0))));
    }
    let (r, k) = (word(1), word(2));
    let count = r
        .checked_mul(k)
        .filter(|&n| n > 0 && n.checked_mul(8).is_some())
        .ok_or_else(|| format_err(format!("invalid dimensions {r}x{k}")))?;
    let payload = &bytes[16..];
    if payload.len() < count * 8 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: count,
            found: payload.len() / 8,
        });
    }
    if payload.len() > count * 8 {
        return Err(format_err("trailing bytes after payload".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let atoms = Array2::from_shape_vec((k, r), values).expect("shape").reversed_axes();
    Dictionary::new(atoms.as_standard_layout().into_owned()).map_err(|e| format_err(e.to_string()))
}
