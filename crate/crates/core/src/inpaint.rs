//! Initial fill of unobserved samples, one temporal frame at a time.
//!
//! Regular decimation lattices are filled with two-pass cubic convolution
//! (Catmull-Rom, `a = -0.5`); any other pattern falls back to inverse-distance
//! weighting over the nearest observed pixels. Observed samples pass through
//! unchanged.

use rayon::prelude::*;

use crate::datacube::{Datacube, Mask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpMethod {
    /// Cubic convolution on a decimation lattice, IDW otherwise.
    #[default]
    BicubicGrid,
    IdwScattered,
}

impl std::str::FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicubic-grid" | "bicubic" => Ok(Self::BicubicGrid),
            "idw-scattered" | "idw" => Ok(Self::IdwScattered),
            other => Err(Error::config(
                "interp-method",
                format!("expected bicubic-grid or idw-scattered, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpConfig {
    pub method: InterpMethod,
    pub idw_power: f64,
    pub idw_neighbors: usize,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            method: InterpMethod::BicubicGrid,
            idw_power: 2.0,
            idw_neighbors: 8,
        }
    }
}

impl InterpConfig {
    fn validate(&self) -> Result<()> {
        if self.idw_neighbors == 0 {
            return Err(Error::config("idw-neighbors", "must be at least 1"));
        }
        if !(self.idw_power > 0.0) || !self.idw_power.is_finite() {
            return Err(Error::config("idw-power", format!("must be positive, got {}", self.idw_power)));
        }
        Ok(())
    }
}

/// Per-frame fill recipe: each unobserved pixel is a weighted sum of observed
/// pixels of the same frame.
#[derive(Debug, Clone)]
struct FillPlan {
    /// `(target pixel, [(source pixel, weight)])`.
    targets: Vec<(usize, Vec<(usize, f64)>)>,
}

impl FillPlan {
    fn apply(&self, frame: &mut [f64]) {
        for (target, sources) in &self.targets {
            frame[*target] = sources.iter().map(|&(s, w)| w * frame[s]).sum();
        }
    }
}

/// Fills every unobserved voxel of `y` (values there are ignored).
pub fn interpolate(y: &Datacube, mask: &Mask, cfg: &InterpConfig) -> Result<Datacube> {
    cfg.validate()?;
    if !mask.matches(y) {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} vs cube {:?}",
            mask.dims(),
            y.dims()
        )));
    }
    let (nx, ny, nb) = y.dims();
    let plane = nx * ny;
    for t in 0..nb {
        if !mask.frame(t).iter().any(|&o| o) {
            return Err(Error::EmptyFrame { frame: t });
        }
    }

    let shared = mask.shared_pixels().map(|pixels| plan_for(nx, ny, pixels, cfg));
    let mut values = y.values().to_vec();
    values
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(t, frame)| match &shared {
            Some(plan) => plan.apply(frame),
            None => plan_for(nx, ny, mask.frame(t), cfg).apply(frame),
        });
    Datacube::new(nx, ny, nb, values)
}

fn plan_for(nx: usize, ny: usize, observed: &[bool], cfg: &InterpConfig) -> FillPlan {
    if cfg.method == InterpMethod::BicubicGrid {
        if let Some(lattice) = Lattice::detect(nx, ny, observed) {
            return bicubic_plan(nx, ny, observed, &lattice);
        }
        log::debug!("mask is not a decimation lattice; using inverse-distance weighting");
    }
    idw_plan(nx, ny, observed, cfg.idw_power, cfg.idw_neighbors)
}

/// Observed pixels `{(ox + i sx, oy + j sy)}` for `i < cols`, `j < rows`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Lattice {
    origin: (usize, usize),
    step: (usize, usize),
    count: (usize, usize),
}

impl Lattice {
    fn detect(nx: usize, ny: usize, observed: &[bool]) -> Option<Self> {
        let mut xs = vec![false; nx];
        let mut ys = vec![false; ny];
        let mut total = 0;
        for (p, _) in observed.iter().enumerate().filter(|(_, &o)| o) {
            xs[p % nx] = true;
            ys[p / nx] = true;
            total += 1;
        }
        let axis = |used: &[bool]| -> Option<(usize, usize, usize)> {
            let idx: Vec<usize> = used.iter().enumerate().filter(|(_, &u)| u).map(|(i, _)| i).collect();
            if idx.len() < 2 {
                return None;
            }
            let step = idx[1] - idx[0];
            idx.windows(2).all(|w| w[1] - w[0] == step).then_some((idx[0], step, idx.len()))
        };
        let (ox, sx, cx) = axis(&xs)?;
        let (oy, sy, cy) = axis(&ys)?;
        // Every lattice node must be observed and nothing else.
        (total == cx * cy).then_some(Self {
            origin: (ox, oy),
            step: (sx, sy),
            count: (cx, cy),
        })
    }
}

/// Catmull-Rom weights for taps at offsets -1, 0, 1, 2.
fn catmull_rom(f: f64) -> [f64; 4] {
    let f2 = f * f;
    let f3 = f2 * f;
    [
        0.5 * (-f3 + 2.0 * f2 - f),
        0.5 * (3.0 * f3 - 5.0 * f2 + 2.0),
        0.5 * (-3.0 * f3 + 4.0 * f2 + f),
        0.5 * (f3 - f2),
    ]
}

/// Lattice taps and weights along one axis for pixel coordinate `p`, with the
/// position clamped to the lattice hull and tap indices clamped to the edge.
fn axis_taps(p: usize, origin: usize, step: usize, count: usize) -> [(usize, f64); 4] {
    let u = ((p as f64 - origin as f64) / step as f64).clamp(0.0, (count - 1) as f64);
    let base = u.floor();
    let w = catmull_rom(u - base);
    let base = base as isize;
    let mut taps = [(0usize, 0.0); 4];
    for (k, tap) in taps.iter_mut().enumerate() {
        let idx = (base + k as isize - 1).clamp(0, count as isize - 1) as usize;
        *tap = (idx, w[k]);
    }
    taps
}

fn bicubic_plan(nx: usize, ny: usize, observed: &[bool], lattice: &Lattice) -> FillPlan {
    let Lattice { origin, step, count } = *lattice;
    let mut targets = Vec::new();
    for y in 0..ny {
        let ty = axis_taps(y, origin.1, step.1, count.1);
        for x in 0..nx {
            let p = y * nx + x;
            if observed[p] {
                continue;
            }
            let tx = axis_taps(x, origin.0, step.0, count.0);
            let mut sources: Vec<(usize, f64)> = Vec::with_capacity(16);
            for &(jy, wy) in &ty {
                for &(ix, wx) in &tx {
                    let src = (origin.1 + jy * step.1) * nx + origin.0 + ix * step.0;
                    let w = wx * wy;
                    match sources.iter_mut().find(|(s, _)| *s == src) {
                        Some(entry) => entry.1 += w,
                        None => sources.push((src, w)),
                    }
                }
            }
            sources.retain(|&(_, w)| w != 0.0);
            targets.push((p, sources));
        }
    }
    FillPlan { targets }
}

fn idw_plan(nx: usize, ny: usize, observed: &[bool], power: f64, neighbors: usize) -> FillPlan {
    let known: Vec<(usize, f64, f64)> = observed
        .iter()
        .enumerate()
        .filter(|(_, &o)| o)
        .map(|(p, _)| (p, (p % nx) as f64, (p / nx) as f64))
        .collect();
    let k = neighbors.min(known.len());
    let targets = (0..nx * ny)
        .into_par_iter()
        .filter(|&p| !observed[p])
        .map(|p| {
            let (x, y) = ((p % nx) as f64, (p / nx) as f64);
            let mut dists: Vec<(f64, usize)> = known
                .iter()
                .map(|&(s, sx, sy)| ((sx - x).powi(2) + (sy - y).powi(2), s))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dists.len() {
                dists.select_nth_unstable_by(k - 1, cmp);
                dists.truncate(k);
            }
            dists.sort_by(cmp);
            let weights: Vec<f64> = dists.iter().map(|&(d2, _)| d2.powf(-power / 2.0)).collect();
            let total: f64 = weights.iter().sum();
            let sources = dists.iter().zip(&weights).map(|(&(_, s), &w)| (s, w / total)).collect();
            (p, sources)
        })
        .collect();
    FillPlan { targets }
}
