//! Compactly supported mollifiers and the mollified empirical density.
//!
//! `phi(x) = c exp(-1 / (1 - |x/R|^2))` on the ball of radius `R`, and
//! `phi_N(x) = N^{theta d} phi(N^theta x)`. The density of an ensemble at
//! `x` is `(1/N) sum_i phi_N(x ⊖ X_i)` with the minimal-image difference on
//! the torus `[0, L)^d`, evaluated through a uniform cell list.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap;
use crate::quad::adaptive_simpson;

/// Surface area of the unit sphere in `R^d` (2 for d = 1).
pub fn unit_sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    let (mut area, mut d) = if dim % 2 == 1 { (2.0, 1) } else { (2.0 * PI, 2) };
    while d < dim {
        area *= 2.0 * PI / d as f64;
        d += 2;
    }
    area
}

#[inline]
fn bump_profile(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierKernel {
    base_radius: f64,
    theta: f64,
    n_particles: usize,
    dim: usize,
    normalization_constant: f64,
    /// `N^theta`
    scale: f64,
    /// `N^{theta d} c`
    amplitude: f64,
}

impl MollifierKernel {
    /// The unscaled bump of radius `radius` in `dim` dimensions (`N = 1`).
    pub fn bump(radius: f64, dim: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("kernel radius must be positive, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be >= 1"));
        }
        let radial = adaptive_simpson(
            |r| bump_profile(r * r) * r.powi(dim as i32 - 1),
            0.0,
            1.0,
            1e-16,
        );
        let c = 1.0 / (radius.powi(dim as i32) * unit_sphere_area(dim) * radial);
        Ok(Self {
            base_radius: radius,
            theta: 0.0,
            n_particles: 1,
            dim,
            normalization_constant: c,
            scale: 1.0,
            amplitude: c,
        })
    }

    /// `phi_N` for `N` particles with bandwidth exponent `theta in (0, 1/(2d))`.
    pub fn scaled(&self, n_particles: usize, theta: f64) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::invalid("particle count must be >= 1"));
        }
        let upper = 1.0 / (2.0 * self.dim as f64);
        if !(theta > 0.0 && theta < upper) {
            return Err(Error::invalid(format!("theta must lie in (0, {upper}), got {theta}")));
        }
        let scale = (n_particles as f64).powf(theta);
        Ok(Self {
            theta,
            n_particles,
            scale,
            amplitude: scale.powi(self.dim as i32) * self.normalization_constant,
            ..*self
        })
    }

    pub fn base_radius(&self) -> f64 {
        self.base_radius
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalization_constant(&self) -> f64 {
        self.normalization_constant
    }

    /// `r_N = R N^{-theta}`.
    pub fn support_radius(&self) -> f64 {
        self.base_radius / self.scale
    }

    /// `phi_N(y)`.
    pub fn eval(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        self.eval_r2(r2)
    }

    /// `phi_N` at squared distance `r2`.
    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        self.amplitude * self.profile_r2(r2)
    }

    /// Unnormalized profile `exp(-1/(1 - s^2))` at squared distance `r2`.
    #[inline]
    fn profile_r2(&self, r2: f64) -> f64 {
        let s = self.scale / self.base_radius;
        bump_profile(r2 * s * s)
    }
}

/// Particle positions on the torus `[0, L)^d`, stored row-major (`N x d`).
/// The ensemble is the empirical measure `mu^N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    dim: usize,
    domain_length: f64,
    time: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, dim: usize, domain_length: f64, time: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::invalid(format!("domain length must be positive, got {domain_length}")));
        }
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "positions must hold N >= 1 rows of {dim} coordinates, got {} values",
                positions.len()
            )));
        }
        if let Some(x) = positions.iter().find(|x| !(**x >= 0.0 && **x < domain_length)) {
            return Err(Error::invalid(format!("coordinate {x} outside [0, {domain_length})")));
        }
        Ok(Self { positions, dim, domain_length, time })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }
}

const MAX_TOTAL_CELLS: usize = 1 << 22;

/// Largest dimension handled by the neighbour search.
pub const MAX_DIM: usize = 8;

/// Uniform binning of an ensemble with cell size `>= r_N`.
///
/// Within each cell particles are ordered by position, so every KDE sum runs
/// over a sequence that depends only on the set of positions.
#[derive(Debug, Clone)]
pub struct CellList {
    dim: usize,
    domain_length: f64,
    cells_per_axis: usize,
    cell_size: f64,
    cutoff: f64,
    cell_start: Vec<usize>,
    sorted: Vec<f64>,
    /// Original index of each sorted particle.
    order: Vec<usize>,
}

impl CellList {
    pub fn build(ensemble: &ParticleEnsemble, cutoff: f64) -> Result<Self> {
        let dim = ensemble.dim();
        let l = ensemble.domain_length();
        if dim > MAX_DIM {
            return Err(Error::invalid(format!("cell lists support d <= {MAX_DIM}, got {dim}")));
        }
        if !(cutoff > 0.0 && 2.0 * cutoff <= l) {
            return Err(Error::invalid(format!(
                "kernel support radius {cutoff} must be positive and at most half the domain {l}"
            )));
        }
        let axis_cap = ((MAX_TOTAL_CELLS as f64).powf(1.0 / dim as f64).floor() as usize).max(1);
        let cells_per_axis = ((l / cutoff).floor() as usize).clamp(1, axis_cap);
        let cell_size = l / cells_per_axis as f64;
        let n_cells = cells_per_axis.pow(dim as u32);

        let cell_of = |x: &[f64]| -> usize {
            x.iter().fold(0, |acc, &c| {
                let k = ((c / cell_size) as usize).min(cells_per_axis - 1);
                acc * cells_per_axis + k
            })
        };
        let n = ensemble.len();
        let mut keyed: Vec<(usize, usize)> = (0..n).map(|i| (cell_of(ensemble.particle(i)), i)).collect();
        keyed.sort_unstable_by(|a, b| {
            a.0.cmp(&b.0).then_with(|| {
                let (pa, pb) = (ensemble.particle(a.1), ensemble.particle(b.1));
                pa.iter()
                    .zip(pb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let mut cell_start = vec![0usize; n_cells + 1];
        for &(c, _) in &keyed {
            cell_start[c + 1] += 1;
        }
        for c in 0..n_cells {
            cell_start[c + 1] += cell_start[c];
        }
        let mut sorted = Vec::with_capacity(n * dim);
        for &(_, i) in &keyed {
            sorted.extend_from_slice(ensemble.particle(i));
        }
        let order = keyed.iter().map(|&(_, i)| i).collect();
        Ok(Self { dim, domain_length: l, cells_per_axis, cell_size, cutoff, cell_start, sorted, order })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// `sum_i f(|x ⊖ X_i|^2)` over particles within the cutoff of `x`.
    pub fn sum_within<F: Fn(f64) -> f64>(&self, x: &[f64], f: F) -> f64 {
        let dim = self.dim;
        let l = self.domain_length;
        let half = 0.5 * l;
        let cut2 = self.cutoff * self.cutoff;
        let cpa = self.cells_per_axis;

        // distinct neighbour cells per axis, in a fixed order
        let mut axis_cells = [[0usize; 3]; MAX_DIM];
        let mut axis_counts = [0usize; MAX_DIM];
        let mut query = [0.0f64; MAX_DIM];
        for a in 0..dim {
            let q = wrap(x[a], l);
            query[a] = q;
            let c = ((q / self.cell_size) as usize).min(cpa - 1);
            let candidates = [(c + cpa - 1) % cpa, c, (c + 1) % cpa];
            let mut k = 0;
            for cand in candidates {
                if !axis_cells[a][..k].contains(&cand) {
                    axis_cells[a][k] = cand;
                    k += 1;
                }
            }
            axis_counts[a] = k;
        }

        let mut total = 0.0;
        let mut odometer = [0usize; MAX_DIM];
        loop {
            let cell = (0..dim).fold(0, |acc, a| acc * cpa + axis_cells[a][odometer[a]]);
            let block = &self.sorted[self.cell_start[cell] * dim..self.cell_start[cell + 1] * dim];
            for p in block.chunks_exact(dim) {
                let mut r2 = 0.0;
                for a in 0..dim {
                    let mut d = query[a] - p[a];
                    if d > half {
                        d -= l;
                    } else if d < -half {
                        d += l;
                    }
                    r2 += d * d;
                }
                if r2 < cut2 {
                    total += f(r2);
                }
            }
            // advance the odometer, last axis fastest
            let mut a = dim;
            loop {
                if a == 0 {
                    return total;
                }
                a -= 1;
                odometer[a] += 1;
                if odometer[a] < axis_counts[a] {
                    break;
                }
                odometer[a] = 0;
            }
        }
    }
}

fn check_compatible(ensemble: &ParticleEnsemble, kernel: &MollifierKernel) -> Result<()> {
    if kernel.n_particles() != ensemble.len() {
        return Err(Error::invalid(format!(
            "kernel scaled for N = {} but ensemble has {} particles",
            kernel.n_particles(),
            ensemble.len()
        )));
    }
    if kernel.dim() != ensemble.dim() {
        return Err(Error::invalid(format!(
            "kernel dimension {} does not match ensemble dimension {}",
            kernel.dim(),
            ensemble.dim()
        )));
    }
    Ok(())
}

/// Mollified empirical density `(phi_N * mu^N)(x)` at each query (flat `Q x d`).
pub fn kde_at_points(ensemble: &ParticleEnsemble, kernel: &MollifierKernel, queries: &[f64]) -> Result<Vec<f64>> {
    check_compatible(ensemble, kernel)?;
    let dim = ensemble.dim();
    if queries.len() % dim != 0 {
        return Err(Error::invalid("query array length is not a multiple of d"));
    }
    let cells = CellList::build(ensemble, kernel.support_radius())?;
    Ok(kde_with_cells(&cells, kernel, ensemble.len(), queries))
}

/// Density at the particles themselves; the self term `phi_N(0)/N` is included.
pub fn kde_at_particles(ensemble: &ParticleEnsemble, kernel: &MollifierKernel) -> Result<Vec<f64>> {
    check_compatible(ensemble, kernel)?;
    let cells = CellList::build(ensemble, kernel.support_radius())?;
    Ok(kde_self(&cells, kernel))
}

/// Pairs handled per work unit of the 1D pair sweep. Fixed so that the
/// summation order does not depend on the thread count.
const PAIR_CHUNK: usize = 2048;

/// KDE at the binned particles, in their original order.
pub(crate) fn kde_self(cells: &CellList, kernel: &MollifierKernel) -> Vec<f64> {
    if cells.dim != 1 {
        let sorted = kde_with_cells(cells, kernel, cells.order.len(), &cells.sorted);
        let mut out = vec![0.0; sorted.len()];
        for (v, &orig) in sorted.iter().zip(&cells.order) {
            out[orig] = *v;
        }
        return out;
    }
    // In 1D the binned order is the global position order, so the partners
    // of particle i within the cutoff are the next few particles, cyclically.
    // Each pair is evaluated once and credited to both ends.
    let p = &cells.sorted;
    let n = p.len();
    let l = cells.domain_length;
    let cut = cells.cutoff;
    let partials: Vec<(usize, Vec<f64>)> = (0..n.div_ceil(PAIR_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * PAIR_CHUNK;
            let end = (start + PAIR_CHUNK).min(n);
            let mut acc = vec![0.0; end - start];
            for i in start..end {
                let mut k = i + 1;
                for _ in 1..n {
                    if k == n {
                        k = 0;
                    }
                    let d = if k > i { p[k] - p[i] } else { p[k] + l - p[i] };
                    if d >= cut {
                        break;
                    }
                    let w = kernel.profile_r2(d * d);
                    acc[i - start] += w;
                    let off = (k + n - start) % n;
                    if off >= acc.len() {
                        acc.resize(off + 1, 0.0);
                    }
                    acc[off] += w;
                    k += 1;
                }
            }
            (start, acc)
        })
        .collect();
    let mut total = vec![kernel.profile_r2(0.0); n];
    for (start, acc) in &partials {
        for (off, v) in acc.iter().enumerate() {
            total[(start + off) % n] += v;
        }
    }
    let norm = kernel.amplitude / n as f64;
    let mut out = vec![0.0; n];
    for (s, &orig) in cells.order.iter().enumerate() {
        out[orig] = norm * total[s];
    }
    out
}

pub(crate) fn kde_with_cells(cells: &CellList, kernel: &MollifierKernel, n: usize, queries: &[f64]) -> Vec<f64> {
    let dim = cells.dim;
    let norm = kernel.amplitude / n as f64;
    queries
        .par_chunks(dim)
        .with_min_len(64)
        .map(|x| norm * cells.sum_within(x, |r2| kernel.profile_r2(r2)))
        .collect()
}
