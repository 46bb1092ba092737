//! Error functionals and empirical rate fits.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpe_solver::interpolate_field;
use crate::grid::{wrap, GridField};
use crate::mollifier::{kde_with_cells, CellList, MollifierKernel, ParticleEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    DensitySup,
    Tv,
    Pathwise,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::DensitySup => "density_sup",
            ErrorKind::Tv => "tv",
            ErrorKind::Pathwise => "pathwise",
        })
    }
}

/// One row of the error table. `rep` is `None` for quantities pooled over
/// replications (total variation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub scenario: String,
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub rep: Option<usize>,
    pub t: f64,
    pub kind: ErrorKind,
    pub value: f64,
    pub seed: u64,
}

/// Predicted exponent `-min(theta beta, 1/2 - theta d)`.
pub fn theoretical_slope(theta: f64, beta: f64, dim: usize) -> f64 {
    -(theta * beta).min(0.5 - theta * dim as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub theoretical_slope: f64,
}

/// Least squares of `log(error)` against `log(N)`.
pub fn fit_rate(ns: &[usize], errors: &[f64], theoretical_slope: f64) -> Result<RateFit> {
    if ns.len() != errors.len() {
        return Err(Error::LengthMismatch { expected: ns.len(), got: errors.len() });
    }
    let mut distinct = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid("rate fit needs at least three distinct N"));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("rate fit needs positive finite errors, got {e}")));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared, n_points: xs.len(), theoretical_slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmNorm {
    pub value: f64,
    pub bootstrap_se: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

fn power_mean(values: impl Iterator<Item = f64>, m: u32, count: usize) -> f64 {
    let s: f64 = values.map(|v| v.powi(m as i32)).sum();
    (s / count as f64).powf(1.0 / m as f64)
}

/// `(mean of v^m)^{1/m}` with a bootstrap standard error.
pub fn lm_omega_norm<R: Rng + ?Sized>(values: &[f64], m: u32, rng: &mut R) -> Result<LmNorm> {
    if values.is_empty() {
        return Err(Error::invalid("moment norm needs at least one replication"));
    }
    if m == 0 {
        return Err(Error::invalid("moment order must be >= 1"));
    }
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("moment norm needs nonnegative finite values"));
    }
    let n = values.len();
    let value = power_mean(values.iter().copied(), m, n);
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| power_mean((0..n).map(|_| values[rng.random_range(0..n)]), m, n))
        .collect();
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (boots.len() - 1) as f64;
    Ok(LmNorm { value, bootstrap_se: var.sqrt() })
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sample median with a bootstrap standard error.
pub fn median_with_se<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Result<LmNorm> {
    if values.is_empty() {
        return Err(Error::invalid("median needs at least one replication"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("median needs finite values"));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let value = median_of(&sorted);
    let mut buf = vec![0.0; n];
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            buf.iter_mut().for_each(|b| *b = values[rng.random_range(0..n)]);
            buf.sort_by(f64::total_cmp);
            median_of(&buf)
        })
        .collect();
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (boots.len() - 1) as f64;
    Ok(LmNorm { value, bootstrap_se: var.sqrt() })
}

/// `max |rho_ref - rho^N|` over the grid nodes and the particle positions.
pub fn density_sup_error(rho_ref: &GridField, ensemble: &ParticleEnsemble, kernel: &MollifierKernel) -> Result<f64> {
    let spec = rho_ref.spec();
    if spec.dim != ensemble.dim() || spec.domain_length != ensemble.domain_length() {
        return Err(Error::invalid("reference grid and ensemble live on different domains"));
    }
    if kernel.n_particles() != ensemble.len() || kernel.dim() != ensemble.dim() {
        return Err(Error::invalid("kernel is not scaled for this ensemble"));
    }
    let dim = spec.dim;
    let mut queries = Vec::with_capacity((spec.len() + ensemble.len()) * dim);
    for i in 0..spec.len() {
        queries.extend_from_slice(&spec.node(i)[..dim]);
    }
    queries.extend_from_slice(ensemble.positions());
    let cells = CellList::build(ensemble, kernel.support_radius())?;
    let kde = kde_with_cells(&cells, kernel, ensemble.len(), &queries);
    let grid_part = rho_ref
        .values()
        .iter()
        .zip(&kde)
        .fold(0.0f64, |m, (r, k)| m.max((r - k).abs()));
    let particle_part = queries[spec.len() * dim..]
        .chunks_exact(dim)
        .zip(&kde[spec.len()..])
        .fold(0.0f64, |m, (x, k)| m.max((interpolate_field(rho_ref, x) - k).abs()));
    Ok(grid_part.max(particle_part))
}

/// Histogram of `samples` with `bins` cells per axis, as probabilities.
fn histogram(samples: &[f64], dim: usize, l: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins.pow(dim as u32)];
    let w = l / bins as f64;
    let n = samples.len() / dim;
    for x in samples.chunks_exact(dim) {
        let idx = x.iter().fold(0, |acc, &c| acc * bins + ((wrap(c, l) / w) as usize).min(bins - 1));
        h[idx] += 1.0;
    }
    h.iter_mut().for_each(|v| *v /= n as f64);
    h
}

/// Reference bin probabilities from three-point Gauss–Legendre on the cubic interpolant.
fn reference_bins(rho: &GridField, bins: usize) -> Vec<f64> {
    let spec = rho.spec();
    let dim = spec.dim;
    let w = spec.domain_length / bins as f64;
    let g = (0.6f64).sqrt();
    let nodes = [-g, 0.0, g];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut out = vec![0.0; bins.pow(dim as u32)];
    for (flat, o) in out.iter_mut().enumerate() {
        let (bi, bj) = if dim == 1 { (flat, 0) } else { (flat / bins, flat % bins) };
        let mut s = 0.0;
        for (a, wa) in nodes.iter().zip(&weights) {
            let x = (bi as f64 + 0.5 + 0.5 * a) * w;
            if dim == 1 {
                s += wa * interpolate_field(rho, &[x]);
            } else {
                for (b, wb) in nodes.iter().zip(&weights) {
                    let y = (bj as f64 + 0.5 + 0.5 * b) * w;
                    s += wa * wb * interpolate_field(rho, &[x, y]);
                }
            }
        }
        *o = s.max(0.0);
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub const MIN_TV_SAMPLES: usize = 1000;
pub const TV_BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    /// Binned estimate at bin width `L / n_grid`.
    pub value: f64,
    pub value_half_width: f64,
    pub value_double_width: f64,
    /// Largest deviation of the half/double-width estimates from `value`.
    pub sensitivity: f64,
    /// Root-mean-square TV between bootstrap histograms and the sample
    /// histogram: the estimator's sampling error.
    pub bootstrap_error: f64,
    pub n_samples: usize,
}

/// Total variation between the law of `samples` and `rho_ref`, as half the
/// L1 distance of binned probabilities.
pub fn tv_error<R: Rng + ?Sized>(samples: &[f64], dim: usize, rho_ref: &GridField, rng: &mut R) -> Result<TvEstimate> {
    let spec = rho_ref.spec();
    if dim != spec.dim || samples.len() % dim != 0 {
        return Err(Error::invalid("samples do not match the reference dimension"));
    }
    let n = samples.len() / dim;
    if n < MIN_TV_SAMPLES {
        return Err(Error::invalid(format!("total variation needs >= {MIN_TV_SAMPLES} samples, got {n}")));
    }
    let l = spec.domain_length;
    let base = spec.points_per_axis;
    let estimate = |bins: usize| half_l1(&histogram(samples, dim, l, bins), &reference_bins(rho_ref, bins));
    let value = estimate(base);
    let value_half_width = estimate(2 * base);
    let value_double_width = estimate((base / 2).max(1));
    let sensitivity = (value_half_width - value).abs().max((value_double_width - value).abs());

    let hist = histogram(samples, dim, l, base);
    let mut resample = vec![0.0; samples.len()];
    let mut sq = 0.0;
    for _ in 0..TV_BOOTSTRAP_RESAMPLES {
        for chunk in resample.chunks_exact_mut(dim) {
            let j = rng.random_range(0..n);
            chunk.copy_from_slice(&samples[j * dim..(j + 1) * dim]);
        }
        sq += half_l1(&histogram(&resample, dim, l, base), &hist).powi(2);
    }
    let bootstrap_error = (sq / TV_BOOTSTRAP_RESAMPLES as f64).sqrt();
    Ok(TvEstimate { value, value_half_width, value_double_width, sensitivity, bootstrap_error, n_samples: n })
}
