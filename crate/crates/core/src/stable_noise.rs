//! Isotropic alpha-stable noise and the fractional heat semigroup.
//!
//! The characteristic exponent is normalized to `|xi|^alpha`, so an
//! increment over `dt` satisfies `E exp(i xi . dL) = exp(-dt |xi|^alpha)`.
//! For `alpha < 2` increments are drawn by subordination, `dL = B(2 S)`
//! with `S` an `alpha/2`-stable subordinator increment; for `alpha = 2`
//! they are Gaussian with covariance `2 dt I` (generator `Δ`).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Spectral};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableNoiseConfig {
    pub alpha: f64,
    pub dim: usize,
}

impl StableNoiseConfig {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::invalid(format!("alpha must lie in (1, 2], got {alpha}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        Ok(Self { alpha, dim })
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }
}

/// Positive stable variable with Laplace transform `exp(-dt lambda^a)`,
/// via the Chambers–Mallows–Stuck (Kanter) representation
/// `S = sin(aU) / sin(U)^{1/a} * (sin((1-a)U) / W)^{(1-a)/a}`, scaled by `dt^{1/a}`.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(alpha_half: f64, dt: f64, rng: &mut R) -> Result<f64> {
    if !(alpha_half > 0.0 && alpha_half < 1.0) {
        return Err(Error::invalid(format!("subordinator index must lie in (0, 1), got {alpha_half}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(dt.powf(1.0 / alpha_half) * unit_subordinator(alpha_half, rng))
}

#[inline]
fn unit_subordinator<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * Distribution::<f64>::sample(&Open01, rng);
    let w: f64 = Exp1.sample(rng);
    let s = (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
    // W is a.s. positive, but guard the measure-zero corner
    if s.is_finite() && s > 0.0 {
        s
    } else {
        f64::MIN_POSITIVE
    }
}

/// Fills `out` (length `cfg.dim`) with one increment of the noise over `dt`.
pub fn sample_stable_increment_into<R: Rng + ?Sized>(
    cfg: &StableNoiseConfig,
    dt: f64,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    debug_assert_eq!(out.len(), cfg.dim);
    let variance = if cfg.is_gaussian() {
        2.0 * dt
    } else {
        let a = 0.5 * cfg.alpha;
        2.0 * dt.powf(1.0 / a) * unit_subordinator(a, rng)
    };
    let sd = variance.sqrt();
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = sd * z;
    }
    Ok(())
}

pub fn sample_stable_increment<R: Rng + ?Sized>(cfg: &StableNoiseConfig, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cfg.dim];
    sample_stable_increment_into(cfg, dt, rng, &mut out)?;
    Ok(out)
}

/// `(1/n) sum_j exp(i xi . x_j)` over `d`-vectors stored flat in `samples`.
pub fn empirical_char_function(samples: &[f64], dim: usize, xi: &[f64]) -> Result<Complex64> {
    if dim == 0 || xi.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: xi.len() });
    }
    if samples.is_empty() || samples.len() % dim != 0 {
        return Err(Error::invalid("empirical characteristic function needs a nonempty sample of d-vectors"));
    }
    let n = samples.len() / dim;
    let (mut re, mut im) = (0.0, 0.0);
    for x in samples.chunks_exact(dim) {
        let phase: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
        let (s, c) = phase.sin_cos();
        re += c;
        im += s;
    }
    Ok(Complex64::new(re / n as f64, im / n as f64))
}

/// Periodized stable heat kernel `sum_k q_alpha(t, x + kL)` at the grid nodes,
/// by inverse DFT of `exp(-t |xi|^alpha)`. The kernel is centred at the origin
/// node; negative coordinates live at the top of each axis.
pub fn heat_kernel_grid(cfg: &StableNoiseConfig, t: f64, grid: &GridSpec) -> Result<GridField> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("heat kernel time must be positive, got {t}")));
    }
    check_grid_dim(cfg, grid)?;
    grid.check_resolved(cfg.alpha, t)?;
    let spectral = Spectral::new(*grid);
    let coeffs = spectral
        .stable_multiplier(cfg.alpha, t)
        .into_iter()
        .map(|m| Complex64::new(m, 0.0))
        .collect();
    let scale = 1.0 / grid.cell_volume();
    let values = spectral.inverse(coeffs).into_iter().map(|v| v * scale).collect();
    GridField::new(*grid, values)
}

/// `P_t f = q_alpha(t) * f` by spectral multiplication; `t = 0` returns `f` unchanged.
pub fn semigroup_apply(cfg: &StableNoiseConfig, t: f64, f: &GridField) -> Result<GridField> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("semigroup time must be >= 0, got {t}")));
    }
    check_grid_dim(cfg, f.spec())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let spectral = Spectral::new(*f.spec());
    Ok(semigroup_apply_with(&spectral, cfg.alpha, t, f))
}

pub(crate) fn semigroup_apply_with(spectral: &Spectral, alpha: f64, t: f64, f: &GridField) -> GridField {
    let mult = spectral.stable_multiplier(alpha, t);
    let coeffs = spectral
        .forward(f.values())
        .into_iter()
        .zip(&mult)
        .map(|(c, m)| c * m)
        .collect();
    GridField::new(*spectral.spec(), spectral.inverse(coeffs)).expect("semigroup preserves finiteness")
}

fn check_grid_dim(cfg: &StableNoiseConfig, grid: &GridSpec) -> Result<()> {
    if grid.dim != cfg.dim {
        return Err(Error::invalid(format!(
            "grid dimension {} does not match noise dimension {}",
            grid.dim, cfg.dim
        )));
    }
    Ok(())
}
