//! Periodic grids and the spectral machinery shared by the heat kernel,
//! the semigroup and the Fokker–Planck solver.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decay required of the stable multiplier at the Nyquist frequency.
pub const NYQUIST_DECAY: f64 = 1e-14;

/// Tolerated spectral undershoot for density fields.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// A periodic grid `[0, L)^d` with `n` points per axis. Only `d = 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain_length: f64,
    pub points_per_axis: usize,
    pub dim: usize,
}

impl GridSpec {
    pub fn new(domain_length: f64, points_per_axis: usize, dim: usize) -> Result<Self> {
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::invalid(format!("domain length must be positive, got {domain_length}")));
        }
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(Error::invalid(format!(
                "points per axis must be a power of two >= 4, got {points_per_axis}"
            )));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!("grids support d = 1 or 2, got {dim}")));
        }
        Ok(Self { domain_length, points_per_axis, dim })
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.domain_length / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Per-axis integer indices of a flat (row-major) index.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        let n = self.points_per_axis;
        match self.dim {
            1 => [flat, 0],
            _ => [flat / n, flat % n],
        }
    }

    pub fn node(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        let [i, j] = self.multi_index(flat);
        [i as f64 * h, j as f64 * h]
    }

    /// Angular wavenumber `2 pi k / L` of FFT bin `j` (Nyquist mapped to `-n/2`).
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.points_per_axis as i64;
        let j = j as i64;
        let k = if j < n / 2 { j } else { j - n };
        2.0 * PI * k as f64 / self.domain_length
    }

    pub fn nyquist_xi(&self) -> f64 {
        PI * self.points_per_axis as f64 / self.domain_length
    }

    /// Value of `exp(-t |xi|^alpha)` at the per-axis Nyquist frequency.
    pub fn nyquist_decay(&self, alpha: f64, t: f64) -> f64 {
        (-t * self.nyquist_xi().powf(alpha)).exp()
    }

    pub fn check_resolved(&self, alpha: f64, t: f64) -> Result<()> {
        let decay = self.nyquist_decay(alpha, t);
        if decay < NYQUIST_DECAY {
            Ok(())
        } else {
            Err(Error::UnderResolved { decay })
        }
    }

    /// Wraps a coordinate into `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        wrap(x, self.domain_length)
    }
}

/// Wraps `x` into `[0, l)`.
#[inline]
pub fn wrap(x: f64, l: f64) -> f64 {
    let r = x.rem_euclid(l);
    // rem_euclid can round up to exactly l for tiny negative x
    if r >= l {
        0.0
    } else {
        r
    }
}

/// Minimal-image difference `a ⊖ b` on a circle of length `l`.
#[inline]
pub fn torus_diff(a: f64, b: f64, l: f64) -> f64 {
    let d = a - b;
    d - l * (d / l).round()
}

/// Real values on a [`GridSpec`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("grid value {i} is not finite")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.len()] }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|i| {
                let x = spec.node(i);
                f(&x[..spec.dim])
            })
            .collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Periodic trapezoid integral.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_norm();
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.spec.cell_volume()).powf(1.0 / p)
    }

    /// Checks the density invariants: finite, `>= -tol_neg`, mass within `tol_mass` of 1.
    pub fn check_density(&self, tol_neg: f64, tol_mass: f64) -> Result<()> {
        let min = self.min();
        if min < -tol_neg {
            return Err(Error::invalid(format!("density has negative value {min:e}")));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > tol_mass {
            return Err(Error::invalid(format!("density mass {mass} differs from 1")));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// FFT plans and wavenumber tables for one grid.
#[derive(Clone)]
pub struct Spectral {
    spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    xi_sq: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("spec", &self.spec).finish()
    }
}

impl Spectral {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = spec.points_per_axis;
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let xi_sq = (0..spec.len())
            .map(|flat| {
                let [i, j] = spec.multi_index(flat);
                match spec.dim {
                    1 => spec.wavenumber(i).powi(2),
                    _ => spec.wavenumber(i).powi(2) + spec.wavenumber(j).powi(2),
                }
            })
            .collect();
        Self { spec, forward, inverse, xi_sq }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// `exp(-t |xi|^alpha)` per spectral bin.
    pub fn stable_multiplier(&self, alpha: f64, t: f64) -> Vec<f64> {
        self.xi_sq
            .iter()
            .map(|&k2| (-t * k2.powf(0.5 * alpha)).exp())
            .collect()
    }

    /// `i xi_axis` per bin, with the Nyquist bin zeroed.
    pub fn derivative_factor(&self, axis: usize) -> Vec<Complex64> {
        let n = self.spec.points_per_axis;
        (0..self.spec.len())
            .map(|flat| {
                let j = self.spec.multi_index(flat)[axis];
                if j == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, self.spec.wavenumber(j))
                }
            })
            .collect()
    }

    /// 2/3-rule mask: keeps bins with `|k| < n/3` on every axis.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let n = self.spec.points_per_axis as i64;
        let keep = |j: usize| {
            let j = j as i64;
            let k = if j < n / 2 { j } else { j - n };
            3 * k.abs() < n
        };
        (0..self.spec.len())
            .map(|flat| {
                let [i, j] = self.spec.multi_index(flat);
                keep(i) && (self.spec.dim == 1 || keep(j))
            })
            .collect()
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Inverse transform, normalized, returning the real part.
    pub fn inverse(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut coeffs, &self.inverse);
        let scale = 1.0 / self.spec.len() as f64;
        coeffs.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        plan.process(buf);
        if self.spec.dim == 2 {
            let n = self.spec.points_per_axis;
            transpose(buf, n);
            plan.process(buf);
            transpose(buf, n);
        }
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(1.0, 100, 1).is_err());
        assert!(GridSpec::new(0.0, 64, 1).is_err());
        assert!(GridSpec::new(1.0, 64, 3).is_err());
        assert!(GridSpec::new(1.0, 64, 2).is_ok());
    }

    #[test]
    fn wrap_and_minimal_image() {
        assert_eq!(wrap(-0.25, 1.0), 0.75);
        assert_eq!(wrap(1.0, 1.0), 0.0);
        assert!(wrap(-1e-18, 1.0) < 1.0);
        assert!((torus_diff(0.0, 9.9, 10.0) - 0.1).abs() < 1e-12);
        assert!((torus_diff(9.9, 0.0, 10.0) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn fft_round_trip_2d() {
        let spec = GridSpec::new(2.0, 16, 2).unwrap();
        let sp = Spectral::new(spec);
        let f = GridField::from_fn(spec, |x| (x[0] * 3.0).sin() + x[1] * x[1]);
        let back = sp.inverse(sp.forward(f.values()));
        let err = f.values().iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-13);
    }

    #[test]
    fn spectral_derivative_of_mode() {
        let spec = GridSpec::new(5.0, 64, 1).unwrap();
        let sp = Spectral::new(spec);
        let k = 2.0 * PI * 3.0 / 5.0;
        let f = GridField::from_fn(spec, |x| (k * x[0]).sin());
        let d = sp.derivative_factor(0);
        let coeffs: Vec<_> = sp.forward(f.values()).iter().zip(&d).map(|(c, d)| c * d).collect();
        let df = sp.inverse(coeffs);
        for (i, v) in df.iter().enumerate() {
            let x = spec.node(i)[0];
            assert!((v - k * (k * x).cos()).abs() < 1e-11);
        }
    }
}
