//! Pseudospectral solver for `d/dt rho = Δ^{alpha/2} rho - div(b(t, x, rho) rho)`
//! on the periodic grid.
//!
//! One step advances the mild form
//! `rho(t+dt) = P_dt rho(t) - ∫_0^dt P_{dt-s} div(b rho)(t+s) ds`
//! with the linear part exact in Fourier space and the integral by the
//! trapezoid rule on a predictor:
//!
//! ```text
//! rho*  = P rho - dt P F(rho)
//! rho+  = P rho - dt/2 (P F(rho) + F(rho*))
//! ```
//!
//! where `F(rho) = div(b(t, x, rho) rho)`, differentiated spectrally and
//! 2/3-dealiased.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Spectral};
use crate::stable_noise::StableNoiseConfig;

/// Mass drift that aborts a solve.
pub const MASS_ABORT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FpeConfig {
    pub noise: StableNoiseConfig,
    pub drift: DriftSpec,
    pub grid: GridSpec,
    pub dt_pde: f64,
    pub t_end: f64,
    pub dealias: bool,
}

impl FpeConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt_pde).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.dim != self.noise.dim || self.drift.dim() != self.noise.dim {
            return Err(Error::invalid("grid, drift and noise dimensions differ"));
        }
        if !(self.dt_pde > 0.0) {
            return Err(Error::invalid(format!("PDE step must be positive, got {}", self.dt_pde)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::invalid(format!("horizon must be >= 0, got {}", self.t_end)));
        }
        let steps = self.t_end / self.dt_pde;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon {} is not a multiple of the PDE step {}",
                self.t_end, self.dt_pde
            )));
        }
        if self.t_end > 0.0 {
            self.grid.check_resolved(self.noise.alpha, self.t_end)?;
        }
        Ok(())
    }
}

/// Solution fields at every PDE step.
#[derive(Debug, Clone)]
pub struct DensityPath {
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
    pub alpha: f64,
    pub dt: f64,
    pub scenario_id: String,
}

impl DensityPath {
    pub fn spec(&self) -> &GridSpec {
        self.fields[0].spec()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("path has at least the initial field")
    }

    /// Bracketing step indices and the linear weight of the upper one.
    fn bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        let t0 = self.times[0];
        let t1 = self.t_end();
        let tol = 1e-9 * self.dt.max(1.0);
        if !(t >= t0 - tol && t <= t1 + tol) {
            return Err(Error::invalid(format!("time {t} outside the solved range [{t0}, {t1}]")));
        }
        let last = self.times.len() - 1;
        if last == 0 {
            return Ok((0, 0, 0.0));
        }
        let pos = ((t - t0) / self.dt).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last - 1);
        let w = pos - k as f64;
        // snap to a stored step when t is on the grid up to round-off
        if w < 1e-9 {
            return Ok((k, k, 0.0));
        }
        if w > 1.0 - 1e-9 {
            return Ok((k + 1, k + 1, 0.0));
        }
        Ok((k, k + 1, w))
    }

    /// Field at time `t`, linear in time between stored steps.
    pub fn field_at(&self, t: f64) -> Result<GridField> {
        let (a, b, w) = self.bracket(t)?;
        if a == b {
            return Ok(self.fields[a].clone());
        }
        let values = self.fields[a]
            .values()
            .iter()
            .zip(self.fields[b].values())
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect();
        GridField::new(*self.spec(), values)
    }
}

/// Reusable stepping state for one grid and drift.
pub struct FpeStepper<'a> {
    spectral: Spectral,
    propagator: Vec<f64>,
    derivative: Vec<Vec<Complex64>>,
    mask: Option<Vec<bool>>,
    drift: &'a DriftSpec,
    dt: f64,
}

impl<'a> FpeStepper<'a> {
    pub fn new(grid: GridSpec, alpha: f64, drift: &'a DriftSpec, dt: f64, dealias: bool) -> Self {
        let spectral = Spectral::new(grid);
        let propagator = spectral.stable_multiplier(alpha, dt);
        let derivative = (0..grid.dim).map(|a| spectral.derivative_factor(a)).collect();
        let mask = dealias.then(|| spectral.dealias_mask());
        Self { spectral, propagator, derivative, mask, drift, dt }
    }

    /// Spectral coefficients of `div(b(t, x, rho) rho)`.
    fn divergence_hat(&self, rho: &[f64], t: f64) -> Vec<Complex64> {
        let spec = *self.spectral.spec();
        let dim = spec.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); rho.len()];
        let mut flux = vec![vec![0.0; rho.len()]; dim];
        let mut b = vec![0.0; dim];
        for (i, &r) in rho.iter().enumerate() {
            let x = spec.node(i);
            self.drift.eval(t, &x[..dim], r, &mut b);
            for a in 0..dim {
                flux[a][i] = b[a] * r;
            }
        }
        for (a, f) in flux.iter().enumerate() {
            let fh = self.spectral.forward(f);
            for ((o, c), d) in out.iter_mut().zip(fh).zip(&self.derivative[a]) {
                *o += c * d;
            }
        }
        if let Some(mask) = &self.mask {
            for (o, keep) in out.iter_mut().zip(mask) {
                if !keep {
                    *o = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    pub fn step(&self, rho: &GridField, t: f64) -> Result<GridField> {
        let dt = self.dt;
        let rho_hat = self.spectral.forward(rho.values());
        let p_rho: Vec<Complex64> = rho_hat.iter().zip(&self.propagator).map(|(c, m)| c * m).collect();
        let next_hat = if self.drift.is_zero() {
            p_rho
        } else {
            let f0 = self.divergence_hat(rho.values(), t);
            let p_f0: Vec<Complex64> = f0.iter().zip(&self.propagator).map(|(c, m)| c * m).collect();
            let predictor_hat: Vec<Complex64> = p_rho.iter().zip(&p_f0).map(|(a, b)| a - b * dt).collect();
            let predictor = self.spectral.inverse(predictor_hat);
            let f1 = self.divergence_hat(&predictor, t + dt);
            p_rho
                .iter()
                .zip(&p_f0)
                .zip(&f1)
                .map(|((p, a), b)| p - (a + b) * (0.5 * dt))
                .collect()
        };
        let values = self.spectral.inverse(next_hat);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: t + dt, what: "PDE solution".into() });
        }
        GridField::new(*rho.spec(), values)
    }
}

/// One predictor–corrector Duhamel step from `t` to `t + dt`.
pub fn step_duhamel(rho: &GridField, drift: &DriftSpec, alpha: f64, t: f64, dt: f64) -> Result<GridField> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {dt}")));
    }
    FpeStepper::new(*rho.spec(), alpha, drift, dt, true).step(rho, t)
}

pub fn solve_fpe(cfg: &FpeConfig, rho0: &GridField) -> Result<DensityPath> {
    solve_fpe_tagged(cfg, rho0, "custom")
}

pub fn solve_fpe_tagged(cfg: &FpeConfig, rho0: &GridField, scenario_id: &str) -> Result<DensityPath> {
    cfg.validate()?;
    if rho0.spec() != &cfg.grid {
        return Err(Error::invalid("initial field grid differs from the solver grid"));
    }
    rho0.check_density(1e-12, 1e-8)?;
    let stepper = FpeStepper::new(cfg.grid, cfg.noise.alpha, &cfg.drift, cfg.dt_pde, cfg.dealias);
    let steps = cfg.n_steps();
    let mass0 = rho0.mass();
    let mut times = Vec::with_capacity(steps + 1);
    let mut fields = Vec::with_capacity(steps + 1);
    times.push(0.0);
    fields.push(rho0.clone());
    for k in 0..steps {
        let t = k as f64 * cfg.dt_pde;
        let next = stepper.step(&fields[k], t)?;
        let t_next = (k + 1) as f64 * cfg.dt_pde;
        let drift = (next.mass() - mass0).abs();
        if drift > MASS_ABORT {
            return Err(Error::MassDrift { time: t_next, drift });
        }
        times.push(t_next);
        fields.push(next);
    }
    Ok(DensityPath { times, fields, alpha: cfg.noise.alpha, dt: cfg.dt_pde, scenario_id: scenario_id.to_string() })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SelfConvergence {
    /// `|rho_dt - rho_{dt/2}|_inf` at the horizon.
    pub coarse_gap: f64,
    /// `|rho_{dt/2} - rho_{dt/4}|_inf` at the horizon.
    pub fine_gap: f64,
    pub factor: f64,
}

/// Richardson self-comparison with steps `dt`, `dt/2`, `dt/4`.
pub fn self_convergence(cfg: &FpeConfig, rho0: &GridField) -> Result<SelfConvergence> {
    let mut finals = Vec::new();
    for div in [1.0, 2.0, 4.0] {
        let c = FpeConfig { dt_pde: cfg.dt_pde / div, ..cfg.clone() };
        let path = solve_fpe(&c, rho0)?;
        finals.push(path.fields.last().cloned().expect("nonempty path"));
    }
    let coarse_gap = finals[0].max_abs_diff(&finals[1]);
    let fine_gap = finals[1].max_abs_diff(&finals[2]);
    Ok(SelfConvergence { coarse_gap, fine_gap, factor: coarse_gap / fine_gap })
}

/// Cubic Lagrange weights for offsets -1, 0, 1, 2 at fractional position `s`.
#[inline]
fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Periodic four-point cubic interpolation of a grid field.
pub fn interpolate_field(field: &GridField, x: &[f64]) -> f64 {
    let spec = field.spec();
    let n = spec.points_per_axis;
    let h = spec.spacing();
    let v = field.values();
    let locate = |xa: f64| {
        let p = crate::grid::wrap(xa, spec.domain_length) / h;
        let i = (p.floor() as usize).min(n - 1);
        (i, cubic_weights(p - i as f64))
    };
    let idx = |i: usize, o: usize| (i + n - 1 + o) % n;
    match spec.dim {
        1 => {
            let (i, w) = locate(x[0]);
            (0..4).map(|o| w[o] * v[idx(i, o)]).sum()
        }
        _ => {
            let (i, wi) = locate(x[0]);
            let (j, wj) = locate(x[1]);
            let mut s = 0.0;
            for a in 0..4 {
                let row = idx(i, a) * n;
                let mut r = 0.0;
                for b in 0..4 {
                    r += wj[b] * v[row + idx(j, b)];
                }
                s += wi[a] * r;
            }
            s
        }
    }
}

/// `rho_t(x)`: linear in `t` between stored steps, cubic in `x`, tiny
/// negative undershoots clamped to zero.
pub fn interpolate_density(path: &DensityPath, t: f64, x: &[f64]) -> Result<f64> {
    if x.len() != path.spec().dim {
        return Err(Error::LengthMismatch { expected: path.spec().dim, got: x.len() });
    }
    let (a, b, w) = path.bracket(t)?;
    let va = interpolate_field(&path.fields[a], x);
    let v = if a == b { va } else { (1.0 - w) * va + w * interpolate_field(&path.fields[b], x) };
    Ok(v.max(0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub lq_norm: f64,
    pub holder_quotient: f64,
    /// `|rho_t|_inf t^{d/(alpha q)} / |rho_0|_q` for `t > 0`.
    pub smoothing_ratio: Option<f64>,
    pub min_value: f64,
    pub mass: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityDiagnostics {
    pub q: f64,
    pub beta: f64,
    pub constant: f64,
    pub rows: Vec<DiagnosticsRow>,
    /// Times where `sup_t / sup_0` or `holder_t / holder_0` exceeded `constant`.
    pub flagged: Vec<f64>,
    pub sup_non_increasing: bool,
    /// Largest `boundary_mass` over the path.
    pub max_boundary_mass: f64,
}

/// Mass within `L/4` of the edge of the periodic cell, i.e. outside the
/// central box `[L/4, 3L/4)^d`. Small values mean wrapping barely matters.
pub fn boundary_mass(field: &GridField) -> f64 {
    let spec = field.spec();
    let l = spec.domain_length;
    let inside = |x: f64| x >= 0.25 * l && x < 0.75 * l;
    let s: f64 = field
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| !spec.node(*i)[..spec.dim].iter().all(|&x| inside(x)))
        .map(|(_, v)| v)
        .sum();
    s * spec.cell_volume()
}

/// Largest finite-difference quotient `|rho(x + h e_a) - rho(x)| / h^beta`.
pub fn holder_quotient(field: &GridField, beta: f64) -> f64 {
    let spec = field.spec();
    let n = spec.points_per_axis;
    let h = spec.spacing();
    let v = field.values();
    let mut m: f64 = 0.0;
    for flat in 0..v.len() {
        let [i, j] = spec.multi_index(flat);
        let right = match spec.dim {
            1 => (i + 1) % n,
            _ => ((i + 1) % n) * n + j,
        };
        m = m.max((v[right] - v[flat]).abs());
        if spec.dim == 2 {
            m = m.max((v[i * n + (j + 1) % n] - v[flat]).abs());
        }
    }
    m / h.powf(beta)
}

pub fn diagnostics_density_estimates(path: &DensityPath, q: f64, beta: f64, constant: f64) -> DensityDiagnostics {
    let d = path.spec().dim as f64;
    let first = &path.fields[0];
    let sup0 = first.sup_norm();
    let holder0 = holder_quotient(first, beta);
    let lq0 = first.lp_norm(q);
    let mut rows = Vec::with_capacity(path.fields.len());
    let mut flagged = Vec::new();
    let mut sup_non_increasing = true;
    let mut prev_sup = sup0;
    for (t, f) in path.times.iter().zip(&path.fields) {
        let sup = f.sup_norm();
        let holder = holder_quotient(f, beta);
        let smoothing_ratio = (*t > 0.0).then(|| {
            let expo = if q.is_infinite() { 0.0 } else { d / (path.alpha * q) };
            sup * t.powf(expo) / lq0
        });
        if sup > prev_sup * (1.0 + 1e-12) {
            sup_non_increasing = false;
        }
        prev_sup = sup;
        let holder_ratio = if holder0 > 0.0 { holder / holder0 } else if holder > 0.0 { f64::INFINITY } else { 0.0 };
        if sup / sup0 > constant || holder_ratio > constant {
            flagged.push(*t);
        }
        rows.push(DiagnosticsRow {
            t: *t,
            sup_norm: sup,
            l1_norm: f.lp_norm(1.0),
            lq_norm: f.lp_norm(q),
            holder_quotient: holder,
            smoothing_ratio,
            min_value: f.min(),
            mass: f.mass(),
            boundary_mass: boundary_mass(f),
        });
    }
    let max_boundary_mass = rows.iter().map(|r| r.boundary_mass).fold(0.0, f64::max);
    DensityDiagnostics { q, beta, constant, rows, flagged, sup_non_increasing, max_boundary_mass }
}
