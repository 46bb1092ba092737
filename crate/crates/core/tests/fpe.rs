use std::f64::consts::PI;

use densde::fpe_solver::{solve_fpe, FpeConfig};
use densde::grid::{GridField, GridSpec, Spectral};
use densde::initial::InitialDensity;
use densde::stable_noise::semigroup_apply;
use densde::{DriftSpec, StableNoiseConfig};
use rustfft::num_complex::Complex64;

const L: f64 = 20.0;

fn gaussian(spec: GridSpec, sigma: f64) -> GridField {
    InitialDensity::WrappedGaussian { center: L / 2.0, sigma }.grid_field(&spec).unwrap()
}

fn cfg(alpha: f64, drift: DriftSpec, n: usize, dt: f64, t_end: f64) -> FpeConfig {
    FpeConfig {
        noise: StableNoiseConfig::new(alpha, 1).unwrap(),
        drift,
        grid: GridSpec::new(L, n, 1).unwrap(),
        dt_pde: dt,
        t_end,
        dealias: true,
    }
}

fn last(c: &FpeConfig, rho0: &GridField) -> GridField {
    solve_fpe(c, rho0).unwrap().fields.last().unwrap().clone()
}

#[test]
fn zero_drift_equals_semigroup_for_any_step() {
    for dt in [0.1, 0.025, 0.003125] {
        let c = cfg(1.5, DriftSpec::zero(1), 512, dt, 0.5);
        let rho0 = gaussian(c.grid, 1.0);
        let want = semigroup_apply(&c.noise, 0.5, &rho0).unwrap();
        assert!(last(&c, &rho0).max_abs_diff(&want) < 1e-13);
    }
}

#[test]
fn gaussian_heat_flow() {
    // alpha = 2 generates Delta, so the variance grows by 2t.
    let c = cfg(2.0, DriftSpec::zero(1), 512, 0.05, 0.5);
    let rho0 = gaussian(c.grid, 1.0);
    let exact = gaussian(c.grid, (1.0f64 + 2.0 * 0.5).sqrt());
    assert!(last(&c, &rho0).max_abs_diff(&exact) < 1e-8);
}

#[test]
fn constant_drift_translates() {
    let v = 0.7;
    let t = 0.5;
    let c = cfg(1.5, DriftSpec::constant(vec![v]).unwrap(), 512, 2.5e-4, t);
    let rho0 = gaussian(c.grid, 1.0);
    let got = last(&c, &rho0);

    // exp(-t|xi|^alpha - i xi v t) applied to the initial coefficients
    let sp = Spectral::new(c.grid);
    let mult = sp.stable_multiplier(1.5, t);
    let coeffs: Vec<Complex64> = sp
        .forward(rho0.values())
        .into_iter()
        .enumerate()
        .map(|(j, z)| z * mult[j] * Complex64::from_polar(1.0, -c.grid.wavenumber(j) * v * t))
        .collect();
    let exact = GridField::new(c.grid, sp.inverse(coeffs)).unwrap();
    // the drift is integrated to second order, not exactly
    assert!(got.max_abs_diff(&exact) < 1e-9, "{}", got.max_abs_diff(&exact));
}

#[test]
fn burgers_is_translation_equivariant() {
    let c = cfg(1.5, DriftSpec::truncated_burgers(1, 1.0, 0.99).unwrap(), 256, 2.5e-3, 0.25);
    let rho0 = gaussian(c.grid, 0.8);
    let mut shifted = rho0.values().to_vec();
    shifted.rotate_right(37);
    let a = last(&c, &rho0);
    let b = last(&c, &GridField::new(c.grid, shifted).unwrap());
    let mut a_shift = a.values().to_vec();
    a_shift.rotate_right(37);
    let gap = a_shift.iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(gap < 1e-12, "{gap}");
}

/// Viscous Burgers `rho_t = rho_xx - (min(rho, 1) rho)_x` by central
/// differences and classical RK4.
fn burgers_fd(rho0: &[f64], h: f64, dt: f64, steps: usize) -> Vec<f64> {
    let n = rho0.len();
    let rhs = |r: &[f64]| -> Vec<f64> {
        let flux: Vec<f64> = r.iter().map(|u| u.min(1.0) * u).collect();
        (0..n)
            .map(|i| {
                let (p, m) = ((i + 1) % n, (i + n - 1) % n);
                (r[p] - 2.0 * r[i] + r[m]) / (h * h) - (flux[p] - flux[m]) / (2.0 * h)
            })
            .collect()
    };
    let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let mut r = rho0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&r);
        let k2 = rhs(&axpy(&r, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&r, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&r, &k3, dt));
        for i in 0..n {
            r[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    r
}

#[test]
fn burgers_matches_finite_differences_at_four_times_resolution() {
    let t = 0.5;
    let c = cfg(2.0, DriftSpec::truncated_burgers(1, 1.0, 0.99).unwrap(), 256, 1e-3, t);
    let rho0 = gaussian(c.grid, 1.0);
    let got = last(&c, &rho0);

    let fine = GridSpec::new(L, 1024, 1).unwrap();
    let h = fine.spacing();
    let dt = 5e-5;
    let fd = burgers_fd(gaussian(fine, 1.0).values(), h, dt, (t / dt).round() as usize);
    let gap = (0..256).fold(0.0f64, |m, i| m.max((got.values()[i] - fd[4 * i]).abs()));
    // second-order differences at h = L / 1024
    assert!(gap < 2e-5, "{gap}");
}

#[test]
fn single_mode_decay_rate() {
    let c = cfg(1.5, DriftSpec::zero(1), 128, 0.1, 1.0);
    let k = 2.0 * PI / L;
    let f = GridField::from_fn(c.grid, |x| 1.0 / L + 0.01 * (k * x[0]).cos());
    let got = last(&c, &f);
    let decay = (-(k.powf(1.5))).exp();
    let want = GridField::from_fn(c.grid, |x| 1.0 / L + 0.01 * decay * (k * x[0]).cos());
    assert!(got.max_abs_diff(&want) < 1e-14);
}
