//! Initial densities on the torus: evaluation, grid discretization and
//! exact sampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{torus_diff, wrap, GridField, GridSpec};
use crate::mollifier::MollifierKernel;
use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDensity {
    Uniform,
    /// Isotropic Gaussian centred at `(center, .., center)`, wrapped onto the torus.
    WrappedGaussian { center: f64, sigma: f64 },
    /// Mixture of radial bumps; weights must sum to one.
    BumpMixture { centers: Vec<Vec<f64>>, radius: f64, weights: Vec<f64> },
    /// Product of `|sin(pi x_i / L)|^beta` profiles, Hölder of order `beta` only.
    SinProfile { beta: f64 },
}

impl InitialDensity {
    pub fn validate(&self, dim: usize, domain_length: f64) -> Result<()> {
        match self {
            InitialDensity::Uniform => Ok(()),
            InitialDensity::WrappedGaussian { sigma, center } => {
                if !(*sigma > 0.0 && sigma.is_finite() && center.is_finite()) {
                    return Err(Error::invalid(format!("wrapped Gaussian needs sigma > 0, got {sigma}")));
                }
                Ok(())
            }
            InitialDensity::BumpMixture { centers, radius, weights } => {
                if centers.is_empty() || centers.len() != weights.len() {
                    return Err(Error::invalid("bump mixture needs one weight per centre"));
                }
                if centers.iter().any(|c| c.len() != dim) {
                    return Err(Error::invalid("bump centre dimension mismatch"));
                }
                if !(*radius > 0.0 && 2.0 * radius <= domain_length) {
                    return Err(Error::invalid("bump radius must be positive and at most L/2"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::invalid("bump weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("unnormalized initial density: weights sum to {total}")));
                }
                Ok(())
            }
            InitialDensity::SinProfile { beta } => {
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(Error::invalid(format!("sin profile exponent must lie in (0, 1], got {beta}")));
                }
                Ok(())
            }
        }
    }

    /// Hölder index of the density (1 stands for "smooth").
    pub fn holder_index(&self) -> f64 {
        match self {
            InitialDensity::SinProfile { beta } => *beta,
            _ => 1.0,
        }
    }

    pub fn density(&self, x: &[f64], domain_length: f64) -> f64 {
        let l = domain_length;
        let dim = x.len();
        match self {
            InitialDensity::Uniform => l.powi(-(dim as i32)),
            InitialDensity::WrappedGaussian { center, sigma } => {
                x.iter().map(|&xi| wrapped_gaussian_1d(torus_diff(xi, *center, l), *sigma, l)).product()
            }
            InitialDensity::BumpMixture { centers, radius, weights } => {
                let bump = MollifierKernel::bump(*radius, dim).expect("validated radius");
                centers
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| {
                        let y: Vec<f64> = x.iter().zip(c).map(|(a, b)| torus_diff(*a, *b, l)).collect();
                        w * bump.eval(&y)
                    })
                    .sum()
            }
            InitialDensity::SinProfile { beta } => {
                let z = sin_profile_mass(*beta, l);
                x.iter().map(|&xi| (PI * xi / l).sin().abs().powf(*beta) / z).product()
            }
        }
    }

    /// Node values renormalized to unit trapezoid mass.
    pub fn grid_field(&self, spec: &GridSpec) -> Result<GridField> {
        self.validate(spec.dim, spec.domain_length)?;
        let l = spec.domain_length;
        let mut f = GridField::from_fn(*spec, |x| self.density(x, l));
        let mass = f.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("initial density has no mass on the grid"));
        }
        f.values_mut().iter_mut().for_each(|v| *v /= mass);
        Ok(f)
    }

    /// One draw, written into `out` (length d), in `[0, L)^d`.
    pub fn sample_into<R: Rng + ?Sized>(&self, domain_length: f64, rng: &mut R, out: &mut [f64]) {
        let l = domain_length;
        match self {
            InitialDensity::Uniform => out.iter_mut().for_each(|o| *o = wrap(rng.random::<f64>() * l, l)),
            InitialDensity::WrappedGaussian { center, sigma } => {
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = wrap(center + sigma * z, l);
                }
            }
            InitialDensity::BumpMixture { centers, radius, weights } => {
                let mut u = rng.random::<f64>();
                let mut k = centers.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        k = i;
                        break;
                    }
                    u -= w;
                }
                // rejection from the bounding cube; profile peak is e^{-1}
                loop {
                    let mut s2 = 0.0;
                    for o in out.iter_mut() {
                        let y = (2.0 * rng.random::<f64>() - 1.0) * radius;
                        *o = y;
                        s2 += (y / radius).powi(2);
                    }
                    if s2 < 1.0 && rng.random::<f64>() < (1.0 - 1.0 / (1.0 - s2)).exp() {
                        break;
                    }
                }
                for (o, c) in out.iter_mut().zip(&centers[k]) {
                    *o = wrap(*o + c, l);
                }
            }
            InitialDensity::SinProfile { beta } => {
                for o in out.iter_mut() {
                    loop {
                        let x = rng.random::<f64>() * l;
                        if rng.random::<f64>() < (PI * x / l).sin().abs().powf(*beta) {
                            *o = x;
                            break;
                        }
                    }
                }
            }
        }
    }
}

fn wrapped_gaussian_1d(y: f64, sigma: f64, l: f64) -> f64 {
    // enough images that the truncated tail is far below round-off
    let images = ((10.0 * sigma / l).ceil() as i64).max(1);
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    (-images..=images)
        .map(|k| {
            let z = (y + k as f64 * l) / sigma;
            norm * (-0.5 * z * z).exp()
        })
        .sum()
}

fn sin_profile_mass(beta: f64, l: f64) -> f64 {
    // substitute x = L s / pi; integrand symmetric about pi/2
    2.0 * l / PI * adaptive_simpson(|s| s.sin().powf(beta), 0.0, 0.5 * PI, 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFactory;

    #[test]
    fn validation() {
        let bad = InitialDensity::BumpMixture { centers: vec![vec![1.0], vec![3.0]], radius: 0.5, weights: vec![0.5, 0.6] };
        assert!(bad.validate(1, 10.0).is_err());
        let good = InitialDensity::BumpMixture { centers: vec![vec![1.0], vec![3.0]], radius: 0.5, weights: vec![0.4, 0.6] };
        assert!(good.validate(1, 10.0).is_ok());
        assert!(InitialDensity::WrappedGaussian { center: 1.0, sigma: 0.0 }.validate(1, 10.0).is_err());
        assert!(InitialDensity::SinProfile { beta: 1.5 }.validate(1, 10.0).is_err());
    }

    #[test]
    fn grid_fields_have_unit_mass() {
        let spec = GridSpec::new(10.0, 256, 1).unwrap();
        let cases = [
            InitialDensity::Uniform,
            InitialDensity::WrappedGaussian { center: 5.0, sigma: 1.0 },
            InitialDensity::BumpMixture { centers: vec![vec![2.0], vec![7.0]], radius: 1.0, weights: vec![0.3, 0.7] },
            InitialDensity::SinProfile { beta: 0.5 },
        ];
        for c in &cases {
            let f = c.grid_field(&spec).unwrap();
            assert!((f.mass() - 1.0).abs() < 1e-12);
            // continuous density integrates to one too
            let raw = GridField::from_fn(spec, |x| c.density(x, 10.0));
            assert!((raw.mass() - 1.0).abs() < 2e-3, "{c:?}: {}", raw.mass());
        }
    }

    #[test]
    fn sin_profile_mass_closed_form() {
        // beta = 1: integral of sin(pi x / L) over [0, L] is 2L/pi
        assert!((sin_profile_mass(1.0, 3.0) - 6.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn uniform_mean() {
        let mut rng = StreamFactory::new(3).auxiliary(4, 0);
        let n = 100_000;
        let l = 8.0;
        let mut out = [0.0];
        let mean: f64 = (0..n)
            .map(|_| {
                InitialDensity::Uniform.sample_into(l, &mut rng, &mut out);
                out[0]
            })
            .sum::<f64>()
            / n as f64;
        let se = l / (12.0f64.sqrt() * (n as f64).sqrt());
        assert!((mean - l / 2.0).abs() < 3.0 * se);
    }
}
