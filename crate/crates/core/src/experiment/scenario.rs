//! Registered test problems.

use serde::Serialize;

use crate::drift::{DriftSpec, SMOOTH_BETA};
use crate::error::{Error, Result};
use crate::initial::InitialDensity;
use crate::mollifier::MollifierKernel;
use crate::rng::StreamFactory;

/// Which assumption on the initial density a scenario satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisBranch {
    /// `beta < alpha - 1 - d/q` with `rho_0 ∈ L^q`.
    Integrability,
    /// `rho_0 ∈ C^beta`.
    HolderInitial,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: &'static str,
    pub dim: usize,
    pub drift: DriftSpec,
    pub rho0: InitialDensity,
    /// Integrability index of `rho_0` (infinite for bounded densities).
    pub q: f64,
    pub kernel_radius: f64,
    pub branch: HypothesisBranch,
    pub notes: &'static str,
}

pub const SCENARIOS: [&str; 4] = ["fractional_burgers", "holder_drift", "zero_drift", "constant_drift"];

/// Spot-checks performed on every drift before a run.
pub const HYPOTHESIS_CHECKS: usize = 10_000;

/// Width of the Gaussian initial datum.
pub const GAUSSIAN_SIGMA: f64 = 1.0;

/// Truncation level of the Burgers drift.
pub const BURGERS_CAP: f64 = 1.0;

impl ScenarioSpec {
    pub fn lookup(name: &str, domain_length: f64) -> Result<Self> {
        let l = domain_length;
        let gaussian = InitialDensity::WrappedGaussian { center: 0.5 * l, sigma: GAUSSIAN_SIGMA };
        let spec = match name {
            "fractional_burgers" => Self {
                name: "fractional_burgers",
                dim: 1,
                drift: DriftSpec::truncated_burgers(1, BURGERS_CAP, SMOOTH_BETA)?,
                rho0: gaussian,
                q: f64::INFINITY,
                kernel_radius: 1.0,
                branch: HypothesisBranch::HolderInitial,
                notes: "b(u) = min(u, cap); Lipschitz in u, independent of x",
            },
            "holder_drift" => Self {
                name: "holder_drift",
                dim: 1,
                drift: DriftSpec::holder_profile(1, 1.0, 0.5, l)?,
                rho0: InitialDensity::SinProfile { beta: 0.5 },
                q: f64::INFINITY,
                kernel_radius: 1.0,
                branch: HypothesisBranch::HolderInitial,
                notes: "|sin|^beta spatial profile plus tanh(u); rough in x and in rho_0",
            },
            "zero_drift" => Self {
                name: "zero_drift",
                dim: 1,
                drift: DriftSpec::zero(1),
                rho0: gaussian,
                q: f64::INFINITY,
                kernel_radius: 1.0,
                branch: HypothesisBranch::HolderInitial,
                notes: "control: particles are independent copies of the limit",
            },
            "constant_drift" => Self {
                name: "constant_drift",
                dim: 1,
                drift: DriftSpec::constant(vec![0.5])?,
                rho0: gaussian,
                q: f64::INFINITY,
                kernel_radius: 1.0,
                branch: HypothesisBranch::HolderInitial,
                notes: "control: the density enters nowhere",
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown scenario '{other}', expected one of {}",
                    SCENARIOS.join(", ")
                )))
            }
        };
        spec.rho0.validate(spec.dim, l)?;
        Ok(spec)
    }

    /// Hölder index used in the predicted rate.
    pub fn beta(&self) -> f64 {
        self.drift.beta()
    }

    pub fn rho0_holder(&self) -> f64 {
        self.rho0.holder_index()
    }

    pub fn kernel(&self) -> Result<MollifierKernel> {
        MollifierKernel::bump(self.kernel_radius, self.dim)
    }

    /// Runs the randomized drift checks.
    pub fn check_drift(&self, domain_length: f64, t_end: f64, seed: u64) -> Result<()> {
        let mut rng = StreamFactory::new(seed).auxiliary(0xD41F7, 0);
        self.drift
            .check_hypothesis(HYPOTHESIS_CHECKS, domain_length, 5.0, t_end.max(1e-12), &mut rng)
            .map_err(|e| e.context(format!("scenario {}", self.name)))
    }

    /// Pathwise convergence needs `rho_0 ∈ C^beta` with `beta > 1 - alpha/2`.
    pub fn supports_pathwise(&self, alpha: f64) -> Result<()> {
        let b = self.rho0_holder();
        if self.branch != HypothesisBranch::HolderInitial || !(b > 1.0 - 0.5 * alpha) {
            return Err(Error::invalid(format!(
                "scenario {} has rho_0 Hölder index {b}, pathwise runs need more than {}",
                self.name,
                1.0 - 0.5 * alpha
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_valid() {
        for name in SCENARIOS {
            let s = ScenarioSpec::lookup(name, 20.0).unwrap();
            s.check_drift(20.0, 0.5, 1).unwrap();
            assert_eq!(s.dim, 1);
        }
        assert!(ScenarioSpec::lookup("burgers", 20.0).is_err());
    }

    #[test]
    fn pathwise_condition() {
        let s = ScenarioSpec::lookup("holder_drift", 20.0).unwrap();
        s.supports_pathwise(1.5).unwrap();
        assert!(s.supports_pathwise(1.01).is_ok());
        let rough = ScenarioSpec { rho0: InitialDensity::SinProfile { beta: 0.2 }, ..s };
        assert!(rough.supports_pathwise(1.5).is_err());
        assert!(rough.supports_pathwise(1.7).is_ok());
    }
}
