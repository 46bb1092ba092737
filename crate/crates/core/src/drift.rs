//! Drift coefficients `b(t, x, u)` with their regularity constants.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

pub type DriftFn = dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub enum DriftKind {
    Zero,
    Constant(Vec<f64>),
    /// `b(u) = min(u, cap)` in every component.
    TruncatedBurgers { cap: f64 },
    /// `b_i = (s/2) (|sin(2 pi x_i / P)|^beta + tanh(u))`.
    HolderProfile { strength: f64, period: f64 },
    Custom(Arc<DriftFn>),
}

impl fmt::Debug for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftKind::Zero => write!(f, "Zero"),
            DriftKind::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            DriftKind::TruncatedBurgers { cap } => f.debug_struct("TruncatedBurgers").field("cap", cap).finish(),
            DriftKind::HolderProfile { strength, period } => f
                .debug_struct("HolderProfile")
                .field("strength", strength)
                .field("period", period)
                .finish(),
            DriftKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A drift together with the constants of the standing hypothesis:
/// `|b| <= kappa` and `|b(t,x,u) - b(t,y,v)| <= kappa (|x-y|^beta + |u-v|)`.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    kind: DriftKind,
    dim: usize,
    kappa: f64,
    beta: f64,
    lip_u: f64,
}

/// Declared Hölder index for drifts that are Hölder of every order.
pub const SMOOTH_BETA: f64 = 0.99;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("Hölder index must lie in (0, 1), got {beta}")))
    }
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        Self { kind: DriftKind::Zero, dim, kappa: 0.0, beta: SMOOTH_BETA, lip_u: 0.0 }
    }

    pub fn constant(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("constant drift needs finite components"));
        }
        let kappa = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self { dim: c.len(), kind: DriftKind::Constant(c), kappa, beta: SMOOTH_BETA, lip_u: 0.0 })
    }

    /// Truncated Burgers flux `b(u) = min(u, cap)`; `beta` is the declared
    /// Hölder index (any value in (0,1) holds since `b` ignores `x`).
    pub fn truncated_burgers(dim: usize, cap: f64, beta: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::invalid(format!("truncation level must be positive, got {cap}")));
        }
        check_beta(beta)?;
        let root_d = (dim as f64).sqrt();
        Ok(Self {
            kind: DriftKind::TruncatedBurgers { cap },
            dim,
            kappa: cap.max(1.0) * root_d,
            beta,
            lip_u: root_d,
        })
    }

    pub fn holder_profile(dim: usize, strength: f64, beta: f64, period: f64) -> Result<Self> {
        if !(strength > 0.0 && strength.is_finite() && period > 0.0) {
            return Err(Error::invalid("Hölder profile needs positive strength and period"));
        }
        check_beta(beta)?;
        let root_d = (dim as f64).sqrt();
        let holder_const = (2.0 * PI / period).powf(beta);
        Ok(Self {
            kind: DriftKind::HolderProfile { strength, period },
            dim,
            kappa: strength * root_d * holder_const.max(1.0),
            beta,
            lip_u: 0.5 * strength * root_d,
        })
    }

    pub fn custom(dim: usize, kappa: f64, beta: f64, lip_u: f64, f: Arc<DriftFn>) -> Result<Self> {
        check_beta(beta)?;
        if !(kappa >= 0.0 && lip_u >= 0.0) {
            return Err(Error::invalid("drift constants must be nonnegative"));
        }
        Ok(Self { kind: DriftKind::Custom(f), dim, kappa, beta, lip_u })
    }

    /// Overrides the declared Hölder index.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        self.beta = beta;
        Ok(self)
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lip_u(&self) -> f64 {
        self.lip_u
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Zero)
    }

    /// Whether `b` reads its density argument; when false the KDE is skipped.
    pub fn depends_on_density(&self) -> bool {
        matches!(
            self.kind,
            DriftKind::TruncatedBurgers { .. } | DriftKind::HolderProfile { .. } | DriftKind::Custom(_)
        )
    }

    pub fn depends_on_position(&self) -> bool {
        matches!(self.kind, DriftKind::HolderProfile { .. } | DriftKind::Custom(_))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], u: f64, out: &mut [f64]) {
        match &self.kind {
            DriftKind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            DriftKind::Constant(c) => out.copy_from_slice(c),
            DriftKind::TruncatedBurgers { cap } => {
                let v = u.min(*cap);
                out.iter_mut().for_each(|o| *o = v);
            }
            DriftKind::HolderProfile { strength, period } => {
                let tu = u.tanh();
                for (o, xi) in out.iter_mut().zip(x) {
                    let s = (2.0 * PI * xi / period).sin().abs().powf(self.beta);
                    *o = 0.5 * strength * (s + tu);
                }
            }
            DriftKind::Custom(f) => f(t, x, u, out),
        }
    }

    /// Randomized spot-check of the bound and the Hölder/Lipschitz condition.
    pub fn check_hypothesis<R: Rng + ?Sized>(
        &self,
        checks: usize,
        domain_length: f64,
        u_max: f64,
        t_max: f64,
        rng: &mut R,
    ) -> Result<()> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut bx = vec![0.0; d];
        let mut by = vec![0.0; d];
        let slack = 1.0 + 1e-9;
        for k in 0..checks {
            let t = rng.random::<f64>() * t_max;
            x.iter_mut().for_each(|v| *v = rng.random::<f64>() * domain_length);
            // alternate far pairs and near pairs
            let spread = if k % 2 == 0 { domain_length } else { domain_length * 1e-4 };
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi = xi + (rng.random::<f64>() - 0.5) * spread;
            }
            let u = rng.random::<f64>() * u_max;
            let v = if k % 3 == 0 { u } else { rng.random::<f64>() * u_max };
            self.eval(t, &x, u, &mut bx);
            self.eval(t, &y, v, &mut by);
            let nb = bx.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(nb <= self.kappa * slack + 1e-300) {
                return Err(Error::invalid(format!("|b| = {nb} exceeds kappa = {}", self.kappa)));
            }
            let diff = bx.iter().zip(&by).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let dx = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let bound = self.kappa * (dx.powf(self.beta) + (u - v).abs());
            if !(diff <= bound * slack + 1e-14) {
                return Err(Error::invalid(format!(
                    "Hölder/Lipschitz bound violated: |Δb| = {diff}, bound = {bound}"
                )));
            }
        }
        Ok(())
    }
}
