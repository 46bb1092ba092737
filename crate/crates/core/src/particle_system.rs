//! Euler–Maruyama for the moderately interacting particle system and the
//! coupled limit equation.
//!
//! Particle `i` moves by `b(t, X_i, rho^N_t(X_i)) dt + ΔL_i`, where
//! `rho^N_t = phi_N * mu^N_t` is read from the pre-step snapshot for every
//! particle (synchronous update) and `ΔL_i` comes from the particle's own
//! random stream. Positions are wrapped onto `[0, L)^d`.

use rand::Rng;
use rayon::prelude::*;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::fpe_solver::{interpolate_density, DensityPath};
use crate::grid::{torus_diff, wrap};
use crate::initial::InitialDensity;
use crate::mollifier::{kde_self, CellList, MollifierKernel, ParticleEnsemble};
use crate::rng::{StreamFactory, StreamRng};
use crate::stable_noise::{sample_stable_increment_into, StableNoiseConfig};

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub noise: StableNoiseConfig,
    pub drift: DriftSpec,
    /// Kernel already scaled for `n_particles`.
    pub kernel: MollifierKernel,
    pub initial: InitialDensity,
    pub n_particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub domain_length: f64,
    pub seed: u64,
    pub replication: u64,
    /// Record particle 1's noise increments and trajectory.
    pub record_particle1_noise: bool,
    /// Empty means `[0, t_end]`.
    pub snapshot_times: Vec<f64>,
    /// Stream slot of each particle; `None` is the identity assignment.
    pub stream_slots: Option<Vec<u64>>,
}

impl SimulationPlan {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn time_of_step(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    fn step_of_time(&self, t: f64) -> Option<usize> {
        let k = t / self.dt;
        let r = k.round();
        ((k - r).abs() <= 1e-9 * k.abs().max(1.0) && r >= 0.0 && r as usize <= self.n_steps()).then_some(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.noise.dim;
        if d > crate::mollifier::MAX_DIM {
            return Err(Error::invalid(format!("particle simulations support d <= {}", crate::mollifier::MAX_DIM)));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("particle count must be >= 1"));
        }
        if self.kernel.n_particles() != self.n_particles || self.kernel.dim() != d {
            return Err(Error::invalid("kernel is not scaled for this particle count and dimension"));
        }
        if self.drift.dim() != d {
            return Err(Error::invalid("drift dimension differs from the noise dimension"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::invalid("horizon must be >= 0"));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-12 * steps.max(1.0) {
            return Err(Error::invalid(format!("horizon {} is not a multiple of dt {}", self.t_end, self.dt)));
        }
        for &t in &self.snapshot_times {
            if self.step_of_time(t).is_none() {
                return Err(Error::invalid(format!("snapshot time {t} is not on the step grid")));
            }
        }
        if let Some(slots) = &self.stream_slots {
            if slots.len() != self.n_particles {
                return Err(Error::LengthMismatch { expected: self.n_particles, got: slots.len() });
            }
        }
        self.initial.validate(d, self.domain_length)?;
        Ok(())
    }

    fn slot(&self, i: usize) -> u64 {
        self.stream_slots.as_ref().map_or(i as u64, |s| s[i])
    }

    pub fn streams(&self) -> Vec<StreamRng> {
        let f = StreamFactory::new(self.seed);
        (0..self.n_particles).map(|i| f.particle(self.replication, self.slot(i))).collect()
    }
}

/// Particle 1's noise increments, one `d`-vector per step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTape {
    pub increments: Vec<f64>,
    pub dim: usize,
    pub dt: f64,
    pub alpha: f64,
}

impl NoiseTape {
    pub fn new(dim: usize, dt: f64, alpha: f64) -> Self {
        Self { increments: Vec::new(), dim, dt, alpha }
    }

    pub fn len(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }
}

/// `n` i.i.d. draws from `rho0` using a single stream.
pub fn init_particles<R: Rng + ?Sized>(
    rho0: &InitialDensity,
    n: usize,
    dim: usize,
    domain_length: f64,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::invalid("particle count must be >= 1"));
    }
    rho0.validate(dim, domain_length)?;
    let mut pos = vec![0.0; n * dim];
    for p in pos.chunks_exact_mut(dim) {
        rho0.sample_into(domain_length, rng, p);
    }
    ParticleEnsemble::new(pos, dim, domain_length, 0.0)
}

/// Initial positions where particle `i` draws from its own stream.
pub fn init_particles_from_streams(
    rho0: &InitialDensity,
    streams: &mut [StreamRng],
    dim: usize,
    domain_length: f64,
) -> Result<ParticleEnsemble> {
    rho0.validate(dim, domain_length)?;
    let mut pos = vec![0.0; streams.len() * dim];
    pos.par_chunks_mut(dim)
        .zip(streams.par_iter_mut())
        .for_each(|(p, rng)| rho0.sample_into(domain_length, rng, p));
    ParticleEnsemble::new(pos, dim, domain_length, 0.0)
}

/// What one step read and did.
#[derive(Debug, Clone)]
pub struct StepLog {
    /// Density argument `u_i` handed to the drift (zeros when unused).
    pub densities: Vec<f64>,
    pub max_drift_displacement: f64,
}

/// Advances the ensemble from step `step_index` to `step_index + 1`.
pub fn step_euler(
    ensemble: &mut ParticleEnsemble,
    plan: &SimulationPlan,
    step_index: usize,
    streams: &mut [StreamRng],
    tape: Option<&mut NoiseTape>,
) -> Result<StepLog> {
    let n = ensemble.len();
    let dim = ensemble.dim();
    if plan.kernel.n_particles() != n {
        return Err(Error::invalid(format!(
            "kernel scaled for N = {} but ensemble has {n} particles",
            plan.kernel.n_particles()
        )));
    }
    if streams.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: streams.len() });
    }
    let l = ensemble.domain_length();
    let t = plan.time_of_step(step_index);
    let dt = plan.dt;

    let densities = if plan.drift.depends_on_density() {
        let cells = CellList::build(ensemble, plan.kernel.support_radius())?;
        kde_self(&cells, &plan.kernel)
    } else {
        vec![0.0; n]
    };

    let mut increments = vec![0.0; n * dim];
    increments
        .par_chunks_mut(dim)
        .zip(streams.par_iter_mut())
        .try_for_each(|(inc, rng)| sample_stable_increment_into(&plan.noise, dt, rng, inc))?;

    let drift = &plan.drift;
    let max_drift = ensemble
        .positions_mut()
        .par_chunks_mut(dim)
        .zip(increments.par_chunks(dim))
        .zip(densities.par_iter())
        .map(|((x, inc), &u)| {
            let mut b = [0.0f64; crate::mollifier::MAX_DIM];
            let b = &mut b[..dim];
            drift.eval(t, x, u, b);
            let mut disp2 = 0.0;
            for a in 0..dim {
                let step = b[a] * dt;
                disp2 += step * step;
                x[a] = wrap(x[a] + step + inc[a], l);
            }
            disp2.sqrt()
        })
        .reduce(|| 0.0, f64::max);

    if let Some(i) = ensemble.positions().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { time: t + dt, what: format!("particle {} position", i / dim) });
    }
    if max_drift > drift.kappa() * dt * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "drift displacement {max_drift} exceeds kappa dt = {}",
            drift.kappa() * dt
        )));
    }
    if let Some(tape) = tape {
        tape.increments.extend_from_slice(&increments[..dim]);
    }
    ensemble.set_time(plan.time_of_step(step_index + 1));
    Ok(StepLog { densities, max_drift_displacement: max_drift })
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub snapshots: Vec<ParticleEnsemble>,
    pub tape: Option<NoiseTape>,
    /// Particle 1 at every step (flat, `(steps + 1) x d`) when recording.
    pub particle1_path: Option<Vec<f64>>,
}

pub fn simulate(plan: &SimulationPlan) -> Result<SimulationOutput> {
    plan.validate()?;
    let dim = plan.noise.dim;
    let mut streams = plan.streams();
    let mut ensemble = init_particles_from_streams(&plan.initial, &mut streams, dim, plan.domain_length)?;

    let steps = plan.n_steps();
    let mut wanted: Vec<usize> = if plan.snapshot_times.is_empty() {
        vec![0, steps]
    } else {
        plan.snapshot_times.iter().filter_map(|&t| plan.step_of_time(t)).collect()
    };
    wanted.sort_unstable();
    wanted.dedup();

    let mut snapshots = Vec::with_capacity(wanted.len());
    let mut next = 0;
    let record = plan.record_particle1_noise;
    let mut tape = record.then(|| NoiseTape::new(dim, plan.dt, plan.noise.alpha));
    let mut path = record.then(|| {
        let mut p = Vec::with_capacity((steps + 1) * dim);
        p.extend_from_slice(ensemble.particle(0));
        p
    });

    for k in 0..=steps {
        if next < wanted.len() && wanted[next] == k {
            snapshots.push(ensemble.clone());
            next += 1;
        }
        if k == steps {
            break;
        }
        step_euler(&mut ensemble, plan, k, &mut streams, tape.as_mut())?;
        if let Some(p) = path.as_mut() {
            p.extend_from_slice(ensemble.particle(0));
        }
    }
    Ok(SimulationOutput { snapshots, tape, particle1_path: path })
}

/// Euler path of the limit equation driven by the recorded noise, reading
/// `rho_t(X_t)` from the PDE solution. Returns `(steps + 1) x d` positions.
pub fn simulate_limit_sde(
    rho_path: &DensityPath,
    drift: &DriftSpec,
    tape: &NoiseTape,
    x0: &[f64],
    domain_length: f64,
) -> Result<Vec<f64>> {
    let dim = tape.dim;
    if x0.len() != dim || drift.dim() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: x0.len() });
    }
    let steps = tape.len();
    let horizon = steps as f64 * tape.dt;
    if drift.depends_on_density() {
        if rho_path.spec().dim != dim || rho_path.spec().domain_length != domain_length {
            return Err(Error::invalid("density path grid does not match the particle domain"));
        }
        if horizon > rho_path.t_end() + 1e-9 * tape.dt.max(1.0) {
            return Err(Error::invalid(format!(
                "tape horizon {horizon} (dt {}) exceeds the density path horizon {}",
                tape.dt,
                rho_path.t_end()
            )));
        }
    }
    let l = domain_length;
    let dt = tape.dt;
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity((steps + 1) * dim);
    out.extend_from_slice(&x);
    let mut b = vec![0.0; dim];
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = if drift.depends_on_density() { interpolate_density(rho_path, t, &x)? } else { 0.0 };
        drift.eval(t, &x, u, &mut b);
        let inc = tape.step(k);
        for a in 0..dim {
            let step = b[a] * dt;
            x[a] = wrap(x[a] + step + inc[a], l);
        }
        out.extend_from_slice(&x);
    }
    Ok(out)
}

/// `max_k |a_k ⊖ b_k|` over two flat `(steps + 1) x d` paths.
pub fn pathwise_error(path_a: &[f64], path_b: &[f64], dim: usize, domain_length: f64) -> Result<f64> {
    if path_a.len() != path_b.len() {
        return Err(Error::LengthMismatch { expected: path_a.len(), got: path_b.len() });
    }
    Ok(path_a
        .chunks_exact(dim)
        .zip(path_b.chunks_exact(dim))
        .map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(a, b)| torus_diff(*a, *b, domain_length).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollifier::kde_at_particles;

    fn plan(drift: DriftSpec, n: usize, alpha: f64) -> SimulationPlan {
        SimulationPlan {
            noise: StableNoiseConfig::new(alpha, 1).unwrap(),
            drift,
            kernel: MollifierKernel::bump(1.0, 1).unwrap().scaled(n, 0.25).unwrap(),
            initial: InitialDensity::WrappedGaussian { center: 10.0, sigma: 1.0 },
            n_particles: n,
            dt: 0.01,
            t_end: 0.1,
            domain_length: 20.0,
            seed: 11,
            replication: 0,
            record_particle1_noise: true,
            snapshot_times: vec![],
            stream_slots: None,
        }
    }

    #[test]
    fn rejects_bad_plans() {
        let mut p = plan(DriftSpec::zero(1), 16, 1.5);
        p.t_end = 0.105;
        assert!(simulate(&p).is_err());
        let mut p = plan(DriftSpec::zero(1), 16, 1.5);
        p.snapshot_times = vec![0.055];
        assert!(simulate(&p).is_err());
        let mut p = plan(DriftSpec::zero(1), 16, 1.5);
        p.n_particles = 17;
        assert!(simulate(&p).is_err());
        let mut rng = StreamFactory::new(1).auxiliary(0, 0);
        assert!(init_particles(&InitialDensity::Uniform, 0, 1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn zero_horizon_returns_initial_only() {
        let mut p = plan(DriftSpec::zero(1), 32, 1.5);
        p.t_end = 0.0;
        let out = simulate(&p).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].time(), 0.0);
        assert!(out.tape.unwrap().is_empty());
    }

    #[test]
    fn constant_drift_moves_every_particle() {
        let p = SimulationPlan { dt: 0.1, t_end: 0.1, ..plan(DriftSpec::constant(vec![0.5]).unwrap(), 64, 2.0) };
        let mut streams = p.streams();
        let mut ens = init_particles_from_streams(&p.initial, &mut streams, 1, 20.0).unwrap();
        let before = ens.clone();
        let mut tape = NoiseTape::new(1, 0.1, 2.0);
        step_euler(&mut ens, &p, 0, &mut streams, Some(&mut tape)).unwrap();
        // displacement minus recorded increment for particle 1 is exactly c dt
        let moved = torus_diff(ens.particle(0)[0], before.particle(0)[0], 20.0);
        assert!((moved - tape.step(0)[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn two_particle_drift_uses_hand_kde() {
        let mut p = plan(DriftSpec::truncated_burgers(1, 100.0, 0.9).unwrap(), 2, 1.5);
        p.dt = 0.1;
        p.t_end = 0.1;
        let k = p.kernel;
        let r = k.support_radius();
        let x = [5.0, 5.0 + 0.3 * r];
        let mut ens = ParticleEnsemble::new(x.to_vec(), 1, 20.0, 0.0).unwrap();
        let mut streams = p.streams();
        let log = step_euler(&mut ens, &p, 0, &mut streams, None).unwrap();
        let hand = (k.eval(&[0.0]) + k.eval(&[0.3 * r])) / 2.0;
        assert!((log.densities[0] - hand).abs() < 1e-14);
        assert!((log.densities[1] - hand).abs() < 1e-14);
    }

    #[test]
    fn synchronous_reads_use_pre_step_snapshot() {
        let p = plan(DriftSpec::truncated_burgers(1, 1.0, 0.9).unwrap(), 128, 1.5);
        let mut streams = p.streams();
        let mut ens = init_particles_from_streams(&p.initial, &mut streams, 1, 20.0).unwrap();
        for k in 0..3 {
            let snapshot = ens.clone();
            let log = step_euler(&mut ens, &p, k, &mut streams, None).unwrap();
            assert_eq!(log.densities, kde_at_particles(&snapshot, &p.kernel).unwrap());
        }
    }

    #[test]
    fn same_seed_same_snapshots() {
        let p = plan(DriftSpec::truncated_burgers(1, 1.0, 0.9).unwrap(), 200, 1.3);
        let a = simulate(&p).unwrap();
        let b = simulate(&p).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.tape, b.tape);
        let c = simulate(&SimulationPlan { seed: 12, ..p }).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn pathwise_error_cases() {
        assert_eq!(pathwise_error(&[1.0, 2.0], &[1.0, 2.0], 1, 10.0).unwrap(), 0.0);
        assert!((pathwise_error(&[1.0, 2.0], &[1.5, 2.5], 1, 10.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((pathwise_error(&[0.0], &[9.9], 1, 10.0).unwrap() - 0.1).abs() < 1e-12);
        assert!(pathwise_error(&[0.0], &[9.9, 1.0], 1, 10.0).is_err());
    }
}
