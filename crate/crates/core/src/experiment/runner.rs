//! Orchestration: one PDE solve per scenario and alpha, then independent
//! particle replications for every `N`, then aggregation and rate fits.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::scenario::ScenarioSpec;
use crate::error::{Error, Result};
use crate::error_metrics::{
    density_sup_error, fit_rate, lm_omega_norm, median_with_se, theoretical_slope, tv_error, ErrorKind, ErrorRecord,
    LmNorm, RateFit, TvEstimate, MIN_TV_SAMPLES,
};
use crate::fpe_solver::{diagnostics_density_estimates, solve_fpe_tagged, DensityPath, FpeConfig};
use crate::grid::GridSpec;
use crate::mollifier::{CellList, MollifierKernel, ParticleEnsemble};
use crate::particle_system::{pathwise_error, simulate, simulate_limit_sde, SimulationPlan};
use crate::rng::StreamFactory;
use crate::stable_noise::StableNoiseConfig;

/// What each replication should record beyond the density error.
#[derive(Debug, Clone, Copy, Default)]
pub struct StudyOptions {
    pub pathwise: bool,
    /// Particle 1's position at the horizon, for total variation.
    pub final_samples: bool,
    /// Keep replication 0's ensemble at the horizon for every `N`.
    pub keep_ensembles: bool,
}

#[derive(Debug, Clone)]
struct JobResult {
    n: usize,
    rep: usize,
    /// One density error per snapshot time.
    density: Vec<f64>,
    pathwise: Option<f64>,
    particle1_final: Vec<f64>,
    ensemble: Option<ParticleEnsemble>,
    seconds: f64,
    mean_neighbours: Option<f64>,
}

/// Wall-clock cost per particle count; never written to result files.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub n: usize,
    pub seconds_per_replication: f64,
    pub mean_neighbours: f64,
    pub support_radius: f64,
}

/// Raw output of one scenario at one alpha.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: ExperimentConfig,
    pub scenario: ScenarioSpec,
    pub alpha: f64,
    pub snapshots: Vec<f64>,
    pub path: DensityPath,
    pub records: Vec<ErrorRecord>,
    /// Particle 1 at the horizon per `N`, one row per replication.
    pub final_samples: Vec<(usize, Vec<f64>)>,
    /// Replication 0 at the horizon per `N`, when requested.
    pub ensembles: Vec<(usize, ParticleEnsemble)>,
    pub timings: Vec<Timing>,
    pub sup_non_increasing: bool,
    /// Reference mass within `L/4` of the cell edge, maximized over time.
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormRow {
    pub kind: ErrorKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub m: u32,
    pub value: f64,
    pub bootstrap_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MedianRow {
    pub kind: ErrorKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub value: f64,
    pub bootstrap_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRow {
    pub kind: ErrorKind,
    pub m: u32,
    pub t: f64,
    pub fit: RateFit,
}

/// Aggregated errors of one kind for one scenario and alpha.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub scenario: String,
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub kind: ErrorKind,
    pub norms: Vec<NormRow>,
    pub medians: Vec<MedianRow>,
    /// Fits at the horizon, one per moment order. Empty when fewer than
    /// three `N` are available or some error is exactly zero.
    pub fits: Vec<FitRow>,
    /// Why `fits` is empty, if it is.
    pub fit_skipped: Option<String>,
    /// Reference mass near the cell edge; large values mean the torus
    /// differs visibly from the whole space.
    pub boundary_mass: f64,
}

impl StudyReport {
    pub fn fit_for(&self, m: u32) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.m == m).map(|f| &f.fit)
    }

    /// Norm rows at the horizon for one moment order, in increasing `N`.
    pub fn norms_at_horizon(&self, m: u32, t_end: f64) -> Vec<&NormRow> {
        self.norms.iter().filter(|r| r.m == m && same_time(r.t, t_end)).collect()
    }

    pub fn medians_at_horizon(&self, t_end: f64) -> Vec<&MedianRow> {
        self.medians.iter().filter(|r| same_time(r.t, t_end)).collect()
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Solves the limit equation and runs every `(N, replication)` job.
pub fn run_study(config: &ExperimentConfig, alpha: f64, options: StudyOptions) -> Result<Study> {
    let scenario = ScenarioSpec::lookup(&config.scenario, config.domain_length)?;
    let d = scenario.dim;
    config.validate(d)?;
    scenario.check_drift(config.domain_length, config.t_end, config.seed)?;
    if options.pathwise {
        scenario.supports_pathwise(alpha)?;
    }
    let noise = StableNoiseConfig::new(alpha, d)?;
    let grid = GridSpec::new(config.domain_length, config.grid_n, d)?;
    let fpe = FpeConfig {
        noise,
        drift: scenario.drift.clone(),
        grid,
        dt_pde: config.dt_pde,
        t_end: config.t_end,
        dealias: true,
    };
    fpe.validate().map_err(|e| e.context(format!("scenario {}, alpha {alpha}", scenario.name)))?;
    let snapshots = config.snapshots();
    for &t in &snapshots {
        let k = t / config.dt_pde;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::invalid(format!("snapshot time {t} is not a multiple of dt_pde {}", config.dt_pde)));
        }
    }
    let rho0 = scenario.rho0.grid_field(&grid)?;
    let path = solve_fpe_tagged(&fpe, &rho0, scenario.name)
        .map_err(|e| e.context(format!("reference solve, scenario {}, alpha {alpha}", scenario.name)))?;
    let diagnostics = diagnostics_density_estimates(&path, scenario.q, scenario.beta(), 1.0 + 1e-6);
    let references = snapshots.iter().map(|&t| path.field_at(t)).collect::<Result<Vec<_>>>()?;
    let base_kernel = scenario.kernel()?;

    let mut plan_times = snapshots.clone();
    if !plan_times.iter().any(|&t| same_time(t, config.t_end)) {
        plan_times.push(config.t_end);
    }

    let jobs: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |rep| (n, rep)))
        .collect();
    let results = jobs
        .par_iter()
        .with_max_len(1)
        .map(|&(n, rep)| {
            let kernel = base_kernel.scaled(n, config.theta)?;
            let plan = SimulationPlan {
                noise,
                drift: scenario.drift.clone(),
                kernel,
                initial: scenario.rho0.clone(),
                n_particles: n,
                dt: config.dt,
                t_end: config.t_end,
                domain_length: config.domain_length,
                seed: config.seed,
                replication: rep as u64,
                record_particle1_noise: options.pathwise,
                snapshot_times: plan_times.clone(),
                stream_slots: None,
            };
            run_job(&plan, rep, &snapshots, &references, &path, options)
                .map_err(|e| e.context(format!("scenario {}, N {n}, rep {rep}, seed {}", scenario.name, config.seed)))
        })
        .collect::<Result<Vec<_>>>()?;

    let beta = scenario.beta();
    let mut records = Vec::new();
    for job in &results {
        for (t, v) in snapshots.iter().zip(&job.density) {
            records.push(record(config, &scenario, alpha, beta, job.n, Some(job.rep), *t, ErrorKind::DensitySup, *v));
        }
        if let Some(v) = job.pathwise {
            records.push(record(config, &scenario, alpha, beta, job.n, Some(job.rep), config.t_end, ErrorKind::Pathwise, v));
        }
    }
    records.sort_by(|a, b| {
        (a.kind, a.n, a.rep)
            .cmp(&(b.kind, b.n, b.rep))
            .then(a.t.total_cmp(&b.t))
    });

    let mut final_samples = Vec::new();
    let ensembles = results.iter().filter_map(|j| j.ensemble.clone().map(|e| (j.n, e))).collect();
    let mut timings = Vec::new();
    for &n in &config.n_list {
        let of_n: Vec<&JobResult> = results.iter().filter(|j| j.n == n).collect();
        if options.final_samples {
            final_samples.push((n, of_n.iter().flat_map(|j| j.particle1_final.iter().copied()).collect()));
        }
        timings.push(Timing {
            n,
            seconds_per_replication: of_n.iter().map(|j| j.seconds).sum::<f64>() / of_n.len() as f64,
            mean_neighbours: of_n.iter().find_map(|j| j.mean_neighbours).unwrap_or(0.0),
            support_radius: base_kernel.scaled(n, config.theta)?.support_radius(),
        });
    }

    Ok(Study {
        config: config.clone(),
        scenario,
        alpha,
        snapshots,
        path,
        records,
        final_samples,
        ensembles,
        timings,
        sup_non_increasing: diagnostics.sup_non_increasing,
        boundary_mass: diagnostics.max_boundary_mass,
    })
}

#[allow(clippy::too_many_arguments)]
fn record(
    config: &ExperimentConfig,
    scenario: &ScenarioSpec,
    alpha: f64,
    beta: f64,
    n: usize,
    rep: Option<usize>,
    t: f64,
    kind: ErrorKind,
    value: f64,
) -> ErrorRecord {
    ErrorRecord {
        scenario: scenario.name.to_string(),
        alpha,
        theta: config.theta,
        beta,
        n,
        rep,
        t,
        kind,
        value,
        seed: config.seed,
    }
}

fn run_job(
    plan: &SimulationPlan,
    rep: usize,
    snapshots: &[f64],
    references: &[crate::grid::GridField],
    path: &DensityPath,
    options: StudyOptions,
) -> Result<JobResult> {
    let start = Instant::now();
    let out = simulate(plan)?;
    let find = |t: f64| -> Result<&ParticleEnsemble> {
        out.snapshots
            .iter()
            .find(|s| same_time(s.time(), t))
            .ok_or_else(|| Error::invalid(format!("missing snapshot at t = {t}")))
    };
    let mut density = Vec::with_capacity(snapshots.len());
    for (&t, reference) in snapshots.iter().zip(references) {
        density.push(density_sup_error(reference, find(t)?, &plan.kernel)?);
    }
    let last = find(plan.t_end)?;
    let pathwise = if options.pathwise {
        let tape = out.tape.as_ref().ok_or_else(|| Error::invalid("missing noise tape"))?;
        let particle_path = out.particle1_path.as_ref().ok_or_else(|| Error::invalid("missing particle path"))?;
        let dim = plan.noise.dim;
        let limit = simulate_limit_sde(path, &plan.drift, tape, &particle_path[..dim], plan.domain_length)?;
        Some(pathwise_error(particle_path, &limit, dim, plan.domain_length)?)
    } else {
        None
    };
    let mean_neighbours = (rep == 0).then(|| mean_neighbours(last, &plan.kernel)).transpose()?;
    Ok(JobResult {
        n: plan.n_particles,
        rep,
        density,
        pathwise,
        particle1_final: last.particle(0).to_vec(),
        ensemble: (options.keep_ensembles && rep == 0).then(|| last.clone()),
        seconds: start.elapsed().as_secs_f64(),
        mean_neighbours,
    })
}

fn mean_neighbours(ensemble: &ParticleEnsemble, kernel: &MollifierKernel) -> Result<f64> {
    let cells = CellList::build(ensemble, kernel.support_radius())?;
    let total: f64 = ensemble
        .positions()
        .chunks_exact(ensemble.dim())
        .map(|x| cells.sum_within(x, |_| 1.0))
        .sum();
    Ok(total / ensemble.len() as f64)
}

fn kind_tag(kind: ErrorKind) -> u64 {
    match kind {
        ErrorKind::DensitySup => 1,
        ErrorKind::Tv => 2,
        ErrorKind::Pathwise => 3,
    }
}

/// `L^m(Ω)` norms, medians and horizon fits for one error kind of a study.
pub fn aggregate(study: &Study, kind: ErrorKind) -> Result<StudyReport> {
    let cfg = &study.config;
    let factory = StreamFactory::new(cfg.seed);
    let times: Vec<f64> = match kind {
        ErrorKind::DensitySup => study.snapshots.clone(),
        _ => vec![cfg.t_end],
    };
    let mut norms = Vec::new();
    let mut medians = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for &n in &cfg.n_list {
            let values: Vec<f64> = study
                .records
                .iter()
                .filter(|r| r.kind == kind && r.n == n && same_time(r.t, t))
                .map(|r| r.value)
                .collect();
            if values.is_empty() {
                return Err(Error::invalid(format!("no {kind} records for N = {n}, t = {t}")));
            }
            let index = ((n as u64) << 24) | ((ti as u64) << 8);
            for &m in &cfg.m {
                let mut rng = factory.auxiliary(0xB0 + kind_tag(kind), index | m as u64);
                let LmNorm { value, bootstrap_se } = lm_omega_norm(&values, m, &mut rng)?;
                norms.push(NormRow { kind, n, t, m, value, bootstrap_se });
            }
            let mut rng = factory.auxiliary(0xC0 + kind_tag(kind), index);
            let LmNorm { value, bootstrap_se } = median_with_se(&values, &mut rng)?;
            medians.push(MedianRow { kind, n, t, value, bootstrap_se });
        }
    }

    let beta = study.scenario.beta();
    let slope = theoretical_slope(cfg.theta, beta, study.scenario.dim);
    let mut fits = Vec::new();
    let mut fit_skipped = None;
    for &m in &cfg.m {
        let rows: Vec<&NormRow> = norms.iter().filter(|r| r.m == m && same_time(r.t, cfg.t_end)).collect();
        let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.value).collect();
        match fit_rate(&ns, &errs, slope) {
            Ok(fit) => fits.push(FitRow { kind, m, t: cfg.t_end, fit }),
            Err(e) => fit_skipped = Some(e.to_string()),
        }
    }
    if !fits.is_empty() {
        fit_skipped = None;
    }
    Ok(StudyReport {
        scenario: study.scenario.name.to_string(),
        alpha: study.alpha,
        theta: cfg.theta,
        beta,
        kind,
        norms,
        medians,
        fits,
        fit_skipped,
        boundary_mass: study.boundary_mass,
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub study: Study,
    pub report: StudyReport,
}

/// Density error study for every alpha in the config.
pub fn run_convergence(config: &ExperimentConfig, options: StudyOptions) -> Result<Vec<ConvergenceRun>> {
    config
        .alpha
        .iter()
        .map(|&alpha| {
            let study = run_study(config, alpha, options)?;
            let report = aggregate(&study, ErrorKind::DensitySup)?;
            Ok(ConvergenceRun { study, report })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PathwiseRun {
    pub study: Study,
    pub report: StudyReport,
}

/// Coupled particle / limit-equation runs for every alpha in the config.
pub fn run_pathwise(config: &ExperimentConfig, options: StudyOptions) -> Result<Vec<PathwiseRun>> {
    config
        .alpha
        .iter()
        .map(|&alpha| {
            let study = run_study(config, alpha, StudyOptions { pathwise: true, ..options })?;
            let report = aggregate(&study, ErrorKind::Pathwise)?;
            Ok(PathwiseRun { study, report })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TvRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub estimate: TvEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakReport {
    pub scenario: String,
    pub alpha: f64,
    pub rows: Vec<TvRow>,
    /// `TV(N_min) - TV(N_max)`.
    pub decrease: f64,
    /// Sum of the two sensitivity half-widths.
    pub band: f64,
    pub decreases_beyond_band: bool,
}

#[derive(Debug, Clone)]
pub struct WeakRun {
    pub study: Study,
    pub report: WeakReport,
    pub records: Vec<ErrorRecord>,
}

/// Total variation of particle 1's law at the horizon, one sample per replication.
pub fn run_weak(config: &ExperimentConfig, options: StudyOptions) -> Result<Vec<WeakRun>> {
    if config.replications < MIN_TV_SAMPLES {
        return Err(Error::invalid(format!(
            "undersampled: total variation needs >= {MIN_TV_SAMPLES} replications, got {}",
            config.replications
        )));
    }
    config
        .alpha
        .iter()
        .map(|&alpha| {
            let study = run_study(config, alpha, StudyOptions { final_samples: true, ..options })?;
            let (report, records) = weak_report(&study)?;
            Ok(WeakRun { study, report, records })
        })
        .collect()
}

/// Total variation estimates from a study that kept final samples.
pub fn weak_report(study: &Study) -> Result<(WeakReport, Vec<ErrorRecord>)> {
    let cfg = &study.config;
    let reference = study.path.field_at(cfg.t_end)?;
    let factory = StreamFactory::new(cfg.seed);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (n, samples) in &study.final_samples {
        let mut rng = factory.auxiliary(0xD0, *n as u64);
        let estimate = tv_error(samples, study.scenario.dim, &reference, &mut rng)
            .map_err(|e| e.context(format!("total variation at N = {n}")))?;
        records.push(record(
            cfg,
            &study.scenario,
            study.alpha,
            study.scenario.beta(),
            *n,
            None,
            cfg.t_end,
            ErrorKind::Tv,
            estimate.value,
        ));
        rows.push(TvRow { n: *n, estimate });
    }
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.estimate, b.estimate),
        _ => return Err(Error::invalid("no particle counts to compare")),
    };
    let decrease = first.value - last.value;
    let band = first.sensitivity + last.sensitivity;
    let report = WeakReport {
        scenario: study.scenario.name.to_string(),
        alpha: study.alpha,
        decreases_beyond_band: rows.len() >= 2 && decrease > band,
        rows,
        decrease,
        band,
    };
    Ok((report, records))
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaSlope {
    pub alpha: f64,
    pub m: u32,
    pub slope: f64,
    pub theoretical_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossAlphaReport {
    pub scenario: String,
    pub slopes: Vec<AlphaSlope>,
    /// Largest pairwise slope difference per moment order.
    pub max_difference: Vec<(u32, f64)>,
}

/// Slopes of the density study across alphas.
pub fn cross_alpha_report(runs: &[ConvergenceRun]) -> Result<CrossAlphaReport> {
    let first = runs.first().ok_or_else(|| Error::invalid("no runs to compare"))?;
    let mut slopes = Vec::new();
    for run in runs {
        for f in &run.report.fits {
            slopes.push(AlphaSlope { alpha: run.alpha(), m: f.m, slope: f.fit.slope, theoretical_slope: f.fit.theoretical_slope });
        }
    }
    let mut max_difference = Vec::new();
    for &m in &first.study.config.m {
        let s: Vec<f64> = slopes.iter().filter(|a| a.m == m).map(|a| a.slope).collect();
        if s.len() != runs.len() {
            return Err(Error::invalid(format!("missing rate fit for m = {m}")));
        }
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        max_difference.push((m, hi - lo));
    }
    Ok(CrossAlphaReport { scenario: first.report.scenario.clone(), slopes, max_difference })
}

impl ConvergenceRun {
    pub fn alpha(&self) -> f64 {
        self.study.alpha
    }
}

/// Convergence at several alphas with shared parameters and seed.
pub fn run_cross_alpha(
    config: &ExperimentConfig,
    options: StudyOptions,
) -> Result<(Vec<ConvergenceRun>, CrossAlphaReport)> {
    if config.alpha.len() < 2 {
        return Err(Error::invalid("cross-alpha comparison needs at least two alphas"));
    }
    if !config.alpha.contains(&2.0) {
        return Err(Error::invalid("cross-alpha comparison needs alpha = 2 among the alphas"));
    }
    let runs = run_convergence(config, options)?;
    let report = cross_alpha_report(&runs)?;
    Ok((runs, report))
}
