use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use densde::experiment::output::{
    write_density_path_binary, write_error_tables, write_json, write_snapshot_csv, Provenance, SnapshotMeta,
};
use densde::experiment::scenario::HypothesisBranch;
use densde::experiment::{
    run_convergence, run_cross_alpha, run_pathwise, run_weak, ConfigFile, ExperimentConfig, ScenarioSpec, Study,
    StudyOptions,
};
use densde::mollifier::{kde_at_points, MollifierKernel, ParticleEnsemble};
use densde::quad::adaptive_simpson;
use densde::{Error, Result, StreamFactory};

#[derive(Parser)]
#[command(name = "densde", version, about = "Particle approximation of density-dependent SDEs with stable noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML file with experiment parameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Also write the reference solution and replication-0 ensembles
    #[arg(long, global = true)]
    dump: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Density error against N and its fitted rate
    Convergence,
    /// Coupled particle / limit-equation trajectories
    Pathwise,
    /// Total variation of one particle's law at the horizon
    Weak,
    /// Density rates at several alphas
    CrossAlpha,
    /// Mollifier normalization and neighbour search against brute force
    KernelCheck {
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
}

#[derive(Serialize)]
struct ScenarioInfo {
    name: &'static str,
    dim: usize,
    beta: f64,
    kappa: f64,
    rho0_holder: f64,
    /// `None` stands for `q = ∞`.
    q: Option<f64>,
    kernel_radius: f64,
    branch: HypothesisBranch,
    notes: &'static str,
}

impl From<&ScenarioSpec> for ScenarioInfo {
    fn from(s: &ScenarioSpec) -> Self {
        Self {
            name: s.name,
            dim: s.dim,
            beta: s.beta(),
            kappa: s.drift.kappa(),
            rho0_holder: s.rho0_holder(),
            q: s.q.is_finite().then_some(s.q),
            kernel_radius: s.kernel_radius,
            branch: s.branch,
            notes: s.notes,
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    provenance: Provenance,
    config: &'a ExperimentConfig,
    scenario: ScenarioInfo,
    results: T,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = ExperimentConfig::from_file(&file);
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(s) = &common.scenario {
        cfg.scenario = s.clone();
    }
    Ok(cfg)
}

fn report_timings(label: &str, studies: &[&Study], started: Instant) {
    for s in studies {
        if s.boundary_mass > 1e-8 {
            eprintln!(
                "[{label}] alpha {}: reference mass within L/4 of the cell edge reaches {:.2e}",
                s.alpha, s.boundary_mass
            );
        }
        for t in &s.timings {
            eprintln!(
                "[{label}] alpha {} N {:>6}: {:.3} s/replication, r_N {:.4}, mean neighbours {:.1}",
                s.alpha, t.n, t.seconds_per_replication, t.support_radius, t.mean_neighbours
            );
        }
    }
    eprintln!("[{label}] total {:.1} s", started.elapsed().as_secs_f64());
}

fn dump(out: &Path, studies: &[&Study]) -> Result<()> {
    for s in studies {
        let tag = format!("{}_alpha{}", s.scenario.name, s.alpha);
        let mut w = BufWriter::new(File::create(out.join(format!("density_{tag}.bin")))?);
        write_density_path_binary(&mut w, &s.path)?;
        for (n, e) in &s.ensembles {
            let meta = SnapshotMeta { alpha: s.alpha, theta: s.config.theta, seed: s.config.seed };
            let w = BufWriter::new(File::create(out.join(format!("snapshot_{tag}_N{n}.csv")))?);
            write_snapshot_csv(w, e, meta)?;
        }
    }
    Ok(())
}

fn finish<T: Serialize>(
    common: &Common,
    command: &str,
    cfg: &ExperimentConfig,
    studies: &[&Study],
    records: Vec<densde::ErrorRecord>,
    results: T,
    started: Instant,
) -> Result<()> {
    let out = &common.out_dir;
    write_error_tables(out, &records)?;
    let scenario = ScenarioSpec::lookup(&cfg.scenario, cfg.domain_length)?;
    let summary = Summary { command, provenance: Provenance::current(), config: cfg, scenario: (&scenario).into(), results };
    write_json(&out.join("summary.json"), &summary)?;
    if common.dump {
        dump(out, studies)?;
    }
    report_timings(command, studies, started);
    Ok(())
}

fn print_fits(label: &str, reports: &[&densde::experiment::StudyReport]) {
    for r in reports {
        for f in &r.fits {
            println!(
                "{label} alpha {} m {}: slope {:.4} (predicted {:.4}), r^2 {:.3}",
                r.alpha, f.m, f.fit.slope, f.fit.theoretical_slope, f.fit.r_squared
            );
        }
        if let Some(why) = &r.fit_skipped {
            println!("{label} alpha {}: no rate fit ({why})", r.alpha);
        }
    }
}

#[derive(Serialize)]
struct KernelCheck {
    dim: usize,
    base_radius: f64,
    normalization_constant: f64,
    mass_by_quadrature: f64,
    support_radii: Vec<(usize, f64)>,
    brute_force_max_diff: f64,
}

fn kernel_check(common: &Common, cfg: &ExperimentConfig, dim: usize) -> Result<()> {
    let base = MollifierKernel::bump(1.0, dim)?;
    let r = base.base_radius();
    let area = densde::mollifier::unit_sphere_area(dim);
    let mass = area * adaptive_simpson(|s| base.eval_r2(s * s) * s.powi(dim as i32 - 1), 0.0, r, 1e-13);
    let support_radii = cfg
        .n_list
        .iter()
        .map(|&n| Ok((n, base.scaled(n, cfg.theta)?.support_radius())))
        .collect::<Result<Vec<_>>>()?;

    let l = cfg.domain_length;
    let mut rng = StreamFactory::new(cfg.seed).auxiliary(0x4B, dim as u64);
    let mut worst: f64 = 0.0;
    for &n in cfg.n_list.iter().filter(|&&n| n <= 2048) {
        use rand::Rng;
        let pos: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>() * l).collect();
        let ens = ParticleEnsemble::new(pos, dim, l, 0.0)?;
        let k = base.scaled(n, cfg.theta)?;
        let fast = kde_at_points(&ens, &k, ens.positions())?;
        for (i, x) in ens.positions().chunks_exact(dim).enumerate() {
            let mut s = 0.0;
            for y in ens.positions().chunks_exact(dim) {
                let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| densde::grid::torus_diff(*a, *b, l)).collect();
                s += k.eval(&diff);
            }
            worst = worst.max((fast[i] - s / n as f64).abs());
        }
    }
    let check = KernelCheck {
        dim,
        base_radius: r,
        normalization_constant: base.normalization_constant(),
        mass_by_quadrature: mass,
        support_radii,
        brute_force_max_diff: worst,
    };
    println!("kernel mass {mass:.12}, cell list vs brute force {worst:.3e}");
    write_json(&common.out_dir.join("kernel_check.json"), &check)?;
    if (mass - 1.0).abs() > 1e-10 || worst > 1e-12 {
        return Err(Error::Tolerance(format!("kernel mass {mass}, brute-force difference {worst:e}")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(common)?;
    let started = Instant::now();
    let options = StudyOptions { keep_ensembles: common.dump, ..Default::default() };
    match &cli.command {
        Command::Convergence => {
            let runs = run_convergence(&cfg, options)?;
            let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
            print_fits("density", &reports);
            let studies: Vec<_> = runs.iter().map(|r| &r.study).collect();
            let records = runs.iter().flat_map(|r| r.study.records.clone()).collect();
            finish(common, "convergence", &cfg, &studies, records, reports, started)
        }
        Command::Pathwise => {
            let runs = run_pathwise(&cfg, options)?;
            let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
            print_fits("pathwise", &reports);
            let studies: Vec<_> = runs.iter().map(|r| &r.study).collect();
            let records = runs.iter().flat_map(|r| r.study.records.clone()).collect();
            finish(common, "pathwise", &cfg, &studies, records, reports, started)
        }
        Command::Weak => {
            let runs = run_weak(&cfg, options)?;
            for r in &runs {
                for row in &r.report.rows {
                    let e = &row.estimate;
                    println!(
                        "tv alpha {} N {}: {:.4} (band ±{:.4}, bootstrap {:.4})",
                        r.report.alpha, row.n, e.value, e.sensitivity, e.bootstrap_error
                    );
                }
            }
            let studies: Vec<_> = runs.iter().map(|r| &r.study).collect();
            let records = runs.iter().flat_map(|r| r.records.clone()).collect();
            let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
            finish(common, "weak", &cfg, &studies, records, reports, started)
        }
        Command::CrossAlpha => {
            let (runs, report) = run_cross_alpha(&cfg, options)?;
            let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
            print_fits("density", &reports);
            for (m, d) in &report.max_difference {
                println!("m {m}: largest slope difference across alpha {d:.4}");
            }
            let studies: Vec<_> = runs.iter().map(|r| &r.study).collect();
            let records = runs.iter().flat_map(|r| r.study.records.clone()).collect();
            #[derive(Serialize)]
            struct Results<'a> {
                runs: Vec<&'a densde::experiment::StudyReport>,
                comparison: &'a densde::experiment::CrossAlphaReport,
            }
            finish(common, "cross-alpha", &cfg, &studies, records, Results { runs: reports, comparison: &report }, started)
        }
        Command::KernelCheck { dim } => kernel_check(common, &cfg, *dim),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
