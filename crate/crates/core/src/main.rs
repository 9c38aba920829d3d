use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use perfwall::effective::{neumann_eigenvalues, resonance_frequency, solve_effective_unchecked};
use perfwall::fem::SourceTerm;
use perfwall::geometry::{build_grid, validate_params, Grid, ParamRecord};
use perfwall::harness::{
    gate_config, integration_by_parts_check, manufactured_check, run_homogenization_study,
    run_resonance_sweep, RowStatus, SourceSpec, StudyConfig, StudyReport, RESIDUAL_GATE,
};
use perfwall::io::report::{write_manufactured_csv, write_profile};
use perfwall::io::{emit_config, emit_report, parse_config, OutputDir, RunManifest};
use perfwall::multiscale::{
    channel_diagnostics, extract_flux, extract_v_eps, solve_epsilon_problem_unchecked,
};
use perfwall::{Error, Result};

/// Random fields per grid in the flux identity check of `check`.
const IDENTITY_SAMPLES: usize = 100;

#[derive(Parser)]
#[command(
    name = "perfwall",
    version,
    about = "Helmholtz problems on perforated walls and their limit systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `output.dir` of the config
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent study rows
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    threads: usize,
    /// Seed of the randomized checks
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    seed: u64,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long, value_name = "F")]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution convergence and the channel flux identity
    Check {
        #[arg(long, value_name = "F")]
        config: Option<PathBuf>,
    },
    /// Solve the perforated-domain problem at the configured eps
    SolveEps(ConfigArg),
    /// Solve the limit system (u, v, w)
    SolveEffective(ConfigArg),
    /// Epsilon sweep against the limit system
    Homogenize(ConfigArg),
    /// Frequency sweep of the resonator response
    Sweep(ConfigArg),
    /// Print parameters, resonance data and grid sizes
    Info(ConfigArg),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} threads: {e}", cli.threads);
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn out_dir(cli: &Cli, cfg: &StudyConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn finish(name: &str, cfg: &StudyConfig, out: OutputDir) -> Result<()> {
    let manifest = RunManifest::new(name, emit_config(cfg), out.files().to_vec());
    let path = manifest.write(out.dir())?;
    info!("wrote {} files and {}", out.files().len(), path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Check { config } => check(cli, config.as_deref()),
        Command::SolveEps(c) => solve_eps(cli, &parse_config(&c.config)?),
        Command::SolveEffective(c) => solve_effective(cli, &parse_config(&c.config)?),
        Command::Homogenize(c) => {
            let cfg = parse_config(&c.config)?;
            let report = run_homogenization_study(&cfg)?;
            let mut out = OutputDir::create(&out_dir(cli, &cfg))?;
            for row in &report.rows {
                match &row.status {
                    RowStatus::Ok => {}
                    RowStatus::Invalid => warn!(
                        "eps = {}: residual {:e} above {RESIDUAL_GATE:e}, row marked invalid",
                        row.eps, row.residual
                    ),
                    RowStatus::Failed(why) => warn!("eps = {}: failed: {why}", row.eps),
                }
            }
            emit_report(&StudyReport::Homogenization(report), &mut out)?;
            finish("homogenize", &cfg, out)?;
            Ok(0)
        }
        Command::Sweep(c) => {
            let cfg = parse_config(&c.config)?;
            let report = run_resonance_sweep(&cfg)?;
            match report.peak {
                Some(peak) => println!(
                    "peak omega = {peak}, predicted {} (k = {}), growth exponent {}",
                    report.predicted,
                    report.dominant_k,
                    report
                        .growth_exponent
                        .map_or("n/a".into(), |g| g.to_string())
                ),
                None => println!("no peak found; predicted {}", report.predicted),
            }
            let mut out = OutputDir::create(&out_dir(cli, &cfg))?;
            emit_report(&StudyReport::Resonance(report), &mut out)?;
            finish("sweep", &cfg, out)?;
            Ok(0)
        }
        Command::Info(c) => info_command(&parse_config(&c.config)?),
    }
}

fn check(cli: &Cli, config: Option<&Path>) -> Result<u8> {
    let base = match config {
        Some(path) => parse_config(path)?,
        None => StudyConfig::with_defaults(validate_params(&ParamRecord::default())?),
    };
    let cfg = gate_config(&base);
    let report = manufactured_check(&cfg)?;
    let identity = integration_by_parts_check(&cfg, cli.seed, IDENTITY_SAMPLES)?;
    let mut out = OutputDir::create(&out_dir(cli, &cfg))?;
    out.write("manufactured.csv", |w| write_manufactured_csv(&report, w))?;
    out.write("flux_identity.csv", |w| {
        use std::io::Write;
        writeln!(w, "eps,samples,windows,max_mismatch")?;
        for r in &identity.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.eps, r.samples, r.windows, r.max_mismatch
            )?;
        }
        Ok(())
    })?;
    finish("check", &cfg, out)?;
    for row in &report.rows {
        println!(
            "{:<13} h = {:<8} E_L2 = {:<10.3e} rate_L2 = {}",
            row.case,
            row.h,
            row.e_l2,
            row.rate_l2.map_or("-".into(), |r| format!("{r:.3}"))
        );
    }
    for r in &identity.rows {
        println!(
            "flux identity eps = {}: max mismatch {:e} over {} windows",
            r.eps, r.max_mismatch, r.windows
        );
    }
    let mut failures = report.failures.clone();
    if !identity.passed() {
        failures.push("volume and boundary flux forms disagree".into());
    }
    if failures.is_empty() {
        println!("all gates passed");
        Ok(0)
    } else {
        for f in &failures {
            eprintln!("gate failed: {f}");
        }
        Ok(3)
    }
}

fn source_closure(
    cfg: &StudyConfig,
    p: perfwall::geometry::GeometryParams,
) -> impl Fn(f64, f64) -> f64 + Sync {
    let source = cfg.source;
    move |x, y| source.eval(&p, x, y)
}

fn solve_eps(cli: &Cli, cfg: &StudyConfig) -> Result<u8> {
    let p = cfg.params;
    let grid = Arc::new(build_grid(&p, &cfg.resolution)?);
    info!("perforated grid: {} unknowns", grid.unknown_count());
    let f = source_closure(cfg, p);
    let solved = solve_epsilon_problem_unchecked(
        &grid,
        &p,
        SourceTerm::Function(&f),
        cfg.source.assembly_options(),
    )?;
    let v_eps = extract_v_eps(&solved.u, &p)?;
    let j = extract_flux(&solved.u, &p)?;
    let diag = channel_diagnostics(&solved.u, &p, &[0..p.period_count()])?;

    let mut out = OutputDir::create(&out_dir(cli, cfg))?;
    out.field("u_eps.csv", &solved.u)?;
    out.profile("v_eps.csv", &v_eps)?;
    out.write("j_eps.csv", |w| write_profile(j.step_points(), w))?;
    out.write("grid_cells.txt", |w| grid.write_dump(w))?;
    out.write("summary.csv", |w| {
        use std::io::Write;
        writeln!(w, "quantity,value")?;
        writeln!(w, "unknowns,{}", grid.unknown_count())?;
        writeln!(w, "residual,{}", solved.residual)?;
        writeln!(w, "backward_error,{}", solved.backward_error)?;
        writeln!(w, "d2_l1,{}", diag.d2_l1_scaled)?;
        writeln!(w, "d1_l1,{}", diag.d1_l1_scaled)?;
        writeln!(w, "total_flux,{}", j.total())?;
        writeln!(w, "flux_form_mismatch,{}", diag.max_window_mismatch())
    })?;
    finish("solve-eps", cfg, out)?;
    println!(
        "{} unknowns, relative residual {:e}",
        grid.unknown_count(),
        solved.residual
    );
    residual_exit(solved.residual)
}

fn solve_effective(cli: &Cli, cfg: &StudyConfig) -> Result<u8> {
    let p = cfg.params;
    let grid0 = Arc::new(Grid::rectangle(
        p.a(),
        p.b(),
        cfg.resolution.bulk_size(p.eps()),
    )?);
    let f = source_closure(cfg, p);
    let strip = cfg.source.strip_profile(&grid0.trace_grid());
    let eff = solve_effective_unchecked(&grid0, &p, SourceTerm::Function(&f), strip.as_ref())?;
    let mut out = OutputDir::create(&out_dir(cli, cfg))?;
    out.field("u.csv", &eff.u)?;
    out.profile("v.csv", &eff.v)?;
    out.field("w.csv", &eff.w)?;
    finish("solve-effective", cfg, out)?;
    println!(
        "{} unknowns, relative residual {:e}",
        grid0.unknown_count(),
        eff.residual
    );
    residual_exit(eff.residual)
}

fn residual_exit(residual: f64) -> Result<u8> {
    if residual <= RESIDUAL_GATE {
        Ok(0)
    } else {
        eprintln!("error: relative residual {residual:e} above {RESIDUAL_GATE:e}; outputs are kept for inspection");
        Ok(Error::InaccurateSolve { residual }.exit_code() as u8)
    }
}

fn info_command(cfg: &StudyConfig) -> Result<u8> {
    let p = &cfg.params;
    let r = p.record();
    println!(
        "a = {}, b = {}, L = {}, V = {}, alpha = {}",
        r.a, r.b, r.channel_length, r.strip_height, r.alpha
    );
    println!(
        "eps = {} ({} periods), omega = {}",
        r.eps,
        p.period_count(),
        r.omega
    );
    println!("channel width alpha*eps^3 = {}", p.channel_width());
    println!("resonator frequency omega_H = {}", resonance_frequency(p));
    let w2 = r.omega * r.omega;
    let mut eig = neumann_eigenvalues(r.a, r.b, 8);
    eig.sort_by(|x, y| (x.2 - w2).abs().total_cmp(&(y.2 - w2).abs()));
    println!("Neumann eigenvalues of the bulk nearest omega^2 = {w2}:");
    for (m, n, l) in eig.iter().take(4) {
        println!("  (m, n) = ({m}, {n}): {l}");
    }
    match cfg.source {
        SourceSpec::CosineMode { m, n } => println!("source: cosine mode ({m}, {n})"),
        SourceSpec::GaussianBump {
            center,
            width,
            amplitude,
        } => {
            println!(
                "source: gaussian bump at ({}, {}), width {width}, amplitude {amplitude}",
                center[0], center[1]
            )
        }
        SourceSpec::Constant(c) => println!("source: constant {c}"),
    }
    for &eps in &cfg.eps_list {
        let pe = p.with_eps(eps)?;
        match build_grid(&pe, &cfg.resolution) {
            Ok(g) => println!("eps = {eps}: {} unknowns", g.unknown_count()),
            Err(e @ Error::GridTooLarge { .. }) => println!("eps = {eps}: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(0)
}
