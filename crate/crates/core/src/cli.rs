//! Command-line front end: `levy-kb <simulate|riccati|filter|bench|converge>`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::bench::{emit_table, Bench, Statistic, TableFormat};
use crate::config::{RunConfig, SolveSection, Study, VariantName};
use crate::error::{Error, Result};
use crate::filter::{filter_convergence_study, run_filter, FilterVariant};
use crate::levy::{empirical_l1_convergence, upsilon_infinity, Cutoff};
use crate::linalg;
use crate::path::{fmt_f64, TimeGrid};
use crate::riccati::{
    check_moment_bound, phi_limit, riccati_convergence_study, solve_riccati, NoiseNormalization,
    RiccatiSolution,
};
use crate::stats;
use crate::system::{
    observation_l1_convergence, simulate_observation, simulate_observations_coupled,
    simulate_system, LinearModel,
};

#[derive(Debug, Parser)]
#[command(
    name = "levy-kb",
    version,
    about = "Kalman-Bucy filtering with Lévy noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the state and observation paths.
    Simulate(RunArgs),
    /// Solve the Riccati equation.
    Riccati(RunArgs),
    /// Simulate one path and run the filter on it.
    Filter(RunArgs),
    /// Monte Carlo comparison of filters on the OU benchmark.
    Bench(RunArgs),
    /// Truncation-convergence studies.
    Converge(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the root seed of the config (and of `[bench]`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `bench.replicates` and `converge.replicates`.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Riccati(_) => "riccati",
            Command::Filter(_) => "filter",
            Command::Bench(_) => "bench",
            Command::Converge(_) => "converge",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Riccati(a)
            | Command::Filter(a)
            | Command::Bench(a)
            | Command::Converge(a) => a,
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    program: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    files: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        info!("wrote {}", self.dir.join(name).display());
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Load the config, apply the flag overrides and run the subcommand.
/// Returns the files written, relative to `--out`.
pub fn run(command: &Command) -> Result<Vec<String>> {
    let args = command.args();
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.bench.root_seed = seed;
    }
    if let Some(r) = args.replicates {
        cfg.bench.replicates = r;
        cfg.converge.replicates = r;
    }
    let cfg = cfg.resolved()?;
    let mut out = Output::new(&args.out)?;
    out.write("resolved_config.toml", &cfg.to_toml()?)?;

    let work = |out: &mut Output| match command {
        Command::Simulate(_) => simulate(&cfg, out),
        Command::Riccati(_) => riccati(&cfg, out),
        Command::Filter(_) => filter(&cfg, out),
        Command::Bench(_) => bench(&cfg, out),
        Command::Converge(_) => converge(&cfg, out),
    };
    match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("--threads", e.to_string()))?
            .install(|| work(&mut out))?,
        None => work(&mut out)?,
    }

    let mut files = out.files.clone();
    files.push("metadata.toml".into());
    let meta = Metadata {
        program: "levy-kb",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: command.name(),
        seed: match command {
            Command::Bench(_) => cfg.bench.root_seed,
            _ => cfg.seed,
        },
        files: files.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::config("metadata", e.to_string()))?;
    out.write("metadata.toml", &text)?;
    Ok(files)
}

fn cutoff_label(n: f64) -> String {
    format!("n{n}")
}

fn simulate(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    model.validate_on_grid(&grid)?;
    let system = simulate_system(&model, &grid, cfg.seed)?;
    out.write("system.csv", &system.to_csv_with_prefix("y"))?;
    if cfg.simulate.cutoffs.is_empty() {
        let obs = simulate_observation(&model, &system, Cutoff::Infinite, cfg.seed)?;
        return out.write("observation.csv", &obs.to_csv_with_prefix("z"));
    }
    let mut cutoffs = vec![Cutoff::Infinite];
    cutoffs.extend(cfg.simulate.cutoffs.iter().map(|&n| Cutoff::Finite(n)));
    let paths = simulate_observations_coupled(&model, &system, &cutoffs, cfg.seed)?;
    out.write("observation.csv", &paths[0].to_csv_with_prefix("z"))?;
    for (n, path) in cfg.simulate.cutoffs.iter().zip(&paths[1..]) {
        out.write(
            &format!("observation_{}.csv", cutoff_label(*n)),
            &path.to_csv_with_prefix("z"),
        )?;
    }
    Ok(())
}

fn normalization(
    model: &LinearModel,
    grid: &TimeGrid,
    section: &SolveSection,
    field: &str,
) -> Result<NoiseNormalization> {
    match section.variant {
        VariantName::Standard => {
            let cutoff = section.cutoff.map_or(Cutoff::Infinite, Cutoff::Finite);
            NoiseNormalization::standard(model, cutoff, section.convention, grid)
                .map_err(|e| Error::config(format!("{field}.cutoff"), e.to_string()))
        }
        VariantName::Limiting => phi_limit(model, &section.phi_cutoffs, section.convention, grid),
        VariantName::Degenerate => Ok(NoiseNormalization::zero(model, grid)),
    }
}

fn riccati_summary(
    model: &LinearModel,
    section: &SolveSection,
    sol: &RiccatiSolution,
) -> Result<String> {
    let mut s = format!(
        "variant: {}\nconvention: {}\nmethod: {}\nsteps: {}\nmax relative asymmetry: {:.3e}\nterminal max-norm: {}\n",
        sol.variant(),
        sol.convention(),
        RiccatiSolution::METHOD,
        sol.grid().steps(),
        sol.max_asymmetry(),
        fmt_f64(linalg::max_abs(sol.terminal())),
    );
    if section.variant == VariantName::Standard {
        let ratio = check_moment_bound(model, sol)?;
        s.push_str(&format!("max ||S||_max / (d1 E|Y|^2): {ratio:.6}\n"));
    }
    Ok(s)
}

fn riccati(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    model.validate_on_grid(&grid)?;
    let norm = normalization(&model, &grid, &cfg.riccati, "riccati")?;
    let sol = solve_riccati(&model, &norm, cfg.riccati.variant.into(), &grid)?;
    out.write("riccati.csv", &sol.to_csv())?;
    if let Some(d) = norm.diagnostics() {
        out.write("phi_diagnostics.md", &d.to_markdown())?;
    }
    out.write("summary.md", &riccati_summary(&model, &cfg.riccati, &sol)?)
}

fn filter(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    model.validate_on_grid(&grid)?;
    let section = &cfg.filter;
    let norm = normalization(&model, &grid, section, "filter")?;
    let variant = match section.variant {
        VariantName::Standard => FilterVariant::Standard {
            cutoff: section.cutoff.map_or(Cutoff::Infinite, Cutoff::Finite),
        },
        VariantName::Limiting => FilterVariant::Limiting,
        VariantName::Degenerate => FilterVariant::Degenerate,
    };
    let sol = solve_riccati(&model, &norm, variant.riccati_variant(), &grid)?;
    let system = simulate_system(&model, &grid, cfg.seed)?;
    let obs = simulate_observation(&model, &system, Cutoff::Infinite, cfg.seed)?;
    let run = run_filter(&model, &obs, &sol, &norm, variant)?;
    out.write("system.csv", &system.to_csv_with_prefix("y"))?;
    out.write("observation.csv", &obs.to_csv_with_prefix("z"))?;
    out.write("filter.csv", &run.to_csv(section.export_gains))?;
    if let Some(d) = norm.diagnostics() {
        out.write("phi_diagnostics.md", &d.to_markdown())?;
    }
    let errors = run.squared_errors(&system)?;
    let mut summary = format!("filter: {variant}\n");
    summary.push_str(&format!("path MSE: {}\n", fmt_f64(stats::mean(&errors))));
    summary.push_str(&format!(
        "terminal squared error: {}\n",
        fmt_f64(*errors.last().unwrap_or(&0.0))
    ));
    summary.push_str(&riccati_summary(&model, section, &sol)?);
    out.write("summary.md", &summary)
}

fn bench(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let bench = Bench::new(cfg.bench.clone())?;
    let report = bench.run_benchmark()?;
    let mut md = String::new();
    for (i, stat) in Statistic::ALL.iter().enumerate() {
        if i > 0 {
            md.push('\n');
        }
        md.push_str(&emit_table(&report, TableFormat::Markdown, *stat));
        out.write(
            &format!("bench_{}.csv", stat.name()),
            &emit_table(&report, TableFormat::Csv, *stat),
        )?;
    }
    out.write("report.md", &md)?;
    if let Some(t) = &cfg.trace {
        out.write("trace.csv", &bench.trace(t.law, t.replicate)?)?;
    }
    Ok(())
}

fn converge(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    model.validate_on_grid(&grid)?;
    let c = &cfg.converge;
    for study in &c.studies {
        match study {
            Study::Levy => {
                let t = empirical_l1_convergence(
                    model.observation_noise(),
                    &c.cutoffs,
                    &grid,
                    c.replicates,
                    cfg.seed,
                )?;
                out.write("levy_l1.csv", &t.to_csv())?;
                out.write("levy_l1.md", &t.to_markdown())?;
            }
            Study::Observation => {
                let t =
                    observation_l1_convergence(&model, &c.cutoffs, &grid, c.replicates, cfg.seed)?;
                out.write("observation_l1.csv", &t.to_csv())?;
                out.write("observation_l1.md", &t.to_markdown())?;
            }
            Study::Upsilon => {
                let r = upsilon_infinity(model.observation_noise(), &c.upsilon_cutoffs)?;
                out.write("upsilon.md", &r.to_markdown())?;
            }
            Study::Riccati => {
                let (t, _) = riccati_convergence_study(&model, &c.cutoffs, c.convention, &grid)?;
                let phi = phi_limit(&model, &c.cutoffs, c.convention, &grid)?;
                out.write("riccati_convergence.csv", &t.to_csv())?;
                out.write("riccati_convergence.md", &t.to_markdown())?;
                if let Some(d) = phi.diagnostics() {
                    out.write("phi_diagnostics.md", &d.to_markdown())?;
                }
            }
            Study::Filter => {
                let t = filter_convergence_study(
                    &model,
                    &c.cutoffs,
                    &grid,
                    c.replicates,
                    cfg.seed,
                    c.convention,
                )?;
                out.write("filter_convergence.csv", &t.to_csv())?;
                out.write("filter_convergence.md", &t.to_markdown())?;
            }
        }
    }
    Ok(())
}
