//! Subcommands of the `adoptmatch` binary.
//!
//! Exit codes: 0 on success, 1 on usage or file errors, 2 when `experiment`
//! finds an FS equilibrium Pareto-improving a CS equilibrium or `validate`
//! finds a simulated utility outside its tolerance.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adoptmatch_core::equilibrium::{solve_equilibrium, Side, SolveOptions};
use adoptmatch_core::gen::{generate_instance, paper_instance};
use adoptmatch_core::model::validate_instance;
use adoptmatch_core::utilities::utilities;
use adoptmatch_core::{Instance, Params, Regime, StrategyProfile};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::harness::{self, EquilibriumRow, SweepParam};
use crate::io::{self, ProfileFile};
use crate::montecarlo::simulate_utility;

pub const JOBS_ENV: &str = "ADOPTMATCH_JOBS";
const VIOLATION_EXIT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "adoptmatch", version, about = "Equilibria of family-driven and caseworker-driven adoption search")]
pub struct Cli {
    /// Worker threads; the ADOPTMATCH_JOBS environment variable takes precedence.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random or named instances as JSON.
    Gen(GenArgs),
    /// Compute extremal equilibria of one instance.
    Solve(SolveArgs),
    /// Solve a directory of instances and aggregate welfare.
    Experiment(ExperimentArgs),
    /// Vary one parameter over a set of instances.
    Sweep(SweepArgs),
    /// Compare analytic utilities with simulation.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.99)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.02)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long)]
    pub delta_c: Option<f64>,
    #[arg(long)]
    pub delta_f: Option<f64>,
    #[arg(long)]
    pub kappa_c: Option<f64>,
    #[arg(long)]
    pub kappa_f: Option<f64>,
}

impl ParamArgs {
    pub fn params(&self) -> Params {
        Params {
            delta_c: self.delta_c.unwrap_or(self.delta),
            delta_f: self.delta_f.unwrap_or(self.delta),
            kappa_c: self.kappa_c.unwrap_or(self.kappa),
            kappa_f: self.kappa_f.unwrap_or(self.kappa),
            p: self.p,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn options(&self, record_trace: bool) -> SolveOptions {
        SolveOptions { epsilon: self.epsilon, max_iter: self.max_iter, record_trace, ..SolveOptions::default() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "paper")]
    pub instance: Option<PathBuf>,
    /// Named instance: prop7, prop8, prop9 or prop-families-worse.
    #[arg(long)]
    pub paper: Option<String>,
}

impl SourceArgs {
    fn load(&self) -> Result<(String, Instance)> {
        match (&self.instance, &self.paper) {
            (Some(path), _) => Ok((stem(path), io::read_instance(path)?)),
            (None, Some(name)) => Ok((name.clone(), paper_instance(name)?)),
            (None, None) => bail!("pass --instance FILE or --paper NAME"),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, required_unless_present = "paper")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "paper")]
    pub m: Option<usize>,
    /// Comma-separated preference correlations.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub lambda: Vec<f64>,
    /// Number of seeds per correlation.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    /// Write this named instance instead of random ones.
    #[arg(long)]
    pub paper: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_delimiter = ',', default_value = "fs,cs")]
    pub regimes: Vec<RegimeArg>,
    #[arg(long, value_delimiter = ',', default_value = "co,fo")]
    pub sides: Vec<SideArg>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON sidecar with thresholds, utilities and mutual pairs; defaults to
    /// the CSV path with a `.json` extension.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Include the threshold iterates in the sidecar.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Directory of instance JSON files.
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Side whose welfare is printed as the headline.
    #[arg(long, value_enum, default_value = "fo")]
    pub side: SideArg,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Directory of instance JSON files; otherwise instances are generated.
    #[arg(long, conflicts_with_all = ["n", "m"])]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    #[arg(long, value_enum, default_value = "fo")]
    pub side: SideArg,
    /// Seed of the bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    pub bootstrap_seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Profile JSON; otherwise the equilibrium of each regime is used.
    #[arg(long, conflicts_with = "equilibrium")]
    pub profile: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fo")]
    pub equilibrium: SideArg,
    #[arg(long, value_delimiter = ',', default_value = "fs,cs")]
    pub regimes: Vec<RegimeArg>,
    #[arg(long, default_value_t = 100_000)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shift every analytic value by this amount (harness self-test).
    #[arg(long, default_value_t = 0.0, hide = true)]
    pub perturb: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Fs,
    Cs,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::Fs => Regime::Fs,
            RegimeArg::Cs => Regime::Cs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Co,
    Fo,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Co => Side::ChildOptimal,
            SideArg::Fo => Side::FamilyOptimal,
        }
    }
}

/// Thread count from the environment, else the flag.
pub fn resolve_jobs(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    match env.map(str::trim).filter(|v| !v.is_empty()) {
        Some(v) => {
            let jobs: usize = v.parse().with_context(|| format!("{JOBS_ENV}={v:?} is not a thread count"))?;
            Ok(Some(jobs))
        }
        None => Ok(flag),
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let env = std::env::var(JOBS_ENV).ok();
    if let Some(jobs) = resolve_jobs(cli.jobs, env.as_deref())? {
        // A second initialisation (e.g. in tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    })
}

fn write_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Name of a generated instance file.
pub fn instance_file_name(n: usize, m: usize, lambda: f64, seed: u64) -> String {
    format!("n{n}_m{m}_lambda{lambda}_seed{seed}.json")
}

#[derive(Debug, Serialize)]
struct ManifestRow {
    file: String,
    n: usize,
    m: usize,
    lambda: f64,
    seed: u64,
    #[serde(rename = "delta_C")]
    delta_c: f64,
    #[serde(rename = "delta_F")]
    delta_f: f64,
    #[serde(rename = "kappa_C")]
    kappa_c: f64,
    #[serde(rename = "kappa_F")]
    kappa_f: f64,
    p: f64,
}

fn check_valid(name: &str, inst: &Instance) -> Result<()> {
    let report = validate_instance(inst);
    if !report.is_ok() {
        let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        bail!("{name}: {}", list.join("; "));
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<ExitCode> {
    create_dir(&a.out_dir)?;
    if let Some(name) = &a.paper {
        let inst = paper_instance(name)?;
        io::write_instance(&a.out_dir.join(format!("{name}.json")), &inst)?;
        return Ok(ExitCode::SUCCESS);
    }
    let (n, m) = (a.n.expect("required by clap"), a.m.expect("required by clap"));
    let params = a.params.params();
    let mut manifest = Vec::new();
    for &lambda in &a.lambda {
        for seed in a.seed_start..a.seed_start + a.seeds {
            let inst = generate_instance(n, m, lambda, seed, params)?;
            let file = instance_file_name(n, m, lambda, seed);
            check_valid(&file, &inst)?;
            io::write_instance(&a.out_dir.join(&file), &inst)?;
            let Params { delta_c, delta_f, kappa_c, kappa_f, p } = params;
            manifest.push(ManifestRow { file, n, m, lambda, seed, delta_c, delta_f, kappa_c, kappa_f, p });
        }
    }
    write_csv(Some(&a.out_dir.join("manifest.csv")), &manifest)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct SolveSidecar {
    instance: String,
    regime: &'static str,
    side: &'static str,
    converged: bool,
    iterations: usize,
    thresholds_child: Vec<f64>,
    thresholds_family: Vec<f64>,
    utilities_child: Vec<f64>,
    utilities_family: Vec<f64>,
    mutual_pairs: Vec<(usize, usize)>,
    profile: ProfileFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

fn cmd_solve(a: &SolveArgs) -> Result<ExitCode> {
    let (name, inst) = a.source.load()?;
    let opts = a.solver.options(a.trace);
    let mut rows = Vec::new();
    let mut sidecar = Vec::new();
    for &regime in &a.regimes {
        for &side in &a.sides {
            let eq = solve_equilibrium(&inst, regime.into(), side.into(), opts);
            if !eq.converged {
                eprintln!("warning: {name} {} {} did not converge after {} iterations", eq.regime, eq.side, eq.iterations);
            }
            rows.push(EquilibriumRow::new(&name, &eq));
            sidecar.push(SolveSidecar {
                instance: name.clone(),
                regime: eq.regime.as_str(),
                side: eq.side.as_str(),
                converged: eq.converged,
                iterations: eq.iterations,
                thresholds_child: eq.thresholds.child.clone(),
                thresholds_family: eq.thresholds.family.clone(),
                utilities_child: eq.utilities.child.clone(),
                utilities_family: eq.utilities.family.clone(),
                mutual_pairs: eq.profile.matching_correspondence().pairs(),
                profile: ProfileFile::from(&eq.profile),
                trace: eq.trace.as_ref().map(|t| t.iter().map(|y| (y.child.clone(), y.family.clone())).collect()),
            });
        }
    }
    write_csv(a.out.as_deref(), &rows)?;
    let json_path = a.json.clone().or_else(|| a.out.as_ref().map(|p| p.with_extension("json")));
    if let Some(path) = json_path {
        io::write_json(&path, &sidecar)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Instance files of a directory in name order, skipping non-JSON files.
pub fn load_instance_dir(dir: &Path) -> Result<Vec<(String, Instance)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no instance files in {}", dir.display());
    }
    paths.iter().map(|p| Ok((stem(p), io::read_instance(p)?))).collect()
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<ExitCode> {
    let named = load_instance_dir(&a.instances)?;
    create_dir(&a.out_dir)?;
    let instances: Vec<Instance> = named.iter().map(|(_, i)| i.clone()).collect();
    let batch = harness::solve_batch(&instances, a.solver.options(false));
    let rows: Vec<EquilibriumRow> = named
        .iter()
        .zip(&batch)
        .flat_map(|((name, _), eqs)| eqs.iter().map(|eq| EquilibriumRow::new(name, eq)).collect::<Vec<_>>())
        .collect();
    write_csv(Some(&a.out_dir.join("equilibria.csv")), &rows)?;
    let aggregates: Vec<_> = Regime::ALL
        .iter()
        .flat_map(|&r| Side::ALL.iter().map(move |&s| (r, s)))
        .map(|(r, s)| harness::aggregate(&batch, r, s))
        .collect();
    write_csv(Some(&a.out_dir.join("aggregate.csv")), &aggregates)?;
    let summary = harness::summarise(&batch);
    io::write_json(&a.out_dir.join("summary.json"), &summary)?;

    let headline: Side = a.side.into();
    println!("{:<6} {:>16} {:>16} {:>16}", "", "overall", "children", "families");
    for regime in Regime::ALL {
        let g = harness::aggregate(&batch, regime, headline);
        println!(
            "{:<6} {:>8.3} ± {:<5.3} {:>8.3} ± {:<5.3} {:>8.3} ± {:<5.3}",
            format!("{}-{}", headline.as_str(), regime.as_str()),
            g.overall_mean,
            g.overall_se,
            g.child_mean,
            g.child_se,
            g.family_mean,
            g.family_se
        );
    }
    println!(
        "instances {}  not converged {}  co!=fo FS {} CS {}  fo-CSE improves fo-FSE {}  theorem-1 violations {}",
        summary.instances,
        summary.not_converged,
        summary.fs_co_ne_fo,
        summary.cs_co_ne_fo,
        summary.cs_improves_fs_fo,
        summary.theorem1_violations
    );
    if summary.theorem1_violations > 0 {
        eprintln!("error: an FS equilibrium Pareto-improves a CS equilibrium");
        return Ok(ExitCode::from(VIOLATION_EXIT));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: &SweepArgs) -> Result<ExitCode> {
    let param: SweepParam = a.param.parse().map_err(anyhow::Error::msg)?;
    let opts = a.solver.options(false);
    let side: Side = a.side.into();
    let base = match &a.instances {
        Some(dir) => {
            if param == SweepParam::Lambda {
                bail!("a lambda sweep generates its instances; pass --n and --m instead of --instances");
            }
            load_instance_dir(dir)?
        }
        None => Vec::new(),
    };
    let mut rows = Vec::new();
    for &value in &a.values {
        let named: Vec<(String, Instance)> = if a.instances.is_some() {
            base.iter().map(|(name, inst)| (name.clone(), inst.with_params(param.apply(*inst.params(), value)))).collect()
        } else {
            let (Some(n), Some(m)) = (a.n, a.m) else { bail!("pass --instances DIR or both --n and --m") };
            let params = param.apply(a.params.params(), value);
            let lambdas = if param == SweepParam::Lambda { vec![value] } else { a.lambda.clone() };
            let mut out = Vec::new();
            for &lambda in &lambdas {
                for seed in a.seed_start..a.seed_start + a.seeds {
                    let name = stem(Path::new(&instance_file_name(n, m, lambda, seed)));
                    out.push((name, generate_instance(n, m, lambda, seed, params)?));
                }
            }
            out
        };
        for (name, inst) in &named {
            check_valid(name, inst)?;
        }
        rows.extend(harness::sweep_rows(param, value, &named, side, opts));
    }
    create_dir(&a.out_dir)?;
    write_csv(Some(&a.out_dir.join("sweep.csv")), &rows)?;
    write_csv(Some(&a.out_dir.join("sweep_aggregate.csv")), &harness::sweep_aggregate(&rows, a.bootstrap_seed))?;
    Ok(ExitCode::SUCCESS)
}

/// One line of the `validate` report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ValidationRow {
    pub regime: &'static str,
    pub agent: String,
    pub analytic: f64,
    pub simulated: f64,
    pub stderr: f64,
    pub bias_bound: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Simulates every agent under `s` and compares with the analytic utilities.
pub fn validation_rows(inst: &Instance, s: &StrategyProfile, regime: Regime, runs: usize, seed: u64, perturb: f64) -> Result<Vec<ValidationRow>> {
    let analytic = utilities(inst, s, regime);
    inst.agents()
        .map(|agent| {
            let est = simulate_utility(inst, s, regime, agent, runs, seed)?;
            let expected = analytic.get(agent) + perturb;
            let tolerance = 3.0 * est.stderr + est.truncation_bias_bound;
            Ok(ValidationRow {
                regime: regime.as_str(),
                agent: agent.to_string(),
                analytic: expected,
                simulated: est.mean,
                stderr: est.stderr,
                bias_bound: est.truncation_bias_bound,
                tolerance,
                pass: (est.mean - expected).abs() <= tolerance,
            })
        })
        .collect()
}

fn cmd_validate(a: &ValidateArgs) -> Result<ExitCode> {
    let (_, inst) = a.source.load()?;
    let fixed = match &a.profile {
        Some(path) => {
            let s = io::read_profile(path)?;
            if !s.fits(&inst) {
                bail!("{}: profile is {} x {}, instance is {} x {}", path.display(), s.n(), s.m(), inst.n(), inst.m());
            }
            Some(s)
        }
        None => None,
    };
    let mut rows = Vec::new();
    for &regime in &a.regimes {
        let regime: Regime = regime.into();
        let s = match &fixed {
            Some(s) => s.clone(),
            None => solve_equilibrium(&inst, regime, a.equilibrium.into(), a.solver.options(false)).profile,
        };
        rows.extend(validation_rows(&inst, &s, regime, a.runs, a.seed, a.perturb)?);
    }
    write_csv(a.out.as_deref(), &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} of {} agents outside 3 stderr + truncation bias", rows.len());
        return Ok(ExitCode::from(VIOLATION_EXIT));
    }
    Ok(ExitCode::SUCCESS)
}
