//! `subdist`: command-line driver for the subsystem distance experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use subdist::ensemble::RandomEnsembleSpec;
use subdist::experiments::{
    apply_ordering, export_charge_profiles, fit_window, random_sweep, IsingSweep, Metric, Ordering, SweepResult,
    DEFAULT_DENSE_LIMIT,
};
use subdist::ising::{
    degenerate_pairs, degeneracy_ratio, enumerate_spectrum, mode_number_difference, ChargeConvention, IsingChain,
    SectorFilter, SpectrumTable,
};
use subdist::xxz::{XxzChain, XxzSector, XxzSweep};
use subdist::Error;

#[derive(Parser, Debug)]
#[command(name = "subdist", version, about = "Subsystem distances between eigenstates of spin chains")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, env = "SUBDIST_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Export an eigenvalue table.
    Spectrum(SpectrumArgs),
    /// Averaged subsystem distances over a range of subsystem sizes.
    Sweep(SweepArgs),
    /// Fraction of adjacent pairs tied on the first m+1 sort keys.
    Degeneracy(IsingArgs),
    /// Per-state charge values in table order.
    Charges(ChargeArgs),
    /// All-pairs averages over random pure Gaussian states.
    RandomSweep(RandomArgs),
    /// All-pairs averages within one XXZ momentum and magnetization sector.
    XxzSweep(XxzArgs),
    /// Average change in the number of excited modes between neighbours.
    ModeDiff(IsingArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Ising,
    Xxz,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    /// Momenta `2πk/L` in the charge densities; the charges are local.
    Full,
    /// Momenta `πk/L`.
    Half,
}

impl From<ConventionArg> for ChargeConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Full => ChargeConvention::FullMomentum,
            ConventionArg::Half => ChargeConvention::HalfMomentum,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct IsingArgs {
    #[arg(long = "L")]
    sites: usize,
    /// Transverse field.
    #[arg(long = "h", default_value_t = 1.0)]
    field: f64,
    /// `P,K` (either may be `*`); full spectrum when absent.
    #[arg(long)]
    sector: Option<String>,
    /// `charges:0,1,2` or `random:SEED`.
    #[arg(long)]
    ordering: Option<String>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Full)]
    convention: ConventionArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Ising)]
    model: ModelArg,
    #[arg(long = "L")]
    sites: usize,
    #[arg(long = "h", default_value_t = 1.0)]
    field: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    delta: f64,
    /// Ising: `P,K`. XXZ: `K,n_down` or `*,K,m` with magnetization `m`.
    #[arg(long)]
    sector: Option<String>,
    #[arg(long)]
    ordering: Option<String>,
    /// Number of charge columns (default: all).
    #[arg(long)]
    charges: Option<usize>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Full)]
    convention: ConventionArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RangeArgs {
    #[arg(long, value_parser = parse_metric, default_value = "bures")]
    metric: Metric,
    #[arg(long, default_value_t = 1)]
    ell_min: usize,
    /// Default: `L`, capped at the dense limit for the trace metric.
    #[arg(long)]
    ell_max: Option<usize>,
    /// Fit a line inside `⌈0.2L⌉ ≤ ℓ ≤ ⌊0.4L⌋`.
    #[arg(long)]
    fit: bool,
    /// Only evaluate the subsystem sizes of the fit window; implies `--fit`.
    #[arg(long)]
    fit_window: bool,
    /// Largest subsystem handled by dense matrices.
    #[arg(long, default_value_t = DEFAULT_DENSE_LIMIT)]
    dense_limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RangeArgs {
    fn ells(&self, sites: usize) -> Vec<usize> {
        if self.fit_window {
            let (lo, hi) = fit_window(sites);
            return (lo..=hi).collect();
        }
        let default_max = match self.metric {
            Metric::Bures => sites,
            Metric::Trace => sites.min(self.dense_limit),
        };
        (self.ell_min..=self.ell_max.unwrap_or(default_max)).collect()
    }

    fn fit(&self) -> bool {
        self.fit || self.fit_window
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Ising)]
    model: ModelArg,
    #[arg(long = "L")]
    sites: usize,
    #[arg(long = "h", default_value_t = 1.0)]
    field: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    delta: f64,
    /// Ising: `P,K`. XXZ: `K,n_down` or `*,K,m` with magnetization `m`.
    #[arg(long)]
    sector: Option<String>,
    #[arg(long)]
    ordering: Option<String>,
    /// Seed for the random ensemble.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random ensemble size.
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long, value_enum, default_value_t = ConventionArg::Full)]
    convention: ConventionArg,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(Args, Debug)]
struct ChargeArgs {
    #[command(flatten)]
    ising: IsingArgs,
    /// Charge indices to export.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    indices: Vec<usize>,
}

#[derive(Args, Debug)]
struct RandomArgs {
    #[arg(long = "L")]
    sites: usize,
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(Args, Debug)]
struct XxzArgs {
    #[arg(long = "L")]
    sites: usize,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    delta: f64,
    /// Momentum index `K` of `p = 2πK/L`.
    #[arg(long = "K", default_value_t = 1)]
    momentum: usize,
    #[arg(long, default_value_t = 2)]
    n_down: usize,
    /// Uniform field `h_z`; it only shifts the sector energies.
    #[arg(long, default_value_t = 0.0)]
    hz: f64,
    #[command(flatten)]
    range: RangeArgs,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Model(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn parse_ising_sector(text: Option<&str>) -> CliResult<SectorFilter> {
    let Some(text) = text else {
        return Ok(SectorFilter::default());
    };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Invalid(format!("sector {text:?} is not P,K")).into());
    }
    let parity = match parts[0] {
        "*" => None,
        p => Some(
            p.parse::<i8>()
                .ok()
                .filter(|p| *p == 1 || *p == -1)
                .ok_or_else(|| Error::Invalid(format!("parity {p:?} is not ±1")))?,
        ),
    };
    let momentum = match parts[1] {
        "*" => None,
        k => Some(k.parse::<usize>().map_err(|e| Error::Invalid(format!("momentum {k:?}: {e}")))?),
    };
    Ok(SectorFilter { parity, momentum })
}

/// `K,n_down`, or `*,K,m` with the magnetization `m = L/2 - n_down`.
fn parse_xxz_sector(text: Option<&str>, sites: usize) -> CliResult<(usize, usize)> {
    let Some(text) = text else {
        return Ok((1, 2));
    };
    let bad = |why: String| -> Failure { Error::Invalid(format!("sector {text:?}: {why}")).into() };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let momentum = |k: &str| k.parse::<usize>().map_err(|e| bad(e.to_string()));
    match parts[..] {
        [k, n] => Ok((momentum(k)?, n.parse::<usize>().map_err(|e| bad(e.to_string()))?)),
        ["*", k, m] => {
            let m: f64 = m.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let n_down = sites as f64 / 2.0 - m;
            if n_down.fract() != 0.0 || n_down < 0.0 || n_down > sites as f64 {
                return Err(bad(format!("magnetization {m} is not allowed for L = {sites}")));
            }
            Ok((momentum(k)?, n_down as usize))
        }
        _ => Err(bad("expected K,n_down or *,K,m".into())),
    }
}

fn parse_ordering(text: Option<&str>, sites: usize) -> CliResult<Ordering> {
    Ok(match text {
        Some(t) => t.parse()?,
        None => Ordering::default_for(sites),
    })
}

fn ising_chain(sites: usize, field: f64, convention: ConventionArg) -> CliResult<IsingChain> {
    let chain = IsingChain::new(sites, field)?.with_convention(convention.into());
    if chain.has_zero_mode() {
        log::info!("h = 1: the Ramond zero mode is degenerate");
    }
    Ok(chain)
}

fn ordered_table(args: &IsingArgs) -> CliResult<SpectrumTable> {
    let chain = ising_chain(args.sites, args.field, args.convention)?;
    let filter = parse_ising_sector(args.sector.as_deref())?;
    let ordering = parse_ordering(args.ordering.as_deref(), args.sites)?;
    Ok(apply_ordering(enumerate_spectrum(&chain, filter)?, &ordering)?)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes the CSV and, next to it, the full result as JSON.
fn emit_sweep(out: Option<&Path>, result: &SweepResult) -> CliResult<()> {
    if let Some(fit) = &result.fit {
        eprintln!(
            "fit: slope {:.6} intercept {:.6} over {} <= ell <= {}",
            fit.slope, fit.intercept, fit.ell_min, fit.ell_max
        );
    }
    emit(out, &result.to_csv())?;
    if let Some(path) = out {
        let sidecar = path.with_extension("json");
        let json = serde_json::to_string_pretty(result).map_err(|e| Failure::Io(e.to_string()))?;
        fs::write(&sidecar, json + "\n").map_err(|e| Failure::Io(format!("{}: {e}", sidecar.display())))?;
    }
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> CliResult<()> {
    match args.model {
        ModelArg::Ising => {
            let ising = IsingArgs {
                sites: args.sites,
                field: args.field,
                sector: args.sector,
                ordering: args.ordering,
                convention: args.convention,
                out: args.out.clone(),
            };
            let table = ordered_table(&ising)?;
            emit(args.out.as_deref(), &table.to_csv(args.charges.unwrap_or(args.sites)))
        }
        ModelArg::Xxz => {
            let (k, n) = parse_xxz_sector(args.sector.as_deref(), args.sites)?;
            let chain = XxzChain::new(args.sites, args.delta)?;
            let system = chain.diagonalize(&XxzSector::new(args.sites, k, n)?)?;
            emit(args.out.as_deref(), &system.to_csv())
        }
        ModelArg::Random => Err(Error::Invalid("the random ensemble has no spectrum".into()).into()),
    }
}

fn sweep(args: SweepArgs) -> CliResult<()> {
    let ells = args.range.ells(args.sites);
    let result = match args.model {
        ModelArg::Ising => {
            let chain = ising_chain(args.sites, args.field, args.convention)?;
            let mut sweep = IsingSweep::new(chain, args.range.metric, ells);
            sweep.filter = parse_ising_sector(args.sector.as_deref())?;
            sweep.ordering = parse_ordering(args.ordering.as_deref(), args.sites)?;
            sweep.fit = args.range.fit();
            sweep.dense_limit = args.range.dense_limit;
            sweep.run()?
        }
        ModelArg::Xxz => {
            let (k, n) = parse_xxz_sector(args.sector.as_deref(), args.sites)?;
            run_xxz(XxzChain::new(args.sites, args.delta)?, k, n, &args.range, ells)?
        }
        ModelArg::Random => {
            let spec = RandomEnsembleSpec::new(args.sites, args.count, args.seed)?;
            random_sweep(&spec, args.range.metric, &ells, args.range.fit(), args.range.dense_limit)?
        }
    };
    emit_sweep(args.range.out.as_deref(), &result)
}

fn run_xxz(chain: XxzChain, k: usize, n: usize, range: &RangeArgs, ells: Vec<usize>) -> CliResult<SweepResult> {
    let mut sweep = XxzSweep::new(chain, range.metric, ells);
    sweep.momentum = k;
    sweep.n_down = n;
    sweep.fit = range.fit();
    sweep.dense_limit = range.dense_limit;
    Ok(sweep.run()?)
}

fn degeneracy(args: IsingArgs) -> CliResult<()> {
    let table = ordered_table(&args)?;
    let mut csv = String::from("m,ratio,tied_pairs,pairs\n");
    for m in 0..args.sites {
        csv.push_str(&format!(
            "{m},{:.16e},{},{}\n",
            degeneracy_ratio(&table, m)?,
            degenerate_pairs(&table, m)?,
            table.len() - 1
        ));
    }
    emit(args.out.as_deref(), &csv)
}

fn charges(args: ChargeArgs) -> CliResult<()> {
    let table = ordered_table(&args.ising)?;
    emit(args.ising.out.as_deref(), &export_charge_profiles(&table, &args.indices)?)
}

fn mode_diff(args: IsingArgs) -> CliResult<()> {
    let table = ordered_table(&args)?;
    let csv = format!(
        "L,h,sector,ordering,mode_difference,pairs\n{},{:.16e},{},{},{:.16e},{}\n",
        args.sites,
        args.field,
        table.filter,
        table.provenance,
        mode_number_difference(&table)?,
        table.len() - 1
    );
    emit(args.out.as_deref(), &csv)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    match cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::Sweep(a) => sweep(a),
        Command::Degeneracy(a) => degeneracy(a),
        Command::Charges(a) => charges(a),
        Command::RandomSweep(a) => {
            let spec = RandomEnsembleSpec::new(a.sites, a.count, a.seed)?;
            let result = random_sweep(&spec, a.range.metric, &a.range.ells(a.sites), a.range.fit(), a.range.dense_limit)?;
            emit_sweep(a.range.out.as_deref(), &result)
        }
        Command::XxzSweep(a) => {
            let chain = XxzChain::new(a.sites, a.delta)?.with_field(a.hz);
            let ells = a.range.ells(a.sites);
            let result = run_xxz(chain, a.momentum, a.n_down, &a.range, ells)?;
            emit_sweep(a.range.out.as_deref(), &result)
        }
        Command::ModeDiff(a) => mode_diff(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_guard() { 3 } else { 2 })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
