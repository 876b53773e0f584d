//! Command-line front end. Every subcommand computes its outputs in memory first, so a run
//! can be written out, digested into a manifest, or replayed and compared.
//!
//! Exit codes: 0 success, 1 replay mismatch, 2 usage, parameter or I/O error, 3 numerical
//! non-convergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{closure, mc_tails, median_tau0_bp};
use crate::classify::{classify_1d, refine, ArcPiece, ClassificationReport, Difficulty, Direction, SearchParams};
use crate::eastcomb;
use crate::kcm::{front_run, pool_fronts, scan_tau0, simulate, Initial, SimParams, Tau0Sample};
use crate::legalpath::path_to_flip;
use crate::spectra::GeneratorModel;
use crate::stats::{bp2n_trend, fit_explog2, fit_power, summarize};
use crate::{BoundaryCondition, Configuration, Error, Region, Site, UpdateFamily};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug, Serialize)]
#[command(name = "kcmlab", version, about = "Bootstrap percolation and kinetically constrained models")]
pub struct Cli {
    /// Master seed for all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the main output to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write a run manifest (parameters, seed, version, output digests) to this file.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Stable directions, difficulties and universality class of a family.
    Classify(ClassifyArgs),
    /// Bootstrap percolation.
    Bp {
        #[command(subcommand)]
        cmd: BpCommand,
    },
    /// Legal path from a configuration to one with a given site flipped.
    Path(PathArgs),
    /// Kinetically constrained dynamics.
    Kcm {
        #[command(subcommand)]
        cmd: KcmCommand,
    },
    /// Exact relaxation, hitting and mixing times on a small volume.
    Spectra(SpectraArgs),
    /// Reachable East configurations with a vacancy budget.
    EastEnum(EastEnumArgs),
    /// Scaling fits of tau0 tables or BP median trends.
    Fit(FitArgs),
    /// Re-run a manifest and check its output digests.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct FamilyOpt {
    /// Catalog name (east1d, fa2f-2d, duarte, ...) or path to a family JSON file.
    #[arg(long, required_unless_present = "family_file", conflicts_with = "family_file")]
    pub family: Option<String>,
    /// Family JSON file `{"dim":2,"rules":[[[dx,dy],...],...]}`.
    #[arg(long)]
    pub family_file: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// Side of the difficulty search window [default: 24 * range].
    #[arg(long)]
    pub window: Option<usize>,
    /// Largest extra set size tried in the difficulty search.
    #[arg(long, default_value_t = 4)]
    pub budget: u32,
    /// Closure evaluations allowed per set size.
    #[arg(long, default_value_t = 20_000_000)]
    pub max_closures: u64,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BpCommand {
    /// Closure of a configuration file.
    Closure(BpClosureArgs),
    /// Monte Carlo tail P(tau0_bp > t) under the product measure.
    Tail(BpTailArgs),
    /// Median emptying time of the origin.
    Median(BpMedianArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct BpClosureArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// Configuration file (`W H ox oy` header, then rows of 0/1).
    #[arg(long)]
    pub input: PathBuf,
    /// `occupied`, `empty`, or a JSON boundary file.
    #[arg(long, default_value = "occupied")]
    pub bc: String,
}

#[derive(Args, Debug, Serialize)]
pub struct BpTailArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// Vacancy density.
    #[arg(long)]
    pub q: f64,
    /// Times, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t: Vec<u32>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    /// Window radius [default: t * range + range].
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct BpMedianArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// Vacancy densities, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub replicas: usize,
    /// First window radius; doubled until the median is exact.
    #[arg(long, default_value_t = 32)]
    pub start_radius: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct PathArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// `occupied`, `empty`, or a JSON boundary file.
    #[arg(long)]
    pub bc: String,
    /// Starting configuration file.
    #[arg(long)]
    pub input: PathBuf,
    /// Site to flip, `x` or `x,y`.
    #[arg(long)]
    pub flip: String,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KcmCommand {
    /// One trajectory, written as a JSON record.
    Run(KcmRunArgs),
    /// Stationary-start tau0 samples over a grid of q.
    Scan(KcmScanArgs),
    /// East front runs pooled into a speed estimate.
    Front(KcmFrontArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct KcmRunArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// `N` for {0..N-1}, `N,M` for an N x M box at the origin.
    #[arg(long)]
    pub size: String,
    /// `empty`, `occupied`, or a JSON boundary file.
    #[arg(long, default_value = "empty")]
    pub bc: String,
    #[arg(long)]
    pub q: f64,
    /// Time horizon.
    #[arg(long = "T")]
    pub horizon: f64,
    /// Snapshot times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    /// `product` (stationary), `occupied`, `empty`, or a configuration file.
    #[arg(long, default_value = "product")]
    pub initial: String,
    /// Site whose first emptying time is recorded [default: (0,0)].
    #[arg(long)]
    pub origin: Option<String>,
    /// Replica index selecting the random stream.
    #[arg(long, default_value_t = 0)]
    pub replica: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct KcmScanArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// Vacancy densities, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q_grid: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub replicas: u64,
    /// Only `tau0` is supported.
    #[arg(long, default_value = "tau0")]
    pub observable: String,
    /// Censoring time.
    #[arg(long, default_value_t = 1e7)]
    pub horizon: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct KcmFrontArgs {
    #[arg(long)]
    pub q: f64,
    /// Number of sites; the front starts at the right end.
    #[arg(long, default_value_t = 4000)]
    pub length: usize,
    #[arg(long = "T", default_value_t = 40_000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub family: FamilyOpt,
    /// `N` or `N,M`.
    #[arg(long)]
    pub size: String,
    /// `empty`, `occupied`, or a JSON boundary file.
    #[arg(long, default_value = "empty")]
    pub bc: String,
    #[arg(long)]
    pub q: f64,
    /// Ergodic component of `zero` (all empty), `one` (all occupied) or a configuration file.
    #[arg(long, default_value = "zero")]
    pub component_of: String,
    /// Quantities, comma separated: `trel`, `tau0`, `tmix:EPS`.
    #[arg(long, value_delimiter = ',', default_value = "trel")]
    pub report: Vec<String>,
    /// Site for `tau0` [default: (0,0)].
    #[arg(long)]
    pub origin: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct EastEnumArgs {
    /// Vacancy budget.
    #[arg(long)]
    pub n: u32,
    /// Write a deepest-reach legal path here (`x newbit` per line).
    #[arg(long)]
    pub witness: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// log tau against log(1/q).
    Power,
    /// log tau against log^2(1/q).
    Explog2,
    /// q log(median) on a decreasing grid, from `bp median` CSV.
    Trend,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// CSV from `kcm scan` (or `bp median` for `trend`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "power")]
    pub model: FitKind,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    /// Manifest written by `--manifest`.
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments after the program name, minus `--manifest`.
    pub args: Vec<String>,
    pub params: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Debug, thiserror::Error)]
#[error("replay mismatch: {0}")]
pub struct ReplayMismatch(pub String);

/// Everything a run produces, in write order. The first entry is the main output.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(Option<PathBuf>, Vec<u8>)>,
}

impl Artifacts {
    fn main(bytes: impl Into<Vec<u8>>) -> Self {
        Artifacts { files: vec![(None, bytes.into())] }
    }

    fn digests(&self, out: Option<&Path>) -> Vec<OutputDigest> {
        self.files
            .iter()
            .map(|(p, b)| OutputDigest {
                name: p.as_deref().or(out).map_or("stdout".into(), |p| p.display().to_string()),
                sha256: hex(&Sha256::digest(b)),
            })
            .collect()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs the binary on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<ReplayMismatch>().is_some() {
            return 1;
        }
        if let Some(Error::NonConvergence { .. }) = cause.downcast_ref::<Error>() {
            return 3;
        }
    }
    2
}

fn dispatch(cli: &Cli, args: &[OsString]) -> anyhow::Result<()> {
    if let Command::Replay(r) = &cli.command {
        let msg = replay(&r.manifest, cli.threads)?;
        return write_main(cli.out.as_deref(), msg.as_bytes());
    }
    let art = in_pool(cli.threads, || execute(cli))?;
    for (i, (path, bytes)) in art.files.iter().enumerate() {
        match path {
            Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
            None if i == 0 => write_main(cli.out.as_deref(), bytes)?,
            None => unreachable!("only the main output goes to stdout"),
        }
    }
    if let Some(m) = &cli.manifest {
        let manifest = RunManifest {
            subcommand: subcommand_name(&cli.command),
            args: strip_manifest(args),
            params: serde_json::to_value(&cli.command)?,
            seed: cli.seed,
            version: VERSION.to_string(),
            outputs: art.digests(cli.out.as_deref()),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(m, text).with_context(|| format!("writing manifest {}", m.display()))?;
    }
    Ok(())
}

fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> anyhow::Result<R> + Send) -> anyhow::Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            bail!(Error::Parameter("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build()?.install(f)
}

fn write_main(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    use std::io::Write;
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(bytes).context("writing stdout"),
    }
}

fn strip_manifest(args: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--manifest" {
            it.next();
        } else if !a.starts_with("--manifest=") {
            out.push(a);
        }
    }
    out
}

fn subcommand_name(c: &Command) -> String {
    match c {
        Command::Classify(_) => "classify".into(),
        Command::Bp { cmd } => match cmd {
            BpCommand::Closure(_) => "bp closure",
            BpCommand::Tail(_) => "bp tail",
            BpCommand::Median(_) => "bp median",
        }
        .into(),
        Command::Path(_) => "path".into(),
        Command::Kcm { cmd } => match cmd {
            KcmCommand::Run(_) => "kcm run",
            KcmCommand::Scan(_) => "kcm scan",
            KcmCommand::Front(_) => "kcm front",
        }
        .into(),
        Command::Spectra(_) => "spectra".into(),
        Command::EastEnum(_) => "east-enum".into(),
        Command::Fit(_) => "fit".into(),
        Command::Replay(_) => "replay".into(),
    }
}

fn replay(path: &Path, threads: Option<usize>) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    if m.version != VERSION {
        bail!(Error::Parameter(format!("manifest was written by version {}, this is {VERSION}", m.version)));
    }
    let argv = std::iter::once("kcmlab".to_string()).chain(m.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Parse(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!(Error::Parameter("a manifest cannot replay another manifest".into()));
    }
    let art = in_pool(threads.or(cli.threads), || execute(&cli))?;
    let got = art.digests(cli.out.as_deref());
    if got.len() != m.outputs.len() {
        bail!(ReplayMismatch(format!("{} outputs recorded, {} produced", m.outputs.len(), got.len())));
    }
    for (want, have) in m.outputs.iter().zip(&got) {
        if want.sha256 != have.sha256 {
            bail!(ReplayMismatch(format!("{}: recorded {}, got {}", want.name, want.sha256, have.sha256)));
        }
    }
    Ok(format!("replay ok: {} output(s) match ({})\n", got.len(), m.subcommand))
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_family(f: &FamilyOpt) -> anyhow::Result<UpdateFamily> {
    if let Some(p) = &f.family_file {
        return Ok(UpdateFamily::from_json(&read(p)?)?);
    }
    let name = f.family.as_deref().ok_or_else(|| Error::Parameter("--family is required".into()))?;
    if let Ok(fam) = UpdateFamily::catalog(name) {
        return Ok(fam);
    }
    if Path::new(name).is_file() {
        return Ok(UpdateFamily::from_json(&read(Path::new(name))?)?);
    }
    Err(Error::UnknownFamily(name.to_string()).into())
}

fn load_bc(s: &str) -> anyhow::Result<BoundaryCondition> {
    match s {
        "occupied" | "empty" => Ok(BoundaryCondition::parse(s)?),
        path => Ok(BoundaryCondition::parse(&read(Path::new(path))?)?),
    }
}

fn load_config(p: &Path) -> anyhow::Result<Configuration> {
    Ok(Configuration::parse(&read(p)?)?)
}

fn parse_site(s: &str) -> anyhow::Result<Site> {
    let v: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Parameter(format!("site `{s}`: {e}")))?;
    match v[..] {
        [x] => Ok([x, 0]),
        [x, y] => Ok([x, y]),
        _ => bail!(Error::Parameter(format!("site `{s}` needs one or two coordinates"))),
    }
}

fn parse_region(size: &str, dim: u8) -> anyhow::Result<Region> {
    let v: Vec<usize> = size
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Parameter(format!("size `{size}`: {e}")))?;
    match (v.as_slice(), dim) {
        (&[n], 1) => Ok(Region::line(0, n)?),
        (&[n], 2) => Ok(Region::rect([0, 0], n, n)?),
        (&[n, m], 2) => Ok(Region::rect([0, 0], n, m)?),
        _ => bail!(Error::Parameter(format!("size `{size}` does not fit a {dim}-dimensional family"))),
    }
}

fn check_region(fam: &UpdateFamily, cfg: &Configuration) -> anyhow::Result<()> {
    if fam.dim() == 1 && cfg.region().height() != 1 {
        bail!(Error::Parameter("a one-dimensional family needs a single-row configuration".into()));
    }
    Ok(())
}

fn format_or(cli: &Cli, default: Format, allowed: &[Format]) -> anyhow::Result<Format> {
    let f = cli.format.unwrap_or(default);
    if !allowed.contains(&f) {
        bail!(Error::Parameter(format!("--format {f:?} is not available here")));
    }
    Ok(f)
}

fn json<T: Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

/// Computes all outputs of a (non-replay) invocation without touching the filesystem
/// except to read inputs.
pub fn execute(cli: &Cli) -> anyhow::Result<Artifacts> {
    use Format::*;
    let seed = cli.seed;
    match &cli.command {
        Command::Classify(a) => {
            let fam = load_family(&a.family)?;
            let fmt = format_or(cli, Json, &[Json, Text])?;
            if fam.dim() == 1 {
                let r = classify_1d(&fam)?;
                return Ok(Artifacts::main(match fmt {
                    Json => json(&r)?,
                    _ => format!("class: {:?}\n+1 unstable: {}\n-1 unstable: {}\n", r.class, r.positive_unstable, r.negative_unstable)
                        .into_bytes(),
                }));
            }
            let mut params = SearchParams::for_family(&fam);
            params.kmax = a.budget;
            params.max_closures = a.max_closures;
            if let Some(w) = a.window {
                params.window = w;
            }
            let r = refine(&fam, params)?;
            Ok(Artifacts::main(if fmt == Json { json(&r)? } else { classify_text(&r).into_bytes() }))
        }
        Command::Bp { cmd: BpCommand::Closure(a) } => {
            let fam = load_family(&a.family)?;
            let bc = load_bc(&a.bc)?;
            let cfg = load_config(&a.input)?;
            check_region(&fam, &cfg)?;
            let r = closure(&fam, &cfg, &bc)?;
            let fmt = format_or(cli, Text, &[Text, Json])?;
            if fmt == Text {
                return Ok(Artifacts::main(r.closure.to_text()));
            }
            #[derive(Serialize)]
            struct Out {
                closure: String,
                rounds: u32,
                site_rounds: Vec<Option<u32>>,
            }
            Ok(Artifacts::main(json(&Out { closure: r.closure.to_text(), rounds: r.rounds, site_rounds: r.site_round })?))
        }
        Command::Bp { cmd: BpCommand::Tail(a) } => {
            let fam = load_family(&a.family)?;
            let est = mc_tails(&fam, a.q, &a.t, a.replicas, seed, a.radius)?;
            Ok(Artifacts::main(match format_or(cli, Csv, &[Csv, Json])? {
                Json => json(&est)?,
                _ => {
                    let mut s = String::from("t,estimate,ci_lo,ci_hi,exact_if_known\n");
                    for e in &est {
                        let exact = e.exact.map(|x| x.to_string()).unwrap_or_default();
                        let _ = writeln!(s, "{},{},{},{},{}", e.t, e.estimate, e.ci_lo, e.ci_hi, exact);
                    }
                    s.into_bytes()
                }
            }))
        }
        Command::Bp { cmd: BpCommand::Median(a) } => {
            let fam = load_family(&a.family)?;
            let est = a
                .q
                .iter()
                .map(|&q| median_tau0_bp(&fam, q, a.replicas, seed, a.start_radius))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Artifacts::main(match format_or(cli, Csv, &[Csv, Json])? {
                Json => json(&est)?,
                _ => {
                    let mut s = String::from("q,median,window_radius,censored\n");
                    for e in &est {
                        let _ = writeln!(s, "{},{},{},{}", e.q, e.median, e.window_radius, e.censored);
                    }
                    s.into_bytes()
                }
            }))
        }
        Command::Path(a) => {
            let fam = load_family(&a.family)?;
            let bc = load_bc(&a.bc)?;
            let cfg = load_config(&a.input)?;
            check_region(&fam, &cfg)?;
            let x = parse_site(&a.flip)?;
            format_or(cli, Text, &[Text])?;
            match path_to_flip(&fam, &bc, &cfg, x)? {
                Some(p) => Ok(Artifacts::main(p.to_text(2))),
                None => bail!(Error::Parameter(format!("no legal path flips ({}, {})", x[0], x[1]))),
            }
        }
        Command::Kcm { cmd: KcmCommand::Run(a) } => {
            let fam = load_family(&a.family)?;
            let region = parse_region(&a.size, fam.dim())?;
            let mut p = SimParams::new(fam, region.clone(), load_bc(&a.bc)?, a.q, a.horizon, seed);
            p.replica = a.replica;
            p.snapshots = a.snapshots.clone();
            p.initial = match a.initial.as_str() {
                "product" => Initial::Product(a.q),
                "occupied" => Initial::AllOccupiedExcept(Vec::new()),
                "empty" => Initial::Explicit(Configuration::all_empty(&region)),
                path => Initial::Explicit(load_config(Path::new(path))?),
            };
            if let Some(o) = &a.origin {
                p.origin = parse_site(o)?;
            }
            format_or(cli, Json, &[Json])?;
            Ok(Artifacts::main(json(&simulate(&p)?)?))
        }
        Command::Kcm { cmd: KcmCommand::Scan(a) } => {
            if a.observable != "tau0" {
                bail!(Error::Parameter(format!("unknown observable `{}`; only tau0 is supported", a.observable)));
            }
            let fam = load_family(&a.family)?;
            let mut all = Vec::new();
            for (k, &q) in a.q_grid.iter().enumerate() {
                all.extend(scan_tau0(&fam, q, a.replicas, seed.wrapping_add(k as u64), a.horizon)?);
            }
            Ok(Artifacts::main(match format_or(cli, Csv, &[Csv, Json])? {
                Json => json(&all)?,
                _ => {
                    let mut s = String::from("q,replica,tau0,censored\n");
                    for x in &all {
                        let _ = writeln!(s, "{},{},{},{}", x.q, x.replica, x.tau0, x.censored);
                    }
                    s.into_bytes()
                }
            }))
        }
        Command::Kcm { cmd: KcmCommand::Front(a) } => {
            format_or(cli, Json, &[Json])?;
            if a.replicas == 0 {
                bail!(Error::Parameter("at least one replica".into()));
            }
            let runs = (0..a.replicas).map(|r| front_run(a.q, a.length, a.horizon, seed, r)).collect::<Result<Vec<_>, _>>()?;
            if let Some(r) = runs.iter().find(|r| r.halted_early) {
                bail!(Error::Parameter(format!("replica {} reached the left end; use a longer chain or shorter horizon", r.replica)));
            }
            Ok(Artifacts::main(json(&pool_fronts(&runs)?)?))
        }
        Command::Spectra(a) => spectra(cli, a),
        Command::EastEnum(a) => {
            let r = eastcomb::enumerate(a.n)?;
            let main = match format_or(cli, Csv, &[Csv, Json])? {
                Json => json(&r)?,
                _ => r.to_csv().into_bytes(),
            };
            let mut art = Artifacts::main(main);
            if let Some(w) = &a.witness {
                art.files.push((Some(w.clone()), r.witness.to_text(1).into_bytes()));
            }
            Ok(art)
        }
        Command::Fit(a) => {
            format_or(cli, Json, &[Json])?;
            fit(a, seed)
        }
        Command::Replay(_) => Err(anyhow!("replay is handled by the driver")),
    }
}

fn spectra(cli: &Cli, a: &SpectraArgs) -> anyhow::Result<Artifacts> {
    format_or(cli, Format::Json, &[Format::Json])?;
    let fam = load_family(&a.family)?;
    let region = parse_region(&a.size, fam.dim())?;
    let bc = load_bc(&a.bc)?;
    let of = match a.component_of.as_str() {
        "zero" => Configuration::all_empty(&region),
        "one" => Configuration::all_occupied(&region),
        path => {
            let c = load_config(Path::new(path))?;
            if c.region() != &region {
                bail!(Error::Parameter("--component-of configuration does not match --size".into()));
            }
            c
        }
    };
    let model = GeneratorModel::build(&fam, &bc, a.q, &of)?;
    let origin = match &a.origin {
        Some(o) => parse_site(o)?,
        None => [0, 0],
    };
    let mut out = serde_json::Map::new();
    out.insert("states".into(), model.len().into());
    out.insert("q".into(), a.q.into());
    for item in &a.report {
        match item.trim() {
            "trel" => {
                out.insert("trel".into(), model.relaxation_time()?.into());
            }
            "tau0" => {
                out.insert("tau0".into(), model.mean_hitting_tau0(origin)?.into());
            }
            s if s.starts_with("tmix") => {
                let eps: f64 = match s.strip_prefix("tmix:") {
                    Some(e) => e.parse().map_err(|_| Error::Parameter(format!("bad tmix level in `{s}`")))?,
                    None => 0.25,
                };
                let t = model.mixing_time(eps)?;
                out.insert(format!("tmix:{eps}"), t.into());
            }
            other => bail!(Error::Parameter(format!("unknown report item `{other}`"))),
        }
    }
    Ok(Artifacts::main(json(&out)?))
}

#[derive(Deserialize)]
struct ScanRow {
    q: f64,
    replica: u64,
    tau0: f64,
    censored: bool,
}

#[derive(Deserialize)]
struct MedianRow {
    q: f64,
    median: f64,
}

fn fit(a: &FitArgs, seed: u64) -> anyhow::Result<Artifacts> {
    let text = read(&a.input)?;
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    if a.model == FitKind::Trend {
        let rows: Vec<MedianRow> =
            rd.deserialize().collect::<Result<_, _>>().map_err(|e| Error::Parse(format!("{}: {e}", a.input.display())))?;
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.q, r.median)).collect();
        return Ok(Artifacts::main(json(&bp2n_trend(&pts)?)?));
    }
    let rows: Vec<ScanRow> =
        rd.deserialize().collect::<Result<_, _>>().map_err(|e| Error::Parse(format!("{}: {e}", a.input.display())))?;
    let mut groups: Vec<(f64, Vec<Tau0Sample>)> = Vec::new();
    for r in rows {
        let s = Tau0Sample { q: r.q, replica: r.replica, tau0: r.tau0, censored: r.censored };
        match groups.iter_mut().find(|(q, _)| *q == r.q) {
            Some((_, v)) => v.push(s),
            None => groups.push((r.q, vec![s])),
        }
    }
    let points = groups.iter().map(|(_, v)| summarize(v, seed)).collect::<Result<Vec<_>, _>>()?;
    let report = match a.model {
        FitKind::Power => fit_power(&points)?,
        _ => fit_explog2(&points)?,
    };
    Ok(Artifacts::main(json(&report)?))
}

fn dir_text(d: Direction) -> String {
    format!("({},{})", d.x, d.y)
}

fn difficulty_text(d: Difficulty) -> String {
    match d {
        Difficulty::Zero => "0".into(),
        Difficulty::CertifiedAtMost(k) => format!("{k}"),
        Difficulty::AtLeast(k) => format!(">={k} (budget exhausted)"),
        Difficulty::Infinite => "inf".into(),
    }
}

fn classify_text(r: &ClassificationReport) -> String {
    let pieces: Vec<String> = r
        .stable
        .iter()
        .map(|p| match *p {
            ArcPiece::Full => "all directions".into(),
            ArcPiece::Point(d) => dir_text(d),
            ArcPiece::Arc { from, from_closed, to, to_closed } => format!(
                "{}{} .. {}{}",
                if from_closed { '[' } else { '(' },
                dir_text(from),
                dir_text(to),
                if to_closed { ']' } else { ')' }
            ),
        })
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, "rough class: {}", r.rough.label());
    let _ = writeln!(s, "stable set: {}", if pieces.is_empty() { "empty".into() } else { pieces.join(", ") });
    for d in &r.difficulties {
        let _ = writeln!(s, "difficulty {}: {}", dir_text(d.direction), difficulty_text(d.difficulty));
    }
    let _ = writeln!(s, "alpha: {}", difficulty_text(r.alpha));
    if let Some(k) = &r.refined {
        let mut labels = vec![
            if k.balanced { "balanced" } else { "unbalanced" },
            if k.rooted { "rooted" } else { "unrooted" },
        ];
        if k.balanced && !k.rooted {
            labels.push(if k.isotropic { "isotropic" } else { "semi-directed" });
        }
        labels.push(if k.finite_stable_set { "finite stable set" } else { "infinite stable set" });
        let _ = writeln!(s, "refined: {}", labels.join(", "));
    }
    if let Some([b, g, dl]) = r.exponents {
        let _ = writeln!(s, "exponents (beta, gamma, delta): {b}, {g}, {dl}");
    }
    if r.inconclusive {
        let _ = writeln!(s, "note: some difficulties are only lower bounds within window {} and budget {}", r.window, r.kmax);
    }
    s
}
