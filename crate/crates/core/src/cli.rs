//! Command-line interface: `test`, `structure`, `simulate`, `power`, `ica`, `clt-check`.
//!
//! Every subcommand is a pure function of its input bytes, flags and seed.
//! JSON goes to stdout unless `--out` names a file, which is written atomically.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cache::{NullCache, CACHE_DIR_ENV, DEFAULT_CACHE_DIR};
use crate::clt::{normality_diagnostic, random_centered_tensor, DEFAULT_K2};
use crate::error::{Error, Result};
use crate::grid::GridKind;
use crate::ica::{fit_ica, Bandwidth, FitOptions, GradientMode, KernelCdfConfig, RestartSummary, TraceEntry};
use crate::io::{parse_block_spec, read_csv_path, write_atomic, write_matrix_csv, write_sample_csv, BlockSchema, HeaderMode};
use crate::jdcov::{Subset, WeightScheme, DEFAULT_MAX_BLOCKS};
use crate::models::{ModelFamily, SymmetricLaw};
use crate::power::{power_curve, sign_model_table, write_power_csv, write_sign_table_csv};
use crate::sample::BlockedSample;
use crate::testing::{IndependenceTester, TestConfig, TestKind};

#[derive(Debug, Parser)]
#[command(name = "rjdcov", version, about = "Rank joint distance covariance: independence tests, ICA and simulation studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test joint, pairwise or subset independence of column blocks of a CSV file.
    Test(TestArgs),
    /// Pairwise tests with BH adjustment, then third-order tests on unlinked triples.
    Structure(StructureArgs),
    /// Draw one sample from a named model and write it as CSV.
    Simulate(SimulateArgs),
    /// Rejection rates over a parameter grid.
    Power(PowerArgs),
    /// Fit the rank-based ICA estimator to the columns of a CSV file.
    Ica(IcaArgs),
    /// Check the combinatorial CLT on a random centred tensor.
    CltCheck(CltArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeaderArg {
    Auto,
    Yes,
    No,
}

impl From<HeaderArg> for HeaderMode {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Yes => HeaderMode::Present,
            HeaderArg::No => HeaderMode::Absent,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of null resamples.
    #[arg(long = "B", alias = "resamples", default_value_t = 199)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `halton` or `iid:<seed>`.
    #[arg(long, default_value = "halton")]
    pub grid: String,
    #[arg(long, default_value_t = DEFAULT_MAX_BLOCKS)]
    pub max_blocks: usize,
    /// Directory of the on-disk null cache.
    #[arg(long, env = CACHE_DIR_ENV, default_value = DEFAULT_CACHE_DIR)]
    pub cache_dir: PathBuf,
    /// Simulate nulls in memory only.
    #[arg(long)]
    pub no_cache: bool,
}

impl CalibrationArgs {
    fn tester(&self) -> Result<IndependenceTester> {
        let config = TestConfig {
            alpha: self.alpha,
            resamples: self.resamples,
            seed: self.seed,
            grid: parse_grid(&self.grid)?,
            max_blocks: self.max_blocks,
        };
        let tester = IndependenceTester::new(config)?;
        Ok(if self.no_cache { tester } else { tester.with_cache(NullCache::new(&self.cache_dir)) })
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with one observation per row.
    pub input: PathBuf,
    /// Column ranges per block, 1-based inclusive, e.g. `1-3,4-6,7-9`.
    #[arg(long, conflicts_with = "schema")]
    pub blocks: Option<String>,
    /// JSON block schema file instead of `--blocks`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub header: HeaderArg,
}

impl InputArgs {
    fn load(&self) -> Result<BlockedSample> {
        let table = read_csv_path(&self.input, self.header.into())?;
        let (ranges, labels) = match (&self.blocks, &self.schema) {
            (Some(spec), _) => (parse_block_spec(spec)?, None),
            (None, Some(path)) => {
                let schema = BlockSchema::read(path)?;
                (schema.ranges()?, schema.labels())
            }
            // one block per column
            (None, None) => ((0..table.cols).map(|c| (c, c + 1)).collect(), None),
        };
        table.to_sample(&ranges, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Joint,
    Pairwise,
    Subset,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long, value_enum, default_value = "joint")]
    pub kind: KindArg,
    /// 1-based block indices for `--kind subset`, e.g. `1,2,3`.
    #[arg(long)]
    pub subset: Option<String>,
    /// Explicit weights `C_2,...,C_r`.
    #[arg(long, conflicts_with = "c")]
    pub weights: Option<String>,
    /// Geometric weights `C_s = c^(r-s)`.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StructureArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the dependency graph in DOT format.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Model name, see `rjdcov power --help`.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 0.0)]
    pub param: f64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PowerArgs {
    /// One of: null-gaussian, null-copula, null-cauchy, gaussian-ar, gaussian-banded,
    /// cauchy-regression, sine, konijn-gaussian, konijn-gaussian-local, konijn-copula, konijn-t, mixture,
    /// sign-gaussian, sign-t3, sign-t2, sign-cauchy.
    #[arg(long, required_unless_present = "sign_table")]
    pub model: Option<String>,
    /// Comma-separated parameter grid.
    #[arg(long, default_value = "0")]
    pub params: String,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// Tests to run: `joint`, `pairwise`, `subset:1,2,3`. Repeatable.
    #[arg(long = "test", default_value = "joint")]
    pub tests: Vec<String>,
    /// Geometric weight parameter of the joint test.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Emit the pairwise / higher-order / joint table of the sign model for all four marginal laws.
    #[arg(long)]
    pub sign_table: bool,
    /// Block dimension of the sign model table.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradientArg {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Args)]
pub struct IcaArgs {
    /// CSV file, one observation per row, one mixed signal per column.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub header: HeaderArg,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// `silverman`, `silverman:<factor>` or a fixed positive bandwidth.
    #[arg(long, default_value = "silverman")]
    pub bandwidth: String,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "exact")]
    pub gradient: GradientArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the recovered sources as CSV.
    #[arg(long)]
    pub sources: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CltArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 10000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_K2)]
    pub k2: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<GridKind> {
    match s {
        "halton" => Ok(GridKind::Halton),
        _ => match s.strip_prefix("iid:").map(str::parse::<u64>) {
            Some(Ok(seed)) => Ok(GridKind::IidUniform { seed }),
            _ => Err(Error::invalid(format!("unknown grid `{s}`, expected `halton` or `iid:<seed>`"))),
        },
    }
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("cannot parse `{t}` in {what}"))))
        .collect()
}

fn parse_subset(s: &str) -> Result<Subset> {
    let idx = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::invalid(format!("cannot parse subset `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    Subset::from_one_based(&idx)
}

fn parse_test(s: &str, c: f64) -> Result<TestKind> {
    match s {
        "joint" => Ok(TestKind::Joint { weights: WeightScheme::Geometric(c) }),
        "pairwise" => Ok(TestKind::PairwiseAggregate),
        _ => match s.strip_prefix("subset:") {
            Some(rest) => Ok(TestKind::Subset { subset: parse_subset(rest)? }),
            None => Err(Error::invalid(format!("unknown test `{s}`, expected joint, pairwise or subset:i,j,..."))),
        },
    }
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => Ok(stdout.write_all(bytes)?),
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn cmd_test(args: &TestArgs, stdout: &mut dyn Write) -> Result<()> {
    let sample = args.input.load()?;
    let weights = match (&args.weights, args.c) {
        (Some(w), _) => WeightScheme::Explicit(parse_f64_list(w, "--weights")?),
        (None, Some(c)) => WeightScheme::Geometric(c),
        (None, None) => WeightScheme::default(),
    };
    let kind = match args.kind {
        KindArg::Joint => TestKind::Joint { weights },
        KindArg::Pairwise => TestKind::PairwiseAggregate,
        KindArg::Subset => {
            let s = args.subset.as_deref().ok_or_else(|| Error::invalid("--kind subset needs --subset"))?;
            TestKind::Subset { subset: parse_subset(s)? }
        }
    };
    let report = args.calibration.tester()?.run(&sample, &kind)?;
    emit(args.out.as_deref(), stdout, &json_bytes(&report)?)
}

fn cmd_structure(args: &StructureArgs, stdout: &mut dyn Write) -> Result<()> {
    let sample = args.input.load()?;
    let report = args.calibration.tester()?.dependency_structure(&sample)?;
    if let Some(dot) = &args.dot {
        write_atomic(dot, report.to_dot().as_bytes())?;
    }
    emit(args.out.as_deref(), stdout, &json_bytes(&report)?)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let model: ModelFamily = args.model.parse()?;
    let sample = model.generate(args.n, args.param, args.seed)?;
    let mut buf = Vec::new();
    write_sample_csv(&sample, &mut buf)?;
    emit(args.out.as_deref(), stdout, &buf)
}

fn cmd_power(args: &PowerArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.replicates == 0 {
        return Err(Error::invalid("--replicates must be >= 1"));
    }
    let tester = args.calibration.tester()?;
    let mut buf = Vec::new();
    if args.sign_table {
        let rows = sign_model_table(&tester, &SymmetricLaw::TABLE, args.n, args.d, args.replicates, args.calibration.seed)?;
        write_sign_table_csv(&rows, &mut buf)?;
    } else {
        let model: ModelFamily = args.model.as_deref().unwrap_or_default().parse()?;
        let params = parse_f64_list(&args.params, "--params")?;
        let tests = args.tests.iter().map(|t| parse_test(t, args.c)).collect::<Result<Vec<_>>>()?;
        let rows = power_curve(&tester, model, &params, args.n, args.replicates, &tests, args.calibration.seed)?;
        write_power_csv(&rows, &mut buf)?;
    }
    emit(args.out.as_deref(), stdout, &buf)
}

#[derive(Debug, Serialize)]
struct IcaReport {
    schema_version: u32,
    n: usize,
    r: usize,
    c: f64,
    bandwidth: Bandwidth,
    gradient: GradientMode,
    seed: u64,
    theta_hat: Vec<f64>,
    w_hat: Vec<Vec<f64>>,
    unmixing: Vec<Vec<f64>>,
    mixing_hat: Vec<Vec<f64>>,
    objective: f64,
    converged: bool,
    restart_dispersion: f64,
    restarts: Vec<RestartSummary>,
    trace: Vec<TraceEntry>,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    if s == "silverman" {
        return Ok(Bandwidth::Silverman { factor: 1.06 });
    }
    if let Some(f) = s.strip_prefix("silverman:") {
        let factor = f.parse().map_err(|_| Error::invalid(format!("bad bandwidth factor `{f}`")))?;
        return Ok(Bandwidth::Silverman { factor });
    }
    let h = s.parse().map_err(|_| Error::invalid(format!("bad bandwidth `{s}`")))?;
    Ok(Bandwidth::Fixed { h })
}

fn cmd_ica(args: &IcaArgs, stdout: &mut dyn Write) -> Result<()> {
    let table = read_csv_path(&args.input, args.header.into())?;
    let data = table.to_matrix();
    let opts = FitOptions {
        c: args.c,
        kernel: KernelCdfConfig { bandwidth: parse_bandwidth(&args.bandwidth)? },
        gradient: match args.gradient {
            GradientArg::Exact => GradientMode::Exact,
            GradientArg::Approximate => GradientMode::Approximate,
        },
        restarts: args.restarts,
        max_iter: args.max_iter,
        seed: args.seed,
        ..FitOptions::default()
    };
    let est = fit_ica(&data, &opts)?;
    if let Some(path) = &args.sources {
        let header: Vec<String> = (1..=data.ncols()).map(|k| format!("s{k}")).collect();
        let mut buf = Vec::new();
        write_matrix_csv(&est.sources(), &header, &mut buf)?;
        write_atomic(path, &buf)?;
    }
    let report = IcaReport {
        schema_version: 1,
        n: data.nrows(),
        r: data.ncols(),
        c: opts.c,
        bandwidth: opts.kernel.bandwidth.clone(),
        gradient: opts.gradient,
        seed: opts.seed,
        theta_hat: est.theta_hat.theta.clone(),
        w_hat: rows_of(&est.w_hat),
        unmixing: rows_of(&est.unmixing),
        mixing_hat: rows_of(&est.mixing_hat),
        objective: est.objective,
        converged: est.converged,
        restart_dispersion: est.restart_dispersion(),
        restarts: est.restarts.clone(),
        trace: est.trace.clone(),
    };
    emit(args.out.as_deref(), stdout, &json_bytes(&report)?)
}

fn cmd_clt(args: &CltArgs, stdout: &mut dyn Write) -> Result<()> {
    let tensor = random_centered_tensor(args.order, args.n, args.seed)?;
    let report = normality_diagnostic(&tensor, args.draws, args.seed, args.k2)?;
    emit(args.out.as_deref(), stdout, &json_bytes(&report)?)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    execute(&cli.command, stdout)
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Test(a) => cmd_test(a, stdout),
        Command::Structure(a) => cmd_structure(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Power(a) => cmd_power(a, stdout),
        Command::Ica(a) => cmd_ica(a, stdout),
        Command::CltCheck(a) => cmd_clt(a, stdout),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli.command, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers() {
        assert_eq!(parse_grid("halton").unwrap(), GridKind::Halton);
        assert_eq!(parse_grid("iid:4").unwrap(), GridKind::IidUniform { seed: 4 });
        assert!(parse_grid("sobol").is_err());
        assert_eq!(parse_test("subset:1,3", 1.0).unwrap(), TestKind::Subset { subset: Subset::from_one_based(&[1, 3]).unwrap() });
        assert!(parse_test("nope", 1.0).is_err());
        assert_eq!(parse_bandwidth("0.2").unwrap(), Bandwidth::Fixed { h: 0.2 });
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_model_is_an_error() {
        let mut out = Vec::new();
        let err = run(["rjdcov", "simulate", "--model", "bogus"], &mut out).unwrap_err();
        assert!(matches!(err, Error::UnknownModel(_)));
    }
}
