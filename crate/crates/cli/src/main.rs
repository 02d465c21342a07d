use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use outlier_cluster::bench::{
    add_synthetic_outliers, gaussian_mixture, ingest_csv, parse_seeds, parse_values, planted_kcenter, run_experiment,
    summary_json, write_means_csv, write_rows_csv, Algorithm, CsvOptions, Dataset, ExperimentSpec, Sweep, Vary,
};
use outlier_cluster::coreset::{build_coreset_distributed, CoresetConfig};
use outlier_cluster::geometry::{pairwise_extent, Metric, SumObjective};
use outlier_cluster::partition::Partitioner;

#[derive(Parser)]
#[command(name = "cluster", version, about = "Distributed clustering with outliers on a simulated coordinator network")]
struct Cli {
    /// Worker threads for parallel runs (defaults to all cores).
    #[arg(long, env = "CLUSTER_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run algorithms at one (k, z) setting over several seeds.
    Run(RunArgs),
    /// Run algorithms over a list of k or z values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Parameter to vary.
        #[arg(long, value_parser = parse_vary)]
        vary: Vary,
        /// Comma-separated positive values, e.g. 32,64,128.
        #[arg(long, value_parser = parse_value_list)]
        values: Values,
    },
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Build one distributed coreset at a fixed truncation threshold.
    Coreset(CoresetArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Numeric CSV file, one point per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
    #[arg(long)]
    skip_header: bool,
    /// 1-based column numbers to ignore, comma-separated.
    #[arg(long, value_delimiter = ',')]
    drop_columns: Vec<usize>,
    /// Append this many outliers outside the data radius before running.
    #[arg(long, default_value_t = 0)]
    add_outliers: usize,
    /// Size of the outlier box relative to the data's bounding box.
    #[arg(long, default_value_t = 3.0)]
    outlier_spread: f64,
    #[arg(long, default_value_t = 0)]
    outlier_seed: u64,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset> {
        let options = CsvOptions {
            delimiter: self.delimiter,
            skip_header: self.skip_header,
            drop_columns: self.drop_columns.clone(),
        };
        let ds = ingest_csv(&self.input, &options).with_context(|| format!("reading {}", self.input.display()))?;
        Ok(add_synthetic_outliers(&ds, self.add_outliers, self.outlier_spread, self.outlier_seed)?)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Algorithm ids, comma-separated or repeated.
    #[arg(long = "algo", required = true, value_delimiter = ',', value_parser = parse_algorithm)]
    algorithms: Vec<Algorithm>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    z: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 5)]
    machines: usize,
    /// Inclusive range `a..b` or a comma-separated list.
    #[arg(long, default_value = "1..5", value_parser = parse_seed_list)]
    seeds: Seeds,
    #[arg(long, default_value = "random", value_parser = parse_partitioner)]
    partition: Partitioner,
    /// Per-run CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of means over seeds.
    #[arg(long)]
    means: Option<PathBuf>,
    /// JSON summary of the experiment.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Add a wall-clock column to the per-run CSV.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

#[derive(Clone)]
struct Values(Vec<usize>);

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Planted,
    Gaussian,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of inliers.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Outliers to add.
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Standard deviation of each Gaussian component.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Side of the box holding the Gaussian means.
    #[arg(long, default_value_t = 100.0)]
    extent: f64,
    #[arg(long, default_value_t = 3.0)]
    outlier_spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Median,
    Means,
}

#[derive(Args)]
struct CoresetArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.3)]
    eps: f64,
    /// Truncation threshold.
    #[arg(long)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Means)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 5)]
    machines: usize,
    #[arg(long, default_value = "random", value_parser = parse_partitioner)]
    partition: Partitioner,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: outlier_cluster::error::Error| {
        let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.id()).collect();
        format!("{e}; known: {}", known.join(", "))
    })
}

fn parse_seed_list(s: &str) -> Result<Seeds, String> {
    parse_seeds(s).map(Seeds).map_err(|e| e.to_string())
}

fn parse_value_list(s: &str) -> Result<Values, String> {
    parse_values(s).map(Values).map_err(|e| e.to_string())
}

fn parse_vary(s: &str) -> Result<Vary, String> {
    s.parse().map_err(|e: outlier_cluster::error::Error| e.to_string())
}

fn parse_partitioner(s: &str) -> Result<Partitioner, String> {
    s.parse().map_err(|e: outlier_cluster::error::Error| e.to_string())
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single byte, got {s:?}")),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs, sweep: Option<Sweep>) -> Result<ExitCode> {
    let spec = ExperimentSpec {
        algorithms: args.algorithms,
        dataset: args.input.load()?,
        k: args.k,
        z: args.z,
        eps: args.eps,
        machines: args.machines,
        seeds: args.seeds.0,
        partitioner: args.partition,
        sweep,
        timings: args.timings,
    };
    let result = run_experiment(&spec)?;
    write_rows_csv(&spec, &result, sink(args.out.as_deref())?)?;
    if let Some(p) = &args.means {
        write_means_csv(&result, sink(Some(p))?)?;
    }
    if let Some(p) = &args.summary {
        let mut w = sink(Some(p))?;
        serde_json::to_writer_pretty(&mut w, &summary_json(&spec, &result))?;
        writeln!(w)?;
    }
    for row in result.rows.iter().filter(|r| !r.succeeded()) {
        eprintln!(
            "{} k={} z={} seed={}: {}",
            row.algorithm,
            row.k,
            row.z,
            row.seed,
            row.error.as_deref().unwrap_or_default()
        );
    }
    Ok(if result.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn generate(args: GenerateArgs) -> Result<ExitCode> {
    let ds = match args.kind {
        Kind::Planted => {
            let inst = planted_kcenter(args.n, args.k, args.outliers, args.dim, args.seed)?;
            let rows: Vec<Vec<f64>> = inst.points.iter().map(|p| p.coords().to_vec()).collect();
            Dataset::from_rows("planted", &rows, "planted")?
        }
        Kind::Gaussian => {
            let ds = gaussian_mixture(args.n, args.k, args.dim, args.sigma, args.extent, args.seed)?;
            add_synthetic_outliers(&ds, args.outliers, args.outlier_spread, args.seed.wrapping_add(1))?
        }
    };
    let mut w = csv::Writer::from_writer(sink(args.out.as_deref())?);
    for row in ds.rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn coreset(args: CoresetArgs) -> Result<ExitCode> {
    let ds = args.input.load()?;
    let objective = match args.objective {
        ObjectiveArg::Median => SumObjective::Median,
        ObjectiveArg::Means => SumObjective::Means,
    };
    if !(args.eps > 0.0 && args.eps < 1.0) {
        bail!("eps must lie in (0, 1)");
    }
    let partition = args.partition.split(&ds.points, args.machines, args.seed)?;
    let metric = match pairwise_extent(&ds.points, &Metric::Euclidean) {
        Some(e) => Metric::clamped_for(e.d_min, e.d_max, ds.n(), args.eps),
        None => Metric::Euclidean,
    };
    let config = CoresetConfig::new(args.k, args.eps, objective, ds.dim());
    let (coreset, ledger) = build_coreset_distributed(&partition, args.threshold, &config, &metric, args.seed)?;
    coreset.write_csv(sink(args.out.as_deref())?)?;
    eprintln!("{}", ledger.to_json()?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Run(args) => run(args, None),
        Command::Sweep { run: args, vary, values } => run(args, Some(Sweep { vary, values: values.0 })),
        Command::Generate(args) => generate(args),
        Command::Coreset(args) => coreset(args),
    }
}
