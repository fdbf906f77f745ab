use std::io::Write;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use sbergsma_core::builtin;
use sbergsma_core::inference::{self, TestOptions, Transform};
use sbergsma_core::io::{self, Envelope, Provenance, WeightsKind};
use sbergsma_core::models::{self, DependenceModel, DependenceSpec, THETA_GRID};
use sbergsma_core::null::{self, Alternative, NullMethod, DEFAULT_EIGENVALUES, DEFAULT_GRID_SIZE, DEFAULT_REPS};
use sbergsma_core::timeseries;
use sbergsma_core::{sb_statistic, Error, ProximityMatrix, ReferenceDistribution, SpatialPanel};

#[derive(Parser, Debug)]
#[command(name = "sbergsma", version, about = "Spatial Bergsma dependence measure and tests")]
struct Cli {
    /// Seed for all randomness; drawn and printed to stderr when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SBERGSMA_THREADS")]
    threads: Option<usize>,

    /// Output path, `-` for stdout.
    #[arg(short, long, global = true, default_value = "-")]
    output: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Compute S~_B and the pairwise rho~ matrix for a panel.
    Compute(ComputeArgs),
    /// Test spatial pairwise independence.
    Test(TestArgs),
    /// Sample the null distribution of T * S~_B.
    Null(NullArgs),
    /// Simulate a panel from a SAR or SMA model.
    Simulate(SimulateArgs),
    /// Moments of S~_B across a grid of dependence strengths.
    Sweep(SweepArgs),
    /// Per-region AR(p) residuals and their autocorrelations.
    Prewhiten(PrewhitenArgs),
    /// Build and export a proximity matrix.
    Weights(WeightsOnlyArgs),
    /// Leading eigenvalues of a population Bergsma kernel.
    Spectrum(SpectrumArgs),
}

#[derive(Args, Debug, Serialize)]
struct WeightsArgs {
    /// Dense square CSV with zero diagonal.
    #[arg(long, value_name = "CSV", group = "weights_source")]
    weights: Option<String>,
    /// Edge list of 1-based region pairs `i,j`.
    #[arg(long, value_name = "CSV", group = "weights_source")]
    edges: Option<String>,
    /// Coordinates `label,x,y`; inverse-distance weights.
    #[arg(long, value_name = "CSV", group = "weights_source")]
    coords: Option<String>,
    /// Built-in design: kerala-adjacency, kerala-inverse-distance, kerala-chain, chain:<R>.
    #[arg(long, value_name = "NAME", group = "weights_source")]
    builtin: Option<String>,
    /// Lag-1 chain of R regions.
    #[arg(long, value_name = "R", group = "weights_source")]
    linear_chain: Option<usize>,
    /// Row-standardize W (the default).
    #[arg(long, overrides_with = "no_standardize")]
    #[serde(skip)]
    standardize: bool,
    /// Use W as given.
    #[arg(long)]
    #[serde(rename = "standardize", serialize_with = "serialize_negated")]
    no_standardize: bool,
}

#[derive(Args, Debug, Serialize)]
struct ComputeArgs {
    /// Panel CSV (header of region labels, one row per time point), `-` for stdin.
    panel: String,
    #[command(flatten)]
    weights: WeightsArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Args, Debug, Serialize)]
struct TestArgs {
    panel: String,
    #[command(flatten)]
    weights: WeightsArgs,
    /// Null route: `mc` (Monte Carlo) or `asym` (eigenvalue limit law).
    #[arg(long, default_value = "mc")]
    null: NullMethod,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    /// Reference distribution of the null, e.g. `normal`, `laplace:0,2`.
    #[arg(long, default_value = "normal")]
    dist: ReferenceDistribution,
    /// Eigenvalues per region for `--null asym`.
    #[arg(long = "K", default_value_t = DEFAULT_EIGENVALUES)]
    k: usize,
    /// Nystrom grid size for `--null asym`.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
    /// Bootstrap replicates for the interval (0 skips it).
    #[arg(long, default_value_t = inference::DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    two_sided: bool,
    /// Fixed pairwise rho~ cutoff; simulated at the panel's T when omitted.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Simulations for the pairwise cutoff (0 skips screening unless --cutoff is given).
    #[arg(long, default_value_t = inference::DEFAULT_SCREEN_SIMS)]
    screen_sims: usize,
    /// Replace each region by its normal scores before testing.
    #[arg(long)]
    normal_scores: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    /// Model name shown in the table.
    #[arg(long, default_value = "S~_B")]
    label: String,
}

#[derive(Args, Debug, Serialize)]
struct NullArgs {
    #[command(flatten)]
    weights: WeightsArgs,
    #[arg(long, default_value = "mc")]
    method: NullMethod,
    #[arg(long, default_value = "normal")]
    dist: ReferenceDistribution,
    /// Number of regions (defaults to the size of W).
    #[arg(long = "R")]
    regions: Option<usize>,
    /// Series length (Monte Carlo only).
    #[arg(long = "T")]
    times: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long = "K", default_value_t = DEFAULT_EIGENVALUES)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    weights: WeightsArgs,
    #[arg(long)]
    model: DependenceModel,
    #[arg(long)]
    theta: f64,
    #[arg(long = "T", default_value_t = 50)]
    times: usize,
    /// Noise distribution.
    #[arg(long, default_value = "normal")]
    dist: ReferenceDistribution,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    weights: WeightsArgs,
    #[arg(long)]
    model: DependenceModel,
    #[arg(long, value_delimiter = ',', default_values_t = THETA_GRID)]
    thetas: Vec<f64>,
    #[arg(long = "T", default_value_t = 50)]
    times: usize,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value = "normal")]
    dist: ReferenceDistribution,
}

#[derive(Args, Debug, Serialize)]
struct PrewhitenArgs {
    panel: String,
    /// AR order.
    #[arg(long, default_value_t = 3)]
    ar: usize,
    /// Largest ACF lag (defaults to min(20, T - p - 1)).
    #[arg(long)]
    acf_lags: Option<usize>,
    /// ACF table path; defaults to `<output stem>_acf.csv` when writing to a file.
    #[arg(long)]
    acf_output: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct WeightsOnlyArgs {
    #[command(flatten)]
    weights: WeightsArgs,
    /// Region count for edge lists (defaults to the largest index).
    #[arg(long = "R")]
    regions: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    #[arg(long, default_value = "normal")]
    dist: ReferenceDistribution,
    #[arg(long = "K", default_value_t = DEFAULT_EIGENVALUES)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
}

impl Command {
    fn uses_seed(&self) -> bool {
        matches!(
            self,
            Command::Test(_) | Command::Null(_) | Command::Simulate(_) | Command::Sweep(_)
        )
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            let category = err.downcast_ref::<Error>().map_or("error", Error::category);
            let report = json!({ "error": category, "message": format!("{err:#}") });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

/// A closed downstream pipe (e.g. `| head`) is not a failure.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        let io_err = match e.downcast_ref::<Error>() {
            Some(Error::Io(io_err)) => Some(io_err),
            _ => e.downcast_ref::<std::io::Error>(),
        };
        io_err.is_some_and(|io_err| io_err.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let seed = if cli.command.uses_seed() {
        Some(match cli.seed {
            Some(s) => s,
            None => {
                let s: u64 = rand::rng().random();
                eprintln!("seed: {s}");
                s
            }
        })
    } else {
        cli.seed
    };
    let provenance = Provenance::new(json!({ "command": &cli.command }), seed);
    let out = cli.output.as_str();

    match &cli.command {
        Command::Compute(args) => {
            let (panel, provenance) = read_panel(&args.panel, provenance)?;
            let (w, provenance) = args.weights.load(Some(&panel), None, provenance)?;
            let result = sb_statistic(&panel, &w)?;
            write_json(out, &Envelope { provenance, result })
        }
        Command::Test(args) => {
            let (panel, provenance) = read_panel(&args.panel, provenance)?;
            let (w, provenance) = args.weights.load(Some(&panel), None, provenance)?;
            let options = TestOptions {
                null_method: args.null,
                reference: args.dist,
                reps: args.reps,
                eigenvalues: args.k,
                grid_size: args.grid,
                bootstrap: args.bootstrap,
                level: args.level,
                alternative: if args.two_sided {
                    Alternative::TwoSided
                } else {
                    Alternative::Greater
                },
                screen_cutoff: args.cutoff,
                screen_sims: args.screen_sims,
                transform: if args.normal_scores {
                    Transform::NormalScores
                } else {
                    Transform::None
                },
                seed: seed.expect("test draws a seed"),
            };
            let result = inference::test_spatial_independence(&panel, &w, &options)?;
            match args.format {
                ReportFormat::Json => write_json(out, &Envelope { provenance, result }),
                ReportFormat::Table => {
                    let text = format!("{}{}", provenance.csv_comment(), result.table(&args.label));
                    Ok(io::write_string(out, &text)?)
                }
            }
        }
        Command::Null(args) => {
            let (w, provenance) = args.weights.load(None, args.regions, provenance)?;
            let regions = args.regions.unwrap_or(w.len());
            let seed = seed.expect("null draws a seed");
            let dist = match args.method {
                NullMethod::MonteCarlo => {
                    let Some(times) = args.times else {
                        bail!(Error::InvalidParameter(
                            "--T is required for the Monte Carlo null".into()
                        ));
                    };
                    null::monte_carlo_null(&args.dist, regions, times, &w, args.reps, seed)?
                }
                NullMethod::AsymptoticEigen => {
                    if regions != w.len() {
                        bail!(Error::DimensionMismatch(format!(
                            "R = {regions} but weight matrix is {0}x{0}",
                            w.len()
                        )));
                    }
                    let spectrum = null::nystrom_eigenvalues(&args.dist, args.k, args.grid)?;
                    null::asymptotic_null_sample(&vec![spectrum; regions], &w, args.reps, seed)?
                }
            };
            write_csv(out, &provenance, |wr| io::write_null(wr, &dist))
        }
        Command::Simulate(args) => {
            let (w, provenance) = args.weights.load(None, None, provenance)?;
            let spec = DependenceSpec::new(args.model, args.theta, w, args.dist)?;
            let panel = models::simulate_panel(&spec, args.times, seed.expect("simulate draws a seed"))?;
            Ok(io::save_panel(out, &panel, Some(&provenance))?)
        }
        Command::Sweep(args) => {
            let (w, provenance) = args.weights.load(None, None, provenance)?;
            let points = models::theta_sweep(
                args.model,
                &w,
                &args.thetas,
                args.times,
                args.reps,
                seed.expect("sweep draws a seed"),
                &args.dist,
            )?;
            write_csv(out, &provenance, |wr| io::write_sweep(wr, &points))
        }
        Command::Prewhiten(args) => {
            let (panel, provenance) = read_panel(&args.panel, provenance)?;
            let residuals = timeseries::residual_panel(&panel, args.ar)?;
            let lags = args.acf_lags.unwrap_or_else(|| 20.min(residuals.times() - 1));
            let acfs = residuals
                .labels()
                .iter()
                .enumerate()
                .map(|(i, label)| {
                    let acf = timeseries::acf(residuals.column(i), lags).map_err(|e| region_error(e, label))?;
                    Ok((label.clone(), acf))
                })
                .collect::<Result<Vec<_>>>()?;
            let acf_path = match (&args.acf_output, out) {
                (Some(p), _) => Some(p.clone()),
                (None, "-") => None,
                (None, p) => Some(sibling_path(p, "_acf.csv")),
            };
            io::save_panel(out, &residuals, Some(&provenance))?;
            match acf_path {
                Some(p) => write_csv(&p, &provenance, |wr| io::write_acf(wr, &acfs)),
                None => {
                    log::info!("ACF table skipped; pass --acf-output to write it");
                    Ok(())
                }
            }
        }
        Command::Weights(args) => {
            let (w, provenance) = args.weights.load(None, args.regions, provenance)?;
            Ok(io::save_weights(out, &w, Some(&provenance))?)
        }
        Command::Spectrum(args) => {
            let spectrum = null::nystrom_eigenvalues(&args.dist, args.k, args.grid)?;
            write_csv(out, &provenance, |wr| io::write_spectrum(wr, &spectrum))
        }
    }
}

impl WeightsArgs {
    /// Resolves W, adopting the panel's labels for index-based sources.
    fn load(
        &self,
        panel: Option<&SpatialPanel>,
        regions: Option<usize>,
        provenance: Provenance,
    ) -> Result<(ProximityMatrix, Provenance)> {
        let regions = regions.or(panel.map(SpatialPanel::regions));
        let (w, provenance, index_based) = if let Some(path) = &self.weights {
            let bytes = read_input(path)?;
            let w = io::parse_weights(&bytes, WeightsKind::Dense, None)
                .with_context(|| format!("parsing weights {path}"))?;
            let has_header = w.labels().iter().zip(1..).any(|(l, i)| *l != format!("R{i}"));
            (w, provenance.with_input("weights", &bytes), !has_header)
        } else if let Some(path) = &self.edges {
            let bytes = read_input(path)?;
            let w = io::parse_weights(&bytes, WeightsKind::Edges, regions)
                .with_context(|| format!("parsing weights {path}"))?;
            (w, provenance.with_input("edges", &bytes), true)
        } else if let Some(path) = &self.coords {
            let bytes = read_input(path)?;
            let w = io::parse_weights(&bytes, WeightsKind::Coords, None)
                .with_context(|| format!("parsing weights {path}"))?;
            (w, provenance.with_input("coords", &bytes), false)
        } else if let Some(name) = &self.builtin {
            (builtin::named(name)?, provenance, false)
        } else if let Some(r) = self.linear_chain {
            (sbergsma_core::weights::linear_chain(r)?, provenance, true)
        } else {
            bail!(Error::InvalidParameter(
                "no weights given; use --weights, --edges, --coords, --builtin or --linear-chain".into()
            ));
        };
        let w = match panel {
            Some(p) if index_based && p.regions() == w.len() => w.with_labels(p.labels().to_vec())?,
            _ => w,
        };
        let w = if self.no_standardize { w } else { w.row_standardize()? };
        Ok((w, provenance))
    }
}

fn serialize_negated<S: serde::Serializer>(value: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_bool(!value)
}

fn read_input(path: &str) -> Result<Vec<u8>> {
    io::read_input(path).with_context(|| format!("reading {path}"))
}

fn read_panel(path: &str, provenance: Provenance) -> Result<(SpatialPanel, Provenance)> {
    let bytes = read_input(path)?;
    let panel = io::parse_panel(&bytes).with_context(|| format!("parsing panel {path}"))?;
    Ok((panel, provenance.with_input("panel", &bytes)))
}

fn region_error(err: Error, label: &str) -> anyhow::Error {
    anyhow::Error::new(err).context(format!("region '{label}'"))
}

fn write_json<T: Serialize>(path: &str, value: &T) -> Result<()> {
    Ok(io::write_string(path, &io::to_json(value)?)?)
}

fn write_csv<F>(path: &str, provenance: &Provenance, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> sbergsma_core::Result<()>,
{
    Ok(io::write_output(path, |w| {
        w.write_all(provenance.csv_comment().as_bytes())?;
        body(w)
    })?)
}

/// `dir/name.csv` with `suffix` replacing the extension, e.g. `dir/name_acf.csv`.
fn sibling_path(path: &str, suffix: &str) -> String {
    let p = std::path::Path::new(path);
    let stem = p
        .file_stem()
        .map_or_else(|| path.into(), |s| s.to_string_lossy().into_owned());
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(format!("{stem}{suffix}")).to_string_lossy().into_owned(),
        _ => format!("{stem}{suffix}"),
    }
}
