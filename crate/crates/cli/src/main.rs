use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use airygeom::analysis::{read_feature_csv, scan_growth_constant, ProbeConfig, ProbeKind};
use airygeom::asymptotics::{fit_subleading, RatioSeries};
use airygeom::conformal::{calibrate_intervals, coverage_check, read_samples, DEFAULT_COVERAGE_TOLERANCE, DEFAULT_WINDOW};
use airygeom::dataset::{build_records, counterfactual_shuffle, records_to_jsonl, BuildConfig, Dataset, DatasetRecord, Modality};
use airygeom::dra::{best_of_seeds, ActivationKind, NetConfig};
use airygeom::numerics::{format_rational, log10_of_rational};
use airygeom::recursion::{amplitude_table, amplitude_table_parallel, intersection_number_with, AmplitudeCache};
use airygeom::verify::{run_suite, Suite};
use airygeom::{Error, Partition, SurfaceClass};

const CACHE_ENV: &str = "AIRYGEOM_CACHE_DIR";
const CACHE_FILE: &str = "amplitudes.jsonl";

#[derive(Parser)]
#[command(name = "airygeom", version, about = "Exact psi-class intersection numbers and related experiments")]
struct Cli {
    /// Worker threads for table and dataset generation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print one intersection number as an exact rational and its log10.
    Compute {
        #[arg(short = 'g')]
        g: u32,
        /// Partition, comma separated, any order.
        #[arg(short = 'd', allow_hyphen_values = true)]
        d: String,
    },
    /// All intersection numbers of one (g, n).
    Table {
        #[arg(short = 'g')]
        g: u32,
        #[arg(short = 'n')]
        n: u32,
        /// Emit dataset records as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Check identities the recursion must satisfy.
    Verify {
        #[arg(long, value_parser = ["dilaton", "onepoint", "symmetry", "selection"])]
        suite: String,
        #[arg(long, default_value_t = 6)]
        euler_max: u32,
    },
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Normalised ratios to the leading asymptotic and a subleading fit.
    Asymptotics {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        g_min: Option<u32>,
        #[arg(long)]
        g_max: u32,
        #[arg(long, default_value_t = 2)]
        fit_order: usize,
        /// Print the ratio series as CSV instead of the fit summary.
        #[arg(long)]
        csv: bool,
    },
    /// Windowed conformal intervals for a file of predictions.
    Conformal {
        /// CSV or JSONL (by extension) with prediction, truth, n[, covariate].
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        json: bool,
    },
    /// Train networks on the recursive integer sequence.
    DraDemo(DraDemoArgs),
    #[command(subcommand)]
    Probe(ProbeCommand),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate records, the shared B tensor and a manifest.
    Build {
        #[arg(long, default_value_t = 0)]
        g_min: u32,
        #[arg(long)]
        g_max: u32,
        #[arg(long, default_value_t = 1)]
        n_min: u32,
        #[arg(long, default_value_t = 4)]
        n_max: u32,
        #[arg(long)]
        dim_max: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-bind one input modality across records of the same genus.
    Shuffle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        modality: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a full dataset directory; records go to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DraDemoArgs {
    #[arg(long, value_delimiter = ',', default_value = "dra")]
    activation: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Rank the 90 growth-constant hypotheses by probe R².
    #[command(name = "scan-A")]
    ScanA {
        /// CSV with columns g,n,d followed by features.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "linear")]
        kind: String,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include the first subleading term with this α₁.
        #[arg(long, allow_hyphen_values = true)]
        alpha1: Option<f64>,
    },
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Parse(_) => "parse",
        Error::RankDeficient(_) => "rank-deficient",
        Error::GroupTooSmall { .. } => "group-too-small",
        Error::Diverged(_) => "diverged",
        Error::UnknownModality(_) => "unknown-modality",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: domain: --threads must be at least 1");
        return ExitCode::from(1);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .expect("thread pool is configured once");
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", error_kind(&e));
            ExitCode::from(1)
        }
    }
}

fn cache_path() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(|d| Path::new(&d).join(CACHE_FILE))
}

fn open_cache() -> airygeom::Result<AmplitudeCache> {
    let cache = AmplitudeCache::new();
    if let Some(p) = cache_path() {
        if p.exists() {
            cache.load_jsonl(&p)?;
        }
    }
    Ok(cache)
}

fn close_cache(cache: &AmplitudeCache) -> airygeom::Result<()> {
    if let Some(p) = cache_path() {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        cache.save_jsonl(&p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> airygeom::Result<ExitCode> {
    let parallel = cli.threads > 1;
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Compute { g, d } => {
            let d = Partition::parse(&d)?;
            if d.is_empty() {
                return Err(Error::Domain("partition must have at least one part".into()));
            }
            let cache = open_cache()?;
            let v = intersection_number_with(g, &d, &cache);
            let lv = log10_of_rational(&v);
            writeln!(out, "{}", format_rational(&v))?;
            if lv.is_zero() {
                writeln!(out, "log10 -inf")?;
            } else {
                writeln!(out, "log10 {}", lv.log10_magnitude)?;
            }
            close_cache(&cache)?;
        }
        Command::Table { g, n, json } => {
            let cache = open_cache()?;
            let rows = if parallel { amplitude_table_parallel(g, n, &cache)? } else { amplitude_table(g, n, &cache)? };
            let dim = SurfaceClass::new(g, n).dimension().unwrap_or(0) as u32;
            if json {
                let records: Vec<DatasetRecord> = rows
                    .into_iter()
                    .map(|(d, v)| DatasetRecord {
                        g,
                        n,
                        d,
                        log10_target: log10_of_rational(&v).log10_magnitude,
                        target: format_rational(&v),
                        b_ref: dim,
                    })
                    .collect();
                out.write_all(records_to_jsonl(&records)?.as_bytes())?;
            } else {
                for (d, v) in rows {
                    writeln!(out, "{d}\t{}", format_rational(&v))?;
                }
            }
            close_cache(&cache)?;
        }
        Command::Verify { suite, euler_max } => {
            let cache = open_cache()?;
            let suite: Suite = suite.parse()?;
            let report = run_suite(suite, euler_max, &cache);
            close_cache(&cache)?;
            for f in &report.failures {
                writeln!(out, "FAIL {f}")?;
            }
            writeln!(
                out,
                "{} {:?} euler_max={} checked={} failures={}",
                if report.passed() { "PASS" } else { "FAIL" },
                report.suite,
                euler_max,
                report.checked,
                report.failures.len()
            )?;
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Dataset(DatasetCommand::Build { g_min, g_max, n_min, n_max, dim_max, out: dir }) => {
            let mut config = BuildConfig::new(g_min, g_max, dim_max).with_n_range(n_min, n_max);
            config.parallel = parallel;
            let cache = open_cache()?;
            let ds = build_records(&config, &cache)?;
            ds.write_dir(&dir)?;
            close_cache(&cache)?;
            writeln!(out, "records={} b_entries={} dir={}", ds.records.len(), ds.b_coo.len(), dir.display())?;
        }
        Command::Dataset(DatasetCommand::Shuffle { input, modality, seed, out: dir }) => {
            let modality: Modality = modality.parse()?;
            let mut ds = Dataset::read_dir(&input)?;
            ds.records = counterfactual_shuffle(&ds.records, modality, seed);
            match dir {
                Some(dir) => {
                    ds.write_dir(&dir)?;
                    writeln!(out, "records={} dir={}", ds.records.len(), dir.display())?;
                }
                None => out.write_all(records_to_jsonl(&ds.records)?.as_bytes())?,
            }
        }
        Command::Asymptotics { n, g_min, g_max, fit_order, csv } => {
            // smallest genus with a stable surface and a nonzero expansion variable
            let g_min = g_min.unwrap_or_else(|| (0..).find(|g| 2 * g + n >= 4).unwrap());
            let cache = open_cache()?;
            let series = RatioSeries::build(n, g_min, g_max, &cache)?;
            close_cache(&cache)?;
            if csv {
                series.write_csv(&mut out)?;
            } else {
                let fit = fit_subleading(&series, fit_order)?;
                writeln!(out, "points {}", fit.points)?;
                writeln!(out, "alpha1 {}", fit.alpha1())?;
                for (j, c) in fit.series_coefficients.iter().enumerate() {
                    writeln!(out, "c{} {c}", j + 1)?;
                }
                writeln!(out, "rss {}", fit.residual_sum_of_squares)?;
            }
        }
        Command::Conformal { input, alpha, window, json } => {
            let jsonl = input.extension().is_some_and(|e| e == "jsonl" || e == "json");
            let samples = read_samples(BufReader::new(File::open(&input)?), jsonl)?;
            let report = calibrate_intervals(&samples, alpha, window)?;
            let check = coverage_check(report.coverage, alpha, DEFAULT_COVERAGE_TOLERANCE);
            if json {
                let v = serde_json::json!({
                    "coverage": report.coverage,
                    "mean_width": report.mean_width,
                    "target": 1.0 - alpha,
                    "within_tolerance": check.pass,
                    "per_group": report.per_group,
                    "half_widths": report.half_widths,
                });
                writeln!(out, "{v}")?;
            } else {
                writeln!(out, "coverage {:.6} target {:.6} within_tolerance {}", report.coverage, 1.0 - alpha, check.pass)?;
                writeln!(out, "mean_width {:.6}", report.mean_width)?;
                for (n, s) in &report.per_group {
                    writeln!(out, "group n={n} samples={} coverage={:.6} mean_width={:.6}", s.samples, s.coverage, s.mean_width)?;
                }
            }
        }
        Command::DraDemo(args) => dra_demo(args, &mut out)?,
        Command::Probe(ProbeCommand::ScanA { features, kind, ridge, seed, alpha1 }) => {
            let kind: ProbeKind = kind.parse()?;
            let (keys, feats) = read_feature_csv(BufReader::new(File::open(&features)?))?;
            let config = match kind {
                ProbeKind::Linear => ProbeConfig::linear(ridge, seed),
                ProbeKind::NonLinear => ProbeConfig::non_linear(seed),
            };
            let scan = scan_growth_constant(&feats, &keys, &config, alpha1)?;
            writeln!(out, "rank,numerator,denominator,value,r2")?;
            for (i, e) in scan.ranked.iter().enumerate() {
                let h = e.hypothesis;
                writeln!(out, "{},{},{},{},{}", i + 1, h.numerator, h.denominator, h.value(), e.r2)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dra_demo(args: DraDemoArgs, out: &mut impl Write) -> airygeom::Result<()> {
    let kinds = args.activation.iter().map(|a| a.parse()).collect::<airygeom::Result<Vec<ActivationKind>>>()?;
    if args.seeds == 0 {
        return Err(Error::Domain("--seeds must be at least 1".into()));
    }
    let (train, test) = (0..=120, 121..=200);
    if args.csv {
        writeln!(out, "activation,n,truth,prediction")?;
    }
    for kind in kinds {
        let mut cfg = NetConfig::mlp_64_32(kind, 0);
        if let Some(s) = args.steps {
            cfg.steps = s;
        }
        if let Some(lr) = args.learning_rate {
            cfg.learning_rate = lr;
        }
        let report = best_of_seeds(&cfg, 0..args.seeds, train.clone(), test.clone())?;
        if args.csv {
            for (n, t, p) in &report.predictions {
                writeln!(out, "{},{n},{t},{p}", kind.name())?;
            }
        } else {
            writeln!(
                out,
                "{} best_seed={} train_r2={:.6} test_r2={:.6} final_loss={:.6e}",
                kind.name(),
                report.seed,
                report.train_r2,
                report.test_r2,
                report.final_loss
            )?;
        }
    }
    Ok(())
}
