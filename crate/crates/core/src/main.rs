use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boolfact::annealer::{run, write_trace_csv, Mode, SolverConfig, Target};
use boolfact::bench::{derive_seed, sweep, write_raw_csv, write_summary_csv, SweepSpec};
use boolfact::binmat::{hamming_rows, BinaryMatrix};
use boolfact::evaluation::{best_local_search, evaluate_missing, write_report_csv, ReportRow};
use boolfact::ingest::{
    build_matrix, column_support, group_members, read_ids, write_ids, write_support_csv,
    FilterRule, GenreTable, IngestConfig, RatingsTable,
};
use boolfact::instgen::{apply_mask, generate, read_instance, write_instance, GeneratorConfig};
use boolfact::landscape::{landscape_probe, probe_correlations, write_probe_csv};
use boolfact::{Error, Result};

/// Simulated-annealing 0/1 matrix factorization.
#[derive(Parser)]
#[command(name = "boolfact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted instance
    Generate(GenerateArgs),
    /// Run the annealer once
    Solve(SolveArgs),
    /// Run a parameter sweep over planted instances
    Sweep(SweepArgs),
    /// Probe energies around a planted solution
    Landscape(LandscapeArgs),
    /// Build a 0/1 matrix from MovieLens ratings
    Ingest(IngestArgs),
    /// Estimate hidden entries and compare with replacement baselines
    EvalMissing(EvalArgs),
    /// Row Hamming distances and group support reports
    Hamming(HammingArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    miss: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "rl-u")]
    mode: Mode,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 2.0)]
    beta0: f64,
    #[arg(long, default_value_t = 0.1)]
    betaf: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda0: f64,
    #[arg(long, default_value_t = 0.01)]
    lambdap: f64,
    #[arg(long = "max-mcs", default_value_t = 200_000)]
    max_mcs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig::new(self.mode, self.k)
            .schedule(self.beta0, self.betaf)
            .lambda(self.lambda0, self.lambdap)
            .max_mcs(self.max_mcs)
            .seed(self.seed)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Matrix file, or an instance directory containing v.txt
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Keep the best state over the whole budget instead of stopping at zero
    #[arg(long)]
    best: bool,
    /// Trace every this many MCS (0 disables trace.csv)
    #[arg(long = "trace-every", default_value_t = 0)]
    trace_every: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    beta0: Option<String>,
    #[arg(long)]
    betaf: Option<String>,
    #[arg(long)]
    lambda0: Option<String>,
    #[arg(long)]
    lambdap: Option<String>,
    #[arg(long = "max-mcs")]
    max_mcs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    instances: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    censor: Option<String>,
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// zero or best
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Instance directory written by `generate`; if absent one is generated
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// `a..b` (inclusive), `a..b:step`, or a comma list
    #[arg(long, default_value = "0..50")]
    distances: String,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 2.0)]
    lambda0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    movies: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[arg(long = "user-max", default_value_t = 300)]
    user_max: u32,
    #[arg(long = "movie-max", default_value_t = 400)]
    movie_max: u32,
    #[arg(long = "min-ones", default_value_t = 20)]
    min_ones: usize,
    /// Single row-then-column deletion pass instead of the fixed point
    #[arg(long = "one-pass")]
    one_pass: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Instance directory with v.txt (masked) and true_v.txt
    #[arg(long, conflicts_with = "matrix")]
    instance: Option<PathBuf>,
    /// Complete matrix to mask with --miss
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    miss: f64,
    /// Fill probability for the random baseline; defaults to the observed density
    #[arg(long)]
    rho: Option<f64>,
    /// Runs per mode, each with its own derived seed
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Also run the other two modes
    #[arg(long = "all-modes")]
    all_modes: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HammingArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Row ordinal whose neighbourhood forms the group
    #[arg(long)]
    anchor: Option<usize>,
    #[arg(long, default_value_t = 0)]
    radius: usize,
    /// movie_ids.txt written by `ingest`
    #[arg(long = "movie-ids")]
    movie_ids: Option<PathBuf>,
    #[arg(long)]
    movies: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    with_path(path, File::open(path).map_err(Error::from))
}

fn read_matrix(path: &Path) -> Result<BinaryMatrix> {
    with_path(path, BinaryMatrix::read_file(path))
}

fn read_target(path: &Path) -> Result<BinaryMatrix> {
    if path.is_dir() {
        read_matrix(&path.join("v.txt"))
    } else {
        read_matrix(path)
    }
}

fn parse_distances(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad distance list {s:?}"));
    if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        let step: usize = step.trim().parse().map_err(|_| bad())?;
        if step == 0 || b < a {
            return Err(bad());
        }
        Ok((a..=b).step_by(step).collect())
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<String> {
    let config = GeneratorConfig::new(a.m, a.n, a.k, a.rho)
        .seed(a.seed)
        .miss_ratio(a.miss);
    let inst = generate(&config)?;
    write_instance(&a.out, &inst, &config)?;
    Ok(format!(
        "generated {}x{} K={} density={:.4} hidden={} -> {}",
        a.m,
        a.n,
        a.k,
        inst.true_v.density(),
        inst.v.missing_count(),
        a.out.display()
    ))
}

fn cmd_solve(a: SolveArgs) -> Result<String> {
    let v = read_target(&a.matrix)?;
    let mut config = a.solver.config().trace_every(a.trace_every);
    if a.best {
        config = config.target(Target::BestWithinBudget);
    }
    let r = run(&v, &config)?;

    let mut w = csv::Writer::from_writer(create(&a.out, "result.csv")?);
    w.write_record([
        "mode",
        "k",
        "seed",
        "mcs0",
        "mcs1",
        "total_mcs",
        "best_mismatches",
        "best_energy",
        "stopped",
        "attempts",
        "accepted",
        "final_beta",
    ])?;
    w.write_record([
        r.mode.label().to_string(),
        config.rank.to_string(),
        config.seed.to_string(),
        r.mcs0.map_or_else(String::new, |m| m.to_string()),
        r.mcs1.to_string(),
        r.total_mcs.to_string(),
        r.best_mismatches.to_string(),
        r.best_energy.as_f64().to_string(),
        r.stopped.label().to_string(),
        r.attempts.to_string(),
        r.accepted.to_string(),
        r.final_beta.to_string(),
    ])?;
    w.flush()?;
    r.best_factors.w.write_file(a.out.join("w.txt"))?;
    r.best_factors.h.write_file(a.out.join("h.txt"))?;
    r.reconstruction().write_file(a.out.join("reconstruction.txt"))?;
    if a.trace_every > 0 {
        write_trace_csv(create(&a.out, "trace.csv")?, &r.trace)?;
    }
    Ok(format!(
        "{} K={}: {} after {} MCS, best mismatches {} at MCS {}{}",
        r.mode,
        config.rank,
        r.stopped.label(),
        r.total_mcs,
        r.best_mismatches,
        r.mcs1,
        r.mcs0.map_or_else(String::new, |m| format!(", MCS0 {m}")),
    ))
}

fn cmd_sweep(a: SweepArgs) -> Result<String> {
    let mut spec = match &a.config {
        Some(p) => with_path(p, SweepSpec::read_file(p))?,
        None => SweepSpec::default(),
    };
    let overrides = [
        ("m", &a.m),
        ("n", &a.n),
        ("matrix", &a.matrix),
        ("mode", &a.mode),
        ("k", &a.k),
        ("rho", &a.rho),
        ("beta0", &a.beta0),
        ("betaf", &a.betaf),
        ("lambda0", &a.lambda0),
        ("lambdap", &a.lambdap),
        ("max-mcs", &a.max_mcs),
        ("seed", &a.seed),
        ("instances", &a.instances),
        ("seeds", &a.seeds),
        ("censor", &a.censor),
        ("threads", &a.threads),
        ("target", &a.target),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            spec.set(key, v)?;
        }
    }
    let outcome = sweep(&spec)?;
    write_raw_csv(create(&a.out, "raw_results.csv")?, &outcome.raw)?;
    write_summary_csv(create(&a.out, "summary.csv")?, &outcome.summary)?;
    let solved = outcome.raw.iter().filter(|r| r.mcs0.is_some()).count();
    Ok(format!(
        "{} runs ({} solved), {} summary rows -> {}",
        outcome.raw.len(),
        solved,
        outcome.summary.len(),
        a.out.display()
    ))
}

fn cmd_landscape(a: LandscapeArgs) -> Result<String> {
    let distances = parse_distances(&a.distances)?;
    let inst = match &a.instance {
        Some(dir) => with_path(dir, read_instance(dir))?,
        None => generate(&GeneratorConfig::new(a.m, a.n, a.k, a.rho).seed(a.seed))?,
    };
    let rows = landscape_probe(
        &inst.planted,
        &inst.true_v,
        &distances,
        a.samples,
        a.lambda0,
        derive_seed(a.seed, &[1]),
    )?;
    write_probe_csv(create(&a.out, "landscape.csv")?, &rows)?;
    let (bc, rl) = probe_correlations(&rows);
    Ok(format!(
        "{} probes; Spearman vs distance: bc={bc:.3} rl={rl:.3}",
        rows.len()
    ))
}

fn cmd_ingest(a: IngestArgs) -> Result<String> {
    let config = IngestConfig {
        user_id_max: a.user_max,
        movie_id_max: a.movie_max,
        rating_threshold: a.threshold,
        min_ones: a.min_ones,
        filter: if a.one_pass {
            FilterRule::OnePass
        } else {
            FilterRule::FixedPoint
        },
    };
    let ratings = RatingsTable::parse_filtered(open(&a.ratings)?, |u, m| config.keeps(u, m))?;
    let built = build_matrix(&ratings, &config)?;
    let m = &built.matrix;
    fs::create_dir_all(&a.out)?;
    m.write_file(a.out.join("matrix.txt"))?;
    write_ids(create(&a.out, "user_ids.txt")?, &built.user_ids)?;
    write_ids(create(&a.out, "movie_ids.txt")?, &built.movie_ids)?;
    if let Some(movies) = &a.movies {
        let genres = GenreTable::parse(open(movies)?)?;
        let all: Vec<usize> = (0..m.rows()).collect();
        let support = column_support(m, &all)?;
        write_support_csv(create(&a.out, "support.csv")?, &support, &built.movie_ids, &genres)?;
    }
    Ok(format!(
        "{}x{} matrix, density {:.3} -> {}",
        m.rows(),
        m.cols(),
        m.density(),
        a.out.display()
    ))
}

fn cmd_eval(a: EvalArgs) -> Result<String> {
    let (masked, truth) = match (&a.instance, &a.matrix) {
        (Some(dir), None) => (
            read_matrix(&dir.join("v.txt"))?,
            read_matrix(&dir.join("true_v.txt"))?,
        ),
        (None, Some(path)) => {
            let truth = read_matrix(path)?;
            (apply_mask(&truth, a.miss, derive_seed(a.solver.seed, &[0]))?, truth)
        }
        _ => return Err(Error::Config("give exactly one of --instance or --matrix".into())),
    };
    let rho = a.rho.unwrap_or_else(|| masked.density());
    let modes: Vec<Mode> = if a.all_modes {
        Mode::ALL.to_vec()
    } else {
        vec![a.solver.mode]
    };
    let mut rows = Vec::new();
    for mode in modes {
        for i in 0..a.runs {
            let seed = derive_seed(a.solver.seed, &[1, i as u64]);
            let config = SolverArgs {
                mode,
                seed,
                ..a.solver.clone()
            }
            .config();
            let result = best_local_search(&masked, &config, a.solver.max_mcs)?;
            let report = evaluate_missing(&truth, &masked, &result, rho, derive_seed(seed, &[2]))?;
            rows.push(ReportRow {
                report,
                seed,
                instance_id: 0,
            });
        }
    }
    write_report_csv(create(&a.out, "report.csv")?, &rows)?;
    let r = &rows[0].report;
    Ok(format!(
        "{} runs over {} hidden cells; first: estimated {:.2}% zero {:.2}% one {:.2}% random {:.2}%",
        rows.len(),
        r.miss_count,
        r.error_estimated,
        r.error_zero,
        r.error_one,
        r.error_random
    ))
}

fn cmd_hamming(a: HammingArgs) -> Result<String> {
    let v = read_matrix(&a.matrix)?;
    let d = hamming_rows(&v)?;
    let mut w = csv::Writer::from_writer(create(&a.out, "distances.csv")?);
    for row in &d {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    let Some(anchor) = a.anchor else {
        return Ok(format!("{}x{} distance matrix -> {}", d.len(), d.len(), a.out.display()));
    };
    let members = group_members(&d, anchor, a.radius)?;
    let mut g = create(&a.out, "group.csv")?;
    writeln!(g, "row")?;
    for m in &members {
        writeln!(g, "{m}")?;
    }
    g.flush()?;
    let movie_ids = match &a.movie_ids {
        Some(p) => with_path(p, fs::read_to_string(p).map_err(Error::from).and_then(|t| read_ids(&t)))?,
        None => (1..=v.cols() as u32).collect(),
    };
    let genres = match &a.movies {
        Some(p) => GenreTable::parse(open(p)?)?,
        None => GenreTable::default(),
    };
    let support = column_support(&v, &members)?;
    write_support_csv(create(&a.out, "support.csv")?, &support, &movie_ids, &genres)?;
    let shared = support.iter().filter(|s| s.all_ones).count();
    Ok(format!(
        "group of row {anchor} (radius {}) has {} members sharing {} columns -> {}",
        a.radius,
        members.len(),
        shared,
        a.out.display()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::EvalMissing(a) => cmd_eval(a),
        Command::Hamming(a) => cmd_hamming(a),
    };
    match outcome {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
