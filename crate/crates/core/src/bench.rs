//! Parameter sweeps over planted instances with censored median/quartile
//! summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::annealer::{run, Mode, RunResult, SolverConfig, StopReason, Target};
use crate::binmat::BinaryMatrix;
use crate::error::{Error, Result};
use crate::instgen::{generate, GeneratorConfig};

/// Median and type-7 quartiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quartiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Type-7 (linear interpolation) quantile of sorted data. Infinite values
/// are allowed; interpolating toward +∞ yields +∞.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return sorted[lo];
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    if a == b {
        a
    } else {
        a + frac * (b - a)
    }
}

/// Median (midpoint of the middle two for even counts) and type-7 Q1/Q3.
pub fn median_iqr(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in statistics input".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        let (a, b) = (s[n / 2 - 1], s[n / 2]);
        if a == b {
            a
        } else {
            (a + b) / 2.0
        }
    };
    Ok(Quartiles {
        median,
        q1: quantile_sorted(&s, 0.25),
        q3: quantile_sorted(&s, 0.75),
    })
}

/// Keeps the smallest `round(fraction·n)` values (at least one), ascending.
pub fn censor(values: &[f64], fraction: f64) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let keep = ((fraction * s.len() as f64) + 0.5).floor() as usize;
    s.truncate(keep.clamp(1, s.len().max(1)));
    s
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed addressed by a key path below `master`. The same path always
/// yields the same seed, independent of any other path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p)))
}

const INSTANCE_STREAM: u64 = 1;
const RUN_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSource {
    Planted { rows: usize, cols: usize },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub source: InstanceSource,
    pub modes: Vec<Mode>,
    pub ranks: Vec<usize>,
    pub rhos: Vec<f64>,
    pub beta0s: Vec<f64>,
    pub beta_fs: Vec<f64>,
    pub lambda0s: Vec<f64>,
    pub lambda_ps: Vec<f64>,
    pub instances: usize,
    pub seeds: usize,
    pub censor: Option<f64>,
    pub max_mcs: u64,
    pub target: Target,
    pub master_seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            source: InstanceSource::Planted { rows: 30, cols: 30 },
            modes: Mode::ALL.to_vec(),
            ranks: vec![8],
            rhos: vec![0.1],
            beta0s: vec![10.0, 2.0, 1.0],
            beta_fs: vec![0.01, 0.1],
            lambda0s: vec![2.0],
            lambda_ps: vec![0.01],
            instances: 10,
            seeds: 10,
            censor: None,
            max_mcs: 200_000,
            target: Target::ExactZero,
            master_seed: 0,
            threads: 0,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad value {s:?} for {key}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl SweepSpec {
    /// Applies one `key=value` setting. Keys mirror the CLI flags; grid keys
    /// take comma-separated lists.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--");
        match key {
            "mode" | "modes" => self.modes = parse_list(key, value)?,
            "k" => self.ranks = parse_list(key, value)?,
            "rho" => self.rhos = parse_list(key, value)?,
            "beta0" => self.beta0s = parse_list(key, value)?,
            "betaf" => self.beta_fs = parse_list(key, value)?,
            "lambda0" => self.lambda0s = parse_list(key, value)?,
            "lambdap" => self.lambda_ps = parse_list(key, value)?,
            "instances" => self.instances = parse_one(key, value)?,
            "seeds" => self.seeds = parse_one(key, value)?,
            "max-mcs" => self.max_mcs = parse_one(key, value)?,
            "seed" => self.master_seed = parse_one(key, value)?,
            "threads" => self.threads = parse_one(key, value)?,
            "censor" => {
                self.censor = match value.trim() {
                    "" | "none" => None,
                    v => Some(parse_one(key, v)?),
                }
            }
            "target" => {
                self.target = match value.trim() {
                    "zero" => Target::ExactZero,
                    "best" => Target::BestWithinBudget,
                    other => return Err(Error::Config(format!("unknown target {other:?}"))),
                }
            }
            "m" | "n" => {
                let v: usize = parse_one(key, value)?;
                let (mut rows, mut cols) = match self.source {
                    InstanceSource::Planted { rows, cols } => (rows, cols),
                    InstanceSource::File(_) => (30, 30),
                };
                if key == "m" {
                    rows = v
                } else {
                    cols = v
                }
                self.source = InstanceSource::Planted { rows, cols };
            }
            "matrix" => self.source = InstanceSource::File(PathBuf::from(value.trim())),
            other => return Err(Error::Config(format!("unknown sweep key {other:?}"))),
        }
        Ok(())
    }

    /// Flat `key=value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            spec.set(k, v)?;
        }
        Ok(spec)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("mode", self.modes.is_empty()),
            ("k", self.ranks.is_empty()),
            ("rho", self.rhos.is_empty() && matches!(self.source, InstanceSource::Planted { .. })),
            ("beta0", self.beta0s.is_empty()),
            ("betaf", self.beta_fs.is_empty()),
            ("lambda0", self.lambda0s.is_empty()),
            ("lambdap", self.lambda_ps.is_empty()),
        ];
        if let Some((k, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid {k} is empty")));
        }
        if self.instances == 0 || self.seeds == 0 {
            return Err(Error::Config("instances and seeds must be positive".into()));
        }
        if let Some(c) = self.censor {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Config(format!("censor fraction must lie in (0, 1], got {c}")));
            }
        }
        Ok(())
    }
}

/// One run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub mode: Mode,
    pub k: usize,
    pub rho: f64,
    pub beta0: f64,
    pub beta_f: f64,
    pub lambda0: f64,
    pub lambda_p: f64,
    pub instance: usize,
    pub seed_index: usize,
    pub run_seed: u64,
    pub mcs0: Option<u64>,
    pub mcs1: u64,
    pub total_mcs: u64,
    pub best_mismatches: u64,
    pub stopped: String,
}

impl RawRow {
    /// MCS0 for exact-zero sweeps (unsolved = +∞), MCS1 otherwise.
    pub fn metric(&self, target: Target) -> f64 {
        match target {
            Target::ExactZero => self.mcs0.map_or(f64::INFINITY, |m| m as f64),
            Target::BestWithinBudget => self.mcs1 as f64,
        }
    }
}

/// Summary of one (mode, K, ρ, λ_0, λ_p) point at its best (β_0, β_f).
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub mode: Mode,
    pub k: usize,
    pub rho: f64,
    pub lambda0: f64,
    pub lambda_p: f64,
    pub beta0: f64,
    pub beta_f: f64,
    pub stats: Quartiles,
    pub solve_rate: f64,
    pub runs: usize,
    pub censored: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub raw: Vec<RawRow>,
    pub summary: Vec<SummaryRow>,
}

struct Job {
    row: RawRow,
    instance: usize,
    rho_index: usize,
    config: SolverConfig,
}

fn float_key(x: f64) -> u64 {
    x.to_bits()
}

fn load_instances(spec: &SweepSpec) -> Result<BTreeMap<(usize, usize), Vec<BinaryMatrix>>> {
    let mut out = BTreeMap::new();
    for &k in &spec.ranks {
        match &spec.source {
            InstanceSource::Planted { rows, cols } => {
                for (ri, &rho) in spec.rhos.iter().enumerate() {
                    let mut list = Vec::with_capacity(spec.instances);
                    for i in 0..spec.instances {
                        let seed = derive_seed(
                            spec.master_seed,
                            &[INSTANCE_STREAM, *rows as u64, *cols as u64, k as u64, float_key(rho), i as u64],
                        );
                        list.push(generate(&GeneratorConfig::new(*rows, *cols, k, rho).seed(seed))?.v);
                    }
                    out.insert((k, ri), list);
                }
            }
            InstanceSource::File(path) => {
                let v = BinaryMatrix::read_file(path)?;
                for ri in 0..spec.rhos.len().max(1) {
                    out.insert((k, ri), vec![v.clone(); spec.instances]);
                }
            }
        }
    }
    Ok(out)
}

/// Runs every (grid point × instance × seed) cell and summarizes each point
/// at the (β_0, β_f) with the smallest median.
pub fn sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let instances = load_instances(spec)?;
    let rhos: Vec<f64> = match &spec.source {
        InstanceSource::Planted { .. } => spec.rhos.clone(),
        InstanceSource::File(_) => {
            let v = &instances.values().next().expect("at least one rank")[0];
            vec![v.density()]
        }
    };
    let (rows, cols) = match &spec.source {
        InstanceSource::Planted { rows, cols } => (*rows, *cols),
        InstanceSource::File(_) => {
            let v = &instances.values().next().expect("at least one rank")[0];
            (v.rows(), v.cols())
        }
    };

    let mut jobs = Vec::new();
    for &mode in &spec.modes {
        for &k in &spec.ranks {
            for (ri, &rho) in rhos.iter().enumerate() {
                for &lambda0 in &spec.lambda0s {
                    for &lambda_p in &spec.lambda_ps {
                        for &beta0 in &spec.beta0s {
                            for &beta_f in &spec.beta_fs {
                                for instance in 0..spec.instances {
                                    for seed_index in 0..spec.seeds {
                                        let run_seed = derive_seed(
                                            spec.master_seed,
                                            &[
                                                RUN_STREAM,
                                                rows as u64,
                                                cols as u64,
                                                k as u64,
                                                float_key(rho),
                                                instance as u64,
                                                seed_index as u64,
                                            ],
                                        );
                                        let config = SolverConfig::new(mode, k)
                                            .schedule(beta0, beta_f)
                                            .lambda(lambda0, lambda_p)
                                            .max_mcs(spec.max_mcs)
                                            .target(spec.target)
                                            .seed(run_seed);
                                        jobs.push(Job {
                                            row: RawRow {
                                                mode,
                                                k,
                                                rho,
                                                beta0,
                                                beta_f,
                                                lambda0,
                                                lambda_p,
                                                instance,
                                                seed_index,
                                                run_seed,
                                                mcs0: None,
                                                mcs1: 0,
                                                total_mcs: 0,
                                                best_mismatches: 0,
                                                stopped: String::new(),
                                            },
                                            instance,
                                            rho_index: ri,
                                            config,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let execute = || -> Vec<RawRow> {
        jobs.par_iter()
            .map(|job| {
                let v = &instances[&(job.config.rank, job.rho_index)][job.instance];
                finish_row(job.row.clone(), run(v, &job.config))
            })
            .collect()
    };
    let raw = if spec.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(execute)
    } else {
        execute()
    };
    let summary = summarize(&raw, spec.target, spec.censor)?;
    Ok(SweepOutcome { raw, summary })
}

fn finish_row(mut row: RawRow, result: Result<RunResult>) -> RawRow {
    match result {
        Ok(r) => {
            row.mcs0 = r.mcs0;
            row.mcs1 = r.mcs1;
            row.total_mcs = r.total_mcs;
            row.best_mismatches = r.best_mismatches;
            row.stopped = r.stopped.label().to_string();
        }
        Err(e) => {
            row.stopped = format!("error: {e}");
        }
    }
    row
}

type PointKey = (Mode, usize, u64, u64, u64);

/// Groups raw rows by grid point and picks, per point, the (β_0, β_f) pair
/// with the smallest (censored) median; ties go to the smaller upper
/// quartile, then to the first pair seen.
pub fn summarize(raw: &[RawRow], target: Target, censor_fraction: Option<f64>) -> Result<Vec<SummaryRow>> {
    let mut points: BTreeMap<PointKey, Vec<((u64, u64), Vec<&RawRow>)>> = BTreeMap::new();
    for r in raw {
        let key = (r.mode, r.k, float_key(r.rho), float_key(r.lambda0), float_key(r.lambda_p));
        let betas = (float_key(r.beta0), float_key(r.beta_f));
        let groups = points.entry(key).or_default();
        match groups.iter_mut().find(|(b, _)| *b == betas) {
            Some((_, rows)) => rows.push(r),
            None => groups.push((betas, vec![r])),
        }
    }

    let mut out = Vec::new();
    for ((mode, k, rho, lambda0, lambda_p), groups) in points {
        let mut best: Option<SummaryRow> = None;
        for (_, rows) in groups {
            let values: Vec<f64> = rows.iter().map(|r| r.metric(target)).collect();
            let kept = match censor_fraction {
                Some(f) => censor(&values, f),
                None => values,
            };
            let stats = median_iqr(&kept)?;
            let solved = rows.iter().filter(|r| r.mcs0.is_some()).count();
            let cand = SummaryRow {
                mode,
                k,
                rho: f64::from_bits(rho),
                lambda0: f64::from_bits(lambda0),
                lambda_p: f64::from_bits(lambda_p),
                beta0: rows[0].beta0,
                beta_f: rows[0].beta_f,
                stats,
                solve_rate: solved as f64 / rows.len() as f64,
                runs: rows.len(),
                censored: censor_fraction,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.stats.median < b.stats.median
                        || (cand.stats.median == b.stats.median && cand.stats.q3 < b.stats.q3)
                }
            };
            if better {
                best = Some(cand);
            }
        }
        out.extend(best);
    }
    Ok(out)
}

fn opt_u64(v: Option<u64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub const RAW_HEADER: [&str; 15] = [
    "mode",
    "k",
    "rho",
    "beta0",
    "beta_f",
    "lambda0",
    "lambda_p",
    "instance",
    "seed_index",
    "run_seed",
    "mcs0",
    "mcs1",
    "total_mcs",
    "best_mismatches",
    "stopped",
];

pub fn write_raw_csv<W: Write>(out: W, rows: &[RawRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.label().to_string(),
            r.k.to_string(),
            r.rho.to_string(),
            r.beta0.to_string(),
            r.beta_f.to_string(),
            r.lambda0.to_string(),
            r.lambda_p.to_string(),
            r.instance.to_string(),
            r.seed_index.to_string(),
            r.run_seed.to_string(),
            opt_u64(r.mcs0),
            r.mcs1.to_string(),
            r.total_mcs.to_string(),
            r.best_mismatches.to_string(),
            r.stopped.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv(text: &str) -> Result<Vec<RawRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |i: usize| Error::Parse {
            line: n + 2,
            msg: format!("bad field {}", RAW_HEADER[i]),
        };
        let f = |i: usize| rec.get(i).ok_or_else(|| bad(i));
        let num = |i: usize| -> Result<f64> { f(i)?.parse().map_err(|_| bad(i)) };
        let int = |i: usize| -> Result<u64> { f(i)?.parse().map_err(|_| bad(i)) };
        rows.push(RawRow {
            mode: f(0)?.parse()?,
            k: int(1)? as usize,
            rho: num(2)?,
            beta0: num(3)?,
            beta_f: num(4)?,
            lambda0: num(5)?,
            lambda_p: num(6)?,
            instance: int(7)? as usize,
            seed_index: int(8)? as usize,
            run_seed: int(9)?,
            mcs0: if f(10)?.is_empty() { None } else { Some(int(10)?) },
            mcs1: int(11)?,
            total_mcs: int(12)?,
            best_mismatches: int(13)?,
            stopped: f(14)?.to_string(),
        });
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode",
        "k",
        "rho",
        "lambda0",
        "lambda_p",
        "beta0",
        "beta_f",
        "median",
        "q1",
        "q3",
        "solve_rate",
        "runs",
        "censor",
    ])?;
    for r in rows {
        w.write_record([
            r.mode.label().to_string(),
            r.k.to_string(),
            r.rho.to_string(),
            r.lambda0.to_string(),
            r.lambda_p.to_string(),
            r.beta0.to_string(),
            r.beta_f.to_string(),
            r.stats.median.to_string(),
            r.stats.q1.to_string(),
            r.stats.q3.to_string(),
            r.solve_rate.to_string(),
            r.runs.to_string(),
            r.censored.map_or_else(String::new, |c| c.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw rows whose run ended in [`StopReason::Solved`].
pub fn solved_fraction(rows: &[RawRow]) -> f64 {
    let solved = rows
        .iter()
        .filter(|r| r.stopped == StopReason::Solved.label())
        .count();
    solved as f64 / rows.len().max(1) as f64
}
