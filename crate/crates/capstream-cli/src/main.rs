//! `capstream`: capped stream sampling and frequency-cap estimation.
//!
//! Subcommands: `sample` turns an element stream into a sample file,
//! `estimate` answers Q(f, segment) queries from a sample, and `simulate`
//! reproduces the (ell x T) error grids on synthetic Zipf streams.

use anyhow::{anyhow, bail, Context, Result};
use capstream_core::continuous::{ContinuousFixedK, ContinuousFixedTau};
use capstream_core::continuous_est::{estimate_continuous_1pass, estimate_continuous_2pass};
use capstream_core::discrete::{DiscreteFixedK, DiscreteFixedTau};
use capstream_core::discrete_est::{
    estimate_1pass_with, estimate_discrete_2pass, DiscreteCoefficients,
};
use capstream_core::harness::{run_error_grid, CellStats, ErrorGrid, ExperimentConfig, SchemeKind};
use capstream_core::multiobjective::estimate_multi;
use capstream_core::twopass::Scheme;
use capstream_core::{io, Ell, FrequencyFunction, KeyHasher, RandomSource, SegmentPredicate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "capstream",
    version,
    about = "Stream sampling for frequency-cap statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an element stream (stdin or --input) into a sample file.
    Sample(SampleArgs),
    /// Estimate a frequency statistic from a sample file.
    Estimate(EstimateArgs),
    /// Reproduce the (ell x T) error grids on synthetic Zipf streams.
    Simulate(SimulateArgs),
    /// Build a multi-objective (coordinated union) sample over a cap set.
    MoSample(MoSampleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Discrete: unit weights, integer ell (or "inf").
    D,
    /// Continuous: arbitrary positive weights, real ell.
    C,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Fixed threshold.
    Tau,
    /// Fixed sample size.
    K,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Threshold for --mode tau.
    #[arg(long)]
    tau: Option<f64>,
    /// Sample size for --mode k.
    #[arg(long)]
    k: Option<usize>,
    /// Cap parameter: positive real, or "inf" with --scheme d.
    #[arg(long)]
    ell: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Batch-eviction fraction in [0,1) for the continuous fixed-size
    /// sampler; 0 evicts one key at a time.
    #[arg(long, default_value_t = 0.0)]
    batch_evict: f64,
    /// Input stream file; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output sample file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Emit a mergeable pass-I summary instead of running the 1-pass sampler.
    #[arg(long, default_value_t = false)]
    pass1: bool,
    /// Also run pass II and write exact weights of the sampled keys here
    /// (only with --pass1).
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args)]
struct MoSampleArgs {
    /// Per-objective sample size.
    #[arg(long)]
    k: usize,
    /// Comma-separated cap parameters, or "interval" for all of (0, inf).
    #[arg(long)]
    caps: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input stream file; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output sample file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample file produced by `capstream sample` (or a #pass1 summary).
    #[arg(long)]
    sample: PathBuf,
    /// Statistic: cap:T, sum, distinct, or moment:p.
    #[arg(long = "f")]
    statistic: String,
    /// Segment: "all" or file:PATH with one raw key per line.
    #[arg(long, default_value = "all")]
    segment: String,
    /// Exact weights from a second pass (`weights:PATH` or PATH); switches
    /// to the inverse-probability estimator.
    #[arg(long = "two-pass")]
    two_pass: Option<String>,
    /// Seed used when the stream was ingested (for canonicalizing segment
    /// keys).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    alpha: f64,
    /// Stream length per repetition.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    rep: usize,
    /// Comma-separated sample cap parameters (grid rows).
    #[arg(long)]
    ells: String,
    /// Comma-separated statistic caps T (grid columns).
    #[arg(long)]
    caps: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "tsv")]
    format: String,
}

const HASH_SEED_TAG: u64 = 0x4a5;
const SAMPLER_TAG: u64 = 0x4a6;

fn derive_hasher(seed: u64) -> KeyHasher {
    KeyHasher::new(RandomSource::new(seed).derive(HASH_SEED_TAG, 0).master())
}

fn open_input(path: &Option<PathBuf>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(BufReader::new(std::io::stdin())),
    })
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn parse_statistic(spec: &str) -> Result<FrequencyFunction> {
    if spec == "sum" {
        return Ok(FrequencyFunction::Sum);
    }
    if spec == "distinct" {
        return Ok(FrequencyFunction::Distinct);
    }
    if let Some(t) = spec.strip_prefix("cap:") {
        return Ok(FrequencyFunction::cap(t.parse()?)?);
    }
    if let Some(p) = spec.strip_prefix("moment:") {
        return Ok(FrequencyFunction::moment(p.parse()?)?);
    }
    bail!("unknown statistic {spec:?}; use cap:T, sum, distinct or moment:p")
}

fn parse_segment(spec: &str, hasher: &KeyHasher) -> Result<SegmentPredicate> {
    if spec == "all" {
        return Ok(SegmentPredicate::All);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let file = BufReader::new(
            File::open(path).with_context(|| format!("opening segment file {path}"))?,
        );
        let mut keys = Vec::new();
        for line in file.lines() {
            let line = line?;
            if !line.is_empty() {
                keys.push(hasher.canonicalize(line.as_bytes()));
            }
        }
        return Ok(SegmentPredicate::keys(keys));
    }
    bail!("unknown segment {spec:?}; use all or file:PATH")
}

fn parse_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad list entry {s:?}: {e}"))
        })
        .collect()
}

fn run_sample(args: SampleArgs) -> Result<()> {
    let hasher = derive_hasher(args.seed);
    let source = RandomSource::new(args.seed).derive(SAMPLER_TAG, 0);
    let stream = io::read_stream(open_input(&args.input)?, &hasher)?;
    let mut out = open_output(&args.output)?;
    if args.pass1 {
        return run_pass_one(args, hasher, stream, &mut out);
    }
    if args.weights_out.is_some() {
        bail!("--weights-out requires --pass1");
    }
    match args.scheme {
        SchemeArg::D => {
            let ell = if args.ell == "inf" {
                Ell::Infinite
            } else {
                Ell::Finite(
                    args.ell
                        .parse()
                        .context("--ell must be an integer or inf")?,
                )
            };
            let sample = match args.mode {
                ModeArg::Tau => {
                    let tau = args.tau.ok_or_else(|| anyhow!("--mode tau needs --tau"))?;
                    let mut s = DiscreteFixedTau::new(ell, tau, hasher, &source)?;
                    for e in stream {
                        s.push(e)?;
                    }
                    s.finish()
                }
                ModeArg::K => {
                    let k = args.k.ok_or_else(|| anyhow!("--mode k needs --k"))?;
                    let mut s = DiscreteFixedK::new(ell, k, hasher, &source)?;
                    for e in stream {
                        s.push(e)?;
                    }
                    s.finish()
                }
            };
            io::write_discrete_sample(&sample, &mut out)?;
        }
        SchemeArg::C => {
            let ell: f64 = args.ell.parse().context("--ell must be a positive real")?;
            let sample = match args.mode {
                ModeArg::Tau => {
                    let tau = args.tau.ok_or_else(|| anyhow!("--mode tau needs --tau"))?;
                    let mut s = ContinuousFixedTau::new(ell, tau, hasher, &source)?;
                    for e in stream {
                        s.push(e)?;
                    }
                    s.finish()
                }
                ModeArg::K => {
                    let k = args.k.ok_or_else(|| anyhow!("--mode k needs --k"))?;
                    let mut s = ContinuousFixedK::with_batch_eviction(
                        ell,
                        k,
                        args.batch_evict,
                        hasher,
                        &source,
                    )?;
                    for e in stream {
                        s.push(e)?;
                    }
                    s.finish()
                }
            };
            io::write_continuous_sample(&sample, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn run_pass_one(
    args: SampleArgs,
    hasher: KeyHasher,
    stream: Vec<capstream_core::Element>,
    out: &mut dyn Write,
) -> Result<()> {
    use capstream_core::twopass::{pass_one, pass_two, SummaryMode};
    let scheme = match args.scheme {
        SchemeArg::D => {
            if args.ell == "inf" {
                Scheme::Discrete(Ell::Infinite)
            } else {
                Scheme::Discrete(Ell::Finite(
                    args.ell
                        .parse()
                        .context("--ell must be an integer or inf")?,
                ))
            }
        }
        SchemeArg::C => Scheme::Continuous(args.ell.parse().context("--ell must be a real")?),
    };
    let mode = match args.mode {
        ModeArg::Tau => {
            SummaryMode::FixedThreshold(args.tau.ok_or_else(|| anyhow!("--mode tau needs --tau"))?)
        }
        ModeArg::K => SummaryMode::FixedSize(args.k.ok_or_else(|| anyhow!("--mode k needs --k"))?),
    };
    let summary = pass_one(stream.iter().copied(), scheme, mode, hasher)?;
    io::write_pass_one(&summary, &mut &mut *out)?;
    out.flush()?;
    if let Some(path) = &args.weights_out {
        let weights = pass_two(stream.iter().copied(), &summary)?;
        let mut wout = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        io::write_pass_two(&weights, &mut wout)?;
        wout.flush()?;
    }
    Ok(())
}

fn run_mo_sample(args: MoSampleArgs) -> Result<()> {
    use capstream_core::multiobjective::{build_multi_sample, CapSet};
    let hasher = derive_hasher(args.seed);
    let stream = io::read_stream(open_input(&args.input)?, &hasher)?;
    let caps = if args.caps == "interval" {
        CapSet::AllPositive
    } else {
        CapSet::Grid(parse_list(&args.caps)?)
    };
    let sample = build_multi_sample(&stream, args.k, &caps, &hasher)?;
    let mut out = open_output(&args.output)?;
    io::write_multi_sample(&sample, &mut out)?;
    out.flush()?;
    Ok(())
}

fn read_weights(spec: &str) -> Result<capstream_core::twopass::PassTwoSummary> {
    let path = spec.strip_prefix("weights:").unwrap_or(spec);
    let file =
        BufReader::new(File::open(path).with_context(|| format!("opening weights file {path}"))?);
    Ok(io::read_pass_two(file)?)
}

fn print_estimate(
    q: f64,
    tau: impl std::fmt::Display,
    ell: impl std::fmt::Display,
    f: &str,
    segment: &str,
    n_sampled: usize,
) {
    println!("Q_hat={q} tau={tau} ell={ell} f={f} segment={segment} n_sampled={n_sampled}");
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    let hasher = derive_hasher(args.seed);
    let f = parse_statistic(&args.statistic)?;
    let segment = parse_segment(&args.segment, &hasher)?;
    let mut header = String::new();
    BufReader::new(File::open(&args.sample)?).read_line(&mut header)?;
    let reader = || -> Result<BufReader<File>> { Ok(BufReader::new(File::open(&args.sample)?)) };

    if header.starts_with("#shl-discrete") {
        let sample = io::read_discrete_sample(reader()?)?;
        let in_segment = sample
            .entries
            .keys()
            .filter(|k| segment.contains(**k))
            .count();
        let q = match &args.two_pass {
            None => {
                let coef = DiscreteCoefficients::for_sample(&sample)?;
                estimate_1pass_with(&coef, &sample, &f, &segment)
            }
            Some(spec) => {
                let weights = read_weights(spec)?;
                let missing = sample
                    .entries
                    .keys()
                    .filter(|k| !weights.weights.contains_key(k))
                    .count();
                if missing > 0 {
                    bail!("weights file lacks {missing} of the sampled keys; run pass II over the same sample");
                }
                let pairs: Vec<_> = weights
                    .pairs()
                    .filter(|(k, _)| sample.entries.contains_key(k))
                    .map(|(k, w)| (k, w as u64))
                    .collect();
                let need = pairs.iter().map(|&(_, w)| w).max().unwrap_or(1) as usize + 1;
                let coef = DiscreteCoefficients::new(sample.ell, sample.tau, need)?;
                estimate_discrete_2pass(pairs, &f, &segment, &coef)?
            }
        };
        print_estimate(
            q,
            sample.tau,
            sample.ell,
            &args.statistic,
            &args.segment,
            in_segment,
        );
    } else if header.starts_with("#shl-continuous") {
        let sample = io::read_continuous_sample(reader()?)?;
        let in_segment = sample
            .entries
            .keys()
            .filter(|k| segment.contains(**k))
            .count();
        let q = match &args.two_pass {
            None => estimate_continuous_1pass(&sample, &f, &segment)?,
            Some(spec) => {
                let weights = read_weights(spec)?;
                let missing = sample
                    .entries
                    .keys()
                    .filter(|k| !weights.weights.contains_key(k))
                    .count();
                if missing > 0 {
                    bail!("weights file lacks {missing} of the sampled keys; run pass II over the same sample");
                }
                let pairs = weights
                    .pairs()
                    .filter(|(k, _)| sample.entries.contains_key(k));
                estimate_continuous_2pass(pairs, sample.tau, sample.ell, &f, &segment)?
            }
        };
        print_estimate(
            q,
            sample.tau,
            sample.ell,
            &args.statistic,
            &args.segment,
            in_segment,
        );
    } else if header.starts_with("#pass1") {
        let summary = io::read_pass_one(reader()?)?;
        let weights = read_weights(
            args.two_pass
                .as_deref()
                .ok_or_else(|| anyhow!("a #pass1 summary needs --two-pass weights:PATH"))?,
        )?;
        let missing = summary
            .entries
            .keys()
            .filter(|k| !weights.weights.contains_key(k))
            .count();
        if missing > 0 {
            bail!("weights file lacks {missing} of the sampled keys; run pass II over the same sample");
        }
        let pairs: Vec<_> = weights
            .pairs()
            .filter(|(k, _)| summary.entries.contains_key(k))
            .collect();
        let in_segment = pairs.iter().filter(|(k, _)| segment.contains(*k)).count();
        match summary.scheme {
            Scheme::Discrete(ell) => {
                let tau = summary.tau.as_f64().min(1.0);
                let need = pairs.iter().map(|&(_, w)| w as u64).max().unwrap_or(1) as usize + 1;
                let coef = DiscreteCoefficients::new(ell, tau, need)?;
                let q = estimate_discrete_2pass(
                    pairs.iter().map(|&(k, w)| (k, w as u64)),
                    &f,
                    &segment,
                    &coef,
                )?;
                print_estimate(q, tau, ell, &args.statistic, &args.segment, in_segment);
            }
            Scheme::Continuous(ell) => {
                let q = estimate_continuous_2pass(
                    pairs.iter().copied(),
                    summary.tau,
                    ell,
                    &f,
                    &segment,
                )?;
                print_estimate(
                    q,
                    summary.tau,
                    ell,
                    &args.statistic,
                    &args.segment,
                    in_segment,
                );
            }
        }
    } else if header.starts_with("#shl-mo") {
        let sample = io::read_multi_sample(reader()?)?;
        let in_segment = sample
            .entries
            .keys()
            .filter(|k| segment.contains(**k))
            .count();
        let q = estimate_multi(&sample, &f, &segment);
        print_estimate(
            q,
            "-",
            sample.caps.to_string(),
            &args.statistic,
            &args.segment,
            in_segment,
        );
    } else {
        bail!("unrecognized sample header: {}", header.trim_end());
    }
    Ok(())
}

const SECTIONS: [(&str, fn(&CellStats) -> f64); 4] = [
    ("relerr 1pass", |c| c.mean_rel_err_1pass),
    ("relerr 2pass", |c| c.mean_rel_err_2pass),
    ("nrmse 1pass", |c| c.nrmse_1pass),
    ("nrmse 2pass", |c| c.nrmse_2pass),
];

fn write_grid_tsv(grid: &ErrorGrid, args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let scheme = match args.scheme {
        SchemeArg::D => "d",
        SchemeArg::C => "c",
    };
    writeln!(
        out,
        "# capstream simulate scheme={scheme} k={} alpha={} m={} rep={} seed={}",
        args.k, args.alpha, args.m, args.rep, args.seed
    )?;
    for (name, get) in SECTIONS {
        writeln!(out, "# section: {name}")?;
        write!(out, "ell\\T")?;
        for t in &grid.caps {
            write!(out, "\t{t}")?;
        }
        writeln!(out)?;
        for (li, ell) in grid.ells.iter().enumerate() {
            write!(out, "{ell}")?;
            for ti in 0..grid.caps.len() {
                write!(out, "\t{:.4}", get(grid.cell(li, ti)))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn write_grid_markdown(grid: &ErrorGrid, args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let scheme = match args.scheme {
        SchemeArg::D => "discrete",
        SchemeArg::C => "continuous",
    };
    writeln!(
        out,
        "## {scheme} k={} alpha={} m={} rep={} seed={}\n",
        args.k, args.alpha, args.m, args.rep, args.seed
    )?;
    for (name, get) in SECTIONS {
        writeln!(out, "### {name}\n")?;
        write!(out, "| ell \\ T |")?;
        for t in &grid.caps {
            write!(out, " {t} |")?;
        }
        writeln!(out)?;
        write!(out, "|---|")?;
        for _ in &grid.caps {
            write!(out, "---|")?;
        }
        writeln!(out)?;
        for (li, ell) in grid.ells.iter().enumerate() {
            write!(out, "| {ell} |")?;
            for ti in 0..grid.caps.len() {
                write!(out, " {:.4} |", get(grid.cell(li, ti)))?;
            }
            writeln!(out)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        scheme: match args.scheme {
            SchemeArg::D => SchemeKind::Discrete,
            SchemeArg::C => SchemeKind::Continuous,
        },
        k: args.k,
        ells: parse_list(&args.ells)?,
        caps: parse_list(&args.caps)?,
        alpha: args.alpha,
        stream_len: args.m,
        repetitions: args.rep,
        seed: args.seed,
    };
    let grid = run_error_grid(&cfg)?;
    let mut out: Box<dyn Write> = Box::new(BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    ));
    match args.format.as_str() {
        "tsv" => write_grid_tsv(&grid, &args, &mut out)?,
        "markdown" => write_grid_markdown(&grid, &args, &mut out)?,
        other => bail!("unknown format {other:?}; use tsv or markdown"),
    }
    out.flush()?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sample(args) => run_sample(args),
        Command::Estimate(args) => run_estimate(args),
        Command::Simulate(args) => run_simulate(args),
        Command::MoSample(args) => run_mo_sample(args),
    }
}
