//! Batch driver for the MXL simulator: runs scenario files, sweeps seeds,
//! compares algorithms under shared noise, and renders SVG reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use mxl::harness::{
    emit_plots, export_summary, export_trace, parse_trace_csv, run_compare, run_scenario,
    summarize, Algorithm, PlotSeries, Scenario, Trace,
};

#[derive(Parser)]
#[command(
    name = "mxl",
    about = "Matrix exponential learning simulator for the Gaussian vector multiple-access channel",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario file and write its trace, summary, and plots.
    Run(RunArgs),
    /// Run a scenario over a range of seeds and aggregate the summaries.
    Sweep(SweepArgs),
    /// Run several algorithms on one scenario with shared noise realizations.
    Compare(CompareArgs),
    /// Render SVG plots from previously exported trace CSV files.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario description (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Label used in file names and plot legends.
    #[arg(long, default_value = "run")]
    label: String,
    /// Skip plot rendering.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of seeds; run i uses seed base_seed + i.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed of the sweep (defaults to the scenario's own seed).
    #[arg(long)]
    seed_base: Option<u64>,
    /// Also keep every per-seed trace CSV.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated algorithms (mxl, mxl-a, mxl-eig, iwf, swf).
    #[arg(long, value_delimiter = ',', default_value = "mxl,iwf,swf")]
    algorithms: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace CSV files exported by `run`, `sweep --traces`, or `compare`.
    #[arg(long = "trace", required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Compare(args) => compare(args),
        Command::Report(args) => report(args),
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn print_summary_line(label: &str, trace: &Trace) {
    let s = summarize(trace);
    let to99 = s
        .iterations_to_99
        .map_or("-".to_string(), |n| n.to_string());
    println!(
        "{label}: iterations={} final_rate={:.6} nats (R_max={:.6}, R_0={:.6}) \
         final_gap={:.3e} iters_to_99%={to99}",
        s.iterations, s.final_rate, s.r_max, s.r_uniform, s.final_fw_gap
    );
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let trace = run_scenario(&scenario)?;
    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join(format!("{}.csv", args.label));
    export_trace(&trace, &csv_path)?;
    export_summary(&trace, args.out.join(format!("{}.json", args.label)))?;
    if !args.no_plots {
        emit_plots(&[(args.label.clone(), &trace)], &args.out)?;
    }
    print_summary_line(&args.label, &trace);
    println!("trace: {}", csv_path.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = load_scenario(&args.scenario)?;
    let seed0 = args.seed_base.unwrap_or(base.seed);
    fs::create_dir_all(&args.out)?;

    let traces: Vec<(u64, Trace)> = (0..args.seeds)
        .into_par_iter()
        .map(|i| {
            let mut s = base.clone();
            s.seed = seed0 + i;
            run_scenario(&s).map(|t| (s.seed, t))
        })
        .collect::<mxl::Result<_>>()?;

    let mut agg = String::from(
        "seed,final_rate,final_fw_gap,r_max,r_uniform,iterations_to_99,time_avg_rate\n",
    );
    for (seed, trace) in &traces {
        let s = summarize(trace);
        agg.push_str(&format!(
            "{seed},{},{},{},{},{},{}\n",
            s.final_rate,
            s.final_fw_gap,
            s.r_max,
            s.r_uniform,
            s.iterations_to_99.map_or(-1i64, |n| n as i64),
            s.time_avg_rate
        ));
        if args.traces {
            export_trace(trace, args.out.join(format!("seed_{seed}.csv")))?;
        }
    }
    let agg_path = args.out.join("sweep.csv");
    fs::write(&agg_path, agg)?;

    let final_rates: Vec<f64> = traces
        .iter()
        .filter_map(|(_, t)| t.records.last().map(|r| r.rate))
        .collect();
    let mean = final_rates.iter().sum::<f64>() / final_rates.len().max(1) as f64;
    println!(
        "sweep: {} seeds, mean final rate {:.6} nats; aggregate: {}",
        traces.len(),
        mean,
        agg_path.display()
    );
    Ok(())
}

fn parse_algorithm(name: &str) -> Result<Algorithm> {
    Ok(match name.trim() {
        "mxl" => Algorithm::Mxl,
        "mxl-a" => Algorithm::MxlA,
        "mxl-eig" => Algorithm::MxlEig,
        "iwf" => Algorithm::Iwf,
        "swf" => Algorithm::Swf,
        other => bail!("unknown algorithm `{other}` (expected mxl, mxl-a, mxl-eig, iwf, swf)"),
    })
}

fn compare(args: CompareArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let algorithms = args
        .algorithms
        .iter()
        .map(|a| parse_algorithm(a))
        .collect::<Result<Vec<_>>>()?;
    let traces = run_compare(&scenario, &algorithms)?;
    fs::create_dir_all(&args.out)?;

    let mut labelled = Vec::new();
    for (alg, trace) in algorithms.iter().zip(&traces) {
        export_trace(trace, args.out.join(format!("{}.csv", alg.name())))?;
        export_summary(trace, args.out.join(format!("{}.json", alg.name())))?;
        print_summary_line(alg.name(), trace);
        labelled.push((alg.name().to_string(), trace));
    }
    let files = emit_plots(&labelled, &args.out)?;
    for f in files {
        println!("plot: {f}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let nats_to_bits = 1.0 / std::f64::consts::LN_2;
    let mut gain_series = Vec::new();
    let mut rate_series = Vec::new();
    for path in &args.traces {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let records = parse_trace_csv(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        gain_series.push(PlotSeries {
            label: label.clone(),
            points: records
                .iter()
                .map(|r| (r.n as f64, r.throughput_gain))
                .collect(),
        });
        rate_series.push(PlotSeries {
            label,
            points: records
                .iter()
                .map(|r| (r.n as f64, r.rate * nats_to_bits))
                .collect(),
        });
    }
    let gain_path = args.out.join("report_throughput_gain.svg");
    fs::write(
        &gain_path,
        mxl::harness::render_svg(
            &gain_series,
            "Normalized throughput over time",
            "iteration",
            "r_n = R_n / R_0",
        ),
    )?;
    let rate_path = args.out.join("report_rates.svg");
    fs::write(
        &rate_path,
        mxl::harness::render_svg(
            &rate_series,
            "Achieved sum rate over time",
            "iteration",
            "sum rate (bits)",
        ),
    )?;
    println!("plot: {}", gain_path.display());
    println!("plot: {}", rate_path.display());
    Ok(())
}
