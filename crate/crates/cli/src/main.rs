use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use convproxy::bench::{
    append_records, bench_falseshare, bench_firstprivate, bench_hetero, error_growth_records,
    extrapolation_report, read_records, run_experiment, sweep_chunk, table_report, BenchError,
    BenchRecord, ExperimentConfig, Template,
};
use convproxy::layout::{Orientation, PadChoice};
use convproxy::physics::KernelVariant;
use convproxy::scheduler::{ExecMode, Strategy};
use convproxy::validate::{error_growth, ValidateError};

const EXIT_CONFIG: u8 = 2;
const EXIT_KERNEL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "convproxy", version, about = "Convection-column proxy benchmarks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long = "omp-chunk", global = true)]
    omp_chunk: Option<usize>,
    /// static | static-cyclic | dynamic | task
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// level-outer | col-outer
    #[arg(long, global = true)]
    layout: Option<Orientation>,
    /// auto | N
    #[arg(long, global = true)]
    pad: Option<PadChoice>,
    /// measured | simulated
    #[arg(long, global = true)]
    mode: Option<ExecMode>,
    /// Append records to this CSV file
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment
    Run,
    /// Sweep the dynamic dispatch chunk size
    SweepChunk {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        sizes: Vec<usize>,
    },
    /// Compare data-environment copy policies
    BenchFirstprivate,
    /// Output-field write loop, level-outer vs padded col-outer
    BenchFalseshare {
        #[arg(long, default_value_t = 20)]
        passes: usize,
    },
    /// Host-only, device-only and partitioned runs
    BenchHetero,
    /// RMS error growth of a kernel variant against LSB perturbation
    ErrorGrowth {
        #[arg(long, default_value = "strength-reduced")]
        variant: KernelVariant,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Write the timestep,rms_mod,rms_pert series here
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Format records from a CSV file
    Report {
        #[arg(long)]
        input: PathBuf,
        /// chunk-sweep | firstprivate | hetero | error-growth
        #[arg(long)]
        template: Template,
        /// Write the table CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall-clock days saved over a long run
    Extrapolate {
        #[arg(long = "t-base")]
        t_base: f64,
        #[arg(long = "t-opt")]
        t_opt: f64,
        /// Simulated days the timings cover
        #[arg(long)]
        days: f64,
        #[arg(long, default_value_t = 1000.0)]
        years: f64,
    },
}

enum Failure {
    Config(anyhow::Error),
    Kernel(anyhow::Error),
    Acceptance(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Model(_) | BenchError::Hetero(_) | BenchError::Layout(_) => {
                Failure::Kernel(e.into())
            }
            BenchError::Validate(ValidateError::Io(_) | ValidateError::Csv(_)) => {
                Failure::Config(e.into())
            }
            BenchError::Validate(_) => Failure::Kernel(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

impl From<ValidateError> for Failure {
    fn from(e: ValidateError) -> Self {
        BenchError::from(e).into()
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = common.threads {
        cfg.schedule.n_threads = t;
    }
    if let Some(c) = common.omp_chunk {
        cfg.schedule.omp_chunk_size = c;
    }
    if let Some(s) = common.strategy {
        cfg.schedule.strategy = s;
    }
    if let Some(l) = common.layout {
        cfg.layout.orientation = l;
    }
    if let Some(p) = common.pad {
        cfg.layout.pad = p;
    }
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    if let Some(s) = common.seed {
        cfg.grid.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save(csv: Option<&Path>, records: &[BenchRecord]) -> Result<(), Failure> {
    if let Some(path) = csv {
        append_records(path, records)?;
    }
    Ok(())
}

fn print_records(records: &[BenchRecord]) {
    println!("| experiment | rep | wall_s | overhead_pct | imbalance | copy_s | transfer_s |");
    println!("|---|---|---|---|---|---|---|");
    for r in records {
        println!(
            "| {} | {} | {:.6} | {:.2} | {:.3} | {:.6} | {:.6} |",
            r.experiment, r.rep, r.wall_s, r.overhead_pct, r.imbalance, r.copy_s, r.transfer_s
        );
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let csv = cli.common.csv.as_deref();
    match cli.command {
        Command::Run => {
            let cfg = load_config(&cli.common)?;
            let out = run_experiment(&cfg)?;
            print_records(&out.records);
            println!(
                "columns per step: {:?}",
                out.dispatched_per_step.first().copied().unwrap_or(0)
            );
            save(csv, &out.records)
        }
        Command::SweepChunk { sizes } => {
            let cfg = load_config(&cli.common)?;
            let records = sweep_chunk(&cfg, &sizes)?;
            print!("{}", table_report(&records, Template::ChunkSweep)?.markdown);
            save(csv, &records)
        }
        Command::BenchFirstprivate => {
            let cfg = load_config(&cli.common)?;
            let records = bench_firstprivate(&cfg)?;
            print!("{}", table_report(&records, Template::Firstprivate)?.markdown);
            save(csv, &records)
        }
        Command::BenchFalseshare { passes } => {
            let cfg = load_config(&cli.common)?;
            let records = bench_falseshare(&cfg, passes)?;
            println!("| layout | pad | rep | seconds | elements_per_s | shared_lines |");
            println!("|---|---|---|---|---|---|");
            for r in &records {
                println!(
                    "| {} | {} | {} | {:.6} | {:.3e} | {} |",
                    r.get("layout").unwrap_or("-"),
                    r.get("pad").unwrap_or("-"),
                    r.rep,
                    r.wall_s,
                    r.get_f64("elements_per_s").unwrap_or(f64::NAN),
                    r.get("collisions").unwrap_or("-"),
                );
            }
            save(csv, &records)
        }
        Command::BenchHetero => {
            let cfg = load_config(&cli.common)?;
            let (records, summary) = bench_hetero(&cfg)?;
            print!("{}", table_report(&records, Template::Hetero)?.markdown);
            println!(
                "speedup over device-only: {:.3}, over host-only: {:.3}",
                summary.speedup_over_device(),
                summary.speedup_over_host()
            );
            save(csv, &records)
        }
        Command::ErrorGrowth {
            variant,
            steps,
            series,
        } => {
            let cfg = load_config(&cli.common)?;
            let baseline = cfg.model_setup();
            let modified = convproxy::model::ModelSetup {
                variant,
                ..baseline.clone()
            };
            let s = error_growth::<f64>(&baseline, &modified, steps)?;
            let records = error_growth_records(&cfg.config_hash(), &s);
            print!("{}", table_report(&records, Template::ErrorGrowth)?.markdown);
            if let Some(path) = series {
                s.save_csv(&path)?;
            }
            save(csv, &records)?;
            let check = s.envelope();
            if !check.passed {
                return Err(Failure::Acceptance(format!(
                    "rms_mod exceeds rms_pert from timestep {} (worst ratio {:.3e})",
                    check.first_violation.unwrap_or(0),
                    check.worst_ratio
                )));
            }
            Ok(())
        }
        Command::Report {
            input,
            template,
            out,
        } => {
            let records = read_records(&input)
                .with_context(|| format!("reading {}", input.display()))
                .map_err(Failure::Config)?;
            let report = table_report(&records, template)?;
            print!("{}", report.markdown);
            if let Some(path) = out {
                std::fs::write(&path, report.csv)
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(Failure::Config)?;
            }
            Ok(())
        }
        Command::Extrapolate {
            t_base,
            t_opt,
            days,
            years,
        } => {
            let report = extrapolation_report(&[("measured".into(), t_base, t_opt)], days, years)?;
            print!("{}", report.markdown);
            Ok(())
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Kernel(_) => EXIT_KERNEL,
            Failure::Acceptance(_) => EXIT_ACCEPTANCE,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Config(e) | Failure::Kernel(e) => eprintln!("error: {e:#}"),
                Failure::Acceptance(msg) => eprintln!("acceptance check failed: {msg}"),
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
