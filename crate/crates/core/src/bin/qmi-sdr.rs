use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qmi_sdr::config::{Metadata, RunConfig};
use qmi_sdr::experiments::{
    run_bench, run_illustrate, run_sdr, write_bench_rows, write_bench_summary, write_illustrate_csv, write_sdr_json,
    write_sdr_summary,
};
use qmi_sdr::par::{set_num_threads, Execution};
use qmi_sdr::{Error, Result};

#[derive(Parser)]
#[command(name = "qmi-sdr", version, about = "QMI-derivative supervised dimension reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the rotation angle on the two-dimensional toy problem.
    Illustrate(Common),
    /// Estimate projections on a synthetic or CSV dataset.
    Sdr(Common),
    /// Regression benchmark with noise-augmented inputs.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the section's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the section's trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

enum Outcome {
    Ok,
    AllFailed,
}

fn missing(section: &str) -> Error {
    Error::Config(format!("config has no [{section}] section"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Relative data paths are read from the config file's directory.
fn resolve(config: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = config.parent().unwrap_or(Path::new(".")).join(&*path);
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let (name, common) = match &cli.command {
        Command::Illustrate(c) => ("illustrate", c),
        Command::Sdr(c) => ("sdr", c),
        Command::Bench(c) => ("bench", c),
    };
    let cfg = RunConfig::load(&common.config)?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        set_num_threads(t);
    }
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", common.out.display())))?;
    let exec = Execution::Parallel;
    let out = &common.out;
    match &cli.command {
        Command::Illustrate(_) => {
            let mut c = cfg.illustrate.ok_or_else(|| missing(name))?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.trials = common.trials.unwrap_or(c.trials);
            let meta = Metadata::new(name, &c, c.seed);
            let res = run_illustrate(&c, exec)?;
            let mut w = create(out, "illustrate.csv")?;
            write_illustrate_csv(&mut w, &meta, &res)?;
            finish(w)?;
            for f in &res.failures {
                eprintln!("trial {}: {}", f.trial, f.message);
            }
            Ok(if c.trials > 0 && res.failures.len() == c.trials { Outcome::AllFailed } else { Outcome::Ok })
        }
        Command::Sdr(_) => {
            let mut c = cfg.sdr.ok_or_else(|| missing(name))?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.trials = common.trials.unwrap_or(c.trials);
            let meta = Metadata::new(name, &c, c.seed);
            resolve(&common.config, &mut c.csv);
            let records = run_sdr(&c, exec)?;
            let mut w = create(out, "sdr_trials.json")?;
            write_sdr_json(&mut w, &meta, c.method, &records)?;
            finish(w)?;
            let mut w = create(out, "sdr_summary.csv")?;
            write_sdr_summary(&mut w, &meta, &records)?;
            finish(w)?;
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!("trial {}: {}", r.trial, r.error.as_deref().unwrap_or_default());
            }
            let all_failed = !records.is_empty() && records.iter().all(|r| r.error.is_some());
            Ok(if all_failed { Outcome::AllFailed } else { Outcome::Ok })
        }
        Command::Bench(_) => {
            let mut c = cfg.bench.ok_or_else(|| missing(name))?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.trials = common.trials.unwrap_or(c.trials);
            let meta = Metadata::new(name, &c, c.seed);
            resolve(&common.config, &mut c.csv);
            let rows = run_bench(&c, exec)?;
            let mut w = create(out, "bench_rmse.csv")?;
            write_bench_rows(&mut w, &meta, &rows)?;
            finish(w)?;
            let mut w = create(out, "bench_summary.csv")?;
            write_bench_summary(&mut w, &meta, &rows)?;
            finish(w)?;
            let all_failed = !rows.is_empty() && rows.iter().all(|r| r.rmse.is_none());
            Ok(if all_failed { Outcome::AllFailed } else { Outcome::Ok })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::AllFailed) => {
            eprintln!("error: every trial failed");
            ExitCode::from(1)
        }
        Err(e @ (Error::Config(_) | Error::Io(_) | Error::Csv(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
