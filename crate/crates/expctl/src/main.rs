use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use expctl::config::parse_assignment;
use expctl::experiments::{find, REGISTRY};
use expctl::record::Manifest;
use expctl::{check_table, default_out, run, split_values, sweep, verify, Result};

#[derive(Parser)]
#[command(name = "prefdens", version, about = "Preference learning as density estimation: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment name; see `prefdens list`.
    name: String,
    /// Flat TOML file of parameter values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: runs/<name>-seed<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(RunArgs),
    /// Run one experiment per value of a parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "runs/verify")]
        out: PathBuf,
        /// Restrict to these experiments.
        #[arg(long = "only", value_name = "NAME")]
        only: Vec<String>,
    },
    /// List experiments and their parameters.
    List,
}

fn manifest(args: &RunArgs) -> Result<Manifest> {
    find(&args.name)?;
    let mut m =
        Manifest::new(&args.name, args.seed, args.out.clone().unwrap_or_else(|| default_out(&args.name, args.seed)));
    m.config_file = args.config.clone();
    m.overrides = args.sets.iter().map(|s| parse_assignment(s)).collect::<Result<_>>()?;
    Ok(m)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let rec = run(&manifest(&args)?)?;
            print!("{}", check_table(std::slice::from_ref(&rec.summary)));
            println!("{} in {:.1} s -> {}", rec.summary.experiment, rec.wall_time_s, rec.manifest.out_dir.display());
            Ok(rec.summary.passed)
        }
        Command::Sweep { run: args, param, values } => {
            let m = manifest(&args)?;
            let records = sweep(&m, &param, &split_values(&values))?;
            for r in &records {
                println!(
                    "{} seed {}: {}",
                    r.manifest.out_dir.display(),
                    r.summary.seed,
                    if r.summary.passed { "pass" } else { "fail" }
                );
                print!("{}", check_table(std::slice::from_ref(&r.summary)));
            }
            Ok(records.iter().all(|r| r.summary.passed))
        }
        Command::Verify { seed, out, only } => {
            let (report, timings) = verify(seed, &out, &only)?;
            print!("{}", check_table(&report.summaries));
            for (name, t) in &timings {
                println!("{name}: {t:.1} s");
            }
            println!("{}", if report.passed { "all checks passed" } else { "some checks failed" });
            Ok(report.passed)
        }
        Command::List => {
            for e in &REGISTRY {
                println!("{}  [{}]", e.name, e.figures);
                for k in (e.schema)().keys {
                    println!("    {} = {:?}  {}", k.key, k.default, k.doc);
                }
            }
            Ok(true)
        }
    }
}
