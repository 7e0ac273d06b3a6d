use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rbls::datagen::{gen_corrupted, CorruptionParams};
use rbls::diagnostics::DEFAULT_HISTOGRAM_BINS;
use rbls::harness::{aggregate, fig1_data, run_and_write, write_fig1, ExperimentConfig, Scenario};
use rbls::{Error, Method};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "rbls", version, about = "Randomized robust least squares experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit wall times and timestamps so repeated runs write identical files.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; RBLS_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Leverage and influence histograms for clean vs corrupted rows.
    Fig1 {
        #[arg(long, default_value_t = 0.3)]
        pi: f64,
        #[arg(long, default_value_t = 0.4)]
        sigma_w: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_x: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_eps: f64,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        p: usize,
        #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
        bins: usize,
    },
    /// Sweep on flight records (origin-destination one-hot plus distance).
    Airline {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n_train: usize,
        #[arg(long, default_value_t = 1_000)]
        n_test: usize,
        #[arg(long)]
        carrier: Option<String>,
        /// Drop the distance column.
        #[arg(long)]
        no_distance: bool,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', default_value = "OLS,SRHT_LS,ULURU,AIWS_LS,ARWS_LS")]
        methods: Vec<Method>,
        /// Comma-separated subsample sizes; defaults to {2,4,8,16}·p.
        #[arg(long, value_delimiter = ',')]
        n_subs: Option<Vec<usize>>,
        #[arg(long, default_value_t = 5)]
        replications: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let env_threads = std::env::var("RBLS_THREADS").ok();
    match thread_count(env_threads.as_deref(), cli.common.threads)
        .and_then(build_pool)
        .and_then(|()| run(cli))
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}

/// The environment value wins over the flag.
fn thread_count(env: Option<&str>, flag: Option<usize>) -> Result<Option<usize>, Error> {
    match env {
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("RBLS_THREADS = {v:?} is not a count"))),
        None => Ok(flag),
    }
}

fn build_pool(threads: Option<usize>) -> Result<(), Error> {
    if let Some(k) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn apply_common(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.deterministic |= common.deterministic;
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = &cli.common;
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            apply_common(&mut cfg, common);
            sweep(&cfg)
        }
        Command::Fig1 {
            pi,
            sigma_w,
            sigma_x,
            sigma_eps,
            n,
            p,
            bins,
        } => {
            let params = CorruptionParams {
                n,
                p,
                pi,
                sigma_x,
                sigma_w,
                sigma_eps,
            };
            let problem = gen_corrupted::<f64>(&params, common.seed.unwrap_or(0))?;
            let data = fig1_data(&problem, bins)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            write_fig1(&data, &out)?;
            println!("leverage l1 distance:  {:.4}", data.leverage_distance);
            println!("influence l1 distance: {:.4}", data.influence_distance);
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Airline {
            train,
            n_train,
            n_test,
            carrier,
            no_distance,
            methods,
            n_subs,
            replications,
        } => {
            let mut cfg = ExperimentConfig {
                scenario: Scenario::Airline,
                n: n_train,
                n_test,
                methods,
                n_subs_grid: n_subs,
                replications,
                train_csv: Some(train),
                carrier,
                include_distance: !no_distance,
                ..ExperimentConfig::default()
            };
            apply_common(&mut cfg, common);
            sweep(&cfg)
        }
    }
}

fn sweep(cfg: &ExperimentConfig) -> Result<(), Error> {
    let results = run_and_write(cfg)?;
    println!("{:<8} {:>7} {:>5} {:>6} {:>12} {:>12}", "method", "n_subs", "ok", "failed", "est_error", "rmse");
    for row in aggregate(&results) {
        let mean = |s: Option<rbls::harness::Summary>| s.map_or("-".to_string(), |s| format!("{:.5}", s.mean));
        println!(
            "{:<8} {:>7} {:>5} {:>6} {:>12} {:>12}",
            row.method.name(),
            row.n_subs,
            row.count,
            row.errors,
            mean(row.est_error),
            mean(row.rmse)
        );
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}
