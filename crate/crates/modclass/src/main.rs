//! Thin command-line front end over the `modclass` library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modclass::harness::{read_iq, run_sweep_flushing, ExperimentConfig};
use modclass::oracle::run_fixtures;
use modclass::{classify, run_chain, selftest};

#[derive(Parser)]
#[command(
    name = "modclass",
    about = "Blind modulation classification via Gibbs sampling on a latent Dirichlet mixture",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed (overrides the config key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = one per core (overrides the config key).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo PCC sweep over the configured SNR grid.
    Sweep {
        /// Experiment config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set gamma=0.1 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Classify one received block from a columnar `index re im` file.
    Classify {
        /// IQ input file.
        #[arg(long)]
        input: PathBuf,
        /// Config supplying the candidate set, channel memory and priors.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare the Gibbs classifier against the exact enumeration oracle
    /// on small random fixtures.
    Oracle {
        /// Number of fixtures.
        #[arg(long, default_value_t = 10)]
        instances: u64,
        /// Retained samples per fixture chain.
        #[arg(long, default_value_t = 5000)]
        m: usize,
        /// Burn-in sweeps per fixture chain.
        #[arg(long, default_value_t = 1000)]
        m0: usize,
    },
    /// Run the library invariant suite.
    Selftest,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, String> {
    raw.iter()
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{item}`"))
        })
        .collect()
}

fn load_config(
    path: &Option<PathBuf>,
    overrides: &[String],
    cli: &Cli,
) -> Result<ExperimentConfig, String> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut merged = parse_overrides(overrides)?;
    if let Some(seed) = cli.seed {
        merged.push(("seed".into(), seed.to_string()));
    }
    if let Some(workers) = cli.workers {
        merged.push(("workers".into(), workers.to_string()));
    }
    ExperimentConfig::parse_with_overrides(&text, &merged).map_err(|e| e.to_string())
}

fn cmd_sweep(cli: &Cli, config: &Option<PathBuf>, overrides: &[String]) -> Result<(), String> {
    let cfg = load_config(config, overrides, cli)?;
    eprintln!(
        "sweep: {} SNR points x {} trials, mode {}, gamma {}, seed {}",
        cfg.snr_db.len(),
        cfg.trials,
        cfg.mode,
        cfg.effective_gamma(),
        cfg.seed
    );
    let out = cli.out.clone();
    let table = run_sweep_flushing(&cfg, |partial| {
        let row = partial.rows.last().expect("at least one row");
        let (lo, hi) = row.wilson();
        eprintln!(
            "  snr {:>5} dB: pcc {:.3} [{:.3}, {:.3}]  ({:.3} s/trial)",
            row.snr_db,
            row.pcc(),
            lo,
            hi,
            row.secs_per_trial
        );
        if let Some(path) = &out {
            partial.write_csv(path)?;
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    match &cli.out {
        Some(path) => eprintln!("wrote {}", path.display()),
        None => print!("{}", table.to_csv()),
    }
    Ok(())
}

fn cmd_classify(
    cli: &Cli,
    input: &PathBuf,
    config: &Option<PathBuf>,
    overrides: &[String],
) -> Result<(), String> {
    let cfg = load_config(config, overrides, cli)?;
    let block = read_iq(input, cfg.l()).map_err(|e| e.to_string())?;
    if block.n() < cfg.l() {
        return Err(format!(
            "block has {} samples but the channel memory is {}",
            block.n(),
            cfg.l()
        ));
    }
    let set = cfg.build_set().map_err(|e| e.to_string())?;
    let priors = cfg.priors();
    let chain = cfg.chain_config();
    let mut rng = modclass::RngStream::new(cfg.seed, 0).rng();
    let result = run_chain(&block, &set, &priors, &chain, &mut rng).map_err(|e| e.to_string())?;
    let decision = classify(&result, &set).map_err(|e| e.to_string())?;
    for (member, score) in set.members().iter().zip(&decision.scores) {
        println!("{:>6}  {:.6}", member.kind().label(), score);
    }
    println!(
        "estimate: {}",
        set.members()[decision.estimate].kind().label()
    );
    Ok(())
}

fn cmd_oracle(cli: &Cli, instances: u64, m: usize, m0: usize) -> Result<(), String> {
    let seed = cli.seed.unwrap_or(1);
    let outcomes = run_fixtures(seed, instances, m, m0).map_err(|e| e.to_string())?;
    let mut passed = 0;
    for o in &outcomes {
        let ok = o.max_abs_diff <= 0.05;
        if ok {
            passed += 1;
        }
        println!(
            "fixture {:>2}: max |chain - oracle| = {:.4}  {}",
            o.index,
            o.max_abs_diff,
            if ok { "ok" } else { "OFF" }
        );
    }
    println!("{passed}/{instances} fixtures within 0.05");
    if passed * 10 >= instances as usize * 9 {
        Ok(())
    } else {
        Err("oracle agreement below 9/10".into())
    }
}

fn cmd_selftest() -> Result<(), String> {
    let failed = selftest::run_all(|name, outcome| match outcome {
        Ok(()) => println!("PASS {name}"),
        Err(msg) => println!("FAIL {name}: {msg}"),
    });
    if failed == 0 {
        Ok(())
    } else {
        Err(format!("{failed} checks failed"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep { config, overrides } => cmd_sweep(&cli, config, overrides),
        Command::Classify {
            input,
            config,
            overrides,
        } => cmd_classify(&cli, input, config, overrides),
        Command::Oracle { instances, m, m0 } => cmd_oracle(&cli, *instances, *m, *m0),
        Command::Selftest => cmd_selftest(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
