use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use svkk_core::config::{parse_config, parse_config_str, ConfigDoc, LinkConfig, SweepSpec};
use svkk_core::metrics::write_constellation_csv;
use svkk_core::pipeline::{run_link_traced, LinkRun};
use svkk_core::signal::write_dump;
use svkk_core::studies::{run_study, STUDY_NAMES};
use svkk_core::sweep::{run_sweep, SweepOptions, RESULT_COLUMNS};

#[derive(Parser)]
#[command(
    name = "svkk",
    version,
    about = "Stokes-vector Kramers-Kronig link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set link.cspr_db=13.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed; drawn at random and printed when neither this nor the config sets one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct Jobs {
    /// Worker threads (default: all logical cores).
    #[arg(short, long, env = "SVKK_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one link and report BER and SNR.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write intermediate signals as binary dumps.
        #[arg(long)]
        dump: bool,
    },
    /// Run the sweep described by a config with a [sweep] section.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Run a pre-registered study and its checks.
    Study {
        /// One of the registered study names.
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(STUDY_NAMES))]
        name: String,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Simulate one link and write every intermediate signal to the output directory.
    DumpSignal {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and validate a config, then print the effective document.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ConfigDoc> {
    let doc = match &common.config {
        Some(path) => parse_config(path, &common.set)?,
        None => parse_config_str("", "<defaults>", &common.set)?,
    };
    Ok(doc)
}

fn load_link(common: &Common) -> Result<LinkConfig> {
    match load(common)? {
        ConfigDoc::Link(cfg) => Ok(cfg),
        ConfigDoc::Sweep(_) => bail!("config has a [sweep] section; use `svkk sweep`"),
    }
}

/// Applies `--seed`, or draws one when the config has none.
fn settle_seed(cfg: &mut LinkConfig, given: Option<u64>) -> Result<()> {
    if let Some(s) = given {
        cfg.link.seed = Some(s);
    } else if cfg.link.seed.is_none() {
        let s = rand::random::<u64>() >> 1;
        eprintln!("seed {s}");
        cfg.link.seed = Some(s);
    }
    cfg.validate()?;
    Ok(())
}

fn out_dir(common: &Common) -> Result<Option<&Path>> {
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(common.out.as_deref())
}

fn result_row(run: &LinkRun) -> String {
    let r = &run.result;
    let d = &run.diagnostics;
    format!(
        "{},{},{},{},{},{},{}",
        r.ber,
        r.snr_db,
        r.errors_counted,
        r.bits_counted,
        d.min_phase_violation_frac,
        d.derot_cond,
        d.converged
    )
}

fn print_run(run: &LinkRun, verbose: u8) {
    let r = &run.result;
    let (lo, hi) = r.wilson95();
    println!(
        "ber {:.3e} [{lo:.2e}, {hi:.2e}]  snr {:.2} dB  errors {}/{}",
        r.ber, r.snr_db, r.errors_counted, r.bits_counted
    );
    if verbose > 0 {
        let d = &run.diagnostics;
        println!(
            "per-pol snr {:.2} / {:.2} dB  converged {}  final mse {:.3e}  min-phase violations {:.2e}",
            r.per_pol[0].snr_db, r.per_pol[1].snr_db, d.converged, d.final_mse, d.min_phase_violation_frac
        );
        println!(
            "derotation cond {:.2}  sync offset {} (psr {:.1} dB)  clamped samples {}",
            d.derot_cond, d.sync_offset, d.sync_psr_db, d.clamped_samples
        );
        if d.derot_warning {
            println!("warning: ill-conditioned derotation");
        }
        for (stage, t) in &run.timings {
            println!("  {stage:<12} {:.3} s", t);
        }
    }
}

fn write_dumps(run: &LinkRun, dir: &Path) -> Result<()> {
    for t in &run.trace {
        write_dump(dir.join(format!("{}.svkk", t.name)), &t.signal)?;
    }
    Ok(())
}

fn cmd_run(common: &Common, dump: bool) -> Result<()> {
    let mut cfg = load_link(common)?;
    settle_seed(&mut cfg, common.seed)?;
    let dir = out_dir(common)?;
    if dump && dir.is_none() {
        bail!("--dump needs --out");
    }
    let run = run_link_traced(&cfg, dump)?;
    print_run(&run, common.verbose);
    if let Some(dir) = dir {
        fs::write(dir.join("effective.toml"), cfg.to_toml_string())?;
        fs::write(
            dir.join("result.csv"),
            format!("{}\n{}\n", RESULT_COLUMNS.join(","), result_row(&run)),
        )?;
        let f = io::BufWriter::new(fs::File::create(dir.join("constellation.csv"))?);
        write_constellation_csv(f, [&run.equalizer.x, &run.equalizer.y], cfg.link.format)?;
        if dump {
            write_dumps(&run, dir)?;
        }
    }
    Ok(())
}

fn cmd_sweep(common: &Common, jobs: &Jobs) -> Result<()> {
    let mut spec: SweepSpec = match load(common)? {
        ConfigDoc::Sweep(s) => s,
        ConfigDoc::Link(_) => bail!("config has no [sweep] section"),
    };
    settle_seed(&mut spec.base, common.seed)?;
    if let Some(dir) = out_dir(common)? {
        spec.output = Some(dir.join("sweep.csv"));
    }
    if let Some(csv) = &spec.output {
        if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(csv.with_extension("toml"), spec.to_toml_string())?;
    }
    let opts = SweepOptions {
        jobs: jobs.jobs,
        verbose: common.verbose > 0,
    };
    let table = run_sweep(&spec, &opts)?;
    let mut out = io::stdout().lock();
    for p in table.summarize() {
        writeln!(
            out,
            "{}: ber {:.3e}  snr {:.2} dB  trials {}",
            p.params.join(", "),
            p.ber,
            p.snr_db_mean,
            p.trials
        )?;
    }
    if let Some(csv) = &spec.output {
        writeln!(out, "{} rows in {}", table.rows.len(), csv.display())?;
    }
    Ok(())
}

fn cmd_study(name: &str, common: &Common, jobs: &Jobs) -> Result<bool> {
    let mut base = load_link(common)?;
    settle_seed(&mut base, common.seed)?;
    let opts = SweepOptions {
        jobs: jobs.jobs,
        verbose: common.verbose > 0,
    };
    let report = run_study(name, &base, out_dir(common)?, &opts)?;
    print!("{}", report.summary());
    Ok(report.passed())
}

fn cmd_dump_signal(common: &Common) -> Result<()> {
    let mut cfg = load_link(common)?;
    settle_seed(&mut cfg, common.seed)?;
    let Some(dir) = out_dir(common)? else {
        bail!("dump-signal needs --out");
    };
    let run = run_link_traced(&cfg, true)?;
    fs::write(dir.join("effective.toml"), cfg.to_toml_string())?;
    write_dumps(&run, dir)?;
    for t in &run.trace {
        println!(
            "{}.svkk  {} samples at {} Hz",
            t.name,
            t.signal.len(),
            t.signal.sample_rate()
        );
    }
    Ok(())
}

fn cmd_validate(common: &Common) -> Result<()> {
    let mut doc = load(common)?;
    if let Some(s) = common.seed {
        match &mut doc {
            ConfigDoc::Link(cfg) => settle_seed(cfg, Some(s))?,
            ConfigDoc::Sweep(spec) => settle_seed(&mut spec.base, Some(s))?,
        }
    }
    let text = match &doc {
        ConfigDoc::Link(cfg) => cfg.to_toml_string(),
        ConfigDoc::Sweep(spec) => spec.to_toml_string(),
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { common, dump } => cmd_run(common, *dump).map(|_| true),
        Command::Sweep { common, jobs } => cmd_sweep(common, jobs).map(|_| true),
        Command::Study { name, common, jobs } => cmd_study(name, common, jobs),
        Command::DumpSignal { common } => cmd_dump_signal(common).map(|_| true),
        Command::ValidateConfig { common } => cmd_validate(common).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
