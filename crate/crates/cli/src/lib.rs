//! The `marketmode` command-line front end. [`run`] parses arguments,
//! resolves the configuration and returns the process exit code.

use std::ffi::OsString;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use args::{Cli, Command};
use config::{ConfigFile, Resolver, RunConfig};
pub use error::CliError;
use output::RunDir;

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 success, 1 usage or output failure, 2 bad data, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve(cli: &Cli, file: &ConfigFile) -> Result<(&'static str, RunConfig), CliError> {
    let mut r = Resolver::new(file, cli.out.clone())?;
    let name = match &cli.command {
        Command::Synth { synth, seed } => {
            r.synth(synth)?;
            r.seed(seed.seed)?;
            "synth"
        }
        Command::Collectivity {
            input,
            window,
            dump_windows,
        } => {
            r.input(input)?;
            r.tau(window.tau)?;
            r.dump_windows(*dump_windows)?;
            "collectivity"
        }
        Command::Modularity {
            input,
            window,
            net,
            seed,
        } => {
            r.input(input)?;
            r.tau(window.tau)?;
            r.net(net)?;
            r.seed(seed.seed)?;
            "modularity"
        }
        Command::Sample {
            input,
            window,
            grid,
            seed,
        } => {
            r.input(input)?;
            r.tau(window.tau)?;
            r.grid(grid)?;
            r.seed(seed.seed)?;
            "sample"
        }
        Command::Greedy { greedy } => {
            r.greedy(greedy)?;
            "greedy"
        }
        Command::Cluster { from, cluster } => {
            r.cluster(from.clone(), cluster)?;
            "cluster"
        }
        Command::Pipeline {
            input,
            synth,
            window,
            net,
            grid,
            cluster,
            seed,
            dump_windows,
        } => {
            r.input(input)?;
            r.synth(synth)?;
            r.tau(window.tau)?;
            r.net(net)?;
            r.grid(grid)?;
            r.cluster(None, cluster)?;
            r.seed(seed.seed)?;
            r.dump_windows(*dump_windows)?;
            "pipeline"
        }
    };
    Ok((name, r.cfg))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let (name, cfg) = resolve(&cli, &file)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(name, &cfg))
}

fn dispatch(name: &str, cfg: &RunConfig) -> Result<(), CliError> {
    // Read inputs before creating the run directory so that a bad invocation
    // leaves nothing behind.
    let mut run;
    match name {
        "synth" => {
            run = RunDir::create(&cfg.out)?;
            commands::synth(&mut run, cfg)?;
        }
        "collectivity" | "modularity" | "sample" => {
            let (panel, removals) = commands::load_panel(cfg)?;
            commands::check_tau(&panel, cfg.tau)?;
            run = RunDir::create(&cfg.out)?;
            run.write_json("removals.json", &removals)?;
            match name {
                "collectivity" => commands::collectivity(&mut run, cfg, &panel)?,
                "modularity" => commands::modularity(&mut run, cfg, &panel)?,
                _ => {
                    commands::sample(&mut run, cfg, &panel)?;
                }
            }
        }
        "greedy" => {
            run = RunDir::create(&cfg.out)?;
            commands::greedy(&mut run, cfg)?;
        }
        "cluster" => {
            let from = cfg
                .cluster_from
                .as_ref()
                .ok_or_else(|| CliError::Usage("--from is required".into()))?;
            let curves = commands::read_curves(from, cfg)?;
            run = RunDir::create(&cfg.out)?;
            commands::cluster(&mut run, cfg, &curves)?;
        }
        _ => {
            run = RunDir::create(&cfg.out)?;
            commands::pipeline(&mut run, cfg)?;
        }
    }
    run.finish(name, cfg)?;
    Ok(())
}
