use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use stablelab_cli::config::{canonical_key, KEYS};
use stablelab_cli::{cmd_bounds, cmd_gof, cmd_simulate, cmd_tower, RunConfig, RunError, EXIT_CONSTRUCTION};

fn verb(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name).about(about).arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("flat key = value file; flags override it"),
    );
    for &key in KEYS {
        let mut arg = Arg::new(key).long(key).value_name("VALUE").action(ArgAction::Set);
        if key == "n_grid" {
            arg = arg.alias("n");
        }
        if key == "master_seed" {
            arg = arg.alias("seed");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn cli() -> Command {
    Command::new("stablelab")
        .about("Stable limit laws of coboundary sums: simulation, bound checks, tower embeddings")
        .subcommand_required(true)
        .subcommand(verb("simulate", "Monte Carlo of the scaled sum along the n grid"))
        .subcommand(verb("bounds", "Tail, variance, large-part and gap bound suite"))
        .subcommand(verb("tower", "Tower embedding validation against the array oracle"))
        .subcommand(verb("gof", "Goodness of fit of a CSV column against a stable law"))
}

fn resolve(m: &ArgMatches) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let path = PathBuf::from(path);
        let text = std::fs::read_to_string(&path).map_err(|source| RunError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        cfg.apply_text(&text)?;
    }
    for &key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(&format!("flag --{}", canonical_key(key)), key, v)?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONSTRUCTION as u8 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = resolve(sub).and_then(|cfg| match name {
        "simulate" => cmd_simulate(&cfg),
        "bounds" => cmd_bounds(&cfg),
        "tower" => cmd_tower(&cfg),
        "gof" => cmd_gof(&cfg),
        _ => unreachable!("clap rejects unknown verbs"),
    });
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("report: {}", outcome.report_path.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
