use std::path::PathBuf;

use anyhow::Result;
use clap::{Arg, ArgAction, ArgMatches, Command};
use modem::config::{parse_config, KEYS};
use modem::RunConfig;

use modem_cli::commands;

/// Every config key doubles as a `--key value` flag.
fn with_config_args(mut cmd: Command) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat key = value config file"),
    );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(key)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .help_heading("Config overrides"),
        );
    }
    cmd
}

fn config_from(matches: &ArgMatches) -> Result<RunConfig> {
    let path = matches.get_one::<String>("config").map(PathBuf::from);
    let mut overrides = Vec::new();
    for key in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            overrides.push((key.to_string(), v.clone()));
        }
    }
    Ok(parse_config(path.as_deref(), &overrides)?)
}

fn main() -> Result<()> {
    let cmd = Command::new("modem")
        .about("Demonstration-accelerated model-based RL experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_args(Command::new("gen-demos").about(
            "Generate oracle demonstrations and write the demo file",
        )))
        .subcommand(with_config_args(Command::new("train").about(
            "Run the three-phase training pipeline; writes metrics CSV and checkpoint",
        )))
        .subcommand(
            with_config_args(Command::new("eval").about(
                "Evaluate a checkpoint with noise-free planning over the configured seed list",
            ))
            .arg(
                Arg::new("checkpoint")
                    .long("checkpoint")
                    .value_name("FILE")
                    .required(true)
                    .help("parameter checkpoint to evaluate"),
            )
            .arg(
                Arg::new("episodes")
                    .long("episodes")
                    .value_name("N")
                    .help("episodes per seed (default: eval_episodes)"),
            ),
        )
        .subcommand(
            with_config_args(Command::new("ablate").about(
                "Run an ablation matrix; one directory per cell plus a summary CSV",
            ))
            .arg(
                Arg::new("axes")
                    .long("axes")
                    .value_name("LIST")
                    .default_value("phases")
                    .help("comma-separated axes: phases, demos, seeding, augment, kappa"),
            ),
        );

    let matches = cmd.get_matches();
    match matches.subcommand() {
        Some(("gen-demos", m)) => commands::cmd_gen_demos(&config_from(m)?),
        Some(("train", m)) => commands::cmd_train(&config_from(m)?),
        Some(("eval", m)) => {
            let cfg = config_from(m)?;
            let checkpoint = PathBuf::from(m.get_one::<String>("checkpoint").unwrap());
            let episodes = match m.get_one::<String>("episodes") {
                Some(v) => v.parse::<usize>()?,
                None => cfg.eval_episodes,
            };
            commands::cmd_eval(&cfg, &checkpoint, episodes)
        }
        Some(("ablate", m)) => {
            let cfg = config_from(m)?;
            let axes = m.get_one::<String>("axes").unwrap().clone();
            commands::cmd_ablate(&cfg, &axes)
        }
        _ => unreachable!(),
    }
}
