use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crossbody_cli::commands::{self, Ctx};
use crossbody_cli::config::{
    AgreeOpts, CommonOpts, Config, EvalOpts, FoldOpts, FsmOpts, GenOpts, NoiseOpts, ScoreOpts, ScoringOpts,
};
use crossbody_cli::{exit_code, Outputs, Result};

/// Evaluation and scoring toolkit for cross-body touch sessions.
///
/// Each command writes into <out-dir>/<run-id>/<command>/. Settings come from
/// the optional --config TOML file, whose sections ([gen], [noise], [fsm],
/// [scoring], [eval], [score], [folds], [agree]) use the flag names with
/// underscores; flags win over the file. Exit status: 0 ok, 2 bad input,
/// 1 internal error.
#[derive(Debug, Parser)]
#[command(name = "crossbody", version)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

// Parsed once per process; boxing the larger variants buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus: manifests, labels, keypoints, human scores
    Gen {
        #[command(flatten)]
        gen: GenOpts,
        #[command(flatten)]
        noise: NoiseOpts,
        #[command(flatten)]
        fsm: FsmOpts,
        #[command(flatten)]
        scoring: ScoringOpts,
    },
    /// Split subjects into disjoint test folds
    Folds {
        #[command(flatten)]
        opts: FoldOpts,
    },
    /// Label touches in keypoint streams with the gesture state machine
    Fsm {
        /// Directory of *.keypoints.csv files [default: <run>/gen]
        #[arg(long)]
        keypoints_dir: Option<PathBuf>,
        #[command(flatten)]
        opts: FsmOpts,
    },
    /// Segmentation metrics of predictions against ground truth
    Eval {
        #[command(flatten)]
        opts: EvalOpts,
    },
    /// Accuracy and rhythm scores from predicted touches
    Score {
        #[command(flatten)]
        opts: ScoreOpts,
        #[command(flatten)]
        scoring: ScoringOpts,
    },
    /// Bland-Altman agreement between machine and human scores
    Agree {
        #[command(flatten)]
        opts: AgreeOpts,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Folds { .. } => "folds",
            Command::Fsm { .. } => "fsm",
            Command::Eval { .. } => "eval",
            Command::Score { .. } => "score",
            Command::Agree { .. } => "agree",
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Ctx { layout: cli.common.layout(&cfg)?, exec: cli.common.exec(&cfg) };
    let name = cli.command.name();
    let out: Outputs = match cli.command {
        Command::Gen { gen, noise, fsm, scoring } => commands::gen(
            &ctx,
            &gen.overlay(&cfg.gen),
            &noise.overlay(&cfg.noise),
            &fsm.overlay(&cfg.fsm),
            &scoring.overlay(&cfg.scoring),
        )?,
        Command::Folds { opts } => commands::folds(&ctx, &opts.overlay(&cfg.folds))?,
        Command::Fsm { keypoints_dir, opts } => {
            let dir = keypoints_dir.unwrap_or_else(|| ctx.layout.stage("gen"));
            commands::fsm(&ctx, &dir, &opts.overlay(&cfg.fsm))?
        }
        Command::Eval { opts } => commands::eval(&ctx, &opts.overlay(&cfg.eval))?,
        Command::Score { opts, scoring } => {
            commands::score(&ctx, &opts.overlay(&cfg.score), &scoring.overlay(&cfg.scoring))?
        }
        Command::Agree { opts } => commands::agree(&ctx, &opts.overlay(&cfg.agree))?,
    };
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let dir = ctx.layout.stage(name);
    out.write_to(&dir)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
