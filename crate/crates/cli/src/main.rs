use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ilcl_cli::{cmd_bridge_check, cmd_eval, cmd_explore, cmd_render, CliError, RenderWhat};

#[derive(Parser)]
#[command(name = "ilcl", version, about = "Explore an environment instance into a context document and evaluate it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Forest,
    Document,
    Metrics,
}

#[derive(Subcommand)]
enum Command {
    /// Explore one instance and write a run directory.
    Explore {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Run the downstream benchmark.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Document given to the with-context condition.
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print an artifact of a run directory.
    Render {
        dir: PathBuf,
        #[arg(long, value_enum)]
        what: What,
    },
    /// Check a bridge endpoint against the protocol suite.
    BridgeCheck {
        #[arg(long)]
        endpoint: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explore { config, out, force } => println!("{}", cmd_explore(&config, out.as_deref(), force)?),
        Command::Eval { config, context, jobs } => print!("{}", cmd_eval(&config, context.as_deref(), jobs)?),
        Command::Render { dir, what } => {
            let what = match what {
                What::Forest => RenderWhat::Forest,
                What::Document => RenderWhat::Document,
                What::Metrics => RenderWhat::Metrics,
            };
            print!("{}", cmd_render(&dir, what)?);
        }
        Command::BridgeCheck { endpoint } => {
            let results = cmd_bridge_check(&endpoint)?;
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} of {} scenarios failed", results.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_max_level(tracing_subscriber::filter::LevelFilter::WARN)
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
