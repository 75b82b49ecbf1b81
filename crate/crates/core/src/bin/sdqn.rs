use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sdqn::cli::{self, ExperimentSpec, RunOptions, EXIT_CONFIG, EXIT_OK};
use sdqn::sim::TopologySpec;

#[derive(Parser)]
#[command(
    name = "sdqn",
    version,
    about = "Shared-policy DQN populations on spatial prisoner's dilemma graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configuration of an experiment spec.
    Run {
        spec: PathBuf,
        /// Output directory; overrides `out_dir` in the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent runs [env: SDQN_WORKERS; default: available cores].
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        dump_trace: bool,
        #[arg(long)]
        dump_activations: bool,
        #[arg(long)]
        dump_checkpoints: bool,
        /// Keep successful rows of an existing runs.csv and skip those runs.
        #[arg(long)]
        resume_skip_existing: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check a spec and print how many runs it expands to.
    Check { spec: PathBuf },
    /// Print the default spec as TOML.
    DefaultSpec,
    /// Print a generated interaction graph as an edge list.
    Edges {
        #[arg(long, value_enum, default_value_t = Kind::Grid)]
        kind: Kind,
        #[arg(long, default_value_t = 30)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Grid,
    RandomRegular,
    Modular,
    SmallWorld,
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.command {
        Command::Run {
            spec,
            out,
            workers,
            dump_trace,
            dump_activations,
            dump_checkpoints,
            resume_skip_existing,
            quiet,
        } => cli::main_with(
            &spec,
            &RunOptions {
                out_dir: out,
                workers,
                dump_trace,
                dump_activations,
                dump_checkpoints,
                resume_skip_existing,
                quiet,
            },
        ),
        Command::Check { spec } => match cli::parse_spec(&spec).and_then(|s| s.plan()) {
            Ok(plan) => {
                println!("{} runs", plan.len());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
        Command::DefaultSpec => match ExperimentSpec::default().to_toml() {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
        Command::Edges { kind, side, seed } => {
            let spec = match kind {
                Kind::Grid => TopologySpec::Grid,
                Kind::RandomRegular => TopologySpec::RandomRegular,
                Kind::Modular => TopologySpec::Modular {
                    modules: 9,
                    cross: 20,
                },
                Kind::SmallWorld => TopologySpec::SmallWorld { rewire_p: 0.1 },
            };
            match spec.build(side, seed) {
                Ok(t) => {
                    print!("{}", t.to_edge_list());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    };
    ExitCode::from(code)
}
