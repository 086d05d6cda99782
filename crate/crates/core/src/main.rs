use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ppca::harness::{
    cmd_figures, cmd_rates, cmd_run, cmd_sweep, cmd_verify, parse_param, ExperimentConfig,
    GameSpec, Outcome, RatesRequest, VerifyOptions, DEFAULT_SIZES, EXIT_CONFIG,
};
use ppca::spectral::RateMethod;
use ppca::{Error, JointPoint, Result};

#[derive(Parser)]
#[command(
    name = "ppca",
    version,
    about = "Zero-sum game dynamics: simulation, rates and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write its trajectory CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV path; overrides the config's out_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the trajectory CSVs of figure 4, 6 or 8 (5, 7, 9 are aliases).
    Figures {
        which: u32,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Initial point `theta,phi` for the scalar games.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        init: Option<Vec<f64>>,
    },
    /// Print the prescribed rates for a bilinear game as JSON.
    Rates {
        /// Builtin game; ignored when --config is given.
        #[arg(long, value_enum, default_value_t = BuiltinGame::ScalarBilinear)]
        game: BuiltinGame,
        /// Take the game from an experiment config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cond: Option<f64>,
        #[arg(long, value_enum)]
        method: RatesMethod,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// `log(delta / eps)` used for the iteration bound.
        #[arg(long, default_value_t = 1.0)]
        log_ratio: f64,
    },
    /// Run the invariant suite on seeded random games.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        /// Inject a known bug to confirm the suite catches it.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Run a config template over a parameter grid; one CSV row per point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `name=v1,v2,...`; repeat for a Cartesian grid.
        #[arg(long = "param")]
        params: Vec<String>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum BuiltinGame {
    ScalarBilinear,
    G2,
    RandomBilinear,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RatesMethod {
    Ppca,
    PpcaAlphaZero,
    Mpm,
    PpcaGammaEqAlpha,
    Eg,
}

impl From<RatesMethod> for RateMethod {
    fn from(m: RatesMethod) -> Self {
        match m {
            RatesMethod::Ppca => RateMethod::Ppca,
            RatesMethod::PpcaAlphaZero => RateMethod::PpcaAlphaZero,
            RatesMethod::Mpm => RateMethod::Mpm,
            RatesMethod::PpcaGammaEqAlpha => RateMethod::PpcaGammaEqAlpha,
            RatesMethod::Eg => RateMethod::Eg,
        }
    }
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Run { config, out } => cmd_run(&ExperimentConfig::load(&config)?, out.as_deref()),
        Command::Figures { which, out, init } => {
            let init = match init.as_deref() {
                None => None,
                Some([theta, phi]) => Some(JointPoint::from_slices(&[*theta], &[*phi])),
                Some(_) => {
                    return Err(Error::Config(
                        "--init expects exactly two values: theta,phi".into(),
                    ))
                }
            };
            cmd_figures(which, &out, init.as_ref())
        }
        Command::Rates {
            game,
            config,
            n,
            seed,
            cond,
            method,
            gamma,
            alpha,
            beta,
            log_ratio,
        } => {
            let game = match config {
                Some(path) => ExperimentConfig::load(&path)?.game,
                None => match game {
                    BuiltinGame::ScalarBilinear => GameSpec::ScalarBilinear,
                    BuiltinGame::G2 => GameSpec::G2,
                    BuiltinGame::RandomBilinear => GameSpec::RandomBilinear { n, seed, cond },
                },
            };
            cmd_rates(&RatesRequest {
                game,
                method: method.into(),
                gamma,
                alpha,
                beta,
                log_ratio,
            })
        }
        Command::Verify {
            seed,
            sizes,
            inject_fault,
        } => cmd_verify(&VerifyOptions {
            seed,
            sizes,
            fault: inject_fault.map(|f| f.parse()).transpose()?,
        }),
        Command::Sweep {
            config,
            params,
            out,
        } => {
            let template = ExperimentConfig::load(&config)?;
            let params = params
                .iter()
                .map(|p| parse_param(p))
                .collect::<Result<Vec<_>>>()?;
            let outcome = cmd_sweep(&template, &params)?;
            match out {
                Some(path) => {
                    write_output(&path, &outcome.stdout)?;
                    Ok(Outcome::ok(String::new()))
                }
                None => Ok(outcome),
            }
        }
    }
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            let _ = stdout.flush();
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
