use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use repute::dataset::{AgeBrackets, RatingScale};
use repute::independence::AuditConfig;
use repute::pipeline::{
    self, AttributeChoice, Cause, OutputFormats, PipelineError, RunConfig, Stage,
};
use repute::reputation::{EngineConfig, Variant};

#[derive(Parser)]
#[command(
    name = "repute",
    version,
    about = "Reputation-based ranking with a disparate-reputation audit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Li,
    Normalized,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Rank, audit, mitigate and evaluate; writes results to --out.
    Run {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        users: Option<PathBuf>,
        /// gender, age or none.
        #[arg(long, default_value = "none")]
        attribute: String,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, value_enum, default_value = "normalized")]
        variant: VariantArg,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Highest raw rating.
        #[arg(long, default_value_t = 5)]
        scale: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,json")]
        format: Vec<Format>,
    },
    /// Audit a saved reputations file against one attribute.
    Audit {
        #[arg(long)]
        reputations: PathBuf,
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        attribute: String,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        scale: u32,
        /// Directory for audit.csv and audit.json; printed only when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the audit tables and tau values of a run directory.
    Report { dir: PathBuf },
}

fn scale(max: u32) -> Result<RatingScale, PipelineError> {
    RatingScale::new(max).map_err(|e| PipelineError::new(Stage::Config, e))
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run {
            ratings,
            users,
            attribute,
            lambda,
            variant,
            tol,
            max_iter,
            alpha,
            scale: scale_max,
            out,
            format,
        } => {
            scale(scale_max)?;
            let variant = match variant {
                VariantArg::Li => Variant::Li,
                VariantArg::Normalized => Variant::Normalized,
            };
            let config = RunConfig {
                ratings_path: ratings,
                users_path: users,
                attribute: attribute.parse()?,
                engine: EngineConfig {
                    lambda,
                    tolerance: tol,
                    max_iterations: max_iter,
                    variant,
                    ..EngineConfig::default()
                },
                alpha,
                output_dir: out.clone(),
                formats: OutputFormats {
                    csv: format.contains(&Format::Csv),
                    json: format.contains(&Format::Json),
                },
                scale_max,
                age_brackets: AgeBrackets::movielens(),
            };
            let output = pipeline::run_pipeline(&config)?;
            let rep = &output.base.engine.reputations;
            if !rep.converged {
                eprintln!(
                    "warning: no convergence after {} iterations (last change {:e})",
                    rep.iterations_run, rep.final_delta
                );
            }
            print!("{}", repute::print_report(&out)?);
            Ok(())
        }
        Command::Audit {
            reputations,
            users,
            attribute,
            lambda,
            alpha,
            scale: scale_max,
            out,
        } => {
            let choice: AttributeChoice = attribute.parse()?;
            if choice == AttributeChoice::None {
                return Err(PipelineError::config(
                    "audit needs --attribute gender or age",
                ));
            }
            let s = scale(scale_max)?;
            let attr = pipeline::load_attribute(&users, choice, &AgeBrackets::movielens())?;
            let config = AuditConfig::new(alpha, lambda, s.delta_r());
            let report = pipeline::audit_saved(&reputations, &attr, &config)?;
            match out {
                Some(dir) => {
                    let write = |name: &str, content: String| {
                        let path = dir.join(name);
                        fs::write(&path, content).map_err(|error| {
                            PipelineError::new(Stage::Write, Cause::Io { path, error })
                        })
                    };
                    fs::create_dir_all(&dir).map_err(|error| {
                        PipelineError::new(
                            Stage::Write,
                            Cause::Io {
                                path: dir.clone(),
                                error,
                            },
                        )
                    })?;
                    write("audit.csv", report.to_csv())?;
                    let json = pretty_json(&report.to_json());
                    write("audit.json", json)?;
                }
                None => print!("{}", report.to_csv()),
            }
            Ok(())
        }
        Command::Report { dir } => {
            print!("{}", repute::print_report(&dir)?);
            Ok(())
        }
    }
}

fn pretty_json(value: &impl std::fmt::Display) -> String {
    format!("{value:#}\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
