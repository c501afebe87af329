use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use martrep_cli::{
    analyze, exit_code, load_model, render_analysis_csv, render_analysis_text, render_simulation_csv,
    render_simulation_text, simulate, validate, with_json, Source, EXIT_INVALID, EXIT_OK,
};
use martrep_sim::presets::{preset, PRESETS};
use martrep_sim::SimConfig;

#[derive(Parser)]
#[command(name = "martrep", version, about = "Martingale representation on progressively enlarged filtrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and exit 0 if it is well formed.
    Validate { model: PathBuf },
    /// Exact analysis of a finite model or of an atomic preset.
    Analyze {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        model: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Reference measure name; repeatable. Defaults to every measure in the file.
        #[arg(long)]
        measure: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Monte Carlo verification of the triplet on a mixed model.
    Simulate {
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        preset: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        /// Payoff expression, e.g. "1{tau==2}*1{eta==2}".
        #[arg(long)]
        payoff: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the simulated paths as CSV.
        #[arg(long)]
        paths_out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate { model } => {
            println!("{}", validate(&model)?);
            Ok(EXIT_OK)
        }
        Command::Analyze {
            model,
            preset: name,
            measure,
            format,
            out,
            timing,
        } => {
            let start = Instant::now();
            let (label, source) = match (model, name) {
                (Some(path), _) => (path.display().to_string(), load_model(&path)?),
                (None, Some(name)) => (format!("preset:{name}"), Source::Mixed(preset(&name)?)),
                (None, None) => bail!("one of --model or --preset is required"),
            };
            let mut report = analyze(&label, &source, &measure)?;
            if timing {
                report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                Format::Csv => render_analysis_csv(&report),
                Format::Text => with_json(render_analysis_text(&report), &report)?,
            };
            emit(&text, out.as_deref())?;
            Ok(report.exit_code())
        }
        Command::Simulate {
            preset: name,
            model,
            paths,
            dt,
            seed,
            payoff,
            format,
            out,
            paths_out,
            timing,
        } => {
            let start = Instant::now();
            let (label, mixed) = match (model, name) {
                (Some(path), _) => match load_model(&path)? {
                    Source::Mixed(m) => (path.display().to_string(), m),
                    Source::Finite(_) => bail!(martrep_core::Error::at(
                        "$",
                        "simulate expects a mixed model document (with a horizon)"
                    )),
                },
                (None, Some(name)) => {
                    let m = preset(&name).with_context(|| format!("known presets: {}", PRESETS.join(", ")))?;
                    (name, m)
                }
                (None, None) => bail!("one of --preset or --model is required"),
            };
            let cfg = SimConfig::new(paths, dt, seed);
            let (mut report, batch) = simulate(&label, &mixed, &cfg, payoff.as_deref())?;
            if let Some(p) = paths_out {
                let file = std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                martrep_sim::export::write_csv(&batch, file)?;
            }
            if timing {
                report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                Format::Csv => render_simulation_csv(&report),
                Format::Text => with_json(render_simulation_text(&report), &report)?,
            };
            emit(&text, out.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
