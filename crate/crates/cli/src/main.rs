use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hydrohybrid::harness::{compare_report, load_run, run_scenario, ControllerKind, FrequencySource, ScenarioConfig};
use hydrohybrid::HarnessError;

/// Closed-loop simulation of a hydropower plant with a penstock-fatigue MPC
/// and a battery taking the filtered share of the governor command.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its traces, damage report and manifest.
    Run {
        /// Scenario file; defaults are used for anything it omits.
        config: Option<PathBuf>,
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// [s]
        #[arg(long)]
        duration: Option<f64>,
        /// Seed of the synthetic frequency generator.
        #[arg(long)]
        seed: Option<u64>,
        /// Read the grid frequency from a `t_s,f_hz` CSV instead.
        #[arg(long, conflicts_with = "seed")]
        frequency_csv: Option<PathBuf>,
        /// Low-pass cut-off [Hz].
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        name: Option<String>,
        /// Output directory [default: runs/<name>].
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare run directories against a base run (usually the uncontrolled one).
    Compare {
        base: PathBuf,
        runs: Vec<PathBuf>,
        /// Also write the table as CSV, with per-element RDI columns.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the default scenario as TOML.
    DumpDefaults,
    /// Check a scenario file and print its hash.
    ValidateConfig { config: PathBuf },
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, HarnessError> {
    match path {
        Some(p) => ScenarioConfig::from_toml(&fs::read_to_string(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            config,
            controller,
            duration,
            seed,
            frequency_csv,
            cutoff,
            name,
            output,
        } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(c) = controller {
                cfg.controller = c;
            }
            if let Some(d) = duration {
                cfg.duration = d;
            }
            if let Some(s) = seed {
                match &mut cfg.frequency {
                    FrequencySource::Synthetic(f) => f.seed = s,
                    FrequencySource::Csv { .. } => {
                        return Err(HarnessError::Config("--seed needs a synthetic frequency source".into()))
                    }
                }
            }
            if let Some(path) = frequency_csv {
                cfg.frequency = FrequencySource::Csv { path };
            }
            if let Some(c) = cutoff {
                cfg.lpf.cutoff = c;
            }
            if let Some(n) = name {
                cfg.name = n;
            }
            let dir = output
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
            cfg.output_dir = Some(dir.clone());
            cfg.validate()?;
            let out = run_scenario(&cfg)?;
            let s = &out.summary;
            println!("{} ({}) -> {}", s.name, s.controller.as_str(), dir.display());
            println!("  steps                 {}", s.steps);
            if let Some(c) = s.tracking_correlation {
                println!("  tracking correlation  {c:.6}");
            }
            if let Some(e) = s.max_relative_tracking_error {
                println!("  max tracking error    {:.3}%", 100.0 * e);
            }
            println!("  peak |P_bess|         {:.3} MW", s.peak_p_bess / 1e6);
            println!("  BESS throughput       {:.1} Wh", s.bess_energy_throughput);
            println!(
                "  band violation        {:.3} m ({:.2}% of band, {} cycles)",
                s.band.max_violation,
                100.0 * s.band.max_violation_fraction,
                s.band.violating_steps
            );
            if let Some(m) = &s.mpc {
                println!("  MPC active / fallback {} / {}", m.active_steps, m.fallbacks);
            }
            if let Some(t) = &s.timing {
                println!("  cycle median / p95    {:.3} / {:.3} ms", t.median_ms, t.p95_ms);
            }
            println!(
                "  damage                {:.4e} (element {})",
                out.damage.total_damage, out.damage.critical_element
            );
            Ok(())
        }
        Command::Compare { base, runs, csv } => {
            let base = load_run(&base)?;
            let loaded = runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<_> = loaded.iter().map(|(s, d)| (s, d)).collect();
            let cmp = compare_report((&base.0, &base.1), &refs)?;
            print!("{}", cmp.to_markdown());
            if let Some(path) = csv {
                cmp.write_csv(fs::File::create(path)?)?;
            }
            Ok(())
        }
        Command::DumpDefaults => {
            print!("{}", ScenarioConfig::default().to_toml());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = load(Some(&config))?;
            println!("{}: ok ({} steps, hash {})", config.display(), cfg.steps(), cfg.hash());
            Ok(())
        }
    }
}
