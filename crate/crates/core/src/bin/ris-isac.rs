use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ris_isac::config_io::{parse_config, RunArtifacts, ScenarioConfig};
use ris_isac::detection::default_p_fa_grid;
use ris_isac::experiments::{
    channels_for, cmd_convergence, cmd_roc, cmd_sweep_elements, cmd_sweep_rcs, design_tables, solve_method, trace_table,
    MethodTag,
};
use ris_isac::{Error, Result};

const MIN_ROC_TRIALS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "ris-isac", version, about = "Joint transmit and RIS beamforming for Swerling-I target detection")]
struct Cli {
    /// Scenario document; the built-in reference scenario when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// First seed; defaults to `run.seed` of the scenario.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Number of consecutive seeds (1 for `optimize`, 10 otherwise).
    #[arg(long, global = true, value_name = "INT")]
    seeds: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Monte Carlo trials per ROC curve.
    #[arg(long, global = true, value_name = "INT", default_value_t = MIN_ROC_TRIALS)]
    trials: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario with the proposed method and write the design.
    Optimize,
    /// Objective trace per seed.
    Convergence,
    /// SNR over the RCS split sigma0^2 + sigma1^2 = 2 for all methods at 20 W and 30 W.
    SweepRcs,
    /// SNR over RIS size N in {16, 32, 64} and SINR requirement in {4, 10} dB.
    SweepElements,
    /// Detection probability versus false-alarm rate, proposed and random RIS.
    Roc,
}

fn load(cli: &Cli) -> Result<(ScenarioConfig, String)> {
    match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
            Ok((parse_config(&text)?, text))
        }
        None => {
            let cfg = ScenarioConfig::reference();
            let text = cfg.to_toml_string();
            Ok((cfg, text))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let (cfg, text) = load(cli)?;
    let first = cli.seed.unwrap_or(cfg.seed);
    let count = cli.seeds.unwrap_or(match cli.command {
        Command::Optimize => 1,
        _ => 10,
    });
    if count == 0 {
        return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..count).map(|i| first.wrapping_add(i)).collect();
    let mut art = RunArtifacts::new(text);
    match cli.command {
        Command::Optimize => {
            let mut c = cfg.clone();
            c.seed = first;
            let ch = channels_for(&c)?;
            let out = solve_method(&c, &ch, MethodTag::Proposed)?;
            let report = out.reports[0].clone();
            let (w, phi) = &out.designs[0];
            let (tw, tp) = design_tables(w, phi);
            art.csv_tables.extend([trace_table(&report), tw, tp]);
            println!(
                "seed {first}: {:?} after {} iterations, final point {:?}, SNR {:.4} dB, {:.2} s",
                report.status,
                report.iterations(),
                report.final_point,
                report.final_snr_db(),
                report.wall_time_s
            );
            art.reports.push(report);
        }
        Command::Convergence => {
            let (t, reports) = cmd_convergence(&cfg, &seeds)?;
            for (s, r) in seeds.iter().zip(&reports) {
                println!("seed {s}: {:?} after {} iterations, SNR {:.4} dB", r.status, r.iterations(), r.final_snr_db());
            }
            art.csv_tables.push(t);
            art.reports = reports;
        }
        Command::SweepRcs => {
            art.csv_tables.push(cmd_sweep_rcs(&cfg, &[0.4, 0.8, 1.2, 1.6], &MethodTag::ALL, &[20.0, 30.0], &seeds)?);
        }
        Command::SweepElements => {
            art.csv_tables.push(cmd_sweep_elements(&cfg, &[16, 32, 64], &[4.0, 10.0], &seeds)?);
        }
        Command::Roc => {
            if cli.trials < MIN_ROC_TRIALS {
                return Err(Error::InvalidArgument(format!("--trials must be at least {MIN_ROC_TRIALS}")));
            }
            let methods = [MethodTag::Proposed, MethodTag::RandomRis];
            art.csv_tables.push(cmd_roc(&cfg, &methods, &default_p_fa_grid(), cli.trials, &seeds)?);
        }
    }
    art.write_to(&cli.out)?;
    for t in &art.csv_tables {
        println!("wrote {} ({} rows)", cli.out.join(format!("{}.csv", t.name)).display(), t.rows.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
