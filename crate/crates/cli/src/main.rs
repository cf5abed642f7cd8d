use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levelset_core::harness::{
    add_noise, adjoint_check, lemma_check, make_phantom, run_experiment, shape_check,
    write_field_csv, write_json, write_pgm, CheckReport, ExperimentConfig,
};
use levelset_core::{geometry::region_area, Error, Method, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "levelset",
    version,
    about = "Level set inversion for the 2D inverse potential problem"
)]
struct Cli {
    /// JSON experiment configuration; defaults to the reference experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for noise and random test fields.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evolution method: iss or santosa.
    #[arg(long, global = true)]
    method: Option<Method>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the phantom and its (noisy) data.
    Forward,
    /// Run an inversion and write trace, snapshots and metrics.
    Invert,
    /// Projection and coarea property battery.
    LemmaCheck {
        #[arg(long, default_value_t = 257)]
        grid: usize,
    },
    /// Level set derivative vs shape derivative over a refinement sequence.
    ShapeCheck {
        #[arg(long, value_delimiter = ',', default_values_t = [65, 129, 257])]
        sizes: Vec<usize>,
    },
    /// Elliptic solver orders and forward-map symmetry.
    AdjointCheck {
        #[arg(long, default_value_t = 65)]
        grid: usize,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = cli.method {
        cfg.evolution.method = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn forward(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = make_phantom(cfg)?;
    let y = add_noise(&p.y_clean, cfg.noise, cfg.seed)?;
    write_pgm(&dir.join("u_true.pgm"), &p.u_true)?;
    write_pgm(&dir.join("y_clean.pgm"), &p.y_clean)?;
    write_pgm(&dir.join("y.pgm"), &y)?;
    write_field_csv(&dir.join("y.csv"), &y)?;
    let summary = json!({
        "grid": cfg.grid,
        "seed": cfg.seed,
        "noise": cfg.noise,
        "true_area": region_area(&p.phi_true),
        "data_norm": p.y_clean.norm(),
        "noise_norm": y.sub(&p.y_clean)?.norm(),
    });
    write_json(&dir.join("phantom.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn report(name: &str, r: &CheckReport, out: Option<&Path>) -> Result<ExitCode> {
    for c in &r.checks {
        println!(
            "{} {}: {:.4e} (limit {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(format!("{name}.json")), r)?;
    }
    Ok(if r.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Forward => {
            forward(&load(cli)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Invert => {
            let cfg = load(cli)?;
            let rep = run_experiment(&cfg)?;
            let m = &rep.metrics;
            println!(
                "{} steps={} residual {:.4e} -> {:.4e}, symmetric difference {:.4e} -> {:.4e} ({:.1}% of true area)",
                m.method,
                m.steps,
                m.initial_residual,
                m.final_residual,
                m.initial_symmetric_difference,
                m.final_symmetric_difference,
                100.0 * m.final_symmetric_difference / m.true_area
            );
            match &m.aborted {
                Some(reason) => {
                    eprintln!("evolution aborted: {reason}");
                    Ok(ExitCode::from(2))
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::LemmaCheck { grid } => report("lemma-check", &lemma_check(*grid)?, out),
        Command::ShapeCheck { sizes } => {
            let solver = load(cli)?.evolution.solver;
            report("shape-check", &shape_check(sizes, &solver)?, out)
        }
        Command::AdjointCheck { grid, pairs } => {
            let cfg = load(cli)?;
            report(
                "adjoint-check",
                &adjoint_check(*grid, *pairs, cfg.seed, &cfg.evolution.solver)?,
                out,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
