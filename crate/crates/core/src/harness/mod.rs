//! Synthetic experiments: configuration, phantoms, noise, and the
//! artifacts written by an inversion run.

mod checks;
mod output;
mod shapes;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::elliptic::{forward, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{region_area, symmetric_difference_area};
use crate::grid::{GridSpec, ScalarField, DEFAULT_GRAD_FLOOR};
use crate::levelset::{run_with_observer, EvolutionConfig, Method, StopReason};
use crate::projection::{apply_p, SmoothingParam};

pub use checks::{adjoint_check, lemma_check, shape_check, CheckReport, CheckResult};
pub use output::{
    pgm_bytes, trace_csv, write_field_csv, write_json, write_pgm, write_trace,
    TRACE_FORMAT_VERSION, TRACE_HEADER,
};
pub use shapes::{union_distance, Shape};

/// Shapes must keep this many grid spacings away from the boundary.
pub const MARGIN_CELLS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSettings {
    pub method: Method,
    /// Defaults depend on the method.
    pub dt: Option<f64>,
    pub max_steps: usize,
    /// Smoothing width in grid spacings.
    pub eps_multiple: f64,
    /// Defaults depend on the method.
    pub reinit_every: Option<usize>,
    /// Stop once the residual reaches this multiple of the injected noise.
    pub discrepancy_factor: f64,
    pub solver: SolverConfig,
    pub grad_floor: f64,
    pub backtracking: bool,
    pub max_halvings: u32,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        EvolutionSettings {
            method: Method::InverseScaleSpace,
            dt: None,
            max_steps: 200,
            eps_multiple: 1.5,
            reinit_every: None,
            discrepancy_factor: 1.1,
            solver: SolverConfig::default(),
            grad_floor: DEFAULT_GRAD_FLOOR,
            backtracking: true,
            max_halvings: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Nodes per side of the unit square.
    pub grid: usize,
    pub truth: Vec<Shape>,
    pub initial: Vec<Shape>,
    /// Relative L² noise level.
    pub noise: f64,
    pub evolution: EvolutionSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Write PGM snapshots every this many steps; 0 keeps only the first
    /// and last.
    pub snapshot_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: 129,
            truth: vec![Shape::disk([0.5, 0.5], 0.3)],
            initial: vec![Shape::disk([0.4, 0.4], 0.2)],
            noise: 0.0,
            evolution: EvolutionSettings::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            snapshot_every: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::unit(self.grid)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        if self.truth.is_empty() || self.initial.is_empty() {
            return Err(Error::Config(
                "truth and initial need at least one shape each".into(),
            ));
        }
        let margin = MARGIN_CELLS * spec.h();
        for s in self.truth.iter().chain(&self.initial) {
            s.check_inside(&spec, margin)?;
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        if !(self.evolution.discrepancy_factor >= 0.0) {
            return Err(Error::Config(
                "discrepancy_factor must be non-negative".into(),
            ));
        }
        self.evolution_config(&spec, 0.0)?.validate(&spec)
    }

    /// Evolution parameters with the stopping level set from the injected
    /// noise `‖y_δ - y‖`.
    pub fn evolution_config(&self, spec: &GridSpec, noise_level: f64) -> Result<EvolutionConfig> {
        let e = &self.evolution;
        let mut cfg = EvolutionConfig::default_for(spec, e.method);
        if let Some(dt) = e.dt {
            cfg.dt = dt;
        }
        if let Some(k) = e.reinit_every {
            cfg.reinit_every = k;
        }
        cfg.max_steps = e.max_steps;
        cfg.eps = SmoothingParam::grid_multiple(spec, e.eps_multiple)?;
        cfg.stop_discrepancy = e.discrepancy_factor * noise_level;
        cfg.solver = e.solver;
        cfg.grad_floor = e.grad_floor;
        cfg.backtracking = e.backtracking;
        cfg.max_halvings = e.max_halvings;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    /// Signed distance of the true inclusion.
    pub phi_true: ScalarField,
    pub u_true: ScalarField,
    pub y_clean: ScalarField,
}

/// Data are always generated with the direct solver, independent of the
/// solver chosen for the inversion.
pub fn make_phantom(cfg: &ExperimentConfig) -> Result<Phantom> {
    cfg.validate()?;
    let phi_true = union_distance(cfg.spec()?, &cfg.truth)?;
    let u_true = apply_p(&phi_true);
    let y_clean = forward(&u_true, &SolverConfig::default())?;
    Ok(Phantom {
        phi_true,
        u_true,
        y_clean,
    })
}

/// `y + δ‖y‖ g/‖g‖` with `g` standard normal from `seed`.
pub fn add_noise(y: &ScalarField, delta: f64, seed: u64) -> Result<ScalarField> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be non-negative, got {delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..y.spec().len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let g = ScalarField::new(*y.spec(), g)?;
    y.axpy(delta * y.norm() / g.norm(), &g)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalMetrics {
    pub trace_format_version: u32,
    pub method: String,
    pub grid: usize,
    pub seed: u64,
    pub steps: usize,
    pub stop_reason: Option<StopReason>,
    pub aborted: Option<String>,
    pub noise_level: f64,
    pub stop_discrepancy: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub final_residual_sharp: f64,
    pub true_area: f64,
    pub final_area: f64,
    pub initial_symmetric_difference: f64,
    pub final_symmetric_difference: f64,
    pub wall_clock_seconds: f64,
    pub wall_clock_per_step: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub metrics: FinalMetrics,
    pub phi: ScalarField,
    pub trace: crate::levelset::EvolutionTrace,
}

fn snapshot(dir: &Path, step: usize, phi: &ScalarField) -> Result<()> {
    write_pgm(&dir.join(format!("phi_{step:04}.pgm")), phi)?;
    write_pgm(&dir.join(format!("u_{step:04}.pgm")), &apply_p(phi))
}

/// Runs one inversion and writes `trace.csv`, PGM snapshots and
/// `final_metrics.json` into the configured output directory. Evolution
/// failures are recorded in the metrics; only IO and configuration
/// problems are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = cfg.spec()?;
    let phantom = make_phantom(cfg)?;
    let y = add_noise(&phantom.y_clean, cfg.noise, cfg.seed)?;
    let noise_level = y.sub(&phantom.y_clean)?.norm();
    let ecfg = cfg.evolution_config(&spec, noise_level)?;
    let phi0 = union_distance(spec, &cfg.initial)?;
    info!(
        "{} on {spec}, noise {:.3e}, stop at {:.3e}",
        ecfg.method.name(),
        noise_level,
        ecfg.stop_discrepancy
    );

    snapshot(dir, 0, &phi0)?;
    let mut io_error = None;
    let mut last_written = 0;
    let every = cfg.snapshot_every;
    let start = Instant::now();
    let result = run_with_observer(&phi0, &y, &ecfg, |k, phi| {
        if io_error.is_none() && every > 0 && k % every == 0 {
            match snapshot(dir, k, phi) {
                Ok(()) => last_written = k,
                Err(e) => io_error = Some(e),
            }
        }
    });
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(e) = io_error {
        return Err(e);
    }

    let (phi, trace, stop, aborted) = match result {
        Ok(out) => (out.phi, out.trace, Some(out.stop), None),
        Err(a) => {
            let msg = a.error.to_string();
            (a.phi, a.trace, None, Some(msg))
        }
    };
    let steps = trace.steps.len();
    if steps > 0 && last_written != steps {
        snapshot(dir, steps, &phi)?;
    }
    write_trace(&dir.join("trace.csv"), &trace)?;

    let first = trace.initial.clone();
    let last = trace.last().cloned();
    let metrics = FinalMetrics {
        trace_format_version: TRACE_FORMAT_VERSION,
        method: ecfg.method.name().to_string(),
        grid: cfg.grid,
        seed: cfg.seed,
        steps,
        stop_reason: stop,
        aborted,
        noise_level,
        stop_discrepancy: ecfg.stop_discrepancy,
        initial_residual: first.as_ref().map_or(f64::NAN, |r| r.residual),
        final_residual: last.as_ref().map_or(f64::NAN, |r| r.residual),
        final_residual_sharp: last.as_ref().map_or(f64::NAN, |r| r.residual_sharp),
        true_area: region_area(&phantom.phi_true),
        final_area: region_area(&phi),
        initial_symmetric_difference: symmetric_difference_area(&phi0, &phantom.phi_true)?,
        final_symmetric_difference: symmetric_difference_area(&phi, &phantom.phi_true)?,
        wall_clock_seconds: elapsed,
        wall_clock_per_step: if steps > 0 {
            elapsed / steps as f64
        } else {
            0.0
        },
    };
    write_json(&dir.join("final_metrics.json"), &metrics)?;
    Ok(ExperimentReport {
        metrics,
        phi,
        trace,
    })
}
