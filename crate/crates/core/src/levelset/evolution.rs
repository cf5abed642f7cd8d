use std::fmt;

use log::{debug, warn};
use serde::Serialize;

use crate::elliptic::{adjoint_residual, apply_neumann_helmholtz, forward};
use crate::error::{Error, Result};
use crate::geometry::{curve_length, extract_zero_level, region_area};
use crate::grid::{gradient, ScalarField};
use crate::projection::{apply_p, apply_p_eps, band_mask, deriv_p_eps};

use super::reinit::reinitialize;
use super::velocity::velocity;
use super::EvolutionConfig;

/// `½‖F(P_ε(φ)) - y‖²`.
pub fn discrepancy(phi: &ScalarField, y: &ScalarField, cfg: &EvolutionConfig) -> Result<f64> {
    let r = forward(&apply_p_eps(phi, &cfg.eps), &cfg.solver)?.sub(y)?;
    Ok(0.5 * r.norm().powi(2))
}

/// Explicit Euler step `φ + dt · vel`.
pub fn step(phi: &ScalarField, vel: &ScalarField, dt: f64) -> Result<ScalarField> {
    phi.axpy(dt, vel)
}

/// L² norm of `P'_ε(φ) F'(u)*(F(u) - y) + α (I - Δ)(φ - φ_*)`, the
/// stationarity condition of one Tikhonov step of length `1/α`.
pub fn optimality_residual(
    phi: &ScalarField,
    phi_star: &ScalarField,
    y: &ScalarField,
    alpha: f64,
    cfg: &EvolutionConfig,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let g = adjoint_residual(&apply_p_eps(phi, &cfg.eps), y, &cfg.solver)?;
    let data = deriv_p_eps(phi, &cfg.eps).mul(&g)?;
    let reg = apply_neumann_helmholtz(&phi.sub(phi_star)?);
    Ok(data.axpy(alpha, &reg)?.norm())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// Step length actually taken after backtracking.
    pub dt: f64,
    /// `‖F(P_ε(φ)) - y‖`, the quantity the flow decreases.
    pub residual: f64,
    /// `‖F(P(φ)) - y‖` for the sharp reconstruction.
    pub residual_sharp: f64,
    pub area: f64,
    pub perimeter: f64,
    pub curves: usize,
    pub halvings: u32,
    pub reinitialized: bool,
    /// `|∇φ|` fell below the floor somewhere in the `P'_ε` band.
    pub floor_engaged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvolutionTrace {
    /// State before the first step, reported as step 0.
    pub initial: Option<StepRecord>,
    /// One record per completed step.
    pub steps: Vec<StepRecord>,
}

impl EvolutionTrace {
    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last().or(self.initial.as_ref())
    }

    /// Step 0 followed by every completed step.
    pub fn all(&self) -> impl Iterator<Item = &StepRecord> {
        self.initial.iter().chain(self.steps.iter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    /// No step length within the halving budget decreased the discrepancy.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub phi: ScalarField,
    pub trace: EvolutionTrace,
    pub stop: StopReason,
}

/// An evolution that ended on an error, with everything computed so far.
#[derive(Debug)]
pub struct RunAborted {
    pub error: Error,
    pub phi: ScalarField,
    pub trace: EvolutionTrace,
}

impl fmt::Display for RunAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "evolution aborted after {} steps: {}",
            self.trace.steps.len(),
            self.error
        )
    }
}

impl std::error::Error for RunAborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct State {
    residual: f64,
    residual_sharp: f64,
    area: f64,
    perimeter: f64,
    curves: usize,
}

impl State {
    fn measure(phi: &ScalarField, y: &ScalarField, cfg: &EvolutionConfig) -> Result<Self> {
        let residual = forward(&apply_p_eps(phi, &cfg.eps), &cfg.solver)?
            .sub(y)?
            .norm();
        let residual_sharp = forward(&apply_p(phi), &cfg.solver)?.sub(y)?.norm();
        let c = extract_zero_level(phi);
        Ok(State {
            residual,
            residual_sharp,
            area: region_area(phi),
            perimeter: curve_length(&c),
            curves: c.len(),
        })
    }

    fn discrepancy(&self) -> f64 {
        0.5 * self.residual * self.residual
    }

    fn converged(&self, cfg: &EvolutionConfig) -> bool {
        self.residual.min(self.residual_sharp) <= cfg.stop_discrepancy
    }

    fn record(&self, step: usize, t: f64, dt: f64) -> StepRecord {
        StepRecord {
            step,
            t,
            dt,
            residual: self.residual,
            residual_sharp: self.residual_sharp,
            area: self.area,
            perimeter: self.perimeter,
            curves: self.curves,
            halvings: 0,
            reinitialized: false,
            floor_engaged: false,
        }
    }
}

fn floor_engaged(phi: &ScalarField, cfg: &EvolutionConfig) -> bool {
    let (gx, gy) = gradient(phi);
    band_mask(phi, &cfg.eps)
        .iter()
        .zip(gx.values().iter().zip(gy.values()))
        .any(|(&b, (a, c))| b && a.hypot(*c) < cfg.grad_floor)
}

pub fn run(
    phi0: &ScalarField,
    y: &ScalarField,
    cfg: &EvolutionConfig,
) -> std::result::Result<EvolutionOutcome, Box<RunAborted>> {
    run_with_observer(phi0, y, cfg, |_, _| {})
}

/// Evolves `phi0` towards data `y`. `observer` sees the level set function
/// after every completed step.
///
/// Each step starts from the configured `dt`; with backtracking on, the step
/// is halved until the discrepancy does not increase. A step that is due for
/// redistancing keeps the redistanced field only if that does not increase
/// the discrepancy either.
pub fn run_with_observer(
    phi0: &ScalarField,
    y: &ScalarField,
    cfg: &EvolutionConfig,
    mut observer: impl FnMut(usize, &ScalarField),
) -> std::result::Result<EvolutionOutcome, Box<RunAborted>> {
    let mut trace = EvolutionTrace::default();
    let abort = |error: Error, phi: &ScalarField, trace: EvolutionTrace| {
        Box::new(RunAborted {
            error,
            phi: phi.clone(),
            trace,
        })
    };
    if let Err(e) = cfg
        .validate(phi0.spec())
        .and_then(|_| phi0.spec().check_same(y.spec()))
    {
        return Err(abort(e, phi0, trace));
    }
    if extract_zero_level(phi0).is_empty() {
        return Err(abort(Error::EmptyZeroLevel, phi0, trace));
    }

    let mut phi = phi0.clone();
    let mut state = match State::measure(&phi, y, cfg) {
        Ok(s) => s,
        Err(e) => return Err(abort(e, &phi, trace)),
    };
    trace.initial = Some(state.record(0, 0.0, 0.0));
    if state.converged(cfg) {
        let mut rec = state.record(1, 0.0, 0.0);
        rec.floor_engaged = floor_engaged(&phi, cfg);
        trace.steps.push(rec);
        observer(1, &phi);
        return Ok(EvolutionOutcome {
            phi,
            trace,
            stop: StopReason::Converged,
        });
    }

    let mut t = 0.0;
    let mut stop = StopReason::MaxSteps;
    for k in 1..=cfg.max_steps {
        let attempt = (|| -> Result<Option<(ScalarField, State, StepRecord)>> {
            let vel = velocity(&phi, y, cfg)?;
            let mut dt = cfg.dt;
            let mut halvings = 0;
            let (mut next, mut next_state) = loop {
                let cand = step(&phi, &vel, dt)?;
                let st = State::measure(&cand, y, cfg)?;
                if !cfg.backtracking || st.discrepancy() <= state.discrepancy() {
                    break (cand, st);
                }
                if halvings == cfg.max_halvings {
                    return Ok(None);
                }
                halvings += 1;
                dt *= 0.5;
            };
            let mut reinitialized = false;
            if cfg.reinit_every > 0 && k % cfg.reinit_every == 0 {
                let r = reinitialize(&next)?;
                let st = State::measure(&r, y, cfg)?;
                if !cfg.backtracking || st.discrepancy() <= state.discrepancy() {
                    next = r;
                    next_state = st;
                    reinitialized = true;
                } else {
                    debug!("step {k}: redistancing skipped, it would raise the discrepancy");
                }
            }
            if next_state.curves == 0 {
                return Err(Error::EmptyZeroLevel);
            }
            let mut rec = next_state.record(k, t + dt, dt);
            rec.halvings = halvings;
            rec.reinitialized = reinitialized;
            rec.floor_engaged = floor_engaged(&next, cfg);
            Ok(Some((next, next_state, rec)))
        })();
        match attempt {
            Ok(Some((next, next_state, rec))) => {
                if next_state.curves != state.curves {
                    warn!(
                        "step {k}: zero level set changed from {} to {} curves",
                        state.curves, next_state.curves
                    );
                }
                if rec.floor_engaged {
                    warn!("step {k}: |∇φ| below the floor inside the smoothing band");
                }
                t = rec.t;
                phi = next;
                state = next_state;
                trace.steps.push(rec);
                observer(k, &phi);
                if state.converged(cfg) {
                    stop = StopReason::Converged;
                    break;
                }
            }
            Ok(None) => {
                debug!("step {k}: no descent after {} halvings", cfg.max_halvings);
                stop = StopReason::Stalled;
                break;
            }
            Err(e) => return Err(abort(e, &phi, trace)),
        }
    }
    Ok(EvolutionOutcome { phi, trace, stop })
}
