//! Level set evolution for the inverse potential problem.
//!
//! Two velocity fields are provided. The inverse scale-space velocity is the
//! `H¹`-preconditioned descent direction
//! `-(I - Δ)⁻¹(P'_ε(φ) F'(u)*(F(u) - y))` with `u = P_ε(φ)`; the baseline
//! Hamilton–Jacobi velocity is `-F'(u)*(F(u) - y) |∇φ|`. Both are descent
//! directions for `J(φ) = ½‖F(P_ε(φ)) - y‖²` under the convention that
//! `φ ≥ 0` marks the inclusion.

mod evolution;
mod reinit;
mod velocity;

use serde::{Deserialize, Serialize};

use crate::elliptic::SolverConfig;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, DEFAULT_GRAD_FLOOR};
use crate::projection::SmoothingParam;

pub use evolution::{
    discrepancy, optimality_residual, run, run_with_observer, step, EvolutionOutcome,
    EvolutionTrace, RunAborted, StepRecord, StopReason,
};
pub use reinit::reinitialize;
pub use velocity::{iss_source, velocity, velocity_iss, velocity_santosa};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(alias = "iss")]
    InverseScaleSpace,
    Santosa,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::InverseScaleSpace => "iss",
            Method::Santosa => "santosa",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iss" | "inverse-scale-space" => Ok(Method::InverseScaleSpace),
            "santosa" => Ok(Method::Santosa),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub method: Method,
    pub dt: f64,
    pub max_steps: usize,
    pub eps: SmoothingParam,
    /// Redistance every this many steps; 0 disables it.
    pub reinit_every: usize,
    /// Stop once `‖F(u) - y‖` drops to this level.
    pub stop_discrepancy: f64,
    pub solver: SolverConfig,
    pub grad_floor: f64,
    /// Halve the step until the discrepancy does not increase.
    pub backtracking: bool,
    pub max_halvings: u32,
}

impl EvolutionConfig {
    pub const DEFAULT_DT_ISS: f64 = 1000.0;
    pub const DEFAULT_DT_SANTOSA: f64 = 500.0;

    pub fn default_for(spec: &GridSpec, method: Method) -> Self {
        let (dt, reinit_every) = match method {
            Method::InverseScaleSpace => (Self::DEFAULT_DT_ISS, 0),
            Method::Santosa => (Self::DEFAULT_DT_SANTOSA, 20),
        };
        EvolutionConfig {
            method,
            dt,
            max_steps: 200,
            eps: SmoothingParam::default_for(spec),
            reinit_every,
            stop_discrepancy: 0.0,
            solver: SolverConfig::default(),
            grad_floor: DEFAULT_GRAD_FLOOR,
            backtracking: true,
            max_halvings: 10,
        }
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.eps.eps() < spec.h() * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "eps = {} is below the grid spacing {}",
                self.eps.eps(),
                spec.h()
            )));
        }
        if !(self.stop_discrepancy >= 0.0) {
            return Err(Error::Config(
                "stop_discrepancy must be non-negative".into(),
            ));
        }
        if !(self.grad_floor > 0.0) {
            return Err(Error::Config("grad_floor must be positive".into()));
        }
        self.solver.validate()
    }
}
