//! The sharp projection onto binary indicators and its piecewise-linear
//! smoothings.
//!
//! Convention: `φ ≥ 0` marks the inclusion. The smoothed projection `P_ε`
//! ramps from 0 to 1 on `[-ε, 0]`, so its derivative is supported on the
//! half-open band `(-ε, 0]` just outside the zero level set. On that band
//! `P'_ε(φ) = 1/ε`, which tends to `δ(φ)/|∇φ|` as `ε → 0` for level set
//! functions without critical points near the interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Width of the smoothing ramp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParam {
    eps: f64,
    grid_multiple: f64,
}

impl SmoothingParam {
    pub const DEFAULT_GRID_MULTIPLE: f64 = 1.5;

    pub fn new(eps: f64, h: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smoothing width must be positive, got {eps}"
            )));
        }
        Ok(SmoothingParam {
            eps,
            grid_multiple: eps / h,
        })
    }

    /// `ε = k h` on the given grid.
    pub fn grid_multiple(spec: &GridSpec, k: f64) -> Result<Self> {
        Self::new(k * spec.h(), spec.h())
    }

    /// `ε = 1.5 h`.
    pub fn default_for(spec: &GridSpec) -> Self {
        Self::grid_multiple(spec, Self::DEFAULT_GRID_MULTIPLE).expect("positive spacing")
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ε / h` for the grid this parameter was built against.
    pub fn multiple(&self) -> f64 {
        self.grid_multiple
    }
}

#[inline]
pub fn p_sharp(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn p_eps(t: f64, eps: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < -eps {
        0.0
    } else {
        1.0 + t / eps
    }
}

#[inline]
pub fn dp_eps(t: f64, eps: f64) -> f64 {
    if t > -eps && t <= 0.0 {
        1.0 / eps
    } else {
        0.0
    }
}

#[inline]
pub fn q_eps(t: f64, eps: f64) -> f64 {
    if t > eps {
        1.0
    } else if t < -eps {
        0.0
    } else {
        (t + eps) / (2.0 * eps)
    }
}

/// Indicator of `{φ ≥ 0}`.
pub fn apply_p(phi: &ScalarField) -> ScalarField {
    phi.map(p_sharp)
}

pub fn apply_p_eps(phi: &ScalarField, s: &SmoothingParam) -> ScalarField {
    let eps = s.eps;
    phi.map(|t| p_eps(t, eps))
}

/// `P'_ε(φ)`: `1/ε` on `{-ε < φ ≤ 0}`, zero elsewhere.
pub fn deriv_p_eps(phi: &ScalarField, s: &SmoothingParam) -> ScalarField {
    let eps = s.eps;
    phi.map(|t| dp_eps(t, eps))
}

/// Symmetric ramp on `[-ε, ε]`. Its pointwise limit is ½ on `{φ = 0}`, which
/// is not a binary indicator; kept for comparison only.
pub fn apply_q_eps(phi: &ScalarField, s: &SmoothingParam) -> ScalarField {
    let eps = s.eps;
    phi.map(|t| q_eps(t, eps))
}

/// Mask of nodes inside the `P'_ε` band.
pub fn band_mask(phi: &ScalarField, s: &SmoothingParam) -> Vec<bool> {
    phi.values()
        .iter()
        .map(|&t| t > -s.eps && t <= 0.0)
        .collect()
}
