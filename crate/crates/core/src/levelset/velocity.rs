use crate::elliptic::{adjoint_residual, solve_neumann_helmholtz};
use crate::error::Result;
use crate::grid::ScalarField;
use crate::projection::{apply_p_eps, deriv_p_eps};

use super::{EvolutionConfig, Method};

/// `P'_ε(φ) F'(u)*(F(u) - y)` with `u = P_ε(φ)`; zero off the band.
pub fn iss_source(
    phi: &ScalarField,
    y: &ScalarField,
    cfg: &EvolutionConfig,
) -> Result<ScalarField> {
    let g = adjoint_residual(&apply_p_eps(phi, &cfg.eps), y, &cfg.solver)?;
    deriv_p_eps(phi, &cfg.eps).mul(&g)
}

/// `-(I - Δ)⁻¹ iss_source`, Neumann data.
pub fn velocity_iss(
    phi: &ScalarField,
    y: &ScalarField,
    cfg: &EvolutionConfig,
) -> Result<ScalarField> {
    let src = iss_source(phi, y, cfg)?;
    if src.max_abs() == 0.0 {
        return Ok(ScalarField::zeros(*phi.spec()));
    }
    Ok(solve_neumann_helmholtz(&src, &cfg.solver)?.scale(-1.0))
}

/// `-F'(u)*(F(u) - y) |∇φ|` with a Godunov upwind `|∇φ|`.
///
/// Writing the flow as `φ_t + a|∇φ| = 0` with speed `a = F'(u)*(F(u) - y)`
/// gives a step that decreases the discrepancy to first order.
pub fn velocity_santosa(
    phi: &ScalarField,
    y: &ScalarField,
    cfg: &EvolutionConfig,
) -> Result<ScalarField> {
    let speed = adjoint_residual(&apply_p_eps(phi, &cfg.eps), y, &cfg.solver)?;
    let grad = upwind_grad_norm(phi, &speed, cfg.grad_floor);
    speed.zip_map(&grad, |a, g| -a * g)
}

pub fn velocity(phi: &ScalarField, y: &ScalarField, cfg: &EvolutionConfig) -> Result<ScalarField> {
    match cfg.method {
        Method::InverseScaleSpace => velocity_iss(phi, y, cfg),
        Method::Santosa => velocity_santosa(phi, y, cfg),
    }
}

/// Godunov approximation of `|∇φ|` for `φ_t + a|∇φ| = 0`. Boundary nodes
/// reuse their single available one-sided difference.
pub(crate) fn upwind_grad_norm(phi: &ScalarField, speed: &ScalarField, floor: f64) -> ScalarField {
    let s = *phi.spec();
    let h = s.h();
    let mut out = Vec::with_capacity(s.len());
    for j in 0..s.ny() {
        for i in 0..s.nx() {
            let c = phi.at(i, j);
            let one_sided = |lo: Option<f64>, hi: Option<f64>| -> (f64, f64) {
                let dm = lo.map(|v| (c - v) / h);
                let dp = hi.map(|v| (v - c) / h);
                (dm.or(dp).unwrap(), dp.or(dm).unwrap())
            };
            let (dxm, dxp) = one_sided(
                (i > 0).then(|| phi.at(i - 1, j)),
                (i + 1 < s.nx()).then(|| phi.at(i + 1, j)),
            );
            let (dym, dyp) = one_sided(
                (j > 0).then(|| phi.at(i, j - 1)),
                (j + 1 < s.ny()).then(|| phi.at(i, j + 1)),
            );
            let g2 = if speed.at(i, j) > 0.0 {
                dxm.max(0.0).powi(2)
                    + dxp.min(0.0).powi(2)
                    + dym.max(0.0).powi(2)
                    + dyp.min(0.0).powi(2)
            } else {
                dxm.min(0.0).powi(2)
                    + dxp.max(0.0).powi(2)
                    + dym.min(0.0).powi(2)
                    + dyp.max(0.0).powi(2)
            };
            out.push(g2.sqrt().max(floor));
        }
    }
    ScalarField::from_vec(s, out)
}
