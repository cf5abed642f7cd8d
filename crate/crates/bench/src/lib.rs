//! Fixtures shared by the benchmarks.

use levelset_core::elliptic::forward;
use levelset_core::geometry::circle_distance;
use levelset_core::projection::apply_p;
use levelset_core::{EvolutionConfig, GridSpec, Method, ScalarField};

/// The reference disk problem on an `n × n` grid: initial level set,
/// data and evolution settings.
pub fn disk_problem(n: usize, method: Method) -> (ScalarField, ScalarField, EvolutionConfig) {
    let s = GridSpec::unit(n).expect("valid grid");
    let cfg = EvolutionConfig::default_for(&s, method);
    let truth = circle_distance(s, [0.5, 0.5], 0.3);
    let y = forward(&apply_p(&truth), &cfg.solver).expect("forward solve");
    (circle_distance(s, [0.4, 0.4], 0.2), y, cfg)
}

pub fn smooth_field(n: usize) -> ScalarField {
    let s = GridSpec::unit(n).expect("valid grid");
    ScalarField::from_fn(s, |x, y| (3.0 * x).sin() * (2.0 * y).cos() + x * y)
}
