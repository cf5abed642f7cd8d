//! Diagnostic batteries behind the `lemma-check`, `shape-check` and
//! `adjoint-check` commands.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elliptic::{forward, solve_dirichlet, solve_neumann_helmholtz, SolverConfig};
use crate::error::Result;
use crate::geometry::{circle_distance, coarea_check, curve_length, extract_zero_level};
use crate::grid::{inner_product, GridSpec, ScalarField};
use crate::projection::{apply_p_eps, apply_q_eps, deriv_p_eps, SmoothingParam};
use crate::shapederiv::verify_relation;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        CheckResult {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn within(name: impl Into<String>, value: f64, target: f64, limit: f64) -> Self {
        Self::at_most(name, (value - target).abs(), limit)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Projection and coarea properties for the disk `R = 0.3` centred in an
/// `n × n` unit grid.
pub fn lemma_check(n: usize) -> Result<CheckReport> {
    let s = GridSpec::unit(n)?;
    let r = 0.3;
    let phi = circle_distance(s, [0.5, 0.5], r);
    let eps = SmoothingParam::default_for(&s);
    let one = ScalarField::constant(s, 1.0);
    let band = inner_product(&deriv_p_eps(&phi, &eps), &one)?;
    let length = curve_length(&extract_zero_level(&phi));
    // the band {-ε < φ ≤ 0} is the annulus R < |x - c| < R + ε
    let annulus = PI * ((r + eps.eps()).powi(2) - r * r) / eps.eps();
    let (left, right) = coarea_check(&phi, -0.05, 0.0)?;

    let line = ScalarField::from_fn(s, |x, _| x - 0.5);
    let zero = (0..s.len()).find(|&k| line.values()[k] == 0.0);
    let (q, p) = match zero {
        Some(k) => (
            apply_q_eps(&line, &eps).values()[k],
            apply_p_eps(&line, &eps).values()[k],
        ),
        None => (f64::NAN, f64::NAN),
    };
    Ok(CheckReport {
        checks: vec![
            CheckResult::at_most("band integral vs annulus (rel)", rel(band, annulus), 0.01),
            CheckResult::at_most(
                "band integral vs curve length (rel)",
                rel(band, length),
                0.02,
            ),
            CheckResult::at_most("coarea sides (rel)", rel(left, right), 0.02),
            CheckResult::within("Q_eps at a zero node", q, 0.5, 0.0),
            CheckResult::within("P_eps at a zero node", p, 1.0, 0.0),
        ],
    })
}

/// Level set derivative against the single-layer shape derivative for the
/// centred disk `R = 0.3` and `h = 1`, over increasing grid sizes.
pub fn shape_check(sizes: &[usize], cfg: &SolverConfig) -> Result<CheckReport> {
    let mut checks = Vec::new();
    let mut prev: Option<f64> = None;
    for (k, &n) in sizes.iter().enumerate() {
        let s = GridSpec::unit(n)?;
        let phi = circle_distance(s, [0.5, 0.5], 0.3);
        let d = verify_relation(
            &phi,
            &ScalarField::constant(s, 1.0),
            &SmoothingParam::default_for(&s),
            cfg,
        )?;
        // the 5% bound applies to the finest grid only
        let limit = if k + 1 == sizes.len() {
            0.05
        } else {
            f64::INFINITY
        };
        checks.push(CheckResult::at_most(
            format!("relation discrepancy n={n}"),
            d,
            limit,
        ));
        if let Some(p) = prev {
            checks.push(CheckResult::at_most(format!("decrease into n={n}"), d, p));
        }
        prev = Some(d);
    }
    Ok(CheckReport { checks })
}

fn order(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Manufactured-solution orders of both elliptic solvers and the symmetry
/// of the forward map on `pairs` random pairs at size `n`.
pub fn adjoint_check(n: usize, pairs: usize, seed: u64, cfg: &SolverConfig) -> Result<CheckReport> {
    let mut checks = Vec::new();
    let mut ed = Vec::new();
    let mut en = Vec::new();
    for m in [33, 65, 129] {
        let s = GridSpec::unit(m)?;
        let exact = ScalarField::from_fn(s, |x, y| (PI * x).sin() * (PI * y).sin());
        let v = solve_dirichlet(&exact.scale(-2.0 * PI * PI), cfg)?;
        ed.push(v.sub(&exact)?.max_abs());
        let exact = ScalarField::from_fn(s, |x, _| (PI * x).cos());
        let v = solve_neumann_helmholtz(&exact.scale(1.0 + PI * PI), cfg)?;
        en.push(v.sub(&exact)?.max_abs());
    }
    for (name, e) in [("dirichlet", &ed), ("neumann-helmholtz", &en)] {
        for (k, p) in order(e).into_iter().enumerate() {
            checks.push(CheckResult::within(
                format!("{name} order, step {}", k + 1),
                p,
                2.0,
                0.3,
            ));
        }
    }

    let s = GridSpec::unit(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a = ScalarField::new(
            s,
            (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;
        let b = ScalarField::new(
            s,
            (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;
        let lhs = inner_product(&forward(&a, cfg)?, &b)?;
        let rhs = inner_product(&a, &forward(&b, cfg)?)?;
        worst = worst.max((lhs - rhs).abs() / (a.norm() * b.norm()));
    }
    checks.push(CheckResult::at_most(
        format!("adjoint symmetry over {pairs} pairs"),
        worst,
        1e-9,
    ));
    Ok(CheckReport { checks })
}
