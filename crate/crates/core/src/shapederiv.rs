//! Shape derivative of the forward map and its level set counterpart.
//!
//! For a normal boundary displacement with density `q` on the zero level
//! set, the shape derivative of `F = Δ⁻¹` solves a transmission problem:
//! harmonic off the curve, continuous across it, normal derivative jumping
//! by `q`, zero on `∂Ω`. It is built as `v = v₁ + v₂`: `v₁` is the single
//! layer potential of `q` with kernel `γ(x, z) = (1/2π) ln(1/|x - z|)` and
//! `v₂` is the harmonic function that cancels `v₁` on the boundary.
//!
//! The level set derivative is `F(P'_ε(φ) h)`. With `q = h/|∇φ|` sampled on
//! the zero level set the two fields agree up to discretization error.

use std::f64::consts::{E, PI};

use rayon::prelude::*;

use crate::elliptic::{solve_dirichlet, solve_poisson, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{dist, extract_zero_level, CurveSet, Point};
use crate::grid::{grad_norm, GridSpec, ScalarField, DEFAULT_GRAD_FLOOR};
use crate::projection::{deriv_p_eps, SmoothingParam};

/// Maximum recursive halvings of a segment close to a target point.
pub const MAX_SPLIT_DEPTH: u32 = 6;

/// Scalar density on the vertices of a [`CurveSet`]: `values[c][k]` belongs
/// to vertex `k` of curve `c`.
#[derive(Clone, Debug)]
pub struct BoundaryDensity<'a> {
    curve: &'a CurveSet,
    values: Vec<Vec<f64>>,
}

impl<'a> BoundaryDensity<'a> {
    pub fn new(curve: &'a CurveSet, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != curve.len()
            || values
                .iter()
                .zip(&curve.curves)
                .any(|(v, c)| v.len() != c.points.len())
        {
            return Err(Error::InvalidParameter(
                "density needs exactly one value per curve vertex".into(),
            ));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("density must be finite".into()));
        }
        Ok(BoundaryDensity { curve, values })
    }

    pub fn constant(curve: &'a CurveSet, q: f64) -> Self {
        let values = curve
            .curves
            .iter()
            .map(|c| vec![q; c.points.len()])
            .collect();
        BoundaryDensity { curve, values }
    }

    /// Bilinear samples of `field` at the curve vertices.
    pub fn sample(curve: &'a CurveSet, field: &ScalarField) -> Self {
        let values = curve
            .curves
            .iter()
            .map(|c| {
                c.points
                    .iter()
                    .map(|p| field.interpolate(p[0], p[1]))
                    .collect()
            })
            .collect();
        BoundaryDensity { curve, values }
    }

    /// Normal displacement `h/|∇φ|` induced by perturbing the level set
    /// function `φ` by `h`.
    pub fn from_level_set_perturbation(
        curve: &'a CurveSet,
        phi: &ScalarField,
        h: &ScalarField,
    ) -> Result<Self> {
        let g = grad_norm(phi, DEFAULT_GRAD_FLOOR)?;
        let values = curve
            .curves
            .iter()
            .map(|c| {
                c.points
                    .iter()
                    .map(|p| h.interpolate(p[0], p[1]) / g.interpolate(p[0], p[1]))
                    .collect()
            })
            .collect();
        Self::new(curve, values)
    }

    pub fn curve(&self) -> &'a CurveSet {
        self.curve
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|&v| v == 0.0)
    }
}

/// A boundary displacement field `h̃ = h_n n + h_τ τ` in the local frame of
/// the curve, with `τ = (-n_y, n_x)`.
#[derive(Clone, Debug)]
pub struct BoundaryDisplacement<'a> {
    curve: &'a CurveSet,
    normal: Vec<Vec<f64>>,
    tangential: Vec<Vec<f64>>,
}

impl<'a> BoundaryDisplacement<'a> {
    pub fn new(
        curve: &'a CurveSet,
        normal: Vec<Vec<f64>>,
        tangential: Vec<Vec<f64>>,
    ) -> Result<Self> {
        BoundaryDensity::new(curve, normal.clone())?;
        BoundaryDensity::new(curve, tangential.clone())?;
        Ok(BoundaryDisplacement {
            curve,
            normal,
            tangential,
        })
    }

    /// Decomposes Cartesian vectors given per vertex into the local frame.
    pub fn from_cartesian(curve: &'a CurveSet, vectors: &[Vec<Point>]) -> Result<Self> {
        if vectors.len() != curve.len() {
            return Err(Error::InvalidParameter("one vector list per curve".into()));
        }
        let mut normal = Vec::with_capacity(curve.len());
        let mut tangential = Vec::with_capacity(curve.len());
        for (c, vs) in curve.curves.iter().zip(vectors) {
            if vs.len() != c.normals.len() {
                return Err(Error::InvalidParameter("one vector per vertex".into()));
            }
            normal.push(
                c.normals
                    .iter()
                    .zip(vs)
                    .map(|(n, v)| n[0] * v[0] + n[1] * v[1])
                    .collect(),
            );
            tangential.push(
                c.normals
                    .iter()
                    .zip(vs)
                    .map(|(n, v)| -n[1] * v[0] + n[0] * v[1])
                    .collect(),
            );
        }
        Self::new(curve, normal, tangential)
    }

    pub fn tangential(&self) -> &[Vec<f64>] {
        &self.tangential
    }

    /// `n · h̃`; the tangential part is discarded.
    pub fn normal_density(&self) -> BoundaryDensity<'a> {
        BoundaryDensity {
            curve: self.curve,
            values: self.normal.clone(),
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

// Accumulates ∫ q(z) ln|x - z| dz over [a, b], q linear along the segment.
fn segment_log_integral(
    x: Point,
    a: Point,
    b: Point,
    qa: f64,
    qb: f64,
    depth: u32,
    acc: &mut CompensatedSum,
) {
    let len = dist(a, b);
    if len == 0.0 {
        return;
    }
    let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let qm = (qa + qb) / 2.0;
    let d = dist(x, m);
    if d < len && depth < MAX_SPLIT_DEPTH {
        segment_log_integral(x, a, m, qa, qm, depth + 1, acc);
        segment_log_integral(x, m, b, qm, qb, depth + 1, acc);
        return;
    }
    // a target sitting on the piece gets the mean of ln|s| over it, which
    // equals ln of len/(2e)
    let d = d.max(len / (2.0 * E));
    acc.add(qm * d.ln() * len);
}

/// `v₁(x) = -∫ q(z) γ(x, z) dz` at a single point.
pub fn single_layer_at(q: &BoundaryDensity, x: Point) -> f64 {
    let mut acc = CompensatedSum::default();
    for (c, vals) in q.curve.curves.iter().zip(&q.values) {
        for (i, k) in c.segment_indices() {
            segment_log_integral(x, c.points[i], c.points[k], vals[i], vals[k], 0, &mut acc);
        }
    }
    acc.value() / (2.0 * PI)
}

/// Single layer potential of `q` at every node of `targets`. Nodes are
/// evaluated in parallel; each node's sum runs in a fixed order, so the
/// result does not depend on the thread count.
pub fn single_layer_potential(q: &BoundaryDensity, targets: &GridSpec) -> Result<ScalarField> {
    if q.curve.is_empty() {
        return Err(Error::EmptyZeroLevel);
    }
    let s = *targets;
    let values: Vec<f64> = (0..s.len())
        .into_par_iter()
        .map(|k| single_layer_at(q, [s.x(k % s.nx()), s.y(k / s.nx())]))
        .collect();
    ScalarField::new(s, values)
}

/// Harmonic `v₂` with `v₂ = -v₁` on `∂Ω`.
pub fn harmonic_correction(v1: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    solve_poisson(&ScalarField::zeros(*v1.spec()), &v1.scale(-1.0), cfg)
}

/// Shape derivative `F'(D)(h̃)` for the normal displacement density `q`,
/// assembled as single layer potential plus harmonic correction.
pub fn shape_derivative(
    q: &BoundaryDensity,
    targets: &GridSpec,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    if q.is_zero() {
        return Ok(ScalarField::zeros(*targets));
    }
    let v1 = single_layer_potential(q, targets)?;
    let v2 = harmonic_correction(&v1, cfg)?;
    v1.add(&v2)
}

/// Level set derivative `F'(u) P'_ε(φ) h = F(P'_ε(φ) h)`.
pub fn level_set_derivative(
    phi: &ScalarField,
    h: &ScalarField,
    eps: &SmoothingParam,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    solve_dirichlet(&deriv_p_eps(phi, eps).mul(h)?, cfg)
}

/// Both derivative fields for a level set perturbation `h`.
#[derive(Clone, Debug)]
pub struct RelationFields {
    pub shape: ScalarField,
    pub level_set: ScalarField,
    pub curve: CurveSet,
}

impl RelationFields {
    /// `‖shape - level_set‖ / ‖level_set‖`, zero when both vanish.
    pub fn discrepancy(&self) -> f64 {
        let diff = self.shape.sub(&self.level_set).expect("same grid").norm();
        let base = self.level_set.norm();
        if base == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / base
        }
    }
}

pub fn relation_fields(
    phi: &ScalarField,
    h: &ScalarField,
    eps: &SmoothingParam,
    cfg: &SolverConfig,
) -> Result<RelationFields> {
    phi.spec().check_same(h.spec())?;
    let curve = extract_zero_level(phi);
    if curve.is_empty() {
        return Err(Error::EmptyZeroLevel);
    }
    let level_set = level_set_derivative(phi, h, eps, cfg)?;
    let shape = {
        let q = BoundaryDensity::from_level_set_perturbation(&curve, phi, h)?;
        shape_derivative(&q, phi.spec(), cfg)?
    };
    Ok(RelationFields {
        shape,
        level_set,
        curve,
    })
}

/// Relative L² discrepancy between the shape derivative for the density
/// `h/|∇φ|` and the level set derivative in direction `h`.
pub fn verify_relation(
    phi: &ScalarField,
    h: &ScalarField,
    eps: &SmoothingParam,
    cfg: &SolverConfig,
) -> Result<f64> {
    Ok(relation_fields(phi, h, eps, cfg)?.discrepancy())
}
