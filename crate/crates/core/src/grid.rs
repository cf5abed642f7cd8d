//! Uniform node-centered grids on a square domain and the discrete operators
//! every other module builds on.
//!
//! Nodes are stored row-major with `x` varying fastest: node `(i, j)` sits at
//! `(x0 + i h, y0 + j h)` and lives at flat index `i + j * nx`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound applied to `|∇φ|` before dividing by it.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    h: f64,
}

impl GridSpec {
    /// `n × n` nodes on the unit square, `h = 1 / (n - 1)`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, [0.0, 1.0], [0.0, 1.0])
    }

    /// Grid over `[x.0, x.1] × [y.0, y.1]`. Both axes must end up with the
    /// same spacing.
    pub fn new(nx: usize, ny: usize, x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per axis, got {nx}x{ny}"
            )));
        }
        let hx = (x[1] - x[0]) / (nx - 1) as f64;
        let hy = (y[1] - y[0]) / (ny - 1) as f64;
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "degenerate bounds {x:?} x {y:?}"
            )));
        }
        if ((hx - hy) / hx).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "spacing differs between axes ({hx} vs {hy})"
            )));
        }
        Ok(GridSpec {
            nx,
            ny,
            x0: x[0],
            y0: y[0],
            h: hx,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_bounds(&self) -> [f64; 2] {
        [self.x0, self.x0 + (self.nx - 1) as f64 * self.h]
    }

    pub fn y_bounds(&self) -> [f64; 2] {
        [self.y0, self.y0 + (self.ny - 1) as f64 * self.h]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.nx
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.h
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Trapezoidal quadrature weight of node `(i, j)`, including `h²`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.h * self.h
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} grid (h = {})", self.nx, self.ny, self.h)
    }
}

/// Real values sampled at the nodes of a [`GridSpec`]. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {}",
                values.len(),
                spec
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                i: k % spec.nx,
                j: k / spec.nx,
            });
        }
        Ok(ScalarField { spec, values })
    }

    /// Internal constructor for values that are finite by construction.
    pub(crate) fn from_vec(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        ScalarField { spec, values }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        assert!(c.is_finite());
        ScalarField {
            spec,
            values: vec![c; spec.len()],
        }
    }

    /// Samples `f(x, y)` at every node. Panics if `f` returns a non-finite value.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            let y = spec.y(j);
            for i in 0..spec.nx {
                let v = f(spec.x(i), y);
                assert!(v.is_finite(), "non-finite sample at ({i}, {j})");
                values.push(v);
            }
        }
        ScalarField { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.spec.check_same(&other.spec)?;
        Ok(Self::from_vec(
            self.spec,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |s, o| s + a * o)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L² norm under the trapezoidal pairing.
    pub fn norm(&self) -> f64 {
        inner_product(self, self)
            .expect("same grid")
            .max(0.0)
            .sqrt()
    }

    /// Bilinear interpolation; points outside the domain are clamped onto it.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let s = &self.spec;
        let fx = ((x - s.x0) / s.h).clamp(0.0, (s.nx - 1) as f64);
        let fy = ((y - s.y0) / s.h).clamp(0.0, (s.ny - 1) as f64);
        let i = (fx.floor() as usize).min(s.nx - 2);
        let j = (fy.floor() as usize).min(s.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }
}

/// Second-order first derivative along one grid line.
///
/// `get(k)` returns the k-th sample; interior nodes use central differences
/// and the two ends use the one-sided three-point formula.
#[inline]
fn diff_line(get: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h)
    } else {
        (get(k + 1) - get(k - 1)) / (2.0 * h)
    }
}

/// `(∂f/∂x, ∂f/∂y)` with central differences inside and one-sided
/// second-order stencils on the boundary.
pub fn gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let s = *f.spec();
    let mut gx = vec![0.0; s.len()];
    let mut gy = vec![0.0; s.len()];
    for j in 0..s.ny {
        for i in 0..s.nx {
            let k = s.index(i, j);
            gx[k] = diff_line(|m| f.at(m, j), i, s.nx, s.h);
            gy[k] = diff_line(|m| f.at(i, m), j, s.ny, s.h);
        }
    }
    (ScalarField::from_vec(s, gx), ScalarField::from_vec(s, gy))
}

/// `max(|∇f|, floor)` pointwise.
pub fn grad_norm(f: &ScalarField, floor: f64) -> Result<ScalarField> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gradient floor must be positive, got {floor}"
        )));
    }
    let (gx, gy) = gradient(f);
    gx.zip_map(&gy, |a, b| a.hypot(b).max(floor))
}

/// Trapezoidal approximation of `∫_Ω f g`.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.spec.check_same(&g.spec)?;
    let s = f.spec;
    let mut sum = 0.0;
    for j in 0..s.ny {
        let row = j * s.nx;
        for i in 0..s.nx {
            sum += s.weight(i, j) * (f.values[row + i] * g.values[row + i]);
        }
    }
    Ok(sum)
}

/// Trapezoidal approximation of `∫_Ω f`.
pub fn integral(f: &ScalarField) -> f64 {
    let s = f.spec;
    let mut sum = 0.0;
    for j in 0..s.ny {
        for i in 0..s.nx {
            sum += s.weight(i, j) * f.at(i, j);
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_err(a: &ScalarField, b: &ScalarField) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn rejects_tiny_and_anisotropic_grids() {
        assert!(GridSpec::unit(2).is_err());
        assert!(GridSpec::new(5, 9, [0.0, 1.0], [0.0, 1.0]).is_err());
        assert!(GridSpec::new(5, 9, [0.0, 1.0], [0.0, 2.0]).is_ok());
    }

    #[test]
    fn rejects_non_finite_values() {
        let s = GridSpec::unit(3).unwrap();
        let mut v = vec![0.0; 9];
        v[5] = f64::NAN;
        assert!(matches!(
            ScalarField::new(s, v),
            Err(Error::NonFinite { i: 2, j: 1 })
        ));
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let s = GridSpec::unit(17).unwrap();
        let (gx, gy) = gradient(&ScalarField::constant(s, 3.5));
        assert_eq!(gx.max_abs(), 0.0);
        assert_eq!(gy.max_abs(), 0.0);
    }

    #[test]
    fn gradient_exact_on_linear_fields() {
        let s = GridSpec::unit(17).unwrap();
        let (gx, gy) = gradient(&ScalarField::from_fn(s, |x, _| x));
        assert!(gx.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(gy.max_abs() < 1e-12);
    }

    fn sin_derivative_error(n: usize) -> f64 {
        let s = GridSpec::unit(n).unwrap();
        let (gx, _) = gradient(&ScalarField::from_fn(s, |x, _| (PI * x).sin()));
        let exact = ScalarField::from_fn(s, |x, _| PI * (PI * x).cos());
        max_err(&gx, &exact)
    }

    #[test]
    fn gradient_converges_second_order() {
        let e1 = sin_derivative_error(65);
        let e2 = sin_derivative_error(129);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        // error constant C in e <= C h² at 129²
        let h = 1.0 / 128.0;
        assert!(e2 / (h * h) < 2.0 * PI.powi(3));
    }

    #[test]
    fn grad_norm_cases() {
        let s = GridSpec::unit(33).unwrap();
        let g = grad_norm(&ScalarField::constant(s, 1.0), 1e-6).unwrap();
        assert!(g.values().iter().all(|&v| v == 1e-6));

        let g = grad_norm(&ScalarField::from_fn(s, |x, y| 3.0 * x + 4.0 * y), 1e-6).unwrap();
        assert!(g.values().iter().all(|v| (v - 5.0).abs() < 1e-12));

        assert!(grad_norm(&g, 0.0).is_err());
    }

    #[test]
    fn grad_norm_of_distance_is_one_away_from_center() {
        let s = GridSpec::unit(65).unwrap();
        let phi = ScalarField::from_fn(s, |x, y| 0.3 - (x - 0.5).hypot(y - 0.5));
        let g = grad_norm(&phi, DEFAULT_GRAD_FLOOR).unwrap();
        for j in 0..s.ny() {
            for i in 0..s.nx() {
                let r = (s.x(i) - 0.5).hypot(s.y(j) - 0.5);
                if r > 3.0 * s.h() {
                    assert!((g.at(i, j) - 1.0).abs() <= 2.0 * s.h());
                }
            }
        }
    }

    #[test]
    fn inner_product_cases() {
        let s = GridSpec::unit(65).unwrap();
        let one = ScalarField::constant(s, 1.0);
        assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(inner_product(&one, &ScalarField::zeros(s)).unwrap(), 0.0);

        let f = ScalarField::from_fn(s, |x, y| (PI * x).sin() * (PI * y).sin());
        let v = inner_product(&f, &f).unwrap();
        let h = s.h();
        assert!((v - 0.25).abs() < h * h, "{v}");

        let other = ScalarField::zeros(GridSpec::unit(33).unwrap());
        assert!(inner_product(&one, &other).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_bilinear() {
        let s = GridSpec::unit(9).unwrap();
        let f = ScalarField::from_fn(s, |x, y| 1.0 + 2.0 * x - y + 3.0 * x * y);
        for &(x, y) in &[(0.13, 0.77), (1.0, 1.0), (0.0, 0.5), (0.5, 0.0)] {
            let exact = 1.0 + 2.0 * x - y + 3.0 * x * y;
            assert!((f.interpolate(x, y) - exact).abs() < 1e-13);
        }
    }

    fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n * n)
    }

    proptest! {
        #[test]
        fn gradient_is_linear(a in field(7), b in field(7), ca in -3.0f64..3.0, cb in -3.0f64..3.0) {
            let s = GridSpec::unit(7).unwrap();
            let fa = ScalarField::new(s, a).unwrap();
            let fb = ScalarField::new(s, b).unwrap();
            let comb = fa.scale(ca).axpy(cb, &fb).unwrap();
            let (cx, cy) = gradient(&comb);
            let (ax, ay) = gradient(&fa);
            let (bx, by) = gradient(&fb);
            let ex = ax.scale(ca).axpy(cb, &bx).unwrap();
            let ey = ay.scale(ca).axpy(cb, &by).unwrap();
            prop_assert!(max_err(&cx, &ex) < 1e-10);
            prop_assert!(max_err(&cy, &ey) < 1e-10);
        }

        #[test]
        fn inner_product_symmetric_positive(a in field(6), b in field(6)) {
            let s = GridSpec::unit(6).unwrap();
            let fa = ScalarField::new(s, a).unwrap();
            let fb = ScalarField::new(s, b).unwrap();
            let ab = inner_product(&fa, &fb).unwrap();
            let ba = inner_product(&fb, &fa).unwrap();
            prop_assert_eq!(ab, ba);
            if fa.max_abs() > 0.0 {
                prop_assert!(inner_product(&fa, &fa).unwrap() > 0.0);
            }
        }
    }
}
