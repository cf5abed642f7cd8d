//! Zero level set extraction and curve measures.
//!
//! Contours come from marching squares with linear interpolation along cell
//! edges. Nodes whose value is exactly the requested level are nudged by
//! `+1e-12` first, and saddle cells are resolved by the sign of the cell
//! average. Every segment is oriented with `{φ > level}` on its left, so
//! closed curves around an inclusion run counter-clockwise.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{grad_norm, gradient, integral, GridSpec, ScalarField, DEFAULT_GRAD_FLOOR};
use crate::projection::apply_p;

const ZERO_NUDGE: f64 = 1e-12;

/// Number of level samples used by [`coarea_check`].
pub const COAREA_LEVELS: usize = 21;

pub type Point = [f64; 2];

/// One connected piece of a level set.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
    /// Unit normals `-∇φ/|∇φ|`, pointing out of `{φ > level}`.
    pub normals: Vec<Point>,
    /// A closed polyline joins its last vertex back to the first; the first
    /// vertex is not repeated.
    pub closed: bool,
}

impl Polyline {
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }

    /// Segments as vertex index pairs.
    pub fn segment_indices(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |k| (k, (k + 1) % n))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurveSet {
    pub curves: Vec<Polyline>,
}

impl CurveSet {
    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.curves.iter().map(|c| c.points.len()).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.curves.iter().flat_map(|c| c.segments())
    }

    /// One row per vertex: `curve_id,x,y,nx,ny`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "curve_id,x,y,nx,ny")?;
        for (id, c) in self.curves.iter().enumerate() {
            for (p, n) in c.points.iter().zip(&c.normals) {
                writeln!(w, "{id},{},{},{},{}", p[0], p[1], n[0], n[1])?;
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance from `p` to the segment `[a, b]`.
pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

// Edge numbering: horizontal edge (i,j)-(i+1,j) is j*(nx-1)+i, vertical edge
// (i,j)-(i,j+1) follows after all horizontal ones.
struct EdgeIndex {
    nx: usize,
    n_horizontal: usize,
}

impl EdgeIndex {
    fn horizontal(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    fn vertical(&self, i: usize, j: usize) -> usize {
        self.n_horizontal + j * self.nx + i
    }

    fn endpoints(&self, e: usize) -> ((usize, usize), (usize, usize)) {
        if e < self.n_horizontal {
            let (i, j) = (e % (self.nx - 1), e / (self.nx - 1));
            ((i, j), (i + 1, j))
        } else {
            let k = e - self.n_horizontal;
            let (i, j) = (k % self.nx, k / self.nx);
            ((i, j), (i, j + 1))
        }
    }
}

/// Zero level set of `phi`.
pub fn extract_zero_level(phi: &ScalarField) -> CurveSet {
    extract_level(phi, 0.0)
}

/// The `level` isoline of `phi`; normals are `-∇φ/|∇φ|`.
pub fn extract_level(phi: &ScalarField, level: f64) -> CurveSet {
    let s = *phi.spec();
    let (nx, ny) = (s.nx(), s.ny());
    let vals: Vec<f64> = phi
        .values()
        .iter()
        .map(|&v| {
            let d = v - level;
            if d == 0.0 {
                ZERO_NUDGE
            } else {
                d
            }
        })
        .collect();
    let val = |i: usize, j: usize| vals[i + j * nx];
    let edges = EdgeIndex {
        nx,
        n_horizontal: (nx - 1) * ny,
    };

    // directed segments: entry edge -> exit edge
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut has_incoming: HashMap<usize, bool> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corner = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
            // counter-clockwise: bottom, right, top, left
            let side = [
                edges.horizontal(i, j),
                edges.vertical(i + 1, j),
                edges.horizontal(i, j + 1),
                edges.vertical(i, j),
            ];
            let pos: [bool; 4] = corner.map(|v| v > 0.0);
            // start edges go + -> -, end edges go - -> + (walking CCW)
            let mut starts = Vec::with_capacity(2);
            let mut ends = Vec::with_capacity(2);
            for k in 0..4 {
                let (a, b) = (pos[k], pos[(k + 1) % 4]);
                if a && !b {
                    starts.push(k);
                } else if !a && b {
                    ends.push(k);
                }
            }
            let pairs: Vec<(usize, usize)> = match starts.len() {
                0 => Vec::new(),
                1 => vec![(starts[0], ends[0])],
                _ => {
                    let center = corner.iter().sum::<f64>() / 4.0;
                    let find = |k: usize, step: usize| {
                        (1..4)
                            .map(|d| (k + d * step) % 4)
                            .find(|m| ends.contains(m))
                            .expect("saddle has two end edges")
                    };
                    // a positive centre joins the positive corners, so each
                    // start edge links to the next end edge counter-clockwise
                    starts
                        .iter()
                        .map(|&k| (k, if center > 0.0 { find(k, 1) } else { find(k, 3) }))
                        .collect()
                }
            };
            for (a, b) in pairs {
                next.insert(side[a], side[b]);
                has_incoming.insert(side[b], true);
                order.push(side[a]);
            }
        }
    }

    let vertex = |e: usize| -> Point {
        let ((i0, j0), (i1, j1)) = edges.endpoints(e);
        let (v0, v1) = (val(i0, j0), val(i1, j1));
        let t = v0 / (v0 - v1);
        [
            s.x(i0) + t * (s.x(i1) - s.x(i0)),
            s.y(j0) + t * (s.y(j1) - s.y(j0)),
        ]
    };

    let (gx, gy) = gradient(phi);
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut curves = Vec::new();
    let walk = |start: usize, visited: &mut HashMap<usize, bool>| -> (Vec<usize>, bool) {
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut cur = start;
        loop {
            match next.get(&cur) {
                Some(&n) if n == start => return (chain, true),
                Some(&n) => {
                    if visited.contains_key(&n) {
                        return (chain, false);
                    }
                    visited.insert(n, true);
                    chain.push(n);
                    cur = n;
                }
                None => return (chain, false),
            }
        }
    };
    let mut chains = Vec::new();
    // open curves start on the domain boundary, where no segment enters
    for &e in &order {
        if !has_incoming.contains_key(&e) && !visited.contains_key(&e) {
            chains.push(walk(e, &mut visited));
        }
    }
    for &e in &order {
        if !visited.contains_key(&e) {
            chains.push(walk(e, &mut visited));
        }
    }

    for (chain, closed) in chains {
        let mut points: Vec<Point> = Vec::with_capacity(chain.len());
        for e in chain {
            let p = vertex(e);
            if points.last().is_none_or(|&q| dist(p, q) > 1e-14 * s.h()) {
                points.push(p);
            }
        }
        if closed && points.len() > 1 && dist(points[0], *points.last().unwrap()) <= 1e-14 * s.h() {
            points.pop();
        }
        let closed = closed && points.len() >= 3;
        if points.len() < 2 {
            continue;
        }
        let normals = vertex_normals(&points, closed, &gx, &gy);
        curves.push(Polyline {
            points,
            normals,
            closed,
        });
    }
    CurveSet { curves }
}

fn vertex_normals(
    points: &[Point],
    closed: bool,
    gx: &ScalarField,
    gy: &ScalarField,
) -> Vec<Point> {
    let n = points.len();
    (0..n)
        .map(|k| {
            let p = points[k];
            let (dx, dy) = (gx.interpolate(p[0], p[1]), gy.interpolate(p[0], p[1]));
            let g = dx.hypot(dy);
            if g > 0.0 {
                return [-dx / g, -dy / g];
            }
            // flat gradient: use the right-hand normal of the local tangent
            let a = if k > 0 || closed {
                points[(k + n - 1) % n]
            } else {
                p
            };
            let b = if k + 1 < n || closed {
                points[(k + 1) % n]
            } else {
                p
            };
            let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
            let t = tx.hypot(ty);
            [ty / t, -tx / t]
        })
        .collect()
}

/// Total polyline length (one-dimensional Hausdorff measure of the curves).
pub fn curve_length(c: &CurveSet) -> f64 {
    c.curves.iter().map(Polyline::length).sum()
}

/// Midpoint-rule line integral of `v` over the curves, with `v` bilinearly
/// interpolated at segment midpoints.
pub fn curve_integral(c: &CurveSet, v: &ScalarField) -> f64 {
    c.segments()
        .map(|(a, b)| {
            let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            v.interpolate(m[0], m[1]) * dist(a, b)
        })
        .sum()
}

/// Both sides of the coarea identity on the band `a < φ < b`:
/// `(∫_{a<φ<b} |∇φ| dx, ∫_a^b H¹(φ⁻¹(ρ)) dρ)`.
///
/// The right side uses the trapezoid rule over [`COAREA_LEVELS`] equally
/// spaced levels.
pub fn coarea_check(phi: &ScalarField, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a < b) {
        return Err(Error::InvalidParameter(format!(
            "need a < b, got ({a}, {b})"
        )));
    }
    let g = grad_norm(phi, DEFAULT_GRAD_FLOOR)?;
    let band = phi.zip_map(&g, |p, gn| if a < p && p < b { gn } else { 0.0 })?;
    let left = integral(&band);

    let n = COAREA_LEVELS;
    let d = (b - a) / (n - 1) as f64;
    let mut right = 0.0;
    for k in 0..n {
        let rho = a + k as f64 * d;
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        right += w * curve_length(&extract_level(phi, rho));
    }
    Ok((left, right * d))
}

/// Area of `{φ ≥ 0}` by trapezoidal quadrature of the sharp indicator.
pub fn region_area(phi: &ScalarField) -> f64 {
    integral(&apply_p(phi))
}

/// Area of the symmetric difference of `{φ_a ≥ 0}` and `{φ_b ≥ 0}`.
pub fn symmetric_difference_area(phi_a: &ScalarField, phi_b: &ScalarField) -> Result<f64> {
    let x = apply_p(phi_a).zip_map(&apply_p(phi_b), |p, q| (p - q).abs())?;
    Ok(integral(&x))
}

/// Symmetric Hausdorff distance between the vertex sets of two curve sets,
/// measured against the other set's segments.
pub fn hausdorff_distance(a: &CurveSet, b: &CurveSet) -> f64 {
    fn one_sided(a: &CurveSet, b: &CurveSet) -> f64 {
        let segs: Vec<(Point, Point)> = b.segments().collect();
        a.curves
            .iter()
            .flat_map(|c| c.points.iter())
            .map(|&p| {
                segs.iter()
                    .map(|&(s0, s1)| point_segment_distance(p, s0, s1))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    one_sided(a, b).max(one_sided(b, a))
}

/// Signed distance to a circle, positive inside.
pub fn circle_distance(spec: GridSpec, center: Point, radius: f64) -> ScalarField {
    ScalarField::from_fn(spec, |x, y| radius - (x - center[0]).hypot(y - center[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_product;
    use crate::projection::{deriv_p_eps, SmoothingParam};
    use std::f64::consts::PI;

    fn unit(n: usize) -> GridSpec {
        GridSpec::unit(n).unwrap()
    }

    #[test]
    fn constant_field_has_no_contour() {
        let c = extract_zero_level(&ScalarField::constant(unit(17), 1.0));
        assert!(c.is_empty());
        assert_eq!(curve_length(&c), 0.0);
    }

    #[test]
    fn vertical_line() {
        for n in [32, 33] {
            let c = extract_zero_level(&ScalarField::from_fn(unit(n), |x, _| 0.5 - x));
            assert_eq!(c.len(), 1);
            let line = &c.curves[0];
            assert!(!line.closed);
            assert!((line.length() - 1.0).abs() < 1e-10);
            for (p, nrm) in line.points.iter().zip(&line.normals) {
                assert!((p[0] - 0.5).abs() < 1e-10);
                // φ decreases in +x, so -∇φ points to +x
                assert!((nrm[0] - 1.0).abs() < 1e-12 && nrm[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circle_circumference_and_orientation() {
        let s = unit(257);
        let c = extract_zero_level(&circle_distance(s, [0.5, 0.5], 0.3));
        assert_eq!(c.len(), 1);
        let curve = &c.curves[0];
        assert!(curve.closed);
        let exact = 2.0 * PI * 0.3;
        assert!((curve.length() - exact).abs() / exact < 0.01);
        // counter-clockwise: positive signed area
        let area: f64 = curve
            .segments()
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum::<f64>()
            / 2.0;
        assert!((area - PI * 0.09).abs() < 1e-3);
        for (p, n) in curve.points.iter().zip(&curve.normals) {
            assert!(((n[0] * n[0] + n[1] * n[1]) - 1.0).abs() < 1e-12);
            let radial = [(p[0] - 0.5) / 0.3, (p[1] - 0.5) / 0.3];
            assert!(n[0] * radial[0] + n[1] * radial[1] > 0.99);
        }
        for w in curve.points.windows(2) {
            assert!(dist(w[0], w[1]) > 0.0);
        }
    }

    #[test]
    fn unit_square_boundary_length() {
        let c = CurveSet {
            curves: vec![Polyline {
                points: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                normals: vec![[0.0, -1.0]; 4],
                closed: true,
            }],
        };
        assert_eq!(curve_length(&c), 4.0);
        assert_eq!(curve_length(&CurveSet::default()), 0.0);
    }

    #[test]
    fn curve_integrals_over_circle() {
        let s = unit(257);
        let c = extract_zero_level(&circle_distance(s, [0.5, 0.5], 0.3));
        let len = curve_length(&c);
        assert!((curve_integral(&c, &ScalarField::constant(s, 1.0)) - len).abs() < 1e-12);
        assert_eq!(curve_integral(&c, &ScalarField::zeros(s)), 0.0);
        let xi = curve_integral(&c, &ScalarField::from_fn(s, |x, _| x));
        assert!((xi - 0.5 * 2.0 * PI * 0.3).abs() < 0.01 * 0.9425, "{xi}");
        assert!((xi - 0.5 * len).abs() < 1e-6);
    }

    #[test]
    fn saddle_cell_uses_cell_average() {
        let s = unit(3);
        // corners of the lower-left cell: (+,-,+,-) pattern in a checkerboard
        let vals = vec![1.0, -1.0, 1.0, -1.0, 0.5, -1.0, 1.0, -1.0, 1.0];
        let phi = ScalarField::new(s, vals).unwrap();
        let c = extract_zero_level(&phi);
        let total_segments: usize = c.curves.iter().map(|p| p.segments().count()).sum();
        assert!(total_segments >= 4);
        // every vertex lies on a cell edge
        for p in c.curves.iter().flat_map(|c| c.points.iter()) {
            let on_x = (p[0] * 2.0 - (p[0] * 2.0).round()).abs() < 1e-12;
            let on_y = (p[1] * 2.0 - (p[1] * 2.0).round()).abs() < 1e-12;
            assert!(on_x || on_y);
        }
    }

    #[test]
    fn exact_zero_nodes_are_nudged() {
        let s = unit(33);
        let phi = ScalarField::from_fn(s, |x, y| (x - 0.5) * (y + 1.0));
        let c = extract_zero_level(&phi);
        assert_eq!(c.len(), 1);
        assert!((curve_length(&c) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn csv_rows() {
        let c = extract_zero_level(&ScalarField::from_fn(unit(5), |x, _| 0.5 - x));
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("curve_id,x,y,nx,ny"));
        assert_eq!(lines.count(), c.vertex_count());
    }

    #[test]
    fn areas() {
        let s = unit(129);
        assert!((region_area(&ScalarField::constant(s, 1.0)) - 1.0).abs() < 1e-14);
        let disk = circle_distance(s, [0.5, 0.5], 0.3);
        assert!((region_area(&disk) - PI * 0.09).abs() < 2.0 * s.h());
        assert_eq!(symmetric_difference_area(&disk, &disk).unwrap(), 0.0);
        let shifted = circle_distance(s, [0.55, 0.5], 0.3);
        assert!(symmetric_difference_area(&disk, &shifted).unwrap() > 0.0);
    }

    #[test]
    fn coarea_sides_agree_on_outer_annulus() {
        // -0.05 < φ < 0 is the annulus 0.3 < r < 0.35
        let s = unit(257);
        let phi = circle_distance(s, [0.5, 0.5], 0.3);
        let (l, r) = coarea_check(&phi, -0.05, 0.0).unwrap();
        let exact = PI * (0.35f64.powi(2) - 0.09);
        assert!((l - exact).abs() / exact < 0.02, "{l}");
        assert!((r - exact).abs() / exact < 0.02, "{r}");
        assert!((l - r).abs() / r < 0.02);
    }

    #[test]
    fn coarea_empty_band_and_bad_interval() {
        let s = unit(65);
        let phi = circle_distance(s, [0.5, 0.5], 0.3);
        assert_eq!(coarea_check(&phi, 0.5, 0.6).unwrap(), (0.0, 0.0));
        assert!(coarea_check(&phi, 0.1, 0.1).is_err());
    }

    #[test]
    fn coarea_scales_with_level_function() {
        let s = unit(257);
        let phi = circle_distance(s, [0.5, 0.5], 0.3);
        let (l1, r1) = coarea_check(&phi, -0.05, 0.0).unwrap();
        let (l2, r2) = coarea_check(&phi.scale(2.0), -0.1, 0.0).unwrap();
        assert!((l2 / l1 - 2.0).abs() < 0.01);
        assert!((r2 / r1 - 2.0).abs() < 0.01);
    }

    #[test]
    fn level_sets_vary_continuously() {
        let s = unit(129);
        let phi = circle_distance(s, [0.5, 0.5], 0.3);
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=20 {
            let rho = -0.05 + 0.005 * k as f64;
            let c = extract_level(&phi, rho);
            assert_eq!(c.len(), 1);
            let len = curve_length(&c);
            if let Some((r0, l0)) = prev {
                assert!((len - l0).abs() <= 1.1 * 2.0 * PI * (rho - r0).abs());
            }
            prev = Some((rho, len));
        }
    }

    #[test]
    fn band_weight_tracks_inverse_gradient() {
        // φ = 2 * distance: the band (-ε, 0] is half as wide in space, so
        // ∫P'_ε(φ) v ≈ ∮ v/|∇φ|
        let s = unit(257);
        let phi = circle_distance(s, [0.5, 0.5], 0.3).scale(2.0);
        let sp = SmoothingParam::grid_multiple(&s, 6.0).unwrap();
        let v = ScalarField::from_fn(s, |x, y| 1.0 + x * y);
        let lhs = inner_product(&deriv_p_eps(&phi, &sp), &v).unwrap();
        let g = grad_norm(&phi, DEFAULT_GRAD_FLOOR).unwrap();
        let rhs = curve_integral(
            &extract_zero_level(&phi),
            &v.zip_map(&g, |a, b| a / b).unwrap(),
        );
        assert!((lhs - rhs).abs() / rhs < 0.02, "{lhs} vs {rhs}");
    }

    #[test]
    fn hausdorff_of_concentric_circles() {
        let s = unit(129);
        let a = extract_zero_level(&circle_distance(s, [0.5, 0.5], 0.3));
        let b = extract_zero_level(&circle_distance(s, [0.5, 0.5], 0.32));
        let d = hausdorff_distance(&a, &b);
        assert!((d - 0.02).abs() < 1e-3, "{d}");
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
    }
}
