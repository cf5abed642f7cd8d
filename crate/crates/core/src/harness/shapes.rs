use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::{GridSpec, ScalarField};

/// An inclusion primitive, positive inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    Disk {
        center: Point,
        radius: f64,
    },
    /// `rotation` in radians, counter-clockwise, applied to the first semi-axis.
    Ellipse {
        center: Point,
        radii: [f64; 2],
        #[serde(default)]
        rotation: f64,
    },
}

impl Shape {
    pub fn disk(center: Point, radius: f64) -> Self {
        Shape::Disk { center, radius }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Ellipse { radii, .. } => std::f64::consts::PI * radii[0] * radii[1],
        }
    }

    /// Signed Euclidean distance to the boundary, positive inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match *self {
            Shape::Disk { center, radius } => radius - (p[0] - center[0]).hypot(p[1] - center[1]),
            Shape::Ellipse {
                center,
                radii,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                let inside = (u / radii[0]).powi(2) + (v / radii[1]).powi(2) <= 1.0;
                let d = ellipse_distance(radii[0], radii[1], u, v);
                if inside {
                    d
                } else {
                    -d
                }
            }
        }
    }

    fn bounding_box(&self) -> [f64; 4] {
        match *self {
            Shape::Disk { center, radius } => [
                center[0] - radius,
                center[0] + radius,
                center[1] - radius,
                center[1] + radius,
            ],
            Shape::Ellipse {
                center,
                radii,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                let ex = (radii[0] * c).hypot(radii[1] * s);
                let ey = (radii[0] * s).hypot(radii[1] * c);
                [
                    center[0] - ex,
                    center[0] + ex,
                    center[1] - ey,
                    center[1] + ey,
                ]
            }
        }
    }

    /// Fails unless the shape sits inside the grid with `margin` to spare.
    pub fn check_inside(&self, spec: &GridSpec, margin: f64) -> Result<()> {
        let ok_params = match self {
            Shape::Disk { center, radius } => center.iter().all(|v| v.is_finite()) && *radius > 0.0,
            Shape::Ellipse {
                center,
                radii,
                rotation,
            } => {
                center.iter().all(|v| v.is_finite())
                    && radii.iter().all(|r| *r > 0.0)
                    && rotation.is_finite()
            }
        };
        if !ok_params {
            return Err(Error::Config(format!("degenerate shape {self:?}")));
        }
        let [x0, x1, y0, y1] = self.bounding_box();
        let [gx0, gx1] = spec.x_bounds();
        let [gy0, gy1] = spec.y_bounds();
        if x0 < gx0 + margin || x1 > gx1 - margin || y0 < gy0 + margin || y1 > gy1 - margin {
            return Err(Error::Config(format!(
                "shape {self:?} is not inside the domain with margin {margin}"
            )));
        }
        Ok(())
    }
}

/// Signed distance of a union of shapes.
pub fn union_distance(spec: GridSpec, shapes: &[Shape]) -> Result<ScalarField> {
    if shapes.is_empty() {
        return Err(Error::Config("at least one shape is required".into()));
    }
    Ok(ScalarField::from_fn(spec, |x, y| {
        shapes
            .iter()
            .map(|s| s.signed_distance([x, y]))
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Unsigned distance from `(u, v)` to the axis-aligned ellipse with
/// semi-axes `a`, `b` (Eberly's bisection on the Lagrange parameter).
fn ellipse_distance(a: f64, b: f64, u: f64, v: f64) -> f64 {
    let (e0, e1, y0, y1) = if a >= b {
        (a, b, u.abs(), v.abs())
    } else {
        (b, a, v.abs(), u.abs())
    };
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let sbar = root(r0, z0, z1, g);
            let x0 = r0 * y0 / (sbar + r0);
            let x1 = y1 / (sbar + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xde0 = numer / denom;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let g = (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_ellipse_is_a_disk() {
        let e = Shape::Ellipse {
            center: [0.4, 0.55],
            radii: [0.2, 0.2],
            rotation: 0.7,
        };
        let d = Shape::disk([0.4, 0.55], 0.2);
        for k in 0..50 {
            let p = [0.02 * k as f64, 1.0 - 0.017 * k as f64];
            assert!((e.signed_distance(p) - d.signed_distance(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_axis_points() {
        let e = Shape::Ellipse {
            center: [0.0, 0.0],
            radii: [0.3, 0.1],
            rotation: 0.0,
        };
        assert!((e.signed_distance([0.5, 0.0]) + 0.2).abs() < 1e-14);
        assert!((e.signed_distance([0.0, 0.4]) + 0.3).abs() < 1e-14);
        assert!((e.signed_distance([0.0, 0.05]) - 0.05).abs() < 1e-14);
        // inside near the flat side the nearest point is on the minor axis
        assert!(
            (e.signed_distance([0.01, 0.0]) - 0.1 * (1.0 - (0.01f64 / 0.3).powi(2)).sqrt()).abs()
                < 1e-3
        );
    }

    #[test]
    fn ellipse_distance_matches_sampled_boundary() {
        let (a, b) = (0.25, 0.12);
        let boundary: Vec<Point> = (0..20000)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 20000.0;
                [a * t.cos(), b * t.sin()]
            })
            .collect();
        for p in [
            [0.3, 0.2],
            [-0.1, 0.05],
            [0.02, -0.01],
            [-0.4, -0.3],
            [0.2, 0.0],
        ] {
            let brute = boundary
                .iter()
                .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min);
            assert!(
                (ellipse_distance(a, b, p[0], p[1]) - brute).abs() < 1e-4,
                "{p:?}"
            );
        }
    }

    #[test]
    fn rotation_moves_the_long_axis() {
        let e = Shape::Ellipse {
            center: [0.5, 0.5],
            radii: [0.3, 0.1],
            rotation: std::f64::consts::FRAC_PI_2,
        };
        assert!(e.signed_distance([0.5, 0.75]) > 0.0);
        assert!(e.signed_distance([0.75, 0.5]) < 0.0);
    }

    #[test]
    fn margin_is_enforced() {
        let s = GridSpec::unit(65).unwrap();
        let m = 4.0 * s.h();
        assert!(Shape::disk([0.5, 0.5], 0.3).check_inside(&s, m).is_ok());
        assert!(Shape::disk([0.5, 0.5], 0.49).check_inside(&s, m).is_err());
        assert!(Shape::disk([0.5, 0.5], -0.1).check_inside(&s, m).is_err());
        assert!(union_distance(s, &[]).is_err());
    }
}
