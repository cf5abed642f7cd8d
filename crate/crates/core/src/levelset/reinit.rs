use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{extract_zero_level, point_segment_distance, Point};
use crate::grid::ScalarField;

/// Signed distance to the current zero level set, keeping the sign of `phi`
/// at every node.
///
/// Distances are exact to the marching-squares polyline: every node is
/// measured against every segment.
pub fn reinitialize(phi: &ScalarField) -> Result<ScalarField> {
    let curves = extract_zero_level(phi);
    let segs: Vec<(Point, Point)> = curves.segments().collect();
    if segs.is_empty() {
        return Err(Error::EmptyZeroLevel);
    }
    let s = *phi.spec();
    let values: Vec<f64> = phi
        .values()
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            let p = [s.x(k % s.nx()), s.y(k / s.nx())];
            let d = segs
                .iter()
                .map(|&(a, b)| point_segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            if v >= 0.0 {
                d
            } else {
                -d
            }
        })
        .collect();
    ScalarField::new(s, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{circle_distance, hausdorff_distance};
    use crate::grid::{grad_norm, GridSpec};

    fn setup() -> (GridSpec, ScalarField) {
        let s = GridSpec::unit(129).unwrap();
        (s, circle_distance(s, [0.47, 0.52], 0.28))
    }

    #[test]
    fn distance_is_a_fixed_point() {
        let (s, sd) = setup();
        let r = reinitialize(&sd).unwrap();
        assert!(r.sub(&sd).unwrap().max_abs() <= 2.0 * s.h());
    }

    #[test]
    fn steep_slope_is_normalized() {
        let (s, sd) = setup();
        let r = reinitialize(&sd.scale(5.0)).unwrap();
        assert!(r.sub(&sd).unwrap().max_abs() <= 2.0 * s.h());
    }

    #[test]
    fn sign_pattern_and_contour_survive() {
        let (s, sd) = setup();
        // distorted slope with the same zero set
        let phi = sd
            .zip_map(
                &ScalarField::from_fn(s, |x, y| 1.0 + 2.0 * x * y),
                |a, b| a * b,
            )
            .unwrap();
        let r = reinitialize(&phi).unwrap();
        for (a, b) in phi.values().iter().zip(r.values()) {
            if a.abs() > 2.0 * s.h() {
                assert_eq!(a.signum(), b.signum());
            }
        }
        let before = extract_zero_level(&phi);
        let after = extract_zero_level(&r);
        assert!(hausdorff_distance(&before, &after) <= 2.0 * s.h());
    }

    #[test]
    fn slope_near_one_around_interface() {
        let (s, sd) = setup();
        let r = reinitialize(&sd.scale(3.0)).unwrap();
        let g = grad_norm(&r, 1e-6).unwrap();
        for j in 1..s.ny() - 1 {
            for i in 1..s.nx() - 1 {
                // the medial axis (circle centre) is a kink of any distance function
                if r.at(i, j).abs() < 0.15 {
                    let v = g.at(i, j);
                    assert!((0.8..=1.2).contains(&v), "{v} at ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn empty_zero_set_is_an_error() {
        let s = GridSpec::unit(17).unwrap();
        assert!(matches!(
            reinitialize(&ScalarField::constant(s, -1.0)),
            Err(Error::EmptyZeroLevel)
        ));
    }
}
