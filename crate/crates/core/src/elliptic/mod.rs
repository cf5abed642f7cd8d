//! Elliptic solves on the node grid.
//!
//! * `F = Δ⁻¹` with homogeneous Dirichlet data: the forward map of the
//!   inverse potential problem. The 5-point Laplacian on interior nodes is
//!   symmetric, so the discrete `F` is self-adjoint under the trapezoidal
//!   pairing and doubles as its own adjoint.
//! * `(I - Δ)⁻¹` with homogeneous Neumann data, imposed with mirrored ghost
//!   nodes. Scaling each row by its trapezoidal weight makes the system
//!   symmetric positive definite.
//!
//! Direct solves use a banded Cholesky factor that is built once per grid
//! and shared between threads.

mod band;
mod cg;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use band::BandCholesky;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    DirectSparse,
    ConjugateGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Relative residual tolerance for iterative solves.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolverMethod::DirectSparse,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn cg(tol: f64, max_iter: usize) -> Self {
        SolverConfig {
            method: SolverMethod::ConjugateGradient,
            tol,
            max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum FactorKey {
    Dirichlet { nx: usize, ny: usize },
    Neumann { nx: usize, ny: usize, h_bits: u64 },
}

type Slot = Arc<Mutex<Option<Arc<BandCholesky>>>>;

fn factor_cache() -> &'static Mutex<HashMap<FactorKey, Slot>> {
    static CACHE: OnceLock<Mutex<HashMap<FactorKey, Slot>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached_factor(
    key: FactorKey,
    build: impl FnOnce() -> Result<BandCholesky>,
) -> Result<Arc<BandCholesky>> {
    let slot = factor_cache()
        .lock()
        .expect("factor cache poisoned")
        .entry(key)
        .or_default()
        .clone();
    let mut guard = slot.lock().expect("factor slot poisoned");
    if let Some(f) = guard.as_ref() {
        return Ok(f.clone());
    }
    let f = Arc::new(build()?);
    *guard = Some(f.clone());
    Ok(f)
}

/// Drops every cached factorization.
pub fn clear_factorization_cache() {
    factor_cache()
        .lock()
        .expect("factor cache poisoned")
        .clear();
}

// Dirichlet problem: unknowns are the interior nodes, p = (i-1) + (j-1)(nx-2),
// and the matrix is h²(-Δ): 4 on the diagonal, -1 to interior neighbours.

fn dirichlet_factor(s: &GridSpec) -> Result<Arc<BandCholesky>> {
    let (mx, my) = (s.nx() - 2, s.ny() - 2);
    cached_factor(
        FactorKey::Dirichlet {
            nx: s.nx(),
            ny: s.ny(),
        },
        || {
            let entries = (0..my).flat_map(move |j| {
                (0..mx).flat_map(move |i| {
                    let p = i + j * mx;
                    let mut e = vec![(p, p, 4.0)];
                    if i > 0 {
                        e.push((p, p - 1, -1.0));
                    }
                    if j > 0 {
                        e.push((p, p - mx, -1.0));
                    }
                    e
                })
            });
            BandCholesky::factor(mx * my, mx, entries)
        },
    )
}

fn dirichlet_apply(mx: usize, my: usize, x: &[f64], y: &mut [f64]) {
    for j in 0..my {
        for i in 0..mx {
            let p = i + j * mx;
            let mut v = 4.0 * x[p];
            if i > 0 {
                v -= x[p - 1];
            }
            if i + 1 < mx {
                v -= x[p + 1];
            }
            if j > 0 {
                v -= x[p - mx];
            }
            if j + 1 < my {
                v -= x[p + mx];
            }
            y[p] = v;
        }
    }
}

/// Solves `Δv = f` on interior nodes with `v = g` on boundary nodes. Only
/// the boundary values of `g` are read.
pub fn solve_poisson(f: &ScalarField, g: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    cfg.validate()?;
    let s = *f.spec();
    s.check_same(g.spec())?;
    let (mx, my) = (s.nx() - 2, s.ny() - 2);
    let h2 = s.h() * s.h();
    let mut rhs = vec![0.0; mx * my];
    for j in 1..s.ny() - 1 {
        for i in 1..s.nx() - 1 {
            let mut b = -h2 * f.at(i, j);
            if i == 1 {
                b += g.at(0, j);
            }
            if i == s.nx() - 2 {
                b += g.at(s.nx() - 1, j);
            }
            if j == 1 {
                b += g.at(i, 0);
            }
            if j == s.ny() - 2 {
                b += g.at(i, s.ny() - 1);
            }
            rhs[(i - 1) + (j - 1) * mx] = b;
        }
    }
    let sol = match cfg.method {
        SolverMethod::DirectSparse => {
            let fac = dirichlet_factor(&s)?;
            debug_assert_eq!(fac.dim(), rhs.len());
            fac.solve_in_place(&mut rhs);
            rhs
        }
        SolverMethod::ConjugateGradient => cg::pcg(
            |x, y| dirichlet_apply(mx, my, x, y),
            &vec![4.0; mx * my],
            &rhs,
            cfg.tol,
            cfg.max_iter,
        )?,
    };
    let mut out = vec![0.0; s.len()];
    for j in 0..s.ny() {
        for i in 0..s.nx() {
            out[s.index(i, j)] = if s.is_boundary(i, j) {
                g.at(i, j)
            } else {
                sol[(i - 1) + (j - 1) * mx]
            };
        }
    }
    ScalarField::new(s, out)
}

/// `Δv = f` on interior nodes, `v = 0` on the boundary.
pub fn solve_dirichlet(f: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    solve_poisson(f, &ScalarField::zeros(*f.spec()), cfg)
}

/// The forward map `u ↦ Δ⁻¹u` with homogeneous Dirichlet data.
pub fn forward(u: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    solve_dirichlet(u, cfg)
}

/// `F'(u)*(F(u) - y) = F(F(u) - y)`; `F` is linear and self-adjoint.
pub fn adjoint_residual(
    u: &ScalarField,
    y: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let r = forward(u, cfg)?.sub(y)?;
    forward(&r, cfg)
}

/// The 5-point Laplacian at interior nodes; boundary entries are zero.
pub fn laplacian_interior(v: &ScalarField) -> ScalarField {
    let s = *v.spec();
    let h2 = s.h() * s.h();
    let mut out = vec![0.0; s.len()];
    for j in 1..s.ny() - 1 {
        for i in 1..s.nx() - 1 {
            out[s.index(i, j)] =
                (v.at(i - 1, j) + v.at(i + 1, j) + v.at(i, j - 1) + v.at(i, j + 1)
                    - 4.0 * v.at(i, j))
                    / h2;
        }
    }
    ScalarField::from_vec(s, out)
}

// Neumann–Helmholtz: (I - Δ)v with ghost nodes mirrored across the boundary,
// so the neighbour inside the domain enters twice on boundary rows.

#[inline]
fn mirrored_neighbours(k: usize, n: usize) -> [(usize, f64); 2] {
    if k == 0 {
        [(1, 2.0), (1, 0.0)]
    } else if k == n - 1 {
        [(n - 2, 2.0), (n - 2, 0.0)]
    } else {
        [(k - 1, 1.0), (k + 1, 1.0)]
    }
}

fn trapezoid_factor(s: &GridSpec, i: usize, j: usize) -> f64 {
    s.weight(i, j) / (s.h() * s.h())
}

/// `(I - Δ)v` with homogeneous Neumann ghost nodes, at every node.
pub fn apply_neumann_helmholtz(v: &ScalarField) -> ScalarField {
    let s = *v.spec();
    let h2 = s.h() * s.h();
    let mut out = vec![0.0; s.len()];
    for j in 0..s.ny() {
        for i in 0..s.nx() {
            let c = v.at(i, j);
            let mut lap = -4.0 * c;
            for (m, w) in mirrored_neighbours(i, s.nx()) {
                lap += w * v.at(m, j);
            }
            for (m, w) in mirrored_neighbours(j, s.ny()) {
                lap += w * v.at(i, m);
            }
            out[s.index(i, j)] = c - lap / h2;
        }
    }
    ScalarField::from_vec(s, out)
}

fn neumann_factor(s: &GridSpec) -> Result<Arc<BandCholesky>> {
    let s = *s;
    cached_factor(
        FactorKey::Neumann {
            nx: s.nx(),
            ny: s.ny(),
            h_bits: s.h().to_bits(),
        },
        || {
            let h2 = s.h() * s.h();
            let (nx, ny) = (s.nx(), s.ny());
            let entries = (0..ny).flat_map(move |j| {
                (0..nx).flat_map(move |i| {
                    let w = trapezoid_factor(&s, i, j);
                    let p = s.index(i, j);
                    let mut e = vec![(p, p, w * (h2 + 4.0))];
                    if i > 0 {
                        let c = if i == nx - 1 { 2.0 } else { 1.0 };
                        e.push((p, p - 1, -w * c));
                    }
                    if j > 0 {
                        let c = if j == ny - 1 { 2.0 } else { 1.0 };
                        e.push((p, p - nx, -w * c));
                    }
                    e
                })
            });
            BandCholesky::factor(nx * ny, nx, entries)
        },
    )
}

fn neumann_sym_apply(s: &GridSpec, x: &[f64], y: &mut [f64]) {
    let h2 = s.h() * s.h();
    let nx = s.nx();
    for j in 0..s.ny() {
        for i in 0..nx {
            let p = s.index(i, j);
            let mut v = (h2 + 4.0) * x[p];
            for (m, w) in mirrored_neighbours(i, nx) {
                v -= w * x[m + j * nx];
            }
            for (m, w) in mirrored_neighbours(j, s.ny()) {
                v -= w * x[i + m * nx];
            }
            y[p] = trapezoid_factor(s, i, j) * v;
        }
    }
}

/// Solves `(I - Δ)v = g` with `∂v/∂n = 0`.
pub fn solve_neumann_helmholtz(g: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    cfg.validate()?;
    let s = *g.spec();
    let h2 = s.h() * s.h();
    let mut rhs = vec![0.0; s.len()];
    let mut diag = vec![0.0; s.len()];
    for j in 0..s.ny() {
        for i in 0..s.nx() {
            let w = trapezoid_factor(&s, i, j);
            rhs[s.index(i, j)] = w * h2 * g.at(i, j);
            diag[s.index(i, j)] = w * (h2 + 4.0);
        }
    }
    let sol = match cfg.method {
        SolverMethod::DirectSparse => {
            neumann_factor(&s)?.solve_in_place(&mut rhs);
            rhs
        }
        SolverMethod::ConjugateGradient => cg::pcg(
            |x, y| neumann_sym_apply(&s, x, y),
            &diag,
            &rhs,
            cfg.tol,
            cfg.max_iter,
        )?,
    };
    ScalarField::new(s, sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, integral};
    use std::f64::consts::PI;

    fn unit(n: usize) -> GridSpec {
        GridSpec::unit(n).unwrap()
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    fn direct() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn dirichlet_zero_rhs() {
        let v = solve_dirichlet(&ScalarField::zeros(unit(17)), &direct()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    fn sine_error(n: usize, cfg: &SolverConfig) -> f64 {
        let s = unit(n);
        let f = ScalarField::from_fn(s, |x, y| -2.0 * PI * PI * (PI * x).sin() * (PI * y).sin());
        let exact = ScalarField::from_fn(s, |x, y| (PI * x).sin() * (PI * y).sin());
        max_diff(&solve_dirichlet(&f, cfg).unwrap(), &exact)
    }

    #[test]
    fn dirichlet_manufactured_second_order() {
        let (e1, e2) = (sine_error(33, &direct()), sine_error(65, &direct()));
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
        // C in e ≤ C h²: the leading truncation term gives C ≈ π⁴/12 ≈ 8.1
        assert!(e2 * 64.0 * 64.0 < 9.0);
    }

    #[test]
    fn cg_matches_direct() {
        let s = unit(33);
        let f = ScalarField::from_fn(s, |x, y| (3.0 * x).exp() * y - x * x);
        let a = solve_dirichlet(&f, &direct()).unwrap();
        let b = solve_dirichlet(&f, &SolverConfig::cg(1e-12, 5000)).unwrap();
        assert!(max_diff(&a, &b) < 1e-10);
        let a = solve_neumann_helmholtz(&f, &direct()).unwrap();
        let b = solve_neumann_helmholtz(&f, &SolverConfig::cg(1e-12, 5000)).unwrap();
        assert!(max_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn cg_non_convergence_is_reported() {
        let s = unit(65);
        let f = ScalarField::constant(s, 1.0);
        let r = solve_dirichlet(&f, &SolverConfig::cg(1e-12, 5));
        assert!(matches!(r, Err(Error::NotConverged { iterations: 5, .. })));
    }

    #[test]
    fn direct_residual_below_tolerance() {
        let s = unit(65);
        let f = ScalarField::from_fn(s, |x, y| (x - 0.3).abs() + y * y);
        let v = solve_dirichlet(&f, &direct()).unwrap();
        let lap = laplacian_interior(&v);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for j in 1..s.ny() - 1 {
            for i in 1..s.nx() - 1 {
                num += (lap.at(i, j) - f.at(i, j)).powi(2);
                den += f.at(i, j).powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-10);
        for i in 0..s.nx() {
            assert_eq!(v.at(i, 0), 0.0);
            assert_eq!(v.at(0, i), 0.0);
        }
    }

    #[test]
    fn forward_aliases_solve_and_respects_sign() {
        let s = unit(129);
        let u = ScalarField::from_fn(s, |x, y| {
            if (x - 0.5).hypot(y - 0.5) <= 0.2 {
                1.0
            } else {
                0.0
            }
        });
        let y = forward(&u, &direct()).unwrap();
        assert_eq!(y, solve_dirichlet(&u, &direct()).unwrap());
        assert!(y.min() < 0.0);
        assert!(y.max() <= 1e-12);
        assert_eq!(
            forward(&ScalarField::zeros(s), &direct())
                .unwrap()
                .max_abs(),
            0.0
        );
    }

    #[test]
    fn adjoint_residual_trivial_cases() {
        let s = unit(33);
        let u = ScalarField::from_fn(s, |x, y| (x * y).sin());
        let y = forward(&u, &direct()).unwrap();
        assert!(adjoint_residual(&u, &y, &direct()).unwrap().max_abs() < 2e-10);

        let data = ScalarField::from_fn(s, |x, y| x - y * y);
        let r = adjoint_residual(&ScalarField::zeros(s), &data, &direct()).unwrap();
        let expect = forward(&data, &direct()).unwrap().scale(-1.0);
        assert!(max_diff(&r, &expect) < 1e-14);
    }

    #[test]
    fn self_adjoint_under_trapezoid_pairing() {
        let s = unit(33);
        let a = ScalarField::from_fn(s, |x, y| (7.0 * x).sin() + y);
        let b = ScalarField::from_fn(s, |x, y| (x * x - y).cos());
        let fa = forward(&a, &direct()).unwrap();
        let fb = forward(&b, &direct()).unwrap();
        let l = inner_product(&fa, &b).unwrap();
        let r = inner_product(&a, &fb).unwrap();
        assert!((l - r).abs() <= 1e-9 * a.norm() * b.norm());
    }

    #[test]
    fn neumann_constant_and_cosine() {
        let s = unit(33);
        let v = solve_neumann_helmholtz(&ScalarField::constant(s, 2.5), &direct()).unwrap();
        assert!(v.values().iter().all(|x| (x - 2.5).abs() < 1e-12));

        let err = |n: usize| {
            let s = unit(n);
            let g = ScalarField::from_fn(s, |x, _| (1.0 + PI * PI) * (PI * x).cos());
            let exact = ScalarField::from_fn(s, |x, _| (PI * x).cos());
            max_diff(&solve_neumann_helmholtz(&g, &direct()).unwrap(), &exact)
        };
        let ratio = err(33) / err(65);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn neumann_preserves_zero_mean() {
        let s = unit(65);
        let g = ScalarField::from_fn(s, |x, y| (2.0 * PI * x).cos() + (PI * y).cos() * x);
        let g = g
            .map(|v| v)
            .axpy(-integral(&g), &ScalarField::constant(s, 1.0))
            .unwrap();
        assert!(integral(&g).abs() < 1e-14);
        let v = solve_neumann_helmholtz(&g, &direct()).unwrap();
        assert!(integral(&v).abs() < 1e-12, "{}", integral(&v));
    }

    #[test]
    fn neumann_positive_and_bounded() {
        let s = unit(33);
        let g = ScalarField::from_fn(s, |x, y| if x < 0.3 && y > 0.6 { 3.0 } else { 0.0 });
        let v = solve_neumann_helmholtz(&g, &direct()).unwrap();
        assert!(v.min() >= 0.0);
        assert!(v.max() <= g.max());
    }

    #[test]
    fn apply_inverts_solve() {
        let s = unit(33);
        let g = ScalarField::from_fn(s, |x, y| x.exp() - y);
        let v = solve_neumann_helmholtz(&g, &direct()).unwrap();
        assert!(max_diff(&apply_neumann_helmholtz(&v), &g) < 1e-9);
    }

    #[test]
    fn poisson_with_linear_boundary_data_is_exact() {
        let s = unit(33);
        let g = ScalarField::from_fn(s, |x, y| 2.0 * x - y + 0.5);
        let v = solve_poisson(&ScalarField::zeros(s), &g, &direct()).unwrap();
        assert!(max_diff(&v, &g) < 1e-12);
    }
}
