//! Divergence-form periodic elliptic solver: find zero-mean `u` with
//!
//! ```text
//!     ∇·(ρ ∇u) = f,        ∫ f dx = 0,   ρ > 0,
//! ```
//!
//! the engine behind the coefficient recursion and the continuity-equation
//! velocity potential.
//!
//! In one dimension the equation integrates twice in closed form: `ρ u' = F + C`
//! with `F` the zero-mean antiderivative of `f` and `C` fixed by periodicity of
//! `u` (`∮ (F + C)/ρ = 0`). In two dimensions we run conjugate gradients on the
//! symmetric positive operator `u ↦ -∇·(ρ∇u)` restricted to zero-mean fields,
//! preconditioned by the inverse spectral Laplacian scaled by `mean(ρ)`.

use crate::error::{Error, Result};
use crate::grid::{self, GridField};
use num_complex::Complex64;

/// Solvability threshold on `|∫ f dx|`; smaller imbalances are projected away.
pub const SOLVABILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EllipticConfig {
    /// Relative residual target `‖∇·(ρ∇u) - f‖₂ <= tol ‖f‖₂`.
    pub tolerance: f64,
    /// Iteration cap for the 2D conjugate-gradient path.
    pub max_iterations: usize,
    /// Absolute residual floor. Right-hand sides assembled with repeated
    /// spectral Laplacians carry Nyquist-amplified roundoff that no solution
    /// can match; callers with such sources set the floor to their noise
    /// level instead of loosening the relative tolerance.
    pub residual_floor: f64,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 2000, residual_floor: 0.0 }
    }
}

/// Solve `∇·(ρ∇u) = f` for zero-mean `u` with the default configuration.
pub fn solve_divform(rho: &GridField, f: &GridField) -> Result<GridField> {
    solve_divform_cfg(rho, f, &EllipticConfig::default())
}

pub fn solve_divform_cfg(
    rho: &GridField,
    f: &GridField,
    cfg: &EllipticConfig,
) -> Result<GridField> {
    if rho.grid() != f.grid() {
        return Err(Error::SizeMismatch("rho and f on different grids".into()));
    }
    if rho.min_value() <= 0.0 {
        return Err(Error::NonPositiveDensity(format!(
            "coefficient min {} on the grid",
            rho.min_value()
        )));
    }
    let imbalance = grid::quadrature(f).abs();
    if imbalance > SOLVABILITY_TOL {
        return Err(Error::Solvability(format!(
            "|∮f| = {imbalance:.3e} exceeds {SOLVABILITY_TOL:.0e}"
        )));
    }
    // Absorb floating-point drift in the compatibility condition.
    let f = {
        let grid = f.grid();
        let shift = grid::quadrature(f) / grid::TWO_PI.powi(grid.dim() as i32);
        f.map(|v| v - shift)
    };
    let fnorm = f.l2_norm();
    if fnorm == 0.0 {
        return Ok(GridField::constant(f.grid(), 0.0));
    }
    let target = (cfg.tolerance * fnorm).max(cfg.residual_floor);

    let mut u = match f.grid().dim() {
        1 => solve_1d(rho, &f),
        _ => solve_2d_cg(rho, &f, cfg, fnorm)?,
    };
    // Iterative refinement against the computable residual.
    let mut residual = grid::div_a_grad(rho, &u).sub(&f).l2_norm();
    for _ in 0..3 {
        if residual <= target || f.grid().dim() != 1 {
            break;
        }
        let r = f.sub(&grid::div_a_grad(rho, &u)).zero_mean();
        u = u.add(&solve_1d(rho, &r));
        let improved = grid::div_a_grad(rho, &u).sub(&f).l2_norm();
        if improved >= residual {
            break;
        }
        residual = improved;
    }
    if residual > target {
        return Err(Error::NoConvergence(format!(
            "elliptic residual {residual:.3e} > {target:.3e}"
        )));
    }
    Ok(u.zero_mean())
}

fn solve_1d(rho: &GridField, f: &GridField) -> GridField {
    let big_f = grid::antiderivative_1d(f);
    let inv_rho = rho.map(|v| 1.0 / v);
    let c = -grid::inner(&big_f, &inv_rho) / grid::quadrature(&inv_rho);
    let du = big_f.map(|v| v + c).mul(&inv_rho);
    grid::antiderivative_1d(&du)
}

fn solve_2d_cg(
    rho: &GridField,
    f: &GridField,
    cfg: &EllipticConfig,
    fnorm: f64,
) -> Result<GridField> {
    let g = f.grid();
    let mean_rho = grid::quadrature(rho) / grid::TWO_PI.powi(2);
    // B u = -∇·(ρ∇u) is SPD on zero-mean fields; solve B u = -f.
    let apply = |u: &GridField| grid::div_a_grad(rho, u).scale(-1.0).zero_mean();
    let precond = |r: &GridField| {
        let spec = grid::transform(r);
        let out = spec.apply_multiplier(|z| {
            let z2 = (z[0] * z[0] + z[1] * z[1]) as f64;
            if z2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / (mean_rho * z2), 0.0)
            }
        });
        grid::inverse(&out).expect("sizes agree")
    };

    let b = f.scale(-1.0).zero_mean();
    let mut u = GridField::constant(g, 0.0);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = grid::inner(&r, &z);
    for _ in 0..cfg.max_iterations {
        if r.l2_norm() <= cfg.tolerance * fnorm {
            return Ok(u);
        }
        let ap = apply(&p);
        let alpha = rz / grid::inner(&p, &ap);
        u = u.add(&p.scale(alpha));
        r = r.sub(&ap.scale(alpha));
        z = precond(&r);
        let rz_new = grid::inner(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.add(&p.scale(beta));
    }
    if r.l2_norm() <= cfg.tolerance * fnorm {
        Ok(u)
    } else {
        Err(Error::NoConvergence(format!(
            "CG residual {:.3e} after {} iterations",
            r.l2_norm(),
            cfg.max_iterations
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        div_a_grad, inner, quadrature, random_band_limited, GridField, PeriodicGrid, TWO_PI,
    };
    use rand::SeedableRng;

    #[test]
    fn constant_coefficient_anchor() {
        let g = PeriodicGrid::line(64).unwrap();
        let rho = GridField::constant(g, 1.0 / TWO_PI);
        let f = GridField::from_fn(g, |x| -x[0].cos() / TWO_PI);
        let u = solve_divform(&rho, &f).unwrap();
        let expect = GridField::from_fn(g, |x| x[0].cos());
        assert!(u.sub(&expect).linf_norm() <= 1e-11);
    }

    #[test]
    fn manufactured_solution_1d() {
        let g = PeriodicGrid::line(128).unwrap();
        let rho = GridField::from_fn(g, |x| (1.0 + 0.3 * x[0].cos()) / TWO_PI);
        let u_star = GridField::from_fn(g, |x| x[0].sin());
        let f = div_a_grad(&rho, &u_star);
        let u = solve_divform(&rho, &f).unwrap();
        assert!(u.sub(&u_star.zero_mean()).linf_norm() <= 1e-10);
    }

    #[test]
    fn manufactured_solution_2d() {
        let g = PeriodicGrid::square(32).unwrap();
        let rho =
            GridField::from_fn(g, |x| (1.0 + 0.3 * x[0].cos() * x[1].sin()) / TWO_PI.powi(2));
        let u_star = GridField::from_fn(g, |x| x[0].sin() + (x[0] + x[1]).cos());
        let f = div_a_grad(&rho, &u_star);
        let u = solve_divform(&rho, &f).unwrap();
        assert!(u.sub(&u_star.zero_mean()).linf_norm() <= 1e-9);
    }

    #[test]
    fn nonzero_mean_source_rejected() {
        let g = PeriodicGrid::line(32).unwrap();
        let rho = GridField::constant(g, 1.0);
        let f = GridField::constant(g, 1.0);
        assert!(matches!(solve_divform(&rho, &f), Err(Error::Solvability(_))));
    }

    #[test]
    fn nonpositive_coefficient_rejected() {
        let g = PeriodicGrid::line(32).unwrap();
        let rho = GridField::from_fn(g, |x| x[0].cos());
        let f = GridField::from_fn(g, |x| x[0].sin());
        assert!(matches!(solve_divform(&rho, &f), Err(Error::NonPositiveDensity(_))));
    }

    #[test]
    fn linearity_and_self_adjointness() {
        let g = PeriodicGrid::line(64).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let rho = GridField::from_fn(g, |x| 0.2 + 0.05 * (2.0 * x[0]).cos());
        let f1 = random_band_limited(g, 5, 1.0, &mut rng).zero_mean();
        let f2 = random_band_limited(g, 5, 1.0, &mut rng).zero_mean();
        let u1 = solve_divform(&rho, &f1).unwrap();
        let u2 = solve_divform(&rho, &f2).unwrap();
        let combo = solve_divform(&rho, &f1.scale(1.7).add(&f2.scale(-0.4))).unwrap();
        let direct = u1.scale(1.7).add(&u2.scale(-0.4));
        assert!(combo.sub(&direct).linf_norm() <= 1e-10 * (1.0 + direct.linf_norm()));

        // ⟨g, ∇·(ρ∇u)⟩ = ⟨u, ∇·(ρ∇g)⟩ for zero-mean u, g.
        let lhs = inner(&u2, &div_a_grad(&rho, &u1));
        let rhs = inner(&u1, &div_a_grad(&rho, &u2));
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn residual_below_tolerance() {
        let g = PeriodicGrid::square(16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let rho = GridField::from_fn(g, |x| 1.0 + 0.4 * (x[0].cos() + x[1].sin()) / 2.0);
        let f = random_band_limited(g, 3, 0.5, &mut rng).zero_mean();
        let u = solve_divform(&rho, &f).unwrap();
        let res = div_a_grad(&rho, &u).sub(&f).l2_norm();
        assert!(res <= 1e-10 * f.l2_norm());
        assert!(quadrature(&u).abs() < 1e-12);
    }
}
