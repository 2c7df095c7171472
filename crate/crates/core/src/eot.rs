//! Entropic optimal transport between two grid densities.
//!
//! The Schrödinger system for the dual potentials reads
//!
//! ```text
//!     φ(x) = T_ν[ψ](x) = -ε log ∫ e^{(ψ(y) - c_ε(x,y))/ε} dν(y),
//!     ψ(y) = T_μ[φ](y) = -ε log ∫ e^{(φ(x) - c_ε(x,y))/ε} dμ(x),
//! ```
//!
//! and is solved by alternating the two half-steps (Sinkhorn) entirely in the
//! log domain: since `e^{-c_ε/ε} = K_ε`, the kernel application inside `T`
//! is a log-sum-exp against the explicit 1D kernel row, applied per axis
//! (the wrapped Gaussian is separable), so a full sweep costs `O(n^d · n)`.
//!
//! Gauge convention: converged pairs are shifted so `∫ φ dμ = 0`. All
//! cross-implementation comparisons should minimize over the remaining
//! constant; see [`gauge_min_l2`] and [`gauge_min_pair`].

use crate::error::{Error, Result};
use crate::grid::{self, GridField, PeriodicGrid};
use crate::heat;

#[derive(Debug, Clone)]
pub struct SinkhornConfig {
    pub eps: f64,
    /// Sup-norm change threshold between sweeps. Small `ε` contracts slowly
    /// and the potentials themselves shrink like `ε`, so the default scales
    /// as `1e-12 · max(1, ε)` rather than relative to `‖φ‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl SinkhornConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, tol: 1e-12 * eps.max(1.0), max_iter: 100_000 }
    }
}

/// Converged Schrödinger potentials for one `(μ, ν, ε)` problem.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub phi: GridField,
    pub psi: GridField,
    pub eps: f64,
    pub iterations: usize,
    /// `‖φ - T_ν[ψ]‖_∞` of the returned pair.
    pub residual_phi: f64,
    /// `‖ψ - T_μ[φ]‖_∞` of the returned pair.
    pub residual_psi: f64,
    /// Sup-norm change of `φ` after each sweep.
    pub residual_history: Vec<f64>,
}

/// Discrete coupling density on the product grid (d = 1 only), row-major
/// `values[ix * n + iy] = dπ/dxdy (x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub grid: PeriodicGrid,
    pub eps: f64,
    pub values: Vec<f64>,
}

fn check_density(rho: &GridField, name: &str) -> Result<()> {
    if rho.min_value() <= 0.0 {
        return Err(Error::NonPositiveDensity(format!("{name}: min {}", rho.min_value())));
    }
    let mass = grid::quadrature(rho);
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!("{name}: mass {mass} is not 1")));
    }
    Ok(())
}

/// Log-kernel row `log K_ε(j·h)` for one axis of the grid.
fn log_kernel_row(grid: PeriodicGrid, eps: f64) -> Vec<f64> {
    let h = grid.spacing();
    (0..grid.n_per_axis()).map(|j| heat::log_kernel_1d(j as f64 * h, eps)).collect()
}

fn logsumexp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `T_μ[φ](y) = -ε log ∫ e^{(φ(x) - c_ε(x,y))/ε} dμ(x)`, evaluated with
/// per-axis log-sum-exp; never returns a non-finite value for positive `μ`.
pub fn t_operator(potential: &GridField, density: &GridField, eps: f64) -> Result<GridField> {
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    if potential.grid() != density.grid() {
        return Err(Error::SizeMismatch("potential and density grids differ".into()));
    }
    if density.min_value() <= 0.0 {
        return Err(Error::NonPositiveDensity("t_operator density".into()));
    }
    let g = potential.grid();
    let n = g.n_per_axis();
    let lk = log_kernel_row(g, eps);
    let log_h = g.spacing().ln();
    // a = φ/ε + log μ + d·log h, so Σ_x e^{a + log K} is the quadrature of the integral.
    let a: Vec<f64> = potential
        .values()
        .iter()
        .zip(density.values())
        .map(|(&p, &m)| p / eps + m.ln() + g.dim() as f64 * log_h)
        .collect();
    let values = match g.dim() {
        1 => (0..n)
            .map(|j| -eps * logsumexp((0..n).map(|i| lk[(n + i - j) % n] + a[i])))
            .collect(),
        _ => {
            // First axis: M[jx, iy] = LSE_ix( lk[ix - jx] + a[ix, iy] ).
            let mut mid = vec![0.0f64; n * n];
            for jx in 0..n {
                for iy in 0..n {
                    mid[jx * n + iy] =
                        logsumexp((0..n).map(|ix| lk[(n + ix - jx) % n] + a[ix * n + iy]));
                }
            }
            let mut out = vec![0.0f64; n * n];
            for jx in 0..n {
                for jy in 0..n {
                    out[jx * n + jy] = -eps
                        * logsumexp((0..n).map(|iy| lk[(n + iy - jy) % n] + mid[jx * n + iy]));
                }
            }
            out
        }
    };
    GridField::new(g, values)
}

/// Alternate the two half-steps from `φ ≡ 0` until the sup-norm change of a
/// full sweep drops below `config.tol`, then apply the `∫φ dμ = 0` gauge.
pub fn solve_sinkhorn(
    mu: &GridField,
    nu: &GridField,
    config: &SinkhornConfig,
) -> Result<PotentialPair> {
    check_density(mu, "mu")?;
    check_density(nu, "nu")?;
    if mu.grid() != nu.grid() {
        return Err(Error::SizeMismatch("mu and nu grids differ".into()));
    }
    let eps = config.eps;
    let mut phi = GridField::constant(mu.grid(), 0.0);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iter {
        let psi = t_operator(&phi, mu, eps)?;
        let phi_new = t_operator(&psi, nu, eps)?;
        let change = phi_new.sub(&phi).linf_norm();
        history.push(change);
        phi = phi_new;
        if change <= config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "sinkhorn: {} sweeps, last change {:.3e} > tol {:.3e}",
            history.len(),
            history.last().copied().unwrap_or(f64::NAN),
            config.tol
        )));
    }
    let psi = t_operator(&phi, mu, eps)?;
    let residual_phi = phi.sub(&t_operator(&psi, nu, eps)?).linf_norm();
    let residual_psi = psi.sub(&t_operator(&phi, mu, eps)?).linf_norm();
    // Gauge: ∫φ dμ = 0.
    let c = grid::inner(&phi, mu);
    Ok(PotentialPair {
        phi: phi.map(|v| v - c),
        psi: psi.map(|v| v + c),
        eps,
        iterations: history.len(),
        residual_phi,
        residual_psi,
        residual_history: history,
    })
}

/// Dual value at the optimum: `∫φ dμ + ∫ψ dν` (gauge invariant).
pub fn eot_cost(mu: &GridField, nu: &GridField, potentials: &PotentialPair) -> f64 {
    grid::inner(&potentials.phi, mu) + grid::inner(&potentials.psi, nu)
}

/// Schrödinger functional `I[φ] = ∫φ dμ + ∫ T_μ[φ] dν`; maximized by the
/// converged potential, and invariant under constant shifts of `φ`.
pub fn dual_functional(phi: &GridField, mu: &GridField, nu: &GridField, eps: f64) -> Result<f64> {
    Ok(grid::inner(phi, mu) + grid::inner(&t_operator(phi, mu, eps)?, nu))
}

/// Mirrored functional `Ī[ψ] = ∫ T_ν[ψ] dμ + ∫ψ dν`.
pub fn dual_functional_bar(
    psi: &GridField,
    mu: &GridField,
    nu: &GridField,
    eps: f64,
) -> Result<f64> {
    Ok(grid::inner(&t_operator(psi, nu, eps)?, mu) + grid::inner(psi, nu))
}

/// Materialize `dπ/d(x,y) = e^{(φ(x)+ψ(y)-c_ε(x,y))/ε} μ(x) ν(y)` (d = 1).
pub fn coupling(mu: &GridField, nu: &GridField, potentials: &PotentialPair) -> Result<Coupling> {
    let g = mu.grid();
    if g.dim() != 1 {
        return Err(Error::UnsupportedDim("couplings are materialized only in 1D".into()));
    }
    let n = g.n_per_axis();
    if n > 1024 {
        return Err(Error::MemoryGuard(format!("n = {n} > 1024 for a dense coupling")));
    }
    let eps = potentials.eps;
    let lk = log_kernel_row(g, eps);
    let mut values = vec![0.0f64; n * n];
    for ix in 0..n {
        let row = potentials.phi.values()[ix] / eps + mu.values()[ix].ln();
        for iy in 0..n {
            let lw = row
                + potentials.psi.values()[iy] / eps
                + nu.values()[iy].ln()
                + lk[(n + ix - iy) % n];
            values[ix * n + iy] = lw.exp();
        }
    }
    Ok(Coupling { grid: g, eps, values })
}

impl Coupling {
    pub fn n(&self) -> usize {
        self.grid.n_per_axis()
    }

    /// First marginal `x ↦ ∫ π(x, y) dy`.
    pub fn marginal_x(&self) -> GridField {
        let n = self.n();
        let h = self.grid.spacing();
        let vals =
            (0..n).map(|ix| h * (0..n).map(|iy| self.values[ix * n + iy]).sum::<f64>()).collect();
        GridField::new(self.grid, vals).expect("sizes agree")
    }

    /// Second marginal `y ↦ ∫ π(x, y) dx`.
    pub fn marginal_y(&self) -> GridField {
        let n = self.n();
        let h = self.grid.spacing();
        let vals =
            (0..n).map(|iy| h * (0..n).map(|ix| self.values[ix * n + iy]).sum::<f64>()).collect();
        GridField::new(self.grid, vals).expect("sizes agree")
    }

    pub fn total_mass(&self) -> f64 {
        let h = self.grid.spacing();
        h * h * self.values.iter().sum::<f64>()
    }

    /// `∫∫ c_ε dπ + ε KL(π ‖ μ⊗ν)`: the primal objective of this coupling.
    pub fn primal_cost(&self, mu: &GridField, nu: &GridField) -> f64 {
        let n = self.n();
        let h = self.grid.spacing();
        let lk = log_kernel_row(self.grid, self.eps);
        let mut cost = 0.0;
        let mut kl = 0.0;
        for ix in 0..n {
            for iy in 0..n {
                let p = self.values[ix * n + iy];
                if p <= 0.0 {
                    continue;
                }
                cost += -self.eps * lk[(n + ix - iy) % n] * p;
                kl += p * (p / (mu.values()[ix] * nu.values()[iy])).ln();
            }
        }
        h * h * (cost + self.eps * kl)
    }

    /// `KL(self ‖ other)` between two couplings on the same grid.
    pub fn kl_to(&self, other: &Coupling) -> f64 {
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for (p, q) in self.values.iter().zip(&other.values) {
            if *p > 0.0 {
                acc += p * (p / q).ln();
            }
        }
        h * h * acc
    }
}

/// `KL(p ‖ q) = ∫ p log(p/q) dx`; nonnegative, zero iff `p = q` on the grid.
pub fn kl_divergence(p: &GridField, q: &GridField) -> Result<f64> {
    if p.min_value() <= 0.0 || q.min_value() <= 0.0 {
        return Err(Error::NonPositiveDensity("kl_divergence".into()));
    }
    Ok(grid::quadrature(&p.zip_with(q, |a, b| a * (a / b).ln())))
}

/// Negative self-entropy `H(ρ) = ∫ ρ log ρ dx`.
pub fn entropy(p: &GridField) -> Result<f64> {
    if p.min_value() <= 0.0 {
        return Err(Error::NonPositiveDensity("entropy".into()));
    }
    Ok(grid::quadrature(&p.map(|v| v * v.ln())))
}

/// Relative Fisher information `∫ ‖∇ log(p/q)‖² dp`.
pub fn fisher_info(p: &GridField, q: &GridField) -> Result<f64> {
    if p.min_value() <= 0.0 || q.min_value() <= 0.0 {
        return Err(Error::NonPositiveDensity("fisher_info".into()));
    }
    let log_ratio = p.zip_with(q, |a, b| (a / b).ln());
    Ok(grid::inner(&grid::grad_norm_sq(&log_ratio), p))
}

/// `min_c ‖f - c‖_{L²(w)}` for a probability weight `w`: the gauge-minimized
/// size of a potential discrepancy `f`.
pub fn gauge_min_l2(f: &GridField, w: &GridField) -> f64 {
    let mean = grid::inner(f, w);
    grid::inner(&f.map(|v| (v - mean) * (v - mean)), w).max(0.0).sqrt()
}

/// Minimize `‖f - c‖_{L²(wf)} + ‖g + c‖_{L²(wg)}` over the shared gauge
/// constant `c` (golden-section on a convex objective).
pub fn gauge_min_pair(f: &GridField, wf: &GridField, g: &GridField, wg: &GridField) -> f64 {
    let obj = |c: f64| {
        let a = grid::inner(&f.map(|v| (v - c) * (v - c)), wf).max(0.0).sqrt();
        let b = grid::inner(&g.map(|v| (v + c) * (v + c)), wg).max(0.0).sqrt();
        a + b
    };
    // Seed at the sum-of-squares optimum and expand a bracket around it.
    let c0 = 0.5 * (grid::inner(f, wf) - grid::inner(g, wg));
    let span = 1.0 + f.linf_norm() + g.linf_norm();
    let (mut lo, mut hi) = (c0 - span, c0 + span);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - gr * (hi - lo), lo + gr * (hi - lo));
    let (mut f1, mut f2) = (obj(x1), obj(x2));
    for _ in 0..200 {
        if hi - lo < 1e-14 * span {
            break;
        }
        if f1 > f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = obj(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = obj(x1);
        }
    }
    obj(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::standard_test_curve;
    use crate::grid::{inner, random_band_limited, PeriodicGrid, TWO_PI};
    use rand::SeedableRng;

    fn uniform(g: PeriodicGrid) -> GridField {
        GridField::constant(g, TWO_PI.powi(-(g.dim() as i32)))
    }

    fn bump(g: PeriodicGrid) -> GridField {
        GridField::from_fn(g, |x| (1.0 + 0.5 * x[0].cos()) / TWO_PI)
    }

    #[test]
    fn t_operator_uniform_is_constant() {
        let g = PeriodicGrid::line(64).unwrap();
        let zero = GridField::constant(g, 0.0);
        for eps in [0.05, 0.3] {
            let t = t_operator(&zero, &uniform(g), eps).unwrap();
            let expect = eps * TWO_PI.ln();
            assert!(t.map(|v| v - expect).linf_norm() < 1e-12, "eps={eps}");
        }
        let g2 = PeriodicGrid::square(16).unwrap();
        let zero2 = GridField::constant(g2, 0.0);
        let t2 = t_operator(&zero2, &uniform(g2), 0.4).unwrap();
        assert!(t2.map(|v| v - 0.4 * 2.0 * TWO_PI.ln()).linf_norm() < 1e-12);
    }

    #[test]
    fn t_operator_shift_equivariance_and_monotonicity() {
        let g = PeriodicGrid::line(64).unwrap();
        let mu = bump(g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let phi = random_band_limited(g, 4, 0.3, &mut rng);
        let eps = 0.2;
        let t0 = t_operator(&phi, &mu, eps).unwrap();
        let t1 = t_operator(&phi.map(|v| v + 0.7), &mu, eps).unwrap();
        assert!(t1.sub(&t0).map(|v| v + 0.7).linf_norm() < 1e-12);
        // φ1 <= φ2 pointwise => T[φ1] >= T[φ2].
        let bigger = phi.map(|v| v + 0.1 * (1.0 + v.sin().abs()));
        let tb = t_operator(&bigger, &mu, eps).unwrap();
        assert!(tb.zip_with(&t0, |a, b| b - a).min_value() >= -1e-12);
    }

    #[test]
    fn t_operator_matches_dense_matrix() {
        let g = PeriodicGrid::line(64).unwrap();
        let n = g.n_per_axis();
        let h = g.spacing();
        let mu = bump(g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let phi = random_band_limited(g, 5, 0.4, &mut rng);
        let eps = 0.1;
        let fast = t_operator(&phi, &mu, eps).unwrap();
        // Dense evaluation with an explicit cost matrix, no kernel-row reuse.
        let dense = GridField::from_fn(g, |y| {
            let mut acc = 0.0f64;
            for i in 0..n {
                let x = [i as f64 * h];
                let c = heat::cost(&x, y, eps);
                acc += ((phi.values()[i] - c) / eps).exp() * mu.values()[i] * h;
            }
            -eps * acc.ln()
        });
        assert!(fast.sub(&dense).linf_norm() <= 1e-10);
    }

    #[test]
    fn uniform_pair_closed_form() {
        // n = 128 so the ε = 0.01 kernel is resolved (aliasing ~ e^{-εn²/2}).
        let g = PeriodicGrid::line(128).unwrap();
        let mu = uniform(g);
        for eps in [0.01, 0.1, 1.0] {
            let pair = solve_sinkhorn(&mu, &mu, &SinkhornConfig::new(eps)).unwrap();
            // Under the ∫φdμ = 0 gauge: φ = 0, ψ = ε log 2π. Re-gauging by
            // half the total recovers the symmetric split φ = ψ = ε log(2π)/2.
            let total = eps * TWO_PI.ln();
            assert!(pair.phi.linf_norm() < 1e-11, "eps={eps}");
            assert!(pair.psi.map(|v| v - total).linf_norm() < 1e-11);
            let half = pair.phi.map(|v| v + total / 2.0);
            assert!(half.map(|v| v - total / 2.0).linf_norm() < 1e-11);
            let cost = eot_cost(&mu, &mu, &pair);
            assert!((cost - total).abs() < 1e-9, "eps={eps}: {cost} vs {total}");
        }
    }

    #[test]
    fn sinkhorn_matches_independent_dense_solver() {
        let g = PeriodicGrid::line(64).unwrap();
        let n = g.n_per_axis();
        let h = g.spacing();
        let mu = bump(g);
        let nu = GridField::from_fn(g, |x| (1.0 - 0.4 * (x[0] + 0.7).sin()) / TWO_PI);
        let eps = 0.1;
        let pair = solve_sinkhorn(&mu, &nu, &SinkhornConfig::new(eps)).unwrap();

        // Independent dense log-domain Sinkhorn with an explicit cost matrix.
        let mut cmat = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                cmat[i * n + j] = heat::cost(&[i as f64 * h], &[j as f64 * h], eps);
            }
        }
        let lse = |terms: &[f64]| {
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
        };
        let mut phi = vec![0.0f64; n];
        let mut psi = vec![0.0f64; n];
        for _ in 0..200_000 {
            let mut max_change = 0.0f64;
            for j in 0..n {
                let terms: Vec<f64> = (0..n)
                    .map(|i| (phi[i] - cmat[i * n + j]) / eps + (mu.values()[i] * h).ln())
                    .collect();
                psi[j] = -eps * lse(&terms);
            }
            for i in 0..n {
                let terms: Vec<f64> = (0..n)
                    .map(|j| (psi[j] - cmat[i * n + j]) / eps + (nu.values()[j] * h).ln())
                    .collect();
                let new = -eps * lse(&terms);
                max_change = max_change.max((new - phi[i]).abs());
                phi[i] = new;
            }
            if max_change < 1e-14 {
                break;
            }
        }
        let dense_phi = GridField::new(g, phi).unwrap();
        let diff = pair.phi.sub(&dense_phi);
        assert!(gauge_min_l2(&diff, &mu) <= 1e-9);
    }

    #[test]
    fn self_transport_score_law() {
        // ∇φ_ε ≈ -(ε/2) ∇log ρ for self-transport at small ε.
        let g = PeriodicGrid::line(128).unwrap();
        let rho = bump(g);
        let eps = 0.025;
        let pair = solve_sinkhorn(&rho, &rho, &SinkhornConfig::new(eps)).unwrap();
        let grad_phi = grid::derivative(&pair.phi, 0, 1);
        let target = grid::derivative(&rho.map(|v| v.ln()), 0, 1).scale(-eps / 2.0);
        let num = inner(&grad_phi.sub(&target).map(|v| v * v), &rho).sqrt();
        let den = inner(&target.map(|v| v * v), &rho).sqrt();
        assert!(num / den <= 0.1, "relative error {}", num / den);
    }

    #[test]
    fn cost_gauge_invariance_and_duality() {
        let g = PeriodicGrid::line(64).unwrap();
        let mu = bump(g);
        let nu = GridField::from_fn(g, |x| (1.0 + 0.3 * (2.0 * x[0]).cos()) / TWO_PI);
        let eps = 0.2;
        let pair = solve_sinkhorn(&mu, &nu, &SinkhornConfig::new(eps)).unwrap();
        let cost = eot_cost(&mu, &nu, &pair);
        let shifted = PotentialPair {
            phi: pair.phi.map(|v| v + 0.37),
            psi: pair.psi.map(|v| v - 0.37),
            ..pair.clone()
        };
        let shifted_cost = eot_cost(&mu, &nu, &shifted);
        assert!((cost - shifted_cost).abs() < 1e-13);
        let dual = dual_functional(&pair.phi, &mu, &nu, eps).unwrap();
        assert!((dual - cost).abs() <= 2e-12);
        let dual_bar = dual_functional_bar(&pair.psi, &mu, &nu, eps).unwrap();
        assert!((dual_bar - cost).abs() <= 2e-12);
        // I[φ + c] = I[φ].
        let shifted_dual = dual_functional(&pair.phi.map(|v| v + 1.3), &mu, &nu, eps).unwrap();
        assert!((shifted_dual - dual).abs() < 1e-12);
    }

    #[test]
    fn optimality_beats_perturbations() {
        let g = PeriodicGrid::line(64).unwrap();
        let mu = bump(g);
        let nu = uniform(g);
        let eps = 0.15;
        let pair = solve_sinkhorn(&mu, &nu, &SinkhornConfig::new(eps)).unwrap();
        let best = dual_functional(&pair.phi, &mu, &nu, eps).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let chi = random_band_limited(g, 4, 0.2, &mut rng);
            let perturbed = dual_functional(&pair.phi.add(&chi), &mu, &nu, eps).unwrap();
            assert!(perturbed <= best + 1e-10);
        }
    }

    #[test]
    fn coupling_marginals_and_primal_value() {
        let g = PeriodicGrid::line(128).unwrap();
        let mu = uniform(g);
        let nu = uniform(g);
        let eps = 0.1;
        let pair = solve_sinkhorn(&mu, &nu, &SinkhornConfig::new(eps)).unwrap();
        let pi = coupling(&mu, &nu, &pair).unwrap();
        assert!(pi.marginal_x().sub(&mu).linf_norm() <= 1e-9);
        assert!(pi.marginal_y().sub(&nu).linf_norm() <= 1e-9);
        assert!((pi.total_mass() - 1.0).abs() <= 1e-9);
        assert!(pi.values.iter().all(|&v| v >= 0.0));
        assert!(pi.kl_to(&pi).abs() < 1e-14);

        let curve = standard_test_curve(g);
        let a = curve.density_at(0.3).unwrap();
        let b = curve.density_at(0.4).unwrap();
        let pair = solve_sinkhorn(&a, &b, &SinkhornConfig::new(eps)).unwrap();
        let pi = coupling(&a, &b, &pair).unwrap();
        let dual = eot_cost(&a, &b, &pair);
        let primal = pi.primal_cost(&a, &b);
        assert!((dual - primal).abs() <= 1e-6, "gap {}", dual - primal);
    }

    #[test]
    fn kl_entropy_fisher_anchors() {
        let g = PeriodicGrid::line(128).unwrap();
        let u = uniform(g);
        let b = bump(g);
        assert!(kl_divergence(&b, &b).unwrap().abs() < 1e-15);
        assert!(kl_divergence(&u, &b).unwrap() > 0.0);
        assert!((entropy(&u).unwrap() + TWO_PI.ln()).abs() < 1e-12);
        // Same value on a finer grid.
        let g2 = PeriodicGrid::line(512).unwrap();
        let u2 = GridField::constant(g2, 1.0 / TWO_PI);
        let b2 = GridField::from_fn(g2, |x| (1.0 + 0.5 * x[0].cos()) / TWO_PI);
        let kl_coarse = kl_divergence(&u, &b).unwrap();
        let kl_fine = kl_divergence(&u2, &b2).unwrap();
        assert!((kl_coarse - kl_fine).abs() <= 1e-10);
        assert!(fisher_info(&b, &u).unwrap() > 0.0);
        assert!(fisher_info(&b, &b).unwrap().abs() < 1e-20);
    }

    #[test]
    fn residual_history_monotone_after_first() {
        let g = PeriodicGrid::line(64).unwrap();
        let curve = standard_test_curve(g);
        let a = curve.density_at(0.2).unwrap();
        let b = curve.density_at(0.35).unwrap();
        let pair = solve_sinkhorn(&a, &b, &SinkhornConfig::new(0.15)).unwrap();
        for w in pair.residual_history.windows(2).skip(1) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "history not monotone: {w:?}");
        }
        assert!(pair.residual_phi <= 1e-12);
        assert!(pair.residual_psi <= 1e-12);
    }

    #[test]
    fn potential_oscillation_below_cost_oscillation() {
        let g = PeriodicGrid::line(64).unwrap();
        let curve = standard_test_curve(g);
        let a = curve.density_at(0.0).unwrap();
        let b = curve.density_at(0.5).unwrap();
        for eps in [0.05, 0.5] {
            let pair = solve_sinkhorn(&a, &b, &SinkhornConfig::new(eps)).unwrap();
            let osc_phi = pair.phi.max_value() - pair.phi.min_value();
            let osc_c = heat::cost_oscillation(g, eps);
            assert!(osc_phi <= osc_c);
            assert!(osc_c < 4.0 * std::f64::consts::PI.powi(2));
        }
    }

    #[test]
    fn swap_symmetry() {
        let g = PeriodicGrid::line(64).unwrap();
        let mu = bump(g);
        let nu = GridField::from_fn(g, |x| (1.0 - 0.3 * (x[0] - 1.0).cos()) / TWO_PI);
        let eps = 0.2;
        let ab = solve_sinkhorn(&mu, &nu, &SinkhornConfig::new(eps)).unwrap();
        let ba = solve_sinkhorn(&nu, &mu, &SinkhornConfig::new(eps)).unwrap();
        assert!(gauge_min_l2(&ab.phi.sub(&ba.psi), &mu) <= 1e-10);
        assert!(gauge_min_l2(&ab.psi.sub(&ba.phi), &nu) <= 1e-10);
    }

    #[test]
    fn two_dimensional_solve() {
        let g = PeriodicGrid::square(24).unwrap();
        let mu = GridField::from_fn(g, |x| (1.0 + 0.3 * (x[0] + x[1]).cos()) / TWO_PI.powi(2));
        let nu = uniform(g);
        let eps = 0.3;
        let pair = solve_sinkhorn(&mu, &nu, &SinkhornConfig::new(eps)).unwrap();
        assert!(pair.residual_phi <= 1e-12);
        let cost = eot_cost(&mu, &nu, &pair);
        // Uniform/uniform in 2D costs 2ε log 2π; a mild bump stays close.
        assert!((cost - 2.0 * eps * TWO_PI.ln()).abs() < 0.1);
    }

    #[test]
    fn nonpositive_density_rejected() {
        let g = PeriodicGrid::line(32).unwrap();
        let bad = GridField::from_fn(g, |x| x[0].cos() / TWO_PI);
        let ok = uniform(g);
        assert!(solve_sinkhorn(&bad, &ok, &SinkhornConfig::new(0.1)).is_err());
        assert!(kl_divergence(&bad, &ok).is_err());
    }

    #[test]
    fn max_iter_exceeded_reports_residual() {
        let g = PeriodicGrid::line(64).unwrap();
        let curve = standard_test_curve(g);
        let a = curve.density_at(0.0).unwrap();
        let b = curve.density_at(0.9).unwrap();
        let cfg = SinkhornConfig { eps: 0.05, tol: 1e-13, max_iter: 3 };
        match solve_sinkhorn(&a, &b, &cfg) {
            Err(Error::NoConvergence(msg)) => assert!(msg.contains("sweeps")),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }
}
