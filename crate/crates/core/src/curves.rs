//! Analytic density evolutions `t ↦ ρ_t` on the torus.
//!
//! Every curve is a trigonometric polynomial in space,
//!
//! ```text
//!     ρ_t(x) = (2π)^{-d} (1 + Σ_{z≠0} a_z(t) e^{i z·x}),      a_{-z} = conj(a_z),
//! ```
//!
//! with smooth closed-form time coefficients, so spatial operations are exact
//! below Nyquist and every time-Taylor coefficient `ρ^(k) = ∂_t^k ρ_t / k!` is
//! available in closed form (via jet arithmetic). Total mass is pinned to 1 by
//! the fixed zero mode, so `∫ ρ^(k) dx = 0` for all `k >= 1`.
//!
//! Constructors: static densities, rigid rotations `ρ_t(x) = ρ_0(x - vt)`,
//! amplitude modulations with polynomial time coefficients, and a "perturbed
//! twin" `ρ^ν_t = normalize(ρ^μ_t (1 + δ g(x,t)))` for stability experiments.

use crate::elliptic;
use crate::error::{Error, Result};
use crate::grid::{self, GridField, PeriodicGrid, SpectralField};
use crate::jets::Jet;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One real cosine mode `amp·cos(z·x + phase)` of a density profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSpec {
    pub z: [i64; 2],
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

/// A travelling cosine `amp·cos(z·x + phase + speed·t)`, used for perturbations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveMode {
    pub z: [i64; 2],
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub speed: f64,
}

/// A mode whose amplitude is a polynomial in `t`:
/// `poly(t)·cos(z·x + phase)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulatedMode {
    pub z: [i64; 2],
    pub poly: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone)]
enum CurveKind {
    Static { modes: Vec<ModeSpec> },
    Rotating { modes: Vec<ModeSpec>, speed: [f64; 2] },
    Modulated { modes: Vec<ModulatedMode> },
    Twin { base: Box<DensityCurve>, delta: f64, g: Vec<WaveMode> },
}

/// Analytic density evolution satisfying the uniform two-sided bound
/// `margin <= ρ_t(x) <= 1/margin` on the grid for all `t ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct DensityCurve {
    grid: PeriodicGrid,
    kind: CurveKind,
    margin: f64,
}

/// Velocity potential of the continuity equation at a fixed time:
/// `∇·(ρ_t ∇Φ_t) = -∂_t ρ_t` with zero-mean `Φ_t`.
#[derive(Debug, Clone)]
pub struct VelocityPotential {
    pub t: f64,
    pub phi: GridField,
    pub rho: GridField,
    /// `‖∂_tρ + ∇·(ρ∇Φ)‖_∞` of the returned solution.
    pub continuity_residual: f64,
}

const MARGIN_TIME_SAMPLES: usize = 1024;

impl DensityCurve {
    pub fn uniform(grid: PeriodicGrid) -> Self {
        let margin = 0.5 * grid::TWO_PI.powi(-(grid.dim() as i32));
        Self { grid, kind: CurveKind::Static { modes: Vec::new() }, margin }
    }

    pub fn static_modes(grid: PeriodicGrid, modes: Vec<ModeSpec>, margin: f64) -> Result<Self> {
        Self::validated(grid, CurveKind::Static { modes }, margin)
    }

    pub fn rotating(
        grid: PeriodicGrid,
        modes: Vec<ModeSpec>,
        speed: [f64; 2],
        margin: f64,
    ) -> Result<Self> {
        Self::validated(grid, CurveKind::Rotating { modes, speed }, margin)
    }

    pub fn modulated(grid: PeriodicGrid, modes: Vec<ModulatedMode>, margin: f64) -> Result<Self> {
        Self::validated(grid, CurveKind::Modulated { modes }, margin)
    }

    /// `ρ^ν_t = ρ^μ_t (1 + δ g) / ∫ ρ^μ_t (1 + δ g)` with
    /// `g(x,t) = Σ amp·cos(z·x + phase + speed t)`.
    pub fn perturbed_twin(
        base: &DensityCurve,
        delta: f64,
        g: Vec<WaveMode>,
        margin: f64,
    ) -> Result<Self> {
        Self::validated(
            base.grid,
            CurveKind::Twin { base: Box::new(base.clone()), delta, g },
            margin,
        )
    }

    fn validated(grid: PeriodicGrid, kind: CurveKind, margin: f64) -> Result<Self> {
        if !(0.0 < margin && margin < 1.0) {
            return Err(Error::InvalidParameter(format!("margin must be in (0,1), got {margin}")));
        }
        let curve = Self { grid, kind, margin };
        let max_mode = curve.max_mode_abs();
        if 2 * max_mode as usize >= grid.n_per_axis() {
            return Err(Error::InvalidGrid(format!(
                "grid with n={} does not resolve mode {max_mode}",
                grid.n_per_axis()
            )));
        }
        for i in 0..=MARGIN_TIME_SAMPLES {
            let t = i as f64 / MARGIN_TIME_SAMPLES as f64;
            let rho = curve.density_at(t)?;
            let (lo, hi) = (rho.min_value(), rho.max_value());
            if lo < margin || hi > 1.0 / margin {
                return Err(Error::MarginViolation(format!(
                    "t={t:.4}: range [{lo:.4e}, {hi:.4e}] vs declared [{margin:.4e}, {:.4e}]",
                    1.0 / margin
                )));
            }
        }
        Ok(curve)
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Largest mode index used by this curve (per axis, in absolute value).
    pub fn max_mode(&self) -> i64 {
        self.max_mode_abs()
    }

    /// The same analytic curve sampled on a different grid. The positivity
    /// margin was certified at construction and is grid independent (the
    /// curve is a fixed trigonometric polynomial), so it is not re-verified.
    pub fn on_grid(&self, grid: PeriodicGrid) -> Result<Self> {
        if grid.dim() != self.grid.dim() {
            return Err(Error::InvalidGrid("dimension change".into()));
        }
        if 2 * self.max_mode_abs() as usize >= grid.n_per_axis() {
            return Err(Error::InvalidGrid(format!(
                "grid with n={} does not resolve mode {}",
                grid.n_per_axis(),
                self.max_mode_abs()
            )));
        }
        Ok(Self { grid, kind: self.kind.clone(), margin: self.margin })
    }

    /// Declared positivity margin `L_ρ`.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    fn max_mode_abs(&self) -> i64 {
        let of_modes = |ms: &[ModeSpec]| {
            ms.iter().map(|m| m.z[0].abs().max(m.z[1].abs())).max().unwrap_or(0)
        };
        match &self.kind {
            CurveKind::Static { modes } => of_modes(modes),
            CurveKind::Rotating { modes, .. } => of_modes(modes),
            CurveKind::Modulated { modes } => {
                modes.iter().map(|m| m.z[0].abs().max(m.z[1].abs())).max().unwrap_or(0)
            }
            CurveKind::Twin { base, g, .. } => {
                let gm = g.iter().map(|m| m.z[0].abs().max(m.z[1].abs())).max().unwrap_or(0);
                base.max_mode_abs() + gm
            }
        }
    }

    /// Jets (to the requested order) of the signed-mode coefficients `a_z(t)`,
    /// zero mode excluded. Hermitian pairs are stored explicitly.
    fn mode_jets(&self, t: f64, order: usize) -> BTreeMap<[i64; 2], Jet> {
        let mut out: BTreeMap<[i64; 2], Jet> = BTreeMap::new();
        let mut insert = |z: [i64; 2], j: Jet| {
            out.entry(z).and_modify(|e| *e = e.add(&j)).or_insert(j);
        };
        match &self.kind {
            CurveKind::Static { modes } => {
                for m in modes {
                    let half = Complex64::new(0.0, m.phase).exp() * (m.amp / 2.0);
                    insert(m.z, Jet::constant(half, order));
                    insert([-m.z[0], -m.z[1]], Jet::constant(half.conj(), order));
                }
            }
            CurveKind::Rotating { modes, speed } => {
                // a_z(t) = a_z(0) e^{-i (z·v) t}
                for m in modes {
                    let omega = -(m.z[0] as f64 * speed[0] + m.z[1] as f64 * speed[1]);
                    let j = Jet::complex_wave(omega, m.phase, t, order).scale(Complex64::new(
                        m.amp / 2.0,
                        0.0,
                    ));
                    insert(m.z, j.clone());
                    insert([-m.z[0], -m.z[1]], j.conj());
                }
            }
            CurveKind::Modulated { modes } => {
                for m in modes {
                    let poly = Jet::polynomial(&m.poly, t, order);
                    let half = poly.scale(Complex64::new(0.0, m.phase).exp() * 0.5);
                    insert(m.z, half.clone());
                    insert([-m.z[0], -m.z[1]], half.conj());
                }
            }
            CurveKind::Twin { base, delta, g } => {
                let base_jets = base.mode_jets(t, order);
                let mut g_jets: BTreeMap<[i64; 2], Jet> = BTreeMap::new();
                for m in g {
                    let j = Jet::complex_wave(m.speed, m.phase, t, order)
                        .scale(Complex64::new(m.amp / 2.0, 0.0));
                    g_jets
                        .entry(m.z)
                        .and_modify(|e| *e = e.add(&j))
                        .or_insert_with(|| j.clone());
                    let jc = j.conj();
                    g_jets
                        .entry([-m.z[0], -m.z[1]])
                        .and_modify(|e| *e = e.add(&jc))
                        .or_insert(jc);
                }
                // Unnormalized product (1 + Σ a_z e^{izx})(1 + δ Σ g_w e^{iwx});
                // the zero mode of the product is the total mass.
                let one = Jet::constant(Complex64::new(1.0, 0.0), order);
                let mut prod: BTreeMap<[i64; 2], Jet> = base_jets.clone();
                let delta_c = Complex64::new(*delta, 0.0);
                for (w, gj) in &g_jets {
                    let scaled = gj.scale(delta_c);
                    prod.entry(*w).and_modify(|e| *e = e.add(&scaled)).or_insert(scaled);
                }
                for (z, aj) in &base_jets {
                    for (w, gj) in &g_jets {
                        let y = [z[0] + w[0], z[1] + w[1]];
                        let term = aj.mul(gj).scale(delta_c);
                        prod.entry(y).and_modify(|e| *e = e.add(&term)).or_insert(term);
                    }
                }
                let mass = prod.remove(&[0, 0]).map_or(one.clone(), |m0| one.add(&m0));
                for (z, pj) in prod {
                    if z != [0, 0] {
                        insert(z, pj.div(&mass));
                    }
                }
            }
        }
        out.remove(&[0, 0]);
        out
    }

    fn field_from_jets(&self, jets: &BTreeMap<[i64; 2], Jet>, k: usize, with_base: bool) -> GridField {
        let grid = self.grid;
        let norm = grid::TWO_PI.powi(-(grid.dim() as i32));
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.node_count()];
        let n = grid.n_per_axis() as i64;
        let wrap = |zi: i64| (((zi % n) + n) % n) as usize;
        if with_base {
            coeffs[0] = Complex64::new(norm, 0.0);
        }
        for (z, j) in jets {
            let idx = match grid.dim() {
                1 => wrap(z[0]),
                _ => wrap(z[0]) * grid.n_per_axis() + wrap(z[1]),
            };
            coeffs[idx] += j.coeff(k) * norm;
        }
        let spec = SpectralField::new(grid, coeffs).expect("sizes agree");
        grid::inverse(&spec).expect("sizes agree")
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("t={t} outside [0,1]")));
        }
        Ok(())
    }

    /// `ρ_t` sampled on the grid (exact; the curve is band-limited).
    pub fn density_at(&self, t: f64) -> Result<GridField> {
        self.check_t(t)?;
        let jets = self.mode_jets(t, 0);
        Ok(self.field_from_jets(&jets, 0, true))
    }

    /// `ρ^(k)_t = ∂_t^k ρ_t / k!`; integrates to zero for `k >= 1`.
    pub fn taylor_coefficient(&self, t: f64, k: usize) -> Result<GridField> {
        self.check_t(t)?;
        if k == 0 {
            return self.density_at(t);
        }
        let jets = self.mode_jets(t, k);
        Ok(self.field_from_jets(&jets, k, false))
    }

    /// Solve the continuity equation for the zero-mean velocity potential.
    pub fn velocity_potential(&self, t: f64) -> Result<VelocityPotential> {
        let rho = self.density_at(t)?;
        let drho = self.taylor_coefficient(t, 1)?;
        let phi = elliptic::solve_divform(&rho, &drho.scale(-1.0))?;
        let residual = drho.add(&grid::div_a_grad(&rho, &phi)).linf_norm();
        let scale = drho.linf_norm();
        if scale > 0.0 && residual > 1e-8 * scale {
            return Err(Error::NoConvergence(format!(
                "continuity residual {residual:.3e} vs scale {scale:.3e}"
            )));
        }
        Ok(VelocityPotential { t, phi, rho, continuity_residual: residual })
    }
}

/// Serializable curve description used by experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSpec {
    Uniform,
    Static {
        modes: Vec<ModeSpec>,
        margin: f64,
    },
    Rotating {
        modes: Vec<ModeSpec>,
        speed: [f64; 2],
        margin: f64,
    },
    Modulated {
        modes: Vec<ModulatedMode>,
        margin: f64,
    },
    /// A base curve perturbed multiplicatively and renormalized.
    PerturbedTwin {
        base: Box<CurveSpec>,
        delta: f64,
        g: Vec<WaveMode>,
        margin: f64,
    },
}

impl CurveSpec {
    pub fn build(&self, grid: PeriodicGrid) -> Result<DensityCurve> {
        match self {
            CurveSpec::Uniform => Ok(DensityCurve::uniform(grid)),
            CurveSpec::Static { modes, margin } => {
                DensityCurve::static_modes(grid, modes.clone(), *margin)
            }
            CurveSpec::Rotating { modes, speed, margin } => {
                DensityCurve::rotating(grid, modes.clone(), *speed, *margin)
            }
            CurveSpec::Modulated { modes, margin } => {
                DensityCurve::modulated(grid, modes.clone(), *margin)
            }
            CurveSpec::PerturbedTwin { base, delta, g, margin } => {
                let base = base.build(grid)?;
                DensityCurve::perturbed_twin(&base, *delta, g.clone(), *margin)
            }
        }
    }
}

/// The standard 1D test curve `ρ_t(x) = (1 + 0.5 cos(x - t)) / 2π`.
pub fn standard_test_curve(grid: PeriodicGrid) -> DensityCurve {
    DensityCurve::rotating(
        grid,
        vec![ModeSpec { z: [1, 0], amp: 0.5, phase: 0.0 }],
        [1.0, 0.0],
        0.07,
    )
    .expect("standard curve is within its margin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, quadrature, PeriodicGrid, TWO_PI};
    use std::f64::consts::PI;

    fn test_grid() -> PeriodicGrid {
        PeriodicGrid::line(64).unwrap()
    }

    #[test]
    fn density_anchor_values() {
        let curve = standard_test_curve(test_grid());
        let rho0 = curve.density_at(0.0).unwrap();
        assert!((rho0.values()[0] - 1.5 / TWO_PI).abs() < 1e-14);
        // ∂_t ρ = 0.5 sin(x - t) / 2π; at t=0, x=π/2 the value is 0.5/2π.
        let d1 = curve.taylor_coefficient(0.0, 1).unwrap();
        let idx = test_grid().n_per_axis() / 4;
        assert!((d1.values()[idx] - 0.5 / TWO_PI).abs() < 1e-13);
    }

    #[test]
    fn mass_is_exactly_one_for_all_t() {
        let grid = test_grid();
        let base = standard_test_curve(grid);
        let twin = DensityCurve::perturbed_twin(
            &base,
            0.1,
            vec![WaveMode { z: [1, 0], amp: 1.0, phase: 0.3, speed: 1.0 }],
            0.05,
        )
        .unwrap();
        for curve in [&base, &twin] {
            for t in [0.0, 0.31, 0.77, 1.0] {
                assert!((quadrature(&curve.density_at(t).unwrap()) - 1.0).abs() < 1e-13);
                for k in 1..=4 {
                    assert!(
                        quadrature(&curve.taylor_coefficient(t, k).unwrap()).abs() < 1e-12,
                        "k={k} t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn taylor_matches_finite_differences() {
        let grid = test_grid();
        let base = standard_test_curve(grid);
        let twin = DensityCurve::perturbed_twin(
            &base,
            0.1,
            vec![WaveMode { z: [2, 0], amp: 0.8, phase: 0.0, speed: 2.0 }],
            0.05,
        )
        .unwrap();
        for curve in [&base, &twin] {
            let t = 0.4;
            let h = 1e-5;
            let fd = curve
                .density_at(t + h)
                .unwrap()
                .sub(&curve.density_at(t).unwrap())
                .scale(1.0 / h);
            let an = curve.taylor_coefficient(t, 1).unwrap();
            assert!(fd.sub(&an).linf_norm() <= 1e-4 * (1.0 + an.linf_norm()));
        }
    }

    #[test]
    fn taylor_remainder_decays_at_expected_order() {
        let curve = standard_test_curve(test_grid());
        let t = 0.2;
        let big_k = 3;
        for eps in [0.1f64, 0.05] {
            let mut partial = GridField::constant(test_grid(), 0.0);
            for k in 0..=big_k {
                partial =
                    partial.add(&curve.taylor_coefficient(t, k).unwrap().scale(eps.powi(k as i32)));
            }
            let exact = curve.density_at(t + eps).unwrap();
            let rem = exact.sub(&partial).linf_norm();
            // Next coefficient bounds the remainder constant for this analytic curve.
            let c_next = curve.taylor_coefficient(t, big_k + 1).unwrap().linf_norm();
            assert!(rem <= 2.0 * c_next * eps.powi(big_k as i32 + 1), "eps={eps}, rem={rem}");
        }
    }

    #[test]
    fn velocity_potential_static_uniform_is_zero() {
        let curve = DensityCurve::uniform(test_grid());
        let vp = curve.velocity_potential(0.5).unwrap();
        assert!(vp.phi.linf_norm() < 1e-12);
    }

    #[test]
    fn velocity_potential_rotating_closed_form() {
        let grid = PeriodicGrid::line(128).unwrap();
        let curve = standard_test_curve(grid);
        let t = 0.37;
        let vp = curve.velocity_potential(t).unwrap();
        let rho = curve.density_at(t).unwrap();
        // Φ'(x) = 1 + C/ρ_t(x), C = -2π / ∮(1/ρ_t).
        let inv = rho.map(|v| 1.0 / v);
        let c = -TWO_PI / quadrature(&inv);
        let expect = inv.scale(c).map(|v| v + 1.0);
        let got = grid::derivative(&vp.phi, 0, 1);
        assert!(got.sub(&expect).linf_norm() <= 1e-9);
    }

    #[test]
    fn kinetic_energy_nonnegative_and_zero_iff_static() {
        let grid = test_grid();
        let moving = standard_test_curve(grid);
        let vp = moving.velocity_potential(0.1).unwrap();
        let energy = inner(&grid::grad_norm_sq(&vp.phi), &vp.rho);
        assert!(energy > 1e-6);

        let frozen = DensityCurve::static_modes(
            grid,
            vec![ModeSpec { z: [1, 0], amp: 0.5, phase: 0.0 }],
            0.07,
        )
        .unwrap();
        let vp = frozen.velocity_potential(0.1).unwrap();
        let energy = inner(&grid::grad_norm_sq(&vp.phi), &vp.rho);
        assert!(energy.abs() < 1e-20);
    }

    #[test]
    fn margin_violation_rejected() {
        let grid = test_grid();
        let r = DensityCurve::static_modes(
            grid,
            vec![ModeSpec { z: [1, 0], amp: 1.2, phase: 0.0 }],
            0.05,
        );
        assert!(matches!(r, Err(Error::MarginViolation(_))));
        let r = DensityCurve::static_modes(
            grid,
            vec![ModeSpec { z: [1, 0], amp: 0.5, phase: 0.0 }],
            0.2,
        );
        assert!(matches!(r, Err(Error::MarginViolation(_))));
    }

    #[test]
    fn t_outside_unit_interval_rejected() {
        let curve = standard_test_curve(test_grid());
        assert!(curve.density_at(1.2).is_err());
        assert!(curve.taylor_coefficient(-0.1, 2).is_err());
    }

    #[test]
    fn two_dimensional_curve_roundtrip() {
        let grid = PeriodicGrid::square(16).unwrap();
        let curve = DensityCurve::rotating(
            grid,
            vec![ModeSpec { z: [1, 1], amp: 0.4, phase: 0.2 }],
            [0.7, -0.3],
            0.01,
        )
        .unwrap();
        let t = 0.5;
        let rho = curve.density_at(t).unwrap();
        let expect = GridField::from_fn(grid, |x| {
            (1.0 + 0.4 * ((x[0] - 0.7 * t) + (x[1] + 0.3 * t) + 0.2).cos()) / (4.0 * PI * PI)
        });
        assert!(rho.sub(&expect).linf_norm() < 1e-13);
    }
}
