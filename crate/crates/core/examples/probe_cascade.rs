use sbridge::curves::standard_test_curve;
use sbridge::expansion;
use sbridge::grid::{self, GridField, PeriodicGrid};

fn main() {
    for n in [48usize, 64, 96, 128, 192, 256] {
        let g = PeriodicGrid::line(n).unwrap();
        let curve = standard_test_curve(g);
        match expansion::scb_coefficients(&curve, 0.3, 3) {
            Ok(c) => {
                let mut worst_u = 0.0f64;
                let mut worst_v = 0.0f64;
                for k in 1..=3 {
                    let mut cu = c.u[k].clone();
                    let mut cv = c.v[k].clone();
                    for i in 1..=k {
                        cu = cu.add(&c.u[0].mul(&c.u[k - i].mul(&c.u_dag[i])));
                        cv = cv.add(&c.v[0].mul(&c.v[k - i].mul(&c.v_dag[i])));
                    }
                    worst_u = worst_u.max(cu.linf_norm());
                    worst_v = worst_v.max(cv.linf_norm());
                }
                // spectral decay of the highest-order field
                let spec = grid::transform(&c.u[3]);
                let tail = spec.coeffs()[n / 2].norm();
                println!(
                    "n={n}: dagger_u={worst_u:.2e} dagger_v={worst_v:.2e} solv={:?} u3_nyquist={tail:.2e} u3_inf={:.3e}",
                    c.solvability_residuals.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>(),
                    c.u[3].linf_norm()
                );
            }
            Err(e) => println!("n={n}: ERR {e}"),
        }
        let _ = GridField::constant(g, 0.0);
    }
}
