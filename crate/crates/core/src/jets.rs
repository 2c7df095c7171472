//! Truncated Taylor ("jet") arithmetic in one real variable with complex
//! coefficients.
//!
//! A [`Jet`] of order `P` holds `c_0..=c_P` with `f(t0 + s) = Σ c_k s^k`, so
//! `c_k = f^(k)(t0) / k!`. Products, quotients and complex exponentials
//! propagate derivatives exactly, which is how the density curves expose
//! closed-form time-Taylor coefficients of any required order.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    c: Vec<Complex64>,
}

impl Jet {
    pub fn zero(order: usize) -> Self {
        Self { c: vec![Complex64::new(0.0, 0.0); order + 1] }
    }

    pub fn constant(v: Complex64, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.c[0] = v;
        j
    }

    /// Jet of the identity `t ↦ t` at `t0`.
    pub fn variable(t0: f64, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.c[0] = Complex64::new(t0, 0.0);
        if order >= 1 {
            j.c[1] = Complex64::new(1.0, 0.0);
        }
        j
    }

    /// Jet of the real polynomial `Σ a_j t^j` at `t0`.
    pub fn polynomial(coeffs: &[f64], t0: f64, order: usize) -> Self {
        let mut j = Self::zero(order);
        // c_k = Σ_{j>=k} a_j C(j, k) t0^{j-k}
        for (deg, &a) in coeffs.iter().enumerate() {
            let mut binom = 1.0f64;
            for k in 0..=deg.min(order) {
                j.c[k] += Complex64::new(a * binom * t0.powi((deg - k) as i32), 0.0);
                binom = binom * (deg - k) as f64 / (k + 1) as f64;
            }
        }
        j
    }

    /// Jet of `e^{i(ω t + φ)}` at `t0`:  `c_k = e^{i(ω t0 + φ)} (iω)^k / k!`.
    pub fn complex_wave(omega: f64, phase: f64, t0: f64, order: usize) -> Self {
        let mut j = Self::zero(order);
        let base = Complex64::new(0.0, omega * t0 + phase).exp();
        let iw = Complex64::new(0.0, omega);
        let mut factor = Complex64::new(1.0, 0.0);
        for k in 0..=order {
            j.c[k] = base * factor;
            factor *= iw / (k as f64 + 1.0);
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.c[k]
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(&other.c) {
            *a += b;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        Jet { c: self.c.iter().map(|&v| v * s).collect() }
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let p = self.order();
        let mut out = Jet::zero(p);
        for k in 0..=p {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..=k {
                acc += self.c[i] * other.c[k - i];
            }
            out.c[k] = acc;
        }
        out
    }

    /// Quotient `self / other`; requires `other.c[0] != 0`.
    pub fn div(&self, other: &Jet) -> Jet {
        let p = self.order();
        let mut out = Jet::zero(p);
        out.c[0] = self.c[0] / other.c[0];
        for k in 1..=p {
            let mut acc = self.c[k];
            for i in 1..=k {
                acc -= other.c[i] * out.c[k - i];
            }
            out.c[k] = acc / other.c[0];
        }
        out
    }

    pub fn conj(&self) -> Jet {
        Jet { c: self.c.iter().map(|v| v.conj()).collect() }
    }
}
