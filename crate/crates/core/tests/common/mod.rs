#![allow(dead_code)]

use std::f64::consts::PI;

use qnc_core::{Complex64, Spectrum, Symmetry};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Smooth Hermitian force: Gaussian bumps `Σ a_j e^{iφ_j} g(ω - w_j)` plus their
/// mirrors, multiplied by a taper that vanishes at `support`.
pub fn bumps(half: usize, d: f64, support: f64, bumps: &[(f64, f64, f64, f64)]) -> Spectrum {
    let pos = |omega: f64| -> Complex64 {
        if omega.abs() >= support {
            return c(0.0, 0.0);
        }
        let taper = (1.0 - (omega / support).powi(2)).powi(2);
        bumps
            .iter()
            .map(|&(a, phi, w, s)| {
                let g = |u: f64| (-(u * u) / (2.0 * s * s)).exp();
                a * (Complex64::from_polar(1.0, phi) * g(omega - w)
                    + Complex64::from_polar(1.0, -phi) * g(omega + w))
            })
            .sum::<Complex64>()
            * taper
    };
    Spectrum::symmetric_from_fn(half, d, Symmetry::Hermitian, pos)
        .unwrap()
        .with_support(support)
}

/// Lines of amplitude `a_j e^{iθ_j}` at grid frequencies `w_j > 0` (and mirrors).
pub fn lines(half: usize, d: f64, lines: &[(f64, Complex64)]) -> Spectrum {
    let support = lines.iter().map(|l| l.0).fold(0.0, f64::max);
    Spectrum::symmetric_from_fn(half, d, Symmetry::Hermitian, |omega| {
        for &(w, v) in lines {
            if (omega - w).abs() < 1e-9 * d {
                return v;
            }
            if (omega + w).abs() < 1e-9 * d {
                return v.conj();
            }
        }
        c(0.0, 0.0)
    })
    .unwrap()
    .with_support(support)
}

/// Transform of `Ω e^{-Ωt} cos(νt)`, `t ≥ 0`, truncated at `support`.
pub fn damped_cosine(half: usize, d: f64, nu: f64, omega_eff: f64, support: f64) -> Spectrum {
    let i = Complex64::i();
    Spectrum::symmetric_from_fn(half, d, Symmetry::Hermitian, |w| {
        if w.abs() > support + 1e-9 * d {
            return c(0.0, 0.0);
        }
        0.5 * omega_eff * (1.0 / (omega_eff - i * (w + nu)) + 1.0 / (omega_eff - i * (w - nu)))
    })
    .unwrap()
    .with_support(support)
}

/// Deterministic pseudo-random numbers in [0, 1) for building test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn phase(&mut self) -> f64 {
        2.0 * PI * self.next()
    }
}
