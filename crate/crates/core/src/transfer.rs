//! Frequency-domain forward models: how a force spectrum shows up in the
//! measured signals of the broadband (momentum-measurement) and narrowband
//! (modulated position-measurement) schemes.
//!
//! Notation: `A(s) = s + iγ/2` ([`shifted_pole`]) and
//! `G(ω) = (γ/2 - iω)² + c²` ([`resonance_denominator`]) with `c = ν` for the
//! broadband scheme and `c = Ω` for the narrowband one. Expanding the
//! definitions gives `G(ω) = -A(ω + c)·A(ω - c)`; see [`FACTORIZATION_SIGN`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Spectrum, Symmetry};

/// Sign `σ` in `G(ω) = σ·A(ω + c)·A(ω - c)`.
///
/// `(γ/2 - iω ∓ ic) = -i·A(ω ± c)`, so the product of the two linear factors
/// picks up `(-i)² = -1`.
pub const FACTORIZATION_SIGN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Broadband,
    Narrowband { omega_eff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferContext {
    pub nu: f64,
    pub gamma: f64,
    pub scheme: Scheme,
}

impl TransferContext {
    pub fn broadband(nu: f64, gamma: f64) -> Result<Self> {
        validate_common(nu, gamma)?;
        Ok(Self {
            nu,
            gamma,
            scheme: Scheme::Broadband,
        })
    }

    pub fn narrowband(nu: f64, gamma: f64, omega_eff: f64) -> Result<Self> {
        validate_common(nu, gamma)?;
        if !(omega_eff > 0.0 && omega_eff < nu) {
            return Err(Error::invalid(
                "omega_eff",
                format!("narrowband needs 0 < Ω < ν, got Ω = {omega_eff}, ν = {nu}"),
            ));
        }
        Ok(Self {
            nu,
            gamma,
            scheme: Scheme::Narrowband { omega_eff },
        })
    }

    /// Frequency entering `G`: `ν` (broadband) or `Ω` (narrowband).
    pub fn oscillator_frequency(&self) -> f64 {
        match self.scheme {
            Scheme::Broadband => self.nu,
            Scheme::Narrowband { omega_eff } => omega_eff,
        }
    }

    pub fn omega_eff(&self) -> Option<f64> {
        match self.scheme {
            Scheme::Broadband => None,
            Scheme::Narrowband { omega_eff } => Some(omega_eff),
        }
    }

    fn require_damping(&self, op: &'static str) -> Result<()> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("{op} needs γ > 0 for a well-defined steady state"),
            })
        }
    }
}

fn validate_common(nu: f64, gamma: f64) -> Result<()> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::invalid(
            "nu",
            format!("must be finite and > 0, got {nu}"),
        ));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::invalid(
            "gamma",
            format!("must be finite and >= 0, got {gamma}"),
        ));
    }
    Ok(())
}

/// `A(s) = s + iγ/2`.
pub fn shifted_pole(s: Complex64, gamma: f64) -> Complex64 {
    s + Complex64::new(0.0, gamma / 2.0)
}

fn pole(s: f64, gamma: f64) -> Complex64 {
    Complex64::new(s, gamma / 2.0)
}

/// `G(ω) = (γ/2 - iω)² + c²`.
pub fn resonance_denominator(omega: f64, ctx: &TransferContext) -> Complex64 {
    let c = ctx.oscillator_frequency();
    let lead = Complex64::new(ctx.gamma / 2.0, -omega);
    lead * lead + c * c
}

/// Position response `x_f(ω) = [c·S_p(ω) + (γ/2 - iω)·S_x(ω)] / G(ω)` of a damped
/// oscillator to drives `S_x`, `S_p` on its position and momentum equations.
pub fn driven_response(s_x: &Spectrum, s_p: &Spectrum, ctx: &TransferContext) -> Result<Spectrum> {
    const OP: &str = "driven_response";
    s_x.ensure_same_grid(s_p, OP)?;
    ctx.require_damping(OP)?;
    let c = ctx.oscillator_frequency();
    let values = s_x
        .omegas()
        .zip(s_x.values().iter().zip(s_p.values()))
        .map(|(omega, (sx, sp))| {
            let g = resonance_denominator(omega, ctx);
            (c * sp + Complex64::new(ctx.gamma / 2.0, -omega) * sx) / g
        })
        .collect();
    let symmetry = if s_x.symmetry() == Symmetry::Hermitian && s_p.symmetry() == Symmetry::Hermitian
    {
        Symmetry::Hermitian
    } else {
        Symmetry::General
    };
    Ok(s_x.with_values(values)?.with_symmetry(symmetry))
}

fn require_hermitian(force: &Spectrum, op: &'static str) -> Result<()> {
    if force.symmetry() == Symmetry::Hermitian {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "force",
            reason: format!("{op} needs a Hermitian (real-signal) force spectrum"),
        })
    }
}

fn require_divides(force: &Spectrum, omega: f64, name: &str, op: &'static str) -> Result<()> {
    if force.divides(omega) {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            op,
            reason: format!(
                "grid spacing {} does not divide {name} = {omega}",
                force.d_omega()
            ),
        })
    }
}

/// Broadband signals for the two measurement configurations:
///
/// ```text
/// z_f(ω)  = -F(ω-ν)/A(ω+ν) + νF(ω)/G(ω) +  F(ω+ν)/A(ω-ν)
/// z'_f(ω) = iF(ω-ν)/A(ω+ν) + νF(ω)/G(ω) + iF(ω+ν)/A(ω-ν)
/// ```
///
/// Both outputs live on the force grid and are Hermitian.
pub fn forward_broadband(force: &Spectrum, ctx: &TransferContext) -> Result<(Spectrum, Spectrum)> {
    const OP: &str = "forward_broadband";
    if ctx.scheme != Scheme::Broadband {
        return Err(Error::invalid(
            "scheme",
            "forward_broadband needs a broadband context",
        ));
    }
    ctx.require_damping(OP)?;
    require_hermitian(force, OP)?;
    let nu = ctx.nu;
    require_divides(force, nu, "ν", OP)?;

    let mut z = Vec::with_capacity(force.len());
    let mut z_prime = Vec::with_capacity(force.len());
    let i = Complex64::i();
    for (j, omega) in force.omegas().enumerate() {
        let below = force.sample(omega - nu, OP)?;
        let above = force.sample(omega + nu, OP)?;
        let here = force.values()[j];
        let lower = below / pole(omega + nu, ctx.gamma);
        let direct = nu * here / resonance_denominator(omega, ctx);
        let upper = above / pole(omega - nu, ctx.gamma);
        z.push(-lower + direct + upper);
        z_prime.push(i * lower + direct + i * upper);
    }
    let support = force.support().map(|w| w + nu);
    let mut z = force.with_values(z)?;
    let mut z_prime = force.with_values(z_prime)?;
    if let Some(w) = support {
        z = z.with_support(w);
        z_prime = z_prime.with_support(w);
    }
    Ok((z, z_prime))
}

/// Narrowband gain `B(ω) = [γ/2 - i(ω - Ω)] / (2G(ω))`.
pub fn narrowband_gain(omega: f64, ctx: &TransferContext) -> Result<Complex64> {
    let Scheme::Narrowband { omega_eff } = ctx.scheme else {
        return Err(Error::invalid(
            "scheme",
            "narrowband_gain needs a narrowband context",
        ));
    };
    let g = resonance_denominator(omega, ctx);
    if g.norm() == 0.0 {
        return Err(Error::Pole {
            op: "narrowband_gain",
            omega,
        });
    }
    Ok(Complex64::new(ctx.gamma / 2.0, -(omega - omega_eff)) / (2.0 * g))
}

/// Positive-frequency part `F^pos`; a zero-frequency sample is split evenly
/// between the two halves so that `F^neg(-ω) = F^pos(ω)*` holds everywhere.
fn positive_half(force: &Spectrum, omega: f64, op: &'static str) -> Result<Complex64> {
    let eps = 1e-9 * force.d_omega();
    if omega > eps {
        force.sample(omega, op)
    } else if omega >= -eps {
        Ok(force.sample(0.0, op)? / 2.0)
    } else {
        Ok(Complex64::new(0.0, 0.0))
    }
}

fn negative_half(force: &Spectrum, omega: f64, op: &'static str) -> Result<Complex64> {
    let eps = 1e-9 * force.d_omega();
    if omega < -eps {
        force.sample(omega, op)
    } else if omega <= eps {
        Ok(force.sample(0.0, op)? / 2.0)
    } else {
        Ok(Complex64::new(0.0, 0.0))
    }
}

/// Positive-frequency parts of the two narrowband configurations:
///
/// ```text
/// z^pos(ω)  =  B(ω)·[F^pos(ω+ν-Ω) + F^neg(ω-ν-Ω) + F^pos(ω+ν+Ω) + F^neg(ω-ν+Ω)]
/// z̃^pos(ω) = iB(ω)·[F^pos(ω+ν-Ω) - F^neg(ω-ν-Ω) + F^pos(ω+ν+Ω) - F^neg(ω-ν+Ω)]
/// ```
///
/// One common prefactor multiplies all four terms. Outputs are sampled on the
/// `ω >= 0` points of the force grid.
pub fn forward_narrowband(force: &Spectrum, ctx: &TransferContext) -> Result<(Spectrum, Spectrum)> {
    const OP: &str = "forward_narrowband";
    let Scheme::Narrowband { omega_eff } = ctx.scheme else {
        return Err(Error::invalid(
            "scheme",
            "forward_narrowband needs a narrowband context",
        ));
    };
    ctx.require_damping(OP)?;
    require_hermitian(force, OP)?;
    require_divides(force, ctx.nu, "ν", OP)?;
    require_divides(force, omega_eff, "Ω", OP)?;

    let grid = force.positive_part()?;
    let (lo_shift, hi_shift) = (ctx.nu - omega_eff, ctx.nu + omega_eff);
    let i = Complex64::i();
    let mut z = Vec::with_capacity(grid.len());
    let mut z_tilde = Vec::with_capacity(grid.len());
    for omega in grid.omegas() {
        let gain = narrowband_gain(omega, ctx)?;
        let pos_near = positive_half(force, omega + lo_shift, OP)?;
        let neg_near = negative_half(force, omega - hi_shift, OP)?;
        let pos_far = positive_half(force, omega + hi_shift, OP)?;
        let neg_far = negative_half(force, omega - lo_shift, OP)?;
        z.push(gain * (pos_near + neg_near + pos_far + neg_far));
        z_tilde.push(i * gain * (pos_near - neg_near + pos_far - neg_far));
    }
    let support = force.support().map(|w| w + hi_shift);
    let mut z = grid.with_values(z)?;
    let mut z_tilde = grid.with_values(z_tilde)?;
    if let Some(w) = support {
        z = z.with_support(w);
        z_tilde = z_tilde.with_support(w);
    }
    Ok((z, z_tilde))
}

/// Steady-state response of a measured rotating quadrature to a force on the
/// physical oscillator.
///
/// For an oscillator at `nu` with symmetric damping `gamma`, measured through
/// `x cos(rot·t + phase) - p sin(rot·t + phase)`, the force component `F(ω')`
/// reaches the measured signal at `ω = ω' ∓ rot` as
///
/// ```text
/// y_f(ω) = -e^{iφ} F(ω + rot) / (2A(ω - e)) + e^{-iφ} F(ω - rot) / (2A(ω + e)),   e = nu - rot
/// ```
///
/// This is obtained directly from the time-domain equations of motion and is
/// used to check simulated records; `force` may return line amplitudes as well
/// as spectral densities since the relation is linear and pointwise.
pub fn measured_quadrature_response(
    omega: f64,
    force: impl Fn(f64) -> Complex64,
    nu: f64,
    gamma: f64,
    rot_freq: f64,
    phase: f64,
) -> Complex64 {
    let apparent = nu - rot_freq;
    let rotate = Complex64::from_polar(1.0, phase);
    -rotate * force(omega + rot_freq) / (2.0 * pole(omega - apparent, gamma))
        + rotate.conj() * force(omega - rot_freq) / (2.0 * pole(omega + apparent, gamma))
}
