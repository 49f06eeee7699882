//! Recover the force spectrum from measured-signal spectra.
//!
//! Broadband (two measurement configurations): with `F_n = F(ω + nν)` the pair
//! `z_f`, `z'_f` gives the two-term recursion `F_n = α_n - β_n F_{n+1}` whose
//! solution is the alternating series `F(ω) = Σ (-1)ⁿ α_n Π_{k<n} β_k`.
//! Broadband (single configuration): `z_f` alone gives a three-term recursion.
//! Narrowband: a closed form when the shifted humps do not overlap (Case I)
//! and an alternating series over the comb `(n+1)Ω + Δ` when they do (Case II).
//!
//! The broadband series does not terminate by itself, so callers must bound it
//! with a term count or a declared force support. Recursions run backward from
//! the high-frequency end where the force is zero.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Spectrum, Symmetry};
use crate::transfer::{
    self, forward_broadband, narrowband_gain, resonance_denominator, Scheme, TransferContext,
    FACTORIZATION_SIGN,
};

const GAIN_FLOOR: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionScheme {
    BroadbandSeries,
    BroadbandThreeTerm,
    NarrowbandCase1,
    NarrowbandCase2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub force: Spectrum,
    /// Largest number of series or recursion terms used at any grid point.
    pub n_terms_used: usize,
    /// Magnitude of the last included term (largest over grid points).
    pub truncation_estimate: f64,
    /// Relative L2 mismatch between the input signals and the forward model
    /// applied to the reconstruction, when the check was requested.
    pub residual: Option<f64>,
    pub scheme: ReconstructionScheme,
}

/// How far the broadband recursions are carried.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Truncation {
    /// Highest term index `n` (terms `0..=n_max` are used).
    pub n_max: Option<usize>,
    /// Force known to vanish above this frequency.
    pub support_max: Option<f64>,
}

impl Truncation {
    pub fn terms(n_max: usize) -> Self {
        Self {
            n_max: Some(n_max),
            support_max: None,
        }
    }

    pub fn support(support_max: f64) -> Self {
        Self {
            n_max: None,
            support_max: Some(support_max),
        }
    }

    /// Highest usable index for base frequency `base`; `None` when no term is needed.
    fn last_index(&self, base: f64, nu: f64) -> Result<Option<usize>> {
        let from_support = match self.support_max {
            Some(w) if base > w * (1.0 + 1e-12) + 1e-12 => return Ok(None),
            Some(w) => Some(((w - base) / nu + 1e-9).floor() as usize),
            None => None,
        };
        match (self.n_max, from_support) {
            (Some(n), Some(s)) => Ok(Some(n.min(s))),
            (Some(n), None) => Ok(Some(n)),
            (None, Some(s)) => Ok(Some(s)),
            (None, None) => Err(Error::invalid(
                "truncation",
                "the broadband series does not terminate; give n_max or support_max",
            )),
        }
    }
}

fn require_broadband(ctx: &TransferContext, op: &'static str) -> Result<()> {
    if ctx.scheme != Scheme::Broadband {
        return Err(Error::InvalidParameter {
            name: "scheme",
            reason: format!("{op} needs a broadband context"),
        });
    }
    if !(ctx.gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{op} needs γ > 0"),
        });
    }
    Ok(())
}

/// `α_n = G(ω_n)·[z_f(ω_n) - i·z'_f(ω_n)] / ((1 - i)ν)` with `ω_n = ω + nν`.
pub fn alpha_n(
    n: usize,
    omega: f64,
    z_f: &Spectrum,
    z_prime_f: &Spectrum,
    ctx: &TransferContext,
) -> Result<Complex64> {
    const OP: &str = "alpha_n";
    let omega_n = omega + n as f64 * ctx.nu;
    let z = z_f.sample(omega_n, OP)?;
    let zp = z_prime_f.sample(omega_n, OP)?;
    let i = Complex64::i();
    Ok(resonance_denominator(omega_n, ctx) * (z - i * zp) / (Complex64::new(1.0, -1.0) * ctx.nu))
}

/// `β_n = σ·(2/(1 - i))·A(ω_{n+1})/ν`.
///
/// `σ` is [`FACTORIZATION_SIGN`]: eliminating `F(ω_n)/G(ω_n)` leaves
/// `2G(ω_n)/((1-i)νA(ω_n - ν))`, and `G = σ·A(ω_n + ν)A(ω_n - ν)`.
pub fn beta_n(n: usize, omega: f64, ctx: &TransferContext) -> Complex64 {
    let next = omega + (n + 1) as f64 * ctx.nu;
    FACTORIZATION_SIGN
        * (2.0 / Complex64::new(1.0, -1.0))
        * transfer::shifted_pole(Complex64::new(next, 0.0), ctx.gamma)
        / ctx.nu
}

/// Signed series terms `(-1)ⁿ α_n Π_{k<n} β_k` for `n = 0..=n_max`.
pub fn broadband_series_terms(
    omega: f64,
    z_f: &Spectrum,
    z_prime_f: &Spectrum,
    ctx: &TransferContext,
    n_max: usize,
) -> Result<Vec<Complex64>> {
    let mut product = Complex64::new(1.0, 0.0);
    let mut terms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(sign * alpha_n(n, omega, z_f, z_prime_f, ctx)? * product);
        product *= beta_n(n, omega, ctx);
    }
    Ok(terms)
}

/// Base frequencies `[0, ν)` on the grid, as grid offsets.
fn base_offsets(grid: &Spectrum, nu: f64, op: &'static str) -> Result<usize> {
    if !grid.divides(nu) {
        return Err(Error::GridMismatch {
            op,
            reason: format!("grid spacing {} does not divide ν = {nu}", grid.d_omega()),
        });
    }
    if grid.index_of(0.0).is_none() {
        return Err(Error::GridMismatch {
            op,
            reason: "signal grid must contain ω = 0".into(),
        });
    }
    Ok((nu / grid.d_omega()).round() as usize)
}

/// Place `F(ω ≥ 0)` values on the signal grid and mirror them to negative
/// frequencies. Zero-frequency values are made real.
fn assemble_hermitian(
    grid: &Spectrum,
    positive: impl Fn(f64) -> Option<Complex64>,
    support: f64,
) -> Result<Spectrum> {
    let values = grid
        .omegas()
        .map(|omega| {
            let v = positive(omega.abs()).unwrap_or_default();
            if omega.abs() <= 1e-9 * grid.d_omega() {
                Complex64::new(v.re, 0.0)
            } else if omega < 0.0 {
                v.conj()
            } else {
                v
            }
        })
        .collect();
    Ok(grid
        .with_values(values)?
        .with_symmetry(Symmetry::Hermitian)
        .with_support(support))
}

/// Store for `F(base + nν)` keyed by grid offset of the positive frequency.
struct PositiveValues {
    d_omega: f64,
    values: Vec<Option<Complex64>>,
}

impl PositiveValues {
    fn new(grid: &Spectrum) -> Self {
        let top = grid.last_omega().max(-grid.omega0());
        let count = (top / grid.d_omega()).round() as usize + 1;
        Self {
            d_omega: grid.d_omega(),
            values: vec![None; count],
        }
    }

    fn set(&mut self, offset: usize, value: Complex64) {
        if offset < self.values.len() {
            self.values[offset] = Some(value);
        }
    }

    fn get(&self, omega: f64) -> Option<Complex64> {
        let j = (omega / self.d_omega).round() as usize;
        self.values.get(j).copied().flatten()
    }
}

fn residual_check(
    op: &'static str,
    tolerance: Option<f64>,
    pairs: &[(&Spectrum, &Spectrum)],
) -> Result<Option<f64>> {
    let Some(tolerance) = tolerance else {
        return Ok(None);
    };
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (recomputed, input) in pairs {
        for (a, b) in recomputed.values().iter().zip(input.values()) {
            diff += (a - b).norm_sqr();
            norm += b.norm_sqr();
        }
    }
    let residual = if norm > 0.0 {
        (diff / norm).sqrt()
    } else {
        diff.sqrt()
    };
    if residual > tolerance {
        return Err(Error::ResidualCheck {
            op,
            residual,
            tolerance,
        });
    }
    Ok(Some(residual))
}

/// Broadband reconstruction from both configurations by the two-term recursion.
///
/// Every grid frequency `ω ≥ 0` is written as `base + nν` with `base ∈ [0, ν)`;
/// for each base the recursion runs from the last term down. Points beyond the
/// last term are zero, negative frequencies follow from Hermitian symmetry.
/// With `residual_tolerance` set, the forward model is re-applied to the result
/// and compared with the inputs.
pub fn reconstruct_broadband(
    z_f: &Spectrum,
    z_prime_f: &Spectrum,
    ctx: &TransferContext,
    truncation: Truncation,
    residual_tolerance: Option<f64>,
) -> Result<ReconstructionReport> {
    const OP: &str = "reconstruct_broadband";
    require_broadband(ctx, OP)?;
    z_f.ensure_same_grid(z_prime_f, OP)?;
    let nu = ctx.nu;
    let n_bases = base_offsets(z_f, nu, OP)?;
    let d = z_f.d_omega();

    let mut store = PositiveValues::new(z_f);
    let mut n_terms_used = 0;
    let mut truncation_estimate: f64 = 0.0;
    let mut reach: f64 = 0.0;
    for b in 0..n_bases {
        let base = b as f64 * d;
        let Some(last) = truncation.last_index(base, nu)? else {
            continue;
        };
        let alphas = (0..=last)
            .map(|n| alpha_n(n, base, z_f, z_prime_f, ctx))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Complex64::new(0.0, 0.0);
        for n in (0..=last).rev() {
            let value = alphas[n] - beta_n(n, base, ctx) * next;
            store.set(b + n * n_bases, value);
            next = value;
        }
        let tail = (0..last).fold(alphas[last], |acc, k| acc * beta_n(k, base, ctx));
        truncation_estimate = truncation_estimate.max(tail.norm());
        n_terms_used = n_terms_used.max(last + 1);
        reach = reach.max(base + last as f64 * nu);
    }

    let force = assemble_hermitian(z_f, |omega| store.get(omega), reach)?;
    let residual = match residual_tolerance {
        Some(_) => {
            let (z_re, zp_re) = forward_broadband(&force, ctx)?;
            residual_check(OP, residual_tolerance, &[(&z_re, z_f), (&zp_re, z_prime_f)])?
        }
        None => None,
    };
    Ok(ReconstructionReport {
        force,
        n_terms_used,
        truncation_estimate,
        residual,
        scheme: ReconstructionScheme::BroadbandSeries,
    })
}

/// Coefficients of the single-configuration recursion
/// `F_n = -a_n z_f(ω_n) + (a_n/b_n)·ν·F_{n+1} - (a_n/c_n)·F_{n+2}`, `ω_n = (n+1)ν + ω`.
///
/// Substituting `ω_n` into `z_f` gives
/// `z_f(ω_n) = -F_n/A(ω_n+ν) + νF_{n+1}/G(ω_n) + F_{n+2}/A(ω_n-ν)`, hence
/// `a_n = A(ω_n + ν)`, `b_n = G(ω_n)`, `c_n = -A(ω_n - ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeTermCoefficients {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

pub fn three_term_coefficients(omega_n: f64, ctx: &TransferContext) -> ThreeTermCoefficients {
    ThreeTermCoefficients {
        a: Complex64::new(omega_n + ctx.nu, ctx.gamma / 2.0),
        b: resonance_denominator(omega_n, ctx),
        c: -Complex64::new(omega_n - ctx.nu, ctx.gamma / 2.0),
    }
}

impl ThreeTermCoefficients {
    /// Right-hand side of the recursion for `F_n`.
    pub fn apply(&self, nu: f64, z: Complex64, next: Complex64, next_next: Complex64) -> Complex64 {
        -self.a * z + self.a / self.b * nu * next - self.a / self.c * next_next
    }
}

/// Broadband reconstruction from `z_f` alone by the three-term recursion,
/// started from `F_{n_max+1} = F_{n_max+2} = 0`.
///
/// The residual check detects a term limit too small for the force support.
pub fn reconstruct_broadband_three_term(
    z_f: &Spectrum,
    ctx: &TransferContext,
    n_max: usize,
    residual_tolerance: Option<f64>,
) -> Result<ReconstructionReport> {
    const OP: &str = "reconstruct_broadband_three_term";
    require_broadband(ctx, OP)?;
    let nu = ctx.nu;
    let n_bases = base_offsets(z_f, nu, OP)?;
    let d = z_f.d_omega();

    let mut store = PositiveValues::new(z_f);
    let mut truncation_estimate: f64 = 0.0;
    for b in 0..n_bases {
        let base = b as f64 * d;
        let (mut next, mut next_next) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for n in (0..=n_max).rev() {
            let omega_n = (n + 1) as f64 * nu + base;
            let z = z_f.sample(omega_n, OP)?;
            let coeffs = three_term_coefficients(omega_n, ctx);
            let value = coeffs.apply(nu, z, next, next_next);
            if n == n_max {
                truncation_estimate = truncation_estimate.max(value.norm());
            }
            store.set(b + n * n_bases, value);
            next_next = next;
            next = value;
        }
    }

    let reach = n_max as f64 * nu + (n_bases - 1) as f64 * d;
    let force = assemble_hermitian(z_f, |omega| store.get(omega), reach)?;
    let residual = match residual_tolerance {
        Some(_) => {
            let (z_re, _) = forward_broadband(&force, ctx)?;
            residual_check(OP, residual_tolerance, &[(&z_re, z_f)])?
        }
        None => None,
    };
    Ok(ReconstructionReport {
        force,
        n_terms_used: n_max + 1,
        truncation_estimate,
        residual,
        scheme: ReconstructionScheme::BroadbandThreeTerm,
    })
}

/// Offsets `Δ` (inclusive range) at which the narrowband force is reconstructed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRange {
    pub lo: f64,
    pub hi: f64,
}

impl DeltaRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(
                "delta",
                format!("need lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// The open band `(-Ω, Ω)` sampled at grid spacing `d_omega`.
    pub fn open_band(omega_eff: f64, d_omega: f64) -> Result<Self> {
        let steps = (omega_eff / d_omega).round() as i64 - 1;
        if steps < 0 {
            return Err(Error::invalid(
                "d_omega",
                "grid spacing must be smaller than Ω",
            ));
        }
        Self::new(-(steps as f64) * d_omega, steps as f64 * d_omega)
    }

    fn offsets(&self, d_omega: f64) -> Vec<f64> {
        let first = (self.lo / d_omega).round() as i64;
        let last = (self.hi / d_omega).round() as i64;
        (first..=last).map(|j| j as f64 * d_omega).collect()
    }
}

fn narrowband_setup(
    z_pos: &Spectrum,
    z_tilde_pos: &Spectrum,
    ctx: &TransferContext,
    deltas: DeltaRange,
    op: &'static str,
) -> Result<(f64, Vec<f64>)> {
    let Some(omega_eff) = ctx.omega_eff() else {
        return Err(Error::InvalidParameter {
            name: "scheme",
            reason: format!("{op} needs a narrowband context"),
        });
    };
    z_pos.ensure_same_grid(z_tilde_pos, op)?;
    let d = z_pos.d_omega();
    for (name, value) in [
        ("ν", ctx.nu),
        ("Ω", omega_eff),
        ("Δ lo", deltas.lo),
        ("Δ hi", deltas.hi),
    ] {
        if !z_pos.divides(value) {
            return Err(Error::GridMismatch {
                op,
                reason: format!("grid spacing {d} does not divide {name} = {value}"),
            });
        }
    }
    if deltas.lo <= -omega_eff || deltas.hi >= omega_eff {
        return Err(Error::invalid(
            "delta",
            format!(
                "Δ range [{}, {}] must lie inside (-Ω, Ω) with Ω = {omega_eff}",
                deltas.lo, deltas.hi
            ),
        ));
    }
    Ok((omega_eff, deltas.offsets(d)))
}

fn gain_checked(omega: f64, ctx: &TransferContext, op: &'static str) -> Result<Complex64> {
    let gain = narrowband_gain(omega, ctx)?;
    if gain.norm() < GAIN_FLOOR {
        return Err(Error::IllConditioned {
            op,
            omega,
            magnitude: gain.norm(),
        });
    }
    Ok(gain)
}

fn band_spectrum(nu: f64, offsets: &[f64], d: f64, values: Vec<Complex64>) -> Result<Spectrum> {
    let first = offsets.first().copied().unwrap_or(0.0);
    let last = offsets.last().copied().unwrap_or(0.0);
    Ok(Spectrum::new(nu + first, d, values, Symmetry::PositivePartOnly)?.with_support(nu + last))
}

/// Case I closed form `F^pos(ν + Δ) = [z^pos(Ω+Δ) - i·z̃^pos(Ω+Δ)] / (2B(Ω+Δ))`.
///
/// Valid when the damping is well below `Ω`; `γ > Ω/10` is allowed but logged.
pub fn reconstruct_narrowband_case1(
    z_pos: &Spectrum,
    z_tilde_pos: &Spectrum,
    ctx: &TransferContext,
    deltas: DeltaRange,
) -> Result<ReconstructionReport> {
    const OP: &str = "reconstruct_narrowband_case1";
    let (omega_eff, offsets) = narrowband_setup(z_pos, z_tilde_pos, ctx, deltas, OP)?;
    if ctx.gamma > omega_eff / 10.0 {
        log::warn!(
            "{OP}: γ = {} exceeds Ω/10 = {}; the shifted humps overlap and the closed form is approximate",
            ctx.gamma,
            omega_eff / 10.0
        );
    }
    let i = Complex64::i();
    let values = offsets
        .iter()
        .map(|&delta| {
            let omega = omega_eff + delta;
            let gain = gain_checked(omega, ctx, OP)?;
            let z = z_pos.sample(omega, OP)?;
            let zt = z_tilde_pos.sample(omega, OP)?;
            Ok((z - i * zt) / (2.0 * gain))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionReport {
        force: band_spectrum(ctx.nu, &offsets, z_pos.d_omega(), values)?,
        n_terms_used: 1,
        truncation_estimate: 0.0,
        residual: None,
        scheme: ReconstructionScheme::NarrowbandCase1,
    })
}

/// Number of Case II terms `N = ceil(r/ε)` with `r = γ/Ω`, at least one.
pub fn case2_term_count(gamma: f64, omega_eff: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("must lie in (0, 1), got {epsilon}"),
        ));
    }
    let r = gamma / omega_eff;
    // Guard against r/ε landing a rounding error above an integer.
    let n = (r / epsilon * (1.0 - 1e-12)).ceil();
    Ok((n as usize).max(1))
}

/// Case II with the term count set by the tolerance `epsilon`.
pub fn reconstruct_narrowband_case2(
    z_pos: &Spectrum,
    z_tilde_pos: &Spectrum,
    ctx: &TransferContext,
    epsilon: f64,
    deltas: DeltaRange,
) -> Result<ReconstructionReport> {
    let omega_eff = ctx.omega_eff().ok_or_else(|| {
        Error::invalid(
            "scheme",
            "reconstruct_narrowband_case2 needs a narrowband context",
        )
    })?;
    let n_terms = case2_term_count(ctx.gamma, omega_eff, epsilon)?;
    reconstruct_narrowband_case2_terms(z_pos, z_tilde_pos, ctx, n_terms, deltas)
}

/// Case II alternating series `F(ν + Δ) = Σ_{n<N} (-1)ⁿ (Z_{2n} + Z̃_{2n})`.
///
/// `Z_m = z^pos((m+1)Ω + Δ) / (2B)` and `Z̃_m = -i·z̃^pos((m+1)Ω + Δ) / (2B)`, which
/// makes `Z_m + Z̃_m = F(ν + mΩ + Δ) + F(ν + (m+2)Ω + Δ)` and agrees with the
/// Case I closed form at `N = 1`. Only the `+Δ` comb is used; at `Δ = 0` the
/// `±Δ` combs coincide.
pub fn reconstruct_narrowband_case2_terms(
    z_pos: &Spectrum,
    z_tilde_pos: &Spectrum,
    ctx: &TransferContext,
    n_terms: usize,
    deltas: DeltaRange,
) -> Result<ReconstructionReport> {
    const OP: &str = "reconstruct_narrowband_case2";
    if n_terms == 0 {
        return Err(Error::invalid("n_terms", "at least one term is needed"));
    }
    let (omega_eff, offsets) = narrowband_setup(z_pos, z_tilde_pos, ctx, deltas, OP)?;
    let i = Complex64::i();
    let pair_sum = |m: usize, delta: f64| -> Result<Complex64> {
        let omega = (m + 1) as f64 * omega_eff + delta;
        let gain = gain_checked(omega, ctx, OP)?;
        let z = z_pos.sample(omega, OP)?;
        let zt = z_tilde_pos.sample(omega, OP)?;
        Ok((z - i * zt) / (2.0 * gain))
    };
    let mut truncation_estimate: f64 = 0.0;
    let values = offsets
        .iter()
        .map(|&delta| {
            let mut total = Complex64::new(0.0, 0.0);
            let mut last = Complex64::new(0.0, 0.0);
            for n in 0..n_terms {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                last = pair_sum(2 * n, delta)?;
                total += sign * last;
            }
            truncation_estimate = truncation_estimate.max(last.norm());
            Ok(total)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionReport {
        force: band_spectrum(ctx.nu, &offsets, z_pos.d_omega(), values)?,
        n_terms_used: n_terms,
        truncation_estimate,
        residual: None,
        scheme: ReconstructionScheme::NarrowbandCase2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::forward_narrowband;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zero_grid(half: usize, d: f64) -> Spectrum {
        Spectrum::symmetric_from_fn(half, d, Symmetry::Hermitian, |_| c(0.0, 0.0))
            .unwrap()
            .with_support(0.0)
    }

    #[test]
    fn beta_modulus() {
        let ctx = TransferContext::broadband(1.0, 0.2).unwrap();
        for (n, omega) in [(0, 0.0), (3, 0.25), (7, 0.9)] {
            let next = omega + (n + 1) as f64;
            let expected = 2f64.sqrt() * c(next, 0.1).norm();
            assert!((beta_n(n, omega, &ctx).norm() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn alpha_zero_signals() {
        let ctx = TransferContext::broadband(1.0, 0.2).unwrap();
        let z = zero_grid(16, 0.25);
        assert_eq!(alpha_n(2, 0.5, &z, &z, &ctx).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            alpha_n(0, 0.1, &z, &z, &ctx),
            Err(Error::OffGrid { .. })
        ));
    }

    #[test]
    fn zero_signals_reconstruct_zero() {
        let ctx = TransferContext::broadband(1.0, 0.2).unwrap();
        let z = zero_grid(32, 0.25);
        for n_max in [0, 1, 5] {
            let r = reconstruct_broadband(&z, &z, &ctx, Truncation::terms(n_max), None).unwrap();
            assert!(r.force.values().iter().all(|v| v.norm() == 0.0));
            let r = reconstruct_broadband_three_term(&z, &ctx, n_max.min(5), None).unwrap();
            assert!(r.force.values().iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn truncation_is_required() {
        let ctx = TransferContext::broadband(1.0, 0.2).unwrap();
        let z = zero_grid(16, 0.25);
        assert!(matches!(
            reconstruct_broadband(&z, &z, &ctx, Truncation::default(), None),
            Err(Error::InvalidParameter {
                name: "truncation",
                ..
            })
        ));
    }

    #[test]
    fn term_count_rule() {
        assert_eq!(case2_term_count(0.1, 1.0, 0.01).unwrap(), 10);
        assert_eq!(case2_term_count(1.0, 1.0, 0.03).unwrap(), 34);
        assert_eq!(case2_term_count(0.01, 1.0, 0.5).unwrap(), 1);
        assert!(case2_term_count(1.0, 1.0, 0.0).is_err());
        assert!(case2_term_count(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn narrowband_zero_signals() {
        let ctx = TransferContext::narrowband(1.0, 0.01, 0.1).unwrap();
        let d = 0.01;
        let force = zero_grid(300, d);
        let (z, zt) = forward_narrowband(&force, &ctx).unwrap();
        let band = DeltaRange::open_band(0.1, d).unwrap();
        let r1 = reconstruct_narrowband_case1(&z, &zt, &ctx, band).unwrap();
        assert!(r1.force.values().iter().all(|v| v.norm() == 0.0));
        let r2 = reconstruct_narrowband_case2(&z, &zt, &ctx, 0.2, band).unwrap();
        assert!(r2.force.values().iter().all(|v| v.norm() == 0.0));
        assert!(reconstruct_narrowband_case2(&z, &zt, &ctx, 0.0, band).is_err());
    }

    #[test]
    fn single_line_case1() {
        let (nu, omega_eff, d) = (1.0, 0.1, 0.005);
        let ctx = TransferContext::narrowband(nu, omega_eff / 100.0, omega_eff).unwrap();
        let delta = 0.03;
        let value = c(0.4, -1.3);
        let force = Spectrum::symmetric_from_fn(400, d, Symmetry::Hermitian, |w| {
            if (w - (nu + delta)).abs() < 1e-9 {
                value
            } else if (w + nu + delta).abs() < 1e-9 {
                value.conj()
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap()
        .with_support(nu + delta);
        let (z, zt) = forward_narrowband(&force, &ctx).unwrap();
        let b = narrowband_gain(omega_eff + delta, &ctx).unwrap();
        let z_line = z.value_at(omega_eff + delta).unwrap();
        let zt_line = zt.value_at(omega_eff + delta).unwrap();
        assert!((z_line - b * value).norm() < 1e-12 * (b * value).norm());
        assert!((zt_line - c(0.0, 1.0) * b * value).norm() < 1e-12 * (b * value).norm());
        let r = reconstruct_narrowband_case1(&z, &zt, &ctx, DeltaRange::new(delta, delta).unwrap())
            .unwrap();
        assert!((r.force.values()[0] - value).norm() < 1e-12);
        assert!((r.force.omega0() - (nu + delta)).abs() < 1e-12);
    }

    #[test]
    fn delta_range_must_stay_in_band() {
        let ctx = TransferContext::narrowband(1.0, 0.001, 0.1).unwrap();
        let z = zero_grid(300, 0.01).positive_part().unwrap();
        assert!(
            reconstruct_narrowband_case1(&z, &z, &ctx, DeltaRange::new(-0.1, 0.0).unwrap())
                .is_err()
        );
        assert!(
            reconstruct_narrowband_case1(&z, &z, &ctx, DeltaRange::new(0.0, 0.005).unwrap())
                .is_err()
        );
    }
}
