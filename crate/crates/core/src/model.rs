//! Domain types shared by the simulation, transfer and reconstruction code.
//!
//! Everything is in dimensionless natural units: frequencies and rates are in
//! inverse time, positions and momenta are the dimensionless quadratures
//! `x = b + b†`, `p = -i(b - b†)`.
//!
//! Fourier convention used throughout the crate:
//!
//! ```text
//! F(ω) = ∫ f(t) e^{+iωt} dt          f(t) = (1/2π) ∫ F(ω) e^{-iωt} dω
//! ```
//!
//! so a time derivative maps to multiplication by `-iω`. With this choice the
//! damped-oscillator response `x_f = [ν S_p + (γ/2 - iω) S_x] / G(ω)` comes out
//! exactly as written in [`crate::transfer::driven_response`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used when snapping a frequency onto a grid index.
const GRID_SNAP: f64 = 1e-6;

/// Largest relative imaginary part tolerated on a zero-frequency sample that
/// is about to be forced real.
const DC_IMAG_TOLERANCE: f64 = 1e-9;

/// Frequency, damping and thermal occupation of one mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    pub nu: f64,
    pub gamma: f64,
    pub n_thermal: f64,
    weak_damping: bool,
}

impl OscillatorParams {
    pub fn new(nu: f64, gamma: f64, n_thermal: f64) -> Result<Self> {
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
        if !(n_thermal.is_finite() && n_thermal >= 0.0) {
            return Err(Error::invalid(
                "n_thermal",
                format!("must be finite and >= 0, got {n_thermal}"),
            ));
        }
        let weak_damping = gamma < nu;
        if !weak_damping {
            log::warn!("damping {gamma} is not small compared to frequency {nu}; the symmetric-damping model is only approximate");
        }
        Ok(Self {
            nu,
            gamma,
            n_thermal,
            weak_damping,
        })
    }

    /// Undamped oscillator at zero temperature.
    pub fn undamped(nu: f64) -> Result<Self> {
        Self::new(nu, 0.0, 0.0)
    }

    /// Whether `gamma < nu`, the regime where symmetric damping is valid.
    pub fn weak_damping(&self) -> bool {
        self.weak_damping
    }

    /// Intensity `γ(2n_T + 1)` of each thermal noise source.
    pub fn thermal_intensity(&self) -> f64 {
        self.gamma * (2.0 * self.n_thermal + 1.0)
    }
}

/// Continuous measurement of a (possibly rotating) quadrature.
///
/// The measured observable is `x cos(rot_freq·t + phase) - p sin(rot_freq·t + phase)`,
/// see [`rotating_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    pub k: f64,
    pub eta: f64,
    pub rot_freq: f64,
    pub phase: f64,
}

impl MeasurementConfig {
    pub fn new(k: f64, eta: f64, rot_freq: f64, phase: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid(
                "k",
                format!("must be finite and >= 0, got {k}"),
            ));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(
                "eta",
                format!("must lie in (0, 1], got {eta}"),
            ));
        }
        if !rot_freq.is_finite() || !phase.is_finite() {
            return Err(Error::invalid(
                "rot_freq",
                "rotation and phase must be finite",
            ));
        }
        Ok(Self {
            k,
            eta,
            rot_freq,
            phase,
        })
    }

    /// Plain position measurement with unit efficiency.
    pub fn position(k: f64) -> Result<Self> {
        Self::new(k, 1.0, 0.0, 0.0)
    }

    pub fn is_position(&self) -> bool {
        self.rot_freq == 0.0 && self.phase == 0.0
    }
}

/// What is known about the symmetry of a sampled spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// `F(-ω) = F*(ω)`: the transform of a real signal.
    Hermitian,
    /// Only `ω >= 0` samples are stored.
    PositivePartOnly,
    General,
}

/// Complex samples on a uniform frequency grid `omega0 + j·d_omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    omega0: f64,
    d_omega: f64,
    values: Vec<Complex64>,
    symmetry: Symmetry,
    support: Option<f64>,
}

impl Spectrum {
    pub fn new(
        omega0: f64,
        d_omega: f64,
        values: Vec<Complex64>,
        symmetry: Symmetry,
    ) -> Result<Self> {
        if !(d_omega.is_finite() && d_omega > 0.0) {
            return Err(Error::invalid(
                "d_omega",
                format!("must be finite and > 0, got {d_omega}"),
            ));
        }
        if !omega0.is_finite() {
            return Err(Error::invalid("omega0", "must be finite"));
        }
        if values.is_empty() {
            return Err(Error::invalid(
                "values",
                "a spectrum needs at least one sample",
            ));
        }
        if symmetry == Symmetry::PositivePartOnly && omega0 < -GRID_SNAP * d_omega {
            return Err(Error::invalid(
                "omega0",
                "positive-part spectra must start at ω >= 0",
            ));
        }
        Ok(Self {
            omega0,
            d_omega,
            values,
            symmetry,
            support: None,
        })
    }

    /// Grid `-half·dω ..= half·dω` (2·half + 1 points) filled from `f`.
    pub fn symmetric_from_fn(
        half: usize,
        d_omega: f64,
        symmetry: Symmetry,
        f: impl Fn(f64) -> Complex64,
    ) -> Result<Self> {
        let omega0 = -(half as f64) * d_omega;
        let values = (0..=2 * half)
            .map(|j| f(omega0 + j as f64 * d_omega))
            .collect();
        Self::new(omega0, d_omega, values, symmetry)
    }

    /// Same grid and metadata, new samples.
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                op: "Spectrum::with_values",
                left: self.values.len(),
                right: values.len(),
            });
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Declare that the spectrum vanishes for `|ω| > support`.
    pub fn with_support(mut self, support: f64) -> Self {
        self.support = Some(support.abs());
        self
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn d_omega(&self) -> f64 {
        self.d_omega
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn support(&self) -> Option<f64> {
        self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn omega(&self, index: usize) -> f64 {
        self.omega0 + index as f64 * self.d_omega
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |j| self.omega(j))
    }

    pub fn last_omega(&self) -> f64 {
        self.omega(self.values.len() - 1)
    }

    /// Position of `omega` on the grid, `None` when it is outside or between points.
    pub fn index_of(&self, omega: f64) -> Option<usize> {
        let pos = (omega - self.omega0) / self.d_omega;
        let rounded = pos.round();
        if (pos - rounded).abs() > GRID_SNAP || rounded < 0.0 {
            return None;
        }
        let j = rounded as usize;
        (j < self.values.len()).then_some(j)
    }

    pub fn value_at(&self, omega: f64) -> Option<Complex64> {
        self.index_of(omega).map(|j| self.values[j])
    }

    /// Sample used by the shift-based forward models and recursions.
    ///
    /// Points outside the grid are zero only when the declared support says
    /// so; points inside the grid range but between samples are an error.
    pub fn sample(&self, omega: f64, op: &'static str) -> Result<Complex64> {
        let lo = self.omega0 - GRID_SNAP * self.d_omega;
        let hi = self.last_omega() + GRID_SNAP * self.d_omega;
        if omega < lo || omega > hi {
            return match self.support {
                Some(w) if omega.abs() > w + GRID_SNAP * self.d_omega => {
                    Ok(Complex64::new(0.0, 0.0))
                }
                _ => Err(Error::UnknownSupport { op, omega }),
            };
        }
        self.value_at(omega).ok_or(Error::OffGrid { op, omega })
    }

    /// True when `omega` is an integer number of grid steps.
    pub fn divides(&self, omega: f64) -> bool {
        let ratio = omega / self.d_omega;
        (ratio - ratio.round()).abs() <= GRID_SNAP
    }

    /// Whether both spectra live on the same grid.
    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.values.len() == other.values.len()
            && (self.omega0 - other.omega0).abs() <= GRID_SNAP * self.d_omega
            && (self.d_omega - other.d_omega).abs() <= 1e-12 * self.d_omega
    }

    pub fn ensure_same_grid(&self, other: &Spectrum, op: &'static str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                op,
                reason: format!(
                    "({}, {}, {}) vs ({}, {}, {})",
                    self.omega0,
                    self.d_omega,
                    self.len(),
                    other.omega0,
                    other.d_omega,
                    other.len()
                ),
            })
        }
    }

    /// Samples with `ω >= 0`.
    pub fn positive_part(&self) -> Result<Spectrum> {
        let first = (0..self.len())
            .find(|&j| self.omega(j) >= -GRID_SNAP * self.d_omega)
            .ok_or_else(|| Error::invalid("values", "spectrum has no ω >= 0 samples"))?;
        let omega0 = self.omega(first).max(0.0);
        let mut out = Spectrum::new(
            omega0,
            self.d_omega,
            self.values[first..].to_vec(),
            Symmetry::PositivePartOnly,
        )?;
        out.support = self.support;
        Ok(out)
    }

    /// Largest `|F(-ω) - F*(ω)|` over mirrored grid pairs, relative to the peak magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let peak = self.peak_magnitude();
        if peak == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (j, omega) in self.omegas().enumerate() {
            if let Some(mirror) = self.value_at(-omega) {
                worst = worst.max((mirror - self.values[j].conj()).norm());
            }
        }
        worst / peak
    }

    pub fn peak_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self - reference‖ / ‖reference‖` on a shared grid.
    pub fn relative_l2_error(&self, reference: &Spectrum) -> Result<f64> {
        self.ensure_same_grid(reference, "relative_l2_error")?;
        let diff: f64 = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let norm = reference.l2_norm();
        Ok(if norm == 0.0 { diff } else { diff / norm })
    }

    /// Pointwise linear combination `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &Spectrum, b: Complex64) -> Result<Spectrum> {
        self.ensure_same_grid(other, "Spectrum::combine")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let mut out = self.with_values(values)?;
        out.symmetry = if self.symmetry == other.symmetry && a.im == 0.0 && b.im == 0.0 {
            self.symmetry
        } else {
            Symmetry::General
        };
        out.support = match (self.support, other.support) {
            (Some(s), Some(o)) => Some(s.max(o)),
            _ => None,
        };
        Ok(out)
    }
}

/// Build the two-sided spectrum from its `ω >= 0` half using `F(-ω) = F*(ω)`.
///
/// A zero-frequency sample is made real; its imaginary part must be below
/// `1e-9` of the peak magnitude. When the positive grid starts above zero the
/// mirrored grid has to stay uniform, which requires `2·omega0` to be a
/// multiple of `d_omega`; grid points strictly between `-omega0` and `omega0`
/// are filled with zeros.
pub fn hermitian_extend(positive_part: &Spectrum) -> Result<Spectrum> {
    const OP: &str = "hermitian_extend";
    let d = positive_part.d_omega;
    let w0 = positive_part.omega0;
    if w0 < -GRID_SNAP * d {
        return Err(Error::GridMismatch {
            op: OP,
            reason: format!("positive part starts at negative frequency {w0}"),
        });
    }
    let vals = &positive_part.values;
    let peak = positive_part.peak_magnitude();

    let starts_at_zero = w0.abs() <= GRID_SNAP * d;
    let mut out = Vec::new();
    let omega0;
    if starts_at_zero {
        let dc = vals[0];
        let relative = if peak > 0.0 { dc.im.abs() / peak } else { 0.0 };
        if relative > DC_IMAG_TOLERANCE {
            return Err(Error::ComplexDcSample {
                op: OP,
                imag: dc.im,
                relative,
            });
        }
        out.extend(vals[1..].iter().rev().map(|v| v.conj()));
        out.push(Complex64::new(dc.re, 0.0));
        out.extend_from_slice(&vals[1..]);
        omega0 = -positive_part.last_omega();
    } else {
        let gap = 2.0 * w0 / d;
        let gap_steps = gap.round();
        if (gap - gap_steps).abs() > GRID_SNAP {
            return Err(Error::GridMismatch {
                op: OP,
                reason: format!("mirrored grid is not uniform: 2·omega0 = {} is not a multiple of d_omega = {d}", 2.0 * w0),
            });
        }
        out.extend(vals.iter().rev().map(|v| v.conj()));
        out.extend(std::iter::repeat_n(
            Complex64::new(0.0, 0.0),
            gap_steps as usize - 1,
        ));
        out.extend_from_slice(vals);
        omega0 = -positive_part.last_omega();
    }
    let mut spectrum = Spectrum::new(omega0, d, out, Symmetry::Hermitian)?;
    spectrum.support = positive_part.support;
    Ok(spectrum)
}

/// `y(t_j) = x_j cos(θ_j) - p_j sin(θ_j)` with `θ_j = rot_freq·j·dt + phase`.
///
/// `rot_freq = ν` turns a free oscillator at `ν` into a constant; more
/// generally an oscillator at `ν` appears to oscillate at `ν - rot_freq`.
pub fn rotating_quadrature(
    x: &[f64],
    p: &[f64],
    rot_freq: f64,
    phase: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    rotate(
        x,
        p,
        rot_freq,
        phase,
        dt,
        "rotating_quadrature",
        |x, p, c, s| x * c - p * s,
    )
}

/// Conjugate partner `x_j sin(θ_j) + p_j cos(θ_j)` of [`rotating_quadrature`].
pub fn conjugate_quadrature(
    x: &[f64],
    p: &[f64],
    rot_freq: f64,
    phase: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    rotate(
        x,
        p,
        rot_freq,
        phase,
        dt,
        "conjugate_quadrature",
        |x, p, c, s| x * s + p * c,
    )
}

fn rotate(
    x: &[f64],
    p: &[f64],
    rot_freq: f64,
    phase: f64,
    dt: f64,
    op: &'static str,
    combine: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<Vec<f64>> {
    if x.len() != p.len() {
        return Err(Error::LengthMismatch {
            op,
            left: x.len(),
            right: p.len(),
        });
    }
    Ok(x.iter()
        .zip(p)
        .enumerate()
        .map(|(j, (&x, &p))| {
            let (s, c) = (rot_freq * j as f64 * dt + phase).sin_cos();
            combine(x, p, c, s)
        })
        .collect())
}

/// Direct discrete-time transform `Σ_j f_j e^{iω t_j} dt` with `t_j = t0 + j·dt`,
/// evaluated on the grid `omega0 + m·d_omega`, `m < count`.
pub fn transform_series(
    samples: &[f64],
    dt: f64,
    t0: f64,
    omega0: f64,
    d_omega: f64,
    count: usize,
) -> Result<Spectrum> {
    let values = (0..count)
        .map(|m| {
            let omega = omega0 + m as f64 * d_omega;
            samples
                .iter()
                .enumerate()
                .map(|(j, &f)| {
                    let t = t0 + j as f64 * dt;
                    Complex64::from_polar(f * dt, omega * t)
                })
                .sum()
        })
        .collect();
    Spectrum::new(omega0, d_omega, values, Symmetry::General)
}

/// Riemann-sum inverse transform `(dω/2π) Σ F(ω) e^{-iωt}` at the given times.
pub fn inverse_transform(spectrum: &Spectrum, times: &[f64]) -> Vec<Complex64> {
    let scale = spectrum.d_omega / (2.0 * PI);
    times
        .iter()
        .map(|&t| {
            spectrum
                .omegas()
                .zip(spectrum.values())
                .map(|(omega, v)| v * Complex64::from_polar(1.0, -omega * t))
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

/// How a force is specified for the time-domain integrator.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceKind {
    Zero,
    /// `amplitude · cos(frequency·t + phase)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Synthesised as `(dω/2π) Σ F(ω) e^{-iωt}`.
    BandLimited(Spectrum),
    /// Samples at `j·dt`, linearly interpolated, zero outside the table.
    Tabulated {
        dt: f64,
        samples: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceDescriptor {
    pub kind: ForceKind,
    /// Highest frequency carrying spectral weight, when known.
    pub support_max: Option<f64>,
}

impl Default for ForceDescriptor {
    fn default() -> Self {
        Self::zero()
    }
}

impl ForceDescriptor {
    pub fn zero() -> Self {
        Self {
            kind: ForceKind::Zero,
            support_max: Some(0.0),
        }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        if !amplitude.is_finite() || !frequency.is_finite() || !phase.is_finite() {
            return Err(Error::invalid(
                "amplitude",
                "sinusoid parameters must be finite",
            ));
        }
        Ok(Self {
            kind: ForceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            },
            support_max: Some(frequency.abs()),
        })
    }

    /// A real force given by its spectrum; the spectrum must be Hermitian.
    pub fn band_limited(spectrum: Spectrum) -> Result<Self> {
        if spectrum.symmetry() != Symmetry::Hermitian {
            return Err(Error::invalid(
                "spectrum",
                "a band-limited force must carry a Hermitian spectrum",
            ));
        }
        let support_max = spectrum
            .support()
            .or_else(|| Some(spectrum.omega0().abs().max(spectrum.last_omega().abs())));
        Ok(Self {
            kind: ForceKind::BandLimited(spectrum),
            support_max,
        })
    }

    pub fn tabulated(dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "tabulated force needs dt > 0"));
        }
        Ok(Self {
            kind: ForceKind::Tabulated { dt, samples },
            support_max: None,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ForceKind::Zero)
    }

    /// Highest angular frequency present, used for time-step validation.
    pub fn max_frequency(&self) -> f64 {
        match &self.kind {
            ForceKind::Zero | ForceKind::Tabulated { .. } => 0.0,
            ForceKind::Sinusoid { frequency, .. } => frequency.abs(),
            ForceKind::BandLimited(s) => self.support_max.unwrap_or(s.last_omega().abs()),
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match &self.kind {
            ForceKind::Zero => 0.0,
            ForceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).cos(),
            ForceKind::BandLimited(s) => {
                let scale = s.d_omega() / (2.0 * PI);
                s.omegas()
                    .zip(s.values())
                    .map(|(omega, v)| (v * Complex64::from_polar(1.0, -omega * t)).re)
                    .sum::<f64>()
                    * scale
            }
            ForceKind::Tabulated { dt, samples } => {
                if t < 0.0 || samples.is_empty() {
                    return 0.0;
                }
                let pos = t / dt;
                let j = pos.floor() as usize;
                if j + 1 >= samples.len() {
                    return if j + 1 == samples.len() && pos == j as f64 {
                        samples[j]
                    } else {
                        0.0
                    };
                }
                let frac = pos - j as f64;
                samples[j] * (1.0 - frac) + samples[j + 1] * frac
            }
        }
    }
}
