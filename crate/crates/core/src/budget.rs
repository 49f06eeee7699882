//! Output-noise budget for the cancelled two-oscillator readout, the criteria
//! for back-action to dominate thermal noise, and conversion to physical force
//! units. All noise powers are in the dimensionless momentum units used by the
//! rest of the crate.

use crate::error::{Error, Result};

/// Per-source contributions to the output noise power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    /// `1/(8ηk)`
    pub measurement: f64,
    /// `4(2n_T + 1)/γ`
    pub thermal: f64,
    /// `4⟨Re[F(ν)]²⟩/γ²`
    pub signal: f64,
    /// `8k/γ²`, always reported; counted in `total` only when not cancelled.
    pub backaction: f64,
    pub backaction_cancelled: bool,
    pub total: f64,
}

impl NoiseBudget {
    /// Components that enter `total`, as (name, value) pairs.
    pub fn active_components(&self) -> Vec<(&'static str, f64)> {
        let mut parts = vec![
            ("measurement", self.measurement),
            ("thermal", self.thermal),
            ("signal", self.signal),
        ];
        if !self.backaction_cancelled {
            parts.push(("backaction", self.backaction));
        }
        parts
    }
}

/// Cavity-optomechanics parameters behind the measurement rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptomechParams {
    pub g0: f64,
    pub alpha_sq: f64,
    pub kappa: f64,
    pub mass: f64,
    pub nu_physical: f64,
}

impl OptomechParams {
    pub fn new(g0: f64, alpha_sq: f64, kappa: f64, mass: f64, nu_physical: f64) -> Result<Self> {
        for (name, value) in [
            ("g0", g0),
            ("alpha_sq", alpha_sq),
            ("kappa", kappa),
            ("mass", mass),
            ("nu_physical", nu_physical),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        Ok(Self {
            g0,
            alpha_sq,
            kappa,
            mass,
            nu_physical,
        })
    }

    /// Effective coupling `g = α·g₀`.
    pub fn coupling(&self) -> f64 {
        self.alpha_sq.sqrt() * self.g0
    }

    pub fn measurement_rate(&self) -> f64 {
        measurement_rate(self.coupling(), self.kappa)
    }
}

/// Mean thermal occupation `1/(exp(ħν/kT) - 1)`; an infinite ratio (T = 0) gives 0.
pub fn thermal_occupation(hbar_nu_over_kt: f64) -> Result<f64> {
    if hbar_nu_over_kt.is_nan() || hbar_nu_over_kt <= 0.0 {
        return Err(Error::invalid(
            "hbar_nu_over_kT",
            format!("must be > 0, got {hbar_nu_over_kt}"),
        ));
    }
    if hbar_nu_over_kt.is_infinite() {
        return Ok(0.0);
    }
    Ok(1.0 / hbar_nu_over_kt.exp_m1())
}

/// Noise budget `S_out`; the back-action term is dropped from the total when
/// `cancelled` is set.
pub fn s_out(
    k: f64,
    eta: f64,
    gamma: f64,
    n_thermal: f64,
    signal_power: f64,
    cancelled: bool,
) -> Result<NoiseBudget> {
    if k == 0.0 {
        return Err(Error::InfiniteBudget { op: "s_out" });
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid("k", format!("must be > 0, got {k}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(
            "eta",
            format!("must lie in (0, 1], got {eta}"),
        ));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    if !(n_thermal.is_finite() && n_thermal >= 0.0) {
        return Err(Error::invalid(
            "n_thermal",
            format!("must be >= 0, got {n_thermal}"),
        ));
    }
    if !(signal_power.is_finite() && signal_power >= 0.0) {
        return Err(Error::invalid(
            "signal_power",
            format!("must be >= 0, got {signal_power}"),
        ));
    }
    let measurement = 1.0 / (8.0 * eta * k);
    let thermal = 4.0 * (2.0 * n_thermal + 1.0) / gamma;
    let signal = 4.0 * signal_power / (gamma * gamma);
    let backaction = 8.0 * k / (gamma * gamma);
    let mut total = measurement + thermal + signal;
    if !cancelled {
        total += backaction;
    }
    Ok(NoiseBudget {
        measurement,
        thermal,
        signal,
        backaction,
        backaction_cancelled: cancelled,
        total,
    })
}

/// Smallest `k` at which back-action noise reaches the thermal noise: `γ(n_T + 1/2)`.
pub fn backaction_dominance_threshold(gamma: f64, n_thermal: f64) -> f64 {
    gamma * (n_thermal + 0.5)
}

/// Measurement rate from effective coupling and cavity damping, `k = 2g/κ`.
pub fn measurement_rate(coupling: f64, kappa: f64) -> f64 {
    2.0 * coupling / kappa
}

/// Smallest effective coupling `αg₀` meeting the dominance criterion: `γκ(2n_T + 1)/4`.
pub fn coupling_criterion(gamma: f64, kappa: f64, n_thermal: f64) -> f64 {
    gamma * kappa * (2.0 * n_thermal + 1.0) / 4.0
}

/// Multiply a dimensionless noise power by `ħνm/2`.
pub fn to_physical_force_power(value: f64, mass: f64, nu_physical: f64, hbar: f64) -> f64 {
    value * hbar * nu_physical * mass / 2.0
}

pub fn from_physical_force_power(value: f64, mass: f64, nu_physical: f64, hbar: f64) -> f64 {
    value * 2.0 / (hbar * nu_physical * mass)
}
