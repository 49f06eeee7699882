//! Power spectral densities and line fits for simulated records.
//!
//! PSD convention: `S(ω) = ∫ ⟨r(t + τ) r(t)⟩ e^{iωτ} dτ`, so white noise with
//! `⟨w(t)w(t')⟩ = δ(t - t')` has `S = 1` and a record `x + z/√(8k)` has the
//! floor `1/(8k)`. Estimates are reported for `ω ≥ 0` only; the mean square of
//! the record is `(1/π) ∫₀^∞ S dω`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

const IRLS_ROUNDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    fn weights(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            // Periodic Hann.
            Window::Hann => (0..len)
                .map(|j| 0.5 - 0.5 * (2.0 * PI * j as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// Bin spacing `2π/(segment_len·dt)`; bin `m` sits at `m·d_omega`.
    pub d_omega: f64,
    pub power: Vec<f64>,
    pub n_segments: usize,
    pub window: Window,
    /// Variance of each averaged bin, estimated from the spread across segments.
    pub variance_of_estimate: Vec<f64>,
}

impl PsdEstimate {
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.power.len())
            .map(|m| m as f64 * self.d_omega)
            .collect()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.d_omega
    }

    /// `(1/π) Σ S dω` with the DC and Nyquist bins counted half.
    pub fn integrated_mean_square(&self) -> f64 {
        let n = self.power.len();
        let mut total: f64 = self.power.iter().sum();
        if n > 1 {
            total -= 0.5 * (self.power[0] + self.power[n - 1]);
        }
        total * self.d_omega / PI
    }

    /// Mean power over bins with `lo ≤ ω ≤ hi`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .frequencies()
            .into_iter()
            .zip(&self.power)
            .filter(|(w, _)| *w >= lo && *w <= hi)
            .map(|(_, p)| *p)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn peak_bin(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &p)| {
                if p > best.1 {
                    (j, p)
                } else {
                    best
                }
            })
            .0
    }

    /// Segment-weighted average of estimates on the same grid, e.g. from
    /// independent trajectories.
    pub fn average(estimates: &[PsdEstimate]) -> Result<PsdEstimate> {
        let first = estimates
            .first()
            .ok_or_else(|| Error::invalid("estimates", "nothing to average"))?;
        let mut power = vec![0.0; first.power.len()];
        let mut var = vec![0.0; first.power.len()];
        let mut total = 0usize;
        for e in estimates {
            if e.power.len() != first.power.len()
                || (e.d_omega - first.d_omega).abs() > 1e-12 * first.d_omega
            {
                return Err(Error::GridMismatch {
                    op: "PsdEstimate::average",
                    reason: "estimates use different segment grids".into(),
                });
            }
            let w = e.n_segments as f64;
            for m in 0..power.len() {
                power[m] += w * e.power[m];
                var[m] += w * w * e.variance_of_estimate[m];
            }
            total += e.n_segments;
        }
        let t = total as f64;
        Ok(PsdEstimate {
            d_omega: first.d_omega,
            power: power.into_iter().map(|p| p / t).collect(),
            n_segments: total,
            window: first.window,
            variance_of_estimate: var.into_iter().map(|v| v / (t * t)).collect(),
        })
    }
}

/// Welch estimate: windowed periodograms of overlapping segments, averaged.
///
/// Each segment contributes `dt·|Σ w_j r_j e^{iω t_j}|² / Σ w_j²`, no detrending.
pub fn welch_psd(
    record: &[f64],
    dt: f64,
    segment_len: usize,
    overlap: f64,
    window: Window,
) -> Result<PsdEstimate> {
    const OP: &str = "welch_psd";
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if segment_len < 2 {
        return Err(Error::invalid(
            "segment_len",
            "need at least two samples per segment",
        ));
    }
    if segment_len > record.len() {
        return Err(Error::LengthMismatch {
            op: OP,
            left: segment_len,
            right: record.len(),
        });
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::invalid(
            "overlap",
            format!("must lie in [0, 0.9], got {overlap}"),
        ));
    }
    let step = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let n_segments = (record.len() - segment_len) / step + 1;
    let weights = window.weights(segment_len);
    let norm = dt / weights.iter().map(|w| w * w).sum::<f64>();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let n_bins = segment_len / 2 + 1;

    let mut sum = vec![0.0; n_bins];
    let mut sum_sq = vec![0.0; n_bins];
    let mut buffer = vec![Complex64::new(0.0, 0.0); segment_len];
    for s in 0..n_segments {
        let seg = &record[s * step..s * step + segment_len];
        for ((b, &r), &w) in buffer.iter_mut().zip(seg).zip(&weights) {
            *b = Complex64::new(r * w, 0.0);
        }
        fft.process(&mut buffer);
        for m in 0..n_bins {
            let p = norm * buffer[m].norm_sqr();
            sum[m] += p;
            sum_sq[m] += p * p;
        }
    }
    let n = n_segments as f64;
    let power: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let variance_of_estimate = power
        .iter()
        .zip(&sum_sq)
        .map(|(mean, sq)| {
            if n_segments > 1 {
                ((sq / n - mean * mean) * n / (n - 1.0)).max(0.0) / n
            } else {
                mean * mean
            }
        })
        .collect();
    Ok(PsdEstimate {
        d_omega: 2.0 * PI / (segment_len as f64 * dt),
        power,
        n_segments,
        window,
        variance_of_estimate,
    })
}

/// Lorentzian `S(ω) ≈ c / ((ω - ω₀)² + h²)` fitted near a peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    pub center: f64,
    pub half_width: f64,
    pub peak: f64,
}

/// Fit a Lorentzian to the bins with `lo ≤ ω ≤ hi` by least squares on `1/S`,
/// which is quadratic in `ω`. The fit is iteratively reweighted with the
/// squared model values so that noisy bins do not pick their own weights.
pub fn fit_lorentzian(psd: &PsdEstimate, lo: f64, hi: f64) -> Result<LorentzianFit> {
    const OP: &str = "fit_lorentzian";
    let mid = 0.5 * (lo + hi);
    // Centred abscissa u = ω - mid for conditioning.
    let bins: Vec<(f64, f64)> = psd
        .frequencies()
        .into_iter()
        .zip(&psd.power)
        .filter(|(omega, s)| *omega >= lo && *omega <= hi && **s > 0.0)
        .map(|(omega, s)| (omega - mid, *s))
        .collect();
    if bins.len() < 3 {
        return Err(Error::invalid(
            "band",
            format!("{OP}: fewer than three bins in [{lo}, {hi}]"),
        ));
    }
    let ill = |omega: f64, magnitude: f64| Error::IllConditioned {
        op: OP,
        omega,
        magnitude,
    };

    let mut weights: Vec<f64> = bins.iter().map(|(_, s)| s * s).collect();
    let mut q = [0.0; 3];
    for _ in 0..IRLS_ROUNDS {
        let mut a = [[0.0f64; 3]; 3];
        let mut b = [0.0f64; 3];
        for (&(u, s), &w) in bins.iter().zip(&weights) {
            let basis = [1.0, u, u * u];
            for r in 0..3 {
                for c in 0..3 {
                    a[r][c] += w * basis[r] * basis[c];
                }
                b[r] += w * basis[r] / s;
            }
        }
        q = solve3(a, b).ok_or(ill(mid, 0.0))?;
        let model: Vec<f64> = bins
            .iter()
            .map(|(u, _)| q[0] + q[1] * u + q[2] * u * u)
            .collect();
        if model.iter().any(|m| !(*m > 0.0)) {
            break;
        }
        weights = model.iter().map(|m| 1.0 / (m * m)).collect();
    }
    if !(q[2] > 0.0) {
        return Err(ill(mid, q[2]));
    }
    let u0 = -q[1] / (2.0 * q[2]);
    let h2 = q[0] / q[2] - u0 * u0;
    if !(h2 > 0.0) {
        return Err(ill(mid + u0, h2));
    }
    Ok(LorentzianFit {
        center: mid + u0,
        half_width: h2.sqrt(),
        peak: 1.0 / (q[2] * h2),
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Amplitude and phase of the line `A cos(freq·t + φ)` in a record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub amplitude: f64,
    pub phase: f64,
}

impl LineFit {
    /// Coefficient `(A/2)e^{-iφ}` of the line at `+freq` in the crate's Fourier convention.
    pub fn coefficient(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude / 2.0, -self.phase)
    }
}

/// Least-squares fit of `a cos(freq·t) + b sin(freq·t)` with `t_j = t0 + j·dt`;
/// returns `(√(a² + b²), atan2(-b, a))`.
pub fn extract_line(record: &[f64], dt: f64, t0: f64, freq: f64) -> Result<LineFit> {
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(Error::invalid("freq", format!("must be > 0, got {freq}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    let duration = record.len() as f64 * dt;
    let periods = duration * freq / (2.0 * PI);
    if periods < 20.0 {
        return Err(Error::invalid(
            "freq",
            format!("record spans {periods:.2} periods; at least 20 are needed"),
        ));
    }
    let (mut cc, mut cs, mut ss, mut rc, mut rs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, &r) in record.iter().enumerate() {
        let (s, c) = (freq * (t0 + j as f64 * dt)).sin_cos();
        cc += c * c;
        cs += c * s;
        ss += s * s;
        rc += r * c;
        rs += r * s;
    }
    let det = cc * ss - cs * cs;
    let a = (rc * ss - rs * cs) / det;
    let b = (rs * cc - rc * cs) / det;
    Ok(LineFit {
        amplitude: a.hypot(b),
        phase: (-b).atan2(a),
    })
}
