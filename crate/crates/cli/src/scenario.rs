//! Turn a resolved scenario into library calls and collect the results.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use qnc_core::budget;
use qnc_core::langevin::{ensemble_moments, Channel, MeasuredObservable, Scenario, SimulationPlan};
use qnc_core::reconstruct::{
    reconstruct_broadband, reconstruct_broadband_three_term, reconstruct_narrowband_case1,
    reconstruct_narrowband_case2, reconstruct_narrowband_case2_terms, DeltaRange, Truncation,
};
use qnc_core::transfer::{forward_broadband, forward_narrowband, TransferContext};
use qnc_core::{ForceDescriptor, MeasurementConfig, OscillatorParams, Spectrum, Symmetry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ForceShape, ForceTarget, Observable, ScenarioConfig, SchemeKind};
use crate::error::CliError;

pub struct SeriesTable {
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

pub struct BudgetRow {
    pub component: &'static str,
    pub cancelled: f64,
    pub uncancelled: f64,
}

pub struct Outcome {
    pub scheme: SchemeKind,
    pub seeds: Value,
    pub metrics: BTreeMap<String, f64>,
    pub spectra: Vec<(&'static str, Spectrum)>,
    pub series: Option<SeriesTable>,
    pub budget: Vec<BudgetRow>,
}

/// Everything needed to execute a scenario, built and checked up front.
pub enum Prepared {
    TcPair {
        plan: SimulationPlan,
    },
    Broadband {
        ctx: TransferContext,
        force: Spectrum,
        n_max: usize,
        tolerance: f64,
    },
    Narrowband {
        ctx: TransferContext,
        force: Spectrum,
        band: DeltaRange,
        terms: NarrowbandTerms,
    },
    Budget {
        k: f64,
        eta: f64,
        gamma: f64,
        n_thermal: f64,
        signal_power: f64,
        kappa: f64,
    },
}

pub enum NarrowbandTerms {
    ClosedForm,
    Epsilon(f64),
    Fixed(usize),
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn positive(name: &str, value: f64) -> Result<f64, CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(format!(
            "`{name}` must be finite and > 0, got {value}"
        )))
    }
}

/// Validate the scenario against the preconditions of every module it uses.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, CliError> {
    let osc = &cfg.oscillator;
    positive("oscillator.nu", osc.nu)?;
    match cfg.scheme {
        SchemeKind::TcPair => prepare_tc_pair(cfg).map(|plan| Prepared::TcPair { plan }),
        SchemeKind::Broadband => {
            let ctx = TransferContext::broadband(osc.nu, osc.gamma)?;
            let force = force_spectrum(cfg)?;
            positive("run.residual_tolerance", cfg.run.residual_tolerance)?;
            Ok(Prepared::Broadband {
                ctx,
                force,
                n_max: cfg.run.n_max,
                tolerance: cfg.run.residual_tolerance,
            })
        }
        SchemeKind::NarrowbandCase1 | SchemeKind::NarrowbandCase2 => {
            let omega_eff = osc.omega_eff.unwrap_or(osc.nu / 10.0);
            let ctx = TransferContext::narrowband(osc.nu, osc.gamma, omega_eff)?;
            let d = positive("run.d_omega", cfg.run.d_omega.unwrap_or(omega_eff / 16.0))?;
            let force = force_spectrum(cfg)?;
            let band = DeltaRange::open_band(omega_eff, d)?;
            let terms = match (cfg.scheme, cfg.run.n_terms) {
                (SchemeKind::NarrowbandCase1, _) => NarrowbandTerms::ClosedForm,
                (_, Some(0)) => return Err(invalid("`run.n_terms` must be >= 1")),
                (_, Some(n)) => NarrowbandTerms::Fixed(n),
                (_, None) => {
                    qnc_core::reconstruct::case2_term_count(osc.gamma, omega_eff, cfg.run.epsilon)?;
                    NarrowbandTerms::Epsilon(cfg.run.epsilon)
                }
            };
            Ok(Prepared::Narrowband {
                ctx,
                force,
                band,
                terms,
            })
        }
        SchemeKind::Budget => {
            positive("budget.kappa", cfg.budget.kappa)?;
            budget::s_out(
                cfg.measurement.k,
                cfg.measurement.eta,
                osc.gamma,
                osc.n_thermal,
                cfg.budget.signal_power,
                true,
            )?;
            Ok(Prepared::Budget {
                k: cfg.measurement.k,
                eta: cfg.measurement.eta,
                gamma: osc.gamma,
                n_thermal: osc.n_thermal,
                signal_power: cfg.budget.signal_power,
                kappa: cfg.budget.kappa,
            })
        }
    }
}

fn prepare_tc_pair(cfg: &ScenarioConfig) -> Result<SimulationPlan, CliError> {
    let osc = &cfg.oscillator;
    let params = OscillatorParams::new(osc.nu, osc.gamma, osc.n_thermal)?;
    let meas = MeasurementConfig::new(cfg.measurement.k, cfg.measurement.eta, 0.0, 0.0)?;
    let force = match cfg.force.kind {
        ForceShape::Zero => ForceDescriptor::zero(),
        ForceShape::Sinusoid => {
            ForceDescriptor::sinusoid(cfg.force.amplitude, cfg.force.frequency, cfg.force.phase)?
        }
        other => {
            return Err(invalid(format!(
                "`force.kind = {other:?}` is not available for tc_pair; use zero or sinusoid"
            )))
        }
    };
    let (f1, f2) = match cfg.force.target {
        ForceTarget::Both => (force.clone(), force),
        ForceTarget::First => (force, ForceDescriptor::zero()),
        ForceTarget::Second => (ForceDescriptor::zero(), force),
    };
    let observable = match cfg.measurement.observable {
        Observable::XPlus => MeasuredObservable::XPlus,
        Observable::XMinus => MeasuredObservable::XMinus,
    };
    let run = &cfg.run;
    let plan = SimulationPlan::new(
        params,
        meas,
        run.dt,
        run.n_steps,
        run.n_trajectories,
        run.base_seed,
    )
    .with_second(params)
    .with_observable(observable)
    .with_forces(f1, f2)
    .with_stride(run.stride);
    plan.validate(0.0)?;
    Ok(plan)
}

/// Synthetic Hermitian force spectrum on the symmetric grid `±grid_max`.
fn force_spectrum(cfg: &ScenarioConfig) -> Result<Spectrum, CliError> {
    let nu = cfg.oscillator.nu;
    let d = positive("run.d_omega", cfg.run.d_omega.unwrap_or(nu / 64.0))?;
    let grid_max = positive("run.grid_max", cfg.run.grid_max.unwrap_or(8.0 * nu))?;
    let f = &cfg.force;
    let support = f.support_max.unwrap_or(grid_max);
    if support < 0.0 {
        return Err(invalid("`force.support_max` must be >= 0"));
    }
    let half = (grid_max / d).ceil() as usize;
    if half > 5_000_000 {
        return Err(invalid(format!(
            "grid of {} points is too large",
            2 * half + 1
        )));
    }
    let a = f.amplitude;
    let phase = Complex64::from_polar(1.0, f.phase);
    let snap = |omega: f64| (omega / d).round() as i64;

    let mut lines: BTreeMap<i64, Complex64> = BTreeMap::new();
    match f.kind {
        ForceShape::Sinusoid => {
            if !(f.frequency > 0.0) || (f.frequency / d - (f.frequency / d).round()).abs() > 1e-6 {
                return Err(invalid(
                    "`force.frequency` must be > 0 and a multiple of the grid spacing",
                ));
            }
            lines.insert(snap(f.frequency), PI * a / d * phase.conj());
        }
        ForceShape::Lines => {
            if f.n_lines == 0 {
                return Err(invalid("`force.n_lines` must be >= 1"));
            }
            let lo = snap(f.frequency - f.width) + 1;
            let hi = snap(f.frequency + f.width) - 1;
            let slots = hi - lo + 1;
            if slots < f.n_lines as i64 || lo <= 0 {
                return Err(invalid(format!(
                    "{} lines do not fit on the grid inside frequency ± width",
                    f.n_lines
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.base_seed);
            for j in 0..f.n_lines as i64 {
                let idx = if f.n_lines == 1 {
                    lo + slots / 2
                } else {
                    lo + j * (slots - 1) / (f.n_lines as i64 - 1)
                };
                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                lines.insert(idx, PI * a / d * Complex64::from_polar(1.0, theta));
            }
        }
        _ => {}
    }

    let shape = f.kind;
    let (w0, width) = (f.frequency, f.width);
    if matches!(shape, ForceShape::Gaussian | ForceShape::DampedCosine) {
        positive("force.width", width)?;
    }
    let value = |omega: f64| -> Complex64 {
        if omega.abs() > support + 1e-9 * d {
            return Complex64::new(0.0, 0.0);
        }
        match shape {
            ForceShape::Zero => Complex64::new(0.0, 0.0),
            ForceShape::Gaussian => {
                let g = |u: f64| (-(u * u) / (2.0 * width * width)).exp();
                a * (phase * g(omega - w0) + phase.conj() * g(omega + w0))
            }
            ForceShape::DampedCosine => {
                let i = Complex64::i();
                a * width / 2.0
                    * (1.0 / (width - i * (omega + w0)) + 1.0 / (width - i * (omega - w0)))
            }
            ForceShape::Sinusoid | ForceShape::Lines => {
                let j = snap(omega);
                if let Some(v) = lines.get(&j) {
                    *v
                } else if let Some(v) = lines.get(&-j) {
                    v.conj()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
        }
    };
    let spectrum =
        Spectrum::symmetric_from_fn(half, d, Symmetry::Hermitian, value)?.with_support(support);
    Ok(spectrum)
}

pub fn execute(prepared: Prepared, cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let mut metrics = BTreeMap::new();
    let mut spectra = Vec::new();
    let mut series = None;
    let mut budget_rows = Vec::new();
    let mut seeds = json!({ "base": cfg.run.base_seed });

    match prepared {
        Prepared::TcPair { plan } => {
            let moments = ensemble_moments(&plan, Scenario::TcPair)?;
            let last = plan.n_steps / plan.sample_stride;
            let channels = moments.channel_names();
            for &ch in &channels {
                if let Some(v) = moments.variance_at(ch, last) {
                    metrics.insert(format!("var_{}_final", ch.name()), v.value);
                    metrics.insert(format!("var_{}_final_se", ch.name()), v.std_error);
                }
                if let Some(m) = moments.mean_series(ch) {
                    metrics.insert(format!("mean_{}_final", ch.name()), m[last]);
                }
            }
            seeds = json!({
                "base": plan.base_seed,
                "count": moments.seeds.len(),
                "first": moments.seeds.first(),
                "last": moments.seeds.last(),
            });
            if cfg.output.time_series {
                let mut columns = Vec::new();
                for &ch in &channels {
                    if ch == Channel::Record {
                        continue;
                    }
                    let mean = moments.mean_series(ch).unwrap_or_default();
                    let var = moments.variance_series(ch).unwrap_or_default();
                    columns.push((format!("{}_mean", ch.name()), mean));
                    columns.push((format!("{}_var", ch.name()), var));
                }
                series = Some(SeriesTable {
                    times: moments.sample_times(),
                    columns,
                });
            }
        }
        Prepared::Broadband {
            ctx,
            force,
            n_max,
            tolerance,
        } => {
            let (z, z_prime) = forward_broadband(&force, &ctx)?;
            let series_rep = reconstruct_broadband(
                &z,
                &z_prime,
                &ctx,
                Truncation::terms(n_max),
                Some(tolerance),
            )?;
            let three = reconstruct_broadband_three_term(&z, &ctx, n_max, Some(tolerance))?;
            metrics.insert(
                "relative_l2_error".into(),
                series_rep.force.relative_l2_error(&force)?,
            );
            metrics.insert(
                "relative_l2_error_three_term".into(),
                three.force.relative_l2_error(&force)?,
            );
            metrics.insert("n_terms_used".into(), series_rep.n_terms_used as f64);
            metrics.insert("truncation_estimate".into(), series_rep.truncation_estimate);
            metrics.insert("residual".into(), series_rep.residual.unwrap_or(f64::NAN));
            metrics.insert(
                "residual_three_term".into(),
                three.residual.unwrap_or(f64::NAN),
            );
            spectra = vec![
                ("force", force),
                ("z", z),
                ("z_prime", z_prime),
                ("reconstructed", series_rep.force),
                ("reconstructed_three_term", three.force),
            ];
        }
        Prepared::Narrowband {
            ctx,
            force,
            band,
            terms,
        } => {
            let (z, z_tilde) = forward_narrowband(&force, &ctx)?;
            let report = match terms {
                NarrowbandTerms::ClosedForm => {
                    reconstruct_narrowband_case1(&z, &z_tilde, &ctx, band)?
                }
                NarrowbandTerms::Epsilon(eps) => {
                    reconstruct_narrowband_case2(&z, &z_tilde, &ctx, eps, band)?
                }
                NarrowbandTerms::Fixed(n) => {
                    reconstruct_narrowband_case2_terms(&z, &z_tilde, &ctx, n, band)?
                }
            };
            let truth: Vec<Complex64> = report
                .force
                .omegas()
                .map(|w| force.sample(w, "narrowband truth"))
                .collect::<Result<_, _>>()?;
            let truth = report.force.with_values(truth)?;
            let omega_eff = ctx.omega_eff().unwrap_or(f64::NAN);
            metrics.insert(
                "relative_l2_error".into(),
                report.force.relative_l2_error(&truth)?,
            );
            metrics.insert("n_terms_used".into(), report.n_terms_used as f64);
            metrics.insert("truncation_estimate".into(), report.truncation_estimate);
            metrics.insert("damping_ratio".into(), ctx.gamma / omega_eff);
            spectra = vec![
                ("force", force),
                ("z_pos", z),
                ("z_tilde_pos", z_tilde),
                ("reconstructed", report.force),
                ("force_in_band", truth),
            ];
        }
        Prepared::Budget {
            k,
            eta,
            gamma,
            n_thermal,
            signal_power,
            kappa,
        } => {
            let on = budget::s_out(k, eta, gamma, n_thermal, signal_power, true)?;
            let off = budget::s_out(k, eta, gamma, n_thermal, signal_power, false)?;
            let k_min = budget::backaction_dominance_threshold(gamma, n_thermal);
            let g_min = budget::coupling_criterion(gamma, kappa, n_thermal);
            metrics.insert("total_cancelled".into(), on.total);
            metrics.insert("total_uncancelled".into(), off.total);
            metrics.insert("k_min".into(), k_min);
            metrics.insert("coupling_threshold".into(), g_min);
            metrics.insert(
                "k_at_coupling_threshold".into(),
                budget::measurement_rate(g_min, kappa),
            );
            budget_rows = vec![
                row("measurement", on.measurement, off.measurement),
                row("thermal", on.thermal, off.thermal),
                row("signal", on.signal, off.signal),
                row("backaction", 0.0, off.backaction),
                row("total", on.total, off.total),
            ];
        }
    }
    if !cfg.output.spectra {
        spectra.clear();
    }
    Ok(Outcome {
        scheme: cfg.scheme,
        seeds,
        metrics,
        spectra,
        series,
        budget: budget_rows,
    })
}

fn row(component: &'static str, cancelled: f64, uncancelled: f64) -> BudgetRow {
    BudgetRow {
        component,
        cancelled,
        uncancelled,
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let prepared = prepare(cfg)?;
    execute(prepared, cfg)
}
