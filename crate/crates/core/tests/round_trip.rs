mod common;

use common::{bumps, c, damped_cosine, lines, Lcg};
use qnc_core::reconstruct::{
    case2_term_count, reconstruct_broadband, reconstruct_broadband_three_term,
    reconstruct_narrowband_case1, reconstruct_narrowband_case2, reconstruct_narrowband_case2_terms,
};
use qnc_core::transfer::{forward_broadband, forward_narrowband};
use qnc_core::{
    Complex64, DeltaRange, Error, ReconstructionScheme, Spectrum, TransferContext, Truncation,
};

const NU: f64 = 1.0;

fn broadband_force() -> Spectrum {
    bumps(
        511,
        NU / 64.0,
        3.0 * NU,
        &[
            (1.0, 0.3, 1.2, 0.4),
            (0.5, -1.1, 0.0, 0.3),
            (0.7, 2.0, 2.2, 0.2),
        ],
    )
}

#[test]
fn broadband_series_recovers_band_limited_force() {
    let ctx = TransferContext::broadband(NU, 0.1 * NU).unwrap();
    let force = broadband_force();
    let (z, zp) = forward_broadband(&force, &ctx).unwrap();
    let report = reconstruct_broadband(&z, &zp, &ctx, Truncation::terms(3), Some(1e-9)).unwrap();
    assert_eq!(report.scheme, ReconstructionScheme::BroadbandSeries);
    assert_eq!(report.n_terms_used, 4);
    assert!(report.force.relative_l2_error(&force).unwrap() < 1e-12);
    assert!(report.residual.unwrap() < 1e-12);
    assert!(report.force.hermitian_defect() < 1e-14);
}

#[test]
fn broadband_three_term_recovers_band_limited_force() {
    let ctx = TransferContext::broadband(NU, 0.1 * NU).unwrap();
    let force = broadband_force();
    let (z, _) = forward_broadband(&force, &ctx).unwrap();
    let report = reconstruct_broadband_three_term(&z, &ctx, 3, Some(1e-9)).unwrap();
    assert_eq!(report.scheme, ReconstructionScheme::BroadbandThreeTerm);
    assert!(report.force.relative_l2_error(&force).unwrap() < 1e-12);
}

#[test]
fn support_truncation_matches_term_truncation() {
    let ctx = TransferContext::broadband(NU, 0.1 * NU).unwrap();
    let force = broadband_force();
    let (z, zp) = forward_broadband(&force, &ctx).unwrap();
    let by_terms = reconstruct_broadband(&z, &zp, &ctx, Truncation::terms(3), None).unwrap();
    let by_support =
        reconstruct_broadband(&z, &zp, &ctx, Truncation::support(3.0 * NU), None).unwrap();
    assert!(by_support.force.relative_l2_error(&by_terms.force).unwrap() < 1e-14);
}

#[test]
fn too_few_terms_fail_the_residual_check() {
    let ctx = TransferContext::broadband(NU, 0.1 * NU).unwrap();
    let force = broadband_force();
    let (z, zp) = forward_broadband(&force, &ctx).unwrap();
    let err = reconstruct_broadband(&z, &zp, &ctx, Truncation::terms(1), Some(1e-6)).unwrap_err();
    assert!(matches!(err, Error::ResidualCheck { .. }), "{err:?}");
    let err = reconstruct_broadband_three_term(&z, &ctx, 1, Some(1e-6)).unwrap_err();
    assert!(matches!(err, Error::ResidualCheck { .. }), "{err:?}");
}

#[test]
fn broadband_rejects_grid_not_dividing_nu() {
    let ctx = TransferContext::broadband(1.0, 0.1).unwrap();
    let force = bumps(300, 0.03, 3.0, &[(1.0, 0.0, 1.0, 0.3)]);
    assert!(forward_broadband(&force, &ctx).is_err());
}

#[test]
fn case1_single_line() {
    let (omega_eff, d) = (0.1 * NU, 0.1 * NU / 16.0);
    let ctx = TransferContext::narrowband(NU, omega_eff / 100.0, omega_eff).unwrap();
    let line = c(0.8, -0.3);
    let force = lines(400, d, &[(NU + 5.0 * d, line)]);
    let (z, zt) = forward_narrowband(&force, &ctx).unwrap();
    let band = DeltaRange::open_band(omega_eff, d).unwrap();
    let report = reconstruct_narrowband_case1(&z, &zt, &ctx, band).unwrap();
    let recovered = report.force.value_at(NU + 5.0 * d).unwrap();
    assert!((recovered - line).norm() < 1e-12 * line.norm());
    let rest: f64 = report
        .force
        .omegas()
        .zip(report.force.values())
        .filter(|(w, _)| (w - NU - 5.0 * d).abs() > d / 2.0)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max);
    assert!(rest < 1e-12);
}

#[test]
fn case1_thirty_two_lines() {
    let (omega_eff, d) = (0.1 * NU, 0.1 * NU / 64.0);
    let ctx = TransferContext::narrowband(NU, omega_eff / 100.0, omega_eff).unwrap();
    let mut rng = Lcg(11);
    let comb: Vec<(f64, Complex64)> = (0..32)
        .map(|j| {
            let w = NU + (2 * j as i64 - 31) as f64 * d;
            (w, Complex64::from_polar(0.5 + rng.next(), rng.phase()))
        })
        .collect();
    let force = lines(1600, d, &comb);
    let (z, zt) = forward_narrowband(&force, &ctx).unwrap();
    let band = DeltaRange::open_band(omega_eff, d).unwrap();
    let report = reconstruct_narrowband_case1(&z, &zt, &ctx, band).unwrap();
    let truth = Spectrum::new(
        report.force.omega0(),
        d,
        report
            .force
            .omegas()
            .map(|w| force.value_at(w).unwrap())
            .collect(),
        report.force.symmetry(),
    )
    .unwrap();
    assert!(report.force.relative_l2_error(&truth).unwrap() < 1e-12);
}

#[test]
fn case1_rejects_band_outside_open_interval() {
    let (omega_eff, d) = (0.1, 0.1 / 16.0);
    let ctx = TransferContext::narrowband(NU, 0.001, omega_eff).unwrap();
    let force = lines(400, d, &[(NU, c(1.0, 0.0))]);
    let (z, zt) = forward_narrowband(&force, &ctx).unwrap();
    let band = DeltaRange::new(-omega_eff, 0.0).unwrap();
    assert!(reconstruct_narrowband_case1(&z, &zt, &ctx, band).is_err());
}

/// Relative error over the open band of the Case II reconstruction of a
/// damped-cosine force with `γ = Ω`.
fn case2_error(epsilon: f64, extra_terms: usize) -> (usize, f64) {
    let (omega_eff, d) = (0.1 * NU, 0.1 * NU / 16.0);
    let ctx = TransferContext::narrowband(NU, omega_eff, omega_eff).unwrap();
    let n = case2_term_count(ctx.gamma, omega_eff, epsilon).unwrap();
    let support = NU + (2 * (n + extra_terms) + 2) as f64 * omega_eff;
    let half = (support / d).ceil() as usize + 16;
    let force = damped_cosine(half, d, NU, omega_eff, support);
    let (z, zt) = forward_narrowband(&force, &ctx).unwrap();
    let band = DeltaRange::open_band(omega_eff, d).unwrap();
    let report = if extra_terms == 0 {
        reconstruct_narrowband_case2(&z, &zt, &ctx, epsilon, band).unwrap()
    } else {
        reconstruct_narrowband_case2_terms(&z, &zt, &ctx, n + extra_terms, band).unwrap()
    };
    assert_eq!(report.scheme, ReconstructionScheme::NarrowbandCase2);
    let truth = report
        .force
        .with_values(
            report
                .force
                .omegas()
                .map(|w| force.value_at(w).unwrap())
                .collect(),
        )
        .unwrap();
    (
        report.n_terms_used,
        report.force.relative_l2_error(&truth).unwrap(),
    )
}

#[test]
fn case2_follows_the_truncation_law() {
    for (epsilon, expected_terms) in [(0.1, 10), (0.03, 34), (0.01, 100)] {
        let (n, err) = case2_error(epsilon, 0);
        assert_eq!(n, expected_terms);
        assert!(err <= 3.0 * epsilon, "ε = {epsilon}: error {err}");
        let (_, better) = case2_error(epsilon, 5);
        assert!(better < err, "ε = {epsilon}: {better} !< {err}");
    }
}
