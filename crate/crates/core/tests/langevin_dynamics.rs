use std::f64::consts::PI;

use qnc_core::langevin::{
    ensemble_moments, simulate, simulate_effective_negative, simulate_measured_oscillator,
    simulate_narrowband_quads, simulate_tc_pair,
};
use qnc_core::{
    Channel, Error, ForceDescriptor, InitialState, MeasuredObservable, MeasurementConfig,
    OscillatorParams, Scenario, SimulationPlan, TrajectoryEnsemble, VarianceEstimate,
};

fn undamped(nu: f64) -> OscillatorParams {
    OscillatorParams::undamped(nu).unwrap()
}

fn tc_plan(k: f64, observable: MeasuredObservable, n_traj: usize, seed: u64) -> SimulationPlan {
    SimulationPlan::new(
        undamped(1.0),
        MeasurementConfig::position(k).unwrap(),
        0.005,
        2000,
        n_traj,
        seed,
    )
    .with_second(undamped(1.0))
    .with_observable(observable)
    .with_stride(2000)
    .with_record(false)
}

fn final_samples(ens: &TrajectoryEnsemble, ch: Channel) -> Vec<f64> {
    ens.channel_samples(ch, ens.n_samples() - 1).unwrap()
}

/// Growth of `Var p` for an undamped oscillator with position back-action:
/// `8k (T/2 + sin(2νT)/(4ν))`.
fn momentum_growth(k: f64, nu: f64, t: f64) -> f64 {
    8.0 * k * (t / 2.0 + (2.0 * nu * t).sin() / (4.0 * nu))
}

fn central_difference(series: &[f64], dt: f64, j: usize) -> f64 {
    (series[j + 1] - series[j - 1]) / (2.0 * dt)
}

#[test]
fn back_action_heats_momentum_by_the_exact_law() {
    let (k, t) = (0.25, 10.0);
    let plan = SimulationPlan::new(
        undamped(1.0),
        MeasurementConfig::position(k).unwrap(),
        0.005,
        2000,
        4000,
        3,
    )
    .with_stride(2000)
    .with_record(false);
    let ens = simulate_measured_oscillator(&plan).unwrap();
    let p0 = VarianceEstimate::from_samples(&ens.channel_samples(Channel::P1, 0).unwrap());
    let p_t = VarianceEstimate::from_samples(&final_samples(&ens, Channel::P1));
    let growth = p_t.value - p0.value;
    let se = (p0.std_error.powi(2) + p_t.std_error.powi(2)).sqrt();
    let expected = momentum_growth(k, 1.0, t);
    assert!(
        (growth - expected).abs() < 3.5 * se,
        "{growth} vs {expected} ± {se}"
    );

    // x² + p² gains exactly 8kT on average.
    let x = final_samples(&ens, Channel::X1);
    let p = final_samples(&ens, Channel::P1);
    let energy: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x * x + p * p).collect();
    let n = energy.len() as f64;
    let mean = energy.iter().sum::<f64>() / n;
    let sd = (energy.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 2.0 - 8.0 * k * t).abs() < 3.5 * sd / n.sqrt());
}

#[test]
fn thermal_bath_relaxes_to_occupation_variance() {
    let params = OscillatorParams::new(1.0, 0.1, 2.0).unwrap();
    let plan = SimulationPlan::new(
        params,
        MeasurementConfig::position(0.0).unwrap(),
        0.05,
        3000,
        2000,
        5,
    )
    .with_stride(3000)
    .with_initial(
        InitialState::deterministic(0.0, 0.0),
        InitialState::default(),
    );
    let ens = simulate_measured_oscillator(&plan).unwrap();
    for ch in [Channel::X1, Channel::P1] {
        let v = VarianceEstimate::from_samples(&final_samples(&ens, ch));
        // 1 - e^{-γT} of the stationary value 2n_T + 1 = 5.
        let expected = 5.0 * (1.0 - (-0.1f64 * 150.0).exp());
        assert!(
            (v.value - expected).abs() < 3.5 * v.std_error,
            "{ch:?}: {} vs {expected}",
            v.value
        );
    }
}

#[test]
fn tc_pair_cancels_back_action_path_by_path() {
    let quiet = simulate_tc_pair(&tc_plan(0.0, MeasuredObservable::XPlus, 8, 21)).unwrap();
    let loud = simulate_tc_pair(&tc_plan(1.0, MeasuredObservable::XPlus, 8, 21)).unwrap();
    for (a, b) in quiet.trajectories.iter().zip(&loud.trajectories) {
        for ch in [Channel::XPlus, Channel::PMinus] {
            let (a, b) = (a.channel(ch).unwrap(), b.channel(ch).unwrap());
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12, "{ch:?}");
            }
        }
        let (a, b) = (
            a.channel(Channel::P1).unwrap(),
            b.channel(Channel::P1).unwrap(),
        );
        assert!((a[1] - b[1]).abs() > 1e-6);
    }

    let quiet = simulate_tc_pair(&tc_plan(0.0, MeasuredObservable::XMinus, 8, 22)).unwrap();
    let loud = simulate_tc_pair(&tc_plan(1.0, MeasuredObservable::XMinus, 8, 22)).unwrap();
    for (a, b) in quiet.trajectories.iter().zip(&loud.trajectories) {
        for ch in [Channel::XMinus, Channel::PPlus] {
            let (a, b) = (a.channel(ch).unwrap(), b.channel(ch).unwrap());
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12, "{ch:?}");
            }
        }
    }
}

#[test]
fn tc_pair_cancellation_survives_independent_ensembles() {
    let quiet = simulate_tc_pair(&tc_plan(0.0, MeasuredObservable::XPlus, 3000, 100)).unwrap();
    let loud = simulate_tc_pair(&tc_plan(1.0, MeasuredObservable::XPlus, 3000, 200)).unwrap();
    let v0 = VarianceEstimate::from_samples(&final_samples(&quiet, Channel::PMinus));
    let v1 = VarianceEstimate::from_samples(&final_samples(&loud, Channel::PMinus));
    assert!(v0.z_score(&v1).abs() < 3.5, "z = {}", v0.z_score(&v1));
    assert!((v0.value - 2.0).abs() < 3.5 * v0.std_error);

    let p0 = VarianceEstimate::from_samples(&final_samples(&quiet, Channel::P1));
    let p1 = VarianceEstimate::from_samples(&final_samples(&loud, Channel::P1));
    let expected = momentum_growth(1.0, 1.0, 10.0);
    let se = (p0.std_error.powi(2) + p1.std_error.powi(2)).sqrt();
    assert!((p1.value - p0.value - expected).abs() < 3.5 * se);
}

#[test]
fn difference_mode_responds_to_the_sum_of_forces() {
    let (a, w, dt) = (0.3, 0.9, 0.005);
    let n_steps = 4000;
    let force = ForceDescriptor::sinusoid(a, w, 0.0).unwrap();
    let zero = InitialState::deterministic(0.0, 0.0);
    let run = |k: f64| {
        let plan = SimulationPlan::new(
            undamped(1.0),
            MeasurementConfig::position(k).unwrap(),
            dt,
            n_steps,
            1,
            9,
        )
        .with_second(undamped(1.0))
        .with_observable(MeasuredObservable::XMinus)
        .with_forces(force.clone(), force.clone())
        .with_initial(zero, zero)
        .with_record(false);
        simulate_tc_pair(&plan).unwrap()
    };
    let (quiet, loud) = (run(0.0), run(1.0));
    let x = quiet.trajectories[0].channel(Channel::XMinus).unwrap();
    let p = quiet.trajectories[0].channel(Channel::PPlus).unwrap();
    let scale = 2.0 * a / (1.0 - w * w);
    let (mut err, mut norm) = (0.0, 0.0);
    for (j, t) in quiet.sample_times().into_iter().enumerate() {
        let xe = scale * ((w * t).cos() - t.cos());
        let pe = scale * (-w * (w * t).sin() + t.sin());
        err += (x[j] - xe).powi(2) + (p[j] - pe).powi(2);
        norm += xe * xe + pe * pe;
    }
    assert!((err / norm).sqrt() < 1e-5, "{}", (err / norm).sqrt());
    let x_loud = loud.trajectories[0].channel(Channel::XMinus).unwrap();
    assert!(x.iter().zip(x_loud).all(|(u, v)| (u - v).abs() < 1e-12));
}

#[test]
fn integrator_error_is_second_order_in_dt() {
    let force = ForceDescriptor::sinusoid(0.3, 0.9, 0.4).unwrap();
    let error = |dt: f64| {
        let n_steps = (40.0 / dt).round() as usize;
        let plan = SimulationPlan::new(
            undamped(1.0),
            MeasurementConfig::position(0.0).unwrap(),
            dt,
            n_steps,
            1,
            1,
        )
        .with_forces(force.clone(), ForceDescriptor::zero())
        .with_initial(
            InitialState::deterministic(0.0, 0.0),
            InitialState::default(),
        );
        let ens = simulate_measured_oscillator(&plan).unwrap();
        let x = ens.trajectories[0].channel(Channel::X1).unwrap();
        let t = 40.0;
        // x'' + x = 0.3 cos(0.9t + 0.4), x(0) = x'(0) = 0
        let s = 0.3 / (1.0 - 0.81);
        let exact =
            s * ((0.9 * t + 0.4f64).cos() - 0.4f64.cos() * t.cos() + 0.9 * 0.4f64.sin() * t.sin());
        (x.last().unwrap() - exact).abs()
    };
    let (coarse, fine) = (error(0.02), error(0.01));
    assert!(fine < coarse);
    let order = (coarse / fine).log2();
    assert!(order > 1.8, "observed order {order}");
}

#[test]
fn rotating_quadrature_freezes_a_free_oscillator() {
    let dt = 0.001;
    let n_steps = (100.0 * 2.0 * PI / dt).round() as usize;
    let meas = MeasurementConfig::new(0.0, 1.0, 1.0, 0.0).unwrap();
    let plan = SimulationPlan::new(undamped(1.0), meas, dt, n_steps, 1, 4)
        .with_initial(
            InitialState::deterministic(1.3, -0.4),
            InitialState::default(),
        )
        .keep_channels(&[Channel::Y, Channel::PY]);
    let ens = simulate_measured_oscillator(&plan).unwrap();
    let y = ens.trajectories[0].channel(Channel::Y).unwrap();
    let drift = y.iter().map(|v| (v - 1.3).abs()).fold(0.0, f64::max) / 1.3;
    assert!(drift < 1e-6, "drift {drift}");
}

#[test]
fn effective_negative_oscillator_obeys_its_equations() {
    let dt = 0.001;
    let nu = 1.0;
    let (a, w) = (0.3, 0.7);
    let plan = SimulationPlan::new(
        undamped(nu),
        MeasurementConfig::position(0.0).unwrap(),
        dt,
        20_000,
        1,
        6,
    )
    .with_forces(
        ForceDescriptor::sinusoid(a, w, 0.0).unwrap(),
        ForceDescriptor::zero(),
    )
    .with_initial(
        InitialState::deterministic(0.5, 0.2),
        InitialState::default(),
    );
    let ens = simulate_effective_negative(&plan).unwrap();
    let tr = &ens.trajectories[0];
    let (y, py) = (
        tr.channel(Channel::Y).unwrap(),
        tr.channel(Channel::PY).unwrap(),
    );
    let times = ens.sample_times();
    let mut worst: f64 = 0.0;
    for j in (1..times.len() - 1).step_by(37) {
        let t = times[j];
        let f = a * (w * t).cos();
        let dy = central_difference(y, dt, j);
        let dpy = central_difference(py, dt, j);
        worst = worst
            .max((dy - (-nu * py[j] - (2.0 * nu * t).sin() * f)).abs())
            .max((dpy - (nu * y[j] + (2.0 * nu * t).cos() * f)).abs());
    }
    assert!(worst < 1e-5, "worst residual {worst}");
}

#[test]
fn narrowband_quadratures_oscillate_at_plus_and_minus_omega() {
    let (nu, omega_eff, dt) = (1.0, 0.1, 0.001);
    let (a, w) = (0.5, 1.05);
    let force = ForceDescriptor::sinusoid(a, w, 0.3).unwrap();
    let init = InitialState::deterministic(0.4, -0.1);
    let plan = SimulationPlan::new(
        undamped(nu),
        MeasurementConfig::position(0.0).unwrap(),
        dt,
        20_000,
        1,
        8,
    )
    .with_observable(MeasuredObservable::YSum)
    .with_forces(force.clone(), force)
    .with_initial(init, init);
    let ens = simulate_narrowband_quads(&plan, omega_eff).unwrap();
    let tr = &ens.trajectories[0];
    let times = ens.sample_times();
    let cases = [
        (
            Channel::YPlus,
            Channel::PPlusQuad,
            nu - omega_eff,
            omega_eff,
        ),
        (
            Channel::YMinus,
            Channel::PMinusQuad,
            nu + omega_eff,
            -omega_eff,
        ),
    ];
    let mut worst: f64 = 0.0;
    for (yc, pc, rot, apparent) in cases {
        let (y, py) = (tr.channel(yc).unwrap(), tr.channel(pc).unwrap());
        for j in (1..times.len() - 1).step_by(41) {
            let t = times[j];
            let f = a * (w * t + 0.3).cos();
            let (s, c) = (rot * t).sin_cos();
            worst = worst
                .max((central_difference(y, dt, j) - (apparent * py[j] - s * f)).abs())
                .max((central_difference(py, dt, j) - (-apparent * y[j] + c * f)).abs());
        }
    }
    assert!(worst < 1e-5, "worst residual {worst}");
    let z = tr.channel(Channel::Z).unwrap();
    let (yp, ym) = (
        tr.channel(Channel::YPlus).unwrap(),
        tr.channel(Channel::YMinus).unwrap(),
    );
    assert!(z
        .iter()
        .zip(yp)
        .zip(ym)
        .all(|((z, a), b)| (z - a - b).abs() < 1e-12));
}

#[test]
fn quiet_systems_stay_at_rest() {
    let zero = InitialState::deterministic(0.0, 0.0);
    let plan = SimulationPlan::new(
        undamped(1.0),
        MeasurementConfig::position(0.0).unwrap(),
        0.01,
        500,
        3,
        1,
    )
    .with_initial(zero, zero);
    let scenarios = [
        (plan.clone(), Scenario::MeasuredOscillator),
        (plan.clone(), Scenario::EffectiveNegative),
        (
            plan.clone().with_observable(MeasuredObservable::XPlus),
            Scenario::TcPair,
        ),
        (
            plan.clone().with_observable(MeasuredObservable::YSum),
            Scenario::NarrowbandQuads { omega_eff: 0.1 },
        ),
    ];
    for (plan, scenario) in scenarios {
        let ens = simulate(&plan, scenario).unwrap();
        for tr in &ens.trajectories {
            for (ch, series) in &tr.channels {
                assert!(series.iter().all(|v| *v == 0.0), "{scenario:?} {ch:?}");
            }
        }
    }
}

#[test]
fn noise_and_signal_superpose_path_by_path() {
    let params = OscillatorParams::new(1.0, 0.1, 1.0).unwrap();
    let force = ForceDescriptor::sinusoid(0.7, 1.1, 0.2).unwrap();
    let base = |k: f64, seed: u64| {
        SimulationPlan::new(
            params,
            MeasurementConfig::position(k).unwrap(),
            0.005,
            3000,
            2,
            seed,
        )
        .with_record(false)
    };
    let clean = {
        let plan = SimulationPlan::new(
            OscillatorParams::new(1.0, 0.1, 0.0).unwrap(),
            MeasurementConfig::position(0.0).unwrap(),
            0.005,
            3000,
            1,
            0,
        )
        .with_forces(force.clone(), ForceDescriptor::zero())
        .with_initial(
            InitialState::deterministic(0.0, 0.0),
            InitialState::default(),
        );
        // Thermal noise at n_T = 0 is still present; remove it by differencing too.
        let noisy = simulate_measured_oscillator(&plan).unwrap();
        let quiet = simulate_measured_oscillator(
            &plan
                .clone()
                .with_forces(ForceDescriptor::zero(), ForceDescriptor::zero()),
        )
        .unwrap();
        let a = noisy.trajectories[0].channel(Channel::X1).unwrap().to_vec();
        let b = quiet.trajectories[0].channel(Channel::X1).unwrap();
        a.iter().zip(b).map(|(a, b)| a - b).collect::<Vec<_>>()
    };
    for (k, seed) in [(0.0, 1), (1.0, 2), (1.0, 99)] {
        let plan = base(k, seed);
        let driven = simulate_measured_oscillator(
            &plan
                .clone()
                .with_forces(force.clone(), ForceDescriptor::zero()),
        )
        .unwrap();
        let free = simulate_measured_oscillator(&plan).unwrap();
        for (d, f) in driven.trajectories.iter().zip(&free.trajectories) {
            let (d, f) = (
                d.channel(Channel::X1).unwrap(),
                f.channel(Channel::X1).unwrap(),
            );
            for j in 0..clean.len() {
                assert!((d[j] - f[j] - clean[j]).abs() < 1e-10, "k = {k}, step {j}");
            }
        }
    }
}

#[test]
fn ensembles_are_reproducible_and_thread_independent() {
    let plan = tc_plan(0.5, MeasuredObservable::XPlus, 17, 1234).with_stride(100);
    let a = simulate_tc_pair(&plan).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let b = pool.install(|| simulate_tc_pair(&plan).unwrap());
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let c = single.install(|| simulate_tc_pair(&plan).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);

    let m1 = ensemble_moments(&plan, Scenario::TcPair).unwrap();
    let m2 = pool.install(|| ensemble_moments(&plan, Scenario::TcPair).unwrap());
    assert_eq!(m1, m2);

    let other = simulate_tc_pair(&SimulationPlan {
        base_seed: 1235,
        ..plan.clone()
    })
    .unwrap();
    assert_ne!(a.trajectories[0], other.trajectories[0]);
    let seeds = a.seeds();
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), seeds.len());
}

#[test]
fn oversized_steps_are_rejected() {
    let plan = SimulationPlan::new(
        undamped(1.0),
        MeasurementConfig::position(1.0).unwrap(),
        0.01,
        10,
        1,
        1,
    );
    assert!(matches!(
        simulate_measured_oscillator(&plan),
        Err(Error::InvalidParameter { name: "dt", .. })
    ));
    let plan = SimulationPlan::new(
        undamped(1.0),
        MeasurementConfig::position(0.0).unwrap(),
        0.5,
        10,
        1,
        1,
    );
    assert!(simulate_measured_oscillator(&plan).is_err());
}
