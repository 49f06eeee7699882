//! Monte-Carlo integration of the linear Langevin equations of continuously
//! measured oscillators.
//!
//! Each mode obeys
//!
//! ```text
//! dx = ( ν p - γ/2 x) dt + √(γ(2n_T+1)) dW_x + w sinθ √(8k) dξ
//! dp = (-ν x - γ/2 p + f) dt + √(γ(2n_T+1)) dW_p + w cosθ √(8k) dξ
//! ```
//!
//! where `θ = rot·t + phase` selects the measured quadrature
//! `x cosθ - p sinθ` and `ξ` is shared by every mode in the same measurement.
//! The kick direction `(sinθ, cosθ)` is the conjugate quadrature, so the
//! measured quadrature itself is never disturbed by its own back-action.
//!
//! Steps use the exact free propagator and apply the noise and force
//! increments at the mid-point of the step. Free motion is therefore exact up
//! to rounding, and back-action cancellation between paired modes holds path
//! by path rather than only on average.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ForceDescriptor, ForceKind, MeasurementConfig, OscillatorParams};

/// Trajectories per work unit when only ensemble moments are kept.
const MOMENT_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasuredObservable {
    X1,
    XPlus,
    XMinus,
    YSum,
    YSumLagged,
}

/// Stored time series of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    X1,
    P1,
    X2,
    P2,
    XPlus,
    XMinus,
    PPlus,
    PMinus,
    /// Measured rotating quadrature of oscillator 1.
    Y,
    /// Its conjugate `x sinθ + p cosθ`.
    PY,
    YPlus,
    PPlusQuad,
    YMinus,
    PMinusQuad,
    Z,
    YPlusLagged,
    YMinusLagged,
    ZTilde,
    Record,
    RecordTilde,
}

impl Channel {
    pub const ALL: [Channel; 20] = [
        Channel::X1,
        Channel::P1,
        Channel::X2,
        Channel::P2,
        Channel::XPlus,
        Channel::XMinus,
        Channel::PPlus,
        Channel::PMinus,
        Channel::Y,
        Channel::PY,
        Channel::YPlus,
        Channel::PPlusQuad,
        Channel::YMinus,
        Channel::PMinusQuad,
        Channel::Z,
        Channel::YPlusLagged,
        Channel::YMinusLagged,
        Channel::ZTilde,
        Channel::Record,
        Channel::RecordTilde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X1 => "x1",
            Channel::P1 => "p1",
            Channel::X2 => "x2",
            Channel::P2 => "p2",
            Channel::XPlus => "X_plus",
            Channel::XMinus => "X_minus",
            Channel::PPlus => "P_plus",
            Channel::PMinus => "P_minus",
            Channel::Y => "y",
            Channel::PY => "p_y",
            Channel::YPlus => "y_plus",
            Channel::PPlusQuad => "p_y_plus",
            Channel::YMinus => "y_minus",
            Channel::PMinusQuad => "p_y_minus",
            Channel::Z => "z",
            Channel::YPlusLagged => "y_plus_lag",
            Channel::YMinusLagged => "y_minus_lag",
            Channel::ZTilde => "z_tilde",
            Channel::Record => "record",
            Channel::RecordTilde => "record_tilde",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Gaussian initial state of one oscillator: mean `(x, p)` and the variance
/// of each quadrature (1 is the vacuum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub mean: [f64; 2],
    pub variance: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            mean: [0.0, 0.0],
            variance: 1.0,
        }
    }
}

impl InitialState {
    pub fn deterministic(x: f64, p: f64) -> Self {
        Self {
            mean: [x, p],
            variance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub params1: OscillatorParams,
    pub params2: Option<OscillatorParams>,
    pub meas: MeasurementConfig,
    pub observable: MeasuredObservable,
    pub force1: ForceDescriptor,
    pub force2: ForceDescriptor,
    pub dt: f64,
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub base_seed: u64,
    pub initial1: InitialState,
    pub initial2: InitialState,
    /// Keep every `sample_stride`-th step (the record is sampled at the same rate).
    pub sample_stride: usize,
    /// Generate the noisy measurement record; only meaningful for `k > 0`.
    pub record: bool,
    /// Channels to keep; `None` keeps everything the scenario produces.
    pub channels: Option<Vec<Channel>>,
}

impl SimulationPlan {
    /// Single-oscillator plan with zero forces, vacuum initial states, every
    /// step stored and a record whenever `k > 0`.
    pub fn new(
        params1: OscillatorParams,
        meas: MeasurementConfig,
        dt: f64,
        n_steps: usize,
        n_trajectories: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            params1,
            params2: None,
            meas,
            observable: MeasuredObservable::X1,
            force1: ForceDescriptor::zero(),
            force2: ForceDescriptor::zero(),
            dt,
            n_steps,
            n_trajectories,
            base_seed,
            initial1: InitialState::default(),
            initial2: InitialState::default(),
            sample_stride: 1,
            record: meas.k > 0.0,
            channels: None,
        }
    }

    pub fn with_second(mut self, params2: OscillatorParams) -> Self {
        self.params2 = Some(params2);
        self
    }

    pub fn with_observable(mut self, observable: MeasuredObservable) -> Self {
        self.observable = observable;
        self
    }

    pub fn with_forces(mut self, force1: ForceDescriptor, force2: ForceDescriptor) -> Self {
        self.force1 = force1;
        self.force2 = force2;
        self
    }

    pub fn with_initial(mut self, initial1: InitialState, initial2: InitialState) -> Self {
        self.initial1 = initial1;
        self.initial2 = initial2;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    pub fn with_record(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn keep_channels(mut self, channels: &[Channel]) -> Self {
        self.channels = Some(channels.to_vec());
        self
    }

    /// Largest time step allowed for the given extra oscillation frequency
    /// (measurement rotations): `min(2π/(20·f_max), 1/(20·max(γ, 8k)))`.
    pub fn max_dt(&self, extra_frequency: f64) -> f64 {
        let mut f_max = self.params1.nu.max(extra_frequency.abs());
        let mut rate = self.params1.gamma.max(8.0 * self.meas.k);
        if let Some(p2) = self.params2 {
            f_max = f_max.max(p2.nu);
            rate = rate.max(p2.gamma);
        }
        f_max = f_max
            .max(self.force1.max_frequency())
            .max(self.force2.max_frequency());
        let mut limit = 2.0 * PI / (20.0 * f_max);
        if rate > 0.0 {
            limit = limit.min(1.0 / (20.0 * rate));
        }
        limit
    }

    pub fn validate(&self, extra_frequency: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        let limit = self.max_dt(extra_frequency);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "dt",
                format!("{} exceeds the stability ceiling {limit}", self.dt),
            ));
        }
        if self.n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories", "must be >= 1"));
        }
        if self.sample_stride == 0 {
            return Err(Error::invalid("sample_stride", "must be >= 1"));
        }
        if self.record && self.meas.k == 0.0 {
            return Err(Error::invalid("record", "a measurement record needs k > 0"));
        }
        for init in [self.initial1, self.initial2] {
            if !(init.variance.is_finite() && init.variance >= 0.0)
                || !init.mean.iter().all(|m| m.is_finite())
            {
                return Err(Error::invalid(
                    "initial",
                    "initial means must be finite and variance >= 0",
                ));
            }
        }
        Ok(())
    }
}

/// Which set of equations a plan is integrated with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    MeasuredOscillator,
    TcPair,
    EffectiveNegative,
    NarrowbandQuads { omega_eff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub channels: BTreeMap<Channel, Vec<f64>>,
}

impl Trajectory {
    pub fn channel(&self, channel: Channel) -> Option<&[f64]> {
        self.channels.get(&channel).map(Vec::as_slice)
    }
}

/// Sample variance with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl VarianceEstimate {
    /// From the first four sample moments; the standard error uses the
    /// large-sample formula `√((m₄ - s⁴)/n)`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n < 2 {
            return Self {
                value: 0.0,
                std_error: f64::INFINITY,
                n,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let (mut m2, mut m4) = (0.0, 0.0);
        for s in samples {
            let d = (s - mean) * (s - mean);
            m2 += d;
            m4 += d * d;
        }
        Self::from_central(n, m2 / n as f64, m4 / n as f64)
    }

    fn from_central(n: usize, m2: f64, m4: f64) -> Self {
        let nf = n as f64;
        let value = m2 * nf / (nf - 1.0);
        let std_error = ((m4 - m2 * m2).max(0.0) / nf).sqrt();
        Self {
            value,
            std_error,
            n,
        }
    }

    /// `|a - b| / √(se_a² + se_b²)` for independent ensembles.
    pub fn z_score(&self, other: &VarianceEstimate) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        let diff = (self.value - other.value).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub dt: f64,
    pub n_steps: usize,
    pub sample_stride: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.trajectories.iter().map(|t| t.seed).collect()
    }

    pub fn n_samples(&self) -> usize {
        self.n_steps / self.sample_stride + 1
    }

    pub fn sample_dt(&self) -> f64 {
        self.dt * self.sample_stride as f64
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.n_samples())
            .map(|j| j as f64 * self.sample_dt())
            .collect()
    }

    pub fn channel_names(&self) -> Vec<Channel> {
        self.trajectories
            .first()
            .map(|t| t.channels.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Value of `channel` at sample `index` across all trajectories.
    pub fn channel_samples(&self, channel: Channel, index: usize) -> Option<Vec<f64>> {
        self.trajectories
            .iter()
            .map(|t| t.channels.get(&channel).and_then(|s| s.get(index).copied()))
            .collect()
    }

    pub fn mean_series(&self, channel: Channel) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.n_samples()];
        for t in &self.trajectories {
            for (acc, v) in sum.iter_mut().zip(t.channels.get(&channel)?) {
                *acc += v;
            }
        }
        let n = self.trajectories.len() as f64;
        Some(sum.into_iter().map(|s| s / n).collect())
    }

    pub fn variance_at(&self, channel: Channel, index: usize) -> Option<VarianceEstimate> {
        self.channel_samples(channel, index)
            .map(|s| VarianceEstimate::from_samples(&s))
    }
}

/// Per-sample ensemble moments of each channel, accumulated without keeping
/// the trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub dt: f64,
    pub n_steps: usize,
    pub sample_stride: usize,
    pub seeds: Vec<u64>,
    sums: BTreeMap<Channel, [Vec<f64>; 4]>,
}

impl EnsembleMoments {
    pub fn n_trajectories(&self) -> usize {
        self.seeds.len()
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let step = self.dt * self.sample_stride as f64;
        (0..self.n_steps / self.sample_stride + 1)
            .map(|j| j as f64 * step)
            .collect()
    }

    pub fn channel_names(&self) -> Vec<Channel> {
        self.sums.keys().copied().collect()
    }

    pub fn mean_series(&self, channel: Channel) -> Option<Vec<f64>> {
        let n = self.seeds.len() as f64;
        self.sums
            .get(&channel)
            .map(|s| s[0].iter().map(|v| v / n).collect())
    }

    pub fn variance_at(&self, channel: Channel, index: usize) -> Option<VarianceEstimate> {
        let s = self.sums.get(&channel)?;
        let n = self.seeds.len();
        if n < 2 {
            return Some(VarianceEstimate::from_samples(&[]));
        }
        let nf = n as f64;
        let mean = s[0][index] / nf;
        let e2 = s[1][index] / nf;
        let e3 = s[2][index] / nf;
        let e4 = s[3][index] / nf;
        let m2 = (e2 - mean * mean).max(0.0);
        let m4 = e4 - 4.0 * mean * e3 + 6.0 * mean * mean * e2 - 3.0 * mean.powi(4);
        Some(VarianceEstimate::from_central(n, m2, m4))
    }

    pub fn variance_series(&self, channel: Channel) -> Option<Vec<f64>> {
        let len = self.sums.get(&channel)?[0].len();
        (0..len)
            .map(|j| self.variance_at(channel, j).map(|v| v.value))
            .collect()
    }

    fn absorb(&mut self, channels: &BTreeMap<Channel, Vec<f64>>) {
        for (ch, series) in channels {
            let entry = self
                .sums
                .entry(*ch)
                .or_insert_with(|| std::array::from_fn(|_| vec![0.0; series.len()]));
            for (j, &v) in series.iter().enumerate() {
                let v2 = v * v;
                entry[0][j] += v;
                entry[1][j] += v2;
                entry[2][j] += v2 * v;
                entry[3][j] += v2 * v2;
            }
        }
    }

    fn merge(&mut self, other: EnsembleMoments) {
        self.seeds.extend(other.seeds);
        for (ch, sums) in other.sums {
            match self.sums.get_mut(&ch) {
                Some(mine) => {
                    for (a, b) in mine.iter_mut().zip(sums) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                    }
                }
                None => {
                    self.sums.insert(ch, sums);
                }
            }
        }
    }
}

/// Seed of trajectory `index`: SplitMix64 of `base + index·φ`, which is a
/// bijection, so seeds never repeat within an ensemble.
pub fn trajectory_seed(base_seed: u64, index: usize) -> u64 {
    let mut z = base_seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    group: usize,
    rot: f64,
    phase: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
struct Mode {
    thermal_amp: f64,
    force: Option<usize>,
    probe: Option<Probe>,
    initial: InitialState,
    full: [[f64; 2]; 2],
    half: [[f64; 2]; 2],
}

impl Mode {
    fn new(
        nu: f64,
        params: &OscillatorParams,
        dt: f64,
        force: Option<usize>,
        probe: Option<Probe>,
        initial: InitialState,
    ) -> Self {
        Self {
            thermal_amp: (params.thermal_intensity() * dt).sqrt(),
            force,
            probe,
            initial,
            full: propagator(nu, params.gamma, dt),
            half: propagator(nu, params.gamma, dt / 2.0),
        }
    }
}

/// `e^{-γτ/2} [[cos ντ, sin ντ], [-sin ντ, cos ντ]]`, the exact free evolution of `(x, p)`.
fn propagator(nu: f64, gamma: f64, tau: f64) -> [[f64; 2]; 2] {
    let decay = (-gamma * tau / 2.0).exp();
    let (s, c) = (nu * tau).sin_cos();
    [[decay * c, decay * s], [-decay * s, decay * c]]
}

fn apply(m: &[[f64; 2]; 2], u: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * u[0] + m[0][1] * u[1],
        m[1][0] * u[0] + m[1][1] * u[1],
    ]
}

#[derive(Debug, Clone, Copy)]
struct Group {
    backaction_amp: f64,
    record_amp: Option<f64>,
}

enum ForceEval {
    Zero,
    Direct(ForceDescriptor),
    /// `f((n + 1/2)·dt)` for every step.
    Table(Vec<f64>),
}

impl ForceEval {
    fn new(force: &ForceDescriptor, dt: f64, n_steps: usize) -> Self {
        match force.kind {
            ForceKind::Zero => ForceEval::Zero,
            ForceKind::Sinusoid { .. } => ForceEval::Direct(force.clone()),
            ForceKind::BandLimited(_) | ForceKind::Tabulated { .. } => ForceEval::Table(
                (0..n_steps)
                    .map(|n| force.value_at((n as f64 + 0.5) * dt))
                    .collect(),
            ),
        }
    }

    fn at_step(&self, n: usize, dt: f64) -> f64 {
        match self {
            ForceEval::Zero => 0.0,
            ForceEval::Direct(f) => f.value_at((n as f64 + 0.5) * dt),
            ForceEval::Table(values) => values[n],
        }
    }
}

/// Raw per-mode series and per-group records of one trajectory.
struct RawTrajectory {
    x: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    records: Vec<Vec<f64>>,
}

struct Engine {
    modes: Vec<Mode>,
    groups: Vec<Group>,
    forces: Vec<ForceEval>,
    dt: f64,
    n_steps: usize,
    stride: usize,
}

impl Engine {
    fn n_samples(&self) -> usize {
        self.n_steps / self.stride + 1
    }

    fn run(&self, seed: u64) -> RawTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut record_rng = ChaCha8Rng::seed_from_u64(seed);
        record_rng.set_stream(1);

        let n_samples = self.n_samples();
        let n_modes = self.modes.len();
        let mut x = vec![Vec::with_capacity(n_samples); n_modes];
        let mut p = vec![Vec::with_capacity(n_samples); n_modes];
        let mut records: Vec<Vec<f64>> = self
            .groups
            .iter()
            .map(|g| Vec::with_capacity(if g.record_amp.is_some() { n_samples } else { 0 }))
            .collect();

        let mut state: Vec<[f64; 2]> = self
            .modes
            .iter()
            .map(|m| {
                let sd = m.initial.variance.sqrt();
                let nx: f64 = rng.sample(StandardNormal);
                let np: f64 = rng.sample(StandardNormal);
                [m.initial.mean[0] + sd * nx, m.initial.mean[1] + sd * np]
            })
            .collect();
        let mut xi = vec![0.0; self.groups.len()];

        let store = |state: &[[f64; 2]],
                     x: &mut Vec<Vec<f64>>,
                     p: &mut Vec<Vec<f64>>,
                     records: &mut Vec<Vec<f64>>,
                     record_rng: &mut ChaCha8Rng,
                     t: f64| {
            for (i, u) in state.iter().enumerate() {
                x[i].push(u[0]);
                p[i].push(u[1]);
            }
            for (g, group) in self.groups.iter().enumerate() {
                let Some(amp) = group.record_amp else {
                    continue;
                };
                let mut signal = 0.0;
                for (mode, u) in self.modes.iter().zip(state) {
                    if let Some(probe) = mode.probe.filter(|pr| pr.group == g) {
                        let (s, c) = (probe.rot * t + probe.phase).sin_cos();
                        signal += probe.weight * (u[0] * c - u[1] * s);
                    }
                }
                let noise: f64 = record_rng.sample(StandardNormal);
                records[g].push(signal + amp * noise);
            }
        };

        store(&state, &mut x, &mut p, &mut records, &mut record_rng, 0.0);
        for n in 0..self.n_steps {
            let t_mid = (n as f64 + 0.5) * self.dt;
            for (g, group) in self.groups.iter().enumerate() {
                let draw: f64 = rng.sample(StandardNormal);
                xi[g] = group.backaction_amp * draw;
            }
            let forces: [f64; 2] = [
                self.forces.first().map_or(0.0, |f| f.at_step(n, self.dt)),
                self.forces.get(1).map_or(0.0, |f| f.at_step(n, self.dt)),
            ];
            for (mode, u) in self.modes.iter().zip(state.iter_mut()) {
                let nx: f64 = rng.sample(StandardNormal);
                let np: f64 = rng.sample(StandardNormal);
                let mut kick = [mode.thermal_amp * nx, mode.thermal_amp * np];
                if let Some(probe) = mode.probe {
                    let (s, c) = (probe.rot * t_mid + probe.phase).sin_cos();
                    let b = probe.weight * xi[probe.group];
                    kick[0] += b * s;
                    kick[1] += b * c;
                }
                if let Some(f) = mode.force {
                    kick[1] += forces[f] * self.dt;
                }
                let free = apply(&mode.full, *u);
                let driven = apply(&mode.half, kick);
                *u = [free[0] + driven[0], free[1] + driven[1]];
            }
            if (n + 1) % self.stride == 0 {
                let t = (n + 1) as f64 * self.dt;
                store(&state, &mut x, &mut p, &mut records, &mut record_rng, t);
            }
        }
        RawTrajectory { x, p, records }
    }
}

type Derive = dyn Fn(&RawTrajectory, f64) -> BTreeMap<Channel, Vec<f64>> + Sync;

struct Prepared {
    engine: Engine,
    derive: Box<Derive>,
}

fn quadrature(x: &[f64], p: &[f64], rot: f64, phase: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(p)
        .enumerate()
        .map(|(j, (&x, &p))| {
            let (s, c) = (rot * j as f64 * dt + phase).sin_cos();
            (x * c - p * s, x * s + p * c)
        })
        .unzip()
}

fn add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + sign * b).collect()
}

fn group(meas: &MeasurementConfig, dt: f64, stride: usize, record: bool) -> Group {
    let sample_dt = dt * stride as f64;
    Group {
        backaction_amp: (8.0 * meas.k * dt).sqrt(),
        record_amp: record.then(|| 1.0 / (8.0 * meas.eta * meas.k * sample_dt).sqrt()),
    }
}

fn require_observable(
    plan: &SimulationPlan,
    allowed: &[MeasuredObservable],
    op: &str,
) -> Result<()> {
    if allowed.contains(&plan.observable) {
        Ok(())
    } else {
        Err(Error::invalid(
            "observable",
            format!(
                "{op} cannot measure {:?}; expected one of {allowed:?}",
                plan.observable
            ),
        ))
    }
}

fn prepare(plan: &SimulationPlan, scenario: Scenario) -> Result<Prepared> {
    let dt = plan.dt;
    let stride = plan.sample_stride.max(1);
    let forces = vec![
        ForceEval::new(&plan.force1, dt, plan.n_steps),
        ForceEval::new(&plan.force2, dt, plan.n_steps),
    ];
    let p1 = plan.params1;
    let nu = p1.nu;
    let meas = plan.meas;
    let base = |modes, groups, forces| Engine {
        modes,
        groups,
        forces,
        dt,
        n_steps: plan.n_steps,
        stride,
    };

    match scenario {
        Scenario::MeasuredOscillator | Scenario::EffectiveNegative => {
            let (rot, phase, op) = match scenario {
                Scenario::MeasuredOscillator => {
                    (meas.rot_freq, meas.phase, "simulate_measured_oscillator")
                }
                _ => (2.0 * nu, meas.phase, "simulate_effective_negative"),
            };
            require_observable(plan, &[MeasuredObservable::X1], op)?;
            plan.validate(rot)?;
            let probe = Probe {
                group: 0,
                rot,
                phase,
                weight: 1.0,
            };
            let modes = vec![Mode::new(nu, &p1, dt, Some(0), Some(probe), plan.initial1)];
            let groups = vec![group(&meas, dt, stride, plan.record)];
            let derive = Box::new(move |raw: &RawTrajectory, sdt: f64| {
                let (y, py) = quadrature(&raw.x[0], &raw.p[0], rot, phase, sdt);
                let mut out = BTreeMap::from([
                    (Channel::X1, raw.x[0].clone()),
                    (Channel::P1, raw.p[0].clone()),
                    (Channel::Y, y),
                    (Channel::PY, py),
                ]);
                if !raw.records[0].is_empty() {
                    out.insert(Channel::Record, raw.records[0].clone());
                }
                out
            });
            Ok(Prepared {
                engine: base(modes, groups, forces),
                derive,
            })
        }
        Scenario::TcPair => {
            const OP: &str = "simulate_tc_pair";
            require_observable(
                plan,
                &[MeasuredObservable::XPlus, MeasuredObservable::XMinus],
                OP,
            )?;
            if !meas.is_position() {
                return Err(Error::invalid(
                    "rot_freq",
                    format!("{OP} measures positions; rotation and phase must be 0"),
                ));
            }
            plan.validate(0.0)?;
            let p2 = plan.params2.unwrap_or(p1);
            let sign = if plan.observable == MeasuredObservable::XPlus {
                1.0
            } else {
                -1.0
            };
            let probe = |weight| Probe {
                group: 0,
                rot: 0.0,
                phase: 0.0,
                weight,
            };
            let modes = vec![
                Mode::new(nu, &p1, dt, Some(0), Some(probe(1.0)), plan.initial1),
                Mode::new(-p2.nu, &p2, dt, Some(1), Some(probe(sign)), plan.initial2),
            ];
            let groups = vec![group(&meas, dt, stride, plan.record)];
            let derive = Box::new(|raw: &RawTrajectory, _: f64| {
                let (x1, p1, x2, p2) = (&raw.x[0], &raw.p[0], &raw.x[1], &raw.p[1]);
                let mut out = BTreeMap::from([
                    (Channel::XPlus, add(x1, x2, 1.0)),
                    (Channel::XMinus, add(x1, x2, -1.0)),
                    (Channel::PPlus, add(p1, p2, 1.0)),
                    (Channel::PMinus, add(p1, p2, -1.0)),
                    (Channel::X1, x1.clone()),
                    (Channel::P1, p1.clone()),
                    (Channel::X2, x2.clone()),
                    (Channel::P2, p2.clone()),
                ]);
                if !raw.records[0].is_empty() {
                    out.insert(Channel::Record, raw.records[0].clone());
                }
                out
            });
            Ok(Prepared {
                engine: base(modes, groups, forces),
                derive,
            })
        }
        Scenario::NarrowbandQuads { omega_eff } => {
            if !(omega_eff > 0.0 && omega_eff < nu) {
                return Err(Error::invalid(
                    "omega_eff",
                    format!("narrowband quadratures need 0 < Ω < ν, got Ω = {omega_eff}, ν = {nu}"),
                ));
            }
            require_observable(
                plan,
                &[MeasuredObservable::YSum, MeasuredObservable::YSumLagged],
                "simulate_narrowband_quads",
            )?;
            let p2 = plan.params2.unwrap_or(p1);
            let (rot_plus, rot_minus) = (nu - omega_eff, p2.nu + omega_eff);
            plan.validate(rot_minus)?;
            let probe = |group, rot, phase| Probe {
                group,
                rot,
                phase,
                weight: 1.0,
            };
            let lag = -FRAC_PI_2;
            let modes = vec![
                Mode::new(
                    nu,
                    &p1,
                    dt,
                    Some(0),
                    Some(probe(0, rot_plus, 0.0)),
                    plan.initial1,
                ),
                Mode::new(
                    p2.nu,
                    &p2,
                    dt,
                    Some(1),
                    Some(probe(0, rot_minus, 0.0)),
                    plan.initial2,
                ),
                Mode::new(
                    nu,
                    &p1,
                    dt,
                    Some(0),
                    Some(probe(1, rot_plus, lag)),
                    plan.initial1,
                ),
                Mode::new(
                    p2.nu,
                    &p2,
                    dt,
                    Some(1),
                    Some(probe(1, rot_minus, lag)),
                    plan.initial2,
                ),
            ];
            let g = group(&meas, dt, stride, plan.record);
            let groups = vec![g, g];
            let derive = Box::new(move |raw: &RawTrajectory, sdt: f64| {
                let (y_plus, p_plus) = quadrature(&raw.x[0], &raw.p[0], rot_plus, 0.0, sdt);
                let (y_minus, p_minus) = quadrature(&raw.x[1], &raw.p[1], rot_minus, 0.0, sdt);
                let (y_plus_lag, _) = quadrature(&raw.x[2], &raw.p[2], rot_plus, lag, sdt);
                let (y_minus_lag, _) = quadrature(&raw.x[3], &raw.p[3], rot_minus, lag, sdt);
                let mut out = BTreeMap::from([
                    (Channel::X1, raw.x[0].clone()),
                    (Channel::P1, raw.p[0].clone()),
                    (Channel::X2, raw.x[1].clone()),
                    (Channel::P2, raw.p[1].clone()),
                    (Channel::Z, add(&y_plus, &y_minus, 1.0)),
                    (Channel::ZTilde, add(&y_plus_lag, &y_minus_lag, 1.0)),
                    (Channel::YPlus, y_plus),
                    (Channel::PPlusQuad, p_plus),
                    (Channel::YMinus, y_minus),
                    (Channel::PMinusQuad, p_minus),
                    (Channel::YPlusLagged, y_plus_lag),
                    (Channel::YMinusLagged, y_minus_lag),
                ]);
                if !raw.records[0].is_empty() {
                    out.insert(Channel::Record, raw.records[0].clone());
                    out.insert(Channel::RecordTilde, raw.records[1].clone());
                }
                out
            });
            Ok(Prepared {
                engine: base(modes, groups, forces),
                derive,
            })
        }
    }
}

fn channels_of(
    prepared: &Prepared,
    plan: &SimulationPlan,
    seed: u64,
) -> BTreeMap<Channel, Vec<f64>> {
    let raw = prepared.engine.run(seed);
    let mut channels = (prepared.derive)(&raw, plan.dt * plan.sample_stride as f64);
    if let Some(keep) = &plan.channels {
        channels.retain(|ch, _| keep.contains(ch));
    }
    channels
}

/// Integrate every trajectory of `plan` and keep all requested channels.
///
/// Trajectories run in parallel; results are ordered by trajectory index and
/// are bit-identical for a given `base_seed`.
pub fn simulate(plan: &SimulationPlan, scenario: Scenario) -> Result<TrajectoryEnsemble> {
    let prepared = prepare(plan, scenario)?;
    let trajectories = (0..plan.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let seed = trajectory_seed(plan.base_seed, i);
            Trajectory {
                seed,
                channels: channels_of(&prepared, plan, seed),
            }
        })
        .collect();
    Ok(TrajectoryEnsemble {
        dt: plan.dt,
        n_steps: plan.n_steps,
        sample_stride: plan.sample_stride,
        trajectories,
    })
}

/// Like [`simulate`] but only keeps per-sample moments, for ensembles too large
/// to hold in memory. Chunks of trajectories are merged in index order, so the
/// result is deterministic regardless of thread count.
pub fn ensemble_moments(plan: &SimulationPlan, scenario: Scenario) -> Result<EnsembleMoments> {
    let prepared = prepare(plan, scenario)?;
    let empty = || EnsembleMoments {
        dt: plan.dt,
        n_steps: plan.n_steps,
        sample_stride: plan.sample_stride,
        seeds: Vec::new(),
        sums: BTreeMap::new(),
    };
    let n_chunks = plan.n_trajectories.div_ceil(MOMENT_CHUNK);
    let chunks: Vec<EnsembleMoments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = empty();
            let end = ((c + 1) * MOMENT_CHUNK).min(plan.n_trajectories);
            for i in c * MOMENT_CHUNK..end {
                let seed = trajectory_seed(plan.base_seed, i);
                acc.absorb(&channels_of(&prepared, plan, seed));
                acc.seeds.push(seed);
            }
            acc
        })
        .collect();
    let mut total = empty();
    for chunk in chunks {
        total.merge(chunk);
    }
    Ok(total)
}

/// One measured oscillator; the record is `x cosθ - p sinθ` plus white noise
/// with the rotation and phase of `plan.meas`.
pub fn simulate_measured_oscillator(plan: &SimulationPlan) -> Result<TrajectoryEnsemble> {
    simulate(plan, Scenario::MeasuredOscillator)
}

/// Oscillators at `+ν₁` and `-ν₂` measured jointly through `X₊` or `X₋` with
/// one shared back-action noise.
pub fn simulate_tc_pair(plan: &SimulationPlan) -> Result<TrajectoryEnsemble> {
    simulate(plan, Scenario::TcPair)
}

/// One physical oscillator at `ν` measured through the quadrature rotating at
/// `2ν`, which behaves as an oscillator at `-ν`. The rotation in `plan.meas`
/// is replaced; its phase is kept.
pub fn simulate_effective_negative(plan: &SimulationPlan) -> Result<TrajectoryEnsemble> {
    simulate(plan, Scenario::EffectiveNegative)
}

/// Two configurations of two oscillators at `ν` each: the first measures
/// `z = y₊ + y₋`, the second the quarter-period-lagged `z̃`. `force1` drives the
/// `y₊` oscillators and `force2` the `y₋` ones.
pub fn simulate_narrowband_quads(
    plan: &SimulationPlan,
    omega_eff: f64,
) -> Result<TrajectoryEnsemble> {
    simulate(plan, Scenario::NarrowbandQuads { omega_eff })
}
