//! Scenario orchestration: seeded, fully deterministic runs of the learning
//! algorithms and water-filling baselines, per-iteration traces, metrics,
//! CSV/JSON persistence, and SVG plots.
//!
//! Determinism contract: one master seed fans out into fixed ChaCha streams
//! (channel, noise, scheduler, init), so runs with the same `(scenario,
//! seed)` produce byte-identical traces. Wall-clock timings are recorded
//! only when `record_timings` is set, since they are inherently
//! non-reproducible; the exported column is zero otherwise.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    precision_estimate, sample_covariance, sample_signals, synthetic_noise, EstimatorConfig,
    NoiseLaw,
};
use crate::hermitian::{fenchel_coupling, herm_eig, HermitianMatrix};
use crate::learners::{
    amxl_step, exl_step_backoff, mxl_step, noisy_gradient, AsyncScheduler, EigenState,
    GradientNoise, MxlState, StepSchedule, StepSizer, UpdateKernel,
};
use crate::model::{
    jakes_advance, sample_static_channel, CovarianceProfile, JakesFadingState, NetworkModel,
    UserLink,
};
use crate::oracle::{fw_gap_given, solve_capacity_iwf, solve_capacity_refined, CapacitySolution};
use crate::waterfilling::{
    iwf_step, iwf_step_with_precision, swf_step, swf_step_with_precision,
};

/// Current scenario file schema version.
pub const SCENARIO_VERSION: u32 = 1;

/// RNG stream ids derived from the master seed.
const STREAM_CHANNEL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SCHEDULER: u64 = 3;
const STREAM_INIT: u64 = 4;

/// Algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Mxl,
    MxlA,
    MxlEig,
    Iwf,
    Swf,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mxl => "mxl",
            Algorithm::MxlA => "mxl-a",
            Algorithm::MxlEig => "mxl-eig",
            Algorithm::Iwf => "iwf",
            Algorithm::Swf => "swf",
        }
    }
}

/// Per-user transmit antenna specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TxSpec {
    /// Same count for every user.
    Uniform(usize),
    /// Explicit per-user counts (length `users`).
    PerUser(Vec<usize>),
    /// Drawn uniformly per user from `[min, max]` (channel stream).
    Range { min: usize, max: usize },
}

/// Per-user power specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerSpec {
    Uniform(f64),
    PerUser(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimsSpec {
    pub users: usize,
    pub rx_antennas: usize,
    pub tx_antennas: TxSpec,
    pub powers: PowerSpec,
}

/// Channel evolution mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ChannelSpec {
    /// One complex Gaussian draw, fixed for the whole run.
    Static {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Sum-of-sinusoids Rayleigh fading advanced by `update_period_s` per
    /// iteration; entries have unit variance.
    Jakes {
        velocity_mps: f64,
        carrier_hz: f64,
        update_period_s: f64,
        #[serde(default = "default_oscillators")]
        oscillators: usize,
    },
}

fn default_scale() -> f64 {
    1.0
}

fn default_oscillators() -> usize {
    32
}

/// Gradient feedback configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    None,
    /// Relative-error perturbation of each user's gradient matrix.
    Synthetic {
        eta: f64,
        #[serde(default = "default_law")]
        law: NoiseLaw,
    },
    /// Full receiver/transmitter sampling pipeline.
    Estimated {
        samples: usize,
        channel_error_std: f64,
    },
    /// Relative-error perturbation of the aggregate precision matrix; the
    /// same perturbed precision drives both the learner and the
    /// water-filling baselines, which is what shared-noise comparisons use.
    PrecisionSynthetic {
        eta: f64,
        #[serde(default = "default_law")]
        law: NoiseLaw,
    },
}

fn default_law() -> NoiseLaw {
    NoiseLaw::GaussianSymmetric
}

impl NoiseSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, NoiseSpec::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsyncSpec {
    pub kernel: UpdateKernel,
    pub delay_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
}

fn default_true() -> bool {
    true
}

fn default_oracle_tol() -> f64 {
    1e-6
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            tol: default_oracle_tol(),
        }
    }
}

/// A complete, versioned, round-trippable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub iterations: u64,
    pub dims: DimsSpec,
    pub channel: ChannelSpec,
    pub step: StepSchedule<f64>,
    pub noise: NoiseSpec,
    #[serde(default, rename = "async", skip_serializing_if = "Option::is_none")]
    pub r#async: Option<AsyncSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub record_timings: bool,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ScenarioParse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::scenario(
                "version",
                format!("expected {SCENARIO_VERSION}, got {}", self.version),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::scenario("iterations", "must be at least 1"));
        }
        if self.dims.users == 0 {
            return Err(Error::scenario("dims.users", "must be at least 1"));
        }
        if self.dims.rx_antennas == 0 {
            return Err(Error::scenario("dims.rx_antennas", "must be at least 1"));
        }
        match &self.dims.tx_antennas {
            TxSpec::Uniform(m) if *m == 0 => {
                return Err(Error::scenario("dims.tx_antennas", "must be at least 1"));
            }
            TxSpec::PerUser(v) => {
                if v.len() != self.dims.users {
                    return Err(Error::scenario(
                        "dims.tx_antennas",
                        format!("need {} entries, got {}", self.dims.users, v.len()),
                    ));
                }
                if v.iter().any(|&m| m == 0) {
                    return Err(Error::scenario("dims.tx_antennas", "must be at least 1"));
                }
            }
            TxSpec::Range { min, max } => {
                if *min == 0 || min > max {
                    return Err(Error::scenario("dims.tx_antennas", "need 1 <= min <= max"));
                }
            }
            _ => {}
        }
        match &self.dims.powers {
            PowerSpec::Uniform(p) => {
                if !(*p > 0.0) || !p.is_finite() {
                    return Err(Error::scenario("dims.powers", "must be positive and finite"));
                }
            }
            PowerSpec::PerUser(v) => {
                if v.len() != self.dims.users {
                    return Err(Error::scenario(
                        "dims.powers",
                        format!("need {} entries, got {}", self.dims.users, v.len()),
                    ));
                }
                if v.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
                    return Err(Error::scenario("dims.powers", "must be positive and finite"));
                }
            }
        }
        match &self.channel {
            ChannelSpec::Static { scale } => {
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return Err(Error::scenario("channel.scale", "must be nonnegative"));
                }
            }
            ChannelSpec::Jakes {
                velocity_mps,
                carrier_hz,
                update_period_s,
                oscillators,
            } => {
                if !(*carrier_hz > 0.0) || !(*velocity_mps >= 0.0) {
                    return Err(Error::scenario(
                        "channel",
                        "carrier must be positive, velocity nonnegative",
                    ));
                }
                if !(*update_period_s > 0.0) {
                    return Err(Error::scenario(
                        "channel.update_period_s",
                        "must be positive",
                    ));
                }
                if *oscillators < 16 {
                    return Err(Error::scenario("channel.oscillators", "need at least 16"));
                }
            }
        }
        self.step
            .validate()
            .map_err(|e| Error::scenario("step", e.to_string()))?;
        match &self.noise {
            NoiseSpec::Synthetic { eta, .. } | NoiseSpec::PrecisionSynthetic { eta, .. } => {
                if !(*eta >= 0.0) || !eta.is_finite() {
                    return Err(Error::scenario("noise.eta", "must be nonnegative and finite"));
                }
            }
            NoiseSpec::Estimated {
                samples,
                channel_error_std,
            } => {
                if *samples <= self.dims.rx_antennas + 1 {
                    return Err(Error::scenario(
                        "noise.samples",
                        "need samples > rx_antennas + 1 for the precision estimate",
                    ));
                }
                if !(*channel_error_std >= 0.0) {
                    return Err(Error::scenario(
                        "noise.channel_error_std",
                        "must be nonnegative",
                    ));
                }
            }
            NoiseSpec::None => {}
        }
        if self.algorithm == Algorithm::MxlEig && !self.noise.is_none() {
            return Err(Error::scenario(
                "noise",
                "the eigen-coordinate learner runs noiseless only",
            ));
        }
        if self.r#async.is_some() && self.algorithm != Algorithm::MxlA {
            return Err(Error::scenario(
                "async",
                "scheduler settings apply to algorithm = \"mxl-a\" only",
            ));
        }
        if let Some(a) = &self.r#async {
            if let UpdateKernel::MarkovSingle { transition } = &a.kernel {
                if transition.len() != self.dims.users {
                    return Err(Error::scenario(
                        "async.kernel",
                        "transition matrix must be users x users",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One per-iteration trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: u64,
    /// Instantaneous sum rate, nats.
    pub rate: f64,
    /// Step-weighted running average of the sum rate.
    pub rate_avg: f64,
    /// Normalized throughput gain vs the uniform profile on the current
    /// channel.
    pub throughput_gain: f64,
    /// Frank–Wolfe optimality gap at the current profile and channel.
    pub fw_gap: f64,
    /// Fenchel coupling to the oracle optimum (NaN when unavailable).
    pub fenchel: f64,
    /// Cumulative wall time, ms (zero unless timings were recorded).
    pub wall_ms: f64,
}

/// Full run record: header quantities plus per-iteration rows.
#[derive(Debug, Clone)]
pub struct Trace {
    pub scenario: Scenario,
    /// Certified capacity of the initial channel (NaN if the oracle is off).
    pub r_max: f64,
    /// Uniform-profile sum rate of the initial channel.
    pub r_uniform: f64,
    pub records: Vec<TraceRecord>,
    /// Iteration at which the adaptive step drop fired, if any.
    pub drop_iteration: Option<u64>,
    /// Per-iteration certified capacity under fading (empty when static).
    pub oracle_rates: Vec<f64>,
    /// Per-iteration uniform-profile rate under fading (empty when static).
    pub uniform_rates: Vec<f64>,
}

/// Normalized throughput gain `r = rate / baseline`.
pub fn normalized_throughput(rate: f64, baseline: f64) -> f64 {
    rate / baseline
}

/// Mean-performance guarantee after `n` updates of `schedule`:
/// `eps_n = [sum_k log M_k + L^2/2 sum_j gamma_j^2] / sum_j gamma_j`.
pub fn mean_guarantee_eps(
    schedule: &StepSchedule<f64>,
    tx_antennas: &[usize],
    l: f64,
    n: u64,
) -> f64 {
    let gammas: Vec<f64> = (1..=n).map(|j| schedule.step_size(j)).collect();
    mean_guarantee_eps_from(&gammas, tx_antennas, l)
}

/// [`mean_guarantee_eps`] over an explicit realized step sequence.
pub fn mean_guarantee_eps_from(gammas: &[f64], tx_antennas: &[usize], l: f64) -> f64 {
    let t: f64 = gammas.iter().sum();
    let sq: f64 = gammas.iter().map(|g| g * g).sum();
    let log_sum: f64 = tx_antennas.iter().map(|&m| (m as f64).ln()).sum();
    (log_sum + 0.5 * l * l * sq) / t
}

/// Empirical frequency of `{R_max - Rbar_n >= eps_n + z}` across traces.
pub fn outage_frequency(traces: &[Trace], n: u64, r_max: f64, eps_n: f64, z: f64) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for t in traces {
        if let Some(rec) = t.records.get((n - 1) as usize) {
            total += 1;
            if r_max - rec.rate_avg >= eps_n + z {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Resolved instance: the model plus optional fading states per user.
struct Instance {
    model: NetworkModel<f64>,
    fading: Option<Vec<JakesFadingState<f64>>>,
    update_period_s: f64,
}

fn build_instance(scenario: &Scenario) -> Result<Instance> {
    let mut rng = stream_rng(scenario.seed, STREAM_CHANNEL);
    let users = scenario.dims.users;
    let tx: Vec<usize> = match &scenario.dims.tx_antennas {
        TxSpec::Uniform(m) => vec![*m; users],
        TxSpec::PerUser(v) => v.clone(),
        TxSpec::Range { min, max } => {
            use rand::Rng;
            (0..users).map(|_| rng.gen_range(*min..=*max)).collect()
        }
    };
    let powers: Vec<f64> = match &scenario.dims.powers {
        PowerSpec::Uniform(p) => vec![*p; users],
        PowerSpec::PerUser(v) => v.clone(),
    };

    match &scenario.channel {
        ChannelSpec::Static { scale } => {
            let links = (0..users)
                .map(|k| UserLink {
                    channel: sample_static_channel(&mut rng, scenario.dims.rx_antennas, tx[k], *scale),
                    power: powers[k],
                })
                .collect();
            Ok(Instance {
                model: NetworkModel::new(scenario.dims.rx_antennas, links)?,
                fading: None,
                update_period_s: 0.0,
            })
        }
        ChannelSpec::Jakes {
            velocity_mps,
            carrier_hz,
            update_period_s,
            oscillators,
        } => {
            let mut fading = Vec::with_capacity(users);
            let mut links = Vec::with_capacity(users);
            for k in 0..users {
                let state = JakesFadingState::new(
                    &mut rng,
                    scenario.dims.rx_antennas,
                    tx[k],
                    *carrier_hz,
                    *velocity_mps,
                    *oscillators,
                )?;
                links.push(UserLink {
                    channel: state.channel().clone(),
                    power: powers[k],
                });
                fading.push(state);
            }
            Ok(Instance {
                model: NetworkModel::new(scenario.dims.rx_antennas, links)?,
                fading: Some(fading),
                update_period_s: *update_period_s,
            })
        }
    }
}

/// Resolves the scenario's channel draw into the concrete network instance —
/// the same one `run_scenario` builds for this seed.
pub fn materialize_model(scenario: &Scenario) -> Result<NetworkModel<f64>> {
    scenario.validate()?;
    Ok(build_instance(scenario)?.model)
}

/// Per-iteration instrumentation: rate, true gradients, and gap with one
/// aggregate eigendecomposition.
fn instrument(
    model: &NetworkModel<f64>,
    q: &CovarianceProfile<f64>,
) -> Result<(f64, Vec<HermitianMatrix<f64>>, f64)> {
    let w = model.aggregate_covariance(q)?;
    let eig = herm_eig(&w)?;
    let mut rate = 0.0;
    for &l in &eig.values {
        if l <= 0.0 {
            return Err(Error::Singular(l));
        }
        rate += l.ln();
    }
    let winv = eig.inverse(1e-14)?;
    let v = model.gradient_given_precision(&winv);
    let gap = fw_gap_given(model, q, &v)?;
    Ok((rate, v, gap))
}

/// Fenchel coupling to the oracle optimum, `sum_k P_k F(Q*_k / P_k, Y_k)`.
fn fenchel_to_optimum(
    powers: &[f64],
    optimum: &CovarianceProfile<f64>,
    scores: &[HermitianMatrix<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for (k, y) in scores.iter().enumerate() {
        let qn = optimum.user(k).scale(1.0 / powers[k]);
        total += powers[k] * fenchel_coupling(&qn, y)?;
    }
    Ok(total)
}

/// Perturbed precision matrix for the shared-noise paths.
fn perturbed_precision(
    model: &NetworkModel<f64>,
    q: &CovarianceProfile<f64>,
    eta: f64,
    law: NoiseLaw,
    rng: &mut ChaCha8Rng,
) -> Result<HermitianMatrix<f64>> {
    let w = model.aggregate_covariance(q)?;
    let winv = herm_eig(&w)?.inverse(1e-14)?;
    synthetic_noise(&winv, eta, rng, law)
}

/// Precision estimate from the sampling pipeline at the current profile.
fn estimated_precision(
    model: &NetworkModel<f64>,
    q: &CovarianceProfile<f64>,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<HermitianMatrix<f64>> {
    let sigs = sample_signals(model, q, rng, samples)?;
    precision_estimate(&sample_covariance(&sigs)?, samples)
}

/// Runs one scenario to completion and returns its trace.
///
/// Invalid scenarios are rejected with a field-level message; a fixed
/// `(scenario, seed)` yields a byte-identical trace.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    scenario.validate()?;
    let mut instance = build_instance(scenario)?;
    let mut noise_rng = stream_rng(scenario.seed, STREAM_NOISE);
    let mut sched_rng = stream_rng(scenario.seed, STREAM_SCHEDULER);
    let mut init_rng = stream_rng(scenario.seed, STREAM_INIT);

    let powers: Vec<f64> = (0..instance.model.user_count())
        .map(|k| instance.model.power(k))
        .collect();

    let r_uniform = instance
        .model
        .sum_rate(&instance.model.uniform_profile())?;
    let oracle_solution: Option<CapacitySolution<f64>> = if scenario.oracle.enabled {
        Some(solve_capacity_refined(&instance.model, scenario.oracle.tol)?)
    } else {
        None
    };
    let r_max = oracle_solution.as_ref().map_or(f64::NAN, |s| s.rate);

    // Learner noise mapping: the gradient-level pipeline for the exponential
    // learners; water-filling baselines consume a precision matrix instead.
    let gradient_noise: GradientNoise<f64> = match &scenario.noise {
        NoiseSpec::None => GradientNoise::None,
        NoiseSpec::Synthetic { eta, law } => GradientNoise::Synthetic {
            eta: *eta,
            law: *law,
        },
        NoiseSpec::Estimated {
            samples,
            channel_error_std,
        } => GradientNoise::Estimated {
            config: EstimatorConfig::new(*samples, *channel_error_std, NoiseLaw::GaussianSymmetric)?,
        },
        // Handled inline (the learner sees V̂ = H† P̂ H).
        NoiseSpec::PrecisionSynthetic { .. } => GradientNoise::None,
    };

    let mut mxl_state = match scenario.algorithm {
        Algorithm::Mxl | Algorithm::MxlA => Some(MxlState::init(&instance.model)),
        _ => None,
    };
    let mut eig_state = match scenario.algorithm {
        Algorithm::MxlEig => Some(EigenState::init(&instance.model, &mut init_rng)?),
        _ => None,
    };
    let mut wf_profile = match scenario.algorithm {
        Algorithm::Iwf | Algorithm::Swf => Some(instance.model.uniform_profile()),
        _ => None,
    };
    let mut scheduler = if scenario.algorithm == Algorithm::MxlA {
        let spec = scenario.r#async.clone().unwrap_or(AsyncSpec {
            kernel: UpdateKernel::AllUsers,
            delay_bound: 0,
        });
        Some(AsyncScheduler::new(
            spec.kernel,
            spec.delay_bound,
            instance.model.uniform_profile(),
        )?)
    } else {
        None
    };

    let mut sizer = StepSizer::new(scenario.step)?;
    let mut gamma = sizer.first();
    let mut exl_gamma = gamma;

    let mut records = Vec::with_capacity(scenario.iterations as usize);
    let mut oracle_rates = Vec::new();
    let mut uniform_rates = Vec::new();
    let mut fading_oracle_profile = oracle_solution.as_ref().map(|s| s.profile.clone());

    let mut weighted_rate_sum = 0.0;
    let mut weight_sum = 0.0;
    let start = Instant::now();

    for n in 1..=scenario.iterations {
        // Fading: advance channels before the update, per-iteration oracle
        // warm-started from the previous optimum.
        if let Some(fading) = instance.fading.as_mut() {
            if n > 1 {
                let channels = fading
                    .iter_mut()
                    .map(|s| {
                        jakes_advance(s, instance.update_period_s)?;
                        Ok(s.channel().clone())
                    })
                    .collect::<Result<Vec<_>>>()?;
                instance.model = instance.model.with_channels(channels)?;
            }
            uniform_rates.push(
                instance
                    .model
                    .sum_rate(&instance.model.uniform_profile())?,
            );
            if scenario.oracle.enabled {
                let start_profile = fading_oracle_profile
                    .take()
                    .unwrap_or_else(|| instance.model.uniform_profile());
                let sol = solve_capacity_iwf(
                    &instance.model,
                    &start_profile,
                    scenario.oracle.tol,
                    500,
                )?;
                oracle_rates.push(sol.rate);
                fading_oracle_profile = Some(sol.profile);
            }
        }

        // One algorithm update.
        let applied_gamma = match scenario.algorithm {
            Algorithm::Mxl => {
                let state = mxl_state.as_mut().expect("mxl state");
                let v_hat = match &scenario.noise {
                    NoiseSpec::PrecisionSynthetic { eta, law } => {
                        let p_hat = perturbed_precision(
                            &instance.model,
                            state.profile(),
                            *eta,
                            *law,
                            &mut noise_rng,
                        )?;
                        instance.model.gradient_given_precision(&p_hat)
                    }
                    _ => noisy_gradient(
                        &instance.model,
                        state.profile(),
                        &gradient_noise,
                        &mut noise_rng,
                    )?,
                };
                mxl_step(state, &v_hat, gamma)?;
                gamma
            }
            Algorithm::MxlA => {
                let state = mxl_state.as_mut().expect("mxl state");
                let sched = scheduler.as_mut().expect("scheduler");
                amxl_step(
                    state,
                    sched,
                    &instance.model,
                    &gradient_noise,
                    &scenario.step,
                    &mut sched_rng,
                )?;
                gamma
            }
            Algorithm::MxlEig => {
                let state = eig_state.as_mut().expect("eig state");
                let v = instance.model.gradient(&state.profile())?;
                let applied = exl_step_backoff(state, &v, exl_gamma.min(gamma), 40)?;
                exl_gamma = applied * 2.0;
                applied
            }
            Algorithm::Iwf => {
                let profile = wf_profile.as_mut().expect("wf profile");
                let k = ((n - 1) % instance.model.user_count() as u64) as usize;
                *profile = match &scenario.noise {
                    NoiseSpec::None => iwf_step(&instance.model, profile, k)?,
                    NoiseSpec::Synthetic { eta, law }
                    | NoiseSpec::PrecisionSynthetic { eta, law } => {
                        let p_hat = perturbed_precision(
                            &instance.model,
                            profile,
                            *eta,
                            *law,
                            &mut noise_rng,
                        )?;
                        iwf_step_with_precision(&instance.model, profile, k, &p_hat)?
                    }
                    NoiseSpec::Estimated { samples, .. } => {
                        let p_hat = estimated_precision(
                            &instance.model,
                            profile,
                            *samples,
                            &mut noise_rng,
                        )?;
                        iwf_step_with_precision(&instance.model, profile, k, &p_hat)?
                    }
                };
                1.0
            }
            Algorithm::Swf => {
                let profile = wf_profile.as_mut().expect("wf profile");
                *profile = match &scenario.noise {
                    NoiseSpec::None => swf_step(&instance.model, profile)?,
                    NoiseSpec::Synthetic { eta, law }
                    | NoiseSpec::PrecisionSynthetic { eta, law } => {
                        let p_hat = perturbed_precision(
                            &instance.model,
                            profile,
                            *eta,
                            *law,
                            &mut noise_rng,
                        )?;
                        swf_step_with_precision(&instance.model, profile, &p_hat)?
                    }
                    NoiseSpec::Estimated { samples, .. } => {
                        let p_hat = estimated_precision(
                            &instance.model,
                            profile,
                            *samples,
                            &mut noise_rng,
                        )?;
                        swf_step_with_precision(&instance.model, profile, &p_hat)?
                    }
                };
                1.0
            }
        };

        // Instrument the post-update profile on the current channel.
        let profile = match scenario.algorithm {
            Algorithm::Mxl | Algorithm::MxlA => mxl_state.as_ref().unwrap().profile().clone(),
            Algorithm::MxlEig => eig_state.as_ref().unwrap().profile(),
            Algorithm::Iwf | Algorithm::Swf => wf_profile.as_ref().unwrap().clone(),
        };
        let (rate, _v, gap) = instrument(&instance.model, &profile)?;

        weighted_rate_sum += applied_gamma * rate;
        weight_sum += applied_gamma;
        let rate_avg = weighted_rate_sum / weight_sum;

        let baseline = if instance.fading.is_some() {
            *uniform_rates.last().unwrap()
        } else {
            r_uniform
        };

        let fenchel = match (&oracle_solution, scenario.algorithm) {
            (Some(sol), Algorithm::Mxl | Algorithm::MxlA) if instance.fading.is_none() => {
                fenchel_to_optimum(&powers, &sol.profile, mxl_state.as_ref().unwrap().scores())?
            }
            _ => f64::NAN,
        };

        let wall_ms = if scenario.record_timings {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };

        records.push(TraceRecord {
            n,
            rate,
            rate_avg,
            throughput_gain: normalized_throughput(rate, baseline),
            fw_gap: gap,
            fenchel,
            wall_ms,
        });

        // Step size for the next update.
        gamma = sizer.observe_and_next(n, rate);
    }

    Ok(Trace {
        scenario: scenario.clone(),
        r_max,
        r_uniform,
        records,
        drop_iteration: sizer.dropped_at(),
        oracle_rates,
        uniform_rates,
    })
}

/// Runs the same scenario once per algorithm with identical seeds, so every
/// algorithm consumes the same random streams ("shared noise realizations").
/// Gradient-level synthetic noise is promoted to the precision-level model,
/// which is the one the water-filling baselines can consume.
pub fn run_compare(base: &Scenario, algorithms: &[Algorithm]) -> Result<Vec<Trace>> {
    let noise = match &base.noise {
        NoiseSpec::Synthetic { eta, law } => NoiseSpec::PrecisionSynthetic {
            eta: *eta,
            law: *law,
        },
        other => other.clone(),
    };
    algorithms
        .iter()
        .map(|&algorithm| {
            let mut s = base.clone();
            s.algorithm = algorithm;
            s.noise = noise.clone();
            if algorithm != Algorithm::MxlA {
                s.r#async = None;
            }
            run_scenario(&s)
        })
        .collect()
}

/// CSV column order, documented and fixed.
pub const TRACE_CSV_HEADER: &str = "n,R_n,Rbar_n,r_n,fw_gap,fenchel,wall_ms";

/// Serializes the per-iteration records; floats use shortest round-trip
/// formatting so re-parsing reproduces them exactly.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n, r.rate, r.rate_avg, r.throughput_gain, r.fw_gap, r.fenchel, r.wall_ms
        ));
    }
    out
}

/// Writes the CSV records to `path`.
pub fn export_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, trace_to_csv(trace))?;
    Ok(())
}

/// Parses records written by [`trace_to_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRACE_CSV_HEADER => {}
        _ => {
            return Err(Error::TraceParse {
                line: 1,
                reason: format!("expected header `{TRACE_CSV_HEADER}`"),
            });
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::TraceParse {
                line: idx + 1,
                reason: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::TraceParse {
                line: idx + 1,
                reason: e.to_string(),
            })
        };
        records.push(TraceRecord {
            n: fields[0].parse().map_err(|_| Error::TraceParse {
                line: idx + 1,
                reason: "bad iteration index".into(),
            })?,
            rate: parse(fields[1])?,
            rate_avg: parse(fields[2])?,
            throughput_gain: parse(fields[3])?,
            fw_gap: parse(fields[4])?,
            fenchel: parse(fields[5])?,
            wall_ms: parse(fields[6])?,
        });
    }
    Ok(records)
}

/// JSON run summary written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub r_max: f64,
    pub r_uniform: f64,
    pub iterations: u64,
    /// First iteration with `R_n >= 0.99 R_max` (static runs with oracle).
    pub iterations_to_99: Option<u64>,
    pub final_rate: f64,
    pub final_fw_gap: f64,
    pub drop_iteration: Option<u64>,
    /// Time-averaged instantaneous rate over the run.
    pub time_avg_rate: f64,
    /// Time-averaged per-iteration certified capacity (fading runs).
    pub time_avg_oracle: Option<f64>,
    /// Time-averaged uniform-profile rate (fading runs).
    pub time_avg_uniform: Option<f64>,
}

pub fn summarize(trace: &Trace) -> Summary {
    let iterations = trace.records.len() as u64;
    let final_rec = trace.records.last();
    let iterations_to_99 = if trace.r_max.is_finite() && trace.oracle_rates.is_empty() {
        trace
            .records
            .iter()
            .find(|r| r.rate >= 0.99 * trace.r_max)
            .map(|r| r.n)
    } else {
        None
    };
    let mean = |v: &[f64]| -> Option<f64> {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Summary {
        scenario: trace.scenario.clone(),
        r_max: trace.r_max,
        r_uniform: trace.r_uniform,
        iterations,
        iterations_to_99,
        final_rate: final_rec.map_or(f64::NAN, |r| r.rate),
        final_fw_gap: final_rec.map_or(f64::NAN, |r| r.fw_gap),
        drop_iteration: trace.drop_iteration,
        time_avg_rate: trace
            .records
            .iter()
            .map(|r| r.rate)
            .sum::<f64>()
            / iterations.max(1) as f64,
        time_avg_oracle: mean(&trace.oracle_rates),
        time_avg_uniform: mean(&trace.uniform_rates),
    }
}

/// Writes the JSON summary to `path`.
pub fn export_summary(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&summarize(trace))
        .map_err(|e| Error::ScenarioParse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// One labelled curve for the SVG plotter.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PLOT_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Renders line series into a standalone SVG (linear axes, legend, grid).
pub fn render_svg(series: &[PlotSeries], title: &str, x_label: &str, y_label: &str) -> String {
    let (w, h) = (720.0, 440.0);
    let (ml, mr, mt, mb) = (62.0, 18.0, 36.0, 48.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let finite = |v: f64| v.is_finite();
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if finite(x) && finite(y) {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() || xmax <= xmin {
        xmin = 0.0;
        xmax = 1.0;
    }
    if !ymin.is_finite() || ymax <= ymin {
        ymin = 0.0;
        ymax = ymin + 1.0;
    }
    let pad = 0.04 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    let sx = move |x: f64| ml + (x - xmin) / (xmax - xmin) * pw;
    let sy = move |y: f64| mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        w / 2.0,
        xml_escape(title)
    ));

    // Grid and tick labels.
    for i in 0..=5 {
        let fx = xmin + (xmax - xmin) * i as f64 / 5.0;
        let fy = ymin + (ymax - ymin) * i as f64 / 5.0;
        let gx = sx(fx);
        let gy = sy(fy);
        svg.push_str(&format!(
            "<line x1=\"{gx:.1}\" y1=\"{mt}\" x2=\"{gx:.1}\" y2=\"{:.1}\" stroke=\"#eee\"/>\n",
            mt + ph
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{gy:.1}\" x2=\"{:.1}\" y2=\"{gy:.1}\" stroke=\"#eee\"/>\n",
            ml + pw
        ));
        svg.push_str(&format!(
            "<text x=\"{gx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            mt + ph + 16.0,
            format_tick(fx)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{gy:.1}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            ml - 6.0,
            format_tick(fy)
        ));
    }
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 10.0,
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PLOT_COLORS[i % PLOT_COLORS.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            if !(finite(x) && finite(y)) {
                pen_down = false;
                continue;
            }
            path.push_str(&format!(
                "{}{:.2},{:.2} ",
                if pen_down { "L" } else { "M" },
                sx(x),
                sy(y)
            ));
            pen_down = true;
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            path.trim_end()
        ));
        let ly = mt + 16.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ml + pw - 150.0,
            ml + pw - 126.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            ml + pw - 120.0,
            ly + 4.0,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

/// Emits the trace family as standalone SVG plots under `dir`:
/// normalized throughput over iterations for every trace, plus the achieved
/// rate against the per-iteration capacity and uniform baselines for fading
/// runs (rates displayed in bits).
pub fn emit_plots(traces: &[(String, &Trace)], dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let nats_to_bits = 1.0 / std::f64::consts::LN_2;

    let throughput: Vec<PlotSeries> = traces
        .iter()
        .map(|(label, t)| PlotSeries {
            label: label.clone(),
            points: t
                .records
                .iter()
                .map(|r| (r.n as f64, r.throughput_gain))
                .collect(),
        })
        .collect();
    let path = dir.join("throughput_gain.svg");
    fs::write(
        &path,
        render_svg(
            &throughput,
            "Normalized throughput over time",
            "iteration",
            "r_n = R_n / R_0",
        ),
    )?;
    written.push(path.display().to_string());

    for (label, t) in traces {
        if t.oracle_rates.is_empty() && t.uniform_rates.is_empty() {
            continue;
        }
        let mut series = vec![PlotSeries {
            label: format!("{label} achieved"),
            points: t
                .records
                .iter()
                .map(|r| (r.n as f64, r.rate * nats_to_bits))
                .collect(),
        }];
        if !t.oracle_rates.is_empty() {
            series.push(PlotSeries {
                label: "sum capacity".into(),
                points: t
                    .oracle_rates
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| ((i + 1) as f64, r * nats_to_bits))
                    .collect(),
            });
        }
        if !t.uniform_rates.is_empty() {
            series.push(PlotSeries {
                label: "uniform power".into(),
                points: t
                    .uniform_rates
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| ((i + 1) as f64, r * nats_to_bits))
                    .collect(),
            });
        }
        let path = dir.join(format!("tracking_{label}.svg"));
        fs::write(
            &path,
            render_svg(
                &series,
                "Achieved rate vs channel capacity",
                "iteration",
                "sum rate (bits)",
            ),
        )?;
        written.push(path.display().to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scenario() -> Scenario {
        Scenario {
            version: 1,
            seed: 7,
            algorithm: Algorithm::Mxl,
            iterations: 40,
            dims: DimsSpec {
                users: 2,
                rx_antennas: 3,
                tx_antennas: TxSpec::Uniform(2),
                powers: PowerSpec::Uniform(1.0),
            },
            channel: ChannelSpec::Static { scale: 1.0 },
            step: StepSchedule::Constant { gamma: 0.5 },
            noise: NoiseSpec::None,
            r#async: None,
            oracle: OracleSpec::default(),
            record_timings: false,
        }
    }

    #[test]
    fn scenario_toml_round_trip() {
        let s = small_scenario();
        let text = s.to_toml().unwrap();
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(s, back);

        // All the enum variants survive the round trip.
        let mut s2 = small_scenario();
        s2.algorithm = Algorithm::MxlA;
        s2.step = StepSchedule::PowerLaw {
            gamma0: 1.0,
            exponent: 0.5,
        };
        s2.noise = NoiseSpec::Synthetic {
            eta: 0.5,
            law: NoiseLaw::BoundedUniform,
        };
        s2.r#async = Some(AsyncSpec {
            kernel: UpdateKernel::UniformSingle,
            delay_bound: 3,
        });
        let back2 = Scenario::from_toml(&s2.to_toml().unwrap()).unwrap();
        assert_eq!(s2, back2);
    }

    #[test]
    fn scenario_validation_messages() {
        let mut s = small_scenario();
        s.iterations = 0;
        let err = run_scenario(&s).unwrap_err().to_string();
        assert!(err.contains("iterations"), "{err}");

        let mut s = small_scenario();
        s.dims.tx_antennas = TxSpec::PerUser(vec![2]);
        let err = run_scenario(&s).unwrap_err().to_string();
        assert!(err.contains("tx_antennas"), "{err}");

        let mut s = small_scenario();
        s.algorithm = Algorithm::MxlEig;
        s.noise = NoiseSpec::Synthetic {
            eta: 0.1,
            law: NoiseLaw::GaussianSymmetric,
        };
        assert!(run_scenario(&s).is_err());

        let mut s = small_scenario();
        s.r#async = Some(AsyncSpec {
            kernel: UpdateKernel::AllUsers,
            delay_bound: 0,
        });
        assert!(run_scenario(&s).is_err());
    }

    #[test]
    fn trivial_single_mode_scenario() {
        let mut s = small_scenario();
        s.dims = DimsSpec {
            users: 1,
            rx_antennas: 2,
            tx_antennas: TxSpec::Uniform(1),
            powers: PowerSpec::Uniform(1.0),
        };
        s.iterations = 10;
        let trace = run_scenario(&s).unwrap();
        for r in &trace.records {
            assert!((r.throughput_gain - 1.0).abs() < 1e-12);
            assert!(r.fw_gap.abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_traces_bytes() {
        let mut s = small_scenario();
        s.noise = NoiseSpec::Synthetic {
            eta: 0.5,
            law: NoiseLaw::GaussianSymmetric,
        };
        let a = trace_to_csv(&run_scenario(&s).unwrap());
        let b = trace_to_csv(&run_scenario(&s).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_and_summary_consistency() {
        let s = small_scenario();
        let trace = run_scenario(&s).unwrap();
        let csv = trace_to_csv(&trace);
        let parsed = parse_trace_csv(&csv).unwrap();
        assert_eq!(parsed, trace.records);

        // Re-scan matches the summary's iterations-to-99%.
        let summary = summarize(&trace);
        let rescanned = parsed
            .iter()
            .find(|r| r.rate >= 0.99 * summary.r_max)
            .map(|r| r.n);
        assert_eq!(summary.iterations_to_99, rescanned);

        // Empty trace serializes to the bare header.
        let mut empty = trace.clone();
        empty.records.clear();
        assert_eq!(trace_to_csv(&empty), format!("{TRACE_CSV_HEADER}\n"));
    }

    #[test]
    fn header_baseline_matches_independent_recompute() {
        let s = small_scenario();
        let trace = run_scenario(&s).unwrap();
        let model = materialize_model(&s).unwrap();
        let r0 = model.sum_rate(&model.uniform_profile()).unwrap();
        assert!((trace.r_uniform - r0).abs() < 1e-12);
        assert!((trace.records[0].throughput_gain - trace.records[0].rate / r0).abs() < 1e-12);
    }

    #[test]
    fn rate_avg_matches_definition() {
        let mut s = small_scenario();
        s.step = StepSchedule::PowerLaw {
            gamma0: 0.8,
            exponent: 1.0,
        };
        let trace = run_scenario(&s).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for r in &trace.records {
            let gamma = s.step.step_size(r.n);
            num += gamma * r.rate;
            den += gamma;
            assert!((r.rate_avg - num / den).abs() <= 1e-12, "at n={}", r.n);
        }

        // Constant step: equals the plain running mean.
        let s = small_scenario();
        let trace = run_scenario(&s).unwrap();
        let mut acc = 0.0;
        for r in &trace.records {
            acc += r.rate;
            assert!((r.rate_avg - acc / r.n as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn all_algorithms_run_and_converge_somewhat() {
        for alg in [
            Algorithm::Mxl,
            Algorithm::MxlA,
            Algorithm::MxlEig,
            Algorithm::Iwf,
            Algorithm::Swf,
        ] {
            let mut s = small_scenario();
            s.algorithm = alg;
            s.iterations = 60;
            if alg == Algorithm::MxlA {
                s.r#async = Some(AsyncSpec {
                    kernel: UpdateKernel::UniformSingle,
                    delay_bound: 2,
                });
                s.step = StepSchedule::PowerLaw {
                    gamma0: 1.0,
                    exponent: 1.0,
                };
            }
            let trace = run_scenario(&s).unwrap();
            assert_eq!(trace.records.len(), 60);
            let last = trace.records.last().unwrap();
            assert!(
                last.rate >= trace.r_uniform - 1e-9,
                "{}: final rate {} below uniform {}",
                alg.name(),
                last.rate,
                trace.r_uniform
            );
            assert!(last.rate <= trace.r_max + 1e-6);
        }
    }

    #[test]
    fn compare_shares_noise_realizations() {
        let mut s = small_scenario();
        s.noise = NoiseSpec::Synthetic {
            eta: 0.5,
            law: NoiseLaw::GaussianSymmetric,
        };
        s.iterations = 30;
        let traces = run_compare(&s, &[Algorithm::Mxl, Algorithm::Iwf, Algorithm::Swf]).unwrap();
        assert_eq!(traces.len(), 3);
        for t in &traces {
            assert!(matches!(
                t.scenario.noise,
                NoiseSpec::PrecisionSynthetic { .. }
            ));
            assert_eq!(t.scenario.seed, s.seed);
        }
    }

    #[test]
    fn jakes_run_tracks_capacity() {
        let mut s = small_scenario();
        s.dims = DimsSpec {
            users: 2,
            rx_antennas: 2,
            tx_antennas: TxSpec::Uniform(2),
            powers: PowerSpec::Uniform(1.0),
        };
        s.channel = ChannelSpec::Jakes {
            velocity_mps: 5.0,
            carrier_hz: 2.0e9,
            update_period_s: 5e-3,
            oscillators: 32,
        };
        s.step = StepSchedule::Constant { gamma: 1.0 };
        s.iterations = 80;
        let trace = run_scenario(&s).unwrap();
        assert_eq!(trace.oracle_rates.len(), 80);
        assert_eq!(trace.uniform_rates.len(), 80);
        // Capacity dominates the achieved rate; achieved beats uniform on
        // average once past the first few steps.
        for (r, cap) in trace.records.iter().zip(&trace.oracle_rates) {
            assert!(r.rate <= cap + 1e-6);
        }
        let avg_rate: f64 =
            trace.records.iter().map(|r| r.rate).sum::<f64>() / trace.records.len() as f64;
        let avg_uniform: f64 =
            trace.uniform_rates.iter().sum::<f64>() / trace.uniform_rates.len() as f64;
        assert!(avg_rate > avg_uniform, "{avg_rate} vs uniform {avg_uniform}");
    }

    #[test]
    fn guarantee_eps_values() {
        // K=1, M=2, L=1, gamma = 0.1 constant, n = 10.
        let eps = mean_guarantee_eps(&StepSchedule::Constant { gamma: 0.1 }, &[2], 1.0, 10);
        let expect = (2.0f64.ln() + 0.5 * 0.1 * 0.1 * 10.0) / 1.0;
        assert!((eps - expect).abs() < 1e-12);
        assert!((expect - 0.7431).abs() < 1e-4);

        // Constant-step limit: eps -> L^2 gamma / 2 = 0.05, non-vanishing.
        let eps_inf = mean_guarantee_eps(
            &StepSchedule::Constant { gamma: 0.1 },
            &[2],
            1.0,
            2_000_000,
        );
        assert!((eps_inf - 0.05).abs() < 1e-4);

        // Harmonic steps: eps decreasing past n = 100.
        let pl = StepSchedule::PowerLaw {
            gamma0: 1.0,
            exponent: 1.0,
        };
        let e100 = mean_guarantee_eps(&pl, &[2], 1.0, 100);
        let e1000 = mean_guarantee_eps(&pl, &[2], 1.0, 1000);
        let e10000 = mean_guarantee_eps(&pl, &[2], 1.0, 10_000);
        assert!(e1000 < e100 && e10000 < e1000);
    }

    #[test]
    fn outage_frequency_extremes() {
        let s = small_scenario();
        let traces: Vec<Trace> = (0..4)
            .map(|i| {
                let mut si = s.clone();
                si.seed = i;
                run_scenario(&si).unwrap()
            })
            .collect();
        let r_max = traces[0].r_max;
        // Impossible deviation never happens.
        assert_eq!(outage_frequency(&traces, 20, r_max, 0.0, r_max), 0.0);
        // Noiseless, generous epsilon: no outage either.
        assert_eq!(outage_frequency(&traces, 40, r_max, r_max, 0.1), 0.0);
    }

    #[test]
    fn svg_rendering_smoke() {
        let s = small_scenario();
        let trace = run_scenario(&s).unwrap();
        let dir = std::env::temp_dir().join("mxl_plot_test");
        let files = emit_plots(&[("mxl".to_string(), &trace)], &dir).unwrap();
        assert!(!files.is_empty());
        let body = fs::read_to_string(&files[0]).unwrap();
        assert!(body.starts_with("<svg"));
        assert!(body.contains("</svg>"));
        fs::remove_dir_all(&dir).ok();
    }
}
