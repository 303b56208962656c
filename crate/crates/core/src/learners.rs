//! The learning algorithms: synchronous matrix exponential learning, its
//! asynchronous variant with partial updates and bounded delays, the
//! eigen-coordinate variant, and step-size schedules.

use std::collections::VecDeque;

use rand::Rng;

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::estimation::{
    gradient_estimate, precision_estimate, sample_channel_measurements, sample_covariance,
    sample_signals, synthetic_noise, EstimatorConfig, NoiseLaw,
};
use crate::hermitian::{exp_map, herm_eig, orthonormalize, HermitianMatrix};
use crate::model::{CovarianceProfile, NetworkModel};
use crate::scalar::{standard_complex_normal, Scalar};

/// Couplings between eigen-directions are skipped below this log-spacing.
const EIGEN_COUPLING_MIN_LOG_GAP: f64 = 1e-8;

/// Step-size schedules; all are nonincreasing in `n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule<T> {
    /// `gamma` at every step.
    Constant { gamma: T },
    /// `gamma0 / n^exponent` with `exponent` in (0, 1], `n >= 1`.
    PowerLaw { gamma0: T, exponent: T },
    /// Constant `gamma0` until an oscillation is detected, then
    /// `gamma0 * drop_factor` from that point on (a single drop).
    AdaptiveDrop { gamma0: T, drop_factor: T },
}

impl<T: Scalar> StepSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { gamma } => {
                if !(gamma > T::zero()) || !gamma.is_finite() {
                    return Err(Error::invalid_param("gamma", "must be positive and finite"));
                }
            }
            StepSchedule::PowerLaw { gamma0, exponent } => {
                if !(gamma0 > T::zero()) || !gamma0.is_finite() {
                    return Err(Error::invalid_param("gamma0", "must be positive and finite"));
                }
                if !(exponent > T::zero()) || exponent > T::one() {
                    return Err(Error::invalid_param("exponent", "must lie in (0, 1]"));
                }
            }
            StepSchedule::AdaptiveDrop { gamma0, drop_factor } => {
                if !(gamma0 > T::zero()) || !gamma0.is_finite() {
                    return Err(Error::invalid_param("gamma0", "must be positive and finite"));
                }
                if !(drop_factor > T::zero()) || drop_factor >= T::one() {
                    return Err(Error::invalid_param("drop_factor", "must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Step size at update `n` (1-indexed). The adaptive schedule reports its
    /// pre-drop constant here; drops are handled by [`StepSizer`].
    pub fn step_size(&self, n: u64) -> T {
        debug_assert!(n >= 1);
        match *self {
            StepSchedule::Constant { gamma } => gamma,
            StepSchedule::PowerLaw { gamma0, exponent } => {
                gamma0 / T::from_f64(n as f64).powf(exponent)
            }
            StepSchedule::AdaptiveDrop { gamma0, .. } => gamma0,
        }
    }

    /// Whether the schedule satisfies `sum gamma^2 < sum gamma = inf`
    /// (power law with exponent in (1/2, 1]).
    pub fn square_summable_divergent(&self) -> bool {
        match *self {
            StepSchedule::PowerLaw { exponent, .. } => {
                exponent > T::from_f64(0.5) && exponent <= T::one()
            }
            _ => false,
        }
    }
}

/// Stateful step-size cursor: applies the adaptive drop when the observed
/// objective decreased in 3 of the last 5 iterations.
#[derive(Debug, Clone)]
pub struct StepSizer<T> {
    schedule: StepSchedule<T>,
    dropped_at: Option<u64>,
    recent_rates: VecDeque<T>,
}

impl<T: Scalar> StepSizer<T> {
    pub fn new(schedule: StepSchedule<T>) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            schedule,
            dropped_at: None,
            recent_rates: VecDeque::with_capacity(6),
        })
    }

    pub fn schedule(&self) -> &StepSchedule<T> {
        &self.schedule
    }

    /// Iteration at which the adaptive drop fired, if it has.
    pub fn dropped_at(&self) -> Option<u64> {
        self.dropped_at
    }

    /// Records the objective value observed after update `n` and returns the
    /// step size for update `n + 1`.
    pub fn observe_and_next(&mut self, n: u64, rate: T) -> T {
        if let StepSchedule::AdaptiveDrop { gamma0, drop_factor } = self.schedule {
            if self.dropped_at.is_none() {
                self.recent_rates.push_back(rate);
                if self.recent_rates.len() > 6 {
                    self.recent_rates.pop_front();
                }
                let decreases = self
                    .recent_rates
                    .iter()
                    .zip(self.recent_rates.iter().skip(1))
                    .filter(|(a, b)| b < a)
                    .count();
                if self.recent_rates.len() == 6 && decreases >= 3 {
                    self.dropped_at = Some(n);
                }
            }
            if self.dropped_at.is_some() {
                gamma0 * drop_factor
            } else {
                gamma0
            }
        } else {
            self.schedule.step_size(n + 1)
        }
    }

    /// Step size for the first update.
    pub fn first(&self) -> T {
        self.schedule.step_size(1)
    }
}

/// Horizon-optimal constant step for an `n`-iteration run:
/// `gamma = L^{-1} sqrt(2 sum_k log M_k / n)`.
pub fn optimal_constant_step<T: Scalar>(l: T, tx_antennas: &[usize], n: u64) -> Result<T> {
    if !(l > T::zero()) || !l.is_finite() {
        return Err(Error::invalid_param("l", "must be positive and finite"));
    }
    if n == 0 {
        return Err(Error::invalid_param("n", "horizon must be positive"));
    }
    let log_sum: T = tx_antennas
        .iter()
        .map(|&m| T::from_f64((m as f64).ln()))
        .fold(T::zero(), |acc, x| acc + x);
    Ok((T::from_f64(2.0) * log_sum / T::from_f64(n as f64)).sqrt() / l)
}

/// The mean-performance guarantee attained by [`optimal_constant_step`]:
/// `eps_n = L sqrt(2 sum_k log M_k / n)`.
pub fn optimal_constant_guarantee<T: Scalar>(l: T, tx_antennas: &[usize], n: u64) -> Result<T> {
    Ok(l * l * optimal_constant_step(l, tx_antennas, n)?)
}

/// Gradient feedback model seen by the learners.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GradientNoise<T> {
    /// Perfect gradients.
    None,
    /// Relative-error perturbation of the true gradient.
    Synthetic { eta: T, law: NoiseLaw },
    /// The full receiver/transmitter sampling pipeline.
    Estimated { config: EstimatorConfig<T> },
}

/// Per-user gradient estimates at `profile` under the configured feedback
/// model; outputs are Hermitian by construction.
pub fn noisy_gradient<T: Scalar, R: Rng + ?Sized>(
    model: &NetworkModel<T>,
    profile: &CovarianceProfile<T>,
    noise: &GradientNoise<T>,
    rng: &mut R,
) -> Result<Vec<HermitianMatrix<T>>> {
    match noise {
        GradientNoise::None => model.gradient(profile),
        GradientNoise::Synthetic { eta, law } => {
            let v = model.gradient(profile)?;
            v.into_iter()
                .map(|vk| synthetic_noise(&vk, *eta, rng, *law))
                .collect()
        }
        GradientNoise::Estimated { config } => {
            let signals = sample_signals(model, profile, rng, config.samples)?;
            let w_hat = sample_covariance(&signals)?;
            let p_hat = precision_estimate(&w_hat, config.samples)?;
            (0..model.user_count())
                .map(|k| {
                    let measurements = sample_channel_measurements(
                        rng,
                        model.channel(k),
                        config.samples,
                        config.channel_error_std,
                    );
                    gradient_estimate(&measurements, &p_hat)
                })
                .collect()
        }
    }
}

/// Empirical Lipschitz-type constant `L` with
/// `L^2 = sum_k P_k^2 max ||V̂_k||_F^2` over a pre-pass of gradient draws at
/// the given profile.
pub fn estimate_gradient_bound<T: Scalar, R: Rng + ?Sized>(
    model: &NetworkModel<T>,
    profile: &CovarianceProfile<T>,
    noise: &GradientNoise<T>,
    rng: &mut R,
    draws: usize,
) -> Result<T> {
    let mut max_sq = vec![T::zero(); model.user_count()];
    let draws = if matches!(noise, GradientNoise::None) {
        1
    } else {
        draws.max(1)
    };
    for _ in 0..draws {
        let v = noisy_gradient(model, profile, noise, rng)?;
        for (m, vk) in max_sq.iter_mut().zip(&v) {
            let sq = vk.frobenius_norm().powi(2);
            *m = m.max(sq);
        }
    }
    let mut l_sq = T::zero();
    for (k, &m) in max_sq.iter().enumerate() {
        let p = model.power(k);
        l_sq += p * p * m;
    }
    Ok(l_sq.sqrt())
}

/// Synchronous matrix exponential learner state: per-user score matrices
/// and the covariance profile they induce.
#[derive(Debug, Clone)]
pub struct MxlState<T> {
    scores: Vec<HermitianMatrix<T>>,
    profile: CovarianceProfile<T>,
    powers: Vec<T>,
    iteration: u64,
}

impl<T: Scalar> MxlState<T> {
    /// Zero scores, uniform profile.
    pub fn init(model: &NetworkModel<T>) -> Self {
        let scores = (0..model.user_count())
            .map(|k| HermitianMatrix::zeros(model.tx_antennas(k)))
            .collect();
        Self {
            scores,
            profile: model.uniform_profile(),
            powers: (0..model.user_count()).map(|k| model.power(k)).collect(),
            iteration: 0,
        }
    }

    /// Start from explicit score matrices.
    pub fn from_scores(model: &NetworkModel<T>, scores: Vec<HermitianMatrix<T>>) -> Result<Self> {
        if scores.len() != model.user_count() {
            return Err(Error::DimensionMismatch {
                expected: model.user_count(),
                got: scores.len(),
            });
        }
        let mut q = Vec::with_capacity(scores.len());
        for (k, y) in scores.iter().enumerate() {
            if y.dim() != model.tx_antennas(k) {
                return Err(Error::DimensionMismatch {
                    expected: model.tx_antennas(k),
                    got: y.dim(),
                });
            }
            q.push(exp_map(y, model.power(k))?);
        }
        Ok(Self {
            scores,
            profile: CovarianceProfile::new(q),
            powers: (0..model.user_count()).map(|k| model.power(k)).collect(),
            iteration: 0,
        })
    }

    pub fn scores(&self) -> &[HermitianMatrix<T>] {
        &self.scores
    }

    pub fn profile(&self) -> &CovarianceProfile<T> {
        &self.profile
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn powers(&self) -> &[T] {
        &self.powers
    }
}

/// One synchronous update: `Y_k += gamma V̂_k`, `Q_k = exp_map(Y_k, P_k)`.
///
/// Feasibility of the profile holds for any finite `V̂` (including
/// adversarial noise); non-finite estimates are rejected.
pub fn mxl_step<T: Scalar>(
    state: &mut MxlState<T>,
    v_hat: &[HermitianMatrix<T>],
    gamma: T,
) -> Result<()> {
    if v_hat.len() != state.scores.len() {
        return Err(Error::DimensionMismatch {
            expected: state.scores.len(),
            got: v_hat.len(),
        });
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::invalid_param("gamma", "must be positive and finite"));
    }
    for (k, v) in v_hat.iter().enumerate() {
        if v.dim() != state.scores[k].dim() {
            return Err(Error::DimensionMismatch {
                expected: state.scores[k].dim(),
                got: v.dim(),
            });
        }
        if !v.matrix().is_finite() {
            return Err(Error::NonFinite);
        }
    }
    for (k, v) in v_hat.iter().enumerate() {
        state.scores[k] = state.scores[k].scaled_add(gamma, v);
        state.profile.q[k] = exp_map(&state.scores[k], state.powers[k])?;
    }
    state.iteration += 1;
    Ok(())
}

/// Update-set law for the asynchronous scheduler.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UpdateKernel {
    /// Every user updates at every event (synchronous).
    AllUsers,
    /// One uniformly random user per event.
    UniformSingle,
    /// One user per event following a recurrent Markov chain on users;
    /// `transition[i][j]` is the probability of user `j` updating after `i`.
    MarkovSingle { transition: Vec<Vec<f64>> },
}

impl UpdateKernel {
    fn validate(&self, users: usize) -> Result<()> {
        if let UpdateKernel::MarkovSingle { transition } = self {
            if transition.len() != users {
                return Err(Error::DimensionMismatch {
                    expected: users,
                    got: transition.len(),
                });
            }
            for row in transition {
                if row.len() != users {
                    return Err(Error::DimensionMismatch {
                        expected: users,
                        got: row.len(),
                    });
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid_param(
                        "transition",
                        "rows must be nonnegative and sum to 1",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one scheduler draw: the update set `K_n` and the per-user
/// staleness `d_k(n)` applied to the profiles entering the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEvent {
    pub users: Vec<usize>,
    pub delays: Vec<usize>,
}

/// Asynchronous update scheduler: draws update sets from the kernel, draws
/// bounded delays, tracks per-user update counters, and buffers the last
/// `D + 1` covariance profiles.
#[derive(Debug, Clone)]
pub struct AsyncScheduler<T> {
    kernel: UpdateKernel,
    delay_bound: usize,
    update_counts: Vec<u64>,
    epoch: u64,
    last_user: usize,
    history: VecDeque<CovarianceProfile<T>>,
}

impl<T: Scalar> AsyncScheduler<T> {
    /// The history is seeded with `D + 1` copies of the initial profile, so
    /// any admissible delay is resolvable from the first event on.
    pub fn new(
        kernel: UpdateKernel,
        delay_bound: usize,
        initial: CovarianceProfile<T>,
    ) -> Result<Self> {
        let users = initial.len();
        if users == 0 {
            return Err(Error::invalid_param("initial", "empty profile"));
        }
        kernel.validate(users)?;
        let mut history = VecDeque::with_capacity(delay_bound + 1);
        for _ in 0..=delay_bound {
            history.push_back(initial.clone());
        }
        Ok(Self {
            kernel,
            delay_bound,
            update_counts: vec![0; users],
            epoch: 0,
            last_user: 0,
            history,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn update_counts(&self) -> &[u64] {
        &self.update_counts
    }

    pub fn delay_bound(&self) -> usize {
        self.delay_bound
    }

    /// Profile as of `delay` epochs ago.
    pub fn profile_at_delay(&self, delay: usize) -> Result<&CovarianceProfile<T>> {
        self.history.get(delay).ok_or(Error::DelayExceedsBuffer {
            requested: delay,
            available: self.history.len().saturating_sub(1),
        })
    }

    fn record(&mut self, profile: CovarianceProfile<T>) {
        self.history.push_front(profile);
        while self.history.len() > self.delay_bound + 1 {
            self.history.pop_back();
        }
    }
}

/// Draws the next update event: the set `K_n` from the kernel and fresh
/// uniform delays `d_k(n)` in `[0, D]`; advances `n_k` for updating users.
pub fn scheduler_next<T: Scalar, R: Rng + ?Sized>(
    sched: &mut AsyncScheduler<T>,
    rng: &mut R,
) -> ScheduleEvent {
    let users = sched.update_counts.len();
    let chosen: Vec<usize> = match &sched.kernel {
        UpdateKernel::AllUsers => (0..users).collect(),
        UpdateKernel::UniformSingle => vec![rng.gen_range(0..users)],
        UpdateKernel::MarkovSingle { transition } => {
            let row = &transition[sched.last_user];
            let draw: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = users - 1;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if draw < acc {
                    pick = j;
                    break;
                }
            }
            vec![pick]
        }
    };
    let delays: Vec<usize> = (0..users)
        .map(|_| {
            if sched.delay_bound == 0 {
                0
            } else {
                rng.gen_range(0..=sched.delay_bound)
            }
        })
        .collect();
    for &k in &chosen {
        sched.update_counts[k] += 1;
        sched.last_user = k;
    }
    sched.epoch += 1;
    ScheduleEvent {
        users: chosen,
        delays,
    }
}

/// One asynchronous event: only users in `K_n` update, each with step
/// `gamma_{n_k}` and a gradient evaluated at per-user stale profiles
/// `Q_l(n - d_l(n))` plus the configured noise.
///
/// Returns the drawn event; non-updating users' states are untouched.
pub fn amxl_step<T: Scalar, R: Rng + ?Sized>(
    state: &mut MxlState<T>,
    sched: &mut AsyncScheduler<T>,
    model: &NetworkModel<T>,
    noise: &GradientNoise<T>,
    schedule: &StepSchedule<T>,
    rng: &mut R,
) -> Result<ScheduleEvent> {
    let event = scheduler_next(sched, rng);

    // Assemble the stale profile, mixing per-user delays.
    let stale = CovarianceProfile::new(
        (0..model.user_count())
            .map(|l| {
                sched
                    .profile_at_delay(event.delays[l])
                    .map(|p| p.user(l).clone())
            })
            .collect::<Result<_>>()?,
    );
    let v_hat = noisy_gradient(model, &stale, noise, rng)?;

    for &k in &event.users {
        if !v_hat[k].matrix().is_finite() {
            return Err(Error::NonFinite);
        }
        let gamma = schedule.step_size(sched.update_counts[k]);
        state.scores[k] = state.scores[k].scaled_add(gamma, &v_hat[k]);
        state.profile.q[k] = exp_map(&state.scores[k], state.powers[k])?;
    }
    state.iteration += 1;
    sched.record(state.profile.clone());
    Ok(event)
}

/// Eigen-coordinate learner state: per-user eigenvalues (summing to `P_k`)
/// and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenState<T> {
    users: Vec<EigenUser<T>>,
    iteration: u64,
}

#[derive(Debug, Clone)]
pub struct EigenUser<T> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
    pub power: T,
}

impl<T: Scalar> EigenState<T> {
    /// Near-uniform eigenvalues (1e-6 relative jitter so the eigenvector
    /// couplings are active from step one) and a random unitary basis.
    pub fn init<R: Rng + ?Sized>(model: &NetworkModel<T>, rng: &mut R) -> Result<Self> {
        let users = (0..model.user_count())
            .map(|k| {
                let m = model.tx_antennas(k);
                let p = model.power(k);
                let jitter = T::from_f64(1e-6);
                let mut values: Vec<T> = (0..m)
                    .map(|_| {
                        let eps = T::from_f64(2.0) * T::uniform_01(rng) - T::one();
                        (p / T::from_f64(m as f64)) * (T::one() + jitter * eps)
                    })
                    .collect();
                let total: T = values.iter().fold(T::zero(), |acc, &x| acc + x);
                for v in &mut values {
                    *v = *v * p / total;
                }
                let g = CMatrix::from_fn(m, m, |_, _| standard_complex_normal(rng));
                let vectors = orthonormalize(&g)?;
                Ok(EigenUser {
                    values,
                    vectors,
                    power: p,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            users,
            iteration: 0,
        })
    }

    /// Start from an explicit profile via its eigendecompositions.
    pub fn from_profile(model: &NetworkModel<T>, profile: &CovarianceProfile<T>) -> Result<Self> {
        let users = (0..model.user_count())
            .map(|k| {
                let eig = herm_eig(profile.user(k))?;
                Ok(EigenUser {
                    values: eig.values.iter().map(|&l| l.max(T::zero())).collect(),
                    vectors: eig.vectors,
                    power: model.power(k),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            users,
            iteration: 0,
        })
    }

    pub fn users(&self) -> &[EigenUser<T>] {
        &self.users
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Reassembles `Q_k = sum_a q_a u_a u_a†`.
    pub fn profile(&self) -> CovarianceProfile<T> {
        CovarianceProfile::new(
            self.users
                .iter()
                .map(|u| {
                    let m = u.values.len();
                    let mut out = CMatrix::zeros(m, m);
                    for i in 0..m {
                        for j in 0..m {
                            let mut acc = num_complex::Complex::new(T::zero(), T::zero());
                            for a in 0..m {
                                acc += u.vectors[(i, a)] * u.vectors[(j, a)].conj() * u.values[a];
                            }
                            out[(i, j)] = acc;
                        }
                    }
                    HermitianMatrix::symmetrized(&out)
                        .expect("eigen reassembly is square and finite")
                })
                .collect(),
        )
    }
}

/// Raw eigenvalue updates (before renormalization) for one user:
/// `q_a <- q_a + gamma q_a (V_aa - P^{-1} sum_b q_b V_bb)`.
pub(crate) fn exl_value_updates<T: Scalar>(
    user: &EigenUser<T>,
    v_basis: &CMatrix<T>,
    gamma: T,
) -> Vec<T> {
    let m = user.values.len();
    let mut weighted = T::zero();
    for b in 0..m {
        weighted += user.values[b] * v_basis[(b, b)].re;
    }
    let mean = weighted / user.power;
    (0..m)
        .map(|a| {
            let q = user.values[a];
            q + gamma * q * (v_basis[(a, a)].re - mean)
        })
        .collect()
}

/// One eigen-coordinate step with noiseless gradients.
///
/// Eigenvalues follow the replicator-like update, eigenvectors rotate along
/// the coupling terms `V_ba / (log q_a - log q_b)`, then the basis is
/// re-orthonormalized and the eigenvalues renormalized to `sum q = P`.
/// A step that would drive any eigenvalue negative is rejected without
/// mutating the state; the caller shrinks `gamma` and retries.
pub fn exl_step<T: Scalar>(
    state: &mut EigenState<T>,
    v: &[HermitianMatrix<T>],
    gamma: T,
) -> Result<()> {
    if v.len() != state.users.len() {
        return Err(Error::DimensionMismatch {
            expected: state.users.len(),
            got: v.len(),
        });
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::invalid_param("gamma", "must be positive and finite"));
    }

    // Compute all updates first; commit only if every eigenvalue stays
    // nonnegative.
    let mut staged: Vec<(Vec<T>, CMatrix<T>)> = Vec::with_capacity(state.users.len());
    for (k, user) in state.users.iter().enumerate() {
        if !v[k].matrix().is_finite() {
            return Err(Error::NonFinite);
        }
        let m = user.values.len();
        // V in the eigenbasis: V_ab = u_a† V u_b.
        let vu = v[k].matrix() * &user.vectors;
        let v_basis = user.vectors.adjoint_mul(&vu);

        let new_values = exl_value_updates(user, &v_basis, gamma);
        for (a, &q) in new_values.iter().enumerate() {
            if q < T::zero() {
                return Err(Error::StepRejected {
                    index: a,
                    value: q.to_f64(),
                });
            }
        }

        let logs: Vec<T> = user.values.iter().map(|&q| q.ln()).collect();
        let min_gap = T::from_f64(EIGEN_COUPLING_MIN_LOG_GAP);
        let mut new_vectors = user.vectors.clone();
        for a in 0..m {
            let mut delta = vec![num_complex::Complex::new(T::zero(), T::zero()); m];
            for b in 0..m {
                if b == a {
                    continue;
                }
                let gap = logs[a] - logs[b];
                if !gap.is_finite() || gap.abs() < min_gap {
                    continue;
                }
                let coef = v_basis[(b, a)] * num_complex::Complex::new(gamma / gap, T::zero());
                for i in 0..m {
                    delta[i] += user.vectors[(i, b)] * coef;
                }
            }
            for i in 0..m {
                let cur = new_vectors[(i, a)];
                new_vectors[(i, a)] = cur + delta[i];
            }
        }
        let vectors = orthonormalize(&new_vectors)?;
        staged.push((new_values, vectors));
    }

    for (user, (mut values, vectors)) in state.users.iter_mut().zip(staged) {
        let total: T = values.iter().fold(T::zero(), |acc, &x| acc + x);
        if total > T::zero() {
            let scale = user.power / total;
            for q in &mut values {
                *q = *q * scale;
            }
        }
        user.values = values;
        user.vectors = vectors;
    }
    state.iteration += 1;
    Ok(())
}

/// Runs [`exl_step`] with geometric backoff on rejection; returns the step
/// size that was actually applied.
pub fn exl_step_backoff<T: Scalar>(
    state: &mut EigenState<T>,
    v: &[HermitianMatrix<T>],
    gamma: T,
    max_halvings: u32,
) -> Result<T> {
    let mut g = gamma;
    for _ in 0..=max_halvings {
        match exl_step(state, v, g) {
            Ok(()) => return Ok(g),
            Err(Error::StepRejected { .. }) => {
                g = g * T::from_f64(0.5);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepRejected {
        index: 0,
        value: g.to_f64(),
    })
}
