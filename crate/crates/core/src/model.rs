//! The Gaussian vector multiple-access channel: users, rates, gradients,
//! and channel evolution (static draws and Jakes fading).
//!
//! Rates are in nats throughout; the harness converts to bits for display.
//! Pathloss is neglected and the receiver noise covariance is the identity.

use num_complex::Complex;
use rand::Rng;

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::hermitian::{herm_eig, HermitianMatrix};
use crate::scalar::{standard_complex_normal, Scalar};

/// Speed of light used for the Doppler frequency, in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// One uplink user: channel matrix `H` (rx x tx) and maximum power.
#[derive(Debug, Clone)]
pub struct UserLink<T> {
    pub channel: CMatrix<T>,
    pub power: T,
}

/// The channel instance: `K` users transmitting to one `N`-antenna receiver.
#[derive(Debug, Clone)]
pub struct NetworkModel<T> {
    rx_antennas: usize,
    users: Vec<UserLink<T>>,
}

impl<T: Scalar> NetworkModel<T> {
    pub fn new(rx_antennas: usize, users: Vec<UserLink<T>>) -> Result<Self> {
        if rx_antennas == 0 {
            return Err(Error::invalid_param("rx_antennas", "must be at least 1"));
        }
        if users.is_empty() {
            return Err(Error::invalid_param("users", "need at least one user"));
        }
        for (k, u) in users.iter().enumerate() {
            if u.channel.rows() != rx_antennas {
                return Err(Error::DimensionMismatch {
                    expected: rx_antennas,
                    got: u.channel.rows(),
                });
            }
            if u.channel.cols() == 0 {
                return Err(Error::invalid_param(
                    "tx_antennas",
                    format!("user {k} has none"),
                ));
            }
            if !u.channel.is_finite() {
                return Err(Error::NonFinite);
            }
            if !(u.power > T::zero()) || !u.power.is_finite() {
                return Err(Error::invalid_param(
                    "power",
                    format!("user {k} must be positive"),
                ));
            }
        }
        Ok(Self { rx_antennas, users })
    }

    #[inline]
    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    #[inline]
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    #[inline]
    pub fn tx_antennas(&self, k: usize) -> usize {
        self.users[k].channel.cols()
    }

    #[inline]
    pub fn power(&self, k: usize) -> T {
        self.users[k].power
    }

    #[inline]
    pub fn channel(&self, k: usize) -> &CMatrix<T> {
        &self.users[k].channel
    }

    pub fn users(&self) -> &[UserLink<T>] {
        &self.users
    }

    /// Same topology with replaced channel matrices (fading steps).
    pub fn with_channels(&self, channels: Vec<CMatrix<T>>) -> Result<Self> {
        if channels.len() != self.users.len() {
            return Err(Error::DimensionMismatch {
                expected: self.users.len(),
                got: channels.len(),
            });
        }
        let users = self
            .users
            .iter()
            .zip(channels)
            .map(|(u, channel)| UserLink {
                channel,
                power: u.power,
            })
            .collect();
        Self::new(self.rx_antennas, users)
    }

    /// Uniform power allocation `Q_k = (P_k / M_k) I`, the benchmark profile.
    pub fn uniform_profile(&self) -> CovarianceProfile<T> {
        let q = self
            .users
            .iter()
            .map(|u| {
                let m = u.channel.cols();
                HermitianMatrix::scaled_identity(m, u.power / T::from_f64(m as f64))
            })
            .collect();
        CovarianceProfile { q }
    }

    fn check_profile(&self, q: &CovarianceProfile<T>) -> Result<()> {
        if q.q.len() != self.users.len() {
            return Err(Error::DimensionMismatch {
                expected: self.users.len(),
                got: q.q.len(),
            });
        }
        for (k, m) in q.q.iter().enumerate() {
            if m.dim() != self.tx_antennas(k) {
                return Err(Error::DimensionMismatch {
                    expected: self.tx_antennas(k),
                    got: m.dim(),
                });
            }
        }
        Ok(())
    }

    /// Aggregate signal-plus-noise covariance `W = I + sum_k H_k Q_k H_k†`.
    pub fn aggregate_covariance(&self, q: &CovarianceProfile<T>) -> Result<HermitianMatrix<T>> {
        self.check_profile(q)?;
        let mut w = HermitianMatrix::scaled_identity(self.rx_antennas, T::one());
        for (u, qk) in self.users.iter().zip(&q.q) {
            w = w.add(&qk.conjugated_by(&u.channel));
        }
        Ok(w)
    }

    /// Interference-plus-noise covariance seen by user `k`:
    /// `W_{-k} = W - H_k Q_k H_k†`.
    pub fn mui_covariance(
        &self,
        q: &CovarianceProfile<T>,
        k: usize,
    ) -> Result<HermitianMatrix<T>> {
        if k >= self.users.len() {
            return Err(Error::InvalidUser {
                index: k,
                users: self.users.len(),
            });
        }
        let w = self.aggregate_covariance(q)?;
        Ok(self.mui_from_aggregate(&w, q, k))
    }

    fn mui_from_aggregate(
        &self,
        w: &HermitianMatrix<T>,
        q: &CovarianceProfile<T>,
        k: usize,
    ) -> HermitianMatrix<T> {
        w.sub(&q.q[k].conjugated_by(&self.users[k].channel))
    }

    /// Achievable rate of user `k` under single-user decoding, in nats.
    pub fn user_rate(&self, q: &CovarianceProfile<T>, k: usize) -> Result<T> {
        if k >= self.users.len() {
            return Err(Error::InvalidUser {
                index: k,
                users: self.users.len(),
            });
        }
        let w = self.aggregate_covariance(q)?;
        let wk = self.mui_from_aggregate(&w, q, k);
        Ok(log_det(&w)? - log_det(&wk)?)
    }

    /// Sum rate `log det(I + sum_k H_k Q_k H_k†)` in nats.
    pub fn sum_rate(&self, q: &CovarianceProfile<T>) -> Result<T> {
        log_det(&self.aggregate_covariance(q)?)
    }

    /// Per-user sum-rate gradients `V_k = H_k† W^{-1} H_k`, Hermitian PSD;
    /// `W` is inverted through its eigendecomposition.
    pub fn gradient(&self, q: &CovarianceProfile<T>) -> Result<Vec<HermitianMatrix<T>>> {
        let w = self.aggregate_covariance(q)?;
        let winv = herm_eig(&w)?.inverse(T::from_f64(1e-14))?;
        Ok(self.gradient_given_precision(&winv))
    }

    /// Gradients computed from a supplied precision matrix (the true
    /// `W^{-1}` or an estimate of it): `V_k = H_k† P H_k`.
    pub fn gradient_given_precision(
        &self,
        precision: &HermitianMatrix<T>,
    ) -> Vec<HermitianMatrix<T>> {
        self.users
            .iter()
            .map(|u| precision.conjugated_by(&u.channel.adjoint()))
            .collect()
    }

    /// Residual of the potential-game identity
    /// `R_k(Q_k) - R_k(Q_k') = R(Q_k) - R(Q_k')` for a unilateral deviation.
    pub fn potential_residual(
        &self,
        q: &CovarianceProfile<T>,
        k: usize,
        qk_new: &HermitianMatrix<T>,
    ) -> Result<T> {
        let mut deviated = q.clone();
        deviated.q[k] = qk_new.clone();
        let lhs = self.user_rate(q, k)? - self.user_rate(&deviated, k)?;
        let rhs = self.sum_rate(q)? - self.sum_rate(&deviated)?;
        Ok((lhs - rhs).abs())
    }
}

/// Per-user transmit covariance matrices, the optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceProfile<T> {
    pub q: Vec<HermitianMatrix<T>>,
}

impl<T: Scalar> CovarianceProfile<T> {
    pub fn new(q: Vec<HermitianMatrix<T>>) -> Self {
        Self { q }
    }

    pub fn user(&self, k: usize) -> &HermitianMatrix<T> {
        &self.q[k]
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Checks `Q_k ⪰ 0` and `tr(Q_k) = P_k` within the stated tolerances.
    pub fn check_feasible(&self, model: &NetworkModel<T>) -> Result<()> {
        for (k, qk) in self.q.iter().enumerate() {
            let p = model.power(k);
            let tr = qk.trace_re();
            if (tr - p).abs() > T::from_f64(1e-8) * p {
                return Err(Error::invalid_param(
                    "profile",
                    format!("user {k} trace {} vs power {}", tr.to_f64(), p.to_f64()),
                ));
            }
            let min = herm_eig(qk)?.min_value();
            if min < -T::from_f64(1e-10) * p {
                return Err(Error::NegativeEigenvalue {
                    value: min.to_f64(),
                    tol: -1e-10 * p.to_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn distance(&self, other: &Self) -> T {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| {
                let d = a.sub(b).frobenius_norm();
                d * d
            })
            .fold(T::zero(), |acc, x| acc + x)
            .sqrt()
    }
}

/// `log det` of a positive-definite Hermitian matrix via its spectrum.
pub fn log_det<T: Scalar>(a: &HermitianMatrix<T>) -> Result<T> {
    let eig = herm_eig(a)?;
    let mut acc = T::zero();
    for &l in &eig.values {
        if l <= T::zero() {
            return Err(Error::Singular(l.to_f64()));
        }
        acc += l.ln();
    }
    Ok(acc)
}

/// I.i.d. circularly-symmetric complex Gaussian matrix, per-entry
/// variance `scale^2`; deterministic for a fixed generator state.
pub fn sample_static_channel<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rx: usize,
    tx: usize,
    scale: T,
) -> CMatrix<T> {
    CMatrix::from_fn(rx, tx, |_, _| {
        standard_complex_normal::<T, _>(rng) * Complex::new(scale, T::zero())
    })
}

/// Sum-of-sinusoids Rayleigh fading process for one channel matrix.
///
/// Each entry is an independent bank of Gaussian-weighted oscillators with
/// uniformly random arrival angles, giving stationary unit-variance complex
/// Gaussian marginals and autocorrelation `J_0(2 pi f_D tau)`.
#[derive(Debug, Clone)]
pub struct JakesFadingState<T> {
    carrier_hz: T,
    velocity_mps: T,
    doppler_hz: T,
    time_s: T,
    rows: usize,
    cols: usize,
    // Flattened per-entry oscillator banks, row-major: complex amplitudes,
    // angular rates (2 pi f_D cos alpha), and initial phases.
    amps: Vec<Complex<T>>,
    rates: Vec<T>,
    phases: Vec<T>,
    oscillators: usize,
    current: CMatrix<T>,
}

impl<T: Scalar> JakesFadingState<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        rows: usize,
        cols: usize,
        carrier_hz: T,
        velocity_mps: T,
        oscillators: usize,
    ) -> Result<Self> {
        if oscillators < 1 {
            return Err(Error::invalid_param("oscillators", "need at least one"));
        }
        if !(carrier_hz > T::zero()) || velocity_mps < T::zero() {
            return Err(Error::invalid_param(
                "jakes",
                "carrier must be positive and velocity nonnegative",
            ));
        }
        let doppler_hz = velocity_mps * carrier_hz / T::from_f64(SPEED_OF_LIGHT);
        let total = rows * cols * oscillators;
        let mut amps = Vec::with_capacity(total);
        let mut rates = Vec::with_capacity(total);
        let mut phases = Vec::with_capacity(total);
        let two_pi = T::from_f64(2.0) * T::PI();
        for _ in 0..total {
            amps.push(standard_complex_normal::<T, _>(rng));
            let angle = two_pi * T::uniform_01(rng);
            rates.push(two_pi * doppler_hz * angle.cos());
            phases.push(two_pi * T::uniform_01(rng));
        }
        let mut state = Self {
            carrier_hz,
            velocity_mps,
            doppler_hz,
            time_s: T::zero(),
            rows,
            cols,
            amps,
            rates,
            phases,
            oscillators,
            current: CMatrix::zeros(rows, cols),
        };
        state.current = state.evaluate();
        Ok(state)
    }

    pub fn doppler_hz(&self) -> T {
        self.doppler_hz
    }

    pub fn carrier_hz(&self) -> T {
        self.carrier_hz
    }

    pub fn velocity_mps(&self) -> T {
        self.velocity_mps
    }

    pub fn time_s(&self) -> T {
        self.time_s
    }

    /// The channel matrix at the current time.
    pub fn channel(&self) -> &CMatrix<T> {
        &self.current
    }

    fn evaluate(&self) -> CMatrix<T> {
        let norm = (T::one() / T::from_f64(self.oscillators as f64)).sqrt();
        let t = self.time_s;
        let mut m = CMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let base = (i * self.cols + j) * self.oscillators;
                let mut acc = Complex::new(T::zero(), T::zero());
                for o in 0..self.oscillators {
                    let arg = self.rates[base + o] * t + self.phases[base + o];
                    acc += self.amps[base + o] * Complex::new(arg.cos(), arg.sin());
                }
                m[(i, j)] = acc * norm;
            }
        }
        m
    }
}

/// Advances the fading process by `dt` seconds; `dt = 0` leaves the channel
/// unchanged, negative `dt` is rejected.
pub fn jakes_advance<T: Scalar>(state: &mut JakesFadingState<T>, dt: T) -> Result<()> {
    if dt < T::zero() || !dt.is_finite() {
        return Err(Error::invalid_param("dt", "must be nonnegative and finite"));
    }
    if dt > T::zero() {
        state.time_s += dt;
        state.current = state.evaluate();
    }
    Ok(())
}
