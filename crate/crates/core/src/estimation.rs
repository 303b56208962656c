//! Noisy feedback: receiver-side signal sampling, sample covariance,
//! bias-adjusted precision estimation, transmitter-side pairwise gradient
//! estimates, and a synthetic relative-error noise model for controlled
//! experiments.
//!
//! All estimators are unbiased (H1), have finite mean square error (H2),
//! and — under the Gaussian-symmetric law — conditionally symmetric error
//! distributions (H3).

use num_complex::Complex;
use rand::Rng;

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::hermitian::{herm_eig, HermitianMatrix};
use crate::model::{CovarianceProfile, NetworkModel};
use crate::scalar::{standard_complex_normal, Scalar};

/// Error law for the synthetic noise generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLaw {
    /// Hermitized complex Gaussian perturbation (unbounded, symmetric).
    GaussianSymmetric,
    /// Norm-calibrated uniform perturbation (almost-surely bounded, symmetric).
    BoundedUniform,
}

/// Sampling configuration for the estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimatorConfig<T> {
    /// Sample count for both signal draws and channel measurements.
    pub samples: usize,
    /// Per-entry std of the additive complex Gaussian channel measurement noise.
    pub channel_error_std: T,
    pub noise_law: NoiseLaw,
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn new(samples: usize, channel_error_std: T, noise_law: NoiseLaw) -> Result<Self> {
        if samples < 2 {
            return Err(Error::SampleTooSmall {
                need: 2,
                got: samples,
            });
        }
        if channel_error_std < T::zero() || !channel_error_std.is_finite() {
            return Err(Error::invalid_param(
                "channel_error_std",
                "must be nonnegative and finite",
            ));
        }
        Ok(Self {
            samples,
            channel_error_std,
            noise_law,
        })
    }
}

/// One received-signal draw `y = sum_k H_k x_k + z`.
pub type SignalSample<T> = Vec<Complex<T>>;

/// Draws `s` i.i.d. received-signal samples with `x_k ~ CN(0, Q_k)` and
/// `z ~ CN(0, I)`; the empirical covariance converges to `W`.
pub fn sample_signals<T: Scalar, R: Rng + ?Sized>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
    rng: &mut R,
    s: usize,
) -> Result<Vec<SignalSample<T>>> {
    if s == 0 {
        return Err(Error::SampleTooSmall { need: 1, got: 0 });
    }
    // Per-user square roots Q_k^{1/2} for codeword draws.
    let roots: Vec<CMatrix<T>> = q
        .q
        .iter()
        .map(|qk| {
            let eig = herm_eig(qk)?;
            Ok(eig
                .apply_spectral(|l| if l > T::zero() { l.sqrt() } else { T::zero() })
                .into_matrix())
        })
        .collect::<Result<_>>()?;

    let n = model.rx_antennas();
    let mut out = Vec::with_capacity(s);
    for _ in 0..s {
        let mut y: Vec<Complex<T>> = (0..n).map(|_| standard_complex_normal(rng)).collect();
        for (k, root) in roots.iter().enumerate() {
            let m = model.tx_antennas(k);
            let g: Vec<Complex<T>> = (0..m).map(|_| standard_complex_normal(rng)).collect();
            let x = root.mul_vec(&g);
            let hx = model.channel(k).mul_vec(&x);
            for (yi, hi) in y.iter_mut().zip(&hx) {
                *yi += *hi;
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// Empirical covariance `(1/S) sum_s y_s y_s†`; no small-sample correction
/// because the signal mean is known to be zero.
pub fn sample_covariance<T: Scalar>(samples: &[SignalSample<T>]) -> Result<HermitianMatrix<T>> {
    let s = samples.len();
    if s == 0 {
        return Err(Error::SampleTooSmall { need: 1, got: 0 });
    }
    let n = samples[0].len();
    let mut m = CMatrix::zeros(n, n);
    for y in samples {
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += y[i] * y[j].conj();
            }
        }
    }
    let inv = T::one() / T::from_f64(s as f64);
    HermitianMatrix::symmetrized(&m.scale_re(inv))
}

/// Bias adjustment applied to the inverted sample covariance so that the
/// precision estimate is unbiased.
///
/// For circularly-symmetric complex Gaussian samples the inverse of the
/// sample covariance satisfies `E[Ŵ^{-1}] = S/(S-N) W^{-1}`, so the unbiased
/// adjustment is `(S-N)/S`. (The real-sample analogue would be
/// `(S-N-1)/S`.)
pub fn precision_bias_factor<T: Scalar>(samples: usize, dim: usize) -> T {
    T::from_f64((samples - dim) as f64) / T::from_f64(samples as f64)
}

/// Bias-adjusted precision estimate `P̂ = factor * Ŵ^{-1}`.
///
/// Rejects `S <= N + 1` (degenerate regime) and singular sample covariance.
pub fn precision_estimate<T: Scalar>(
    w_hat: &HermitianMatrix<T>,
    samples: usize,
) -> Result<HermitianMatrix<T>> {
    let n = w_hat.dim();
    if samples <= n + 1 {
        return Err(Error::SampleTooSmall {
            need: n + 2,
            got: samples,
        });
    }
    let inv = herm_eig(w_hat)?.inverse(T::from_f64(1e-12))?;
    Ok(inv.scale(precision_bias_factor(samples, n)))
}

/// Independent channel measurements `Ĥ_s = H + std * G_s` with i.i.d.
/// complex Gaussian `G_s`.
pub fn sample_channel_measurements<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    channel: &CMatrix<T>,
    s: usize,
    error_std: T,
) -> Vec<CMatrix<T>> {
    (0..s)
        .map(|_| {
            CMatrix::from_fn(channel.rows(), channel.cols(), |i, j| {
                channel[(i, j)]
                    + standard_complex_normal::<T, _>(rng) * Complex::new(error_std, T::zero())
            })
        })
        .collect()
}

/// Pairwise-product gradient estimate
/// `V̂ = [S(S-1)]^{-1} sum_{s != s'} Ĥ_s† P̂ Ĥ_{s'}`, hermitized.
///
/// Unbiased for `H† W^{-1} H` when the channel measurements are mutually
/// independent and independent of `P̂`. Computed through the identity
/// `sum_{s != s'} Ĥ_s† P̂ Ĥ_{s'} = A† P̂ A - sum_s Ĥ_s† P̂ Ĥ_s` with
/// `A = sum_s Ĥ_s`.
pub fn gradient_estimate<T: Scalar>(
    channel_samples: &[CMatrix<T>],
    p_hat: &HermitianMatrix<T>,
) -> Result<HermitianMatrix<T>> {
    let s = channel_samples.len();
    if s < 2 {
        return Err(Error::SampleTooSmall { need: 2, got: s });
    }
    let rows = channel_samples[0].rows();
    let cols = channel_samples[0].cols();
    if p_hat.dim() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: p_hat.dim(),
        });
    }
    let mut total = CMatrix::zeros(rows, cols);
    for h in channel_samples {
        if h.rows() != rows || h.cols() != cols {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: h.rows(),
            });
        }
        total = &total + h;
    }
    let p = p_hat.matrix();
    let mut acc = total.adjoint_mul(&(p * &total));
    for h in channel_samples {
        let own = h.adjoint_mul(&(p * h));
        acc = &acc - &own;
    }
    let denom = T::from_f64((s * (s - 1)) as f64);
    HermitianMatrix::symmetrized(&acc.scale_re(T::one() / denom))
}

/// `Gamma((d+1)/2) / Gamma(d/2)`, by the two-term recursion; the mean of a
/// chi-distributed variable with `d` degrees of freedom is `sqrt(2)` times
/// this ratio.
fn chi_mean_ratio(d: usize) -> f64 {
    debug_assert!(d >= 1);
    let mut r = 1.0 / std::f64::consts::PI.sqrt();
    for k in 2..=d {
        r = (k - 1) as f64 / (2.0 * r);
    }
    r
}

/// Additive synthetic noise at relative error level `eta`:
/// returns `hermitize(V + Z)` with `E ||Z||_F = eta * ||V||_F`.
///
/// The Gaussian law scales analytically through the chi-distribution mean;
/// the bounded-uniform law normalizes each draw to the target norm exactly.
/// Both are zero-mean and symmetric.
pub fn synthetic_noise<T: Scalar, R: Rng + ?Sized>(
    v: &HermitianMatrix<T>,
    eta: T,
    rng: &mut R,
    law: NoiseLaw,
) -> Result<HermitianMatrix<T>> {
    if eta < T::zero() || !eta.is_finite() {
        return Err(Error::invalid_param("eta", "must be nonnegative and finite"));
    }
    if eta == T::zero() {
        return Ok(v.clone());
    }
    let m = v.dim();
    let target = eta * v.frobenius_norm();
    let z = match law {
        NoiseLaw::GaussianSymmetric => {
            // Z = (G + G†)/2 with G_ij ~ CN(0, sigma^2); then
            // ||Z||_F = (sigma/sqrt(2)) * chi_{m^2}.
            let ratio = T::from_f64(chi_mean_ratio(m * m));
            let sigma = target / ratio;
            let g = CMatrix::from_fn(m, m, |_, _| {
                standard_complex_normal::<T, _>(rng) * Complex::new(sigma, T::zero())
            });
            HermitianMatrix::symmetrized(&g)?
        }
        NoiseLaw::BoundedUniform => {
            let g = CMatrix::from_fn(m, m, |_, _| {
                Complex::new(
                    T::from_f64(2.0) * T::uniform_01(rng) - T::one(),
                    T::from_f64(2.0) * T::uniform_01(rng) - T::one(),
                )
            });
            let z = HermitianMatrix::symmetrized(&g)?;
            let norm = z.frobenius_norm();
            if norm == T::zero() {
                z
            } else {
                z.scale(target / norm)
            }
        }
    };
    Ok(v.add(&z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::hermitian::tests::random_hermitian;
    use crate::model::tests::{random_feasible_profile, random_model};
    use crate::model::sample_static_channel;

    #[test]
    fn signals_pure_noise_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 2, 3, (2, 2), (1.0, 2.0));
        let zero = CovarianceProfile::new(vec![
            HermitianMatrix::zeros(2),
            HermitianMatrix::zeros(2),
        ]);
        let samples = sample_signals(&model, &zero, &mut rng, 20_000).unwrap();
        let w_hat = sample_covariance(&samples).unwrap();
        let defect = w_hat
            .sub(&HermitianMatrix::scaled_identity(3, 1.0))
            .frobenius_norm();
        assert!(defect < 0.07, "defect {defect}");
    }

    #[test]
    fn signals_deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = random_model(&mut rng, 2, 3, (2, 2), (1.0, 2.0));
        let q = random_feasible_profile(&mut rng, &model);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = sample_signals(&model, &q, &mut r1, 32).unwrap();
        let b = sample_signals(&model, &q, &mut r2, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_covariance_clt_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_model(&mut rng, 2, 3, (2, 2), (1.0, 2.0));
        let q = random_feasible_profile(&mut rng, &model);
        let w = model.aggregate_covariance(&q).unwrap();

        let mean_err = |s: usize, rng: &mut ChaCha8Rng| -> f64 {
            let reps = 24;
            let mut acc = 0.0;
            for _ in 0..reps {
                let samples = sample_signals(&model, &q, rng, s).unwrap();
                let w_hat = sample_covariance(&samples).unwrap();
                acc += w_hat.sub(&w).frobenius_norm();
            }
            acc / reps as f64
        };
        let e1 = mean_err(256, &mut rng);
        let e2 = mean_err(1024, &mut rng);
        let ratio = e1 / e2;
        assert!(
            (1.5..=2.7).contains(&ratio),
            "CLT rate: err(256)={e1:.4}, err(1024)={e2:.4}, ratio {ratio:.2}"
        );
    }

    #[test]
    fn sample_covariance_simple_cases() {
        let e1: SignalSample<f64> = vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)];
        let single = sample_covariance(&[e1.clone()]).unwrap();
        assert!((single.entry(0, 0).re - 1.0).abs() < 1e-15);
        assert!(single.entry(1, 1).norm() < 1e-15);

        let dup = sample_covariance(&[e1.clone(), e1.clone(), e1]).unwrap();
        assert!(dup.sub(&single).frobenius_norm() < 1e-15);

        assert!(sample_covariance::<f64>(&[]).is_err());
    }

    #[test]
    fn precision_factor_and_rejections() {
        // Complex-Wishart adjustment: (S - N)/S.
        assert_eq!(precision_bias_factor::<f64>(100, 24), 0.76);
        assert_eq!(precision_bias_factor::<f64>(64, 4), 60.0 / 64.0);

        let w = HermitianMatrix::<f64>::scaled_identity(4, 1.0);
        assert!(precision_estimate(&w, 5).is_err()); // S <= N + 1
        let singular = HermitianMatrix::<f64>::from_real_diagonal(&[1.0, 0.0, 1.0, 1.0]);
        assert!(precision_estimate(&singular, 64).is_err());
    }

    #[test]
    fn precision_consistency_large_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(&mut rng, 1, 2, (2, 2), (1.0, 2.0));
        let zero = CovarianceProfile::new(vec![HermitianMatrix::zeros(2)]);
        let samples = sample_signals(&model, &zero, &mut rng, 60_000).unwrap();
        let w_hat = sample_covariance(&samples).unwrap();
        let p_hat = precision_estimate(&w_hat, 60_000).unwrap();
        let defect = p_hat
            .sub(&HermitianMatrix::scaled_identity(2, 1.0))
            .frobenius_norm();
        assert!(defect < 0.03, "defect {defect}");
    }

    #[test]
    fn precision_unbiased_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 2, 3, (2, 2), (1.0, 2.0));
        let q = random_feasible_profile(&mut rng, &model);
        let w = model.aggregate_covariance(&q).unwrap();
        let winv = herm_eig(&w).unwrap().inverse(1e-14).unwrap();

        let s = 32;
        let reps = 3000;
        let mut mean = CMatrix::<f64>::zeros(3, 3);
        let mut norms = Vec::with_capacity(reps);
        for _ in 0..reps {
            let samples = sample_signals(&model, &q, &mut rng, s).unwrap();
            let p_hat = precision_estimate(&sample_covariance(&samples).unwrap(), s).unwrap();
            norms.push(p_hat.sub(&winv).frobenius_norm());
            mean = &mean + p_hat.matrix();
        }
        let mean = mean.scale_re(1.0 / reps as f64);
        let bias = (&mean - winv.matrix()).frobenius_norm();
        // 3 sigma band for the mean of per-rep deviations.
        let per_rep_std = {
            let m = norms.iter().sum::<f64>() / reps as f64;
            (norms.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / reps as f64).sqrt()
        };
        let band = 3.0 * norms.iter().sum::<f64>() / reps as f64 / (reps as f64).sqrt()
            + 3.0 * per_rep_std / (reps as f64).sqrt();
        assert!(bias < band.max(0.02), "bias {bias:.4} band {band:.4}");
    }

    #[test]
    fn gradient_estimate_degenerate_and_s2() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_model(&mut rng, 2, 3, (2, 3), (1.0, 2.0));
        let q = random_feasible_profile(&mut rng, &model);
        let w = model.aggregate_covariance(&q).unwrap();
        let winv = herm_eig(&w).unwrap().inverse(1e-14).unwrap();
        let v = model.gradient(&q).unwrap();

        // Zero channel noise and exact precision recover V exactly.
        for k in 0..model.user_count() {
            let hs = vec![model.channel(k).clone(); 4];
            let v_hat = gradient_estimate(&hs, &winv).unwrap();
            assert!(v_hat.sub(&v[k]).frobenius_norm() < 1e-12);
        }

        // S = 2 expands to the symmetrized cross product.
        let h1 = sample_static_channel(&mut rng, 3, 2, 1.0);
        let h2 = sample_static_channel(&mut rng, 3, 2, 1.0);
        let v_hat = gradient_estimate(&[h1.clone(), h2.clone()], &winv).unwrap();
        let cross = h1.adjoint_mul(&(winv.matrix() * &h2));
        let direct = HermitianMatrix::symmetrized(
            &(&cross + &h2.adjoint_mul(&(winv.matrix() * &h1))).scale_re(0.5),
        )
        .unwrap();
        assert!(v_hat.sub(&direct).frobenius_norm() < 1e-13);

        assert!(gradient_estimate(&[h1], &winv).is_err());
    }

    #[test]
    fn gradient_estimate_unbiased_and_variance_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = random_model(&mut rng, 2, 3, (2, 2), (1.0, 2.0));
        let q = random_feasible_profile(&mut rng, &model);
        let w = model.aggregate_covariance(&q).unwrap();
        let winv = herm_eig(&w).unwrap().inverse(1e-14).unwrap();
        let v = model.gradient(&q).unwrap();
        let std = 0.4;

        let mse = |s: usize, reps: usize, rng: &mut ChaCha8Rng| -> (f64, f64) {
            let mut mean = CMatrix::<f64>::zeros(2, 2);
            let mut mse = 0.0;
            for _ in 0..reps {
                let hs = sample_channel_measurements(rng, model.channel(0), s, std);
                let v_hat = gradient_estimate(&hs, &winv).unwrap();
                let err = v_hat.sub(&v[0]).frobenius_norm();
                mse += err * err;
                mean = &mean + v_hat.matrix();
            }
            (
                (&mean.scale_re(1.0 / reps as f64) - v[0].matrix()).frobenius_norm(),
                mse / reps as f64,
            )
        };

        let (bias, mse_s) = mse(8, 4000, &mut rng);
        let (_, mse_2s) = mse(16, 4000, &mut rng);
        assert!(bias < 0.02, "bias {bias:.4}");
        let ratio = mse_s / mse_2s;
        assert!(
            (1.6..=2.6).contains(&ratio),
            "variance rate: MSE(8)={mse_s:.5}, MSE(16)={mse_2s:.5}, ratio {ratio:.2}"
        );
    }

    #[test]
    fn synthetic_noise_eta_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_hermitian(3, &mut rng, 1.0);
        let out = synthetic_noise(&v, 0.0, &mut rng, NoiseLaw::GaussianSymmetric).unwrap();
        assert_eq!(v, out);
    }

    #[test]
    fn synthetic_noise_scaling_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for law in [NoiseLaw::GaussianSymmetric, NoiseLaw::BoundedUniform] {
            for m in [1usize, 2, 4] {
                let v = random_hermitian(m, &mut rng, 1.0);
                let eta = 0.5;
                let reps = 10_000;
                let mut rel = 0.0;
                let mut mean = CMatrix::<f64>::zeros(m, m);
                for _ in 0..reps {
                    let noisy = synthetic_noise(&v, eta, &mut rng, law).unwrap();
                    let z = noisy.sub(&v);
                    rel += z.frobenius_norm() / v.frobenius_norm();
                    mean = &mean + z.matrix();
                }
                rel /= reps as f64;
                assert!(
                    (rel - eta).abs() < 0.05 * eta,
                    "{law:?} m={m}: E||Z||/||V|| = {rel:.4} vs eta {eta}"
                );
                let bias = mean.scale_re(1.0 / reps as f64).frobenius_norm();
                let band = 3.0 * eta * v.frobenius_norm() / (reps as f64).sqrt();
                assert!(bias < band, "{law:?} m={m}: mean bias {bias:.4} band {band:.4}");
            }
        }
    }

    #[test]
    fn synthetic_noise_symmetric_law() {
        // H3: skewness of tr[Z A] vanishes for fixed test directions A.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let v = random_hermitian(3, &mut rng, 1.0);
        let dir = random_hermitian(3, &mut rng, 1.0);
        for law in [NoiseLaw::GaussianSymmetric, NoiseLaw::BoundedUniform] {
            let reps = 20_000;
            let mut samples = Vec::with_capacity(reps);
            for _ in 0..reps {
                let z = synthetic_noise(&v, 0.7, &mut rng, law).unwrap().sub(&v);
                samples.push(z.trace_product(&dir));
            }
            let mean = samples.iter().sum::<f64>() / reps as f64;
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / reps as f64;
            let skew = samples
                .iter()
                .map(|x| {
                    let d = x - mean;
                    d * d * d
                })
                .sum::<f64>()
                / reps as f64
                / var.powf(1.5);
            assert!(skew.abs() < 0.1, "{law:?}: skewness {skew:.4}");
        }
    }

    #[test]
    fn chi_mean_ratio_known_values() {
        // d=1: 1/sqrt(pi); d=2: sqrt(pi)/2; d=4: 3 sqrt(pi)/4 / Gamma(2)=...
        assert!((chi_mean_ratio(1) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
        assert!((chi_mean_ratio(2) - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
        // E[chi_d] -> sqrt(d - 1/2) for large d.
        let d = 64;
        let approx = ((d as f64) - 0.5).sqrt() / 2.0f64.sqrt();
        assert!((chi_mean_ratio(d) - approx).abs() < 0.01);
    }

    #[test]
    fn estimator_config_validation() {
        assert!(EstimatorConfig::new(1, 0.1, NoiseLaw::GaussianSymmetric).is_err());
        assert!(EstimatorConfig::new(8, -0.1, NoiseLaw::GaussianSymmetric).is_err());
        assert!(EstimatorConfig::new(8, 0.1, NoiseLaw::BoundedUniform).is_ok());
    }
}
