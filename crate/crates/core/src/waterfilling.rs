//! Water-filling baselines: closed-form single-user allocation over the
//! eigenmodes of an effective channel, plus iterative (round-robin) and
//! simultaneous multi-user variants.

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::hermitian::{herm_eig, HermitianMatrix};
use crate::model::{CovarianceProfile, NetworkModel};
use crate::scalar::Scalar;

/// Outcome of a single-user water-filling solve.
#[derive(Debug, Clone)]
pub struct WaterfillResult<T> {
    pub q: HermitianMatrix<T>,
    pub water_level: T,
    pub active_modes: usize,
}

/// Water-fills total power `p` over the eigenmodes of `H_eff† H_eff`.
///
/// The water level comes from an exact search over the sorted gains (no
/// iteration): with the top `m` modes active, `mu_m = (p + sum 1/g_i)/m`,
/// and `m` is grown while `mu_m` stays above the next inverse gain.
/// An all-zero channel returns the uniform allocation by convention.
pub fn waterfill_single<T: Scalar>(h_eff: &CMatrix<T>, p: T) -> Result<WaterfillResult<T>> {
    if !(p > T::zero()) || !p.is_finite() {
        return Err(Error::invalid_param("p", "power must be positive and finite"));
    }
    let m = h_eff.cols();
    let gram = HermitianMatrix::symmetrized(&h_eff.adjoint_mul(h_eff))?;
    let eig = herm_eig(&gram)?;

    // Mode gains, descending, with their eigenvector indices.
    let floor = eig.max_value().max(T::zero()) * T::from_f64(1e-14);
    let mut modes: Vec<(usize, T)> = eig
        .values
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, g)| g > floor)
        .collect();
    modes.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));

    if modes.is_empty() {
        return Ok(WaterfillResult {
            q: HermitianMatrix::scaled_identity(m, p / T::from_f64(m as f64)),
            water_level: T::zero(),
            active_modes: 0,
        });
    }

    let mut inv_sum = T::zero();
    let mut active = 0usize;
    let mut mu = T::zero();
    for (rank, &(_, g)) in modes.iter().enumerate() {
        let inv = T::one() / g;
        let candidate = (p + inv_sum + inv) / T::from_f64((rank + 1) as f64);
        if candidate > inv {
            inv_sum += inv;
            mu = candidate;
            active = rank + 1;
        } else {
            break;
        }
    }

    let mut alloc = vec![T::zero(); m];
    for &(idx, g) in modes.iter().take(active) {
        alloc[idx] = mu - T::one() / g;
    }
    let mut k = 0;
    let q = eig.apply_spectral(|_| {
        let val = alloc[k];
        k += 1;
        val
    });
    Ok(WaterfillResult {
        q,
        water_level: mu,
        active_modes: active,
    })
}

/// Best response of user `k` against a fixed aggregate covariance `w`:
/// water-fill `(W_{-k})^{-1/2} H_k` with `W_{-k} = W - H_k Q_k H_k†`.
///
/// Eigenvalues of `W_{-k}` are floored at a small positive value so the
/// inverse square root survives noisy aggregate estimates.
pub fn best_response<T: Scalar>(
    model: &NetworkModel<T>,
    w: &HermitianMatrix<T>,
    q: &CovarianceProfile<T>,
    k: usize,
) -> Result<HermitianMatrix<T>> {
    if k >= model.user_count() {
        return Err(Error::InvalidUser {
            index: k,
            users: model.user_count(),
        });
    }
    let wk = w.sub(&q.user(k).conjugated_by(model.channel(k)));
    let eig = herm_eig(&wk)?;
    let floor = T::from_f64(1e-9);
    let inv_sqrt = eig.apply_spectral(|l| T::one() / l.max(floor).sqrt());
    let h_eff = inv_sqrt.matrix() * model.channel(k);
    Ok(waterfill_single(&h_eff, model.power(k))?.q)
}

/// One round-robin step: replaces only `Q_k` with its water-filling best
/// response. Monotone ascent on the sum rate.
pub fn iwf_step<T: Scalar>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
    k: usize,
) -> Result<CovarianceProfile<T>> {
    let w = model.aggregate_covariance(q)?;
    let mut out = q.clone();
    out.q[k] = best_response(model, &w, q, k)?;
    Ok(out)
}

/// Simultaneous step: every user best-responds against the same old profile.
/// No monotonicity guarantee; the harness records oscillation when the sum
/// rate decreases.
pub fn swf_step<T: Scalar>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
) -> Result<CovarianceProfile<T>> {
    let w = model.aggregate_covariance(q)?;
    let new_q = (0..model.user_count())
        .map(|k| best_response(model, &w, q, k))
        .collect::<Result<_>>()?;
    Ok(CovarianceProfile::new(new_q))
}

/// Noisy-baseline variants: best responses computed from an estimated
/// precision matrix (the same one fed to the exponential learner), so all
/// algorithms see identical noise realizations.
pub fn iwf_step_with_precision<T: Scalar>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
    k: usize,
    precision: &HermitianMatrix<T>,
) -> Result<CovarianceProfile<T>> {
    let w = aggregate_from_precision(precision)?;
    let mut out = q.clone();
    out.q[k] = best_response(model, &w, q, k)?;
    Ok(out)
}

/// Simultaneous analogue of [`iwf_step_with_precision`].
pub fn swf_step_with_precision<T: Scalar>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
    precision: &HermitianMatrix<T>,
) -> Result<CovarianceProfile<T>> {
    let w = aggregate_from_precision(precision)?;
    let new_q = (0..model.user_count())
        .map(|k| best_response(model, &w, q, k))
        .collect::<Result<_>>()?;
    Ok(CovarianceProfile::new(new_q))
}

/// Implied aggregate covariance `P̂^{-1}` with an eigenvalue floor against
/// indefinite estimates.
fn aggregate_from_precision<T: Scalar>(precision: &HermitianMatrix<T>) -> Result<HermitianMatrix<T>> {
    let eig = herm_eig(precision)?;
    let floor = T::from_f64(1e-9);
    Ok(eig.apply_spectral(|l| T::one() / l.max(floor)))
}
