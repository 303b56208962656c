//! Reference capacity solvers with a computable optimality certificate.
//!
//! The Frank–Wolfe gap `sum_k [P_k lmax(V_k) - tr(Q_k V_k)]` upper-bounds
//! the suboptimality of any feasible profile by concavity, so every solution
//! returned here is certified independently of the inner solver.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hermitian::{herm_eig, HermitianMatrix};
use crate::learners::{mxl_step, optimal_constant_step, MxlState};
use crate::model::{log_det, sample_static_channel, CovarianceProfile, NetworkModel};
use crate::scalar::Scalar;
use crate::waterfilling::iwf_step;

/// A certified solve: feasible profile, its sum rate, the certificate value,
/// and the iterations spent.
#[derive(Debug, Clone)]
pub struct CapacitySolution<T> {
    pub profile: CovarianceProfile<T>,
    pub rate: T,
    pub gap: T,
    pub iterations: u64,
}

/// Solver controls; `max_iters` bounds the inner loop, after which the best
/// iterate is returned with its (possibly unconverged) gap.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    pub tol: T,
    pub max_iters: u64,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::from_f64(1e-8),
            max_iters: 100_000,
        }
    }
}

/// Frank–Wolfe gap from precomputed gradients.
pub fn fw_gap_given<T: Scalar>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
    v: &[HermitianMatrix<T>],
) -> Result<T> {
    let mut gap = T::zero();
    for k in 0..model.user_count() {
        let lmax = herm_eig(&v[k])?.max_value();
        gap += model.power(k) * lmax - q.user(k).trace_product(&v[k]);
    }
    Ok(gap)
}

/// Frank–Wolfe gap `sum_k [P_k lmax(V_k) - tr(Q_k V_k)]`; zero exactly at
/// the optimum of the sum-rate problem.
pub fn fw_gap<T: Scalar>(model: &NetworkModel<T>, q: &CovarianceProfile<T>) -> Result<T> {
    let v = model.gradient(q)?;
    fw_gap_given(model, q, &v)
}

/// Sum rate, gradients, and gap with a single aggregate eigendecomposition.
fn rate_gradient_gap<T: Scalar>(
    model: &NetworkModel<T>,
    q: &CovarianceProfile<T>,
) -> Result<(T, Vec<HermitianMatrix<T>>, T)> {
    let w = model.aggregate_covariance(q)?;
    let eig = herm_eig(&w)?;
    let mut rate = T::zero();
    for &l in &eig.values {
        if l <= T::zero() {
            return Err(Error::Singular(l.to_f64()));
        }
        rate += l.ln();
    }
    let winv = eig.inverse(T::from_f64(1e-14))?;
    let v = model.gradient_given_precision(&winv);
    let gap = fw_gap_given(model, q, &v)?;
    Ok((rate, v, gap))
}

/// Certified capacity solve by noiseless exponential learning with the
/// anytime step `gamma_n = L^{-1} sqrt(2 sum_k log M_k / n)`.
pub fn solve_capacity<T: Scalar>(model: &NetworkModel<T>, tol: T) -> Result<CapacitySolution<T>> {
    solve_capacity_opts(
        model,
        SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

/// [`solve_capacity`] with explicit iteration cap.
pub fn solve_capacity_opts<T: Scalar>(
    model: &NetworkModel<T>,
    opts: SolveOptions<T>,
) -> Result<CapacitySolution<T>> {
    let ms: Vec<usize> = (0..model.user_count())
        .map(|k| model.tx_antennas(k))
        .collect();
    let mut state = MxlState::init(model);

    // Gradient-magnitude pre-pass at the uniform profile fixes L.
    let v0 = model.gradient(state.profile())?;
    let mut l_sq = T::zero();
    for (k, vk) in v0.iter().enumerate() {
        let p = model.power(k);
        l_sq += p * p * vk.frobenius_norm().powi(2);
    }
    let l = l_sq.sqrt().max(T::from_f64(1e-12));

    let mut best: Option<CapacitySolution<T>> = None;
    for n in 1..=opts.max_iters {
        let (rate, v, gap) = rate_gradient_gap(model, state.profile())?;
        if best.as_ref().map_or(true, |b| gap < b.gap) {
            best = Some(CapacitySolution {
                profile: state.profile().clone(),
                rate,
                gap,
                iterations: n - 1,
            });
        }
        if gap <= opts.tol {
            break;
        }
        let gamma = optimal_constant_step(l, &ms, n)?;
        mxl_step(&mut state, &v, gamma)?;
    }
    Ok(best.expect("at least one iterate is always evaluated"))
}

/// Certified capacity solve by round-robin water-filling sweeps, warm-started
/// from `q0`. Used as the per-step oracle under fading, where the previous
/// optimum is an excellent start.
pub fn solve_capacity_iwf<T: Scalar>(
    model: &NetworkModel<T>,
    q0: &CovarianceProfile<T>,
    tol: T,
    max_sweeps: u64,
) -> Result<CapacitySolution<T>> {
    let mut q = q0.clone();
    let mut sweeps = 0;
    loop {
        let (rate, _, gap) = rate_gradient_gap(model, &q)?;
        if gap <= tol || sweeps >= max_sweeps {
            return Ok(CapacitySolution {
                profile: q,
                rate,
                gap,
                iterations: sweeps,
            });
        }
        for k in 0..model.user_count() {
            q = iwf_step(model, &q, k)?;
        }
        sweeps += 1;
    }
}

/// Certified solve to tight tolerances: an exponential-learning phase
/// followed by warm-started water-filling sweeps when the schedule's tail
/// stalls above `tol`. Both phases carry the same certificate.
pub fn solve_capacity_refined<T: Scalar>(
    model: &NetworkModel<T>,
    tol: T,
) -> Result<CapacitySolution<T>> {
    let phase1 = solve_capacity_opts(
        model,
        SolveOptions {
            tol,
            max_iters: 2000,
        },
    )?;
    if phase1.gap <= tol {
        return Ok(phase1);
    }
    let refined = solve_capacity_iwf(model, &phase1.profile, tol, 50_000)?;
    Ok(CapacitySolution {
        iterations: phase1.iterations + refined.iterations,
        ..refined
    })
}

/// Brute-force refined grid search over the diagonalized parameterization of
/// 2x2 covariance matrices; an independent cross-check for small instances.
///
/// Each user's `Q` is `P [x u u† + (1-x) v v†]` with
/// `u = (cos th, e^{i ph} sin th)`, `v = (-e^{-i ph} sin th, cos th)`;
/// the grid over `(x, th, ph)` per user is refined `rounds` times around the
/// incumbent. Requires every user to have exactly two transmit antennas.
pub fn grid_search_capacity_2x2<T: Scalar>(
    model: &NetworkModel<T>,
    levels: usize,
    rounds: usize,
) -> Result<(CovarianceProfile<T>, T)> {
    let users = model.user_count();
    for k in 0..users {
        if model.tx_antennas(k) != 2 {
            return Err(Error::invalid_param(
                "model",
                "grid search needs 2 tx antennas per user",
            ));
        }
    }
    if levels < 3 || users == 0 || users > 2 {
        return Err(Error::invalid_param(
            "levels/users",
            "need levels >= 3 and 1..=2 users",
        ));
    }

    let pi = T::PI();
    let two_pi = T::from_f64(2.0) * pi;
    // Parameter boxes per user: (center, half-width) for x, theta, phi.
    let mut boxes = vec![
        [
            (T::from_f64(0.5), T::from_f64(0.5)),
            (pi / T::from_f64(4.0), pi / T::from_f64(4.0)),
            (pi, pi),
        ];
        users
    ];

    let build_q = |p: T, x: T, th: T, ph: T| -> HermitianMatrix<T> {
        let (c, s) = (th.cos(), th.sin());
        let e = num_complex::Complex::new(ph.cos(), ph.sin());
        let mut m = crate::cmatrix::CMatrix::zeros(2, 2);
        // x uu† + (1-x) vv†, scaled by p.
        let one = T::one();
        m[(0, 0)] = num_complex::Complex::new(p * (x * c * c + (one - x) * s * s), T::zero());
        m[(1, 1)] = num_complex::Complex::new(p * (x * s * s + (one - x) * c * c), T::zero());
        let off = e.conj() * (c * s * (x - (one - x)) * p);
        m[(0, 1)] = off;
        m[(1, 0)] = off.conj();
        HermitianMatrix::symmetrized(&m).expect("finite by construction")
    };

    let mut best_q: Option<CovarianceProfile<T>> = None;
    let mut best_rate = T::neg_infinity();
    let mut best_params = vec![[T::zero(); 3]; users];

    for _ in 0..rounds {
        // Grids for this round.
        let grids: Vec<Vec<Vec<T>>> = boxes
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&(center, half)| {
                        (0..levels)
                            .map(|i| {
                                let frac = T::from_f64(i as f64)
                                    / T::from_f64((levels - 1) as f64);
                                center - half + frac * (half + half)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let clamp = |v: T, lo: T, hi: T| v.max(lo).min(hi);
        let mut indices = vec![[0usize; 3]; users];
        loop {
            // Assemble and evaluate the joint candidate.
            let q = CovarianceProfile::new(
                (0..users)
                    .map(|k| {
                        let x = clamp(grids[k][0][indices[k][0]], T::zero(), T::one());
                        let th = clamp(grids[k][1][indices[k][1]], T::zero(), pi / T::from_f64(2.0));
                        let ph = clamp(grids[k][2][indices[k][2]], T::zero(), two_pi);
                        build_q(model.power(k), x, th, ph)
                    })
                    .collect(),
            );
            let rate = model.sum_rate(&q)?;
            if rate > best_rate {
                best_rate = rate;
                for k in 0..users {
                    best_params[k] = [
                        clamp(grids[k][0][indices[k][0]], T::zero(), T::one()),
                        clamp(grids[k][1][indices[k][1]], T::zero(), pi / T::from_f64(2.0)),
                        clamp(grids[k][2][indices[k][2]], T::zero(), two_pi),
                    ];
                }
                best_q = Some(q);
            }

            // Odometer over users x params.
            let mut carry = true;
            'outer: for k in 0..users {
                for d in 0..3 {
                    indices[k][d] += 1;
                    if indices[k][d] < levels {
                        carry = false;
                        break 'outer;
                    }
                    indices[k][d] = 0;
                }
            }
            if carry {
                break;
            }
        }

        // Shrink boxes around the incumbent.
        let shrink = T::from_f64(2.0) / T::from_f64((levels - 1) as f64);
        for k in 0..users {
            for d in 0..3 {
                let (_, half) = boxes[k][d];
                boxes[k][d] = (best_params[k][d], half * shrink);
            }
        }
    }

    Ok((best_q.expect("grid evaluated"), best_rate))
}

/// Fixed pool of channel draws for the sample-average (ergodic) objective.
#[derive(Debug, Clone)]
pub struct ErgodicPool<T> {
    pub draws: Vec<NetworkModel<T>>,
}

impl<T: Scalar> ErgodicPool<T> {
    /// Draws `size` i.i.d. channel realizations with the template's
    /// topology and per-entry variance `scale^2`.
    pub fn sample<R: Rng + ?Sized>(
        template: &NetworkModel<T>,
        rng: &mut R,
        size: usize,
        scale: T,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::SampleTooSmall { need: 1, got: 0 });
        }
        let draws = (0..size)
            .map(|_| {
                let channels = (0..template.user_count())
                    .map(|k| {
                        sample_static_channel(
                            rng,
                            template.rx_antennas(),
                            template.tx_antennas(k),
                            scale,
                        )
                    })
                    .collect();
                template.with_channels(channels)
            })
            .collect::<Result<_>>()?;
        Ok(Self { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Pool-averaged sum rate.
    pub fn rate(&self, q: &CovarianceProfile<T>) -> Result<T> {
        let mut acc = T::zero();
        for m in &self.draws {
            acc += log_det(&m.aggregate_covariance(q)?)?;
        }
        Ok(acc / T::from_f64(self.draws.len() as f64))
    }

    /// Pool-averaged gradients (the gradient of the pooled objective).
    pub fn gradient(&self, q: &CovarianceProfile<T>) -> Result<Vec<HermitianMatrix<T>>> {
        let template = &self.draws[0];
        let mut acc: Vec<HermitianMatrix<T>> = (0..template.user_count())
            .map(|k| HermitianMatrix::zeros(template.tx_antennas(k)))
            .collect();
        for m in &self.draws {
            for (a, vk) in acc.iter_mut().zip(m.gradient(q)?) {
                *a = a.add(&vk);
            }
        }
        let inv = T::one() / T::from_f64(self.draws.len() as f64);
        Ok(acc.into_iter().map(|a| a.scale(inv)).collect())
    }

    /// Frank–Wolfe gap of the pooled objective.
    pub fn fw_gap(&self, q: &CovarianceProfile<T>) -> Result<T> {
        let v = self.gradient(q)?;
        fw_gap_given(&self.draws[0], q, &v)
    }
}

/// Sample-average solve of the ergodic rate maximization problem: noiseless
/// exponential learning on the pooled gradient, certified by the pooled gap.
pub fn solve_ergodic_capacity<T: Scalar>(
    pool: &ErgodicPool<T>,
    opts: SolveOptions<T>,
) -> Result<CapacitySolution<T>> {
    let template = &pool.draws[0];
    let ms: Vec<usize> = (0..template.user_count())
        .map(|k| template.tx_antennas(k))
        .collect();
    let mut state = MxlState::init(template);

    let v0 = pool.gradient(state.profile())?;
    let mut l_sq = T::zero();
    for (k, vk) in v0.iter().enumerate() {
        let p = template.power(k);
        l_sq += p * p * vk.frobenius_norm().powi(2);
    }
    let l = l_sq.sqrt().max(T::from_f64(1e-12));

    let mut best: Option<CapacitySolution<T>> = None;
    for n in 1..=opts.max_iters {
        let v = pool.gradient(state.profile())?;
        let gap = fw_gap_given(template, state.profile(), &v)?;
        if best.as_ref().map_or(true, |b| gap < b.gap) {
            best = Some(CapacitySolution {
                profile: state.profile().clone(),
                rate: pool.rate(state.profile())?,
                gap,
                iterations: n - 1,
            });
        }
        if gap <= opts.tol {
            break;
        }
        let gamma = optimal_constant_step(l, &ms, n)?;
        mxl_step(&mut state, &v, gamma)?;
    }
    Ok(best.expect("at least one iterate evaluated"))
}
