//! Hermitian matrices, their eigendecomposition, and the entropic machinery
//! (normalized matrix exponential, von Neumann entropy, its conjugate, and
//! the Fenchel coupling between primal and dual variables).

use num_complex::Complex;

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative clamp for near-zero spectra inside `q log q`.
const ENTROPY_CLAMP_REL: f64 = 1e-12;
/// Absolute floor below which an eigenvalue of a unit-trace matrix is rejected.
const ENTROPY_REJECT_ABS: f64 = -1e-10;

/// Square complex matrix with exact conjugate symmetry.
///
/// Construction symmetrizes, so `entry(i, j) == conj(entry(j, i))` holds
/// bit-exactly and the diagonal is real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix<T> {
    m: CMatrix<T>,
}

impl<T: Scalar> HermitianMatrix<T> {
    /// Symmetrizes a square matrix into `(A + A†)/2`.
    ///
    /// Rejects non-square or non-finite input. This is the `hermitize`
    /// operation; already-Hermitian input passes through unchanged.
    pub fn symmetrized(a: &CMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        let n = a.rows();
        let half = T::from_f64(0.5);
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(a[(i, i)].re, T::zero());
            for j in (i + 1)..n {
                let z = (a[(i, j)] + a[(j, i)].conj()) * half;
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Ok(Self { m })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: CMatrix::zeros(n, n),
        }
    }

    /// `s * I`.
    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(s, T::zero());
        }
        Self { m }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        Self {
            m: CMatrix::from_real_diagonal(diag),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        self.m[(i, j)]
    }

    pub fn trace_re(&self) -> T {
        self.m.trace().re
    }

    pub fn frobenius_norm(&self) -> T {
        self.m.frobenius_norm()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            m: self.m.scale_re(s),
        }
    }

    /// `self + s * other`; closed over Hermitian matrices for real `s`.
    pub fn scaled_add(&self, s: T, other: &Self) -> Self {
        Self {
            m: self.m.scaled_add(s, &other.m),
        }
    }

    /// `tr(self * other)`, real for Hermitian factors.
    pub fn trace_product(&self, other: &Self) -> T {
        self.m.trace_product_re(&other.m)
    }

    /// `A * self * A†` for rectangular `A` (r x n), an r x r Hermitian matrix.
    pub fn conjugated_by(&self, a: &CMatrix<T>) -> Self {
        let t = a * &self.m;
        let full = &t * &a.adjoint();
        Self::symmetrized(&full).expect("conjugation preserves squareness and finiteness")
    }

    /// Eigendecomposition with eigenvalues in ascending order.
    pub fn eig(&self) -> Result<EigenDecomposition<T>> {
        herm_eig(self)
    }
}

/// Spectral factorization `A = U diag(values) U†` of a Hermitian matrix.
///
/// Eigenvalues are real and ascending; `vectors` holds the corresponding
/// orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn min_value(&self) -> T {
        self.values[0]
    }

    pub fn max_value(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// Reassembles `U f(diag) U†` for a real spectral function `f`.
    pub fn apply_spectral(&self, mut f: impl FnMut(T) -> T) -> HermitianMatrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        let u = &self.vectors;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = Complex::new(T::zero(), T::zero());
                for k in 0..n {
                    acc += u[(i, k)] * u[(j, k)].conj() * fv[k];
                }
                m[(i, j)] = acc;
                m[(j, i)] = acc.conj();
            }
        }
        for i in 0..n {
            m[(i, i)] = Complex::new(m[(i, i)].re, T::zero());
        }
        HermitianMatrix { m }
    }

    pub fn reconstruct(&self) -> HermitianMatrix<T> {
        self.apply_spectral(|l| l)
    }

    /// Inverse via the spectral factorization; rejects near-singular input.
    pub fn inverse(&self, rel_tol: T) -> Result<HermitianMatrix<T>> {
        let scale = self
            .values
            .iter()
            .fold(T::zero(), |acc, &l| acc.max(l.abs()));
        let floor = scale * rel_tol;
        for &l in &self.values {
            if l.abs() <= floor {
                return Err(Error::Singular(l.to_f64()));
            }
        }
        Ok(self.apply_spectral(|l| T::one() / l))
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Householder reduction to tridiagonal form followed by the implicit QL
/// algorithm; deterministic for a fixed input.
pub fn herm_eig<T: Scalar>(a: &HermitianMatrix<T>) -> Result<EigenDecomposition<T>> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let mut work = a.matrix().clone();
    let mut u = CMatrix::identity(n);

    // Householder reduction: zero out entries below the first subdiagonal,
    // column by column, accumulating the unitary into `u`.
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1; // active length below the diagonal of column k
        let mut xnorm_sq = T::zero();
        for i in (k + 1)..n {
            xnorm_sq += work[(i, k)].norm_sqr();
        }
        let xnorm = xnorm_sq.sqrt();
        if xnorm == T::zero() {
            continue;
        }
        let alpha = work[(k + 1, k)];
        let amag = alpha.norm();
        let phase = if amag > T::zero() {
            alpha / Complex::new(amag, T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        };

        // v = x + phase * |x| * e1, normalized.
        let mut v: Vec<Complex<T>> = (0..m).map(|i| work[(k + 1 + i, k)]).collect();
        v[0] += phase * xnorm;
        let vnorm_sq = v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        if vnorm_sq <= T::epsilon() * T::epsilon() {
            continue;
        }
        let inv = T::one() / vnorm_sq.sqrt();
        for z in &mut v {
            *z = Complex::new(z.re * inv, z.im * inv);
        }

        // Two-sided update of the trailing block B <- B - 2 v w† - 2 w v†
        // with p = B v and w = p - (v† p) v.
        let mut p = vec![Complex::new(T::zero(), T::zero()); m];
        for i in 0..m {
            let mut acc = Complex::new(T::zero(), T::zero());
            for j in 0..m {
                acc += work[(k + 1 + i, k + 1 + j)] * v[j];
            }
            p[i] = acc;
        }
        let mut vp = Complex::new(T::zero(), T::zero());
        for i in 0..m {
            vp += v[i].conj() * p[i];
        }
        let w: Vec<Complex<T>> = (0..m).map(|i| p[i] - v[i] * vp.re).collect();
        let two = T::from_f64(2.0);
        for i in 0..m {
            for j in 0..m {
                let delta = v[i] * w[j].conj() + w[i] * v[j].conj();
                let cur = work[(k + 1 + i, k + 1 + j)];
                work[(k + 1 + i, k + 1 + j)] = cur - delta * two;
            }
        }

        // The reflected column k: H x = -phase * |x| * e1.
        work[(k + 1, k)] = -phase * xnorm;
        work[(k, k + 1)] = (-phase * xnorm).conj();
        for i in (k + 2)..n {
            work[(i, k)] = Complex::new(T::zero(), T::zero());
            work[(k, i)] = Complex::new(T::zero(), T::zero());
        }

        // u <- u * H on the trailing columns.
        for r in 0..n {
            let mut q = Complex::new(T::zero(), T::zero());
            for j in 0..m {
                q += u[(r, k + 1 + j)] * v[j];
            }
            let q2 = q * two;
            for j in 0..m {
                let cur = u[(r, k + 1 + j)];
                u[(r, k + 1 + j)] = cur - q2 * v[j].conj();
            }
        }
    }

    // Phase-rotate columns so the subdiagonal becomes real nonnegative.
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    let mut ph = Complex::new(T::one(), T::zero());
    d[0] = work[(0, 0)].re;
    for j in 0..n.saturating_sub(1) {
        let t = work[(j + 1, j)];
        let tmag = t.norm();
        e[j] = tmag;
        if tmag > T::zero() {
            ph = ph * t / Complex::new(tmag, T::zero());
        }
        for r in 0..n {
            u[(r, j + 1)] = u[(r, j + 1)] * ph;
        }
        d[j + 1] = work[(j + 1, j + 1)].re;
    }

    tql2(&mut d, &mut e, &mut u)?;

    // Ascending eigenvalue order, columns permuted alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.column(src);
        vectors.set_column(dst, &col);
    }

    Ok(EigenDecomposition { values, vectors })
}

/// Implicit QL with Wilkinson shifts on a real symmetric tridiagonal matrix,
/// rotations accumulated into the complex columns of `u`.
fn tql2<T: Scalar>(d: &mut [T], e: &mut [T], u: &mut CMatrix<T>) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let sign = |a: T, b: T| if b >= T::zero() { a.abs() } else { -a.abs() };

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::EigenNoConvergence(l));
            }

            let two = T::from_f64(2.0);
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + sign(r, g));
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut underflow = false;

            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;

                for row in 0..u.rows() {
                    let zi1 = u[(row, i + 1)];
                    let zi = u[(row, i)];
                    u[(row, i + 1)] = Complex::new(
                        s * zi.re + c * zi1.re,
                        s * zi.im + c * zi1.im,
                    );
                    u[(row, i)] = Complex::new(
                        c * zi.re - s * zi1.re,
                        c * zi.im - s * zi1.im,
                    );
                }
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

/// Normalized matrix exponential onto the trace-`p` spectrahedron:
/// `p * exp(Y) / tr[exp(Y)]`.
///
/// The spectrum is shifted by its maximum before exponentiation, so the map
/// is stable for arbitrarily large scores and invariant to `Y -> Y + c I`.
pub fn exp_map<T: Scalar>(y: &HermitianMatrix<T>, p: T) -> Result<HermitianMatrix<T>> {
    if p <= T::zero() {
        return Err(Error::invalid_param("p", "total power must be positive"));
    }
    let eig = herm_eig(y)?;
    let lmax = eig.max_value();
    let weights: Vec<T> = eig.values.iter().map(|&l| (l - lmax).exp()).collect();
    let total: T = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    let mut k = 0;
    let raw = eig.apply_spectral(|_| {
        let w = weights[k];
        k += 1;
        w
    });
    // Normalize by the assembled trace rather than `total` so that
    // tr(Q) = p holds to rounding.
    let tr = raw.trace_re();
    let denom = if tr > T::zero() { tr } else { total };
    Ok(raw.scale(p / denom))
}

/// Von Neumann (negative) entropy `tr[Q log Q]` of a unit-trace PSD matrix,
/// with the `0 log 0 = 0` convention.
pub fn von_neumann_entropy<T: Scalar>(q: &HermitianMatrix<T>) -> Result<T> {
    let eig = herm_eig(q)?;
    let reject = T::from_f64(ENTROPY_REJECT_ABS);
    let clamp = eig.max_value().max(T::zero()) * T::from_f64(ENTROPY_CLAMP_REL);
    let mut h = T::zero();
    for &l in &eig.values {
        if l < reject {
            return Err(Error::NegativeEigenvalue {
                value: l.to_f64(),
                tol: ENTROPY_REJECT_ABS,
            });
        }
        if l > clamp {
            h += l * l.ln();
        }
    }
    Ok(h)
}

/// Convex conjugate of the entropy: `h*(Y) = log tr[exp(Y)]`, computed as
/// `lambda_max + log sum exp(lambda - lambda_max)`.
pub fn entropy_conjugate<T: Scalar>(y: &HermitianMatrix<T>) -> Result<T> {
    let eig = herm_eig(y)?;
    let lmax = eig.max_value();
    let total: T = eig
        .values
        .iter()
        .fold(T::zero(), |acc, &l| acc + (l - lmax).exp());
    Ok(lmax + total.ln())
}

/// Fenchel coupling `F(Q, Y) = h(Q) + h*(Y) - tr[Q Y]` on the unit-trace
/// spectrahedron. Nonnegative, zero exactly when `Q = exp_map(Y, 1)`.
pub fn fenchel_coupling<T: Scalar>(
    q: &HermitianMatrix<T>,
    y: &HermitianMatrix<T>,
) -> Result<T> {
    if q.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: y.dim(),
        });
    }
    Ok(von_neumann_entropy(q)? + entropy_conjugate(y)? - q.trace_product(y))
}

/// `(A + A†)/2` as a free function mirroring the symmetrizing constructor.
pub fn hermitize<T: Scalar>(a: &CMatrix<T>) -> Result<HermitianMatrix<T>> {
    HermitianMatrix::symmetrized(a)
}

/// Modified Gram–Schmidt with a re-orthogonalization pass.
///
/// Column spans are preserved in order; rejects rank-deficient input.
pub fn orthonormalize<T: Scalar>(u: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !u.is_square() {
        return Err(Error::NotSquare {
            rows: u.rows(),
            cols: u.cols(),
        });
    }
    if !u.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = u.rows();
    let mut q = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut v = u.column(j);
        let orig = vec_norm(&v);
        // Two passes of projection: "twice is enough" for working precision.
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let mut coef = Complex::new(T::zero(), T::zero());
                for (a, b) in qi.iter().zip(&v) {
                    coef += a.conj() * *b;
                }
                for (b, a) in v.iter_mut().zip(&qi) {
                    *b -= *a * coef;
                }
            }
        }
        let norm = vec_norm(&v);
        if norm <= orig * T::epsilon().sqrt() || norm == T::zero() {
            return Err(Error::RankDeficient(j));
        }
        let inv = T::one() / norm;
        for z in &mut v {
            *z = Complex::new(z.re * inv, z.im * inv);
        }
        q.set_column(j, &v);
    }
    Ok(q)
}

fn vec_norm<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter()
        .fold(T::zero(), |acc, z| acc + z.norm_sqr())
        .sqrt()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::scalar::standard_complex_normal;

    type H = HermitianMatrix<f64>;

    pub(crate) fn random_hermitian(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> H {
        let g = CMatrix::from_fn(n, n, |_, _| {
            standard_complex_normal::<f64, _>(rng) * Complex::new(scale, 0.0)
        });
        HermitianMatrix::symmetrized(&g).unwrap()
    }

    fn unitarity_defect(u: &CMatrix<f64>) -> f64 {
        let gram = u.adjoint_mul(u);
        let n = u.rows();
        let id = CMatrix::identity(n);
        (&gram - &id).frobenius_norm()
    }

    #[test]
    fn eig_identity() {
        let a = H::scaled_identity(2, 1.0);
        let eig = a.eig().unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0]);
        assert!(unitarity_defect(&eig.vectors) < 1e-14);
    }

    #[test]
    fn eig_diagonal_sorted() {
        let a = H::from_real_diagonal(&[3.0, 1.0]);
        let eig = a.eig().unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 3.0).abs() < 1e-14);
        // Columns are the standard basis up to phase.
        assert!((eig.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((eig.vectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstruction_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [1usize, 2, 3, 4, 8, 16, 24] {
            for _ in 0..8 {
                let a = random_hermitian(n, &mut rng, 1.5);
                let eig = a.eig().unwrap();
                let rec = eig.reconstruct();
                let res = rec.sub(&a).frobenius_norm();
                let norm = a.frobenius_norm().max(1e-30);
                assert!(
                    res <= 1e-10 * norm,
                    "n={n} residual {res:.3e} vs norm {norm:.3e}"
                );
                assert!(
                    unitarity_defect(&eig.vectors) <= 1e-12 * n as f64,
                    "n={n} unitarity defect too large"
                );
                // Eigen-equation per pair: ||A u - lambda u|| small.
                for k in 0..n {
                    let u = eig.vectors.column(k);
                    let au = a.matrix().mul_vec(&u);
                    let mut defect = 0.0;
                    for i in 0..n {
                        defect += (au[i] - u[i] * eig.values[k]).norm_sqr();
                    }
                    assert!(defect.sqrt() <= 1e-10 * norm.max(1.0));
                }
            }
        }
    }

    #[test]
    fn eig_degenerate_spectrum() {
        // Projector with a triple eigenvalue.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = CMatrix::from_fn(4, 1, |_, _| standard_complex_normal::<f64, _>(&mut rng));
        let nrm = g.frobenius_norm();
        let v = g.scale_re(1.0 / nrm);
        let proj = &v * &v.adjoint();
        let a = HermitianMatrix::symmetrized(&proj).unwrap();
        let eig = a.eig().unwrap();
        assert!(eig.values[..3].iter().all(|l| l.abs() < 1e-12));
        assert!((eig.values[3] - 1.0).abs() < 1e-12);
        assert!(unitarity_defect(&eig.vectors) < 1e-12);
    }

    #[test]
    fn eig_rejects_nonfinite() {
        let mut m = CMatrix::<f64>::identity(2);
        m[(0, 1)] = Complex::new(f64::NAN, 0.0);
        assert!(HermitianMatrix::symmetrized(&m).is_err());
    }

    #[test]
    fn exp_map_zero_is_uniform() {
        let q = exp_map(&H::zeros(2), 1.0).unwrap();
        for i in 0..2 {
            assert!((q.entry(i, i).re - 0.5).abs() < 1e-15);
        }
        assert!(q.entry(0, 1).norm() < 1e-15);
    }

    #[test]
    fn exp_map_diagonal_analytic() {
        let y = H::from_real_diagonal(&[2.0f64.ln(), 0.0]);
        let q = exp_map(&y, 1.0).unwrap();
        assert!((q.entry(0, 0).re - 2.0 / 3.0).abs() < 1e-14);
        assert!((q.entry(1, 1).re - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn exp_map_shift_invariance_large() {
        let y1 = H::from_real_diagonal(&[1000.0 + 2.0f64.ln(), 1000.0]);
        let q = exp_map(&y1, 1.0).unwrap();
        assert!((q.entry(0, 0).re - 2.0 / 3.0).abs() < 1e-10);
        assert!((q.entry(1, 1).re - 1.0 / 3.0).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = random_hermitian(3, &mut rng, 2.0);
        let c = 731.0;
        let shifted = y.scaled_add(c, &H::scaled_identity(3, 1.0));
        let a = exp_map(&y, 2.5).unwrap();
        let b = exp_map(&shifted, 2.5).unwrap();
        assert!(a.sub(&b).frobenius_norm() < 1e-10);
    }

    #[test]
    fn exp_map_feasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let scale = 10.0f64.powf(rng.gen_range(-2.0..2.5));
            let y = random_hermitian(n, &mut rng, scale);
            let p = 10.0f64.powf(rng.gen_range(-2.0..2.0));
            let q = exp_map(&y, p).unwrap();
            assert!((q.trace_re() - p).abs() <= 1e-10 * p);
            let eig = q.eig().unwrap();
            assert!(eig.min_value() >= -1e-12 * p);
        }
    }

    #[test]
    fn entropy_uniform_and_pure() {
        let q = H::scaled_identity(4, 0.25);
        let h = von_neumann_entropy(&q).unwrap();
        assert!((h + 4.0f64.ln()).abs() < 1e-12);

        let pure = H::from_real_diagonal(&[1.0, 0.0, 0.0]);
        assert!(von_neumann_entropy(&pure).unwrap().abs() < 1e-12);

        let q2 = H::from_real_diagonal(&[2.0 / 3.0, 1.0 / 3.0]);
        let expect = (2.0 / 3.0f64) * (2.0 / 3.0f64).ln() + (1.0 / 3.0) * (1.0 / 3.0f64).ln();
        assert!((von_neumann_entropy(&q2).unwrap() - expect).abs() < 1e-12);
        assert!((expect + 0.6365).abs() < 1e-4);
    }

    #[test]
    fn entropy_rejects_negative() {
        let q = H::from_real_diagonal(&[1.0, -1e-6]);
        assert!(von_neumann_entropy(&q).is_err());
        // Tiny negatives clamp instead.
        let q = H::from_real_diagonal(&[1.0, -1e-12]);
        assert!(von_neumann_entropy(&q).is_ok());
    }

    #[test]
    fn conjugate_values() {
        assert!((entropy_conjugate(&H::zeros(4)).unwrap() - 4.0f64.ln()).abs() < 1e-14);
        let y = H::from_real_diagonal(&[2.0f64.ln(), 0.0]);
        assert!((entropy_conjugate(&y).unwrap() - 3.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn conjugate_gradient_matches_finite_differences() {
        // d h*(Y)/dY = exp_map(Y, 1), probed along random Hermitian directions.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.gen_range(2..=4);
            let y = random_hermitian(n, &mut rng, 1.0);
            let dir = random_hermitian(n, &mut rng, 1.0);
            let grad = exp_map(&y, 1.0).unwrap();
            let analytic = grad.trace_product(&dir);
            let t = 1e-5;
            let fp = entropy_conjugate(&y.scaled_add(t, &dir)).unwrap();
            let fm = entropy_conjugate(&y.scaled_add(-t, &dir)).unwrap();
            let numeric = (fp - fm) / (2.0 * t);
            let rel = (analytic - numeric).abs() / analytic.abs().max(1e-12);
            assert!(rel < 1e-6, "rel err {rel:.3e}");
        }
    }

    #[test]
    fn fenchel_zero_at_exp_map_nonnegative_elsewhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.gen_range(2..=5);
            let y = random_hermitian(n, &mut rng, 1.5);
            let q = exp_map(&y, 1.0).unwrap();
            let f = fenchel_coupling(&q, &y).unwrap();
            assert!(f.abs() < 1e-10, "coupling at matched pair: {f:.3e}");

            let other = exp_map(&random_hermitian(n, &mut rng, 1.5), 1.0).unwrap();
            let f2 = fenchel_coupling(&other, &y).unwrap();
            assert!(f2 >= -1e-10);
        }
    }

    #[test]
    fn fenchel_against_zero_score_bounded_by_log_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let n = rng.gen_range(2..=5);
            let q = exp_map(&random_hermitian(n, &mut rng, 2.0), 1.0).unwrap();
            let f = fenchel_coupling(&q, &H::zeros(n)).unwrap();
            assert!(f <= (n as f64).ln() + 1e-10);
            assert!(f >= -1e-10);
        }
    }

    #[test]
    fn entropy_plus_log_dim_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let q = exp_map(&random_hermitian(n, &mut rng, 3.0), 1.0).unwrap();
            let h = von_neumann_entropy(&q).unwrap();
            assert!(h + (n as f64).ln() >= -1e-10);
            assert!(h <= 1e-10);
        }
    }

    #[test]
    fn hermitize_cases() {
        let a = CMatrix::<f64>::from_rows(vec![
            vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)],
            vec![Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)],
        ])
        .unwrap();
        let h = hermitize(&a).unwrap();
        assert!((h.entry(0, 1).re - 0.5).abs() < 1e-15);
        assert!((h.entry(1, 0).re - 0.5).abs() < 1e-15);

        // Skew-Hermitian input cancels.
        let s = CMatrix::from_rows(vec![
            vec![Complex::new(0.0, 1.0), Complex::new(2.0, 3.0)],
            vec![Complex::new(-2.0, 3.0), Complex::new(0.0, -2.0)],
        ])
        .unwrap();
        assert!(hermitize(&s).unwrap().frobenius_norm() < 1e-15);

        // Hermitian input is a fixed point.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h0 = random_hermitian(3, &mut rng, 1.0);
        let h1 = hermitize(h0.matrix()).unwrap();
        assert_eq!(h0, h1);

        let rect = CMatrix::<f64>::zeros(2, 3);
        assert!(hermitize(&rect).is_err());
    }

    #[test]
    fn orthonormalize_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        // Unitary input is (nearly) fixed.
        let h = random_hermitian(4, &mut rng, 1.0);
        let u = h.eig().unwrap().vectors;
        let q = orthonormalize(&u).unwrap();
        assert!((&q - &u).frobenius_norm() < 1e-12);

        // Small perturbation stays near the input, exactly unitary.
        let mut pert = u.clone();
        for i in 0..4 {
            for j in 0..4 {
                pert[(i, j)] += standard_complex_normal::<f64, _>(&mut rng) * Complex::new(1e-4, 0.0);
            }
        }
        let q = orthonormalize(&pert).unwrap();
        let gram = q.adjoint_mul(&q);
        let defect = (&gram - &CMatrix::identity(4)).frobenius_norm();
        assert!(defect <= 1e-12 * 4.0, "defect {defect:.3e}");
        assert!((&q - &pert).frobenius_norm() < 1e-2);

        // Scaled columns normalize to the standard basis.
        let m = CMatrix::from_rows(vec![
            vec![Complex::new(2.0, 0.0), Complex::new(0.0, 0.0)],
            vec![Complex::new(0.0, 0.0), Complex::new(3.0, 0.0)],
        ])
        .unwrap();
        let q = orthonormalize(&m).unwrap();
        assert!((&q - &CMatrix::identity(2)).frobenius_norm() < 1e-15);

        // Rank-deficient input is rejected.
        let bad = CMatrix::from_rows(vec![
            vec![Complex::new(1.0, 0.0), Complex::new(2.0, 0.0)],
            vec![Complex::new(1.0, 0.0), Complex::new(2.0, 0.0)],
        ])
        .unwrap();
        assert!(orthonormalize(&bad).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let y = HermitianMatrix::<f32>::from_real_diagonal(&[2.0f32.ln(), 0.0]);
        let q = exp_map(&y, 1.0f32).unwrap();
        assert!((q.entry(0, 0).re - 2.0 / 3.0).abs() < 1e-5);
    }
}
