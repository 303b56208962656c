//! Property-based invariants for the numeric kernels.

use num_complex::Complex;
use proptest::prelude::*;

use mxl::hermitian::{exp_map, fenchel_coupling, hermitize, orthonormalize, HermitianMatrix};
use mxl::waterfilling::waterfill_single;
use mxl::CMatrix;

/// Strategy: square complex matrix with entries bounded by `mag`.
fn complex_matrix(dim: usize, mag: f64) -> impl Strategy<Value = CMatrix<f64>> {
    prop::collection::vec((-mag..mag, -mag..mag), dim * dim).prop_map(move |vals| {
        CMatrix::from_fn(dim, dim, |i, j| {
            let (re, im) = vals[i * dim + j];
            Complex::new(re, im)
        })
    })
}

fn hermitian(dim: usize, mag: f64) -> impl Strategy<Value = HermitianMatrix<f64>> {
    complex_matrix(dim, mag).prop_map(|m| hermitize(&m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_map_feasible_for_any_score(
        dim in 1usize..=5,
        mag in 0.01f64..100.0,
        p in 0.01f64..100.0,
        seedvals in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 25),
    ) {
        let y = hermitize(&CMatrix::from_fn(dim, dim, |i, j| {
            let (re, im) = seedvals[i * 5 + j];
            Complex::new(re * mag, im * mag)
        })).unwrap();
        let q = exp_map(&y, p).unwrap();
        prop_assert!((q.trace_re() - p).abs() <= 1e-10 * p);
        prop_assert!(q.eig().unwrap().min_value() >= -1e-12 * p);
    }

    #[test]
    fn exp_map_shift_invariant(
        y in hermitian(3, 2.0),
        c in -1e3f64..1e3,
    ) {
        let shifted = y.scaled_add(c, &HermitianMatrix::scaled_identity(3, 1.0));
        let a = exp_map(&y, 1.0).unwrap();
        let b = exp_map(&shifted, 1.0).unwrap();
        prop_assert!(a.sub(&b).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn hermitize_is_idempotent_and_exactly_symmetric(m in complex_matrix(4, 10.0)) {
        let h = hermitize(&m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(h.entry(i, j), h.entry(j, i).conj());
            }
            prop_assert_eq!(h.entry(i, i).im, 0.0);
        }
        let again = hermitize(h.matrix()).unwrap();
        prop_assert_eq!(h, again);
    }

    #[test]
    fn fenchel_coupling_nonnegative(
        y in hermitian(3, 3.0),
        z in hermitian(3, 3.0),
    ) {
        let q = exp_map(&z, 1.0).unwrap();
        let f = fenchel_coupling(&q, &y).unwrap();
        prop_assert!(f >= -1e-10, "coupling {f}");
    }

    #[test]
    fn orthonormalize_output_is_unitary(m in complex_matrix(4, 2.0)) {
        // Skip (rare) near-singular draws; rank deficiency is a unit test.
        if let Ok(q) = orthonormalize(&m) {
            let gram = q.adjoint_mul(&q);
            let defect = (&gram - &CMatrix::identity(4)).frobenius_norm();
            prop_assert!(defect <= 4.0 * 1e-12, "defect {defect:.3e}");
        }
    }

    #[test]
    fn waterfill_allocation_is_feasible_and_kkt(
        m in complex_matrix(3, 2.0),
        p in 0.05f64..20.0,
    ) {
        let wf = waterfill_single(&m, p).unwrap();
        prop_assert!((wf.q.trace_re() - p).abs() <= 1e-10 * p.max(1.0));
        prop_assert!(wf.q.eig().unwrap().min_value() >= -1e-10 * p);

        let gram = hermitize(&m.adjoint_mul(&m)).unwrap();
        let eig = gram.eig().unwrap();
        for (idx, &g) in eig.values.iter().enumerate() {
            if g <= 1e-12 {
                continue;
            }
            let u = eig.vectors.column(idx);
            let qu = wf.q.matrix().mul_vec(&u);
            let mut alloc = 0.0;
            for (a, b) in u.iter().zip(&qu) {
                alloc += (a.conj() * b).re;
            }
            if alloc > 1e-9 {
                prop_assert!((wf.water_level - 1.0 / g - alloc).abs() <= 1e-9);
            } else {
                prop_assert!(wf.water_level <= 1.0 / g + 1e-9);
            }
        }
    }
}
