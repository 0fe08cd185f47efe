//! Randomised structural properties.

use proptest::prelude::*;

use lincons::integrator::conservative_step;
use lincons::linalg::{solve_stages, DenseMatrix};
use lincons::problems::{KeplerProblem, QuadraticOde, RigidBodyProblem};
use lincons::special::{elliptic_k, jacobi_elliptic, solve_kepler_equation};
use lincons::tableau::{dirk_canonical, gauss, is_canonical};

fn skew(entries: &[f64], n: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    let mut it = entries.iter();
    for i in 0..n {
        for j in i + 1..n {
            let v = *it.next().unwrap();
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    m
}

fn quad(q: &DenseMatrix, y: &[f64]) -> f64 {
    y.iter().zip(q.matvec(y)).map(|(a, b)| a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dirk_canonical_is_canonical(w in prop::collection::vec(0.1f64..2.0, 1..7)) {
        let total: f64 = w.iter().sum();
        let b: Vec<f64> = w.iter().map(|v| v / total).collect();
        let t = dirk_canonical(&b).unwrap();
        prop_assert!(is_canonical(&t, 1e-13));
    }

    /// Any frozen skew matrices give a step that keeps ⟨y, Qy⟩.
    #[test]
    fn conservation_for_arbitrary_frozen_skews(
        s in 1usize..4,
        h in 0.01f64..1.0,
        y0 in prop::collection::vec(-1.0f64..1.0, 4),
        entries in prop::collection::vec(-2.0f64..2.0, 18),
        diag in prop::collection::vec(0.5f64..2.0, 4),
    ) {
        let t = gauss(s).unwrap();
        let q = DenseMatrix::diagonal(&diag);
        let shat: Vec<DenseMatrix> = (0..s).map(|i| skew(&entries[6 * i..6 * i + 6], 4)).collect();
        let sol = solve_stages(&q, &y0, h, t.a(), &shat).unwrap();
        let mut y1 = y0.clone();
        for i in 0..s {
            let f = shat[i].matvec(&q.matvec(&sol.stages[i]));
            for (a, b) in y1.iter_mut().zip(f) {
                *a += h * t.b()[i] * b;
            }
        }
        let v0 = quad(&q, &y0);
        prop_assert!((quad(&q, &y1) - v0).abs() <= 1e-11 * (1.0 + v0.abs()));
    }

    #[test]
    fn rigid_body_step_conserves_from_any_predictor(
        y0 in prop::collection::vec(-2.0f64..2.0, 3),
        noise in prop::collection::vec(-0.5f64..0.5, 9),
        h in 0.01f64..0.5,
    ) {
        let p = RigidBodyProblem::standard();
        let t = gauss(3).unwrap();
        let yhat: Vec<Vec<f64>> = (0..3)
            .map(|i| y0.iter().zip(&noise[3 * i..3 * i + 3]).map(|(a, b)| a + b).collect())
            .collect();
        let rec = conservative_step(&p, &t, &y0, h, &yhat).unwrap();
        let v0 = p.invariant(&y0);
        prop_assert!((p.invariant(&rec.y1) - v0).abs() <= 1e-12 * (1.0 + v0.abs()));
    }

    #[test]
    fn jacobi_identities(u in -8.0f64..8.0, m in 0.0f64..0.99) {
        let (sn, cn, dn) = jacobi_elliptic(u, m).unwrap();
        prop_assert!((sn * sn + cn * cn - 1.0).abs() <= 1e-12);
        prop_assert!((dn * dn + m * sn * sn - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn jacobi_periodicity(u in -2.0f64..2.0, m in 0.01f64..0.9) {
        let k = elliptic_k(m).unwrap();
        let (s0, c0, _) = jacobi_elliptic(u, m).unwrap();
        let (s1, c1, _) = jacobi_elliptic(u + 4.0 * k, m).unwrap();
        prop_assert!((s0 - s1).abs() <= 1e-11 && (c0 - c1).abs() <= 1e-11);
    }

    #[test]
    fn kepler_equation_residual(mean in -10.0f64..10.0, e in 0.0f64..0.95) {
        let big_e = solve_kepler_equation(mean, e, 1e-14).unwrap();
        prop_assert!((big_e - e * big_e.sin() - mean).abs() <= 1e-12);
    }

    #[test]
    fn kepler_exact_solution_keeps_angular_momentum(t in 0.0f64..20.0, e in 0.0f64..0.9) {
        let p = KeplerProblem::standard(e).unwrap();
        let y = p.exact_solution(t).unwrap();
        prop_assert!((p.invariant(&y) - (1.0 - e * e).sqrt()).abs() <= 1e-12);
    }
}
