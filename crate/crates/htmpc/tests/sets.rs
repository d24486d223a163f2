mod common;

use htmpc::linalg::solve_dlyap;
use htmpc::sets::{
    minkowski_sum, mrpi_outer, pontryagin_diff, AxisBox, Ball, BoundarySample, BoxBound, Contains,
    Ellipsoid, Zonotope,
};
use htmpc::{Error, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bx(lo: &[f64], hi: &[f64]) -> AxisBox<f64> {
    AxisBox::new(lo.to_vec(), hi.to_vec()).unwrap()
}

#[test]
fn minkowski_examples() {
    assert_eq!(
        minkowski_sum(&bx(&[-1.0], &[1.0]), &bx(&[-2.0], &[2.0])).unwrap(),
        bx(&[-3.0], &[3.0])
    );
    let unit = Ball::origin(1, 1.0).unwrap();
    assert_eq!(
        minkowski_sum(&bx(&[0.0], &[0.0]), &unit).unwrap(),
        bx(&[-1.0], &[1.0])
    );
    let s = minkowski_sum(
        &bx(&[-1.0, 0.0], &[2.0, 1.0]),
        &bx(&[-1.0, -1.0], &[1.0, 1.0]),
    )
    .unwrap();
    assert_eq!(s, bx(&[-2.0, -1.0], &[3.0, 2.0]));
    assert!(minkowski_sum(&bx(&[0.0], &[1.0]), &Ball::origin(2, 1.0).unwrap()).is_err());
}

#[test]
fn pontryagin_examples() {
    let a = bx(&[-2.0], &[2.0]);
    assert_eq!(
        pontryagin_diff(&a, &bx(&[-1.0], &[1.0])).unwrap(),
        bx(&[-1.0], &[1.0])
    );
    assert_eq!(
        pontryagin_diff(&a, &Ball::origin(1, 1.0).unwrap()).unwrap(),
        bx(&[-1.0], &[1.0])
    );
    let err = pontryagin_diff(&bx(&[-1.0], &[1.0]), &a).unwrap_err();
    assert!(matches!(err, Error::EmptySet(_)));
}

#[test]
fn mrpi_examples() {
    let z = mrpi_outer(&Matrix::scalar(0.0), &Ball::origin(1, 1.0).unwrap(), 0.01).unwrap();
    assert_eq!(z.hull, bx(&[-1.0], &[1.0]));

    let z = mrpi_outer(&Matrix::scalar(0.5), &bx(&[-1.0], &[1.0]), 0.01).unwrap();
    let r = z.hull.radii()[0];
    assert!((2.0..=2.02).contains(&r), "radius {r}");
    assert!(z.box_invariant);

    let f = Matrix::from_diag(&[0.5, 0.2]);
    let z = mrpi_outer(&f, &bx(&[-1.0, -1.0], &[1.0, 1.0]), 0.01).unwrap();
    let r = z.hull.radii();
    assert!(
        (2.0..=2.02).contains(&r[0]) && (1.25..=1.2625).contains(&r[1]),
        "radii {r:?}"
    );

    let zero = mrpi_outer(&Matrix::scalar(0.9), &Ball::origin(1, 0.0).unwrap(), 0.01).unwrap();
    assert!(zero.set.is_point());

    assert!(matches!(
        mrpi_outer(&Matrix::scalar(1.0), &bx(&[-1.0], &[1.0]), 0.01),
        Err(Error::NotSchur { .. })
    ));
}

#[test]
fn contains_examples() {
    assert!(bx(&[-1.0], &[1.0]).contains(&[0.0]));
    assert!(!Ball::origin(2, 1.0).unwrap().contains(&[1.0, 1.0]));
    let e = Ellipsoid::new(vec![0.0, 0.0], Matrix::identity(2), 1.0).unwrap();
    assert!(e.contains(&[0.6, 0.6]));
    assert!(!e.contains(&[0.8, 0.8]));
    assert!(bx(&[-1.0], &[1.0]).contains(&[1.0 + 1e-12]));
}

#[test]
fn zonotope_membership_and_support() {
    let g = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
    let z = Zonotope::new(vec![0.0, 0.0], g).unwrap();
    assert!(z.contains(&[2.0, 1.0]));
    assert!(z.contains(&[0.0, 1.0]));
    assert!(!z.contains(&[2.0, -1.0]));
    assert!((z.support(&[1.0, 0.0]) - 2.0).abs() < 1e-15);
    assert_eq!(z.bounding_box(), bx(&[-2.0, -1.0], &[2.0, 1.0]));
    let flat = Zonotope::new(vec![0.0, 0.0], Matrix::from_rows(&[[1.0], [0.0]]).unwrap()).unwrap();
    assert!(!flat.contains(&[0.0, 0.5]));
}

#[test]
fn fast_membership_agrees_with_gauge_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.gen_range(1..4);
        let g = rng.gen_range(1..7);
        let z = Zonotope::new(vec![0.0; n], common::random_matrix(&mut rng, n, g, 1.0)).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let by_lp = matches!(z.gauge(&x).unwrap(), Some(t) if t <= 1.0 + 1e-9);
        assert_eq!(z.contains(&x), by_lp, "{z:?} {x:?}");
    }
}

fn check_invariance(f: &Matrix, w: &AxisBox<f64>, samples: usize) -> bool {
    let approx = mrpi_outer(f, w, 0.01).unwrap();
    let tube = approx.tube_set();
    let mut points = tube.boundary_samples(samples);
    points.push(tube.center.clone());
    points.iter().all(|z| {
        let fz = f.mul_vec(z);
        w.vertices().iter().all(|wv| {
            let next: Vec<f64> = fz.iter().zip(wv).map(|(a, b)| a + b).collect();
            tube.contains(&next)
        })
    })
}

#[test]
fn mrpi_is_invariant_on_random_schur_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let n = 1 + trial % 4;
        let f = common::random_schur(&mut rng, n, 0.9);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let w = AxisBox::from_radii(&r).unwrap();
        assert!(check_invariance(&f, &w, 100), "trial {trial}");
    }
}

#[test]
fn dlyap_residual_on_random_schur() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(1..6);
        let f = common::random_schur(&mut rng, n, 0.95);
        let m = common::random_matrix(&mut rng, n, n, 1.0);
        let q = m.tr_matmul(&m);
        let p = solve_dlyap(&f, &q).unwrap();
        let res = &(&f.tr_matmul(&p).matmul(&f) - &p) + &q;
        assert!(res.max_abs() <= 1e-9 * (1.0 + q.max_abs()));
    }
}

fn arb_box(n: usize) -> impl Strategy<Value = AxisBox<f64>> {
    prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), n).prop_map(|v| {
        AxisBox::symmetric(
            &v.iter().map(|p| p.0).collect::<Vec<_>>(),
            &v.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn diff_then_sum_stays_inside(a in arb_box(3), r in prop::collection::vec(0.0f64..1.0, 3)) {
        let b = AxisBox::from_radii(&r).unwrap();
        if let Ok(d) = pontryagin_diff(&a, &b) {
            let back = minkowski_sum(&d, &b).unwrap();
            prop_assert!(a.includes(&back));
        }
    }

    #[test]
    fn membership_monotone_under_sum(a in arb_box(2), r in 0.0f64..2.0, t in prop::collection::vec(0.0f64..1.0, 2)) {
        let x: Vec<f64> = (0..2).map(|i| a.lower[i] + t[i] * (a.upper[i] - a.lower[i])).collect();
        prop_assert!(a.contains(&x));
        let s = minkowski_sum(&a, &Ball::origin(2, r).unwrap()).unwrap();
        prop_assert!(s.contains(&x));
    }

    #[test]
    fn mrpi_invariant(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = common::random_schur(&mut rng, n, 0.9);
        let w = AxisBox::from_radii(&vec![1.0; n]).unwrap();
        prop_assert!(check_invariance(&f, &w, 60));
    }
}
