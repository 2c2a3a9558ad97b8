use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::max_abs;
use crate::manifold::SphereTransport;

fn col(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn half_norm_sq(d: usize) -> LeastSquares {
    LeastSquares::new(vec![DMatrix::identity(d, d)], vec![DMatrix::zeros(d, 1)]).unwrap()
}

#[test]
fn least_squares_gradient_at_point() {
    let p = half_norm_sq(2);
    let w = p.manifold().point(col(&[2.0, 0.0])).unwrap();
    assert_eq!(p.full_grad(&w).unwrap().coords(), &col(&[2.0, 0.0]));
}

#[test]
fn least_squares_identity_optimum_and_tau() {
    let p = half_norm_sq(3);
    let opt = p.known_optimum().unwrap();
    assert_eq!(max_abs(opt.point.coords()), 0.0);
    assert!((p.tau().unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn least_squares_gradient_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = synthetic::least_squares(&mut rng, 7, 4, 0.3).unwrap();
    let w = p.manifold().random_point(&mut rng);
    let g = p.full_grad(&w).unwrap();
    // H w - H w* is the gradient since H w* equals the averaged A_i^T c_i.
    let opt = p.known_optimum().unwrap();
    let expect = p.hessian() * (w.coords() - opt.point.coords());
    assert!(max_abs(&(g.coords() - expect)) < 1e-12);
}

#[test]
fn least_squares_is_gradient_dominated() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = synthetic::least_squares(&mut rng, 10, 5, 0.4).unwrap();
    let tau = p.tau().unwrap();
    let fstar = p.known_optimum().unwrap().value;
    for _ in 0..1000 {
        let w = p
            .manifold()
            .point(p.manifold().random_point(&mut rng).coords() * 3.0)
            .unwrap();
        let g = p.full_grad(&w).unwrap();
        let gap = p.cost(&w).unwrap() - fstar;
        assert!(gap <= tau * g.coords().norm_squared() * (1.0 + 1e-12) + 1e-14);
    }
}

#[test]
fn least_squares_rejects_singular_hessian() {
    let a = vec![DMatrix::from_row_slice(1, 2, &[1.0, 0.0])];
    let c = vec![DMatrix::zeros(1, 1)];
    assert!(matches!(LeastSquares::new(a, c), Err(Error::Contract(_))));
}

#[test]
fn batch_gradient_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = synthetic::pca(&mut rng, 6, 4, 0.4, SphereTransport::Parallel).unwrap();
    let w = p.manifold().random_point(&mut rng);
    let full = p.full_grad(&w).unwrap();
    assert!(p.batch_grad(&BatchIndex::full(6), &w).unwrap().bitwise_eq(&full));
    let single = p.batch_grad(&BatchIndex::new(vec![3], 6).unwrap(), &w).unwrap();
    assert!(single.bitwise_eq(&p.component_rgrad(3, &w).unwrap()));

    let mut mean = DMatrix::zeros(4, 1);
    for i in 0..6 {
        mean += p.batch_grad(&BatchIndex::new(vec![i], 6).unwrap(), &w).unwrap().coords();
    }
    mean /= 6.0;
    assert!(max_abs(&(mean - full.coords())) <= 1e-12);
}

#[test]
fn batch_mean_over_all_pairs_equals_full_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = synthetic::karcher(&mut rng, 5, 2, 0.5).unwrap();
    let w = p.manifold().random_point(&mut rng);
    let full = p.full_grad(&w).unwrap();
    let mut mean = DMatrix::zeros(2, 2);
    let mut count = 0.0;
    for i in 0..5 {
        for j in (i + 1)..5 {
            mean += p.batch_grad(&BatchIndex::new(vec![i, j], 5).unwrap(), &w).unwrap().coords();
            count += 1.0;
        }
    }
    mean /= count;
    assert!(max_abs(&(mean - full.coords())) <= 1e-12);
}

#[test]
fn batch_index_validation() {
    assert!(BatchIndex::new(vec![], 3).is_err());
    assert!(BatchIndex::new(vec![1, 1], 3).is_err());
    assert!(BatchIndex::new(vec![3], 3).is_err());
    assert_eq!(BatchIndex::new(vec![2, 0], 3).unwrap().indices(), &[0, 2]);
}

#[test]
fn pca_two_dimensional_example() {
    let data = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
    let p = PcaSphere::new(data).unwrap();
    let opt = p.known_optimum().unwrap();
    assert!((opt.point.coords()[0].abs() - 1.0).abs() < 1e-15);
    assert!((opt.value + 1.0).abs() < 1e-15);
}

#[test]
fn pca_optimum_is_minimal_and_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = synthetic::pca(&mut rng, 40, 6, 0.4, SphereTransport::Parallel).unwrap();
    let opt = p.known_optimum().unwrap();
    assert!((p.cost(&opt.point).unwrap() - opt.value).abs() < 1e-12);
    assert!(p.manifold().norm(&p.full_grad(&opt.point).unwrap()).unwrap() <= 1e-8);
    for _ in 0..1000 {
        let w = p.manifold().random_point(&mut rng);
        assert!(opt.value <= p.cost(&w).unwrap() + 1e-12);
    }
}

#[test]
fn karcher_single_anchor() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let p = KarcherSpd::new(vec![a.clone()]).unwrap();
    let opt = p.known_optimum().unwrap();
    assert!(max_abs(&(opt.point.coords() - a)) < 1e-12);
    assert!(opt.value.abs() < 1e-24);
}

#[test]
fn karcher_scalar_geometric_mean() {
    let (a, b) = (2.0f64, 8.0f64);
    let p = KarcherSpd::new(vec![DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)]).unwrap();
    let opt = p.known_optimum().unwrap();
    assert!((opt.point.coords()[(0, 0)] - (a * b).sqrt()).abs() < 1e-12);
    let g = p.full_grad(&p.manifold().point(DMatrix::from_element(1, 1, 4.0)).unwrap()).unwrap();
    assert!(max_abs(g.coords()) < 1e-14);
}

/// Independent Karcher iteration on eigen-level formulas, not using the manifold layer.
fn reference_karcher(anchors: &[DMatrix<f64>]) -> DMatrix<f64> {
    use crate::linalg::{expm, inv_sqrtm, logm, sqrtm};
    let mut x = anchors.iter().fold(DMatrix::zeros(anchors[0].nrows(), anchors[0].ncols()), |acc, a| acc + a)
        / anchors.len() as f64;
    for _ in 0..200 {
        let xs = sqrtm(&x);
        let xis = inv_sqrtm(&x);
        let mut s = DMatrix::zeros(x.nrows(), x.ncols());
        for a in anchors {
            s += logm(&(&xis * a * &xis));
        }
        s /= anchors.len() as f64;
        x = &xs * expm(&s) * &xs;
    }
    x
}

#[test]
fn karcher_matches_reference_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let anchors = synthetic::karcher_anchors(&mut rng, 6, 3, 0.6);
    let p = KarcherSpd::new(anchors.clone()).unwrap();
    let reference = reference_karcher(&anchors);
    assert!(max_abs(&(p.known_optimum().unwrap().point.coords() - reference)) < 1e-8);
    let g = p.full_grad(&p.known_optimum().unwrap().point).unwrap();
    assert!(p.manifold().norm(&g).unwrap() < 1e-8);
}

#[test]
fn karcher_rejects_non_spd_anchor() {
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(
        KarcherSpd::new(vec![DMatrix::identity(2, 2), bad]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn counted_wrapper_counts_component_gradients() {
    let p = half_norm_sq(2);
    let c = Counted::new(&p);
    let w = c.manifold().point(col(&[1.0, 1.0])).unwrap();
    c.full_grad(&w).unwrap();
    c.cost(&w).unwrap();
    assert_eq!(c.evals(), 1);
}

#[test]
fn matrix_readers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    std::fs::write(&csv, "# samples\n1,2,3\n4,5,6\n").unwrap();
    let m = read_csv_matrix(&csv).unwrap();
    assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));

    let mats = dir.path().join("anchors");
    std::fs::create_dir(&mats).unwrap();
    std::fs::write(mats.join("b.txt"), "3 0\n0 3\n").unwrap();
    std::fs::write(mats.join("a.txt"), "2 1\n1 2\n").unwrap();
    let list = read_matrix_dir(&mats).unwrap();
    assert_eq!(list[0][(0, 1)], 1.0);
    assert_eq!(list[1][(0, 0)], 3.0);

    std::fs::write(&csv, "1,2\n3\n").unwrap();
    assert!(matches!(read_csv_matrix(&csv), Err(Error::Parse(_))));
}
