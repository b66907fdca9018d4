use proptest::prelude::*;
use spatialprobe::interventions::{avg_pool_compress, multilayer_concat, normalize_vision, NormCalibration};
use spatialprobe::tensor::{cosine, rms};
use spatialprobe::{Matrix, TokenPartition};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-20.0..20.0f64, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn normalize_keeps_direction_and_hits_target(m in matrix(9, 6), target in 0.1..3.0f64) {
        let p = TokenPartition::contiguous(2, 5, 2);
        let cal = NormCalibration::fixed(target).unwrap();
        let out = normalize_vision(&m, &p, &cal).unwrap();
        for &i in p.vision() {
            prop_assume!(rms(m.row(i)) > 1e-6);
            prop_assert!((cosine(m.row(i), out.row(i)) - 1.0).abs() < 1e-12);
            prop_assert!((rms(out.row(i)) - target).abs() < 1e-12);
        }
        for i in p.system().iter().chain(p.text()) {
            prop_assert_eq!(m.row(*i), out.row(*i));
        }
        let twice = normalize_vision(&out, &p, &cal).unwrap();
        for (x, y) in twice.as_slice().iter().zip(out.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_keeps_the_mean_when_windows_tile(side in 1usize..5, k in 1usize..4, m in matrix(144, 3)) {
        // side x side output windows of k x k over a (side k)^2 grid
        let n = side * k;
        let tokens = Matrix::from_vec(n * n, 3, m.as_slice()[..n * n * 3].to_vec()).unwrap();
        let pooled = avg_pool_compress(&tokens, side * side).unwrap();
        let (a, b) = (tokens.mean_row().unwrap(), pooled.mean_row().unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn multilayer_is_linear(a0 in matrix(4, 3), a1 in matrix(4, 2), b0 in matrix(4, 3), b1 in matrix(4, 2), w in matrix(5, 4)) {
        let f = |x: &Matrix, y: &Matrix| multilayer_concat(&[x.clone(), y.clone()], &[3, 7], &w).unwrap();
        let sum = f(&a0.add(&b0).unwrap(), &a1.add(&b1).unwrap());
        let parts = f(&a0, &a1).add(&f(&b0, &b1)).unwrap();
        for (x, y) in sum.as_slice().iter().zip(parts.as_slice()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}
