mod common;

use common::dense::{bessel_series, run_case};
use tbcluster::bessel::bessel_j;

#[test]
fn sparse_matches_dense_reference() {
    let worst = (0..100u64).map(run_case).fold(0.0, f64::max);
    println!("worst deviation {worst:e}");
    assert!(worst <= 1e-10);
}

#[test]
fn bessel_matches_series() {
    for m in -8..=8 {
        for k in 0..50 {
            let x = 0.06 * k as f64;
            assert!((bessel_j(m, x) - bessel_series(m, x)).abs() < 1e-13, "J_{m}({x})");
        }
    }
}
