//! Density-matrix reference for the four-qubit witness.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Cluster state over (T_s, T_i, t_s, t_i), first qubit most significant.
pub fn cluster_rho() -> DMatrix<C64> {
    let mut v = DMatrix::<C64>::zeros(16, 1);
    for (idx, s) in [(0b0000, 1.0), (0b0011, 1.0), (0b1100, 1.0), (0b1111, -1.0)] {
        v[(idx, 0)] = C64::new(0.5 * s, 0.0);
    }
    &v * v.adjoint()
}

pub fn noisy_rho(p: f64) -> DMatrix<C64> {
    cluster_rho() * C64::new(1.0 - p, 0.0) + DMatrix::identity(16, 16) * C64::new(p / 16.0, 0.0)
}

fn pauli(c: char) -> DMatrix<C64> {
    let (o, z) = (C64::new(1.0, 0.0), C64::default());
    match c {
        '1' => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        'Z' => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        'X' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        _ => panic!("bad letter {c}"),
    }
}

pub fn operator(term: &str) -> DMatrix<C64> {
    term.chars().map(pauli).reduce(|a, b| a.kronecker(&b)).unwrap()
}

pub fn expectation(rho: &DMatrix<C64>, term: &str) -> f64 {
    (rho * operator(term)).trace().re
}

pub fn witness(rho: &DMatrix<C64>) -> f64 {
    let terms = ["11ZZ", "ZZ11", "1ZXX", "Z1XX", "XX1Z", "XXZ1"];
    2.0 - 0.5 * terms.iter().map(|t| expectation(rho, t)).sum::<f64>()
}

/// Outcome distribution of `rho` measured qubit-wise in `basis` (Z or X per qubit).
pub fn outcome_distribution(rho: &DMatrix<C64>, basis: &str) -> Vec<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let had = DMatrix::from_row_slice(2, 2, &[C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)]);
    let u = basis
        .chars()
        .map(|c| if c == 'X' { had.clone() } else { pauli('1') })
        .reduce(|a, b| a.kronecker(&b))
        .unwrap();
    let r = &u * rho * u.adjoint();
    (0..16).map(|k| r[(k, k)].re).collect()
}
