use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use tbcluster::encoding::BinLayout;
use tbcluster::modes::{ModeGrid, TimeFreqMode};
use tbcluster::source::{generate_pair_state, is_cluster_state, ExcitationTrain};

const BINS: [i64; 4] = [0, 1, 3, 4];

/// Four-qubit amplitudes over (T_s, T_i, t_s, t_i) of the bin-correlated
/// state with doubled pump phases.
fn qubit_oracle(phases: &[f64; 4]) -> [C64; 16] {
    let mut v = [C64::default(); 16];
    for (k, p) in phases.iter().enumerate() {
        let (big, small) = (k >> 1, k & 1);
        let idx = (big << 3) | (big << 2) | (small << 1) | small;
        v[idx] = C64::from_polar(0.5, 2.0 * p);
    }
    v
}

fn cluster() -> [C64; 16] {
    let mut v = [C64::default(); 16];
    for (idx, s) in [(0b0000, 1.0), (0b0011, 1.0), (0b1100, 1.0), (0b1111, -1.0)] {
        v[idx] = C64::new(0.5 * s, 0.0);
    }
    v
}

fn fidelity(a: &[C64; 16], b: &[C64; 16]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

fn check(phases: [f64; 4]) -> (f64, f64) {
    let grid = ModeGrid::default();
    let train = ExcitationTrain::new(vec![0.0, 100.0, 300.0, 400.0], phases.to_vec()).unwrap();
    let st = generate_pair_state(&train, &BinLayout::default(), &grid).unwrap();
    let oracle = qubit_oracle(&phases);
    for (k, &t) in BINS.iter().enumerate() {
        let (big, small) = (k >> 1, k & 1);
        let idx = (big << 3) | (big << 2) | (small << 1) | small;
        let m = TimeFreqMode::new(t, 0);
        assert!((st.amplitude(m, m) - oracle[idx]).norm() < 1e-12);
    }
    assert!((st.total_probability() - 1.0).abs() < 1e-12);
    let lib = is_cluster_state(&st, &BinLayout::default()).unwrap().fidelity;
    (lib, fidelity(&cluster(), &oracle))
}

#[test]
fn default_phases_give_the_cluster() {
    let (lib, oracle) = check([0.0, 0.0, 0.0, FRAC_PI_2]);
    assert!((lib - 1.0).abs() < 1e-12 && (oracle - 1.0).abs() < 1e-12);
}

#[test]
fn zero_phases_overlap_a_quarter() {
    let (lib, oracle) = check([0.0; 4]);
    assert!((oracle - 0.25).abs() < 1e-12);
    assert!((lib - oracle).abs() < 1e-12);
}

#[test]
fn misplaced_half_pi_is_orthogonal() {
    let (lib, oracle) = check([0.0, FRAC_PI_2, 0.0, 0.0]);
    assert!(oracle.abs() < 1e-12);
    assert!(lib.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fidelity_matches_oracle(p in prop::array::uniform4(0.0f64..2.0 * PI)) {
        let (lib, oracle) = check(p);
        prop_assert!((lib - oracle).abs() < 1e-12);
    }

    #[test]
    fn a_pi_on_the_pump_is_invisible(p in prop::array::uniform4(0.0f64..2.0 * PI), k in 0usize..4) {
        let mut q = p;
        q[k] += PI;
        prop_assert!((check(p).0 - check(q).0).abs() < 1e-12);
    }
}
