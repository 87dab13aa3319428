use num_complex::Complex64 as C64;
use proptest::prelude::*;
use tbcluster::cpm::{cpm_mode_map, efficiency, solve_balanced_depth, CpmSettings};
use tbcluster::modes::{JointTwoPhotonState, ModeGrid, Photon, TimeFreqMode};

mod common;
use common::dense::bessel_series;

#[test]
fn shift_law_at_both_tones() {
    let t = CpmSettings::new(1.0, 1.25, 0.0).delta_t_ps();
    let big = CpmSettings::new(1.0, 3.75, 0.0).delta_t_ps();
    assert!((t - 100.17).abs() < 0.01, "{t}");
    assert!((big - 300.5).abs() < 0.05, "{big}");
    let grid = ModeGrid::default();
    assert_eq!(CpmSettings::new(1.0, 1.25, 0.0).grid_steps(&grid).unwrap(), (1, 1));
    assert_eq!(CpmSettings::new(1.0, 3.75, 0.0).grid_steps(&grid).unwrap(), (3, 3));
}

#[test]
fn balanced_root_against_series_bisection() {
    let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bessel_series(0, mid) > bessel_series(1, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = solve_balanced_depth();
    assert!((g - lo).abs() < 1e-12, "{g} vs {lo}");
    assert!((g - 1.434_695_7).abs() < 1e-7);
    assert!((efficiency(g) - 0.600_491).abs() < 1e-6);
}

fn single(t: i64) -> JointTwoPhotonState {
    let m = TimeFreqMode::new(t, 0);
    JointTwoPhotonState::from_amplitudes(ModeGrid::default(), [((m, m), C64::new(1.0, 0.0))])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn depths_add_at_equal_phase(g1 in 0.0f64..1.2, g2 in 0.0f64..1.2, alpha in 0.0f64..std::f64::consts::TAU) {
        let grid = ModeGrid::default();
        let a = cpm_mode_map(&CpmSettings::new(g1, 1.25, alpha), &grid).unwrap();
        let b = cpm_mode_map(&CpmSettings::new(g2, 1.25, alpha), &grid).unwrap();
        let ab = cpm_mode_map(&CpmSettings::new(g1 + g2, 1.25, alpha), &grid).unwrap();
        let st = single(0);
        let two = st.apply_single_photon_map(Photon::Signal, &a).unwrap().apply_single_photon_map(Photon::Signal, &b).unwrap();
        let one = st.apply_single_photon_map(Photon::Signal, &ab).unwrap();
        let diff = two.superpose(C64::new(1.0, 0.0), &one, C64::new(-1.0, 0.0));
        // both sides drop orders beyond the truncation, worth about J_9(2)² each
        prop_assert!(diff.total_probability() < 1e-9);
    }

    #[test]
    fn probability_is_kept(g in 0.0f64..2.5, alpha in 0.0f64..std::f64::consts::TAU, tone in prop::sample::select(vec![1.25, 3.75])) {
        let map = cpm_mode_map(&CpmSettings::new(g, tone, alpha), &ModeGrid::default()).unwrap();
        let out = single(2).apply_single_photon_map(Photon::Idler, &map).unwrap();
        prop_assert!((out.total_probability() - 1.0).abs() < 1e-9);
        for (_, i, a) in out.iter() {
            let m = (i.t_index - 2) / map.dt;
            prop_assert_eq!(i.f_index, m * map.df);
            prop_assert!((a.norm() - bessel_series(m, g).abs()).abs() < 1e-12);
        }
    }
}
