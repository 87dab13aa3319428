//! Dense-matrix reference for the sparse two-photon state on a 4-bin ×
//! 9-frequency single-photon subspace.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbcluster::cpm::{cpm_mode_map, CpmSettings};
use tbcluster::modes::{JointTwoPhotonState, ModeGrid, Photon, TimeFreqMode};

pub const NT: i64 = 4;
pub const NF: i64 = 9;
pub const DIM: usize = (NT * NF) as usize;

/// Index of a mode inside a `t_range × f_range` box.
fn boxed(m: TimeFreqMode, t0: i64, nt: i64, f0: i64, nf: i64) -> Option<usize> {
    let (t, f) = (m.t_index - t0, m.f_index - f0);
    (0..nt).contains(&t).then_some(())?;
    (0..nf).contains(&f).then_some((t * nf + f) as usize)
}

pub fn sub_index(m: TimeFreqMode) -> Option<usize> {
    boxed(m, 0, NT, -(NF / 2), NF)
}

pub fn sub_mode(k: usize) -> TimeFreqMode {
    let k = k as i64;
    TimeFreqMode::new(k / NF, k % NF - NF / 2)
}

/// Signal modes on rows, idler modes on columns.
pub fn to_dense(state: &JointTwoPhotonState) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(DIM, DIM);
    for (s, i, a) in state.iter() {
        let (r, c) = (sub_index(s).expect("outside subspace"), sub_index(i).expect("outside subspace"));
        m[(r, c)] = a;
    }
    m
}

fn cplx(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_state(rng: &mut ChaCha8Rng, grid: ModeGrid) -> JointTwoPhotonState {
    let n = rng.random_range(1..60);
    let entries: Vec<_> = (0..n)
        .map(|_| {
            let s = sub_mode(rng.random_range(0..DIM));
            let i = sub_mode(rng.random_range(0..DIM));
            ((s, i), cplx(rng))
        })
        .collect();
    JointTwoPhotonState::from_amplitudes(grid, entries)
}

/// Random single-photon map on the subspace with every column of norm ≤ 1.
pub fn random_map(rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let mut m = DMatrix::from_fn(DIM, DIM, |_, _| if rng.random_bool(0.2) { cplx(rng) } else { C64::default() });
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::new(n * rng.random_range(1.0..2.0), 0.0);
        }
    }
    m
}

pub fn as_closure(m: &DMatrix<C64>) -> impl Fn(TimeFreqMode) -> Vec<(TimeFreqMode, C64)> + '_ {
    move |mode| {
        let Some(c) = sub_index(mode) else { return vec![] };
        (0..DIM).filter(|&r| m[(r, c)] != C64::default()).map(|r| (sub_mode(r), m[(r, c)])).collect()
    }
}

/// Power series for `J_m(x)`, independent of the library's recurrences.
pub fn bessel_series(m: i64, x: f64) -> f64 {
    let n = m.unsigned_abs() as i32;
    let mut term = (0.5 * x).powi(n) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..60 {
        term *= -(0.25 * x * x) / (k as f64 * (k + n) as f64);
        sum += term;
    }
    if m < 0 && n % 2 == 1 {
        -sum
    } else {
        sum
    }
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Runs every sparse operation of one randomized case against the dense
/// reference and returns the largest elementwise deviation.
pub fn run_case(seed: u64) -> f64 {
    let grid = ModeGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_state(&mut rng, grid);
    let b = random_state(&mut rng, grid);
    let (da, db) = (to_dense(&a), to_dense(&b));
    let mut err: f64 = 0.0;

    let ms = random_map(&mut rng);
    let mi = random_map(&mut rng);
    let out = a
        .apply_single_photon_map(Photon::Signal, &as_closure(&ms))
        .unwrap()
        .apply_single_photon_map(Photon::Idler, &as_closure(&mi))
        .unwrap();
    err = err.max(max_diff(&to_dense(&out), &(&ms * &da * mi.transpose())));

    // commuting the two photons' maps
    let other = a
        .apply_single_photon_map(Photon::Idler, &as_closure(&mi))
        .unwrap()
        .apply_single_photon_map(Photon::Signal, &as_closure(&ms))
        .unwrap();
    err = err.max(max_diff(&to_dense(&other), &to_dense(&out)));

    let x = cplx(&mut rng);
    let y = cplx(&mut rng);
    err = err.max(max_diff(&to_dense(&a.superpose(x, &b, y)), &(&da * x + &db * y)));
    err = err.max(max_diff(&to_dense(&a.scaled(x)), &(&da * x)));

    let inner: C64 = da.iter().zip(db.iter()).map(|(p, q)| p.conj() * q).sum();
    err = err.max((a.inner(&b) - inner).norm());

    let total: f64 = da.iter().map(|v| v.norm_sqr()).sum();
    err = err.max((a.total_probability() - total).abs());
    err = err.max((a.norm_tracking() - total).abs());
    err = err.max(max_diff(&to_dense(&a.normalize().unwrap()), &(&da / C64::new(total.sqrt(), 0.0))));

    for _ in 0..8 {
        let (r, c) = (rng.random_range(0..DIM), rng.random_range(0..DIM));
        err = err.max((a.projection_probability(sub_mode(r), sub_mode(c)) - da[(r, c)].norm_sqr()).abs());
    }

    // CPM on the signal photon against a Bessel-series matrix into a larger box
    let g = rng.random_range(0.0..2.5);
    let alpha = rng.random_range(0.0..std::f64::consts::TAU);
    let settings = CpmSettings::new(g, 1.25, alpha);
    let map = cpm_mode_map(&settings, &grid).unwrap();
    let big_t0 = -8;
    let big_nt = NT + 16;
    let big_f0 = -(NF / 2) - 8;
    let big_nf = NF + 16;
    let rows = (big_nt * big_nf) as usize;
    let mut cm = DMatrix::<C64>::zeros(rows, DIM);
    for c in 0..DIM {
        let src = sub_mode(c);
        for m in -8..=8i64 {
            let dst = src.shifted(m, m);
            let r = boxed(dst, big_t0, big_nt, big_f0, big_nf).unwrap();
            cm[(r, c)] = C64::from_polar(bessel_series(m, g), -(m as f64) * alpha);
        }
    }
    let want = &cm * &da;
    let got_state = a.apply_single_photon_map(Photon::Signal, &map).unwrap();
    let mut got = DMatrix::<C64>::zeros(rows, DIM);
    for (s, i, v) in got_state.iter() {
        got[(boxed(s, big_t0, big_nt, big_f0, big_nf).unwrap(), sub_index(i).unwrap())] = v;
    }
    // the sparse state drops amplitudes below its sparsity threshold
    err.max(max_diff(&got, &want) - 1e-12).max(0.0)
}
