//! Stabilizer witness, Monte-Carlo error, fringe fits and capacity.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{ProjectionSet, RawProjections};
use crate::error::{Error, Result};

pub const STABILIZER_THRESHOLD: f64 = 2.0 / 3.0;
pub const CHSH_THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Qubit order `(T_s, T_i, t_s, t_i)`.
pub const CLUSTER_TERMS: [&str; 6] = ["11ZZ", "ZZ11", "1ZXX", "Z1XX", "XX1Z", "XXZ1"];

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    Z,
    X,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StabilizerTerm {
    ops: Vec<Pauli>,
}

impl StabilizerTerm {
    pub fn ops(&self) -> &[Pauli] {
        &self.ops
    }

    /// Measurement basis with identities read as Z.
    fn natural_basis(&self) -> String {
        self.ops.iter().map(|p| if *p == Pauli::X { 'X' } else { 'Z' }).collect()
    }

    fn compatible(&self, basis: &str) -> bool {
        basis.len() == self.ops.len()
            && self.ops.iter().zip(basis.chars()).all(|(p, c)| match p {
                Pauli::I => true,
                Pauli::Z => c == 'Z',
                Pauli::X => c == 'X',
            })
    }
}

impl FromStr for StabilizerTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.chars().count() != 4 {
            return Err(Error::InvalidParameter(format!("stabilizer term {s:?} must have 4 letters")));
        }
        let ops = s
            .chars()
            .map(|c| match c {
                '1' | 'I' => Ok(Pauli::I),
                'Z' => Ok(Pauli::Z),
                'X' => Ok(Pauli::X),
                other => Err(Error::InvalidParameter(format!("letter {other:?} in stabilizer term {s:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(StabilizerTerm { ops })
    }
}

impl TryFrom<String> for StabilizerTerm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StabilizerTerm> for String {
    fn from(t: StabilizerTerm) -> String {
        t.to_string()
    }
}

impl fmt::Display for StabilizerTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.ops {
            f.write_str(match p {
                Pauli::I => "1",
                Pauli::Z => "Z",
                Pauli::X => "X",
            })?;
        }
        Ok(())
    }
}

pub fn cluster_terms() -> Vec<StabilizerTerm> {
    CLUSTER_TERMS.iter().map(|t| t.parse().expect("static term")).collect()
}

/// Expectation of `term` from the normalized outcome distribution of a
/// compatible basis. Outcome bit 0 is eigenvalue +1.
pub fn stabilizer_expectation(term: &StabilizerTerm, projections: &ProjectionSet) -> Result<f64> {
    let natural = term.natural_basis();
    let values = match projections.bases.get(&natural) {
        Some(v) => v.as_slice(),
        None => projections
            .bases
            .iter()
            .find(|(b, _)| term.compatible(b))
            .map(|(_, v)| v.as_slice())
            .ok_or(Error::MissingBasis(natural))?,
    };
    let n = term.ops.len();
    if values.len() != 1 << n {
        return Err(Error::LengthMismatch { expected: 1 << n, got: values.len() });
    }
    let mut e = 0.0;
    for (o, &p) in values.iter().enumerate() {
        let mut sign = 1.0;
        for (q, op) in term.ops.iter().enumerate() {
            if *op != Pauli::I && (o >> (n - 1 - q)) & 1 == 1 {
                sign = -sign;
            }
        }
        e += sign * p;
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub terms: Vec<String>,
    pub expectations: Vec<f64>,
    pub witness: f64,
    pub stderr: f64,
    pub fidelity_bound: f64,
    /// Each expectation above 2/3.
    pub threshold_pass: Vec<bool>,
    /// Mean expectation above 2/3.
    pub mean_threshold_pass: bool,
}

impl WitnessReport {
    pub fn all_pass(&self) -> bool {
        self.threshold_pass.iter().all(|&b| b)
    }

    pub fn is_entangled(&self) -> bool {
        self.witness < 0.0
    }

    /// `|W| / stderr`, infinite without an error estimate.
    pub fn significance(&self) -> f64 {
        if self.stderr > 0.0 {
            self.witness.abs() / self.stderr
        } else {
            f64::INFINITY
        }
    }
}

pub fn witness_value(expectations: &[f64]) -> f64 {
    2.0 - 0.5 * expectations.iter().sum::<f64>()
}

pub fn witness(projections: &ProjectionSet) -> Result<WitnessReport> {
    let terms = cluster_terms();
    let expectations = terms
        .iter()
        .map(|t| stabilizer_expectation(t, projections))
        .collect::<Result<Vec<f64>>>()?;
    let w = witness_value(&expectations);
    let mean = expectations.iter().sum::<f64>() / expectations.len() as f64;
    Ok(WitnessReport {
        terms: terms.iter().map(|t| t.to_string()).collect(),
        threshold_pass: expectations.iter().map(|&e| e > STABILIZER_THRESHOLD).collect(),
        mean_threshold_pass: mean > STABILIZER_THRESHOLD,
        expectations,
        witness: w,
        stderr: 0.0,
        fidelity_bound: (1.0 - w) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HistogramBins {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[k], self.edges[k + 1], c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub histogram: HistogramBins,
}

/// Poisson resampling of the raw counts. Sample `k` belongs to chunk
/// `k / 4096`, which draws from its own stream of `seed`, so the result does
/// not depend on the thread count.
pub fn monte_carlo_error(raw: &RawProjections, samples: usize, seed: u64, bins: usize) -> Result<MonteCarloResult> {
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two Monte-Carlo samples".into()));
    }
    if raw.bases.iter().flat_map(|b| &b.counts).any(|&c| !(c >= 0.0 && c.is_finite())) {
        return Err(Error::InvalidParameter("raw counts must be nonnegative".into()));
    }
    raw.normalized()?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut local = Vec::with_capacity(n);
            let mut draw = raw.clone();
            for _ in 0..n {
                for (b, src) in draw.bases.iter_mut().zip(&raw.bases) {
                    for (d, &s) in b.counts.iter_mut().zip(&src.counts) {
                        *d = if s > 0.0 {
                            Poisson::new(s).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
                        } else {
                            0.0
                        };
                    }
                }
                if let Ok(w) = draw.normalized().and_then(|p| witness(&p)) {
                    local.push(w.witness);
                }
            }
            local
        })
        .flatten()
        .collect();
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidParameter("too few valid Monte-Carlo samples".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(MonteCarloResult { samples: n, mean, stderr: var.sqrt(), histogram: histogram(&values, bins.max(1)) })
}

fn histogram(values: &[f64], bins: usize) -> HistogramBins {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5e-9, lo + 0.5e-9) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    HistogramBins { edges, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceFit {
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
    pub k: u32,
    pub visibility: f64,
    pub phase_offset: f64,
    pub mean_rate: f64,
    /// Harmonic in {1, 2} with the smaller residual.
    pub best_k: u32,
    pub chsh_pass: bool,
}

impl InterferenceFit {
    pub fn k_mismatch(&self) -> bool {
        self.best_k != self.k
    }

    pub fn model(&self, alpha: f64) -> f64 {
        self.mean_rate * (1.0 + self.visibility * (self.k as f64 * alpha + self.phase_offset).cos())
    }
}

pub fn chsh_violated(visibility: f64) -> bool {
    visibility > CHSH_THRESHOLD
}

/// Least squares of `a + b cos kα + c sin kα`; returns `(a, b, c, residual)`.
fn harmonic_lsq(alphas: &[f64], rates: &[f64], k: u32) -> Option<(f64, f64, f64, f64)> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (&a, &r) in alphas.iter().zip(rates) {
        let row = Vector3::new(1.0, (k as f64 * a).cos(), (k as f64 * a).sin());
        ata += row * row.transpose();
        atb += row * r;
    }
    let x = ata.cholesky()?.solve(&atb);
    let resid = alphas
        .iter()
        .zip(rates)
        .map(|(&a, &r)| {
            let m = x[0] + x[1] * (k as f64 * a).cos() + x[2] * (k as f64 * a).sin();
            (r - m).powi(2)
        })
        .sum();
    Some((x[0], x[1], x[2], resid))
}

/// Fits `A(1 + V cos(kα + φ₀))` to a phase scan.
pub fn fit_interference(alphas: &[f64], rates: &[f64], k: u32) -> Result<InterferenceFit> {
    if alphas.len() != rates.len() {
        return Err(Error::LengthMismatch { expected: alphas.len(), got: rates.len() });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("fringe harmonic must be positive".into()));
    }
    let mut distinct: Vec<f64> = alphas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 8 {
        return Err(Error::InsufficientScan(format!("{} distinct phases, need 8", distinct.len())));
    }
    let span = distinct[distinct.len() - 1] - distinct[0];
    let period = std::f64::consts::TAU / k as f64;
    if span < period * (1.0 - 1.0 / distinct.len() as f64) {
        return Err(Error::InsufficientScan(format!("scan spans {span:.3} rad, one period is {period:.3} rad")));
    }
    let (a, b, c, resid) =
        harmonic_lsq(alphas, rates, k).ok_or_else(|| Error::InsufficientScan("degenerate phase scan".into()))?;
    let amp = b.hypot(c);
    let visibility = if a > 0.0 { (amp / a).min(1.0) } else { 0.0 };
    let phase_offset = (-c).atan2(b);
    let mut best_k = k;
    let mut best = resid;
    for other in [1u32, 2] {
        if other == k {
            continue;
        }
        if let Some((_, _, _, r)) = harmonic_lsq(alphas, rates, other) {
            if r < best - 1e-12 * best.abs().max(1.0) {
                best = r;
                best_k = other;
            }
        }
    }
    Ok(InterferenceFit {
        alphas: alphas.to_vec(),
        rates: rates.to_vec(),
        k,
        visibility,
        phase_offset,
        mean_rate: a,
        best_k,
        chsh_pass: chsh_violated(visibility),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub channels: u64,
    pub rep_rate_hz: f64,
    /// One qubit per spectral slot per stretched bin.
    pub qubits_per_second: f64,
}

pub fn multiplex_capacity(
    total_bandwidth_ghz: f64,
    qubit_spectral_width_ghz: f64,
    stretched_bin_length_ps: f64,
) -> Result<CapacityReport> {
    for (name, v) in [
        ("total bandwidth", total_bandwidth_ghz),
        ("qubit spectral width", qubit_spectral_width_ghz),
        ("stretched bin length", stretched_bin_length_ps),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let channels = (total_bandwidth_ghz / qubit_spectral_width_ghz * (1.0 + 1e-12)).floor() as u64;
    let rep_rate_hz = 1e12 / stretched_bin_length_ps;
    Ok(CapacityReport { channels, rep_rate_hz, qubits_per_second: channels as f64 * rep_rate_hz })
}
