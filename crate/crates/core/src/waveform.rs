//! Continuous-field model of chirped pulse modulation.
//!
//! Fields are sampled complex envelopes `E(t)` with the engineering sign
//! convention: a component `e^{+iωt}` sits at angular frequency `+ω`, and the
//! spectrum is the forward FFT. A chirp multiplies the spectrum by
//! `exp(iKω²/2)` with `K = Dλ²/(2πc)`, which for `D > 0` delays lower
//! frequencies. A carrier offset `f` away from the band centre is not
//! sampled; its group delay `−K·2πf` is applied to `t0` instead.
//!
//! Chirping by `+D`, phase modulating with `exp(ig sin(Ωt − α))` and chirping
//! by `−D` reproduces the discrete map exactly: order `m` becomes a replica
//! delayed by `mKΩ`, shifted by `mΩ` and weighted by `J_m(g) e^{−imα}`, where
//! the replica's carrier is referenced to the midpoint of the shift
//! ([`SampledField::displaced`]).

use std::f64::consts::{LN_2, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cpm::{gdd_ps2, solve_balanced_depth};
use crate::error::{Error, Result};

/// Energy allowed within the guard band at each window edge.
pub const LEAK_TOLERANCE: f64 = 1e-9;

const GUARD_FRACTION: f64 = 1.0 / 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub samples: Vec<C64>,
    pub dt_ps: f64,
    pub t0_ps: f64,
    pub carrier_offset_ghz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSpec {
    pub dispersion_ns_per_nm: f64,
    #[serde(default = "default_wavelength")]
    pub carrier_wavelength_nm: f64,
}

fn default_wavelength() -> f64 {
    1550.0
}

impl ChirpSpec {
    pub fn new(dispersion_ns_per_nm: f64) -> Self {
        ChirpSpec { dispersion_ns_per_nm, carrier_wavelength_nm: default_wavelength() }
    }

    /// `K` in ps².
    pub fn gdd_ps2(&self) -> f64 {
        gdd_ps2(self.dispersion_ns_per_nm, self.carrier_wavelength_nm)
    }

    pub fn negated(&self) -> Self {
        ChirpSpec { dispersion_ns_per_nm: -self.dispersion_ns_per_nm, ..*self }
    }

    /// Copy spacing for an RF tone in GHz.
    pub fn copy_spacing_ps(&self, rf_ghz: f64) -> f64 {
        self.gdd_ps2() * TAU * rf_ghz * 1e-3
    }

    fn validate(&self) -> Result<()> {
        if self.dispersion_ns_per_nm == 0.0 || !self.dispersion_ns_per_nm.is_finite() {
            return Err(Error::InvalidParameter("chirp needs nonzero dispersion".into()));
        }
        Ok(())
    }
}

/// Amplitude of a Gaussian whose intensity FWHM is `fwhm_ps`.
pub fn gaussian_envelope(t_ps: f64, fwhm_ps: f64) -> f64 {
    (-2.0 * LN_2 * t_ps * t_ps / (fwhm_ps * fwhm_ps)).exp()
}

/// Window length (power of two) that holds a train spanning `span_ps`
/// after stretching by `dispersion`, plus `extra_ps` for scattered copies.
pub fn window_samples(span_ps: f64, fwhm_ps: f64, dispersion: f64, extra_ps: f64, dt_ps: f64) -> usize {
    let sigma_a = fwhm_ps / (4.0 * LN_2).sqrt();
    let k = gdd_ps2(dispersion.abs(), default_wavelength());
    // ±9σ of the stretched amplitude holds all but ~1e-35 of the energy
    let stretched = 18.0 * (sigma_a * sigma_a + (k / sigma_a).powi(2)).sqrt();
    let needed = (span_ps + stretched + 2.0 * extra_ps) * (1.0 + 4.0 * GUARD_FRACTION);
    ((needed / dt_ps).ceil() as usize).next_power_of_two().max(64)
}

impl SampledField {
    pub fn zeros(n: usize, dt_ps: f64, t0_ps: f64) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("{n} samples is not a power of two")));
        }
        if !(dt_ps > 0.0) {
            return Err(Error::InvalidParameter("sample spacing must be positive".into()));
        }
        Ok(SampledField { samples: vec![C64::new(0.0, 0.0); n], dt_ps, t0_ps, carrier_offset_ghz: 0.0 })
    }

    /// Window of `n` samples centred on `centre_ps`.
    pub fn centred(n: usize, dt_ps: f64, centre_ps: f64) -> Result<Self> {
        Self::zeros(n, dt_ps, centre_ps - 0.5 * n as f64 * dt_ps)
    }

    /// Sum of Gaussian pulses `(time, complex amplitude)` with a shared width.
    pub fn gaussian_train(
        pulses: &[(f64, C64)],
        fwhm_ps: f64,
        dt_ps: f64,
        n: usize,
    ) -> Result<Self> {
        if pulses.is_empty() || !(fwhm_ps > 0.0) {
            return Err(Error::InvalidParameter("need at least one pulse with positive width".into()));
        }
        let lo = pulses.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pulses.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let mut field = Self::centred(n, dt_ps, 0.5 * (lo + hi))?;
        for k in 0..n {
            let t = field.time_of(k);
            field.samples[k] = pulses.iter().map(|&(tc, a)| a * gaussian_envelope(t - tc, fwhm_ps)).sum();
        }
        Ok(field)
    }

    pub fn with_carrier_offset(mut self, offset_ghz: f64) -> Self {
        self.carrier_offset_ghz = offset_ghz;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.t0_ps + k as f64 * self.dt_ps
    }

    pub fn times_ps(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time_of(k)).collect()
    }

    pub fn window_ps(&self) -> f64 {
        self.len() as f64 * self.dt_ps
    }

    /// Angular frequency (rad/ps) of FFT bin `k`.
    pub fn omega_of(&self, k: usize) -> f64 {
        let n = self.len() as i64;
        let kk = if (k as i64) < (n + 1) / 2 { k as i64 } else { k as i64 - n };
        TAU * kk as f64 / (n as f64 * self.dt_ps)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.dt_ps
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_sqr()).collect()
    }

    /// Energy within `[from, to)`.
    pub fn energy_between(&self, from_ps: f64, to_ps: f64) -> f64 {
        self.samples
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let t = self.time_of(*k);
                t >= from_ps && t < to_ps
            })
            .map(|(_, s)| s.norm_sqr())
            .sum::<f64>()
            * self.dt_ps
    }

    /// Spectrum with the phase reference at `t0`.
    pub fn spectrum(&self) -> Vec<C64> {
        let mut buf = self.samples.clone();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf
    }

    fn spectrum_to_field(&self, mut spec: Vec<C64>) -> Vec<C64> {
        let n = spec.len();
        FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
        let scale = 1.0 / n as f64;
        spec.iter_mut().for_each(|s| *s *= scale);
        spec
    }

    /// Multiplies the spectrum by `phase(ω)` (ω in rad/ps, relative to `t0`).
    fn filter(&self, phase: impl Fn(f64) -> C64) -> SampledField {
        let mut spec = self.spectrum();
        for (k, s) in spec.iter_mut().enumerate() {
            *s *= phase(self.omega_of(k));
        }
        SampledField { samples: self.spectrum_to_field(spec), ..*self }
    }

    /// Time-shifted and frequency-shifted copy `e^{iΩ(t − τ/2 − c)} E(t − τ)`,
    /// with `c` the carrier reference time. Non-integer delays use the
    /// Fourier shift theorem.
    pub fn displaced(&self, tau_ps: f64, nu_ghz: f64, reference_ps: f64) -> SampledField {
        let delayed = self.filter(|w| C64::from_polar(1.0, -w * tau_ps));
        let omega = TAU * nu_ghz * 1e-3;
        let mut out = delayed;
        for k in 0..out.len() {
            let t = out.time_of(k);
            out.samples[k] *= C64::from_polar(1.0, omega * (t - 0.5 * tau_ps - reference_ps));
        }
        out
    }

    /// `⟨self|other⟩ = Σ conj(a)·b·dt` on a common sampling.
    pub fn overlap(&self, other: &SampledField) -> C64 {
        self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum::<C64>() * self.dt_ps
    }

    fn edge_leak(&self) -> f64 {
        let n = self.len();
        let guard = ((n as f64 * GUARD_FRACTION) as usize).max(1);
        let edge: f64 = self.samples[..guard].iter().chain(&self.samples[n - guard..]).map(|s| s.norm_sqr()).sum();
        let total: f64 = self.samples.iter().map(|s| s.norm_sqr()).sum();
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }

    /// Smallest angular-frequency interval holding all but `tol` of the energy.
    fn spectral_support(&self, tol: f64) -> f64 {
        let spec = self.spectrum();
        let mut pts: Vec<(f64, f64)> =
            spec.iter().enumerate().map(|(k, s)| (self.omega_of(k), s.norm_sqr())).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        support(&pts, tol)
    }

    fn time_support(&self, tol: f64) -> f64 {
        let pts: Vec<(f64, f64)> =
            self.samples.iter().enumerate().map(|(k, s)| (self.time_of(k), s.norm_sqr())).collect();
        support(&pts, tol)
    }
}

/// Width of the central interval of sorted `(x, weight)` points holding all but `tol`.
fn support(pts: &[(f64, f64)], tol: f64) -> f64 {
    let total: f64 = pts.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    let edge = |iter: &mut dyn Iterator<Item = &(f64, f64)>| {
        let mut acc = 0.0;
        for p in iter {
            acc += p.1;
            if acc > 0.5 * tol * total {
                return p.0;
            }
        }
        0.0
    };
    let lo = edge(&mut pts.iter());
    let hi = edge(&mut pts.iter().rev());
    (hi - lo).max(0.0)
}

pub fn apply_chirp(field: &SampledField, chirp: &ChirpSpec) -> Result<SampledField> {
    chirp.validate()?;
    let k = chirp.gdd_ps2();
    let spread = k.abs() * field.spectral_support(1e-12);
    if spread > field.window_ps() {
        return Err(Error::WindowOverflow { window_ps: field.window_ps(), needed_ps: spread });
    }
    let mut out = field.filter(|w| C64::from_polar(1.0, 0.5 * k * w * w));
    out.t0_ps -= k * TAU * field.carrier_offset_ghz * 1e-3;
    if out.edge_leak() > LEAK_TOLERANCE {
        return Err(Error::WindowOverflow {
            window_ps: field.window_ps(),
            needed_ps: spread + field.time_support(1e-12),
        });
    }
    Ok(out)
}

/// Multiplies by `exp(i·g·sin(Ωt + α))`, `t` absolute.
pub fn phase_modulate(field: &SampledField, g: f64, rf_ghz: f64, alpha: f64) -> SampledField {
    let omega = TAU * rf_ghz * 1e-3;
    let mut out = field.clone();
    for k in 0..out.len() {
        let t = out.time_of(k);
        out.samples[k] *= C64::from_polar(1.0, g * (omega * t + alpha).sin());
    }
    out
}

/// Chirp, modulate, recompress. The RF phase enters as `−α` so that order
/// `m` carries `e^{−imα}`.
pub fn cpm_continuous(
    field: &SampledField,
    chirp: &ChirpSpec,
    g: f64,
    rf_ghz: f64,
    alpha: f64,
) -> Result<SampledField> {
    let stretched = apply_chirp(field, chirp)?;
    let modulated = phase_modulate(&stretched, g, rf_ghz, -alpha);
    apply_chirp(&modulated, &chirp.negated())
}

/// Complex weights of orders `−max_order..=max_order` in `output`, obtained by
/// least squares against displaced replicas of `input` (carrier referenced at
/// `reference_ps`).
pub fn order_weights(
    input: &SampledField,
    output: &SampledField,
    chirp: &ChirpSpec,
    rf_ghz: f64,
    max_order: usize,
    reference_ps: f64,
) -> Vec<(i64, C64)> {
    let spacing = chirp.copy_spacing_ps(rf_ghz);
    let orders: Vec<i64> = (-(max_order as i64)..=max_order as i64).collect();
    let templates: Vec<SampledField> = orders
        .iter()
        .map(|&m| input.displaced(m as f64 * spacing, m as f64 * rf_ghz, reference_ps))
        .collect();
    let n = orders.len();
    let gram = DMatrix::from_fn(n, n, |i, j| templates[i].overlap(&templates[j]));
    let rhs = DVector::from_fn(n, |i, _| templates[i].overlap(output));
    let w = gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(n));
    orders.into_iter().zip(w.iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub times_ps: Vec<f64>,
    pub freqs_ghz: Vec<f64>,
    /// Rows indexed by time, columns by frequency.
    pub intensity: Vec<Vec<f64>>,
}

impl Spectrogram {
    /// Intensity-weighted mean frequency of one time row.
    pub fn centroid_ghz(&self, row: usize) -> f64 {
        let r = &self.intensity[row];
        let total: f64 = r.iter().sum();
        r.iter().zip(&self.freqs_ghz).map(|(i, f)| i * f).sum::<f64>() / total
    }

    pub fn row_energy(&self, row: usize) -> f64 {
        self.intensity[row].iter().sum()
    }

    pub fn nearest_row(&self, t_ps: f64) -> usize {
        let mut best = 0;
        for (k, &t) in self.times_ps.iter().enumerate() {
            if (t - t_ps).abs() < (self.times_ps[best] - t_ps).abs() {
                best = k;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ps,freq_ghz,intensity\n");
        for (row, &t) in self.times_ps.iter().enumerate() {
            for (col, &f) in self.freqs_ghz.iter().enumerate() {
                out.push_str(&format!("{t},{f},{:e}\n", self.intensity[row][col]));
            }
        }
        out
    }
}

/// Gabor transform with a Gaussian gate of intensity FWHM `window_fwhm_ps`,
/// evaluated every `time_step_ps` over `[from_ps, to_ps]` with `nfft` points per slice.
pub fn spectrogram(
    field: &SampledField,
    window_fwhm_ps: f64,
    from_ps: f64,
    to_ps: f64,
    time_step_ps: f64,
    nfft: usize,
) -> Result<Spectrogram> {
    if !(window_fwhm_ps > 2.0 * field.dt_ps) {
        return Err(Error::InvalidParameter(format!(
            "gate of {window_fwhm_ps} ps is too short for {} ps sampling",
            field.dt_ps
        )));
    }
    if !nfft.is_power_of_two() || !(time_step_ps > 0.0) || !(to_ps >= from_ps) {
        return Err(Error::InvalidParameter("bad spectrogram grid".into()));
    }
    let half_span = (3.0 * window_fwhm_ps / field.dt_ps).ceil() as i64;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let freqs_ghz: Vec<f64> = (0..nfft)
        .map(|k| {
            let kk = k as i64 - nfft as i64 / 2;
            kk as f64 / (nfft as f64 * field.dt_ps) * 1e3
        })
        .collect();
    let steps = ((to_ps - from_ps) / time_step_ps).floor() as usize + 1;
    let mut times = Vec::with_capacity(steps);
    let mut rows = Vec::with_capacity(steps);
    for s in 0..steps {
        let tc = from_ps + s as f64 * time_step_ps;
        let centre = ((tc - field.t0_ps) / field.dt_ps).round() as i64;
        let mut buf = vec![C64::new(0.0, 0.0); nfft];
        for j in -half_span..=half_span {
            let idx = centre + j;
            if idx < 0 || idx >= field.len() as i64 {
                continue;
            }
            let gate = gaussian_envelope(j as f64 * field.dt_ps, window_fwhm_ps);
            let slot = (j.rem_euclid(nfft as i64)) as usize;
            buf[slot] += field.samples[idx as usize] * gate;
        }
        fft.process(&mut buf);
        // reorder to ascending frequency
        let row: Vec<f64> = (0..nfft).map(|k| buf[(k + nfft / 2) % nfft].norm_sqr()).collect();
        times.push(tc);
        rows.push(row);
    }
    Ok(Spectrogram { times_ps: times, freqs_ghz, intensity: rows })
}

/// Times of the local intensity maxima above `rel_threshold` of the largest,
/// refined by a parabola through the neighbouring samples.
pub fn intensity_peaks(field: &SampledField, rel_threshold: f64) -> Vec<f64> {
    let inten = field.intensity();
    let top = inten.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for k in 1..inten.len().saturating_sub(1) {
        let (a, b, c) = (inten[k - 1], inten[k], inten[k + 1]);
        if b > a && b >= c && b > rel_threshold * top {
            let denom = a - 2.0 * b + c;
            let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            peaks.push(field.time_of(k) + shift * field.dt_ps);
        }
    }
    peaks
}

/// Sampling used by [`visibility_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilitySampling {
    pub dt_ps: f64,
    pub alpha_steps: usize,
}

impl Default for VisibilitySampling {
    fn default() -> Self {
        VisibilitySampling { dt_ps: 1.0, alpha_steps: 16 }
    }
}

/// Interference contrast of two equal bins `bin_separation_ps` apart, read
/// in the late output bin (window of ± half the separation) while the RF
/// phase sweeps a full period.
pub fn visibility_bound(
    bin_separation_ps: f64,
    pulse_fwhm_ps: f64,
    chirp: &ChirpSpec,
    rf_ghz: f64,
) -> Result<f64> {
    visibility_bound_with(bin_separation_ps, pulse_fwhm_ps, chirp, rf_ghz, VisibilitySampling::default())
}

pub fn visibility_bound_with(
    bin_separation_ps: f64,
    pulse_fwhm_ps: f64,
    chirp: &ChirpSpec,
    rf_ghz: f64,
    sampling: VisibilitySampling,
) -> Result<f64> {
    chirp.validate()?;
    if !(bin_separation_ps > 0.0) || !(pulse_fwhm_ps > 0.0) || !(rf_ghz > 0.0) {
        return Err(Error::InvalidParameter("separation, width and tone must be positive".into()));
    }
    let spacing = chirp.copy_spacing_ps(rf_ghz);
    if ((spacing - bin_separation_ps) / bin_separation_ps).abs() > 0.02 {
        return Err(Error::InconsistentSettings(format!(
            "{rf_ghz} GHz at {} ns/nm shifts by {spacing:.2} ps, bins are {bin_separation_ps} ps apart",
            chirp.dispersion_ns_per_nm
        )));
    }
    if sampling.alpha_steps < 4 {
        return Err(Error::InvalidParameter("need at least 4 phase steps".into()));
    }
    let n = window_samples(
        bin_separation_ps,
        pulse_fwhm_ps,
        chirp.dispersion_ns_per_nm,
        10.0 * bin_separation_ps,
        sampling.dt_ps,
    );
    let one = C64::new(1.0, 0.0);
    let field =
        SampledField::gaussian_train(&[(0.0, one), (bin_separation_ps, one)], pulse_fwhm_ps, sampling.dt_ps, n)?;
    let g = solve_balanced_depth();
    let stretched = apply_chirp(&field, chirp)?;
    let back = chirp.negated();
    let (lo, hi) = (0.5 * bin_separation_ps, 1.5 * bin_separation_ps);
    let steps = sampling.alpha_steps;
    let (mut c0, mut c1, mut s1) = (0.0, 0.0, 0.0);
    for k in 0..steps {
        let alpha = TAU * k as f64 / steps as f64;
        let out = apply_chirp(&phase_modulate(&stretched, g, rf_ghz, -alpha), &back)?;
        let e = out.energy_between(lo, hi);
        c0 += e;
        c1 += e * alpha.cos();
        s1 += e * alpha.sin();
    }
    // first harmonic of an evenly sampled period
    let mean = c0 / steps as f64;
    let amp = 2.0 * (c1 * c1 + s1 * s1).sqrt() / steps as f64;
    Ok((amp / mean).clamp(0.0, 1.0))
}

/// Closed form for Gaussian pulses and exact replicas: the Fourier transform
/// of the pulse intensity at the RF tone.
pub fn gaussian_visibility(pulse_fwhm_ps: f64, rf_ghz: f64) -> f64 {
    let omega = TAU * rf_ghz * 1e-3;
    (-(omega * pulse_fwhm_ps).powi(2) / (16.0 * LN_2)).exp()
}
