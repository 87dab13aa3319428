//! Time-frequency mode labels and sparse two-photon amplitude states.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitudes with modulus below this are dropped after every operation.
pub const SPARSITY_THRESHOLD: f64 = 1e-12;

/// Allowed excess of a mode map's per-input weight over unit probability.
pub const CONTRACTION_TOLERANCE: f64 = 1e-9;

/// Discretization of the time and frequency axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeGrid {
    pub time_quantum_ps: f64,
    pub freq_quantum_ghz: f64,
    #[serde(default)]
    pub time_origin_ps: f64,
}

impl Default for ModeGrid {
    fn default() -> Self {
        ModeGrid { time_quantum_ps: 100.0, freq_quantum_ghz: 1.25, time_origin_ps: 0.0 }
    }
}

impl ModeGrid {
    pub fn new(time_quantum_ps: f64, freq_quantum_ghz: f64, time_origin_ps: f64) -> Result<Self> {
        let grid = ModeGrid { time_quantum_ps, freq_quantum_ghz, time_origin_ps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_quantum_ps > 0.0 && self.time_quantum_ps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time quantum must be positive, got {}",
                self.time_quantum_ps
            )));
        }
        if !(self.freq_quantum_ghz > 0.0 && self.freq_quantum_ghz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequency quantum must be positive, got {}",
                self.freq_quantum_ghz
            )));
        }
        Ok(())
    }

    /// Index of an absolute arrival time; the time must sit on the grid.
    pub fn time_index(&self, time_ps: f64) -> Result<i64> {
        let x = (time_ps - self.time_origin_ps) / self.time_quantum_ps;
        snap(x, 1e-9).ok_or(Error::GridMismatch { value: time_ps, quantum: self.time_quantum_ps })
    }

    /// Number of time quanta spanned by a duration; the duration must be an exact multiple.
    pub fn time_steps(&self, duration_ps: f64) -> Result<i64> {
        let x = duration_ps / self.time_quantum_ps;
        snap(x, 1e-9).ok_or(Error::GridMismatch { value: duration_ps, quantum: self.time_quantum_ps })
    }

    pub fn time_of(&self, t_index: i64) -> f64 {
        self.time_origin_ps + t_index as f64 * self.time_quantum_ps
    }

    pub fn frequency_of(&self, f_index: i64) -> f64 {
        f_index as f64 * self.freq_quantum_ghz
    }
}

/// Rounds `x` to the nearest integer when it lies within `tol` (absolute, in quanta).
pub(crate) fn snap(x: f64, tol: f64) -> Option<i64> {
    let r = x.round();
    if x.is_finite() && (x - r).abs() <= tol.max(1e-12 * x.abs()) {
        Some(r as i64)
    } else {
        None
    }
}

/// Basis ket `|ν, t⟩` in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeFreqMode {
    pub t_index: i64,
    pub f_index: i64,
}

impl TimeFreqMode {
    pub const fn new(t_index: i64, f_index: i64) -> Self {
        TimeFreqMode { t_index, f_index }
    }

    pub fn shifted(self, dt: i64, df: i64) -> Self {
        TimeFreqMode { t_index: self.t_index + dt, f_index: self.f_index + df }
    }
}

impl fmt::Display for TimeFreqMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t={}, f={})", self.t_index, self.f_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Photon {
    Signal,
    Idler,
}

impl Photon {
    pub const BOTH: [Photon; 2] = [Photon::Signal, Photon::Idler];

    pub fn name(self) -> &'static str {
        match self {
            Photon::Signal => "signal",
            Photon::Idler => "idler",
        }
    }
}

/// Linear action of an optical element on a single photon.
pub trait ModeMap {
    fn image(&self, mode: TimeFreqMode) -> Vec<(TimeFreqMode, C64)>;
}

impl<F> ModeMap for F
where
    F: Fn(TimeFreqMode) -> Vec<(TimeFreqMode, C64)>,
{
    fn image(&self, mode: TimeFreqMode) -> Vec<(TimeFreqMode, C64)> {
        self(mode)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl ModeMap for IdentityMap {
    fn image(&self, mode: TimeFreqMode) -> Vec<(TimeFreqMode, C64)> {
        vec![(mode, C64::new(1.0, 0.0))]
    }
}

/// Translation-invariant map: order `m` sends `(t, f)` to `(t + m·dt, f + m·df)`
/// with weight `weights[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMap {
    pub dt: i64,
    pub df: i64,
    pub weights: Vec<(i64, C64)>,
}

impl ModeMap for ShiftMap {
    fn image(&self, mode: TimeFreqMode) -> Vec<(TimeFreqMode, C64)> {
        self.weights
            .iter()
            .map(|&(m, w)| (mode.shifted(m * self.dt, m * self.df), w))
            .collect()
    }
}

/// Sparse complex amplitudes over (signal mode, idler mode) pairs.
///
/// `norm_tracking` always equals the retained probability `Σ|a|²`; lossy
/// steps lower it and only [`JointTwoPhotonState::normalize`] restores it to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTwoPhotonState {
    grid: ModeGrid,
    amplitudes: BTreeMap<(TimeFreqMode, TimeFreqMode), C64>,
    norm_tracking: f64,
    /// Carrier separation between signal and idler photons (metadata only).
    pub signal_idler_offset_ghz: f64,
}

impl JointTwoPhotonState {
    pub fn from_amplitudes<I>(grid: ModeGrid, amplitudes: I) -> Self
    where
        I: IntoIterator<Item = ((TimeFreqMode, TimeFreqMode), C64)>,
    {
        let mut map = BTreeMap::new();
        for (key, a) in amplitudes {
            *map.entry(key).or_insert(C64::new(0.0, 0.0)) += a;
        }
        Self::from_map(grid, map, 0.0)
    }

    fn from_map(
        grid: ModeGrid,
        mut amplitudes: BTreeMap<(TimeFreqMode, TimeFreqMode), C64>,
        signal_idler_offset_ghz: f64,
    ) -> Self {
        amplitudes.retain(|_, a| a.norm() >= SPARSITY_THRESHOLD);
        let norm_tracking = amplitudes.values().map(|a| a.norm_sqr()).sum();
        JointTwoPhotonState { grid, amplitudes, norm_tracking, signal_idler_offset_ghz }
    }

    pub fn with_offset(mut self, signal_idler_offset_ghz: f64) -> Self {
        self.signal_idler_offset_ghz = signal_idler_offset_ghz;
        self
    }

    pub fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    pub fn norm_tracking(&self) -> f64 {
        self.norm_tracking
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude(&self, signal: TimeFreqMode, idler: TimeFreqMode) -> C64 {
        self.amplitudes.get(&(signal, idler)).copied().unwrap_or_default()
    }

    /// Entries in ascending (signal, idler) order.
    pub fn iter(&self) -> impl Iterator<Item = (TimeFreqMode, TimeFreqMode, C64)> + '_ {
        self.amplitudes.iter().map(|(&(s, i), &a)| (s, i, a))
    }

    pub fn total_probability(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&self) -> Result<Self> {
        let total = self.total_probability();
        if self.amplitudes.is_empty() || total <= 0.0 {
            return Err(Error::ZeroState);
        }
        let scale = 1.0 / total.sqrt();
        let map = self.amplitudes.iter().map(|(&k, &a)| (k, a * scale)).collect();
        let mut out = Self::from_map(self.grid, map, self.signal_idler_offset_ghz);
        out.norm_tracking = 1.0;
        Ok(out)
    }

    /// Applies `mode_map` to one photon, leaving the other untouched.
    pub fn apply_single_photon_map<M: ModeMap + ?Sized>(
        &self,
        photon: Photon,
        mode_map: &M,
    ) -> Result<Self> {
        let mut images: BTreeMap<TimeFreqMode, Vec<(TimeFreqMode, C64)>> = BTreeMap::new();
        let mut out: BTreeMap<(TimeFreqMode, TimeFreqMode), C64> = BTreeMap::new();
        for (&(s, i), &a) in &self.amplitudes {
            let src = match photon {
                Photon::Signal => s,
                Photon::Idler => i,
            };
            if let Entry::Vacant(slot) = images.entry(src) {
                let image = mode_map.image(src);
                let weight: f64 = image.iter().map(|(_, w)| w.norm_sqr()).sum();
                if weight > 1.0 + CONTRACTION_TOLERANCE {
                    return Err(Error::NonContractive {
                        t_index: src.t_index,
                        f_index: src.f_index,
                        weight,
                    });
                }
                slot.insert(image);
            }
            for &(dst, w) in &images[&src] {
                let key = match photon {
                    Photon::Signal => (dst, i),
                    Photon::Idler => (s, dst),
                };
                *out.entry(key).or_insert(C64::new(0.0, 0.0)) += a * w;
            }
        }
        Ok(Self::from_map(self.grid, out, self.signal_idler_offset_ghz))
    }

    /// Coincidence probability `|⟨signal, idler|ψ⟩|²`.
    pub fn projection_probability(&self, signal_mode: TimeFreqMode, idler_mode: TimeFreqMode) -> f64 {
        self.amplitude(signal_mode, idler_mode).norm_sqr()
    }

    /// Multiplies every amplitude by `factor`; used for uniform loss.
    pub fn scaled(&self, factor: C64) -> Self {
        let map = self.amplitudes.iter().map(|(&k, &a)| (k, a * factor)).collect();
        Self::from_map(self.grid, map, self.signal_idler_offset_ghz)
    }

    /// `a·self + b·other` on the same grid.
    pub fn superpose(&self, a: C64, other: &Self, b: C64) -> Self {
        let mut map: BTreeMap<_, C64> = self.amplitudes.iter().map(|(&k, &v)| (k, v * a)).collect();
        for (&k, &v) in &other.amplitudes {
            *map.entry(k).or_insert(C64::new(0.0, 0.0)) += v * b;
        }
        Self::from_map(self.grid, map, self.signal_idler_offset_ghz)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .filter_map(|(k, a)| other.amplitudes.get(k).map(|b| a.conj() * b))
            .sum()
    }

    pub fn to_document(&self) -> StateDocument {
        StateDocument {
            grid: self.grid,
            norm_tracking: self.norm_tracking,
            signal_idler_offset_ghz: self.signal_idler_offset_ghz,
            amplitudes: self
                .iter()
                .map(|(s, i, a)| AmplitudeEntry {
                    t_s: s.t_index,
                    f_s: s.f_index,
                    t_i: i.t_index,
                    f_i: i.f_index,
                    re: a.re,
                    im: a.im,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &StateDocument) -> Result<Self> {
        doc.grid.validate()?;
        let entries = doc.amplitudes.iter().map(|e| {
            (
                (TimeFreqMode::new(e.t_s, e.f_s), TimeFreqMode::new(e.t_i, e.f_i)),
                C64::new(e.re, e.im),
            )
        });
        Ok(Self::from_amplitudes(doc.grid, entries).with_offset(doc.signal_idler_offset_ghz))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StateDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("state document: {e}")))?;
        Self::from_document(&doc)
    }
}

/// Debug serialization of a state, entries sorted by mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub grid: ModeGrid,
    pub norm_tracking: f64,
    #[serde(default)]
    pub signal_idler_offset_ghz: f64,
    pub amplitudes: Vec<AmplitudeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeEntry {
    pub t_s: i64,
    pub f_s: i64,
    pub t_i: i64,
    pub f_i: i64,
    pub re: f64,
    pub im: f64,
}
