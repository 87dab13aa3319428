//! Chirped pulse modulation as a discrete mode-shift operator.
//!
//! Stretching a pulse with dispersion maps frequency onto time, so a
//! sinusoidal phase modulation followed by recompression acts as
//! `|t, ν⟩ → Σ_m J_m(g) e^{−imα} |t + mΔt, ν + mΔν⟩` with `Δν = Ω/2π` and
//! `Δt = β₂Ω`. Setting `g` to the first crossing of `J₀` and `J₁` turns the
//! central orders into a balanced beam splitter between bins `Δt` apart.
//!
//! Qubit action on the two retained bins (early `|0⟩`, late `|1⟩`), up to the
//! common factor `J₀ = J₁`:
//!
//! * late bin: `e^{−iα}|0⟩ + |1⟩`, i.e. a projection onto `|0⟩ + e^{−iα}|1⟩`
//! * early bin: `|0⟩ − e^{iα}|1⟩`, i.e. a projection onto `|0⟩ − e^{−iα}|1⟩`
//!
//! [`BeamSplitterKind::RotatedXY`] therefore drives the modulator with RF phase
//! `−α`, so the late bin measures the XY-plane state `|0⟩ + e^{iα}|1⟩`.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_j_orders, bessel_j_symmetric};
use crate::encoding::LevelSpec;
use crate::error::{Error, Result};
use crate::modes::{snap, IdentityMap, ModeGrid, ModeMap, ShiftMap, TimeFreqMode};

/// Speed of light in nm/ps.
pub const C_NM_PER_PS: f64 = 299_792.458;

/// Shift tolerance when snapping `Δt` onto the time grid, in quanta.
///
/// `Δt = Dλ²Δν/c` is 100.17 ps rather than 100 ps at 10 ns/nm and 1550 nm,
/// so the check is relative to the quantum rather than to machine precision.
pub const GRID_SNAP_TOLERANCE: f64 = 0.01;

pub const DEFAULT_TRUNCATION: usize = 8;

const TRUNCATION_DEFECT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpmSettings {
    /// Modulation depth `V₀/V_π`.
    pub g: f64,
    pub rf_ghz: f64,
    pub alpha: f64,
    #[serde(default = "default_dispersion")]
    pub dispersion_ns_per_nm: f64,
    #[serde(default = "default_wavelength")]
    pub carrier_wavelength_nm: f64,
    #[serde(default = "default_truncation")]
    pub truncation_order: usize,
}

fn default_dispersion() -> f64 {
    10.0
}

fn default_wavelength() -> f64 {
    1550.0
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

impl Default for CpmSettings {
    fn default() -> Self {
        CpmSettings {
            g: 0.0,
            rf_ghz: 1.25,
            alpha: 0.0,
            dispersion_ns_per_nm: default_dispersion(),
            carrier_wavelength_nm: default_wavelength(),
            truncation_order: DEFAULT_TRUNCATION,
        }
    }
}

impl CpmSettings {
    pub fn new(g: f64, rf_ghz: f64, alpha: f64) -> Self {
        CpmSettings { g, rf_ghz, alpha, ..Default::default() }
    }

    /// Angular frequency in rad/s.
    pub fn omega(&self) -> f64 {
        TAU * self.rf_ghz * 1e9
    }

    /// Group-delay dispersion `β₂` in ps².
    pub fn beta2_ps2(&self) -> f64 {
        gdd_ps2(self.dispersion_ns_per_nm, self.carrier_wavelength_nm)
    }

    /// Copy spacing in ps.
    pub fn delta_t_ps(&self) -> f64 {
        // β₂ [ps²] · Ω [rad/ps]
        self.beta2_ps2() * TAU * self.rf_ghz * 1e-3
    }

    pub fn delta_nu_ghz(&self) -> f64 {
        self.rf_ghz
    }

    /// Probability kept by orders `|m| ≤ truncation_order`.
    pub fn truncated_weight(&self) -> f64 {
        let js = bessel_j_symmetric(self.g, self.truncation_order);
        js.iter().map(|j| j * j).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!("modulation depth must be ≥ 0, got {}", self.g)));
        }
        if !(self.rf_ghz > 0.0 && self.rf_ghz.is_finite()) {
            return Err(Error::InvalidParameter(format!("RF tone must be positive, got {} GHz", self.rf_ghz)));
        }
        if self.dispersion_ns_per_nm == 0.0 || !self.dispersion_ns_per_nm.is_finite() {
            return Err(Error::InvalidParameter("dispersion must be nonzero".into()));
        }
        if !(self.carrier_wavelength_nm > 0.0) {
            return Err(Error::InvalidParameter("carrier wavelength must be positive".into()));
        }
        let kept = self.truncated_weight();
        if kept < 1.0 - TRUNCATION_DEFECT {
            return Err(Error::InvalidParameter(format!(
                "truncation order {} keeps only {kept:.12} of the probability at g = {}",
                self.truncation_order, self.g
            )));
        }
        Ok(())
    }

    /// `(Δt, Δν)` in grid steps.
    pub fn grid_steps(&self, grid: &ModeGrid) -> Result<(i64, i64)> {
        let dt = self.delta_t_ps();
        let dt_steps = snap(dt / grid.time_quantum_ps, GRID_SNAP_TOLERANCE)
            .ok_or(Error::GridMismatch { value: dt, quantum: grid.time_quantum_ps })?;
        let df = self.delta_nu_ghz();
        let df_steps = snap(df / grid.freq_quantum_ghz, 1e-6)
            .ok_or(Error::GridMismatch { value: df, quantum: grid.freq_quantum_ghz })?;
        Ok((dt_steps, df_steps))
    }
}

/// `β₂ = Dλ²/(2πc)` in ps² for `D` in ns/nm.
pub fn gdd_ps2(dispersion_ns_per_nm: f64, wavelength_nm: f64) -> f64 {
    dispersion_ns_per_nm * 1e3 * wavelength_nm * wavelength_nm / (TAU * C_NM_PER_PS)
}

/// RF tone whose copy spacing equals `shift_ps`.
pub fn rf_for_shift(shift_ps: f64, dispersion_ns_per_nm: f64, wavelength_nm: f64) -> f64 {
    shift_ps / (gdd_ps2(dispersion_ns_per_nm, wavelength_nm) * TAU * 1e-3)
}

pub fn cpm_mode_map(settings: &CpmSettings, grid: &ModeGrid) -> Result<ShiftMap> {
    settings.validate()?;
    let (dt, df) = settings.grid_steps(grid)?;
    let m_max = settings.truncation_order;
    let js = bessel_j_symmetric(settings.g, m_max);
    let weights = js
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let m = k as i64 - m_max as i64;
            (m, C64::from_polar(j, -(m as f64) * settings.alpha))
        })
        .filter(|(_, w)| w.norm() > 0.0)
        .collect();
    Ok(ShiftMap { dt, df, weights })
}

/// Smallest `g > 0` with `J₀(g) = J₁(g)`.
pub fn solve_balanced_depth() -> f64 {
    let f = |g: f64| {
        let j = bessel_j_orders(g, 1);
        j[0] - j[1]
    };
    // J₀ − J₁ > 0 on (0, 1] and changes sign once before 2
    let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
    let mut flo = f(lo);
    debug_assert!(flo > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Fraction of a single bin's probability scattered into its own and its
/// partner bin, `J₀(g)² + J₁(g)²`.
pub fn efficiency(g: f64) -> f64 {
    let j = bessel_j_orders(g, 1);
    j[0] * j[0] + j[1] * j[1]
}

/// Beam-splitter efficiency at the balanced operating point.
pub fn balanced_efficiency() -> f64 {
    efficiency(solve_balanced_depth())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha")]
pub enum BeamSplitterKind {
    Z,
    X,
    RotatedXY(f64),
}

impl BeamSplitterKind {
    pub fn rotated(alpha: f64) -> Self {
        BeamSplitterKind::RotatedXY(alpha.rem_euclid(TAU))
    }

    pub fn is_z(&self) -> bool {
        matches!(self, BeamSplitterKind::Z)
    }

    /// XY-plane angle measured by the late output bin.
    pub fn xy_angle(&self) -> Option<f64> {
        match *self {
            BeamSplitterKind::Z => None,
            BeamSplitterKind::X => Some(0.0),
            BeamSplitterKind::RotatedXY(a) => Some(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterSetting {
    pub kind: BeamSplitterKind,
    pub level: String,
}

impl BeamSplitterSetting {
    pub fn z(level: &str) -> Self {
        BeamSplitterSetting { kind: BeamSplitterKind::Z, level: level.into() }
    }

    pub fn x(level: &str) -> Self {
        BeamSplitterSetting { kind: BeamSplitterKind::X, level: level.into() }
    }

    pub fn rotated(level: &str, alpha: f64) -> Self {
        BeamSplitterSetting { kind: BeamSplitterKind::rotated(alpha), level: level.into() }
    }

    pub fn label(&self) -> String {
        match self.kind {
            BeamSplitterKind::Z => "Z".into(),
            BeamSplitterKind::X => format!("X_{}", self.level),
            BeamSplitterKind::RotatedXY(a) => format!("XY_{}({a:.4})", self.level),
        }
    }
}

/// Single-photon map of one measurement setting.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementMap {
    Identity,
    Shift(ShiftMap),
}

impl ModeMap for MeasurementMap {
    fn image(&self, mode: TimeFreqMode) -> Vec<(TimeFreqMode, C64)> {
        match self {
            MeasurementMap::Identity => IdentityMap.image(mode),
            MeasurementMap::Shift(m) => m.image(mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedMap {
    pub map: MeasurementMap,
    /// Fraction of a qubit's probability landing in its two central bins.
    pub efficiency: f64,
    /// Modulator settings used, `None` for Z.
    pub cpm: Option<CpmSettings>,
}

/// Modulator settings for a given level, checked against the level's shift.
pub fn level_settings(
    level_name: &str,
    levels: &LevelSpec,
    base: &CpmSettings,
    grid: &ModeGrid,
    g: f64,
    alpha: f64,
) -> Result<CpmSettings> {
    let level = levels.level(level_name)?;
    let settings = CpmSettings { g, rf_ghz: level.rf_ghz, alpha, ..*base };
    settings.validate()?;
    let dt = settings.delta_t_ps();
    if ((dt.abs() - level.shift_ps) / grid.time_quantum_ps).abs() > GRID_SNAP_TOLERANCE {
        return Err(Error::InconsistentSettings(format!(
            "level {level_name:?}: {} GHz at {} ns/nm shifts by {dt:.2} ps, bins are {} ps apart",
            level.rf_ghz, base.dispersion_ns_per_nm, level.shift_ps
        )));
    }
    settings.grid_steps(grid)?;
    Ok(settings)
}

pub fn measurement_map(
    setting: &BeamSplitterSetting,
    levels: &LevelSpec,
    base: &CpmSettings,
    grid: &ModeGrid,
) -> Result<TaggedMap> {
    levels.level_index(&setting.level)?;
    let rf_alpha = match setting.kind {
        BeamSplitterKind::Z => {
            return Ok(TaggedMap { map: MeasurementMap::Identity, efficiency: 1.0, cpm: None })
        }
        BeamSplitterKind::X => 0.0,
        BeamSplitterKind::RotatedXY(a) => (-a).rem_euclid(TAU),
    };
    let g = solve_balanced_depth();
    let settings = level_settings(&setting.level, levels, base, grid, g, rf_alpha)?;
    let map = cpm_mode_map(&settings, grid)?;
    Ok(TaggedMap { map: MeasurementMap::Shift(map), efficiency: efficiency(g), cpm: Some(settings) })
}

/// Late-bin intensity for the input `(|0⟩ + e^{iφ}|1⟩)/√2` at RF phase `alpha_rf`.
pub fn two_bin_late_intensity(phi: f64, alpha_rf: f64, g: f64) -> f64 {
    let j0 = bessel_j(0, g);
    let j1 = bessel_j(1, g);
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let b = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, phi);
    (a * C64::from_polar(j1, -alpha_rf) + b * j0).norm_sqr()
}
