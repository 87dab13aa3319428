//! Pulsed pair source with per-pulse pump phases.
//!
//! Frequency doubling of the excitation train doubles every phase, and each
//! doubled pulse then creates a signal/idler pair in its own time bin. The
//! result is a bin-correlated two-photon state whose relative phases are set
//! entirely by the pump, so a single π/2 phase on one pulse yields a cluster
//! state without any entangling gate.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::encoding::BinLayout;
use crate::error::{Error, Result};
use crate::modes::{JointTwoPhotonState, ModeGrid, TimeFreqMode};

/// Physical separation between signal and idler carriers.
pub const DEFAULT_SIGNAL_IDLER_OFFSET_GHZ: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationTrain {
    pub times_ps: Vec<f64>,
    pub phases_rad: Vec<f64>,
    #[serde(default = "default_fwhm")]
    pub fwhm_ps: f64,
    #[serde(default = "default_period")]
    pub period_ps: f64,
}

fn default_fwhm() -> f64 {
    37.0
}

fn default_period() -> f64 {
    20_000.0
}

impl Default for ExcitationTrain {
    fn default() -> Self {
        ExcitationTrain {
            times_ps: vec![0.0, 100.0, 300.0, 400.0],
            phases_rad: vec![0.0, 0.0, 0.0, FRAC_PI_2],
            fwhm_ps: default_fwhm(),
            period_ps: default_period(),
        }
    }
}

impl ExcitationTrain {
    pub fn new(times_ps: Vec<f64>, phases_rad: Vec<f64>) -> Result<Self> {
        let train = ExcitationTrain { times_ps, phases_rad, ..Default::default() };
        train.validate()?;
        Ok(train)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times_ps.is_empty() {
            return Err(Error::InvalidParameter("excitation train has no pulses".into()));
        }
        if self.times_ps.len() != self.phases_rad.len() {
            return Err(Error::InvalidParameter(format!(
                "{} pulse times but {} phases",
                self.times_ps.len(),
                self.phases_rad.len()
            )));
        }
        if self.times_ps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("pulse times must be strictly increasing".into()));
        }
        if !(self.fwhm_ps > 0.0) || !(self.period_ps > 0.0) {
            return Err(Error::InvalidParameter("pulse width and period must be positive".into()));
        }
        Ok(())
    }
}

/// Wraps into `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    // rem_euclid can return exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn shg_phases(train: &ExcitationTrain) -> Vec<f64> {
    train.phases_rad.iter().map(|&p| wrap_phase(2.0 * p)).collect()
}

pub fn generate_pair_state(
    train: &ExcitationTrain,
    layout: &BinLayout,
    grid: &ModeGrid,
) -> Result<JointTwoPhotonState> {
    train.validate().map_err(|e| Error::LayoutMismatch(e.to_string()))?;
    if train.times_ps.len() != layout.count() {
        return Err(Error::LayoutMismatch(format!(
            "{} pulses for {} time bins",
            train.times_ps.len(),
            layout.count()
        )));
    }
    for (k, (&t, &p)) in train.times_ps.iter().zip(layout.positions_ps()).enumerate() {
        if (t - p).abs() > 1e-6 {
            return Err(Error::LayoutMismatch(format!("pulse {k} at {t} ps, bin {k} at {p} ps")));
        }
    }
    let indices = layout.time_indices(grid)?;
    let doubled = shg_phases(train);
    let amp = 1.0 / (indices.len() as f64).sqrt();
    let state = JointTwoPhotonState::from_amplitudes(
        *grid,
        indices.iter().zip(&doubled).map(|(&t, &phi)| {
            let mode = TimeFreqMode::new(t, 0);
            ((mode, mode), C64::from_polar(amp, phi))
        }),
    );
    Ok(state.with_offset(DEFAULT_SIGNAL_IDLER_OFFSET_GHZ))
}

/// Equal-weight bin-correlated state with a minus sign on the last bin.
pub fn reference_cluster_state(layout: &BinLayout, grid: &ModeGrid) -> Result<JointTwoPhotonState> {
    let indices = layout.time_indices(grid)?;
    let n = indices.len();
    let amp = 1.0 / (n as f64).sqrt();
    Ok(JointTwoPhotonState::from_amplitudes(
        *grid,
        indices.iter().enumerate().map(|(k, &t)| {
            let mode = TimeFreqMode::new(t, 0);
            let sign = if k + 1 == n { -1.0 } else { 1.0 };
            ((mode, mode), C64::new(sign * amp, 0.0))
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterCheck {
    pub is_cluster: bool,
    pub fidelity: f64,
}

pub fn is_cluster_state(state: &JointTwoPhotonState, layout: &BinLayout) -> Result<ClusterCheck> {
    let reference = reference_cluster_state(layout, state.grid())?;
    let fidelity = reference.inner(state).norm_sqr();
    Ok(ClusterCheck { is_cluster: fidelity > 1.0 - 1e-9, fidelity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn doubling() {
        let t = ExcitationTrain::default();
        assert!(close(&shg_phases(&t), &[0.0, 0.0, 0.0, PI]));
        let z = ExcitationTrain::new(t.times_ps.clone(), vec![0.0; 4]).unwrap();
        assert!(close(&shg_phases(&z), &[0.0; 4]));
        let q = ExcitationTrain::new(t.times_ps.clone(), vec![PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI]).unwrap();
        assert!(close(&shg_phases(&q), &[PI / 2.0, PI, 3.0 * PI / 2.0, 0.0]));
    }

    #[test]
    fn default_train_gives_cluster() {
        let grid = ModeGrid::default();
        let layout = BinLayout::default();
        let st = generate_pair_state(&ExcitationTrain::default(), &layout, &grid).unwrap();
        let expected = [0.5, 0.5, 0.5, -0.5];
        for (k, &t) in [0, 1, 3, 4].iter().enumerate() {
            let m = TimeFreqMode::new(t, 0);
            assert!((st.amplitude(m, m) - C64::new(expected[k], 0.0)).norm() < 1e-12);
        }
        assert_eq!(st.len(), 4);
        let check = is_cluster_state(&st, &layout).unwrap();
        assert!(check.is_cluster);
        assert!((check.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pulse_is_a_product_state() {
        let grid = ModeGrid::default();
        let layout = BinLayout::new(vec![0.0]).unwrap();
        let train = ExcitationTrain::new(vec![0.0], vec![0.3]).unwrap();
        let st = generate_pair_state(&train, &layout, &grid).unwrap();
        assert_eq!(st.len(), 1);
        let m = TimeFreqMode::new(0, 0);
        assert!((st.amplitude(m, m) - C64::from_polar(1.0, 0.6)).norm() < 1e-12);
        let two = BinLayout::new(vec![0.0, 100.0]).unwrap();
        assert!(matches!(generate_pair_state(&train, &two, &grid), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn misplaced_pulse() {
        let train = ExcitationTrain::new(vec![0.0, 100.0, 250.0, 400.0], vec![0.0; 4]).unwrap();
        let r = generate_pair_state(&train, &BinLayout::default(), &ModeGrid::default());
        assert!(matches!(r, Err(Error::LayoutMismatch(_))));
    }
}
