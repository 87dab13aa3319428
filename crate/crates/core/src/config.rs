//! Run configuration shared by the command line and the Python bindings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{FiberLink, StabilizerPolicy, TemperatureModel};
use crate::cpm::{CpmSettings, DEFAULT_TRUNCATION};
use crate::detection::{DetectorModel, MeasurementConditions, DEFAULT_IDLER_OFFSET_SEGMENTS};
use crate::encoding::LevelSpec;
use crate::error::{Error, Result};
use crate::modes::ModeGrid;
use crate::source::ExcitationTrain;

/// White-noise weight that brings the witness to −0.80.
pub const CALIBRATED_WHITE_NOISE: f64 = 0.0667;

/// Pairs per setting giving a witness standard error near 0.04 at the
/// calibrated noise.
pub const CALIBRATED_PAIRS_PER_SETTING: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    pub grid: ModeGrid,
    pub levels: LevelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpmConfig {
    pub dispersion_ns_per_nm: f64,
    pub carrier_wavelength_nm: f64,
    pub truncation_order: usize,
}

impl Default for CpmConfig {
    fn default() -> Self {
        CpmConfig { dispersion_ns_per_nm: 10.0, carrier_wavelength_nm: 1550.0, truncation_order: DEFAULT_TRUNCATION }
    }
}

impl CpmConfig {
    pub fn base_settings(&self) -> CpmSettings {
        CpmSettings {
            dispersion_ns_per_nm: self.dispersion_ns_per_nm,
            carrier_wavelength_nm: self.carrier_wavelength_nm,
            truncation_order: self.truncation_order,
            ..CpmSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformConfig {
    pub pulse_fwhm_ps: f64,
    pub dt_ps: f64,
    pub alpha_steps: usize,
    pub dispersions_ns_per_nm: Vec<f64>,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            pulse_fwhm_ps: 37.0,
            dt_ps: 1.0,
            alpha_steps: 16,
            dispersions_ns_per_nm: vec![2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 150.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub link: FiberLink,
    pub temperature: TemperatureModel,
    pub stabilizer: StabilizerPolicy,
    pub stabilize: bool,
    pub duration_s: f64,
    pub step_s: f64,
    /// Time within the drift trace at which the measurement is taken.
    pub measurement_time_s: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            link: FiberLink::default(),
            temperature: TemperatureModel::default(),
            stabilizer: StabilizerPolicy::default(),
            stabilize: true,
            duration_s: 86_400.0,
            step_s: 10.0,
            measurement_time_s: 43_200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub detector: DetectorModel,
    pub conditions: MeasurementConditions,
    pub pairs_per_setting: u64,
    pub idler_offset_segments: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            detector: DetectorModel::default(),
            conditions: MeasurementConditions {
                visibility_penalty: BTreeMap::from([("T".to_string(), 0.95), ("t".to_string(), 0.99)]),
                white_noise: 0.0,
                arrival_offset_ps: 0.0,
            },
            pairs_per_setting: 100_000,
            idler_offset_segments: DEFAULT_IDLER_OFFSET_SEGMENTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityConfig {
    pub total_bandwidth_ghz: f64,
    pub qubit_spectral_width_ghz: f64,
    pub stretched_bin_length_ps: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig { total_bandwidth_ghz: 5000.0, qubit_spectral_width_ghz: 25.0, stretched_bin_length_ps: 2000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub mc_samples: usize,
    pub histogram_bins: usize,
    pub fringe_points: usize,
    pub capacity: CapacityConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { mc_samples: 1_000_000, histogram_bins: 60, fringe_points: 32, capacity: CapacityConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub encoding: EncodingConfig,
    pub source: ExcitationTrain,
    pub cpm: CpmConfig,
    pub waveform: WaveformConfig,
    pub channel: ChannelConfig,
    pub detection: DetectionConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: "out".into(),
            encoding: EncodingConfig::default(),
            source: ExcitationTrain::default(),
            cpm: CpmConfig::default(),
            waveform: WaveformConfig::default(),
            channel: ChannelConfig::default(),
            detection: DetectionConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    /// Ideal detection with the calibrated white-noise weight.
    pub fn paper_default() -> Self {
        let mut cfg = RunConfig::default();
        cfg.detection.detector = DetectorModel::ideal();
        cfg.detection.conditions = MeasurementConditions {
            white_noise: CALIBRATED_WHITE_NOISE,
            ..MeasurementConditions::default()
        };
        cfg.detection.pairs_per_setting = CALIBRATED_PAIRS_PER_SETTING;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-default" => Ok(Self::paper_default()),
            "default" => Ok(Self::default()),
            other => Err(Error::InvalidParameter(format!("unknown preset {other:?}"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding.grid.validate()?;
        self.encoding.levels.check_grid(&self.encoding.grid)?;
        self.source.validate()?;
        self.cpm.base_settings().validate()?;
        self.channel.link.validate()?;
        if !(self.channel.duration_s > 0.0 && self.channel.step_s > 0.0) {
            return Err(Error::InvalidParameter("drift duration and step must be positive".into()));
        }
        self.detection.detector.validate()?;
        self.detection.conditions.validate(&self.encoding.levels)?;
        if self.detection.pairs_per_setting == 0 {
            return Err(Error::InvalidParameter("pairs_per_setting must be positive".into()));
        }
        if !(self.waveform.pulse_fwhm_ps > 0.0 && self.waveform.dt_ps > 0.0) {
            return Err(Error::InvalidParameter("pulse width and sample spacing must be positive".into()));
        }
        if self.analysis.fringe_points < 8 {
            return Err(Error::InvalidParameter("fringe scans need at least 8 points".into()));
        }
        Ok(())
    }
}
