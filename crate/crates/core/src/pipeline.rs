//! End-to-end runs: generate, transmit, measure, certify.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_interference, monte_carlo_error, multiplex_capacity, witness, CapacityReport, InterferenceFit, MonteCarloResult, WitnessReport};
use crate::channel::{simulate_drift, stabilize, transmit, StabilizedTrace, StabilizerPolicy, Transmission};
use crate::config::RunConfig;
use crate::cpm::{rf_for_shift, BeamSplitterKind};
use crate::detection::{
    build_schedule, extract_raw_projections, projection_table, projection_tables, sample_joint, JointProjectionTable,
    JointTemporalIntensity, ProjectionSet, RawProjections, SegmentSchedule, Statistics, WITNESS_BASES,
};
use crate::detection::sample_coincidences;
use crate::encoding::BinLayout;
use crate::error::{Error, Result};
use crate::modes::JointTwoPhotonState;
use crate::source::{generate_pair_state, is_cluster_state, ClusterCheck};
use crate::waveform::{visibility_bound_with, ChirpSpec, VisibilitySampling};

/// Independent seed for one stage of a run.
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STAGE_DRIFT: u64 = 1;
const STAGE_STABILIZER: u64 = 2;
const STAGE_SAMPLING: u64 = 3;
const STAGE_FRINGE: u64 = 4;
const STAGE_MONTE_CARLO: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub state: JointTwoPhotonState,
    pub layout: BinLayout,
    pub check: ClusterCheck,
}

pub fn generate(cfg: &RunConfig) -> Result<Generated> {
    let layout = cfg.encoding.levels.default_layout()?;
    let state = generate_pair_state(&cfg.source, &layout, &cfg.encoding.grid)?;
    let check = is_cluster_state(&state, &layout)?;
    Ok(Generated { state, layout, check })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRun {
    pub transmission: Transmission,
    pub drift: StabilizedTrace,
    /// The arrival offset exceeds the coincidence window.
    pub corrupted: bool,
}

pub fn drift(cfg: &RunConfig) -> Result<StabilizedTrace> {
    let ch = &cfg.channel;
    let trace = simulate_drift(&ch.link, ch.duration_s, ch.step_s, &ch.temperature, sub_seed(cfg.seed, STAGE_DRIFT))?;
    let policy = if ch.stabilize { ch.stabilizer } else { StabilizerPolicy::disabled() };
    stabilize(&trace, &policy, sub_seed(cfg.seed, STAGE_STABILIZER))
}

pub fn transmit_state(cfg: &RunConfig, state: &JointTwoPhotonState) -> Result<ChannelRun> {
    let drift = drift(cfg)?;
    let used = if cfg.channel.stabilize { &drift.residual } else { &drift.input };
    let transmission = transmit(state, &cfg.channel.link, Some(used), cfg.channel.measurement_time_s)?;
    let corrupted = transmission.arrival_offset_ps.abs() > cfg.detection.detector.coincidence_window_ps;
    Ok(ChannelRun { transmission, drift, corrupted })
}

pub fn schedule(cfg: &RunConfig) -> Result<SegmentSchedule> {
    build_schedule(&cfg.encoding.levels, &cfg.cpm.base_settings(), cfg.detection.idler_offset_segments)
}

fn statistics(cfg: &RunConfig, exact: bool, stage: u64) -> Statistics {
    if exact {
        Statistics::Exact
    } else {
        Statistics::Poisson { seed: sub_seed(cfg.seed, stage) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureRun {
    pub schedule: SegmentSchedule,
    pub tables: Vec<JointProjectionTable>,
    pub histograms: Vec<JointTemporalIntensity>,
    pub channel: ChannelRun,
}

pub fn measure(cfg: &RunConfig, exact: bool) -> Result<MeasureRun> {
    cfg.validate()?;
    let generated = generate(cfg)?;
    let channel = transmit_state(cfg, &generated.state)?;
    let schedule = schedule(cfg)?;
    let mut conditions = cfg.detection.conditions.clone();
    conditions.arrival_offset_ps += channel.transmission.arrival_offset_ps;
    let histograms = sample_coincidences(
        &channel.transmission.state,
        &schedule,
        &cfg.detection.detector,
        cfg.detection.pairs_per_setting,
        &conditions,
        statistics(cfg, exact, STAGE_SAMPLING),
    )?;
    let tables = projection_tables(&schedule, &cfg.encoding.grid)?;
    Ok(MeasureRun { schedule, tables, histograms, channel })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessRun {
    pub measure: MeasureRun,
    pub raw: RawProjections,
    pub projections: ProjectionSet,
    pub report: WitnessReport,
    pub monte_carlo: Option<MonteCarloResult>,
}

/// Full witness pipeline. Sampled runs also estimate the standard error
/// with `mc_samples` Poisson resamples; exact runs report zero error.
pub fn witness_run(cfg: &RunConfig, exact: bool) -> Result<WitnessRun> {
    let measure = measure(cfg, exact)?;
    let raw = extract_raw_projections(&measure.histograms, &measure.schedule, &cfg.encoding.grid, &WITNESS_BASES)?;
    let projections = raw.normalized()?;
    let mut report = witness(&projections)?;
    let monte_carlo = if exact {
        None
    } else {
        let mc = monte_carlo_error(
            &raw,
            cfg.analysis.mc_samples,
            sub_seed(cfg.seed, STAGE_MONTE_CARLO),
            cfg.analysis.histogram_bins,
        )?;
        report.stderr = mc.stderr;
        Some(mc)
    };
    Ok(WitnessRun { measure, raw, projections, report, monte_carlo })
}

/// One of the four two-qubit interference projections: two qubits on the
/// rotated level in the XY plane, the other two fixed in Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFamily {
    pub name: String,
    pub rotated_level: String,
    /// Fixed Z outcome of the other level, shared by both photons.
    pub fixed_bit: u8,
    /// +1 for `1 + cos 2α`, −1 for `1 − cos 2α`.
    pub expected_sign: i8,
}

impl FringeFamily {
    pub fn description(&self, fixed_level: &str) -> String {
        let b = self.fixed_bit;
        format!("|a_{r},s a_{r},i {b}_{f},s {b}_{f},i>", r = self.rotated_level, f = fixed_level)
    }

    /// Joint outcome bits over `(T_s, T_i, t_s, t_i)`; the rotated qubits
    /// take the `+` outcome.
    fn bits(&self, outer: &str) -> [u8; 4] {
        let b = self.fixed_bit;
        if self.rotated_level == outer {
            [0, 0, b, b]
        } else {
            [b, b, 0, 0]
        }
    }
}

pub fn fringe_families(cfg: &RunConfig) -> Result<Vec<FringeFamily>> {
    let levels = cfg.encoding.levels.levels();
    if levels.len() != 2 {
        return Err(Error::UnsupportedLevels(levels.len()));
    }
    let (outer, inner) = (&levels[0].name, &levels[1].name);
    let fam = |name: &str, level: &str, bit: u8, sign: i8| FringeFamily {
        name: name.into(),
        rotated_level: level.into(),
        fixed_bit: bit,
        expected_sign: sign,
    };
    Ok(vec![
        fam("d", outer, 0, 1),
        fam("e", inner, 0, 1),
        fam("f", outer, 1, -1),
        fam("g", inner, 1, -1),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub family: FringeFamily,
    pub description: String,
    pub fit: InterferenceFit,
    /// Sign of the fitted `cos 2α` term.
    pub sign: i8,
}

pub fn fringe_run(cfg: &RunConfig, exact: bool) -> Result<Vec<FringeScan>> {
    cfg.validate()?;
    let generated = generate(cfg)?;
    let channel = transmit_state(cfg, &generated.state)?;
    let base = schedule(cfg)?;
    let mut conditions = cfg.detection.conditions.clone();
    conditions.arrival_offset_ps += channel.transmission.arrival_offset_ps;
    let stats = statistics(cfg, exact, STAGE_FRINGE);
    let levels = cfg.encoding.levels.levels();
    let outer = levels[0].name.clone();
    let n = cfg.analysis.fringe_points;
    let alphas: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    let families = fringe_families(cfg)?;
    families
        .iter()
        .enumerate()
        .map(|(fi, fam)| {
            let fixed = levels.iter().find(|l| l.name != fam.rotated_level).map(|l| l.name.clone()).unwrap_or_default();
            let rates = alphas
                .par_iter()
                .enumerate()
                .map(|(j, &alpha)| {
                    let sched = base.with_rotation(&fam.rotated_level, alpha)?;
                    let joint = sched
                        .pairing
                        .iter()
                        .find(|p| {
                            p.signal.level == fam.rotated_level
                                && p.idler.level == fam.rotated_level
                                && matches!(p.signal.kind, BeamSplitterKind::RotatedXY(_))
                                && matches!(p.idler.kind, BeamSplitterKind::RotatedXY(_))
                        })
                        .ok_or_else(|| Error::MissingBasis(format!("XY_{0}|XY_{0}", fam.rotated_level)))?;
                    let hist = sample_joint(
                        &channel.transmission.state,
                        &sched,
                        joint,
                        &cfg.detection.detector,
                        cfg.detection.pairs_per_setting,
                        &conditions,
                        stats,
                        (fi * n + j) as u64,
                    )?;
                    let table = projection_table(&sched, joint, &cfg.encoding.grid)?;
                    let (s, i) = table.cell(&fam.bits(&outer))?;
                    Ok(hist.count_at(s, i))
                })
                .collect::<Result<Vec<f64>>>()?;
            let fit = fit_interference(&alphas, &rates, 2)?;
            let sign = if fit.phase_offset.cos() >= 0.0 { 1 } else { -1 };
            Ok(FringeScan { description: fam.description(&fixed), family: fam.clone(), fit, sign })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPoint {
    pub dispersion_ns_per_nm: f64,
    /// Innermost level (shortest separation).
    pub short: f64,
    /// Outermost level.
    pub long: f64,
}

pub fn visibility_sweep(cfg: &RunConfig) -> Result<Vec<VisibilityPoint>> {
    let ds = &cfg.waveform.dispersions_ns_per_nm;
    if ds.is_empty() {
        return Err(Error::InvalidParameter("empty dispersion list".into()));
    }
    let levels = cfg.encoding.levels.levels();
    let long = levels.first().map(|l| l.shift_ps).unwrap_or_default();
    let short = levels.last().map(|l| l.shift_ps).unwrap_or_default();
    let lambda = cfg.cpm.carrier_wavelength_nm;
    let sampling = VisibilitySampling { dt_ps: cfg.waveform.dt_ps, alpha_steps: cfg.waveform.alpha_steps };
    let fwhm = cfg.waveform.pulse_fwhm_ps;
    ds.par_iter()
        .map(|&d| {
            let chirp = ChirpSpec { dispersion_ns_per_nm: d, carrier_wavelength_nm: lambda };
            let v = |shift: f64| visibility_bound_with(shift, fwhm, &chirp, rf_for_shift(shift, d, lambda), sampling);
            Ok(VisibilityPoint { dispersion_ns_per_nm: d, short: v(short)?, long: v(long)? })
        })
        .collect()
}

pub fn capacity(cfg: &RunConfig) -> Result<CapacityReport> {
    let c = &cfg.analysis.capacity;
    multiplex_capacity(c.total_bandwidth_ghz, c.qubit_spectral_width_ghz, c.stretched_bin_length_ps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(0, 1), sub_seed(0, 2));
        assert_ne!(sub_seed(0, 2), sub_seed(1, 1));
        assert_eq!(sub_seed(7, 3), sub_seed(7, 3));
    }

    #[test]
    fn exact_witness_is_minus_one() {
        let mut cfg = RunConfig::default();
        cfg.detection.detector = crate::detection::DetectorModel::ideal();
        cfg.detection.conditions = Default::default();
        let run = witness_run(&cfg, true).unwrap();
        assert!((run.report.witness + 1.0).abs() < 1e-9, "{}", run.report.witness);
    }
}
