//! Segment-scheduled coincidence measurements.
//!
//! One RF frame holds 18 segments. Even segments act on the signal photon and
//! odd ones on the idler, which trails the signal by a fixed number of
//! segments. Each signal/idler segment pair realizes one joint beam-splitter
//! setting, so all nine settings are sampled within every frame.
//!
//! Every photon keeps the frequency orders `|m| ≤ 1` of its modulator. The
//! accepted orders within an output bin add coherently, with their mutual
//! coherence reduced to `√penalty` per photon, so a two-photon fringe loses a
//! factor `penalty`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpm::{
    balanced_efficiency, measurement_map, BeamSplitterKind, BeamSplitterSetting, CpmSettings, MeasurementMap,
};
use crate::encoding::{BinLayout, LevelSpec};
use crate::error::{Error, Result};
use crate::modes::{JointTwoPhotonState, ModeGrid, ModeMap, Photon, TimeFreqMode};

pub const FRAME_PERIOD_NS: f64 = 180.0;
pub const SEGMENT_LENGTH_NS: f64 = 10.0;
pub const DEFAULT_IDLER_OFFSET_SEGMENTS: usize = 5;

/// The three bases entering the witness, qubit order `(T_s, T_i, t_s, t_i)`.
pub const WITNESS_BASES: [&str; 3] = ["ZZZZ", "ZZXX", "XXZZ"];

const MATCH_TOLERANCE: f64 = 1e-9;
const KERNEL_FLOOR: f64 = 1e-15;

/// `(f_signal, f_idler, amplitude)` inside one time-bin pair.
type OrderAmplitude = (i64, i64, C64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub segment_index: usize,
    pub photon: Photon,
    pub setting: BeamSplitterSetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSetting {
    pub name: String,
    pub signal_segment: usize,
    pub idler_segment: usize,
    pub signal: BeamSplitterSetting,
    pub idler: BeamSplitterSetting,
}

impl JointSetting {
    pub fn label(&self) -> String {
        format!("{}|{}", self.signal.label(), self.idler.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSchedule {
    pub frame_period_ns: f64,
    pub segment_length_ns: f64,
    pub idler_offset_segments: usize,
    pub levels: LevelSpec,
    /// Dispersion and truncation shared by every modulator setting.
    pub cpm: CpmSettings,
    pub entries: Vec<ScheduleEntry>,
    pub pairing: Vec<JointSetting>,
}

pub fn build_default_schedule(levels: &LevelSpec, cpm: &CpmSettings) -> Result<SegmentSchedule> {
    build_schedule(levels, cpm, DEFAULT_IDLER_OFFSET_SEGMENTS)
}

/// Signal segments `2j`, idler segments `2j + offset mod 18`, and joint
/// setting `j` = `(options[j / 3], options[j % 3])` over `{Z, X_t, X_T}`.
pub fn build_schedule(levels: &LevelSpec, cpm: &CpmSettings, idler_offset_segments: usize) -> Result<SegmentSchedule> {
    if levels.num_levels() != 2 {
        return Err(Error::UnsupportedLevels(levels.num_levels()));
    }
    let segments = (FRAME_PERIOD_NS / SEGMENT_LENGTH_NS).round() as usize;
    if idler_offset_segments.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "idler offset of {idler_offset_segments} segments lands on signal segments"
        )));
    }
    let outer = &levels.levels()[0].name;
    let inner = &levels.levels()[1].name;
    let options = [BeamSplitterSetting::z(inner), BeamSplitterSetting::x(inner), BeamSplitterSetting::x(outer)];
    let mut pairing = Vec::with_capacity(9);
    let mut entries = Vec::with_capacity(segments);
    for j in 0..segments / 2 {
        let signal_segment = 2 * j;
        let idler_segment = (2 * j + idler_offset_segments) % segments;
        let joint = JointSetting {
            name: ((b'a' + j as u8) as char).to_string(),
            signal_segment,
            idler_segment,
            signal: options[j / 3].clone(),
            idler: options[j % 3].clone(),
        };
        entries.push(ScheduleEntry { segment_index: signal_segment, photon: Photon::Signal, setting: joint.signal.clone() });
        entries.push(ScheduleEntry { segment_index: idler_segment, photon: Photon::Idler, setting: joint.idler.clone() });
        pairing.push(joint);
    }
    entries.sort_by_key(|e| e.segment_index);
    Ok(SegmentSchedule {
        frame_period_ns: FRAME_PERIOD_NS,
        segment_length_ns: SEGMENT_LENGTH_NS,
        idler_offset_segments,
        levels: levels.clone(),
        cpm: *cpm,
        entries,
        pairing,
    })
}

impl SegmentSchedule {
    pub fn segment_count(&self) -> usize {
        (self.frame_period_ns / self.segment_length_ns).round() as usize
    }

    /// Replaces every X setting on `level` by an XY rotation at `alpha`.
    pub fn with_rotation(&self, level: &str, alpha: f64) -> Result<SegmentSchedule> {
        self.levels.level_index(level)?;
        let swap = |s: &BeamSplitterSetting| {
            if s.level == level && s.kind == BeamSplitterKind::X {
                BeamSplitterSetting::rotated(level, alpha)
            } else {
                s.clone()
            }
        };
        let mut out = self.clone();
        for e in &mut out.entries {
            e.setting = swap(&e.setting);
        }
        for p in &mut out.pairing {
            p.signal = swap(&p.signal);
            p.idler = swap(&p.idler);
        }
        Ok(out)
    }

    pub fn joint(&self, name: &str) -> Option<&JointSetting> {
        self.pairing.iter().find(|p| p.name == name)
    }

    /// Basis string of a joint setting over `(L0_s, L0_i, L1_s, L1_i, …)`,
    /// `None` when a photon is measured in a rotated basis.
    pub fn basis_of(&self, joint: &JointSetting) -> Result<Option<String>> {
        let s = self.photon_basis(&joint.signal)?;
        let i = self.photon_basis(&joint.idler)?;
        Ok(match (s, i) {
            (Some(s), Some(i)) => Some(s.iter().zip(&i).flat_map(|(&a, &b)| [a, b]).collect()),
            _ => None,
        })
    }

    fn photon_basis(&self, setting: &BeamSplitterSetting) -> Result<Option<Vec<char>>> {
        let idx = self.levels.level_index(&setting.level)?;
        let n = self.levels.num_levels();
        Ok(match setting.kind {
            BeamSplitterKind::Z => Some(vec!['Z'; n]),
            BeamSplitterKind::X => Some((0..n).map(|l| if l == idx { 'X' } else { 'Z' }).collect()),
            BeamSplitterKind::RotatedXY(_) => None,
        })
    }

    pub fn layout(&self) -> Result<BinLayout> {
        self.levels.default_layout()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub jitter_signal_ps: f64,
    pub jitter_idler_ps: f64,
    pub tdc_jitter_ps: f64,
    /// Half-width of the acceptance window around each bin centre.
    pub coincidence_window_ps: f64,
    /// Fraction of all coincidences spread uniformly over the histogram.
    pub dark_coincidence_rate: f64,
    pub efficiency: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            jitter_signal_ps: 17.0,
            jitter_idler_ps: 17.0,
            tdc_jitter_ps: 18.0,
            coincidence_window_ps: 50.0,
            dark_coincidence_rate: 0.0,
            efficiency: 1.0,
        }
    }
}

impl DetectorModel {
    /// No jitter, no background, unit efficiency.
    pub fn ideal() -> Self {
        DetectorModel {
            jitter_signal_ps: 0.0,
            jitter_idler_ps: 0.0,
            tdc_jitter_ps: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("jitter_signal_ps", self.jitter_signal_ps),
            ("jitter_idler_ps", self.jitter_idler_ps),
            ("tdc_jitter_ps", self.tdc_jitter_ps),
            ("dark_coincidence_rate", self.dark_coincidence_rate),
            ("efficiency", self.efficiency),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.coincidence_window_ps > 0.0) {
            return Err(Error::InvalidParameter("coincidence window must be positive".into()));
        }
        if self.dark_coincidence_rate > 1.0 {
            return Err(Error::InvalidParameter("dark coincidence fraction exceeds 1".into()));
        }
        Ok(())
    }

    pub fn combined_jitter_ps(&self, photon: Photon) -> f64 {
        let j = match photon {
            Photon::Signal => self.jitter_signal_ps,
            Photon::Idler => self.jitter_idler_ps,
        };
        j.hypot(self.tdc_jitter_ps)
    }
}

/// Physical imperfections applied on top of the ideal projections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConditions {
    /// Two-photon fringe visibility per level name.
    #[serde(default)]
    pub visibility_penalty: BTreeMap<String, f64>,
    /// Weight of the maximally mixed state mixed into the input.
    #[serde(default)]
    pub white_noise: f64,
    /// Residual arrival-time offset of both photons.
    #[serde(default)]
    pub arrival_offset_ps: f64,
}

impl MeasurementConditions {
    pub fn validate(&self, levels: &LevelSpec) -> Result<()> {
        for (name, &v) in &self.visibility_penalty {
            levels.level_index(name)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("visibility penalty {v} for {name:?} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.white_noise) {
            return Err(Error::InvalidParameter(format!("white noise {} outside [0, 1]", self.white_noise)));
        }
        if !self.arrival_offset_ps.is_finite() {
            return Err(Error::InvalidParameter("arrival offset must be finite".into()));
        }
        Ok(())
    }

    /// Offsets beyond half a coincidence window move counts into the wrong bins.
    pub fn corrupts_bins(&self, detector: &DetectorModel) -> bool {
        self.arrival_offset_ps.abs() > detector.coincidence_window_ps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistics {
    /// Expected counts, no sampling.
    Exact,
    Poisson { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTemporalIntensity {
    pub name: String,
    pub label: String,
    /// Grid time indices of the rows.
    pub signal_bins: Vec<i64>,
    /// Grid time indices of the columns.
    pub idler_bins: Vec<i64>,
    /// Whole numbers when sampled, expectations in exact mode.
    pub counts: Vec<Vec<f64>>,
    /// Counts outside the orthogonal output pairs.
    pub ancillary: f64,
}

impl JointTemporalIntensity {
    pub fn count_at(&self, signal_bin: i64, idler_bin: i64) -> f64 {
        let r = self.signal_bins.iter().position(|&b| b == signal_bin);
        let c = self.idler_bins.iter().position(|&b| b == idler_bin);
        match (r, c) {
            (Some(r), Some(c)) => self.counts[r][c],
            _ => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self, grid: &ModeGrid) -> String {
        let mut out = String::new();
        for (r, &s) in self.signal_bins.iter().enumerate() {
            for (c, &i) in self.idler_bins.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    self.name,
                    grid.time_of(s),
                    grid.time_of(i),
                    self.counts[r][c]
                );
            }
        }
        out
    }
}

pub fn histograms_to_csv(histograms: &[JointTemporalIntensity], grid: &ModeGrid) -> String {
    let mut out = String::from("setting,s_bin_ps,i_bin_ps,counts\n");
    for h in histograms {
        out.push_str(&h.to_csv(grid));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAssignment {
    pub out_bin: i64,
    pub time_ps: f64,
    /// Outcome digits, outermost level first; `None` for bins whose
    /// projector is not a basis state of the setting.
    pub outcome: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonProjectionTable {
    pub setting: String,
    pub assignments: Vec<BinAssignment>,
    /// Output bin of each outcome, indexed by the outcome's bit pattern.
    pub outcome_bins: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointProjectionTable {
    pub name: String,
    pub label: String,
    pub basis: Option<String>,
    pub signal: PhotonProjectionTable,
    pub idler: PhotonProjectionTable,
}

impl JointProjectionTable {
    /// Histogram cell of a joint outcome given as bits over
    /// `(L0_s, L0_i, L1_s, L1_i, …)`.
    pub fn cell(&self, joint_bits: &[u8]) -> Result<(i64, i64)> {
        let n = joint_bits.len() / 2;
        if !joint_bits.len().is_multiple_of(2) || 1usize << n != self.signal.outcome_bins.len() {
            return Err(Error::LengthMismatch { expected: 2 * self.signal.outcome_bins.len().trailing_zeros() as usize, got: joint_bits.len() });
        }
        let (mut s, mut i) = (0usize, 0usize);
        for l in 0..n {
            s = 2 * s + joint_bits[2 * l] as usize;
            i = 2 * i + joint_bits[2 * l + 1] as usize;
        }
        Ok((self.signal.outcome_bins[s], self.idler.outcome_bins[i]))
    }

    fn orthogonal_cells(&self) -> Vec<(i64, i64)> {
        let mut cells = Vec::new();
        for &s in &self.signal.outcome_bins {
            for &i in &self.idler.outcome_bins {
                cells.push((s, i));
            }
        }
        cells
    }
}

/// Everything needed to turn a photon's modes into output-bin amplitudes.
#[derive(Debug, Clone)]
struct PhotonResponse {
    map: MeasurementMap,
    accepted: Vec<i64>,
    coherence: f64,
}

impl PhotonResponse {
    fn new(setting: &BeamSplitterSetting, schedule: &SegmentSchedule, grid: &ModeGrid, penalty: Option<f64>) -> Result<Self> {
        let tagged = measurement_map(setting, &schedule.levels, &schedule.cpm, grid)?;
        let accepted = match &tagged.map {
            MeasurementMap::Identity => vec![0],
            MeasurementMap::Shift(m) => vec![-m.df.abs(), 0, m.df.abs()],
        };
        let coherence = penalty.map_or(1.0, f64::sqrt);
        Ok(PhotonResponse { map: tagged.map, accepted, coherence })
    }

    fn kernel(&self, f: i64, g: i64) -> f64 {
        if f == g {
            1.0
        } else {
            self.coherence
        }
    }

    fn accepts(&self, f: i64) -> bool {
        self.accepted.contains(&f)
    }

    /// Output-bin probabilities of a single photon in `input`.
    fn single_probabilities(&self, input: TimeFreqMode) -> BTreeMap<i64, f64> {
        let mut by_bin: BTreeMap<i64, Vec<(i64, C64)>> = BTreeMap::new();
        for (m, w) in self.map.image(input) {
            if self.accepts(m.f_index) {
                by_bin.entry(m.t_index).or_default().push((m.f_index, w));
            }
        }
        by_bin
            .into_iter()
            .map(|(t, comps)| {
                let mut p = 0.0;
                for &(f, a) in &comps {
                    for &(g, b) in &comps {
                        p += (a * b.conj()).re * self.kernel(f, g);
                    }
                }
                (t, p.max(0.0))
            })
            .collect()
    }

    /// Complex amplitude of each output bin for a photon entering bin `input`
    /// at the carrier, summed over accepted orders.
    fn bin_functional(&self, input: i64) -> BTreeMap<i64, C64> {
        let mut out: BTreeMap<i64, C64> = BTreeMap::new();
        for (m, w) in self.map.image(TimeFreqMode::new(input, 0)) {
            if self.accepts(m.f_index) {
                *out.entry(m.t_index).or_default() += w;
            }
        }
        out
    }
}

/// Exact output-bin probabilities for one joint setting, before jitter.
fn joint_output_probabilities(
    state: &JointTwoPhotonState,
    signal: &PhotonResponse,
    idler: &PhotonResponse,
    layout_bins: &[i64],
    white_noise: f64,
) -> Result<BTreeMap<(i64, i64), f64>> {
    let after = state
        .apply_single_photon_map(Photon::Signal, &signal.map)?
        .apply_single_photon_map(Photon::Idler, &idler.map)?;
    let mut groups: BTreeMap<(i64, i64), Vec<OrderAmplitude>> = BTreeMap::new();
    for (s, i, a) in after.iter() {
        if signal.accepts(s.f_index) && idler.accepts(i.f_index) {
            groups.entry((s.t_index, i.t_index)).or_default().push((s.f_index, i.f_index, a));
        }
    }
    let mut probs: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for (cell, comps) in groups {
        let mut p = 0.0;
        for &(fs, fi, a) in &comps {
            for &(gs, gi, b) in &comps {
                p += (a * b.conj()).re * signal.kernel(fs, gs) * idler.kernel(fi, gi);
            }
        }
        probs.insert(cell, (1.0 - white_noise) * p.max(0.0));
    }
    if white_noise > 0.0 {
        let n = layout_bins.len() as f64;
        let mut ps: BTreeMap<i64, f64> = BTreeMap::new();
        let mut pi: BTreeMap<i64, f64> = BTreeMap::new();
        for &b in layout_bins {
            for (t, p) in signal.single_probabilities(TimeFreqMode::new(b, 0)) {
                *ps.entry(t).or_default() += p / n;
            }
            for (t, p) in idler.single_probabilities(TimeFreqMode::new(b, 0)) {
                *pi.entry(t).or_default() += p / n;
            }
        }
        // the mixed part carries the same retained probability as the state
        let weight = white_noise * state.total_probability();
        for (&s, &a) in &ps {
            for (&i, &b) in &pi {
                *probs.entry((s, i)).or_default() += weight * a * b;
            }
        }
    }
    Ok(probs)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that a photon arriving at `arrival_ps` is assigned to the
/// window of width `2w` centred on `centre_ps`.
fn window_weight(centre_ps: f64, arrival_ps: f64, w: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        let d = arrival_ps - centre_ps;
        return if d >= -w && d < w { 1.0 } else { 0.0 };
    }
    normal_cdf((centre_ps + w - arrival_ps) / sigma) - normal_cdf((centre_ps - w - arrival_ps) / sigma)
}

/// Jitter smearing of one photon's true bins onto histogram bins.
fn smear_axis(bins: &[i64], grid: &ModeGrid, w: f64, sigma: f64, offset: f64) -> (Vec<i64>, Vec<Vec<f64>>) {
    let q = grid.time_quantum_ps;
    let reach = offset.abs() + w + 9.0 * sigma;
    let pad = (reach / q).ceil() as i64;
    let lo = bins.iter().min().copied().unwrap_or(0) - pad;
    let hi = bins.iter().max().copied().unwrap_or(0) + pad;
    let out: Vec<i64> = (lo..=hi).collect();
    let kernel = bins
        .iter()
        .map(|&b| {
            out.iter()
                .map(|&o| {
                    let k = window_weight(grid.time_of(o), grid.time_of(b) + offset, w, sigma);
                    if k < KERNEL_FLOOR {
                        0.0
                    } else {
                        k
                    }
                })
                .collect()
        })
        .collect();
    (out, kernel)
}

/// Expected coincidences per incident pair on the detected histogram grid.
fn detected_probabilities(
    probs: &BTreeMap<(i64, i64), f64>,
    grid: &ModeGrid,
    detector: &DetectorModel,
    offset_ps: f64,
) -> (Vec<i64>, Vec<i64>, Vec<Vec<f64>>) {
    let mut sb: Vec<i64> = probs.keys().map(|k| k.0).collect();
    let mut ib: Vec<i64> = probs.keys().map(|k| k.1).collect();
    sb.sort_unstable();
    sb.dedup();
    ib.sort_unstable();
    ib.dedup();
    let w = detector.coincidence_window_ps;
    let (rows, ks) = smear_axis(&sb, grid, w, detector.combined_jitter_ps(Photon::Signal), offset_ps);
    let (cols, ki) = smear_axis(&ib, grid, w, detector.combined_jitter_ps(Photon::Idler), offset_ps);
    let mut m = vec![vec![0.0; cols.len()]; rows.len()];
    for (&(s, i), &p) in probs {
        let a = sb.binary_search(&s).unwrap_or_default();
        let b = ib.binary_search(&i).unwrap_or_default();
        for (r, &x) in ks[a].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (c, &y) in ki[b].iter().enumerate() {
                m[r][c] += p * x * y;
            }
        }
    }
    let d = detector.dark_coincidence_rate;
    if d > 0.0 {
        let total: f64 = m.iter().flatten().sum();
        let uniform = total / (rows.len() * cols.len()) as f64;
        for v in m.iter_mut().flatten() {
            *v = (1.0 - d) * *v + d * uniform;
        }
    }
    (rows, cols, m)
}

fn photon_table(
    setting: &BeamSplitterSetting,
    response: &PhotonResponse,
    layout: &BinLayout,
    layout_bins: &[i64],
    levels: &LevelSpec,
    grid: &ModeGrid,
) -> Result<PhotonProjectionTable> {
    let n_levels = levels.num_levels();
    let nb = layout_bins.len();
    // u[b][k]: conjugated amplitude of output bin b for input bin k
    let mut functionals: BTreeMap<i64, Vec<C64>> = BTreeMap::new();
    for (k, &bin) in layout_bins.iter().enumerate() {
        for (t, a) in response.bin_functional(bin) {
            functionals.entry(t).or_insert_with(|| vec![C64::default(); nb])[k] = a.conj();
        }
    }
    let candidates: Vec<(Vec<u8>, Vec<C64>)> = (0..nb)
        .map(|o| {
            let bits = layout.bin_to_bits(o)?;
            let vec = (0..nb)
                .map(|k| {
                    let kb = layout.bin_to_bits(k)?;
                    basis_component(setting, levels, &bits, &kb)
                })
                .collect::<Result<Vec<C64>>>()?;
            Ok((bits, vec))
        })
        .collect::<Result<_>>()?;
    let mut outcome_bins = vec![None; nb];
    let mut assignments = Vec::new();
    for (&t, u) in &functionals {
        let un: f64 = u.iter().map(|x| x.norm_sqr()).sum();
        if un < KERNEL_FLOOR {
            continue;
        }
        let mut outcome = None;
        for (o, (bits, c)) in candidates.iter().enumerate() {
            let cn: f64 = c.iter().map(|x| x.norm_sqr()).sum();
            let ov: C64 = c.iter().zip(u).map(|(a, b)| a.conj() * b).sum();
            if ov.norm_sqr() / (cn * un) > 1.0 - MATCH_TOLERANCE {
                if outcome_bins[o].is_some() {
                    return Err(Error::InconsistentSettings(format!(
                        "{}: outcome {bits:?} appears in two output bins",
                        setting.label()
                    )));
                }
                outcome_bins[o] = Some(t);
                outcome = Some(bits.clone());
            }
        }
        assignments.push(BinAssignment { out_bin: t, time_ps: grid.time_of(t), outcome });
    }
    let outcome_bins = outcome_bins
        .into_iter()
        .enumerate()
        .map(|(o, b)| {
            b.ok_or_else(|| {
                Error::InconsistentSettings(format!("{}: no output bin projects onto outcome {o}", setting.label()))
            })
        })
        .collect::<Result<Vec<i64>>>()?;
    debug_assert_eq!(n_levels, layout.num_levels());
    Ok(PhotonProjectionTable { setting: setting.label(), assignments, outcome_bins })
}

/// Amplitude of input bin digits `k` in the basis state with outcome `bits`.
fn basis_component(setting: &BeamSplitterSetting, levels: &LevelSpec, bits: &[u8], k: &[u8]) -> Result<C64> {
    let rotated = levels.level_index(&setting.level)?;
    let mut amp = C64::new(1.0, 0.0);
    for (l, (&b, &c)) in bits.iter().zip(k).enumerate() {
        match setting.kind.xy_angle() {
            Some(phi) if l == rotated => {
                let f = std::f64::consts::FRAC_1_SQRT_2;
                if c == 1 {
                    let sign = if b == 0 { 1.0 } else { -1.0 };
                    amp *= C64::from_polar(sign * f, phi);
                } else {
                    amp *= f;
                }
            }
            _ => {
                if b != c {
                    return Ok(C64::default());
                }
            }
        }
    }
    Ok(amp)
}

/// Derives which output bins carry orthogonal projections for each joint
/// setting of the schedule.
pub fn projection_tables(schedule: &SegmentSchedule, grid: &ModeGrid) -> Result<Vec<JointProjectionTable>> {
    schedule.pairing.iter().map(|j| projection_table(schedule, j, grid)).collect()
}

pub fn projection_table(schedule: &SegmentSchedule, joint: &JointSetting, grid: &ModeGrid) -> Result<JointProjectionTable> {
    let layout = schedule.layout()?;
    let bins = layout.time_indices(grid)?;
    let rs = PhotonResponse::new(&joint.signal, schedule, grid, None)?;
    let ri = PhotonResponse::new(&joint.idler, schedule, grid, None)?;
    Ok(JointProjectionTable {
        name: joint.name.clone(),
        label: joint.label(),
        basis: schedule.basis_of(joint)?,
        signal: photon_table(&joint.signal, &rs, &layout, &bins, &schedule.levels, grid)?,
        idler: photon_table(&joint.idler, &ri, &layout, &bins, &schedule.levels, grid)?,
    })
}

/// Simulates one joint setting. `stream` selects an independent random
/// stream for Poisson draws.
#[allow(clippy::too_many_arguments)]
pub fn sample_joint(
    state: &JointTwoPhotonState,
    schedule: &SegmentSchedule,
    joint: &JointSetting,
    detector: &DetectorModel,
    pairs_per_setting: u64,
    conditions: &MeasurementConditions,
    statistics: Statistics,
    stream: u64,
) -> Result<JointTemporalIntensity> {
    let grid = state.grid();
    let layout = schedule.layout()?;
    let bins = layout.time_indices(grid)?;
    let pen = |s: &BeamSplitterSetting| conditions.visibility_penalty.get(&s.level).copied();
    let rs = PhotonResponse::new(&joint.signal, schedule, grid, pen(&joint.signal))?;
    let ri = PhotonResponse::new(&joint.idler, schedule, grid, pen(&joint.idler))?;
    let probs = joint_output_probabilities(state, &rs, &ri, &bins, conditions.white_noise)?;
    let (rows, cols, p) = detected_probabilities(&probs, grid, detector, conditions.arrival_offset_ps);
    let scale = pairs_per_setting as f64 * detector.efficiency;
    let counts: Vec<Vec<f64>> = match statistics {
        Statistics::Exact => p.iter().map(|r| r.iter().map(|&x| x * scale).collect()).collect(),
        Statistics::Poisson { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            p.iter()
                .map(|r| {
                    r.iter()
                        .map(|&x| {
                            let lambda = x * scale;
                            if lambda > 0.0 {
                                Poisson::new(lambda).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    let table = projection_table(schedule, joint, grid)?;
    let mut hist = JointTemporalIntensity {
        name: joint.name.clone(),
        label: joint.label(),
        signal_bins: rows,
        idler_bins: cols,
        counts,
        ancillary: 0.0,
    };
    let orthogonal: f64 = table.orthogonal_cells().iter().map(|&(s, i)| hist.count_at(s, i)).sum();
    hist.ancillary = (hist.total() - orthogonal).max(0.0);
    Ok(hist)
}

/// Simulates all joint settings of the schedule, in schedule order.
pub fn sample_coincidences(
    state: &JointTwoPhotonState,
    schedule: &SegmentSchedule,
    detector: &DetectorModel,
    pairs_per_setting: u64,
    conditions: &MeasurementConditions,
    statistics: Statistics,
) -> Result<Vec<JointTemporalIntensity>> {
    detector.validate()?;
    conditions.validate(&schedule.levels)?;
    if pairs_per_setting == 0 {
        return Err(Error::InvalidParameter("pairs_per_setting must be positive".into()));
    }
    schedule
        .pairing
        .par_iter()
        .enumerate()
        .map(|(j, joint)| {
            sample_joint(state, schedule, joint, detector, pairs_per_setting, conditions, statistics, j as u64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCounts {
    pub basis: String,
    pub setting: String,
    /// Raw counts indexed by the outcome bits over `(T_s, T_i, t_s, t_i)`.
    pub counts: Vec<f64>,
    /// Factor applied before normalization.
    pub correction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProjections {
    pub bases: Vec<BasisCounts>,
}

impl RawProjections {
    pub fn normalized(&self) -> Result<ProjectionSet> {
        let mut bases = BTreeMap::new();
        for b in &self.bases {
            let corrected: Vec<f64> = b.counts.iter().map(|c| c * b.correction).collect();
            let total: f64 = corrected.iter().sum();
            if !(total > 0.0) {
                return Err(Error::MissingBasis(format!("{} has no counts", b.basis)));
            }
            bases.insert(b.basis.clone(), corrected.iter().map(|c| c / total).collect());
        }
        Ok(ProjectionSet { bases })
    }

    pub fn total(&self) -> f64 {
        self.bases.iter().flat_map(|b| b.counts.iter()).sum()
    }

    pub fn scaled(&self, factor: f64) -> RawProjections {
        let mut out = self.clone();
        for b in &mut out.bases {
            for c in &mut b.counts {
                *c *= factor;
            }
        }
        out
    }
}

/// Normalized outcome distributions keyed by basis string.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectionSet {
    pub bases: BTreeMap<String, Vec<f64>>,
}

impl ProjectionSet {
    pub fn basis(&self, name: &str) -> Result<&[f64]> {
        self.bases.get(name).map(Vec::as_slice).ok_or_else(|| Error::MissingBasis(name.into()))
    }

    pub fn len(&self) -> usize {
        self.bases.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("basis,outcome,probability\n");
        for (name, values) in &self.bases {
            let width = values.len().trailing_zeros() as usize;
            for (o, v) in values.iter().enumerate() {
                let _ = writeln!(out, "{name},{o:0width$b},{v}");
            }
        }
        out
    }
}

/// Joint outcome index over `(L0_s, L0_i, L1_s, L1_i, …)` → per-photon
/// outcome indices, outermost level most significant.
fn split_joint_index(index: usize, n_levels: usize) -> (usize, usize) {
    let (mut s, mut i) = (0usize, 0usize);
    for l in 0..n_levels {
        let shift = 2 * (n_levels - 1 - l);
        s = 2 * s + ((index >> (shift + 1)) & 1);
        i = 2 * i + ((index >> shift) & 1);
    }
    (s, i)
}

/// Collects the raw orthogonal-bin counts of the requested bases.
pub fn extract_raw_projections(
    histograms: &[JointTemporalIntensity],
    schedule: &SegmentSchedule,
    grid: &ModeGrid,
    bases: &[&str],
) -> Result<RawProjections> {
    let eta = balanced_efficiency();
    let n_levels = schedule.levels.num_levels();
    let mut out = Vec::new();
    for &basis in bases {
        let mut found = None;
        for joint in &schedule.pairing {
            if schedule.basis_of(joint)?.as_deref() != Some(basis) {
                continue;
            }
            if let Some(h) = histograms.iter().find(|h| h.name == joint.name) {
                found = Some((joint, h));
                break;
            }
        }
        let (joint, hist) = found.ok_or_else(|| Error::MissingBasis(basis.into()))?;
        let table = projection_table(schedule, joint, grid)?;
        let counts = (0..1usize << (2 * n_levels))
            .map(|o| {
                let (s, i) = split_joint_index(o, n_levels);
                hist.count_at(table.signal.outcome_bins[s], table.idler.outcome_bins[i])
            })
            .collect();
        let z_photons = [&joint.signal, &joint.idler].iter().filter(|s| s.kind.is_z()).count();
        out.push(BasisCounts {
            basis: basis.into(),
            setting: joint.name.clone(),
            counts,
            correction: eta.powi(z_photons as i32),
        });
    }
    Ok(RawProjections { bases: out })
}

/// The 48 normalized witness projections.
pub fn extract_projections(
    histograms: &[JointTemporalIntensity],
    schedule: &SegmentSchedule,
    grid: &ModeGrid,
) -> Result<ProjectionSet> {
    extract_raw_projections(histograms, schedule, grid, &WITNESS_BASES)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::reference_cluster_state;

    fn setup() -> (SegmentSchedule, ModeGrid, JointTwoPhotonState) {
        let grid = ModeGrid::default();
        let sched = build_default_schedule(&LevelSpec::default(), &CpmSettings::default()).unwrap();
        let st = reference_cluster_state(&BinLayout::default(), &grid).unwrap();
        (sched, grid, st)
    }

    #[test]
    fn schedule_shape() {
        let (s, _, _) = setup();
        assert_eq!(s.pairing.len(), 9);
        assert_eq!(s.entries.len(), 18);
        let mut segs: Vec<usize> = s.entries.iter().map(|e| e.segment_index).collect();
        segs.dedup();
        assert_eq!(segs, (0..18).collect::<Vec<_>>());
        for p in &s.pairing {
            assert_eq!(p.idler_segment, (p.signal_segment + 5) % 18);
        }
        let bases: Vec<_> = s.pairing.iter().map(|p| s.basis_of(p).unwrap().unwrap()).collect();
        for b in WITNESS_BASES {
            assert!(bases.iter().any(|x| x == b), "{b}");
        }
        let three = LevelSpec::new(
            vec![
                crate::encoding::Level::new("A", 900.0, 11.25),
                crate::encoding::Level::new("T", 300.0, 3.75),
                crate::encoding::Level::new("t", 100.0, 1.25),
            ],
            2,
        )
        .unwrap();
        assert_eq!(build_default_schedule(&three, &CpmSettings::default()), Err(Error::UnsupportedLevels(3)));
        assert!(build_schedule(&LevelSpec::default(), &CpmSettings::default(), 4).is_err());
    }

    #[test]
    fn derived_tables() {
        let (s, grid, _) = setup();
        let tables = projection_tables(&s, &grid).unwrap();
        let xt = tables.iter().find(|t| t.basis.as_deref() == Some("ZZXX")).unwrap();
        // outcome index = 2·T + t_x
        assert_eq!(xt.signal.outcome_bins, vec![1, 0, 4, 3]);
        let xtt = tables.iter().find(|t| t.basis.as_deref() == Some("XXZZ")).unwrap();
        // outcome index = 2·T_x + t
        assert_eq!(xtt.signal.outcome_bins, vec![3, 4, 0, 1]);
        let z = tables.iter().find(|t| t.basis.as_deref() == Some("ZZZZ")).unwrap();
        assert_eq!(z.signal.outcome_bins, vec![0, 1, 3, 4]);
        let dropped: Vec<i64> = xt.signal.assignments.iter().filter(|a| a.outcome.is_none()).map(|a| a.out_bin).collect();
        assert!(dropped.contains(&2) && dropped.contains(&-1) && dropped.contains(&5));
    }

    #[test]
    fn split_index() {
        // bits (T_s, T_i, t_s, t_i) = (1, 0, 0, 1)
        assert_eq!(split_joint_index(0b1001, 2), (0b10, 0b01));
        assert_eq!(split_joint_index(0b0110, 2), (0b01, 0b10));
    }

    #[test]
    fn ideal_zz_is_diagonal() {
        let (s, grid, st) = setup();
        let h = sample_joint(
            &st,
            &s,
            &s.pairing[0],
            &DetectorModel::ideal(),
            1000,
            &MeasurementConditions::default(),
            Statistics::Exact,
            0,
        )
        .unwrap();
        for &a in &[0, 1, 3, 4] {
            for &b in &[0, 1, 3, 4] {
                let want = if a == b { 250.0 } else { 0.0 };
                assert!((h.count_at(a, b) - want).abs() < 1e-9);
            }
        }
        assert!(h.ancillary.abs() < 1e-9);
        let p = extract_projections(
            &sample_coincidences(&st, &s, &DetectorModel::ideal(), 1000, &MeasurementConditions::default(), Statistics::Exact)
                .unwrap(),
            &s,
            &grid,
        )
        .unwrap();
        let zz = p.basis("ZZZZ").unwrap();
        for (o, &v) in zz.iter().enumerate() {
            let want = if [0b0000, 0b0011, 0b1100, 0b1111].contains(&o) { 0.25 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "{o}: {v}");
        }
    }

    #[test]
    fn jitter_tail() {
        let d = DetectorModel::default();
        let sigma = d.combined_jitter_ps(Photon::Signal);
        assert!((sigma - 24.7588).abs() < 1e-3);
        let one_side = 1.0 - normal_cdf(50.0 / sigma);
        assert!(one_side < 0.022 && one_side > 0.021);
        let inside = window_weight(0.0, 0.0, 50.0, sigma);
        assert!((inside - (1.0 - 2.0 * one_side)).abs() < 1e-12);
    }

    #[test]
    fn seeded_sampling_repeats() {
        let (s, _, st) = setup();
        let d = DetectorModel::default();
        let c = MeasurementConditions::default();
        let a = sample_coincidences(&st, &s, &d, 5000, &c, Statistics::Poisson { seed: 3 }).unwrap();
        let b = sample_coincidences(&st, &s, &d, 5000, &c, Statistics::Poisson { seed: 3 }).unwrap();
        let e = sample_coincidences(&st, &s, &d, 5000, &c, Statistics::Poisson { seed: 4 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, e);
        assert!(a.iter().flat_map(|h| h.counts.iter().flatten()).all(|&x| x >= 0.0 && x.fract() == 0.0));
    }

    #[test]
    fn missing_basis() {
        let (s, grid, st) = setup();
        let hs = sample_coincidences(&st, &s, &DetectorModel::ideal(), 10, &MeasurementConditions::default(), Statistics::Exact)
            .unwrap();
        let only_z: Vec<_> = hs.into_iter().filter(|h| h.name == "a").collect();
        assert!(matches!(extract_projections(&only_z, &s, &grid), Err(Error::MissingBasis(b)) if b == "ZZXX"));
    }
}
