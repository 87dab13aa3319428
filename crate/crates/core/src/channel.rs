//! Fiber link: loss, thermal time-of-flight drift and its feedback correction.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::JointTwoPhotonState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberLink {
    pub length_km: f64,
    pub loss_db: f64,
    pub dispersion_ps_per_nm: f64,
    pub compensator_dispersion_ps_per_nm: f64,
    pub compensator_loss_db: f64,
    /// Time-of-flight change per kelvin and kilometre.
    pub thermal_sensitivity_ps_per_k_km: f64,
    /// Dispersion left after compensation that the state model applies.
    pub residual_dispersion_ps_per_nm: f64,
}

impl Default for FiberLink {
    fn default() -> Self {
        FiberLink {
            length_km: 25.0,
            loss_db: 5.3,
            dispersion_ps_per_nm: 425.0,
            compensator_dispersion_ps_per_nm: -450.0,
            compensator_loss_db: 2.4,
            thermal_sensitivity_ps_per_k_km: 36.8,
            residual_dispersion_ps_per_nm: 0.0,
        }
    }
}

impl FiberLink {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0) || !(self.loss_db >= 0.0) || !(self.compensator_loss_db >= 0.0) {
            return Err(Error::InvalidParameter("link length and losses must be nonnegative".into()));
        }
        if !(self.thermal_sensitivity_ps_per_k_km >= 0.0) {
            return Err(Error::InvalidParameter("thermal sensitivity must be nonnegative".into()));
        }
        Ok(())
    }

    /// A link of zero length is no link at all.
    pub fn is_bypass(&self) -> bool {
        self.length_km == 0.0
    }

    pub fn total_loss_db(&self) -> f64 {
        if self.is_bypass() {
            0.0
        } else {
            self.loss_db + self.compensator_loss_db
        }
    }

    /// Retained probability per photon pair.
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.total_loss_db() / 10.0)
    }

    /// Offset per kelvin of fiber temperature change.
    pub fn ps_per_kelvin(&self) -> f64 {
        self.thermal_sensitivity_ps_per_k_km * self.length_km
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub state: JointTwoPhotonState,
    pub arrival_offset_ps: f64,
}

/// Applies the link loss and reads the arrival offset from `drift` at `at_s`.
pub fn transmit(
    state: &JointTwoPhotonState,
    link: &FiberLink,
    drift: Option<&DriftTrace>,
    at_s: f64,
) -> Result<Transmission> {
    link.validate()?;
    if link.is_bypass() {
        return Ok(Transmission { state: state.clone(), arrival_offset_ps: 0.0 });
    }
    let out = state.scaled(C64::new(link.transmission().sqrt(), 0.0));
    let arrival_offset_ps = drift.map(|d| d.offset_at(at_s)).unwrap_or(0.0);
    Ok(Transmission { state: out, arrival_offset_ps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemperatureModel {
    /// Two cascaded first-order stages, each with time constant `tau_s`,
    /// driven by white noise; stationary SD `sd_k`, hard limit `clamp_k`.
    Smooth { sd_k: f64, tau_s: f64, clamp_k: f64 },
    OrnsteinUhlenbeck { sd_k: f64, tau_s: f64, clamp_k: f64 },
    Sinusoid { amplitude_k: f64, period_s: f64 },
}

impl Default for TemperatureModel {
    fn default() -> Self {
        TemperatureModel::Smooth { sd_k: 0.033, tau_s: 4.0 * 3600.0, clamp_k: 0.1 }
    }
}

impl TemperatureModel {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TemperatureModel::Smooth { sd_k, tau_s, clamp_k }
            | TemperatureModel::OrnsteinUhlenbeck { sd_k, tau_s, clamp_k } => {
                sd_k >= 0.0 && tau_s > 0.0 && clamp_k >= 0.0
            }
            TemperatureModel::Sinusoid { amplitude_k, period_s } => amplitude_k >= 0.0 && period_s > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad temperature model {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrace {
    pub times_s: Vec<f64>,
    pub offsets_ps: Vec<f64>,
}

impl DriftTrace {
    pub fn new(times_s: Vec<f64>, offsets_ps: Vec<f64>) -> Result<Self> {
        if times_s.len() != offsets_ps.len() {
            return Err(Error::LengthMismatch { expected: times_s.len(), got: offsets_ps.len() });
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("trace times must increase".into()));
        }
        Ok(DriftTrace { times_s, offsets_ps })
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.times_s.first(), self.times_s.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn rms_ps(&self) -> f64 {
        rms(&self.offsets_ps)
    }

    pub fn peak_ps(&self) -> f64 {
        self.offsets_ps.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Linear interpolation, clamped at the ends.
    pub fn offset_at(&self, t_s: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let k = self.times_s.partition_point(|&t| t <= t_s);
        if k == 0 {
            return self.offsets_ps[0];
        }
        if k == self.len() {
            return self.offsets_ps[k - 1];
        }
        let (t0, t1) = (self.times_s[k - 1], self.times_s[k]);
        let w = (t_s - t0) / (t1 - t0);
        self.offsets_ps[k - 1] * (1.0 - w) + self.offsets_ps[k] * w
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,offset_ps\n");
        for (t, o) in self.times_s.iter().zip(&self.offsets_ps) {
            out.push_str(&format!("{t},{o:.6}\n"));
        }
        out
    }
}

fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Fiber temperature excursion sampled every `step_s`, converted to a
/// time-of-flight offset.
pub fn simulate_drift(
    link: &FiberLink,
    duration_s: f64,
    step_s: f64,
    model: &TemperatureModel,
    seed: u64,
) -> Result<DriftTrace> {
    link.validate()?;
    model.validate()?;
    if !(duration_s > 0.0) || !(step_s > 0.0) {
        return Err(Error::InvalidParameter("duration and step must be positive".into()));
    }
    let n = (duration_s / step_s).floor() as usize + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * step_s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let temps: Vec<f64> = match *model {
        TemperatureModel::Sinusoid { amplitude_k, period_s } => times
            .iter()
            .map(|t| amplitude_k * (std::f64::consts::TAU * t / period_s).sin())
            .collect(),
        TemperatureModel::OrnsteinUhlenbeck { sd_k, tau_s, clamp_k } => {
            let a = (-step_s / tau_s).exp();
            let kick = sd_k * (1.0 - a * a).sqrt();
            let mut x = sd_k * normal();
            (0..n)
                .map(|k| {
                    if k > 0 {
                        x = a * x + kick * normal();
                    }
                    x.clamp(-clamp_k, clamp_k)
                })
                .collect()
        }
        TemperatureModel::Smooth { sd_k, tau_s, clamp_k } => {
            // the second stage halves the variance of the first
            let s1 = sd_k * std::f64::consts::SQRT_2;
            let a = (-step_s / tau_s).exp();
            let kick = s1 * (1.0 - a * a).sqrt();
            let mut x1 = s1 * normal();
            let mut x2 = 0.5 * x1 + 0.5 * s1 * normal();
            (0..n)
                .map(|k| {
                    if k > 0 {
                        x2 = a * x2 + (1.0 - a) * x1;
                        x1 = a * x1 + kick * normal();
                    }
                    x2.clamp(-clamp_k, clamp_k)
                })
                .collect()
        }
    };
    let scale = link.ps_per_kelvin();
    DriftTrace::new(times, temps.iter().map(|t| t * scale).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizerPolicy {
    /// Time between corrections; infinite disables the loop.
    pub correction_interval_s: f64,
    pub estimator_noise_ps: f64,
    pub actuator_resolution_ps: f64,
}

impl Default for StabilizerPolicy {
    fn default() -> Self {
        StabilizerPolicy { correction_interval_s: 900.0, estimator_noise_ps: 0.5, actuator_resolution_ps: 0.1 }
    }
}

impl StabilizerPolicy {
    pub fn disabled() -> Self {
        StabilizerPolicy { correction_interval_s: f64::INFINITY, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.correction_interval_s > 0.0) || !(self.estimator_noise_ps >= 0.0) || !(self.actuator_resolution_ps >= 0.0) {
            return Err(Error::InvalidParameter(format!("bad stabilizer policy {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizedTrace {
    pub input: DriftTrace,
    pub residual: DriftTrace,
    /// Residual RMS from the first correction onwards.
    pub rms_ps: f64,
    /// Input RMS over the same span.
    pub input_rms_ps: f64,
    pub corrections: usize,
}

impl StabilizedTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,offset_ps,corrected_offset_ps\n");
        for k in 0..self.input.len() {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                self.input.times_s[k], self.input.offsets_ps[k], self.residual.offsets_ps[k]
            ));
        }
        out
    }
}

/// Feedback loop: at every correction epoch the delay line is moved to the
/// mean offset seen over the previous interval, misread by Gaussian
/// estimator noise and rounded to the actuator step.
pub fn stabilize(trace: &DriftTrace, policy: &StabilizerPolicy, seed: u64) -> Result<StabilizedTrace> {
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_start = trace.times_s.first().copied().unwrap_or(0.0);
    let mut residual = Vec::with_capacity(trace.len());
    let mut correction = 0.0;
    let mut next_epoch = t_start + policy.correction_interval_s;
    let mut window_sum = 0.0;
    let mut window_n = 0usize;
    let mut first_corrected: Option<usize> = None;
    let mut corrections = 0;
    for (k, (&t, &offset)) in trace.times_s.iter().zip(&trace.offsets_ps).enumerate() {
        if t >= next_epoch {
            if window_n > 0 {
                let noise: f64 = rng.sample(StandardNormal);
                let estimate = window_sum / window_n as f64 + policy.estimator_noise_ps * noise;
                correction = quantize(estimate, policy.actuator_resolution_ps);
                corrections += 1;
                first_corrected.get_or_insert(k);
            }
            window_sum = 0.0;
            window_n = 0;
            while next_epoch <= t {
                next_epoch += policy.correction_interval_s;
            }
        }
        window_sum += offset;
        window_n += 1;
        residual.push(offset - correction);
    }
    let from = first_corrected.unwrap_or(0);
    Ok(StabilizedTrace {
        rms_ps: rms(&residual[from..]),
        input_rms_ps: rms(&trace.offsets_ps[from..]),
        residual: DriftTrace { times_s: trace.times_s.clone(), offsets_ps: residual },
        input: trace.clone(),
        corrections,
    })
}

fn quantize(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{ModeGrid, TimeFreqMode};

    fn state() -> JointTwoPhotonState {
        let m = TimeFreqMode::new(0, 0);
        let n = TimeFreqMode::new(1, 0);
        JointTwoPhotonState::from_amplitudes(
            ModeGrid::default(),
            [((m, m), C64::new(0.6, 0.0)), ((n, n), C64::new(0.0, 0.8))],
        )
    }

    #[test]
    fn loss_budget() {
        let link = FiberLink::default();
        assert!((link.transmission() - 0.169_824).abs() < 1e-6);
        let out = transmit(&state(), &link, None, 0.0).unwrap();
        assert!((out.state.norm_tracking() - 0.169_824).abs() < 1e-6);
        let a = out.state.normalize().unwrap();
        assert!((a.inner(&state()) - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_length_link_is_identity() {
        let link = FiberLink { length_km: 0.0, ..Default::default() };
        let trace = DriftTrace::new(vec![0.0, 1.0], vec![5.0, 5.0]).unwrap();
        let out = transmit(&state(), &link, Some(&trace), 0.5).unwrap();
        assert_eq!(out.state, state());
        assert_eq!(out.arrival_offset_ps, 0.0);
    }

    #[test]
    fn peak_offset_of_a_tenth_kelvin() {
        let model = TemperatureModel::Sinusoid { amplitude_k: 0.1, period_s: 86_400.0 };
        let tr = simulate_drift(&FiberLink::default(), 86_400.0, 10.0, &model, 1).unwrap();
        assert!((tr.peak_ps() - 92.0).abs() < 0.01);
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let model = TemperatureModel::Smooth { sd_k: 0.0, tau_s: 3600.0, clamp_k: 0.1 };
        let tr = simulate_drift(&FiberLink::default(), 3600.0, 1.0, &model, 9).unwrap();
        assert!(tr.offsets_ps.iter().all(|&x| x == 0.0));
        let st = stabilize(&tr, &StabilizerPolicy { estimator_noise_ps: 0.0, ..Default::default() }, 1).unwrap();
        assert_eq!(st.rms_ps, 0.0);
    }

    #[test]
    fn doubling_length_doubles_rms() {
        let model = TemperatureModel::default();
        let a = simulate_drift(&FiberLink::default(), 86_400.0, 10.0, &model, 4).unwrap();
        let long = FiberLink { length_km: 50.0, ..Default::default() };
        let b = simulate_drift(&long, 86_400.0, 10.0, &model, 4).unwrap();
        assert!((b.rms_ps() / a.rms_ps() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disabled_policy_leaves_trace_alone() {
        let tr = simulate_drift(&FiberLink::default(), 20_000.0, 5.0, &TemperatureModel::default(), 2).unwrap();
        let st = stabilize(&tr, &StabilizerPolicy::disabled(), 3).unwrap();
        assert_eq!(st.corrections, 0);
        assert_eq!(st.rms_ps, tr.rms_ps());
        assert_eq!(st.residual.offsets_ps, tr.offsets_ps);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = TemperatureModel::default();
        let a = simulate_drift(&FiberLink::default(), 7200.0, 1.0, &m, 11).unwrap();
        let b = simulate_drift(&FiberLink::default(), 7200.0, 1.0, &m, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_drift(&FiberLink::default(), 7200.0, 1.0, &m, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn interpolation() {
        let tr = DriftTrace::new(vec![0.0, 10.0], vec![0.0, 20.0]).unwrap();
        assert_eq!(tr.offset_at(5.0), 10.0);
        assert_eq!(tr.offset_at(-1.0), 0.0);
        assert_eq!(tr.offset_at(11.0), 20.0);
        assert!(DriftTrace::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }
}
