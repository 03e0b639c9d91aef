//! Position estimators: the direct waveform-domain ML search and the two-step
//! TOA/RSS pipeline.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::{attenuation, ClockOffset, LedTransmitter, VlcReceiver, SPEED_OF_LIGHT};
use crate::scenario::{Mode, Scenario};
use crate::signal::{noise_sequence, synthesize_clean, EnergyIntegrals, LinkSpec, PulseSpec, SampledSignal};

mod direct;
pub mod simplex;
mod two_step;

pub use direct::{direct_ml, log_likelihood_objective};
pub use two_step::{
    estimate_rss, estimate_toa, first_step, form_tdoa, fusion_covariances, two_step, two_step_ml, two_step_objective,
    DiagPlusRankOne, FirstStepEstimates, FusionModel, ToaEstimate,
};

/// Grid, restart, and tolerance settings shared by both estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Coarse grid spacing of the direct search, m.
    pub spatial_step: f64,
    /// Admissible clock offsets, s.
    pub delta_range: [f64; 2],
    /// Offset grid spacing; defaults to an eighth of a carrier period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_step: Option<f64>,
    /// Number of distinct grid maxima refined by the direct search.
    pub refine_starts: usize,
    /// Extra starts shifted by ±k carrier periods in offset, k = 1..=cycle_hops.
    pub cycle_hops: usize,
    /// Coarse grid spacing of the two-step fusion search, m.
    pub two_step_step: f64,
    pub two_step_starts: usize,
    pub position_tol: f64,
    pub delta_tol: f64,
    pub max_iterations: usize,
    /// Search region is the room grown by this much on every side, m.
    pub margin: f64,
    /// LED whose TOA is subtracted to form TDOAs.
    pub reference_led: usize,
    /// Correlator peaks below this many noise standard deviations are flagged.
    pub detection_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            spatial_step: 0.25,
            delta_range: [-2e-7, 2e-7],
            delta_step: None,
            refine_starts: 5,
            cycle_hops: 1,
            two_step_step: 0.5,
            two_step_starts: 8,
            position_tol: 1e-6,
            delta_tol: 1e-14,
            max_iterations: 4000,
            margin: 1.0,
            reference_led: 0,
            detection_threshold: 5.0,
        }
    }
}

impl SearchConfig {
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, v) in [
            ("spatial_step", self.spatial_step),
            ("two_step_step", self.two_step_step),
            ("position_tol", self.position_tol),
            ("delta_tol", self.delta_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(Violation::new(
                    format!("{path}.{name}"),
                    format!("must be > 0 (got {v})"),
                ));
            }
        }
        if let Some(h) = self.delta_step {
            if !(h > 0.0) {
                out.push(Violation::new(
                    format!("{path}.delta_step"),
                    format!("must be > 0 (got {h})"),
                ));
            }
        }
        let [lo, hi] = self.delta_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            out.push(Violation::new(
                format!("{path}.delta_range"),
                "must be an increasing finite pair",
            ));
        }
        if self.refine_starts == 0 || self.two_step_starts == 0 {
            out.push(Violation::new(path.to_string(), "start counts must be at least 1"));
        }
        if !(self.margin >= 0.0) {
            out.push(Violation::new(format!("{path}.margin"), "must be >= 0"));
        }
        out
    }

    /// Offset grid step for a pulse: an eighth of a carrier period, or four
    /// samples for pulses without a carrier.
    pub fn delta_step_for(&self, pulse: &PulseSpec, sample_rate: f64) -> f64 {
        self.delta_step.unwrap_or_else(|| match pulse.center_frequency() {
            Some(fc) => 1.0 / (8.0 * fc),
            None => 4.0 / sample_rate,
        })
    }
}

/// What the receiver knows: LED poses, pulses, its own orientation and
/// photodetector parameters, the noise level, and the region to search.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverKnowledge {
    pub leds: Vec<LedTransmitter>,
    /// Receiver template; its position is used only for the known height in
    /// two-dimensional mode.
    pub receiver: VlcReceiver,
    pub pulses: Vec<PulseSpec>,
    pub energies: Vec<EnergyIntegrals>,
    pub psd: f64,
    pub mode: Mode,
    pub search_lo: Vector3<f64>,
    pub search_hi: Vector3<f64>,
}

impl ReceiverKnowledge {
    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let pulses = s.pulses();
        let energies = pulses
            .iter()
            .map(|p| p.energy_integrals())
            .collect::<Result<Vec<_>>>()?;
        let (mut lo, mut hi) = s.search_box();
        if s.mode == Mode::TwoD {
            lo.z = s.receiver.position.z;
            hi.z = s.receiver.position.z;
        }
        Ok(Self {
            leds: s.leds.clone(),
            receiver: s.receiver.clone(),
            pulses,
            energies,
            psd: s.noise.psd,
            mode: s.mode,
            search_lo: lo,
            search_hi: hi,
        })
    }

    pub fn dims(&self) -> usize {
        self.mode.position_dims()
    }

    /// Receiver at a candidate position given as 2 or 3 free coordinates.
    pub fn position_from(&self, free: &[f64]) -> Vector3<f64> {
        match self.mode {
            Mode::TwoD => Vector3::new(free[0], free[1], self.search_lo.z),
            Mode::ThreeD => Vector3::new(free[0], free[1], free[2]),
        }
    }

    pub fn receiver_at(&self, position: Vector3<f64>) -> VlcReceiver {
        self.receiver.at(position)
    }

    pub fn in_search_box(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.search_lo[k] - 1e-12 && p[k] <= self.search_hi[k] + 1e-12)
    }

    /// Attenuation of every link at a candidate, 0 where there is no line of sight.
    pub fn attenuations(&self, p: &Vector3<f64>) -> Option<Vec<f64>> {
        let rx = self.receiver_at(*p);
        self.leds.iter().map(|tx| attenuation(&rx, tx).ok()).collect()
    }

    /// Propagation delays ‖l_r − l_t‖/c at a candidate.
    pub fn delays(&self, p: &Vector3<f64>) -> Vec<f64> {
        self.leds
            .iter()
            .map(|tx| (p - tx.position).norm() / SPEED_OF_LIGHT)
            .collect()
    }

    /// Coarse grid over the search region, row-major with x fastest.
    pub fn grid(&self, step: f64) -> Vec<Vector3<f64>> {
        let axis = |k: usize| -> Vec<f64> {
            let (lo, hi) = (self.search_lo[k], self.search_hi[k]);
            if hi <= lo {
                return vec![lo];
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|j| lo + j as f64 * step).collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push(Vector3::new(x, y, z));
                }
            }
        }
        out
    }
}

/// Sampled waveforms from every LED and the receiver's prior knowledge.
#[derive(Debug, Clone)]
pub struct ReceivedSignalSet {
    pub signals: Vec<SampledSignal>,
    pub knowledge: ReceiverKnowledge,
}

impl ReceivedSignalSet {
    /// Synthesizes one noisy waveform per LED; LED `i` draws its noise from `seed_for(i)`.
    pub fn synthesize(s: &Scenario, seed_for: impl Fn(usize) -> u64) -> Result<Self> {
        Self::synthesize_with(s, |i, len, fs| noise_sequence(&s.noise.with_seed(seed_for(i)), fs, len))
    }

    /// Noise-free waveforms.
    pub fn noiseless(s: &Scenario) -> Result<Self> {
        Self::synthesize_with(s, |_, len, _| vec![0.0; len])
    }

    /// Waveforms with caller-supplied noise: `noise(led, len, sample_rate)`.
    pub fn synthesize_with(s: &Scenario, mut noise: impl FnMut(usize, usize, f64) -> Vec<f64>) -> Result<Self> {
        let knowledge = ReceiverKnowledge::from_scenario(s)?;
        let fs = s.sample_rate()?;
        let window = s.observation_window();
        let mut signals = Vec::with_capacity(s.leds.len());
        for (i, tx) in s.leds.iter().enumerate() {
            let link = LinkSpec {
                rx: &s.receiver,
                tx,
                offset: s.clock_offset,
                pulse: s.pulse_for(i),
                window,
            };
            let mut sig = synthesize_clean(&link, fs)?;
            let n = noise(i, sig.len(), fs);
            if n.len() != sig.len() {
                return Err(Error::Config(format!(
                    "noise for LED {i} has {} samples, expected {}",
                    n.len(),
                    sig.len()
                )));
            }
            for (v, e) in sig.values.iter_mut().zip(n) {
                *v += e;
            }
            signals.push(sig);
        }
        Ok(Self { signals, knowledge })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Simplex iterations summed over all local refinements.
    pub iterations: usize,
    /// Number of local refinements started.
    pub restarts: usize,
    pub evaluations: usize,
    /// Whether the returned refinement met its tolerances.
    pub converged: bool,
    /// Distinct local optima scored within one log-likelihood unit of the best.
    pub multimodal: bool,
    /// LEDs whose correlator peak fell below the detection threshold.
    pub low_confidence_links: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub position: Vector3<f64>,
    /// Clock offset estimate (direct estimator only).
    pub offset: Option<ClockOffset>,
    /// Log-likelihood of the direct estimator, or the fusion cost of the two-step one.
    pub objective_value: f64,
    pub diagnostics: Diagnostics,
}

/// Keeps up to `k` best candidates whose positions are at least `radius` apart.
/// `scored` must be sorted best first.
pub(crate) fn suppress_non_maxima<T>(scored: Vec<(Vector3<f64>, T)>, k: usize, radius: f64) -> Vec<(Vector3<f64>, T)> {
    let mut kept: Vec<(Vector3<f64>, T)> = Vec::with_capacity(k);
    for (p, v) in scored {
        if kept.len() == k {
            break;
        }
        if kept.iter().all(|(q, _)| (p - q).norm() >= radius) {
            kept.push((p, v));
        }
    }
    kept
}

pub(crate) fn warn_few_leds(n: usize, mode: Mode, diagnostics: &mut Diagnostics) {
    let needed = mode.position_dims() + 1;
    if n < 3 || n < needed {
        let msg = format!(
            "{n} LEDs may not determine {}-D position and offset",
            mode.position_dims()
        );
        log::warn!("{msg}");
        diagnostics.warnings.push(msg);
    }
}
