//! Transmitted pulses, their energy integrals, and sampled received waveforms.
//!
//! The additive noise has a flat two-sided spectral level σ². Sampling at f_s
//! yields i.i.d. Gaussian samples of variance σ²·f_s, and every continuous
//! integral over a waveform becomes a Riemann sum weighted by 1/f_s.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::{attenuation, channel_geometry, toa, ClockOffset, LedTransmitter, VlcReceiver};

/// Relative tolerance on the integer number of carrier cycles per pulse.
const CYCLE_TOL: f64 = 1e-9;

/// Transmitted optical intensity waveform, supported on [0, duration].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSpec {
    /// A·(1 + cos(2π f_c t − π)) on [0, T_s].
    RaisedCosineSinusoid {
        amplitude: f64,
        duration: f64,
        center_frequency: f64,
    },
    Tabulated(TabulatedPulse),
}

/// Piecewise-linear pulse through `(time_s, value_W)` nodes; the first node is at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPulse {
    pub samples: Vec<[f64; 2]>,
}

impl TabulatedPulse {
    /// Reads a two-column CSV with a header row (`time_s,value_W`).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if headers.len() != 2 {
            return Err(Error::Config(format!(
                "{}: expected 2 columns (time_s, value_W), found {}",
                path.display(),
                headers.len()
            )));
        }
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let parse = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}: row {}: column {}: {e}", path.display(), row + 2, i + 1)))
            };
            samples.push([parse(0)?, parse(1)?]);
        }
        Ok(Self { samples })
    }

    fn segment(&self, t: f64) -> Option<usize> {
        let n = self.samples.len();
        if n < 2 || t < self.samples[0][0] || t > self.samples[n - 1][0] {
            return None;
        }
        let idx = self.samples.partition_point(|s| s[0] <= t);
        Some(idx.clamp(1, n - 1) - 1)
    }
}

impl PulseSpec {
    pub fn raised_cosine(amplitude: f64, duration: f64, center_frequency: f64) -> Self {
        PulseSpec::RaisedCosineSinusoid {
            amplitude,
            duration,
            center_frequency,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            PulseSpec::RaisedCosineSinusoid { duration, .. } => *duration,
            PulseSpec::Tabulated(t) => t.samples.last().map(|s| s[0]).unwrap_or(0.0),
        }
    }

    pub fn center_frequency(&self) -> Option<f64> {
        match self {
            PulseSpec::RaisedCosineSinusoid { center_frequency, .. } => Some(*center_frequency),
            PulseSpec::Tabulated(_) => None,
        }
    }

    /// Scales the optical intensity so that the peak amplitude parameter becomes `amplitude`.
    /// Tabulated pulses are rescaled so that their maximum equals `amplitude`.
    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        match self {
            PulseSpec::RaisedCosineSinusoid {
                duration,
                center_frequency,
                ..
            } => PulseSpec::raised_cosine(amplitude, *duration, *center_frequency),
            PulseSpec::Tabulated(t) => {
                let peak = t.samples.iter().map(|s| s[1]).fold(0.0, f64::max);
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                PulseSpec::Tabulated(TabulatedPulse {
                    samples: t.samples.iter().map(|s| [s[0], s[1] * scale]).collect(),
                })
            }
        }
    }

    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        match self {
            PulseSpec::RaisedCosineSinusoid {
                amplitude,
                duration,
                center_frequency,
            } => {
                for (name, v) in [
                    ("amplitude", amplitude),
                    ("duration", duration),
                    ("center_frequency", center_frequency),
                ] {
                    if !(*v > 0.0) || !v.is_finite() {
                        out.push(Violation::new(
                            format!("{path}.{name}"),
                            format!("must be > 0 (got {v})"),
                        ));
                    }
                }
                if out.is_empty() {
                    let cycles = center_frequency * duration;
                    if (cycles - cycles.round()).abs() > CYCLE_TOL * cycles.max(1.0) || cycles.round() < 1.0 {
                        out.push(Violation::new(
                            format!("{path}.center_frequency"),
                            format!("center_frequency * duration must be a positive integer (got {cycles})"),
                        ));
                    }
                }
            }
            PulseSpec::Tabulated(t) => {
                if t.samples.len() < 3 {
                    out.push(Violation::new(
                        format!("{path}.samples"),
                        format!("tabulated pulse needs at least 3 samples (got {})", t.samples.len()),
                    ));
                    return out;
                }
                if t.samples[0][0] != 0.0 {
                    out.push(Violation::new(
                        format!("{path}.samples"),
                        "first sample must be at t = 0",
                    ));
                }
                if t.samples.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    out.push(Violation::new(
                        format!("{path}.samples"),
                        "sample times must be strictly increasing",
                    ));
                }
                if t.samples
                    .iter()
                    .any(|s| !(s[1] >= 0.0) || !s[0].is_finite() || !s[1].is_finite())
                {
                    out.push(Violation::new(
                        format!("{path}.samples"),
                        "pulse values must be finite and nonnegative",
                    ));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("pulse");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// s(t); zero outside [0, T_s].
    pub fn value(&self, t: f64) -> f64 {
        match self {
            PulseSpec::RaisedCosineSinusoid {
                amplitude,
                duration,
                center_frequency,
            } => {
                if t < 0.0 || t > *duration {
                    0.0
                } else {
                    amplitude * (1.0 + (2.0 * PI * center_frequency * t - PI).cos())
                }
            }
            PulseSpec::Tabulated(tab) => match tab.segment(t) {
                None => 0.0,
                Some(j) => {
                    let [t0, v0] = tab.samples[j];
                    let [t1, v1] = tab.samples[j + 1];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            },
        }
    }

    /// s'(t); zero outside [0, T_s].
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            PulseSpec::RaisedCosineSinusoid {
                amplitude,
                duration,
                center_frequency,
            } => {
                if t < 0.0 || t > *duration {
                    0.0
                } else {
                    let w = 2.0 * PI * center_frequency;
                    -amplitude * w * (w * t - PI).sin()
                }
            }
            PulseSpec::Tabulated(tab) => match tab.segment(t) {
                None => 0.0,
                Some(j) => {
                    let [t0, v0] = tab.samples[j];
                    let [t1, v1] = tab.samples[j + 1];
                    (v1 - v0) / (t1 - t0)
                }
            },
        }
    }

    /// E1 = ∫s'², E2 = ∫s², E3 = ∫s s' over the pulse support.
    ///
    /// The raised cosine uses its closed forms (exact for an integer number of
    /// carrier cycles). Tabulated pulses are integrated exactly over each linear
    /// segment of the table, matching what [`PulseSpec::value`] returns.
    pub fn energy_integrals(&self) -> Result<EnergyIntegrals> {
        match self {
            PulseSpec::RaisedCosineSinusoid {
                amplitude,
                duration,
                center_frequency,
            } => {
                let e2 = 1.5 * amplitude * amplitude * duration;
                Ok(EnergyIntegrals {
                    e1: 4.0 / 3.0 * PI * PI * center_frequency * center_frequency * e2,
                    e2,
                    e3: 0.0,
                })
            }
            PulseSpec::Tabulated(tab) => {
                if tab.samples.len() < 3 {
                    return Err(Error::Config(format!(
                        "tabulated pulse needs at least 3 samples (got {})",
                        tab.samples.len()
                    )));
                }
                let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
                for w in tab.samples.windows(2) {
                    let ([t0, v0], [t1, v1]) = (w[0], w[1]);
                    let dt = t1 - t0;
                    let slope = (v1 - v0) / dt;
                    e1 += slope * slope * dt;
                    e2 += (v0 * v0 + v0 * v1 + v1 * v1) / 3.0 * dt;
                    e3 += slope * 0.5 * (v0 + v1) * dt;
                }
                Ok(EnergyIntegrals { e1, e2, e3 })
            }
        }
    }
}

/// Trapezoidal quadrature of the energy integrals from `value`/`derivative`
/// sampled at `points` equally spaced nodes over [0, T_s]. Independent of the
/// closed forms in [`PulseSpec::energy_integrals`].
pub fn quadrature_energy_integrals(p: &PulseSpec, points: usize) -> EnergyIntegrals {
    let n = points.max(2);
    let ts = p.duration();
    let h = ts / (n - 1) as f64;
    let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let t = k as f64 * h;
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let (s, ds) = (p.value(t), p.derivative(t));
        e1 += w * ds * ds;
        e2 += w * s * s;
        e3 += w * s * ds;
    }
    EnergyIntegrals {
        e1: e1 * h,
        e2: e2 * h,
        e3: e3 * h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyIntegrals {
    /// ∫ s'(t)² dt, W²/s
    pub e1: f64,
    /// ∫ s(t)² dt, W²·s
    pub e2: f64,
    /// ∫ s(t) s'(t) dt, W²
    pub e3: f64,
}

/// White Gaussian noise with two-sided spectral level `psd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub psd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        if self.psd > 0.0 && self.psd.is_finite() {
            Vec::new()
        } else {
            vec![Violation::new(
                format!("{path}.psd"),
                format!("psd must be > 0 (got {})", self.psd),
            )]
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Receiver-clock observation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl ObservationWindow {
    pub fn sample_count(&self, sample_rate: f64) -> usize {
        ((self.t_end - self.t_start) * sample_rate).round() as usize + 1
    }
}

/// A uniformly sampled received photocurrent.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub sample_rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub values: Vec<f64>,
}

impl SampledSignal {
    pub fn zeros(window: ObservationWindow, sample_rate: f64) -> Self {
        Self {
            sample_rate,
            t_start: window.t_start,
            t_end: window.t_end,
            values: vec![0.0; window.sample_count(sample_rate)],
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn window(&self) -> ObservationWindow {
        ObservationWindow {
            t_start: self.t_start,
            t_end: self.t_end,
        }
    }

    /// Sample indices k with 0 ≤ t_k − shift ≤ duration, clipped to the signal.
    fn support(&self, shift: f64, duration: f64) -> Option<(usize, usize)> {
        let lo = ((shift - self.t_start) * self.sample_rate).ceil().max(0.0);
        let hi = ((shift + duration - self.t_start) * self.sample_rate)
            .floor()
            .min(self.values.len() as f64 - 1.0);
        if hi < lo {
            None
        } else {
            Some((lo as usize, hi as usize))
        }
    }

    /// Range of shifts for which a pulse of `duration` lies inside the window.
    pub fn admissible_shifts(&self, duration: f64) -> Option<(f64, f64)> {
        let hi = self.t_end - duration;
        (hi >= self.t_start).then_some((self.t_start, hi))
    }

    fn check_shift(&self, shift: f64, duration: f64) -> Result<()> {
        let slack = 1e-6 / self.sample_rate;
        if shift < self.t_start - slack || shift + duration > self.t_end + slack || !shift.is_finite() {
            return Err(Error::Domain(format!(
                "pulse support [{shift:e}, {:e}] leaves the window [{:e}, {:e}]",
                shift + duration,
                self.t_start,
                self.t_end
            )));
        }
        Ok(())
    }
}

/// One LED → receiver link to synthesize.
#[derive(Debug, Clone, Copy)]
pub struct LinkSpec<'a> {
    pub rx: &'a VlcReceiver,
    pub tx: &'a LedTransmitter,
    pub offset: ClockOffset,
    pub pulse: &'a PulseSpec,
    pub window: ObservationWindow,
}

/// Noise-free received photocurrent α R_p s(t − τ) on the window grid.
pub fn synthesize_clean(link: &LinkSpec<'_>, sample_rate: f64) -> Result<SampledSignal> {
    if let Some(fc) = link.pulse.center_frequency() {
        if sample_rate < 2.0 * fc {
            return Err(Error::Config(format!(
                "sample rate {sample_rate:e} Hz cannot resolve the {fc:e} Hz carrier"
            )));
        }
    }
    let geometry = channel_geometry(link.rx, link.tx)?;
    if !geometry.is_los() {
        return Err(Error::Domain("cannot synthesize a link without line of sight".into()));
    }
    let alpha = attenuation(link.rx, link.tx)?;
    let tau = toa(link.rx, link.tx, link.offset)?;
    let duration = link.pulse.duration();
    let mut signal = SampledSignal::zeros(link.window, sample_rate);
    if signal.check_shift(tau, duration).is_err() {
        return Err(Error::Config(format!(
            "observation window [{:e}, {:e}] s does not contain the pulse arriving at {tau:e} s",
            link.window.t_start, link.window.t_end
        )));
    }
    let gain = alpha * link.rx.responsivity;
    if let Some((lo, hi)) = signal.support(tau, duration) {
        for k in lo..=hi {
            signal.values[k] = gain * link.pulse.value(signal.time(k) - tau);
        }
    }
    Ok(signal)
}

/// `len` i.i.d. samples of variance psd·f_s, reproducible from `noise.seed`.
pub fn noise_sequence(noise: &NoiseSpec, sample_rate: f64, len: usize) -> Vec<f64> {
    let std = (noise.psd.max(0.0) * sample_rate).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Received waveform: attenuated, delayed pulse plus sampled white noise.
pub fn synthesize_received(link: &LinkSpec<'_>, noise: &NoiseSpec, sample_rate: f64) -> Result<SampledSignal> {
    let mut signal = synthesize_clean(link, sample_rate)?;
    let n = noise_sequence(noise, sample_rate, signal.len());
    for (v, e) in signal.values.iter_mut().zip(n) {
        *v += e;
    }
    Ok(signal)
}

/// Σ_k x[k]·s(t_k − shift)/f_s, the sampled form of ∫ r(t) s(t − shift) dt.
pub fn integrate_product(x: &SampledSignal, p: &PulseSpec, shift: f64) -> Result<f64> {
    let duration = p.duration();
    x.check_shift(shift, duration)?;
    Ok(direct_sum(x, p, shift, duration))
}

fn direct_sum(x: &SampledSignal, p: &PulseSpec, shift: f64, duration: f64) -> f64 {
    let Some((lo, hi)) = x.support(shift, duration) else {
        return 0.0;
    };
    let acc: f64 = (lo..=hi).map(|k| x.values[k] * p.value(x.time(k) - shift)).sum();
    acc / x.sample_rate
}

/// Repeated evaluation of [`integrate_product`] against one signal.
///
/// For the raised-cosine pulse the product sum over the support splits into
/// prefix sums of x, x·cos(ωt) and x·sin(ωt), so each evaluation is O(1).
/// Other pulses fall back to the direct sum.
pub struct Correlator<'a> {
    signal: &'a SampledSignal,
    pulse: &'a PulseSpec,
    duration: f64,
    prefix: Option<RaisedCosinePrefix>,
}

struct RaisedCosinePrefix {
    amplitude: f64,
    omega: f64,
    plain: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl<'a> Correlator<'a> {
    pub fn new(signal: &'a SampledSignal, pulse: &'a PulseSpec) -> Self {
        let prefix = match pulse {
            PulseSpec::RaisedCosineSinusoid {
                amplitude,
                center_frequency,
                ..
            } => {
                let omega = 2.0 * PI * center_frequency;
                let n = signal.len();
                let mut plain = Vec::with_capacity(n + 1);
                let mut cos = Vec::with_capacity(n + 1);
                let mut sin = Vec::with_capacity(n + 1);
                let (mut a, mut c, mut s) = (0.0, 0.0, 0.0);
                plain.push(a);
                cos.push(c);
                sin.push(s);
                for (k, &x) in signal.values.iter().enumerate() {
                    let (sn, cs) = (omega * signal.time(k)).sin_cos();
                    a += x;
                    c += x * cs;
                    s += x * sn;
                    plain.push(a);
                    cos.push(c);
                    sin.push(s);
                }
                Some(RaisedCosinePrefix {
                    amplitude: *amplitude,
                    omega,
                    plain,
                    cos,
                    sin,
                })
            }
            PulseSpec::Tabulated(_) => None,
        };
        Self {
            signal,
            pulse,
            duration: pulse.duration(),
            prefix,
        }
    }

    pub fn signal(&self) -> &SampledSignal {
        self.signal
    }

    pub fn pulse(&self) -> &PulseSpec {
        self.pulse
    }

    pub fn admissible_shifts(&self) -> Option<(f64, f64)> {
        self.signal.admissible_shifts(self.duration)
    }

    /// Same contract as [`integrate_product`].
    pub fn at(&self, shift: f64) -> Result<f64> {
        self.signal.check_shift(shift, self.duration)?;
        Ok(self.at_unchecked(shift))
    }

    /// Evaluates without the window check; the support is clipped to the signal.
    pub fn at_unchecked(&self, shift: f64) -> f64 {
        match &self.prefix {
            None => direct_sum(self.signal, self.pulse, shift, self.duration),
            Some(pre) => {
                let Some((lo, hi)) = self.signal.support(shift, self.duration) else {
                    return 0.0;
                };
                let sum0 = pre.plain[hi + 1] - pre.plain[lo];
                let sumc = pre.cos[hi + 1] - pre.cos[lo];
                let sums = pre.sin[hi + 1] - pre.sin[lo];
                let (sn, cs) = (pre.omega * shift).sin_cos();
                // 1 + cos(ω(t − shift) − π) = 1 − cos ωt cos ω·shift − sin ωt sin ω·shift
                pre.amplitude * (sum0 - cs * sumc - sn * sums) / self.signal.sample_rate
            }
        }
    }

    /// Correlator at every admissible shift on the sample grid, t_start + j/f_s.
    pub fn on_grid(&self) -> Vec<f64> {
        let Some((lo, hi)) = self.admissible_shifts() else {
            return Vec::new();
        };
        let count = ((hi - lo) * self.signal.sample_rate + 1e-9).floor() as usize + 1;
        (0..count).map(|j| self.at_unchecked(self.signal.time(j))).collect()
    }
}
