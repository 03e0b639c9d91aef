//! Seeded Monte Carlo trials, bound surfaces, and parameter sweeps.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::crlb;
use crate::error::{Error, Result};
use crate::estimators::{direct_ml, two_step, ReceivedSignalSet};
use crate::scenario::Scenario;

/// Fraction of failed trials above which a sweep point is marked unreliable.
pub const UNRELIABLE_FAILURE_FRACTION: f64 = 0.1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed for one LED in one trial. Depends only on its three inputs, so
/// trial sets do not change with scheduling.
pub fn trial_seed(base: u64, trial: u64, led: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ trial) ^ led)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Direct,
    TwoStep,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Direct => "direct",
            Estimator::TwoStep => "two_step",
        }
    }
}

/// Position error l̂ − l of one estimate.
pub fn estimate_error(s: &Scenario, rs: &ReceivedSignalSet, estimator: Estimator) -> Result<Vector3<f64>> {
    let est = match estimator {
        Estimator::Direct => direct_ml(rs, &s.search)?,
        Estimator::TwoStep => two_step(rs, &s.search)?.1,
    };
    Ok(est.position - s.receiver.position)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    /// sqrt of the mean squared error over successful trials; `None` if all failed.
    pub rmse: Option<f64>,
    /// Per-trial error vectors, `None` where the estimator failed.
    pub errors: Vec<Option<Vector3<f64>>>,
    pub failures: usize,
}

impl TrialSummary {
    fn from_errors(errors: Vec<Option<Vector3<f64>>>) -> Self {
        let ok: Vec<f64> = errors.iter().flatten().map(|e| e.norm_squared()).collect();
        let failures = errors.len() - ok.len();
        let rmse = (!ok.is_empty()).then(|| (ok.iter().sum::<f64>() / ok.len() as f64).sqrt());
        Self { rmse, errors, failures }
    }

    pub fn unreliable(&self) -> bool {
        self.failures as f64 > UNRELIABLE_FAILURE_FRACTION * self.errors.len() as f64
    }
}

/// Runs `n` independent noisy trials. Trial `t` draws LED `i`'s noise from
/// `trial_seed(base_seed, t, i)`. Estimator failures are counted, not fatal.
pub fn run_trials(s: &Scenario, estimator: Estimator, n: usize, base_seed: u64) -> Result<TrialSummary> {
    if n == 0 {
        return Err(Error::Config("trial count must be at least 1".into()));
    }
    let errors: Vec<Option<Vector3<f64>>> = (0..n as u64)
        .into_par_iter()
        .map(|t| {
            let rs = ReceivedSignalSet::synthesize(s, |i| trial_seed(base_seed, t, i as u64)).ok()?;
            match estimate_error(s, &rs, estimator) {
                Ok(e) => Some(e),
                Err(err) => {
                    log::debug!("trial {t} ({}) failed: {err}", estimator.name());
                    None
                }
            }
        })
        .collect();
    Ok(TrialSummary::from_errors(errors))
}

/// A single trial on noise-free waveforms.
pub fn run_noiseless_trial(s: &Scenario, estimator: Estimator) -> Result<TrialSummary> {
    let rs = ReceivedSignalSet::noiseless(s)?;
    Ok(TrialSummary::from_errors(vec![estimate_error(s, &rs, estimator).ok()]))
}

/// sqrt-CRLB over a horizontal grid at the receiver's height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbSurface {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major with x fastest; `None` where the bound is singular or undefined.
    pub values: Vec<Option<f64>>,
}

impl CrlbSurface {
    pub fn at(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[iy * self.xs.len() + ix]
    }
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|j| lo + j as f64 * step).collect()
}

pub fn crlb_surface(s: &Scenario, grid_spacing: f64) -> Result<CrlbSurface> {
    if !(grid_spacing > 0.0) {
        return Err(Error::Config(format!("grid spacing must be > 0, got {grid_spacing}")));
    }
    let xs = axis(0.0, s.room.width, grid_spacing);
    let ys = axis(0.0, s.room.depth, grid_spacing);
    let z = s.receiver.position.z;
    let points: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let values = points
        .par_iter()
        .map(|&(x, y)| sqrt_crlb_at(s, Vector3::new(x, y, z)))
        .collect();
    Ok(CrlbSurface { xs, ys, values })
}

/// sqrt of the position MSE bound at `p`, `None` when undefined.
pub fn sqrt_crlb_at(s: &Scenario, p: Vector3<f64>) -> Option<f64> {
    crlb(&s.with_receiver_position(p)).ok().map(|b| b.sqrt_mse())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Source optical power A, W.
    Power,
    CenterFrequency,
    PulseDuration,
    /// LED tilt towards the room center, rad.
    TiltAngle,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Power => "power_W",
            SweepAxis::CenterFrequency => "fc_Hz",
            SweepAxis::PulseDuration => "Ts_s",
            SweepAxis::TiltAngle => "theta_rad",
        }
    }

    /// The scenario at one sweep value.
    pub fn apply(self, s: &Scenario, value: f64) -> Result<Scenario> {
        Ok(match self {
            SweepAxis::Power => s.with_amplitude(value),
            SweepAxis::CenterFrequency => s.with_center_frequency(value),
            SweepAxis::PulseDuration => s.with_duration(value),
            SweepAxis::TiltAngle => {
                if !(0.0..std::f64::consts::FRAC_PI_2).contains(&value) {
                    return Err(Error::Config(format!("tilt angle must lie in [0, π/2), got {value}")));
                }
                s.with_tilt(value)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCurve {
    pub estimator: Estimator,
    pub rmse: Vec<Option<f64>>,
    pub failures: Vec<usize>,
    pub unreliable: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub sqrt_crlb: Vec<Option<f64>>,
    pub curves: Vec<EstimatorCurve>,
    pub trial_count: usize,
    pub base_seed: u64,
}

impl SweepResult {
    pub fn rmse(&self, estimator: Estimator) -> Option<&[Option<f64>]> {
        self.curves
            .iter()
            .find(|c| c.estimator == estimator)
            .map(|c| c.rmse.as_slice())
    }
}

/// Recomputes the bound and, for each requested estimator, runs `n` trials at
/// every value. Every point reuses `base_seed`, so curves share noise draws.
pub fn sweep(
    s: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    estimators: &[Estimator],
    n: usize,
    base_seed: u64,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("sweep values must be strictly increasing".into()));
    }
    let scenarios = values.iter().map(|&v| axis.apply(s, v)).collect::<Result<Vec<_>>>()?;
    let sqrt_crlb = scenarios
        .iter()
        .map(|sc| match crlb(sc) {
            Ok(b) => Some(b.sqrt_mse()),
            Err(e) => {
                log::warn!("{}: bound undefined: {e}", axis.column());
                None
            }
        })
        .collect();
    let mut curves = Vec::new();
    for &estimator in estimators {
        let mut curve = EstimatorCurve {
            estimator,
            rmse: Vec::new(),
            failures: Vec::new(),
            unreliable: Vec::new(),
        };
        for sc in &scenarios {
            let summary = run_trials(sc, estimator, n, base_seed)?;
            curve.unreliable.push(summary.unreliable());
            curve.failures.push(summary.failures);
            curve.rmse.push(summary.rmse);
        }
        curves.push(curve);
    }
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        sqrt_crlb,
        curves,
        trial_count: n,
        base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..100 {
            for led in 0..6 {
                assert!(seen.insert(trial_seed(42, t, led)));
            }
        }
        assert_eq!(trial_seed(1, 2, 3), trial_seed(1, 2, 3));
        assert_ne!(trial_seed(1, 2, 3), trial_seed(2, 2, 3));
    }

    #[test]
    fn noiseless_trial_has_no_error() {
        let s = default_scenario().with_amplitude(10.0);
        for e in [Estimator::Direct, Estimator::TwoStep] {
            let r = run_noiseless_trial(&s, e).unwrap();
            assert!(r.rmse.unwrap() < 1e-4, "{e:?}: {:?}", r.rmse);
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let s = default_scenario().with_amplitude(3.0);
        let a = run_trials(&s, Estimator::TwoStep, 6, 9).unwrap();
        let b = run_trials(&s, Estimator::TwoStep, 6, 9).unwrap();
        assert_eq!(a.rmse.unwrap().to_bits(), b.rmse.unwrap().to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn surface_shape() {
        let s = default_scenario();
        let surf = crlb_surface(&s, 0.5).unwrap();
        assert_eq!(surf.xs.len(), 31);
        let at = |x: f64, y: f64| surf.at((x / 0.5) as usize, (y / 0.5) as usize).unwrap();
        assert!(at(7.5, 7.5) < at(1.0, 1.0));
        // Mirror symmetry about x = 7.5.
        for iy in 0..surf.ys.len() {
            for ix in 0..surf.xs.len() {
                let (a, b) = (surf.at(ix, iy), surf.at(surf.xs.len() - 1 - ix, iy));
                if let (Some(a), Some(b)) = (a, b) {
                    assert!(((a - b) / a).abs() < 1e-9);
                }
            }
        }
        assert!(sqrt_crlb_at(&s, s.receiver.position).unwrap() <= 0.2);
    }

    #[test]
    fn sweep_shapes() {
        let s = default_scenario();
        let r = sweep(&s, SweepAxis::PulseDuration, &[1e-6, 2e-6, 4e-6], &[], 1, 0).unwrap();
        let v: Vec<f64> = r.sqrt_crlb.iter().map(|v| v.unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
        assert!(((v[2] / v[0]) - 0.5).abs() < 1e-6);
        assert!(sweep(&s, SweepAxis::Power, &[2.0, 1.0], &[], 1, 0).is_err());
        assert!(sweep(&s, SweepAxis::TiltAngle, &[0.0, 2.0], &[], 1, 0).is_err());
    }
}
