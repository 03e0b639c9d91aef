//! Two-step positioning: per-link TOA and attenuation estimates from the
//! correlator peak, then a covariance-weighted fit of position to the TDOAs and
//! attenuations.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::simplex::{golden_max, minimize, SimplexOptions};
use super::{
    suppress_non_maxima, warn_few_leds, Diagnostics, PositionEstimate, ReceivedSignalSet, ReceiverKnowledge,
    SearchConfig,
};
use crate::error::{Error, Result};
use crate::signal::{Correlator, PulseSpec, SampledSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToaEstimate {
    pub tau: f64,
    /// Correlator value at `tau`.
    pub peak: f64,
    /// Peak over the correlator noise standard deviation sqrt(σ² E2).
    pub detection_snr: f64,
    pub low_confidence: bool,
}

/// Delay maximizing the correlation of `sig` with `p`.
///
/// The correlator is scanned on the sample grid (ties go to the earliest
/// shift), the peak is located by a three-point parabola, and then polished by
/// golden-section search on the continuous correlator within ±half a sample.
pub fn estimate_toa(sig: &SampledSignal, p: &PulseSpec, psd: f64, detection_threshold: f64) -> Result<ToaEstimate> {
    let c = Correlator::new(sig, p);
    let grid = c.on_grid();
    let Some((lo, hi)) = c.admissible_shifts().filter(|_| !grid.is_empty()) else {
        return Err(Error::Domain(
            "no admissible shift places the pulse inside the window".into(),
        ));
    };
    let mut j = 0;
    for (i, &v) in grid.iter().enumerate() {
        if v > grid[j] {
            j = i;
        }
    }
    let fs = sig.sample_rate;
    let mut tau = sig.time(j);
    if j > 0 && j + 1 < grid.len() {
        let (a, b, d) = (grid[j - 1], grid[j], grid[j + 1]);
        let curvature = a - 2.0 * b + d;
        if curvature < 0.0 {
            tau += (0.5 * (a - d) / curvature).clamp(-0.5, 0.5) / fs;
        }
    }
    let a = (tau - 0.5 / fs).max(lo);
    let b = (tau + 0.5 / fs).min(hi);
    if b > a {
        tau = golden_max(|t| c.at_unchecked(t), a, b, 1e-6 / fs);
    }
    let peak = c.at_unchecked(tau);
    let e2 = p.energy_integrals()?.e2;
    let detection_snr = peak / (psd * e2).sqrt();
    Ok(ToaEstimate {
        tau,
        peak,
        detection_snr,
        low_confidence: !(detection_snr >= detection_threshold),
    })
}

/// α̂ = C(τ̂) / (R_p E2).
pub fn estimate_rss(sig: &SampledSignal, p: &PulseSpec, tau_hat: f64, responsivity: f64) -> Result<f64> {
    let c = crate::signal::integrate_product(sig, p, tau_hat)?;
    Ok(c / (responsivity * p.energy_integrals()?.e2))
}

/// TOA differences against the reference LED, in LED order with the reference skipped.
pub fn form_tdoa(tau_hat: &[f64], reference: usize) -> Result<Vec<f64>> {
    if tau_hat.len() < 2 {
        return Err(Error::Config(format!(
            "TDOA needs at least 2 TOAs, got {}",
            tau_hat.len()
        )));
    }
    let r = *tau_hat
        .get(reference)
        .ok_or_else(|| Error::Config(format!("reference LED {reference} out of range")))?;
    Ok(tau_hat
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != reference)
        .map(|(_, t)| t - r)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStepEstimates {
    pub tau_hat: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub correlator_peaks: Vec<f64>,
    pub low_confidence: Vec<usize>,
    pub reference: usize,
}

impl FirstStepEstimates {
    /// Stacked measurement [d̂; α̂].
    pub fn nu(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.d_hat.len() + self.alpha_hat.len(),
            self.d_hat.iter().chain(&self.alpha_hat).copied(),
        )
    }
}

/// TOA and attenuation estimates for every link.
pub fn first_step(rs: &ReceivedSignalSet, search: &SearchConfig) -> Result<FirstStepEstimates> {
    let k = &rs.knowledge;
    let mut tau_hat = Vec::with_capacity(rs.signals.len());
    let mut alpha_hat = Vec::with_capacity(rs.signals.len());
    let mut correlator_peaks = Vec::with_capacity(rs.signals.len());
    let mut low_confidence = Vec::new();
    for (i, (sig, p)) in rs.signals.iter().zip(&k.pulses).enumerate() {
        let t = estimate_toa(sig, p, k.psd, search.detection_threshold)?;
        if t.low_confidence {
            log::debug!("LED {i}: correlator peak at {:.2} noise deviations", t.detection_snr);
            low_confidence.push(i);
        }
        tau_hat.push(t.tau);
        alpha_hat.push(t.peak / (k.receiver.responsivity * k.energies[i].e2));
        correlator_peaks.push(t.peak);
    }
    let d_hat = form_tdoa(&tau_hat, search.reference_led)?;
    Ok(FirstStepEstimates {
        tau_hat,
        alpha_hat,
        d_hat,
        correlator_peaks,
        low_confidence,
        reference: search.reference_led,
    })
}

/// a·11ᵀ + diag(b).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPlusRankOne {
    pub a: f64,
    pub b: Vec<f64>,
}

impl DiagPlusRankOne {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.b.len();
        DMatrix::from_fn(n, n, |r, c| self.a + if r == c { self.b[r] } else { 0.0 })
    }

    fn denominators(&self) -> f64 {
        1.0 + self.a * self.b.iter().map(|b| 1.0 / b).sum::<f64>()
    }

    pub fn log_det(&self) -> f64 {
        self.b.iter().map(|b| b.ln()).sum::<f64>() + self.denominators().ln()
    }

    /// Σ⁻¹ v by Sherman-Morrison.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = v.iter().zip(&self.b).map(|(v, b)| v / b).collect();
        let s: f64 = w.iter().sum();
        let k = self.a * s / self.denominators();
        w.iter().zip(&self.b).map(|(w, b)| w - k / b).collect()
    }

    /// vᵀ Σ⁻¹ v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let (mut q, mut s) = (0.0, 0.0);
        for (v, b) in v.iter().zip(&self.b) {
            q += v * v / b;
            s += v / b;
        }
        q - self.a * s * s / self.denominators()
    }
}

/// Approximate distribution of the first-step estimates at a candidate position.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub sigma_d: DiagPlusRankOne,
    /// Diagonal of Σ_α.
    pub sigma_alpha: Vec<f64>,
    /// Predicted [d; α].
    pub mu: DVector<f64>,
}

impl FusionModel {
    /// Dense block-diagonal Σ = diag(Σ_d, Σ_α).
    pub fn sigma(&self) -> DMatrix<f64> {
        let (nd, na) = (self.sigma_d.b.len(), self.sigma_alpha.len());
        let mut m = DMatrix::zeros(nd + na, nd + na);
        m.view_mut((0, 0), (nd, nd)).copy_from(&self.sigma_d.to_dense());
        for (i, v) in self.sigma_alpha.iter().enumerate() {
            m[(nd + i, nd + i)] = *v;
        }
        m
    }

    /// log|Σ_d| + (ν − μ)ᵀ Σ⁻¹ (ν − μ).
    pub fn cost(&self, nu: &DVector<f64>) -> f64 {
        let nd = self.sigma_d.b.len();
        let r = nu - &self.mu;
        let rd: Vec<f64> = r.rows(0, nd).iter().copied().collect();
        let ra: f64 = r
            .rows(nd, self.sigma_alpha.len())
            .iter()
            .zip(&self.sigma_alpha)
            .map(|(x, s)| x * x / s)
            .sum();
        self.sigma_d.log_det() + self.sigma_d.quad_form(&rd) + ra
    }
}

fn check_e3(k: &ReceiverKnowledge) -> Result<()> {
    for (i, e) in k.energies.iter().enumerate() {
        if e.e3.abs() > 1e-12 * (e.e1 * e.e2).sqrt() {
            return Err(Error::Precondition(format!(
                "LED {i} has E3 = {:e}; the fusion model needs E3 = 0",
                e.e3
            )));
        }
    }
    Ok(())
}

/// Σ_d, Σ_α and μ with the attenuations evaluated at `position`.
pub fn fusion_covariances(position: &Vector3<f64>, k: &ReceiverKnowledge, reference: usize) -> Result<FusionModel> {
    let alphas = k
        .attenuations(position)
        .ok_or_else(|| Error::Domain("candidate coincides with an LED".into()))?;
    if let Some(i) = alphas.iter().position(|&a| !(a > 0.0)) {
        return Err(Error::Domain(format!("LED {i} has no line of sight at the candidate")));
    }
    if reference >= alphas.len() {
        return Err(Error::Config(format!("reference LED {reference} out of range")));
    }
    let rp2 = k.receiver.responsivity * k.receiver.responsivity;
    let timing = |i: usize| k.psd / (rp2 * alphas[i] * alphas[i] * k.energies[i].e1);
    let others: Vec<usize> = (0..alphas.len()).filter(|&i| i != reference).collect();
    let delays = k.delays(position);
    let d: Vec<f64> = others.iter().map(|&i| delays[i] - delays[reference]).collect();
    Ok(FusionModel {
        sigma_d: DiagPlusRankOne {
            a: timing(reference),
            b: others.iter().map(|&i| timing(i)).collect(),
        },
        sigma_alpha: k.energies.iter().map(|e| k.psd / (rp2 * e.e2)).collect(),
        mu: DVector::from_iterator(d.len() + alphas.len(), d.into_iter().chain(alphas)),
    })
}

/// Fusion cost at a candidate; +∞ where the model is undefined.
pub fn two_step_objective(fs: &FirstStepEstimates, k: &ReceiverKnowledge, position: &Vector3<f64>) -> f64 {
    if !k.in_search_box(position) {
        return f64::INFINITY;
    }
    match fusion_covariances(position, k, fs.reference) {
        Ok(model) => model.cost(&fs.nu()),
        Err(_) => f64::INFINITY,
    }
}

/// Minimizes the fusion cost over position: coarse grid, then simplex
/// refinement from the best distinct grid points.
pub fn two_step_ml(fs: &FirstStepEstimates, k: &ReceiverKnowledge, search: &SearchConfig) -> Result<PositionEstimate> {
    check_e3(k)?;
    let mut diagnostics = Diagnostics {
        low_confidence_links: fs.low_confidence.clone(),
        ..Diagnostics::default()
    };
    warn_few_leds(k.leds.len(), k.mode, &mut diagnostics);
    let nu = fs.nu();
    let cost = |p: &Vector3<f64>| -> f64 {
        if !k.in_search_box(p) {
            return f64::INFINITY;
        }
        fusion_covariances(p, k, fs.reference)
            .map(|m| m.cost(&nu))
            .unwrap_or(f64::INFINITY)
    };
    let mut scored: Vec<(Vector3<f64>, f64)> = k
        .grid(search.two_step_step)
        .into_iter()
        .map(|p| (p, cost(&p)))
        .filter(|(_, v)| v.is_finite())
        .collect();
    if scored.is_empty() {
        return Err(Error::EstimationFailed(
            "fusion cost is undefined everywhere on the grid".into(),
        ));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let starts = suppress_non_maxima(scored, search.two_step_starts, 2.0 * search.two_step_step);

    let dims = k.dims();
    let opts = SimplexOptions {
        step: vec![0.5 * search.two_step_step; dims],
        tol: vec![search.position_tol; dims],
        max_iterations: search.max_iterations,
    };
    let mut best: Option<(Vector3<f64>, f64, bool)> = None;
    let mut finals = Vec::new();
    for (p, _) in &starts {
        let x0: Vec<f64> = p.iter().take(dims).copied().collect();
        let r = minimize(|x| cost(&k.position_from(x)), &x0, &opts);
        diagnostics.iterations += r.iterations;
        diagnostics.evaluations += r.evaluations;
        diagnostics.restarts += 1;
        if !r.value.is_finite() {
            continue;
        }
        let q = k.position_from(&r.x);
        finals.push((q, r.value));
        if best.as_ref().is_none_or(|b| r.value < b.1) {
            best = Some((q, r.value, r.converged));
        }
    }
    let (position, value, converged) =
        best.ok_or_else(|| Error::EstimationFailed("every refinement left the feasible region".into()))?;
    diagnostics.converged = converged;
    // The cost is −2 × log-likelihood, so one log-likelihood unit is 2 cost units.
    diagnostics.multimodal = finals
        .iter()
        .any(|(q, v)| (q - position).norm() > 1e3 * search.position_tol.max(1e-6) && v - value < 2.0);
    Ok(PositionEstimate {
        position,
        offset: None,
        objective_value: value,
        diagnostics,
    })
}

/// Both steps on a received signal set.
pub fn two_step(rs: &ReceivedSignalSet, search: &SearchConfig) -> Result<(FirstStepEstimates, PositionEstimate)> {
    let fs = first_step(rs, search)?;
    let est = two_step_ml(&fs, &rs.knowledge, search)?;
    Ok((fs, est))
}
