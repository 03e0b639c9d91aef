//! Joint position and clock-offset estimation straight from the waveforms.
//!
//! The log-likelihood, up to a constant, is
//!
//! ```text
//! (R_p/σ²) [ Σ_i α_i C_i(τ_i) − (R_p/2) Σ_i α_i² E2_i ]
//! ```
//!
//! where C_i(τ) correlates the i-th waveform with its pulse delayed by τ, and
//! α_i and τ_i = ‖l_r − l_t,i‖/c + Δ are evaluated at the candidate.

use nalgebra::Vector3;

use super::simplex::{minimize, SimplexOptions};
use super::{suppress_non_maxima, warn_few_leds, Diagnostics, PositionEstimate, ReceivedSignalSet, SearchConfig};
use crate::error::{Error, Result};
use crate::geometry::{ClockOffset, SPEED_OF_LIGHT};
use crate::signal::Correlator;

/// Log-likelihood (up to a constant) of a candidate position and offset.
/// Returns −∞ when the candidate has no line of sight to any LED or puts a
/// pulse outside its observation window.
pub fn log_likelihood_objective(rs: &ReceivedSignalSet, position: &Vector3<f64>, delta: f64) -> f64 {
    DirectObjective::new(rs).exact(position, delta)
}

struct DirectObjective<'a> {
    rs: &'a ReceivedSignalSet,
    correlators: Vec<Correlator<'a>>,
    scale: f64,
}

/// Correlator samples at shifts t_start + j/f_s, for linear interpolation.
struct GridCorrelator {
    values: Vec<f64>,
    t_start: f64,
    sample_rate: f64,
}

impl GridCorrelator {
    #[inline]
    fn at(&self, tau: f64) -> Option<f64> {
        let x = (tau - self.t_start) * self.sample_rate;
        let k = x.floor();
        if k < 0.0 || (k as usize) + 1 >= self.values.len() {
            return None;
        }
        let (k, w) = (k as usize, x - k);
        Some(self.values[k] + w * (self.values[k + 1] - self.values[k]))
    }
}

impl<'a> DirectObjective<'a> {
    fn new(rs: &'a ReceivedSignalSet) -> Self {
        let k = &rs.knowledge;
        let correlators = rs
            .signals
            .iter()
            .zip(&k.pulses)
            .map(|(sig, p)| Correlator::new(sig, p))
            .collect();
        Self {
            rs,
            correlators,
            scale: k.receiver.responsivity / k.psd,
        }
    }

    fn exact(&self, p: &Vector3<f64>, delta: f64) -> f64 {
        let k = &self.rs.knowledge;
        if !k.in_search_box(p) || !delta.is_finite() {
            return f64::NEG_INFINITY;
        }
        let Some(alphas) = k.attenuations(p) else {
            return f64::NEG_INFINITY;
        };
        if alphas.iter().all(|&a| a == 0.0) {
            return f64::NEG_INFINITY;
        }
        let rp = k.receiver.responsivity;
        let slack = 1e-6 / self.rs.signals[0].sample_rate;
        let mut acc = 0.0;
        for (i, tx) in k.leds.iter().enumerate() {
            let a = alphas[i];
            if a == 0.0 {
                continue;
            }
            let tau = (p - tx.position).norm() / SPEED_OF_LIGHT + delta;
            let Some((lo, hi)) = self.correlators[i].admissible_shifts() else {
                return f64::NEG_INFINITY;
            };
            if tau < lo - slack || tau > hi + slack {
                return f64::NEG_INFINITY;
            }
            acc += a * self.correlators[i].at_unchecked(tau) - 0.5 * rp * a * a * k.energies[i].e2;
        }
        self.scale * acc
    }
}

struct GridHit {
    value: f64,
    delta: f64,
}

/// Maximizes the log-likelihood over position and offset: coarse grid with an
/// offset profile at every grid point, then simplex refinement from the best
/// distinct grid maxima and their whole-carrier-period offset neighbours.
pub fn direct_ml(rs: &ReceivedSignalSet, search: &SearchConfig) -> Result<PositionEstimate> {
    let k = &rs.knowledge;
    if rs.signals.len() != k.leds.len() {
        return Err(Error::Config(format!(
            "{} signals for {} LEDs",
            rs.signals.len(),
            k.leds.len()
        )));
    }
    let mut diagnostics = Diagnostics::default();
    warn_few_leds(k.leds.len(), k.mode, &mut diagnostics);
    let obj = DirectObjective::new(rs);
    let grids: Vec<GridCorrelator> = obj
        .correlators
        .iter()
        .map(|c| GridCorrelator {
            values: c.on_grid(),
            t_start: c.signal().t_start,
            sample_rate: c.signal().sample_rate,
        })
        .collect();

    let fs = rs.signals[0].sample_rate;
    let h = search.delta_step_for(&k.pulses[0], fs);
    let [d_lo, d_hi] = search.delta_range;
    let n_delta = ((d_hi - d_lo) / h + 1e-9).floor() as usize + 1;
    let rp = k.receiver.responsivity;

    let mut hits: Vec<(Vector3<f64>, GridHit)> = Vec::new();
    let mut profile = vec![0.0; n_delta];
    for p in k.grid(search.spatial_step) {
        let Some(alphas) = k.attenuations(&p) else { continue };
        if alphas.iter().all(|&a| a == 0.0) {
            continue;
        }
        let delays = k.delays(&p);
        let mut constant = 0.0;
        profile.iter_mut().for_each(|v| *v = 0.0);
        let mut feasible = true;
        for (i, &a) in alphas.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            constant -= 0.5 * rp * a * a * k.energies[i].e2;
            for (j, v) in profile.iter_mut().enumerate() {
                match grids[i].at(delays[i] + d_lo + j as f64 * h) {
                    Some(c) => *v += a * c,
                    None => {
                        *v = f64::NEG_INFINITY;
                    }
                }
            }
            if profile.iter().all(|v| *v == f64::NEG_INFINITY) {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let (j, best) = profile.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc },
        );
        if best.is_finite() {
            hits.push((
                p,
                GridHit {
                    value: obj.scale * (best + constant),
                    delta: d_lo + j as f64 * h,
                },
            ));
        }
    }
    if hits.is_empty() {
        return Err(Error::EstimationFailed(
            "no grid point gives a finite log-likelihood".into(),
        ));
    }
    hits.sort_by(|a, b| b.1.value.total_cmp(&a.1.value));
    let starts = suppress_non_maxima(hits, search.refine_starts, 2.0 * search.spatial_step);

    let dims = k.dims();
    let period = k.pulses[0].center_frequency().map(|fc| 1.0 / fc);
    let mut step = vec![0.5 * search.spatial_step; dims];
    step.push(0.5 * SPEED_OF_LIGHT * h);
    let mut tol = vec![search.position_tol; dims];
    tol.push(SPEED_OF_LIGHT * search.delta_tol);
    let opts = SimplexOptions {
        step,
        tol,
        max_iterations: search.max_iterations,
    };
    let unpack = |x: &[f64]| (k.position_from(&x[..dims]), x[dims] / SPEED_OF_LIGHT);

    let mut results = Vec::new();
    for (p, hit) in &starts {
        let mut offsets = vec![hit.delta];
        if let Some(t) = period {
            for hop in 1..=search.cycle_hops {
                for sign in [-1.0, 1.0] {
                    let d = hit.delta + sign * hop as f64 * t;
                    if (d_lo..=d_hi).contains(&d) {
                        offsets.push(d);
                    }
                }
            }
        }
        for delta in offsets {
            let mut x0: Vec<f64> = p.iter().take(dims).copied().collect();
            x0.push(delta * SPEED_OF_LIGHT);
            let r = minimize(
                |x| {
                    let (q, d) = unpack(x);
                    if !(d_lo..=d_hi).contains(&d) {
                        return f64::INFINITY;
                    }
                    -obj.exact(&q, d)
                },
                &x0,
                &opts,
            );
            diagnostics.iterations += r.iterations;
            diagnostics.evaluations += r.evaluations;
            diagnostics.restarts += 1;
            if r.value.is_finite() {
                results.push(r);
            }
        }
    }
    let best = results
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::EstimationFailed("every refinement left the feasible region".into()))?;
    let (position, delta) = unpack(&best.x);
    diagnostics.converged = best.converged;
    diagnostics.multimodal = results.iter().any(|r| {
        let (q, _) = unpack(&r.x);
        (q - position).norm() > 1e3 * search.position_tol.max(1e-6) && r.value - best.value < 1.0
    });
    Ok(PositionEstimate {
        position,
        offset: Some(ClockOffset(delta)),
        objective_value: -best.value,
        diagnostics,
    })
}
