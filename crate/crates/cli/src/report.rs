//! Self-checks run by `vlp validate` against a scenario.

use serde::{Deserialize, Serialize};
use vlp_core::crlb::{crlb, fim_qs, invert_position_information};
use vlp_core::geometry::{attenuation, attenuation_gradient, channel_geometry, toa, toa_gradient};
use vlp_core::montecarlo::trial_seed;
use vlp_core::nalgebra::Vector3;
use vlp_core::signal::{noise_sequence, quadrature_energy_integrals};
use vlp_core::{ClockOffset, Error, PulseSpec, Scenario, Violation, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    /// An expected property of the input (such as a singular bound), not a defect.
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    fn measured(name: &str, residual: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if residual <= tolerance {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            residual: Some(residual),
            tolerance: Some(tolerance),
            detail: detail.into(),
        }
    }

    fn with_status(name: &str, status: CheckStatus, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status,
            residual: None,
            tolerance: None,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    pub unknown_fields: Vec<String>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const GRADIENT_STEP: f64 = 1e-6;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const ENERGY_TOL: f64 = 1e-6;
pub const EQUIVALENCE_TOL: f64 = 1e-9;
const NOISE_SAMPLES: usize = 200_000;

/// Runs every check. Checks that cannot run on this input are skipped with a
/// reason instead of failing.
pub fn validate_scenario(s: &Scenario, unknown_fields: Vec<String>) -> ValidationReport {
    let violations = s.violations();
    let mut checks = vec![if violations.is_empty() {
        Check::with_status("scenario_invariants", CheckStatus::Pass, "no violations")
    } else {
        let mut c = Check::with_status(
            "scenario_invariants",
            CheckStatus::Fail,
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        );
        c.residual = Some(violations.len() as f64);
        c
    }];
    checks.push(gradient_check(s));
    checks.push(toa_gradient_norm_check(s));
    checks.push(energy_check(s));
    checks.push(equivalence_check(s));
    checks.push(noise_check(s));
    ValidationReport {
        passed: checks.iter().all(|c| c.status != CheckStatus::Fail),
        violations,
        unknown_fields,
        checks,
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn gradient_check(s: &Scenario) -> Check {
    const NAME: &str = "gradient_finite_difference";
    let mut worst: f64 = 0.0;
    let mut links = 0;
    for tx in &s.leds {
        match channel_geometry(&s.receiver, tx) {
            Ok(g) if g.is_los() => {}
            _ => continue,
        }
        let (Ok(ga), Ok(gt)) = (attenuation_gradient(&s.receiver, tx), toa_gradient(&s.receiver, tx)) else {
            continue;
        };
        links += 1;
        let mut fa = Vector3::zeros();
        let mut ft = Vector3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = GRADIENT_STEP;
            let plus = s.receiver.at(s.receiver.position + e);
            let minus = s.receiver.at(s.receiver.position - e);
            let diff = |f: &dyn Fn(&vlp_core::VlcReceiver) -> f64| (f(&plus) - f(&minus)) / (2.0 * GRADIENT_STEP);
            fa[k] = diff(&|r| attenuation(r, tx).unwrap_or(f64::NAN));
            ft[k] = diff(&|r| toa(r, tx, ClockOffset(0.0)).unwrap_or(f64::NAN));
        }
        let ea = (fa - ga).norm() / ga.norm();
        let et = (ft - gt).norm() / gt.norm();
        worst = worst.max(ea).max(et);
        if ea.is_nan() || et.is_nan() {
            worst = f64::INFINITY;
        }
    }
    if links == 0 {
        return Check::with_status(NAME, CheckStatus::Skipped, "no LED has line of sight to the receiver");
    }
    Check::measured(
        NAME,
        worst,
        GRADIENT_TOL,
        format!("largest relative error over {links} links, central step {GRADIENT_STEP} m"),
    )
}

fn toa_gradient_norm_check(s: &Scenario) -> Check {
    const NAME: &str = "toa_gradient_norm";
    let norms: Vec<f64> = s
        .leds
        .iter()
        .filter_map(|tx| toa_gradient(&s.receiver, tx).ok())
        .map(|g| (g.norm() * SPEED_OF_LIGHT - 1.0).abs())
        .collect();
    if norms.is_empty() {
        return Check::with_status(NAME, CheckStatus::Skipped, "no link has a defined delay gradient");
    }
    Check::measured(NAME, norms.iter().cloned().fold(0.0, f64::max), 1e-12, "| c·‖∇τ‖ − 1 |")
}

fn energy_check(s: &Scenario) -> Check {
    const NAME: &str = "energy_integrals";
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for p in s.pulses() {
        let PulseSpec::RaisedCosineSinusoid {
            center_frequency,
            duration,
            ..
        } = &p
        else {
            continue;
        };
        if !p.violations("pulse").is_empty() {
            continue;
        }
        let Ok(closed) = p.energy_integrals() else { continue };
        let cycles = (center_frequency * duration).round().max(1.0);
        let points = (400.0 * cycles).min(4e6) as usize + 1;
        let q = quadrature_energy_integrals(&p, points);
        worst = worst
            .max(relative(closed.e1, q.e1))
            .max(relative(closed.e2, q.e2))
            .max(q.e3.abs() / (q.e1 * q.e2).sqrt());
        checked += 1;
    }
    if checked == 0 {
        return Check::with_status(
            NAME,
            CheckStatus::Skipped,
            "no valid raised-cosine pulse; tabulated pulses have no closed form",
        );
    }
    Check::measured(NAME, worst, ENERGY_TOL, "closed forms against trapezoidal quadrature")
}

fn equivalence_check(s: &Scenario) -> Check {
    const NAME: &str = "offset_elimination_equivalence";
    if !(s.noise.psd > 0.0) {
        return Check::with_status(
            NAME,
            CheckStatus::Skipped,
            "noise psd is not positive; the bound is undefined",
        );
    }
    let full = match crlb(s) {
        Ok(b) => b,
        Err(Error::RankDeficient { condition, null_direction }) => {
            return Check::with_status(
                NAME,
                CheckStatus::Diagnostic,
                format!("information matrix is singular for this geometry (condition {condition:.3e}, null direction {null_direction}); expected when the LEDs cannot fix every unknown"),
            )
        }
        Err(e) => return Check::with_status(NAME, CheckStatus::Skipped, e.to_string()),
    };
    let reduced = match fim_qs(s).and_then(|j| invert_position_information(&j)) {
        Ok(inv) => inv.trace(),
        Err(e) => {
            return Check::with_status(
                NAME,
                CheckStatus::Diagnostic,
                format!("offset-free position information is singular: {e}"),
            )
        }
    };
    Check::measured(
        NAME,
        relative(reduced, full.mse_bound_trace),
        EQUIVALENCE_TOL,
        "trace of the inverse offset-free information against the position block of the full inverse",
    )
}

fn noise_check(s: &Scenario) -> Check {
    const NAME: &str = "noise_calibration";
    if s.noise.psd == 0.0 {
        return Check::with_status(
            NAME,
            CheckStatus::Skipped,
            "noise psd is 0: the received signals are noise free",
        );
    }
    if !(s.noise.psd > 0.0) {
        return Check::with_status(NAME, CheckStatus::Skipped, "noise psd is not positive");
    }
    let fs = match s.sample_rate() {
        Ok(fs) => fs,
        Err(e) => return Check::with_status(NAME, CheckStatus::Skipped, e.to_string()),
    };
    let noise = s.noise.with_seed(trial_seed(s.noise.seed, 0, 0));
    let w = noise_sequence(&noise, fs, NOISE_SAMPLES);
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let expected = s.noise.psd * fs;
    // Five standard errors of a Gaussian sample variance.
    let tol = 5.0 * (2.0 / n).sqrt();
    Check::measured(
        NAME,
        (var / expected - 1.0).abs(),
        tol,
        format!("sample variance of {NOISE_SAMPLES} draws against σ²·f_s = {expected:.6e}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use vlp_core::default_scenario;

    #[test]
    fn default_scenario_passes() {
        let r = validate_scenario(&default_scenario(), vec![]);
        for c in &r.checks {
            assert_eq!(c.status, CheckStatus::Pass, "{c:?}");
        }
        assert!(r.passed);
    }

    #[test]
    fn zero_psd_skips_noise_calibration() {
        let mut s = default_scenario();
        s.noise.psd = 0.0;
        let r = validate_scenario(&s, vec![]);
        let c = r.check("noise_calibration").unwrap();
        assert_eq!(c.status, CheckStatus::Skipped);
        assert!(c.detail.contains("psd"));
    }

    #[test]
    fn single_led_is_a_rank_diagnostic() {
        let mut s = default_scenario();
        s.leds.truncate(1);
        let r = validate_scenario(&s, vec![]);
        assert_eq!(
            r.check("offset_elimination_equivalence").unwrap().status,
            CheckStatus::Diagnostic
        );
        assert!(r.passed, "{r:#?}");
    }
}
