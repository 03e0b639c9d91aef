//! Fisher information for the receiver position and clock offset, and the
//! Cramér-Rao bounds derived from it.
//!
//! Parameters are ordered φ = [x, y, z, Δ]. With K = R_p²/σ², a_k = ∂α/∂l_k and
//! t_k = ∂τ/∂l_k, one LED contributes
//!
//! ```text
//! J_mn = K (E2 a_m a_n + α² E1 t_m t_n − α E3 (a_m t_n + t_m a_n))
//! J_m4 = K (α² E1 t_m − α E3 a_m)
//! J_44 = K α² E1
//! ```
//!
//! In two-dimensional mode the receiver height is known and z is dropped before
//! inversion.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{link_derivatives, LedTransmitter, LinkDerivatives, VlcReceiver};
use crate::scenario::{Mode, Scenario};
use crate::signal::{EnergyIntegrals, PulseSpec};

/// Largest acceptable condition number of the Jacobi-scaled information matrix.
pub const CONDITION_LIMIT: f64 = 1e14;

const PARAMETER_NAMES: [&str; 4] = ["x", "y", "z", "delta"];

/// Everything the bound needs about one LED → receiver link.
#[derive(Debug, Clone, Copy)]
pub struct LinkInfo {
    pub derivatives: LinkDerivatives,
    pub energy: EnergyIntegrals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimResult {
    /// Full 4×4 information over [x, y, z, Δ].
    pub fim: Matrix4<f64>,
    /// Per-LED addends; zero for excluded links.
    pub link_contributions: Vec<Matrix4<f64>>,
    /// Indices of LEDs without line of sight.
    pub excluded_links: Vec<usize>,
    pub mode: Mode,
}

impl FimResult {
    /// Indices into φ that are unknown in this mode.
    pub fn active_indices(&self) -> &'static [usize] {
        active_indices(self.mode)
    }

    /// The information matrix restricted to the unknown parameters.
    pub fn reduced(&self) -> DMatrix<f64> {
        let idx = self.active_indices();
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.fim[(idx[r], idx[c])])
    }

    pub fn j_a(&self) -> Matrix3<f64> {
        self.fim.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn j_b(&self) -> Vector3<f64> {
        self.fim.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn j_c(&self) -> f64 {
        self.fim[(3, 3)]
    }
}

fn active_indices(mode: Mode) -> &'static [usize] {
    match mode {
        Mode::TwoD => &[0, 1, 3],
        Mode::ThreeD => &[0, 1, 2, 3],
    }
}

fn position_indices(mode: Mode) -> &'static [usize] {
    match mode {
        Mode::TwoD => &[0, 1],
        Mode::ThreeD => &[0, 1, 2],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbResult {
    /// Lower bound on the position error covariance, m². Rows and columns of
    /// known coordinates are zero.
    pub position_cov_bound: Matrix3<f64>,
    pub mse_bound_trace: f64,
    pub offset_var_bound: f64,
    pub per_coordinate: Vector3<f64>,
    /// Condition number of the Jacobi-scaled information matrix.
    pub condition: f64,
}

impl CrlbResult {
    pub fn sqrt_mse(&self) -> f64 {
        self.mse_bound_trace.sqrt()
    }
}

/// Link data for every LED, `None` where there is no line of sight.
pub fn link_infos(rx: &VlcReceiver, leds: &[LedTransmitter], pulses: &[PulseSpec]) -> Result<Vec<Option<LinkInfo>>> {
    if pulses.len() != leds.len() {
        return Err(Error::Config(format!(
            "{} pulses for {} LEDs",
            pulses.len(),
            leds.len()
        )));
    }
    leds.iter()
        .zip(pulses)
        .map(|(tx, p)| {
            Ok(match link_derivatives(rx, tx)? {
                Some(derivatives) => Some(LinkInfo {
                    derivatives,
                    energy: p.energy_integrals()?,
                }),
                None => None,
            })
        })
        .collect()
}

/// One link's addend to the information matrix.
pub fn link_fim(link: &LinkInfo, responsivity: f64, psd: f64) -> Matrix4<f64> {
    let k = responsivity * responsivity / psd;
    let LinkDerivatives {
        alpha, d_alpha, d_tau, ..
    } = link.derivatives;
    let EnergyIntegrals { e1, e2, e3 } = link.energy;
    let mut j = Matrix4::zeros();
    for m in 0..3 {
        for n in 0..3 {
            j[(m, n)] = k
                * (e2 * d_alpha[m] * d_alpha[n] + alpha * alpha * e1 * d_tau[m] * d_tau[n]
                    - alpha * e3 * (d_alpha[m] * d_tau[n] + d_tau[m] * d_alpha[n]));
        }
        let cross = k * (alpha * alpha * e1 * d_tau[m] - alpha * e3 * d_alpha[m]);
        j[(m, 3)] = cross;
        j[(3, m)] = cross;
    }
    j[(3, 3)] = k * alpha * alpha * e1;
    j
}

/// Information matrix for a receiver pose and LED constellation.
pub fn fim_for(
    rx: &VlcReceiver,
    leds: &[LedTransmitter],
    pulses: &[PulseSpec],
    psd: f64,
    mode: Mode,
) -> Result<FimResult> {
    if !(psd > 0.0) {
        return Err(Error::Domain(format!("noise level must be positive, got {psd}")));
    }
    let links = link_infos(rx, leds, pulses)?;
    let mut fim = Matrix4::zeros();
    let mut link_contributions = Vec::with_capacity(links.len());
    let mut excluded_links = Vec::new();
    for (i, link) in links.iter().enumerate() {
        match link {
            Some(link) => {
                let j = link_fim(link, rx.responsivity, psd);
                fim += j;
                link_contributions.push(j);
            }
            None => {
                log::warn!("LED {i} has no line of sight to the receiver; excluded from the bound");
                excluded_links.push(i);
                link_contributions.push(Matrix4::zeros());
            }
        }
    }
    if excluded_links.len() == links.len() {
        return Err(Error::Domain("no LED has line of sight to the receiver".into()));
    }
    Ok(FimResult {
        fim,
        link_contributions,
        excluded_links,
        mode,
    })
}

/// Information matrix at the scenario's true receiver pose.
pub fn fim(s: &Scenario) -> Result<FimResult> {
    fim_for(&s.receiver, &s.leds, &s.pulses(), s.noise.psd, s.mode)
}

/// Inverse of a symmetric positive definite matrix after Jacobi scaling, with
/// the condition guard. Returns the inverse and the scaled condition number.
fn guarded_inverse(j: &DMatrix<f64>, names: &[&str]) -> Result<(DMatrix<f64>, f64)> {
    let n = j.nrows();
    let diag: Vec<f64> = (0..n).map(|i| j[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
            null_direction: names[i].to_string(),
        });
    }
    let scale = DVector::from_iterator(n, diag.iter().map(|d| 1.0 / d.sqrt()));
    let scaled = DMatrix::from_fn(n, n, |r, c| j[(r, c)] * scale[r] * scale[c]);
    let eig = scaled.clone().symmetric_eigen();
    let (mut lo, mut hi, mut argmin) = (f64::INFINITY, 0.0_f64, 0);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v < lo {
            lo = v;
            argmin = i;
        }
        hi = hi.max(v.abs());
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < CONDITION_LIMIT) {
        let v = eig.eigenvectors.column(argmin).component_mul(&scale);
        let v = &v / v.amax();
        let null_direction = names
            .iter()
            .zip(v.iter())
            .filter(|(_, c)| c.abs() > 1e-6)
            .map(|(name, c)| format!("{c:+.3}·{name}"))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(Error::RankDeficient {
            condition,
            null_direction,
        });
    }
    let inv_scaled = scaled.cholesky().map(|c| c.inverse()).ok_or(Error::RankDeficient {
        condition,
        null_direction: "cholesky failed".into(),
    })?;
    let inv = DMatrix::from_fn(n, n, |r, c| inv_scaled[(r, c)] * scale[r] * scale[c]);
    Ok((inv, condition))
}

fn names_for(indices: &[usize]) -> Vec<&'static str> {
    indices.iter().map(|&i| PARAMETER_NAMES[i]).collect()
}

fn embed_position(mode: Mode, block: &DMatrix<f64>) -> Matrix3<f64> {
    let idx = position_indices(mode);
    let mut out = Matrix3::zeros();
    for (r, &i) in idx.iter().enumerate() {
        for (c, &k) in idx.iter().enumerate() {
            out[(i, k)] = block[(r, c)];
        }
    }
    out
}

/// Bounds from the inverse of the full information matrix.
pub fn crlb_full(f: &FimResult) -> Result<CrlbResult> {
    let idx = f.active_indices();
    let (inv, condition) = guarded_inverse(&f.reduced(), &names_for(idx))?;
    let p = idx.len() - 1;
    let position_cov_bound = embed_position(f.mode, &inv.view((0, 0), (p, p)).into_owned());
    Ok(CrlbResult {
        mse_bound_trace: position_cov_bound.trace(),
        per_coordinate: position_cov_bound.diagonal(),
        offset_var_bound: inv[(p, p)],
        position_cov_bound,
        condition,
    })
}

/// Bounds at the scenario's true pose.
pub fn crlb(s: &Scenario) -> Result<CrlbResult> {
    crlb_full(&fim(s)?)
}

/// Position information with the offset eliminated, assembled link pair by link
/// pair as a double sum over LEDs. Its inverse is the position block of the
/// inverse full information matrix. Square of size 2 or 3 depending on mode.
pub fn fim_qs_for(
    rx: &VlcReceiver,
    leds: &[LedTransmitter],
    pulses: &[PulseSpec],
    psd: f64,
    mode: Mode,
) -> Result<DMatrix<f64>> {
    let links: Vec<LinkInfo> = link_infos(rx, leds, pulses)?.into_iter().flatten().collect();
    if links.is_empty() {
        return Err(Error::Domain("no LED has line of sight to the receiver".into()));
    }
    let s: f64 = links.iter().map(|l| l.derivatives.alpha.powi(2) * l.energy.e1).sum();
    if !(s > 0.0) {
        return Err(Error::Domain("no timing information: Σ α² E1 = 0".into()));
    }
    let k = rx.responsivity * rx.responsivity / (psd * s);
    let idx = position_indices(mode);
    let mut out = DMatrix::zeros(idx.len(), idx.len());
    for (r, &m) in idx.iter().enumerate() {
        for (c, &n) in idx.iter().enumerate() {
            let mut acc = 0.0;
            for li in &links {
                let (ai, ei) = (li.derivatives.alpha, li.energy);
                let (dai, dti) = (li.derivatives.d_alpha, li.derivatives.d_tau);
                for lj in &links {
                    let (aj, ej) = (lj.derivatives.alpha, lj.energy);
                    let (daj, dtj) = (lj.derivatives.d_alpha, lj.derivatives.d_tau);
                    acc += dai[m]
                        * (aj * aj * ei.e2 * ej.e1 * dai[n] - ai * aj * ei.e3 * ej.e3 * daj[n]
                            + ai * aj * aj * ei.e3 * ej.e1 * (dtj[n] - dti[n]))
                        + dti[m]
                            * (aj * aj * ej.e1 * (ai * ai * ei.e1 * dti[n] - ai * ei.e3 * dai[n])
                                + ai * ai * ei.e1 * (aj * ej.e3 * daj[n] - aj * aj * ej.e1 * dtj[n]));
                }
            }
            out[(r, c)] = k * acc;
        }
    }
    Ok(out)
}

pub fn fim_qs(s: &Scenario) -> Result<DMatrix<f64>> {
    fim_qs_for(&s.receiver, &s.leds, &s.pulses(), s.noise.psd, s.mode)
}

/// Inverse of an offset-free position information matrix, with the condition guard.
pub fn invert_position_information(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let names = &PARAMETER_NAMES[..j.nrows()];
    guarded_inverse(j, names).map(|(inv, _)| inv)
}

/// (J_A − J_b J_bᵀ / J_c)⁻¹, the position block of the inverse information matrix.
pub fn schur_position_block(f: &FimResult) -> Result<DMatrix<f64>> {
    let j_c = f.j_c();
    if !(j_c > 0.0) {
        return Err(Error::Domain("no timing information: J_44 = 0".into()));
    }
    let idx = position_indices(f.mode);
    let schur = DMatrix::from_fn(idx.len(), idx.len(), |r, c| {
        let (m, n) = (idx[r], idx[c]);
        f.fim[(m, n)] - f.fim[(m, 3)] * f.fim[(n, 3)] / j_c
    });
    guarded_inverse(&schur, &names_for(idx)).map(|(inv, _)| inv)
}

/// J_A⁻¹: the bound when the clock offset is known.
pub fn synchronous_position_block(f: &FimResult) -> Result<DMatrix<f64>> {
    let idx = position_indices(f.mode);
    let j_a = DMatrix::from_fn(idx.len(), idx.len(), |r, c| f.fim[(idx[r], idx[c])]);
    guarded_inverse(&j_a, &names_for(idx)).map(|(inv, _)| inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncEquivalence {
    pub holds: bool,
    /// Σ α² E1 (l_r,k − l_t,k)/d per coordinate, divided by Σ α² E1.
    pub residuals: Vector3<f64>,
}

/// Tests whether the offset-position cross information vanishes, in which case
/// not knowing the offset costs nothing. Only defined when every E3 is zero.
pub fn sync_equivalence_check(s: &Scenario, tol: f64) -> Result<SyncEquivalence> {
    let links = link_infos(&s.receiver, &s.leds, &s.pulses())?;
    let mut num = Vector3::zeros();
    let mut den = 0.0;
    for (i, link) in links.iter().enumerate() {
        let Some(link) = link else { continue };
        if link.energy.e3 != 0.0 {
            return Err(Error::Precondition(format!(
                "LED {i} has E3 = {:e}; the condition requires E3 = 0",
                link.energy.e3
            )));
        }
        let w = link.derivatives.alpha.powi(2) * link.energy.e1;
        let u = s.receiver.position - s.leds[i].position;
        num += u * (w / link.derivatives.distance);
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::Domain("no timing information: Σ α² E1 = 0".into()));
    }
    let residuals = num / den;
    Ok(SyncEquivalence {
        holds: residuals.iter().all(|r| r.abs() < tol),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBound {
    pub var_alpha: f64,
    pub var_tau: f64,
}

/// Single-link bounds on the attenuation and TOA estimates.
pub fn crlb_link(s: &Scenario, i: usize) -> Result<LinkBound> {
    let tx = s
        .leds
        .get(i)
        .ok_or_else(|| Error::Config(format!("LED index {i} out of range ({} LEDs)", s.leds.len())))?;
    let energy = s.pulse_for(i).energy_integrals()?;
    if energy.e3 != 0.0 {
        return Err(Error::Precondition(format!("LED {i} has E3 = {:e}", energy.e3)));
    }
    let alpha = crate::geometry::attenuation(&s.receiver, tx)?;
    Ok(link_bound(alpha, &energy, s.receiver.responsivity, s.noise.psd))
}

pub fn link_bound(alpha: f64, energy: &EnergyIntegrals, responsivity: f64, psd: f64) -> LinkBound {
    let rp2 = responsivity * responsivity;
    LinkBound {
        var_alpha: psd / (rp2 * energy.e2),
        var_tau: psd / (rp2 * alpha * alpha * energy.e1),
    }
}
