//! Line-of-sight geometry of the optical channel.
//!
//! Receiver positions are the unknowns of the whole toolkit, so everything here
//! that depends on the receiver position also has an analytic gradient with
//! respect to it. Positions are in meters, times in seconds.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const UNIT_NORM_TOL: f64 = 1e-12;

/// An LED transmitter at a known pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedTransmitter {
    pub position: Vector3<f64>,
    /// Unit vector along the optical axis of the LED.
    pub normal: Vector3<f64>,
    pub lambertian_order: f64,
}

impl LedTransmitter {
    pub fn new(position: Vector3<f64>, normal: Vector3<f64>, lambertian_order: f64) -> Result<Self> {
        let led = Self {
            position,
            normal,
            lambertian_order,
        };
        let violations = led.violations("led");
        if violations.is_empty() {
            Ok(led)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Invariant violations, reported relative to `path`.
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        check_finite_vec(&mut out, &format!("{path}.position"), &self.position);
        check_unit(&mut out, &format!("{path}.normal"), &self.normal);
        if !(self.lambertian_order >= 1.0) || !self.lambertian_order.is_finite() {
            out.push(Violation::new(
                format!("{path}.lambertian_order"),
                format!("lambertian order must be >= 1 (got {})", self.lambertian_order),
            ));
        }
        out
    }
}

/// The photodetector whose position is to be estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlcReceiver {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Photodetector responsivity, A/W.
    pub responsivity: f64,
    /// Detector area, m².
    pub detector_area: f64,
}

impl VlcReceiver {
    pub fn new(position: Vector3<f64>, normal: Vector3<f64>, responsivity: f64, detector_area: f64) -> Result<Self> {
        let rx = Self {
            position,
            normal,
            responsivity,
            detector_area,
        };
        let violations = rx.violations("receiver");
        if violations.is_empty() {
            Ok(rx)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        check_finite_vec(&mut out, &format!("{path}.position"), &self.position);
        check_unit(&mut out, &format!("{path}.normal"), &self.normal);
        if !(self.responsivity > 0.0) || !self.responsivity.is_finite() {
            out.push(Violation::new(
                format!("{path}.responsivity"),
                format!("responsivity must be > 0 (got {})", self.responsivity),
            ));
        }
        if !(self.detector_area > 0.0) || !self.detector_area.is_finite() {
            out.push(Violation::new(
                format!("{path}.detector_area"),
                format!("detector area must be > 0 (got {})", self.detector_area),
            ));
        }
        out
    }

    /// Same detector moved to `position`.
    pub fn at(&self, position: Vector3<f64>) -> Self {
        Self {
            position,
            ..self.clone()
        }
    }
}

/// Clock offset between the (mutually synchronized) LEDs and the receiver, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClockOffset(pub f64);

impl ClockOffset {
    pub fn seconds(self) -> f64 {
        self.0
    }
}

/// Derived quantities of one LED → receiver link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    pub distance: f64,
    pub cos_irradiation: f64,
    pub cos_incidence: f64,
    /// (m + 1) A_r / 2π
    pub gamma: f64,
}

impl ChannelGeometry {
    /// Both the LED and the detector face each other.
    pub fn is_los(&self) -> bool {
        self.cos_irradiation > 0.0 && self.cos_incidence > 0.0
    }
}

fn separation(rx: &VlcReceiver, tx: &LedTransmitter) -> Result<(Vector3<f64>, f64)> {
    let u = rx.position - tx.position;
    let d = u.norm();
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!(
            "receiver and transmitter coincide at {:?}",
            rx.position.as_slice()
        )));
    }
    Ok((u, d))
}

pub fn channel_geometry(rx: &VlcReceiver, tx: &LedTransmitter) -> Result<ChannelGeometry> {
    let (u, d) = separation(rx, tx)?;
    Ok(ChannelGeometry {
        distance: d,
        cos_irradiation: u.dot(&tx.normal) / d,
        cos_incidence: -u.dot(&rx.normal) / d,
        gamma: (tx.lambertian_order + 1.0) * rx.detector_area / (2.0 * std::f64::consts::PI),
    })
}

/// Lambertian attenuation factor of the link.
///
/// Returns 0 when the link is not line-of-sight (either cosine ≤ 0); such links
/// carry no signal and are excluded downstream.
pub fn attenuation(rx: &VlcReceiver, tx: &LedTransmitter) -> Result<f64> {
    let g = channel_geometry(rx, tx)?;
    if !g.is_los() {
        return Ok(0.0);
    }
    Ok(g.gamma * g.cos_irradiation.powf(tx.lambertian_order) * g.cos_incidence / (g.distance * g.distance))
}

/// Time of arrival of the LED's pulse in the receiver's clock.
pub fn toa(rx: &VlcReceiver, tx: &LedTransmitter, offset: ClockOffset) -> Result<f64> {
    let (_, d) = separation(rx, tx)?;
    Ok(d / SPEED_OF_LIGHT + offset.seconds())
}

/// Arrival-time differences relative to the first transmitter.
pub fn tdoa_vector(rx: &VlcReceiver, txs: &[LedTransmitter], offset: ClockOffset) -> Result<Vec<f64>> {
    if txs.len() < 2 {
        return Err(Error::Config(format!(
            "TDOA needs at least 2 transmitters, got {}",
            txs.len()
        )));
    }
    let reference = toa(rx, &txs[0], offset)?;
    txs[1..]
        .iter()
        .map(|tx| toa(rx, tx, offset).map(|t| t - reference))
        .collect()
}

/// ∂τ/∂l_r: the unit vector from LED to receiver scaled by 1/c.
pub fn toa_gradient(rx: &VlcReceiver, tx: &LedTransmitter) -> Result<Vector3<f64>> {
    let (u, d) = separation(rx, tx)?;
    Ok(u / (SPEED_OF_LIGHT * d))
}

/// ∂α/∂l_r with both normals held fixed.
///
/// With u = l_r − l_t, p = uᵀn_t and q = −uᵀn_r the attenuation is
/// γ pᵐ q / ‖u‖^(m+3), so ∇α = α (m n_t / p − n_r / q − (m+3) u / ‖u‖²).
pub fn attenuation_gradient(rx: &VlcReceiver, tx: &LedTransmitter) -> Result<Vector3<f64>> {
    let (u, d) = separation(rx, tx)?;
    let p = u.dot(&tx.normal);
    let q = -u.dot(&rx.normal);
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::Domain(
            "attenuation gradient requested for a link without line of sight".into(),
        ));
    }
    let m = tx.lambertian_order;
    let gamma = (m + 1.0) * rx.detector_area / (2.0 * std::f64::consts::PI);
    let alpha = gamma * p.powf(m) * q / d.powf(m + 3.0);
    Ok(alpha * (tx.normal * (m / p) - rx.normal / q - u * ((m + 3.0) / (d * d))))
}

/// Attenuation, its gradient, and the TOA gradient for one link, evaluated together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDerivatives {
    pub alpha: f64,
    pub d_alpha: Vector3<f64>,
    pub d_tau: Vector3<f64>,
    pub distance: f64,
}

/// `None` when the link is not line-of-sight.
pub fn link_derivatives(rx: &VlcReceiver, tx: &LedTransmitter) -> Result<Option<LinkDerivatives>> {
    let g = channel_geometry(rx, tx)?;
    if !g.is_los() {
        return Ok(None);
    }
    Ok(Some(LinkDerivatives {
        alpha: attenuation(rx, tx)?,
        d_alpha: attenuation_gradient(rx, tx)?,
        d_tau: toa_gradient(rx, tx)?,
        distance: g.distance,
    }))
}

fn check_unit(out: &mut Vec<Violation>, path: &str, v: &Vector3<f64>) {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL {
        out.push(Violation::new(path, format!("normal not unit (norm {n})")));
    }
}

fn check_finite_vec(out: &mut Vec<Violation>, path: &str, v: &Vector3<f64>) {
    if v.iter().any(|x| !x.is_finite()) {
        out.push(Violation::new(path, "non-finite coordinate"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn rx_at(p: [f64; 3]) -> VlcReceiver {
        VlcReceiver::new(Vector3::from(p), Vector3::z(), 0.4, 1e-4).unwrap()
    }

    fn led_at(p: [f64; 3]) -> LedTransmitter {
        LedTransmitter::new(Vector3::from(p), -Vector3::z(), 1.0).unwrap()
    }

    fn central_difference<F: Fn(&VlcReceiver) -> f64>(rx: &VlcReceiver, f: F, h: f64) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for k in 0..3 {
            let mut plus = rx.position;
            let mut minus = rx.position;
            plus[k] += h;
            minus[k] -= h;
            g[k] = (f(&rx.at(plus)) - f(&rx.at(minus))) / (2.0 * h);
        }
        g
    }

    #[test]
    fn attenuation_directly_below() {
        let alpha = attenuation(&rx_at([10.0, 10.0, 0.0]), &led_at([10.0, 10.0, 4.0])).unwrap();
        // (1/π)·1e-4/16
        assert_relative_eq!(alpha, 1.989_436_788_648_691_7e-6, max_relative = 1e-12);
    }

    #[test]
    fn attenuation_oblique() {
        let rx = rx_at([6.0, 5.75, 0.0]);
        let tx = led_at([10.0, 10.0, 4.0]);
        let g = channel_geometry(&rx, &tx).unwrap();
        // √(16 + 18.0625 + 16)
        assert_relative_eq!(g.distance, 7.075_485_849_042_453, max_relative = 1e-12);
        assert_relative_eq!(g.cos_irradiation, 4.0 / g.distance, max_relative = 1e-14);
        assert_relative_eq!(g.cos_incidence, 4.0 / g.distance, max_relative = 1e-14);
        let alpha = attenuation(&rx, &tx).unwrap();
        assert_relative_eq!(alpha, 2.0320e-7, max_relative = 1e-4);
    }

    #[test]
    fn in_plane_receiver_has_no_link() {
        let rx = VlcReceiver::new(Vector3::new(14.0, 10.0, 4.0), -Vector3::x(), 0.4, 1e-4).unwrap();
        let tx = led_at([10.0, 10.0, 4.0]);
        let g = channel_geometry(&rx, &tx).unwrap();
        assert!(!g.is_los());
        assert_eq!(attenuation(&rx, &tx).unwrap(), 0.0);
        assert!(link_derivatives(&rx, &tx).unwrap().is_none());
        assert!(attenuation_gradient(&rx, &tx).is_err());
    }

    #[test]
    fn coincident_positions_rejected() {
        let rx = rx_at([1.0, 2.0, 3.0]);
        let tx = led_at([1.0, 2.0, 3.0]);
        assert!(matches!(attenuation(&rx, &tx), Err(Error::Domain(_))));
        assert!(matches!(toa(&rx, &tx, ClockOffset(0.0)), Err(Error::Domain(_))));
        assert!(matches!(toa_gradient(&rx, &tx), Err(Error::Domain(_))));
    }

    #[test]
    fn toa_values() {
        let rx = rx_at([10.0, 10.0, 0.0]);
        let tx = led_at([10.0, 10.0, 4.0]);
        let t0 = toa(&rx, &tx, ClockOffset(0.0)).unwrap();
        assert_relative_eq!(t0, 4.0 / SPEED_OF_LIGHT, max_relative = 1e-15);
        assert_relative_eq!(t0, 1.33426e-8, max_relative = 1e-5);
        let t1 = toa(&rx, &tx, ClockOffset(1e-7)).unwrap();
        assert_relative_eq!(t1 - t0, 1e-7, max_relative = 1e-12);

        let rx = rx_at([6.0, 5.75, 0.0]);
        let t = toa(&rx, &tx, ClockOffset(0.0)).unwrap();
        assert_relative_eq!(t, 2.36013e-8, max_relative = 1e-5);
    }

    #[test]
    fn tdoa_examples() {
        let rx = rx_at([6.0, 5.75, 0.0]);
        let txs = [led_at([10.0, 10.0, 4.0]), led_at([5.0, 10.0, 4.0])];
        let d = tdoa_vector(&rx, &txs, ClockOffset(0.0)).unwrap();
        assert_eq!(d.len(), 1);
        // (√35.0625 − √50.0625)/c
        assert_relative_eq!(d[0], -3.849_750_642_756_155e-9, max_relative = 1e-12);
        let shifted = tdoa_vector(&rx, &txs, ClockOffset(5e-8)).unwrap();
        assert!((d[0] - shifted[0]).abs() < 1e-18);

        let sym = rx_at([7.5, 3.0, 0.0]);
        let pair = [led_at([5.0, 10.0, 4.0]), led_at([10.0, 10.0, 4.0])];
        assert!(tdoa_vector(&sym, &pair, ClockOffset(0.0)).unwrap()[0].abs() < 1e-20);

        assert!(matches!(
            tdoa_vector(&rx, &txs[..1], ClockOffset(0.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn toa_gradient_examples() {
        let g = toa_gradient(&rx_at([10.0, 10.0, 0.0]), &led_at([10.0, 10.0, 4.0])).unwrap();
        assert_eq!(g, Vector3::new(0.0, 0.0, -1.0 / SPEED_OF_LIGHT));

        let g = toa_gradient(&rx_at([6.0, 5.75, 0.0]), &led_at([10.0, 10.0, 4.0])).unwrap();
        let d = 7.075_485_849_959_644;
        let expected = Vector3::new(-4.0, -4.25, -4.0) / (SPEED_OF_LIGHT * d);
        assert_relative_eq!(g, expected, max_relative = 1e-12);
    }

    #[test]
    fn attenuation_gradient_under_led_is_symmetric() {
        // diagonal lateral offset from the LED
        let rx = rx_at([10.5, 10.5, 0.0]);
        let g = attenuation_gradient(&rx, &led_at([10.0, 10.0, 4.0])).unwrap();
        assert!(g.iter().all(|x| x.is_finite()));
        assert_relative_eq!(g.x, g.y, max_relative = 1e-14);
        let g0 = attenuation_gradient(&rx_at([10.0, 10.0, 0.0]), &led_at([10.0, 10.0, 4.0])).unwrap();
        assert!(g0.x.abs() < 1e-20 && g0.y.abs() < 1e-20);
    }

    #[test]
    fn attenuation_gradient_matches_central_difference() {
        let rx = rx_at([6.0, 5.75, 0.0]);
        let tx = led_at([10.0, 10.0, 4.0]);
        let g = attenuation_gradient(&rx, &tx).unwrap();
        let fd = central_difference(&rx, |r| attenuation(r, &tx).unwrap(), 1e-6);
        assert!((g - fd).norm() / g.norm() < 1e-6);
    }

    #[test]
    fn gradient_is_linear_in_detector_area() {
        let rx = rx_at([6.0, 5.75, 0.0]);
        let rx2 = VlcReceiver {
            detector_area: 2e-4,
            ..rx.clone()
        };
        let tx = led_at([10.0, 10.0, 4.0]);
        let g1 = attenuation_gradient(&rx, &tx).unwrap();
        let g2 = attenuation_gradient(&rx2, &tx).unwrap();
        for k in 0..3 {
            assert_eq!(g2[k], 2.0 * g1[k]);
        }
    }

    #[test]
    fn validation_reports_every_problem() {
        let err = LedTransmitter::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -2.0), 0.5).unwrap_err();
        match err {
            Error::Invalid(v) => {
                assert_eq!(v.len(), 2);
                assert!(v[0].message.contains("normal not unit"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(VlcReceiver::new(Vector3::zeros(), Vector3::z(), 0.0, -1.0).is_err());
    }

    fn random_link() -> impl Strategy<Value = (VlcReceiver, LedTransmitter)> {
        (
            0.5f64..14.5,
            0.5f64..14.5,
            0.0f64..2.5,
            0.5f64..14.5,
            0.5f64..14.5,
            -0.3f64..0.3,
            -0.3f64..0.3,
            1.0f64..3.0,
        )
            .prop_map(|(x, y, z, tx_x, tx_y, nx, ny, m)| {
                let normal = Vector3::new(nx, ny, -1.0).normalize();
                (
                    rx_at([x, y, z]),
                    LedTransmitter::new(Vector3::new(tx_x, tx_y, 4.0), normal, m).unwrap(),
                )
            })
            .prop_filter("line of sight", |(rx, tx)| {
                channel_geometry(rx, tx).map(|g| g.is_los()).unwrap_or(false)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn prop_attenuation_gradient_fd((rx, tx) in random_link()) {
            let g = attenuation_gradient(&rx, &tx).unwrap();
            let fd = central_difference(&rx, |r| attenuation(r, &tx).unwrap(), 1e-6);
            prop_assert!((g - fd).norm() / g.norm() < 1e-6);
        }

        #[test]
        fn prop_toa_gradient_unit_norm((rx, tx) in random_link()) {
            let g = toa_gradient(&rx, &tx).unwrap();
            prop_assert!((g.norm() * SPEED_OF_LIGHT - 1.0).abs() < 1e-14);
        }

        #[test]
        fn prop_tdoa_offset_free((rx, tx) in random_link(), d1 in -1e-6f64..1e-6, d2 in -1e-6f64..1e-6) {
            let txs = [tx.clone(), led_at([7.5, 7.5, 4.0])];
            let a = tdoa_vector(&rx, &txs, ClockOffset(d1)).unwrap();
            let b = tdoa_vector(&rx, &txs, ClockOffset(d2)).unwrap();
            prop_assert!((a[0] - b[0]).abs() < 1e-18);
        }

        #[test]
        fn prop_attenuation_rotation_invariant(
            (rx, tx) in random_link(),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let axis = Vector3::from(axis);
            prop_assume!(axis.norm() > 1e-3);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
            let rx_r = VlcReceiver { position: rot * rx.position, normal: rot * rx.normal, ..rx.clone() };
            let tx_r = LedTransmitter { position: rot * tx.position, normal: rot * tx.normal, ..tx.clone() };
            let a = attenuation(&rx, &tx).unwrap();
            let b = attenuation(&rx_r, &tx_r).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
