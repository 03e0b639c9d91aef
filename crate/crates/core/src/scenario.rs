//! Experiment description and its JSON document form.
//!
//! ```json
//! {
//!   "room": { "width": 15, "depth": 15, "height": 4 },
//!   "leds": [ { "position": [10, 10, 4], "normal": [0, 0, -1], "lambertian_order": 1 } ],
//!   "receiver": { "position": [6, 5.75, 0], "normal": [0, 0, 1],
//!                 "responsivity": 0.4, "detector_area": 1e-4 },
//!   "clock_offset": 3e-8,
//!   "pulse": { "kind": "raised_cosine_sinusoid", "amplitude": 1,
//!              "duration": 1e-6, "center_frequency": 1e8 },
//!   "noise": { "psd": 1.336e-22, "seed": 1 },
//!   "oversample_factor": 16,
//!   "mode": "two_d",
//!   "search": { "spatial_step": 0.25, "delta_range": [-2e-7, 2e-7] }
//! }
//! ```
//!
//! A tabulated pulse may be given inline (`"samples": [[t, v], ...]`) or as
//! `"csv": "relative/path.csv"`, resolved against the scenario file's directory.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result, Violation};
use crate::estimators::SearchConfig;
use crate::geometry::{channel_geometry, ClockOffset, LedTransmitter, VlcReceiver, SPEED_OF_LIGHT};
use crate::signal::{NoiseSpec, ObservationWindow, PulseSpec, TabulatedPulse};

/// Axis-aligned room [0, width] × [0, depth] × [0, height], meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Room {
    pub fn min(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    pub fn max(&self) -> Vector3<f64> {
        Vector3::new(self.width, self.depth, self.height)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.max() / 2.0
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        const TOL: f64 = 1e-9;
        (0..3).all(|k| p[k] >= -TOL && p[k] <= self.max()[k] + TOL)
    }
}

/// Which receiver coordinates are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Receiver height known; x, y and the clock offset are estimated.
    TwoD,
    ThreeD,
}

impl Mode {
    pub fn position_dims(self) -> usize {
        match self {
            Mode::TwoD => 2,
            Mode::ThreeD => 3,
        }
    }
}

fn default_oversample() -> f64 {
    16.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub room: Room,
    pub leds: Vec<LedTransmitter>,
    /// Ground-truth receiver pose.
    pub receiver: VlcReceiver,
    /// Ground-truth clock offset.
    #[serde(default)]
    pub clock_offset: ClockOffset,
    /// Pulse emitted by every LED unless overridden in `led_pulses`.
    pub pulse: PulseSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub led_pulses: Vec<PulseSpec>,
    pub noise: NoiseSpec,
    /// Explicit sampling rate; when absent it is `oversample_factor` × the carrier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    #[serde(default = "default_oversample")]
    pub oversample_factor: f64,
    pub mode: Mode,
    #[serde(default)]
    pub search: SearchConfig,
}

/// Outcome of reading a scenario document.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    /// Dotted paths of fields that were present but not recognised.
    pub unknown_fields: Vec<String>,
}

impl Scenario {
    pub fn pulse_for(&self, led: usize) -> &PulseSpec {
        self.led_pulses.get(led).unwrap_or(&self.pulse)
    }

    pub fn pulses(&self) -> Vec<PulseSpec> {
        (0..self.leds.len()).map(|i| self.pulse_for(i).clone()).collect()
    }

    pub fn sample_rate(&self) -> Result<f64> {
        if let Some(fs) = self.sample_rate {
            return Ok(fs);
        }
        let fc = (0..self.leds.len().max(1))
            .filter_map(|i| self.pulse_for(i).center_frequency())
            .fold(0.0, f64::max);
        if fc > 0.0 {
            Ok(self.oversample_factor * fc)
        } else {
            Err(Error::Config("tabulated pulses need an explicit sample_rate".into()))
        }
    }

    pub fn max_duration(&self) -> f64 {
        (0..self.leds.len().max(1))
            .map(|i| self.pulse_for(i).duration())
            .fold(0.0, f64::max)
    }

    /// The region searched by the estimators: the room grown by `search.margin`.
    pub fn search_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let m = Vector3::repeat(self.search.margin);
        (self.room.min() - m, self.room.max() + m)
    }

    /// Window that contains every pulse for every position in the search box and
    /// every offset in the configured range.
    pub fn observation_window(&self) -> ObservationWindow {
        let (lo, hi) = self.search_box();
        let mut max_distance: f64 = 0.0;
        for led in &self.leds {
            for corner in 0..8 {
                let c = Vector3::new(
                    if corner & 1 == 0 { lo.x } else { hi.x },
                    if corner & 2 == 0 { lo.y } else { hi.y },
                    if corner & 4 == 0 { lo.z } else { hi.z },
                );
                max_distance = max_distance.max((c - led.position).norm());
            }
        }
        let [d_lo, d_hi] = self.search.delta_range;
        ObservationWindow {
            t_start: d_lo.min(0.0),
            t_end: self.max_duration() + max_distance / SPEED_OF_LIGHT + d_hi.max(0.0),
        }
    }

    /// Every invariant violation in the scenario.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let room = self.room;
        for (name, v) in [("width", room.width), ("depth", room.depth), ("height", room.height)] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(Violation::new(format!("room.{name}"), format!("must be > 0 (got {v})")));
            }
        }
        if self.leds.is_empty() {
            out.push(Violation::new("leds", "at least one LED is required"));
        }
        for (i, led) in self.leds.iter().enumerate() {
            let path = format!("leds[{i}]");
            out.extend(led.violations(&path));
            if !room.contains(&led.position) {
                out.push(Violation::new(format!("{path}.position"), "LED outside the room"));
            }
        }
        out.extend(self.receiver.violations("receiver"));
        if !room.contains(&self.receiver.position) {
            out.push(Violation::new("receiver.position", "receiver outside the room"));
        }
        if !self.clock_offset.seconds().is_finite() {
            out.push(Violation::new("clock_offset", "must be finite"));
        }
        out.extend(self.pulse.violations("pulse"));
        if !self.led_pulses.is_empty() {
            if self.led_pulses.len() != self.leds.len() {
                out.push(Violation::new(
                    "led_pulses",
                    format!("expected {} entries, got {}", self.leds.len(), self.led_pulses.len()),
                ));
            }
            for (i, p) in self.led_pulses.iter().enumerate() {
                out.extend(p.violations(&format!("led_pulses[{i}]")));
            }
        }
        out.extend(self.noise.violations("noise"));
        match self.sample_rate {
            Some(fs) if !(fs > 0.0) || !fs.is_finite() => {
                out.push(Violation::new("sample_rate", format!("must be > 0 (got {fs})")));
            }
            None if !(self.oversample_factor >= 2.0) => {
                out.push(Violation::new(
                    "oversample_factor",
                    format!("must be >= 2 (got {})", self.oversample_factor),
                ));
            }
            _ => {}
        }
        if let Ok(fs) = self.sample_rate() {
            for i in 0..self.leds.len() {
                if let Some(fc) = self.pulse_for(i).center_frequency() {
                    if fs < 2.0 * fc {
                        out.push(Violation::new(
                            "sample_rate",
                            format!("below twice the {fc:e} Hz carrier"),
                        ));
                        break;
                    }
                }
            }
        } else if self.sample_rate.is_none() {
            out.push(Violation::new("sample_rate", "required for tabulated pulses"));
        }
        out.extend(self.search.violations("search"));
        let [d_lo, d_hi] = self.search.delta_range;
        if d_lo < d_hi && !(d_lo..=d_hi).contains(&self.clock_offset.seconds()) {
            out.push(Violation::new("clock_offset", "outside search.delta_range"));
        }
        if !self.leds.is_empty() {
            let valid = self
                .leds
                .iter()
                .filter(|led| {
                    channel_geometry(&self.receiver, led)
                        .map(|g| g.is_los())
                        .unwrap_or(false)
                })
                .count();
            if valid == 0 {
                out.push(Violation::new("leds", "no LED has line of sight to the receiver"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        let mut s = self.clone();
        s.pulse = s.pulse.with_amplitude(amplitude);
        s.led_pulses = s.led_pulses.iter().map(|p| p.with_amplitude(amplitude)).collect();
        s
    }

    /// Changes the carrier of every raised-cosine pulse.
    pub fn with_center_frequency(&self, fc: f64) -> Self {
        let set = |p: &PulseSpec| match p {
            PulseSpec::RaisedCosineSinusoid {
                amplitude, duration, ..
            } => PulseSpec::raised_cosine(*amplitude, *duration, fc),
            other => other.clone(),
        };
        let mut s = self.clone();
        s.pulse = set(&s.pulse);
        s.led_pulses = s.led_pulses.iter().map(set).collect();
        s
    }

    pub fn with_duration(&self, ts: f64) -> Self {
        let set = |p: &PulseSpec| match p {
            PulseSpec::RaisedCosineSinusoid {
                amplitude,
                center_frequency,
                ..
            } => PulseSpec::raised_cosine(*amplitude, ts, *center_frequency),
            other => other.clone(),
        };
        let mut s = self.clone();
        s.pulse = set(&s.pulse);
        s.led_pulses = s.led_pulses.iter().map(set).collect();
        s
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_receiver_position(&self, position: Vector3<f64>) -> Self {
        let mut s = self.clone();
        s.receiver.position = position;
        s
    }

    pub fn with_clock_offset(&self, delta: f64) -> Self {
        Self {
            clock_offset: ClockOffset(delta),
            ..self.clone()
        }
    }

    /// Tilts every LED by `theta` from straight down towards the room's vertical
    /// center line. LEDs directly above the center line stay vertical.
    pub fn with_tilt(&self, theta: f64) -> Self {
        let center = self.room.center();
        let mut s = self.clone();
        for led in &mut s.leds {
            let horizontal = Vector3::new(center.x - led.position.x, center.y - led.position.y, 0.0);
            let norm = horizontal.norm();
            led.normal = if norm > 1e-12 {
                let h = horizontal / norm;
                Vector3::new(theta.sin() * h.x, theta.sin() * h.y, -theta.cos())
            } else {
                -Vector3::z()
            };
        }
        s
    }

    /// Parses a scenario document, applying dotted-path `overrides` before deserialization.
    pub fn from_json_str(
        text: &str,
        overrides: &[(String, String)],
        base_dir: Option<&Path>,
    ) -> Result<LoadedScenario> {
        let needs_value = !overrides.is_empty() || text.contains("\"csv\"");
        let text = if needs_value {
            let mut doc: Value = serde_json::from_str(text).map_err(|e| json_error("<document>", &e))?;
            apply_overrides(&mut doc, overrides)?;
            resolve_pulse_tables(&mut doc, base_dir)?;
            serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?
        } else {
            text.to_string()
        };
        let mut unknown_fields = Vec::new();
        let mut de = serde_json::Deserializer::from_str(&text);
        let mut record = |path: serde_ignored::Path<'_>| unknown_fields.push(path.to_string());
        let ignored = serde_ignored::Deserializer::new(&mut de, &mut record);
        let scenario: Scenario = serde_path_to_error::deserialize(ignored).map_err(|e| {
            let path = e.path().to_string();
            json_error(&path, e.inner())
        })?;
        de.end().map_err(|e| json_error("<document>", &e))?;
        Ok(LoadedScenario {
            scenario,
            unknown_fields,
        })
    }

    /// Reads, overrides, and validates a scenario file. Unknown fields are logged.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<LoadedScenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let loaded = Self::from_json_str(&text, overrides, path.parent())?;
        for field in &loaded.unknown_fields {
            log::warn!("{}: unknown field `{field}` ignored", path.display());
        }
        loaded.scenario.validate()?;
        Ok(loaded)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

fn json_error(path: &str, e: &serde_json::Error) -> Error {
    Error::Parse {
        path: if path.is_empty() || path == "." {
            "<root>".into()
        } else {
            path.to_string()
        },
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Sets `a.b.0.c = value` style keys on a JSON document. The target key must already exist.
/// Values are parsed as JSON when possible and kept as strings otherwise.
pub fn apply_overrides(doc: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (depth, part) in parts.iter().enumerate() {
            let last = depth + 1 == parts.len();
            let next = match node {
                Value::Object(map) => map.get_mut(*part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            };
            let Some(next) = next else {
                return Err(Error::Config(format!(
                    "override `{key}` does not name an existing field"
                )));
            };
            if last {
                *next = value.clone();
                break;
            }
            node = next;
        }
    }
    Ok(())
}

fn resolve_pulse_tables(doc: &mut Value, base_dir: Option<&Path>) -> Result<()> {
    let resolve = |pulse: &mut Value| -> Result<()> {
        let Some(obj) = pulse.as_object_mut() else {
            return Ok(());
        };
        if let Some(Value::String(csv)) = obj.remove("csv") {
            let path = base_dir.map(|d| d.join(&csv)).unwrap_or_else(|| csv.clone().into());
            let table = TabulatedPulse::from_csv(path)?;
            obj.insert("samples".into(), serde_json::to_value(table.samples).expect("numbers"));
        }
        Ok(())
    };
    if let Some(p) = doc.get_mut("pulse") {
        resolve(p)?;
    }
    if let Some(Value::Array(items)) = doc.get_mut("led_pulses") {
        for p in items {
            resolve(p)?;
        }
    }
    Ok(())
}

/// The 15 m × 15 m × 4 m room with four ceiling LEDs pointing down and the
/// receiver on the floor pointing up.
pub fn default_scenario() -> Scenario {
    let led = |x: f64, y: f64| LedTransmitter {
        position: Vector3::new(x, y, 4.0),
        normal: Vector3::new(0.0, 0.0, -1.0),
        lambertian_order: 1.0,
    };
    Scenario {
        room: Room {
            width: 15.0,
            depth: 15.0,
            height: 4.0,
        },
        leds: vec![led(10.0, 10.0), led(5.0, 10.0), led(10.0, 5.0), led(5.0, 5.0)],
        receiver: VlcReceiver {
            position: Vector3::new(6.0, 5.75, 0.0),
            normal: Vector3::new(0.0, 0.0, 1.0),
            responsivity: 0.4,
            detector_area: 1e-4,
        },
        clock_offset: ClockOffset(3e-8),
        pulse: PulseSpec::raised_cosine(1.0, 1e-6, 1e8),
        led_pulses: Vec::new(),
        noise: NoiseSpec {
            psd: 1.336e-22,
            seed: 1,
        },
        sample_rate: None,
        oversample_factor: 16.0,
        mode: Mode::TwoD,
        search: SearchConfig::default(),
    }
}

/// Default scenario with every LED tilted by `theta` towards the room center.
pub fn tilted_scenario(theta: f64) -> Result<Scenario> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::Config(format!("tilt angle must lie in [0, π/2), got {theta}")));
    }
    Ok(default_scenario().with_tilt(theta))
}
