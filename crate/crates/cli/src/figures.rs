//! The preconfigured sweeps and surfaces behind `vlp figure N`.
//!
//! | N | content | axis |
//! |---|---------|------|
//! | 1 | sqrt-CRLB over the floor | x_m, y_m |
//! | 2 | sqrt-CRLB for A ∈ {0.1, 1, 10} W | fc_Hz |
//! | 3 | sqrt-CRLB for A ∈ {0.1, 1, 10} W | Ts_s |
//! | 4 | bound and RMSE, 2-D, f_c = 100 MHz | power_W |
//! | 5 | bound and RMSE, 2-D, f_c = 10 MHz | power_W |
//! | 6 | sqrt-CRLB for f_c ∈ {10, 100} MHz | theta_rad |
//! | 7 | bound and RMSE, 3-D, f_c = 100 MHz | power_W |
//! | 8 | bound and RMSE, 3-D, f_c = 10 MHz | power_W |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use vlp_core::montecarlo::{crlb_surface, sweep};
use vlp_core::{Error, Estimator, Mode, Result, Scenario, SweepAxis};

use crate::table::Table;

pub const FIGURES: std::ops::RangeInclusive<u8> = 1..=8;

/// Default number of Monte Carlo trials per sweep point.
pub const DEFAULT_TRIALS: usize = 200;

/// Default floor grid spacing of the surface figure, m.
pub const DEFAULT_GRID_SPACING: f64 = 0.25;

/// Everything a figure run depends on. Stored in the sidecar metadata so the
/// run can be repeated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureConfig {
    pub figure: u8,
    /// Base scenario before the figure's own settings are applied.
    pub scenario: Scenario,
    pub base_seed: u64,
    pub trials: usize,
    pub grid_spacing: f64,
}

impl FigureConfig {
    pub fn new(figure: u8, scenario: Scenario) -> Result<Self> {
        check_id(figure)?;
        Ok(Self {
            figure,
            base_seed: scenario.noise.seed,
            scenario,
            trials: DEFAULT_TRIALS,
            grid_spacing: DEFAULT_GRID_SPACING,
        })
    }
}

fn check_id(figure: u8) -> Result<()> {
    if FIGURES.contains(&figure) {
        Ok(())
    } else {
        Err(Error::Config(format!("figure must be 1..=8, got {figure}")))
    }
}

/// One curve of a figure: a label and the settings that differ from the base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub amplitude: Option<f64>,
    pub center_frequency: Option<f64>,
    pub mode: Option<Mode>,
}

impl Series {
    fn plain(label: &str) -> Self {
        Self {
            label: label.into(),
            amplitude: None,
            center_frequency: None,
            mode: None,
        }
    }

    fn apply(&self, s: &Scenario) -> Scenario {
        let mut s = s.clone();
        if let Some(a) = self.amplitude {
            s = s.with_amplitude(a);
        }
        if let Some(fc) = self.center_frequency {
            s = s.with_center_frequency(fc);
        }
        if let Some(m) = self.mode {
            s = s.with_mode(m);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FigurePlan {
    Surface,
    /// Bound-only sweep, one column per series.
    BoundSweep {
        axis: SweepAxis,
        values: Vec<f64>,
        series: Vec<Series>,
    },
    /// Bound plus both estimators' RMSE along one axis.
    EstimatorSweep {
        axis: SweepAxis,
        values: Vec<f64>,
        setting: Series,
    },
}

fn log_spaced(lo_exp: i32, hi_exp: i32, per_decade: i32) -> Vec<f64> {
    (0..=(hi_exp - lo_exp) * per_decade)
        .map(|k| {
            let (whole, frac) = (k.div_euclid(per_decade), k.rem_euclid(per_decade));
            10f64.powi(lo_exp + whole) * 10f64.powf(frac as f64 / per_decade as f64)
        })
        .collect()
}

fn amplitudes() -> Vec<Series> {
    [0.1, 1.0, 10.0]
        .iter()
        .map(|&a| Series {
            amplitude: Some(a),
            ..Series::plain(&format!("sqrt_crlb_m_A{a}W"))
        })
        .collect()
}

fn estimator_plan(fc: f64, mode: Mode) -> FigurePlan {
    FigurePlan::EstimatorSweep {
        axis: SweepAxis::Power,
        values: log_spaced(-2, 1, 4).split_off(2),
        setting: Series {
            center_frequency: Some(fc),
            mode: Some(mode),
            ..Series::plain("sqrt_crlb_m")
        },
    }
}

pub fn plan(figure: u8) -> Result<FigurePlan> {
    check_id(figure)?;
    Ok(match figure {
        1 => FigurePlan::Surface,
        2 => FigurePlan::BoundSweep {
            axis: SweepAxis::CenterFrequency,
            values: log_spaced(5, 9, 4),
            series: amplitudes(),
        },
        3 => FigurePlan::BoundSweep {
            axis: SweepAxis::PulseDuration,
            values: [1, 2, 3, 5, 7, 10, 20, 30, 50, 70, 100]
                .iter()
                .map(|&k| k as f64 * 1e-7)
                .collect(),
            series: amplitudes(),
        },
        4 => estimator_plan(1e8, Mode::TwoD),
        5 => estimator_plan(1e7, Mode::TwoD),
        6 => FigurePlan::BoundSweep {
            axis: SweepAxis::TiltAngle,
            values: (0..=30).map(|j| (2.0 * j as f64).to_radians()).collect(),
            series: [1e7, 1e8]
                .iter()
                .map(|&fc| Series {
                    center_frequency: Some(fc),
                    ..Series::plain(&format!("sqrt_crlb_m_fc{fc:e}Hz"))
                })
                .collect(),
        },
        7 => estimator_plan(1e8, Mode::ThreeD),
        _ => estimator_plan(1e7, Mode::ThreeD),
    })
}

/// Sidecar metadata written next to `figN.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureMeta {
    pub config: FigureConfig,
    pub plan: FigurePlan,
    pub columns: Vec<String>,
    pub trial_count: usize,
    /// Noise for LED i in trial t is drawn from `trial_seed(base_seed, t, i)`;
    /// every sweep point reuses the same base seed.
    pub base_seed: u64,
    /// Failed trials per point, by estimator.
    pub failures: BTreeMap<String, Vec<usize>>,
    /// Points with more than 10% failed trials, by estimator.
    pub unreliable: BTreeMap<String, Vec<bool>>,
    pub runtime_s: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOutput {
    pub table: Table,
    pub meta: FigureMeta,
}

pub fn run_figure(config: &FigureConfig) -> Result<FigureOutput> {
    let start = Instant::now();
    let plan = plan(config.figure)?;
    let mut failures = BTreeMap::new();
    let mut unreliable = BTreeMap::new();
    let base = &config.scenario;
    let table = match &plan {
        FigurePlan::Surface => {
            let surf = crlb_surface(base, config.grid_spacing)?;
            let mut t = Table::new(vec!["x_m".into(), "y_m".into(), "sqrt_crlb_m".into()]);
            for (iy, &y) in surf.ys.iter().enumerate() {
                for (ix, &x) in surf.xs.iter().enumerate() {
                    t.push(vec![Some(x), Some(y), surf.at(ix, iy)]);
                }
            }
            t
        }
        FigurePlan::BoundSweep { axis, values, series } => {
            let mut columns = vec![axis.column().to_string()];
            let mut curves = Vec::new();
            for s in series {
                columns.push(s.label.clone());
                curves.push(sweep(&s.apply(base), *axis, values, &[], 1, config.base_seed)?.sqrt_crlb);
            }
            let mut t = Table::new(columns);
            for (i, &v) in values.iter().enumerate() {
                let mut row = vec![Some(v)];
                row.extend(curves.iter().map(|c| c[i]));
                t.push(row);
            }
            t
        }
        FigurePlan::EstimatorSweep { axis, values, setting } => {
            let estimators = [Estimator::Direct, Estimator::TwoStep];
            let r = sweep(
                &setting.apply(base),
                *axis,
                values,
                &estimators,
                config.trials,
                config.base_seed,
            )?;
            let mut columns = vec![axis.column().to_string(), setting.label.clone()];
            columns.extend(estimators.iter().map(|e| format!("rmse_{}_m", e.name())));
            let mut t = Table::new(columns);
            for (i, &v) in values.iter().enumerate() {
                let mut row = vec![Some(v), r.sqrt_crlb[i]];
                row.extend(r.curves.iter().map(|c| c.rmse[i]));
                t.push(row);
            }
            for c in &r.curves {
                failures.insert(c.estimator.name().to_string(), c.failures.clone());
                unreliable.insert(c.estimator.name().to_string(), c.unreliable.clone());
            }
            t
        }
    };
    let meta = FigureMeta {
        columns: table.columns.clone(),
        trial_count: match plan {
            FigurePlan::EstimatorSweep { .. } => config.trials,
            _ => 0,
        },
        base_seed: config.base_seed,
        config: config.clone(),
        plan,
        failures,
        unreliable,
        runtime_s: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(FigureOutput { table, meta })
}

pub fn csv_path(dir: &Path, figure: u8) -> PathBuf {
    dir.join(format!("fig{figure}.csv"))
}

pub fn meta_path(dir: &Path, figure: u8) -> PathBuf {
    dir.join(format!("fig{figure}.meta.json"))
}

/// Runs a figure and writes `figN.csv` and `figN.meta.json` into `dir`.
pub fn write_figure(config: &FigureConfig, dir: &Path) -> Result<FigureOutput> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let out = run_figure(config)?;
    out.table.write(csv_path(dir, config.figure))?;
    let meta = serde_json::to_string_pretty(&out.meta).map_err(|e| Error::Io(e.to_string()))?;
    let path = meta_path(dir, config.figure);
    std::fs::write(&path, meta + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(out)
}

/// The configuration recorded in a `figN.meta.json`.
pub fn read_meta(path: impl AsRef<Path>) -> Result<FigureMeta> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_cover_every_figure() {
        for f in FIGURES {
            plan(f).unwrap();
        }
        assert!(plan(0).is_err());
        assert!(plan(9).is_err());
    }

    #[test]
    fn axis_values() {
        let v = log_spaced(5, 9, 4);
        assert_eq!(v.len(), 17);
        assert_eq!(v[0], 1e5);
        assert_eq!(v[4], 1e6);
        assert_eq!(v[16], 1e9);
        let FigurePlan::EstimatorSweep { values, .. } = plan(4).unwrap() else {
            panic!()
        };
        assert_eq!(values.len(), 11);
        assert!((values[0] - 10f64.powf(-1.5)).abs() < 1e-15);
        assert_eq!(values[10], 10.0);
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }
}
