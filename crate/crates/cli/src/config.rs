//! Experiment configuration. Every section has defaults; unknown keys are rejected.

use std::path::Path;

use chaotrans::dynamics::{AtomState, EnergyH, LatticeParams, DEFAULT_OMEGA_R};
use chaotrans::fractal::{ExitProtocol, RefineConfig, DEFAULT_SCAN_RANGE};
use chaotrans::integrator::IntegratorConfig;
use chaotrans::lyapunov::{BaseState, LyapunovConfig};
use chaotrans::transport::{QMode, Segmentation};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Position, momentum and Bloch components at `τ = 0`. The Bloch vector is
/// rescaled onto the unit sphere so that rounded values are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Initial {
    pub x0: f64,
    pub p0: f64,
    pub u0: f64,
    pub v0: f64,
    pub z0: f64,
}

impl Default for Initial {
    fn default() -> Self {
        Initial { x0: 0.0, p0: 535.0, u0: 0.7071, v0: 0.0, z0: 0.7071 }
    }
}

impl Initial {
    pub fn state(&self) -> chaotrans::Result<AtomState> {
        AtomState::normalized(self.x0, self.p0, self.u0, self.v0, self.z0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub delta: f64,
    pub omega_r: f64,
    pub initial: Initial,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { delta: -0.001, omega_r: DEFAULT_OMEGA_R, initial: Initial::default() }
    }
}

impl Physics {
    pub fn params(&self) -> chaotrans::Result<LatticeParams> {
        LatticeParams::new(self.omega_r, self.delta)
    }

    /// Energy of the (normalized) initial state.
    pub fn energy(&self) -> chaotrans::Result<EnergyH> {
        Ok(chaotrans::dynamics::total_energy(&self.initial.state()?, &self.params()?))
    }

    /// Energy under the alternative convention `u₀ = v₀ = 0`, `z₀ = −1`.
    pub fn energy_ground_convention(&self) -> f64 {
        let i = &self.initial;
        0.5 * self.omega_r * i.p0 * i.p0 + 0.5 * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulate {
    pub physics: Physics,
    pub tau_max: f64,
    pub integrator: IntegratorConfig,
    /// Integrate the reduced equations with the stochastic map instead of the full system.
    pub reduced: bool,
}

impl Default for Simulate {
    fn default() -> Self {
        Simulate {
            physics: Physics {
                delta: -0.05,
                initial: Initial { p0: 300.0, u0: 0.0, v0: 0.0, z0: -1.0, ..Initial::default() },
                ..Physics::default()
            },
            tau_max: 1e5,
            integrator: IntegratorConfig { sample_stride: 100, ..IntegratorConfig::default() },
            reduced: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovMap {
    pub delta_range: (f64, f64),
    pub p0_range: (f64, f64),
    /// Number of Δ and p₀ values.
    pub resolution: (usize, usize),
    pub omega_r: f64,
    pub base: BaseState,
    pub lyapunov: LyapunovConfig,
}

impl Default for LyapunovMap {
    fn default() -> Self {
        LyapunovMap {
            delta_range: (-0.1, 0.1),
            p0_range: (0.0, 1000.0),
            resolution: (21, 21),
            omega_r: DEFAULT_OMEGA_R,
            base: BaseState { x0: 0.0, u0: 0.7071, v0: 0.0, z0: 0.7071 },
            lyapunov: LyapunovConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fits {
    /// Inclusive `[l_min, l_max]` ranges fitted with both tail models.
    pub ranges: Vec<(u64, u64)>,
}

impl Default for Fits {
    fn default() -> Self {
        Fits { ranges: vec![(3, 40), (3000, u64::MAX / 2)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Pdf {
    pub physics: Physics,
    pub tau_max: f64,
    /// Trajectories started at `x0 + i·x0_spacing`.
    pub trajectories: usize,
    pub x0_spacing: f64,
    pub segmentation: Segmentation,
    pub integrator: IntegratorConfig,
    pub fits: Fits,
}

impl Default for Pdf {
    fn default() -> Self {
        Pdf {
            physics: Physics::default(),
            tau_max: 1e7,
            trajectories: 8,
            x0_spacing: 1e-3,
            segmentation: Segmentation::RegionBased,
            integrator: IntegratorConfig { abs_tol: 1e-10, rel_tol: 1e-10, ..IntegratorConfig::default() },
            fits: Fits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapStatistic {
    /// Flight and trapping events from the chosen segmentation.
    Events,
    /// Runs of equal continue/turn decisions.
    DecisionRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapPdf {
    pub physics: Physics,
    pub crossings_per_task: u64,
    pub tasks: usize,
    pub segmentation: Segmentation,
    pub statistic: MapStatistic,
    pub fits: Fits,
}

impl Default for MapPdf {
    fn default() -> Self {
        MapPdf {
            physics: Physics::default(),
            crossings_per_task: 10_000_000,
            tasks: 16,
            segmentation: Segmentation::RegionBased,
            statistic: MapStatistic::Events,
            fits: Fits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    SmallJump,
    PowerHead,
    LargeJump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticPdf {
    pub physics: Physics,
    pub l_max: u64,
    pub q_mode: QMode,
    pub curves: Vec<Curve>,
}

impl Default for AnalyticPdf {
    fn default() -> Self {
        AnalyticPdf {
            physics: Physics::default(),
            l_max: 100_000,
            q_mode: QMode::PerKind,
            curves: vec![Curve::SmallJump, Curve::PowerHead],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FractalScan {
    pub delta_range: (f64, f64),
    pub protocol: ExitProtocol,
    pub refine: RefineConfig,
}

impl Default for FractalScan {
    fn default() -> Self {
        FractalScan {
            delta_range: DEFAULT_SCAN_RANGE,
            protocol: ExitProtocol::default(),
            refine: RefineConfig::default(),
        }
    }
}

/// All sections of a configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<Simulate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_map: Option<LyapunovMap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pdf: Option<Pdf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_pdf: Option<MapPdf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_pdf: Option<AnalyticPdf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fractal_scan: Option<FractalScan>,
}

/// What a configuration file may hold: plain sections, or a manifest to replay.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub seed: Option<u64>,
}

fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let key_path = if prefix.is_empty() { path } else { format!("{prefix}.{path}") };
        CliError::Config { key_path, message: e.into_inner().to_string() }
    })
}

/// Overlays `user` onto `base`; objects merge key by key, anything else replaces.
fn overlay(base: &mut serde_json::Value, user: serde_json::Value) {
    match (base, user) {
        (serde_json::Value::Object(b), serde_json::Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, u) => *b = u,
    }
}

fn section_defaults(name: &str) -> Option<serde_json::Value> {
    let v = match name {
        "simulate" => serde_json::to_value(Simulate::default()),
        "lyapunov_map" => serde_json::to_value(LyapunovMap::default()),
        "pdf" => serde_json::to_value(Pdf::default()),
        "map_pdf" => serde_json::to_value(MapPdf::default()),
        "analytic_pdf" => serde_json::to_value(AnalyticPdf::default()),
        "fractal_scan" => serde_json::to_value(FractalScan::default()),
        _ => return None,
    };
    v.ok()
}

/// Missing keys anywhere inside a section take that section's defaults.
fn with_defaults(value: serde_json::Value) -> serde_json::Value {
    let serde_json::Value::Object(sections) = value else { return value };
    let merged = sections
        .into_iter()
        .map(|(name, user)| match (section_defaults(&name), user) {
            (Some(mut base), user @ serde_json::Value::Object(_)) => {
                overlay(&mut base, user);
                (name, base)
            }
            (_, user) => (name, user),
        })
        .collect();
    serde_json::Value::Object(merged)
}

pub fn parse_value(value: serde_json::Value) -> Result<ExperimentConfig, CliError> {
    parse(with_defaults(value), "")
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config { key_path: String::new(), message: e.to_string() })?;
    let is_manifest = value.get("manifest_version").is_some();
    if is_manifest {
        let seed = value.get("seed").and_then(|s| s.as_u64());
        let cfg = value.get("config").cloned().unwrap_or(serde_json::Value::Null);
        Ok(Loaded { config: parse(with_defaults(cfg), "config")?, seed })
    } else {
        Ok(Loaded { config: parse_value(value)?, seed: None })
    }
}
