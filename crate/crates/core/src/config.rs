//! Run configuration: a single JSON document describing the medium, kernel,
//! horizon, discretization and optional target/control data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::medium::{CoefficientFunction, MemoryKernel, StringMedium};

/// Fully validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub medium: StringMedium,
    pub kernel: MemoryKernel,
    pub horizon: f64,
    pub n_modes: usize,
    pub dt: f64,
    pub svd_cutoff: f64,
    pub target: TargetSpec,
    pub control: Option<ControlSpec>,
    pub scan_samples: usize,
}

impl RunConfig {
    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.dt)
    }
}

/// Coefficient function as written in the config: a constant or an explicit
/// piecewise-cubic table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant {
        r#const: f64,
    },
    Piecewise {
        mesh: Vec<f64>,
        segments: Vec<[f64; 4]>,
    },
}

impl CoefficientSpec {
    pub fn build(&self, length: f64, field: &str) -> Result<CoefficientFunction> {
        match self {
            CoefficientSpec::Constant { r#const } => {
                Ok(CoefficientFunction::constant(*r#const, length))
            }
            CoefficientSpec::Piecewise { mesh, segments } => {
                let f = CoefficientFunction::new(mesh.clone(), segments.clone())
                    .map_err(|e| rename_field(e, field))?;
                f.validate(field)?;
                Ok(f)
            }
        }
    }

    fn from_function(f: &CoefficientFunction) -> Self {
        CoefficientSpec::Piecewise {
            mesh: f.mesh().to_vec(),
            segments: f.segments().to_vec(),
        }
    }
}

fn rename_field(e: Error, field: &str) -> Error {
    match e {
        Error::Validation { field: f, message } => {
            let suffix = f.rsplit('.').next().unwrap_or("").to_string();
            Error::Validation {
                field: format!("{field}.{suffix}"),
                message,
            }
        }
        other => other,
    }
}

/// Target state for control synthesis / dual data for observation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TargetSpec {
    Zero,
    Coefficients {
        v0: Vec<f64>,
        v1: Vec<f64>,
    },
    Spatial {
        v0: CoefficientSpec,
        v1: CoefficientSpec,
    },
}

/// Reference control for forward simulation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControlSpec {
    Zero,
    Sine { amplitude: f64, frequency: f64 },
    Samples { values: Vec<f64> },
}

impl ControlSpec {
    pub fn samples_on(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            ControlSpec::Zero => Ok(vec![0.0; grid.len()]),
            ControlSpec::Sine {
                amplitude,
                frequency,
            } => Ok(grid
                .times()
                .map(|t| amplitude * (frequency * t).sin())
                .collect()),
            ControlSpec::Samples { values } => {
                if values.len() != grid.len() {
                    return Err(Error::validation(
                        "control.values",
                        format!(
                            "expected {} samples on the run grid, got {}",
                            grid.len(),
                            values.len()
                        ),
                    ));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MediumSpec {
    length: f64,
    rho: CoefficientSpec,
    alpha: CoefficientSpec,
    beta: CoefficientSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    medium: MediumSpec,
    kernel: MemoryKernel,
    horizon: f64,
    n_modes: usize,
    dt: f64,
    #[serde(default = "default_svd_cutoff")]
    svd_cutoff: f64,
    #[serde(default = "default_target")]
    target: TargetSpec,
    #[serde(default)]
    control: Option<ControlSpec>,
    #[serde(default = "default_scan_samples")]
    scan_samples: usize,
}

fn default_svd_cutoff() -> f64 {
    1e-10
}

fn default_target() -> TargetSpec {
    TargetSpec::Zero
}

fn default_scan_samples() -> usize {
    100
}

/// Parse and validate a configuration document.
pub fn load_config(text: &str) -> Result<RunConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    config_from_value(value)
}

/// [`load_config`] from a file.
pub fn load_config_path(path: impl AsRef<std::path::Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
    load_config(&text)
}

/// Build a validated [`RunConfig`] from an already-parsed JSON value
/// (the CLI applies `--set` overrides at the value level first).
pub fn config_from_value(value: serde_json::Value) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;

    let length = raw.medium.length;
    let medium = StringMedium::new(
        length,
        raw.medium.rho.build(length, "medium.rho")?,
        raw.medium.alpha.build(length, "medium.alpha")?,
        raw.medium.beta.build(length, "medium.beta")?,
    )?;

    if !(raw.horizon > 0.0) || !raw.horizon.is_finite() {
        return Err(Error::validation(
            "horizon",
            format!("must be positive, got {}", raw.horizon),
        ));
    }
    raw.kernel.validate(raw.horizon)?;
    if raw.n_modes < 1 {
        return Err(Error::validation("n_modes", "must be at least 1"));
    }
    if !(raw.dt > 0.0) || raw.dt > raw.horizon / 100.0 {
        return Err(Error::validation(
            "dt",
            format!(
                "must satisfy 0 < dt <= horizon/100 = {}, got {}",
                raw.horizon / 100.0,
                raw.dt
            ),
        ));
    }
    TimeGrid::new(raw.horizon, raw.dt)?;
    if !(raw.svd_cutoff > 0.0 && raw.svd_cutoff < 1.0) {
        return Err(Error::validation(
            "svd_cutoff",
            format!("must lie in (0, 1), got {}", raw.svd_cutoff),
        ));
    }
    if let TargetSpec::Coefficients { v0, v1 } = &raw.target {
        if v0.len() != v1.len() {
            return Err(Error::validation(
                "target",
                format!(
                    "v0 and v1 must have equal length, got {} and {}",
                    v0.len(),
                    v1.len()
                ),
            ));
        }
    }

    Ok(RunConfig {
        medium,
        kernel: raw.kernel,
        horizon: raw.horizon,
        n_modes: raw.n_modes,
        dt: raw.dt,
        svd_cutoff: raw.svd_cutoff,
        target: raw.target,
        control: raw.control,
        scan_samples: raw.scan_samples,
    })
}

/// Serialize a configuration back to its document form; `load_config` of the
/// output reproduces the input configuration.
pub fn serialize_config(config: &RunConfig) -> String {
    let raw = RawConfig {
        medium: MediumSpec {
            length: config.medium.length,
            rho: CoefficientSpec::from_function(&config.medium.rho),
            alpha: CoefficientSpec::from_function(&config.medium.alpha),
            beta: CoefficientSpec::from_function(&config.medium.beta),
        },
        kernel: config.kernel.clone(),
        horizon: config.horizon,
        n_modes: config.n_modes,
        dt: config.dt,
        svd_cutoff: config.svd_cutoff,
        target: config.target.clone(),
        control: config.control.clone(),
        scan_samples: config.scan_samples,
    };
    serde_json::to_string_pretty(&serde_json::to_value(raw).expect("config is serializable"))
        .expect("config is serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) const MINIMAL: &str = r#"{
        "medium": {
            "length": 1.0,
            "rho": {"const": 1.0},
            "alpha": {"const": 1.0},
            "beta": {"const": 0.0}
        },
        "kernel": {"type": "exponential", "a": 0.4, "eta": 1.0},
        "horizon": 2.0,
        "n_modes": 16,
        "dt": 0.001
    }"#;

    #[test]
    fn minimal_document_round_trips() {
        let cfg = load_config(MINIMAL).unwrap();
        assert_eq!(cfg.medium.length, 1.0);
        assert_eq!(cfg.n_modes, 16);
        assert_eq!(cfg.svd_cutoff, 1e-10);
        assert_relative_eq!(cfg.kernel.eval(0.0).unwrap().0, 0.4);
        assert_relative_eq!(cfg.kernel.nu(), 0.2);
        let text = serialize_config(&cfg);
        let cfg2 = load_config(&text).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn bad_mesh_names_offending_field() {
        let doc = MINIMAL.replace(
            r#""rho": {"const": 1.0}"#,
            r#""rho": {"mesh": [0.5, 1.0], "segments": [[1.0, 0.0, 0.0, 0.0]]}"#,
        );
        let err = load_config(&doc).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("rho.mesh"),
            "error should name rho.mesh: {msg}"
        );
    }

    #[test]
    fn negative_density_rejected() {
        let doc = MINIMAL.replace(r#""rho": {"const": 1.0}"#, r#""rho": {"const": -1.0}"#);
        let err = load_config(&doc).unwrap_err();
        assert!(err.to_string().contains("rho"));
    }

    #[test]
    fn dt_invariant_enforced() {
        let doc = MINIMAL.replace(r#""dt": 0.001"#, r#""dt": 0.05"#);
        assert!(load_config(&doc).is_err());
    }

    #[test]
    fn piecewise_and_sampled_round_trip() {
        let doc = r#"{
            "medium": {
                "length": 1.0,
                "rho": {"mesh": [0.0, 0.5, 1.0],
                        "segments": [[1.0, 2.0, 1.0, 0.0], [2.25, 3.0, 1.0, 0.0]]},
                "alpha": {"const": 1.0},
                "beta": {"const": 0.0}
            },
            "kernel": {"type": "sampled",
                       "grid": [0.0, 0.5, 1.0, 1.5, 2.0],
                       "values": [0.4, 0.3, 0.2, 0.15, 0.1]},
            "horizon": 2.0,
            "n_modes": 8,
            "dt": 0.001,
            "target": {"type": "coefficients", "v0": [1.0, 0.0], "v1": [0.0, 0.0]},
            "control": {"type": "sine", "amplitude": 1.0, "frequency": 3.0}
        }"#;
        let cfg = load_config(doc).unwrap();
        let text = serialize_config(&cfg);
        assert_eq!(cfg, load_config(&text).unwrap());
    }
}
