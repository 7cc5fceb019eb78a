//! Run configuration: JSON or TOML, real inputs as decimal strings.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evolve::{Convention, EvolveOptions};
use crate::moments::MomentData;
use crate::orthopoly::scaling_n;
use crate::quadrature::GridOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.into() }
    }

    /// Machine-readable form.
    pub fn report(&self) -> serde_json::Value {
        let (kind, field) = match self {
            ConfigError::Io { .. } => ("io", None),
            ConfigError::Parse(_) => ("parse", None),
            ConfigError::Invalid { field, .. } => ("invalid", Some(field.clone())),
        };
        serde_json::json!({ "error": kind, "field": field, "message": self.to_string() })
    }
}

/// Parse a decimal real.
pub fn parse_real(field: &str, s: &str) -> Result<f64, ConfigError> {
    let t = s.trim();
    let x: f64 = t.parse().map_err(|_| ConfigError::invalid(field, format!("`{s}` is not a decimal number")))?;
    if !x.is_finite() {
        return Err(ConfigError::invalid(field, format!("`{s}` is not finite")));
    }
    Ok(x)
}

/// Parse `x`, `yi`, `x+yi` or `x-yi`.
pub fn parse_complex(field: &str, s: &str) -> Result<Complex64, ConfigError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || ConfigError::invalid(field, format!("`{s}` is not a complex number of the form x+yi"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return Ok(Complex64::new(parse_real(field, &t)?, 0.0));
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            split = Some(k);
            break;
        }
    }
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        x => x,
    };
    let re = parse_real(field, re).map_err(|_| bad())?;
    let im = parse_real(field, im).map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMoments {
    t0: String,
    #[serde(default)]
    beta: Option<String>,
    #[serde(default)]
    a: Option<String>,
    #[serde(default)]
    t: Option<Vec<String>>,
    #[serde(default)]
    truncated: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    radial_order: Option<usize>,
    panel_width: Option<String>,
    angular_margin: Option<usize>,
    tail_log: Option<String>,
    refine: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    raster: Option<usize>,
    profile_samples: Option<usize>,
    svg: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKl {
    samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectory {
    cells: Option<usize>,
    svg: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvolve {
    t0_start: Option<String>,
    t0_end: Option<String>,
    steps: Option<usize>,
    boundary_samples: Option<usize>,
    bisection_tol: Option<String>,
    svg: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    moments: RawMoments,
    #[serde(default)]
    degrees: Option<Vec<usize>>,
    /// Fixed N; absent means N = n / t0.
    #[serde(default, rename = "N")]
    n_big: Option<String>,
    #[serde(default)]
    convention: Option<Convention>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    density: RawDensity,
    #[serde(default)]
    kl: RawKl,
    #[serde(default)]
    trajectory: RawTrajectory,
    #[serde(default)]
    evolve: RawEvolve,
}

/// How N is chosen for degree n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NPolicy {
    Scaling,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySettings {
    pub raster: usize,
    pub profile_samples: usize,
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySettings {
    pub cells: usize,
    pub svg: bool,
}

/// Validated configuration; its canonical JSON is what the config hash covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub moments: MomentData,
    pub degrees: Vec<usize>,
    pub n_policy: NPolicy,
    /// Sign convention for `solve-map` and `evolve`.
    pub convention: Convention,
    pub seed: u64,
    pub extended_precision: bool,
    pub grid: GridOptions,
    pub density: DensitySettings,
    pub kl_samples: usize,
    pub trajectory: TrajectorySettings,
    pub evolve: EvolveOptions,
    pub evolve_svg: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::parse(&text, is_toml)
    }

    pub fn parse(text: &str, is_toml: bool) -> Result<Self, ConfigError> {
        let raw: RawConfig = if is_toml {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let m = &raw.moments;
        let t0 = parse_real("moments.t0", &m.t0)?;
        let moments = match (&m.beta, &m.a, &m.t) {
            (Some(b), Some(a), None) => {
                let beta = parse_real("moments.beta", b)?;
                let a = parse_complex("moments.a", a)?;
                MomentData::geometric(t0, beta, a).map_err(|e| ConfigError::invalid("moments", e.to_string()))?
            }
            (None, None, Some(t)) => {
                let t = t
                    .iter()
                    .enumerate()
                    .map(|(k, s)| parse_complex(&format!("moments.t[{k}]"), s))
                    .collect::<Result<Vec<_>, _>>()?;
                MomentData::explicit(t0, t, m.truncated.unwrap_or(false)).map_err(|e| ConfigError::invalid("moments", e.to_string()))?
            }
            _ => return Err(ConfigError::invalid("moments", "give either beta and a, or an explicit list t")),
        };
        let degrees = raw.degrees.unwrap_or_else(|| vec![5, 10, 20, 40]);
        if degrees.is_empty() || degrees.contains(&0) {
            return Err(ConfigError::invalid("degrees", "need a nonempty list of positive degrees"));
        }
        let n_policy = match &raw.n_big {
            None => NPolicy::Scaling,
            Some(s) => {
                let n = parse_real("N", s)?;
                if n <= 0.0 {
                    return Err(ConfigError::invalid("N", "must be positive"));
                }
                NPolicy::Fixed(n)
            }
        };
        let d = GridOptions::default();
        let g = &raw.grid;
        let grid = GridOptions {
            radial_order: g.radial_order.unwrap_or(d.radial_order),
            panel_width: g.panel_width.as_deref().map(|s| parse_real("grid.panel_width", s)).transpose()?.unwrap_or(d.panel_width),
            angular_margin: g.angular_margin.unwrap_or(d.angular_margin),
            tail_log: g.tail_log.as_deref().map(|s| parse_real("grid.tail_log", s)).transpose()?.unwrap_or(d.tail_log),
            refine: g.refine.unwrap_or(d.refine),
            extended: false,
        };
        if grid.radial_order < 2 || !(grid.panel_width > 0.0) || !(grid.tail_log > 0.0) {
            return Err(ConfigError::invalid("grid", "radial_order ≥ 2, positive panel_width and tail_log required"));
        }
        let density = DensitySettings {
            raster: raw.density.raster.unwrap_or(128),
            profile_samples: raw.density.profile_samples.unwrap_or(512),
            svg: raw.density.svg.unwrap_or(false),
        };
        if density.raster < 8 || density.profile_samples < 16 {
            return Err(ConfigError::invalid("density", "raster ≥ 8 and profile_samples ≥ 16 required"));
        }
        let kl_samples = raw.kl.samples.unwrap_or(512);
        if kl_samples < 128 {
            return Err(ConfigError::invalid("kl.samples", "must be at least 128"));
        }
        let trajectory = TrajectorySettings { cells: raw.trajectory.cells.unwrap_or(256), svg: raw.trajectory.svg.unwrap_or(false) };
        if trajectory.cells < 16 {
            return Err(ConfigError::invalid("trajectory.cells", "must be at least 16"));
        }
        let convention = raw.convention.unwrap_or_default();
        let de = EvolveOptions::default();
        let e = &raw.evolve;
        let evolve = EvolveOptions {
            t0_start: e.t0_start.as_deref().map(|s| parse_real("evolve.t0_start", s)).transpose()?.unwrap_or(de.t0_start),
            t0_end: e.t0_end.as_deref().map(|s| parse_real("evolve.t0_end", s)).transpose()?.unwrap_or(t0),
            steps: e.steps.unwrap_or(de.steps),
            boundary_samples: e.boundary_samples.unwrap_or(de.boundary_samples),
            bisection_tol: e.bisection_tol.as_deref().map(|s| parse_real("evolve.bisection_tol", s)).transpose()?.unwrap_or(de.bisection_tol),
            convention,
        };
        if evolve.steps < 2 || !(evolve.t0_start > 0.0 && evolve.t0_end > evolve.t0_start) {
            return Err(ConfigError::invalid("evolve", "need steps ≥ 2 and 0 < t0_start < t0_end"));
        }
        if evolve.boundary_samples < 16 || !(evolve.bisection_tol > 0.0) {
            return Err(ConfigError::invalid("evolve", "need boundary_samples ≥ 16 and a positive bisection_tol"));
        }
        Ok(RunConfig {
            moments,
            degrees,
            n_policy,
            convention,
            seed: raw.seed.unwrap_or(0),
            extended_precision: false,
            grid,
            density,
            kl_samples,
            trajectory,
            evolve,
            evolve_svg: e.svg.unwrap_or(false),
        })
    }

    /// N for degree n.
    pub fn n_big(&self, n: usize) -> f64 {
        match self.n_policy {
            NPolicy::Scaling => scaling_n(n, self.moments.t0),
            NPolicy::Fixed(x) => x,
        }
    }

    /// SHA-256 of the canonical JSON form, command-line overrides included.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        let c = |s| parse_complex("x", s).unwrap();
        assert_eq!(c("3"), Complex64::new(3.0, 0.0));
        assert_eq!(c("2i"), Complex64::new(0.0, 2.0));
        assert_eq!(c("-i"), Complex64::new(0.0, -1.0));
        assert_eq!(c("1.5-0.25i"), Complex64::new(1.5, -0.25));
        assert_eq!(c("1e-3+2E+1i"), Complex64::new(1e-3, 20.0));
        assert_eq!(c(" 2 + 3i "), Complex64::new(2.0, 3.0));
        assert!(parse_complex("x", "abc").is_err());
        assert!(parse_complex("x", "1+2j").is_err());
    }

    #[test]
    fn json_and_toml_agree() {
        let json = r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}, "degrees": [5, 10], "seed": 7}"#;
        let toml = "degrees = [5, 10]\nseed = 7\n[moments]\nt0 = \"1\"\nbeta = \"0.5\"\na = \"3\"\n";
        let a = RunConfig::parse(json, false).unwrap();
        let b = RunConfig::parse(toml, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.n_big(10), 10.0);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            r#"{"moments": {"t0": "-1", "beta": "0.5", "a": "3"}}"#,
            r#"{"moments": {"t0": "1", "beta": "0.5"}}"#,
            r#"{"moments": {"t0": "1", "beta": "x", "a": "3"}}"#,
            r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}, "degrees": []}"#,
            r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}, "colour": "red"}"#,
            r#"{"moments": {"t0": 1, "beta": "0.5", "a": "3"}}"#,
        ];
        for b in bad {
            let e = RunConfig::parse(b, false).unwrap_err();
            assert!(e.report()["message"].is_string());
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse(r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}}"#, false).unwrap();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
