use std::path::Path;

use kfm_core::basis::{BasisFamily, BasisSpec};
use kfm_core::domain::{DomainRecord, DomainSpec, Point};
use kfm_core::scaling::Approach;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: &str = "kfm-run/1";

/// Complex number as `[re, im]`.
pub type Pair = [f64; 2];

fn pairs(v: &[Pair]) -> Point {
    v.iter().map(|p| C64::new(p[0], p[1])).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default = "default_domain")]
    pub domain: DomainRecord,
    /// Omitted: the default basis for the domain.
    #[serde(default)]
    pub basis: Option<BasisConfig>,
    #[serde(default = "default_points")]
    pub points: Vec<Vec<Pair>>,
    /// Direction for lengths and curvatures; omitted means `e_1`.
    #[serde(default)]
    pub vector: Option<Vec<Pair>>,
    #[serde(default)]
    pub asymptotics: AsymptoticsConfig,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub geodesic: GeodesicConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub family: BasisFamily,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Basis,
    Oracle,
    /// Oracle when the domain has a closed form, basis otherwise.
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsConfig {
    /// Boundary point; omitted means the last unit vector.
    pub p0: Option<Vec<Pair>>,
    /// Chart vector; omitted means the normal direction.
    pub u: Option<Vec<Pair>>,
    /// Omitted: `0.2·2^{-j}` down to the truncation radius.
    pub deltas: Option<Vec<f64>>,
    pub metric: MetricChoice,
    pub approach: Approach,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self { p0: None, u: None, deltas: None, metric: MetricChoice::Auto, approach: Approach::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationConfig {
    pub inner_radius: f64,
    pub cut: f64,
    pub degree: usize,
    pub deltas: Vec<f64>,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self { inner_radius: 0.2, cut: 0.25, degree: 150, deltas: kfm_core::verify::LOCALIZATION_DELTAS.to_vec() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicConfig {
    pub inner_radius: f64,
    pub winding: i64,
    pub nodes: usize,
    pub metric: MetricChoice,
    /// Laurent range when `metric` is `basis`.
    pub degree: usize,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self { inner_radius: 0.2, winding: 1, nodes: 128, metric: MetricChoice::Oracle, degree: 60 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Criteria to run; empty means all.
    pub criteria: Vec<usize>,
}

fn default_domain() -> DomainRecord {
    DomainRecord { kind: "disc".into(), n: 1, params: serde_json::json!({}) }
}

fn default_points() -> Vec<Vec<Pair>> {
    vec![vec![[0.0, 0.0]]]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.into(),
            domain: default_domain(),
            basis: None,
            points: default_points(),
            vector: None,
            asymptotics: AsymptoticsConfig::default(),
            localization: LocalizationConfig::default(),
            geodesic: GeodesicConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::Config(format!("unsupported schema '{}', expected '{SCHEMA}'", cfg.schema)));
        }
        cfg.domain()?;
        Ok(cfg)
    }

    pub fn domain(&self) -> Result<DomainSpec, CliError> {
        DomainSpec::try_from(self.domain.clone()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn basis_spec(&self, d: &DomainSpec) -> BasisSpec {
        match &self.basis {
            Some(b) => BasisSpec { family: b.family, degree: b.degree, n: d.dim() },
            None => BasisSpec::default_for(d),
        }
    }

    pub fn points(&self, n: usize) -> Result<Vec<Point>, CliError> {
        self.points
            .iter()
            .map(|p| {
                if p.len() != n {
                    return Err(CliError::Config(format!("point {p:?} has {} coordinates, domain has {n}", p.len())));
                }
                Ok(pairs(p))
            })
            .collect()
    }

    pub fn vector(&self, n: usize) -> Result<Vec<C64>, CliError> {
        vector_or_axis(self.vector.as_deref(), n, 0)
    }
}

/// `v` if given (checked against `n`), else the unit vector `e_axis`.
pub fn vector_or_axis(v: Option<&[Pair]>, n: usize, axis: usize) -> Result<Vec<C64>, CliError> {
    match v {
        Some(v) if v.len() != n => Err(CliError::Config(format!("vector has {} entries, domain has {n}", v.len()))),
        Some(v) => Ok(pairs(v)),
        None => {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[axis] = C64::new(1.0, 0.0);
            Ok(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(r#"{"schema": "kfm-run/1"}"#).unwrap();
        assert_eq!(cfg.domain().unwrap().name(), "disc");
        assert_eq!(cfg.points(1).unwrap().len(), 1);
        assert_eq!(cfg.geodesic.nodes, 128);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in [
            r#"{"schema": "kfm-run/0"}"#,
            r#"{"schema": "kfm-run/1", "colour": 3}"#,
            r#"{"schema": "kfm-run/1", "domain": {"kind": "annulus", "n": 1, "params": {}}}"#,
            "not json",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
