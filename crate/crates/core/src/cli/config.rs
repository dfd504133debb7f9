use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, ScreenError};
use crate::geometry::{screening_box, suggested_box, BoxSpec, DomainSpec, GridSpec};
use crate::relaxed::SolveConfig;

/// Mass cap: a number or `"auto"` for `|Ω⁺|`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Lambda {
    #[default]
    Auto,
    Value(f64),
}

impl Lambda {
    pub fn resolve(self, m: f64) -> f64 {
        match self {
            Lambda::Auto => m,
            Lambda::Value(v) => v,
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Auto => s.serialize_str("auto"),
            Lambda::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Lambda::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(Lambda::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got \"{t}\""))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    /// Bounding box plus the single-ball screening shell.
    #[default]
    Screening,
    /// Bounding box plus `2|Ω⁺|^{1/3}`.
    Suggested,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: f64,
    /// Extra padding; `0.2·|Ω⁺|^{1/3}` when absent.
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default, rename = "box")]
    pub box_kind: BoxKind,
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
}

fn default_subsamples() -> usize {
    4
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    JsonReport,
    CsvRadial,
    VtkFields,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub nodes: usize,
    /// Probe sphere radius as a multiple of the circumradius of Ω⁺.
    #[serde(default = "default_probe_factor")]
    pub probe_factor: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_probe_factor() -> f64 {
    2.0
}

fn default_probes() -> usize {
    64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Multiples of `|Ω⁺|` for the 3D energy curve.
    #[serde(default)]
    pub lambda_fractions: Vec<f64>,
    /// Regularization parameters for the radial Γ-sequence (balls only).
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default = "default_radial_nr")]
    pub radial_nr: usize,
}

fn default_radial_nr() -> usize {
    2048
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_shells")]
    pub exclusion_shells: usize,
    /// Sphere radii about the centroid of Ω⁺ for flux checks.
    #[serde(default)]
    pub flux_radii: Vec<f64>,
    #[serde(default)]
    pub min_diam_points: Vec<[f64; 3]>,
    #[serde(default)]
    pub min_diam_radii: Vec<f64>,
}

fn default_shells() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: DomainSpec,
    #[serde(default)]
    pub lambda: Lambda,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub surface: Option<SurfaceSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsSection>,
}

fn field_error(path: &str, msg: impl std::fmt::Display) -> ScreenError {
    ScreenError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    /// Parses and validates a JSON document. Syntax and type errors carry
    /// the line, column and field path.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = if path.is_empty() || path == "." {
                format!("{inner}")
            } else {
                format!("field `{path}`: {inner}")
            };
            ScreenError::Parse { line: inner.line(), msg }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate().map_err(|e| field_error("problem", e))?;
        if self.problem.is_empty() {
            return Err(field_error("problem", "domain is empty"));
        }
        if let Lambda::Value(v) = self.lambda {
            if !(v > 0.0) || !v.is_finite() {
                return Err(field_error("lambda", format!("must be positive, got {v}")));
            }
        }
        let g = &self.grid;
        if !(g.h > 0.0) || !g.h.is_finite() {
            return Err(field_error("grid.h", format!("must be positive, got {}", g.h)));
        }
        if let Some(mg) = g.margin {
            if !(mg >= 0.0) || !mg.is_finite() {
                return Err(field_error("grid.margin", format!("must be nonnegative, got {mg}")));
            }
        }
        if g.subsamples == 0 || g.subsamples > 16 {
            return Err(field_error("grid.subsamples", format!("must be in 1..=16, got {}", g.subsamples)));
        }
        self.solver.validate().map_err(|e| field_error("solver", e))?;
        if let Some(s) = &self.surface {
            if s.nodes < 10 {
                return Err(field_error("surface.nodes", format!("need at least 10 nodes, got {}", s.nodes)));
            }
            if !(s.probe_factor > 1.0) || !s.probe_factor.is_finite() {
                return Err(field_error("surface.probe_factor", format!("must exceed 1, got {}", s.probe_factor)));
            }
            if s.probes == 0 {
                return Err(field_error("surface.probes", "must be positive"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.lambda_fractions.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(field_error("sweep.lambda_fractions", "entries must be finite and nonnegative"));
            }
            if s.eps.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(field_error("sweep.eps", "entries must be finite and positive"));
            }
            if s.radial_nr < 16 {
                return Err(field_error("sweep.radial_nr", format!("must be at least 16, got {}", s.radial_nr)));
            }
        }
        if let Some(d) = &self.diagnostics {
            if d.flux_radii.iter().chain(&d.min_diam_radii).any(|r| !(*r > 0.0) || !r.is_finite()) {
                return Err(field_error("diagnostics", "radii must be finite and positive"));
            }
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.problem.volume()
    }

    pub fn lambda_value(&self) -> f64 {
        self.lambda.resolve(self.mass())
    }

    pub fn working_box(&self) -> Result<BoxSpec> {
        let margin = self.grid.margin.unwrap_or(0.2 * self.mass().cbrt());
        match self.grid.box_kind {
            BoxKind::Screening => screening_box(&self.problem, margin),
            BoxKind::Suggested => suggested_box(&self.problem, margin),
        }
    }

    pub fn working_grid(&self) -> Result<GridSpec> {
        self.working_box()?.grid(self.grid.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BALL: &str = r#"{
  "problem": {"type": "ball", "center": [0, 0, 0], "radius": 1},
  "lambda": "auto",
  "grid": {"h": 0.125},
  "outputs": ["json_report", "csv_radial"]
}"#;

    #[test]
    fn parses_minimal_ball() {
        let c = RunConfig::from_json(BALL).unwrap();
        assert_eq!(c.lambda, Lambda::Auto);
        assert_eq!(c.grid.box_kind, BoxKind::Screening);
        assert_eq!(c.solver, SolveConfig::default());
        assert!((c.lambda_value() - c.mass()).abs() < 1e-15);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_reports_line_and_path() {
        let text = BALL.replace("\"h\": 0.125", "\"h\": 0.125, \"spacing\": 1");
        match RunConfig::from_json(&text) {
            Err(ScreenError::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("grid") && msg.contains("spacing"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_field() {
        let text = BALL.replace("\"auto\"", "\"all\"");
        match RunConfig::from_json(&text) {
            Err(ScreenError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("lambda"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let text = BALL.replace("\"h\": 0.125", "\"h\": -1");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("grid.h"), "{err}");
        let text = BALL.replace("\"grid\"", "\"surface\": {\"nodes\": 5}, \"grid\"");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("surface.nodes"), "{err}");
    }

    #[test]
    fn numeric_lambda() {
        let c = RunConfig::from_json(&BALL.replace("\"auto\"", "2.5")).unwrap();
        assert_eq!(c.lambda_value(), 2.5);
        assert!(RunConfig::from_json(&BALL.replace("\"auto\"", "0")).is_err());
    }
}
