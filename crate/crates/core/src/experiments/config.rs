use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::discretization::{build_mesh, Bounds, Form, MeshSpec, ParameterField, Problem, Source};
use crate::error::{Error, Result};
use crate::forward::SolverOptions;
use crate::identification::IdentificationConfig;
use crate::kernels::KernelSpec;

/// A coefficient given either as one constant or as explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValues {
    Constant(f64),
    Values(Vec<f64>),
}

impl FieldValues {
    fn expand(&self, n: usize, field: &str) -> Result<DVector<f64>> {
        match self {
            FieldValues::Constant(v) => Ok(DVector::from_element(n, *v)),
            FieldValues::Values(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            FieldValues::Values(v) => Err(Error::config(
                field,
                format!("expected {n} values, got {}", v.len()),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub mesh: MeshSpec,
    #[serde(default)]
    pub form: Form,
    #[serde(default)]
    pub source: Source,
    pub e_bounds: Bounds,
    pub f_bounds: Bounds,
    /// Ellipticity used for forward solves and as the twin-experiment truth.
    pub e: FieldValues,
    /// Friction, same role as `e`.
    pub f: FieldValues,
}

/// Initial guess for identification; defaults to the box midpoints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    pub e: Option<FieldValues>,
    pub f: Option<FieldValues>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardSection {
    /// Zero selects the unregularized solver.
    pub eps: f64,
}

impl Default for ForwardSection {
    fn default() -> Self {
        Self { eps: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateStudySection {
    pub kernels: Vec<KernelSpec>,
    pub eps: Vec<f64>,
    pub min_slope: f64,
}

impl Default for RateStudySection {
    fn default() -> Self {
        Self {
            kernels: KernelSpec::ALL.to_vec(),
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            min_slope: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelCheckSection {
    pub kernels: Vec<KernelSpec>,
    pub eps: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    /// Allowed excess of the bound ratios over 1.
    pub slack: f64,
}

impl Default for KernelCheckSection {
    fn default() -> Self {
        Self {
            kernels: KernelSpec::ALL.to_vec(),
            eps: vec![1.0, 1e-1, 1e-2, 1e-3],
            t_min: -10.0,
            t_max: 10.0,
            samples: 10_000,
            slack: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckSection {
    pub eps: Vec<f64>,
    pub points: usize,
    pub directions: usize,
    pub step: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tolerance: f64,
    /// Random points are drawn from the boxes shrunk by this margin.
    pub margin: f64,
}

impl Default for GradientCheckSection {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2],
            points: 10,
            directions: 5,
            step: 1e-5,
            alpha: 1e-3,
            beta: 1e-3,
            tolerance: 1e-5,
            margin: 0.05,
        }
    }
}

/// One experiment configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub start: StartSection,
    #[serde(default)]
    pub forward: ForwardSection,
    #[serde(default)]
    pub rate_study: RateStudySection,
    #[serde(default)]
    pub kernel_check: KernelCheckSection,
    #[serde(default)]
    pub gradient_check: GradientCheckSection,
    #[serde(default)]
    pub identify: IdentificationConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_kernel() -> KernelSpec {
    KernelSpec::Sqrt
}

fn positive_list(field: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::config(field, format!("entries must be positive, got {x}")));
    }
    Ok(())
}

fn check_bounds(field: &str, b: &Bounds) -> Result<()> {
    if !(b.lower.is_finite() && b.upper.is_finite()) {
        return Err(Error::config(field, "bounds must be finite"));
    }
    if b.lower >= b.upper {
        return Err(Error::config(
            field,
            format!("lower bound {} must be below upper bound {}", b.lower, b.upper),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text; `origin` only labels error messages.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}: ")
                })
                .unwrap_or_default();
            Error::Parse {
                path: origin.to_path_buf(),
                message: format!("{location}{}", e.message()),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        check_bounds("ellipticity bounds", &p.e_bounds)?;
        check_bounds("friction bounds", &p.f_bounds)?;
        if p.e_bounds.lower <= 0.0 {
            return Err(Error::config("ellipticity bounds", "lower bound must be positive"));
        }
        if p.f_bounds.lower < 0.0 {
            return Err(Error::config("friction bounds", "lower bound must be nonnegative"));
        }
        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(Error::config("solver.tol", "must be positive"));
        }
        if !(s.backtrack > 0.0 && s.backtrack < 1.0) {
            return Err(Error::config("solver.backtrack", "must lie in (0, 1)"));
        }
        if !(s.armijo_c > 0.0 && s.armijo_c < 1.0) {
            return Err(Error::config("solver.armijo_c", "must lie in (0, 1)"));
        }
        if !(self.forward.eps.is_finite() && self.forward.eps >= 0.0) {
            return Err(Error::config("forward.eps", "must be nonnegative"));
        }
        positive_list("rate_study.eps", &self.rate_study.eps)?;
        if self.rate_study.kernels.is_empty() {
            return Err(Error::config("rate_study.kernels", "must not be empty"));
        }
        let kc = &self.kernel_check;
        positive_list("kernel_check.eps", &kc.eps)?;
        if kc.kernels.is_empty() {
            return Err(Error::config("kernel_check.kernels", "must not be empty"));
        }
        if !(kc.t_min < kc.t_max) || kc.samples < 2 {
            return Err(Error::config(
                "kernel_check",
                "need t_min < t_max and at least 2 samples",
            ));
        }
        let gc = &self.gradient_check;
        positive_list("gradient_check.eps", &gc.eps)?;
        if !(gc.step > 0.0) {
            return Err(Error::config("gradient_check.step", "must be positive"));
        }
        if !(gc.alpha >= 0.0 && gc.beta >= 0.0) {
            return Err(Error::config("gradient_check", "alpha and beta must be nonnegative"));
        }
        for (name, b) in [("ellipticity bounds", p.e_bounds), ("friction bounds", p.f_bounds)] {
            if !(gc.margin >= 0.0 && 2.0 * (gc.margin + gc.step) < b.upper - b.lower) {
                return Err(Error::config(
                    "gradient_check.margin",
                    format!("margin and step leave no interior in the {name}"),
                ));
            }
        }
        self.identify.validate()
    }

    /// Builds the discrete problem described by `[problem]`.
    pub fn build_problem(&self) -> Result<Problem> {
        let p = &self.problem;
        let mesh = build_mesh(&p.mesh)?;
        Problem::new(mesh, p.form, p.source, p.e_bounds, p.f_bounds)
    }

    fn field_pair(
        &self,
        problem: &Problem,
        e: &FieldValues,
        f: &FieldValues,
        prefix: &str,
    ) -> Result<(ParameterField, ParameterField)> {
        let name_e = format!("{prefix}.e");
        let name_f = format!("{prefix}.f");
        let e = problem
            .ellipticity(e.expand(problem.num_elements(), &name_e)?)
            .map_err(|err| Error::config(name_e, err.to_string()))?;
        let f = problem
            .friction(f.expand(problem.num_friction(), &name_f)?)
            .map_err(|err| Error::config(name_f, err.to_string()))?;
        Ok((e, f))
    }

    /// The `[problem]` parameters `(e, f)`.
    pub fn parameters(&self, problem: &Problem) -> Result<(ParameterField, ParameterField)> {
        self.field_pair(problem, &self.problem.e, &self.problem.f, "problem")
    }

    /// The identification start `(e0, f0)`.
    pub fn start(&self, problem: &Problem) -> Result<(ParameterField, ParameterField)> {
        let mid = |b: Bounds| FieldValues::Constant(0.5 * (b.lower + b.upper));
        let e = self.start.e.clone().unwrap_or_else(|| mid(self.problem.e_bounds));
        let f = self.start.f.clone().unwrap_or_else(|| mid(self.problem.f_bounds));
        self.field_pair(problem, &e, &f, "start")
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
mesh = { kind = "interval", left = 0.0, right = 1.0, elements = 8 }
e_bounds = { lower = 0.5, upper = 2.0 }
f_bounds = { lower = 0.0, upper = 2.0 }
e = 1.0
f = 0.25
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.kernel, KernelSpec::Sqrt);
        assert_eq!(c.problem.form, Form::GradGrad);
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.identify, IdentificationConfig::default());
        assert_eq!(c.rate_study.eps.len(), 5);
        let p = c.build_problem().unwrap();
        let (e, f) = c.parameters(&p).unwrap();
        assert_eq!(e.len(), 8);
        assert_eq!(f.values()[0], 0.25);
        let (e0, f0) = c.start(&p).unwrap();
        assert_eq!(e0.values()[0], 1.25);
        assert_eq!(f0.values()[0], 1.0);
    }

    #[test]
    fn inverted_friction_bounds_are_named() {
        let text = MINIMAL.replace("lower = 0.0, upper = 2.0", "lower = 3.0, upper = 2.0");
        match parse(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "friction bounds"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = MINIMAL.replace("elements = 8", "elements = \"eight\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn wrong_length_field_is_named() {
        let text = MINIMAL.replace("e = 1.0", "e = [1.0, 1.0]");
        let c = parse(&text).unwrap();
        let p = c.build_problem().unwrap();
        match c.parameters(&p) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "problem.e"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(parse(&c.to_toml()).unwrap(), c);
    }
}
