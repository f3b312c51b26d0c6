//! Experiment configuration: one geometry block and a list of tasks.

use ctalab::cgo::{AmplitudeConfig, AssembleConfig, Sign};
use ctalab::manifold::{ConformalFactor, CtaChart, Geometry};
use ctalab::pde::{DiscreteDomain, SemilinearConfig};
use ctalab::potential::FieldSpec;
use ctalab::raytransform::{eps_ladder, LimitConfig, MomentConfig};
use ctalab::recon::ReconTask;
use ctalab::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    FlatDisk,
    SphereCap,
    ConformalDisk,
}

/// `{"kind": ..., "n": 3|4, "interval": [a0, b0], "params": {...}}`; missing params take the
/// shipped defaults of the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub kind: GeometryKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub conformal: ConformalFactor,
}

fn default_n() -> usize {
    3
}

fn default_interval() -> [f64; 2] {
    [-1.0, 1.0]
}

impl Default for GeometryBlock {
    fn default() -> Self {
        GeometryBlock {
            kind: GeometryKind::FlatDisk,
            n: default_n(),
            interval: default_interval(),
            params: Map::new(),
            conformal: ConformalFactor::Unit,
        }
    }
}

impl GeometryBlock {
    pub fn geometry(&self) -> Result<Geometry> {
        let base = match self.kind {
            GeometryKind::FlatDisk => Geometry::flat_disk(),
            GeometryKind::SphereCap => Geometry::sphere_cap(),
            GeometryKind::ConformalDisk => Geometry::conformal_disk(),
        };
        let Value::Object(mut merged) = serde_json::to_value(&base).expect("geometry serializes") else {
            unreachable!()
        };
        for (k, v) in &self.params {
            if k == "kind" || !merged.contains_key(k) {
                return Err(invalid("geometry.params", format!("unknown parameter `{k}` for this kind")));
            }
            merged.insert(k.clone(), v.clone());
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| invalid("geometry.params", e.to_string()))
    }

    pub fn chart(&self) -> Result<CtaChart> {
        let chart = CtaChart { n: self.n, interval: self.interval, geometry: self.geometry()?, conformal: self.conformal.clone() };
        chart.validate().map_err(|e| invalid("geometry", e.to_string()))?;
        Ok(chart)
    }

    /// The block with every geometry parameter spelled out.
    pub fn explicit(&self) -> Result<GeometryBlock> {
        let Value::Object(mut params) = serde_json::to_value(self.geometry()?).expect("geometry serializes") else {
            unreachable!()
        };
        params.remove("kind");
        Ok(GeometryBlock { params, ..self.clone() })
    }
}

/// A geodesic given by a transversal point and direction; the direction is rescaled to unit
/// length in the metric at `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Extension beyond the exit times `tau_-`, `tau_+`.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_step() -> f64 {
    1e-3
}

fn default_margin() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformChoice {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    /// Point value from the second transform, any `n`.
    J2,
    /// Point value from the first transform, `n = 4`.
    J1Split,
    /// `f` along the whole geodesic from the first transform, `n = 3`.
    J1Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    /// `V_m` for `m >= 3` from the first-order pairing.
    Vm,
    /// `V_2` from the `rho / 2 rho` pairing.
    V2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicTask {
    pub name: String,
    pub ray: RaySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobiTask {
    pub name: String,
    pub ray: RaySpec,
    /// Time where `Y = X - i eps Z` starts from `(0, I)` and `(I, 0)`.
    #[serde(default)]
    pub anchor: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    0.1
}

fn default_ladder() -> Vec<f64> {
    eps_ladder(0.1, 5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformTask {
    pub name: String,
    pub ray: RaySpec,
    /// Integrand, evaluated at `(x0, gamma(t))`.
    pub field: FieldSpec,
    #[serde(default)]
    pub x0: f64,
    pub transform: TransformChoice,
    #[serde(default)]
    pub anchor: f64,
    #[serde(default = "default_ladder")]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertTask {
    pub name: String,
    pub ray: RaySpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub x0: f64,
    pub method: InversionMethod,
    /// Pair anchor; defaults to `0` for the point methods and `tau_- - margin`, the start of the traced path, for the moment route.
    #[serde(default)]
    pub anchor: Option<f64>,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub moments: MomentConfig,
}

/// Semilinear Dirichlet problem `-Delta u + V(x, u) = 0`, `u = amplitude * boundary` on the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveTask {
    pub name: String,
    pub domain: DiscreteDomain,
    /// `V_1, V_2, ...`
    pub series: Vec<FieldSpec>,
    pub boundary: FieldSpec,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub semilinear: SemilinearConfig,
}

fn default_amplitude() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgoRatesTask {
    pub name: String,
    pub ray: RaySpec,
    /// Phase order `N`.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_sign")]
    pub sign: Sign,
    #[serde(default = "default_zero")]
    pub v1: FieldSpec,
    #[serde(default)]
    pub amplitude: AmplitudeConfig,
    #[serde(default)]
    pub assemble: AssembleConfig,
}

fn default_order() -> usize {
    2
}

fn default_sign() -> Sign {
    Sign::Plus
}

fn default_zero() -> FieldSpec {
    FieldSpec::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverTask {
    pub name: String,
    #[serde(default = "default_coefficient")]
    pub coefficient: Coefficient,
    #[serde(default)]
    pub task: ReconTask,
}

fn default_coefficient() -> Coefficient {
    Coefficient::Vm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    Geodesic(GeodesicTask),
    Jacobi(JacobiTask),
    Transform(TransformTask),
    Invert(InvertTask),
    Solve(SolveTask),
    Dn(SolveTask),
    CgoRates(CgoRatesTask),
    Recover(RecoverTask),
}

impl Task {
    pub fn name(&self) -> &str {
        match self {
            Task::Geodesic(t) => &t.name,
            Task::Jacobi(t) => &t.name,
            Task::Transform(t) => &t.name,
            Task::Invert(t) => &t.name,
            Task::Solve(t) | Task::Dn(t) => &t.name,
            Task::CgoRates(t) => &t.name,
            Task::Recover(t) => &t.name,
        }
    }

    /// Subcommand that runs this task.
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Geodesic(_) => "geodesic",
            Task::Jacobi(_) => "jacobi",
            Task::Transform(_) => "transform",
            Task::Invert(_) => "invert",
            Task::Solve(_) => "solve",
            Task::Dn(_) => "dn",
            Task::CgoRates(_) => "cgo-rates",
            Task::Recover(_) => "recover",
        }
    }
}

pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.into(), reason: reason.into() }
}

/// Parse JSON text; errors name the offending field path.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<root>".to_string() } else { path };
        invalid(field, e.into_inner().to_string())
    })?;
    Ok(cfg)
}

fn check_ray(field: &str, ray: &RaySpec, d: usize) -> Result<()> {
    if ray.point.len() != d || ray.direction.len() != d {
        return Err(invalid(format!("{field}.ray"), format!("point and direction need {d} components")));
    }
    if ray.direction.iter().all(|v| *v == 0.0) {
        return Err(invalid(format!("{field}.ray.direction"), "zero direction"));
    }
    if !(ray.step > 0.0) || !(ray.margin >= 0.0) {
        return Err(invalid(format!("{field}.ray"), "step must be positive and margin nonnegative"));
    }
    Ok(())
}

fn check_field(field: String, spec: &FieldSpec, n: usize) -> Result<()> {
    spec.build(n).map(|_| ()).map_err(|e| invalid(field, e.to_string()))
}

fn check_solve(field: &str, t: &SolveTask) -> Result<()> {
    DiscreteDomain::new(t.domain.lo.clone(), t.domain.hi.clone(), t.domain.cells.clone())
        .map_err(|e| invalid(format!("{field}.domain"), e.to_string()))?;
    let n = t.domain.dim();
    if t.series.is_empty() {
        return Err(invalid(format!("{field}.series"), "need at least V_1"));
    }
    for (k, s) in t.series.iter().enumerate() {
        check_field(format!("{field}.series[{k}]"), s, n)?;
    }
    check_field(format!("{field}.boundary"), &t.boundary, n)?;
    if !t.amplitude.is_finite() {
        return Err(invalid(format!("{field}.amplitude"), "not finite"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Everything that can be checked without running a task.
    pub fn validate(&self) -> Result<()> {
        let chart = self.geometry.chart()?;
        let (n, d) = (chart.n, chart.dim());
        let mut names = std::collections::BTreeSet::new();
        for (i, task) in self.tasks.iter().enumerate() {
            let field = format!("tasks[{i}]");
            let name = task.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || name.starts_with('.') {
                return Err(invalid(format!("{field}.name"), "use letters, digits, '-', '_' or '.'"));
            }
            if name == "manifest.json" || !names.insert(name.to_string()) {
                return Err(invalid(format!("{field}.name"), format!("`{name}` is reserved or already used")));
            }
            match task {
                Task::Geodesic(t) => check_ray(&field, &t.ray, d)?,
                Task::Jacobi(t) => {
                    check_ray(&field, &t.ray, d)?;
                    if !(t.eps > 0.0) {
                        return Err(invalid(format!("{field}.eps"), "must be positive"));
                    }
                }
                Task::Transform(t) => {
                    check_ray(&field, &t.ray, d)?;
                    check_field(format!("{field}.field"), &t.field, n)?;
                    if t.eps.is_empty() || t.eps.iter().any(|e| !(*e > 0.0)) {
                        return Err(invalid(format!("{field}.eps"), "need positive values"));
                    }
                }
                Task::Invert(t) => {
                    check_ray(&field, &t.ray, d)?;
                    check_field(format!("{field}.field"), &t.field, n)?;
                    let need = match t.method {
                        InversionMethod::J2 => None,
                        InversionMethod::J1Split => Some(4),
                        InversionMethod::J1Moments => Some(3),
                    };
                    if need.is_some_and(|k| k != n) {
                        return Err(invalid(format!("{field}.method"), format!("not available for n = {n}")));
                    }
                }
                Task::Solve(t) | Task::Dn(t) => check_solve(&field, t)?,
                Task::CgoRates(t) => {
                    check_ray(&field, &t.ray, d)?;
                    check_field(format!("{field}.v1"), &t.v1, n)?;
                    if self.geometry.kind != GeometryKind::FlatDisk {
                        return Err(invalid("geometry.kind", "cgo-rates needs the flat_disk geometry"));
                    }
                    if t.order < 2 {
                        return Err(invalid(format!("{field}.order"), "phase order must be at least 2"));
                    }
                    t.assemble.validate().map_err(|e| invalid(format!("{field}.assemble"), e.to_string()))?;
                }
                Task::Recover(t) => {
                    t.task.validate().map_err(|e| invalid(format!("{field}.task"), e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    /// The config as it is run: geometry parameters filled in and the seed applied.
    pub fn explicit(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            seed: seed.unwrap_or(self.seed),
            geometry: self.geometry.explicit()?,
            tasks: self.tasks.clone(),
        })
    }
}
