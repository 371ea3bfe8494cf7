use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::energy::EnergyWeights;
use crate::solvers::{KernelMode, Method, SolverConfig};
use crate::surface::generate::{self, RoiPatch};
use crate::surface::io::read_cloud;
use crate::surface::{
    BasisSource, CylinderSdf, GridSdf, KdTree, PlaneSdf, PointCloud, Sdf, SphereSdf, Surface, SurfaceParams,
    TorusSdf,
};

pub const SCHEMA_VERSION: u32 = 1;

/// A benchmark problem: cloud, ROI, SDF, basis, energy weights, horizon and
/// solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub cloud: CloudSpec,
    #[serde(default)]
    pub roi: RoiSpec,
    #[serde(default)]
    pub sdf: SdfSpec,
    #[serde(default)]
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub deposit: DepositSpec,
    #[serde(default)]
    pub weights: EnergyWeights,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub bench: BenchSpec,
}

/// Where the points come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSpec {
    /// Torus around the z-axis.
    Torus {
        major: f64,
        minor: f64,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default)]
        seed: u64,
    },
    Sphere {
        radius: f64,
        #[serde(default = "default_points")]
        n_points: usize,
    },
    /// Open cylinder around the z-axis, centered at the origin.
    Cylinder {
        radius: f64,
        height: f64,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Rectangle in the z = 0 plane.
    Plane {
        width: f64,
        depth: f64,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `.ply` or `.csv`; relative paths resolve against the config file.
    File { path: PathBuf },
}

fn default_points() -> usize {
    2000
}

/// ROI painting. With neither patches nor nodes, a file cloud keeps the
/// weights stored in the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<RoiPatch>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SdfSpec {
    /// Closed-form field of the generator's shape.
    #[default]
    Analytic,
    /// Trilinear grid fitted to the cloud.
    Grid {
        #[serde(default = "default_resolution")]
        resolution: usize,
        /// Bounding-box padding as a fraction of its diagonal.
        #[serde(default = "default_padding")]
        padding: f64,
        #[serde(default = "default_k_normal")]
        k_normal: usize,
    },
}

fn default_resolution() -> usize {
    48
}

fn default_padding() -> f64 {
    0.15
}

fn default_k_normal() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSpec {
    pub n_modes: usize,
    pub k_graph: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_g: Option<f64>,
    pub weight_exponent: f64,
    pub tau_d: f64,
    pub beta: f64,
}

impl Default for SpectralSpec {
    fn default() -> Self {
        let p = SurfaceParams::default();
        Self {
            n_modes: p.n_modes,
            k_graph: p.k_graph,
            sigma_g: p.sigma_g,
            weight_exponent: p.weight_exponent,
            tau_d: p.tau_d,
            beta: p.beta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepositSpec {
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_a: Option<f64>,
}

impl Default for DepositSpec {
    fn default() -> Self {
        let p = SurfaceParams::default();
        Self {
            k: p.deposit_k,
            sigma_a: p.sigma_a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub n_steps: usize,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { n_steps: 50 }
    }
}

/// Settings shared by every method, then per-method step size and
/// iteration budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub kernel_length: f64,
    pub n_particles: usize,
    pub noise_var: f64,
    pub stop_tol: f64,
    pub kernel_mode: KernelMode,
    pub record_timing: bool,
    /// Applies to every method without its own value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gn: Option<MethodSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_gn: Option<MethodSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<MethodSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tsvec: Option<MethodSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pgd: Option<MethodSpec>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::for_method(Method::Tsvec);
        Self {
            kernel_length: d.kernel_length,
            n_particles: d.n_particles,
            noise_var: d.noise_var,
            stop_tol: d.stop_tol,
            kernel_mode: d.kernel_mode,
            record_timing: true,
            step_size: None,
            max_iters: None,
            gn: None,
            batch_gn: None,
            se: None,
            tsvec: None,
            pgd: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            methods: vec![Method::Gn, Method::BatchGn, Method::Se, Method::Tsvec, Method::Pgd],
            seeds: (0..5).collect(),
        }
    }
}

/// Named bundles of overrides applied before the user's own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Profile {
    /// The config as written.
    #[default]
    Desk,
    /// Longer horizon, more particles, larger basis and more runs.
    Paper,
}

impl Profile {
    pub fn overrides(self) -> &'static [&'static str] {
        match self {
            Profile::Desk => &[],
            Profile::Paper => &[
                "trajectory.n_steps=200",
                "spectral.n_modes=300",
                "solver.n_particles=100",
                "solver.tsvec.max_iters=1000",
                "solver.se.max_iters=9999",
                "bench.seeds=[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]",
            ],
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(format!("unknown profile `{s}` (expected desk or paper)")),
        }
    }
}

/// Sets `key.path = value` in a TOML table. The value is parsed as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), BenchError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| BenchError::Override(format!("`{spec}` is not of the form key.path=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(BenchError::Override(format!("`{key}` is not a valid dotted key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for (i, p) in parents.iter().enumerate() {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            BenchError::Override(format!("`{}` is not a table", parts[..=i].join(".")))
        })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl Scenario {
    /// Parses a config, applying the profile and then `overrides` in order.
    pub fn from_toml_str(text: &str, profile: Profile, overrides: &[String]) -> Result<Self, BenchError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| BenchError::Syntax(e.to_string()))?;
        for o in profile.overrides() {
            apply_override(&mut table, o)?;
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let scenario: Scenario =
            serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| BenchError::Schema {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let schema = |path: &str, message: String| {
            Err(BenchError::Schema {
                path: path.into(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            return schema(
                "schema_version",
                format!("unsupported version {} (this build reads {SCHEMA_VERSION})", self.schema_version),
            );
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_".contains(c)) {
            return schema("name", format!("`{}` must be non-empty [A-Za-z0-9_-]", self.name));
        }
        if self.trajectory.n_steps < 3 {
            return schema("trajectory.n_steps", format!("need at least 3 steps, got {}", self.trajectory.n_steps));
        }
        if matches!(self.cloud, CloudSpec::File { .. }) && self.sdf == SdfSpec::Analytic {
            return schema("sdf.kind", "a file cloud has no analytic field; use kind = \"grid\"".into());
        }
        for m in Method::ALL {
            if let Err(e) = self.solver_config(m, 0).validate() {
                return schema(&format!("solver.{}", m.name()), e.to_string());
            }
        }
        if self.bench.methods.is_empty() || self.bench.seeds.is_empty() {
            return schema("bench", "methods and seeds must be non-empty".into());
        }
        Ok(())
    }

    fn method_spec(&self, method: Method) -> Option<&MethodSpec> {
        let s = &self.solver;
        match method {
            Method::Gn => s.gn.as_ref(),
            Method::BatchGn => s.batch_gn.as_ref(),
            Method::Se => s.se.as_ref(),
            Method::Tsvec => s.tsvec.as_ref(),
            Method::Pgd => s.pgd.as_ref(),
        }
    }

    /// Method defaults, then the shared section, then the method's table.
    pub fn solver_config(&self, method: Method, seed: u64) -> SolverConfig {
        let s = &self.solver;
        let mut c = SolverConfig::for_method(method);
        c.seed = seed;
        c.kernel_length = s.kernel_length;
        c.n_particles = if method.uses_particles() { s.n_particles } else { 1 };
        c.noise_var = s.noise_var;
        c.stop_tol = s.stop_tol;
        c.kernel_mode = s.kernel_mode;
        c.record_timing = s.record_timing;
        if let Some(v) = s.step_size {
            c.step_size = v;
        }
        if let Some(v) = s.max_iters {
            c.max_iters = v;
        }
        if let Some(m) = self.method_spec(method) {
            if let Some(v) = m.step_size {
                c.step_size = v;
            }
            if let Some(v) = m.max_iters {
                c.max_iters = v;
            }
        }
        c
    }

    /// The config as TOML; reading it back yields the same scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn surface_params(&self) -> SurfaceParams {
        SurfaceParams {
            n_modes: self.spectral.n_modes,
            k_graph: self.spectral.k_graph,
            sigma_g: self.spectral.sigma_g,
            weight_exponent: self.spectral.weight_exponent,
            tau_d: self.spectral.tau_d,
            beta: self.spectral.beta,
            deposit_k: self.deposit.k,
            sigma_a: self.deposit.sigma_a,
        }
    }

    /// Points and raw weights, or the analytic field, per the cloud spec.
    fn points(&self) -> Result<(Vec<[f64; 3]>, Option<Vec<f64>>), BenchError> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(BenchError::Schema {
                    path: format!("cloud.{path}"),
                    message: format!("must be > 0, got {v}"),
                })
            }
        };
        Ok(match &self.cloud {
            CloudSpec::Torus {
                major,
                minor,
                n_points,
                seed,
            } => {
                positive("major", *major)?;
                positive("minor", *minor)?;
                (generate::torus(*major, *minor, *n_points, *seed), None)
            }
            CloudSpec::Sphere { radius, n_points } => {
                positive("radius", *radius)?;
                (generate::sphere(*radius, *n_points), None)
            }
            CloudSpec::Cylinder {
                radius,
                height,
                n_points,
                seed,
            } => {
                positive("radius", *radius)?;
                positive("height", *height)?;
                (generate::cylinder(*radius, *height, *n_points, *seed), None)
            }
            CloudSpec::Plane {
                width,
                depth,
                n_points,
                seed,
            } => {
                positive("width", *width)?;
                positive("depth", *depth)?;
                (generate::plane(*width, *depth, *n_points, *seed), None)
            }
            CloudSpec::File { path } => {
                let raw = read_cloud(path)?;
                (raw.points, Some(raw.weights))
            }
        })
    }

    fn analytic_sdf(&self) -> Result<Arc<dyn Sdf>, BenchError> {
        Ok(match &self.cloud {
            CloudSpec::Torus { major, minor, .. } => Arc::new(TorusSdf {
                center: [0.0; 3],
                major: *major,
                minor: *minor,
            }),
            CloudSpec::Sphere { radius, .. } => Arc::new(SphereSdf {
                center: [0.0; 3],
                radius: *radius,
            }),
            CloudSpec::Cylinder { radius, .. } => Arc::new(CylinderSdf::new([0.0; 3], [0.0, 0.0, 1.0], *radius)?),
            CloudSpec::Plane { .. } => Arc::new(PlaneSdf::new([0.0; 3], [0.0, 0.0, 1.0])?),
            CloudSpec::File { .. } => unreachable!("rejected by validate"),
        })
    }

    /// Point cloud with normalized ROI weights.
    pub fn point_cloud(&self) -> Result<PointCloud, BenchError> {
        let (points, file_weights) = self.points()?;
        let roi = if !self.roi.nodes.is_empty() || !self.roi.patches.is_empty() {
            let mut w = generate::paint_roi(&points, &self.roi.patches);
            for &n in &self.roi.nodes {
                let slot = w.get_mut(n).ok_or_else(|| BenchError::Schema {
                    path: "roi.nodes".into(),
                    message: format!("node {n} out of range for {} points", points.len()),
                })?;
                *slot = slot.max(1.0);
            }
            w
        } else {
            file_weights.ok_or_else(|| BenchError::Schema {
                path: "roi".into(),
                message: "a generated cloud needs roi.patches or roi.nodes".into(),
            })?
        };
        Ok(PointCloud::new(points, roi)?)
    }

    /// Cloud, SDF and spectral basis; the basis is cached under `cache_dir`.
    pub fn build_surface(&self, cache_dir: Option<&Path>) -> Result<(Surface, BasisSource), BenchError> {
        let cloud = self.point_cloud()?;
        let sdf: Arc<dyn Sdf> = match &self.sdf {
            SdfSpec::Analytic => self.analytic_sdf()?,
            SdfSpec::Grid {
                resolution,
                padding,
                k_normal,
            } => {
                let tree = KdTree::new(cloud.points());
                Arc::new(GridSdf::from_cloud(cloud.points(), &tree, *resolution, *padding, *k_normal)?)
            }
        };
        Ok(Surface::build(cloud, sdf, &self.surface_params(), cache_dir)?)
    }
}

/// Reads a scenario file; a file cloud's relative path is resolved against
/// the config's directory.
pub fn read_scenario(path: &Path, profile: Profile, overrides: &[String]) -> Result<Scenario, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scenario = Scenario::from_toml_str(&text, profile, overrides).map_err(|e| e.in_file(path))?;
    if let CloudSpec::File { path: cloud } = &mut scenario.cloud {
        if cloud.is_relative() {
            *cloud = path.parent().unwrap_or(Path::new(".")).join(&cloud);
        }
        if !cloud.exists() {
            return Err(BenchError::Schema {
                path: "cloud.path".into(),
                message: format!("{} does not exist", cloud.display()),
            }
            .in_file(path));
        }
    }
    Ok(scenario)
}

/// [`read_scenario`] followed by [`Scenario::build_surface`].
pub fn load_scenario(
    path: &Path,
    profile: Profile,
    overrides: &[String],
    cache_dir: Option<&Path>,
) -> Result<(Scenario, Surface), BenchError> {
    let scenario = read_scenario(path, profile, overrides)?;
    let (surface, _) = scenario.build_surface(cache_dir)?;
    Ok((scenario, surface))
}
