use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ExperimentError;
use crate::coeffjet::parse;
use crate::dgsolver::{BvpConfig, KfRule, NeumannData, Source, SpaceKind};
use crate::mesh2d::{lshape_tri, read_mesh, unit_square_tri, Mesh2D};
use crate::qtrefftz::DarCoefficients;

/// Coefficients and data as expression strings in `x1`, `x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Row-major `[K11, K12, K21, K22]`.
    pub k: Vec<String>,
    pub beta: Vec<String>,
    pub sigma: String,
    /// `"manufactured"`, `"zero"` or an expression.
    #[serde(default = "default_source")]
    pub source: String,
    /// Dirichlet data; defaults to the exact solution, else zero.
    #[serde(default)]
    pub g_d: Option<String>,
    /// Neumann data `-K∇u·n`; `"exact"` derives it from the exact
    /// solution. Defaults to `"exact"` when one is given, else zero.
    #[serde(default)]
    pub g_n: Option<String>,
    #[serde(default)]
    pub exact: Option<String>,
    pub k_min: f64,
    #[serde(default)]
    pub sigma0: f64,
    #[serde(default)]
    pub kf_rule: KfRuleName,
    /// Boundary tags carrying Neumann data.
    #[serde(default)]
    pub neumann_tags: Vec<u32>,
}

fn default_source() -> String {
    "zero".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KfRuleName {
    #[default]
    Kmin,
    FacetMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    UnitSquare,
    Lshape,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub generator: Generator,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Number of mesh levels; level `j` is the base mesh refined `j` times.
    #[serde(default = "one")]
    pub refinements: usize,
    #[serde(default)]
    pub path: Option<String>,
}

fn default_n() -> usize {
    4
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceName {
    Qt,
    Full,
}

impl From<SpaceName> for SpaceKind {
    fn from(s: SpaceName) -> Self {
        match s {
            SpaceName::Qt => SpaceKind::QuasiTrefftz,
            SpaceName::Full => SpaceKind::FullPoly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    #[serde(default = "default_p")]
    pub p: Vec<usize>,
    #[serde(default = "default_spaces")]
    pub spaces: Vec<SpaceName>,
    /// Penalty; `50 p^2` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub quad_bump: usize,
}

fn default_p() -> Vec<usize> {
    vec![2]
}

fn default_spaces() -> Vec<SpaceName> {
    vec![SpaceName::Qt, SpaceName::Full]
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig { p: default_p(), spaces: default_spaces(), gamma: None, quad_bump: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub csv: Option<String>,
    /// Grid samples `x,y,u_h` of the finest solution (solve only).
    #[serde(default)]
    pub field: Option<String>,
    /// Directory for Matrix Market dumps of every assembled matrix.
    #[serde(default)]
    pub matrix_dir: Option<String>,
    /// Samples per axis of the field grid.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// `(d, p, m)` triples for the dimension table.
    #[serde(default)]
    pub dims: Vec<[usize; 3]>,
    /// Elements whose basis coefficients are printed.
    #[serde(default)]
    pub dump_elements: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub disc: DiscConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub basis: Option<BasisConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// Sets `path` (dot-separated) in a JSON object; the value is parsed as
/// JSON when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ExperimentError> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| config_err(format!("override '{assignment}' lacks '='")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_err(format!("override '{path}': '{}' is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(config_err("empty override path"))
}

impl RunConfig {
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, ExperimentError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| config_err(format!("bad JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| config_err(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, overrides)
    }

    /// Resolved configuration as one JSON line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        if self.mesh.refinements < 1 {
            return Err(config_err("mesh.refinements must be at least 1"));
        }
        if self.disc.p.is_empty() || self.disc.spaces.is_empty() {
            return Err(config_err("disc.p and disc.spaces must be non-empty"));
        }
        if self.disc.spaces.contains(&SpaceName::Qt) && self.disc.p.iter().any(|&p| p < 2) {
            return Err(config_err("quasi-Trefftz spaces need p >= 2"));
        }
        if self.problem.k.len() != 4 || self.problem.beta.len() != 2 {
            return Err(config_err("problem.k needs 4 entries and problem.beta 2"));
        }
        if self.mesh.generator == Generator::File && self.mesh.path.is_none() {
            return Err(config_err("mesh.path is required for the file generator"));
        }
        self.bvp(2)?;
        Ok(())
    }

    pub fn gamma(&self, p: usize) -> f64 {
        self.disc.gamma.unwrap_or(50.0 * (p * p) as f64)
    }

    /// Solver problem for degree `p`.
    pub fn bvp(&self, p: usize) -> Result<BvpConfig, ExperimentError> {
        let pr = &self.problem;
        let ex = |s: &str| parse(s, 2).map_err(|e| config_err(format!("expression '{s}': {e}")));
        let k: Vec<&str> = pr.k.iter().map(String::as_str).collect();
        let beta: Vec<&str> = pr.beta.iter().map(String::as_str).collect();
        let coeffs = DarCoefficients::parse(2, &k, &beta, &pr.sigma).map_err(|e| config_err(e.to_string()))?;
        let exact = pr.exact.as_deref().map(ex).transpose()?;
        let source = match pr.source.as_str() {
            "manufactured" => Source::Manufactured,
            "zero" => Source::Zero,
            s => Source::Expr(ex(s)?),
        };
        let g_dirichlet = match (&pr.g_d, &exact) {
            (Some(g), _) => ex(g)?,
            (None, Some(u)) => u.clone(),
            (None, None) => ex("0")?,
        };
        let g_neumann = match (pr.g_n.as_deref(), &exact) {
            (Some("exact"), _) | (None, Some(_)) => NeumannData::FromExact,
            (Some(g), _) => NeumannData::Expr(ex(g)?),
            (None, None) => NeumannData::Expr(ex("0")?),
        };
        let bvp = BvpConfig {
            coeffs,
            source,
            g_dirichlet,
            g_neumann,
            exact,
            gamma: self.gamma(p),
            kf_rule: match pr.kf_rule {
                KfRuleName::Kmin => KfRule::ConstantKmin,
                KfRuleName::FacetMax => KfRule::PerFacetMax,
            },
            k_min: pr.k_min,
            sigma0: pr.sigma0,
            neumann_tags: pr.neumann_tags.clone(),
            quad_bump: self.disc.quad_bump,
        };
        let samples: Vec<[f64; 2]> = (0..5).flat_map(|i| (0..5).map(move |j| [0.1 + 0.2 * i as f64, 0.1 + 0.2 * j as f64])).collect();
        bvp.validate(&samples).map_err(|e| config_err(e.to_string()))?;
        Ok(bvp)
    }

    pub fn base_mesh(&self) -> Result<Mesh2D, ExperimentError> {
        let m = &self.mesh;
        match m.generator {
            Generator::UnitSquare => {
                if m.n == 0 {
                    return Err(config_err("mesh.n must be positive"));
                }
                Ok(unit_square_tri(m.n))
            }
            Generator::Lshape => lshape_tri(m.n).map_err(|e| config_err(e.to_string())),
            Generator::File => {
                let path = m.path.as_deref().expect("checked");
                let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{path}: {e}")))?;
                read_mesh(&text).map_err(|e| config_err(format!("{path}: {e}")))
            }
        }
    }

    /// Mesh levels, coarsest first.
    pub fn meshes(&self) -> Result<Vec<Arc<Mesh2D>>, ExperimentError> {
        let mut out = vec![Arc::new(self.base_mesh()?)];
        for _ in 1..self.mesh.refinements {
            let next = out.last().expect("non-empty").refine().map_err(|e| config_err(e.to_string()))?;
            out.push(Arc::new(next));
        }
        Ok(out)
    }
}

/// Configurations of the standard experiments.
pub mod presets {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Manufactured smooth solution with variable coefficients.
    pub fn convergence() -> RunConfig {
        RunConfig {
            problem: ProblemConfig {
                k: strings(&["1 + x1 + x2", "0", "0", "1 + x1 + x2"]),
                beta: strings(&["sin(x1)", "sin(x2)"]),
                sigma: "4/(1 + x1 + x2)".into(),
                source: "manufactured".into(),
                g_d: None,
                g_n: None,
                exact: Some("sin(pi*(x1 + x2))".into()),
                k_min: 1.0,
                sigma0: 1.87,
                kf_rule: KfRuleName::Kmin,
                neumann_tags: vec![],
            },
            mesh: MeshConfig { generator: Generator::UnitSquare, n: 4, refinements: 5, path: None },
            disc: DiscConfig { p: vec![2, 3], spaces: default_spaces(), gamma: None, quad_bump: 0 },
            outputs: OutputConfig { grid: default_grid(), ..Default::default() },
            basis: None,
            seed: 0,
        }
    }

    /// Dirichlet problem for the conditioning sweep.
    pub fn cond() -> RunConfig {
        RunConfig {
            problem: ProblemConfig {
                k: strings(&["1 + x1 + x2", "0", "0", "1 + x1 + x2"]),
                beta: strings(&["1", "0"]),
                sigma: "3/(1 + x1 + x2)".into(),
                source: "zero".into(),
                g_d: Some("0".into()),
                g_n: None,
                exact: None,
                k_min: 1.0,
                sigma0: 1.0,
                kf_rule: KfRuleName::Kmin,
                neumann_tags: vec![],
            },
            mesh: MeshConfig { generator: Generator::UnitSquare, n: 2, refinements: 4, path: None },
            disc: DiscConfig { p: vec![3], spaces: default_spaces(), gamma: None, quad_bump: 0 },
            outputs: OutputConfig { grid: default_grid(), ..Default::default() },
            basis: None,
            seed: 0,
        }
    }

    /// Advection-dominated flow along parabolic streamlines.
    pub fn layer(nu: f64) -> RunConfig {
        RunConfig {
            problem: ProblemConfig {
                k: vec![format!("{nu}"), "0".into(), "0".into(), format!("{nu}")],
                beta: strings(&["x2*exp(x1 - x2^2/2)", "exp(x1 - x2^2/2)"]),
                sigma: "0".into(),
                source: "zero".into(),
                g_d: Some("step(1/3 - x1)".into()),
                g_n: Some("0".into()),
                exact: None,
                k_min: nu,
                sigma0: 0.0,
                kf_rule: KfRuleName::Kmin,
                neumann_tags: vec![2, 3],
            },
            mesh: MeshConfig { generator: Generator::UnitSquare, n: 4, refinements: 4, path: None },
            disc: DiscConfig { p: vec![3], spaces: vec![SpaceName::Qt], gamma: Some(100.0), quad_bump: 0 },
            outputs: OutputConfig { grid: default_grid(), ..Default::default() },
            basis: None,
            seed: 0,
        }
    }

    /// Rotating flow on the L-shaped domain with a boundary layer.
    pub fn lshape() -> RunConfig {
        let nu = 5e-3;
        RunConfig {
            problem: ProblemConfig {
                k: vec![format!("{nu}"), "0".into(), "0".into(), format!("{nu}")],
                beta: strings(&["-x2", "x1"]),
                sigma: "0".into(),
                source: "zero".into(),
                g_d: Some("step(-x2)".into()),
                g_n: None,
                exact: None,
                k_min: nu,
                sigma0: 0.0,
                kf_rule: KfRuleName::Kmin,
                neumann_tags: vec![],
            },
            mesh: MeshConfig { generator: Generator::Lshape, n: 16, refinements: 1, path: None },
            disc: DiscConfig { p: vec![3], spaces: vec![SpaceName::Qt], gamma: Some(50.0), quad_bump: 0 },
            outputs: OutputConfig { grid: default_grid(), ..Default::default() },
            basis: None,
            seed: 0,
        }
    }
}
