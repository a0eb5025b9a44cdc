//! Batch drivers: convergence and conditioning sweeps, single solves with
//! field sampling, basis inspection and mesh export. Every CSV starts with
//! a `#` line holding the resolved configuration.

mod config;

pub use config::{
    apply_override, presets, BasisConfig, DiscConfig, Generator, KfRuleName, MeshConfig, OutputConfig, ProblemConfig,
    RunConfig, SpaceName,
};

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dgsolver::{
    assemble, build_space, dar_error, l2_error, solve, stability_constants, BvpConfig, DgError, DgSpace, SpaceKind,
};
use crate::mesh2d::{classify_boundary, lshape_tri, unit_square_tri, write_mesh, BoundaryTags, Mesh2D};
use crate::multiindex::{dim_full, dim_qt};
use crate::quadrature::rule_polygon;
use crate::sparsela::{cond2_estimate, CsrMatrix};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<DgError> for ExperimentError {
    fn from(e: DgError) -> Self {
        ExperimentError::Solver(e.into())
    }
}

impl ExperimentError {
    /// Process exit status: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Solver(_) | ExperimentError::Io(_) => 3,
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(e.to_string())
}

/// `log(e_prev / e) / log(h_prev / h)`.
pub fn rate(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}

/// Least-squares slope of `log e` against `log h`.
pub fn lsq_slope(h: &[f64], e: &[f64]) -> Option<f64> {
    if h.len() < 2 {
        return None;
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

/// CSV text with the configuration comment line and a header row.
pub fn to_csv<T: Serialize>(cfg: &RunConfig, rows: &[T]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(io_err)?).map_err(io_err)?;
    Ok(format!("# config: {}\n{body}", cfg.to_json_line()))
}

fn tags(mesh: &Mesh2D, bvp: &BvpConfig) -> BoundaryTags {
    let t = classify_boundary(mesh, &bvp.coeffs.beta, &bvp.neumann_tags, 3);
    for w in &t.warnings {
        warn!("{w}");
    }
    t
}

fn warn_penalty(mesh: &Mesh2D, bvp: &BvpConfig, p: usize) -> Result<(), ExperimentError> {
    let c = stability_constants(mesh, bvp, p)?;
    if c.alpha.is_none() {
        warn!("γ = {} does not exceed γ0 = {:.4e}: coercivity is not guaranteed", bvp.gamma, c.gamma0);
    }
    if !bvp.is_pure_diffusion() && bvp.sigma0 <= 0.0 {
        warn!("σ0 = 0 with advection or reaction present: the stability theory does not apply");
    }
    Ok(())
}

/// One assembled and solved level.
pub struct LevelSolution {
    pub space: DgSpace,
    pub coeffs: Vec<f64>,
    pub tags: BoundaryTags,
    pub bvp: BvpConfig,
}

fn solve_level(
    cfg: &RunConfig,
    mesh: &Arc<Mesh2D>,
    p: usize,
    kind: SpaceKind,
    level: usize,
) -> Result<LevelSolution, ExperimentError> {
    let bvp = cfg.bvp(p)?;
    let tags = tags(mesh, &bvp);
    let space = build_space(mesh.clone(), &bvp, p, kind)?;
    let system = assemble(&space, &bvp, &tags)?;
    dump_matrix(cfg, &system.matrix, p, kind, level)?;
    let coeffs = solve(&system)?;
    Ok(LevelSolution { space, coeffs, tags, bvp })
}

/// Writes `matrix` to `outputs.matrix_dir`, when set.
fn dump_matrix(cfg: &RunConfig, matrix: &CsrMatrix, p: usize, kind: SpaceKind, level: usize) -> Result<(), ExperimentError> {
    let Some(dir) = &cfg.outputs.matrix_dir else { return Ok(()) };
    let path = Path::new(dir).join(format!("p{p}_{}_l{level}.mtx", kind.label()));
    let f = File::create(&path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    matrix.write_matrix_market(BufWriter::new(f)).map_err(io_err)
}

fn grid_of(kinds: &[SpaceName], p: &[usize]) -> Vec<(usize, SpaceKind)> {
    p.iter().flat_map(|&p| kinds.iter().map(move |&k| (p, SpaceKind::from(k)))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub p: usize,
    pub qt: u8,
    pub ndof: usize,
    pub l2error: f64,
    pub dgerror: f64,
    pub rate_l2: Option<f64>,
    pub rate_dg: Option<f64>,
    pub lsq_l2: Option<f64>,
    pub lsq_dg: Option<f64>,
}

/// Errors against the exact solution on every level, for each `(p, space)`.
pub fn convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    let exact = cfg
        .bvp(cfg.disc.p[0])?
        .exact
        .ok_or_else(|| ExperimentError::Config("convergence needs problem.exact".into()))?;
    let meshes = cfg.meshes()?;
    let mut rows = Vec::new();
    for (p, kind) in grid_of(&cfg.disc.spaces, &cfg.disc.p) {
        warn_penalty(&meshes[0], &cfg.bvp(p)?, p)?;
        let mut hs = Vec::new();
        let mut l2s = Vec::new();
        let mut dgs = Vec::new();
        for (level, mesh) in meshes.iter().enumerate() {
            let s = solve_level(cfg, mesh, p, kind, level)?;
            let l2 = l2_error(&s.space, &s.bvp, &s.coeffs, &exact)?;
            let dg = dar_error(&s.space, &s.bvp, &s.tags, &s.coeffs, &exact)?;
            let h = mesh.max_diameter();
            let (rate_l2, rate_dg) = match hs.last() {
                Some(&hp) => (Some(rate(*l2s.last().unwrap(), l2, hp, h)), Some(rate(*dgs.last().unwrap(), dg, hp, h))),
                None => (None, None),
            };
            hs.push(h);
            l2s.push(l2);
            dgs.push(dg);
            rows.push(ConvergenceRow {
                h,
                p,
                qt: u8::from(kind == SpaceKind::QuasiTrefftz),
                ndof: s.space.ndof(),
                l2error: l2,
                dgerror: dg,
                rate_l2,
                rate_dg,
                lsq_l2: lsq_slope(&hs, &l2s),
                lsq_dg: lsq_slope(&hs, &dgs),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondRow {
    pub h: f64,
    pub p: usize,
    pub qt: u8,
    pub ndof: usize,
    pub cond: f64,
    /// Growth rate `log(cond / cond_prev) / log(h_prev / h)`.
    pub eoc_cond: Option<f64>,
}

/// 2-norm condition number estimates of the DG matrix on every level.
pub fn cond(cfg: &RunConfig) -> Result<Vec<CondRow>, ExperimentError> {
    let meshes = cfg.meshes()?;
    let mut rows: Vec<CondRow> = Vec::new();
    for (p, kind) in grid_of(&cfg.disc.spaces, &cfg.disc.p) {
        let bvp = cfg.bvp(p)?;
        let conds = meshes
            .par_iter()
            .enumerate()
            .map(|(level, mesh)| {
                let space = build_space(mesh.clone(), &bvp, p, kind)?;
                let tags = classify_boundary(mesh, &bvp.coeffs.beta, &bvp.neumann_tags, 0);
                let a = assemble(&space, &bvp, &tags)?.matrix;
                dump_matrix(cfg, &a, p, kind, level)?;
                let c = cond2_estimate(&a).map_err(DgError::from)?;
                Ok((mesh.max_diameter(), space.ndof(), c))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        for (j, &(h, ndof, c)) in conds.iter().enumerate() {
            let eoc = (j > 0).then(|| {
                let (hp, _, cp) = conds[j - 1];
                rate(c, cp, hp, h)
            });
            rows.push(CondRow { h, p, qt: u8::from(kind == SpaceKind::QuasiTrefftz), ndof, cond: c, eoc_cond: eoc });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRow {
    pub h: f64,
    pub p: usize,
    pub qt: u8,
    pub ndof: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    /// `||u_h - u_h^{fine}||_{L2}` against the next finer level.
    pub diff_to_finer: Option<f64>,
    pub l2error: Option<f64>,
}

/// Samples of `u_h` on a uniform `n x n` grid over the mesh bounding box,
/// skipping points outside the mesh.
pub fn sample_grid(space: &DgSpace, coeffs: &[f64], n: usize) -> Vec<[f64; 3]> {
    let v = space.mesh.vertices();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for x in v {
        for a in 0..2 {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
            ];
            if let Some(u) = space.eval_at(coeffs, x) {
                out.push([x[0], x[1], u]);
            }
        }
    }
    out
}

/// Extremes of `u_h` over element quadrature points and vertices.
fn extremes(s: &LevelSolution) -> Result<(f64, f64), ExperimentError> {
    let mesh = &s.space.mesh;
    let deg = s.bvp.quad_degree(s.space.p);
    let per = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let poly = mesh.element_points(e);
            let mut pts: Vec<_> = rule_polygon(&poly, deg)?.into_iter().map(|(x, _)| x).collect();
            pts.extend(poly);
            Ok(pts.iter().map(|&x| s.space.eval(e, &s.coeffs, x)).fold((f64::INFINITY, f64::NEG_INFINITY), |a, u| (a.0.min(u), a.1.max(u))))
        })
        .collect::<Result<Vec<_>, DgError>>()?;
    Ok(per.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1))))
}

/// `||u_coarse - u_fine||_{L2}` by quadrature on the finer mesh.
pub fn l2_difference(coarse: &LevelSolution, fine: &LevelSolution) -> Result<f64, ExperimentError> {
    let mesh = &fine.space.mesh;
    let deg = fine.bvp.quad_degree(fine.space.p);
    let parts = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let pts = rule_polygon(&mesh.element_points(e), deg)?;
            let mut acc = 0.0;
            for (x, w) in pts {
                let ce = coarse
                    .space
                    .mesh
                    .locate(x)
                    .ok_or_else(|| DgError::InvalidConfig("finer mesh leaves the coarse domain".into()))?;
                let d = fine.space.eval(e, &fine.coeffs, x) - coarse.space.eval(ce, &coarse.coeffs, x);
                acc += w * d * d;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>, DgError>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// Result of [`solve_study`]: per-level summaries and the finest field of
/// the first `(p, space)` pair.
pub struct SolveReport {
    pub rows: Vec<SolveRow>,
    pub field: Vec<[f64; 3]>,
}

/// Solves on every level for each `(p, space)` and summarises `u_h`.
pub fn solve_study(cfg: &RunConfig) -> Result<SolveReport, ExperimentError> {
    let meshes = cfg.meshes()?;
    let mut rows = Vec::new();
    let mut field = None;
    for (p, kind) in grid_of(&cfg.disc.spaces, &cfg.disc.p) {
        warn_penalty(&meshes[0], &cfg.bvp(p)?, p)?;
        let sols = meshes
            .iter()
            .enumerate()
            .map(|(l, m)| solve_level(cfg, m, p, kind, l))
            .collect::<Result<Vec<_>, _>>()?;
        for (j, s) in sols.iter().enumerate() {
            let (min, max) = extremes(s)?;
            let mut samples: Vec<f64> = sample_grid(&s.space, &s.coeffs, cfg.outputs.grid).iter().map(|r| r[2]).collect();
            samples.sort_by(f64::total_cmp);
            let median = samples.get(samples.len() / 2).copied().unwrap_or(f64::NAN);
            let diff_to_finer = sols.get(j + 1).map(|f| l2_difference(s, f)).transpose()?;
            let l2error = s.bvp.exact.as_ref().map(|u| l2_error(&s.space, &s.bvp, &s.coeffs, u)).transpose()?;
            rows.push(SolveRow {
                h: s.space.mesh.max_diameter(),
                p,
                qt: u8::from(kind == SpaceKind::QuasiTrefftz),
                ndof: s.space.ndof(),
                min,
                max,
                median,
                diff_to_finer,
                l2error,
            });
        }
        if field.is_none() {
            let s = sols.last().expect("at least one level");
            field = Some(sample_grid(&s.space, &s.coeffs, cfg.outputs.grid));
        }
    }
    Ok(SolveReport { rows, field: field.unwrap_or_default() })
}

/// Field samples as `x,y,u_h` CSV.
pub fn field_csv(cfg: &RunConfig, field: &[[f64; 3]]) -> Result<String, ExperimentError> {
    #[derive(Serialize)]
    struct Sample {
        x: f64,
        y: f64,
        u_h: f64,
    }
    let rows: Vec<Sample> = field.iter().map(|r| Sample { x: r[0], y: r[1], u_h: r[2] }).collect();
    to_csv(cfg, &rows)
}

/// Dimension table for `(d, p, m)` triples, plus per-element residual
/// maxima and optional coefficient dumps for the configured problem.
pub fn basis_report(cfg: &RunConfig) -> Result<String, ExperimentError> {
    let b = cfg.basis.clone().unwrap_or(BasisConfig { dims: vec![], dump_elements: vec![] });
    let mut out = String::new();
    let _ = writeln!(out, "# config: {}", cfg.to_json_line());
    let _ = writeln!(out, "d,p,m,dim_qt,dim_full,ratio");
    for &[d, p, m] in &b.dims {
        let q = dim_qt(d, p, m).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let f = dim_full(d, p);
        let _ = writeln!(out, "{d},{p},{m},{q},{f},{:.2}", f as f64 / q as f64);
    }
    let p = cfg.disc.p[0];
    let bvp = cfg.bvp(p)?;
    let mesh = Arc::new(cfg.base_mesh()?);
    let space = build_space(mesh, &bvp, p, SpaceKind::QuasiTrefftz)?;
    let res = space.max_residual(&bvp)?;
    let _ = writeln!(out, "element,residual");
    for (e, r) in res.iter().enumerate() {
        let _ = writeln!(out, "{e},{r:.3e}");
    }
    for &e in &b.dump_elements {
        let el = space
            .elements
            .get(e)
            .ok_or_else(|| ExperimentError::Config(format!("element {e} out of range")))?;
        for (i, f) in el.basis.iter().enumerate() {
            let _ = writeln!(out, "# element {e} basis {i}");
            out.push_str(&f.dump());
        }
        if let Some(l) = &el.lifting {
            let _ = writeln!(out, "# element {e} lifting");
            out.push_str(&l.dump());
        }
    }
    Ok(out)
}

/// Mesh file text for a built-in generator.
pub fn mesh_text(generator: Generator, n: usize) -> Result<String, ExperimentError> {
    let mesh = match generator {
        Generator::UnitSquare if n > 0 => unit_square_tri(n),
        Generator::UnitSquare => return Err(ExperimentError::Config("n must be positive".into())),
        Generator::Lshape => lshape_tri(n).map_err(|e| ExperimentError::Config(e.to_string()))?,
        Generator::File => return Err(ExperimentError::Config("'file' is not a generator".into())),
    };
    Ok(write_mesh(&mesh))
}
