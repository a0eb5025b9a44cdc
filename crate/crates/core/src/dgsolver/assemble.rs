use rayon::prelude::*;

use super::{BvpConfig, DgError, DgSpace, KfRule, PointCoeffs, Table};
use crate::mesh2d::{BcKind, BoundaryTags, FacetSide};
use crate::quadrature::{rule_polygon, segment_points, Point};
use crate::sparsela::{self, CsrMatrix};

/// Assembled linear system `A x = b` over the trial degrees of freedom.
/// With a lifting, `b` already contains `-A(u_f, v)`.
#[derive(Debug, Clone)]
pub struct DgSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Which bilinear form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    /// Diffusion plus advection-reaction operator with its load vector.
    Operator,
    /// Gram matrix of the dar-norm.
    Gram,
}

/// Local contributions: matrix triplets and load entries in global numbering.
#[derive(Default)]
struct Local {
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<(usize, f64)>,
}

impl Local {
    /// Scatters a block `block[t][s]` (test `t`, trial `s`); a trailing
    /// trial column is the lifting and moves to the right-hand side.
    fn scatter(&mut self, block: &[Vec<f64>], row0: usize, col0: usize, ntrial: usize) {
        for (t, row) in block.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                if s < ntrial {
                    self.triplets.push((row0 + t, col0 + s, v));
                } else {
                    self.rhs.push((row0 + t, -v));
                }
            }
        }
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn kmul(k: &[[f64; 2]; 2], g: Point) -> Point {
    [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]]
}

/// Spectral norm of a symmetric 2x2 matrix.
pub(crate) fn spectral_norm(k: &[[f64; 2]; 2]) -> f64 {
    let a = k[0][0];
    let d = k[1][1];
    let b = 0.5 * (k[0][1] + k[1][0]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean + rad).abs().max((mean - rad).abs())
}

fn grad(t: &Table, i: usize, q: usize) -> Point {
    [t.grad[0][(i, q)], t.grad[1][(i, q)]]
}

/// Facet quadrature points of facet `f`.
pub(crate) fn facet_points(space: &DgSpace, bvp: &BvpConfig, f: usize) -> Result<Vec<(Point, f64)>, DgError> {
    let facet = &space.mesh.facets()[f];
    let v = space.mesh.vertices();
    Ok(segment_points(v[facet.vertices[0]], v[facet.vertices[1]], bvp.quad_degree(space.p))?)
}

/// `γ K_F / h_F` on facet `f`.
pub(crate) fn penalty(bvp: &BvpConfig, f_len: f64, coeffs: &[PointCoeffs]) -> f64 {
    let kf = match bvp.kf_rule {
        KfRule::ConstantKmin => bvp.k_min,
        KfRule::PerFacetMax => coeffs.iter().map(|c| spectral_norm(&c.k)).fold(bvp.k_min, f64::max),
    };
    bvp.gamma * kf / f_len
}

fn element_block(space: &DgSpace, bvp: &BvpConfig, e: usize, form: Form) -> Result<Local, DgError> {
    let el = &space.elements[e];
    let pts = rule_polygon(&space.mesh.element_points(e), bvp.quad_degree(space.p))?;
    let xs: Vec<Point> = pts.iter().map(|(x, _)| *x).collect();
    let with_lift = form == Form::Operator;
    let tab = el.table(space.index(), &xs, with_lift);
    let nb = el.len();
    let nt = tab.vals.nrows();
    let sigma0 = bvp.norm_sigma0();
    let mut block = vec![vec![0.0; nt]; nb];
    let mut local = Local::default();
    let row0 = space.offsets[e];
    for (q, &(x, w)) in pts.iter().enumerate() {
        let c = bvp.at(x);
        let f = if form == Form::Operator { bvp.source_at(x)? } else { 0.0 };
        for s in 0..nt {
            let ws = tab.vals[(s, q)];
            let kg = kmul(&c.k, grad(&tab, s, q));
            let flux = match form {
                Form::Operator => [kg[0] - c.beta[0] * ws, kg[1] - c.beta[1] * ws],
                Form::Gram => kg,
            };
            let react = match form {
                Form::Operator => c.sigma * ws,
                Form::Gram => sigma0 * ws,
            };
            for (t, row) in block.iter_mut().enumerate() {
                row[s] += w * (dot(flux, grad(&tab, t, q)) + react * tab.vals[(t, q)]);
            }
        }
        if f != 0.0 {
            for t in 0..nb {
                local.rhs.push((row0 + t, w * f * tab.vals[(t, q)]));
            }
        }
    }
    local.scatter(&block, row0, row0, nb);
    Ok(local)
}

fn facet_block(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags, f: usize, form: Form) -> Result<Local, DgError> {
    let mesh = &space.mesh;
    let facet = &mesh.facets()[f];
    let n = facet.normal;
    let pts = facet_points(space, bvp, f)?;
    let xs: Vec<Point> = pts.iter().map(|(x, _)| *x).collect();
    let coeffs: Vec<PointCoeffs> = xs.iter().map(|&x| bvp.at(x)).collect();
    let pen = penalty(bvp, facet.length, &coeffs);
    let with_lift = form == Form::Operator;
    let mut local = Local::default();
    match facet.side {
        FacetSide::Interior { left, right } => {
            let sides = [left, right];
            let tabs = [
                space.elements[left].table(space.index(), &xs, with_lift),
                space.elements[right].table(space.index(), &xs, with_lift),
            ];
            let sign = [1.0, -1.0];
            for t in 0..2 {
                let nb = space.elements[sides[t]].len();
                for s in 0..2 {
                    let nt = tabs[s].vals.nrows();
                    let mut block = vec![vec![0.0; nt]; nb];
                    for (q, &(_, w)) in pts.iter().enumerate() {
                        let c = &coeffs[q];
                        let bn = dot(c.beta, n);
                        let st = sign[s] * sign[t];
                        for j in 0..nt {
                            let ws = tabs[s].vals[(j, q)];
                            let kgs = dot(kmul(&c.k, grad(&tabs[s], j, q)), n);
                            for (i, row) in block.iter_mut().enumerate() {
                                let vt = tabs[t].vals[(i, q)];
                                let val = match form {
                                    Form::Operator => {
                                        let kgt = dot(kmul(&c.k, grad(&tabs[t], i, q)), n);
                                        -0.5 * kgs * sign[t] * vt - 0.5 * sign[s] * ws * kgt
                                            + (pen + 0.5 * bn.abs()) * st * ws * vt
                                            + 0.5 * bn * ws * sign[t] * vt
                                    }
                                    Form::Gram => (pen + 0.5 * bn.abs()) * st * ws * vt,
                                };
                                row[j] += w * val;
                            }
                        }
                    }
                    let ntrial = space.elements[sides[s]].len();
                    local.scatter(&block, space.offsets[sides[t]], space.offsets[sides[s]], ntrial);
                }
            }
        }
        FacetSide::Boundary { element, .. } => {
            let bc = tags
                .get(f)
                .ok_or_else(|| DgError::InconsistentTags(format!("boundary facet {f} has no classification")))?;
            let el = &space.elements[element];
            let tab = el.table(space.index(), &xs, with_lift);
            let nb = el.len();
            let nt = tab.vals.nrows();
            let row0 = space.offsets[element];
            let dirichlet = bc.kind == BcKind::Dirichlet;
            let mut block = vec![vec![0.0; nt]; nb];
            for (q, &(x, w)) in pts.iter().enumerate() {
                let c = &coeffs[q];
                let bn = dot(c.beta, n);
                for j in 0..nt {
                    let ws = tab.vals[(j, q)];
                    let kgs = dot(kmul(&c.k, grad(&tab, j, q)), n);
                    for (i, row) in block.iter_mut().enumerate() {
                        let vt = tab.vals[(i, q)];
                        let mut val = 0.0;
                        match form {
                            Form::Operator => {
                                if dirichlet {
                                    let kgt = dot(kmul(&c.k, grad(&tab, i, q)), n);
                                    val += -kgs * vt - ws * kgt + pen * ws * vt;
                                }
                                if !bc.inflow {
                                    val += bn * ws * vt;
                                }
                            }
                            Form::Gram => {
                                if dirichlet {
                                    val += pen * ws * vt;
                                }
                                val += 0.5 * bn.abs() * ws * vt;
                            }
                        }
                        row[j] += w * val;
                    }
                }
                if form == Form::Operator {
                    for i in 0..nb {
                        let vt = tab.vals[(i, q)];
                        let mut load = 0.0;
                        if dirichlet {
                            let g = bvp.g_dirichlet.eval(&x);
                            let kgt = dot(kmul(&c.k, grad(&tab, i, q)), n);
                            load += g * (-kgt + pen * vt);
                            if bc.inflow {
                                load -= g * bn * vt;
                            }
                        } else {
                            load -= bvp.neumann_at(x, n)? * vt;
                        }
                        if load != 0.0 {
                            local.rhs.push((row0 + i, w * load));
                        }
                    }
                }
            }
            local.scatter(&block, row0, row0, nb);
        }
    }
    Ok(local)
}

fn assemble_form(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags, form: Form) -> Result<DgSystem, DgError> {
    if tags.facets.len() != space.mesh.facets().len() {
        return Err(DgError::InconsistentTags(format!(
            "{} classifications for {} facets",
            tags.facets.len(),
            space.mesh.facets().len()
        )));
    }
    let elements = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| element_block(space, bvp, e, form))
        .collect::<Result<Vec<_>, _>>()?;
    let facets = (0..space.mesh.facets().len())
        .into_par_iter()
        .map(|f| facet_block(space, bvp, tags, f, form))
        .collect::<Result<Vec<_>, _>>()?;
    let n = space.ndof();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for l in elements.iter().chain(&facets) {
        triplets.extend_from_slice(&l.triplets);
        for &(i, v) in &l.rhs {
            rhs[i] += v;
        }
    }
    Ok(DgSystem { matrix: CsrMatrix::from_triplets(n, &triplets), rhs })
}

/// Assembles the DG operator and right-hand side. The result is the same
/// for any thread count.
pub fn assemble(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags) -> Result<DgSystem, DgError> {
    assemble_form(space, bvp, tags, Form::Operator)
}

/// Gram matrix `G` with `v^T G v = |||v|||^2` for discrete `v` (no lifting).
pub fn assemble_gram(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags) -> Result<CsrMatrix, DgError> {
    Ok(assemble_form(space, bvp, tags, Form::Gram)?.matrix)
}

/// Solves the assembled system for the trial coefficients.
pub fn solve(system: &DgSystem) -> Result<Vec<f64>, DgError> {
    Ok(sparsela::solve(&system.matrix, &system.rhs)?)
}
