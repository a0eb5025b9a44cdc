//! Norms, errors and checks of the discrete stability theory.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::assemble::{facet_points, penalty, spectral_norm};
use super::{assemble, assemble_gram, BvpConfig, DgError, DgSpace, PointCoeffs};
use crate::coeffjet::{jet_eval, Expr};
use crate::mesh2d::{quality, BcKind, BoundaryTags, FacetSide, Mesh2D};
use crate::multiindex::GradedIndex;
use crate::poly::ScaledMonomialPoly;
use crate::quadrature::{rule_polygon, segment_points, Point};

fn sq(x: f64) -> f64 {
    x * x
}

/// `||u - u_h||_{L2}` with the space's quadrature.
pub fn l2_error(space: &DgSpace, bvp: &BvpConfig, coeffs: &[f64], exact: &Expr) -> Result<f64, DgError> {
    let deg = bvp.quad_degree(space.p);
    let parts = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let pts = rule_polygon(&space.mesh.element_points(e), deg)?;
            Ok(pts.iter().map(|&(x, w)| w * sq(exact.eval(&x) - space.eval(e, coeffs, x))).sum::<f64>())
        })
        .collect::<Result<Vec<f64>, DgError>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// dar-norm of a broken field given element-wise as `field(e, x) = (v, ∇v)`.
pub fn dar_norm_field<F>(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags, field: F) -> Result<f64, DgError>
where
    F: Fn(usize, Point) -> (f64, Point) + Sync,
{
    let deg = bvp.quad_degree(space.p);
    let sigma0 = bvp.norm_sigma0();
    let mesh = &space.mesh;
    let field = &field;
    let volume = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let pts = rule_polygon(&mesh.element_points(e), deg)?;
            Ok(pts
                .iter()
                .map(|&(x, w)| {
                    let (v, g) = field(e, x);
                    let k = bvp.at(x).k;
                    let kg = [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]];
                    w * (kg[0] * g[0] + kg[1] * g[1] + sigma0 * v * v)
                })
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>, DgError>>()?;
    let facets = (0..mesh.facets().len())
        .into_par_iter()
        .map(|f| {
            let facet = &mesh.facets()[f];
            let pts = facet_points(space, bvp, f)?;
            let coeffs: Vec<PointCoeffs> = pts.iter().map(|(x, _)| bvp.at(*x)).collect();
            let pen = penalty(bvp, facet.length, &coeffs);
            let (jump_weight, jump): (f64, Box<dyn Fn(Point) -> f64 + '_>) = match facet.side {
                FacetSide::Interior { left, right } => {
                    (pen, Box::new(move |x| field(left, x).0 - field(right, x).0))
                }
                FacetSide::Boundary { element, .. } => {
                    let bc = tags.get(f).ok_or_else(|| DgError::InconsistentTags(format!("facet {f} unclassified")))?;
                    let w = if bc.kind == BcKind::Dirichlet { pen } else { 0.0 };
                    (w, Box::new(move |x| field(element, x).0))
                }
            };
            Ok(pts
                .iter()
                .zip(&coeffs)
                .map(|(&(x, w), c)| {
                    let bn = (c.beta[0] * facet.normal[0] + c.beta[1] * facet.normal[1]).abs();
                    w * (jump_weight + 0.5 * bn) * sq(jump(x))
                })
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>, DgError>>()?;
    Ok((volume.iter().sum::<f64>() + facets.iter().sum::<f64>()).sqrt())
}

/// dar-norm of the discrete function `Σ c_i φ_i` (lifting excluded).
pub fn dar_norm(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags, coeffs: &[f64]) -> Result<f64, DgError> {
    dar_norm_field(space, bvp, tags, |e, x| {
        let el = &space.elements[e];
        let local = &coeffs[space.offsets[e]..space.offsets[e + 1]];
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (c, b) in local.iter().zip(&el.basis) {
            let bg = b.eval_grad(&x);
            v += c * b.eval(&x);
            g[0] += c * bg[0];
            g[1] += c * bg[1];
        }
        (v, g)
    })
}

/// `|||u - u_h|||` with the lifting included in `u_h`. On boundary facets
/// the jump is the trace of `u - u_h`.
pub fn dar_error(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags, coeffs: &[f64], exact: &Expr) -> Result<f64, DgError> {
    dar_norm_field(space, bvp, tags, |e, x| {
        let (uh, gh) = space.eval_with_grad(e, coeffs, x);
        let j = jet_eval(exact, &x, 1).expect("exact solution evaluates");
        let c = j.coeffs();
        (c[0] - uh, [c[1] - gh[0], c[2] - gh[1]])
    })
}

/// Constants of the coercivity and continuity estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    pub k_max: f64,
    pub beta_max: f64,
    pub sigma_max: f64,
    pub n_partial: usize,
    pub r_star: f64,
    /// Penalty threshold `γ0`.
    pub gamma0: f64,
    /// Coercivity constant `1 - sqrt(γ0/γ)`, when `γ > γ0`.
    pub alpha: Option<f64>,
    /// Continuity constant, when `σ0 > 0`.
    pub continuity: Option<f64>,
}

/// Sup norms are sampled at the element quadrature points.
pub fn stability_constants(mesh: &Mesh2D, bvp: &BvpConfig, p: usize) -> Result<StabilityConstants, DgError> {
    let q = quality(mesh)?;
    let deg = bvp.quad_degree(p);
    let stats = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let pts = rule_polygon(&mesh.element_points(e), deg)?;
            Ok(pts.iter().fold([0.0f64; 3], |acc, &(x, _)| {
                let c = bvp.at(x);
                [acc[0].max(spectral_norm(&c.k)), acc[1].max(c.beta[0].hypot(c.beta[1])), acc[2].max(c.sigma.abs())]
            }))
        })
        .collect::<Result<Vec<[f64; 3]>, DgError>>()?;
    let [k_max, beta_max, sigma_max] =
        stats.iter().fold([0.0f64; 3], |a, s| [a[0].max(s[0]), a[1].max(s[1]), a[2].max(s[2])]);
    let d = 2.0;
    let kmin = bvp.k_min;
    let gamma0 = sq(k_max) / sq(kmin) * q.n_partial as f64 * (p as f64 + 1.0) * (p as f64 + d) / q.r_star;
    let alpha = (bvp.gamma > gamma0).then(|| 1.0 - (gamma0 / bvp.gamma).sqrt());
    let s0 = bvp.sigma0;
    let continuity = (s0 > 0.0)
        .then(|| 5.0 + beta_max / (kmin * s0).sqrt() + sigma_max / s0 + (k_max / (bvp.gamma * kmin)).sqrt());
    Ok(StabilityConstants { k_max, beta_max, sigma_max, n_partial: q.n_partial, r_star: q.r_star, gamma0, alpha, continuity })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    /// Smallest `v^T A v / |||v|||^2` over the random samples.
    pub min_sampled: f64,
    pub samples: usize,
}

/// Samples the coercivity ratio on random coefficient vectors.
pub fn coercivity_probe(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags, samples: usize, seed: u64) -> Result<CoercivityReport, DgError> {
    let a = assemble(space, bvp, tags)?.matrix;
    let g = assemble_gram(space, bvp, tags)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.ndof();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let av: f64 = a.matvec(&v).iter().zip(&v).map(|(x, y)| x * y).sum();
        let gv: f64 = g.matvec(&v).iter().zip(&v).map(|(x, y)| x * y).sum();
        worst = worst.min(av / gv);
    }
    Ok(CoercivityReport { min_sampled: worst, samples })
}

/// Smallest generalized eigenvalue of `(A + A^T)/2` against the dar-norm
/// Gram matrix, i.e. the exact discrete coercivity constant. Dense; meant
/// for small spaces.
pub fn dense_coercivity(space: &DgSpace, bvp: &BvpConfig, tags: &BoundaryTags) -> Result<f64, DgError> {
    let a = assemble(space, bvp, tags)?.matrix.to_dense();
    let g = assemble_gram(space, bvp, tags)?.to_dense();
    let s = (&a + a.transpose()) * 0.5;
    let g = (&g + g.transpose()) * 0.5;
    let chol = g
        .cholesky()
        .ok_or_else(|| DgError::InvalidConfig("dar-norm Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| DgError::InvalidConfig("singular Cholesky factor".into()))?;
    let m = &linv * s * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// For element `e`: the largest `h_E ||v||^2_{∂E} / ||v||^2_E` over
/// polynomials of degree `p`, divided by `(p+1)(p+2) h_E / ρ_E`. At most
/// one when the trace inequality holds.
pub fn trace_inequality_ratio(mesh: &Mesh2D, e: usize, p: usize) -> Result<f64, DgError> {
    let g = mesh.geometry(e);
    let index = GradedIndex::new(2, p);
    let n = index.len();
    let basis: Vec<ScaledMonomialPoly> = index
        .indices()
        .iter()
        .map(|k| ScaledMonomialPoly::monomial(g.centroid.to_vec(), g.diameter, p, k))
        .collect();
    let gram = |pts: &[(Point, f64)]| {
        let mut m: DMatrix<f64> = DMatrix::zeros(n, n);
        for &(x, w) in pts {
            let vals: Vec<f64> = basis.iter().map(|b| b.eval(&x)).collect();
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += w * vals[i] * vals[j];
                }
            }
        }
        m
    };
    let poly = mesh.element_points(e);
    let mass = gram(&rule_polygon(&poly, 2 * p)?);
    let mut edge_pts = Vec::new();
    for i in 0..poly.len() {
        edge_pts.extend(segment_points(poly[i], poly[(i + 1) % poly.len()], 2 * p)?);
    }
    let trace = gram(&edge_pts);
    let l = mass
        .cholesky()
        .ok_or_else(|| DgError::InvalidConfig(format!("element {e}: singular mass matrix")))?
        .l();
    let linv = l.try_inverse().ok_or_else(|| DgError::InvalidConfig("singular factor".into()))?;
    let m: DMatrix<f64> = &linv * trace * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let lmax = SymmetricEigen::new(m).eigenvalues.iter().copied().fold(0.0, f64::max);
    let rho = crate::mesh2d::inradius(&poly).ok_or(crate::mesh2d::MeshError::NonConvexElement(e))?;
    let bound = (p as f64 + 1.0) * (p as f64 + 2.0) / (rho / g.diameter);
    Ok(lmax * g.diameter / bound)
}

/// Both sides of the broken integration-by-parts identity for facet
/// integrals: `Σ_E ∮ w·n_E φ` and
/// `Σ_I ∫ ({w}·[φ] + [w]{φ}) + ∫_{∂Ω} w·n φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagicAudit {
    pub elementwise: f64,
    pub facetwise: f64,
}

/// Uses random element-wise polynomials of degree `degree` for `w` and `φ`.
pub fn magic_formula_audit(mesh: &Mesh2D, degree: usize, seed: u64) -> Result<MagicAudit, DgError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = GradedIndex::new(2, degree).len();
    let mut random = |e: usize| {
        let g = mesh.geometry(e);
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        ScaledMonomialPoly::new(g.centroid.to_vec(), g.diameter, degree, coeffs)
    };
    let fields: Vec<[ScaledMonomialPoly; 3]> = (0..mesh.num_elements()).map(|e| [random(e), random(e), random(e)]).collect();
    let eval = |e: usize, x: Point| {
        let f = &fields[e];
        ([f[0].eval(&x), f[1].eval(&x)], f[2].eval(&x))
    };
    let deg = 2 * degree + 1;
    let mut elementwise = 0.0;
    for e in 0..mesh.num_elements() {
        for &f in mesh.element_facets(e) {
            let facet = &mesh.facets()[f];
            let ne = mesh.normal_from(f, e);
            let v = mesh.vertices();
            for (x, w) in segment_points(v[facet.vertices[0]], v[facet.vertices[1]], deg)? {
                let (wv, phi) = eval(e, x);
                elementwise += w * (wv[0] * ne[0] + wv[1] * ne[1]) * phi;
            }
        }
    }
    let mut facetwise = 0.0;
    for facet in mesh.facets() {
        let v = mesh.vertices();
        let nf = facet.normal;
        for (x, w) in segment_points(v[facet.vertices[0]], v[facet.vertices[1]], deg)? {
            match facet.side {
                FacetSide::Interior { left, right } => {
                    let (w1, p1) = eval(left, x);
                    let (w2, p2) = eval(right, x);
                    let avg_w = [0.5 * (w1[0] + w2[0]), 0.5 * (w1[1] + w2[1])];
                    let jump_phi = [(p1 - p2) * nf[0], (p1 - p2) * nf[1]];
                    let jump_w = (w1[0] - w2[0]) * nf[0] + (w1[1] - w2[1]) * nf[1];
                    let avg_phi = 0.5 * (p1 + p2);
                    facetwise += w * (avg_w[0] * jump_phi[0] + avg_w[1] * jump_phi[1] + jump_w * avg_phi);
                }
                FacetSide::Boundary { element, .. } => {
                    let (wv, phi) = eval(element, x);
                    facetwise += w * (wv[0] * nf[0] + wv[1] * nf[1]) * phi;
                }
            }
        }
    }
    Ok(MagicAudit { elementwise, facetwise })
}

/// `({β φ}·n_F + ½|β·n_F|(φ1 - φ2), (β·n_F) φ_upwind)` for traces `φ1`
/// (on the side `n_F` points away from) and `φ2`.
pub fn upwind_sides(beta: Point, normal: Point, phi1: f64, phi2: f64) -> (f64, f64) {
    let bn = beta[0] * normal[0] + beta[1] * normal[1];
    let centered = 0.5 * bn * (phi1 + phi2) + 0.5 * bn.abs() * (phi1 - phi2);
    let upwind = bn * if bn >= 0.0 { phi1 } else { phi2 };
    (centered, upwind)
}

/// Checks the averaged-plus-jump flux against the upwind flux on `trials`
/// random traces for the given `β` and unit normal.
pub fn upwind_identity_check(beta: Point, normal: Point, trials: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).all(|_| {
        let (p1, p2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (a, b) = upwind_sides(beta, normal, p1, p2);
        let scale = (beta[0].abs() + beta[1].abs()) * (p1.abs() + p2.abs()).max(1.0);
        (a - b).abs() <= 4.0 * f64::EPSILON * scale
    })
}
