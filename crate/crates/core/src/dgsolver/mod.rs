//! SIPG + upwind discontinuous Galerkin discretisation of
//! `div(-K ∇u + β u) + σ u = f` on 2D polygonal meshes, with quasi-Trefftz
//! or full polynomial local spaces.

mod analysis;
mod assemble;

pub use analysis::{
    coercivity_probe, dar_error, dar_norm, dar_norm_field, dense_coercivity, l2_error, magic_formula_audit,
    stability_constants, trace_inequality_ratio, upwind_identity_check, upwind_sides, CoercivityReport,
    MagicAudit, StabilityConstants,
};
pub use assemble::{assemble, assemble_gram, solve, DgSystem};

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::coeffjet::{jet_eval, Expr, ExprError};
use crate::mesh2d::{Mesh2D, MeshError};
use crate::multiindex::GradedIndex;
use crate::poly::{monomial_grads_at, monomials_at, ScaledMonomialPoly};
use crate::qtrefftz::{dar_to_alpha, manufactured_source_jet, qt_basis, qt_particular, qt_residual, DarCoefficients, QtError};
use crate::quadrature::{Point, QuadError};
use crate::sparsela::LinAlgError;

#[derive(Debug, Error)]
pub enum DgError {
    #[error(transparent)]
    Qt(#[from] QtError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid problem: {0}")]
    InvalidConfig(String),
    #[error("inconsistent boundary tags: {0}")]
    InconsistentTags(String),
}

/// How the facet diffusion weight `K_F` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KfRule {
    /// `K_F = k_min` on every facet.
    ConstantKmin,
    /// Largest `|K|_2` sampled on the facet, but at least `k_min`.
    PerFacetMax,
}

/// Source term `f`.
#[derive(Debug, Clone)]
pub enum Source {
    Zero,
    Expr(Expr),
    /// `f := L u` for the exact solution, evaluated by jets.
    Manufactured,
}

/// Neumann data `g_N = -K ∇u · n`.
#[derive(Debug, Clone)]
pub enum NeumannData {
    Expr(Expr),
    /// Computed from the exact solution.
    FromExact,
}

#[derive(Debug, Clone)]
pub struct BvpConfig {
    pub coeffs: DarCoefficients,
    pub source: Source,
    pub g_dirichlet: Expr,
    pub g_neumann: NeumannData,
    pub exact: Option<Expr>,
    pub gamma: f64,
    pub kf_rule: KfRule,
    pub k_min: f64,
    /// Lower bound of `σ + div β / 2`; only used when `β` or `σ` is non-zero.
    pub sigma0: f64,
    /// Boundary tags carrying Neumann conditions; all others are Dirichlet.
    pub neumann_tags: Vec<u32>,
    /// Extra quadrature degree on top of `2p + 2`.
    pub quad_bump: usize,
}

/// Coefficient values at one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointCoeffs {
    pub k: [[f64; 2]; 2],
    pub beta: Point,
    pub sigma: f64,
}

impl BvpConfig {
    /// Checks the penalty, ellipticity bound and symmetry of `K` at `points`.
    pub fn validate(&self, points: &[Point]) -> Result<(), DgError> {
        if self.coeffs.dim() != 2 {
            return Err(DgError::InvalidConfig("the DG solver is two-dimensional".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(DgError::InvalidConfig(format!("penalty γ = {} must be positive", self.gamma)));
        }
        if !(self.k_min > 0.0) {
            return Err(DgError::InvalidConfig(format!("k_min = {} must be positive", self.k_min)));
        }
        if self.sigma0 < 0.0 {
            return Err(DgError::InvalidConfig(format!("σ0 = {} must be non-negative", self.sigma0)));
        }
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        let asym = self.coeffs.asymmetry(&pts);
        if asym > 1e-12 {
            return Err(DgError::InvalidConfig(format!("K is not symmetric (|K12 - K21| = {asym:e})")));
        }
        if matches!(self.source, Source::Manufactured) && self.exact.is_none() {
            return Err(DgError::InvalidConfig("manufactured source requires an exact solution".into()));
        }
        if matches!(self.g_neumann, NeumannData::FromExact) && !self.neumann_tags.is_empty() && self.exact.is_none() {
            return Err(DgError::InvalidConfig("Neumann data from the exact solution requires one".into()));
        }
        Ok(())
    }

    pub(crate) fn at(&self, x: Point) -> PointCoeffs {
        let c = &self.coeffs;
        PointCoeffs {
            k: [[c.k[0][0].eval(&x), c.k[0][1].eval(&x)], [c.k[1][0].eval(&x), c.k[1][1].eval(&x)]],
            beta: [c.beta[0].eval(&x), c.beta[1].eval(&x)],
            sigma: c.sigma.eval(&x),
        }
    }

    pub(crate) fn source_at(&self, x: Point) -> Result<f64, DgError> {
        Ok(match &self.source {
            Source::Zero => 0.0,
            Source::Expr(f) => f.eval(&x),
            Source::Manufactured => {
                crate::qtrefftz::manufactured_source(&self.coeffs, self.exact.as_ref().expect("validated"), &x)?
            }
        })
    }

    pub(crate) fn neumann_at(&self, x: Point, n: Point) -> Result<f64, DgError> {
        match &self.g_neumann {
            NeumannData::Expr(g) => Ok(g.eval(&x)),
            NeumannData::FromExact => {
                let u = self.exact.as_ref().ok_or_else(|| DgError::InvalidConfig("Neumann data needs an exact solution".into()))?;
                let j = jet_eval(u, &x, 1)?;
                let g = [j.coeffs()[1], j.coeffs()[2]];
                let k = self.at(x).k;
                let kg = [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]];
                Ok(-(kg[0] * n[0] + kg[1] * n[1]))
            }
        }
    }

    /// True when neither `β` nor `σ` is present, so the `σ0` norm term is dropped.
    pub fn is_pure_diffusion(&self) -> bool {
        self.coeffs.beta.iter().all(Expr::is_zero) && self.coeffs.sigma.is_zero()
    }

    /// `σ0` as used in the dar-norm.
    pub fn norm_sigma0(&self) -> f64 {
        if self.is_pure_diffusion() {
            0.0
        } else {
            self.sigma0
        }
    }

    pub fn quad_degree(&self, p: usize) -> usize {
        2 * p + 2 + self.quad_bump
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    QuasiTrefftz,
    FullPoly,
}

impl SpaceKind {
    pub fn label(self) -> &'static str {
        match self {
            SpaceKind::QuasiTrefftz => "qt",
            SpaceKind::FullPoly => "full",
        }
    }
}

/// Local space on one element: basis functions as rows of monomial
/// coefficients, plus the optional lifting.
#[derive(Debug, Clone)]
pub struct ElementSpace {
    pub center: Point,
    pub scale: f64,
    pub basis: Vec<ScaledMonomialPoly>,
    /// `basis.len() x dim_full` coefficients in scaled monomials.
    pub coeffs: DMatrix<f64>,
    pub lifting: Option<ScaledMonomialPoly>,
}

/// Values and gradients of a set of functions at quadrature points:
/// `vals[(i, q)]`, `grad[a][(i, q)]`.
pub(crate) struct Table {
    pub vals: DMatrix<f64>,
    pub grad: [DMatrix<f64>; 2],
}

impl ElementSpace {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Table of basis functions (and the lifting as a last row, if
    /// `with_lift` and present) at `points`.
    pub(crate) fn table(&self, index: &GradedIndex, points: &[Point], with_lift: bool) -> Table {
        let nfull = index.len();
        let nq = points.len();
        let mut mono = DMatrix::zeros(nfull, nq);
        let mut mgx = DMatrix::zeros(nfull, nq);
        let mut mgy = DMatrix::zeros(nfull, nq);
        let mut buf = vec![0.0; nfull];
        let mut gbuf = vec![0.0; 2 * nfull];
        for (q, x) in points.iter().enumerate() {
            let s = [(x[0] - self.center[0]) / self.scale, (x[1] - self.center[1]) / self.scale];
            monomials_at(index, &s, &mut buf);
            monomial_grads_at(index, &s, &mut gbuf);
            for k in 0..nfull {
                mono[(k, q)] = buf[k];
                mgx[(k, q)] = gbuf[k] / self.scale;
                mgy[(k, q)] = gbuf[nfull + k] / self.scale;
            }
        }
        let lift = self.lifting.as_ref().filter(|_| with_lift);
        let coeffs = match lift {
            Some(l) => {
                let mut c = self.coeffs.clone().insert_row(self.len(), 0.0);
                for k in 0..nfull {
                    c[(self.len(), k)] = l.coeffs()[k];
                }
                c
            }
            None => self.coeffs.clone(),
        };
        Table { vals: &coeffs * mono, grad: [&coeffs * mgx, &coeffs * mgy] }
    }
}

#[derive(Debug, Clone)]
pub struct DgSpace {
    pub mesh: Arc<Mesh2D>,
    pub p: usize,
    pub kind: SpaceKind,
    pub elements: Vec<ElementSpace>,
    /// Element-major global numbering: element `e` owns
    /// `offsets[e]..offsets[e + 1]`.
    pub offsets: Vec<usize>,
    index: Arc<GradedIndex>,
}

impl DgSpace {
    pub fn ndof(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn index(&self) -> &GradedIndex {
        &self.index
    }

    pub fn has_lifting(&self) -> bool {
        self.elements.iter().any(|e| e.lifting.is_some())
    }

    /// `u_h(x)` on element `e` from global coefficients, lifting included.
    pub fn eval(&self, e: usize, coeffs: &[f64], x: Point) -> f64 {
        self.eval_with_grad(e, coeffs, x).0
    }

    pub fn eval_with_grad(&self, e: usize, coeffs: &[f64], x: Point) -> (f64, Point) {
        let el = &self.elements[e];
        let local = &coeffs[self.offsets[e]..self.offsets[e + 1]];
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (c, b) in local.iter().zip(&el.basis) {
            let bg = b.eval_grad(&x);
            v += c * b.eval(&x);
            g[0] += c * bg[0];
            g[1] += c * bg[1];
        }
        if let Some(l) = &el.lifting {
            let lg = l.eval_grad(&x);
            v += l.eval(&x);
            g[0] += lg[0];
            g[1] += lg[1];
        }
        (v, g)
    }

    /// `u_h(x)` at an arbitrary point, or `None` outside the mesh.
    pub fn eval_at(&self, coeffs: &[f64], x: Point) -> Option<f64> {
        self.mesh.locate(x).map(|e| self.eval(e, coeffs, x))
    }

    /// Largest quasi-Trefftz residual over all basis functions and liftings
    /// (zero for full polynomial spaces).
    pub fn max_residual(&self, bvp: &BvpConfig) -> Result<Vec<f64>, DgError> {
        if self.kind == SpaceKind::FullPoly {
            return Ok(vec![0.0; self.elements.len()]);
        }
        self.elements
            .par_iter()
            .map(|el| {
                let op = dar_to_alpha(&bvp.coeffs, &el.center, el.scale, self.p)?;
                let zero = crate::coeffjet::Jet::constant(&el.center, self.p - 2, 0.0);
                let mut worst = el.basis.iter().map(|b| qt_residual(b, &op, &zero, self.p)).fold(0.0, f64::max);
                if let Some(l) = &el.lifting {
                    let f = source_jet(bvp, &el.center, self.p - 2)?.expect("lifting implies a source");
                    worst = worst.max(qt_residual(l, &op, &f, self.p));
                }
                Ok(worst)
            })
            .collect()
    }
}

fn source_jet(bvp: &BvpConfig, center: &[f64], order: usize) -> Result<Option<crate::coeffjet::Jet>, DgError> {
    Ok(match &bvp.source {
        Source::Zero => None,
        Source::Expr(f) if f.is_zero() => None,
        Source::Expr(f) => Some(jet_eval(f, center, order)?),
        Source::Manufactured => Some(manufactured_source_jet(&bvp.coeffs, bvp.exact.as_ref().expect("validated"), center, order)?),
    })
}

/// Builds the local spaces: quasi-Trefftz bases (plus a lifting with zero
/// Cauchy data when `f` is non-zero), or all scaled monomials.
pub fn build_space(mesh: Arc<Mesh2D>, bvp: &BvpConfig, p: usize, kind: SpaceKind) -> Result<DgSpace, DgError> {
    if kind == SpaceKind::QuasiTrefftz && p < 2 {
        return Err(DgError::InvalidConfig(format!("quasi-Trefftz spaces need p >= 2, got {p}")));
    }
    let index = GradedIndex::shared(2, p);
    let nfull = index.len();
    let elements = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let g = mesh.geometry(e);
            let center = g.centroid;
            let scale = g.diameter;
            let (basis, lifting) = match kind {
                SpaceKind::FullPoly => {
                    let basis = index
                        .indices()
                        .iter()
                        .map(|k| ScaledMonomialPoly::monomial(center.to_vec(), scale, p, k))
                        .collect();
                    (basis, None)
                }
                SpaceKind::QuasiTrefftz => {
                    let op = dar_to_alpha(&bvp.coeffs, &center, scale, p)?;
                    let basis = qt_basis(&op, p)?;
                    let lifting = match source_jet(bvp, &center, p - 2)? {
                        Some(f) => Some(qt_particular(&op, &f, p)?),
                        None => None,
                    };
                    (basis, lifting)
                }
            };
            let coeffs = DMatrix::from_fn(basis.len(), nfull, |i, k| basis[i].coeffs()[k]);
            Ok(ElementSpace { center, scale, basis, coeffs, lifting })
        })
        .collect::<Result<Vec<_>, DgError>>()?;
    let mut offsets = Vec::with_capacity(elements.len() + 1);
    offsets.push(0);
    for el in &elements {
        offsets.push(offsets.last().unwrap() + el.len());
    }
    Ok(DgSpace { mesh, p, kind, elements, offsets, index })
}
