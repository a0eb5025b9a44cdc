//! Quasi-Trefftz polynomial spaces: the coefficient recursion for
//! `M = Σ_{|j| <= m} α_j D^j`, bases, particular solutions and residuals.
//!
//! A polynomial `v` of degree `p` around `x^E` belongs to the quasi-Trefftz
//! space of `(M, f)` if `D^i(Mv)(x^E) = D^i f(x^E)` for all `|i| <= p - m`.
//! The coefficients `a_k` with `k_1 < m` are free (Cauchy data on the
//! hyperplane `x_1 = x^E_1`); the rest follow from the recursion, visited in
//! [`algorithm1_order`].

use thiserror::Error;

use crate::coeffjet::{jet_eval, Expr, ExprError, Jet};
use crate::multiindex::{algorithm1_order, factorial_f64, GradedIndex, MultiIndex, MultiIndexError};
use crate::poly::{apply_operator_derivatives, ScaledMonomialPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QtError {
    #[error("leading coefficient α_{{m e1}} vanishes at the expansion point (value {0})")]
    NonDegenerate(f64),
    #[error("diffusion coefficient K11 = {0} is not positive at the expansion point")]
    NonPositiveK11(f64),
    #[error("Cauchy data for (d, p, m) = {found:?} does not match the requested {expected:?}")]
    DegreeMismatch { expected: (usize, usize, usize), found: (usize, usize, usize) },
    #[error("coefficient jet of order {found} is too short, order {needed} required")]
    JetTooShort { needed: usize, found: usize },
    #[error("coefficient shape mismatch: {0}")]
    Shape(String),
    #[error("polynomial degree {p} is below the operator order {m}")]
    DegreeBelowOrder { p: usize, m: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    MultiIndex(#[from] MultiIndexError),
}

/// One term `α_j D^j` of the operator, with the Taylor jet of `α_j` at `x^E`.
#[derive(Debug, Clone)]
pub struct OperatorTerm {
    pub j: MultiIndex,
    pub jet: Jet,
}

/// The operator `M = Σ α_j D^j` linearised at an element: jets of the
/// coefficients at `x^E`, together with the element scale `h_E`.
#[derive(Debug, Clone)]
pub struct OperatorJets {
    m: usize,
    center: Vec<f64>,
    scale: f64,
    order: usize,
    terms: Vec<OperatorTerm>,
}

impl OperatorJets {
    /// `order` is the common truncation order of the coefficient jets.
    pub fn new(m: usize, center: Vec<f64>, scale: f64, order: usize, terms: Vec<OperatorTerm>) -> Self {
        OperatorJets { m, center, scale, order, terms }
    }

    /// Builds the jets of `α_j` from expressions.
    pub fn from_exprs(
        m: usize,
        center: &[f64],
        scale: f64,
        order: usize,
        coeffs: &[(MultiIndex, Expr)],
    ) -> Result<Self, QtError> {
        let terms = coeffs
            .iter()
            .map(|(j, e)| {
                if j.dim() != center.len() || j.order() > m {
                    return Err(QtError::Shape(format!("term index {j} for dimension {} and order {m}", center.len())));
                }
                Ok(OperatorTerm { j: j.clone(), jet: jet_eval(e, center, order)? })
            })
            .collect::<Result<Vec<_>, QtError>>()?;
        Ok(Self::new(m, center.to_vec(), scale, order, terms))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    /// Jet of `α_j`, if the term is present.
    pub fn alpha(&self, j: &MultiIndex) -> Option<&Jet> {
        self.terms.iter().find(|t| &t.j == j).map(|t| &t.jet)
    }

    /// `α_{m e1}(x^E)`, the coefficient divided by in the recursion.
    pub fn leading(&self) -> f64 {
        let lead = MultiIndex::axis(self.dim(), 0, self.m as u32);
        self.terms.iter().filter(|t| t.j == lead).map(|t| t.jet.value()).sum()
    }

    /// Same operator with a different element scale.
    pub fn with_scale(&self, scale: f64) -> Self {
        OperatorJets { scale, ..self.clone() }
    }
}

/// The free coefficients `ψ_r`, `0 <= r < m`, in scaled coordinates of the
/// hyperplane through `x^E`: `ψ_r(y) = Σ c_{r,k'} ((y - x'^E)/h)^{k'}`, so
/// that `∂^r_{x_1} v = ψ_r` on the hyperplane.
///
/// Values are stored at the graded positions of the full multi-indices
/// `(r, k')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    d: usize,
    p: usize,
    m: usize,
    values: Vec<f64>,
}

impl CauchyData {
    pub fn zero(d: usize, p: usize, m: usize) -> Self {
        let n = GradedIndex::shared(d, p).len();
        CauchyData { d, p, m, values: vec![0.0; n] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.d, self.p, self.m)
    }

    fn position(&self, r: usize, tail: &[u32]) -> usize {
        assert!(r < self.m, "Cauchy data index r = {r} must be below m = {}", self.m);
        assert_eq!(tail.len() + 1, self.d);
        let mut e = Vec::with_capacity(self.d);
        e.push(r as u32);
        e.extend_from_slice(tail);
        GradedIndex::shared(self.d, self.p)
            .position_of(&e)
            .unwrap_or_else(|| panic!("degree of ψ_{r} term {tail:?} exceeds p - r"))
    }

    /// Coefficient `c_{r,k'}` of `ψ_r`.
    pub fn get(&self, r: usize, tail: &[u32]) -> f64 {
        self.values[self.position(r, tail)]
    }

    pub fn set(&mut self, r: usize, tail: &[u32], value: f64) {
        let pos = self.position(r, tail);
        self.values[pos] = value;
    }

    /// Index pairs `(r, k')` that carry Cauchy data, in graded order of `(r, k')`.
    pub fn slots(&self) -> Vec<MultiIndex> {
        free_indices(self.d, self.p, self.m)
    }
}

/// Multi-indices `k` with `|k| <= p` and `k_1 < m`; their count is `dim_qt`.
pub fn free_indices(d: usize, p: usize, m: usize) -> Vec<MultiIndex> {
    GradedIndex::shared(d, p)
        .indices()
        .iter()
        .filter(|k| (k.get(0) as usize) < m)
        .cloned()
        .collect()
}

/// All `l <= i` componentwise.
fn sub_indices(i: &MultiIndex) -> Vec<MultiIndex> {
    let e = i.entries();
    let mut out = Vec::new();
    let mut cur = vec![0u32; e.len()];
    loop {
        out.push(MultiIndex::new(cur.clone()));
        let mut axis = 0;
        loop {
            if axis == e.len() {
                return out;
            }
            if cur[axis] < e[axis] {
                cur[axis] += 1;
                break;
            }
            cur[axis] = 0;
            axis += 1;
        }
    }
}

/// `k! / (k - j)!`, requires `j <= k`.
fn falling(k: &MultiIndex, j: &MultiIndex) -> f64 {
    k.entries()
        .iter()
        .zip(j.entries())
        .map(|(&n, &r)| ((n - r + 1)..=n).map(f64::from).product::<f64>())
        .product()
}

fn check_inputs(op: &OperatorJets, f: &Jet, p: usize) -> Result<(), QtError> {
    let m = op.m();
    if p < m {
        return Err(QtError::DegreeBelowOrder { p, m });
    }
    let needed = p - m;
    for jet in op.terms().iter().map(|t| &t.jet).chain(std::iter::once(f)) {
        if jet.order() < needed {
            return Err(QtError::JetTooShort { needed, found: jet.order() });
        }
    }
    let lead = op.leading();
    if lead == 0.0 || !lead.is_finite() {
        return Err(QtError::NonDegenerate(lead));
    }
    Ok(())
}

/// Runs the recursion with the scaled coefficients `a_k`, `k_1 < m`,
/// already placed in `a`; fills all remaining coefficients.
fn complete(op: &OperatorJets, f: &Jet, p: usize, a: &mut [f64]) -> Result<(), QtError> {
    let d = op.dim();
    let m = op.m();
    let h = op.scale();
    let index = GradedIndex::shared(d, p);
    let lead = op.leading();
    let me1 = MultiIndex::axis(d, 0, m as u32);
    let hpow: Vec<f64> = (0..=p + m).map(|k| h.powi(k as i32)).collect();

    for i in algorithm1_order(d, p, m)? {
        let qi = i.order();
        let mut acc = hpow[qi + m] * f.coeff(&i);
        for l in sub_indices(&i) {
            let diff = i.checked_sub(&l).expect("l <= i");
            let ql = l.order();
            for term in op.terms() {
                if term.j == me1 && l == i {
                    continue;
                }
                let c = term.jet.coeff(&diff);
                if c == 0.0 {
                    continue;
                }
                let k = l.add(&term.j);
                let ak = index.position(&k).map_or(0.0, |pos| a[pos]);
                if ak == 0.0 {
                    continue;
                }
                acc -= c * hpow[qi - ql + m - term.j.order()] * falling(&k, &term.j) * ak;
            }
        }
        let i1 = i.get(0) as usize;
        let ratio: f64 = ((i1 + 1)..=(i1 + m)).map(|t| t as f64).product();
        let target = index.position(&i.add(&me1)).expect("|i| + m <= p");
        a[target] = acc / (ratio * lead);
    }
    Ok(())
}

/// The unique `v` in the quasi-Trefftz space of `(op, f)` with Cauchy data `cd`.
pub fn qt_construct(op: &OperatorJets, f: &Jet, p: usize, cd: &CauchyData) -> Result<ScaledMonomialPoly, QtError> {
    check_inputs(op, f, p)?;
    let expected = (op.dim(), p, op.m());
    if cd.shape() != expected {
        return Err(QtError::DegreeMismatch { expected, found: cd.shape() });
    }
    let h = op.scale();
    let index = GradedIndex::shared(op.dim(), p);
    let mut a = vec![0.0; index.len()];
    for (pos, k) in index.indices().iter().enumerate() {
        let r = k.get(0) as usize;
        if r < op.m() {
            // D^k v(x^E) = D^{k'} ψ_r(x'^E) = k'! c / h^{|k'|}
            a[pos] = h.powi(r as i32) / factorial_f64(r) * cd.values[pos];
        }
    }
    complete(op, f, p, &mut a)?;
    Ok(ScaledMonomialPoly::new(op.center().to_vec(), h, p, a))
}

/// Basis of the homogeneous space: one element per free index `(r, k')`,
/// with scaled coefficient `a_{(r,k')} = 1` and all other free coefficients
/// zero.
pub fn qt_basis(op: &OperatorJets, p: usize) -> Result<Vec<ScaledMonomialPoly>, QtError> {
    let zero = Jet::constant(op.center(), p.saturating_sub(op.m()), 0.0);
    check_inputs(op, &zero, p)?;
    let index = GradedIndex::shared(op.dim(), p);
    let mut out = Vec::new();
    for (pos, k) in index.indices().iter().enumerate() {
        if (k.get(0) as usize) >= op.m() {
            continue;
        }
        let mut a = vec![0.0; index.len()];
        a[pos] = 1.0;
        complete(op, &zero, p, &mut a)?;
        out.push(ScaledMonomialPoly::new(op.center().to_vec(), op.scale(), p, a));
    }
    Ok(out)
}

/// Particular solution with zero Cauchy data.
pub fn qt_particular(op: &OperatorJets, f: &Jet, p: usize) -> Result<ScaledMonomialPoly, QtError> {
    qt_construct(op, f, p, &CauchyData::zero(op.dim(), p, op.m()))
}

/// `max_{|i| <= p-m} |D^i(Mv)(x^E) - D^i f(x^E)| h^{|i|} / max(1, h^{|i|} |D^i f(x^E)|)`.
///
/// The factor `h^{|i|}` puts all derivative orders on the scale of the
/// element; at `i = 0` this is the plain residual divided by `max(1, |f|)`.
pub fn qt_residual(v: &ScaledMonomialPoly, op: &OperatorJets, f: &Jet, p: usize) -> f64 {
    let m = op.m();
    if p < m {
        return 0.0;
    }
    let h = v.scale();
    GradedIndex::shared(op.dim(), p - m)
        .indices()
        .iter()
        .map(|i| {
            let w = h.powi(i.order() as i32);
            let df = i.factorial_f64() * f.coeff(i);
            let r = apply_operator_derivatives(v, op, i) - df;
            (r * w).abs() / (w * df.abs()).max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Coefficients of `L v = div(-K ∇v + β v) + σ v` as expressions.
#[derive(Debug, Clone)]
pub struct DarCoefficients {
    /// `K[j][m]`, row-major `d × d`.
    pub k: Vec<Vec<Expr>>,
    pub beta: Vec<Expr>,
    pub sigma: Expr,
}

impl DarCoefficients {
    pub fn new(k: Vec<Vec<Expr>>, beta: Vec<Expr>, sigma: Expr) -> Result<Self, QtError> {
        let d = beta.len();
        if d == 0 || k.len() != d || k.iter().any(|row| row.len() != d) {
            return Err(QtError::Shape(format!(
                "K must be {d}x{d} to match β of length {d}"
            )));
        }
        Ok(DarCoefficients { k, beta, sigma })
    }

    /// Parses `K` given row-major as `d*d` strings.
    pub fn parse(dim: usize, k: &[&str], beta: &[&str], sigma: &str) -> Result<Self, QtError> {
        if k.len() != dim * dim || beta.len() != dim {
            return Err(QtError::Shape(format!(
                "expected {} entries of K and {dim} of β, got {} and {}",
                dim * dim,
                k.len(),
                beta.len()
            )));
        }
        let k = k
            .chunks(dim)
            .map(|row| row.iter().map(|s| crate::coeffjet::parse(s, dim)).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        let beta = beta.iter().map(|s| crate::coeffjet::parse(s, dim)).collect::<Result<_, _>>()?;
        Self::new(k, beta, crate::coeffjet::parse(sigma, dim)?)
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Largest `|K_jm - K_mj|` over the given points.
    pub fn asymmetry(&self, points: &[Vec<f64>]) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for x in points {
            for j in 0..d {
                for m in (j + 1)..d {
                    worst = worst.max((self.k[j][m].eval(x) - self.k[m][j].eval(x)).abs());
                }
            }
        }
        worst
    }

    /// Jets of `K`, `β`, `σ` at `center`: `K` and `β` to `order + 1`, `σ` to `order`.
    fn jets(&self, center: &[f64], order: usize) -> Result<(Vec<Vec<Jet>>, Vec<Jet>, Jet), ExprError> {
        let k = self
            .k
            .iter()
            .map(|row| row.iter().map(|e| jet_eval(e, center, order + 1)).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        let beta = self.beta.iter().map(|e| jet_eval(e, center, order + 1)).collect::<Result<_, _>>()?;
        Ok((k, beta, jet_eval(&self.sigma, center, order)?))
    }
}

/// Expands `L` into `Σ α_j D^j` at `center`, with jets of order `p - 2`.
pub fn dar_to_alpha(coeffs: &DarCoefficients, center: &[f64], scale: f64, p: usize) -> Result<OperatorJets, QtError> {
    let d = coeffs.dim();
    if center.len() != d {
        return Err(QtError::Shape(format!("center of dimension {} for a {d}D operator", center.len())));
    }
    if p < 2 {
        return Err(QtError::DegreeBelowOrder { p, m: 2 });
    }
    let order = p - 2;
    let (k, beta, sigma) = coeffs.jets(center, order)?;
    let k11 = k[0][0].value();
    if !(k11 > 0.0) {
        return Err(QtError::NonPositiveK11(k11));
    }
    let mut terms = Vec::new();
    for j in 0..d {
        terms.push(OperatorTerm { j: MultiIndex::axis(d, j, 2), jet: k[j][j].truncate(order).neg() });
        for m in (j + 1)..d {
            let mut e = vec![0u32; d];
            e[j] = 1;
            e[m] = 1;
            let jet = k[j][m].add(&k[m][j]).truncate(order).neg();
            terms.push(OperatorTerm { j: MultiIndex::new(e), jet });
        }
    }
    for m in 0..d {
        let mut jet = beta[m].truncate(order);
        for (j, row) in k.iter().enumerate() {
            jet = jet.sub(&row[m].partial(j));
        }
        terms.push(OperatorTerm { j: MultiIndex::axis(d, m, 1), jet });
    }
    let mut a0 = sigma;
    for (j, b) in beta.iter().enumerate() {
        a0 = a0.add(&b.partial(j));
    }
    terms.push(OperatorTerm { j: MultiIndex::zeros(d), jet: a0 });
    Ok(OperatorJets::new(2, center.to_vec(), scale, order, terms))
}

/// Jet of order `order` of `f = div(-K ∇u + β u) + σ u` for a given `u`,
/// computed in divergence form.
pub fn manufactured_source_jet(coeffs: &DarCoefficients, u: &Expr, center: &[f64], order: usize) -> Result<Jet, QtError> {
    let d = coeffs.dim();
    let (k, beta, sigma) = coeffs.jets(center, order)?;
    let uj = jet_eval(u, center, order + 2)?;
    let grad: Vec<Jet> = (0..d).map(|m| uj.partial(m)).collect();
    let u1 = uj.truncate(order + 1);
    let mut f = sigma.mul(&uj.truncate(order));
    for j in 0..d {
        let mut flux = beta[j].mul(&u1);
        for (m, g) in grad.iter().enumerate() {
            flux = flux.sub(&k[j][m].mul(g));
        }
        f = f.add(&flux.partial(j));
    }
    Ok(f)
}

/// Pointwise value of the manufactured source.
pub fn manufactured_source(coeffs: &DarCoefficients, u: &Expr, x: &[f64]) -> Result<f64, QtError> {
    Ok(manufactured_source_jet(coeffs, u, x, 0)?.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffjet::parse;
    use crate::multiindex::dim_qt;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn laplace(center: &[f64], h: f64, p: usize) -> OperatorJets {
        let c = DarCoefficients::parse(2, &["1", "0", "0", "1"], &["0", "0"], "0").unwrap();
        dar_to_alpha(&c, center, h, p).unwrap()
    }

    #[test]
    fn laplacian_alpha_form() {
        let op = laplace(&[0.0, 0.0], 1.0, 3);
        assert_eq!(op.alpha(&mi(&[2, 0])).unwrap().value(), -1.0);
        assert_eq!(op.alpha(&mi(&[0, 2])).unwrap().value(), -1.0);
        for t in op.terms() {
            if t.j.order() < 2 || t.j == mi(&[1, 1]) {
                assert!(t.jet.coeffs().iter().all(|&c| c == 0.0), "{:?}", t.j);
            }
        }
    }

    #[test]
    fn constant_advection_adds_first_order_term() {
        let c = DarCoefficients::parse(2, &["1", "0", "0", "1"], &["1", "0"], "0").unwrap();
        let op = dar_to_alpha(&c, &[0.3, 0.4], 1.0, 2).unwrap();
        assert_eq!(op.alpha(&mi(&[1, 0])).unwrap().value(), 1.0);
        assert_eq!(op.alpha(&mi(&[0, 1])).unwrap().value(), 0.0);
        assert_eq!(op.alpha(&mi(&[0, 0])).unwrap().value(), 0.0);
    }

    #[test]
    fn variable_diffusion_expansion() {
        let c = DarCoefficients::parse(2, &["1+x1+x2", "0", "0", "1+x1+x2"], &["0", "0"], "0").unwrap();
        let op = dar_to_alpha(&c, &[0.0, 0.0], 1.0, 3).unwrap();
        let a20 = op.alpha(&mi(&[2, 0])).unwrap();
        assert_eq!(a20.value(), -1.0);
        assert_eq!(a20.derivative(&mi(&[1, 0])).unwrap(), -1.0);
        assert_eq!(op.alpha(&mi(&[1, 0])).unwrap().value(), -1.0);
        assert_eq!(op.alpha(&mi(&[0, 1])).unwrap().value(), -1.0);
    }

    #[test]
    fn nonpositive_k11_is_rejected() {
        let c = DarCoefficients::parse(2, &["x1", "0", "0", "1"], &["0", "0"], "0").unwrap();
        assert!(matches!(dar_to_alpha(&c, &[0.0, 0.5], 1.0, 2), Err(QtError::NonPositiveK11(_))));
    }

    #[test]
    fn harmonic_from_cauchy_data() {
        let op = laplace(&[0.0, 0.0], 1.0, 2);
        let mut cd = CauchyData::zero(2, 2, 2);
        cd.set(0, &[2], 1.0);
        let f = Jet::constant(&[0.0, 0.0], 0, 0.0);
        let v = qt_construct(&op, &f, 2, &cd).unwrap();
        assert_eq!(v.coeff(&mi(&[0, 2])), 1.0);
        assert_eq!(v.coeff(&mi(&[2, 0])), -1.0);
        for x in [[0.3, 0.2], [-1.0, 2.0]] {
            assert!((v.eval(&x) - (x[1] * x[1] - x[0] * x[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn poisson_constant_source() {
        for h in [1.0, 0.3] {
            let c = 2.5;
            let op = laplace(&[0.1, 0.2], h, 2);
            let f = Jet::constant(&[0.1, 0.2], 0, c);
            let v = qt_particular(&op, &f, 2).unwrap();
            assert!((v.coeff(&mi(&[2, 0])) + c * h * h / 2.0).abs() < 1e-15);
            let zero_others = v.coeffs().iter().enumerate().all(|(k, &a)| k == 3 || a == 0.0);
            assert!(zero_others);
            assert!(qt_residual(&v, &op, &f, 2) < 1e-14);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let op = laplace(&[0.0, 0.0], 0.5, 4);
        let f = Jet::constant(&[0.0, 0.0], 2, 0.0);
        let v = qt_particular(&op, &f, 4).unwrap();
        assert!(v.coeffs().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn particular_reproduces_polynomial_with_zero_cauchy_data() {
        // w = (x1 - c1)^2 (1 + x2 - (x1 - c1)) has zero trace and normal derivative on x1 = c1.
        let center = [0.2, -0.1];
        let w = parse("(x1-0.2)^2*(1 + x2) - (x1-0.2)^3", 2).unwrap();
        let coeffs = DarCoefficients::parse(2, &["1+x1+x2", "0", "0", "1+x1+x2"], &["sin(x1)", "sin(x2)"], "4/(1+x1+x2)").unwrap();
        let p = 3;
        let h = 0.4;
        let op = dar_to_alpha(&coeffs, &center, h, p).unwrap();
        let f = manufactured_source_jet(&coeffs, &w, &center, p - 2).unwrap();
        let v = qt_particular(&op, &f, p).unwrap();
        for x in [[0.0, 0.0], [0.5, 0.3], [-0.2, 0.4]] {
            assert!((v.eval(&x) - w.eval(&x)).abs() < 1e-12, "{} vs {}", v.eval(&x), w.eval(&x));
        }
    }

    #[test]
    fn basis_counts() {
        assert_eq!(qt_basis(&laplace(&[0.0, 0.0], 1.0, 3), 3).unwrap().len(), 7);
        let c = DarCoefficients::parse(
            3,
            &["1", "0", "0", "0", "1", "0", "0", "0", "1"],
            &["0", "0", "0"],
            "0",
        )
        .unwrap();
        let op = dar_to_alpha(&c, &[0.0; 3], 1.0, 4).unwrap();
        assert_eq!(qt_basis(&op, 4).unwrap().len(), 25);
        assert_eq!(dim_qt(3, 4, 2).unwrap(), 25);
    }

    #[test]
    fn residual_of_square_under_laplace() {
        for h in [1.0, 0.5, 0.25] {
            let op = laplace(&[0.0, 0.0], h, 2);
            let v = ScaledMonomialPoly::monomial(vec![0.0, 0.0], h, 2, &mi(&[2, 0]));
            let f = Jet::constant(&[0.0, 0.0], 0, 0.0);
            assert!((qt_residual(&v, &op, &f, 2) - 2.0 / (h * h)).abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_membership_for_manufactured_problem() {
        let coeffs = DarCoefficients::parse(2, &["1+x1+x2", "0", "0", "1+x1+x2"], &["sin(x1)", "sin(x2)"], "4/(1+x1+x2)").unwrap();
        let u = parse("sin(pi*(x1+x2))", 2).unwrap();
        let center = [0.3, 0.6];
        for p in 2..=5 {
            let op = dar_to_alpha(&coeffs, &center, 0.2, p).unwrap();
            let f = manufactured_source_jet(&coeffs, &u, &center, p - 2).unwrap();
            let t = crate::poly::taylor_from_jet(&jet_eval(&u, &center, p).unwrap(), 0.2);
            assert!(qt_residual(&t, &op, &f, p) < 1e-9);
        }
    }

    #[test]
    fn source_matches_hand_expansion() {
        // u = x1^2 x2, K = I, β = (x2, 0), σ = 1: f = -2 x2 + 2 x1 x2^2 + x1^2 x2.
        let coeffs = DarCoefficients::parse(2, &["1", "0", "0", "1"], &["x2", "0"], "1").unwrap();
        let u = parse("x1^2*x2", 2).unwrap();
        for x in [[0.5, 0.25], [1.0, -2.0]] {
            let expect = -2.0 * x[1] + 2.0 * x[0] * x[1] * x[1] + x[0] * x[0] * x[1];
            assert!((manufactured_source(&coeffs, &u, &x).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn non_nested_example() {
        let coeffs = DarCoefficients::parse(2, &["1", "0", "0", "1"], &["1", "1"], "2/(x1^2+1)").unwrap();
        let v = ScaledMonomialPoly::new(vec![0.0, 0.0], 1.0, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let op = dar_to_alpha(&coeffs, &[0.0, 0.0], 1.0, 2).unwrap();
        let f = Jet::constant(&[0.0, 0.0], 1, 0.0);
        assert!(qt_residual(&v, &op, &f, 2) < 1e-15);
        let v3 = ScaledMonomialPoly::new(vec![0.0, 0.0], 1.0, 3, {
            let mut a = vec![0.0; 10];
            a[0] = 1.0;
            a[3] = 1.0;
            a
        });
        let op3 = dar_to_alpha(&coeffs, &[0.0, 0.0], 1.0, 3).unwrap();
        let dx1 = apply_operator_derivatives(&v3, &op3, &mi(&[1, 0]));
        assert!((dx1 - 2.0).abs() < 1e-14);
        assert!(qt_residual(&v3, &op3, &f, 3) > 1.0);
    }

    #[test]
    fn degenerate_operator_is_rejected() {
        let op = OperatorJets::from_exprs(
            2,
            &[0.0, 0.0],
            1.0,
            1,
            &[(mi(&[0, 2]), parse("-1", 2).unwrap()), (mi(&[2, 0]), parse("x1", 2).unwrap())],
        )
        .unwrap();
        assert!(matches!(qt_basis(&op, 3), Err(QtError::NonDegenerate(_))));
    }

    #[test]
    fn construct_is_affine_in_data() {
        let coeffs = DarCoefficients::parse(2, &["2+x2", "0.1*x1", "0.1*x1", "1"], &["x2", "1"], "exp(x1)").unwrap();
        let center = [0.1, 0.1];
        let p = 5;
        let op = dar_to_alpha(&coeffs, &center, 0.3, p).unwrap();
        let mut cd1 = CauchyData::zero(2, p, 2);
        let mut cd2 = CauchyData::zero(2, p, 2);
        for (n, k) in cd1.slots().iter().enumerate() {
            cd1.set(k.get(0) as usize, k.tail(), (n as f64 * 0.37).sin());
            cd2.set(k.get(0) as usize, k.tail(), (n as f64 * 1.3).cos());
        }
        let f1 = jet_eval(&parse("x1*x2 + 1", 2).unwrap(), &center, p - 2).unwrap();
        let f2 = jet_eval(&parse("cos(x1)", 2).unwrap(), &center, p - 2).unwrap();
        let v1 = qt_construct(&op, &f1, p, &cd1).unwrap();
        let v2 = qt_construct(&op, &f2, p, &cd2).unwrap();
        let mut cd = CauchyData::zero(2, p, 2);
        for k in cd1.slots() {
            let (r, t) = (k.get(0) as usize, k.tail());
            cd.set(r, t, 2.0 * cd1.get(r, t) - cd2.get(r, t));
        }
        let v = qt_construct(&op, &f1.scale(2.0).sub(&f2), p, &cd).unwrap();
        for ((a, b), c) in v.coeffs().iter().zip(v1.coeffs()).zip(v2.coeffs()) {
            assert!((a - (2.0 * b - c)).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        assert_eq!(qt_construct(&op, &f1, p, &cd1).unwrap(), v1);
    }
}
