//! Polynomials expanded in scaled monomials `((x - x^E) / h_E)^k`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::coeffjet::Jet;
use crate::multiindex::{GradedIndex, MultiIndex};
use crate::qtrefftz::OperatorJets;

/// `v(x) = Σ_{|k| <= p} a_k ((x - x^E) / h_E)^k`, coefficients in graded order.
#[derive(Debug, Clone)]
pub struct ScaledMonomialPoly {
    center: Vec<f64>,
    scale: f64,
    degree: usize,
    index: Arc<GradedIndex>,
    coeffs: Vec<f64>,
}

impl PartialEq for ScaledMonomialPoly {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center
            && self.scale == other.scale
            && self.degree == other.degree
            && self.coeffs == other.coeffs
    }
}

/// Values of all scaled monomials `s^k`, `|k| <= index.degree()`, at `s`.
pub fn monomials_at(index: &GradedIndex, s: &[f64], out: &mut [f64]) {
    let p = index.degree();
    let d = s.len();
    let mut pw = vec![1.0; d * (p + 1)];
    for (a, &sa) in s.iter().enumerate() {
        for k in 1..=p {
            pw[a * (p + 1) + k] = pw[a * (p + 1) + k - 1] * sa;
        }
    }
    for (slot, mi) in out.iter_mut().zip(index.indices()) {
        *slot = mi
            .entries()
            .iter()
            .enumerate()
            .map(|(a, &k)| pw[a * (p + 1) + k as usize])
            .product();
    }
}

/// Gradients (with respect to `s`) of all scaled monomials at `s`;
/// `out[axis * n + k]` holds `∂_{s_axis} s^k`.
pub fn monomial_grads_at(index: &GradedIndex, s: &[f64], out: &mut [f64]) {
    let p = index.degree();
    let d = s.len();
    let n = index.len();
    let mut pw = vec![1.0; d * (p + 1)];
    for (a, &sa) in s.iter().enumerate() {
        for k in 1..=p {
            pw[a * (p + 1) + k] = pw[a * (p + 1) + k - 1] * sa;
        }
    }
    for axis in 0..d {
        for (k, mi) in index.indices().iter().enumerate() {
            let e = mi.entries();
            out[axis * n + k] = if e[axis] == 0 {
                0.0
            } else {
                (0..d)
                    .map(|a| {
                        if a == axis {
                            e[a] as f64 * pw[a * (p + 1) + e[a] as usize - 1]
                        } else {
                            pw[a * (p + 1) + e[a] as usize]
                        }
                    })
                    .product()
            };
        }
    }
}

impl ScaledMonomialPoly {
    pub fn new(center: Vec<f64>, scale: f64, degree: usize, coeffs: Vec<f64>) -> Self {
        assert!(scale > 0.0, "scale must be positive");
        let index = GradedIndex::shared(center.len(), degree);
        assert_eq!(coeffs.len(), index.len(), "coefficient count mismatch");
        ScaledMonomialPoly { center, scale, degree, index, coeffs }
    }

    pub fn zero(center: Vec<f64>, scale: f64, degree: usize) -> Self {
        let n = GradedIndex::shared(center.len(), degree).len();
        Self::new(center, scale, degree, vec![0.0; n])
    }

    /// Single scaled monomial `s^k`.
    pub fn monomial(center: Vec<f64>, scale: f64, degree: usize, k: &MultiIndex) -> Self {
        let mut v = Self::zero(center, scale, degree);
        let pos = v.index.position(k).expect("monomial degree exceeds polynomial degree");
        v.coeffs[pos] = 1.0;
        v
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn index(&self) -> &GradedIndex {
        &self.index
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient `a_k`; zero if `|k| > p`.
    pub fn coeff(&self, k: &MultiIndex) -> f64 {
        self.index.position(k).map_or(0.0, |p| self.coeffs[p])
    }

    pub fn set_coeff(&mut self, k: &MultiIndex, value: f64) {
        let pos = self.index.position(k).expect("index beyond polynomial degree");
        self.coeffs[pos] = value;
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(xi, ci)| (xi - ci) / self.scale).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut m = vec![0.0; self.index.len()];
        monomials_at(&self.index, &self.scaled(x), &mut m);
        m.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn eval_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.index.len();
        let d = self.dim();
        let mut g = vec![0.0; n * d];
        monomial_grads_at(&self.index, &self.scaled(x), &mut g);
        (0..d)
            .map(|axis| {
                g[axis * n..(axis + 1) * n]
                    .iter()
                    .zip(&self.coeffs)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / self.scale
            })
            .collect()
    }

    /// `D^i v(x^E) = i! a_i / h^{|i|}`; zero when `|i| > p`.
    pub fn derivative_at_center(&self, i: &MultiIndex) -> f64 {
        match self.index.position(i) {
            Some(pos) => i.factorial_f64() * self.coeffs[pos] / self.scale.powi(i.order() as i32),
            None => 0.0,
        }
    }

    /// The polynomial `D^i v`, same center and scale, degree `p - |i|`.
    pub fn derivative(&self, i: &MultiIndex) -> ScaledMonomialPoly {
        let lower = self.degree.saturating_sub(i.order());
        let mut out = Self::zero(self.center.clone(), self.scale, lower);
        if i.order() > self.degree {
            return out;
        }
        let factor = self.scale.powi(-(i.order() as i32));
        for (pos, k) in out.index.clone().indices().iter().enumerate() {
            let src = k.add(i);
            let falling: f64 = src
                .entries()
                .iter()
                .zip(i.entries())
                .map(|(&n, &r)| ((n - r + 1)..=n).map(|t| t as f64).product::<f64>())
                .product();
            out.coeffs[pos] = falling * self.coeff(&src) * factor;
        }
        out
    }

    /// Same polynomial expressed with a different scale `h'`.
    pub fn rescaled(&self, new_scale: f64) -> ScaledMonomialPoly {
        let ratio = new_scale / self.scale;
        let coeffs = self
            .index
            .indices()
            .iter()
            .zip(&self.coeffs)
            .map(|(k, a)| a * ratio.powi(k.order() as i32))
            .collect();
        Self::new(self.center.clone(), new_scale, self.degree, coeffs)
    }

    pub fn add_scaled(&mut self, other: &ScaledMonomialPoly, s: f64) {
        assert!(self.center == other.center && self.scale == other.scale);
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// Debug dump: one line `k1 k2 ... : a_k` per multi-index.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, a) in self.index.indices().iter().zip(&self.coeffs) {
            let idx: Vec<String> = k.entries().iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{} : {:.17e}", idx.join(" "), a);
        }
        out
    }
}

/// Taylor polynomial of degree `jet.order()` in scaled monomials:
/// `a_k = c_k h^{|k|}` with `c_k` the Taylor coefficients of the jet.
pub fn taylor_from_jet(jet: &Jet, scale: f64) -> ScaledMonomialPoly {
    let index = GradedIndex::shared(jet.dim(), jet.order());
    let coeffs = index
        .indices()
        .iter()
        .zip(jet.coeffs())
        .map(|(k, c)| c * scale.powi(k.order() as i32))
        .collect();
    ScaledMonomialPoly::new(jet.center().to_vec(), scale, jet.order(), coeffs)
}

/// `D^i (M v)(x^E) = Σ_j Σ_{r <= i} C(i, r) D^r α_j(x^E) D^{i - r + j} v(x^E)`.
///
/// Derivatives of `v` beyond its degree vanish; derivatives of `α_j` beyond
/// the jet order are read as zero.
pub fn apply_operator_derivatives(v: &ScaledMonomialPoly, op: &OperatorJets, i: &MultiIndex) -> f64 {
    let mut total = 0.0;
    for term in op.terms() {
        let jet = &term.jet;
        for r in jet.layout().index().indices() {
            if r.order() > i.order() {
                break;
            }
            let Some(rest) = i.checked_sub(r) else { continue };
            let binom = i.binomial(r).expect("binomial fits in 128 bits") as f64;
            let dr_alpha = r.factorial_f64() * jet.coeff(r);
            if dr_alpha == 0.0 {
                continue;
            }
            total += binom * dr_alpha * v.derivative_at_center(&rest.add(&term.j));
        }
    }
    total
}
