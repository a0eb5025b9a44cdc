//! Truncated multivariate Taylor series ("jets") and forward propagation of
//! expressions through them.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::expr::{BinOp, Expr, Func};
use super::ExprError;
use crate::multiindex::{GradedIndex, MultiIndex};

/// Index bookkeeping shared by all jets of the same `(d, q)`.
#[derive(Debug)]
pub struct JetLayout {
    index: GradedIndex,
    /// For each output position `k`, the pairs `(a, b)` with `a + b = k`.
    products: Vec<Vec<(u32, u32)>>,
    /// For each axis and output position `k`, the position of `k + e_axis`
    /// (if within the truncation) for partial differentiation.
    shifted: Vec<Vec<Option<u32>>>,
}

impl JetLayout {
    fn build(d: usize, q: usize) -> Self {
        let index = GradedIndex::new(d, q);
        let n = index.len();
        let mut products = vec![Vec::new(); n];
        let mut sum = vec![0u32; d];
        for a in 0..n {
            let ia = index.at(a).entries().to_vec();
            for b in 0..n {
                let ib = index.at(b).entries();
                for k in 0..d {
                    sum[k] = ia[k] + ib[k];
                }
                if let Some(pos) = index.position_of(&sum) {
                    products[pos].push((a as u32, b as u32));
                }
            }
        }
        let shifted = (0..d)
            .map(|axis| {
                (0..n)
                    .map(|k| {
                        let mut e = index.at(k).entries().to_vec();
                        e[axis] += 1;
                        index.position_of(&e).map(|p| p as u32)
                    })
                    .collect()
            })
            .collect();
        JetLayout { index, products, shifted }
    }

    /// Cached layout for dimension `d` and truncation order `q`.
    pub fn get(d: usize, q: usize) -> Arc<JetLayout> {
        static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<JetLayout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(l) = cache.read().unwrap().get(&(d, q)) {
            return l.clone();
        }
        let layout = Arc::new(JetLayout::build(d, q));
        cache.write().unwrap().entry((d, q)).or_insert(layout).clone()
    }

    pub fn index(&self) -> &GradedIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Degree-`q` Taylor expansion at `center`; `coeffs[k] = D^k f(center) / k!`
/// in graded order.
#[derive(Debug, Clone)]
pub struct Jet {
    center: Vec<f64>,
    order: usize,
    layout: Arc<JetLayout>,
    coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center && self.order == other.order && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn constant(center: &[f64], order: usize, value: f64) -> Self {
        let layout = JetLayout::get(center.len(), order);
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Jet { center: center.to_vec(), order, layout, coeffs }
    }

    /// The coordinate function `x_axis`.
    pub fn variable(center: &[f64], order: usize, axis: usize) -> Self {
        let mut j = Self::constant(center, order, center[axis]);
        if order >= 1 {
            let e = MultiIndex::axis(center.len(), axis, 1);
            let pos = j.layout.index.position(&e).unwrap();
            j.coeffs[pos] = 1.0;
        }
        j
    }

    /// Builds a jet from Taylor coefficients given in graded order.
    pub fn from_coeffs(center: &[f64], order: usize, coeffs: Vec<f64>) -> Self {
        let layout = JetLayout::get(center.len(), order);
        assert_eq!(coeffs.len(), layout.len(), "coefficient count mismatch");
        Jet { center: center.to_vec(), order, layout, coeffs }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn layout(&self) -> &JetLayout {
        &self.layout
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Taylor coefficient `D^i f(center) / i!`; zero beyond the truncation.
    pub fn coeff(&self, i: &MultiIndex) -> f64 {
        self.layout.index.position(i).map_or(0.0, |p| self.coeffs[p])
    }

    /// `D^i f(center) = i! * coeff(i)`.
    pub fn derivative(&self, i: &MultiIndex) -> Result<f64, ExprError> {
        if i.order() > self.order {
            return Err(ExprError::OrderExceeded { requested: i.order(), order: self.order });
        }
        Ok(i.factorial_f64() * self.coeff(i))
    }

    /// Jet of `∂f/∂x_axis`, one order lower.
    pub fn partial(&self, axis: usize) -> Jet {
        let lower = self.order.saturating_sub(1);
        let layout = JetLayout::get(self.dim(), lower);
        let coeffs = (0..layout.len())
            .map(|k| {
                if self.order == 0 {
                    return 0.0;
                }
                let e = layout.index.at(k);
                let up = self.layout.shifted[axis][self.layout.index.position(e).unwrap()]
                    .expect("shift stays within truncation");
                (e.get(axis) as f64 + 1.0) * self.coeffs[up as usize]
            })
            .collect();
        Jet { center: self.center.clone(), order: lower, layout, coeffs }
    }

    /// Restriction to a lower truncation order.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(order <= self.order);
        let layout = JetLayout::get(self.dim(), order);
        let coeffs = self.coeffs[..layout.len()].to_vec();
        Jet { center: self.center.clone(), order, layout, coeffs }
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.check_compatible(other);
        Jet {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| f(*a, *b)).collect(),
            ..self.clone()
        }
    }

    fn check_compatible(&self, other: &Jet) {
        assert_eq!(self.order, other.order, "jets of different order");
        assert_eq!(self.center, other.center, "jets at different centers");
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|c| c * s).collect(), ..self.clone() }
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    /// Truncated product (Leibniz rule in Taylor-coefficient form).
    pub fn mul(&self, other: &Jet) -> Jet {
        self.check_compatible(other);
        let coeffs = self
            .layout
            .products
            .iter()
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|&(a, b)| self.coeffs[a as usize] * other.coeffs[b as usize])
                    .sum()
            })
            .collect();
        Jet { coeffs, ..self.clone() }
    }

    /// Series division `self / other`.
    pub fn div(&self, other: &Jet) -> Result<Jet, ExprError> {
        self.check_compatible(other);
        let b0 = other.coeffs[0];
        if b0 == 0.0 || !b0.is_finite() {
            return Err(ExprError::SingularPoint("division by a vanishing denominator".into()));
        }
        let n = self.coeffs.len();
        let mut c = vec![0.0; n];
        // Graded order guarantees every c_a with a < k (componentwise) is known.
        for k in 0..n {
            let mut acc = self.coeffs[k];
            for &(a, b) in &self.layout.products[k] {
                if b != 0 {
                    acc -= c[a as usize] * other.coeffs[b as usize];
                }
            }
            c[k] = acc / b0;
        }
        Ok(Jet { coeffs: c, ..self.clone() })
    }

    /// Integer power by repeated squaring; negative exponents via division.
    pub fn powi(&self, n: i64) -> Result<Jet, ExprError> {
        let one = Jet::constant(&self.center, self.order, 1.0);
        let mut base = self.clone();
        let mut e = n.unsigned_abs();
        let mut acc = one.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        if n < 0 {
            one.div(&acc)
        } else {
            Ok(acc)
        }
    }

    /// `Σ_n series[n] (self - self(center))^n` for a univariate series about
    /// the constant term.
    pub fn compose(&self, series: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let q = series.len() - 1;
        let mut r = Jet::constant(&self.center, self.order, series[q]);
        for n in (0..q).rev() {
            r = r.mul(&delta);
            r.coeffs[0] += series[n];
        }
        r
    }

    fn apply(&self, f: Func) -> Result<Jet, ExprError> {
        let q = self.order;
        let x0 = self.coeffs[0];
        let mut s = vec![0.0; q + 1];
        match f {
            Func::Exp => {
                let e = x0.exp();
                let mut fact = 1.0;
                for (n, v) in s.iter_mut().enumerate() {
                    if n > 0 {
                        fact *= n as f64;
                    }
                    *v = e / fact;
                }
            }
            Func::Sin | Func::Cos => {
                let (sn, cs) = x0.sin_cos();
                let cycle = match f {
                    Func::Sin => [sn, cs, -sn, -cs],
                    _ => [cs, -sn, -cs, sn],
                };
                let mut fact = 1.0;
                for (n, v) in s.iter_mut().enumerate() {
                    if n > 0 {
                        fact *= n as f64;
                    }
                    *v = cycle[n % 4] / fact;
                }
            }
            Func::Log => {
                if x0 <= 0.0 {
                    return Err(ExprError::SingularPoint(format!("log of non-positive value {x0}")));
                }
                s[0] = x0.ln();
                for (n, v) in s.iter_mut().enumerate().skip(1) {
                    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                    *v = sign / (n as f64 * x0.powi(n as i32));
                }
            }
            Func::Sqrt => return self.powf(0.5),
            Func::Step => {
                s[0] = Func::Step.apply(x0);
            }
        }
        Ok(self.compose(&s))
    }

    /// Real power `self^r` via the binomial series; needs a positive base.
    pub fn powf(&self, r: f64) -> Result<Jet, ExprError> {
        let x0 = self.coeffs[0];
        if x0 <= 0.0 && !(x0 == 0.0 && self.order == 0 && r > 0.0) {
            return Err(ExprError::SingularPoint(format!(
                "non-integer power {r} of non-positive value {x0}"
            )));
        }
        let mut s = vec![0.0; self.order + 1];
        let mut binom = 1.0;
        for (n, v) in s.iter_mut().enumerate() {
            if n > 0 {
                binom *= (r - (n as f64 - 1.0)) / n as f64;
            }
            *v = binom * x0.powf(r - n as f64);
        }
        Ok(self.compose(&s))
    }
}

/// Degree-`order` Taylor jet of `expr` at `center`.
pub fn jet_eval(expr: &Expr, center: &[f64], order: usize) -> Result<Jet, ExprError> {
    Ok(match expr {
        Expr::Const(c) => Jet::constant(center, order, *c),
        Expr::Var(k) => Jet::variable(center, order, *k),
        Expr::Neg(a) => jet_eval(a, center, order)?.neg(),
        Expr::Call(f, a) => jet_eval(a, center, order)?.apply(*f)?,
        Expr::Binary(op, a, b) => {
            if *op == BinOp::Pow {
                let base = jet_eval(a, center, order)?;
                return match b.constant_value() {
                    Some(e) if e.fract() == 0.0 && e.abs() <= 64.0 => base.powi(e as i64),
                    Some(e) => base.powf(e),
                    None => {
                        // a^b = exp(b log a)
                        let log_a = base.apply(Func::Log)?;
                        jet_eval(b, center, order)?.mul(&log_a).apply(Func::Exp)
                    }
                };
            }
            let (ja, jb) = (jet_eval(a, center, order)?, jet_eval(b, center, order)?);
            match op {
                BinOp::Add => ja.add(&jb),
                BinOp::Sub => ja.sub(&jb),
                BinOp::Mul => ja.mul(&jb),
                BinOp::Div => ja.div(&jb)?,
                BinOp::Pow => unreachable!(),
            }
        }
    })
}

/// `D^i f(center)` read from a jet.
pub fn jet_derivative(jet: &Jet, i: &MultiIndex) -> Result<f64, ExprError> {
    jet.derivative(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffjet::parse;
    use proptest::prelude::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn exponential_series() {
        let j = jet_eval(&parse("exp(x1)", 1).unwrap(), &[0.0], 2).unwrap();
        assert_eq!(j.coeffs(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn reciprocal_gradient_matches_finite_differences() {
        let e = parse("1/(1+x1+x2)", 2).unwrap();
        let j = jet_eval(&e, &[0.0, 0.0], 1).unwrap();
        let h = 1e-5;
        let fd = |k: usize| {
            let mut p = [0.0, 0.0];
            let mut m = [0.0, 0.0];
            p[k] = h;
            m[k] = -h;
            (e.eval(&p) - e.eval(&m)) / (2.0 * h)
        };
        assert_eq!(j.value(), 1.0);
        assert!((j.derivative(&mi(&[1, 0])).unwrap() - fd(0)).abs() < 1e-9);
        assert!((j.derivative(&mi(&[0, 1])).unwrap() - fd(1)).abs() < 1e-9);
        assert!((fd(0) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bilinear_product_is_exact() {
        let j = jet_eval(&parse("x1*x2", 2).unwrap(), &[1.0, 2.0], 2).unwrap();
        assert_eq!(j.value(), 2.0);
        assert_eq!(j.derivative(&mi(&[1, 0])).unwrap(), 2.0);
        assert_eq!(j.derivative(&mi(&[0, 1])).unwrap(), 1.0);
        assert_eq!(j.coeff(&mi(&[1, 1])), 1.0);
        assert_eq!(j.coeff(&mi(&[2, 0])), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let s = jet_eval(&parse("sin(x1)", 1).unwrap(), &[0.0], 4).unwrap();
        assert!((s.derivative(&mi(&[3])).unwrap() + 1.0).abs() < 1e-15);
        let c = jet_eval(&parse("7", 2).unwrap(), &[0.3, 0.4], 3).unwrap();
        assert_eq!(c.derivative(&mi(&[0, 0])).unwrap(), 7.0);
        assert!(c.coeffs()[1..].iter().all(|&v| v == 0.0));
        let p = jet_eval(&parse("(1+x1+x2)*x1", 2).unwrap(), &[0.0, 0.0], 2).unwrap();
        assert_eq!(p.derivative(&mi(&[2, 0])).unwrap(), 2.0);
        assert!(matches!(
            p.derivative(&mi(&[2, 1])),
            Err(ExprError::OrderExceeded { requested: 3, order: 2 })
        ));
    }

    #[test]
    fn singular_points_are_reported() {
        let e = parse("1/x1", 1).unwrap();
        assert!(matches!(jet_eval(&e, &[0.0], 2), Err(ExprError::SingularPoint(_))));
        let e = parse("log(x1)", 1).unwrap();
        assert!(matches!(jet_eval(&e, &[-1.0], 2), Err(ExprError::SingularPoint(_))));
        let e = parse("sqrt(x1)", 1).unwrap();
        assert!(matches!(jet_eval(&e, &[0.0], 1), Err(ExprError::SingularPoint(_))));
        assert!(jet_eval(&e, &[4.0], 3).is_ok());
    }

    #[test]
    fn powers_and_partials() {
        let c = [0.5, -0.25];
        let a = jet_eval(&parse("(1+x1)^3*x2^-2", 2).unwrap(), &c, 4).unwrap();
        let b = jet_eval(&parse("(1+x1)*(1+x1)*(1+x1)/(x2*x2)", 2).unwrap(), &c, 4).unwrap();
        for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
        let g = jet_eval(&parse("(2+x1)^x2", 2).unwrap(), &c, 3).unwrap();
        let h = jet_eval(&parse("exp(x2*log(2+x1))", 2).unwrap(), &c, 3).unwrap();
        for (u, v) in g.coeffs().iter().zip(h.coeffs()) {
            assert!((u - v).abs() <= 1e-13 * v.abs().max(1.0));
        }
        // ∂/∂x1 of x1^2 x2 is 2 x1 x2
        let j = jet_eval(&parse("x1^2*x2", 2).unwrap(), &c, 3).unwrap().partial(0);
        let expect = jet_eval(&parse("2*x1*x2", 2).unwrap(), &c, 2).unwrap();
        for (u, v) in j.coeffs().iter().zip(expect.coeffs()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn product_jet_is_jet_of_product(cx in -0.5f64..0.5, cy in -0.5f64..0.5, a in 0.1f64..2.0, b in -1.0f64..1.0) {
            let f = format!("sin({a}*x1+x2)*exp({b}*x2)");
            let g = format!("1/(2+cos(x1*x2))+x1^2");
            let fg = format!("({f})*({g})");
            let c = [cx, cy];
            let jf = jet_eval(&parse(&f, 2).unwrap(), &c, 5).unwrap();
            let jg = jet_eval(&parse(&g, 2).unwrap(), &c, 5).unwrap();
            let jfg = jet_eval(&parse(&fg, 2).unwrap(), &c, 5).unwrap();
            for (u, v) in jf.mul(&jg).coeffs().iter().zip(jfg.coeffs()) {
                prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }

        #[test]
        fn division_inverts_multiplication(cx in -0.5f64..0.5, cy in -0.5f64..0.5) {
            let c = [cx, cy];
            let f = jet_eval(&parse("exp(x1-x2)+x1*x2", 2).unwrap(), &c, 6).unwrap();
            let g = jet_eval(&parse("3+sin(x1+2*x2)", 2).unwrap(), &c, 6).unwrap();
            let back = f.div(&g).unwrap().mul(&g);
            for (u, v) in back.coeffs().iter().zip(f.coeffs()) {
                prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }
}
