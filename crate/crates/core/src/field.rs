//! Scalar test fields: complex values with Euclidean first and second derivatives.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::group::GroupDescriptor;
use crate::jet::{CJet, Jet};
use crate::quad::Shape;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    /// Central differences; `None` picks the default step per coordinate.
    FiniteDiff(Option<f64>),
}

/// A complex-valued field on `R^n`.
///
/// `jet` returns the value together with the Euclidean gradient and Hessian.
/// Implementations must be pure so quadrature can call them from several
/// threads.
pub trait ScalarField: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn jet(&self, x: &[f64]) -> CJet;

    fn value(&self, x: &[f64]) -> Complex64 {
        self.jet(x).value()
    }

    /// Real part only. Real-valued fields can override this to skip the imaginary jet.
    fn real_jet(&self, x: &[f64]) -> Jet {
        self.jet(x).re
    }

    fn mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    /// Closed region outside of which the field vanishes identically.
    fn support(&self) -> Option<&Shape> {
        None
    }

    fn is_real(&self) -> bool {
        false
    }

    fn euclidean_gradient(&self, x: &[f64]) -> Vec<Complex64> {
        let j = self.jet(x);
        (0..x.len()).map(|i| j.grad(i)).collect()
    }

    /// Row-major `n x n` Hessian.
    fn euclidean_hessian(&self, x: &[f64]) -> Vec<Complex64> {
        let j = self.jet(x);
        let n = x.len();
        let mut h = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                h.push(j.hess(a, b));
            }
        }
        h
    }
}

type ComplexFn = dyn Fn(&[Jet]) -> CJet + Send + Sync;
type RealFn = dyn Fn(&[Jet]) -> Jet + Send + Sync;

#[derive(Clone)]
enum Body {
    Complex(Arc<ComplexFn>),
    Real(Arc<RealFn>),
}

/// Field defined by a closure over coordinate jets, differentiated exactly.
#[derive(Clone)]
pub struct JetField {
    name: String,
    dim: usize,
    body: Body,
    support: Option<Shape>,
}

impl JetField {
    pub fn complex(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[Jet]) -> CJet + Send + Sync + 'static,
    ) -> Self {
        JetField {
            name: name.into(),
            dim,
            body: Body::Complex(Arc::new(f)),
            support: None,
        }
    }

    pub fn real(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    ) -> Self {
        JetField {
            name: name.into(),
            dim,
            body: Body::Real(Arc::new(f)),
            support: None,
        }
    }

    pub fn with_support(mut self, shape: Shape) -> Self {
        self.support = Some(shape);
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Product with `exp(i theta)` for a real phase closure.
    pub fn with_phase(
        self,
        label: &str,
        theta: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    ) -> Self {
        let name = format!("{}*{}", self.name, label);
        let support = self.support.clone();
        let inner = self;
        let mut out = JetField::complex(name, inner.dim, move |v| {
            let base = inner.eval_jets(v);
            if base.is_zero() {
                return base;
            }
            base * CJet::expi(theta(v))
        });
        out.support = support;
        out
    }

    /// Multiplies by a complex constant.
    pub fn scaled(self, c: Complex64) -> Self {
        let name = format!("({c})*{}", self.name);
        let support = self.support.clone();
        let inner = self;
        let mut out = JetField::complex(name, inner.dim, move |v| inner.eval_jets(v).scale(c));
        out.support = support;
        out
    }

    /// Evaluates the body on coordinate jets, e.g. to compose fields.
    pub fn eval_jets(&self, v: &[Jet]) -> CJet {
        match &self.body {
            Body::Complex(f) => f(v),
            Body::Real(f) => CJet::from_real(f(v)),
        }
    }
}

impl ScalarField for JetField {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: &[f64]) -> CJet {
        let v = Jet::variables(x);
        self.eval_jets(&v[..x.len()])
    }

    fn real_jet(&self, x: &[f64]) -> Jet {
        let v = Jet::variables(x);
        match &self.body {
            Body::Complex(f) => f(&v[..x.len()]).re,
            Body::Real(f) => f(&v[..x.len()]),
        }
    }

    fn support(&self) -> Option<&Shape> {
        self.support.as_ref()
    }

    fn is_real(&self) -> bool {
        matches!(self.body, Body::Real(_))
    }
}

impl fmt::Debug for JetField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("support", &self.support)
            .finish()
    }
}

/// Replaces the derivatives of an inner field by central differences of its values.
pub struct FiniteDiff<F> {
    inner: F,
    step: Option<f64>,
    name: String,
}

impl<F: ScalarField> FiniteDiff<F> {
    pub fn new(inner: F) -> Self {
        let name = format!("fd({})", inner.name());
        FiniteDiff {
            inner,
            step: None,
            name,
        }
    }

    /// Fixed step used for both the gradient and the Hessian.
    pub fn with_step(mut self, h: f64) -> Self {
        self.step = Some(h);
        self
    }

    fn steps(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self.step {
            Some(h) => (vec![h; x.len()], vec![h; x.len()]),
            None => {
                let e = f64::EPSILON;
                let g = x.iter().map(|v| e.cbrt() * v.abs().max(1.0)).collect();
                let h = x.iter().map(|v| e.sqrt().sqrt() * v.abs().max(1.0)).collect();
                (g, h)
            }
        }
    }
}

impl<F: ScalarField> ScalarField for FiniteDiff<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        self.inner.value(x)
    }

    fn jet(&self, x: &[f64]) -> CJet {
        let n = x.len();
        let (hg, hh) = self.steps(x);
        let f0 = self.inner.value(x);
        let mut y = x.to_vec();
        let mut grad = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            y[i] = x[i] + hg[i];
            let fp = self.inner.value(&y);
            y[i] = x[i] - hg[i];
            let fm = self.inner.value(&y);
            y[i] = x[i];
            grad[i] = (fp - fm) / (2.0 * hg[i]);
        }
        let mut hess = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            y[i] = x[i] + hh[i];
            let fp = self.inner.value(&y);
            y[i] = x[i] - hh[i];
            let fm = self.inner.value(&y);
            y[i] = x[i];
            hess[i * n + i] = (fp - 2.0 * f0 + fm) / (hh[i] * hh[i]);
            for j in (i + 1)..n {
                let mut corner = |si: f64, sj: f64| {
                    y[i] = x[i] + si * hh[i];
                    y[j] = x[j] + sj * hh[j];
                    let v = self.inner.value(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    v
                };
                let d = corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0);
                let v = d / (4.0 * hh[i] * hh[j]);
                hess[i * n + j] = v;
                hess[j * n + i] = v;
            }
        }
        let re_g: Vec<f64> = grad.iter().map(|c| c.re).collect();
        let im_g: Vec<f64> = grad.iter().map(|c| c.im).collect();
        let re_h: Vec<f64> = hess.iter().map(|c| c.re).collect();
        let im_h: Vec<f64> = hess.iter().map(|c| c.im).collect();
        CJet {
            re: Jet::from_parts(f0.re, &re_g, &re_h),
            im: Jet::from_parts(f0.im, &im_g, &im_h),
        }
    }

    fn mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDiff(self.step)
    }

    fn support(&self) -> Option<&Shape> {
        self.inner.support()
    }

    fn is_real(&self) -> bool {
        self.inner.is_real()
    }
}

/// Squared Euclidean distance from `c` as a jet.
pub fn dist_sq(v: &[Jet], c: &[f64]) -> Jet {
    let mut acc = Jet::constant(v.len(), 0.0);
    for (vi, ci) in v.iter().zip(c) {
        acc += (*vi - *ci).square();
    }
    acc
}

/// `(1 - s)^4` for `s < 1`, zero otherwise; a C^3 cutoff profile.
pub fn quartic_cutoff(s: Jet) -> Jet {
    let t = 1.0 - s.value();
    if t <= 0.0 {
        return Jet::constant(s.dim(), 0.0);
    }
    s.chain(t.powi(4), -4.0 * t.powi(3), 12.0 * t * t)
}

/// Polynomial bump `(1 - |x - c|^2 / r^2)^4` supported in the closed ball `B(c, r)`.
pub fn bump(center: Vec<f64>, radius: f64) -> JetField {
    let n = center.len();
    let name = format!("bump(c={center:?},r={radius})");
    let shape = Shape::EuclideanBall {
        center: center.clone(),
        radius,
    };
    JetField::real(name, n, move |v| {
        quartic_cutoff(dist_sq(v, &center) / (radius * radius))
    })
    .with_support(shape)
}

/// `exp(-a |x - c|^2)` times the bump of radius `r`.
pub fn tapered_gaussian(center: Vec<f64>, a: f64, radius: f64) -> JetField {
    let n = center.len();
    let name = format!("tgauss(c={center:?},a={a},r={radius})");
    let shape = Shape::EuclideanBall {
        center: center.clone(),
        radius,
    };
    JetField::real(name, n, move |v| {
        let s = dist_sq(v, &center);
        let cut = quartic_cutoff(s / (radius * radius));
        if cut.is_zero() {
            return cut;
        }
        (s * (-a)).exp() * cut
    })
    .with_support(shape)
}

/// Untapered `exp(-a |x - c|^2)`.
pub fn gaussian(center: Vec<f64>, a: f64) -> JetField {
    let n = center.len();
    let name = format!("gauss(c={center:?},a={a})");
    JetField::real(name, n, move |v| (dist_sq(v, &center) * (-a)).exp())
}

/// `d(x)^alpha` for the homogeneous gauge of `g`.
pub fn gauge_power(g: &GroupDescriptor, alpha: f64) -> JetField {
    let gg = g.clone();
    JetField::real(format!("d^{alpha}"), g.topological_dim(), move |v| gg.gauge_of(v).powf(alpha))
}

/// `|x'|^alpha` for the first-stratum coordinates of `g`.
pub fn first_stratum_power(g: &GroupDescriptor, alpha: f64) -> JetField {
    let gg = g.clone();
    JetField::real(format!("|x'|^{alpha}"), g.topological_dim(), move |v| {
        gg.first_stratum_norm_of(v).powf(alpha)
    })
}

/// Linear phase `k . x` plus a quadratic chirp `m |x|^2`.
pub fn linear_chirp_phase(k: Vec<f64>, m: f64) -> impl Fn(&[Jet]) -> Jet + Send + Sync + 'static {
    move |v: &[Jet]| {
        let mut acc = Jet::constant(v.len(), 0.0);
        for (vi, ki) in v.iter().zip(&k) {
            acc += *vi * *ki;
        }
        acc + Jet::sum_squares(v) * m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_vanishes_outside_support() {
        let b = bump(vec![0.0, 0.0, 0.0], 1.0);
        assert_eq!(b.value(&[1.5, 0.0, 0.0]), Complex64::new(0.0, 0.0));
        assert!((b.value(&[0.5, 0.0, 0.0]).re - 0.75f64.powi(4)).abs() < 1e-15);
        assert!(b.support().unwrap().contains_point(&[0.2, 0.2, 0.2]));
    }

    #[test]
    fn finite_differences_agree_to_second_order() {
        let f = tapered_gaussian(vec![0.1, -0.2, 0.3], 0.7, 2.0)
            .with_phase("phase", linear_chirp_phase(vec![0.5, 1.0, -0.3], 0.2));
        let x = [0.4, 0.3, -0.2];
        let exact = f.jet(&x);
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3, 2.5e-3] {
            let fd = FiniteDiff::new(f.clone()).with_step(h).jet(&x);
            let mut e: f64 = 0.0;
            for i in 0..3 {
                e = e.max((fd.grad(i) - exact.grad(i)).norm());
                for j in 0..3 {
                    e = e.max((fd.hess(i, j) - exact.hess(i, j)).norm());
                }
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..5.0).contains(&ratio), "ratio {ratio} from {errs:?}");
        }
        let fd = FiniteDiff::new(f.clone()).jet(&x);
        for i in 0..3 {
            for j in 0..3 {
                assert!((fd.hess(i, j) - fd.hess(j, i)).norm() <= 1e-8 * (1.0 + fd.hess(i, j).norm()));
                assert!((fd.hess(i, j) - exact.hess(i, j)).norm() < 1e-6);
            }
        }
    }
}
