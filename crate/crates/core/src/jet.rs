//! Second-order forward-mode jets.
//!
//! A [`Jet`] carries a value together with its Euclidean gradient and Hessian
//! with respect to the ambient coordinates. Arithmetic and elementary
//! functions propagate all three exactly, which is what the analytic
//! derivative mode of [`crate::field::ScalarField`] is built on. The Hessian
//! is stored packed (upper triangle) so a jet stays small enough to live on
//! the stack in quadrature loops.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Largest ambient dimension supported by jets, fields and quadrature.
pub const MAX_DIM: usize = 7;

const HLEN: usize = MAX_DIM * (MAX_DIM + 1) / 2;

const fn build_index() -> [[usize; MAX_DIM]; MAX_DIM] {
    let mut t = [[0usize; MAX_DIM]; MAX_DIM];
    let mut k = 0;
    let mut i = 0;
    while i < MAX_DIM {
        let mut j = i;
        while j < MAX_DIM {
            t[i][j] = k;
            t[j][i] = k;
            k += 1;
            j += 1;
        }
        i += 1;
    }
    t
}

const HIDX: [[usize; MAX_DIM]; MAX_DIM] = build_index();

/// Real value with gradient and Hessian in `n` variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    n: usize,
    v: f64,
    g: [f64; MAX_DIM],
    h: [f64; HLEN],
}

impl Jet {
    pub fn constant(n: usize, c: f64) -> Self {
        debug_assert!(n <= MAX_DIM);
        Jet {
            n,
            v: c,
            g: [0.0; MAX_DIM],
            h: [0.0; HLEN],
        }
    }

    /// The coordinate function `x_i` evaluated at `x`.
    pub fn variable(x: &[f64], i: usize) -> Self {
        let mut j = Jet::constant(x.len(), x[i]);
        j.g[i] = 1.0;
        j
    }

    /// All coordinate functions at `x`.
    pub fn variables(x: &[f64]) -> [Jet; MAX_DIM] {
        let mut out = [Jet::constant(x.len(), 0.0); MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(x.len()) {
            *o = Jet::variable(x, i);
        }
        out
    }

    /// Builds a jet from explicit value, gradient and full Hessian (row-major `n*n`).
    pub fn from_parts(value: f64, grad: &[f64], hess: &[f64]) -> Self {
        let n = grad.len();
        assert!(hess.len() == n * n);
        let mut j = Jet::constant(n, value);
        j.g[..n].copy_from_slice(grad);
        for a in 0..n {
            for b in a..n {
                j.h[HIDX[a][b]] = 0.5 * (hess[a * n + b] + hess[b * n + a]);
            }
        }
        j
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.v
    }

    #[inline]
    pub fn grad(&self, i: usize) -> f64 {
        self.g[i]
    }

    #[inline]
    pub fn gradient(&self) -> &[f64] {
        &self.g[..self.n]
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[HIDX[i][j]]
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0
            && self.g[..self.n].iter().all(|&x| x == 0.0)
            && self.h.iter().all(|&x| x == 0.0)
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        let n = self.n;
        let mut out = Jet::constant(n, f0);
        for i in 0..n {
            out.g[i] = f1 * self.g[i];
        }
        for i in 0..n {
            let gi = self.g[i];
            for j in i..n {
                let k = HIDX[i][j];
                out.h[k] = f1 * self.h[k] + f2 * gi * self.g[j];
            }
        }
        out
    }

    pub fn powf(&self, a: f64) -> Jet {
        let v = self.v;
        if a == 0.0 {
            return Jet::constant(self.n, 1.0);
        }
        let p2 = v.powf(a - 2.0);
        let p1 = p2 * v;
        let p0 = p1 * v;
        self.chain(p0, a * p1, a * (a - 1.0) * p2)
    }

    pub fn powi(&self, k: i32) -> Jet {
        let v = self.v;
        match k {
            0 => Jet::constant(self.n, 1.0),
            1 => *self,
            2 => self.square(),
            _ => {
                let p2 = v.powi(k - 2);
                let p1 = p2 * v;
                self.chain(p1 * v, k as f64 * p1, (k * (k - 1)) as f64 * p2)
            }
        }
    }

    pub fn square(&self) -> Jet {
        self.chain(self.v * self.v, 2.0 * self.v, 2.0)
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Jet {
        let v = self.v;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn recip(&self) -> Jet {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut out = *self;
        out.v *= c;
        for g in out.g[..self.n].iter_mut() {
            *g *= c;
        }
        for h in out.h.iter_mut() {
            *h *= c;
        }
        out
    }

    /// Sum of squares of the given jets.
    pub fn sum_squares(items: &[Jet]) -> Jet {
        let n = items.first().map(|j| j.n).unwrap_or(0);
        items
            .iter()
            .fold(Jet::constant(n, 0.0), |acc, j| acc + j.square())
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, rhs: Jet) -> Jet {
        self += rhs;
        self
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, rhs: Jet) {
        self.v += rhs.v;
        for i in 0..self.n {
            self.g[i] += rhs.g[i];
        }
        for (a, b) in self.h.iter_mut().zip(rhs.h.iter()) {
            *a += b;
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, rhs: Jet) -> Jet {
        self -= rhs;
        self
    }
}

impl SubAssign for Jet {
    #[inline]
    fn sub_assign(&mut self, rhs: Jet) {
        self.v -= rhs.v;
        for i in 0..self.n {
            self.g[i] -= rhs.g[i];
        }
        for (a, b) in self.h.iter_mut().zip(rhs.h.iter()) {
            *a -= b;
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, rhs: Jet) -> Jet {
        let n = self.n;
        let (a, b) = (self.v, rhs.v);
        let mut out = Jet::constant(n, a * b);
        for i in 0..n {
            out.g[i] = a * rhs.g[i] + b * self.g[i];
        }
        for i in 0..n {
            for j in i..n {
                let k = HIDX[i][j];
                out.h[k] = a * rhs.h[k]
                    + b * self.h[k]
                    + self.g[i] * rhs.g[j]
                    + self.g[j] * rhs.g[i];
            }
        }
        out
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, rhs: Jet) {
        *self = *self * rhs;
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.v += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.v -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs.scale(self)
    }
}

/// Complex-valued jet carried as a (real, imaginary) pair of real jets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CJet {
    pub re: Jet,
    pub im: Jet,
}

impl CJet {
    pub fn zero(n: usize) -> Self {
        CJet {
            re: Jet::constant(n, 0.0),
            im: Jet::constant(n, 0.0),
        }
    }

    pub fn from_real(re: Jet) -> Self {
        CJet {
            re,
            im: Jet::constant(re.dim(), 0.0),
        }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        CJet {
            re: Jet::constant(n, c.re),
            im: Jet::constant(n, c.im),
        }
    }

    /// `exp(i * theta)` for a real phase jet.
    pub fn expi(theta: Jet) -> Self {
        CJet {
            re: theta.cos(),
            im: theta.sin(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.re.dim()
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }

    #[inline]
    pub fn grad(&self, i: usize) -> Complex64 {
        Complex64::new(self.re.grad(i), self.im.grad(i))
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re.hess(i, j), self.im.hess(i, j))
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    /// `|f|^2` as a real jet.
    pub fn norm_sqr(&self) -> Jet {
        self.re.square() + self.im.square()
    }

    pub fn scale(&self, c: Complex64) -> CJet {
        CJet {
            re: self.re.scale(c.re) - self.im.scale(c.im),
            im: self.re.scale(c.im) + self.im.scale(c.re),
        }
    }

    pub fn mul_real(&self, r: Jet) -> CJet {
        CJet {
            re: self.re * r,
            im: self.im * r,
        }
    }
}

impl Add for CJet {
    type Output = CJet;
    fn add(self, rhs: CJet) -> CJet {
        CJet {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl Sub for CJet {
    type Output = CJet;
    fn sub(self, rhs: CJet) -> CJet {
        CJet {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl Mul for CJet {
    type Output = CJet;
    fn mul(self, rhs: CJet) -> CJet {
        CJet {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

impl Mul<Jet> for CJet {
    type Output = CJet;
    fn mul(self, rhs: Jet) -> CJet {
        self.mul_real(rhs)
    }
}

impl Neg for CJet {
    type Output = CJet;
    fn neg(self) -> CJet {
        CJet {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl From<Jet> for CJet {
    fn from(re: Jet) -> Self {
        CJet::from_real(re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64]) -> Jet, x: &[f64]) {
        let j = f(x);
        let n = x.len();
        let h = 1e-5;
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            let dg = (fp.value() - fm.value()) / (2.0 * h);
            assert!((dg - j.grad(i)).abs() < 1e-6 * (1.0 + dg.abs()), "grad {i}");
            for k in 0..n {
                let dh = (fp.grad(k) - fm.grad(k)) / (2.0 * h);
                assert!(
                    (dh - j.hess(i, k)).abs() < 1e-5 * (1.0 + dh.abs()),
                    "hess {i}{k}: {dh} vs {}",
                    j.hess(i, k)
                );
            }
        }
    }

    #[test]
    fn elementary_functions_match_differences() {
        let x = [0.7, -0.4, 1.3];
        fd_check(
            |x| {
                let v = Jet::variables(x);
                (v[0] * v[1] + v[2].square()).exp() / (1.0 + v[0].square())
            },
            &x,
        );
        fd_check(
            |x| {
                let v = Jet::variables(x);
                (v[0].square() + v[1].square() + v[2].square()).powf(-0.75) * v[1].sin()
            },
            &x,
        );
        fd_check(
            |x| {
                let v = Jet::variables(x);
                (v[2] + 2.0).ln().sqrt() * v[0].cos() - v[1].powi(3)
            },
            &x,
        );
    }

    #[test]
    fn complex_product_rule() {
        let x = [0.3, 0.5];
        let v = Jet::variables(&x);
        let f = CJet::expi(v[0] * v[1]) * CJet::from_real(v[0]);
        // d/dx0 [x0 e^{i x0 x1}] = e^{i x0 x1} (1 + i x0 x1)
        let e = Complex64::new(0.0, x[0] * x[1]).exp();
        let expected = e * Complex64::new(1.0, x[0] * x[1]);
        assert!((f.grad(0) - expected).norm() < 1e-14);
        assert!((f.norm_sqr().value() - x[0] * x[0]).abs() < 1e-14);
    }

    #[test]
    fn from_parts_symmetrises() {
        let j = Jet::from_parts(1.0, &[1.0, 2.0], &[1.0, 3.0, 5.0, 4.0]);
        assert_eq!(j.hess(0, 1), 4.0);
        assert_eq!(j.hess(1, 0), 4.0);
        assert_eq!(j.hess(1, 1), 4.0);
    }
}
