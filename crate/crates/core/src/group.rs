//! Stratified groups of step at most two in exponential coordinates.
//!
//! The law on a step-two group is
//! `(x', x'') o (y', y'') = (x' + y', x'' + y'' + B(x', y') / 2)` with one
//! antisymmetric bilinear form per second-stratum coordinate. The left-invariant
//! field `X_k` then has coefficient vector `a_k(x) = e_k + M_k x`, linear in the
//! first stratum, which is what the horizontal calculus in [`crate::hcalc`]
//! consumes.

use std::fmt;
use std::ops::Deref;

use crate::error::{invalid, Error, Result};
use crate::jet::{Jet, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Abelian,
    Heisenberg,
    StepTwo,
}

/// Closed form of the homogeneous gauge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gauge {
    /// `|x|`, only meaningful on abelian groups.
    Euclidean,
    /// `(|x'|^4 + c |x''|^2)^{1/4}`.
    Koranyi { c: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn zeros(n: usize) -> Self {
        Point {
            coords: vec![0.0; n],
        }
    }

    /// Block of coordinates belonging to stratum `l` (1-based).
    pub fn stratum<'a>(&'a self, g: &GroupDescriptor, l: usize) -> &'a [f64] {
        g.stratum(&self.coords, l)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point { coords }
    }
}

/// Coefficient vectors `a_k(x)` of all horizontal fields at one point.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub n: usize,
    pub nh: usize,
    pub a: [[f64; MAX_DIM]; MAX_DIM],
}

impl Frame {
    #[inline]
    pub fn dot(&self, k: usize, v: &[f64]) -> f64 {
        let a = &self.a[k];
        let mut s = 0.0;
        for i in 0..self.n {
            s += a[i] * v[i];
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct GroupDescriptor {
    kind: GroupKind,
    strata_dims: Vec<usize>,
    offsets: Vec<usize>,
    n: usize,
    nh: usize,
    q: usize,
    brackets: Vec<Vec<f64>>,
    // per horizontal field k: (row, column, value) entries of M_k
    coeff_terms: Vec<Vec<(usize, usize, f64)>>,
    gauge: Gauge,
    gauge_scale: f64,
}

impl GroupDescriptor {
    /// The abelian group `(R^n, +)`.
    pub fn abelian(n: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(invalid(format!(
                "abelian dimension must lie in 2..={MAX_DIM}, got {n}"
            )));
        }
        Ok(Self::build(
            GroupKind::Abelian,
            vec![n],
            Vec::new(),
            Gauge::Euclidean,
        ))
    }

    /// The Heisenberg group of topological dimension `2m + 1`, coordinates `(x, y, t)`.
    pub fn heisenberg(m: usize) -> Result<Self> {
        if m == 0 || 2 * m + 1 > MAX_DIM {
            return Err(invalid(format!(
                "Heisenberg index must lie in 1..={}, got {m}",
                (MAX_DIM - 1) / 2
            )));
        }
        let nh = 2 * m;
        let mut b = vec![0.0; nh * nh];
        for j in 0..m {
            b[j * nh + (m + j)] = 1.0;
            b[(m + j) * nh + j] = -1.0;
        }
        Ok(Self::build(
            GroupKind::Heisenberg,
            vec![nh, 1],
            vec![b],
            Gauge::Koranyi { c: 16.0 },
        ))
    }

    /// A user-defined step-two group. `brackets[m]` is the antisymmetric `n1 x n1`
    /// form (row-major) giving the `m`-th second-stratum coordinate of the law.
    pub fn step_two(n1: usize, brackets: Vec<Vec<f64>>, gauge: Gauge) -> Result<Self> {
        let n2 = brackets.len();
        if n1 == 0 || n2 == 0 || n1 + n2 > MAX_DIM {
            return Err(invalid(format!(
                "step-two group needs n1 >= 1, n2 >= 1, n1 + n2 <= {MAX_DIM}"
            )));
        }
        for (m, b) in brackets.iter().enumerate() {
            if b.len() != n1 * n1 {
                return Err(invalid(format!("bracket {m} must have {} entries", n1 * n1)));
            }
            for i in 0..n1 {
                for j in 0..n1 {
                    if (b[i * n1 + j] + b[j * n1 + i]).abs() > 1e-14 {
                        return Err(invalid(format!("bracket {m} is not antisymmetric")));
                    }
                }
            }
        }
        if let Gauge::Koranyi { c } = gauge {
            if !(c > 0.0) {
                return Err(invalid("Koranyi coefficient must be positive"));
            }
        } else {
            return Err(invalid("a step-two group needs a Koranyi-type gauge"));
        }
        Ok(Self::build(GroupKind::StepTwo, vec![n1, n2], brackets, gauge))
    }

    fn build(kind: GroupKind, strata_dims: Vec<usize>, brackets: Vec<Vec<f64>>, gauge: Gauge) -> Self {
        let mut offsets = Vec::with_capacity(strata_dims.len() + 1);
        let mut acc = 0;
        for &d in &strata_dims {
            offsets.push(acc);
            acc += d;
        }
        offsets.push(acc);
        let n = acc;
        let nh = strata_dims[0];
        let q = strata_dims
            .iter()
            .enumerate()
            .map(|(l, &d)| (l + 1) * d)
            .sum();
        let mut coeff_terms = vec![Vec::new(); nh];
        for (m, b) in brackets.iter().enumerate() {
            for (k, terms) in coeff_terms.iter_mut().enumerate() {
                for i in 0..nh {
                    let v = 0.5 * b[i * nh + k];
                    if v != 0.0 {
                        terms.push((nh + m, i, v));
                    }
                }
            }
        }
        GroupDescriptor {
            kind,
            strata_dims,
            offsets,
            n,
            nh,
            q,
            brackets,
            coeff_terms,
            gauge,
            gauge_scale: 1.0,
        }
    }

    /// Same group with the gauge multiplied by `c > 0`.
    pub fn with_gauge_scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("gauge scale must be positive, got {c}")));
        }
        let mut g = self.clone();
        g.gauge_scale = c;
        Ok(g)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn name(&self) -> String {
        match self.kind {
            GroupKind::Abelian => format!("Abelian({})", self.n),
            GroupKind::Heisenberg => format!("Heisenberg({})", self.nh / 2),
            GroupKind::StepTwo => format!("StepTwo({},{})", self.nh, self.n - self.nh),
        }
    }

    pub fn step(&self) -> usize {
        self.strata_dims.len()
    }

    pub fn strata_dims(&self) -> &[usize] {
        &self.strata_dims
    }

    pub fn topological_dim(&self) -> usize {
        self.n
    }

    pub fn homogeneous_dim(&self) -> usize {
        self.q
    }

    /// Dimension `N` of the first stratum.
    pub fn first_stratum_dim(&self) -> usize {
        self.nh
    }

    pub fn gauge_kind(&self) -> Gauge {
        self.gauge
    }

    pub fn gauge_scale(&self) -> f64 {
        self.gauge_scale
    }

    /// Dilation weight (stratum index, 1-based) of coordinate `i`.
    pub fn weight_of(&self, i: usize) -> usize {
        self.offsets.iter().skip(1).position(|&o| i < o).unwrap_or(0) + 1
    }

    pub fn stratum<'a>(&self, x: &'a [f64], l: usize) -> &'a [f64] {
        &x[self.offsets[l - 1]..self.offsets[l]]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(invalid(format!(
                "point of length {} on {} (dimension {})",
                x.len(),
                self.name(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Result<Point> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("dilation factor must be positive, got {lambda}")));
        }
        self.check(x)?;
        Ok(Point::new(self.dilate_raw(lambda, x)))
    }

    pub(crate) fn dilate_raw(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for (l, w) in self.offsets.windows(2).enumerate() {
            let s = lambda.powi(l as i32 + 1);
            for v in &mut out[w[0]..w[1]] {
                *v *= s;
            }
        }
        out
    }

    pub fn multiply(&self, a: &[f64], b: &[f64]) -> Result<Point> {
        self.check(a)?;
        self.check(b)?;
        let mut out: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + q).collect();
        let nh = self.nh;
        for (m, br) in self.brackets.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..nh {
                for j in 0..nh {
                    s += br[i * nh + j] * a[i] * b[j];
                }
            }
            out[nh + m] += 0.5 * s;
        }
        Ok(Point::new(out))
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Point> {
        self.check(x)?;
        Ok(Point::new(x.iter().map(|v| -v).collect()))
    }

    pub fn first_stratum_norm(&self, x: &[f64]) -> f64 {
        x[..self.nh].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn gauge(&self, x: &[f64]) -> f64 {
        let d = match self.gauge {
            Gauge::Euclidean => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Gauge::Koranyi { c } => {
                let r2: f64 = x[..self.nh].iter().map(|v| v * v).sum();
                let t2: f64 = x[self.nh..].iter().map(|v| v * v).sum();
                (r2 * r2 + c * t2).sqrt().sqrt()
            }
        };
        self.gauge_scale * d
    }

    /// The gauge as a second-order jet at `x` (requires `x != 0`).
    pub fn gauge_jet(&self, x: &[f64]) -> Jet {
        let v = Jet::variables(x);
        self.gauge_of(&v[..self.n])
    }

    /// The gauge applied to coordinate jets, for building composite fields.
    pub fn gauge_of(&self, v: &[Jet]) -> Jet {
        let d = match self.gauge {
            Gauge::Euclidean => Jet::sum_squares(&v[..self.n]).sqrt(),
            Gauge::Koranyi { c } => {
                let r2 = Jet::sum_squares(&v[..self.nh]);
                let mut acc = r2.square();
                for t in &v[self.nh..self.n] {
                    acc += t.square() * c;
                }
                acc.powf(0.25)
            }
        };
        d * self.gauge_scale
    }

    /// `|x'|` applied to coordinate jets.
    pub fn first_stratum_norm_of(&self, v: &[Jet]) -> Jet {
        Jet::sum_squares(&v[..self.nh]).sqrt()
    }

    /// `d(x)^{2-Q}`, the fundamental solution up to the gauge normalization.
    pub fn fundamental_solution(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        if self.q == 2 {
            return Err(invalid("homogeneous dimension 2 has a logarithmic fundamental solution"));
        }
        let d = self.gauge(x);
        if d == 0.0 {
            return Err(Error::Singularity("fundamental solution at the identity".into()));
        }
        Ok(d.powi(2 - self.q as i32))
    }

    /// Euclidean coefficient vector of `X_k` (0-based `k`) at `x`.
    pub fn coeff(&self, k: usize, x: &[f64], out: &mut [f64]) {
        out[..self.n].iter_mut().for_each(|v| *v = 0.0);
        out[k] = 1.0;
        for &(row, col, val) in &self.coeff_terms[k] {
            out[row] += val * x[col];
        }
    }

    pub fn frame(&self, x: &[f64]) -> Frame {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for (k, ak) in a.iter_mut().enumerate().take(self.nh) {
            ak[k] = 1.0;
            for &(row, col, val) in &self.coeff_terms[k] {
                ak[row] += val * x[col];
            }
        }
        Frame {
            n: self.n,
            nh: self.nh,
            a,
        }
    }

    /// Nonzero entries `(row, column, value)` of the constant Jacobian of `a_k`.
    pub fn coeff_jacobian(&self, k: usize) -> &[(usize, usize, f64)] {
        &self.coeff_terms[k]
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        if self.gauge_scale != 1.0 {
            write!(f, " [gauge x{}]", self.gauge_scale)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn groups() -> Vec<GroupDescriptor> {
        vec![
            GroupDescriptor::abelian(3).unwrap(),
            GroupDescriptor::heisenberg(1).unwrap(),
            GroupDescriptor::heisenberg(2).unwrap(),
        ]
    }

    #[test]
    fn dimensions() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        assert_eq!(h.homogeneous_dim(), 4);
        assert_eq!(h.first_stratum_dim(), 2);
        assert_eq!(h.step(), 2);
        let h2 = GroupDescriptor::heisenberg(2).unwrap();
        assert_eq!(h2.homogeneous_dim(), 6);
        let a = GroupDescriptor::abelian(5).unwrap();
        assert_eq!((a.homogeneous_dim(), a.topological_dim()), (5, 5));
        assert_eq!(h.weight_of(0), 1);
        assert_eq!(h.weight_of(2), 2);
    }

    #[test]
    fn documented_values() {
        let a3 = GroupDescriptor::abelian(3).unwrap();
        let h = GroupDescriptor::heisenberg(1).unwrap();
        assert_eq!(&*a3.dilate(2.0, &[1.0, 1.0, 1.0]).unwrap(), &[2.0, 2.0, 2.0]);
        assert_eq!(&*h.dilate(2.0, &[1.0, 0.0, 1.0]).unwrap(), &[2.0, 0.0, 4.0]);
        assert!(h.dilate(0.0, &[1.0, 0.0, 1.0]).is_err());
        let a2 = GroupDescriptor::abelian(2).unwrap();
        assert_eq!(&*a2.multiply(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), &[4.0, 6.0]);
        assert_eq!(&*h.multiply(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), &[1.0, 1.0, 0.5]);
        assert!(h.multiply(&[1.0, 0.0], &[0.0, 1.0, 0.0]).is_err());
        assert_eq!(a3.gauge(&[3.0, 4.0, 0.0]), 5.0);
        assert_eq!(h.gauge(&[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(h.gauge(&[0.0, 0.0, 1.0]), 2.0);
        assert_eq!(h.gauge(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(a3.fundamental_solution(&[0.0, 0.0, 2.0]).unwrap(), 0.5);
        assert_eq!(h.fundamental_solution(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(h.fundamental_solution(&[0.0, 0.0, 1.0]).unwrap(), 0.25);
        assert!(matches!(
            h.fundamental_solution(&[0.0, 0.0, 0.0]),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn heisenberg_coefficients() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let mut a = [0.0; 3];
        h.coeff(0, &[1.0, 2.0, 3.0], &mut a);
        assert_eq!(a, [1.0, 0.0, -1.0]);
        h.coeff(1, &[1.0, 2.0, 3.0], &mut a);
        assert_eq!(a, [0.0, 1.0, 0.5]);
    }

    #[test]
    fn coefficients_are_right_translation_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in groups() {
            let n = g.topological_dim();
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                for k in 0..g.first_stratum_dim() {
                    let h = 1e-6;
                    let mut e = vec![0.0; n];
                    e[k] = h;
                    let p = g.multiply(&x, &e).unwrap();
                    e[k] = -h;
                    let m = g.multiply(&x, &e).unwrap();
                    let mut a = vec![0.0; n];
                    g.coeff(k, &x, &mut a);
                    for i in 0..n {
                        let fd = (p[i] - m[i]) / (2.0 * h);
                        assert!((fd - a[i]).abs() < 1e-8, "{} k={k} i={i}", g.name());
                    }
                }
            }
        }
    }

    #[test]
    fn coefficient_fields_are_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for g in groups() {
            let n = g.topological_dim();
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                for k in 0..g.first_stratum_dim() {
                    let h = 1e-5;
                    let mut div = 0.0;
                    for i in 0..n {
                        let (mut xp, mut xm) = (x.clone(), x.clone());
                        xp[i] += h;
                        xm[i] -= h;
                        let (mut ap, mut am) = (vec![0.0; n], vec![0.0; n]);
                        g.coeff(k, &xp, &mut ap);
                        g.coeff(k, &xm, &mut am);
                        div += (ap[i] - am[i]) / (2.0 * h);
                    }
                    assert!(div.abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn gauge_jet_matches_gauge() {
        let g = GroupDescriptor::heisenberg(1).unwrap().with_gauge_scale(2.0).unwrap();
        let x = [0.3, -0.7, 0.4];
        assert!((g.gauge_jet(&x).value() - g.gauge(&x)).abs() < 1e-15);
    }

    #[test]
    fn user_step_two_group_validates_brackets() {
        assert!(GroupDescriptor::step_two(2, vec![vec![0.0, 1.0, 1.0, 0.0]], Gauge::Koranyi { c: 16.0 }).is_err());
        let g = GroupDescriptor::step_two(2, vec![vec![0.0, 1.0, -1.0, 0.0]], Gauge::Koranyi { c: 16.0 }).unwrap();
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let (a, b) = ([0.2, -0.4, 1.1], [0.9, 0.3, -0.5]);
        assert_eq!(&*g.multiply(&a, &b).unwrap(), &*h.multiply(&a, &b).unwrap());
    }
}
