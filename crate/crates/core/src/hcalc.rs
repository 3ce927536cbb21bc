//! Horizontal calculus: `X_k`, `grad_G`, the sub-Laplacian, the p-sub-Laplacian
//! and the pairing `(grad~ u) v`.
//!
//! With `a_k(x) = e_k + M_k x` the second horizontal derivatives reduce to
//! Euclidean ones: `X_k X_j f = a_k^T H a_j + (M_j a_k) . grad f`.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::field::{DerivativeMode, ScalarField};
use crate::group::{Frame, GroupDescriptor};
use crate::jet::{CJet, Jet, MAX_DIM};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `(X_1 f, ..., X_N f)` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalVector {
    pub components: Vec<Complex64>,
}

impl HorizontalVector {
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[inline]
pub fn xk_real(frame: &Frame, j: &Jet, k: usize) -> f64 {
    frame.dot(k, j.gradient())
}

/// `X_k X_j f` for a real jet.
#[inline]
pub fn xkxj_real(g: &GroupDescriptor, frame: &Frame, f: &Jet, k: usize, j: usize) -> f64 {
    let n = frame.n;
    let (ak, aj) = (&frame.a[k], &frame.a[j]);
    let mut s = 0.0;
    for a in 0..n {
        if ak[a] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for b in 0..n {
            row += f.hess(a, b) * aj[b];
        }
        s += ak[a] * row;
    }
    for &(m, i, val) in g.coeff_jacobian(j) {
        s += val * ak[i] * f.grad(m);
    }
    s
}

#[inline]
pub fn sublap_real(g: &GroupDescriptor, frame: &Frame, f: &Jet) -> f64 {
    (0..frame.nh).map(|k| xkxj_real(g, frame, f, k, k)).sum()
}

/// Horizontal first and second order data of a complex jet at one point.
#[derive(Clone, Copy, Debug)]
pub struct HData {
    pub nh: usize,
    pub value: Complex64,
    pub grad: [Complex64; MAX_DIM],
    pub lap: Complex64,
}

impl HData {
    pub fn grad_norm_sq(&self) -> f64 {
        self.grad[..self.nh].iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm_sq().sqrt()
    }
}

pub fn horizontal_data(g: &GroupDescriptor, frame: &Frame, f: &CJet) -> HData {
    let nh = frame.nh;
    let mut grad = [ZERO; MAX_DIM];
    for (k, gk) in grad.iter_mut().enumerate().take(nh) {
        *gk = Complex64::new(xk_real(frame, &f.re, k), xk_real(frame, &f.im, k));
    }
    let lap = Complex64::new(sublap_real(g, frame, &f.re), sublap_real(g, frame, &f.im));
    HData {
        nh,
        value: f.value(),
        grad,
        lap,
    }
}

/// Real-field variant of [`horizontal_data`] returning `(value, grad_G, L)`.
pub fn horizontal_data_real(g: &GroupDescriptor, frame: &Frame, f: &Jet) -> (f64, [f64; MAX_DIM], f64) {
    let mut grad = [0.0; MAX_DIM];
    for (k, gk) in grad.iter_mut().enumerate().take(frame.nh) {
        *gk = xk_real(frame, f, k);
    }
    (f.value(), grad, sublap_real(g, frame, f))
}

fn check_dim(g: &GroupDescriptor, f: &dyn ScalarField, x: &[f64]) -> Result<()> {
    let n = g.topological_dim();
    if x.len() != n || f.dim() != n {
        return Err(invalid(format!(
            "field of dimension {} at point of length {} on {}",
            f.dim(),
            x.len(),
            g.name()
        )));
    }
    Ok(())
}

/// `X_k f (x)` with 0-based `k`.
pub fn apply_xk(g: &GroupDescriptor, f: &dyn ScalarField, k: usize, x: &[f64]) -> Result<Complex64> {
    check_dim(g, f, x)?;
    if k >= g.first_stratum_dim() {
        return Err(invalid(format!(
            "field index {k} out of range 0..{}",
            g.first_stratum_dim()
        )));
    }
    let frame = g.frame(x);
    let j = f.jet(x);
    Ok(Complex64::new(xk_real(&frame, &j.re, k), xk_real(&frame, &j.im, k)))
}

pub fn horizontal_gradient(g: &GroupDescriptor, f: &dyn ScalarField, x: &[f64]) -> Result<HorizontalVector> {
    check_dim(g, f, x)?;
    let frame = g.frame(x);
    let h = horizontal_data(g, &frame, &f.jet(x));
    Ok(HorizontalVector {
        components: h.grad[..h.nh].to_vec(),
    })
}

pub fn sub_laplacian(g: &GroupDescriptor, f: &dyn ScalarField, x: &[f64]) -> Result<Complex64> {
    check_dim(g, f, x)?;
    let frame = g.frame(x);
    let j = f.jet(x);
    Ok(Complex64::new(
        sublap_real(g, &frame, &j.re),
        sublap_real(g, &frame, &j.im),
    ))
}

/// `div_G(|grad_G f|^{p-2} grad_G f)`.
pub fn p_sub_laplacian(g: &GroupDescriptor, f: &dyn ScalarField, p: f64, x: &[f64]) -> Result<Complex64> {
    check_dim(g, f, x)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid(format!("p-sub-Laplacian needs 1 < p < inf, got {p}")));
    }
    let frame = g.frame(x);
    let jet = f.jet(x);
    let h = horizontal_data(g, &frame, &jet);
    let s = h.grad_norm_sq();
    if s == 0.0 {
        if p < 2.0 {
            return Err(Error::Singularity(format!(
                "horizontal gradient vanishes at {x:?} with p = {p} < 2"
            )));
        }
        return Ok(if p == 2.0 { h.lap } else { ZERO });
    }
    match f.mode() {
        DerivativeMode::Analytic => {
            let nh = h.nh;
            let mut corr = ZERO;
            for k in 0..nh {
                let mut dk = 0.0;
                for j in 0..nh {
                    let xkj = Complex64::new(
                        xkxj_real(g, &frame, &jet.re, k, j),
                        xkxj_real(g, &frame, &jet.im, k, j),
                    );
                    dk += (h.grad[j].conj() * xkj).re;
                }
                corr += h.grad[k] * dk;
            }
            Ok(h.lap * s.powf(0.5 * p - 1.0) + corr * ((p - 2.0) * s.powf(0.5 * p - 2.0)))
        }
        DerivativeMode::FiniteDiff(step) => {
            let n = x.len();
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let eps = step.unwrap_or(f64::EPSILON.cbrt() * scale);
            let composite = |y: &[f64], k: usize| -> Complex64 {
                let fr = g.frame(y);
                let hy = horizontal_data(g, &fr, &f.jet(y));
                hy.grad[k] * hy.grad_norm_sq().powf(0.5 * p - 1.0)
            };
            let mut total = ZERO;
            let mut y = vec![0.0; n];
            for k in 0..h.nh {
                let ak = &frame.a[k];
                for i in 0..n {
                    y[i] = x[i] + eps * ak[i];
                }
                let fp = composite(&y, k);
                for i in 0..n {
                    y[i] = x[i] - eps * ak[i];
                }
                let fm = composite(&y, k);
                total += (fp - fm) / (2.0 * eps);
            }
            Ok(total)
        }
    }
}

/// `grad_G u . grad_G v` (bilinear, no conjugation).
pub fn tilde_pairing(
    g: &GroupDescriptor,
    u: &dyn ScalarField,
    v: &dyn ScalarField,
    x: &[f64],
) -> Result<Complex64> {
    let gu = horizontal_gradient(g, u, x)?;
    let gv = horizontal_gradient(g, v, x)?;
    Ok(gu
        .components
        .iter()
        .zip(&gv.components)
        .map(|(a, b)| a * b)
        .sum())
}

/// `(R grad_G R + I grad_G I) / |u|`, the horizontal gradient of `|u|` where `u != 0`.
pub fn gradient_of_modulus(g: &GroupDescriptor, u: &dyn ScalarField, x: &[f64]) -> Result<HorizontalVector> {
    check_dim(g, u, x)?;
    let frame = g.frame(x);
    let j = u.jet(x);
    let m = j.value().norm();
    if m == 0.0 {
        return Err(Error::Singularity(format!("|u| is not differentiable at the zero {x:?}")));
    }
    let (r, i) = (j.re.value(), j.im.value());
    let components = (0..g.first_stratum_dim())
        .map(|k| Complex64::new((r * xk_real(&frame, &j.re, k) + i * xk_real(&frame, &j.im, k)) / m, 0.0))
        .collect();
    Ok(HorizontalVector { components })
}
