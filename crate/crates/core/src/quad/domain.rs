//! Integration regions, their volume charts and boundary parameterizations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::GroupDescriptor;
use crate::hcalc::xk_real;
use crate::jet::MAX_DIM;
use crate::quad::cubature::{integrate_boxes, QuadSettings, VectorResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    EuclideanBall { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{r0 < d(x) < r1}`; `r0 = 0` is the gauge ball.
    GaugeAnnulus { r0: f64, r1: f64 },
    /// `{r0 < |x| < r1}`; `r0 = 0` is the origin-centred ball.
    SphericalShell { r0: f64, r1: f64 },
}

impl Shape {
    pub fn contains_point(&self, x: &[f64]) -> bool {
        match self {
            Shape::EuclideanBall { center, radius } => norm_diff(x, center) <= *radius,
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b),
            Shape::SphericalShell { r0, r1 } => {
                let r = norm(x);
                *r0 <= r && r <= *r1
            }
            // needs the group; callers use `contains` for this shape
            Shape::GaugeAnnulus { .. } => true,
        }
    }

    pub fn contains(&self, g: &GroupDescriptor, x: &[f64]) -> bool {
        match self {
            Shape::GaugeAnnulus { r0, r1 } => {
                let d = g.gauge(x);
                *r0 <= d && d <= *r1
            }
            _ => self.contains_point(x),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Shape::EuclideanBall { center, .. } => Some(center.len()),
            Shape::Box { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }

    /// Whether `self` lies inside `outer` (sufficient test, exact for like shapes).
    pub fn within(&self, g: &GroupDescriptor, outer: &Shape) -> bool {
        match (self, outer) {
            (Shape::EuclideanBall { center: c1, radius: r1 }, Shape::EuclideanBall { center: c2, radius: r2 }) => {
                norm_diff(c1, c2) + r1 <= *r2 * (1.0 + 1e-12)
            }
            (Shape::EuclideanBall { center, radius }, Shape::SphericalShell { r0, r1 }) => {
                let c = norm(center);
                c + radius <= *r1 * (1.0 + 1e-12) && c - radius >= *r0 * (1.0 - 1e-12)
            }
            (Shape::EuclideanBall { center, radius }, Shape::Box { lo, hi }) => center
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(c, (a, b))| c - radius >= *a && c + radius <= *b),
            (Shape::SphericalShell { r0: a0, r1: a1 }, Shape::SphericalShell { r0: b0, r1: b1 }) => a0 >= b0 && a1 <= b1,
            (Shape::GaugeAnnulus { r0: a0, r1: a1 }, Shape::GaugeAnnulus { r0: b0, r1: b1 }) => a0 >= b0 && a1 <= b1,
            (Shape::Box { lo: l1, hi: h1 }, Shape::Box { lo: l2, hi: h2 }) => {
                l1.iter().zip(l2).all(|(a, b)| a >= b) && h1.iter().zip(h2).all(|(a, b)| a <= b)
            }
            (inner, outer) => {
                // fall back to sampling the inner shape's boundary
                let pts = boundary_samples(g, inner, 6);
                !pts.is_empty() && pts.iter().all(|x| outer.contains(g, x))
            }
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularSet {
    /// The identity `{0}`.
    FullOrigin,
    /// `{x' = 0}`.
    FirstStratumZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Excision {
    pub set: SingularSet,
    pub radius: f64,
    /// Power-law exponent of the excised mass, used for Richardson extrapolation.
    #[serde(default)]
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub shape: Shape,
    #[serde(default)]
    pub excision: Option<Excision>,
}

impl Domain {
    pub fn new(shape: Shape) -> Self {
        Domain { shape, excision: None }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Domain::new(Shape::EuclideanBall { center, radius })
    }

    pub fn cube(n: usize, half: f64) -> Self {
        Domain::new(Shape::Box {
            lo: vec![-half; n],
            hi: vec![half; n],
        })
    }

    pub fn with_excision(mut self, set: SingularSet, radius: f64) -> Self {
        self.excision = Some(Excision {
            set,
            radius,
            exponent: None,
        });
        self
    }

    pub fn with_excision_exponent(mut self, exponent: f64) -> Self {
        if let Some(e) = &mut self.excision {
            e.exponent = Some(exponent);
        }
        self
    }

    pub fn validate(&self, g: &GroupDescriptor) -> Result<()> {
        let n = g.topological_dim();
        let bad = |m: String| Err(Error::UnsupportedDomain(m));
        match &self.shape {
            Shape::EuclideanBall { center, radius } => {
                if center.len() != n || !(*radius > 0.0) {
                    return bad(format!("ball needs a centre in R^{n} and a positive radius"));
                }
            }
            Shape::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return bad(format!("box needs lo < hi in R^{n}"));
                }
            }
            Shape::GaugeAnnulus { r0, r1 } | Shape::SphericalShell { r0, r1 } => {
                if !(*r0 >= 0.0 && r0 < r1) {
                    return bad("annulus needs 0 <= r0 < r1".into());
                }
            }
        }
        if let Some(e) = &self.excision {
            if e.radius < 0.0 {
                return bad("negative excision radius".into());
            }
        }
        Ok(())
    }

    /// The region where an integrand vanishing outside every given support can be nonzero.
    ///
    /// Integrating over a support ball instead of an enclosing box keeps the
    /// support edge on a chart boundary, where the cubature sees it.
    pub fn restricted_to(&self, g: &GroupDescriptor, supports: &[Option<&Shape>]) -> Domain {
        for s in supports.iter().flatten() {
            if *s != &self.shape && s.within(g, &self.shape) {
                return Domain {
                    shape: (*s).clone(),
                    excision: self.excision,
                };
            }
        }
        self.clone()
    }

    /// Whether the excision can be realized exactly as an inner radius.
    fn exact_excision(&self) -> Option<f64> {
        let e = self.excision.as_ref()?;
        if e.set != SingularSet::FullOrigin || e.radius <= 0.0 {
            return None;
        }
        match &self.shape {
            Shape::EuclideanBall { center, .. } if center.iter().all(|c| *c == 0.0) => Some(e.radius),
            Shape::SphericalShell { .. } | Shape::GaugeAnnulus { .. } => Some(e.radius),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
enum Chart {
    Identity,
    /// `x = c + r y(u)` with `y(u)` on the unit sphere.
    Polar { center: Vec<f64>, sign: f64, log: bool },
    /// `x = delta_{r / d(y)} y` with `y` on the unit Euclidean sphere.
    GaugePolar { sign: f64, log: bool },
}

#[derive(Clone, Debug)]
enum BoundaryChart {
    Face { axis: usize, value: f64, sign: f64 },
    Sphere { center: Vec<f64>, radius: f64, outward: f64, sign: f64 },
    GaugeSphere { radius: f64, outward: f64, sign: f64 },
}

struct Patch<C> {
    chart: C,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Point `y` on the unit sphere in hyperspherical angles `u`, with `dS/du`.
///
/// `u = (theta_1, ..., theta_{n-2}, phi)` with `theta_k` in `[0, pi]` and `phi`
/// in `[0, 2 pi]`. In one dimension the sphere is the point `sign`.
fn sphere_point(n: usize, sign: f64, u: &[f64], y: &mut [f64]) -> f64 {
    if n == 1 {
        y[0] = sign;
        return 1.0;
    }
    let mut s = 1.0;
    let mut jac = 1.0;
    for k in 0..n - 2 {
        let (sin, cos) = u[k].sin_cos();
        y[k] = s * cos;
        jac *= sin.powi((n - 2 - k) as i32);
        s *= sin;
    }
    let (sin, cos) = u[n - 2].sin_cos();
    y[n - 2] = s * cos;
    y[n - 1] = s * sin;
    jac
}

/// Angle boxes covering the unit sphere, tagged with the 1-D sign.
fn sphere_params(n: usize) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    if n == 1 {
        return vec![(-1.0, Vec::new(), Vec::new()), (1.0, Vec::new(), Vec::new())];
    }
    let mut hi = vec![PI; n - 1];
    hi[n - 2] = 2.0 * PI;
    vec![(1.0, vec![0.0; n - 1], hi)]
}

fn radial_range(r0: f64, r1: f64) -> (f64, f64, bool) {
    if r0 > 0.0 {
        (r0.ln(), r1.ln(), true)
    } else {
        (0.0, r1, false)
    }
}

fn volume_patches(g: &GroupDescriptor, d: &Domain) -> Vec<Patch<Chart>> {
    let n = g.topological_dim();
    let inner = d.exact_excision().unwrap_or(0.0);
    let polar = |center: Vec<f64>, r0: f64, r1: f64, gauge: bool| -> Vec<Patch<Chart>> {
        let (a, b, log) = radial_range(r0, r1);
        sphere_params(n)
            .into_iter()
            .map(|(sign, alo, ahi)| {
                let mut lo = vec![a];
                let mut hi = vec![b];
                lo.extend(alo);
                hi.extend(ahi);
                let chart = if gauge {
                    Chart::GaugePolar { sign, log }
                } else {
                    Chart::Polar {
                        center: center.clone(),
                        sign,
                        log,
                    }
                };
                Patch { chart, lo, hi }
            })
            .collect()
    };
    match &d.shape {
        Shape::Box { lo, hi } => vec![Patch {
            chart: Chart::Identity,
            lo: lo.clone(),
            hi: hi.clone(),
        }],
        Shape::EuclideanBall { center, radius } => polar(center.clone(), inner, *radius, false),
        Shape::SphericalShell { r0, r1 } => polar(vec![0.0; n], r0.max(inner), *r1, false),
        Shape::GaugeAnnulus { r0, r1 } => polar(vec![0.0; n], r0.max(inner), *r1, true),
    }
}

fn boundary_patches(g: &GroupDescriptor, d: &Domain) -> Vec<Patch<BoundaryChart>> {
    let n = g.topological_dim();
    let sphere_set = |center: &Vec<f64>, radius: f64, outward: f64, gauge: bool| -> Vec<Patch<BoundaryChart>> {
        sphere_params(n)
            .into_iter()
            .map(|(sign, lo, hi)| Patch {
                chart: if gauge {
                    BoundaryChart::GaugeSphere { radius, outward, sign }
                } else {
                    BoundaryChart::Sphere {
                        center: center.clone(),
                        radius,
                        outward,
                        sign,
                    }
                },
                lo,
                hi,
            })
            .collect()
    };
    match &d.shape {
        Shape::Box { lo, hi } => {
            let mut out = Vec::new();
            for a in 0..n {
                for (value, sign) in [(lo[a], -1.0), (hi[a], 1.0)] {
                    let plo: Vec<f64> = (0..n).filter(|&i| i != a).map(|i| lo[i]).collect();
                    let phi: Vec<f64> = (0..n).filter(|&i| i != a).map(|i| hi[i]).collect();
                    out.push(Patch {
                        chart: BoundaryChart::Face { axis: a, value, sign },
                        lo: plo,
                        hi: phi,
                    });
                }
            }
            out
        }
        Shape::EuclideanBall { center, radius } => sphere_set(center, *radius, 1.0, false),
        Shape::SphericalShell { r0, r1 } => {
            let c = vec![0.0; n];
            let mut out = sphere_set(&c, *r1, 1.0, false);
            if *r0 > 0.0 {
                out.extend(sphere_set(&c, *r0, -1.0, false));
            }
            out
        }
        Shape::GaugeAnnulus { r0, r1 } => {
            let c = vec![0.0; n];
            let mut out = sphere_set(&c, *r1, 1.0, true);
            if *r0 > 0.0 {
                out.extend(sphere_set(&c, *r0, -1.0, true));
            }
            out
        }
    }
}

fn dilation_moment(g: &GroupDescriptor, y: &[f64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, v)| g.weight_of(i) as f64 * v * v)
        .sum()
}

/// Maps chart parameters to a point; returns the volume weight (0 outside).
fn volume_map(g: &GroupDescriptor, chart: &Chart, u: &[f64], x: &mut [f64]) -> f64 {
    let n = g.topological_dim();
    match chart {
        Chart::Identity => {
            x[..n].copy_from_slice(&u[..n]);
            1.0
        }
        Chart::Polar {
            center,
            sign,
            log,
        } => {
            let mut y = [0.0; MAX_DIM];
            let ds = sphere_point(n, *sign, &u[1..], &mut y);
            let r = if *log { u[0].exp() } else { u[0] };
            for i in 0..n {
                x[i] = center[i] + r * y[i];
            }
            let rad = r.powi(n as i32 - 1) * if *log { r } else { 1.0 };
            rad * ds
        }
        Chart::GaugePolar { sign, log } => {
            let mut y = [0.0; MAX_DIM];
            let ds = sphere_point(n, *sign, &u[1..], &mut y);
            let r = if *log { u[0].exp() } else { u[0] };
            let dy = g.gauge(&y[..n]);
            let lam = r / dy;
            for i in 0..n {
                x[i] = y[i] * lam.powi(g.weight_of(i) as i32);
            }
            let q = g.homogeneous_dim() as i32;
            let rad = r.powi(q - 1) * if *log { r } else { 1.0 };
            rad * dilation_moment(g, &y[..n]) / dy.powi(q) * ds
        }
    }
}

/// Maps boundary parameters to a point and the vector `nu dS / du`.
fn boundary_map(g: &GroupDescriptor, chart: &BoundaryChart, u: &[f64], x: &mut [f64], nds: &mut [f64]) {
    let n = g.topological_dim();
    match chart {
        BoundaryChart::Face { axis, value, sign } => {
            let mut k = 0;
            for i in 0..n {
                if i == *axis {
                    x[i] = *value;
                    nds[i] = *sign;
                } else {
                    x[i] = u[k];
                    nds[i] = 0.0;
                    k += 1;
                }
            }
        }
        BoundaryChart::Sphere {
            center,
            radius,
            outward,
            sign,
        } => {
            let mut y = [0.0; MAX_DIM];
            let ds = sphere_point(n, *sign, u, &mut y) * radius.powi(n as i32 - 1);
            for i in 0..n {
                x[i] = center[i] + radius * y[i];
                nds[i] = outward * y[i] * ds;
            }
        }
        BoundaryChart::GaugeSphere {
            radius,
            outward,
            sign,
        } => {
            let mut y = [0.0; MAX_DIM];
            let ds = sphere_point(n, *sign, u, &mut y);
            let dy = g.gauge(&y[..n]);
            let lam = radius / dy;
            for i in 0..n {
                x[i] = y[i] * lam.powi(g.weight_of(i) as i32);
            }
            let q = g.homogeneous_dim() as i32;
            let w = radius.powi(q - 1) * dilation_moment(g, &y[..n]) / dy.powi(q) * ds;
            let dj = g.gauge_jet(&x[..n]);
            for i in 0..n {
                nds[i] = outward * dj.grad(i) * w;
            }
        }
    }
}

fn boundary_samples(g: &GroupDescriptor, shape: &Shape, per_axis: usize) -> Vec<Vec<f64>> {
    let n = g.topological_dim();
    let d = Domain::new(shape.clone());
    if d.validate(g).is_err() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut x = vec![0.0; n];
    let mut nds = vec![0.0; n];
    for p in boundary_patches(g, &d) {
        let m = p.lo.len();
        let total = per_axis.pow(m as u32);
        for idx in 0..total {
            let mut k = idx;
            let u: Vec<f64> = (0..m)
                .map(|i| {
                    let t = (k % per_axis) as f64 / (per_axis - 1).max(1) as f64;
                    k /= per_axis;
                    p.lo[i] + t * (p.hi[i] - p.lo[i])
                })
                .collect();
            boundary_map(g, &p.chart, &u, &mut x, &mut nds);
            out.push(x.clone());
        }
    }
    out
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// The `i`-th point of the Halton sequence in `[0, 1)^dim` (`dim <= 8`).
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    (0..dim).map(|k| radical_inverse(i + 1, PRIMES[k])).collect()
}

impl Domain {
    /// Deterministic low-discrepancy points of the (non-excised) domain.
    ///
    /// Points are spread over the chart parameters, so they are uniform in each
    /// chart rather than in Lebesgue measure.
    pub fn sample_points(&self, g: &GroupDescriptor, count: usize) -> Result<Vec<Vec<f64>>> {
        self.validate(g)?;
        let n = g.topological_dim();
        let patches = volume_patches(g, self);
        let mut out = Vec::with_capacity(count);
        let mut x = vec![0.0; n];
        let mut i = 0u64;
        while out.len() < count && i < 20 * count as u64 + 100 {
            let h = halton(i, n + 1);
            let p = &patches[((h[n] * patches.len() as f64) as usize).min(patches.len() - 1)];
            let u: Vec<f64> = (0..n).map(|k| p.lo[k] + h[k] * (p.hi[k] - p.lo[k])).collect();
            i += 1;
            let w = volume_map(g, &p.chart, &u, &mut x);
            if w > 0.0 && w.is_finite() && !masked(g, self, &x) {
                out.push(x.clone());
            }
        }
        Ok(out)
    }
}

fn masked(g: &GroupDescriptor, d: &Domain, x: &[f64]) -> bool {
    match &d.excision {
        Some(e) if e.radius > 0.0 => match e.set {
            SingularSet::FullOrigin => match d.shape {
                Shape::GaugeAnnulus { .. } => g.gauge(x) < e.radius,
                _ => norm(x) < e.radius,
            },
            SingularSet::FirstStratumZero => g.first_stratum_norm(x) < e.radius,
        },
        _ => false,
    }
}

fn volume_once<F>(g: &GroupDescriptor, d: &Domain, comps: usize, f: &F, s: &QuadSettings) -> VectorResult
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let n = g.topological_dim();
    let patches = volume_patches(g, d);
    let exact = d.exact_excision().is_some();
    let shifted: Vec<(Vec<f64>, Vec<f64>)> = (0..patches.len())
        .map(|i| {
            let mut lo = vec![-1.0; n];
            let mut hi = vec![1.0; n];
            shift_last(&mut lo, 4.0 * i as f64);
            shift_last(&mut hi, 4.0 * i as f64);
            (lo, hi)
        })
        .collect();
    let integrand = |u: &[f64], out: &mut [f64]| {
        let (idx, local) = unshift(u, patches.len());
        let p = &patches[idx];
        let mut x = [0.0; MAX_DIM];
        let mut uu = [0.0; MAX_DIM];
        let mut scale = 1.0;
        for j in 0..n {
            let h = 0.5 * (p.hi[j] - p.lo[j]);
            uu[j] = 0.5 * (p.hi[j] + p.lo[j]) + h * local[j];
            scale *= h;
        }
        let w = scale * volume_map(g, &p.chart, &uu[..n], &mut x);
        out.iter_mut().for_each(|v| *v = 0.0);
        if w == 0.0 || !w.is_finite() || (!exact && masked(g, d, &x[..n])) {
            return;
        }
        f(&x[..n], out);
        for v in out.iter_mut() {
            *v *= w;
        }
    };
    integrate_boxes(n, comps, &shifted, &integrand, s)
}

// Patches share one cubature run. Each patch is normalised to [-1, 1]^m and
// moved along the last parameter axis by 4 * index, which keeps them disjoint
// and lets the integrand recover the patch from the coordinate.
fn shift_last(v: &mut [f64], o: f64) {
    if let Some(last) = v.last_mut() {
        *last += o;
    }
}

fn unshift(u: &[f64], count: usize) -> (usize, [f64; MAX_DIM]) {
    let m = u.len();
    let last = u[m - 1];
    let idx = (((last + 1.0) / 4.0).floor().max(0.0) as usize).min(count - 1);
    let mut out = [0.0; MAX_DIM];
    out[..m].copy_from_slice(u);
    out[m - 1] -= 4.0 * idx as f64;
    (idx, out)
}

/// Integrates a vector integrand `f(x, out)` over the domain.
pub fn integrate_volume_vec<F>(g: &GroupDescriptor, d: &Domain, comps: usize, f: F, s: &QuadSettings) -> Result<VectorResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    d.validate(g)?;
    s.validate()?;
    let rich = s.richardson && d.excision.map(|e| e.radius > 0.0).unwrap_or(false);
    if !rich {
        return Ok(volume_once(g, d, comps, &f, s));
    }
    let e = d.excision.unwrap();
    let mut runs = Vec::new();
    for k in 0..3 {
        let mut dk = d.clone();
        dk.excision = Some(Excision {
            radius: e.radius / f64::from(1u32 << k),
            ..e
        });
        runs.push(volume_once(g, &dk, comps, &f, s));
    }
    let mut values = Vec::with_capacity(comps);
    for i in 0..comps {
        let (a, b, c) = (runs[0].values[i], runs[1].values[i], runs[2].values[i]);
        let kappa = match e.exponent {
            Some(k) => k,
            None => {
                let r = (a - b) / (b - c);
                if r.is_finite() && r > 1.0 {
                    r.log2()
                } else {
                    f64::INFINITY
                }
            }
        };
        let v = if kappa.is_finite() && kappa > 0.0 {
            c + (c - b) / (2f64.powf(kappa) - 1.0)
        } else {
            c
        };
        values.push(v);
    }
    let errors = (0..comps)
        .map(|i| runs.iter().map(|r| r.errors[i]).fold(0.0, f64::max))
        .collect();
    Ok(VectorResult {
        values,
        errors,
        evaluations: runs.iter().map(|r| r.evaluations).sum(),
        converged: runs.iter().all(|r| r.converged),
    })
}

/// Integrates `f(x, nu dS, out)` over the boundary of the domain.
pub fn integrate_boundary_vec<F>(g: &GroupDescriptor, d: &Domain, comps: usize, f: F, s: &QuadSettings) -> Result<VectorResult>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Sync,
{
    d.validate(g)?;
    s.validate()?;
    let n = g.topological_dim();
    if n < 2 {
        return Err(Error::UnsupportedDomain("boundary of a one-dimensional region".into()));
    }
    let patches = boundary_patches(g, d);
    let shifted: Vec<(Vec<f64>, Vec<f64>)> = patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (mut lo, mut hi) = (p.lo.clone(), p.hi.clone());
            // box faces carry arbitrary bounds; normalise them to [-1, 1] first
            for j in 0..lo.len() {
                lo[j] = -1.0;
                hi[j] = 1.0;
            }
            shift_last(&mut lo, 4.0 * i as f64);
            shift_last(&mut hi, 4.0 * i as f64);
            (lo, hi)
        })
        .collect();
    let integrand = |u: &[f64], out: &mut [f64]| {
        let (idx, local) = unshift(u, patches.len());
        let p = &patches[idx];
        let m = n - 1;
        let mut uu = [0.0; MAX_DIM];
        let mut scale = 1.0;
        for j in 0..m {
            let h = 0.5 * (p.hi[j] - p.lo[j]);
            uu[j] = 0.5 * (p.hi[j] + p.lo[j]) + h * local[j];
            scale *= h;
        }
        let mut x = [0.0; MAX_DIM];
        let mut nds = [0.0; MAX_DIM];
        boundary_map(g, &p.chart, &uu[..m], &mut x, &mut nds);
        for v in nds.iter_mut().take(n) {
            *v *= scale;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        f(&x[..n], &nds[..n], out);
    };
    Ok(integrate_boxes(n - 1, comps, &shifted, &integrand, s))
}

/// Scalar result of one integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadratureResult {
    fn from_vec(r: &VectorResult) -> Self {
        QuadratureResult {
            value: Complex64::new(r.values[0], r.values[1]),
            error_estimate: r.errors[0].hypot(r.errors[1]),
            evaluations: r.evaluations,
            converged: r.converged,
        }
    }
}

pub fn integrate_volume(
    g: &GroupDescriptor,
    f: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    d: &Domain,
    s: &QuadSettings,
) -> Result<QuadratureResult> {
    let r = integrate_volume_vec(
        g,
        d,
        2,
        |x, out| {
            let v = f(x);
            out[0] = v.re;
            out[1] = v.im;
        },
        s,
    )?;
    Ok(QuadratureResult::from_vec(&r))
}

/// `int_{dOmega} f sum_k (X_k V)(a_k . nu) dS`, the pairing `<grad~ V, dz>` weighted by `f`.
pub fn integrate_boundary_pairing(
    g: &GroupDescriptor,
    f: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    v: &dyn ScalarField,
    d: &Domain,
    s: &QuadSettings,
) -> Result<QuadratureResult> {
    let r = integrate_boundary_vec(
        g,
        d,
        2,
        |x, nds, out| {
            let fv = f(x);
            if fv == Complex64::new(0.0, 0.0) {
                return;
            }
            let frame = g.frame(x);
            let j = v.jet(x);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..frame.nh {
                let xv = Complex64::new(xk_real(&frame, &j.re, k), xk_real(&frame, &j.im, k));
                acc += xv * frame.dot(k, nds);
            }
            let val = fv * acc;
            out[0] = val.re;
            out[1] = val.im;
        },
        s,
    )?;
    Ok(QuadratureResult::from_vec(&r))
}

/// `int_{dOmega} f <X_k, dz>` with `<X_k, dz> = (a_k . nu) dS`.
pub fn integrate_boundary_xk(
    g: &GroupDescriptor,
    f: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    k: usize,
    d: &Domain,
    s: &QuadSettings,
) -> Result<QuadratureResult> {
    if k >= g.first_stratum_dim() {
        return Err(crate::error::invalid(format!("field index {k} out of range")));
    }
    let r = integrate_boundary_vec(
        g,
        d,
        2,
        |x, nds, out| {
            let frame = g.frame(x);
            let val = f(x) * frame.dot(k, nds);
            out[0] = val.re;
            out[1] = val.im;
        },
        s,
    )?;
    Ok(QuadratureResult::from_vec(&r))
}
