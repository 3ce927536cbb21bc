//! Globally adaptive cubature over unions of axis-aligned boxes.
//!
//! Regions are refined with the degree-7 Genz-Malik rule (degree-5 embedded
//! rule for the error estimate) in two or more dimensions and with
//! Gauss-Kronrod 7/15 on intervals. The integrand is vector valued and every
//! component must meet its own tolerance. Children of a refinement batch are
//! evaluated with rayon; totals are reassembled by pairwise summation over
//! regions ordered by creation id, so the result does not depend on the
//! thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: u32,
    pub max_evals: usize,
    /// Radius of the neighbourhood removed around a singular set.
    pub excision_radius: f64,
    /// Extrapolate excised integrals over the radii `rho, rho/2, rho/4`.
    pub richardson: bool,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            max_depth: 48,
            max_evals: 4_000_000,
            excision_radius: 1e-40,
            richardson: false,
        }
    }
}

impl QuadSettings {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(crate::error::invalid("quadrature tolerances must be positive"));
        }
        if self.excision_radius < 0.0 {
            return Err(crate::error::invalid("excision radius must be nonnegative"));
        }
        Ok(())
    }
}

/// Estimates for a vector-valued integrand.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
struct Region {
    id: u64,
    depth: u32,
    center: Vec<f64>,
    half: Vec<f64>,
    est: Vec<f64>,
    err: Vec<f64>,
    axis: usize,
    priority: f64,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Region {}

impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Region {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.id.cmp(&self.id))
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Rule {
    dim: usize,
    comps: usize,
}

impl Rule {
    fn points(&self) -> usize {
        let m = self.dim;
        if m == 1 {
            15
        } else {
            1 + 4 * m + 2 * m * (m - 1) + (1 << m)
        }
    }

    fn apply<F>(&self, f: &F, center: &[f64], half: &[f64], est: &mut [f64], err: &mut [f64], weights: &[f64]) -> usize
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        if self.dim == 1 {
            self.gk15(f, center[0], half[0], est, err);
            0
        } else {
            self.genz_malik(f, center, half, est, err, weights)
        }
    }

    fn gk15<F>(&self, f: &F, c: f64, h: f64, est: &mut [f64], err: &mut [f64])
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let nc = self.comps;
        let mut k = vec![0.0; nc];
        let mut gsum = vec![0.0; nc];
        let mut buf = vec![0.0; nc];
        f(&[c], &mut buf);
        for i in 0..nc {
            k[i] = WGK[7] * buf[i];
            gsum[i] = WG[3] * buf[i];
        }
        for j in 0..7 {
            for s in [-1.0, 1.0] {
                f(&[c + s * h * XGK[j]], &mut buf);
                for i in 0..nc {
                    k[i] += WGK[j] * buf[i];
                    if j % 2 == 1 {
                        gsum[i] += WG[j / 2] * buf[i];
                    }
                }
            }
        }
        for i in 0..nc {
            est[i] = k[i] * h;
            err[i] = ((k[i] - gsum[i]) * h).abs();
        }
    }

    fn genz_malik<F>(&self, f: &F, center: &[f64], half: &[f64], est: &mut [f64], err: &mut [f64], weights: &[f64]) -> usize
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let m = self.dim;
        let nc = self.comps;
        let mf = m as f64;
        let l2 = (9.0f64 / 70.0).sqrt();
        let l4 = (9.0f64 / 10.0).sqrt();
        let l5 = (9.0f64 / 19.0).sqrt();
        let w1 = (12824.0 - 9120.0 * mf + 400.0 * mf * mf) / 19683.0;
        let w2 = 980.0 / 6561.0;
        let w3 = (1820.0 - 400.0 * mf) / 19683.0;
        let w4 = 200.0 / 19683.0;
        let w5 = 6859.0 / 19683.0 / (1u64 << m) as f64;
        let e1 = (729.0 - 950.0 * mf + 50.0 * mf * mf) / 729.0;
        let e2 = 245.0 / 486.0;
        let e3 = (265.0 - 100.0 * mf) / 1458.0;
        let e4 = 25.0 / 729.0;
        let vol: f64 = half.iter().map(|h| 2.0 * h).product();

        let mut x = center.to_vec();
        let mut buf = vec![0.0; nc];
        let mut f0 = vec![0.0; nc];
        f(&x, &mut f0);
        let mut s2 = vec![0.0; nc];
        let mut s3 = vec![0.0; nc];
        let mut s4 = vec![0.0; nc];
        let mut s5 = vec![0.0; nc];
        let mut p2 = vec![0.0; nc];
        let mut p3 = vec![0.0; nc];
        let ratio = (l2 * l2) / (l4 * l4);
        let mut best_axis = 0;
        let mut best_diff = -1.0;
        for a in 0..m {
            p2.iter_mut().for_each(|v| *v = 0.0);
            p3.iter_mut().for_each(|v| *v = 0.0);
            for s in [-1.0, 1.0] {
                x[a] = center[a] + s * l2 * half[a];
                f(&x, &mut buf);
                for i in 0..nc {
                    p2[i] += buf[i];
                }
                x[a] = center[a] + s * l4 * half[a];
                f(&x, &mut buf);
                for i in 0..nc {
                    p3[i] += buf[i];
                }
            }
            x[a] = center[a];
            let mut diff = 0.0;
            for i in 0..nc {
                s2[i] += p2[i];
                s3[i] += p3[i];
                diff += ((p2[i] - 2.0 * f0[i]) - ratio * (p3[i] - 2.0 * f0[i])).abs() * weights[i];
            }
            if diff > best_diff * (1.0 + 1e-12) {
                best_diff = diff;
                best_axis = a;
            }
        }
        for a in 0..m {
            for b in (a + 1)..m {
                for sa in [-1.0, 1.0] {
                    for sb in [-1.0, 1.0] {
                        x[a] = center[a] + sa * l4 * half[a];
                        x[b] = center[b] + sb * l4 * half[b];
                        f(&x, &mut buf);
                        for i in 0..nc {
                            s4[i] += buf[i];
                        }
                    }
                }
                x[a] = center[a];
                x[b] = center[b];
            }
        }
        for mask in 0u64..(1u64 << m) {
            for a in 0..m {
                let s = if mask >> a & 1 == 1 { 1.0 } else { -1.0 };
                x[a] = center[a] + s * l5 * half[a];
            }
            f(&x, &mut buf);
            for i in 0..nc {
                s5[i] += buf[i];
            }
        }
        for i in 0..nc {
            let r7 = w1 * f0[i] + w2 * s2[i] + w3 * s3[i] + w4 * s4[i] + w5 * s5[i];
            let r5 = e1 * f0[i] + e2 * s2[i] + e3 * s3[i] + e4 * s4[i];
            est[i] = vol * r7;
            err[i] = (vol * (r7 - r5)).abs();
        }
        if best_diff <= 0.0 {
            // flat along every axis: split the widest side
            best_axis = (0..m)
                .max_by(|&a, &b| half[a].total_cmp(&half[b]).then(b.cmp(&a)))
                .unwrap_or(0);
        }
        best_axis
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn priority(err: &[f64], weights: &[f64]) -> f64 {
    err.iter()
        .zip(weights)
        .map(|(e, w)| e * w)
        .fold(0.0, f64::max)
}

/// Integrates `f` (writing `comps` values per point) over the union of `boxes`.
pub fn integrate_boxes<F>(
    dim: usize,
    comps: usize,
    boxes: &[(Vec<f64>, Vec<f64>)],
    f: &F,
    s: &QuadSettings,
) -> VectorResult
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    assert!(dim >= 1, "cubature needs at least one dimension");
    let rule = Rule { dim, comps };
    let per_region = rule.points();
    let unit = vec![1.0; comps];

    let mut next_id = 0u64;
    let mut seeds: Vec<Region> = boxes
        .iter()
        .map(|(lo, hi)| {
            let center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let half = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
            next_id += 1;
            Region {
                id: next_id - 1,
                depth: 0,
                center,
                half,
                est: vec![0.0; comps],
                err: vec![0.0; comps],
                axis: 0,
                priority: 0.0,
            }
        })
        .collect();
    seeds.par_iter_mut().for_each(|r| {
        r.axis = rule.apply(f, &r.center, &r.half, &mut r.est, &mut r.err, &unit);
    });
    let mut evaluations = per_region * seeds.len();

    let mut total = vec![0.0; comps];
    let mut total_err = vec![0.0; comps];
    for r in &seeds {
        for i in 0..comps {
            total[i] += r.est[i];
            total_err[i] += r.err[i];
        }
    }
    let weights: Vec<f64> = total
        .iter()
        .map(|t| 1.0 / s.abs_tol.max(s.rel_tol * t.abs()))
        .collect();

    let mut heap = BinaryHeap::new();
    for mut r in seeds {
        r.priority = priority(&r.err, &weights);
        heap.push(r);
    }
    let mut done: Vec<Region> = Vec::new();
    let tol = |t: &[f64]| -> Vec<f64> { t.iter().map(|v| s.abs_tol.max(s.rel_tol * v.abs())).collect() };

    loop {
        let tols = tol(&total);
        let satisfied = total_err.iter().zip(&tols).all(|(e, t)| e <= t);
        if satisfied || heap.is_empty() || evaluations >= s.max_evals {
            break;
        }
        let mut batch = Vec::new();
        let mut remaining = total_err.clone();
        while let Some(r) = heap.pop() {
            if r.depth >= s.max_depth {
                done.push(r);
                continue;
            }
            for i in 0..comps {
                remaining[i] -= r.err[i];
            }
            batch.push(r);
            let ok = remaining.iter().zip(&tols).all(|(e, t)| *e <= *t);
            if ok || batch.len() >= 256 || evaluations + 2 * per_region * batch.len() >= s.max_evals {
                break;
            }
        }
        if batch.is_empty() {
            break;
        }
        let mut children = Vec::with_capacity(2 * batch.len());
        for r in &batch {
            for side in [-1.0, 1.0] {
                let mut center = r.center.clone();
                let mut half = r.half.clone();
                half[r.axis] *= 0.5;
                center[r.axis] += side * half[r.axis];
                next_id += 1;
                children.push(Region {
                    id: next_id - 1,
                    depth: r.depth + 1,
                    center,
                    half,
                    est: vec![0.0; comps],
                    err: vec![0.0; comps],
                    axis: 0,
                    priority: 0.0,
                });
            }
        }
        children.par_iter_mut().for_each(|c| {
            c.axis = rule.apply(f, &c.center, &c.half, &mut c.est, &mut c.err, &weights);
        });
        evaluations += per_region * children.len();
        // a child's error is half the disagreement between its parent and the
        // two halves; the children's own degree-7/5 differences are too
        // pessimistic once regions get small
        for (r, pair) in batch.iter().zip(children.chunks_mut(2)) {
            for i in 0..comps {
                let gap = 0.5 * (r.est[i] - pair[0].est[i] - pair[1].est[i]).abs();
                for c in pair.iter_mut() {
                    c.err[i] = gap;
                }
            }
        }
        for r in &batch {
            for i in 0..comps {
                total[i] -= r.est[i];
                total_err[i] -= r.err[i];
            }
        }
        for mut c in children {
            for i in 0..comps {
                total[i] += c.est[i];
                total_err[i] += c.err[i];
            }
            c.priority = priority(&c.err, &weights);
            heap.push(c);
        }
    }

    let mut all: Vec<Region> = heap.into_vec();
    all.extend(done);
    all.sort_by_key(|r| r.id);
    let mut values = Vec::with_capacity(comps);
    let mut errors = Vec::with_capacity(comps);
    let mut col = vec![0.0; all.len()];
    for i in 0..comps {
        for (c, r) in col.iter_mut().zip(&all) {
            *c = r.est[i];
        }
        values.push(pairwise_sum(&col));
        for (c, r) in col.iter_mut().zip(&all) {
            *c = r.err[i];
        }
        errors.push(pairwise_sum(&col));
    }
    let converged = errors
        .iter()
        .zip(&values)
        .all(|(e, v)| *e <= s.abs_tol.max(s.rel_tol * v.abs()));
    VectorResult {
        values,
        errors,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube(m: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        vec![(vec![0.0; m], vec![1.0; m])]
    }

    #[test]
    fn genz_malik_is_exact_for_degree_seven() {
        let rule = Rule { dim: 3, comps: 2 };
        let f = |x: &[f64], out: &mut [f64]| {
            out[0] = x[0].powi(7) + x[1].powi(3) * x[2].powi(4);
            out[1] = x[0] * x[0] * x[1] * x[1] * x[2] * x[2];
        };
        let (mut est, mut err) = (vec![0.0; 2], vec![0.0; 2]);
        rule.apply(&f, &[0.5; 3], &[0.5; 3], &mut est, &mut err, &[1.0, 1.0]);
        assert!((est[0] - (1.0 / 8.0 + 1.0 / 20.0)).abs() < 1e-14);
        assert!((est[1] - 1.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn kronrod_is_exact_for_high_degree() {
        let rule = Rule { dim: 1, comps: 1 };
        let f = |x: &[f64], out: &mut [f64]| out[0] = x[0].powi(20);
        let (mut est, mut err) = (vec![0.0], vec![0.0]);
        rule.apply(&f, &[0.0], &[1.0], &mut est, &mut err, &[1.0]);
        assert!((est[0] - 2.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_converges_on_peaked_integrand() {
        let s = QuadSettings::default();
        let f = |x: &[f64], out: &mut [f64]| {
            let r2 = (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
            out[0] = (-50.0 * r2).exp();
            out[1] = x[0];
        };
        let r = integrate_boxes(2, 2, &unit_cube(2), &f, &s);
        assert!(r.converged);
        // separable, so the oracle is a product of two composite Simpson sums
        let simpson = |c: f64| {
            let n = 20_000;
            let h = 1.0 / n as f64;
            (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * (-50.0 * (i as f64 * h - c).powi(2)).exp()
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let exact = simpson(0.3) * simpson(0.6);
        assert!((r.values[0] - exact).abs() < 1e-6 * exact, "{}", r.values[0]);
        assert!((r.values[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn results_are_bitwise_reproducible() {
        let s = QuadSettings::default();
        let f = |x: &[f64], out: &mut [f64]| out[0] = (x[0] * x[1] * 7.0).sin() / (0.1 + x[2]);
        let a = integrate_boxes(3, 1, &unit_cube(3), &f, &s);
        let b = integrate_boxes(3, 1, &unit_cube(3), &f, &s);
        assert_eq!(a, b);
    }

    #[test]
    fn deeper_refinement_shrinks_error() {
        let f = |x: &[f64], out: &mut [f64]| out[0] = 1.0 / (0.05 + x[0] + x[1]);
        let mut last = f64::INFINITY;
        for evals in [2_000, 20_000, 200_000] {
            let s = QuadSettings {
                max_evals: evals,
                rel_tol: 1e-14,
                abs_tol: 0.0,
                ..Default::default()
            };
            let r = integrate_boxes(2, 1, &unit_cube(2), &f, &s);
            assert!(r.errors[0] < last);
            last = r.errors[0];
        }
    }
}
