//! Residuals of the divergence formula, both Green formulas and two pointwise
//! identities used in the inequality proofs.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::field::{gauge_power, DerivativeMode, FiniteDiff, ScalarField};
use crate::group::GroupDescriptor;
use crate::hcalc::{horizontal_data, horizontal_data_real, sub_laplacian, xk_real};
use crate::quad::cubature::QuadSettings;
use crate::quad::domain::{integrate_boundary_vec, integrate_volume_vec, Domain};

/// Result of comparing a volume integral with its boundary counterpart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResidual {
    pub volume: Complex64,
    pub boundary: Complex64,
    /// `|volume - boundary|` over the larger of the two absolute integrals.
    pub residual: f64,
    pub converged: bool,
}

/// Integrates both sides of an identity.
///
/// A coarse first pass measures `int |volume integrand|` and `int |boundary
/// integrand|`; the second pass uses `rel_tol` times that mass as its absolute
/// tolerance. Sides that vanish by symmetry then converge without chasing
/// round-off, and the modulus, which has kinks, is never integrated finely.
fn compare<V, B>(g: &GroupDescriptor, vdom: &Domain, bdom: &Domain, vol: V, bnd: B, s: &QuadSettings) -> Result<IdentityResidual>
where
    V: Fn(&[f64]) -> Complex64 + Sync,
    B: Fn(&[f64], &[f64]) -> Complex64 + Sync,
{
    let coarse = QuadSettings {
        rel_tol: 1e-3,
        abs_tol: 1e-300,
        ..s.clone()
    };
    let vmass = integrate_volume_vec(g, vdom, 1, |x, out| out[0] = vol(x).norm(), &coarse)?.values[0];
    let bmass = integrate_boundary_vec(g, bdom, 1, |x, nds, out| out[0] = bnd(x, nds).norm(), &coarse)?.values[0];
    let scale = vmass.max(bmass);
    let fine = QuadSettings {
        abs_tol: s.abs_tol.max(s.rel_tol * scale),
        ..s.clone()
    };
    let v = integrate_volume_vec(
        g,
        vdom,
        2,
        |x, out| {
            let z = vol(x);
            out[0] = z.re;
            out[1] = z.im;
        },
        &fine,
    )?;
    let b = integrate_boundary_vec(
        g,
        bdom,
        2,
        |x, nds, out| {
            let z = bnd(x, nds);
            out[0] = z.re;
            out[1] = z.im;
        },
        &fine,
    )?;
    let volume = Complex64::new(v.values[0], v.values[1]);
    let boundary = Complex64::new(b.values[0], b.values[1]);
    let diff = (volume - boundary).norm();
    Ok(IdentityResidual {
        volume,
        boundary,
        residual: if scale > 0.0 { diff / scale } else { diff },
        converged: v.converged && b.converged,
    })
}

fn horizontal_flux(g: &GroupDescriptor, u: &dyn ScalarField, x: &[f64], nds: &[f64]) -> Complex64 {
    let frame = g.frame(x);
    let j = u.jet(x);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..frame.nh {
        acc += Complex64::new(xk_real(&frame, &j.re, k), xk_real(&frame, &j.im, k)) * frame.dot(k, nds);
    }
    acc
}

fn check(g: &GroupDescriptor, fields: &[&dyn ScalarField]) -> Result<()> {
    for f in fields {
        if f.dim() != g.topological_dim() {
            return Err(invalid(format!("field {} does not live on {}", f.name(), g.name())));
        }
    }
    Ok(())
}

/// `int X_k f` against `int_{dOmega} f <X_k, dz>` (0-based `k`).
pub fn divergence_residual(
    g: &GroupDescriptor,
    f: &dyn ScalarField,
    k: usize,
    domain: &Domain,
    s: &QuadSettings,
) -> Result<IdentityResidual> {
    check(g, &[f])?;
    if k >= g.first_stratum_dim() {
        return Err(invalid(format!("field index {k} out of range")));
    }
    compare(
        g,
        &domain.restricted_to(g, &[f.support()]),
        domain,
        |x| {
            let frame = g.frame(x);
            let j = f.jet(x);
            Complex64::new(xk_real(&frame, &j.re, k), xk_real(&frame, &j.im, k))
        },
        |x, nds| f.value(x) * g.frame(x).dot(k, nds),
        s,
    )
}

/// `int (grad~ v) u + v L u` against `int_{dOmega} v <grad~ u, dz>`.
pub fn greens_first_residual(
    g: &GroupDescriptor,
    v: &dyn ScalarField,
    u: &dyn ScalarField,
    domain: &Domain,
    s: &QuadSettings,
) -> Result<IdentityResidual> {
    check(g, &[u, v])?;
    compare(
        g,
        &domain.restricted_to(g, &[u.support(), v.support()]),
        domain,
        |x| {
            let frame = g.frame(x);
            let hu = horizontal_data(g, &frame, &u.jet(x));
            let hv = horizontal_data(g, &frame, &v.jet(x));
            let mut dot = Complex64::new(0.0, 0.0);
            for k in 0..frame.nh {
                dot += hu.grad[k] * hv.grad[k];
            }
            dot + hv.value * hu.lap
        },
        |x, nds| v.value(x) * horizontal_flux(g, u, x, nds),
        s,
    )
}

/// `int u L v - v L u` against `int_{dOmega} u <grad~ v, dz> - v <grad~ u, dz>`.
pub fn greens_second_residual(
    g: &GroupDescriptor,
    v: &dyn ScalarField,
    u: &dyn ScalarField,
    domain: &Domain,
    s: &QuadSettings,
) -> Result<IdentityResidual> {
    check(g, &[u, v])?;
    compare(
        g,
        &domain.restricted_to(g, &[u.support(), v.support()]),
        domain,
        |x| {
            let frame = g.frame(x);
            let hu = horizontal_data(g, &frame, &u.jet(x));
            let hv = horizontal_data(g, &frame, &v.jet(x));
            hu.value * hv.lap - hv.value * hu.lap
        },
        |x, nds| {
            let a = u.value(x) * horizontal_flux(g, v, x, nds);
            let b = v.value(x) * horizontal_flux(g, u, x, nds);
            a - b
        },
        s,
    )
}

/// Relative error of `L d^alpha = alpha (alpha + Q - 2) d^{alpha - 2} |grad_G d|^2` at `x`.
pub fn gauge_identity_residual(g: &GroupDescriptor, alpha: f64, x: &[f64], mode: DerivativeMode) -> Result<f64> {
    if x.len() != g.topological_dim() {
        return Err(invalid("point dimension mismatch"));
    }
    let d = g.gauge(x);
    if d == 0.0 {
        return Err(Error::Singularity("gauge identity at the identity element".into()));
    }
    let field = gauge_power(g, alpha);
    let lhs = match mode {
        DerivativeMode::Analytic => sub_laplacian(g, &field, x)?,
        DerivativeMode::FiniteDiff(None) => sub_laplacian(g, &FiniteDiff::new(field), x)?,
        DerivativeMode::FiniteDiff(Some(h)) => sub_laplacian(g, &FiniteDiff::new(field).with_step(h), x)?,
    }
    .re;
    let frame = g.frame(x);
    let (_, grad, _) = horizontal_data_real(g, &frame, &g.gauge_jet(x));
    let gd2: f64 = grad[..frame.nh].iter().map(|v| v * v).sum();
    let q = g.homogeneous_dim() as f64;
    let base = d.powf(alpha - 2.0) * gd2;
    let rhs = alpha * (alpha + q - 2.0) * base;
    // alpha = 2 - Q makes d^alpha harmonic; measure against the size of the two summands
    let scale = lhs.abs().max(rhs.abs()).max(alpha.abs() * (alpha.abs() + q - 2.0) * base);
    Ok(if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 })
}

/// Scaled error of `L(V^sigma) = sigma V^{sigma-2} ((sigma-1) |grad_G V|^2 + V L V)` at `x`.
///
/// The error is divided by `sigma V^{sigma-2} ((sigma-1) |grad_G V|^2 + V |L V|)`, so it stays
/// meaningful when the two terms cancel.
pub fn factorization_residual(g: &GroupDescriptor, v: &dyn ScalarField, sigma: f64, x: &[f64]) -> Result<f64> {
    check(g, &[v])?;
    let frame = g.frame(x);
    let vj = v.real_jet(x);
    let val = vj.value();
    if !(val > 0.0) {
        return Err(Error::Domain {
            predicate: "V > 0".into(),
            detail: format!("V = {val} at {x:?}"),
        });
    }
    let (_, grad, lap) = horizontal_data_real(g, &frame, &vj);
    let (_, _, lhs) = horizontal_data_real(g, &frame, &vj.powf(sigma));
    let gv2: f64 = grad[..frame.nh].iter().map(|c| c * c).sum();
    let pref = sigma * val.powf(sigma - 2.0);
    let rhs = pref * ((sigma - 1.0) * gv2 + val * lap);
    let scale = pref.abs() * ((sigma - 1.0).abs() * gv2 + val * lap.abs());
    Ok(if scale > 0.0 { (lhs - rhs).abs() / scale } else { (lhs - rhs).abs() })
}

/// `|L(V^sigma)|` scaled as in [`factorization_residual`]; zero when `V^sigma` is harmonic.
pub fn harmonic_power_residual(g: &GroupDescriptor, v: &dyn ScalarField, sigma: f64, x: &[f64]) -> Result<f64> {
    check(g, &[v])?;
    let frame = g.frame(x);
    let vj = v.real_jet(x);
    let val = vj.value();
    if !(val > 0.0) {
        return Err(Error::Domain {
            predicate: "V > 0".into(),
            detail: format!("V = {val} at {x:?}"),
        });
    }
    let (_, grad, lap) = horizontal_data_real(g, &frame, &vj);
    let (_, _, lhs) = horizontal_data_real(g, &frame, &vj.powf(sigma));
    let gv2: f64 = grad[..frame.nh].iter().map(|c| c * c).sum();
    let scale = (sigma * val.powf(sigma - 2.0)).abs() * ((sigma - 1.0).abs() * gv2 + val * lap.abs());
    Ok(if scale > 0.0 { lhs.abs() / scale } else { lhs.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{bump, first_stratum_power, gaussian, JetField};
    use crate::quad::domain::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings() -> QuadSettings {
        QuadSettings {
            rel_tol: 1e-10,
            ..Default::default()
        }
    }

    #[test]
    fn abelian_box_divergence() {
        let a3 = GroupDescriptor::abelian(3).unwrap();
        let f = JetField::real("x1 x2", 3, |v| v[0] * v[1]);
        let d = Domain::new(Shape::Box {
            lo: vec![-0.5, 0.0, -1.0],
            hi: vec![1.0, 2.0, 0.5],
        });
        for k in 0..3 {
            let r = divergence_residual(&a3, &f, k, &d, &settings()).unwrap();
            assert!(r.residual <= 1e-8, "k={k}: {r:?}");
        }
    }

    #[test]
    fn heisenberg_box_divergence() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let f = JetField::real("x^2 t", 3, |v| v[0].square() * v[2]);
        for k in 0..2 {
            let r = divergence_residual(&h, &f, k, &Domain::cube(3, 1.0), &settings()).unwrap();
            assert!(r.residual <= 1e-6, "k={k}: {r:?}");
        }
    }

    #[test]
    fn compact_support_gives_zero_on_both_sides() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let f = bump(vec![0.1, 0.0, 0.2], 0.5);
        let r = divergence_residual(&h, &f, 0, &Domain::cube(3, 1.0), &settings()).unwrap();
        assert!(r.boundary.norm() == 0.0);
        assert!(r.volume.norm() < 1e-10, "{r:?}");
    }

    #[test]
    fn greens_formulas_on_heisenberg_ball() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let hh = h.clone();
        let u = JetField::real("exp(-d^2)", 3, move |v| (-hh.gauge_of(v).square()).exp());
        let v = JetField::real("x", 3, |v| v[0]);
        let d = Domain::ball(vec![0.0; 3], 1.0);
        let r1 = greens_first_residual(&h, &v, &u, &d, &settings()).unwrap();
        let r2 = greens_second_residual(&h, &v, &u, &d, &settings()).unwrap();
        assert!(r1.residual <= 1e-6, "{r1:?}");
        assert!(r2.residual <= 1e-6, "{r2:?}");
        let same = greens_second_residual(&h, &u, &u, &d, &settings()).unwrap();
        assert_eq!(same.volume.norm(), 0.0);
    }

    #[test]
    fn complex_fields_in_greens_first() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let u = gaussian(vec![0.2, 0.0, -0.1], 1.5).with_phase("kx", |v: &[crate::jet::Jet]| v[0] * 2.0 + v[2]);
        let v = JetField::real("1+y t", 3, |v| v[1] * v[2] + 1.0);
        let r = greens_first_residual(&h, &v, &u, &Domain::cube(3, 1.0), &settings()).unwrap();
        assert!(r.residual <= 1e-6, "{r:?}");
    }

    #[test]
    fn gauge_identity_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let groups = [
            GroupDescriptor::abelian(3).unwrap(),
            GroupDescriptor::abelian(4).unwrap(),
            GroupDescriptor::heisenberg(1).unwrap(),
        ];
        for g in &groups {
            for alpha in [-1.0, 0.5, 1.0, 3.0] {
                for _ in 0..20 {
                    let x: Vec<f64> = (0..g.topological_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    if g.first_stratum_norm(&x) < 0.05 {
                        continue;
                    }
                    let e = gauge_identity_residual(g, alpha, &x, DerivativeMode::Analytic).unwrap();
                    assert!(e <= 1e-8, "{} alpha={alpha} x={x:?}: {e}", g.name());
                    let e = gauge_identity_residual(g, alpha, &x, DerivativeMode::FiniteDiff(None)).unwrap();
                    assert!(e <= 1e-4, "fd {} alpha={alpha} x={x:?}: {e}", g.name());
                }
            }
        }
    }

    #[test]
    fn factorization_and_harmonic_power() {
        let h = GroupDescriptor::heisenberg(1).unwrap();
        let a5 = GroupDescriptor::abelian(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (g, alpha) in [(&h, 3.0), (&a5, 4.0)] {
            let n_prime = g.first_stratum_dim() as f64;
            let v = first_stratum_power(g, -(alpha - 2.0));
            for sigma in [1.5, 2.0, (n_prime - 2.0) / (alpha - 2.0)] {
                for _ in 0..20 {
                    let x: Vec<f64> = (0..g.topological_dim()).map(|_| rng.gen_range(0.2..1.5)).collect();
                    let e = factorization_residual(g, &v, sigma, &x).unwrap();
                    assert!(e <= 1e-8, "{e}");
                }
            }
        }
    }
}
