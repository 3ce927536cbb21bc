use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::conditions::{check_pointwise_conditions, ConditionReport};
use super::{resolve_params, sharp_constant, weight_dim, InequalityCase, InequalityParams};
use crate::error::{invalid, Error, Result};
use crate::field::{first_stratum_power, gauge_power, JetField, ScalarField};
use crate::group::{Frame, GroupDescriptor, GroupKind};
use crate::hcalc::{horizontal_data, horizontal_data_real, HData};
use crate::jet::MAX_DIM;
use crate::quad::{integrate_boundary_vec, integrate_volume_vec, Domain, QuadSettings, SingularSet};

use InequalityCase::*;

/// One integral entering a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub name: String,
    pub value: f64,
    pub error: f64,
    pub boundary: bool,
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub case: InequalityCase,
    pub eq_tag: String,
    pub group: String,
    pub field: String,
    pub potential: Option<String>,
    /// Parameters after defaults and derived values were filled in.
    pub params: InequalityParams,
    pub lhs: f64,
    pub rhs: f64,
    /// The boundary integral of the case (0 when `u` vanishes on the boundary).
    pub boundary_term: f64,
    pub slack: f64,
    pub constant_used: f64,
    /// Withheld (false) when any integral failed to converge.
    pub pass: bool,
    pub converged: bool,
    pub terms: Vec<TermValue>,
    pub conditions: Option<ConditionReport>,
}

impl InequalityReport {
    pub fn relative_slack(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale > 0.0 {
            self.slack / scale
        } else {
            self.slack
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Relative slack tolerance of the verdict.
    pub tol: f64,
    pub condition_samples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tol: 1e-6,
            condition_samples: 64,
        }
    }
}

type VolFn<'a> = Box<dyn Fn(&[f64], &mut [f64]) + Sync + 'a>;
type BndFn<'a> = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Sync + 'a>;

struct Plan<'a> {
    vol_names: Vec<&'static str>,
    vol: VolFn<'a>,
    bnd_names: Vec<&'static str>,
    bnd: Option<BndFn<'a>>,
}

/// Point data shared by the integrands.
#[derive(Clone, Copy)]
struct Ctx<'a> {
    g: &'a GroupDescriptor,
    u: &'a dyn ScalarField,
    v: Option<&'a dyn ScalarField>,
    p: f64,
    wdims: Option<usize>,
}

struct VData {
    val: f64,
    grad: [f64; MAX_DIM],
    lap: f64,
    grad_sq: f64,
}

impl<'a> Ctx<'a> {
    /// `None` where `u` and its derivatives vanish, so singular weights never meet `0 * inf`.
    fn u_at(&self, x: &[f64]) -> Option<(Frame, HData)> {
        let frame = self.g.frame(x);
        let h = horizontal_data(self.g, &frame, &self.u.jet(x));
        if h.value.norm_sqr() == 0.0 && h.grad_norm_sq() == 0.0 && h.lap.norm_sqr() == 0.0 {
            None
        } else {
            Some((frame, h))
        }
    }

    fn v_at(&self, frame: &Frame, x: &[f64]) -> VData {
        let v = self.v.expect("potential checked before planning");
        let (val, grad, lap) = horizontal_data_real(self.g, frame, &v.real_jet(x));
        let grad_sq = grad[..frame.nh].iter().map(|a| a * a).sum();
        VData { val, grad, lap, grad_sq }
    }

    fn xprime(&self, x: &[f64]) -> f64 {
        match self.wdims {
            Some(k) => x[..k].iter().map(|a| a * a).sum::<f64>().sqrt(),
            None => self.g.first_stratum_norm(x),
        }
    }

    /// `(d, grad_G d, |grad_G d|^2)`.
    fn gauge_at(&self, frame: &Frame, x: &[f64]) -> (f64, [f64; MAX_DIM], f64) {
        let (d, grad, _) = horizontal_data_real(self.g, frame, &self.g.gauge_jet(x));
        let sq = grad[..frame.nh].iter().map(|a| a * a).sum();
        (d, grad, sq)
    }

    fn up(&self, h: &HData) -> f64 {
        h.value.norm().powf(self.p)
    }

    fn gp(&self, h: &HData) -> f64 {
        h.grad_norm_sq().powf(0.5 * self.p)
    }

    fn lp(&self, h: &HData) -> f64 {
        h.lap.norm().powf(self.p)
    }
}

fn flux(frame: &Frame, grad: &[f64], nds: &[f64]) -> f64 {
    (0..frame.nh).map(|k| grad[k] * frame.dot(k, nds)).sum()
}

fn template_potential(case: InequalityCase, g: &GroupDescriptor, r: &InequalityParams) -> Option<JetField> {
    match case {
        CknBoundary | WeightedHardy | HardyTerm => match (r.gamma, r.alpha) {
            (Some(gamma), _) => Some(first_stratum_power(g, 2.0 - gamma)),
            (None, Some(a)) => Some(gauge_power(g, a)),
            _ => None,
        },
        Uncertainty => r.alpha.map(|a| first_stratum_power(g, a)),
        RellichL2Boundary => r.alpha.map(|a| first_stratum_power(g, -(a + 2.0))),
        RellichLp | LemmaSubs | LemmaSigma => r.alpha.map(|a| first_stratum_power(g, -(a - 2.0))),
        _ => None,
    }
}

/// Singular set of the weights a case builds itself.
fn weight_singularity(case: InequalityCase, g: &GroupDescriptor, wdims: Option<usize>) -> Option<SingularSet> {
    let full_weight = g.kind() == GroupKind::Abelian && wdims.map_or(true, |k| k == g.topological_dim());
    match case {
        LocalHardy | UncertGauge | RellichGaugeL2 => Some(SingularSet::FullOrigin),
        HorizontalCkn | BadialeTarantello | BtAlpha | HpwPrime | HpwClassical | RellichPrimeL2 | RellichPrimeLp
        | ClassicalRellich => {
            if full_weight {
                Some(SingularSet::FullOrigin)
            } else if wdims.is_none() {
                Some(SingularSet::FirstStratumZero)
            } else {
                // a partial split of R^n; supports must avoid {x' = 0}
                None
            }
        }
        _ => None,
    }
}

fn precondition(condition: &str, point: &[f64], value: f64) -> Error {
    Error::Precondition {
        condition: condition.to_string(),
        point: point.to_vec(),
        value,
    }
}

/// Evaluates one inequality case with default [`EvalOptions`].
pub fn evaluate(
    case: InequalityCase,
    g: &GroupDescriptor,
    domain: &Domain,
    u: &dyn ScalarField,
    v: Option<&dyn ScalarField>,
    params: &InequalityParams,
    s: &QuadSettings,
) -> Result<InequalityReport> {
    evaluate_with(case, g, domain, u, v, params, s, &EvalOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_with(
    case: InequalityCase,
    g: &GroupDescriptor,
    domain: &Domain,
    u: &dyn ScalarField,
    v: Option<&dyn ScalarField>,
    params: &InequalityParams,
    s: &QuadSettings,
    opts: &EvalOptions,
) -> Result<InequalityReport> {
    domain.validate(g)?;
    let n = g.topological_dim();
    if u.dim() != n || v.is_some_and(|v| v.dim() != n) {
        return Err(invalid(format!("fields must live on {}", g.name())));
    }
    let mut r = resolve_params(case, params, g)?;
    let wdims = match case {
        BadialeTarantello | BtAlpha => Some(weight_dim(case, params, g)?).filter(|_| params.weight_dims.is_some()),
        _ => None,
    };

    let inside = u.support().is_some_and(|sh| sh.within(g, &domain.shape));
    if !case.has_boundary_term() && !inside {
        return Err(Error::SupportViolation(format!(
            "{case} needs u supported inside the domain, but {} is not",
            u.name()
        )));
    }

    let template = if v.is_none() { template_potential(case, g, &r) } else { None };
    let v: Option<&dyn ScalarField> = v.or(template.as_ref().map(|t| t as &dyn ScalarField));
    if case.needs_potential() && v.is_none() {
        return Err(invalid(format!("{case} needs a potential V")));
    }

    let mut dom = domain.clone();
    if dom.excision.is_none() {
        let set = match &template {
            Some(_) => {
                let gauge = matches!(case, CknBoundary | WeightedHardy | HardyTerm) && r.gamma.is_none();
                Some(if gauge || g.kind() == GroupKind::Abelian {
                    SingularSet::FullOrigin
                } else {
                    SingularSet::FirstStratumZero
                })
            }
            None => weight_singularity(case, g, wdims),
        };
        if let Some(set) = set {
            dom = dom.with_excision(set, s.excision_radius);
        }
    }
    let vol_dom = dom.restricted_to(g, &[u.support()]);

    let conditions = match (v, case.needs_potential()) {
        (Some(vf), true) => {
            let sigma = match case {
                RellichLp | LemmaSigma => r.sigma,
                _ => None,
            };
            let rep = check_pointwise_conditions(g, vf, sigma, &vol_dom, opts.condition_samples)?;
            if rep.samples > 0 {
                match case {
                    Uncertainty => {
                        if !rep.lv_negative() && !rep.lv_positive() {
                            return Err(precondition("L V one-signed", &rep.argmax_lv, rep.max_lv));
                        }
                    }
                    _ => {
                        if !rep.lv_negative() {
                            return Err(precondition("L V < 0", &rep.argmax_lv, rep.max_lv));
                        }
                    }
                }
                let positive = matches!(case, RellichL2Boundary | RellichLp | LemmaSigma);
                if positive && !rep.v_positive() {
                    return Err(precondition("V > 0", &rep.argmin_v, rep.min_v));
                }
                if case == LemmaSubs && rep.min_v < 0.0 {
                    return Err(precondition("V >= 0", &rep.argmin_v, rep.min_v));
                }
                if rep.lv_sigma_nonpositive() == Some(false) {
                    return Err(precondition(
                        "L(V^sigma) <= 0",
                        rep.argmax_lv_sigma.as_deref().unwrap_or(&[]),
                        rep.max_lv_sigma.unwrap_or(f64::NAN),
                    ));
                }
            }
            Some(rep)
        }
        _ => None,
    };
    // L V > 0 everywhere: the uncertainty principle applies to -V
    let flip = match &conditions {
        Some(c) if case == Uncertainty && c.lv_positive() => -1.0,
        _ => 1.0,
    };

    if case == LemmaSubs && r.c.is_none() {
        r.c = Some(lemma_subs_constant(g, &vol_dom, u, v.unwrap(), r.p, s)?);
    }
    let constant = sharp_constant(case, &r, g)?;

    let ctx = Ctx {
        g,
        u,
        v,
        p: r.p,
        wdims,
    };
    let plan = plan(case, ctx, &r, flip);
    let bad = AtomicBool::new(false);
    let guard = |out: &mut [f64]| {
        if out.iter().any(|a| !a.is_finite()) {
            bad.store(true, Ordering::Relaxed);
            out.iter_mut().for_each(|a| *a = 0.0);
        }
    };
    let vol = integrate_volume_vec(
        g,
        &vol_dom,
        plan.vol_names.len(),
        |x, out| {
            (plan.vol)(x, out);
            guard(out);
        },
        s,
    )?;
    let mut terms: Vec<TermValue> = plan
        .vol_names
        .iter()
        .enumerate()
        .map(|(i, name)| TermValue {
            name: name.to_string(),
            value: vol.values[i],
            error: vol.errors[i],
            boundary: false,
            converged: vol.converged,
            evaluations: vol.evaluations,
        })
        .collect();
    let mut converged = vol.converged;
    let mut bvals = vec![0.0; plan.bnd_names.len()];
    if let (Some(bf), false) = (&plan.bnd, inside) {
        let bnd = integrate_boundary_vec(
            g,
            &dom,
            plan.bnd_names.len(),
            |x, nds, out| {
                bf(x, nds, out);
                guard(out);
            },
            s,
        )?;
        converged &= bnd.converged;
        bvals.clone_from(&bnd.values);
        terms.extend(plan.bnd_names.iter().enumerate().map(|(i, name)| TermValue {
            name: name.to_string(),
            value: bnd.values[i],
            error: bnd.errors[i],
            boundary: true,
            converged: bnd.converged,
            evaluations: bnd.evaluations,
        }));
    }
    if bad.load(Ordering::Relaxed) {
        return Err(Error::Singularity(format!(
            "{case}: non-finite integrand for {} on {}; move the support off the singular set or excise it",
            u.name(),
            g.name()
        )));
    }

    let (lhs, rhs, boundary_term) = assemble(case, &r, constant, &vol.values, &bvals);
    let slack = rhs - lhs;
    let scale = lhs.abs().max(rhs.abs());
    let pass = converged && lhs.is_finite() && rhs.is_finite() && slack >= -opts.tol * scale;
    Ok(InequalityReport {
        case,
        eq_tag: case.eq_tag().to_string(),
        group: g.name(),
        field: u.name().to_string(),
        potential: v.map(|v| v.name().to_string()),
        params: r,
        lhs,
        rhs,
        boundary_term,
        slack,
        constant_used: constant,
        pass,
        converged,
        terms,
        conditions,
    })
}

fn plan<'a>(case: InequalityCase, c: Ctx<'a>, r: &InequalityParams, flip: f64) -> Plan<'a> {
    let p = r.p;
    let alpha = r.alpha.unwrap_or(0.0);
    let gamma = r.gamma.unwrap_or(0.0);
    let beta = r.beta.unwrap_or(0.0);
    let potential_flux: BndFn<'a> = Box::new(move |x, nds, out| {
        if let Some((frame, h)) = c.u_at(x) {
            let vd = c.v_at(&frame, x);
            out[0] = flip * c.up(&h) * flux(&frame, &vd.grad, nds);
        }
    });
    match case {
        CknBoundary | WeightedHardy | HardyTerm => Plan {
            vol_names: vec!["int |LV| |u|^p", "int |grad V|^p |LV|^(1-p) |grad u|^p"],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let vd = c.v_at(&frame, x);
                    let lv = vd.lap.abs();
                    out[0] = lv * c.up(&h);
                    out[1] = vd.grad_sq.powf(0.5 * p) * lv.powf(1.0 - p) * c.gp(&h);
                }
            }),
            bnd_names: vec!["bd |u|^p <grad~ V, dz>"],
            bnd: (case != WeightedHardy).then_some(potential_flux),
        },
        HorizontalCkn | BadialeTarantello => Plan {
            vol_names: vec![
                "int |u|^p |x'|^-gamma",
                "int |x'|^(-alpha p) |grad u|^p",
                "int |x'|^(-beta p/(p-1)) |u|^p",
            ],
            vol: Box::new(move |x, out| {
                if let Some((_, h)) = c.u_at(x) {
                    let w = c.xprime(x);
                    let up = c.up(&h);
                    out[0] = up * w.powf(-gamma);
                    out[1] = w.powf(-alpha * p) * c.gp(&h);
                    out[2] = w.powf(-beta * p / (p - 1.0)) * up;
                }
            }),
            bnd_names: vec!["bd |u|^p <grad~ |x'|^(2-gamma), dz>"],
            bnd: (case == HorizontalCkn).then(|| -> BndFn<'a> {
                Box::new(move |x, nds, out| {
                    if let Some((frame, h)) = c.u_at(x) {
                        let w = c.xprime(x);
                        let mut grad = [0.0; MAX_DIM];
                        for (k, gk) in grad.iter_mut().enumerate().take(frame.nh) {
                            *gk = (2.0 - gamma) * w.powf(-gamma) * x[k];
                        }
                        out[0] = c.up(&h) * flux(&frame, &grad, nds);
                    }
                })
            }),
        },
        BtAlpha => Plan {
            vol_names: vec!["int |u|^p |x'|^(-(alpha+1)p)", "int |x'|^(-alpha p) |grad u|^p"],
            vol: Box::new(move |x, out| {
                if let Some((_, h)) = c.u_at(x) {
                    let w = c.xprime(x);
                    out[0] = c.up(&h) * w.powf(-(alpha + 1.0) * p);
                    out[1] = w.powf(-alpha * p) * c.gp(&h);
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
        LocalHardy => Plan {
            vol_names: vec![
                "int d^(alpha-2) |grad d|^2 |u|^p",
                "int d^(p+alpha-2) |grad d|^(2-p) |grad u|^p",
            ],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let (d, _, gd2) = c.gauge_at(&frame, x);
                    out[0] = d.powf(alpha - 2.0) * gd2 * c.up(&h);
                    out[1] = d.powf(p + alpha - 2.0) * gd2.powf(1.0 - 0.5 * p) * c.gp(&h);
                }
            }),
            bnd_names: vec!["bd d^(alpha-1) |u|^p <grad~ d, dz>"],
            bnd: Some(Box::new(move |x, nds, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let (d, gd, _) = c.gauge_at(&frame, x);
                    out[0] = d.powf(alpha - 1.0) * c.up(&h) * flux(&frame, &gd, nds);
                }
            })),
        },
        Uncertainty => Plan {
            vol_names: vec![
                "int |u|^p",
                "int |LV|^-1 |u|^p",
                "int |grad V|^p |LV|^(1-p) |grad u|^p",
                "int |LV| |u|^p",
            ],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let vd = c.v_at(&frame, x);
                    let lv = vd.lap.abs();
                    let up = c.up(&h);
                    out[0] = up;
                    out[1] = up / lv;
                    out[2] = vd.grad_sq.powf(0.5 * p) * lv.powf(1.0 - p) * c.gp(&h);
                    out[3] = lv * up;
                }
            }),
            bnd_names: vec!["bd |u|^p <grad~ V, dz>"],
            bnd: Some(potential_flux),
        },
        HpwPrime | HpwClassical => Plan {
            vol_names: vec!["int |u|^p", "int |x'|^(2-alpha) |u|^p", "int |x'|^(alpha+p-2) |grad u|^p"],
            vol: Box::new(move |x, out| {
                if let Some((_, h)) = c.u_at(x) {
                    let w = c.xprime(x);
                    let up = c.up(&h);
                    out[0] = up;
                    out[1] = w.powf(2.0 - alpha) * up;
                    out[2] = w.powf(alpha + p - 2.0) * c.gp(&h);
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
        UncertGauge => Plan {
            vol_names: vec![
                "int |u|^p",
                "int d^(2-alpha) |grad d|^-2 |u|^p",
                "int d^(alpha+p-2) |grad d|^(2-p) |grad u|^p",
            ],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let (d, _, gd2) = c.gauge_at(&frame, x);
                    let up = c.up(&h);
                    out[0] = up;
                    out[1] = d.powf(2.0 - alpha) / gd2 * up;
                    out[2] = d.powf(alpha + p - 2.0) * gd2.powf(1.0 - 0.5 * p) * c.gp(&h);
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
        RellichL2Boundary => Plan {
            vol_names: vec!["int V |grad u|^2", "int |LV| |u|^2", "int V^2 |LV|^-1 |Lu|^2"],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let vd = c.v_at(&frame, x);
                    let lv = vd.lap.abs();
                    out[0] = vd.val * h.grad_norm_sq();
                    out[1] = lv * h.value.norm_sqr();
                    out[2] = vd.val * vd.val / lv * h.lap.norm_sqr();
                }
            }),
            bnd_names: vec!["bd |u|^2 <grad~ V, dz>", "bd V <grad~ |u|^2, dz>"],
            bnd: Some(Box::new(move |x, nds, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let vd = c.v_at(&frame, x);
                    let mut gu2 = [0.0; MAX_DIM];
                    for (k, a) in gu2.iter_mut().enumerate().take(frame.nh) {
                        *a = 2.0 * (h.value.conj() * h.grad[k]).re;
                    }
                    out[0] = h.value.norm_sqr() * flux(&frame, &vd.grad, nds);
                    out[1] = vd.val * flux(&frame, &gu2, nds);
                }
            })),
        },
        RellichPrimeL2 | RellichPrimeLp => {
            let (wl, wr) = if case == RellichPrimeL2 {
                (-alpha - 4.0, -alpha)
            } else {
                (-alpha, 2.0 * p - alpha)
            };
            Plan {
                vol_names: if case == RellichPrimeL2 {
                    vec!["int |u|^2 |x'|^(-alpha-4)", "int |Lu|^2 |x'|^-alpha"]
                } else {
                    vec!["int |u|^p |x'|^-alpha", "int |Lu|^p |x'|^(2p-alpha)"]
                },
                vol: Box::new(move |x, out| {
                    if let Some((_, h)) = c.u_at(x) {
                        let w = c.xprime(x);
                        out[0] = c.up(&h) * w.powf(wl);
                        out[1] = c.lp(&h) * w.powf(wr);
                    }
                }),
                bnd_names: vec![],
                bnd: None,
            }
        }
        RellichLp | LemmaSubs => Plan {
            vol_names: vec!["int |LV| |u|^p", "int V^p |LV|^(1-p) |Lu|^p"],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let vd = c.v_at(&frame, x);
                    let lv = vd.lap.abs();
                    out[0] = lv * c.up(&h);
                    out[1] = vd.val.powf(p) * lv.powf(1.0 - p) * c.lp(&h);
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
        LemmaSigma => Plan {
            vol_names: vec!["int |LV| |u|^p", "int V |u|^(p-2) |grad u|^2"],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let vd = c.v_at(&frame, x);
                    let m = h.value.norm();
                    out[0] = vd.lap.abs() * c.up(&h);
                    if m > 0.0 {
                        out[1] = vd.val * m.powf(p - 2.0) * h.grad_norm_sq();
                    }
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
        RellichGaugeL2 => Plan {
            vol_names: vec!["int d^(alpha-4) |grad d|^2 |u|^2", "int d^alpha |grad d|^-2 |Lu|^2"],
            vol: Box::new(move |x, out| {
                if let Some((frame, h)) = c.u_at(x) {
                    let (d, _, gd2) = c.gauge_at(&frame, x);
                    out[0] = d.powf(alpha - 4.0) * gd2 * h.value.norm_sqr();
                    out[1] = d.powf(alpha) / gd2 * h.lap.norm_sqr();
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
        ClassicalRellich => Plan {
            vol_names: vec!["int |u|^2 |x|^-4", "int |Lu|^2"],
            vol: Box::new(move |x, out| {
                if let Some((_, h)) = c.u_at(x) {
                    let r2: f64 = x.iter().map(|a| a * a).sum();
                    out[0] = h.value.norm_sqr() / (r2 * r2);
                    out[1] = h.lap.norm_sqr();
                }
            }),
            bnd_names: vec![],
            bnd: None,
        },
    }
}

/// Guarded `a^e` for a possibly vanishing norm raised to a negative power.
fn pow0(a: f64, e: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.powf(e)
    }
}

fn assemble(case: InequalityCase, r: &InequalityParams, k: f64, a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let p = r.p;
    let t = b.first().copied().unwrap_or(0.0);
    match case {
        CknBoundary => (a[0], p * a[1].powf(1.0 / p) * a[0].powf((p - 1.0) / p) - t, t),
        WeightedHardy => (a[0].powf(1.0 / p), p * a[1].powf(1.0 / p), 0.0),
        HardyTerm => (a[0].powf(1.0 / p), p * a[1].powf(1.0 / p) - pow0(a[0], (1.0 - p) / p) * t, t),
        HorizontalCkn | BadialeTarantello => {
            let gamma = r.gamma.unwrap_or(0.0);
            let main = a[1].powf(1.0 / p) * a[2].powf((p - 1.0) / p);
            let bt = if t == 0.0 { 0.0 } else { t / (p * (gamma - 2.0)) };
            (k * a[0], main - bt, t)
        }
        BtAlpha => (k * a[0].powf(1.0 / p), a[1].powf(1.0 / p), 0.0),
        LocalHardy => (
            k * a[0].powf(1.0 / p),
            a[1].powf(1.0 / p) + pow0(a[0], (1.0 - p) / p) * t / p,
            t,
        ),
        Uncertainty => {
            let bterm = if t == 0.0 {
                0.0
            } else {
                a[1].powf(1.0 / p) * pow0(a[3], (1.0 - p) / p) * t / p
            };
            (
                a[0].powf(2.0 / p) / p + bterm,
                a[1].powf(1.0 / p) * a[2].powf(1.0 / p),
                t,
            )
        }
        HpwPrime | HpwClassical | UncertGauge => (k * a[0] * a[0], a[1] * a[2], 0.0),
        RellichL2Boundary => {
            let e = r.eps.unwrap_or(0.0);
            let bt = t - b.get(1).copied().unwrap_or(0.0);
            (2.0 * e * a[0] + e * (1.0 - e) * a[1] + e * bt, a[2], bt)
        }
        RellichPrimeL2 | RellichGaugeL2 | ClassicalRellich => (k * a[0], a[1], 0.0),
        RellichPrimeLp => (a[0], k.powf(p) * a[1], 0.0),
        RellichLp => (a[0].powf(1.0 / p), k * a[1].powf(1.0 / p), 0.0),
        LemmaSubs => (k * a[0].powf(1.0 / p), p * a[1].powf(1.0 / p), 0.0),
        LemmaSigma => (k * a[0], p * p * a[1], 0.0),
    }
}

const PROJECTIONS: usize = 16;

/// The constant `C` of the substitution hypothesis that `u` satisfies:
/// `C int |L V| |u|^p <= p (p - 1) int V |u|^(p-2) |grad u|^2`.
///
/// For `p = 2` this is the field's own ratio. For other `p` the hypothesis is
/// needed for the real projections `Re(exp(-i theta) u)`, so the smallest ratio
/// over a grid of angles is returned. `p = 1` gives 0.
pub fn lemma_subs_constant(
    g: &GroupDescriptor,
    domain: &Domain,
    u: &dyn ScalarField,
    v: &dyn ScalarField,
    p: f64,
    s: &QuadSettings,
) -> Result<f64> {
    if p == 1.0 {
        return Ok(0.0);
    }
    let angles = if p == 2.0 || u.is_real() { 1 } else { PROJECTIONS };
    let vol = integrate_volume_vec(
        g,
        domain,
        2 * angles,
        |x, out| {
            let frame = g.frame(x);
            let h = horizontal_data(g, &frame, &u.jet(x));
            if h.value.norm_sqr() == 0.0 && h.grad_norm_sq() == 0.0 {
                return;
            }
            let (val, _, lap) = horizontal_data_real(g, &frame, &v.real_jet(x));
            if p == 2.0 {
                out[0] = lap.abs() * h.value.norm_sqr();
                out[1] = val * h.grad_norm_sq();
                return;
            }
            for j in 0..angles {
                let th = std::f64::consts::PI * j as f64 / PROJECTIONS as f64;
                let (c, sn) = (th.cos(), th.sin());
                let w = c * h.value.re + sn * h.value.im;
                let gw: f64 = (0..frame.nh)
                    .map(|k| {
                        let a = c * h.grad[k].re + sn * h.grad[k].im;
                        a * a
                    })
                    .sum();
                let m = w.abs();
                out[2 * j] = lap.abs() * m.powf(p);
                if m > 0.0 {
                    out[2 * j + 1] = val * m.powf(p - 2.0) * gw;
                }
            }
        },
        s,
    )?;
    let mut best = f64::INFINITY;
    for j in 0..angles {
        let (a, sv) = (vol.values[2 * j], vol.values[2 * j + 1]);
        if a > 0.0 {
            best = best.min(p * (p - 1.0) * sv / a);
        }
    }
    Ok(if best.is_finite() { best.max(0.0) } else { 0.0 })
}
