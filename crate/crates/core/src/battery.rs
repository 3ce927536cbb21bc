//! Test fields and the parameter grid of the slack suite.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{bump, gaussian, linear_chirp_phase, tapered_gaussian, JetField, ScalarField};
use crate::group::GroupDescriptor;
use crate::ineq::{evaluate_with, EvalOptions, InequalityCase, InequalityParams, InequalityReport};
use crate::jet::{CJet, Jet, MAX_DIM};
use crate::quad::{Domain, QuadSettings, Shape};

use InequalityCase::*;

/// `exp(i (k . x + m |x|^2))`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    #[serde(default)]
    pub k: Vec<f64>,
    #[serde(default)]
    pub m: f64,
}

/// A field named in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        phase: Option<PhaseSpec>,
    },
    TaperedGaussian {
        center: Vec<f64>,
        a: f64,
        radius: f64,
        #[serde(default)]
        phase: Option<PhaseSpec>,
    },
    /// Untapered; only meaningful for cases with a boundary term.
    Gaussian {
        center: Vec<f64>,
        a: f64,
        #[serde(default)]
        phase: Option<PhaseSpec>,
    },
    /// `coeff * x^exponents`, with `coeff` given as `[re, im]`.
    Monomial {
        exponents: Vec<u32>,
        #[serde(default = "unit_coeff")]
        coeff: [f64; 2],
    },
    /// The 21 fields of [`standard_fields`] fitted to the domain ball.
    Standard,
}

fn unit_coeff() -> [f64; 2] {
    [1.0, 0.0]
}

impl FieldSpec {
    pub fn build(&self, n: usize, domain: &Domain) -> Result<Vec<JetField>> {
        let check = |c: &[f64]| {
            if c.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("field centre {c:?} is not a point of R^{n}")))
            }
        };
        let with = |f: JetField, phase: &Option<PhaseSpec>| match phase {
            Some(ph) => {
                let mut k = ph.k.clone();
                k.resize(n, 0.0);
                f.with_phase("phase", linear_chirp_phase(k, ph.m))
            }
            None => f,
        };
        Ok(match self {
            FieldSpec::Bump { center, radius, phase } => {
                check(center)?;
                vec![with(bump(center.clone(), *radius), phase)]
            }
            FieldSpec::TaperedGaussian {
                center,
                a,
                radius,
                phase,
            } => {
                check(center)?;
                vec![with(tapered_gaussian(center.clone(), *a, *radius), phase)]
            }
            FieldSpec::Gaussian { center, a, phase } => {
                check(center)?;
                vec![with(gaussian(center.clone(), *a), phase)]
            }
            FieldSpec::Monomial { exponents, coeff } => {
                if exponents.len() != n {
                    return Err(Error::Config(format!("monomial exponents {exponents:?} need {n} entries")));
                }
                vec![monomial(exponents.clone(), Complex64::new(coeff[0], coeff[1]))]
            }
            FieldSpec::Standard => match &domain.shape {
                Shape::EuclideanBall { center, radius } => standard_fields(center, *radius),
                _ => return Err(Error::Config("the standard battery needs a ball domain".into())),
            },
        })
    }
}

fn monomial(exponents: Vec<u32>, c: Complex64) -> JetField {
    let n = exponents.len();
    let label: Vec<String> = exponents
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0)
        .map(|(i, e)| format!("x{}^{e}", i + 1))
        .collect();
    let name = if label.is_empty() { "1".to_string() } else { label.join(" ") };
    let f = JetField::real(name, n, move |v| {
        let mut acc = Jet::constant(n, 1.0);
        for (x, e) in v.iter().zip(&exponents) {
            for _ in 0..*e {
                acc = acc * *x;
            }
        }
        acc
    });
    if c == Complex64::new(1.0, 0.0) {
        f
    } else {
        f.scaled(c)
    }
}

/// Scaled coordinates `(x - c) / r`.
fn local(v: &[Jet], c: &[f64], r: f64) -> [Jet; MAX_DIM] {
    let n = v.len();
    std::array::from_fn(|i| if i < n { (v[i] - c[i]) / r } else { Jet::constant(n, 0.0) })
}

fn offset(c: &[f64], r: f64, off: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .map(|(i, ci)| ci + r * off.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn ball(c: &[f64], r: f64) -> Shape {
    Shape::EuclideanBall {
        center: c.to_vec(),
        radius: r,
    }
}

/// Product of a field with a real polynomial in the scaled coordinates.
fn modulated(
    f: JetField,
    label: &str,
    c: &[f64],
    r: f64,
    poly: impl Fn(&[Jet; MAX_DIM]) -> Jet + Send + Sync + 'static,
) -> JetField {
    let support = f.support().cloned();
    let n = c.len();
    let c = c.to_vec();
    let name = format!("{}*({label})", f.name());
    let out = JetField::complex(name, n, move |v| {
        let base = f.eval_jets(v);
        if base.is_zero() {
            return base;
        }
        base * poly(&local(v, &c, r))
    });
    match support {
        Some(s) => out.with_support(s),
        None => out,
    }
}

/// Smooth compactly supported fields in the ball `B(center, radius)`, strictly inside it.
///
/// Twelve are real and nine genuinely complex. The first eight real fields and
/// most complex ones are centred at `center`; the others keep their support at
/// least `0.1 radius` away from it, so when `center` is a singular point of a
/// weight they probe the weight without touching the singularity.
pub fn standard_fields(center: &[f64], radius: f64) -> Vec<JetField> {
    let n = center.len();
    let r = radius;
    let c = center.to_vec();
    let last = n - 1;
    let third = 2.min(last);
    let off_a = offset(&c, r, &[0.5]);
    let off_b = offset(&c, r, if n >= 3 { &[0.0, -0.45, 0.2] } else { &[0.0, -0.45] });
    let off_c = offset(&c, r, &[0.3, 0.3, 0.3]);
    let off_d = offset(&c, r, if n >= 3 { &[-0.4, 0.3, -0.3] } else { &[-0.4, 0.3] });
    let off_e = offset(&c, r, &[0.6]);

    let mut out = vec![
        bump(c.clone(), 0.9 * r),
        bump(c.clone(), 0.5 * r),
        tapered_gaussian(c.clone(), 1.0 / (r * r), 0.9 * r),
        tapered_gaussian(c.clone(), 4.0 / (r * r), 0.8 * r),
        modulated(bump(c.clone(), 0.9 * r), "1+y0/2", &c, r, |y| y[0] * 0.5 + 1.0),
        modulated(bump(c.clone(), 0.7 * r), "y0^2-y1^2+0.3", &c, r, |y| {
            y[0].square() - y[1].square() + 0.3
        }),
    ];
    let weights = [1.0, 4.0, 2.5, 0.5, 3.0, 1.5, 2.0];
    out.push(modulated(bump(c.clone(), 0.8 * r), "anisotropic gauss", &c, r, move |y| {
        let n = y[0].dim();
        let mut s = Jet::constant(n, 0.0);
        for i in 0..n {
            s += y[i].square() * weights[i];
        }
        (-s).exp()
    }));
    out.push(modulated(
        tapered_gaussian(c.clone(), 0.5 / (r * r), 0.95 * r),
        "1+y1*yn",
        &c,
        r,
        move |y| y[1] * y[last] + 1.0,
    ));
    out.push(bump(off_a.clone(), 0.35 * r));
    out.push(bump(off_b, 0.3 * r));
    out.push(tapered_gaussian(off_c.clone(), 2.0 / (r * r), 0.35 * r));
    out.push(modulated(bump(off_d, 0.3 * r), "1+y2", &c, r, move |y| y[third] + 1.0));

    let cc = c.clone();
    let phase = move |f: JetField, label: &str, theta: fn(&[Jet; MAX_DIM]) -> Jet| {
        let cc = cc.clone();
        f.with_phase(label, move |v| theta(&local(v, &cc, r)))
    };
    let mut k = vec![1.0, 0.5, -0.3];
    k.resize(n, 0.0);
    let scaled_k: Vec<f64> = k.iter().map(|a| a / r).collect();
    let chirp = linear_chirp_phase(scaled_k, 0.4 / (r * r));
    let cs = c.clone();
    out.push(
        bump(c.clone(), 0.9 * r).with_phase("chirp", move |v| {
            // the chirp is written in absolute coordinates; shift it to the centre
            let shifted = local(v, &cs, 1.0);
            chirp(&shifted[..v.len()])
        }),
    );
    out.push(phase(tapered_gaussian(c.clone(), 2.0 / (r * r), 0.8 * r), "exp(3i y0)", |y| {
        y[0] * 3.0
    }));
    out.push(phase(bump(c.clone(), 0.6 * r), "exp(i(y0 y1 + yn^2))", |y| {
        let n = y[0].dim();
        y[0] * y[1] + y[n - 1].square()
    }));
    let c1 = c.clone();
    let b1 = bump(c.clone(), 0.9 * r);
    out.push(
        JetField::complex(format!("{}*(1+i y0)", b1.name()), n, move |v| {
            let base = b1.eval_jets(v);
            if base.is_zero() {
                return base;
            }
            let y0 = (v[0] - c1[0]) / r;
            base * CJet {
                re: Jet::constant(v.len(), 1.0),
                im: y0,
            }
        })
        .with_support(ball(&c, 0.9 * r)),
    );
    out.push(phase(bump(off_a, 0.35 * r), "exp(2i y1)", |y| y[1] * 2.0));
    out.push(phase(
        tapered_gaussian(off_c, 1.0 / (r * r), 0.35 * r),
        "exp(4i (y0 - y2))",
        |y| {
            let n = y[0].dim();
            (y[0] - y[2.min(n - 1)]) * 4.0
        },
    ));
    let inner = bump(c.clone(), 0.5 * r);
    let side = bump(off_e, 0.3 * r);
    out.push(
        JetField::complex("bump + i bump", n, move |v| {
            let a = inner.eval_jets(v);
            let b = side.eval_jets(v);
            CJet {
                re: a.re - b.im,
                im: a.im + b.re,
            }
        })
        .with_support(ball(&c, 0.9 * r)),
    );
    out.push(
        phase(bump(c.clone(), 0.8 * r), "exp(i y1^2)", |y| y[1].square()).scaled(Complex64::new(2.0, -1.0)),
    );
    out.push(phase(bump(c.clone(), 0.9 * r), "exp(5i y0 y1 y2)", |y| {
        let n = y[0].dim();
        y[0] * y[1] * y[2.min(n - 1)] * 5.0
    }));
    out
}

/// Quadrature settings of the suite: relative tolerance `1e-6` up to four
/// dimensions, loosened by a factor of ten per extra dimension so that
/// the evaluation cap is not hit.
pub fn suite_quad_settings(n: usize) -> QuadSettings {
    QuadSettings {
        rel_tol: 1e-6 * 10f64.powi(n.saturating_sub(4) as i32),
        ..QuadSettings::default()
    }
}

/// One group, domain and parameter point of a battery case.
#[derive(Clone, Debug)]
pub struct Setting {
    pub group: GroupDescriptor,
    pub domain: Domain,
    pub params: InequalityParams,
}

impl Setting {
    pub fn quad_settings(&self) -> QuadSettings {
        suite_quad_settings(self.group.topological_dim())
    }
}

#[derive(Clone, Debug)]
pub struct BatteryCase {
    pub case: InequalityCase,
    pub settings: Vec<Setting>,
}

impl BatteryCase {
    pub fn fields(&self, setting: &Setting) -> Vec<JetField> {
        match &setting.domain.shape {
            Shape::EuclideanBall { center, radius } => standard_fields(center, *radius),
            _ => unreachable!("battery domains are balls"),
        }
    }
}

/// The parameter grid of the slack suite.
///
/// Abelian settings integrate over the unit ball at the origin, so singular
/// weights sit at the centre of a polar chart. On the Heisenberg group the
/// weights `|grad_G d|^{-2}` and `|x'|^s` are singular along the whole
/// `t`-axis, so those settings use a ball centred at `(1.5, 0, 0)` that stays
/// clear of it.
pub fn standard_battery() -> Result<Vec<BatteryCase>> {
    let a3 = GroupDescriptor::abelian(3)?;
    let a4 = GroupDescriptor::abelian(4)?;
    let a5 = GroupDescriptor::abelian(5)?;
    let a6 = GroupDescriptor::abelian(6)?;
    let h1 = GroupDescriptor::heisenberg(1)?;
    let at = |g: &GroupDescriptor, params: InequalityParams| {
        let n = g.topological_dim();
        let domain = if g.kind() == crate::group::GroupKind::Abelian {
            Domain::ball(vec![0.0; n], 1.0)
        } else {
            let mut c = vec![0.0; n];
            c[0] = 1.5;
            Domain::ball(c, 1.0)
        };
        Setting {
            group: g.clone(),
            domain,
            params,
        }
    };
    let p = InequalityParams::new;
    let hardy_family = || {
        vec![
            at(&a3, p(2.0).with_gamma(2.5)),
            at(&a3, p(3.0).with_gamma(2.2)),
            at(&h1, p(2.0).with_alpha(-1.0)),
        ]
    };
    let rellich_family = || {
        vec![
            at(&a3, p(2.0).with_alpha(2.5).with_sigma(2.0)),
            at(&a3, p(3.0).with_alpha(2.5).with_sigma(1.5)),
            at(&a3, p(2.0).with_alpha(2.2).with_sigma(3.0)),
        ]
    };
    let mut out = Vec::new();
    for case in InequalityCase::ALL {
        let settings = match case {
            CknBoundary | WeightedHardy | HardyTerm => hardy_family(),
            HorizontalCkn => vec![
                at(&a3, p(2.0).with_gamma(2.5)),
                at(&a3, p(2.0).with_gamma(2.2)),
                at(&a3, p(3.0).with_gamma(2.7)),
            ],
            BadialeTarantello => vec![
                at(&a3, p(2.0).with_gamma(2.5).with_alpha(0.3)),
                at(&a3, p(3.0).with_gamma(2.4)),
                at(&a3, p(2.0).with_gamma(2.9)),
            ],
            BtAlpha => vec![
                at(&a3, p(2.0).with_alpha(0.0)),
                at(&a3, p(2.0).with_alpha(-0.5)),
                at(&a3, p(3.0).with_alpha(-0.2)),
                at(&h1, p(2.0).with_alpha(0.5)),
            ],
            LocalHardy => vec![
                at(&a3, p(2.0).with_alpha(-0.5)),
                at(&h1, p(2.0).with_alpha(-1.0)),
                at(&h1, p(3.0).with_alpha(-0.5)),
            ],
            Uncertainty => vec![
                at(&a3, p(2.0).with_alpha(2.0)),
                at(&a3, p(2.0).with_alpha(-0.5)),
                at(&h1, p(3.0).with_alpha(2.0)),
            ],
            HpwPrime => vec![
                at(&a3, p(2.0).with_alpha(0.5)),
                at(&a3, p(3.0).with_alpha(0.0)),
                at(&h1, p(2.0).with_alpha(1.0)),
            ],
            // p and alpha are fixed, so the dimension is the only free parameter
            HpwClassical => vec![at(&a3, p(2.0)), at(&a4, p(2.0)), at(&a5, p(2.0))],
            UncertGauge => vec![
                at(&a3, p(2.0).with_alpha(0.5)),
                at(&h1, p(2.0).with_alpha(0.0)),
                at(&h1, p(3.0).with_alpha(1.0)),
            ],
            RellichL2Boundary => vec![
                at(&a3, p(2.0).with_alpha(-1.5).with_eps(0.75)),
                at(&a3, p(2.0).with_alpha(-1.2).with_eps(0.3)),
                at(&a3, p(2.0).with_alpha(-1.8).with_eps(1.2)),
            ],
            RellichPrimeL2 => vec![
                at(&a3, p(2.0).with_alpha(-1.8)),
                at(&a3, p(2.0).with_alpha(-1.5)),
                at(&a3, p(2.0).with_alpha(-1.2)),
            ],
            RellichLp | LemmaSigma => rellich_family(),
            LemmaSubs => vec![
                at(&a3, p(2.0).with_alpha(2.5)),
                at(&a3, p(3.0).with_alpha(2.5)),
                at(&a3, p(2.0).with_alpha(2.2)),
            ],
            RellichPrimeLp => vec![
                at(&a3, p(2.0).with_alpha(2.5)),
                at(&a3, p(3.0).with_alpha(2.5)),
                at(&a3, p(2.0).with_alpha(2.2)),
            ],
            RellichGaugeL2 => vec![
                at(&a3, p(2.0).with_alpha(1.2)),
                at(&a3, p(2.0).with_alpha(1.5)),
                at(&h1, p(2.0).with_alpha(1.0)),
            ],
            // as above; the third point keeps every support away from the origin
            ClassicalRellich => vec![
                at(&a5, p(2.0)),
                at(&a6, p(2.0)),
                Setting {
                    domain: Domain::ball(vec![1.5, 0.0, 0.0, 0.0, 0.0], 1.0),
                    ..at(&a5, p(2.0))
                },
            ],
        };
        out.push(BatteryCase { case, settings });
    }
    Ok(out)
}

/// Evaluates `case` for every field, in field order.
///
/// For the substitution lemma without a fixed `c`, the constant is first
/// measured on every field and the smallest value is then used for all of
/// them, so the second pass tests the implication with one battery-wide `C`.
#[allow(clippy::too_many_arguments)]
pub fn run_fields(
    case: InequalityCase,
    g: &GroupDescriptor,
    domain: &Domain,
    params: &InequalityParams,
    fields: &[JetField],
    v: Option<&JetField>,
    s: &QuadSettings,
    opts: &EvalOptions,
) -> Result<Vec<InequalityReport>> {
    let v = v.map(|f| f as &dyn ScalarField);
    let eval = |params: &InequalityParams| -> Result<Vec<InequalityReport>> {
        fields
            .par_iter()
            .map(|u| evaluate_with(case, g, domain, u, v, params, s, opts))
            .collect()
    };
    if case == LemmaSubs && params.c.is_none() {
        let first = eval(params)?;
        let c = first
            .iter()
            .filter_map(|r| r.params.c)
            .fold(f64::INFINITY, f64::min);
        let c = if c.is_finite() { c } else { 0.0 };
        return eval(&params.clone().with_c(c));
    }
    eval(params)
}

pub fn run_setting(
    case: InequalityCase,
    setting: &Setting,
    fields: &[JetField],
    s: &QuadSettings,
    opts: &EvalOptions,
) -> Result<Vec<InequalityReport>> {
    run_fields(case, &setting.group, &setting.domain, &setting.params, fields, None, s, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_stay_inside_the_ball() {
        for (c, r) in [(vec![0.0; 3], 1.0), (vec![1.5, 0.0, 0.0], 1.0), (vec![0.0; 5], 2.0)] {
            let fields = standard_fields(&c, r);
            assert_eq!(fields.len(), 21);
            let complex = fields.iter().filter(|f| f.value(&offset(&c, r, &[0.1, 0.05])).im != 0.0).count();
            assert!(complex >= 5, "{complex} complex fields");
            let outer = ball(&c, r);
            let g = GroupDescriptor::abelian(c.len()).unwrap();
            for f in &fields {
                let sh = f.support().expect("compact support");
                assert!(sh.within(&g, &outer), "{}", f.name());
                // sample just outside the claimed support
                if let Shape::EuclideanBall { center, radius } = sh {
                    let mut x = center.clone();
                    x[0] += radius * 1.001;
                    assert_eq!(f.value(&x), Complex64::new(0.0, 0.0), "{}", f.name());
                }
            }
        }
    }

    #[test]
    fn off_centre_fields_avoid_the_centre() {
        let c = vec![0.0; 3];
        let fields = standard_fields(&c, 1.0);
        for i in [8, 9, 10, 11, 16, 17] {
            match fields[i].support().unwrap() {
                Shape::EuclideanBall { center, radius } => {
                    let d = center.iter().map(|a| a * a).sum::<f64>().sqrt();
                    assert!(d - radius >= 0.1 - 1e-12, "{} reaches the centre", fields[i].name());
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn every_case_has_three_admissible_points() {
        let battery = standard_battery().unwrap();
        assert_eq!(battery.len(), InequalityCase::ALL.len());
        for bc in &battery {
            assert!(bc.settings.len() >= 3, "{}", bc.case);
            for st in &bc.settings {
                crate::ineq::resolve_params(bc.case, &st.params, &st.group)
                    .unwrap_or_else(|e| panic!("{} {:?}: {e}", bc.case, st.params));
            }
        }
    }

    #[test]
    fn field_specs_parse_and_reject_unknown_keys() {
        let spec: Vec<FieldSpec> = serde_json::from_str(
            r#"[{"kind": "bump", "center": [0, 0, 0], "radius": 0.5},
                {"kind": "tapered_gaussian", "center": [0, 0, 0], "a": 1, "radius": 0.8,
                 "phase": {"k": [1, 0, 0], "m": 0.5}},
                {"kind": "standard"}]"#,
        )
        .unwrap();
        let dom = Domain::ball(vec![0.0; 3], 1.0);
        let built: usize = spec.iter().map(|s| s.build(3, &dom).unwrap().len()).sum();
        assert_eq!(built, 23);
        assert!(serde_json::from_str::<FieldSpec>(r#"{"kind": "bump", "center": [0], "radius": 1, "colour": 2}"#).is_err());
        assert!(spec[0].build(2, &dom).is_err());
    }
}
