//! Empirical approach to sharp constants through power-law profiles on annuli.

use std::sync::Mutex;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::JetField;
use crate::group::GroupDescriptor;
use crate::ineq::{evaluate, resolve_params, sharp_constant, InequalityCase, InequalityParams};
use crate::jet::Jet;
use crate::quad::{Domain, QuadSettings, Shape};

use InequalityCase::*;

/// Tolerance of the never-exceed check on the achieved fraction.
pub const EXCEED_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialVariable {
    /// `|x'|`; only for groups whose first stratum is the whole space.
    FirstStratum,
    Gauge,
}

/// Profiles `rho^{-beta} eta(log rho)` where `eta` is 1 in the middle of
/// `[log(r0/2), log(2R)]` and falls to 0 at both ends through quintic
/// smoothstep tapers, so the field is C^2 and supported in `{r0/2 <= rho <= 2R}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremizerFamily {
    pub radial: RadialVariable,
    pub r0: f64,
    /// `R / r0`.
    pub ratio: f64,
    pub beta: (f64, f64),
    /// Each taper's share of the log-radius support, within `(0, 1/2]`.
    pub taper: (f64, f64),
}

impl ExtremizerFamily {
    /// Search box around the critical exponent of the case.
    pub fn around_critical(case: InequalityCase, params: &InequalityParams, g: &GroupDescriptor, ratio: f64) -> Result<Self> {
        let radial = if g.first_stratum_dim() == g.topological_dim() {
            RadialVariable::FirstStratum
        } else {
            RadialVariable::Gauge
        };
        let b = critical_exponent(case, params, g)?;
        Ok(ExtremizerFamily {
            radial,
            r0: 1.0,
            ratio,
            beta: (b - 0.5, b + 0.5),
            taper: (0.05, 0.5),
        })
    }

    pub fn with_ratio(&self, ratio: f64) -> Self {
        ExtremizerFamily { ratio, ..self.clone() }
    }

    fn validate(&self, g: &GroupDescriptor) -> Result<()> {
        if !(self.r0 > 0.0 && self.ratio > 1.0) {
            return Err(invalid("annulus needs r0 > 0 and R/r0 > 1"));
        }
        if !(self.beta.0 <= self.beta.1) || !(0.0 < self.taper.0 && self.taper.0 <= self.taper.1 && self.taper.1 <= 0.5) {
            return Err(invalid("search box needs beta lo <= hi and 0 < taper lo <= hi <= 1/2"));
        }
        if self.radial == RadialVariable::FirstStratum && g.first_stratum_dim() != g.topological_dim() {
            return Err(invalid(format!(
                "|x'|-radial profiles are not compactly supported on {}; use the gauge",
                g.name()
            )));
        }
        Ok(())
    }

    /// Support of every member, which is also the integration domain.
    pub fn support(&self) -> Shape {
        let (r0, r1) = (0.5 * self.r0, 2.0 * self.r0 * self.ratio);
        match self.radial {
            RadialVariable::FirstStratum => Shape::SphericalShell { r0, r1 },
            RadialVariable::Gauge => Shape::GaugeAnnulus { r0, r1 },
        }
    }

    pub fn member(&self, g: &GroupDescriptor, beta: f64, taper: f64) -> JetField {
        let a = (0.5 * self.r0).ln();
        let len = (2.0 * self.r0 * self.ratio).ln() - a;
        let gg = g.clone();
        let radial = self.radial;
        let name = format!(
            "profile(beta={beta:.6},taper={taper:.6},r0={},R/r0={})",
            self.r0, self.ratio
        );
        JetField::real(name, g.topological_dim(), move |v| {
            let rho = match radial {
                RadialVariable::FirstStratum => gg.first_stratum_norm_of(v),
                RadialVariable::Gauge => gg.gauge_of(v),
            };
            let t = (rho.value().ln() - a) / len;
            if !(0.0 < t && t < 1.0) {
                return Jet::constant(v.len(), 0.0);
            }
            let (e0, e1, e2) = plateau(t, taper);
            // chain rule through t = (log rho - a) / len
            let r = rho.value();
            let dt = 1.0 / (len * r);
            let d2t = -1.0 / (len * r * r);
            let eta = rho.chain(e0, e1 * dt, e2 * dt * dt + e1 * d2t);
            rho.powf(-beta) * eta
        })
        .with_support(self.support())
    }
}

/// Quintic smoothstep `6s^5 - 15s^4 + 10s^3` and its first two derivatives.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    let s2 = s * s;
    (
        s2 * s * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
    )
}

/// `eta(t)` on `[0, 1]` with tapers of width `w` at both ends.
fn plateau(t: f64, w: f64) -> (f64, f64, f64) {
    if t < w {
        let (a, b, c) = smoothstep(t / w);
        (a, b / w, c / (w * w))
    } else if t > 1.0 - w {
        let (a, b, c) = smoothstep((1.0 - t) / w);
        (a, -b / w, c / (w * w))
    } else {
        (1.0, 0.0, 0.0)
    }
}

/// Exponent `beta` at which `rho^{-beta}` makes the left-hand weight scale-critical.
pub fn critical_exponent(case: InequalityCase, params: &InequalityParams, g: &GroupDescriptor) -> Result<f64> {
    let r = resolve_params(case, params, g)?;
    let p = r.p;
    let n = g.first_stratum_dim() as f64;
    let q = g.homogeneous_dim() as f64;
    let a = r.alpha.unwrap_or(0.0);
    Ok(match case {
        HorizontalCkn | BadialeTarantello => {
            let nw = params.weight_dims.map_or(n, |k| k as f64);
            (nw - r.gamma.unwrap_or(0.0)) / p
        }
        BtAlpha => (params.weight_dims.map_or(n, |k| k as f64) - (a + 1.0) * p) / p,
        LocalHardy => (q + a - 2.0) / p,
        RellichPrimeL2 => (n - a - 4.0) / 2.0,
        RellichPrimeLp => (n - a) / p,
        RellichGaugeL2 => (q + a - 4.0) / 2.0,
        ClassicalRellich => (g.topological_dim() as f64 - 4.0) / 2.0,
        // Gaussians, not power laws, are extremal here; the box is exploratory
        HpwPrime | HpwClassical | UncertGauge => 0.0,
        _ => return Err(no_constant(case)),
    })
}

fn no_constant(case: InequalityCase) -> Error {
    Error::Config(format!("{case} has no fixed constant to approach"))
}

/// Power of the constant in the `lhs <= rhs` arrangement of the report.
fn constant_power(case: InequalityCase, p: f64) -> f64 {
    if case == RellichPrimeLp {
        p
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub beta: f64,
    pub taper: f64,
    pub fraction: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessResult {
    pub case: InequalityCase,
    pub ratio: f64,
    /// `lhs / rhs` of the best member.
    pub best_ratio: f64,
    pub sharp_constant: f64,
    /// `best_ratio^(1/power)`; 1 means the constant is attained.
    pub fraction: f64,
    pub power: f64,
    pub best_beta: f64,
    pub best_taper: f64,
    pub evaluations: usize,
    pub restarts: usize,
    pub budget_exhausted: bool,
    /// Largest fraction seen at any evaluation, converged or not.
    pub max_fraction: f64,
    pub exceeded: bool,
    pub trace: Vec<TracePoint>,
}

impl SharpnessResult {
    /// Rescores the run against a claimed constant in place of the proven one.
    ///
    /// The optimum does not move, since the claimed constant only rescales
    /// every ratio. Claiming more than the proven constant is how a
    /// violation of the never-exceed bound shows up.
    pub fn against(mut self, claimed: f64) -> Result<Self> {
        if !(claimed > 0.0 && claimed.is_finite()) {
            return Err(invalid(format!("claimed constant must be positive, got {claimed}")));
        }
        // the constant sits on the smaller side except for the L^p Rellich bound
        let scale = if self.case == RellichPrimeLp {
            self.sharp_constant / claimed
        } else {
            claimed / self.sharp_constant
        };
        self.sharp_constant = claimed;
        self.fraction *= scale;
        self.best_ratio = self.fraction.powf(self.power);
        self.max_fraction *= scale;
        for t in &mut self.trace {
            t.fraction *= scale;
        }
        self.exceeded = self.max_fraction > 1.0 + EXCEED_TOL;
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub seed: u64,
    /// Family evaluations across all restarts.
    pub budget: usize,
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            seed: 0,
            budget: 200,
            restarts: 3,
        }
    }
}

struct Objective<'a> {
    case: InequalityCase,
    g: &'a GroupDescriptor,
    params: &'a InequalityParams,
    family: &'a ExtremizerFamily,
    domain: Domain,
    s: &'a QuadSettings,
    power: f64,
    budget: usize,
    trace: Mutex<Vec<TracePoint>>,
}

impl Objective<'_> {
    /// Maps unconstrained simplex coordinates into the search box.
    fn unpack(&self, x: &[f64]) -> (f64, f64) {
        let squash = |v: f64, (lo, hi): (f64, f64)| lo + (hi - lo) * 0.5 * (1.0 + v.tanh());
        (squash(x[0], self.family.beta), squash(x[1], self.family.taper))
    }

    fn fraction(&self, beta: f64, taper: f64) -> Result<(f64, bool)> {
        let u = self.family.member(self.g, beta, taper);
        let rep = evaluate(self.case, self.g, &self.domain, &u, None, self.params, self.s)?;
        if !(rep.rhs > 0.0) {
            return Ok((0.0, rep.converged));
        }
        Ok(((rep.lhs / rep.rhs).max(0.0).powf(1.0 / self.power), rep.converged))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("evaluation budget exhausted")]
struct BudgetExhausted;

/// Borrowing handle, so the trace survives the executor.
struct Problem<'o, 'a>(&'o Objective<'a>);

impl CostFunction for Problem<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let obj = self.0;
        if obj.trace.lock().unwrap().len() >= obj.budget {
            return Err(BudgetExhausted.into());
        }
        let (beta, taper) = obj.unpack(x);
        let (fraction, converged) = obj.fraction(beta, taper).map_err(argmin::core::Error::from)?;
        obj.trace.lock().unwrap().push(TracePoint {
            beta,
            taper,
            fraction,
            converged,
        });
        // unconverged members never count as the optimum
        Ok(if converged { -fraction } else { 0.0 })
    }
}

/// Maximizes the fraction of the sharp constant over the family's search box.
///
/// Nelder-Mead runs in `tanh`-squashed coordinates so every trial stays in
/// the box; restarts begin from ChaCha-seeded points. The outcome depends
/// only on the inputs, the seed and the budget.
pub fn optimize_ratio(
    case: InequalityCase,
    g: &GroupDescriptor,
    params: &InequalityParams,
    family: &ExtremizerFamily,
    s: &QuadSettings,
    opt: &OptimizerSettings,
) -> Result<SharpnessResult> {
    if !case.has_fixed_constant() {
        return Err(no_constant(case));
    }
    let constant = sharp_constant(case, params, g)?;
    if !(constant > 0.0) {
        return Err(Error::Domain {
            predicate: "sharp constant > 0".into(),
            detail: format!("{case} has constant {constant} here (e.g. gamma = N)"),
        });
    }
    family.validate(g)?;
    let r = resolve_params(case, params, g)?;
    let obj = Objective {
        case,
        g,
        params,
        family,
        domain: Domain::new(family.support()),
        s,
        power: constant_power(case, r.p),
        budget: opt.budget,
        trace: Mutex::new(Vec::new()),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut restarts = 0;
    let mut start = vec![0.0, 0.0];
    let mut exhausted = false;
    for k in 0..opt.restarts.max(1) {
        if k > 0 {
            start = vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        }
        let simplex = vec![start.clone(), vec![start[0] + 0.6, start[1]], vec![start[0], start[1] + 0.6]];
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-7).map_err(|e| invalid(e.to_string()))?;
        restarts += 1;
        let run = Executor::new(Problem(&obj), solver).configure(|st| st.max_iters(opt.budget as u64)).run();
        match run {
            Ok(_) => {}
            Err(e) if e.downcast_ref::<BudgetExhausted>().is_some() => {
                exhausted = true;
                break;
            }
            Err(e) => {
                return Err(match e.downcast::<Error>() {
                    Ok(inner) => inner,
                    Err(other) => invalid(other.to_string()),
                })
            }
        }
        if obj.trace.lock().unwrap().len() >= opt.budget {
            exhausted = true;
            break;
        }
    }

    let trace = obj.trace.into_inner().unwrap();
    let best = trace
        .iter()
        .filter(|t| t.converged)
        .max_by(|a, b| a.fraction.total_cmp(&b.fraction))
        .cloned()
        .ok_or_else(|| Error::Singularity(format!("{case}: no family member converged")))?;
    let max_fraction = trace.iter().map(|t| t.fraction).fold(0.0, f64::max);
    Ok(SharpnessResult {
        case,
        ratio: family.ratio,
        best_ratio: best.fraction.powf(obj.power),
        sharp_constant: constant,
        fraction: best.fraction,
        power: obj.power,
        best_beta: best.beta,
        best_taper: best.taper,
        evaluations: trace.len(),
        restarts,
        budget_exhausted: exhausted,
        max_fraction,
        exceeded: max_fraction > 1.0 + EXCEED_TOL,
        trace,
    })
}

/// Runs [`optimize_ratio`] for every annulus ratio of the ladder.
pub fn ratio_curve(
    case: InequalityCase,
    g: &GroupDescriptor,
    params: &InequalityParams,
    family: &ExtremizerFamily,
    ladder: &[f64],
    s: &QuadSettings,
    opt: &OptimizerSettings,
) -> Result<Vec<SharpnessResult>> {
    ladder
        .iter()
        .map(|&ratio| optimize_ratio(case, g, params, &family.with_ratio(ratio), s, opt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    #[test]
    fn plateau_is_c2_at_the_joins() {
        for w in [0.1, 0.3, 0.5] {
            let h = 1e-7;
            for t in [w, 1.0 - w] {
                let (a0, a1, a2) = plateau(t - h, w);
                let (b0, b1, b2) = plateau(t + h, w);
                assert!((a0 - b0).abs() < 1e-6 && (a1 - b1).abs() < 1e-4 && (a2 - b2).abs() < 1e-2, "w={w} t={t}");
            }
            assert_eq!(plateau(0.5, w).0, 1.0);
        }
        assert!(plateau(1e-9, 0.2).0 < 1e-20);
    }

    #[test]
    fn members_vanish_outside_the_annulus() {
        let g = GroupDescriptor::abelian(3).unwrap();
        let fam = ExtremizerFamily::around_critical(BtAlpha, &InequalityParams::new(2.0).with_alpha(0.0), &g, 10.0).unwrap();
        assert_eq!(fam.beta, (0.0, 1.0));
        let u = fam.member(&g, 0.5, 0.25);
        assert_eq!(u.value(&[0.49, 0.0, 0.0]).re, 0.0);
        assert_eq!(u.value(&[0.0, 20.01, 0.0]).re, 0.0);
        // on the plateau the member is the bare power
        let x = [0.0, 0.0, 3.0];
        assert!((u.value(&x).re - 3f64.powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_and_unfixed_constants() {
        let g = GroupDescriptor::abelian(4).unwrap();
        let params = InequalityParams::new(2.0).with_gamma(4.0).with_alpha(1.0);
        let fam = ExtremizerFamily {
            radial: RadialVariable::FirstStratum,
            r0: 1.0,
            ratio: 10.0,
            beta: (0.0, 1.0),
            taper: (0.1, 0.5),
        };
        let err = optimize_ratio(HorizontalCkn, &g, &params, &fam, &QuadSettings::default(), &OptimizerSettings::default());
        assert!(err.is_err());
        let err = optimize_ratio(
            CknBoundary,
            &g,
            &InequalityParams::new(2.0),
            &fam,
            &QuadSettings::default(),
            &OptimizerSettings::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn first_stratum_profiles_need_a_full_first_stratum() {
        let g = GroupDescriptor::heisenberg(1).unwrap();
        let fam = ExtremizerFamily {
            radial: RadialVariable::FirstStratum,
            r0: 1.0,
            ratio: 10.0,
            beta: (0.0, 1.0),
            taper: (0.1, 0.5),
        };
        assert!(fam.validate(&g).is_err());
    }
}
