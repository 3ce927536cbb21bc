//! The inequality engine: every term of each inequality, its constant, and a verdict.

mod conditions;
mod eval;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupDescriptor, GroupKind};

pub use conditions::{check_pointwise_conditions, ConditionReport};
pub use eval::{evaluate, evaluate_with, lemma_subs_constant, EvalOptions, InequalityReport, TermValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InequalityCase {
    CknBoundary,
    WeightedHardy,
    HardyTerm,
    HorizontalCkn,
    BadialeTarantello,
    BtAlpha,
    LocalHardy,
    Uncertainty,
    HpwPrime,
    HpwClassical,
    UncertGauge,
    RellichL2Boundary,
    RellichPrimeL2,
    RellichLp,
    LemmaSubs,
    LemmaSigma,
    RellichPrimeLp,
    RellichGaugeL2,
    ClassicalRellich,
}

use InequalityCase::*;

impl InequalityCase {
    pub const ALL: [InequalityCase; 19] = [
        CknBoundary,
        WeightedHardy,
        HardyTerm,
        HorizontalCkn,
        BadialeTarantello,
        BtAlpha,
        LocalHardy,
        Uncertainty,
        HpwPrime,
        HpwClassical,
        UncertGauge,
        RellichL2Boundary,
        RellichPrimeL2,
        RellichLp,
        LemmaSubs,
        LemmaSigma,
        RellichPrimeLp,
        RellichGaugeL2,
        ClassicalRellich,
    ];

    pub fn id(self) -> &'static str {
        match self {
            CknBoundary => "CKN_BOUNDARY",
            WeightedHardy => "WEIGHTED_HARDY",
            HardyTerm => "HARDY_TERM",
            HorizontalCkn => "HORIZONTAL_CKN",
            BadialeTarantello => "BADIALE_TARANTELLO",
            BtAlpha => "BT_ALPHA",
            LocalHardy => "LOCAL_HARDY",
            Uncertainty => "UNCERTAINTY",
            HpwPrime => "HPW_PRIME",
            HpwClassical => "HPW_CLASSICAL",
            UncertGauge => "UNCERT_GAUGE",
            RellichL2Boundary => "RELLICH_L2_BOUNDARY",
            RellichPrimeL2 => "RELLICH_PRIME_L2",
            RellichLp => "RELLICH_LP",
            LemmaSubs => "LEMMA_SUBS",
            LemmaSigma => "LEMMA_SIGMA",
            RellichPrimeLp => "RELLICH_PRIME_LP",
            RellichGaugeL2 => "RELLICH_GAUGE_L2",
            ClassicalRellich => "CLASSICAL_RELLICH",
        }
    }

    pub fn eq_tag(self) -> &'static str {
        match self {
            CknBoundary => "Eq. (CKN_term)",
            WeightedHardy => "Eq. (Hardy)",
            HardyTerm => "Eq. (Hardy_term)",
            HorizontalCkn => "Eq. (ex1)/(123)",
            BadialeTarantello => "Eq. (BT_eq)",
            BtAlpha => "Eq. (3.16)",
            LocalHardy => "Eq. (COR123)",
            Uncertainty => "Eq. (uncert_term)/(uncert)",
            HpwPrime => "Eq. (uncert), V=|x'|^alpha",
            HpwClassical => "Eq. (uncert), abelian alpha=0 p=2",
            UncertGauge => "Eq. (uncert), V=d^alpha",
            RellichL2Boundary => "Eq. (Rel_eq)",
            RellichPrimeL2 => "Eq. (6.2.3)",
            RellichLp => "Eq. (rel_eq)",
            LemmaSubs => "Eqs. (subs)->(subs2)",
            LemmaSigma => "Lemma 3.5",
            RellichPrimeLp => "Eqs. (123)/(3.10)",
            RellichGaugeL2 => "Eq. (Rel_Kombe)",
            ClassicalRellich => "Remark 3.8",
        }
    }

    /// Parameters the case reads.
    pub fn requirements(self) -> &'static str {
        match self {
            CknBoundary | HardyTerm | Uncertainty => "p; potential V",
            WeightedHardy => "p; potential V; u supported inside the domain",
            HorizontalCkn => "p, gamma, alpha (beta = gamma - alpha - 1)",
            BadialeTarantello => "p, gamma, alpha, weight_dims; abelian group",
            BtAlpha => "p, alpha; optional weight_dims on abelian groups",
            LocalHardy => "p, alpha",
            HpwPrime => "p, alpha",
            HpwClassical => "abelian group; p = 2, alpha = 0",
            UncertGauge => "p, alpha",
            RellichL2Boundary => "p = 2, eps; potential V",
            RellichPrimeL2 => "p = 2, alpha",
            RellichLp => "p, sigma; potential V",
            LemmaSubs => "p; potential V; optional c",
            LemmaSigma => "p, sigma; potential V",
            RellichPrimeLp => "p, alpha",
            RellichGaugeL2 => "p = 2, alpha",
            ClassicalRellich => "abelian group; p = 2",
        }
    }

    /// Human-readable admissibility predicate.
    pub fn predicate(self) -> &'static str {
        match self {
            CknBoundary | WeightedHardy | HardyTerm => "1<p; L V < 0 on the domain",
            HorizontalCkn => "2<gamma<N, gamma=alpha+beta+1, N>=3, 1<p",
            BadialeTarantello => "2<gamma<N', gamma=alpha+beta+1, 1<=N'<=n, 1<p",
            BtAlpha => "1<p",
            LocalHardy => "0>alpha>2-Q, Q>=3, 1<p",
            Uncertainty => "1<p; L V one-signed on the domain",
            HpwPrime => "alpha>2-N, 1<p",
            HpwClassical => "n>=3, p=2, alpha=0",
            UncertGauge => "alpha>2-Q, Q>=3, 1<p",
            RellichL2Boundary => "p=2, eps>0; V>0, L V < 0",
            RellichPrimeL2 => "alpha>-2, N>alpha+4, p=2",
            RellichLp => "sigma>1, 1<=p; V>0, L V < 0, L V^sigma <= 0",
            LemmaSubs => "1<=p; V>=0, L V < 0",
            LemmaSigma => "sigma>1, 1<p; V>0, L V < 0, L V^sigma <= 0",
            RellichPrimeLp => "2<alpha<N, 1<=p",
            RellichGaugeL2 => "Q>=3, alpha<2, Q+alpha-4>0, p=2",
            ClassicalRellich => "n>=5, p=2",
        }
    }

    /// Cases whose integrals carry a boundary term when `u` does not vanish on the boundary.
    pub fn has_boundary_term(self) -> bool {
        matches!(
            self,
            CknBoundary | HardyTerm | HorizontalCkn | LocalHardy | Uncertainty | RellichL2Boundary
        )
    }

    /// Cases built on a caller-supplied potential `V`.
    pub fn needs_potential(self) -> bool {
        matches!(
            self,
            CknBoundary | WeightedHardy | HardyTerm | Uncertainty | RellichL2Boundary | RellichLp | LemmaSubs | LemmaSigma
        )
    }

    /// Cases whose constant is fixed by the parameters and claimed or expected sharp.
    pub fn has_fixed_constant(self) -> bool {
        matches!(
            self,
            HorizontalCkn
                | BadialeTarantello
                | BtAlpha
                | LocalHardy
                | HpwPrime
                | HpwClassical
                | UncertGauge
                | RellichPrimeL2
                | RellichPrimeLp
                | RellichGaugeL2
                | ClassicalRellich
        )
    }
}

impl fmt::Display for InequalityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for InequalityCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InequalityCase::ALL
            .iter()
            .copied()
            .find(|c| c.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown inequality case {s:?}")))
    }
}

fn default_p() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityParams {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    /// `N'` for weights `|x'|` over the first `N'` coordinates of `R^n`.
    #[serde(default)]
    pub weight_dims: Option<usize>,
    /// The constant `C` of the substitution lemma; computed from the field when absent.
    #[serde(default)]
    pub c: Option<f64>,
    /// Skips the admissibility window (exploration only; verdicts are not claims).
    #[serde(default)]
    pub override_admissibility: bool,
}

impl Default for InequalityParams {
    fn default() -> Self {
        InequalityParams::new(2.0)
    }
}

impl InequalityParams {
    pub fn new(p: f64) -> Self {
        InequalityParams {
            p,
            alpha: None,
            beta: None,
            gamma: None,
            sigma: None,
            eps: None,
            weight_dims: None,
            c: None,
            override_admissibility: false,
        }
    }

    pub fn with_alpha(mut self, a: f64) -> Self {
        self.alpha = Some(a);
        self
    }

    pub fn with_beta(mut self, b: f64) -> Self {
        self.beta = Some(b);
        self
    }

    pub fn with_gamma(mut self, g: f64) -> Self {
        self.gamma = Some(g);
        self
    }

    pub fn with_sigma(mut self, s: f64) -> Self {
        self.sigma = Some(s);
        self
    }

    pub fn with_eps(mut self, e: f64) -> Self {
        self.eps = Some(e);
        self
    }

    pub fn with_weight_dims(mut self, n: usize) -> Self {
        self.weight_dims = Some(n);
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }
}

fn violated(predicate: &str, detail: String) -> Error {
    Error::Domain {
        predicate: predicate.to_string(),
        detail,
    }
}

fn need(name: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(x) if x.is_finite() => Ok(x),
        Some(x) => Err(violated(&format!("{name} finite"), format!("{name} = {x}"))),
        None => Err(violated(&format!("{name} given"), format!("parameter {name} is required"))),
    }
}

/// Dimension of the space carrying the `|x'|` weight.
pub(crate) fn weight_dim(case: InequalityCase, p: &InequalityParams, g: &GroupDescriptor) -> Result<usize> {
    match (case, p.weight_dims) {
        (BadialeTarantello | BtAlpha, Some(k)) => {
            if g.kind() != GroupKind::Abelian {
                return Err(violated("weight_dims on an abelian group", format!("group {}", g.name())));
            }
            if k == 0 || k > g.topological_dim() {
                return Err(violated("1<=N'<=n", format!("N' = {k}, n = {}", g.topological_dim())));
            }
            Ok(k)
        }
        (BadialeTarantello, None) => Ok(g.topological_dim()),
        (_, Some(_)) => Err(violated(
            "weight_dims only for BADIALE_TARANTELLO and BT_ALPHA",
            format!("case {case}"),
        )),
        _ => Ok(g.first_stratum_dim()),
    }
}

/// Checks the case's admissibility window and fills in derived parameters.
pub fn resolve_params(case: InequalityCase, params: &InequalityParams, g: &GroupDescriptor) -> Result<InequalityParams> {
    let mut r = params.clone();
    let p = r.p;
    if !p.is_finite() {
        return Err(violated("p finite", format!("p = {p}")));
    }
    let strict = !params.override_admissibility;
    let nw = weight_dim(case, params, g)? as f64;
    let q = g.homogeneous_dim() as f64;
    let n = g.topological_dim() as f64;
    let check = |ok: bool, pred: &str, detail: String| -> Result<()> {
        if ok || !strict {
            Ok(())
        } else {
            Err(violated(pred, detail))
        }
    };
    let p_open = |r: &InequalityParams| check(r.p > 1.0, "1<p", format!("p = {}", r.p));
    let p_closed = |r: &InequalityParams| check(r.p >= 1.0, "1<=p", format!("p = {}", r.p));
    let p_two = |r: &InequalityParams| {
        if r.p == 2.0 {
            Ok(())
        } else {
            Err(violated("p=2", format!("p = {}", r.p)))
        }
    };
    let abelian = || {
        if g.kind() == GroupKind::Abelian {
            Ok(())
        } else {
            Err(violated("abelian group", format!("group {}", g.name())))
        }
    };
    match case {
        CknBoundary | WeightedHardy | HardyTerm | Uncertainty => p_open(&r)?,
        HorizontalCkn | BadialeTarantello => {
            p_open(&r)?;
            if case == BadialeTarantello {
                abelian()?;
            }
            let gamma = need("gamma", r.gamma)?;
            let alpha = match r.alpha {
                Some(a) => a,
                None => match r.beta {
                    Some(b) => gamma - b - 1.0,
                    None => (gamma - p) / p,
                },
            };
            let beta = gamma - alpha - 1.0;
            if let Some(b) = r.beta {
                if (b - beta).abs() > 1e-12 * (1.0 + b.abs()) {
                    return Err(violated(
                        "gamma=alpha+beta+1",
                        format!("alpha = {alpha}, beta = {b}, gamma = {gamma}"),
                    ));
                }
            }
            r.alpha = Some(alpha);
            r.beta = Some(beta);
            let pred = if case == HorizontalCkn { "2<gamma<N" } else { "2<gamma<N'" };
            check(gamma > 2.0 && gamma < nw, pred, format!("gamma = {gamma}, N = {nw}"))?;
            if case == HorizontalCkn {
                check(nw >= 3.0, "N>=3", format!("N = {nw}"))?;
            }
        }
        BtAlpha => {
            p_open(&r)?;
            need("alpha", r.alpha)?;
        }
        LocalHardy => {
            p_open(&r)?;
            let a = need("alpha", r.alpha)?;
            check(q >= 3.0, "Q>=3", format!("Q = {q}"))?;
            check(a < 0.0 && a > 2.0 - q, "0>alpha>2-Q", format!("alpha = {a}, Q = {q}"))?;
        }
        HpwPrime => {
            p_open(&r)?;
            let a = need("alpha", r.alpha)?;
            check(a > 2.0 - nw, "alpha>2-N", format!("alpha = {a}, N = {nw}"))?;
        }
        HpwClassical => {
            abelian()?;
            p_two(&r)?;
            if r.alpha.unwrap_or(0.0) != 0.0 {
                return Err(violated("alpha=0", format!("alpha = {:?}", r.alpha)));
            }
            r.alpha = Some(0.0);
            check(n >= 3.0, "n>=3", format!("n = {n}"))?;
        }
        UncertGauge => {
            p_open(&r)?;
            let a = need("alpha", r.alpha)?;
            check(q >= 3.0, "Q>=3", format!("Q = {q}"))?;
            check(a > 2.0 - q, "alpha>2-Q", format!("alpha = {a}, Q = {q}"))?;
        }
        RellichL2Boundary => {
            p_two(&r)?;
            let e = need("eps", r.eps)?;
            check(e > 0.0, "eps>0", format!("eps = {e}"))?;
        }
        RellichPrimeL2 => {
            p_two(&r)?;
            let a = need("alpha", r.alpha)?;
            check(a > -2.0, "alpha>-2", format!("alpha = {a}"))?;
            check(nw > a + 4.0, "N>alpha+4", format!("alpha = {a}, N = {nw}"))?;
            r.eps = Some((nw + a) / (4.0 * (a + 2.0)));
        }
        RellichLp => {
            p_closed(&r)?;
            let s = need("sigma", r.sigma)?;
            check(s > 1.0, "sigma>1", format!("sigma = {s}"))?;
        }
        LemmaSubs => {
            p_closed(&r)?;
            if let Some(c) = r.c {
                check(c >= 0.0, "C>=0", format!("C = {c}"))?;
            }
        }
        LemmaSigma => {
            p_open(&r)?;
            let s = need("sigma", r.sigma)?;
            check(s > 1.0, "sigma>1", format!("sigma = {s}"))?;
        }
        RellichPrimeLp => {
            p_closed(&r)?;
            let a = need("alpha", r.alpha)?;
            check(a > 2.0 && a < nw, "2<alpha<N", format!("alpha = {a}, N = {nw}"))?;
            r.sigma = Some((nw - 2.0) / (a - 2.0));
        }
        RellichGaugeL2 => {
            p_two(&r)?;
            let a = need("alpha", r.alpha)?;
            check(q >= 3.0, "Q>=3", format!("Q = {q}"))?;
            check(a < 2.0, "alpha<2", format!("alpha = {a}"))?;
            check(q + a - 4.0 > 0.0, "Q+alpha-4>0", format!("alpha = {a}, Q = {q}"))?;
            r.sigma = Some((q - 2.0) / (2.0 - a));
        }
        ClassicalRellich => {
            abelian()?;
            p_two(&r)?;
            check(n >= 5.0, "n>=5", format!("n = {n}"))?;
            r.alpha = Some(0.0);
        }
    }
    Ok(r)
}

/// The constant of the case in the arrangement `lhs <= rhs` used by [`evaluate`].
pub fn sharp_constant(case: InequalityCase, params: &InequalityParams, g: &GroupDescriptor) -> Result<f64> {
    if case == HorizontalCkn {
        if let Some(gamma) = params.gamma {
            if gamma == g.first_stratum_dim() as f64 {
                return Ok(0.0);
            }
        }
    }
    let r = resolve_params(case, params, g)?;
    let p = r.p;
    let nw = weight_dim(case, params, g)? as f64;
    let q = g.homogeneous_dim() as f64;
    let n = g.topological_dim() as f64;
    let a = r.alpha.unwrap_or(0.0);
    Ok(match case {
        CknBoundary | WeightedHardy | HardyTerm => p,
        HorizontalCkn | BadialeTarantello => (nw - r.gamma.unwrap_or(0.0)).abs() / p,
        BtAlpha => (nw - p * (a + 1.0)).abs() / p,
        LocalHardy => (q + a - 2.0).abs() / p,
        Uncertainty => 1.0 / p,
        HpwPrime => ((nw + a - 2.0).abs() / p).powf(p),
        HpwClassical => ((n - 2.0) / 2.0).powi(2),
        UncertGauge => ((q + a - 2.0).abs() / p).powf(p),
        RellichL2Boundary => r.eps.unwrap_or(0.0),
        RellichPrimeL2 => (nw + a).powi(2) * (nw - a - 4.0).powi(2) / 16.0,
        RellichLp => {
            let s = r.sigma.unwrap_or(1.0);
            p * p / ((p - 1.0) * s + 1.0)
        }
        LemmaSubs => 1.0 + r.c.unwrap_or(0.0),
        LemmaSigma => r.sigma.unwrap_or(1.0) - 1.0,
        RellichPrimeLp => p * p / ((nw - a) * ((p - 1.0) * nw + a - 2.0 * p)),
        RellichGaugeL2 => (q + a - 4.0).powi(2) * (q - a).powi(2) / 16.0,
        ClassicalRellich => n * n * (n - 4.0).powi(2) / 16.0,
    })
}

/// Lower bound for `int |L u|^2 |x'|^{-alpha}` in units of `int |u|^2 |x'|^{-alpha-4}`
/// obtained from the weighted L2 Rellich estimate at a given `eps`, after
/// bounding the gradient term by the Hardy inequality with weight `|x'|^{alpha+2}`.
pub fn rellich_prime_bound(n: f64, alpha: f64, eps: f64) -> f64 {
    let c = (alpha + 2.0) * (n - alpha - 4.0);
    let hardy = (n - alpha - 4.0).powi(2) / 4.0;
    2.0 * c * eps * hardy + c * c * eps * (1.0 - eps)
}

/// `eps` maximizing [`rellich_prime_bound`] on the grid `eps_i = i * top / count`, `i = 1..=count`.
pub fn epsilon_scan(n: f64, alpha: f64, top: f64, count: usize) -> Vec<(f64, f64)> {
    (1..=count)
        .map(|i| {
            let e = top * i as f64 / count as f64;
            (e, rellich_prime_bound(n, alpha, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_round_trips() {
        assert_eq!(InequalityCase::ALL.len(), 19);
        for c in InequalityCase::ALL {
            assert_eq!(c.id().parse::<InequalityCase>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.id()));
        }
        assert_eq!(RellichGaugeL2.eq_tag(), "Eq. (Rel_Kombe)");
    }

    #[test]
    fn documented_constants() {
        let a6 = GroupDescriptor::abelian(6).unwrap();
        let a5 = GroupDescriptor::abelian(5).unwrap();
        let a3 = GroupDescriptor::abelian(3).unwrap();
        let h3 = GroupDescriptor::heisenberg(3).unwrap();
        let p2 = InequalityParams::new(2.0);
        assert_eq!(sharp_constant(RellichPrimeL2, &p2.clone().with_alpha(0.0), &a6).unwrap(), 9.0);
        assert_eq!(sharp_constant(RellichPrimeLp, &p2.clone().with_alpha(3.0), &a5).unwrap(), 0.5);
        assert_eq!(sharp_constant(BtAlpha, &p2.clone().with_alpha(0.0), &a3).unwrap(), 0.5);
        assert_eq!(h3.homogeneous_dim(), 8);
        assert_eq!(sharp_constant(RellichGaugeL2, &p2.clone().with_alpha(0.0), &h3).unwrap(), 64.0);
        assert_eq!(sharp_constant(HorizontalCkn, &p2.clone().with_gamma(3.0), &a3).unwrap(), 0.0);
        assert_eq!(sharp_constant(ClassicalRellich, &p2, &a5).unwrap(), 1.5625);
    }

    #[test]
    fn admissibility_names_the_predicate() {
        let a3 = GroupDescriptor::abelian(3).unwrap();
        let err = resolve_params(HorizontalCkn, &InequalityParams::new(2.0).with_gamma(4.0), &a3).unwrap_err();
        assert!(err.to_string().contains("2<gamma<N"), "{err}");
        let err = resolve_params(RellichPrimeL2, &InequalityParams::new(2.0).with_alpha(-3.0), &a3).unwrap_err();
        assert!(err.to_string().contains("alpha>-2"));
        let err = resolve_params(LocalHardy, &InequalityParams::new(2.0).with_alpha(0.5), &a3).unwrap_err();
        assert!(err.to_string().contains("0>alpha>2-Q"));
        let mut loose = InequalityParams::new(2.0).with_alpha(0.5);
        loose.override_admissibility = true;
        assert!(resolve_params(LocalHardy, &loose, &a3).is_ok());
    }

    #[test]
    fn derived_beta_and_sigma() {
        let a5 = GroupDescriptor::abelian(5).unwrap();
        let r = resolve_params(HorizontalCkn, &InequalityParams::new(2.0).with_gamma(3.0), &a5).unwrap();
        assert_eq!(r.alpha, Some(0.5));
        assert_eq!(r.beta, Some(1.5));
        let r = resolve_params(RellichPrimeLp, &InequalityParams::new(2.0).with_alpha(3.0), &a5).unwrap();
        assert_eq!(r.sigma, Some(3.0));
        let bad = InequalityParams::new(2.0).with_gamma(3.0).with_alpha(1.0).with_beta(0.5);
        assert!(resolve_params(HorizontalCkn, &bad, &a5).is_err());
    }

    #[test]
    fn epsilon_optimum_for_n6() {
        let scan = epsilon_scan(6.0, 0.0, 1.5, 41);
        let best = scan.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((best.0 - 0.75).abs() <= 1.5 / 41.0);
        // the continuous optimum reproduces the constant 9
        assert!((rellich_prime_bound(6.0, 0.0, 0.75) - 9.0).abs() < 1e-12);
    }
}
