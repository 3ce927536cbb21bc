//! Command-line front end: run configurations, report files and exit codes.
//!
//! Exit codes: 0 when every selected check passed, 2 when an inequality was
//! violated or a verdict was withheld, 1 for configuration and runtime errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{run_fields, suite_quad_settings, FieldSpec, PhaseSpec};
use crate::error::{Error, Result};
use crate::field::{first_stratum_power, gauge_power, DerivativeMode, JetField, ScalarField};
use crate::group::GroupDescriptor;
use crate::ineq::{resolve_params, sharp_constant, EvalOptions, InequalityCase, InequalityParams, InequalityReport};
use crate::quad::{
    divergence_residual, factorization_residual, gauge_identity_residual, greens_first_residual,
    greens_second_residual, harmonic_power_residual, Domain, IdentityResidual, QuadSettings, Shape,
};
use crate::sharpness::{ratio_curve, ExtremizerFamily, OptimizerSettings, RadialVariable, SharpnessResult};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "carnot-hardy", version, about = "Verify Hardy-type inequalities on stratified groups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the configured inequality cases on their field batteries.
    Verify(RunArgs),
    /// Residuals of the divergence, Green, gauge and factorization identities.
    Identities(RunArgs),
    /// Approach a sharp constant over widening annuli.
    Sharpness(RunArgs),
    /// Print the catalog of inequality cases.
    List {
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Same as `--format json`.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for report files; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Verdict tolerance; overrides the config.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Table => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupFamily {
    Abelian,
    Heisenberg,
}

/// `dim` is `n` for `R^n` and `m` for the Heisenberg group of dimension `2m + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub kind: GroupFamily,
    pub dim: usize,
    #[serde(default)]
    pub gauge_scale: Option<f64>,
}

impl GroupSpec {
    pub fn build(&self) -> Result<GroupDescriptor> {
        let g = match self.kind {
            GroupFamily::Abelian => GroupDescriptor::abelian(self.dim)?,
            GroupFamily::Heisenberg => GroupDescriptor::heisenberg(self.dim)?,
        };
        match self.gauge_scale {
            Some(c) => g.with_gauge_scale(c),
            None => Ok(g),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `|x'|^exponent`.
    FirstStratumPower { exponent: f64 },
    /// `d(x)^exponent`.
    GaugePower { exponent: f64 },
}

impl PotentialSpec {
    fn build(&self, g: &GroupDescriptor) -> JetField {
        match self {
            PotentialSpec::FirstStratumPower { exponent } => first_stratum_power(g, *exponent),
            PotentialSpec::GaugePower { exponent } => gauge_power(g, *exponent),
        }
    }
}

/// One inequality case; unset keys fall back to the top level of the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub case: InequalityCase,
    #[serde(default)]
    pub params: InequalityParams,
    #[serde(default)]
    pub group: Option<GroupSpec>,
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub fields: Option<Vec<FieldSpec>>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub quadrature: Option<QuadSettings>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityCheck {
    Divergence,
    GreensFirst,
    GreensSecond,
    Gauge,
    Factorization,
}

impl IdentityCheck {
    fn id(self) -> &'static str {
        match self {
            IdentityCheck::Divergence => "divergence",
            IdentityCheck::GreensFirst => "greens_first",
            IdentityCheck::GreensSecond => "greens_second",
            IdentityCheck::Gauge => "gauge",
            IdentityCheck::Factorization => "factorization",
        }
    }

    fn pointwise(self) -> bool {
        matches!(self, IdentityCheck::Gauge | IdentityCheck::Factorization)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivatives {
    #[default]
    Analytic,
    FiniteDiff,
}

fn default_alphas() -> Vec<f64> {
    vec![-1.0, 0.5, 1.0, 3.0]
}

fn default_points() -> usize {
    100
}

/// `V = |x'|^{-(alpha - 2)}` with `L(V^sigma)` factorized for each `sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizationSpec {
    pub alpha: f64,
    #[serde(default)]
    pub sigmas: Vec<f64>,
    /// Also checks `sigma = (N - 2)/(alpha - 2)`, where `V^sigma` is harmonic.
    #[serde(default)]
    pub harmonic: bool,
}

impl Default for FactorizationSpec {
    fn default() -> Self {
        FactorizationSpec {
            alpha: 3.0,
            sigmas: vec![1.5, 2.0],
            harmonic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySpec {
    pub checks: Vec<IdentityCheck>,
    /// Integration domains; the top-level domain when absent.
    #[serde(default)]
    pub domains: Option<Vec<Domain>>,
    #[serde(default)]
    pub fields: Option<Vec<FieldSpec>>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub factorization: FactorizationSpec,
    /// Random points per pointwise check.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub derivatives: Derivatives,
    #[serde(default)]
    pub integral_threshold: Option<f64>,
    #[serde(default)]
    pub pointwise_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessSpec {
    pub case: InequalityCase,
    #[serde(default)]
    pub params: InequalityParams,
    /// The values of `R / r0`.
    pub ladder: Vec<f64>,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub radial: Option<RadialVariable>,
    #[serde(default)]
    pub beta: Option<(f64, f64)>,
    #[serde(default)]
    pub taper: Option<(f64, f64)>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    /// Scores the fractions against this constant instead of the proven one.
    #[serde(default)]
    pub claimed_constant: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative to the directory of the config file.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Vec<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupSpec,
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub fields: Option<Vec<FieldSpec>>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub quadrature: Option<QuadSettings>,
    #[serde(default)]
    pub cases: Vec<CaseSpec>,
    #[serde(default)]
    pub identities: Option<IdentitySpec>,
    #[serde(default)]
    pub sharpness: Option<SharpnessSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m);
            Error::Config(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn default_domain(&self, g: &GroupDescriptor) -> Domain {
        self.domain
            .clone()
            .unwrap_or_else(|| Domain::ball(vec![0.0; g.topological_dim()], 1.0))
    }
}

/// Everything a case needs, checked before any integral is computed.
struct PreparedCase {
    case: InequalityCase,
    group: GroupDescriptor,
    domain: Domain,
    params: InequalityParams,
    fields: Vec<JetField>,
    potential: Option<JetField>,
    quad: QuadSettings,
}

fn at(path: String, e: Error) -> Error {
    Error::Config(format!("{path}: {e}"))
}

fn prepare_cases(cfg: &RunConfig) -> Result<Vec<PreparedCase>> {
    if cfg.cases.is_empty() {
        return Err(Error::Config("no cases selected".into()));
    }
    cfg.cases
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let here = || format!("cases[{i}] ({})", spec.case);
            let group = spec.group.as_ref().unwrap_or(&cfg.group).build().map_err(|e| at(here(), e))?;
            let domain = spec.domain.clone().unwrap_or_else(|| cfg.default_domain(&group));
            domain.validate(&group).map_err(|e| at(here(), e))?;
            resolve_params(spec.case, &spec.params, &group).map_err(|e| at(here(), e))?;
            let specs = spec
                .fields
                .clone()
                .or_else(|| cfg.fields.clone())
                .unwrap_or_else(|| vec![FieldSpec::Standard]);
            let mut fields = Vec::new();
            for f in &specs {
                fields.extend(f.build(group.topological_dim(), &domain).map_err(|e| at(here(), e))?);
            }
            if fields.is_empty() {
                return Err(Error::Config(format!("{}: no fields", here())));
            }
            let potential = spec.potential.as_ref().or(cfg.potential.as_ref()).map(|p| p.build(&group));
            let quad = spec
                .quadrature
                .clone()
                .or_else(|| cfg.quadrature.clone())
                .unwrap_or_else(|| suite_quad_settings(group.topological_dim()));
            quad.validate().map_err(|e| at(here(), e))?;
            Ok(PreparedCase {
                case: spec.case,
                group,
                domain,
                params: spec.params.clone(),
                fields,
                potential,
                quad,
            })
        })
        .collect()
}

/// One row of the identity suite; pointwise checks report the worst point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub check: String,
    pub group: String,
    pub domain: String,
    pub detail: String,
    pub residual: f64,
    pub threshold: f64,
    pub converged: bool,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub reports: Vec<InequalityReport>,
    #[serde(default)]
    pub identities: Vec<IdentityRow>,
    #[serde(default)]
    pub sharpness: Vec<SharpnessResult>,
    /// Seconds per stage; reported on stderr only so files stay reproducible.
    #[serde(skip)]
    pub wall_times: Vec<(String, f64)>,
}

impl RunSummary {
    fn new(command: &str) -> Self {
        RunSummary {
            command: command.to_string(),
            verdict: Verdict::Pass,
            reports: Vec::new(),
            identities: Vec::new(),
            sharpness: Vec::new(),
            wall_times: Vec::new(),
        }
    }

    fn settle(&mut self, all_passed: bool) {
        self.verdict = if all_passed { Verdict::Pass } else { Verdict::Fail };
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => EXIT_PASS,
            Verdict::Fail => EXIT_VIOLATION,
        }
    }
}

pub fn cmd_verify(cfg: &RunConfig, tol: f64) -> Result<RunSummary> {
    let prepared = prepare_cases(cfg)?;
    let opts = EvalOptions {
        tol,
        ..EvalOptions::default()
    };
    let mut summary = RunSummary::new("verify");
    for pc in &prepared {
        let start = Instant::now();
        let reports = run_fields(
            pc.case,
            &pc.group,
            &pc.domain,
            &pc.params,
            &pc.fields,
            pc.potential.as_ref(),
            &pc.quad,
            &opts,
        )?;
        summary.reports.extend(reports);
        summary
            .wall_times
            .push((format!("{} on {}", pc.case, pc.group.name()), start.elapsed().as_secs_f64()));
    }
    let ok = summary.reports.iter().all(|r| r.pass);
    summary.settle(ok);
    Ok(summary)
}

fn default_identity_fields(n: usize) -> Vec<FieldSpec> {
    let unit = |i: usize| {
        let mut e = vec![0; n];
        e[i] += 1;
        e
    };
    let mut quad = unit(0);
    quad[0] = 2;
    quad[1 % n] += 1;
    let mut mixed = unit(0);
    mixed[n - 1] += 1;
    vec![
        FieldSpec::Monomial {
            exponents: quad,
            coeff: [1.0, 0.0],
        },
        FieldSpec::Monomial {
            exponents: mixed,
            coeff: [0.0, 1.0],
        },
        FieldSpec::Gaussian {
            center: (0..n).map(|i| 0.1 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
            a: 0.8,
            phase: None,
        },
        FieldSpec::Gaussian {
            center: vec![0.0; n],
            a: 1.5,
            phase: Some(PhaseSpec { k: vec![1.0, 0.5], m: 0.3 }),
        },
    ]
}

fn describe(shape: &Shape) -> String {
    let v = |x: &[f64]| {
        let parts: Vec<String> = x.iter().map(|a| format!("{a}")).collect();
        format!("[{}]", parts.join(","))
    };
    match shape {
        Shape::EuclideanBall { center, radius } => format!("ball({},{radius})", v(center)),
        Shape::Box { lo, hi } => format!("box({},{})", v(lo), v(hi)),
        Shape::GaugeAnnulus { r0, r1 } => format!("gauge_annulus({r0},{r1})"),
        Shape::SphericalShell { r0, r1 } => format!("shell({r0},{r1})"),
    }
}

/// Uniform points of `[-1, 1]^n` with `|x'| >= 0.05`, where every checked power is smooth.
fn random_points(g: &GroupDescriptor, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.topological_dim();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if g.first_stratum_norm(&x) >= 0.05 {
            out.push(x);
        }
    }
    out
}

pub fn cmd_identities(cfg: &RunConfig, tol: Option<f64>) -> Result<RunSummary> {
    let spec = match &cfg.identities {
        Some(s) if !s.checks.is_empty() => s,
        _ => return Err(Error::Config("no checks selected".into())),
    };
    let g = cfg.group.build()?;
    let n = g.topological_dim();
    let domains = spec.domains.clone().unwrap_or_else(|| vec![cfg.default_domain(&g)]);
    for (i, d) in domains.iter().enumerate() {
        d.validate(&g).map_err(|e| at(format!("identities.domains[{i}]"), e))?;
    }
    let field_specs = spec.fields.clone().unwrap_or_else(|| default_identity_fields(n));
    let mut fields = Vec::new();
    for (i, f) in field_specs.iter().enumerate() {
        let built = f
            .build(n, &domains[0])
            .map_err(|e| at(format!("identities.fields[{i}]"), e))?;
        fields.extend(built);
    }
    let quad = cfg.quadrature.clone().unwrap_or_default();
    quad.validate()?;
    let fd = spec.derivatives == Derivatives::FiniteDiff;
    let integral_tol = tol.or(spec.integral_threshold).unwrap_or(1e-6);
    let pointwise_tol = tol.or(spec.pointwise_threshold).unwrap_or(if fd { 1e-4 } else { 1e-8 });
    let fac = &spec.factorization;
    if spec.checks.contains(&IdentityCheck::Factorization) && (fac.alpha == 2.0 || !fac.alpha.is_finite()) {
        return Err(Error::Config("identities.factorization: alpha must differ from 2".into()));
    }

    let mut summary = RunSummary::new("identities");
    let group = g.name();
    let integral_row = |check: IdentityCheck, dom: &Domain, detail: String, r: IdentityResidual| IdentityRow {
        check: check.id().into(),
        group: group.clone(),
        domain: describe(&dom.shape),
        detail,
        residual: r.residual,
        threshold: integral_tol,
        converged: r.converged,
        pass: r.converged && r.residual <= integral_tol,
    };
    let points = random_points(&g, spec.points, cfg.seed);
    for &check in &spec.checks {
        let start = Instant::now();
        match check {
            IdentityCheck::Divergence => {
                for dom in &domains {
                    for f in &fields {
                        for k in 0..g.first_stratum_dim() {
                            let r = divergence_residual(&g, f, k, dom, &quad)?;
                            summary
                                .identities
                                .push(integral_row(check, dom, format!("f={} k={}", f.name(), k + 1), r));
                        }
                    }
                }
            }
            IdentityCheck::GreensFirst | IdentityCheck::GreensSecond => {
                for dom in &domains {
                    for i in 0..fields.len() {
                        for j in i + 1..fields.len() {
                            let (v, u) = (&fields[i], &fields[j]);
                            let r = if check == IdentityCheck::GreensFirst {
                                greens_first_residual(&g, v, u, dom, &quad)?
                            } else {
                                greens_second_residual(&g, v, u, dom, &quad)?
                            };
                            summary
                                .identities
                                .push(integral_row(check, dom, format!("v={} u={}", v.name(), u.name()), r));
                        }
                    }
                }
            }
            IdentityCheck::Gauge => {
                let mode = if fd {
                    DerivativeMode::FiniteDiff(None)
                } else {
                    DerivativeMode::Analytic
                };
                for &alpha in &spec.alphas {
                    let mut worst: f64 = 0.0;
                    for x in &points {
                        worst = worst.max(gauge_identity_residual(&g, alpha, x, mode)?);
                    }
                    summary.identities.push(pointwise_row(check, &group, &points, format!("alpha={alpha}"), worst, pointwise_tol));
                }
            }
            IdentityCheck::Factorization => {
                let v = first_stratum_power(&g, -(fac.alpha - 2.0));
                for &sigma in &fac.sigmas {
                    let mut worst: f64 = 0.0;
                    for x in &points {
                        worst = worst.max(factorization_residual(&g, &v, sigma, x)?);
                    }
                    let detail = format!("alpha={} sigma={sigma}", fac.alpha);
                    summary.identities.push(pointwise_row(check, &group, &points, detail, worst, pointwise_tol));
                }
                if fac.harmonic {
                    let sigma = (g.first_stratum_dim() as f64 - 2.0) / (fac.alpha - 2.0);
                    let mut worst: f64 = 0.0;
                    for x in &points {
                        worst = worst.max(harmonic_power_residual(&g, &v, sigma, x)?);
                    }
                    let detail = format!("alpha={} sigma={sigma} harmonic", fac.alpha);
                    summary.identities.push(pointwise_row(check, &group, &points, detail, worst, pointwise_tol));
                }
            }
        }
        summary.wall_times.push((check.id().to_string(), start.elapsed().as_secs_f64()));
    }
    let ok = summary.identities.iter().all(|r| r.pass);
    summary.settle(ok);
    Ok(summary)
}

fn pointwise_row(
    check: IdentityCheck,
    group: &str,
    points: &[Vec<f64>],
    detail: String,
    worst: f64,
    threshold: f64,
) -> IdentityRow {
    debug_assert!(check.pointwise());
    IdentityRow {
        check: check.id().into(),
        group: group.to_string(),
        domain: format!("{} random points", points.len()),
        detail,
        residual: worst,
        threshold,
        converged: true,
        pass: worst <= threshold,
    }
}

pub fn cmd_sharpness(cfg: &RunConfig, tol: Option<f64>) -> Result<RunSummary> {
    let spec = cfg
        .sharpness
        .as_ref()
        .ok_or_else(|| Error::Config("no sharpness section".into()))?;
    let g = cfg.group.build()?;
    if !spec.case.has_fixed_constant() {
        return Err(Error::Config(format!("{} has no fixed constant to approach", spec.case)));
    }
    if spec.ladder.is_empty() {
        return Err(Error::Config("sharpness.ladder: no ladder rungs selected".into()));
    }
    let here = |e| at("sharpness".into(), e);
    sharp_constant(spec.case, &spec.params, &g).map_err(here)?;
    let mut family = ExtremizerFamily::around_critical(spec.case, &spec.params, &g, spec.ladder[0]).map_err(here)?;
    if let Some(r0) = spec.r0 {
        family.r0 = r0;
    }
    if let Some(r) = spec.radial {
        family.radial = r;
    }
    if let Some(b) = spec.beta {
        family.beta = b;
    }
    if let Some(t) = spec.taper {
        family.taper = t;
    }
    let defaults = OptimizerSettings::default();
    let opt = OptimizerSettings {
        seed: cfg.seed,
        budget: spec.budget.unwrap_or(defaults.budget),
        restarts: spec.restarts.unwrap_or(defaults.restarts),
    };
    let quad = cfg.quadrature.clone().unwrap_or(QuadSettings {
        rel_tol: 1e-8,
        ..QuadSettings::default()
    });
    quad.validate()?;

    let start = Instant::now();
    let mut results = ratio_curve(spec.case, &g, &spec.params, &family, &spec.ladder, &quad, &opt)?;
    if let Some(c) = spec.claimed_constant {
        results = results.into_iter().map(|r| r.against(c)).collect::<Result<_>>()?;
    }
    if let Some(t) = tol {
        for r in &mut results {
            r.exceeded = r.max_fraction > 1.0 + t;
        }
    }
    let mut summary = RunSummary::new("sharpness");
    summary.wall_times.push((format!("{} ladder", spec.case), start.elapsed().as_secs_f64()));
    let ok = results.iter().all(|r| !r.exceeded);
    summary.sharpness = results;
    summary.settle(ok);
    Ok(summary)
}

/// Shortest round-trip form, with an exponent outside `[1e-4, 1e6)`.
fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub const REPORT_COLUMNS: [&str; 14] = [
    "case", "eq_tag", "p", "alpha", "beta", "gamma", "sigma", "eps", "lhs", "rhs", "boundary", "slack", "constant",
    "pass",
];

pub const SHARPNESS_COLUMNS: [&str; 9] = [
    "ratio",
    "fraction",
    "max_fraction",
    "best_beta",
    "best_taper",
    "evaluations",
    "restarts",
    "budget_exhausted",
    "exceeded",
];

const IDENTITY_COLUMNS: [&str; 8] = ["check", "group", "domain", "detail", "residual", "threshold", "converged", "pass"];

fn write_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn report_rows(reports: &[InequalityReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            let p = &r.params;
            vec![
                r.case.id().to_string(),
                r.eq_tag.clone(),
                num(p.p),
                opt_num(p.alpha),
                opt_num(p.beta),
                opt_num(p.gamma),
                opt_num(p.sigma),
                opt_num(p.eps),
                num(r.lhs),
                num(r.rhs),
                num(r.boundary_term),
                num(r.slack),
                num(r.constant_used),
                r.pass.to_string(),
            ]
        })
        .collect()
}

fn sharpness_rows(results: &[SharpnessResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            vec![
                num(r.ratio),
                num(r.fraction),
                num(r.max_fraction),
                num(r.best_beta),
                num(r.best_taper),
                r.evaluations.to_string(),
                r.restarts.to_string(),
                r.budget_exhausted.to_string(),
                r.exceeded.to_string(),
            ]
        })
        .collect()
}

fn identity_rows(rows: &[IdentityRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.check.clone(),
                r.group.clone(),
                r.domain.clone(),
                r.detail.clone(),
                num(r.residual),
                num(r.threshold),
                r.converged.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect()
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, header.to_vec());
    line(&mut out, width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect());
    for r in rows {
        line(&mut out, r.iter().map(|s| s.as_str()).collect());
    }
    out
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

/// Renders the summary; only the table carries the field names and verdict line.
pub fn render(summary: &RunSummary, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(summary)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => match summary.command.as_str() {
            "verify" => write_csv(&REPORT_COLUMNS, report_rows(&summary.reports)),
            "identities" => write_csv(&IDENTITY_COLUMNS, identity_rows(&summary.identities)),
            _ => write_csv(&SHARPNESS_COLUMNS, sharpness_rows(&summary.sharpness)),
        },
        Format::Table => {
            let mut out = match summary.command.as_str() {
                "verify" => {
                    let rows: Vec<Vec<String>> = summary
                        .reports
                        .iter()
                        .map(|r| {
                            vec![
                                r.case.id().to_string(),
                                r.eq_tag.clone(),
                                r.group.clone(),
                                r.field.clone(),
                                sci(r.lhs),
                                sci(r.rhs),
                                sci(r.boundary_term),
                                sci(r.relative_slack()),
                                if r.pass {
                                    "pass"
                                } else if r.converged {
                                    "FAIL"
                                } else {
                                    "withheld"
                                }
                                .to_string(),
                            ]
                        })
                        .collect();
                    let mut t = table(
                        &["case", "eq_tag", "group", "field", "lhs", "rhs", "boundary", "rel_slack", "verdict"],
                        &rows,
                    );
                    if let Some(note) = summary.reports.iter().find_map(|r| r.conditions.as_ref().map(|c| &c.note)) {
                        let _ = writeln!(t, "note: {note}");
                    }
                    t
                }
                "identities" => {
                    let rows: Vec<Vec<String>> = summary
                        .identities
                        .iter()
                        .map(|r| {
                            vec![
                                r.check.clone(),
                                r.domain.clone(),
                                r.detail.clone(),
                                sci(r.residual),
                                sci(r.threshold),
                                if r.pass { "pass" } else { "FAIL" }.to_string(),
                            ]
                        })
                        .collect();
                    table(&["check", "domain", "detail", "residual", "threshold", "verdict"], &rows)
                }
                _ => {
                    let rows: Vec<Vec<String>> = summary
                        .sharpness
                        .iter()
                        .map(|r| {
                            vec![
                                r.case.id().to_string(),
                                num(r.ratio),
                                format!("{:.6}", r.fraction),
                                format!("{:.4}", r.best_beta),
                                format!("{:.4}", r.best_taper),
                                r.evaluations.to_string(),
                                if r.exceeded {
                                    "EXCEEDED"
                                } else if r.budget_exhausted {
                                    "budget"
                                } else {
                                    "ok"
                                }
                                .to_string(),
                            ]
                        })
                        .collect();
                    table(&["case", "R/r0", "fraction", "beta", "taper", "evals", "flag"], &rows)
                }
            };
            let _ = writeln!(
                out,
                "verdict: {}",
                match summary.verdict {
                    Verdict::Pass => "pass",
                    Verdict::Fail => "FAIL",
                }
            );
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub case: InequalityCase,
    pub eq_tag: &'static str,
    pub requirements: &'static str,
    pub predicate: &'static str,
    pub boundary_term: bool,
    pub potential: bool,
    pub fixed_constant: bool,
}

pub fn catalog() -> Vec<CatalogEntry> {
    InequalityCase::ALL
        .iter()
        .map(|&c| CatalogEntry {
            case: c,
            eq_tag: c.eq_tag(),
            requirements: c.requirements(),
            predicate: c.predicate(),
            boundary_term: c.has_boundary_term(),
            potential: c.needs_potential(),
            fixed_constant: c.has_fixed_constant(),
        })
        .collect()
}

pub fn cmd_list(format: Format) -> Result<String> {
    let entries = catalog();
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.case.id().to_string(),
                e.eq_tag.to_string(),
                e.requirements.to_string(),
                e.predicate.to_string(),
            ]
        })
        .collect();
    let header = ["case", "eq_tag", "requirements", "predicate"];
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&entries)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => write_csv(&header, rows),
        Format::Table => Ok(table(&header, &rows)),
    }
}

fn stem(command: &str) -> &'static str {
    match command {
        "verify" => "report",
        "identities" => "identities",
        _ => "sharpness",
    }
}

fn emit(
    summary: &RunSummary,
    cfg: &RunConfig,
    config_path: &Path,
    args: &RunArgs,
    stdout: &mut dyn Write,
) -> Result<()> {
    let dir = args.out.clone().or_else(|| {
        cfg.output
            .dir
            .as_ref()
            .map(|d| config_path.parent().unwrap_or(Path::new(".")).join(d))
    });
    let formats = match args.format {
        Some(f) => vec![f],
        None if !cfg.output.formats.is_empty() => cfg.output.formats.clone(),
        None if dir.is_some() => vec![Format::Csv, Format::Json],
        None => vec![Format::Table],
    };
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            for f in &formats {
                let path = dir.join(format!("{}.{}", stem(&summary.command), f.extension()));
                std::fs::write(path, render(summary, *f)?)?;
            }
            stdout.write_all(render(summary, Format::Table)?.as_bytes())?;
        }
        None => {
            for f in &formats {
                stdout.write_all(render(summary, *f)?.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn run_command(args: &RunArgs, which: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let tol = args.tol.or(cfg.tol);
    if let Some(t) = tol {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("tolerance must be a nonnegative number, got {t}")));
        }
    }
    let work = || match which {
        "verify" => cmd_verify(&cfg, tol.unwrap_or(EvalOptions::default().tol)),
        "identities" => cmd_identities(&cfg, tol),
        _ => cmd_sharpness(&cfg, tol),
    };
    let summary = match args.jobs {
        Some(0) => return Err(Error::Config("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    emit(&summary, &cfg, &args.config, args, stdout)?;
    for (stage, secs) in &summary.wall_times {
        let _ = writeln!(stderr, "{stage}: {secs:.2} s");
    }
    Ok(summary.exit_code())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_ERROR
            } else {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_PASS
            };
        }
    };
    let result = match &cli.command {
        Command::List { format, json } => {
            let f = if *json { Format::Json } else { format.unwrap_or(Format::Table) };
            cmd_list(f).and_then(|s| stdout.write_all(s.as_bytes()).map_err(Error::from).map(|_| EXIT_PASS))
        }
        Command::Verify(a) => run_command(a, "verify", stdout, stderr),
        Command::Identities(a) => run_command(a, "identities", stdout, stderr),
        Command::Sharpness(a) => run_command(a, "sharpness", stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_a_position() {
        let text = "{\n  \"group\": {\"kind\": \"abelian\", \"dim\": 3},\n  \"casez\": []\n}";
        let err = RunConfig::parse(text, "cfg.json").unwrap_err().to_string();
        assert!(err.contains("cfg.json:3:"), "{err}");
        assert!(err.contains("casez"), "{err}");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -2.5, 1e-7, 123456789.0, 0.1 + 0.2, -3.25e-12] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(0.5), "0.5");
    }

    #[test]
    fn catalog_is_complete() {
        let c = catalog();
        assert_eq!(c.len(), 19);
        let text = cmd_list(Format::Table).unwrap();
        assert!(text.lines().any(|l| l.starts_with("RELLICH_GAUGE_L2") && l.contains(InequalityCase::RellichGaugeL2.eq_tag())));
    }

    #[test]
    fn default_identity_fields_fit_every_dimension() {
        for n in 1..=5 {
            let d = Domain::cube(n, 1.0);
            for f in default_identity_fields(n) {
                assert_eq!(f.build(n, &d).unwrap()[0].dim(), n);
            }
        }
    }
}
