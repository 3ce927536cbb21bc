//! Acceptance criteria, run in order with one line of output per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout and the
//! timed criteria do not compete with other tests for the CPU. Pass criterion
//! numbers as arguments to run a subset, e.g. `cargo test --test acceptance -- 4 8`.

use std::path::PathBuf;
use std::time::Instant;

use carnot_hardy::battery::{standard_battery, standard_fields};
use carnot_hardy::cli::{
    cmd_identities, cmd_sharpness, cmd_verify, CaseSpec, Derivatives, GroupFamily, GroupSpec, IdentityCheck,
    RunConfig, RunSummary, Verdict,
};
use carnot_hardy::field::ScalarField;
use carnot_hardy::group::GroupDescriptor;
use carnot_hardy::ineq::{epsilon_scan, sharp_constant, InequalityCase, InequalityParams, InequalityReport};
use carnot_hardy::quad::Shape;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn by_case(summary: &RunSummary, case: InequalityCase) -> Vec<&InequalityReport> {
    summary.reports.iter().filter(|r| r.case == case).collect()
}

fn identities_h1() -> Outcome {
    let cfg = config("identities_h1.json");
    let start = Instant::now();
    let s = cmd_identities(&cfg, None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    for check in ["divergence", "greens_first", "greens_second"] {
        ensure(s.identities.iter().any(|r| r.check == check), || format!("no {check} rows"))?;
    }
    ensure(s.identities.iter().all(|r| r.group.contains('H')), || "rows outside the Heisenberg group".into())?;
    let domains: std::collections::BTreeSet<_> = s.identities.iter().map(|r| r.domain.clone()).collect();
    ensure(domains.len() >= 2, || format!("only {} domain(s)", domains.len()))?;
    let worst = s.identities.iter().map(|r| r.residual).fold(0.0, f64::max);
    ensure(worst <= 1e-6, || format!("worst residual {worst:e}"))?;
    ensure(s.identities.iter().all(|r| r.converged && r.pass), || "unconverged or failing row".into())?;
    ensure(secs <= 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} rows on {} domains, worst {worst:.1e}, {secs:.1} s", s.identities.len(), domains.len()))
}

fn gauge_identity() -> Outcome {
    let base = config("gauge_identity.json");
    let groups = [
        (GroupFamily::Abelian, 3),
        (GroupFamily::Abelian, 4),
        (GroupFamily::Abelian, 5),
        (GroupFamily::Heisenberg, 1),
    ];
    let mut worst = [0.0f64; 2];
    for (kind, dim) in groups {
        for (slot, (mode, tol)) in [(Derivatives::Analytic, 1e-8), (Derivatives::FiniteDiff, 1e-4)].into_iter().enumerate() {
            let mut cfg = base.clone();
            cfg.group = GroupSpec { kind, dim, gauge_scale: None };
            let ids = cfg.identities.as_mut().expect("identity section");
            ids.derivatives = mode;
            ids.pointwise_threshold = Some(tol);
            ensure(ids.points >= 100, || format!("{} points", ids.points))?;
            ensure(ids.alphas == [-1.0, 0.5, 1.0, 3.0], || format!("alphas {:?}", ids.alphas))?;
            let s = cmd_identities(&cfg, None).map_err(|e| e.to_string())?;
            ensure(s.identities.len() == 4, || format!("{} rows", s.identities.len()))?;
            for r in &s.identities {
                ensure(r.pass && r.residual <= tol, || {
                    format!("{} {:?} {}: residual {:e}", r.group, mode, r.detail, r.residual)
                })?;
                worst[slot] = worst[slot].max(r.residual);
            }
        }
    }
    Ok(format!("A3..A5 and H1, worst analytic {:.1e}, finite differences {:.1e}", worst[0], worst[1]))
}

fn factorization() -> Outcome {
    let cfg = config("factorization.json");
    let ids = cfg.identities.as_ref().expect("identity section");
    ensure(ids.checks == [IdentityCheck::Factorization], || "unexpected checks".into())?;
    ensure(ids.factorization.harmonic, || "harmonic power not selected".into())?;
    let s = cmd_identities(&cfg, None).map_err(|e| e.to_string())?;
    ensure(s.identities.len() == ids.factorization.sigmas.len() + 1, || format!("{} rows", s.identities.len()))?;
    let worst = s.identities.iter().map(|r| r.residual).fold(0.0, f64::max);
    ensure(worst <= 1e-8 && s.verdict == Verdict::Pass, || format!("worst residual {worst:e}"))?;
    Ok(format!("{} rows, worst {worst:.1e}", s.identities.len()))
}

fn constants() -> Outcome {
    let p2 = InequalityParams::new(2.0);
    let expect = [
        (InequalityCase::RellichPrimeL2, GroupDescriptor::abelian(6), p2.clone().with_alpha(0.0), 9.0),
        (InequalityCase::RellichPrimeLp, GroupDescriptor::abelian(5), p2.clone().with_alpha(3.0), 0.5),
        (InequalityCase::BtAlpha, GroupDescriptor::abelian(3), p2.clone().with_alpha(0.0), 0.5),
        (InequalityCase::RellichGaugeL2, GroupDescriptor::heisenberg(3), p2.with_alpha(0.0), 64.0),
    ];
    for (case, g, params, c) in &expect {
        let g = g.as_ref().map_err(|e| e.to_string())?;
        let got = sharp_constant(*case, params, g).map_err(|e| e.to_string())?;
        ensure(got == *c, || format!("{}: {got} instead of {c}", case.id()))?;
    }
    // the same constants as used by verify, plus the N = 6 Rellich run
    let mut used = Vec::new();
    for name in ["constants.json", "rellich_n6.json"] {
        let s = cmd_verify(&config(name), 1e-6).map_err(|e| e.to_string())?;
        ensure(s.verdict == Verdict::Pass, || format!("{name} did not pass"))?;
        used.extend(s.reports.iter().map(|r| (r.case, r.constant_used)));
    }
    for (case, _, _, c) in &expect {
        ensure(used.iter().any(|(k, v)| k == case && v == c), || format!("{} not reported with {c}", case.id()))?;
    }
    Ok("9, 0.5, 0.5, 64 exact".into())
}

fn is_complex(f: &dyn ScalarField) -> bool {
    let Some(Shape::EuclideanBall { center, radius }) = f.support() else {
        return false;
    };
    (0..center.len()).any(|k| {
        let mut x = center.clone();
        x[k] += radius / 3.0;
        x[(k + 1) % center.len()] -= radius / 5.0;
        f.value(&x).im.abs() > 1e-12
    })
}

fn slack_suite() -> Outcome {
    let cfg = config("slack_suite.json");
    let battery = standard_battery().map_err(|e| e.to_string())?;
    let listed: Vec<&CaseSpec> = cfg.cases.iter().collect();
    let expected: usize = battery.iter().map(|b| b.settings.len()).sum();
    ensure(listed.len() == expected, || format!("config has {} entries, battery {expected}", listed.len()))?;
    let mut rows = listed.iter();
    for b in &battery {
        ensure(b.settings.len() >= 3, || format!("{}: {} points", b.case.id(), b.settings.len()))?;
        for st in &b.settings {
            let spec = rows.next().expect("length checked");
            let g = spec.group.as_ref().expect("per-case group").build().map_err(|e| e.to_string())?;
            ensure(spec.case == b.case && g.name() == st.group.name() && spec.domain.as_ref() == Some(&st.domain), || {
                format!("config entry for {} out of sync with the battery", b.case.id())
            })?;
        }
    }
    for (center, r) in [(vec![0.0; 3], 1.0), (vec![1.5, 0.0, 0.0], 1.0)] {
        let fields = standard_fields(&center, r);
        let complex = fields.iter().filter(|f| is_complex(*f)).count();
        ensure(fields.len() >= 20 && complex >= 5, || format!("{} fields, {complex} complex", fields.len()))?;
    }
    let start = Instant::now();
    let s = cmd_verify(&cfg, 1e-6).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    for case in InequalityCase::ALL {
        let reports = by_case(&s, case);
        let fields: std::collections::BTreeSet<_> = reports.iter().map(|r| r.field.clone()).collect();
        ensure(fields.len() >= 20, || format!("{}: {} fields", case.id(), fields.len()))?;
    }
    let failed: Vec<_> = s
        .reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} {}", r.case.id(), r.field))
        .collect();
    ensure(failed.is_empty(), || format!("{} failing: {}", failed.len(), failed.join(", ")))?;
    ensure(secs <= 900.0, || format!("took {secs:.0} s"))?;
    let worst = s.reports.iter().map(|r| r.relative_slack()).fold(f64::INFINITY, f64::min);
    Ok(format!("{} reports over {} settings, min relative slack {worst:.2e}, {secs:.0} s", s.reports.len(), expected))
}

fn boundary_terms() -> Outcome {
    let s = cmd_verify(&config("boundary_terms.json"), 1e-6).map_err(|e| e.to_string())?;
    let mut smallest = f64::INFINITY;
    for case in [InequalityCase::CknBoundary, InequalityCase::RellichL2Boundary] {
        let reports = by_case(&s, case);
        let fields: std::collections::BTreeSet<_> = reports.iter().map(|r| r.field.clone()).collect();
        ensure(fields.len() >= 5, || format!("{}: {} fields", case.id(), fields.len()))?;
        for r in reports {
            let scale = r.lhs.abs().max(r.rhs.abs());
            ensure(r.boundary_term.abs() > 1e-8 * scale, || format!("{} {}: boundary term vanishes", case.id(), r.field))?;
            ensure(r.pass && r.slack >= -1e-6 * scale, || format!("{} {}: slack {:e}", case.id(), r.field, r.slack))?;
            smallest = smallest.min(r.boundary_term.abs() / scale);
        }
    }
    Ok(format!("{} reports, smallest |boundary|/scale {smallest:.1e}", s.reports.len()))
}

fn sharpness_ladder() -> Outcome {
    let cfg = config("sharpness_bt_alpha.json");
    let spec = cfg.sharpness.as_ref().expect("sharpness section");
    ensure(spec.ladder == [10.0, 100.0, 1000.0, 10000.0], || format!("ladder {:?}", spec.ladder))?;
    let s = cmd_sharpness(&cfg, None).map_err(|e| e.to_string())?;
    let f: Vec<f64> = s.sharpness.iter().map(|r| r.fraction).collect();
    ensure(f.len() == 4, || format!("{} rows", f.len()))?;
    ensure(s.sharpness.iter().all(|r| r.sharp_constant == 0.5), || "constant is not 0.5".into())?;
    ensure(f.windows(2).all(|w| w[1] >= w[0]), || format!("not monotone: {f:?}"))?;
    ensure(f[3] >= 0.8, || format!("fraction {:.4} at 1e4", f[3]))?;
    let peak = s.sharpness.iter().map(|r| r.max_fraction).fold(0.0, f64::max);
    ensure(peak <= 1.0 + 1e-6 && s.verdict == Verdict::Pass, || format!("exceeded: {peak}"))?;
    let shown: Vec<String> = f.iter().map(|x| format!("{x:.3}")).collect();
    Ok(format!("fractions {}, peak {peak:.3}", shown.join(" ")))
}

fn epsilon_optimum() -> Outcome {
    let grid = epsilon_scan(6.0, 0.0, 1.5, 41);
    ensure(grid.len() == 41 && grid[0].0 > 0.0 && grid[40].0 == 1.5, || "grid is not 41 points in (0, 1.5]".into())?;
    let (best, _) = grid.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let nearest = grid
        .iter()
        .map(|e| e.0)
        .min_by(|a, b| (a - 0.75).abs().total_cmp(&(b - 0.75).abs()))
        .unwrap();
    ensure(best == nearest, || format!("maximized at {best}, nearest grid point {nearest}"))?;
    let s = cmd_verify(&config("rellich_prime_eps.json"), 1e-6).map_err(|e| e.to_string())?;
    ensure(s.reports.iter().all(|r| r.params.eps == Some(0.75)), || "report eps is not 0.75".into())?;
    Ok(format!("grid maximum at {best:.4}, report eps 0.75"))
}

fn gauge_scale() -> Outcome {
    let base = config("gauge_scale.json");
    let run = |c: f64| {
        let mut cfg = base.clone();
        cfg.group.gauge_scale = Some(c);
        cmd_verify(&cfg, 1e-6).map_err(|e| e.to_string())
    };
    let (one, two) = (run(1.0)?, run(2.0)?);
    ensure(one.reports.len() == two.reports.len() && !one.reports.is_empty(), || "report counts differ".into())?;
    let mut worst = 0.0f64;
    for (a, b) in one.reports.iter().zip(&two.reports) {
        ensure(a.pass == b.pass, || format!("{} {}: verdict changed", a.case.id(), a.field))?;
        worst = worst.max(rel_diff(a.relative_slack(), b.relative_slack()));
    }
    ensure(worst <= 1e-10, || format!("relative slack moved by {worst:e}"))?;
    let cases: std::collections::BTreeSet<_> = one.reports.iter().map(|r| r.case.id()).collect();
    Ok(format!("{} reports ({}), largest change {worst:.1e}", one.reports.len(), cases.into_iter().collect::<Vec<_>>().join(", ")))
}

fn abelian_collapse() -> Outcome {
    let s = cmd_verify(&config("abelian_collapse.json"), 1e-6).map_err(|e| e.to_string())?;
    let gauge = by_case(&s, InequalityCase::RellichGaugeL2);
    let classical = by_case(&s, InequalityCase::ClassicalRellich);
    ensure(gauge.len() == classical.len() && !gauge.is_empty(), || "report counts differ".into())?;
    let mut worst = 0.0f64;
    for (a, b) in gauge.iter().zip(&classical) {
        ensure(a.field == b.field, || "field order differs".into())?;
        ensure(a.constant_used == 1.5625 && b.constant_used == 1.5625, || {
            format!("constants {} and {}", a.constant_used, b.constant_used)
        })?;
        worst = worst.max(rel_diff(a.lhs, b.lhs)).max(rel_diff(a.rhs, b.rhs));
    }
    ensure(worst <= 1e-8, || format!("lhs/rhs differ by {worst:e}"))?;
    Ok(format!("{} fields, constant 1.5625, largest difference {worst:.1e}", gauge.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Heisenberg identity suite", identities_h1),
        ("gauge identity", gauge_identity),
        ("factorization identity", factorization),
        ("constant reproduction", constants),
        ("slack suite", slack_suite),
        ("boundary-term inequalities", boundary_terms),
        ("sharpness ladder", sharpness_ladder),
        ("eps optimality", epsilon_optimum),
        ("gauge-scale invariance", gauge_scale),
        ("abelian collapse", abelian_collapse),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
