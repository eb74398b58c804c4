//! One runner per subcommand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use siegel_core::famalg::{self, DegreeClass};
use siegel_core::linearizer::{self, LinearizationResult, LinearizerConfig, LinearizerError, TruncatedSeries};
use siegel_core::perturb::{self, PersistenceConfig, PerturbError, PointRole};
use siegel_core::polydyn::{
    self, ComplexPoly, CycleConfig, CycleRecord, DynError, FSReport, FamilyKind, FsConfig, LocateConfig,
    OrbitConfig,
};
use siegel_core::rotation::{
    self, BrjunoHeuristic, BrjunoSumResult, ContinuedFractionExpansion, ExpansionStatus, RotationError,
    RotationNumber,
};

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, Report, Table};
use crate::{CliError, Command, FamilyArg, Method, PolyArgs};

/// A report plus the error that cut it short or flagged it, if any.
pub struct CommandOutput {
    pub report: Report,
    pub failure: Option<CliError>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn rotation_err(e: RotationError) -> CliError {
    CliError::Input(e.to_string())
}

fn linearizer_err(e: LinearizerError) -> CliError {
    CliError::Input(e.to_string())
}

fn dyn_err(e: DynError) -> CliError {
    match e {
        DynError::DivisibilityViolation { .. } => CliError::Defect(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn perturb_err(e: PerturbError) -> CliError {
    match e {
        PerturbError::ClassificationViolation { .. } | PerturbError::VanishingOrder { .. } => {
            CliError::Defect(e.to_string())
        }
        _ => CliError::Input(e.to_string()),
    }
}

pub fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    match cmd {
        Command::Brjuno { quotients, terms } => brjuno(quotients, *terms, cfg),
        Command::Linearize { lambda_rot, lambda, map, order, window, method } => {
            linearize(lambda_rot.as_deref(), *lambda, map, order.unwrap_or(cfg.truncation_order), window, *method, cfg)
        }
        Command::Cycles { poly } => cycles(poly, cfg),
        Command::FsAudit { poly } => fs_audit(poly, cfg),
        Command::Perturb { poly, n, family_order } => perturb_cmd(poly, *n, *family_order, cfg),
        Command::Sweep { family, d, samples, c_center, c_radius, jobs } => {
            sweep(*family, *d, *samples, *c_center, *c_radius, *jobs, cfg)
        }
    }
}

enum QuotientInput {
    Named(String),
    List(Vec<u64>),
    PowerTower,
}

fn parse_quotient_input(s: &str) -> Result<QuotientInput, CliError> {
    let s = s.trim();
    if s == "power-tower" {
        return Ok(QuotientInput::PowerTower);
    }
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_digit() || c == ',' || c == ' ') {
        let list = s
            .split(',')
            .map(|x| x.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Input(format!("bad quotient list '{s}': {e}")))?;
        if list.contains(&0) {
            return Err(CliError::Input("partial quotients must be positive".into()));
        }
        return Ok(QuotientInput::List(list));
    }
    Ok(QuotientInput::Named(s.to_string()))
}

fn brjuno_table(cf: Option<&ContinuedFractionExpansion>, sum: &BrjunoSumResult) -> Table {
    let mut t = Table::new(&["n", "q_n", "t_n", "B_n"]);
    for k in 1..=sum.partial_sums.len() {
        let q = cf.and_then(|cf| cf.q.get(k)).map(|q| q.to_string()).unwrap_or_default();
        t.push(vec![k.to_string(), q, fmt_f64(sum.terms[k - 1]), fmt_f64(sum.partial_sums[k - 1])]);
    }
    t
}

fn brjuno(input: &str, terms: usize, cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    if terms == 0 {
        return Err(CliError::Input("--terms must be positive".into()));
    }
    let inputs = json!({"quotients": input, "terms": terms});
    let heuristic = Some(BrjunoHeuristic::default());
    let max_bits = rotation::DEFAULT_MAX_BITS;
    let (cf, failure) = match parse_quotient_input(input)? {
        QuotientInput::PowerTower => {
            let sum = rotation::power_tower_brjuno(terms, max_bits, heuristic);
            let sched = rotation::power_tower_schedule(terms + 1, max_bits);
            let cf = ContinuedFractionExpansion::from_quotients(&sched, max_bits).map_err(rotation_err)?;
            let table = brjuno_table(Some(&cf), &sum);
            let result = json!({
                "quotients": cf.quotients.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                "q": cf.q.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                "sum": to_value(&sum),
            });
            let report = Report { command: "brjuno", inputs, result, table: Some(table), partial: false, error: None };
            return Ok(CommandOutput { report, failure: None });
        }
        QuotientInput::List(list) => {
            let qs: Vec<_> = list.into_iter().map(Into::into).collect();
            let cf = ContinuedFractionExpansion::from_quotients(&qs, max_bits).map_err(rotation_err)?;
            (cf, None)
        }
        QuotientInput::Named(name) => {
            let alpha = RotationNumber::parse_named(&name, cfg.precision_bits).map_err(rotation_err)?;
            let cf = rotation::expand_continued_fraction(&alpha, terms + 1).map_err(rotation_err)?;
            let failure = match cf.status {
                ExpansionStatus::PrecisionExhausted { certified } => Some(CliError::Input(format!(
                    "precision exhausted after {certified} certified quotients at {} bits",
                    cfg.precision_bits
                ))),
                ExpansionStatus::Complete => None,
            };
            (cf, failure)
        }
    };
    let available = cf.len().saturating_sub(1);
    let n = terms.min(available);
    let failure = failure.or_else(|| {
        (n < terms).then(|| CliError::Input(format!("only {available} Brjuno terms available from {} quotients", cf.len())))
    });
    let sum = rotation::brjuno_partial_sum(&cf, n, heuristic).map_err(rotation_err)?;
    let table = brjuno_table(Some(&cf), &sum);
    let result = json!({
        "quotients": cf.quotients.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        "q": cf.q.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        "recurrence_verified": cf.verify_recurrence(),
        "sum": to_value(&sum),
    });
    let partial = failure.is_some();
    let error = failure.as_ref().map(|e| e.to_json()["error"].clone());
    Ok(CommandOutput { report: Report { command: "brjuno", inputs, result, table: Some(table), partial, error }, failure })
}

fn parse_coeffs(s: &str) -> Result<Vec<Complex64>, CliError> {
    let v: Vec<[f64; 2]> =
        serde_json::from_str(s).map_err(|e| CliError::Input(format!("coefficients must be [[re, im], ...]: {e}")))?;
    Ok(v.into_iter().map(|[a, b]| Complex64::new(a, b)).collect())
}

fn parse_window(s: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s.split_once(',').ok_or_else(|| CliError::Input(format!("window must be lo,hi: '{s}'")))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|_| CliError::Input(format!("bad window '{s}'")));
    Ok((p(a)?, p(b)?))
}

fn linearize(
    lambda_rot: Option<&str>,
    lambda: Option<Complex64>,
    map: &str,
    order: usize,
    windows: &[String],
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<CommandOutput, CliError> {
    let windows: Vec<(usize, usize)> = windows.iter().map(|w| parse_window(w)).collect::<Result<_, _>>()?;
    let (lam, lam_hp) = match (lambda_rot, lambda) {
        (Some(name), _) => {
            let alpha = RotationNumber::parse_named(name, cfg.precision_bits).map_err(rotation_err)?;
            let hp = rotation::multiplier_from_rotation(&alpha);
            (hp.to_c64(), Some(hp))
        }
        (None, Some(l)) => (l, None),
        (None, None) => return Err(CliError::Input("one of --lambda-rot or --lambda is required".into())),
    };
    let one = Complex64::new(1.0, 0.0);
    let f = match map {
        "quadratic" => TruncatedSeries::from_terms(lam, &[(2, one)], order),
        "cubic" => TruncatedSeries::from_terms(lam, &[(3, one)], order),
        json_coeffs => {
            let mut c = parse_coeffs(json_coeffs)?;
            if c.len() < 2 {
                return Err(CliError::Input("germ needs at least a linear term".into()));
            }
            c[1] = lam;
            let terms: Vec<(usize, Complex64)> = c.iter().copied().enumerate().skip(2).collect();
            TruncatedSeries::from_terms(lam, &terms, order)
        }
    }
    .map_err(linearizer_err)?;
    let f = match lam_hp {
        Some(hp) => f.with_high_precision_multiplier(hp),
        None => f,
    };
    let lcfg = LinearizerConfig { divisor_floor: cfg.tol("divisor_floor"), escalation_bits: cfg.precision_bits };
    let res: LinearizationResult = match method {
        Method::Formal => linearizer::formal_linearize_with(&f, order, &lcfg),
        Method::Koenigs => linearizer::koenigs_linearize(&f, order, None),
    }
    .map_err(linearizer_err)?;
    let mut extra = Vec::new();
    for w in &windows {
        let r = linearizer::radius_estimate(&res.magnitudes, *w).map_err(linearizer_err)?;
        extra.push(to_value(&r));
    }
    let mut table = Table::new(&["k", "re_h_k", "im_h_k", "abs_h_k", "small_divisor"]);
    for k in 1..=order {
        let sd = if k >= 2 { fmt_f64(res.small_divisors[k - 2]) } else { String::new() };
        table.push(vec![k.to_string(), fmt_f64(res.h[k].re), fmt_f64(res.h[k].im), fmt_f64(res.magnitudes[k]), sd]);
    }
    let inputs = json!({
        "lambda_rot": lambda_rot, "lambda": [lam.re, lam.im], "map": map, "order": order,
        "windows": windows, "method": format!("{method:?}").to_lowercase(),
    });
    let result = json!({"linearization": to_value(&res), "extra_windows": extra});
    Ok(CommandOutput { report: Report { command: "linearize", inputs, result, table: Some(table), partial: false, error: None }, failure: None })
}

fn family_kind(f: FamilyArg) -> FamilyKind {
    match f {
        FamilyArg::Unicritical => FamilyKind::Unicritical,
        FamilyArg::Petal => FamilyKind::Petal,
    }
}

fn resolve_poly(p: &PolyArgs) -> Result<(ComplexPoly, Value), CliError> {
    match (&p.poly, p.family) {
        (Some(s), _) => {
            let c = parse_coeffs(s)?;
            let poly = ComplexPoly::new(c).map_err(dyn_err)?;
            Ok((poly, json!({"poly": s})))
        }
        (None, Some(f)) => {
            let c = p.c.ok_or_else(|| CliError::Input("--c is required with --family".into()))?;
            let poly = polydyn::make_family(family_kind(f), p.d, c).map_err(dyn_err)?;
            Ok((poly, json!({"family": format!("{f:?}").to_lowercase(), "d": p.d, "c": [c.re, c.im]})))
        }
        (None, None) => Err(CliError::Input("one of --poly or --family is required".into())),
    }
}

fn cycle_config(cfg: &ExperimentConfig) -> CycleConfig {
    CycleConfig {
        superattracting_tol: cfg.tol("superattracting"),
        indifference_tol: cfg.tol("indifference"),
        match_tol: cfg.tol("match"),
        cluster_tol: cfg.tol("cluster"),
        siegel_radius_threshold: cfg.tol("siegel_radius"),
        linearization_order: cfg.truncation_order,
        ..CycleConfig::default()
    }
}

fn fs_config(cfg: &ExperimentConfig) -> FsConfig {
    FsConfig {
        q_max: cfg.q_max,
        t_cap: cfg.t_cap,
        cycles: cycle_config(cfg),
        orbits: OrbitConfig { tol: cfg.tol("orbit_collision"), landing_gap: cfg.tol("landing_gap"), ..OrbitConfig::default() },
        locate: LocateConfig { converge_tol: cfg.tol("converge"), ..LocateConfig::default() },
    }
}

fn cycle_table(cycles: &[CycleRecord]) -> Table {
    let mut t = Table::new(&[
        "index", "period", "re_z1", "im_z1", "re_multiplier", "im_multiplier", "abs_multiplier", "class", "sub_class",
        "weight", "t", "m", "r", "flags",
    ]);
    for (i, c) in cycles.iter().enumerate() {
        let pd = c.parabolic;
        t.push(vec![
            i.to_string(),
            c.period.to_string(),
            fmt_f64(c.points[0].re),
            fmt_f64(c.points[0].im),
            fmt_f64(c.multiplier.re),
            fmt_f64(c.multiplier.im),
            fmt_f64(c.multiplier.norm()),
            format!("{:?}", c.class),
            c.sub_class.map(|s| format!("{s:?}")).unwrap_or_default(),
            c.weight.to_string(),
            pd.map(|p| p.t.to_string()).unwrap_or_default(),
            pd.map(|p| p.m.to_string()).unwrap_or_default(),
            pd.map(|p| p.r.to_string()).unwrap_or_default(),
            c.flags.join("; "),
        ]);
    }
    t
}

fn cycles(p: &PolyArgs, cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let (poly, inputs) = resolve_poly(p)?;
    let cyc = polydyn::find_cycles_with(&poly, cfg.q_max, &cycle_config(cfg)).map_err(dyn_err)?;
    let table = cycle_table(&cyc);
    let result = json!({"cycles": to_value(&cyc), "escape_radius": poly.escape_radius()});
    Ok(CommandOutput { report: Report { command: "cycles", inputs, result, table: Some(table), partial: false, error: None }, failure: None })
}

pub const FS_HEADER: &[&str] = &[
    "family", "params", "gamma_irr", "gamma_ap", "gamma", "n_inf_j", "n_inf_f", "n_inf", "saturated",
    "julia_saturated", "flags",
];

fn verdict_cell(v: &polydyn::Verdict) -> String {
    format!("{}{}", v.value, if v.heuristic { " (heuristic)" } else { "" })
}

fn fs_row(family: &str, params: &str, r: &FSReport) -> Vec<String> {
    let mut flags = r.heuristic_flags.clone();
    flags.extend(r.alarms.iter().map(|a| format!("ALARM: {a}")));
    vec![
        family.to_string(),
        params.to_string(),
        r.gamma_irr.to_string(),
        r.gamma_ap.to_string(),
        r.gamma.to_string(),
        r.n_inf_j.to_string(),
        r.n_inf_f.to_string(),
        r.n_inf.to_string(),
        verdict_cell(&r.saturated),
        verdict_cell(&r.julia_saturated),
        flags.join("; "),
    ]
}

fn describe(p: &PolyArgs) -> (String, String) {
    match (&p.poly, p.family) {
        (Some(s), _) => ("poly".into(), s.clone()),
        (None, Some(f)) => {
            let c = p.c.unwrap_or_default();
            (format!("{f:?}").to_lowercase(), format!("d={} c=({},{})", p.d, fmt_f64(c.re), fmt_f64(c.im)))
        }
        _ => (String::new(), String::new()),
    }
}

fn alarm_failure(r: &FSReport) -> Option<CliError> {
    (!r.alarms.is_empty()).then(|| CliError::Defect(r.alarms.join("; ")))
}

fn fs_audit(p: &PolyArgs, cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let (poly, inputs) = resolve_poly(p)?;
    let r = polydyn::fs_report(&poly, &fs_config(cfg)).map_err(dyn_err)?;
    let (fam, params) = describe(p);
    let mut table = Table::new(FS_HEADER);
    table.push(fs_row(&fam, &params, &r));
    let failure = alarm_failure(&r);
    let error = failure.as_ref().map(|e| e.to_json()["error"].clone());
    let result = to_value(&r);
    Ok(CommandOutput { report: Report { command: "fs-audit", inputs, result, table: Some(table), partial: false, error }, failure })
}

fn perturb_cmd(p: &PolyArgs, n: Option<usize>, order: usize, cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let (poly, mut inputs) = resolve_poly(p)?;
    inputs["n"] = json!(n);
    inputs["family_order"] = json!(order);
    let fcfg = fs_config(cfg);
    let cycles = polydyn::find_cycles_with(&poly, cfg.q_max, &fcfg.cycles).map_err(dyn_err)?;
    let orbits = polydyn::critical_orbit_partition(&poly, cfg.t_cap, &fcfg.orbits).map_err(dyn_err)?;
    let t = perturb::observability_time(&orbits);
    let plan = perturb::build_perturbation(&poly, &cycles, &orbits, t, n).map_err(perturb_err)?;
    let mut failure = None;
    let mut locals = Vec::new();
    for f in &plan.factors {
        let entry = match perturb::expand_family_at(&plan, f.root, order) {
            Ok(fam) => {
                let cls = famalg::classify_degree(&fam);
                json!({
                    "point": [f.root.re, f.root.im], "role": f.role, "classification": cls,
                    "degrees": fam.degrees(), "family": to_value(&fam),
                })
            }
            Err(e) => {
                let ce = perturb_err(e);
                let v = json!({"point": [f.root.re, f.root.im], "role": f.role, "error": ce.to_string()});
                failure.get_or_insert(ce);
                v
            }
        };
        locals.push(entry);
    }
    let mut iterates = Vec::new();
    let mut probes = Vec::new();
    let mut table = Table::new(&[
        "cycle", "re_a", "im_a", "max_cycle_residual", "multiplier_residual", "probe_radius",
    ]);
    let pcfg = PersistenceConfig::default();
    for (i, c) in cycles.iter().enumerate().filter(|(_, c)| c.class == polydyn::CycleClass::IrrationallyIndifferent) {
        match perturb::cycle_iterate_family(&plan, c, order) {
            Ok(fam) => iterates.push(json!({
                "cycle": i,
                "family": to_value(&fam),
                "classification": famalg::classify_degree(&fam),
                "essentially_quadratic": famalg::classify_degree(&fam).has(DegreeClass::EssentiallyQuadratic),
                "linear_part": [fam.linear_part().re, fam.linear_part().im],
            })),
            Err(e) => {
                let ce = perturb_err(e);
                iterates.push(json!({"cycle": i, "error": ce.to_string()}));
                failure.get_or_insert(ce);
            }
        }
        let rep = perturb::persistence_probe(&plan, c, &pcfg);
        for s in &rep.samples {
            table.push(vec![
                i.to_string(),
                fmt_f64(s.a.re),
                fmt_f64(s.a.im),
                fmt_f64(s.cycle_residual),
                fmt_f64(s.multiplier_residual),
                fmt_f64(s.probe_radius),
            ]);
        }
        probes.push(json!({"cycle": i, "report": rep}));
    }
    let plan_json = json!({
        "B1": plan.b1.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "B2": plan.b2.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "T": plan.t,
        "N": plan.n,
        "Q_coeffs": plan.q_coeffs.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "factors": plan.factors.iter().map(|f| json!({
            "root": [f.root.re, f.root.im], "exponent": f.exponent,
            "role": match f.role { PointRole::B1 => "B1", PointRole::B2 => "B2" },
        })).collect::<Vec<_>>(),
        "flags": plan.flags,
    });
    let result = json!({"plan": plan_json, "local_families": locals, "cycle_iterates": iterates, "persistence": probes});
    let partial = failure.is_some();
    let error = failure.as_ref().map(|e| e.to_json()["error"].clone());
    Ok(CommandOutput { report: Report { command: "perturb", inputs, result, table: Some(table), partial, error }, failure })
}

/// Parameters `c` drawn uniformly from the disk `|c - center| <= radius`.
pub fn sample_parameters(seed: u64, n: usize, center: Complex64, radius: f64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = radius * rng.gen::<f64>().sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            center + Complex64::from_polar(r, th)
        })
        .collect()
}

fn sweep(
    family: FamilyArg,
    d: usize,
    samples: usize,
    center: Complex64,
    radius: f64,
    jobs: usize,
    cfg: &ExperimentConfig,
) -> Result<CommandOutput, CliError> {
    if jobs == 0 {
        return Err(CliError::Input("--jobs must be positive".into()));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(CliError::Input("--c-radius must be a finite non-negative number".into()));
    }
    let params = sample_parameters(cfg.seed, samples, center, radius);
    let fcfg = fs_config(cfg);
    let kind = family_kind(family);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let results: Vec<Result<FSReport, DynError>> = pool.install(|| {
        params
            .par_iter()
            .map(|&c| polydyn::make_family(kind, d, c).and_then(|p| polydyn::fs_report(&p, &fcfg)))
            .collect()
    });
    let fam = format!("{family:?}").to_lowercase();
    let mut table = Table::new(FS_HEADER);
    let mut rows = Vec::new();
    let mut failure: Option<CliError> = None;
    let mut n_alarm = 0;
    for (i, (c, r)) in params.iter().zip(&results).enumerate() {
        let label = format!("d={d} c=({},{})", fmt_f64(c.re), fmt_f64(c.im));
        match r {
            Ok(rep) => {
                table.push(fs_row(&fam, &label, rep));
                if !rep.alarms.is_empty() {
                    n_alarm += 1;
                }
                rows.push(json!({
                    "index": i, "c": [c.re, c.im],
                    "gamma_irr": rep.gamma_irr, "gamma_ap": rep.gamma_ap, "gamma": rep.gamma,
                    "n_inf_j": rep.n_inf_j, "n_inf_f": rep.n_inf_f, "n_inf": rep.n_inf,
                    "saturated": rep.saturated, "julia_saturated": rep.julia_saturated,
                    "heuristic_flags": rep.heuristic_flags, "alarms": rep.alarms,
                }));
            }
            Err(e) => {
                let ce = dyn_err(e.clone());
                let mut row = vec![fam.clone(), label];
                row.extend(std::iter::repeat(String::new()).take(FS_HEADER.len() - 3));
                row.push(format!("ERROR: {ce}"));
                table.push(row);
                rows.push(json!({"index": i, "c": [c.re, c.im], "error": ce.to_string()}));
                if failure.is_none() {
                    failure = Some(ce);
                }
            }
        }
    }
    let partial = failure.is_some();
    if failure.is_none() && n_alarm > 0 {
        failure = Some(CliError::Defect(format!("{n_alarm} of {samples} reports raised alarms")));
    }
    let error = failure.as_ref().map(|e| e.to_json()["error"].clone());
    let inputs = json!({
        "family": fam, "d": d, "samples": samples, "c_center": [center.re, center.im], "c_radius": radius,
    });
    let result = json!({"rows": rows, "alarm_count": n_alarm});
    Ok(CommandOutput { report: Report { command: "sweep", inputs, result, table: Some(table), partial, error }, failure })
}
