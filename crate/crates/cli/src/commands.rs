//! Command drivers. Each computes, writes its artifacts into the output
//! directory, and classifies failures: Usage means the request could not be
//! set up (exit 2), Check means it ran and failed (exit 1).

use std::fs;
use std::path::Path;

use fracsob::geometry::{
    bump, chart_atlas, cover_boundary, partition_of_unity, Ball, Chart, Domain, PartitionOfUnity,
};
use fracsob::norms::{
    gagliardo_seminorm, luxemburg_norm, GridFunction, NormResult, Region,
};
use fracsob::operators::{
    extend, trace, truncate, ExtensionProvenance, ExtensionResult, RegionLabel,
};
use fracsob::verify::{
    check_alpha_beta_bound, check_decomposition, check_embedding, check_holder,
    check_integral_estimate, estimate_constant, grid_nodes, holder_triples, trig_family,
    ConstantEstimate, InequalityCase, OperatorSpec,
};
use serde::Serialize;

use crate::config::ProblemConfig;
use crate::report::{fmt_f64, to_json17, Csv};
use crate::Failure;

fn check_err(check: &'static str) -> impl Fn(fracsob::Error) -> Failure {
    move |e| Failure::Check(format!("{check}: {e}"))
}

fn write_artifact(out: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(out.join(name), bytes)
        .map_err(|e| Failure::Check(format!("cannot write {name}: {e}")))
}

// ---------------------------------------------------------------------------
// Grid emission

/// Write `f` sampled on an endpoint-inclusive lattice as CSV: a header row
/// naming the coordinates, one value column, rows lexicographic in the
/// coordinates. Nodes where the function is undefined (outside a curved
/// domain) emit `nan`. Returns the data row count.
pub fn emit_grid(f: &GridFunction, resolution: usize, path: &Path) -> Result<usize, Failure> {
    if resolution < 2 {
        return Err(Failure::Usage(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let nodes = grid_nodes(f.domain(), resolution);
    let dim = f.domain().bounding_box().0.len();
    let mut csv = Csv::new(if dim == 1 { "x,value" } else { "x1,x2,value" });
    for node in &nodes {
        let value = match f.eval(node) {
            Ok(v) => fmt_f64(v),
            Err(_) => "nan".to_owned(),
        };
        let mut fields: Vec<String> = node.iter().map(|c| fmt_f64(*c)).collect();
        fields.push(value);
        csv.row(&fields);
    }
    fs::write(path, csv.into_bytes())
        .map_err(|e| Failure::Check(format!("cannot write {}: {e}", path.display())))?;
    Ok(nodes.len())
}

fn maybe_grid(cfg: &ProblemConfig, u: &GridFunction, out: &Path) -> Result<(), Failure> {
    if cfg.emit_grid {
        emit_grid(u, cfg.grid_resolution, &out.join("grid.csv"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scalar commands

#[derive(Serialize)]
struct ScalarReport<'a> {
    command: &'a str,
    #[serde(flatten)]
    result: &'a NormResult,
}

fn write_scalar(out: &Path, command: &str, r: &NormResult) -> Result<(), Failure> {
    write_artifact(out, "report.json", &to_json17(&ScalarReport { command, result: r }))?;
    let mut csv = Csv::new("command,value,refinement_estimate");
    csv.row(&[command.to_owned(), fmt_f64(r.value), fmt_f64(r.refinement_estimate)]);
    write_artifact(out, "summary.csv", &csv.into_bytes())
}

pub fn cmd_norm(cfg: &ProblemConfig, out: &Path) -> Result<(), Failure> {
    let u = cfg.parse_u(&cfg.omega).map_err(Failure::Usage)?;
    let r = luxemburg_norm(&u, &cfg.params.q, &cfg.omega, &cfg.quad)
        .map_err(check_err("norm"))?;
    write_scalar(out, "norm", &r)?;
    maybe_grid(cfg, &u, out)
}

pub fn cmd_seminorm(cfg: &ProblemConfig, out: &Path) -> Result<(), Failure> {
    let u = cfg.parse_u(&cfg.omega).map_err(Failure::Usage)?;
    let r = gagliardo_seminorm(&u, &cfg.params, &cfg.omega, &cfg.quad)
        .map_err(check_err("seminorm"))?;
    write_scalar(out, "seminorm", &r)?;
    maybe_grid(cfg, &u, out)
}

// ---------------------------------------------------------------------------
// Operator commands

fn boundary_setup(
    omega: &Domain,
    charts: usize,
) -> Result<(Vec<Chart>, PartitionOfUnity), Failure> {
    let as_usage = |e: fracsob::Error| Failure::Usage(format!("domain: {e}"));
    let atlas = chart_atlas(omega, charts).map_err(as_usage)?;
    let cover = cover_boundary(omega, charts).map_err(as_usage)?;
    if cover.len() != atlas.len() {
        return Err(Failure::Usage(format!(
            "extend.charts: this domain's atlas has {} charts; set charts = {}",
            atlas.len(),
            atlas.len()
        )));
    }
    let gamma = omega.boundary().map_err(as_usage)?;
    let pou = partition_of_unity(&cover, &gamma).map_err(as_usage)?;
    Ok((atlas, pou))
}

#[derive(Serialize)]
struct RegionSample {
    point: Vec<f64>,
    region: RegionLabel,
}

#[derive(Serialize)]
struct ProvenanceDoc<'a> {
    provenance: &'a ExtensionProvenance,
    region_grid: Vec<RegionSample>,
}

#[derive(Serialize)]
struct GridReport<'a> {
    command: &'a str,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    grid_rows: usize,
}

fn write_grid_report(out: &Path, command: &str, domain: &Domain, rows: usize) -> Result<(), Failure> {
    let (box_lo, box_hi) = domain.bounding_box();
    write_artifact(
        out,
        "report.json",
        &to_json17(&GridReport { command, box_lo, box_hi, grid_rows: rows }),
    )?;
    let mut csv = Csv::new("command,grid_rows");
    csv.row(&[command.to_owned(), rows.to_string()]);
    write_artifact(out, "summary.csv", &csv.into_bytes())
}

pub fn cmd_extend(cfg: &ProblemConfig, out: &Path) -> Result<(), Failure> {
    let u = cfg.parse_u(&cfg.omega).map_err(Failure::Usage)?;
    let (atlas, pou) = boundary_setup(&cfg.omega, cfg.extend.charts)?;
    let ext = extend(&u, &cfg.omega, &atlas, &pou, cfg.extend.margin_factor)
        .map_err(check_err("extend"))?;
    let rows = emit_grid(&ext.function, cfg.grid_resolution, &out.join("grid.csv"))?;
    let region_grid = grid_nodes(ext.enclosing_box(), cfg.grid_resolution)
        .into_iter()
        .map(|point| {
            let region = ext.region_at(&point);
            RegionSample { point, region }
        })
        .collect();
    write_artifact(
        out,
        "provenance.json",
        &to_json17(&ProvenanceDoc { provenance: &ext.provenance, region_grid }),
    )?;
    write_grid_report(out, "extend", ext.enclosing_box(), rows)
}

pub fn cmd_trace(cfg: &ProblemConfig, out: &Path) -> Result<(), Failure> {
    let bx = match &cfg.trace_box {
        Some(d) => d.clone(),
        None => default_trace_box(&cfg.omega)?,
    };
    let u = cfg.parse_u(&bx).map_err(Failure::Usage)?;
    let tr = trace(&u, &cfg.omega).map_err(check_err("trace"))?;
    let rows = emit_grid(&tr, cfg.grid_resolution, &out.join("grid.csv"))?;
    write_grid_report(out, "trace", &cfg.omega, rows)
}

/// Without an explicit trace box, define u on the hull dilated by one
/// diameter per side.
fn default_trace_box(omega: &Domain) -> Result<Domain, Failure> {
    let (lo, hi) = omega.bounding_box();
    let d = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| b - a)
        .fold(0.0f64, f64::max);
    let blo: Vec<f64> = lo.iter().map(|a| a - d).collect();
    let bhi: Vec<f64> = hi.iter().map(|b| b + d).collect();
    let domain = if lo.len() == 1 {
        Domain::interval(blo[0], bhi[0])
    } else {
        Domain::rect(blo, bhi)
    };
    domain.map_err(|e| Failure::Usage(format!("domain: {e}")))
}

// ---------------------------------------------------------------------------
// Verification batteries

const KNOWN_CHECKS: [&str; 6] =
    ["holder", "integral_estimate", "alpha_beta", "embedding", "decomposition", "all"];

#[derive(Serialize)]
struct VerifyReport<'a> {
    command: &'a str,
    check: &'a str,
    seed: u64,
    case_count: usize,
    violations: usize,
    skipped: &'a [String],
    estimates: &'a [ConstantEstimate],
    cases: &'a [InequalityCase],
}

pub fn cmd_verify(
    cfg: &ProblemConfig,
    out: &Path,
    check_override: Option<&str>,
    cases_override: Option<usize>,
    seed_override: Option<u64>,
    force_all: bool,
) -> Result<(), Failure> {
    let check = if force_all {
        "all".to_owned()
    } else {
        check_override.map(str::to_owned).unwrap_or_else(|| cfg.verify.check.clone())
    };
    if !KNOWN_CHECKS.contains(&check.as_str()) {
        return Err(Failure::Usage(format!(
            "verify.check: unknown check {check:?} (expected one of {})",
            KNOWN_CHECKS.join(", ")
        )));
    }
    let count = cases_override.unwrap_or(cfg.verify.cases);
    let seed = seed_override.unwrap_or(cfg.verify.seed);
    if count == 0 {
        return Err(Failure::Usage("verify.cases: must be at least 1".to_owned()));
    }

    let all = check == "all";
    let mut cases: Vec<InequalityCase> = Vec::new();
    let mut estimates: Vec<ConstantEstimate> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();

    if all || check == "holder" {
        family_holder(cfg, seed, count, &mut cases, &mut estimates)?;
    }
    if all || check == "integral_estimate" {
        family_integral(cfg, seed, count, &mut cases, &mut estimates)?;
    }
    if all || check == "alpha_beta" {
        family_alpha_beta(cfg, seed, count, &mut cases, &mut estimates)?;
    }
    if all || check == "embedding" {
        match &cfg.verify.r {
            Some(r) => family_embedding(cfg, r, seed, count, &mut cases, &mut estimates)?,
            None if all => skipped.push("embedding: verify.r not set".to_owned()),
            None => return Err(Failure::Usage("missing verify.r".to_owned())),
        }
    }
    if all || check == "decomposition" {
        family_decomposition(cfg, seed, count, &mut cases, &mut estimates)?;
    }

    let violations = cases.iter().filter(|c| !c.pass).count();
    let command = if force_all { "sweep" } else { "verify" };
    write_artifact(
        out,
        "report.json",
        &to_json17(&VerifyReport {
            command,
            check: &check,
            seed,
            case_count: cases.len(),
            violations,
            skipped: &skipped,
            estimates: &estimates,
            cases: &cases,
        }),
    )?;

    let mut csv = Csv::new("check,family,cases,violations,sup_ratio,refinement_stable");
    for est in &estimates {
        let fam_violations = cases.iter().filter(|c| c.check == est.check && !c.pass).count();
        csv.row(&[
            est.check.clone(),
            est.family.clone(),
            est.ratios.len().to_string(),
            fam_violations.to_string(),
            fmt_f64(est.sup_ratio),
            est.refinement_stable.to_string(),
        ]);
    }
    write_artifact(out, "summary.csv", &csv.into_bytes())?;

    if violations > 0 {
        return Err(Failure::Check(format!(
            "{violations} of {} verification cases failed",
            cases.len()
        )));
    }
    Ok(())
}

fn family_holder(
    cfg: &ProblemConfig,
    seed: u64,
    count: usize,
    cases: &mut Vec<InequalityCase>,
    estimates: &mut Vec<ConstantEstimate>,
) -> Result<(), Failure> {
    let mut fam = Vec::with_capacity(count);
    for (id, u, v, p) in holder_triples(seed, count, &cfg.omega) {
        let mut c =
            check_holder(&u, &v, &p, &cfg.omega, &cfg.quad).map_err(check_err("holder"))?;
        c.case_id = id;
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant("holder", &format!("trig-pairs-seed{seed}"), &fam));
    cases.append(&mut fam);
    Ok(())
}

fn family_integral(
    cfg: &ProblemConfig,
    seed: u64,
    count: usize,
    cases: &mut Vec<InequalityCase>,
    estimates: &mut Vec<ConstantEstimate>,
) -> Result<(), Failure> {
    let mut fam = Vec::with_capacity(count);
    for (id, u) in trig_family(seed, count, &cfg.omega) {
        let mut c = check_integral_estimate(&u, &cfg.params, &cfg.omega, &cfg.quad)
            .map_err(check_err("integral_estimate"))?;
        c.case_id = id;
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant(
        "integral_estimate",
        &format!("trig-seed{seed}"),
        &fam,
    ));
    cases.append(&mut fam);
    Ok(())
}

fn family_alpha_beta(
    cfg: &ProblemConfig,
    seed: u64,
    count: usize,
    cases: &mut Vec<InequalityCase>,
    estimates: &mut Vec<ConstantEstimate>,
) -> Result<(), Failure> {
    // Interior bump shared by the zero-extension and truncation families;
    // its support clears the boundary by 0.3 of the smallest half-extent.
    let (lo, hi) = cfg.omega.bounding_box();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let half_min =
        lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
    let r_outer = 0.7 * half_min;
    let psi = bump(&center, 0.6 * r_outer, r_outer)
        .map_err(|e| Failure::Usage(format!("domain: {e}")))?;
    let support = Region::Ball(Ball { center: center.clone(), radius: r_outer });
    let margin = cfg.extend.margin_factor;
    let us = trig_family(seed, count, &cfg.omega);

    let mut fam = Vec::with_capacity(count);
    for (id, u0) in &us {
        let u = truncate(&psi, u0).map_err(check_err("alpha_beta_zero_extend"))?;
        let mut c = check_alpha_beta_bound(
            OperatorSpec::ZeroExtend { support: &support, margin_factor: margin },
            &u,
            &cfg.params,
            &cfg.omega,
            &cfg.quad,
        )
        .map_err(check_err("alpha_beta_zero_extend"))?;
        c.case_id = id.clone();
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant(
        "alpha_beta_zero_extend",
        &format!("bump-cut-trig-seed{seed}"),
        &fam,
    ));
    cases.append(&mut fam);

    let mut fam = Vec::with_capacity(count);
    for (id, u0) in &us {
        let mut c = check_alpha_beta_bound(
            OperatorSpec::Truncate { psi: &psi },
            u0,
            &cfg.params,
            &cfg.omega,
            &cfg.quad,
        )
        .map_err(check_err("alpha_beta_truncate"))?;
        c.case_id = id.clone();
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant(
        "alpha_beta_truncate",
        &format!("trig-seed{seed}"),
        &fam,
    ));
    cases.append(&mut fam);

    let (atlas, pou) = boundary_setup(&cfg.omega, cfg.extend.charts)?;
    let mut fam = Vec::with_capacity(count);
    for (id, u0) in &us {
        let mut c = check_alpha_beta_bound(
            OperatorSpec::Extend { atlas: &atlas, pou: &pou, margin_factor: margin },
            u0,
            &cfg.params,
            &cfg.omega,
            &cfg.quad,
        )
        .map_err(check_err("alpha_beta_extend"))?;
        c.case_id = id.clone();
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant(
        "alpha_beta_extend",
        &format!("trig-seed{seed}"),
        &fam,
    ));
    cases.append(&mut fam);
    Ok(())
}

fn family_embedding(
    cfg: &ProblemConfig,
    r: &fracsob::exponents::ExponentField,
    seed: u64,
    count: usize,
    cases: &mut Vec<InequalityCase>,
    estimates: &mut Vec<ConstantEstimate>,
) -> Result<(), Failure> {
    let mut fam = Vec::with_capacity(count);
    for (id, u) in trig_family(seed, count, &cfg.omega) {
        let mut c = check_embedding(&u, &cfg.params, r, &cfg.omega, &cfg.quad)
            .map_err(check_err("embedding"))?;
        c.case_id = id;
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant("embedding", &format!("trig-seed{seed}"), &fam));
    cases.append(&mut fam);
    Ok(())
}

/// Place a bump in the zeroed region of the extension box: clear of the
/// box walls, of the domain hull, and of every reflection chart ball, so
/// adding it leaves the decomposition identities exact. None when the
/// margin leaves no room.
fn far_bump_site(omega: &Domain, ext: &ExtensionResult) -> Option<(Vec<f64>, f64)> {
    let (blo, bhi) = ext.enclosing_box().bounding_box();
    let (olo, ohi) = omega.bounding_box();
    let pad = bhi[0] - ohi[0];
    let r_outer = 0.08 * pad;
    if !(r_outer > 0.0) {
        return None;
    }
    let mut c: Vec<f64> = blo.iter().zip(&bhi).map(|(a, b)| 0.5 * (a + b)).collect();
    c[0] = ohi[0] + 0.8 * pad;
    let inside_box = c
        .iter()
        .zip(blo.iter().zip(&bhi))
        .all(|(ci, (a, b))| ci - r_outer > *a && ci + r_outer < *b);
    if !inside_box {
        return None;
    }
    let hull_dist2: f64 = c
        .iter()
        .zip(olo.iter().zip(&ohi))
        .map(|(ci, (a, b))| {
            let d = (a - ci).max(ci - b).max(0.0);
            d * d
        })
        .sum();
    if hull_dist2.sqrt() <= r_outer {
        return None;
    }
    if let Some(atlas) = &ext.provenance.atlas {
        for chart in atlas {
            let d2: f64 = chart
                .ball
                .center
                .iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() <= chart.ball.radius + r_outer {
                return None;
            }
        }
    }
    Some((c, r_outer))
}

fn family_decomposition(
    cfg: &ProblemConfig,
    seed: u64,
    count: usize,
    cases: &mut Vec<InequalityCase>,
    estimates: &mut Vec<ConstantEstimate>,
) -> Result<(), Failure> {
    let (atlas, pou) = boundary_setup(&cfg.omega, cfg.extend.charts)?;
    let mut fam = Vec::with_capacity(count);
    for (id, v) in trig_family(seed, count, &cfg.omega) {
        let ev = extend(&v, &cfg.omega, &atlas, &pou, cfg.extend.margin_factor)
            .map_err(check_err("decomposition"))?;
        let u = match far_bump_site(&cfg.omega, &ev) {
            Some((c, r_outer)) => {
                let b = bump(&c, 0.5 * r_outer, r_outer)
                    .map_err(check_err("decomposition"))?;
                let bx = ev.enclosing_box().clone();
                let far = GridFunction::analytic(move |x| Ok(b.eval(x)), bx);
                ev.function.linear_combination(1.0, &far, 1.0)
            }
            None => ev.function.clone(),
        };
        let mut c = check_decomposition(&u, &v, &cfg.omega, &atlas, &pou, 64)
            .map_err(check_err("decomposition"))?;
        c.case_id = id;
        c.seed = Some(seed);
        fam.push(c);
    }
    estimates.push(estimate_constant("decomposition", &format!("trig-seed{seed}"), &fam));
    cases.append(&mut fam);
    Ok(())
}
