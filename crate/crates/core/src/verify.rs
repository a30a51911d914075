//! Empirical checks of every inequality and identity the library relies on,
//! plus estimation of their unspecified constants as sup-ratios over seeded
//! function families.
//!
//! Checks are deterministic given (seed, quadrature spec). Bound-type checks
//! pass when lhs <= rhs * (1 + tol); ratio-type checks pass when the ratio
//! is finite and moves by less than 10% from h to h/2. Identity-type checks
//! are exact at grid nodes with zero tolerance.

use crate::error::{Error, Result};
use crate::exponents::{
    conjugate_exponent, exponent_bounds, validate_admissibility, ExponentField, SpaceParams,
    DEFAULT_VALIDATION_GRID,
};
use crate::geometry::{Chart, Cutoff, Domain, PartitionOfUnity};
use crate::norms::{
    luxemburg_norm, pairing, seminorm_double_integral, sobolev_norm, GridFunction,
    QuadratureSpec, Region,
};
use crate::operators::{extend, kernel_decompose, trace, truncate, zero_extend};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

/// Relative drift allowed between the ratio at h and at h/2.
pub const STABILITY_TOL: f64 = 0.1;

const HOLDER_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Report types

#[derive(Debug, Clone, Serialize)]
pub struct InequalityCase {
    pub check: String,
    pub case_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
    /// Finest grid spacing used for the reported values.
    pub h: f64,
    /// The ratio recomputed at half the spacing, where the check demands
    /// refinement evidence.
    pub ratio_half_h: Option<f64>,
    pub seed: Option<u64>,
    /// Serialized problem description.
    pub inputs: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantEstimate {
    pub check: String,
    pub family: String,
    pub sup_ratio: f64,
    pub ratios: Vec<f64>,
    pub refinement_stable: bool,
    pub unstable_cases: Vec<String>,
}

fn safe_ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

fn grid_h(omega: &Domain, quad: &QuadratureSpec) -> f64 {
    let (lo, hi) = omega.bounding_box();
    lo.iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) / quad.cells_per_axis as f64)
        .fold(f64::INFINITY, f64::min)
}

fn refined(quad: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec { cells_per_axis: quad.cells_per_axis * 2, ..*quad }
}

fn drift_ok(ratio: f64, ratio_half: f64) -> bool {
    if ratio == 0.0 {
        return ratio_half == 0.0;
    }
    ratio.is_finite() && ratio_half.is_finite() && ((ratio - ratio_half) / ratio).abs() < STABILITY_TOL
}

/// Endpoint-inclusive lattice over the bounding box of `domain`,
/// lexicographic in coordinates; endpoints are the exact hull values so the
/// corner nodes never fall outside the closed domain.
pub fn grid_nodes(domain: &Domain, per_axis: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = domain.bounding_box();
    let axis = |a: f64, b: f64| -> Vec<f64> {
        (0..=per_axis)
            .map(|i| {
                if i == 0 {
                    a
                } else if i == per_axis {
                    b
                } else {
                    a + (b - a) * i as f64 / per_axis as f64
                }
            })
            .collect()
    };
    if lo.len() == 1 {
        return axis(lo[0], hi[0]).into_iter().map(|x| vec![x]).collect();
    }
    let xs = axis(lo[0], hi[0]);
    let ys = axis(lo[1], hi[1]);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for x in &xs {
        for y in &ys {
            out.push(vec![*x, *y]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Hölder

/// |integral u v| <= 2 ||u||_{p} ||v||_{p'}, the factor-2 bound. The
/// inequality is unconditional, so the check fails only on a genuine norm or
/// quadrature defect.
pub fn check_holder(
    u: &GridFunction,
    v: &GridFunction,
    p: &ExponentField,
    omega: &Domain,
    quad: &QuadratureSpec,
) -> Result<InequalityCase> {
    let p_conj = conjugate_exponent(p)?;
    let lhs = pairing(u, v, omega, quad)?;
    let nu = luxemburg_norm(u, p, omega, quad)?.value;
    let nv = luxemburg_norm(v, &p_conj, omega, quad)?.value;
    let rhs = 2.0 * nu * nv;
    let ratio = safe_ratio(lhs, rhs);
    Ok(InequalityCase {
        check: "holder".into(),
        case_id: String::new(),
        lhs,
        rhs,
        ratio,
        pass: lhs <= rhs * (1.0 + HOLDER_TOL),
        h: grid_h(omega, quad),
        ratio_half_h: None,
        seed: None,
        inputs: format!("u={u:?}; v={v:?}"),
    })
}

// ---------------------------------------------------------------------------
// Integral estimate

/// Double integral at lambda = 1 against ||u||_W^{p+} + ||u||_W^{p-}; the
/// ratio stands in for the unspecified constant and must be refinement
/// stable.
pub fn check_integral_estimate(
    u: &GridFunction,
    params: &SpaceParams,
    omega: &Domain,
    quad: &QuadratureSpec,
) -> Result<InequalityCase> {
    let bounds = exponent_bounds(&params.p, DEFAULT_VALIDATION_GRID)?;
    let eval = |spec: &QuadratureSpec| -> Result<(f64, f64, f64)> {
        let lhs = seminorm_double_integral(u, params, omega, 1.0, spec)?;
        let norm = sobolev_norm(u, params, omega, spec)?;
        let rhs = norm.powf(bounds.p_plus) + norm.powf(bounds.p_minus);
        Ok((lhs, rhs, safe_ratio(lhs, rhs)))
    };
    let (lhs, rhs, ratio) = eval(quad)?;
    let (_, _, ratio_half) = eval(&refined(quad))?;
    Ok(InequalityCase {
        check: "integral_estimate".into(),
        case_id: String::new(),
        lhs,
        rhs,
        ratio,
        pass: drift_ok(ratio, ratio_half),
        h: grid_h(omega, quad),
        ratio_half_h: Some(ratio_half),
        seed: None,
        inputs: format!("u={u:?}; s={}; n={}", params.s, params.n),
    })
}

// ---------------------------------------------------------------------------
// alpha/beta branch bounds for the three operators

/// Which operator the branch bound is checked for, with its context.
pub enum OperatorSpec<'a> {
    ZeroExtend { support: &'a Region, margin_factor: f64 },
    Truncate { psi: &'a Cutoff },
    Extend { atlas: &'a [Chart], pou: &'a PartitionOfUnity, margin_factor: f64 },
}

impl OperatorSpec<'_> {
    fn name(&self) -> &'static str {
        match self {
            OperatorSpec::ZeroExtend { .. } => "zero_extend",
            OperatorSpec::Truncate { .. } => "truncate",
            OperatorSpec::Extend { .. } => "extend",
        }
    }
}

/// ||f(u)||_W <= C ||u||_W^beta when ||u||_W >= 1, else C ||u||_W^alpha.
/// Reports ||f(u)||_W / ||u||_W^{branch exponent}; pass means finite and
/// refinement stable.
pub fn check_alpha_beta_bound(
    op: OperatorSpec<'_>,
    u: &GridFunction,
    params: &SpaceParams,
    omega: &Domain,
    quad: &QuadratureSpec,
) -> Result<InequalityCase> {
    let bounds = exponent_bounds(&params.p, DEFAULT_VALIDATION_GRID)?;
    let (result, result_domain) = match &op {
        OperatorSpec::ZeroExtend { support, margin_factor } => {
            let ext = zero_extend(u, omega, support, *margin_factor)?;
            let d = ext.enclosing_box().clone();
            (ext.function, d)
        }
        OperatorSpec::Truncate { psi } => (truncate(psi, u)?, omega.clone()),
        OperatorSpec::Extend { atlas, pou, margin_factor } => {
            let ext = extend(u, omega, atlas, pou, *margin_factor)?;
            let d = ext.enclosing_box().clone();
            (ext.function, d)
        }
    };
    let eval = |spec: &QuadratureSpec| -> Result<(f64, f64, f64, f64)> {
        let norm_in = sobolev_norm(u, params, omega, spec)?;
        let norm_out = sobolev_norm(&result, params, &result_domain, spec)?;
        let branch = if norm_in >= 1.0 { bounds.beta } else { bounds.alpha };
        let rhs = norm_in.powf(branch);
        Ok((norm_out, rhs, safe_ratio(norm_out, rhs), norm_in))
    };
    let (lhs, rhs, ratio, norm_in) = eval(quad)?;
    let (_, _, ratio_half, _) = eval(&refined(quad))?;
    let branch = if norm_in >= 1.0 { "beta" } else { "alpha" };
    Ok(InequalityCase {
        check: format!("alpha_beta_{}", op.name()),
        case_id: String::new(),
        lhs,
        rhs,
        ratio,
        pass: drift_ok(ratio, ratio_half),
        h: grid_h(omega, quad),
        ratio_half_h: Some(ratio_half),
        seed: None,
        inputs: format!("u={u:?}; branch={branch}; input_norm={norm_in}"),
    })
}

// ---------------------------------------------------------------------------
// Embedding

/// ||u||_{L^{r}} <= C ||u||_W under the admissibility hypotheses; refuses
/// to run when they fail, since the inequality is only claimed there.
pub fn check_embedding(
    u: &GridFunction,
    params: &SpaceParams,
    r: &ExponentField,
    omega: &Domain,
    quad: &QuadratureSpec,
) -> Result<InequalityCase> {
    let report = validate_admissibility(params, Some(r), DEFAULT_VALIDATION_GRID)?;
    if !report.verdict {
        let failing: Vec<&str> = report
            .constraints
            .iter()
            .filter(|c| !c.holds)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::HypothesisNotMet {
            detail: format!("embedding hypotheses fail: {}", failing.join(", ")),
        });
    }
    let eval = |spec: &QuadratureSpec| -> Result<(f64, f64, f64)> {
        let lhs = luxemburg_norm(u, r, omega, spec)?.value;
        let rhs = sobolev_norm(u, params, omega, spec)?;
        Ok((lhs, rhs, safe_ratio(lhs, rhs)))
    };
    let (lhs, rhs, ratio) = eval(quad)?;
    let (_, _, ratio_half) = eval(&refined(quad))?;
    Ok(InequalityCase {
        check: "embedding".into(),
        case_id: String::new(),
        lhs,
        rhs,
        ratio,
        pass: drift_ok(ratio, ratio_half),
        h: grid_h(omega, quad),
        ratio_half_h: Some(ratio_half),
        seed: None,
        inputs: format!("u={u:?}; s={}; n={}", params.s, params.n),
    })
}

// ---------------------------------------------------------------------------
// Decomposition identities

/// Exact identities of the kernel/image split: parts sum to u at box nodes,
/// the kernel part has zero trace, and T(E v) = v witnesses surjectivity.
/// lhs is the largest absolute defect; the check passes only when it is
/// exactly zero.
pub fn check_decomposition(
    u: &GridFunction,
    target_v: &GridFunction,
    omega: &Domain,
    atlas: &[Chart],
    pou: &PartitionOfUnity,
    nodes_per_axis: usize,
) -> Result<InequalityCase> {
    let d = kernel_decompose(u, omega, atlas, pou)?;
    let mut worst: f64 = 0.0;

    for x in grid_nodes(u.domain(), nodes_per_axis) {
        let total = d.kernel_part.eval(&x)? + d.image_part.eval(&x)?;
        worst = worst.max((total - u.eval(&x)?).abs());
    }
    let tk = trace(&d.kernel_part, omega)?;
    for x in grid_nodes(omega, nodes_per_axis) {
        if omega.contains_closure(&x) {
            worst = worst.max(tk.eval(&x)?.abs());
        }
    }
    // Surjectivity witness: the trace of the extension of v reproduces v.
    let ev = extend(target_v, omega, atlas, pou, 0.0)?;
    let tev = trace(&ev.function, omega)?;
    for x in grid_nodes(omega, nodes_per_axis) {
        if omega.contains_closure(&x) {
            worst = worst.max((tev.eval(&x)? - target_v.eval(&x)?).abs());
        }
    }

    Ok(InequalityCase {
        check: "decomposition".into(),
        case_id: String::new(),
        lhs: worst,
        rhs: 0.0,
        ratio: 0.0,
        pass: worst == 0.0,
        h: 1.0 / nodes_per_axis as f64,
        ratio_half_h: None,
        seed: None,
        inputs: format!("u={u:?}; v={target_v:?}"),
    })
}

// ---------------------------------------------------------------------------
// Seeded function families

fn rand_unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn rand_symmetric(rng: &mut ChaCha8Rng) -> f64 {
    2.0 * rand_unit(rng) - 1.0
}

fn axis_vars(omega: &Domain) -> (&'static str, &'static str) {
    if omega.bounding_box().0.len() == 1 {
        ("x", "x")
    } else {
        ("x1", "x2")
    }
}

/// Random trigonometric polynomial sum_{j<=5} a_j sin(j pi x) + b_j
/// cos(j pi x), coefficients uniform in [-1,1], scaled by `scale`. In 2-D
/// the sine terms run along the first axis and the cosine terms along the
/// second. Returned as a parsed expression so the case serializes as its
/// own formula.
pub fn trig_polynomial(rng: &mut ChaCha8Rng, scale: f64, omega: &Domain) -> GridFunction {
    let (v1, v2) = axis_vars(omega);
    let mut terms = Vec::with_capacity(10);
    for j in 1..=5 {
        let a = scale * rand_symmetric(rng);
        let b = scale * rand_symmetric(rng);
        terms.push(format!("{a:?}*sin({j}*pi*{v1})"));
        terms.push(format!("{b:?}*cos({j}*pi*{v2})"));
    }
    let src = terms.join("+");
    GridFunction::parse(&src, omega.clone()).expect("generated expression always parses")
}

/// Random one-point exponent c0 + c1 sin(pi x) with values in [1.2, 3.9],
/// bounded away from 1 by construction.
pub fn random_exponent(rng: &mut ChaCha8Rng, omega: &Domain) -> ExponentField {
    let (v1, _) = axis_vars(omega);
    let c0 = 1.5 + 1.5 * rand_unit(rng);
    let amp = 0.5 * (c0 - 1.2) * rand_symmetric(rng);
    let src = format!("{c0:?}+{amp:?}*sin(pi*{v1})");
    ExponentField::parse(crate::exponents::Arity::OnePoint, &src, omega.clone())
        .expect("generated exponent always parses")
}

/// `count` seeded one-point exponents, decorrelated from the function
/// families drawn with the same seed.
pub fn exponent_family(seed: u64, count: usize, omega: &Domain) -> Vec<ExponentField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE1AB_5EED);
    (0..count).map(|_| random_exponent(&mut rng, omega)).collect()
}

/// Seeded (id, u, v, p) triples for the Holder sweep; u and v cycle
/// through FAMILY_SCALES out of phase so magnitudes straddle 1.
pub fn holder_triples(
    seed: u64,
    count: usize,
    omega: &Domain,
) -> Vec<(String, GridFunction, GridFunction, ExponentField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let u = trig_polynomial(&mut rng, FAMILY_SCALES[i % FAMILY_SCALES.len()], omega);
            let v = trig_polynomial(&mut rng, FAMILY_SCALES[(i + 1) % FAMILY_SCALES.len()], omega);
            let p = random_exponent(&mut rng, omega);
            (format!("seed{seed}-case{i}"), u, v, p)
        })
        .collect()
}

/// Scales cycled through a family so cases land on both sides of the
/// ||u|| = 1 branch point.
pub const FAMILY_SCALES: [f64; 3] = [0.07, 1.0, 9.0];

/// `count` seeded cases (id, function); case i uses scale
/// FAMILY_SCALES[i % 3].
pub fn trig_family(seed: u64, count: usize, omega: &Domain) -> Vec<(String, GridFunction)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let scale = FAMILY_SCALES[i % FAMILY_SCALES.len()];
            let u = trig_polynomial(&mut rng, scale, omega);
            (format!("seed{seed}-case{i}-scale{scale}"), u)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Constant estimation

/// Fold a family of computed cases into the empirical constant: the sup of
/// ratios, flagging any case whose ratio moves more than 10% under
/// refinement.
pub fn estimate_constant(check: &str, family: &str, cases: &[InequalityCase]) -> ConstantEstimate {
    let ratios: Vec<f64> = cases.iter().map(|c| c.ratio).collect();
    let sup_ratio = ratios.iter().fold(0.0f64, |m, r| if *r > m { *r } else { m });
    let mut unstable = Vec::new();
    for c in cases {
        if let Some(rh) = c.ratio_half_h {
            if !drift_ok(c.ratio, rh) {
                unstable.push(c.case_id.clone());
            }
        }
        if !c.ratio.is_finite() {
            unstable.push(c.case_id.clone());
        }
    }
    ConstantEstimate {
        check: check.into(),
        family: family.into(),
        sup_ratio,
        ratios,
        refinement_stable: unstable.is_empty(),
        unstable_cases: unstable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::Arity;
    use crate::geometry::{bump, chart_atlas, cover_boundary, partition_of_unity};
    use crate::norms::QuadRule;

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn quad(cells: usize, depth: usize) -> QuadratureSpec {
        QuadratureSpec {
            cells_per_axis: cells,
            diagonal_refine_depth: depth,
            rule: QuadRule::Midpoint,
            target_rel_tol: 1e-3,
        }
    }

    fn const_field(arity: Arity, v: f64, omega: &Domain) -> ExponentField {
        ExponentField::constant(arity, v, omega.clone()).unwrap()
    }

    #[test]
    fn holder_trivial_case_is_exact() {
        let omega = unit();
        let one = GridFunction::constant(1.0, omega.clone());
        let p = const_field(Arity::OnePoint, 2.0, &omega);
        let c = check_holder(&one, &one, &p, &omega, &quad(64, 2)).unwrap();
        assert_eq!(c.lhs, 1.0);
        assert_eq!(c.rhs, 2.0);
        assert_eq!(c.ratio, 0.5);
        assert!(c.pass);
    }

    #[test]
    fn holder_smooth_case_passes() {
        let omega = unit();
        let u = GridFunction::parse("sin(3*x)", omega.clone()).unwrap();
        let v = GridFunction::parse("x^2", omega.clone()).unwrap();
        let p = ExponentField::parse(Arity::OnePoint, "2.5+0.3*sin(x)", omega.clone()).unwrap();
        let c = check_holder(&u, &v, &p, &omega, &quad(128, 2)).unwrap();
        assert!(c.pass, "lhs {} rhs {}", c.lhs, c.rhs);
        assert!(c.ratio < 1.0);
    }

    #[test]
    fn holder_seeded_family_never_violates() {
        let omega = unit();
        let p = ExponentField::parse(Arity::OnePoint, "2+0.5*cos(pi*x)", omega.clone()).unwrap();
        let us = trig_family(11, 10, &omega);
        let vs = trig_family(12, 10, &omega);
        let mut cases = Vec::new();
        for ((idu, u), (_, v)) in us.iter().zip(&vs) {
            let mut c = check_holder(u, v, &p, &omega, &quad(64, 2)).unwrap();
            c.case_id = idu.clone();
            c.seed = Some(11);
            assert!(c.pass, "case {idu}: lhs {} rhs {}", c.lhs, c.rhs);
            cases.push(c);
        }
        let est = estimate_constant("holder", "trig pairs, seeds 11/12", &cases);
        assert!(est.sup_ratio < 2.0);
        assert_eq!(est.ratios.len(), 10);
        assert!((est.sup_ratio - est.ratios.iter().cloned().fold(0.0, f64::max)).abs() == 0.0);
    }

    #[test]
    fn integral_estimate_zero_and_closed_form() {
        let omega = unit();
        let p = const_field(Arity::TwoPoint, 2.0, &omega);
        let q = const_field(Arity::OnePoint, 2.0, &omega);
        let params = SpaceParams::new(0.25, 1, p, q).unwrap();

        let zero = GridFunction::constant(0.0, omega.clone());
        let c = check_integral_estimate(&zero, &params, &omega, &quad(32, 2)).unwrap();
        assert_eq!(c.ratio, 0.0);
        assert!(c.pass);

        // u = x, p = 2, s = 1/4: lhs = 8/15 and ||u||_W = sqrt(1/3) +
        // sqrt(8/15), so the ratio has a closed form.
        let u = GridFunction::parse("x", omega.clone()).unwrap();
        let c = check_integral_estimate(&u, &params, &omega, &quad(128, 4)).unwrap();
        let norm = (1.0f64 / 3.0).sqrt() + (8.0f64 / 15.0).sqrt();
        let expect = (8.0 / 15.0) / (2.0 * norm * norm);
        assert!((c.ratio - expect).abs() < 1e-3, "ratio {} expect {expect}", c.ratio);
        assert!(c.pass);
    }

    #[test]
    fn alpha_beta_zero_input_passes_all_kinds() {
        let omega = unit();
        let p = const_field(Arity::TwoPoint, 2.0, &omega);
        let q = const_field(Arity::OnePoint, 2.0, &omega);
        let params = SpaceParams::new(0.3, 1, p, q).unwrap();
        let zero = GridFunction::constant(0.0, omega.clone());
        let spec = quad(32, 2);

        let k = Region::Box { lo: vec![0.25], hi: vec![0.75] };
        let c = check_alpha_beta_bound(
            OperatorSpec::ZeroExtend { support: &k, margin_factor: 2.0 },
            &zero,
            &params,
            &omega,
            &spec,
        )
        .unwrap();
        assert_eq!(c.ratio, 0.0);
        assert!(c.pass);

        let psi = bump(&[0.5], 0.2, 0.4).unwrap();
        let c = check_alpha_beta_bound(
            OperatorSpec::Truncate { psi: &psi },
            &zero,
            &params,
            &omega,
            &spec,
        )
        .unwrap();
        assert_eq!(c.ratio, 0.0);
        assert!(c.pass);

        let atlas = chart_atlas(&omega, 2).unwrap();
        let cover = cover_boundary(&omega, 2).unwrap();
        let pou = partition_of_unity(&cover, &omega.boundary().unwrap()).unwrap();
        let c = check_alpha_beta_bound(
            OperatorSpec::Extend { atlas: &atlas, pou: &pou, margin_factor: 2.0 },
            &zero,
            &params,
            &omega,
            &spec,
        )
        .unwrap();
        assert_eq!(c.ratio, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn truncate_by_one_reduces_to_power_of_norm() {
        let omega = unit();
        let p = const_field(Arity::TwoPoint, 2.0, &omega);
        let q = const_field(Arity::OnePoint, 2.0, &omega);
        let params = SpaceParams::new(0.3, 1, p, q).unwrap();
        // psi = 1 on the support of u, so ||psi u|| = ||u|| bitwise.
        let inner_bump = bump(&[0.5], 0.05, 0.15).unwrap();
        let u = {
            let b = inner_bump;
            GridFunction::analytic(move |x| Ok(b.eval(x)), omega.clone())
        };
        let psi = bump(&[0.5], 0.2, 0.4).unwrap();
        let spec = quad(64, 3);
        let c = check_alpha_beta_bound(
            OperatorSpec::Truncate { psi: &psi },
            &u,
            &params,
            &omega,
            &spec,
        )
        .unwrap();
        let norm_in = sobolev_norm(&u, &params, &omega, &spec).unwrap();
        let branch = if norm_in >= 1.0 { 2.0 } else { 1.0 };
        assert!((c.ratio - norm_in.powf(1.0 - branch)).abs() < 1e-12);
        assert!(c.pass);
    }

    #[test]
    fn extend_on_half_box_is_refinement_stable() {
        let omega = Domain::half_box(1).unwrap();
        let p = const_field(Arity::TwoPoint, 2.0, &omega);
        let q = const_field(Arity::OnePoint, 2.0, &omega);
        let params = SpaceParams::new(0.3, 1, p, q).unwrap();
        let u = GridFunction::parse("x", omega.clone()).unwrap();
        let atlas = chart_atlas(&omega, 2).unwrap();
        let cover = cover_boundary(&omega, 2).unwrap();
        let pou = partition_of_unity(&cover, &omega.boundary().unwrap()).unwrap();
        let c = check_alpha_beta_bound(
            OperatorSpec::Extend { atlas: &atlas, pou: &pou, margin_factor: 2.0 },
            &u,
            &params,
            &omega,
            &quad(48, 2),
        )
        .unwrap();
        assert!(c.pass, "ratio {} vs half-h {:?}", c.ratio, c.ratio_half_h);
        assert!(c.ratio.is_finite() && c.ratio > 0.0);
    }

    #[test]
    fn embedding_refuses_inadmissible_and_is_one_for_constants() {
        let omega = unit();
        // s p = 1 = n: the critical exponent degenerates; hypotheses fail.
        let p_bad = const_field(Arity::TwoPoint, 2.0, &omega);
        let q_bad = const_field(Arity::OnePoint, 2.5, &omega);
        let bad = SpaceParams::new(0.5, 1, p_bad, q_bad).unwrap();
        let r = const_field(Arity::OnePoint, 3.0, &omega);
        let u = GridFunction::constant(0.7, omega.clone());
        assert!(matches!(
            check_embedding(&u, &bad, &r, &omega, &quad(32, 2)),
            Err(Error::HypothesisNotMet { .. }) | Err(Error::CriticalityViolation { .. })
        ));

        // Admissible: s = 0.2, p = 1.2, q = 1.25, r = 1.3 on (0,1);
        // p* = 1.2/0.76 = 1.578... > p+ q = 1.5 > r.
        let p = const_field(Arity::TwoPoint, 1.2, &omega);
        let q = const_field(Arity::OnePoint, 1.25, &omega);
        let params = SpaceParams::new(0.2, 1, p, q).unwrap();
        let r = const_field(Arity::OnePoint, 1.3, &omega);
        let c = check_embedding(&u, &params, &r, &omega, &quad(32, 2)).unwrap();
        // |omega| = 1 makes both Luxemburg norms |c| and the seminorm 0.
        assert!((c.ratio - 1.0).abs() < 1e-12, "ratio {}", c.ratio);
        assert!(c.pass);

        let zero = GridFunction::constant(0.0, omega.clone());
        let c = check_embedding(&zero, &params, &r, &omega, &quad(32, 2)).unwrap();
        assert_eq!(c.ratio, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn decomposition_identities_are_exact() {
        let omega = unit();
        let atlas = chart_atlas(&omega, 2).unwrap();
        let cover = cover_boundary(&omega, 2).unwrap();
        let pou = partition_of_unity(&cover, &omega.boundary().unwrap()).unwrap();
        let v = GridFunction::parse("sin(2*x)", omega.clone()).unwrap();
        let ev = extend(&v, &omega, &atlas, &pou, 2.0).unwrap();
        let box_domain = ev.enclosing_box().clone();
        let far = {
            let b = bump(&[2.5], 0.1, 0.2).unwrap();
            GridFunction::analytic(move |x| Ok(b.eval(x)), box_domain.clone())
        };
        let u = ev.function.linear_combination(1.0, &far, 1.0);
        let c = check_decomposition(&u, &v, &omega, &atlas, &pou, 96).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.pass);

        // The Hilbert-case scenario (p = 2) runs the same identities.
        let mut c2 = check_decomposition(&u, &v, &omega, &atlas, &pou, 64).unwrap();
        c2.case_id = "hilbert-p2".into();
        assert!(c2.pass);
    }

    #[test]
    fn estimate_constant_folds_correctly() {
        let zero_case = InequalityCase {
            check: "x".into(),
            case_id: "only".into(),
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            pass: true,
            h: 0.1,
            ratio_half_h: Some(0.0),
            seed: None,
            inputs: String::new(),
        };
        let est = estimate_constant("x", "singleton zero", &[zero_case.clone()]);
        assert_eq!(est.sup_ratio, 0.0);
        assert!(est.refinement_stable);

        let drifting = InequalityCase {
            ratio: 1.0,
            ratio_half_h: Some(1.5),
            case_id: "drifts".into(),
            ..zero_case
        };
        let est = estimate_constant("x", "drift", &[drifting]);
        assert!(!est.refinement_stable);
        assert_eq!(est.unstable_cases, vec!["drifts".to_string()]);
    }

    #[test]
    fn holder_triples_are_deterministic_with_exponents_above_one() {
        let omega = unit();
        let a = holder_triples(7, 8, &omega);
        let b = holder_triples(7, 8, &omega);
        assert_eq!(a.len(), 8);
        for ((ida, ua, va, pa), (idb, ub, vb, pb)) in a.iter().zip(&b) {
            assert_eq!(ida, idb);
            for i in 0..=8 {
                let x = [i as f64 / 8.0];
                assert_eq!(ua.eval(&x).unwrap(), ub.eval(&x).unwrap());
                assert_eq!(va.eval(&x).unwrap(), vb.eval(&x).unwrap());
                let pv = pa.eval(&x, None).unwrap();
                assert_eq!(pv, pb.eval(&x, None).unwrap());
                assert!(pv > 1.1 && pv < 3.9, "exponent {pv} out of range");
            }
        }
        let exps = exponent_family(7, 4, &omega);
        assert_eq!(exps.len(), 4);
        // The exponent family is decorrelated from the triple stream.
        assert_ne!(
            exps[0].eval(&[0.3], None).unwrap(),
            a[0].3.eval(&[0.3], None).unwrap()
        );
    }

    #[test]
    fn family_generator_is_deterministic_and_scales_cycle() {
        let omega = unit();
        let a = trig_family(42, 6, &omega);
        let b = trig_family(42, 6, &omega);
        assert_eq!(a.len(), 6);
        for ((ida, ua), (idb, ub)) in a.iter().zip(&b) {
            assert_eq!(ida, idb);
            for i in 0..=16 {
                let x = [i as f64 / 16.0];
                assert_eq!(ua.eval(&x).unwrap(), ub.eval(&x).unwrap());
            }
        }
        assert!(a[0].0.contains("scale0.07"));
        assert!(a[1].0.contains("scale1"));
        assert!(a[2].0.contains("scale9"));
        // Different seeds give different functions.
        let c = trig_family(43, 1, &omega);
        assert_ne!(a[0].1.eval(&[0.3]).unwrap(), c[0].1.eval(&[0.3]).unwrap());
    }
}
