//! The constructive operator calculus: trace, zero extension, even
//! reflection, truncation by cutoffs, chart transfer, the boundary-chart
//! extension operator, and the kernel/image decomposition it induces.
//!
//! Extended functions are lazy pipelines (closures), never resampled grids.
//! Inside the closure of the source domain the extension returns the input
//! evaluation verbatim, so restriction composed with extension is the
//! identity bitwise at every node, not merely within a tolerance.

use crate::error::{Error, Result};
use crate::geometry::{
    reflect_last, Ball, Chart, Cutoff, Domain, PartitionDescription, PartitionOfUnity,
    SupportRegion,
};
use crate::norms::{GridFunction, Region};
use serde::Serialize;

/// Enclosing-box dilation used when no margin is given: each side of the
/// bounding box moves outward by `margin * diameter`.
pub const DEFAULT_MARGIN_FACTOR: f64 = 2.0;

/// Resolution of the sampled compact-support precondition check; also sets
/// the "one grid cell" clearance required between K and the boundary.
const PRECONDITION_GRID: usize = 64;

const VANISH_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Result types

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    InsideOmega,
    Reflected,
    Zeroed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionProvenance {
    /// Which construction produced the result: "zero_extension" or
    /// "boundary_chart_extension".
    pub branch: String,
    pub margin_factor: f64,
    pub partition: Option<PartitionDescription>,
    pub atlas: Option<Vec<Chart>>,
}

/// An extension to an enclosing box, with the construction that made it.
#[derive(Debug, Clone)]
pub struct ExtensionResult {
    /// Defined on the enclosing box; restriction to omega reproduces the
    /// input bitwise.
    pub function: GridFunction,
    pub provenance: ExtensionProvenance,
    omega: Domain,
    chart_balls: Vec<Ball>,
}

impl ExtensionResult {
    pub fn enclosing_box(&self) -> &Domain {
        self.function.domain()
    }

    /// Which branch of the construction is responsible for the value at x.
    pub fn region_at(&self, x: &[f64]) -> RegionLabel {
        if self.omega.contains_closure(x) {
            RegionLabel::InsideOmega
        } else if self.chart_balls.iter().any(|b| b.contains(x)) {
            RegionLabel::Reflected
        } else {
            RegionLabel::Zeroed
        }
    }
}

/// u split against the extension: image_part = E(Tu), kernel_part the rest.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub kernel_part: GridFunction,
    pub image_part: GridFunction,
}

// ---------------------------------------------------------------------------
// Helpers

fn dilated_box(omega: &Domain, margin_factor: f64) -> Result<Domain> {
    if !(margin_factor >= 0.0) || !margin_factor.is_finite() {
        return Err(Error::Mismatch {
            detail: format!("margin factor must be finite and >= 0, got {margin_factor}"),
        });
    }
    let (lo, hi) = omega.bounding_box();
    let pad = margin_factor * omega.diameter();
    let lo: Vec<f64> = lo.iter().map(|a| a - pad).collect();
    let hi: Vec<f64> = hi.iter().map(|b| b + pad).collect();
    if omega.dim() == 1 {
        Domain::interval(lo[0], hi[0])
    } else {
        Domain::rect(lo, hi)
    }
}

/// Bounding-box containment of omega in u's domain, with a relative slack.
fn check_contains(u: &GridFunction, omega: &Domain) -> Result<()> {
    let (ulo, uhi) = u.domain().bounding_box();
    let (olo, ohi) = omega.bounding_box();
    for a in 0..omega.dim() {
        let scale = 1.0 + uhi[a].abs().max(ulo[a].abs());
        let slack = 1e-12 * scale;
        if olo[a] < ulo[a] - slack || ohi[a] > uhi[a] + slack {
            return Err(Error::OutsideDomain {
                point: olo.clone(),
                detail: format!(
                    "restriction target [{}, {}] exceeds the function's domain on axis {a}",
                    olo[a], ohi[a]
                ),
            });
        }
    }
    Ok(())
}

fn region_distance(region: &Region, x: &[f64]) -> f64 {
    match region {
        Region::Box { lo, hi } => {
            let mut d2 = 0.0;
            for a in 0..x.len() {
                let gap = (lo[a] - x[a]).max(x[a] - hi[a]).max(0.0);
                d2 += gap * gap;
            }
            d2.sqrt()
        }
        Region::Ball(b) => {
            let mut d2 = 0.0;
            for a in 0..x.len() {
                let gap = x[a] - b.center[a];
                d2 += gap * gap;
            }
            (d2.sqrt() - b.radius).max(0.0)
        }
    }
}

// ---------------------------------------------------------------------------
// Trace

/// Restriction to omega. Values agree with u bitwise; composition with the
/// extension operator gives the identity exactly.
pub fn trace(u: &GridFunction, omega: &Domain) -> Result<GridFunction> {
    check_contains(u, omega)?;
    let inner = u.clone();
    Ok(GridFunction::analytic(move |x| inner.eval(x), omega.clone()))
}

// ---------------------------------------------------------------------------
// Zero extension

/// Extend u (vanishing outside the compact set K, dist(K, boundary) at
/// least one check-grid cell) by zero to a dilated enclosing box.
pub fn zero_extend(
    u: &GridFunction,
    omega: &Domain,
    support: &Region,
    margin_factor: f64,
) -> Result<ExtensionResult> {
    check_contains(u, omega)?;
    let n = omega.dim();
    let (lo, hi) = omega.bounding_box();
    let m = PRECONDITION_GRID;

    // Vanishing outside K, sampled on the check grid.
    let mut x = vec![0.0f64; n];
    for flat in 0..m.pow(n as u32) {
        let mut rest = flat;
        for a in (0..n).rev() {
            let i = rest % m;
            rest /= m;
            x[a] = lo[a] + (i as f64 + 0.5) * (hi[a] - lo[a]) / m as f64;
        }
        if omega.contains(&x) && !support.contains(&x) {
            let v = u.eval(&x)?;
            if v.abs() > VANISH_TOL {
                return Err(Error::NotCompactlySupported { value: v, point: x });
            }
        }
    }

    // Clearance between K and the boundary.
    let gamma = omega.boundary()?;
    let cell = (0..n)
        .map(|a| (hi[a] - lo[a]) / m as f64)
        .fold(f64::INFINITY, f64::min);
    let mut worst = f64::INFINITY;
    let mut worst_point = vec![];
    for g in gamma.samples(4096) {
        let d = region_distance(support, &g);
        if d < worst {
            worst = d;
            worst_point = g;
        }
    }
    if worst < cell {
        return Err(Error::Mismatch {
            detail: format!(
                "support region comes within {worst} of the boundary near {worst_point:?}; \
                 the zero extension needs clearance of at least one grid cell ({cell})"
            ),
        });
    }

    let enclosing = dilated_box(omega, margin_factor)?;
    let inner = u.clone();
    let omega_c = omega.clone();
    let function = GridFunction::analytic(
        move |x| if omega_c.contains(x) { inner.eval(x) } else { Ok(0.0) },
        enclosing,
    )
    .with_support(support.clone());
    Ok(ExtensionResult {
        function,
        provenance: ExtensionProvenance {
            branch: "zero_extension".into(),
            margin_factor,
            partition: None,
            atlas: None,
        },
        omega: omega.clone(),
        chart_balls: vec![],
    })
}

// ---------------------------------------------------------------------------
// Reflection

/// Even reflection across the symmetry plane of a symmetric pair: the input
/// lives on the upper half, the result on the whole domain.
pub fn reflect_extend(u: &GridFunction, omega: &Domain) -> Result<GridFunction> {
    let upper = omega.upper_half()?;
    check_contains(u, &upper)?;
    let n = omega.dim();
    let inner = u.clone();
    Ok(GridFunction::analytic(
        move |x| {
            if x[n - 1] >= 0.0 {
                inner.eval(x)
            } else {
                inner.eval(&reflect_last(x))
            }
        },
        omega.clone(),
    ))
}

// ---------------------------------------------------------------------------
// Truncation

/// Pointwise product psi * u on u's domain.
pub fn truncate(psi: &Cutoff, u: &GridFunction) -> Result<GridFunction> {
    let psi = psi.clone();
    let inner = u.clone();
    let support = match &psi.support {
        SupportRegion::Ball(b) => Some(Region::Ball(b.clone())),
        SupportRegion::AwayFrom { .. } => u.support().cloned(),
    };
    let mut out = GridFunction::analytic(
        move |x| Ok(psi.eval(x) * inner.eval(x)?),
        u.domain().clone(),
    );
    if let Some(region) = support {
        out = out.with_support(region);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Chart transfer

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferDirection {
    /// v(y) = u(H(y)): physical to chart coordinates.
    Pullback,
    /// w(x) = v(H^-1(x)): chart to physical coordinates.
    Pushforward,
}

/// Compose u with the chart map or its inverse, lazily. Pullbacks live on
/// the standard cell (-1,1)^n, pushforwards on the chart ball.
pub fn chart_transfer(
    u: &GridFunction,
    chart: &Chart,
    direction: TransferDirection,
) -> Result<GridFunction> {
    let n = chart.map.dim();
    if u.domain().dim() != n {
        return Err(Error::Mismatch {
            detail: format!(
                "chart is {n}-D but the function domain is {}-D",
                u.domain().dim()
            ),
        });
    }
    let map = chart.map.clone();
    let inner = u.clone();
    match direction {
        TransferDirection::Pullback => {
            let cell = if n == 1 {
                Domain::interval(-1.0, 1.0)?
            } else {
                Domain::rect(vec![-1.0, -1.0], vec![1.0, 1.0])?
            };
            Ok(GridFunction::analytic(move |y| inner.eval(&map.forward(y)), cell))
        }
        TransferDirection::Pushforward => {
            let ball = Domain::ball(chart.ball.center.clone(), chart.ball.radius)?;
            Ok(GridFunction::analytic(move |x| inner.eval(&map.inverse(x)), ball))
        }
    }
}

// ---------------------------------------------------------------------------
// The extension operator

fn check_subordinate(atlas: &[Chart], pou: &PartitionOfUnity) -> Result<()> {
    if atlas.is_empty() {
        return Err(Error::Mismatch { detail: "extension needs a nonempty atlas".into() });
    }
    if pou.len() != atlas.len() + 1 {
        return Err(Error::Mismatch {
            detail: format!(
                "partition has {} members but the atlas needs {} (one per chart plus the \
                 interior member)",
                pou.len(),
                atlas.len() + 1
            ),
        });
    }
    for (i, chart) in atlas.iter().enumerate() {
        let b = &pou.cover[i];
        let center_off = chart
            .ball
            .center
            .iter()
            .zip(&b.center)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        if center_off > 1e-12 || (chart.ball.radius - b.radius).abs() > 1e-12 {
            return Err(Error::Mismatch {
                detail: format!(
                    "partition ball {i} ({:?}) is not the chart ball ({:?}); the partition \
                     must be subordinate to the atlas",
                    b, chart.ball
                ),
            });
        }
    }
    Ok(())
}

fn extend_into(
    u: &GridFunction,
    omega: &Domain,
    atlas: &[Chart],
    pou: &PartitionOfUnity,
    enclosing: Domain,
    margin_factor: f64,
) -> Result<ExtensionResult> {
    check_contains(u, omega)?;
    check_subordinate(atlas, pou)?;
    let n = omega.dim();
    let provenance = ExtensionProvenance {
        branch: "boundary_chart_extension".into(),
        margin_factor,
        partition: Some(pou.describe()),
        atlas: Some(atlas.to_vec()),
    };
    let chart_balls: Vec<Ball> = atlas.iter().map(|c| c.ball.clone()).collect();

    let inner = u.clone();
    let omega_c = omega.clone();
    let charts: Vec<(Chart, Cutoff)> = atlas
        .iter()
        .cloned()
        .zip(pou.members[1..].iter().cloned())
        .collect();
    // Eu = psi_0 u-tilde + sum_i psi_i w_i-tilde. On the closure of omega
    // every stage collapses to the identity, so u is returned verbatim; off
    // omega the interior term is zero and each chart contributes its
    // reflected pullback, weighted by its partition member.
    let function = GridFunction::analytic(
        move |x| {
            if omega_c.contains_closure(x) {
                return inner.eval(x);
            }
            let mut sum = 0.0;
            for (chart, psi) in &charts {
                let w = psi.eval(x);
                if w == 0.0 {
                    continue;
                }
                let mut y = chart.map.inverse(x);
                y[n - 1] = y[n - 1].abs();
                sum += w * inner.eval(&chart.map.forward(&y))?;
            }
            Ok(sum)
        },
        enclosing,
    );
    Ok(ExtensionResult {
        function,
        provenance,
        omega: omega.clone(),
        chart_balls,
    })
}

/// The boundary-chart extension operator: per chart, pull u back to the
/// upper standard cell, reflect evenly across its flat face, push forward,
/// weight by the subordinate partition member, and extend by zero; the
/// interior partition member times u is extended by zero directly.
pub fn extend(
    u: &GridFunction,
    omega: &Domain,
    atlas: &[Chart],
    pou: &PartitionOfUnity,
    margin_factor: f64,
) -> Result<ExtensionResult> {
    let enclosing = dilated_box(omega, margin_factor)?;
    extend_into(u, omega, atlas, pou, enclosing, margin_factor)
}

// ---------------------------------------------------------------------------
// Kernel/image decomposition

/// Split u on its own box into E(Tu) plus a remainder with zero trace.
pub fn kernel_decompose(
    u: &GridFunction,
    omega: &Domain,
    atlas: &[Chart],
    pou: &PartitionOfUnity,
) -> Result<Decomposition> {
    let tu = trace(u, omega)?;
    let ext = extend_into(&tu, omega, atlas, pou, u.domain().clone(), 0.0)?;
    let image_part = ext.function;
    let kernel_part = u.linear_combination(1.0, &image_part, -1.0);
    Ok(Decomposition { kernel_part, image_part })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{Arity, ExponentField, SpaceParams};
    use crate::geometry::{bump, cover_boundary, chart_atlas, partition_of_unity};
    use crate::norms::{
        luxemburg_norm, modular_lebesgue, sobolev_norm, QuadRule, QuadratureSpec,
    };

    fn quad(cells: usize, depth: usize, rule: QuadRule) -> QuadratureSpec {
        QuadratureSpec {
            cells_per_axis: cells,
            diagonal_refine_depth: depth,
            rule,
            target_rel_tol: 1e-3,
        }
    }

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn q2(domain: &Domain) -> ExponentField {
        ExponentField::constant(Arity::OnePoint, 2.0, domain.clone()).unwrap()
    }

    fn nodes(domain: &Domain, count: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = domain.bounding_box();
        assert_eq!(lo.len(), 1);
        (0..count)
            .map(|i| vec![lo[0] + (hi[0] - lo[0]) * i as f64 / (count - 1) as f64])
            .collect()
    }

    /// Smooth bump as a grid function; exactly zero outside (c-r, c+r).
    fn bump_fn(domain: &Domain, center: f64, r_inner: f64, r_outer: f64) -> GridFunction {
        let b = bump(&[center], r_inner, r_outer).unwrap();
        GridFunction::analytic(move |x| Ok(b.eval(x)), domain.clone())
    }

    #[test]
    fn trace_restricts_bitwise_and_checks_containment() {
        let big = Domain::interval(-2.0, 3.0).unwrap();
        let u = GridFunction::parse("sin(3*x)+x^2", big.clone()).unwrap();
        let omega = unit();
        let tu = trace(&u, &omega).unwrap();
        for x in nodes(&omega, 33) {
            assert_eq!(tu.eval(&x).unwrap(), u.eval(&x).unwrap());
        }
        // Outside omega the restriction refuses to evaluate.
        assert!(tu.eval(&[1.5]).is_err());
        // A target that exceeds the source domain is rejected eagerly.
        let small = GridFunction::parse("x", omega.clone()).unwrap();
        assert!(trace(&small, &big).is_err());
    }

    #[test]
    fn trace_is_linear_and_kills_zero() {
        let big = Domain::interval(-1.0, 2.0).unwrap();
        let u = GridFunction::parse("exp(x)", big.clone()).unwrap();
        let v = GridFunction::parse("cos(2*x)", big.clone()).unwrap();
        let omega = unit();
        let combo = u.linear_combination(2.0, &v, 1.0);
        let t_combo = trace(&combo, &omega).unwrap();
        let tu = trace(&u, &omega).unwrap();
        let tv = trace(&v, &omega).unwrap();
        let rhs = tu.linear_combination(2.0, &tv, 1.0);
        for x in nodes(&omega, 21) {
            assert_eq!(t_combo.eval(&x).unwrap(), rhs.eval(&x).unwrap());
        }
        let zero = GridFunction::constant(0.0, big.clone());
        let tz = trace(&zero, &omega).unwrap();
        for x in nodes(&omega, 21) {
            assert_eq!(tz.eval(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_extend_values_and_preconditions() {
        let omega = unit();
        let u = bump_fn(&omega, 0.5, 0.1, 0.24);
        let k = Region::Box { lo: vec![0.25], hi: vec![0.75] };
        let ext = zero_extend(&u, &omega, &k, 2.0).unwrap();
        let (lo, hi) = ext.enclosing_box().bounding_box();
        assert_eq!((lo[0], hi[0]), (-2.0, 3.0));
        assert_eq!(ext.function.eval(&[-1.0]).unwrap(), 0.0);
        assert_eq!(ext.function.eval(&[2.9]).unwrap(), 0.0);
        for x in nodes(&omega, 17) {
            if omega.contains(&x) {
                assert_eq!(ext.function.eval(&x).unwrap(), u.eval(&x).unwrap());
            }
        }
        assert_eq!(ext.region_at(&[0.5]), RegionLabel::InsideOmega);
        assert_eq!(ext.region_at(&[2.0]), RegionLabel::Zeroed);

        // Non-vanishing tail: rejected with the offending sample.
        let linear = GridFunction::parse("x", omega.clone()).unwrap();
        match zero_extend(&linear, &omega, &k, 2.0) {
            Err(Error::NotCompactlySupported { value, point }) => {
                assert!(value.abs() > 1e-12);
                assert_eq!(point.len(), 1);
            }
            other => panic!("expected a compact-support failure, got {other:?}"),
        }

        // Support region flush against the boundary: rejected.
        let tight = Region::Box { lo: vec![0.001], hi: vec![0.999] };
        assert!(zero_extend(&u, &omega, &tight, 2.0).is_err());
    }

    #[test]
    fn zero_extend_preserves_lebesgue_norm_on_aligned_grids() {
        // Box (-2,3) at 5m cells puts bitwise-identical samples inside
        // (0,1) at m cells, so the records and hence the norms coincide.
        let omega = unit();
        let u = bump_fn(&omega, 0.5, 0.1, 0.2);
        let k = Region::Ball(Ball::new(vec![0.5], 0.22));
        let ext = zero_extend(&u, &omega, &k, 2.0).unwrap();
        let q_in = q2(&omega);
        let q_out = q2(ext.enclosing_box());
        let inner = luxemburg_norm(&u, &q_in, &omega, &quad(64, 2, QuadRule::Midpoint)).unwrap();
        let outer = luxemburg_norm(
            &ext.function,
            &q_out,
            ext.enclosing_box(),
            &quad(320, 2, QuadRule::Midpoint),
        )
        .unwrap();
        assert_eq!(inner.value, outer.value);
    }

    #[test]
    fn reflect_extend_identities() {
        let omega = Domain::symmetric_pair(vec![-1.0], vec![1.0]).unwrap();
        let upper = omega.upper_half().unwrap();
        let u = GridFunction::parse("x", upper.clone()).unwrap();
        let tilde = reflect_extend(&u, &omega).unwrap();
        for i in 1..40 {
            let t = i as f64 / 41.0;
            assert_eq!(tilde.eval(&[-t]).unwrap(), tilde.eval(&[t]).unwrap());
            assert_eq!(tilde.eval(&[t]).unwrap(), t);
        }

        // ||abs(x)||_{L^2(-1,1)} = sqrt(2/3); Gauss is exact on x^2.
        let r = luxemburg_norm(&tilde, &q2(&omega), &omega, &quad(64, 2, QuadRule::Gauss3))
            .unwrap();
        assert!((r.value - (2.0f64 / 3.0).sqrt()).abs() < 1e-13, "value {}", r.value);

        // Non-symmetric domains are rejected.
        assert!(reflect_extend(&u, &unit()).is_err());
    }

    #[test]
    fn reflect_extend_modular_doubling() {
        let omega = Domain::symmetric_pair(vec![-1.0], vec![1.0]).unwrap();
        let upper = omega.upper_half().unwrap();
        let u = GridFunction::parse("exp(x)*sin(4*x)", upper.clone()).unwrap();
        let tilde = reflect_extend(&u, &omega).unwrap();
        // q even in the reflected axis; x^2 evaluates bitwise evenly.
        let q_full =
            ExponentField::parse(Arity::OnePoint, "2+0.5*x^2", omega.clone()).unwrap();
        let q_half =
            ExponentField::parse(Arity::OnePoint, "2+0.5*x^2", upper.clone()).unwrap();
        let full =
            modular_lebesgue(&tilde, &q_full, &omega, &quad(256, 2, QuadRule::Midpoint)).unwrap();
        let half =
            modular_lebesgue(&u, &q_half, &upper, &quad(128, 2, QuadRule::Midpoint)).unwrap();
        assert!((full - 2.0 * half).abs() < 1e-10, "full {full} vs doubled half {}", 2.0 * half);
    }

    #[test]
    fn truncate_identity_and_contraction() {
        let omega = unit();
        let u = bump_fn(&omega, 0.5, 0.05, 0.1);
        // psi = 1 on a ball containing supp u.
        let psi = bump(&[0.5], 0.2, 0.4).unwrap();
        let tu = truncate(&psi, &u).unwrap();
        for x in nodes(&omega, 33) {
            assert_eq!(tu.eval(&x).unwrap(), u.eval(&x).unwrap());
        }

        // |psi| <= 1 never increases the Luxemburg norm.
        let v = GridFunction::parse("1+x", omega.clone()).unwrap();
        let tv = truncate(&psi, &v).unwrap();
        let q = ExponentField::parse(Arity::OnePoint, "2+x", omega.clone()).unwrap();
        let spec = quad(128, 2, QuadRule::Midpoint);
        let full = luxemburg_norm(&v, &q, &omega, &spec).unwrap();
        let cut = luxemburg_norm(&tv, &q, &omega, &spec).unwrap();
        assert!(cut.value <= full.value + 1e-12);
        assert!(matches!(tu.support(), Some(Region::Ball(_))));
    }

    #[test]
    fn chart_transfer_roundtrips() {
        // Interval chart at the left endpoint of (0,1).
        let omega = unit();
        let atlas = chart_atlas(&omega, 2).unwrap();
        let u = GridFunction::parse("sin(2*x)+1", omega.clone()).unwrap();
        let chart = &atlas[0];
        let pulled = chart_transfer(&u, chart, TransferDirection::Pullback).unwrap();
        let back = chart_transfer(&pulled, chart, TransferDirection::Pushforward).unwrap();
        for i in 0..20 {
            let x = [0.02 + 0.2 * i as f64 / 19.0];
            assert!((back.eval(&x).unwrap() - u.eval(&x).unwrap()).abs() < 1e-10);
        }

        // Identity chart is the identity transfer.
        let half = Domain::half_box(1).unwrap();
        let id_atlas = chart_atlas(&half, 1).unwrap();
        let v = GridFunction::parse("x^3", half.clone()).unwrap();
        let w = chart_transfer(&v, &id_atlas[0], TransferDirection::Pullback).unwrap();
        assert_eq!(w.eval(&[0.2]).unwrap(), v.eval(&[0.2]).unwrap());

        // Disc chart: a constant pulls back to the same constant.
        let disc = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let disc_atlas = chart_atlas(&disc, 6).unwrap();
        let c = GridFunction::constant(2.25, disc.clone());
        let pc = chart_transfer(&c, &disc_atlas[0], TransferDirection::Pullback).unwrap();
        assert_eq!(pc.eval(&[0.3, 0.5]).unwrap(), 2.25);
        // And the chart round-trip reproduces values on the chart ball.
        let f = GridFunction::parse("x1+2*x2", disc.clone()).unwrap();
        let pf = chart_transfer(&f, &disc_atlas[0], TransferDirection::Pullback).unwrap();
        let bf = chart_transfer(&pf, &disc_atlas[0], TransferDirection::Pushforward).unwrap();
        let probe = [0.92, 0.05];
        assert!((bf.eval(&probe).unwrap() - f.eval(&probe).unwrap()).abs() < 1e-10);
    }

    fn interval_setup() -> (Domain, Vec<Chart>, PartitionOfUnity) {
        let omega = unit();
        let atlas = chart_atlas(&omega, 2).unwrap();
        let cover = cover_boundary(&omega, 2).unwrap();
        let gamma = omega.boundary().unwrap();
        let pou = partition_of_unity(&cover, &gamma).unwrap();
        (omega, atlas, pou)
    }

    #[test]
    fn extend_is_the_identity_on_omega_and_compactly_supported() {
        let (omega, atlas, pou) = interval_setup();
        let u = GridFunction::parse("sin(2*x)+1", omega.clone()).unwrap();
        let ext = extend(&u, &omega, &atlas, &pou, 2.0).unwrap();
        for x in nodes(&omega, 65) {
            assert_eq!(ext.function.eval(&x).unwrap(), u.eval(&x).unwrap());
        }
        let tu = trace(&ext.function, &omega).unwrap();
        for x in nodes(&omega, 65) {
            assert_eq!(tu.eval(&x).unwrap(), u.eval(&x).unwrap());
        }
        // Far from omega the extension is exactly zero.
        assert_eq!(ext.function.eval(&[-1.5]).unwrap(), 0.0);
        assert_eq!(ext.function.eval(&[2.5]).unwrap(), 0.0);
        // Just outside omega it interpolates the reflected values.
        let near = ext.function.eval(&[-0.05]).unwrap();
        assert!(near.is_finite() && near != 0.0);
        assert_eq!(ext.region_at(&[0.5]), RegionLabel::InsideOmega);
        assert_eq!(ext.region_at(&[-0.05]), RegionLabel::Reflected);
        assert_eq!(ext.region_at(&[-1.5]), RegionLabel::Zeroed);
        assert_eq!(ext.provenance.branch, "boundary_chart_extension");
        assert!(ext.provenance.partition.is_some());
    }

    #[test]
    fn extend_is_linear_at_samples() {
        let (omega, atlas, pou) = interval_setup();
        let u = GridFunction::parse("exp(x)", omega.clone()).unwrap();
        let v = GridFunction::parse("cos(3*x)", omega.clone()).unwrap();
        let combo = u.linear_combination(2.0, &v, -0.75);
        let e_combo = extend(&combo, &omega, &atlas, &pou, 2.0).unwrap();
        let eu = extend(&u, &omega, &atlas, &pou, 2.0).unwrap();
        let ev = extend(&v, &omega, &atlas, &pou, 2.0).unwrap();
        let (lo, hi) = e_combo.enclosing_box().bounding_box();
        for i in 0..=200 {
            let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / 200.0];
            let lhs = e_combo.function.eval(&x).unwrap();
            let rhs = 2.0 * eu.function.eval(&x).unwrap() - 0.75 * ev.function.eval(&x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12, "x={} lhs={lhs} rhs={rhs}", x[0]);
        }
    }

    #[test]
    fn extend_rejects_mismatched_partition() {
        let (omega, atlas, _) = interval_setup();
        let other = Domain::interval(0.0, 2.0).unwrap();
        let cover = cover_boundary(&other, 2).unwrap();
        let gamma = other.boundary().unwrap();
        let pou = partition_of_unity(&cover, &gamma).unwrap();
        let u = GridFunction::parse("x", omega.clone()).unwrap();
        assert!(matches!(
            extend(&u, &omega, &atlas, &pou, 2.0),
            Err(Error::Mismatch { .. })
        ));
    }

    #[test]
    fn extension_norm_is_finite_and_stable() {
        let (omega, atlas, pou) = interval_setup();
        let u = GridFunction::parse("x", omega.clone()).unwrap();
        let ext = extend(&u, &omega, &atlas, &pou, 2.0).unwrap();
        let box_domain = ext.enclosing_box().clone();
        let p = ExponentField::constant(Arity::TwoPoint, 2.0, box_domain.clone()).unwrap();
        let q = q2(&box_domain);
        let params = SpaceParams::new(0.4, 1, p, q).unwrap();
        let coarse =
            sobolev_norm(&ext.function, &params, &box_domain, &quad(80, 2, QuadRule::Midpoint))
                .unwrap();
        let fine =
            sobolev_norm(&ext.function, &params, &box_domain, &quad(160, 2, QuadRule::Midpoint))
                .unwrap();
        assert!(coarse.is_finite() && fine.is_finite() && fine > 0.0);
        assert!(
            (coarse - fine).abs() / fine < 0.1,
            "coarse {coarse} vs fine {fine}"
        );
    }

    #[test]
    fn kernel_decomposition_is_exact_for_disjoint_construction() {
        let (omega, atlas, pou) = interval_setup();
        let v = GridFunction::parse("sin(2*x)+1.5", omega.clone()).unwrap();
        let ev = extend(&v, &omega, &atlas, &pou, 2.0).unwrap();
        let box_domain = ev.enclosing_box().clone();
        // A remainder supported beyond the reflection collar (balls reach
        // 1.25; the bump sits in (2.3, 2.7)).
        let far = bump_fn(&box_domain, 2.5, 0.1, 0.2);
        let u = ev.function.linear_combination(1.0, &far, 1.0);

        let d = kernel_decompose(&u, &omega, &atlas, &pou).unwrap();
        let (lo, hi) = box_domain.bounding_box();
        for i in 0..=250 {
            let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / 250.0];
            let total = d.kernel_part.eval(&x).unwrap() + d.image_part.eval(&x).unwrap();
            assert_eq!(total, u.eval(&x).unwrap(), "at x={}", x[0]);
        }
        // The kernel part has zero trace.
        let tk = trace(&d.kernel_part, &omega).unwrap();
        for x in nodes(&omega, 65) {
            assert_eq!(tk.eval(&x).unwrap(), 0.0);
        }
        // Decomposing the image again: nothing remains in the kernel.
        let d2 = kernel_decompose(&d.image_part, &omega, &atlas, &pou).unwrap();
        for i in 0..=250 {
            let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / 250.0];
            assert_eq!(d2.kernel_part.eval(&x).unwrap(), 0.0, "at x={}", x[0]);
            assert_eq!(
                d2.image_part.eval(&x).unwrap(),
                d.image_part.eval(&x).unwrap(),
                "at x={}",
                x[0]
            );
        }
    }

    #[test]
    fn decompose_far_supported_function_is_pure_kernel() {
        let (omega, atlas, pou) = interval_setup();
        let box_domain = dilated_box(&omega, 2.0).unwrap();
        let far = bump_fn(&box_domain, 2.5, 0.1, 0.2);
        let d = kernel_decompose(&far, &omega, &atlas, &pou).unwrap();
        let (lo, hi) = box_domain.bounding_box();
        for i in 0..=100 {
            let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / 100.0];
            assert_eq!(d.image_part.eval(&x).unwrap(), 0.0);
            assert_eq!(d.kernel_part.eval(&x).unwrap(), far.eval(&x).unwrap());
        }
    }

    #[test]
    fn trace_of_extension_vanishing_forces_zero() {
        // Testable restatement of Ker T and the image meeting only at 0:
        // if trace(E v) vanishes at the omega nodes then v does, and E v
        // vanishes on the whole box grid.
        let (omega, atlas, pou) = interval_setup();
        let zero = GridFunction::constant(0.0, omega.clone());
        let ez = extend(&zero, &omega, &atlas, &pou, 2.0).unwrap();
        let (lo, hi) = ez.enclosing_box().bounding_box();
        for i in 0..=150 {
            let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / 150.0];
            assert_eq!(ez.function.eval(&x).unwrap(), 0.0);
        }
        // Contrapositive: a nonzero v shows up in its trace nodes.
        let v = GridFunction::parse("x", omega.clone()).unwrap();
        let evf = extend(&v, &omega, &atlas, &pou, 2.0).unwrap();
        let tv = trace(&evf.function, &omega).unwrap();
        let saw_nonzero = nodes(&omega, 33)
            .iter()
            .any(|x| tv.eval(x).unwrap() != 0.0);
        assert!(saw_nonzero);
    }

    #[test]
    fn disc_extension_evaluates_across_the_boundary() {
        let disc = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let atlas = chart_atlas(&disc, 8).unwrap();
        let cover = cover_boundary(&disc, 8).unwrap();
        let gamma = disc.boundary().unwrap();
        let pou = partition_of_unity(&cover, &gamma).unwrap();
        let u = GridFunction::parse("x1+2*x2+3", disc.clone()).unwrap();
        let ext = extend(&u, &disc, &atlas, &pou, 1.0).unwrap();
        // Identity inside.
        assert_eq!(ext.function.eval(&[0.3, -0.4]).unwrap(), u.eval(&[0.3, -0.4]).unwrap());
        // Just outside, values come from reflected interior points and stay
        // near the boundary values.
        let outside = ext.function.eval(&[1.02, 0.0]).unwrap();
        assert!(outside.is_finite());
        assert!((outside - 4.0).abs() < 0.25, "outside value {outside}");
        // Far away the extension vanishes.
        assert_eq!(ext.function.eval(&[2.5, 0.0]).unwrap(), 0.0);
        assert_eq!(ext.region_at(&[1.02, 0.0]), RegionLabel::Reflected);
    }
}
