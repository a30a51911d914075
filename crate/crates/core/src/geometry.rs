//! Model domains, standard cells, boundary covers, smooth cutoffs,
//! partitions of unity, and boundary-flattening charts.
//!
//! Only C1 model domains with closed-form charts are supported: intervals,
//! balls (1-D intervals, 2-D discs), the standard half-cell, and symmetric
//! boxes for reflection. Polygonal 2-D domains are rejected rather than
//! approximated, because corner charts would not be C1.
//!
//! Smoothness and containment claims are checked by sampling at
//! construction time; the declared Lipschitz constants are numerical upper
//! bounds, not symbolic ones.

use crate::error::{Error, Result};
use serde::Serialize;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Small vector helpers

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The standard smooth glue: 0 for t <= 0, 1 for t >= 1, C-infinity ramp
/// based on exp(-1/t) in between. Monotone non-decreasing.
pub(crate) fn glue(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

// ---------------------------------------------------------------------------
// Balls and boundary descriptors

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Ball {
        Ball { center, radius }
    }

    /// Closed containment, used by cover checks.
    pub fn contains(&self, x: &[f64]) -> bool {
        dist(&self.center, x) <= self.radius
    }
}

/// The compact set the partition of unity is organized around: here always
/// a domain boundary, either finitely many points (1-D) or a circle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Gamma {
    Points(Vec<Vec<f64>>),
    Circle { center: [f64; 2], radius: f64 },
}

impl Gamma {
    pub fn dim(&self) -> usize {
        match self {
            Gamma::Points(pts) => pts.first().map_or(1, |p| p.len()),
            Gamma::Circle { .. } => 2,
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Gamma::Points(pts) => pts
                .iter()
                .map(|p| dist(p, x))
                .fold(f64::INFINITY, f64::min),
            Gamma::Circle { center, radius } => (dist(center, x) - radius).abs(),
        }
    }

    /// Deterministic sample points on the set; `m` is a density hint.
    pub fn samples(&self, m: usize) -> Vec<Vec<f64>> {
        match self {
            Gamma::Points(pts) => pts.clone(),
            Gamma::Circle { center, radius } => {
                let m = m.max(8);
                (0..m)
                    .map(|j| {
                        let phi = 2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
                        vec![
                            center[0] + radius * phi.cos(),
                            center[1] + radius * phi.sin(),
                        ]
                    })
                    .collect()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Domains

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DomainKind {
    /// Open axis-aligned box: all axes lo_i < x_i < hi_i.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball: interval in 1-D, disc in 2-D.
    Ball { center: Vec<f64>, radius: f64 },
    /// The standard half-cell: (0,1) in 1-D, (-1,1) x (0,1) in 2-D.
    HalfBox { dim: usize },
    /// A box symmetric in the last axis; carries its upper/lower halves.
    SymmetricPair { lo: Vec<f64>, hi: Vec<f64> },
    /// A disc presented through its boundary atlas.
    Charted { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    pub kind: DomainKind,
    diameter: f64,
    volume: f64,
}

fn box_checks(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
        return Err(Error::UnsupportedDomain {
            detail: format!("box needs 1 or 2 axes, got lo={lo:?}, hi={hi:?}"),
        });
    }
    for (a, b) in lo.iter().zip(hi) {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::UnsupportedDomain {
                detail: format!("box axis [{a}, {b}] is empty or unbounded"),
            });
        }
    }
    Ok(())
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Domain> {
        Domain::rect(vec![a], vec![b])
    }

    pub fn rect(lo: Vec<f64>, hi: Vec<f64>) -> Result<Domain> {
        box_checks(&lo, &hi)?;
        let diameter = dist(&lo, &hi);
        let volume = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        Ok(Domain { kind: DomainKind::Box { lo, hi }, diameter, volume })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Domain> {
        if center.is_empty() || center.len() > 2 || !radius.is_finite() || radius <= 0.0 {
            return Err(Error::UnsupportedDomain {
                detail: format!("ball needs dimension 1 or 2 and radius > 0, got center={center:?}, radius={radius}"),
            });
        }
        let volume = match center.len() {
            1 => 2.0 * radius,
            _ => std::f64::consts::PI * radius * radius,
        };
        Ok(Domain {
            kind: DomainKind::Ball { center, radius },
            diameter: 2.0 * radius,
            volume,
        })
    }

    pub fn half_box(dim: usize) -> Result<Domain> {
        match dim {
            1 => Ok(Domain { kind: DomainKind::HalfBox { dim }, diameter: 1.0, volume: 1.0 }),
            2 => Ok(Domain {
                kind: DomainKind::HalfBox { dim },
                diameter: 5.0f64.sqrt(),
                volume: 2.0,
            }),
            _ => Err(Error::UnsupportedDomain {
                detail: format!("half-box dimension must be 1 or 2, got {dim}"),
            }),
        }
    }

    /// A box symmetric in its last axis: requires `lo_n == -hi_n` exactly, so
    /// the reflection (x', x_n) -> (x', -x_n) maps the domain onto itself.
    pub fn symmetric_pair(lo: Vec<f64>, hi: Vec<f64>) -> Result<Domain> {
        box_checks(&lo, &hi)?;
        let n = lo.len();
        if lo[n - 1] != -hi[n - 1] {
            return Err(Error::UnsupportedDomain {
                detail: format!(
                    "symmetric pair needs lo_n = -hi_n exactly, got [{}, {}]",
                    lo[n - 1],
                    hi[n - 1]
                ),
            });
        }
        let diameter = dist(&lo, &hi);
        let volume = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let d = Domain { kind: DomainKind::SymmetricPair { lo, hi }, diameter, volume };
        // Sampled involution check; exact for boxes, kept as a guard.
        let (blo, bhi) = d.bounding_box();
        for i in 0..64 {
            let t = (i as f64 + 0.5) / 64.0;
            let x: Vec<f64> = blo.iter().zip(&bhi).map(|(a, b)| a + t * (b - a)).collect();
            if d.contains(&x) != d.contains(&reflect_last(&x)) {
                return Err(Error::UnsupportedDomain {
                    detail: format!("reflection does not preserve the domain at {x:?}"),
                });
            }
        }
        Ok(d)
    }

    pub fn charted_disc(center: [f64; 2], radius: f64) -> Result<Domain> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::UnsupportedDomain {
                detail: format!("charted disc needs radius > 0, got {radius}"),
            });
        }
        Ok(Domain {
            kind: DomainKind::Charted { center, radius },
            diameter: 2.0 * radius,
            volume: std::f64::consts::PI * radius * radius,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DomainKind::Box { lo, .. } | DomainKind::SymmetricPair { lo, .. } => lo.len(),
            DomainKind::Ball { center, .. } => center.len(),
            DomainKind::HalfBox { dim } => *dim,
            DomainKind::Charted { .. } => 2,
        }
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Open-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.kind {
            DomainKind::Box { lo, hi } | DomainKind::SymmetricPair { lo, hi } => {
                lo.iter().zip(hi).zip(x).all(|((a, b), v)| a < v && v < b)
            }
            DomainKind::Ball { center, radius } => dist(center, x) < *radius,
            DomainKind::Charted { center, radius } => dist(center, x) < *radius,
            DomainKind::HalfBox { dim } => match dim {
                1 => 0.0 < x[0] && x[0] < 1.0,
                _ => x[0].abs() < 1.0 && 0.0 < x[1] && x[1] < 1.0,
            },
        }
    }

    /// Closed-set membership (closure of the domain).
    pub fn contains_closure(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.kind {
            DomainKind::Box { lo, hi } | DomainKind::SymmetricPair { lo, hi } => {
                lo.iter().zip(hi).zip(x).all(|((a, b), v)| *a <= *v && *v <= *b)
            }
            DomainKind::Ball { center, radius } => dist(center, x) <= *radius,
            DomainKind::Charted { center, radius } => dist(center, x) <= *radius,
            DomainKind::HalfBox { dim } => match dim {
                1 => (0.0..=1.0).contains(&x[0]),
                _ => x[0].abs() <= 1.0 && (0.0..=1.0).contains(&x[1]),
            },
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::Box { lo, hi } | DomainKind::SymmetricPair { lo, hi } => {
                (lo.clone(), hi.clone())
            }
            DomainKind::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainKind::Charted { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainKind::HalfBox { dim } => match dim {
                1 => (vec![0.0], vec![1.0]),
                _ => (vec![-1.0, 0.0], vec![1.0, 1.0]),
            },
        }
    }

    /// Boundary descriptor, where one exists in closed form.
    pub fn boundary(&self) -> Result<Gamma> {
        match (&self.kind, self.dim()) {
            (DomainKind::Box { lo, hi }, 1) => {
                Ok(Gamma::Points(vec![vec![lo[0]], vec![hi[0]]]))
            }
            (DomainKind::Ball { center, radius }, 1) => Ok(Gamma::Points(vec![
                vec![center[0] - radius],
                vec![center[0] + radius],
            ])),
            (DomainKind::HalfBox { .. }, 1) => {
                Ok(Gamma::Points(vec![vec![0.0], vec![1.0]]))
            }
            (DomainKind::Ball { center, radius }, 2) => Ok(Gamma::Circle {
                center: [center[0], center[1]],
                radius: *radius,
            }),
            (DomainKind::Charted { center, radius }, 2) => {
                Ok(Gamma::Circle { center: *center, radius: *radius })
            }
            _ => Err(Error::UnsupportedDomain {
                detail: format!(
                    "no closed-form boundary descriptor for {:?} in {}-D",
                    self.kind,
                    self.dim()
                ),
            }),
        }
    }

    /// For a symmetric pair, the open upper half (last axis > 0).
    pub fn upper_half(&self) -> Result<Domain> {
        match &self.kind {
            DomainKind::SymmetricPair { lo, hi } => {
                let mut lo_plus = lo.clone();
                *lo_plus.last_mut().unwrap() = 0.0;
                Domain::rect(lo_plus, hi.clone())
            }
            _ => Err(Error::UnsupportedDomain {
                detail: "upper_half is defined for symmetric pairs only".into(),
            }),
        }
    }
}

pub(crate) fn reflect_last(x: &[f64]) -> Vec<f64> {
    let mut r = x.to_vec();
    let n = r.len();
    r[n - 1] = -r[n - 1];
    r
}

// ---------------------------------------------------------------------------
// Standard cells

/// The flat face: {(x', 0) : |x'| < 1} in 2-D, {0} in 1-D. Measure zero, so
/// it is a descriptor rather than a Domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlatCell {
    pub dim: usize,
}

impl FlatCell {
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match self.dim {
            1 => x[0] == 0.0,
            _ => x[1] == 0.0 && x[0].abs() < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardCells {
    pub q: Domain,
    pub q_plus: Domain,
    pub q_zero: FlatCell,
}

/// The standard cells: Q = (-1,1)^n, its upper half, and the flat face.
pub fn standard_cells(n: usize) -> Result<StandardCells> {
    if n != 1 && n != 2 {
        return Err(Error::UnsupportedDomain {
            detail: format!("standard cells exist for n in {{1, 2}}, got {n}"),
        });
    }
    let q = Domain::rect(vec![-1.0; n], vec![1.0; n])?;
    let q_plus = Domain::half_box(n)?;
    Ok(StandardCells { q, q_plus, q_zero: FlatCell { dim: n } })
}

// ---------------------------------------------------------------------------
// Boundary covers

/// Cover the boundary of `domain` with `k` balls and verify the cover by
/// sampling.
///
/// 1-D boundaries are two points; balls alternate between them with radius
/// a quarter of the domain width, so `k = 2` is the natural choice. On a
/// circle of radius R the balls sit at equal angles with radius
/// 1.3 R sin(pi/k), which covers for every k >= 3 and fails the sampled
/// check (by design) for k <= 2.
pub fn cover_boundary(domain: &Domain, k: usize) -> Result<Vec<Ball>> {
    if k == 0 {
        return Err(Error::Mismatch { detail: "cover needs at least one ball".into() });
    }
    let gamma = domain.boundary()?;
    let balls: Vec<Ball> = match &gamma {
        Gamma::Points(pts) => {
            let width = domain.diameter();
            (0..k)
                .map(|j| Ball::new(pts[j % pts.len()].clone(), width / 4.0))
                .collect()
        }
        Gamma::Circle { center, radius } => {
            let rho = 1.3 * radius * (std::f64::consts::PI / k as f64).sin();
            (0..k)
                .map(|j| {
                    let phi = 2.0 * std::f64::consts::PI * (j as f64) / (k as f64);
                    Ball::new(
                        vec![center[0] + radius * phi.cos(), center[1] + radius * phi.sin()],
                        rho,
                    )
                })
                .collect()
        }
    };
    let sample_count = match gamma {
        Gamma::Points(_) => 2,
        Gamma::Circle { .. } => 4096,
    };
    for point in gamma.samples(sample_count) {
        if !balls.iter().any(|b| b.contains(&point)) {
            return Err(Error::CoverFailure { point });
        }
    }
    Ok(balls)
}

// ---------------------------------------------------------------------------
// Cutoffs

#[derive(Debug, Clone, Serialize)]
struct RadialBump {
    center: Vec<f64>,
    r_inner: f64,
    r_outer: f64,
}

impl RadialBump {
    /// 1 inside r_inner, 0 outside r_outer, exp-glue ramp between.
    fn eval(&self, x: &[f64]) -> f64 {
        let r = dist(&self.center, x);
        glue((self.r_outer - r) / (self.r_outer - self.r_inner))
    }
}

/// Where a cutoff is allowed to be nonzero.
#[derive(Debug, Clone, Serialize)]
pub enum SupportRegion {
    Ball(Ball),
    /// Everything at distance >= min_dist from gamma (the residual member).
    AwayFrom { gamma: Gamma, min_dist: f64 },
}

impl SupportRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SupportRegion::Ball(b) => b.contains(x),
            SupportRegion::AwayFrom { gamma, min_dist } => gamma.distance(x) >= *min_dist,
        }
    }
}

#[derive(Debug)]
struct PouCore {
    bumps: Vec<RadialBump>,
    gamma: Gamma,
    /// Residual weight ramps up over gamma-distance in [ramp_lo, ramp_hi].
    ramp_lo: f64,
    ramp_hi: f64,
}

impl PouCore {
    fn residual_weight(&self, x: &[f64]) -> f64 {
        let d = self.gamma.distance(x);
        glue((d - self.ramp_lo) / (self.ramp_hi - self.ramp_lo))
    }

    /// (weight_0, sum of all weights including weight_0).
    fn weights(&self, x: &[f64]) -> (f64, f64) {
        let b0 = self.residual_weight(x);
        let total: f64 = self.bumps.iter().map(|b| b.eval(x)).sum::<f64>() + b0;
        (b0, total)
    }

    fn member_value(&self, index: usize, x: &[f64]) -> f64 {
        let (b0, total) = self.weights(x);
        if total == 0.0 {
            // Outside every member's support; only reachable for index >= 1
            // queries far away, where all members vanish.
            return 0.0;
        }
        let num = if index == 0 { b0 } else { self.bumps[index - 1].eval(x) };
        num / total
    }
}

/// A smooth [0,1]-valued function with a declared support region and a
/// numerically measured Lipschitz constant.
#[derive(Debug, Clone)]
pub struct Cutoff {
    kind: CutoffKind,
    pub support: SupportRegion,
    pub lipschitz_k: f64,
}

#[derive(Debug, Clone)]
enum CutoffKind {
    Bump(RadialBump),
    PouMember { index: usize, core: Arc<PouCore> },
}

impl Cutoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            CutoffKind::Bump(b) => b.eval(x),
            CutoffKind::PouMember { index, core } => core.member_value(*index, x),
        }
    }

    /// Short serializable description of how the cutoff was built.
    pub fn describe(&self) -> CutoffDescription {
        match &self.kind {
            CutoffKind::Bump(b) => CutoffDescription::Bump {
                center: b.center.clone(),
                r_inner: b.r_inner,
                r_outer: b.r_outer,
                lipschitz_k: self.lipschitz_k,
            },
            CutoffKind::PouMember { index, .. } => CutoffDescription::PartitionMember {
                index: *index,
                lipschitz_k: self.lipschitz_k,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffDescription {
    Bump { center: Vec<f64>, r_inner: f64, r_outer: f64, lipschitz_k: f64 },
    PartitionMember { index: usize, lipschitz_k: f64 },
}

/// Smooth radial bump: 1 on the closed inner ball, 0 outside the outer
/// ball. The Lipschitz constant is measured on a fine radial grid and
/// declared with a small safety factor.
pub fn bump(center: &[f64], r_inner: f64, r_outer: f64) -> Result<Cutoff> {
    if !(0.0 < r_inner && r_inner < r_outer && r_outer.is_finite()) {
        return Err(Error::Mismatch {
            detail: format!("bump needs 0 < r_inner < r_outer, got [{r_inner}, {r_outer}]"),
        });
    }
    let b = RadialBump { center: center.to_vec(), r_inner, r_outer };
    let steps = 4096;
    let h = (r_outer - r_inner) / steps as f64;
    let profile = |r: f64| glue((r_outer - r) / (r_outer - r_inner));
    let mut max_slope: f64 = 0.0;
    for i in 0..steps {
        let r = r_inner + i as f64 * h;
        max_slope = max_slope.max((profile(r + h) - profile(r)).abs() / h);
    }
    Ok(Cutoff {
        kind: CutoffKind::Bump(b),
        support: SupportRegion::Ball(Ball::new(center.to_vec(), r_outer)),
        lipschitz_k: max_slope * 1.02,
    })
}

// ---------------------------------------------------------------------------
// Partition of unity

#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    /// members[0] is the residual supported away from gamma; members[i] for
    /// i >= 1 is subordinate to cover[i-1].
    pub members: Vec<Cutoff>,
    pub cover: Vec<Ball>,
    pub gamma: Gamma,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionDescription {
    pub cover: Vec<Ball>,
    pub gamma: Gamma,
    pub members: Vec<CutoffDescription>,
    pub plateau_factor: f64,
    pub support_factor: f64,
    pub ramp: [f64; 2],
}

const POU_INNER: f64 = 0.85;
const POU_OUTER: f64 = 0.95;
const POU_RAMP_LO: f64 = 0.15;
const POU_RAMP_HI: f64 = 0.60;

impl PartitionOfUnity {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// All member values at `x`; sums to 1 wherever the cover reaches.
    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        self.members.iter().map(|m| m.eval(x)).collect()
    }

    pub fn describe(&self) -> PartitionDescription {
        PartitionDescription {
            cover: self.cover.clone(),
            gamma: self.gamma.clone(),
            members: self.members.iter().map(|m| m.describe()).collect(),
            plateau_factor: POU_INNER,
            support_factor: POU_OUTER,
            ramp: [POU_RAMP_LO, POU_RAMP_HI],
        }
    }
}

/// Build the normalized-bump partition over a boundary cover.
///
/// Member i >= 1 is bump_i / (bump_0 + sum_j bump_j) where bump_i sits in
/// cover ball i at 0.85/0.95 of its radius; member 0 is the residual whose
/// weight ramps up with distance from gamma. The construction sums to 1
/// identically wherever the denominator is positive; the constructor
/// verifies the denominator stays above 1e-12 on gamma samples and a grid
/// around the cover.
pub fn partition_of_unity(cover: &[Ball], gamma: &Gamma) -> Result<PartitionOfUnity> {
    if cover.is_empty() {
        return Err(Error::Mismatch { detail: "partition needs a nonempty cover".into() });
    }
    let dim = gamma.dim();
    for b in cover {
        if b.center.len() != dim || !(b.radius > 0.0) {
            return Err(Error::Mismatch {
                detail: format!("cover ball {b:?} incompatible with {dim}-D boundary"),
            });
        }
    }
    let rho_min = cover.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
    let bumps: Vec<RadialBump> = cover
        .iter()
        .map(|b| RadialBump {
            center: b.center.clone(),
            r_inner: POU_INNER * b.radius,
            r_outer: POU_OUTER * b.radius,
        })
        .collect();
    let core = Arc::new(PouCore {
        bumps,
        gamma: gamma.clone(),
        ramp_lo: POU_RAMP_LO * rho_min,
        ramp_hi: POU_RAMP_HI * rho_min,
    });

    // Denominator check: gamma samples plus a tensor grid over the hull of
    // the cover and gamma, dilated past every support.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut extend_hull = |p: &[f64], margin: f64| {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a] - margin);
            hi[a] = hi[a].max(p[a] + margin);
        }
    };
    for b in cover {
        extend_hull(&b.center.clone(), 1.5 * b.radius);
    }
    for p in gamma.samples(64) {
        extend_hull(&p, core.ramp_hi * 1.5);
    }
    let mut probes = gamma.samples(512);
    let per_axis = if dim == 1 { 2048 } else { 96 };
    let mut idx = vec![0usize; dim];
    loop {
        let point: Vec<f64> = (0..dim)
            .map(|a| lo[a] + (idx[a] as f64 + 0.5) / per_axis as f64 * (hi[a] - lo[a]))
            .collect();
        probes.push(point);
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < per_axis {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == dim {
                break;
            }
        }
        if a == dim {
            break;
        }
    }
    for x in &probes {
        let (_, total) = core.weights(x);
        if total < 1e-12 && gamma.distance(x) < core.ramp_hi {
            return Err(Error::IncompleteCover { denominator: total, point: x.clone() });
        }
    }

    // Numerical Lipschitz estimate per member on the probe grid.
    let scale = (0..dim).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    let h = scale * 1e-6;
    let mut members = Vec::with_capacity(cover.len() + 1);
    for index in 0..=cover.len() {
        let mut max_slope: f64 = 0.0;
        for x in probes.iter().step_by(if dim == 1 { 1 } else { 3 }) {
            for a in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += h;
                xm[a] -= h;
                let slope =
                    (core.member_value(index, &xp) - core.member_value(index, &xm)) / (2.0 * h);
                max_slope = max_slope.max(slope.abs());
            }
        }
        let support = if index == 0 {
            SupportRegion::AwayFrom { gamma: gamma.clone(), min_dist: core.ramp_lo }
        } else {
            SupportRegion::Ball(Ball::new(
                cover[index - 1].center.clone(),
                POU_OUTER * cover[index - 1].radius,
            ))
        };
        members.push(Cutoff {
            kind: CutoffKind::PouMember { index, core: Arc::clone(&core) },
            support,
            lipschitz_k: max_slope * 1.25,
        });
    }
    Ok(PartitionOfUnity { members, cover: cover.to_vec(), gamma: gamma.clone() })
}

// ---------------------------------------------------------------------------
// Charts

/// Closed-form boundary-flattening maps. Forward sends the standard cell Q
/// into the chart neighborhood U with the upper half landing inside the
/// domain and the flat face landing on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartMap {
    Identity { dim: usize },
    /// H(y) = anchor + slope * y. Negative slope mirrors.
    Affine1D { anchor: f64, slope: f64 },
    /// H(y1, y2) = center + (R - depth*y2) * (cos(phi + half_width*y1),
    ///                                         sin(phi + half_width*y1)).
    /// Q0 lands on the arc of the circle of radius R around phi.
    PolarArc { center: [f64; 2], big_r: f64, depth: f64, half_width: f64, phi: f64 },
}

impl ChartMap {
    pub fn dim(&self) -> usize {
        match self {
            ChartMap::Identity { dim } => *dim,
            ChartMap::Affine1D { .. } => 1,
            ChartMap::PolarArc { .. } => 2,
        }
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        match self {
            ChartMap::Identity { .. } => y.to_vec(),
            ChartMap::Affine1D { anchor, slope } => vec![anchor + slope * y[0]],
            ChartMap::PolarArc { center, big_r, depth, half_width, phi } => {
                let ang = phi + half_width * y[0];
                let rad = big_r - depth * y[1];
                vec![center[0] + rad * ang.cos(), center[1] + rad * ang.sin()]
            }
        }
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ChartMap::Identity { .. } => x.to_vec(),
            ChartMap::Affine1D { anchor, slope } => vec![(x[0] - anchor) / slope],
            ChartMap::PolarArc { center, big_r, depth, half_width, phi } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let rad = (dx * dx + dy * dy).sqrt();
                let mut ang = dy.atan2(dx) - phi;
                while ang > std::f64::consts::PI {
                    ang -= 2.0 * std::f64::consts::PI;
                }
                while ang < -std::f64::consts::PI {
                    ang += 2.0 * std::f64::consts::PI;
                }
                vec![ang / half_width, (big_r - rad) / depth]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chart {
    pub map: ChartMap,
    /// The boundary ball this chart serves; partitions are subordinate to it.
    pub ball: Ball,
    pub lipschitz_bound: f64,
    pub jacobian_bound: f64,
}

/// Boundary-flattening atlas for the supported C1 domains.
///
/// 1-D domains get one affine chart per endpoint (the half-box keeps the
/// identity chart at its flat face). Discs get `k >= 4` polar charts whose
/// image intersected with the disc is exactly the image of the upper cell.
/// 2-D boxes are rejected: corners are not C1.
pub fn chart_atlas(domain: &Domain, k: usize) -> Result<Vec<Chart>> {
    match (&domain.kind, domain.dim()) {
        (DomainKind::HalfBox { dim }, _) => {
            let face_ball = match dim {
                1 => Ball::new(vec![0.0], 0.25),
                _ => Ball::new(vec![0.0, 0.0], 1.25),
            };
            let mut atlas = vec![Chart {
                map: ChartMap::Identity { dim: *dim },
                ball: face_ball,
                lipschitz_bound: 1.0,
                jacobian_bound: 1.0,
            }];
            if *dim == 1 {
                // The far endpoint {1} gets the mirrored affine chart.
                atlas.push(Chart {
                    map: ChartMap::Affine1D { anchor: 1.0, slope: -1.0 },
                    ball: Ball::new(vec![1.0], 0.25),
                    lipschitz_bound: 1.0,
                    jacobian_bound: 1.0,
                });
            }
            Ok(atlas)
        }
        (DomainKind::Box { lo, hi }, 1) => Ok(interval_charts(lo[0], hi[0])),
        (DomainKind::Ball { center, radius }, 1) => {
            Ok(interval_charts(center[0] - radius, center[0] + radius))
        }
        (DomainKind::Ball { center, radius }, 2) => {
            disc_charts([center[0], center[1]], *radius, k)
        }
        (DomainKind::Charted { center, radius }, 2) => disc_charts(*center, *radius, k),
        _ => Err(Error::UnsupportedDomain {
            detail: format!(
                "no C1 atlas for {:?}: boundary has corners or no closed-form charts",
                domain.kind
            ),
        }),
    }
}

fn interval_charts(a: f64, b: f64) -> Vec<Chart> {
    let rho = (b - a) / 4.0;
    let mk = |anchor: f64, slope: f64| Chart {
        map: ChartMap::Affine1D { anchor, slope },
        ball: Ball::new(vec![anchor], rho),
        lipschitz_bound: rho.max(1.0 / rho) * 1.02,
        jacobian_bound: rho * 1.01,
    };
    vec![mk(a, rho), mk(b, -rho)]
}

fn disc_charts(center: [f64; 2], big_r: f64, k: usize) -> Result<Vec<Chart>> {
    if k < 4 {
        return Err(Error::UnsupportedDomain {
            detail: format!("disc atlas needs k >= 4 charts so each stays inside the disc, got {k}"),
        });
    }
    let rho = 1.3 * big_r * (std::f64::consts::PI / k as f64).sin();
    let depth = 1.05 * rho;
    let half_width = 1.05 * (rho / big_r).asin();
    debug_assert!(depth < big_r);
    let mut atlas = Vec::with_capacity(k);
    for j in 0..k {
        let phi = 2.0 * std::f64::consts::PI * (j as f64) / (k as f64);
        // Jacobian columns are orthogonal: singular values are
        // half_width * (R - depth*y2) and depth. Finite pairs contract
        // further than the differential bound because image arcs bow
        // inward, so the inverse bound uses the worst chord, attained by a
        // full-width pair on the innermost arc.
        let sig_max = (half_width * (big_r + depth)).max(depth);
        let chord_min = ((big_r - depth) * half_width.sin()).min(depth);
        atlas.push(Chart {
            map: ChartMap::PolarArc { center, big_r, depth, half_width, phi },
            ball: Ball::new(
                vec![center[0] + big_r * phi.cos(), center[1] + big_r * phi.sin()],
                rho,
            ),
            lipschitz_bound: sig_max.max(1.0 / chord_min) * 1.02,
            jacobian_bound: half_width * (big_r + depth) * depth * 1.01,
        });
    }
    Ok(atlas)
}
