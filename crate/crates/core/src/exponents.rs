//! Variable exponent fields q(x) and p(x,y), their grid bounds, conjugates,
//! the critical exponent, and the admissibility report.
//!
//! Essential sup/inf are approximated by max/min over endpoint-inclusive
//! tensor grids on the closure of the declared domain. Inclusive grids nest
//! under doubling, so the reported bounds are monotone in the resolution.
//! Fields are validated to stay in (1, inf) on such a grid at construction;
//! evaluation itself does not re-check the domain, so exponents extend
//! naturally to enclosing boxes when extended functions are measured.

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::geometry::Domain;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Arity {
    OnePoint,
    TwoPoint,
}

/// Tensor-grid samples with multilinear interpolation, clamped to the grid
/// hull outside it. Axes are strictly increasing; values are row-major with
/// the last axis fastest.
#[derive(Debug, Clone, Serialize)]
pub struct SampledField {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<SampledField> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Mismatch {
                detail: format!("sampled fields support 1 or 2 axes, got {}", axes.len()),
            });
        }
        for ax in &axes {
            if ax.len() < 2 || ax.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Mismatch {
                    detail: "sample axes need at least 2 strictly increasing nodes".into(),
                });
            }
        }
        let expect: usize = axes.iter().map(|a| a.len()).product();
        if values.len() != expect {
            return Err(Error::Mismatch {
                detail: format!("expected {expect} sample values, got {}", values.len()),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v <= 1.0 {
                return Err(Error::InadmissibleExponent {
                    value: *v,
                    point: vec![i as f64],
                });
            }
        }
        Ok(SampledField { axes, values })
    }

    fn locate(ax: &[f64], t: f64) -> (usize, f64) {
        if t <= ax[0] {
            return (0, 0.0);
        }
        if t >= ax[ax.len() - 1] {
            return (ax.len() - 2, 1.0);
        }
        let i = ax.partition_point(|v| *v <= t) - 1;
        let i = i.min(ax.len() - 2);
        (i, (t - ax[i]) / (ax[i + 1] - ax[i]))
    }

    fn eval(&self, coords: &[f64]) -> f64 {
        match self.axes.len() {
            1 => {
                let (i, w) = Self::locate(&self.axes[0], coords[0]);
                self.values[i] * (1.0 - w) + self.values[i + 1] * w
            }
            _ => {
                let (i, wi) = Self::locate(&self.axes[0], coords[0]);
                let (j, wj) = Self::locate(&self.axes[1], coords[1]);
                let m = self.axes[1].len();
                let at = |a: usize, b: usize| self.values[a * m + b];
                let lo = at(i, j) * (1.0 - wj) + at(i, j + 1) * wj;
                let hi = at(i + 1, j) * (1.0 - wj) + at(i + 1, j + 1) * wj;
                lo * (1.0 - wi) + hi * wi
            }
        }
    }
}

#[derive(Debug, Clone)]
enum FieldBody {
    Const(f64),
    Expr(Expr),
    Samples(SampledField),
    /// Pointwise p / (p - 1) of the wrapped body.
    Conjugate(Box<FieldBody>),
    /// n * p(x,x) / (n - s * p(x,x)) of a wrapped two-point body.
    Critical { p: Box<FieldBody>, s: f64, n: f64 },
}

impl FieldBody {
    fn eval(&self, x: &[f64], y: Option<&[f64]>) -> Result<f64> {
        match self {
            FieldBody::Const(c) => Ok(*c),
            FieldBody::Expr(e) => Ok(e.eval(x, y)?),
            FieldBody::Samples(s) => {
                let coords: Vec<f64> = match y {
                    Some(y) => x.iter().chain(y).copied().collect(),
                    None => x.to_vec(),
                };
                Ok(s.eval(&coords))
            }
            FieldBody::Conjugate(inner) => {
                let v = inner.eval(x, y)?;
                if v <= 1.0 {
                    return Err(Error::ConjugateUndefined { value: v, point: x.to_vec() });
                }
                Ok(v / (v - 1.0))
            }
            FieldBody::Critical { p, s, n } => {
                let v = p.eval(x, Some(x))?;
                let sp = s * v;
                if sp >= *n {
                    return Err(Error::CriticalityViolation {
                        sp,
                        n: *n as usize,
                        point: x.to_vec(),
                    });
                }
                Ok(n * v / (n - sp))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExponentField {
    arity: Arity,
    body: FieldBody,
    domain: Domain,
}

/// Grid extrema of a field plus the derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentBounds {
    pub p_minus: f64,
    pub p_plus: f64,
    /// min{1, min{p_plus, p_minus}}; identically 1 for admissible fields
    /// (the minimum with 1 can never win when every value exceeds 1), kept
    /// in this form deliberately.
    pub alpha: f64,
    /// max{1, max{p_plus, p_minus}}.
    pub beta: f64,
    /// Intervals per axis of the inclusive tensor grid used.
    pub grid_used: usize,
}

pub const DEFAULT_VALIDATION_GRID: usize = 64;

impl ExponentField {
    /// A constant exponent; must exceed 1.
    pub fn constant(arity: Arity, value: f64, domain: Domain) -> Result<ExponentField> {
        if !value.is_finite() || value <= 1.0 {
            return Err(Error::InadmissibleExponent { value, point: vec![] });
        }
        Ok(ExponentField { arity, body: FieldBody::Const(value), domain })
    }

    /// Build from a parsed expression; one-point bodies must not reference
    /// the y-point. Validates values on the default grid.
    pub fn from_expr(arity: Arity, body: Expr, domain: Domain) -> Result<ExponentField> {
        if arity == Arity::OnePoint && body.uses_y() {
            return Err(Error::Mismatch {
                detail: format!("one-point exponent `{body}` references the y-point"),
            });
        }
        let f = ExponentField { arity, body: FieldBody::Expr(body), domain };
        f.check_admissible(DEFAULT_VALIDATION_GRID)?;
        Ok(f)
    }

    /// Parse `src` in the dimension of `domain` and build the field.
    pub fn parse(arity: Arity, src: &str, domain: Domain) -> Result<ExponentField> {
        let body = expr::parse(src, domain.dim())?;
        ExponentField::from_expr(arity, body, domain)
    }

    pub fn from_samples(
        arity: Arity,
        samples: SampledField,
        domain: Domain,
    ) -> Result<ExponentField> {
        let need_axes = match arity {
            Arity::OnePoint => domain.dim(),
            Arity::TwoPoint => 2 * domain.dim(),
        };
        if samples.axes.len() != need_axes {
            return Err(Error::Mismatch {
                detail: format!(
                    "{need_axes} sample axes needed for this arity/dimension, got {}",
                    samples.axes.len()
                ),
            });
        }
        // Sample values were range-checked in SampledField::new; multilinear
        // interpolation stays within the hull of the values.
        Ok(ExponentField { arity, body: FieldBody::Samples(samples), domain })
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Evaluate at x (one-point) or (x, y) (two-point).
    pub fn eval(&self, x: &[f64], y: Option<&[f64]>) -> Result<f64> {
        if self.arity == Arity::TwoPoint && y.is_none() {
            return Err(Error::Mismatch {
                detail: "two-point exponent needs both points".into(),
            });
        }
        let v = self.body.eval(x, y)?;
        if !v.is_finite() {
            return Err(Error::InadmissibleExponent { value: v, point: x.to_vec() });
        }
        Ok(v)
    }

    /// Diagonal value p(x,x) for two-point fields, q(x) for one-point.
    pub fn eval_diag(&self, x: &[f64]) -> Result<f64> {
        match self.arity {
            Arity::OnePoint => self.eval(x, None),
            Arity::TwoPoint => self.eval(x, Some(x)),
        }
    }

    fn check_admissible(&self, grid_res: usize) -> Result<()> {
        self.fold_grid(grid_res, (), |(), point, v| {
            if !v.is_finite() || v <= 1.0 {
                Err(Error::InadmissibleExponent { value: v, point: point.to_vec() })
            } else {
                Ok(())
            }
        })
    }

    /// Visit every point of the inclusive validation grid: for two-point
    /// fields the grid is over closure(domain) x closure(domain). The point
    /// passed to `f` is the concatenated coordinate vector.
    fn fold_grid<T>(
        &self,
        grid_res: usize,
        init: T,
        mut f: impl FnMut(T, &[f64], f64) -> Result<T>,
    ) -> Result<T> {
        let dim = self.domain.dim();
        let copies = match self.arity {
            Arity::OnePoint => 1,
            Arity::TwoPoint => 2,
        };
        let axes = dim * copies;
        // Cap the total grid so 4-axis fields stay tractable.
        let mut res = grid_res.max(2);
        while (res + 1).pow(axes as u32) > 6_000_000 {
            res /= 2;
        }
        let (lo, hi) = self.domain.bounding_box();
        let mut idx = vec![0usize; axes];
        let mut acc = init;
        'outer: loop {
            let point: Vec<f64> = (0..axes)
                .map(|a| {
                    let c = a % dim;
                    lo[c] + (hi[c] - lo[c]) * idx[a] as f64 / res as f64
                })
                .collect();
            let (x, y) = point.split_at(dim);
            let in_closure = self.domain.contains_closure(x)
                && (copies == 1 || self.domain.contains_closure(y));
            if in_closure {
                let v = self.body.eval(x, if copies == 2 { Some(y) } else { None })?;
                acc = f(acc, &point, v)?;
            }
            for a in 0..axes {
                idx[a] += 1;
                if idx[a] <= res {
                    continue 'outer;
                }
                idx[a] = 0;
            }
            break;
        }
        Ok(acc)
    }
}

/// Max/min of the field over the inclusive tensor grid, with the derived
/// alpha/beta constants.
pub fn exponent_bounds(f: &ExponentField, grid_res: usize) -> Result<ExponentBounds> {
    if grid_res < 2 {
        return Err(Error::Mismatch { detail: format!("grid_res must be >= 2, got {grid_res}") });
    }
    let (p_minus, p_plus) = f.fold_grid(
        grid_res,
        (f64::INFINITY, f64::NEG_INFINITY),
        |(mn, mx), point, v| {
            if !v.is_finite() || v <= 1.0 {
                Err(Error::InadmissibleExponent { value: v, point: point.to_vec() })
            } else {
                Ok((mn.min(v), mx.max(v)))
            }
        },
    )?;
    Ok(ExponentBounds {
        p_minus,
        p_plus,
        alpha: 1.0f64.min(p_plus.min(p_minus)),
        beta: 1.0f64.max(p_plus.max(p_minus)),
        grid_used: grid_res,
    })
}

/// Pointwise conjugate p' with 1/p + 1/p' = 1.
pub fn conjugate_exponent(f: &ExponentField) -> Result<ExponentField> {
    let body = match &f.body {
        FieldBody::Const(c) => {
            if *c <= 1.0 {
                return Err(Error::ConjugateUndefined { value: *c, point: vec![] });
            }
            FieldBody::Const(c / (c - 1.0))
        }
        FieldBody::Conjugate(inner) => (**inner).clone(),
        other => FieldBody::Conjugate(Box::new(other.clone())),
    };
    let out = ExponentField { arity: f.arity, body, domain: f.domain.clone() };
    out.check_admissible(DEFAULT_VALIDATION_GRID)?;
    Ok(out)
}

/// The space's data: smoothness s, dimension n, two-point p, one-point q.
#[derive(Debug, Clone)]
pub struct SpaceParams {
    pub s: f64,
    pub n: usize,
    pub p: ExponentField,
    pub q: ExponentField,
}

impl SpaceParams {
    pub fn new(s: f64, n: usize, p: ExponentField, q: ExponentField) -> Result<SpaceParams> {
        if !(0.0 < s && s < 1.0) {
            return Err(Error::Mismatch { detail: format!("s must lie in (0,1), got {s}") });
        }
        if n != 1 && n != 2 {
            return Err(Error::Mismatch { detail: format!("dimension must be 1 or 2, got {n}") });
        }
        if p.arity != Arity::TwoPoint {
            return Err(Error::Mismatch { detail: "p must be a two-point field".into() });
        }
        if q.arity != Arity::OnePoint {
            return Err(Error::Mismatch { detail: "q must be a one-point field".into() });
        }
        if p.domain.dim() != n || q.domain.dim() != n {
            return Err(Error::Mismatch {
                detail: format!(
                    "field domains are {}-D and {}-D but n = {n}",
                    p.domain.dim(),
                    q.domain.dim()
                ),
            });
        }
        Ok(SpaceParams { s, n, p, q })
    }
}

/// The critical exponent field n p(x,x) / (n - s p(x,x)); requires
/// s p(x,x) < n on the validation grid.
pub fn critical_exponent(params: &SpaceParams) -> Result<ExponentField> {
    let body = FieldBody::Critical {
        p: Box::new(params.p.body.clone()),
        s: params.s,
        n: params.n as f64,
    };
    let f = ExponentField {
        arity: Arity::OnePoint,
        body,
        domain: params.p.domain.clone(),
    };
    // Surfaces criticality violations (and values <= 1 cannot happen:
    // p > 1 and s p < n give p* > p > 1).
    f.check_admissible(DEFAULT_VALIDATION_GRID)?;
    Ok(f)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub holds: bool,
    /// Positive margins mean the constraint holds with room to spare.
    pub margin: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub constraints: Vec<ConstraintCheck>,
    pub verdict: bool,
    pub grid_used: usize,
}

/// Check the space's standing hypotheses on a grid: s p(x,y) < n,
/// q(x) > p(x,x), p*(x) > p_plus q(x), and optionally
/// p*(x) > r(x) >= r_minus > 1. Failures are report entries, not errors.
pub fn validate_admissibility(
    params: &SpaceParams,
    r: Option<&ExponentField>,
    grid_res: usize,
) -> Result<ValidationReport> {
    let n = params.n as f64;
    let s = params.s;
    let mut constraints = Vec::new();

    // s p(x,y) < n over the two-point grid.
    let (margin, worst) = params.p.fold_grid(
        grid_res,
        (f64::INFINITY, Vec::new()),
        |(m, w), point, v| {
            let here = n - s * v;
            Ok(if here < m { (here, point.to_vec()) } else { (m, w) })
        },
    )?;
    constraints.push(ConstraintCheck {
        name: "s*p(x,y) < n".into(),
        holds: margin > 0.0,
        margin,
        worst_point: worst,
    });

    // Pointwise one-point constraints share a grid walk over q's domain.
    let p_plus = exponent_bounds(&params.p, grid_res)?.p_plus;
    struct Worst {
        q_gt_p: (f64, Vec<f64>),
        crit_gt_pq: (f64, Vec<f64>),
        crit_gt_r: (f64, Vec<f64>),
        r_minus: f64,
    }
    let init = Worst {
        q_gt_p: (f64::INFINITY, Vec::new()),
        crit_gt_pq: (f64::INFINITY, Vec::new()),
        crit_gt_r: (f64::INFINITY, Vec::new()),
        r_minus: f64::INFINITY,
    };
    let upd = |slot: &mut (f64, Vec<f64>), margin: f64, point: &[f64]| {
        if margin < slot.0 {
            *slot = (margin, point.to_vec());
        }
    };
    let acc = params.q.fold_grid(grid_res, init, |mut acc, point, qv| {
        let pv = params.p.eval(point, Some(point))?;
        upd(&mut acc.q_gt_p, qv - pv, point);
        // Criticality may fail pointwise; count that as an arbitrarily bad
        // margin rather than aborting the report.
        let crit = if s * pv < n { n * pv / (n - s * pv) } else { f64::NEG_INFINITY };
        upd(&mut acc.crit_gt_pq, crit - p_plus * qv, point);
        if let Some(r) = r {
            let rv = r.eval(point, None)?;
            upd(&mut acc.crit_gt_r, crit - rv, point);
            acc.r_minus = acc.r_minus.min(rv);
        }
        Ok(acc)
    })?;

    constraints.push(ConstraintCheck {
        name: "q(x) > p(x,x)".into(),
        holds: acc.q_gt_p.0 > 0.0,
        margin: acc.q_gt_p.0,
        worst_point: acc.q_gt_p.1,
    });
    constraints.push(ConstraintCheck {
        name: "p*(x) > p_plus * q(x)".into(),
        holds: acc.crit_gt_pq.0 > 0.0,
        margin: acc.crit_gt_pq.0,
        worst_point: acc.crit_gt_pq.1,
    });
    if r.is_some() {
        constraints.push(ConstraintCheck {
            name: "p*(x) > r(x)".into(),
            holds: acc.crit_gt_r.0 > 0.0,
            margin: acc.crit_gt_r.0,
            worst_point: acc.crit_gt_r.1,
        });
        constraints.push(ConstraintCheck {
            name: "r_minus > 1".into(),
            holds: acc.r_minus > 1.0,
            margin: acc.r_minus - 1.0,
            worst_point: vec![],
        });
    }

    let verdict = constraints.iter().all(|c| c.holds);
    Ok(ValidationReport { constraints, verdict, grid_used: grid_res })
}
