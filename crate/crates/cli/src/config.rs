//! Problem configs are a single TOML file. Every diagnostic names the
//! offending key by its dotted path, so a bad config fails with a message
//! like "missing space.s" and exit code 2.

use std::fs;
use std::path::Path;

use fracsob::exponents::{Arity, ExponentField, SpaceParams};
use fracsob::geometry::Domain;
use fracsob::norms::{GridFunction, QuadRule, QuadratureSpec};
use toml::Value;

pub struct Raw {
    root: Value,
}

fn as_number(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

impl Raw {
    pub fn load(path: &Path) -> Result<Raw, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let root: Value =
            toml::from_str(&text).map_err(|e| format!("config parse error: {e}"))?;
        Ok(Raw { root })
    }

    fn get(&self, path: &str) -> Option<&Value> {
        let mut cur = &self.root;
        for seg in path.split('.') {
            cur = cur.as_table()?.get(seg)?;
        }
        Some(cur)
    }

    pub fn has(&self, path: &str) -> bool {
        self.get(path).is_some()
    }

    pub fn f64(&self, path: &str) -> Result<f64, String> {
        match self.get(path) {
            None => Err(format!("missing {path}")),
            Some(v) => as_number(v).ok_or_else(|| format!("{path}: expected a number")),
        }
    }

    pub fn f64_or(&self, path: &str, default: f64) -> Result<f64, String> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => as_number(v).ok_or_else(|| format!("{path}: expected a number")),
        }
    }

    pub fn usize_at(&self, path: &str) -> Result<usize, String> {
        match self.get(path) {
            None => Err(format!("missing {path}")),
            Some(v) => v
                .as_integer()
                .and_then(|i| usize::try_from(i).ok())
                .ok_or_else(|| format!("{path}: expected a non-negative integer")),
        }
    }

    pub fn usize_or(&self, path: &str, default: usize) -> Result<usize, String> {
        if self.has(path) {
            self.usize_at(path)
        } else {
            Ok(default)
        }
    }

    pub fn u64_or(&self, path: &str, default: u64) -> Result<u64, String> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => v
                .as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| format!("{path}: expected a non-negative integer")),
        }
    }

    pub fn string_at(&self, path: &str) -> Result<String, String> {
        match self.get(path) {
            None => Err(format!("missing {path}")),
            Some(v) => v
                .as_str()
                .map(str::to_owned)
                .ok_or_else(|| format!("{path}: expected a string")),
        }
    }

    pub fn string_or(&self, path: &str, default: &str) -> Result<String, String> {
        if self.has(path) {
            self.string_at(path)
        } else {
            Ok(default.to_owned())
        }
    }

    pub fn bool_or(&self, path: &str, default: bool) -> Result<bool, String> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| format!("{path}: expected a boolean")),
        }
    }

    /// A coordinate vector: either a bare number (1-D shorthand) or an
    /// array of numbers.
    pub fn coords(&self, path: &str) -> Result<Vec<f64>, String> {
        match self.get(path) {
            None => Err(format!("missing {path}")),
            Some(v) => {
                if let Some(x) = as_number(v) {
                    return Ok(vec![x]);
                }
                let arr = v
                    .as_array()
                    .ok_or_else(|| format!("{path}: expected a number or array of numbers"))?;
                arr.iter()
                    .map(|e| as_number(e).ok_or_else(|| format!("{path}: expected numeric entries")))
                    .collect()
            }
        }
    }
}

pub struct VerifySection {
    pub check: String,
    pub cases: usize,
    pub seed: u64,
    pub r: Option<ExponentField>,
}

pub struct ExtendSection {
    pub margin_factor: f64,
    pub charts: usize,
}

pub struct ProblemConfig {
    pub s: f64,
    pub n: usize,
    pub omega: Domain,
    pub params: SpaceParams,
    pub u_src: Option<String>,
    pub quad: QuadratureSpec,
    pub verify: VerifySection,
    pub extend: ExtendSection,
    pub trace_box: Option<Domain>,
    pub emit_grid: bool,
    pub grid_resolution: usize,
}

fn expect_len(path: &str, v: &[f64], n: usize) -> Result<(), String> {
    if v.len() == n {
        Ok(())
    } else {
        Err(format!("{path}: expected {n} entr{}, got {}", if n == 1 { "y" } else { "ies" }, v.len()))
    }
}

fn build_domain(raw: &Raw, n: usize) -> Result<Domain, String> {
    let kind = raw.string_at("domain.kind")?;
    match kind.as_str() {
        "interval" | "box" => {
            let lo = raw.coords("domain.lo")?;
            let hi = raw.coords("domain.hi")?;
            expect_len("domain.lo", &lo, n)?;
            expect_len("domain.hi", &hi, n)?;
            if n == 1 {
                Domain::interval(lo[0], hi[0])
            } else {
                Domain::rect(lo, hi)
            }
            .map_err(|e| format!("domain: {e}"))
        }
        "ball" => {
            let center = raw.coords("domain.center")?;
            expect_len("domain.center", &center, n)?;
            let radius = raw.f64("domain.radius")?;
            Domain::ball(center, radius).map_err(|e| format!("domain: {e}"))
        }
        "half_box" => Domain::half_box(n).map_err(|e| format!("domain: {e}")),
        "symmetric_pair" => {
            let lo = raw.coords("domain.lo")?;
            let hi = raw.coords("domain.hi")?;
            expect_len("domain.lo", &lo, n)?;
            expect_len("domain.hi", &hi, n)?;
            Domain::symmetric_pair(lo, hi).map_err(|e| format!("domain: {e}"))
        }
        other => Err(format!(
            "domain.kind: unknown kind {other:?} (expected interval, box, ball, half_box, or symmetric_pair)"
        )),
    }
}

fn build_quad(raw: &Raw, n: usize) -> Result<QuadratureSpec, String> {
    let defaults = QuadratureSpec::default_for_dim(n);
    let rule = match raw.string_or("quadrature.rule", "midpoint")?.as_str() {
        "midpoint" => QuadRule::Midpoint,
        "gauss3" => QuadRule::Gauss3,
        other => {
            return Err(format!(
                "quadrature.rule: unknown rule {other:?} (expected midpoint or gauss3)"
            ))
        }
    };
    let quad = QuadratureSpec {
        cells_per_axis: raw.usize_or("quadrature.cells", defaults.cells_per_axis)?,
        diagonal_refine_depth: raw
            .usize_or("quadrature.diagonal_depth", defaults.diagonal_refine_depth)?,
        rule,
        target_rel_tol: raw.f64_or("quadrature.target_rel_tol", defaults.target_rel_tol)?,
    };
    quad.validate().map_err(|e| format!("quadrature: {e}"))?;
    Ok(quad)
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<ProblemConfig, String> {
        let raw = Raw::load(path)?;
        let s = raw.f64("space.s")?;
        let n = raw.usize_at("space.n")?;
        let omega = build_domain(&raw, n)?;
        let p_src = raw.string_at("exponents.p")?;
        let q_src = raw.string_at("exponents.q")?;
        let p = ExponentField::parse(Arity::TwoPoint, &p_src, omega.clone())
            .map_err(|e| format!("exponents.p: {e}"))?;
        let q = ExponentField::parse(Arity::OnePoint, &q_src, omega.clone())
            .map_err(|e| format!("exponents.q: {e}"))?;
        let params = SpaceParams::new(s, n, p, q).map_err(|e| format!("space: {e}"))?;
        let quad = build_quad(&raw, n)?;

        let u_src = if raw.has("function.u") { Some(raw.string_at("function.u")?) } else { None };

        let r = if raw.has("verify.r") {
            let r_src = raw.string_at("verify.r")?;
            Some(
                ExponentField::parse(Arity::OnePoint, &r_src, omega.clone())
                    .map_err(|e| format!("verify.r: {e}"))?,
            )
        } else {
            None
        };
        let verify = VerifySection {
            check: raw.string_or("verify.check", "all")?,
            cases: raw.usize_or("verify.cases", 50)?,
            seed: raw.u64_or("verify.seed", 7)?,
            r,
        };

        let extend = ExtendSection {
            margin_factor: raw.f64_or("extend.margin_factor", 2.0)?,
            // Intervals carry exactly one chart per endpoint; discs default
            // to a four-chart cover.
            charts: raw.usize_or("extend.charts", if n == 1 { 2 } else { 4 })?,
        };

        let trace_box = if raw.has("trace.lo") || raw.has("trace.hi") {
            let lo = raw.coords("trace.lo")?;
            let hi = raw.coords("trace.hi")?;
            expect_len("trace.lo", &lo, n)?;
            expect_len("trace.hi", &hi, n)?;
            let d = if n == 1 {
                Domain::interval(lo[0], hi[0])
            } else {
                Domain::rect(lo, hi)
            }
            .map_err(|e| format!("trace: {e}"))?;
            Some(d)
        } else {
            None
        };

        Ok(ProblemConfig {
            s,
            n,
            omega,
            params,
            u_src,
            quad,
            verify,
            extend,
            trace_box,
            emit_grid: raw.bool_or("output.grid", false)?,
            grid_resolution: raw.usize_or("output.grid_resolution", 64)?,
        })
    }

    /// Parse the configured function on `domain`; which domain is correct
    /// depends on the command (Omega for norms, the trace box for trace).
    pub fn parse_u(&self, domain: &Domain) -> Result<GridFunction, String> {
        let src = self.u_src.as_ref().ok_or("missing function.u")?;
        GridFunction::parse(src, domain.clone()).map_err(|e| format!("function.u: {e}"))
    }
}
