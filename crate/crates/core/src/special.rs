//! Regularized incomplete beta function `I_{a,b}(z)`, its inverse and density,
//! plus the two auxiliary ratios used by the convexity criteria of the map.
//!
//! The forward function is evaluated with the usual continued fraction
//! (modified Lentz), using the reflection `I_{a,b}(z) = 1 - I_{b,a}(1-z)` above
//! `z = (a+1)/(a+b+2)`. If the fraction fails to converge the value is obtained
//! by adaptive quadrature of the integral after a power substitution that
//! removes the endpoint singularities.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const INV_MAX_ITER: usize = 400;

/// Shape parameters `(alpha, beta)` of the beta distribution function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeParams", into = "ShapeParams")]
pub struct BetaShape {
    alpha: f64,
    beta: f64,
    ln_beta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ShapeParams {
    alpha: f64,
    beta: f64,
}

impl TryFrom<ShapeParams> for BetaShape {
    type Error = Error;
    fn try_from(p: ShapeParams) -> Result<Self> {
        BetaShape::new(p.alpha, p.beta)
    }
}

impl From<BetaShape> for ShapeParams {
    fn from(s: BetaShape) -> Self {
        ShapeParams {
            alpha: s.alpha,
            beta: s.beta,
        }
    }
}

impl BetaShape {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must be a finite positive number",
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
                reason: "must be a finite positive number",
            });
        }
        let ln_beta = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
        Ok(BetaShape {
            alpha,
            beta,
            ln_beta,
        })
    }

    /// The uniform shape `alpha = beta = 1`, for which `I(z) = z`.
    pub fn uniform() -> Self {
        BetaShape {
            alpha: 1.0,
            beta: 1.0,
            ln_beta: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Natural log of the complete beta function `B(alpha, beta)`.
    pub fn ln_beta(&self) -> f64 {
        self.ln_beta
    }

    pub fn is_uniform(&self) -> bool {
        self.alpha == 1.0 && self.beta == 1.0
    }

    fn swapped(&self) -> BetaShape {
        BetaShape {
            alpha: self.beta,
            beta: self.alpha,
            ln_beta: self.ln_beta,
        }
    }
}

fn check_unit(function: &'static str, z: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(Error::domain(function, format!("argument {z} outside [0, 1]")))
    }
}

fn check_open_unit(function: &'static str, z: f64) -> Result<()> {
    if z > 0.0 && z < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(function, format!("argument {z} outside (0, 1)")))
    }
}

/// `I_{alpha,beta}(z)` for `z` in `[0, 1]`.
pub fn inc_beta_reg(shape: BetaShape, z: f64) -> Result<f64> {
    check_unit("inc_beta_reg", z)?;
    Ok(reg_unchecked(shape, z))
}

/// Hot-path evaluation; the caller guarantees `0 <= z <= 1`.
pub(crate) fn reg_unchecked(shape: BetaShape, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let (a, b) = (shape.alpha, shape.beta);
    if a == 1.0 && b == 1.0 {
        return z;
    }
    if b == 1.0 {
        return z.powf(a);
    }
    if a == 1.0 {
        return -(b * (-z).ln_1p()).exp_m1();
    }
    if z < (a + 1.0) / (a + b + 2.0) {
        match lower_series(shape, z) {
            Some(v) => v,
            None => quadrature_reg(shape, z),
        }
    } else {
        match lower_series(shape.swapped(), 1.0 - z) {
            Some(v) => 1.0 - v,
            None => quadrature_reg(shape, z),
        }
    }
}

/// `front * cf / a`, valid (fast) below the switch point.
fn lower_series(shape: BetaShape, z: f64) -> Option<f64> {
    let (a, b) = (shape.alpha, shape.beta);
    let ln_front = a * z.ln() + b * (-z).ln_1p() - shape.ln_beta;
    let cf = continued_fraction(a, b, z)?;
    Some((ln_front.exp() * cf / a).clamp(0.0, 1.0))
}

fn continued_fraction(a: f64, b: f64, z: f64) -> Option<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * z / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * z / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Some(h);
        }
    }
    None
}

/// Quadrature route for `I(z)`.
///
/// The lower piece uses `t = u^(1/a)`, the upper piece `1 - t = v^(1/b)`, so
/// both integrands are bounded on their ranges.
pub(crate) fn quadrature_reg(shape: BetaShape, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let (a, b) = (shape.alpha, shape.beta);
    let split = z.min(0.5);
    let lower = {
        let g = |u: f64| ((b - 1.0) * (-(u.powf(1.0 / a))).ln_1p()).exp();
        adaptive_simpson(&g, 0.0, split.powf(a), 1e-15) / a
    };
    let upper = if z > 0.5 {
        let g = |v: f64| ((a - 1.0) * (-(v.powf(1.0 / b))).ln_1p()).exp();
        adaptive_simpson(&g, (1.0 - z).powf(b), 0.5f64.powf(b), 1e-15) / b
    } else {
        0.0
    };
    ((lower + upper) / shape.ln_beta.exp()).clamp(0.0, 1.0)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Inverse of `I_{alpha,beta}` on `[0, 1]`.
///
/// Safeguarded Newton iteration inside a bracket that is halved geometrically
/// while it spans several decades and arithmetically afterwards. When the
/// target cannot be reached by any double (extreme shapes near the ends of
/// the interval), the closest representable point is returned.
pub fn inc_beta_reg_inv(shape: BetaShape, y: f64) -> Result<f64> {
    check_unit("inc_beta_reg_inv", y)?;
    Ok(inv_unchecked(shape, y))
}

pub(crate) fn inv_unchecked(shape: BetaShape, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let (a, b) = (shape.alpha, shape.beta);
    if a == 1.0 && b == 1.0 {
        return y;
    }

    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0 - f64::EPSILON / 2.0;
    let f_lo = reg_unchecked(shape, lo) - y;
    if f_lo >= 0.0 {
        return if f_lo < y { lo } else { 0.0 };
    }
    let f_hi = reg_unchecked(shape, hi) - y;
    if f_hi <= 0.0 {
        return if -f_hi <= 1.0 - y { hi } else { 1.0 };
    }

    let mut x = initial_guess(shape, y).clamp(lo, hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..INV_MAX_ITER {
        let fx = reg_unchecked(shape, x) - y;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mid = bracket_midpoint(lo, hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dens = density_unchecked(shape, x);
        let newton = x - fx / dens;
        // Accept the Newton step only if it stays inside the bracket.
        x = if dens.is_finite() && dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            mid
        };
    }
    best.1
}

fn bracket_midpoint(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi / lo > 4.0 {
        lo.sqrt() * hi.sqrt()
    } else {
        lo + 0.5 * (hi - lo)
    }
}

fn initial_guess(shape: BetaShape, y: f64) -> f64 {
    let (a, b) = (shape.alpha, shape.beta);
    let mean = a / (a + b);
    let complete = shape.ln_beta.exp();
    let lower = (y * a * complete).powf(1.0 / a);
    if lower.is_finite() && lower <= mean {
        return lower;
    }
    let upper = 1.0 - ((1.0 - y) * b * complete).powf(1.0 / b);
    if upper.is_finite() && upper >= mean {
        return upper;
    }
    mean
}

/// Beta density `z^(a-1) (1-z)^(b-1) / B(a,b)`, the derivative of `I`.
///
/// Endpoints are accepted when the density stays finite there.
pub fn inc_beta_density(shape: BetaShape, z: f64) -> Result<f64> {
    check_unit("inc_beta_density", z)?;
    let v = density_unchecked(shape, z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(
            "inc_beta_density",
            format!("density diverges at z = {z}"),
        ))
    }
}

pub(crate) fn density_unchecked(shape: BetaShape, z: f64) -> f64 {
    let (a, b) = (shape.alpha, shape.beta);
    let lower = if a == 1.0 { 0.0 } else { (a - 1.0) * z.ln() };
    let upper = if b == 1.0 { 0.0 } else { (b - 1.0) * (-z).ln_1p() };
    (lower + upper - shape.ln_beta).exp()
}

/// `J(z) = I'(z) / I(z)`, positive on `(0, 1)`.
pub fn density_ratio(shape: BetaShape, z: f64) -> Result<f64> {
    check_open_unit("density_ratio", z)?;
    Ok(density_unchecked(shape, z) / reg_unchecked(shape, z))
}

/// `h(z) = (a-1)/z - (b-1)/(1-z)`, the log-derivative of the density.
pub fn density_log_slope(shape: BetaShape, z: f64) -> Result<f64> {
    check_open_unit("density_log_slope", z)?;
    Ok(log_slope_unchecked(shape, z))
}

pub(crate) fn log_slope_unchecked(shape: BetaShape, z: f64) -> f64 {
    (shape.alpha - 1.0) / z - (shape.beta - 1.0) / (1.0 - z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(a: f64, b: f64) -> BetaShape {
        BetaShape::new(a, b).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(BetaShape::new(0.0, 1.0).is_err());
        assert!(BetaShape::new(1.0, -2.0).is_err());
        assert!(BetaShape::new(f64::NAN, 1.0).is_err());
        assert!(serde_json::from_str::<BetaShape>(r#"{"alpha":-1,"beta":1}"#).is_err());
    }

    #[test]
    fn uniform_is_identity() {
        assert_eq!(inc_beta_reg(BetaShape::uniform(), 0.37).unwrap(), 0.37);
        assert_eq!(inc_beta_reg_inv(BetaShape::uniform(), 0.25).unwrap(), 0.25);
        assert_eq!(inc_beta_density(BetaShape::uniform(), 0.3).unwrap(), 1.0);
    }

    #[test]
    fn endpoints() {
        for s in [shape(0.6, 0.4), shape(2.0, 5.0), shape(0.01, 3.0)] {
            assert_eq!(inc_beta_reg(s, 0.0).unwrap(), 0.0);
            assert_eq!(inc_beta_reg(s, 1.0).unwrap(), 1.0);
            assert_eq!(inc_beta_reg_inv(s, 0.0).unwrap(), 0.0);
            assert_eq!(inc_beta_reg_inv(s, 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn domain_errors() {
        let s = shape(0.6, 0.4);
        assert!(inc_beta_reg(s, -0.1).is_err());
        assert!(inc_beta_reg(s, 1.1).is_err());
        assert!(inc_beta_reg(s, f64::NAN).is_err());
        assert!(inc_beta_reg_inv(s, 1.5).is_err());
        assert!(inc_beta_density(s, 0.0).is_err());
        assert!(inc_beta_density(s, 1.0).is_err());
        assert!(density_ratio(s, 0.0).is_err());
        assert!(density_log_slope(s, 1.0).is_err());
        // finite endpoint densities are returned
        assert_eq!(inc_beta_density(shape(2.0, 1.0), 0.0).unwrap(), 0.0);
        assert!((inc_beta_density(shape(2.0, 1.0), 1.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn density_of_linear_shape() {
        // B(2,1) = 1/2, density 2z
        let d = inc_beta_density(shape(2.0, 1.0), 0.5).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ratios_for_simple_shapes() {
        let u = BetaShape::uniform();
        assert!((density_ratio(u, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(density_log_slope(u, 0.5).unwrap(), 0.0);
        assert!((density_log_slope(shape(2.0, 1.0), 0.5).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_fallback_matches_continued_fraction() {
        for (a, b) in [(0.6, 0.4), (2.5, 0.3), (0.05, 4.0), (3.0, 3.0)] {
            let s = shape(a, b);
            for k in 1..20 {
                let z = k as f64 / 20.0;
                let cf = reg_unchecked(s, z);
                let q = quadrature_reg(s, z);
                assert!((cf - q).abs() < 1e-11, "a={a} b={b} z={z}: {cf} vs {q}");
            }
        }
    }

    #[test]
    fn inverse_of_extreme_lower_tail() {
        let s = shape(0.01, 2.0);
        let z = inc_beta_reg_inv(s, 0.2).unwrap();
        assert!(z > 0.0 && z < 1e-50);
        assert!((inc_beta_reg(s, z).unwrap() - 0.2).abs() < 1e-12);
    }
}
