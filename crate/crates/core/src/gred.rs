//! The generalized, normalized RED map `f : [0,1] -> [0,1]`.
//!
//! The state is the average queue length divided by the buffer size. The
//! drop law replaces the linear ramp of classic RED with `p_max * I_{a,b}(z)`,
//! where `z` is the position of the state inside `[x_min, x_max]`. The map is
//! affine on `[0, theta_l]` and `[theta_r, 1]`, and nonlinear on the dynamical
//! core `(theta_l, theta_r)`.

use serde::{Deserialize, Serialize};

use crate::classic::SystemParams;
use crate::error::{Error, Result};
use crate::special::{self, BetaShape};

/// Operator-tunable controls in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub p_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub w: f64,
    #[serde(flatten)]
    pub shape: BetaShape,
}

impl ControlParams {
    pub fn new(p_max: f64, x_min: f64, x_max: f64, w: f64, shape: BetaShape) -> Result<Self> {
        let c = ControlParams {
            p_max,
            x_min,
            x_max,
            w,
            shape,
        };
        c.validate()?;
        Ok(c)
    }

    /// Reference controls `w = 0.15`, `x_min = 0.2`, `x_max = 0.6` with the
    /// given `p_max` and shape.
    pub fn reference(p_max: f64, shape: BetaShape) -> Self {
        ControlParams {
            p_max,
            x_min: 0.2,
            x_max: 0.6,
            w: 0.15,
            shape,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "p_max",
                value: self.p_max,
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.x_min >= 0.0 && self.x_min < self.x_max) {
            return Err(Error::InvalidParameter {
                name: "x_min",
                value: self.x_min,
                reason: "must satisfy 0 <= x_min < x_max",
            });
        }
        if !(self.x_max <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "x_max",
                value: self.x_max,
                reason: "must not exceed 1",
            });
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::InvalidParameter {
                name: "w",
                value: self.w,
                reason: "must lie in (0, 1)",
            });
        }
        Ok(())
    }

    pub fn with_w(self, w: f64) -> Self {
        ControlParams { w, ..self }
    }
}

/// Which one-sided derivative to take at a branch point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Dimensionless model with its thresholds; immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedModel {
    a1: f64,
    a2: f64,
    controls: ControlParams,
    theta_l: f64,
    theta_r: f64,
    continuous_at_theta_r: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub x_star: f64,
    /// `f(x_star) - x_star`.
    pub residual: f64,
}

/// `A1 = N K / (sqrt(p_max) B)`.
pub fn a1_of(sys: &SystemParams, p_max: f64) -> f64 {
    sys.n * sys.k / (p_max.sqrt() * sys.b)
}

/// `A2 = C d / (M B)`.
pub fn a2_of(sys: &SystemParams) -> f64 {
    sys.c * sys.d / (sys.m * sys.b)
}

/// Builds the normalized model from physical parameters.
pub fn normalize(sys: &SystemParams, c: &ControlParams) -> Result<NormalizedModel> {
    sys.validate()?;
    make_model(a1_of(sys, c.p_max), a2_of(sys), c)
}

/// Builds the model directly from the two dimensionless constants.
pub fn make_model(a1: f64, a2: f64, c: &ControlParams) -> Result<NormalizedModel> {
    c.validate()?;
    if !(a1 > 0.0 && a1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "A1",
            value: a1,
            reason: "must be a finite positive number",
        });
    }
    if !(a2 > 0.0 && a2.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "A2",
            value: a2,
            reason: "must be a finite positive number",
        });
    }
    if a1 >= a2 + 1.0 {
        return Err(Error::Constraint(format!(
            "A1 = {a1} must be below A2 + 1 = {}",
            a2 + 1.0
        )));
    }
    let width = c.x_max - c.x_min;
    let z1 = (a1 / (a2 + 1.0)).powi(2);
    let theta_l = width * special::inv_unchecked(c.shape, z1) + c.x_min;
    let z2 = (a1 / a2).powi(2);
    let theta_r = if z2 <= 1.0 {
        width * special::inv_unchecked(c.shape, z2) + c.x_min
    } else {
        c.x_max
    };
    if !(theta_l > c.x_min) {
        return Err(Error::Constraint(format!(
            "lower core threshold collapses onto x_min = {} (shape too extreme for double precision)",
            c.x_min
        )));
    }
    if !(theta_l < theta_r && theta_r <= c.x_max) {
        return Err(Error::Constraint(format!(
            "degenerate core: theta_l = {theta_l}, theta_r = {theta_r}"
        )));
    }
    Ok(NormalizedModel {
        a1,
        a2,
        controls: *c,
        theta_l,
        theta_r,
        continuous_at_theta_r: a1 <= a2,
    })
}

impl NormalizedModel {
    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn controls(&self) -> &ControlParams {
        &self.controls
    }

    pub fn w(&self) -> f64 {
        self.controls.w
    }

    pub fn shape(&self) -> BetaShape {
        self.controls.shape
    }

    pub fn theta_l(&self) -> f64 {
        self.theta_l
    }

    pub fn theta_r(&self) -> f64 {
        self.theta_r
    }

    pub fn continuous_at_theta_r(&self) -> bool {
        self.continuous_at_theta_r
    }

    /// `(A1 - A2)^+`, the size of the jump at `theta_r` divided by `w`.
    pub fn excess(&self) -> f64 {
        (self.a1 - self.a2).max(0.0)
    }

    /// Same model with a different averaging weight; thresholds do not depend on `w`.
    pub fn with_w(&self, w: f64) -> Result<NormalizedModel> {
        let controls = self.controls.with_w(w);
        controls.validate()?;
        Ok(NormalizedModel { controls, ..*self })
    }

    fn width(&self) -> f64 {
        self.controls.x_max - self.controls.x_min
    }

    /// Position of `x` inside `[x_min, x_max]`.
    pub fn z_of_x(&self, x: f64) -> Result<f64> {
        let c = &self.controls;
        if !(c.x_min..=c.x_max).contains(&x) {
            return Err(Error::domain(
                "z_of_x",
                format!("x = {x} outside [{}, {}]", c.x_min, c.x_max),
            ));
        }
        Ok(self.z_unchecked(x))
    }

    fn z_unchecked(&self, x: f64) -> f64 {
        ((x - self.controls.x_min) / self.width()).clamp(0.0, 1.0)
    }

    /// Drop probability `p_max * I(z(x))`, saturated outside `[x_min, x_max]`.
    pub fn drop_prob(&self, x: f64) -> f64 {
        let c = &self.controls;
        if x < c.x_min {
            0.0
        } else if x > c.x_max {
            c.p_max
        } else {
            c.p_max * special::reg_unchecked(c.shape, self.z_unchecked(x))
        }
    }

    /// The core branch formula, evaluated on the closure `[theta_l, theta_r]`.
    pub(crate) fn core_value(&self, x: f64) -> f64 {
        let w = self.controls.w;
        let i = special::reg_unchecked(self.controls.shape, self.z_unchecked(x));
        (1.0 - w) * x + w * (self.a1 / i.sqrt() - self.a2)
    }

    /// The map. `theta_l` belongs to the left branch and `theta_r` to the right one.
    pub fn f(&self, x: f64) -> f64 {
        let w = self.controls.w;
        if x <= self.theta_l {
            (1.0 - w) * x + w
        } else if x < self.theta_r {
            self.core_value(x)
        } else {
            (1.0 - w) * x
        }
    }

    /// `f(theta_l+)`: the left branch value, by continuity.
    pub fn f_theta_l_plus(&self) -> f64 {
        (1.0 - self.controls.w) * self.theta_l + self.controls.w
    }

    /// `f(theta_r-)`: limit of the core branch at its right end.
    pub fn f_theta_r_minus(&self) -> f64 {
        self.core_value(self.theta_r)
    }

    /// Core slope, possibly `-inf` where the beta density diverges.
    pub(crate) fn core_slope(&self, x: f64) -> f64 {
        let c = &self.controls;
        let z = self.z_unchecked(x);
        let i = special::reg_unchecked(c.shape, z);
        let dens = special::density_unchecked(c.shape, z);
        let w = c.w;
        1.0 - w * (1.0 + self.a1 / (2.0 * self.width()) * dens / (i * i.sqrt()))
    }

    /// Derivative of the branch that contains `x`.
    pub fn f_prime(&self, x: f64) -> Result<f64> {
        if x <= self.theta_l || x >= self.theta_r {
            Ok(1.0 - self.controls.w)
        } else {
            self.finite_slope(x)
        }
    }

    /// One-sided derivative; at `theta_l` and `theta_r` picks the branch on `side`.
    pub fn f_prime_side(&self, x: f64, side: Side) -> Result<f64> {
        let in_core = match side {
            Side::Left => x > self.theta_l && x <= self.theta_r,
            Side::Right => x >= self.theta_l && x < self.theta_r,
        };
        if in_core {
            self.finite_slope(x)
        } else {
            Ok(1.0 - self.controls.w)
        }
    }

    fn finite_slope(&self, x: f64) -> Result<f64> {
        let s = self.core_slope(x);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::UnboundedDerivative { x })
        }
    }

    /// Second derivative inside the core.
    pub fn f_second(&self, x: f64) -> Result<f64> {
        if !(x > self.theta_l && x < self.theta_r) {
            return Err(Error::domain(
                "f_second",
                format!(
                    "x = {x} outside the core ({}, {})",
                    self.theta_l, self.theta_r
                ),
            ));
        }
        let c = &self.controls;
        let z = self.z_unchecked(x);
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::UnboundedDerivative { x });
        }
        let i = special::reg_unchecked(c.shape, z);
        let dens = special::density_unchecked(c.shape, z);
        let j = dens / i;
        let h = special::log_slope_unchecked(c.shape, z);
        let width = self.width();
        Ok(c.w * self.a1 / (4.0 * width * width) * dens / (i * i.sqrt()) * (3.0 * j - 2.0 * h))
    }

    /// `3 J(z(x)) - 2 h(z(x))`, whose sign is the sign of `f''` in the core.
    pub fn convexity_indicator(&self, x: f64) -> f64 {
        let c = &self.controls;
        let z = self.z_unchecked(x);
        let i = special::reg_unchecked(c.shape, z);
        let dens = special::density_unchecked(c.shape, z);
        3.0 * dens / i - 2.0 * special::log_slope_unchecked(c.shape, z)
    }

    /// True when a fixed point exists, i.e. `A1 < A2 + x_max`.
    pub fn has_fixed_point(&self) -> bool {
        self.a1 < self.a2 + self.controls.x_max
    }

    /// The unique fixed point in the core, if any.
    ///
    /// Bisection on `A1 / sqrt(I(z(x))) - x - A2`, which is strictly decreasing
    /// on the core.
    pub fn fixed_point(&self) -> Option<FixedPoint> {
        if !self.has_fixed_point() {
            return None;
        }
        let shape = self.controls.shape;
        let gap = |x: f64| {
            let i = special::reg_unchecked(shape, self.z_unchecked(x));
            self.a1 / i.sqrt() - x - self.a2
        };
        const EDGE: f64 = 1e-12;
        let mut lo = self.theta_l + EDGE;
        let mut hi = self.theta_r - EDGE;
        if !(gap(lo) > 0.0) {
            lo = self.theta_l;
        }
        if !(gap(hi) < 0.0) {
            hi = self.theta_r;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 {
                break;
            }
            if gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x_star = 0.5 * (lo + hi);
        Some(FixedPoint {
            x_star,
            residual: self.f(x_star) - x_star,
        })
    }
}
