//! Checks the hypotheses of the global-stability results for the map and
//! reports which one, if any, certifies that the fixed point attracts all of
//! `[0, 1]`.
//!
//! Nothing here proves instability: a verdict of [`Certificate::None`] only
//! means that no implemented criterion applied.

use std::fmt;

use serde::Serialize;

use crate::gred::NormalizedModel;

/// Margin applied to strict inequalities.
pub const GUARD: f64 = 1e-9;
/// Sample count for derivative scans of the core.
pub const SHAPE_GRID: usize = 10_000;
/// Sample count for the brute-force invariance check of unclassified cores.
pub const DENSE_GRID: usize = 100_000;
/// Two thresholds summing to one within this distance are treated as a 2-cycle.
pub const CYCLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ShapeKind {
    StrictlyIncreasing,
    StrictlyDecreasing,
    UnimodalMin { x_c: f64 },
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShapeMethod {
    /// Convex core, classified by the signs of the end slopes.
    EndSlopes,
    /// Sign changes of the sampled derivative.
    Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeEvidence {
    pub method: ShapeMethod,
    /// `f'(theta_l+)`.
    pub slope_left: f64,
    /// `f'(theta_r-)`; `-inf` when the beta density diverges there.
    pub slope_right: f64,
    pub convex: bool,
    pub sign_changes: usize,
    pub min_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeClass {
    pub kind: ShapeKind,
    pub evidence: ShapeEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoreInvariance {
    pub holds: bool,
    /// Infimum of `f` over the core (limits at the ends included).
    pub inf: f64,
    /// Supremum of `f` over the core.
    pub sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Certificate {
    None,
    MonotoneIncreasing,
    MonotoneDecreasing,
    ConvexDecreasing,
    UnimodalMinLeft,
    UnimodalMinRight,
    ConvexUnimodalRight,
}

impl Certificate {
    pub fn label(&self) -> &'static str {
        match self {
            Certificate::None => "none",
            Certificate::MonotoneIncreasing => "monotone-increasing",
            Certificate::MonotoneDecreasing => "monotone-decreasing",
            Certificate::ConvexDecreasing => "convex-decreasing",
            Certificate::UnimodalMinLeft => "unimodal-min-left",
            Certificate::UnimodalMinRight => "unimodal-min-right",
            Certificate::ConvexUnimodalRight => "convex-unimodal-right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantity {
    pub name: &'static str,
    pub value: f64,
}

fn q(name: &'static str, value: f64) -> Quantity {
    Quantity { name, value }
}

/// One evaluated hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    /// `None` for the preconditions shared by every criterion.
    pub criterion: Certificate,
    pub name: &'static str,
    /// The inequality as checked.
    pub rule: &'static str,
    pub passed: bool,
    pub values: Vec<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub certified_by: Certificate,
    pub x_star: Option<f64>,
    pub shape: ShapeClass,
    pub checklist: Vec<Condition>,
}

impl StabilityVerdict {
    pub fn is_certified(&self) -> bool {
        self.certified_by != Certificate::None
    }

    /// Conditions that the certifying criterion relies on.
    pub fn required_conditions(&self) -> impl Iterator<Item = &Condition> {
        let by = self.certified_by;
        self.checklist
            .iter()
            .filter(move |c| c.criterion == Certificate::None || c.criterion == by)
    }
}

impl fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "certified by: {}", self.certified_by.label())?;
        match self.x_star {
            Some(x) => writeln!(f, "fixed point: {x:.12}")?,
            None => writeln!(f, "fixed point: none")?,
        }
        let shape = match self.shape.kind {
            ShapeKind::StrictlyIncreasing => "strictly increasing".to_string(),
            ShapeKind::StrictlyDecreasing => "strictly decreasing".to_string(),
            ShapeKind::UnimodalMin { x_c } => format!("unimodal, minimum at {x_c:.12}"),
            ShapeKind::Unclassified => "unclassified".to_string(),
        };
        writeln!(
            f,
            "core shape: {shape} (convex: {})",
            self.shape.evidence.convex
        )?;
        let mut current = None;
        for c in &self.checklist {
            if current != Some(c.criterion) {
                let header = match c.criterion {
                    Certificate::None => "common preconditions".to_string(),
                    other => format!("criterion {}", other.label()),
                };
                writeln!(f, "[{header}]")?;
                current = Some(c.criterion);
            }
            let values = c
                .values
                .iter()
                .map(|v| format!("{}={:.9}", v.name, v.value))
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(
                f,
                "  {} {}: {}  ({values})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.rule
            )?;
        }
        Ok(())
    }
}

fn core_grid(m: &NormalizedModel, n: usize) -> impl Iterator<Item = f64> + '_ {
    let (lo, hi) = (m.theta_l(), m.theta_r());
    (1..=n).map(move |i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
}

/// Derivative scan of the core.
fn slope_samples(m: &NormalizedModel) -> Vec<(f64, f64)> {
    core_grid(m, SHAPE_GRID)
        .map(|x| (x, m.core_slope(x)))
        .collect()
}

/// Bisection for the zero of the increasing core slope between `lo` and `hi`.
fn locate_critical(m: &NormalizedModel, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m.core_slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sufficient convexity test from the position of `theta_r`:
/// `z(theta_r) <= a/(a+b)` when `a <= b`, `z(theta_r) <= (a+2)/(a+b+4)` otherwise.
pub fn convexity_sufficient(m: &NormalizedModel) -> bool {
    let c = m.controls();
    let (a, b) = (c.shape.alpha(), c.shape.beta());
    let z_r = (m.theta_r() - c.x_min) / (c.x_max - c.x_min);
    let bound = if a <= b {
        a / (a + b)
    } else {
        (a + 2.0) / (a + b + 4.0)
    };
    z_r <= bound
}

/// Pointwise convexity test: `3J - 2h > 0` on a grid of the core.
pub fn convexity_pointwise(m: &NormalizedModel) -> bool {
    core_grid(m, SHAPE_GRID).all(|x| m.convexity_indicator(x) > 0.0)
}

fn is_convex(m: &NormalizedModel) -> bool {
    convexity_sufficient(m) || convexity_pointwise(m)
}

pub fn classify_shape(m: &NormalizedModel) -> ShapeClass {
    classify_with(m, is_convex(m))
}

fn classify_with(m: &NormalizedModel, convex: bool) -> ShapeClass {
    let slope_left = m.core_slope(m.theta_l());
    let slope_right = m.core_slope(m.theta_r());
    let samples = slope_samples(m);
    let min_slope = samples
        .iter()
        .map(|s| s.1)
        .chain([slope_left, slope_right])
        .fold(f64::INFINITY, f64::min);

    let mut changes = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &(x, s) in samples.iter() {
        if s == 0.0 || s.is_nan() {
            continue;
        }
        if let Some((px, ps)) = prev {
            if (ps < 0.0) != (s < 0.0) {
                changes.push((px, x, ps < 0.0));
            }
        }
        prev = Some((x, s));
    }
    let mut evidence = ShapeEvidence {
        method: ShapeMethod::Sampling,
        slope_left,
        slope_right,
        convex,
        sign_changes: changes.len(),
        min_slope,
    };

    if convex {
        let product = slope_left * slope_right;
        let kind = if product > 0.0 {
            Some(if slope_left > 0.0 {
                ShapeKind::StrictlyIncreasing
            } else {
                ShapeKind::StrictlyDecreasing
            })
        } else if slope_left < 0.0 && slope_right > 0.0 {
            Some(ShapeKind::UnimodalMin {
                x_c: locate_critical(m, m.theta_l(), m.theta_r()),
            })
        } else {
            None
        };
        if let Some(kind) = kind {
            evidence.method = ShapeMethod::EndSlopes;
            return ShapeClass { kind, evidence };
        }
    }

    let kind = match changes.as_slice() {
        [] => match prev {
            Some((_, s)) if s > 0.0 => ShapeKind::StrictlyIncreasing,
            Some(_) => ShapeKind::StrictlyDecreasing,
            None => ShapeKind::Unclassified,
        },
        [(lo, hi, true)] => ShapeKind::UnimodalMin {
            x_c: locate_critical(m, *lo, *hi),
        },
        _ => ShapeKind::Unclassified,
    };
    ShapeClass { kind, evidence }
}

/// Whether `f` maps the open core into itself.
pub fn core_invariant(m: &NormalizedModel) -> CoreInvariance {
    core_invariant_with(m, &classify_shape(m))
}

fn core_invariant_with(m: &NormalizedModel, shape: &ShapeClass) -> CoreInvariance {
    let mut values = vec![m.f_theta_l_plus(), m.f_theta_r_minus()];
    match shape.kind {
        ShapeKind::UnimodalMin { x_c } => values.push(m.core_value(x_c)),
        ShapeKind::Unclassified => values.extend(core_grid(m, DENSE_GRID).map(|x| m.f(x))),
        _ => {}
    }
    if let Some(fp) = m.fixed_point() {
        values.push(fp.x_star);
    }
    let inf = values.iter().copied().fold(f64::INFINITY, f64::min);
    let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    CoreInvariance {
        holds: inf > m.theta_l() + GUARD && sup < m.theta_r() - GUARD,
        inf,
        sup,
    }
}

/// `theta_l + theta_r != 1`, so the thresholds cannot form a 2-cycle.
pub fn endpoints_not_2cycle(m: &NormalizedModel) -> bool {
    (m.theta_l() + m.theta_r() - 1.0).abs() > CYCLE_TOL
}

/// Weight at which `f(theta_l)` and `f(theta_r-)` coincide; above it the
/// left end of the core maps higher than the right end.
pub fn monotonicity_weight_threshold(m: &NormalizedModel) -> f64 {
    let span = m.theta_r() - m.theta_l();
    span / (span + 1.0 - m.excess())
}

/// `(theta_r - theta_l) / (1 - theta_l)`: keeps `f(theta_l+)` below `theta_r`.
pub fn invariance_weight_bound(m: &NormalizedModel) -> f64 {
    (m.theta_r() - m.theta_l()) / (1.0 - m.theta_l())
}

/// Weight bound for a strictly decreasing core.
pub fn decreasing_weight_bound(m: &NormalizedModel) -> f64 {
    let span = m.theta_r() - m.theta_l();
    invariance_weight_bound(m).min(span / (m.theta_r() - m.excess()))
}

/// Weight bound for a unimodal core with its minimum right of `x_star`.
pub fn unimodal_right_weight_bound(m: &NormalizedModel, x_star: f64) -> f64 {
    invariance_weight_bound(m).min((x_star - m.theta_l()) / (x_star - m.excess()))
}

/// `(1 - f'(x_star)) / w`.
pub fn slope_ratio(m: &NormalizedModel, x_star: f64) -> f64 {
    (1.0 - m.core_slope(x_star)) / m.w()
}

/// Relaxed weight bound for a convex unimodal core with its minimum right of `x_star`.
pub fn convex_right_weight_bound(m: &NormalizedModel, x_star: f64) -> f64 {
    let excess = m.excess();
    let ratio = slope_ratio(m, x_star);
    let relief = (m.theta_l() - excess).max(0.0) / ratio;
    invariance_weight_bound(m).min((x_star - m.theta_l() + relief) / (x_star - excess))
}

struct Checklist {
    items: Vec<Condition>,
}

impl Checklist {
    fn push(
        &mut self,
        criterion: Certificate,
        name: &'static str,
        rule: &'static str,
        passed: bool,
        values: Vec<Quantity>,
    ) -> bool {
        self.items.push(Condition {
            criterion,
            name,
            rule,
            passed,
            values,
        });
        passed
    }
}

/// Evaluates every criterion in order and returns the first that passes.
pub fn verdict(m: &NormalizedModel) -> StabilityVerdict {
    let mut list = Checklist { items: Vec::new() };
    let common = Certificate::None;
    let (a1, a2) = (m.a1(), m.a2());
    let c = *m.controls();
    let (tl, tr, w) = (m.theta_l(), m.theta_r(), c.w);
    let excess = m.excess();

    let exists = list.push(
        common,
        "fixed point exists",
        "A1 < A2 + x_max",
        a1 < a2 + c.x_max - GUARD,
        vec![q("A1", a1), q("A2", a2), q("x_max", c.x_max)],
    );
    let convex = is_convex(m);
    let shape = classify_with(m, convex);
    let fixed = m.fixed_point();
    if !exists || fixed.is_none() {
        return StabilityVerdict {
            certified_by: Certificate::None,
            x_star: None,
            shape,
            checklist: list.items,
        };
    }
    let x_star = fixed.map(|fp| fp.x_star).unwrap_or(f64::NAN);

    let inv = core_invariant_with(m, &shape);
    let invariant = list.push(
        common,
        "core is invariant",
        "theta_l < inf f(core), sup f(core) < theta_r",
        inv.holds,
        vec![
            q("inf", inv.inf),
            q("sup", inv.sup),
            q("theta_l", tl),
            q("theta_r", tr),
        ],
    );
    let no_cycle = list.push(
        common,
        "thresholds are not a 2-cycle",
        "theta_l + theta_r != 1",
        endpoints_not_2cycle(m),
        vec![q("theta_l + theta_r", tl + tr)],
    );
    let common_ok = exists && invariant && no_cycle;

    let slope_left = shape.evidence.slope_left;
    let x_c = match shape.kind {
        ShapeKind::UnimodalMin { x_c } => Some(x_c),
        _ => None,
    };

    // increasing core
    {
        let k = Certificate::MonotoneIncreasing;
        let ok = list.push(
            k,
            "core strictly increasing",
            "f' > 0 on core",
            shape.kind == ShapeKind::StrictlyIncreasing,
            vec![q("f'(theta_l+)", slope_left), q("f'(theta_r-)", shape.evidence.slope_right)],
        );
        if common_ok && ok {
            return finish(k, x_star, shape, list);
        }
    }

    let decreasing = shape.kind == ShapeKind::StrictlyDecreasing;
    let dec_bound = decreasing_weight_bound(m);
    // decreasing core, slope bounded below everywhere
    {
        let k = Certificate::MonotoneDecreasing;
        let mut ok = list.push(
            k,
            "core strictly decreasing",
            "f' < 0 on core",
            decreasing,
            vec![q("f'(theta_l+)", slope_left), q("f'(theta_r-)", shape.evidence.slope_right)],
        );
        ok &= list.push(
            k,
            "slope above -1 on core",
            "min f' > -1",
            shape.evidence.min_slope > -1.0 + GUARD,
            vec![q("min f'", shape.evidence.min_slope)],
        );
        ok &= list.push(
            k,
            "weight bound (decreasing core)",
            "w <= min{(theta_r-theta_l)/(1-theta_l), (theta_r-theta_l)/(theta_r-(A1-A2)+)}",
            w <= dec_bound,
            vec![q("w", w), q("bound", dec_bound)],
        );
        if common_ok && ok {
            return finish(k, x_star, shape, list);
        }
    }
    // decreasing convex core: only the left end slope matters
    {
        let k = Certificate::ConvexDecreasing;
        let mut ok = list.push(
            k,
            "core strictly decreasing",
            "f' < 0 on core",
            decreasing,
            vec![],
        );
        ok &= list.push(k, "core convex", "3J - 2h > 0 on core", convex, vec![]);
        ok &= list.push(
            k,
            "left end slope at least -1",
            "f'(theta_l+) >= -1",
            slope_left >= -1.0,
            vec![q("f'(theta_l+)", slope_left)],
        );
        ok &= list.push(
            k,
            "weight bound (decreasing core)",
            "w <= min{(theta_r-theta_l)/(1-theta_l), (theta_r-theta_l)/(theta_r-(A1-A2)+)}",
            w <= dec_bound,
            vec![q("w", w), q("bound", dec_bound)],
        );
        if common_ok && ok {
            return finish(k, x_star, shape, list);
        }
    }

    let inv_bound = invariance_weight_bound(m);
    // unimodal, minimum left of the fixed point
    {
        let k = Certificate::UnimodalMinLeft;
        let mut ok = list.push(
            k,
            "minimum at or left of fixed point",
            "x_c <= x*",
            x_c.is_some_and(|xc| xc <= x_star),
            vec![q("x_c", x_c.unwrap_or(f64::NAN)), q("x*", x_star)],
        );
        ok &= list.push(
            k,
            "weight bound (invariance)",
            "w <= (theta_r-theta_l)/(1-theta_l)",
            w <= inv_bound,
            vec![q("w", w), q("bound", inv_bound)],
        );
        ok &= list.push(
            k,
            "existence margin",
            "A1 <= A2 + x_max",
            a1 <= a2 + c.x_max,
            vec![q("A1", a1), q("A2 + x_max", a2 + c.x_max)],
        );
        if common_ok && ok {
            return finish(k, x_star, shape, list);
        }
    }

    let right_of_fixed = x_c.is_some_and(|xc| xc > x_star);
    // unimodal, minimum right of the fixed point
    {
        let k = Certificate::UnimodalMinRight;
        let mut ok = list.push(
            k,
            "minimum right of fixed point",
            "x_c > x*",
            right_of_fixed,
            vec![q("x_c", x_c.unwrap_or(f64::NAN)), q("x*", x_star)],
        );
        let left_min = x_c
            .map(|xc| {
                core_grid(m, SHAPE_GRID)
                    .take_while(|&x| x < xc)
                    .map(|x| m.core_slope(x))
                    .fold(slope_left, f64::min)
            })
            .unwrap_or(f64::NAN);
        ok &= list.push(
            k,
            "slope above -1 left of minimum",
            "min f' on (theta_l, x_c) > -1",
            left_min > -1.0 + GUARD,
            vec![q("min f'", left_min)],
        );
        if x_star > excess + GUARD {
            let bound = unimodal_right_weight_bound(m, x_star);
            ok &= list.push(
                k,
                "fixed point above jump excess",
                "x* > (A1-A2)+",
                true,
                vec![q("x*", x_star), q("(A1-A2)+", excess)],
            );
            ok &= list.push(
                k,
                "weight bound (minimum right of fixed point)",
                "w <= min{(theta_r-theta_l)/(1-theta_l), (x*-theta_l)/(x*-(A1-A2)+)}",
                w <= bound,
                vec![q("w", w), q("bound", bound)],
            );
        } else {
            ok &= list.push(
                k,
                "fixed point at or below jump excess",
                "x* <= (A1-A2)+ < x_max",
                x_star <= excess && excess < c.x_max - GUARD,
                vec![q("x*", x_star), q("(A1-A2)+", excess), q("x_max", c.x_max)],
            );
            ok &= list.push(
                k,
                "weight bound (invariance)",
                "w <= (theta_r-theta_l)/(1-theta_l)",
                w <= inv_bound,
                vec![q("w", w), q("bound", inv_bound)],
            );
        }
        if common_ok && ok {
            return finish(k, x_star, shape, list);
        }
    }
    // convex unimodal, minimum right of the fixed point, relaxed weight bound
    {
        let k = Certificate::ConvexUnimodalRight;
        let mut ok = list.push(
            k,
            "minimum right of fixed point",
            "x_c > x*",
            right_of_fixed,
            vec![q("x_c", x_c.unwrap_or(f64::NAN)), q("x*", x_star)],
        );
        ok &= list.push(k, "core convex", "3J - 2h > 0 on core", convex, vec![]);
        ok &= list.push(
            k,
            "fixed point above jump excess",
            "(A1-A2)+ < x*",
            excess < x_star - GUARD,
            vec![q("x*", x_star), q("(A1-A2)+", excess)],
        );
        ok &= list.push(
            k,
            "left end slope at least -1",
            "f'(theta_l+) >= -1",
            slope_left >= -1.0,
            vec![q("f'(theta_l+)", slope_left)],
        );
        let bound = convex_right_weight_bound(m, x_star);
        ok &= list.push(
            k,
            "relaxed weight bound",
            "w <= min{(theta_r-theta_l)/(1-theta_l), (x*-theta_l+(theta_l-(A1-A2)+)+/m)/(x*-(A1-A2)+)}, m=(1-f'(x*))/w",
            w <= bound,
            vec![
                q("w", w),
                q("bound", bound),
                q("m", slope_ratio(m, x_star)),
            ],
        );
        if common_ok && ok {
            return finish(k, x_star, shape, list);
        }
    }

    finish(Certificate::None, x_star, shape, list)
}

fn finish(by: Certificate, x_star: f64, shape: ShapeClass, list: Checklist) -> StabilityVerdict {
    StabilityVerdict {
        certified_by: by,
        x_star: Some(x_star),
        shape,
        checklist: list.items,
    }
}
