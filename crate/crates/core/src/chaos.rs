//! Orbits, Lyapunov exponents and the three-point orbit chain that implies
//! chaos in the sense of Li and Yorke.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gred::NormalizedModel;

/// States closer than this to a threshold are left out of the Lyapunov sum.
pub const KINK_SKIP: f64 = 1e-9;
/// Tolerance for the two analytic steps of the chain construction.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

pub const DEFAULT_TRANSIENT: usize = 500;
pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_LYAPUNOV_SAMPLES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub x0: f64,
    pub transient: usize,
    pub samples: usize,
}

impl OrbitConfig {
    pub fn new(x0: f64, transient: usize, samples: usize) -> Result<Self> {
        let cfg = OrbitConfig {
            x0,
            transient,
            samples,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 500 discarded iterates, 50 kept.
    pub fn diagram(x0: f64) -> Self {
        OrbitConfig {
            x0,
            transient: DEFAULT_TRANSIENT,
            samples: DEFAULT_SAMPLES,
        }
    }

    /// 500 discarded iterates, 5000 averaged.
    pub fn lyapunov(x0: f64) -> Self {
        OrbitConfig {
            x0,
            transient: DEFAULT_TRANSIENT,
            samples: DEFAULT_LYAPUNOV_SAMPLES,
        }
    }

    pub fn with_x0(self, x0: f64) -> Self {
        OrbitConfig { x0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(Error::InvalidParameter {
                name: "x0",
                value: self.x0,
                reason: "must lie in [0, 1]",
            });
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter {
                name: "samples",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Discards `transient` iterates, keeps the next `keep` states and averages
/// `ln|f'|` over the next `averaged` states (both counted from the same start).
fn trace(
    m: &NormalizedModel,
    x0: f64,
    transient: usize,
    keep: usize,
    averaged: usize,
) -> (Vec<f64>, f64) {
    let mut x = x0;
    for _ in 0..transient {
        x = m.f(x);
    }
    let (tl, tr) = (m.theta_l(), m.theta_r());
    let mut out = Vec::with_capacity(keep);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut zero = false;
    for k in 0..keep.max(averaged) {
        x = m.f(x);
        if k < keep {
            out.push(x);
        }
        if k < averaged && !zero && (x - tl).abs() >= KINK_SKIP && (x - tr).abs() >= KINK_SKIP {
            let d = branch_slope(m, x).abs();
            if d == 0.0 {
                zero = true;
            } else {
                sum += d.ln();
                count += 1;
            }
        }
    }
    let lyap = if zero {
        f64::NEG_INFINITY
    } else if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    };
    (out, lyap)
}

/// The `samples` states that follow `transient` discarded iterations.
pub fn iterate(m: &NormalizedModel, cfg: &OrbitConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(trace(m, cfg.x0, cfg.transient, cfg.samples, 0).0)
}

/// `max - min` of an orbit sample.
pub fn diameter(orbit: &[f64]) -> f64 {
    let (lo, hi) = orbit
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo
}

/// Derivative of the branch containing `x`; `-inf` where the core slope diverges.
fn branch_slope(m: &NormalizedModel, x: f64) -> f64 {
    if x <= m.theta_l() || x >= m.theta_r() {
        1.0 - m.w()
    } else {
        m.core_slope(x)
    }
}

/// Mean of `ln|f'|` along the post-transient orbit.
///
/// States within [`KINK_SKIP`] of a threshold are skipped and the mean is
/// taken over the remaining ones. A vanishing derivative gives `-inf`.
pub fn lyapunov(m: &NormalizedModel, cfg: &OrbitConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(trace(m, cfg.x0, cfg.transient, 0, cfg.samples).1)
}

/// Post-transient orbit sample together with a Lyapunov estimate over
/// `averaged` states of the same orbit.
pub fn orbit_and_lyapunov(
    m: &NormalizedModel,
    cfg: &OrbitConfig,
    averaged: usize,
) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    Ok(trace(m, cfg.x0, cfg.transient, cfg.samples, averaged))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainCase {
    /// `w < (theta_r - theta_l) / theta_r`: the third iterate lands in the core.
    I,
    /// Otherwise: the third iterate stays on the left linear branch.
    II,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiYorkeCertificate {
    /// False when continuity or `w < 1 - theta_r` fails; the remaining fields are then unset.
    pub applicable: bool,
    pub reason: Option<String>,
    pub x0: f64,
    pub case: Option<ChainCase>,
    /// `(f(x0), f^2(x0), f^3(x0))`.
    pub orbit: [f64; 3],
    /// `f(x0) = theta_r` and `f^2(x0) = (1 - w) theta_r` within [`CONSTRUCTION_TOL`].
    pub construction_ok: bool,
    /// `f^3(x0) >= x0 > f(x0) > f^2(x0)`, evaluated directly.
    pub exact_chain_holds: bool,
    /// Case I first-order bound `theta_r sqrt(I(z(theta_r))) <= A1/3`; reported only.
    pub case_one_bound: Option<bool>,
    /// Case II bound `theta_r <= (1 - w)/(3 - w + w^2)`.
    pub case_two_bound: Option<bool>,
    /// `A1 <= A2`, i.e. the map is continuous at `theta_r`.
    pub continuity_ok: bool,
}

impl LiYorkeCertificate {
    fn not_applicable(continuity_ok: bool, reason: String) -> Self {
        LiYorkeCertificate {
            applicable: false,
            reason: Some(reason),
            x0: f64::NAN,
            case: None,
            orbit: [f64::NAN; 3],
            construction_ok: false,
            exact_chain_holds: false,
            case_one_bound: None,
            case_two_bound: None,
            continuity_ok,
        }
    }
}

/// `f^3(x0) >= x0 > f(x0) > f^2(x0)`.
pub fn chain_holds(x0: f64, orbit: [f64; 3]) -> bool {
    orbit[2] >= x0 && x0 > orbit[0] && orbit[0] > orbit[1]
}

/// Checks the orbit chain from `x0 = theta_r / (1 - w)`.
pub fn li_yorke_certificate(m: &NormalizedModel) -> LiYorkeCertificate {
    let (a1, a2) = (m.a1(), m.a2());
    let (tl, tr, w) = (m.theta_l(), m.theta_r(), m.w());
    let continuity_ok = a1 <= a2;
    if !continuity_ok {
        return LiYorkeCertificate::not_applicable(
            false,
            format!("map is discontinuous at theta_r: A1 = {a1} > A2 = {a2}"),
        );
    }
    if w >= 1.0 - tr {
        return LiYorkeCertificate::not_applicable(
            true,
            format!("w = {w} is not below 1 - theta_r = {}", 1.0 - tr),
        );
    }
    let x0 = tr / (1.0 - w);
    let f1 = m.f(x0);
    let f2 = m.f(f1);
    let f3 = m.f(f2);
    let orbit = [f1, f2, f3];
    let construction_ok =
        (f1 - tr).abs() <= CONSTRUCTION_TOL && (f2 - (1.0 - w) * tr).abs() <= CONSTRUCTION_TOL;
    let case = if w < (tr - tl) / tr {
        ChainCase::I
    } else {
        ChainCase::II
    };
    let (case_one_bound, case_two_bound) = match case {
        ChainCase::I => {
            let i = m.controls().shape;
            let z = m.z_of_x(tr).unwrap_or(1.0);
            let reg = crate::special::reg_unchecked(i, z);
            (Some(tr * reg.sqrt() <= a1 / 3.0), None)
        }
        ChainCase::II => (None, Some(tr <= (1.0 - w) / (3.0 - w + w * w))),
    };
    LiYorkeCertificate {
        applicable: true,
        reason: None,
        x0,
        case: Some(case),
        orbit,
        construction_ok,
        exact_chain_holds: chain_holds(x0, orbit),
        case_one_bound,
        case_two_bound,
        continuity_ok,
    }
}
