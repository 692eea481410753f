//! RED quantities in physical units and the original average-queue map.
//!
//! Queue lengths are in packets (as reals), capacity in kB/s, round-trip time
//! in seconds and packet size in kB.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network parameters of the single-bottleneck model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of TCP connections.
    #[serde(rename = "N")]
    pub n: f64,
    /// Link capacity (kB/s).
    #[serde(rename = "C")]
    pub c: f64,
    /// Round-trip time without queueing delay (s).
    pub d: f64,
    /// Packet size (kB).
    #[serde(rename = "M")]
    pub m: f64,
    /// Buffer size (packets).
    #[serde(rename = "B")]
    pub b: f64,
    /// Throughput constant.
    #[serde(rename = "K", default = "default_k")]
    pub k: f64,
}

fn default_k() -> f64 {
    SystemParams::DEFAULT_K
}

impl SystemParams {
    /// `sqrt(3/2)`.
    pub const DEFAULT_K: f64 = 1.224_744_871_391_589;

    pub fn new(n: f64, c: f64, d: f64, m: f64, b: f64, k: f64) -> Result<Self> {
        let p = SystemParams { n, c, d, m, b, k };
        p.validate()?;
        Ok(p)
    }

    /// Reference university network: N = 1850, C = 321000 kB/s, d = 0.012 s,
    /// M = 1 kB, B = 2000 packets.
    pub fn umh() -> Self {
        SystemParams {
            n: 1850.0,
            c: 321_000.0,
            d: 0.012,
            m: 1.0,
            b: 2000.0,
            k: Self::DEFAULT_K,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("N", self.n),
            ("C", self.c),
            ("d", self.d),
            ("M", self.m),
            ("B", self.b),
            ("K", self.k),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be a finite positive number",
                });
            }
        }
        for (name, value) in [("N", self.n), ("B", self.b)] {
            if value.fract() != 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be an integer",
                });
            }
        }
        Ok(())
    }

    /// `N M K`, the aggregate numerator shared by both drop-probability thresholds.
    fn nmk(&self) -> f64 {
        self.n * self.m * self.k
    }
}

/// Operator controls of classic RED, in packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicControls {
    pub q_min: f64,
    pub q_max: f64,
    pub p_max: f64,
    pub w: f64,
}

impl ClassicControls {
    pub fn new(q_min: f64, q_max: f64, p_max: f64, w: f64, sys: &SystemParams) -> Result<Self> {
        let c = ClassicControls {
            q_min,
            q_max,
            p_max,
            w,
        };
        c.validate(sys)?;
        Ok(c)
    }

    pub fn validate(&self, sys: &SystemParams) -> Result<()> {
        if !(self.q_min >= 0.0 && self.q_min < self.q_max) {
            return Err(Error::InvalidParameter {
                name: "q_min",
                value: self.q_min,
                reason: "must satisfy 0 <= q_min < q_max",
            });
        }
        if !(self.q_max <= sys.b) {
            return Err(Error::InvalidParameter {
                name: "q_max",
                value: self.q_max,
                reason: "must not exceed the buffer size B",
            });
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "p_max",
                value: self.p_max,
                reason: "must lie in (0, 1]",
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
}

/// Piecewise-linear RED drop law.
pub fn drop_prob_classic(q_ave: f64, c: &ClassicControls) -> f64 {
    if q_ave < c.q_min {
        0.0
    } else if q_ave > c.q_max {
        1.0
    } else {
        c.p_max * (q_ave - c.q_min) / (c.q_max - c.q_min)
    }
}

/// Exponentially weighted moving average of the queue length.
pub fn ewma_update(q_old_ave: f64, q_cur: f64, w: f64) -> f64 {
    (1.0 - w) * q_old_ave + w * q_cur
}

/// Stationary TCP throughput `M K / (sqrt(p) d)` in kB/s, leading term only.
pub fn throughput(p: f64, sys: &SystemParams) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain("throughput", format!("p = {p} outside (0, 1]")));
    }
    Ok(sys.m * sys.k / (p.sqrt() * sys.d))
}

/// Drop probability at which aggregate throughput equals the link capacity.
pub fn p_r(sys: &SystemParams) -> f64 {
    (sys.nmk() / (sys.c * sys.d)).powi(2)
}

/// Largest drop probability that still keeps the buffer full.
pub fn p_l(sys: &SystemParams) -> f64 {
    (sys.nmk() / (sys.b * sys.m + sys.c * sys.d)).powi(2)
}

/// Average queue length above which the next queue is empty.
pub fn q_r_ave(sys: &SystemParams, c: &ClassicControls) -> f64 {
    let pr = p_r(sys);
    if pr <= c.p_max {
        (c.q_max - c.q_min) / c.p_max * pr + c.q_min
    } else {
        c.q_max
    }
}

/// Average queue length below which the next queue is full.
pub fn q_l_ave(sys: &SystemParams, c: &ClassicControls) -> f64 {
    (c.q_max - c.q_min) / c.p_max * p_l(sys) + c.q_min
}

/// Queue length produced by drop probability `p` (packets).
pub fn queue_response(p: f64, sys: &SystemParams) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain("queue_response", format!("p = {p} outside (0, 1]")));
    }
    Ok(if p <= p_l(sys) {
        sys.b
    } else if p < p_r(sys) {
        sys.n * sys.k / p.sqrt() - sys.c * sys.d / sys.m
    } else {
        0.0
    })
}

/// True when `p_l < p_max`, the condition for `q_l_ave < q_r_ave` in all cases.
pub fn check_constraint(sys: &SystemParams, c: &ClassicControls) -> bool {
    p_l(sys) < c.p_max
}

/// One step of the average-queue dynamics.
pub fn ranjan_step(q_ave: f64, sys: &SystemParams, c: &ClassicControls) -> Result<f64> {
    if !check_constraint(sys, c) {
        return Err(Error::Constraint(format!(
            "p_l = {:.6} must be below p_max = {}",
            p_l(sys),
            c.p_max
        )));
    }
    if !(0.0..=sys.b).contains(&q_ave) {
        return Err(Error::domain(
            "ranjan_step",
            format!("q_ave = {q_ave} outside [0, {}]", sys.b),
        ));
    }
    let w = c.w;
    let next = if q_ave <= q_l_ave(sys, c) {
        (1.0 - w) * q_ave + w * sys.b
    } else if q_ave < q_r_ave(sys, c) {
        let p = c.p_max * (q_ave - c.q_min) / (c.q_max - c.q_min);
        (1.0 - w) * q_ave + w * (sys.n * sys.k / p.sqrt() - sys.c * sys.d / sys.m)
    } else {
        (1.0 - w) * q_ave
    };
    Ok(next)
}
