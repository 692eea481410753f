#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use red_dynamics::classic::SystemParams;
use red_dynamics::gred::{normalize, ControlParams, NormalizedModel};
use red_dynamics::special::{inc_beta_reg, BetaShape};

/// Real root of `(x + a2)^2 (x - x_min) = a1^2 width` by Cardano's formula.
pub fn cubic_fixed_point(a1: f64, a2: f64, x_min: f64, width: f64) -> f64 {
    // u = x + a2 solves u^3 - s u^2 - r = 0
    let s = a2 + x_min;
    let r = a1 * a1 * width;
    // u = t + s/3 gives t^3 + p t + q = 0
    let p = -s * s / 3.0;
    let q = -2.0 * s.powi(3) / 27.0 - r;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    assert!(disc > 0.0);
    let t = (-q / 2.0 + disc.sqrt()).cbrt() + (-q / 2.0 - disc.sqrt()).cbrt();
    t + s / 3.0 - a2
}

/// Number of values in `orbit` that differ by more than `tol`.
pub fn distinct(orbit: &[f64], tol: f64) -> usize {
    let mut v = orbit.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= tol);
    v.len()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random reference-network model with random controls and shape; `None`
/// when the draw does not give a valid model.
pub fn random_model(rng: &mut ChaCha8Rng) -> Option<NormalizedModel> {
    let mut sys = SystemParams::umh();
    sys.n = rng.gen_range(800..2600) as f64;
    let p_max = rng.gen_range(0.2..1.0);
    let x_min = rng.gen_range(0.0..0.5);
    let x_max = rng.gen_range((x_min + 0.05)..1.0);
    let w = log_uniform(rng, 1e-3, 0.9);
    let shape = BetaShape::new(log_uniform(rng, 0.1, 10.0), log_uniform(rng, 0.1, 10.0)).ok()?;
    let c = ControlParams::new(p_max, x_min, x_max, w, shape).ok()?;
    normalize(&sys, &c).ok()
}

/// Whether some double within 64 ulps of `z` maps to within `tol` of `y`.
pub fn double_within(s: BetaShape, z: f64, y: f64, tol: f64) -> bool {
    let mut lo = z;
    let mut hi = z;
    for _ in 0..64 {
        lo = if lo > 0.0 { f64::from_bits(lo.to_bits() - 1) } else { lo };
        hi = if hi < 1.0 { f64::from_bits(hi.to_bits() + 1) } else { hi };
        for c in [lo, hi] {
            if (inc_beta_reg(s, c).unwrap() - y).abs() <= tol {
                return true;
            }
        }
    }
    false
}
