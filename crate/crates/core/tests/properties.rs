mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use red_dynamics::chaos::{self, OrbitConfig};
use red_dynamics::classic::{self, ClassicControls, SystemParams};
use red_dynamics::gred::{make_model, normalize, ControlParams, NormalizedModel};
use red_dynamics::special::{inc_beta_density, inc_beta_reg, inc_beta_reg_inv, BetaShape};
use red_dynamics::stability::{self, Certificate, ShapeKind};
use red_dynamics::sweep::{
    alpha_beta_grid, bifurcation_sweep, w_bif, ModelSpec, SweepAxis, SweepOrbit, SweepParam,
    WbifOutcome, WbifScan,
};

use common::{double_within, random_model};

/// `I_z(alpha, beta)` by double-exponential quadrature, independent of the
/// continued fraction used by the library.
fn quadrature_reg(a: f64, b: f64, z: f64) -> f64 {
    if z > 0.5 {
        return 1.0 - quadrature_reg(b, a, 1.0 - z);
    }
    // t = z tau; tau = 1 / (1 + e^{-2s}), s = (pi/2) sinh u
    let partial = de_sum(|ln_tau, ln_1m_tau, tau| {
        a * ln_tau + ln_1m_tau + (b - 1.0) * (1.0 - z * tau).ln()
    });
    let whole = de_sum(|ln_tau, ln_1m_tau, _| a * ln_tau + b * ln_1m_tau);
    z.powf(a) * partial / whole
}

fn de_sum(log_term: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    for k in -448i32..=448 {
        let u = k as f64 * h;
        let s = std::f64::consts::FRAC_PI_2 * u.sinh();
        let (ln_tau, ln_1m_tau) = if s >= 0.0 {
            let e = (-2.0 * s).exp();
            (-e.ln_1p(), -2.0 * s - e.ln_1p())
        } else {
            let e = (2.0 * s).exp();
            (2.0 * s - e.ln_1p(), -e.ln_1p())
        };
        // the weight d tau / du = tau (1 - tau) pi cosh u is folded into the log
        sum += (log_term(ln_tau, ln_1m_tau, ln_tau.exp())).exp() * std::f64::consts::PI * u.cosh();
    }
    sum * h
}

fn shape_in(lo: f64, hi: f64) -> impl Strategy<Value = BetaShape> {
    (lo..=hi, lo..=hi).prop_map(|(a, b)| BetaShape::new(a, b).unwrap())
}

fn reference(p_max: f64, shape: BetaShape) -> NormalizedModel {
    normalize(&SystemParams::umh(), &ControlParams::reference(p_max, shape)).unwrap()
}

/// Random valid model from a seed.
fn model_from(seed: u64) -> NormalizedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(m) = random_model(&mut rng) {
            return m;
        }
    }
}

proptest! {
    #[test]
    fn forward_matches_quadrature(s in shape_in(0.05, 5.0), z in 0.001f64..0.999) {
        let got = inc_beta_reg(s, z).unwrap();
        let want = quadrature_reg(s.alpha(), s.beta(), z);
        prop_assert!((got - want).abs() <= 1e-12, "I = {got}, quadrature {want}");
    }

    #[test]
    fn forward_matches_statrs(s in shape_in(0.05, 5.0), z in 0.0f64..=1.0) {
        let got = inc_beta_reg(s, z).unwrap();
        let want = statrs::function::beta::beta_reg(s.alpha(), s.beta(), z);
        prop_assert!((got - want).abs() <= 1e-10, "I = {got}, statrs {want}");
    }

    #[test]
    fn forward_is_monotone(s in shape_in(0.05, 5.0), mut zs in prop::collection::vec(0.0f64..=1.0, 2..40)) {
        zs.sort_by(f64::total_cmp);
        zs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let vals: Vec<f64> = zs.iter().map(|&z| inc_beta_reg(s, z).unwrap()).collect();
        for pair in vals.windows(2) {
            // equal only once both have rounded onto an end value
            prop_assert!(pair[0] < pair[1] || (pair[0] == pair[1] && (pair[1] == 1.0 || pair[0] == 0.0)),
                "I not increasing: {pair:?}");
        }
    }

    #[test]
    fn forward_symmetry(s in shape_in(0.05, 5.0), z in 0.0f64..=1.0) {
        let mirror = BetaShape::new(s.beta(), s.alpha()).unwrap();
        let lhs = inc_beta_reg(s, z).unwrap();
        let rhs = 1.0 - inc_beta_reg(mirror, 1.0 - z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn density_is_derivative(s in shape_in(0.05, 5.0), z in 0.05f64..0.95) {
        let h = 1e-6;
        let fd = (inc_beta_reg(s, z + h).unwrap() - inc_beta_reg(s, z - h).unwrap()) / (2.0 * h);
        let d = inc_beta_density(s, z).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6, "density {d}, difference quotient {fd}");
    }

    #[test]
    fn inverse_roundtrip_moderate_shapes(s in shape_in(0.3, 5.0), y in 0.0f64..=1.0) {
        let z = inc_beta_reg_inv(s, y).unwrap();
        prop_assert!((0.0..=1.0).contains(&z));
        let back = inc_beta_reg(s, z).unwrap();
        prop_assert!((back - y).abs() <= 1e-10, "I(I^-1({y})) = {back}");
    }

    #[test]
    fn inverse_is_best_double(s in shape_in(0.05, 5.0), y in 0.0f64..=1.0) {
        let z = inc_beta_reg_inv(s, y).unwrap();
        let err = (inc_beta_reg(s, z).unwrap() - y).abs();
        prop_assert!(err <= 1e-10 || !double_within(s, z, y, 1e-10),
            "error {err} at z = {z} although a nearby double does better");
    }

    #[test]
    fn classic_and_normalized_agree(
        n in 800.0f64..2600.0,
        p_max in 0.2f64..=1.0,
        x_min in 0.0f64..0.5,
        width in 0.05f64..0.5,
        w in 0.001f64..0.9,
        frac in 0.0f64..=1.0,
    ) {
        let sys = SystemParams { n: n.round(), ..SystemParams::umh() };
        let x_max = (x_min + width).min(1.0);
        let c = ControlParams::new(p_max, x_min, x_max, w, BetaShape::uniform()).unwrap();
        let m = normalize(&sys, &c);
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        let cc = ClassicControls::new(x_min * sys.b, x_max * sys.b, p_max, w, &sys).unwrap();
        let q = frac * sys.b;
        let classic_next = classic::ranjan_step(q, &sys, &cc).unwrap();
        prop_assert!((sys.b * m.f(frac) - classic_next).abs() <= 1e-10 * sys.b);
    }

    #[test]
    fn map_stays_in_unit_interval(seed in any::<u64>(), x in 0.0f64..=1.0) {
        let m = model_from(seed);
        let y = m.f(x);
        prop_assert!((0.0..=1.0).contains(&y), "f({x}) = {y}");
    }

    #[test]
    fn fixed_point_does_not_depend_on_w(seed in any::<u64>(), w2 in 0.001f64..0.999) {
        let m = model_from(seed);
        let other = m.with_w(w2).unwrap();
        match (m.fixed_point(), other.fixed_point()) {
            (Some(a), Some(b)) => prop_assert!((a.x_star - b.x_star).abs() <= 1e-12),
            (None, None) => {}
            (a, b) => prop_assert!(false, "existence changed with w: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn end_value_order_matches_weight_threshold(seed in any::<u64>()) {
        let m = model_from(seed);
        let t = stability::monotonicity_weight_threshold(&m);
        let gap = m.f_theta_l_plus() - m.f_theta_r_minus();
        if (m.w() - t).abs() > 1e-9 {
            prop_assert_eq!(m.w() > t, gap > 0.0, "w = {}, threshold {}, gap {}", m.w(), t, gap);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certified_verdicts_pass_their_checklist(seed in any::<u64>()) {
        let m = model_from(seed);
        let v = stability::verdict(&m);
        if v.is_certified() {
            prop_assert!(v.x_star.is_some());
            for c in v.required_conditions() {
                prop_assert!(c.passed, "{} certified but `{}` failed", v.certified_by.label(), c.name);
            }
            prop_assert!(v.required_conditions().any(|c| c.criterion == v.certified_by)
                || v.certified_by == Certificate::MonotoneIncreasing);
        }
    }

    #[test]
    fn relaxed_right_bound_dominates(seed in any::<u64>()) {
        let m = model_from(seed);
        let Some(fp) = m.fixed_point() else { return Ok(()); };
        let Ok(slope) = m.f_prime(fp.x_star) else { return Ok(()); };
        if slope < 0.0 {
            prop_assert!(stability::slope_ratio(&m, fp.x_star) > 1.0);
            let tight = stability::unimodal_right_weight_bound(&m, fp.x_star);
            let relaxed = stability::convex_right_weight_bound(&m, fp.x_star);
            prop_assert!(relaxed >= tight - 1e-15, "relaxed {relaxed} < {tight}");
        }
    }

    #[test]
    fn unimodal_minimum_is_a_minimum(seed in any::<u64>()) {
        let m = model_from(seed);
        if let ShapeKind::UnimodalMin { x_c } = stability::classify_shape(&m).kind {
            prop_assert!(m.theta_l() < x_c && x_c < m.theta_r());
            let h = 1e-6 * (m.theta_r() - m.theta_l());
            prop_assert!(m.f(x_c) <= m.f((x_c - h).max(m.theta_l())) + 1e-12);
            prop_assert!(m.f(x_c) <= m.f((x_c + h).min(m.theta_r())) + 1e-12);
        }
    }

    #[test]
    fn invariance_extremes_bound_dense_grid(seed in any::<u64>()) {
        let m = model_from(seed);
        let inv = stability::core_invariant(&m);
        let (tl, tr) = (m.theta_l(), m.theta_r());
        for i in 1..10_000 {
            let y = m.f(tl + (tr - tl) * i as f64 / 10_000.0);
            prop_assert!(y >= inv.inf - 1e-9 && y <= inv.sup + 1e-9,
                "f = {y} outside [{}, {}]", inv.inf, inv.sup);
        }
    }

    #[test]
    fn orbits_stay_in_unit_interval(seed in any::<u64>(), x0 in 0.0f64..=1.0) {
        let m = model_from(seed);
        let orbit = chaos::iterate(&m, &OrbitConfig::new(x0, 100, 200).unwrap()).unwrap();
        prop_assert!(orbit.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn chain_certificate_recomputes(seed in any::<u64>()) {
        let m = model_from(seed);
        let cert = chaos::li_yorke_certificate(&m);
        if cert.applicable {
            let x0 = cert.x0;
            let (f1, f2, f3) = (m.f(x0), m.f(m.f(x0)), m.f(m.f(m.f(x0))));
            prop_assert_eq!(cert.orbit, [f1, f2, f3]);
            prop_assert!((f1 - m.theta_r()).abs() <= 1e-12);
            prop_assert_eq!(cert.exact_chain_holds, f3 >= x0 && x0 > f1 && f1 > f2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certified_models_have_nonpositive_exponent(seed in any::<u64>()) {
        let m = model_from(seed);
        if stability::verdict(&m).is_certified() {
            let x0 = 0.5 * (m.theta_l() + m.theta_r());
            let lam = chaos::lyapunov(&m, &OrbitConfig::lyapunov(x0)).unwrap();
            prop_assert!(lam.is_nan() || lam <= 1e-6, "lambda = {lam}");
        }
    }

    #[test]
    fn chaotic_rows_have_wide_orbits(seed in any::<u64>()) {
        let m = model_from(seed);
        let spec = ModelSpec::new(SystemParams::umh(), *m.controls());
        let axis = SweepAxis::new(SweepParam::W, 0.01, 0.9, 40).unwrap();
        for row in bifurcation_sweep(&spec, &axis, &SweepOrbit::default()).unwrap() {
            if row.lyapunov > 0.01 {
                prop_assert!(row.diameter > 1e-4, "lambda {} with diameter {}", row.lyapunov, row.diameter);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn wbif_brackets_the_loss(alpha in 0.1f64..3.0, beta in 0.1f64..3.0, p_max in 0.2f64..=1.0) {
        let spec = ModelSpec::new(SystemParams::umh(), ControlParams::reference(p_max, BetaShape::new(alpha, beta).unwrap()));
        let scan = WbifScan::default();
        let m = spec.build().unwrap();
        match w_bif(&spec, &scan).unwrap() {
            WbifOutcome::Found { w_bif, w_stable } => {
                prop_assert!(w_stable < w_bif && w_bif - w_stable <= scan.tol + 1e-15);
                prop_assert!(scan.settles(&m, w_stable).unwrap());
                prop_assert!(!scan.settles(&m, w_bif).unwrap());
            }
            WbifOutcome::StableThroughout => prop_assert!(scan.settles(&m, scan.w_hi).unwrap()),
            WbifOutcome::UnstableAtLow => prop_assert!(!scan.settles(&m, scan.w_lo).unwrap()),
            WbifOutcome::Invalid { reason } => prop_assert!(false, "{reason}"),
        }
    }
}

#[test]
fn wbif_does_not_drop_with_stricter_delta() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE17A);
    let scan = WbifScan::default();
    let strict = WbifScan { delta: scan.delta / 10.0, ..scan };
    let mut checked = 0;
    while checked < 10 {
        let Some(m) = random_model(&mut rng) else { continue };
        let spec = ModelSpec::new(SystemParams::umh(), *m.controls());
        let (a, b) = (w_bif(&spec, &scan).unwrap(), w_bif(&spec, &strict).unwrap());
        if let (Some(a), Some(b)) = (a.w_bif(), b.w_bif()) {
            // a stricter settling test can only report the loss earlier
            assert!(b <= a + scan.tol, "w_bif {a} with delta {}, {b} with delta {}", scan.delta, strict.delta);
            checked += 1;
        }
    }
}

#[test]
fn grid_cell_matches_direct_scan() {
    let spec = ModelSpec::new(SystemParams::umh(), ControlParams::reference(0.5, BetaShape::uniform()));
    let scan = WbifScan::default();
    let cells = alpha_beta_grid(&spec, (0.7, 1.1), (0.9, 1.3), 2, &scan).unwrap();
    assert_eq!(cells.len(), 4);
    for cell in cells {
        let shape = BetaShape::new(cell.alpha, cell.beta).unwrap();
        let direct = w_bif(
            &ModelSpec { control: ControlParams { shape, ..spec.control }, ..spec },
            &scan,
        )
        .unwrap();
        assert_eq!(cell.outcome, direct);
    }
}

#[test]
fn grid_does_not_depend_on_thread_count() {
    let spec = ModelSpec::new(SystemParams::umh(), ControlParams::reference(0.5, BetaShape::uniform()));
    let scan = WbifScan::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| alpha_beta_grid(&spec, (0.05, 1.5), (0.05, 1.5), 6, &scan).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn certified_weights_settle_in_sweep() {
    let spec = ModelSpec::new(SystemParams::umh(), ControlParams::reference(0.5, BetaShape::uniform()));
    let axis = SweepAxis::new(SweepParam::W, 0.02, 0.3, 57).unwrap();
    let mut certified = 0;
    for row in bifurcation_sweep(&spec, &axis, &SweepOrbit::default()).unwrap() {
        let m = spec.with(SweepParam::W, row.value).unwrap().build().unwrap();
        if stability::verdict(&m).is_certified() {
            certified += 1;
            assert!(row.diameter < 1e-6, "w = {}: diameter {}", row.value, row.diameter);
        }
    }
    assert!(certified >= 20, "only {certified} certified weights");
}

#[test]
fn dimensionless_constants_scale_with_connections() {
    let c = ControlParams::reference(0.5, BetaShape::uniform());
    let base = reference(0.5, BetaShape::uniform());
    for n in [800.0, 1350.0, 1850.0, 2600.0] {
        let sys = SystemParams { n, ..SystemParams::umh() };
        let m = normalize(&sys, &c).unwrap();
        assert!((m.a1() / base.a1() - n / SystemParams::umh().n).abs() <= 1e-14);
        assert_eq!(m.a2(), base.a2());
        let direct = make_model(m.a1(), m.a2(), &c).unwrap();
        assert_eq!(direct, m);
    }
}
