use rplab::feynman_kac::FkConfig;
use rplab::lyapunov_ldp::*;
use rplab::potentials::{Environment, PotentialSpec};
use rplab::quad::unit_ball_dirichlet_eigenvalue;

fn lacoin() -> PotentialSpec {
    PotentialSpec::lacoin(2, 3.0, 1.5)
}

fn zero_settings(n_env: usize, n_paths: usize, seed: u64) -> AlphaSettings {
    let mut s = AlphaSettings::new(n_env, n_paths, FkConfig::new(0.05, 10.0, seed));
    s.tilt = TiltRule::Default { floor: 0.0 };
    s
}

fn lacoin_settings(n_env: usize, n_paths: usize, seed: u64) -> AlphaSettings {
    let mut s = AlphaSettings::new(n_env, n_paths, FkConfig::new(0.02, 10.0, seed));
    s.scales = vec![4.0, 8.0, 16.0];
    s
}

#[test]
fn zero_potential_exponent_is_sqrt_two_lambda() {
    let s = zero_settings(4, 1000, 1);
    for lambda in [0.5, 1.0, 2.0] {
        let e = estimate_alpha(&PotentialSpec::zero(2), &[1.0, 0.0], lambda, &s).unwrap();
        let exact = (2.0 * lambda).sqrt();
        assert!((e.alpha / exact - 1.0).abs() < 0.05, "λ={lambda}: {} vs {exact}", e.alpha);
        assert!(!e.monotone_violation);
    }
}

#[test]
fn recurrent_hitting_has_zero_exponent() {
    for d in [1, 2] {
        let mut x = vec![0.0; d];
        x[0] = 1.0;
        let e = estimate_alpha(&PotentialSpec::zero(d), &x, 0.0, &zero_settings(2, 500, 2)).unwrap();
        assert!(e.alpha.abs() < 0.02, "d={d}: {}", e.alpha);
    }
}

#[test]
fn lacoin_exponent_obeys_the_sandwich_and_curve_shape() {
    let sup = sup_unit_ball_mean(&lacoin(), 200, 1000, 3).unwrap().mean;
    let curve = lyapunov_curve(&lacoin(), &[1.0, 0.0], &lacoin_settings(6, 300, 4)).unwrap();
    for e in &curve.estimates {
        let lower = (2.0 * e.lambda).sqrt();
        let upper = (2.0 * (e.lambda + unit_ball_dirichlet_eigenvalue(2) + sup)).sqrt();
        assert!(e.alpha + e.ci >= lower && e.alpha - e.ci <= upper, "λ={}: {} ∉ [{lower}, {upper}]", e.lambda, e.alpha);
    }
    let c = curve.checks();
    assert!(c.non_decreasing && c.concave && c.flattening, "{c:?}");
    assert!(c.projection_distance < 2.0 * c.median_ci, "{c:?}");
}

#[test]
fn exponent_is_homogeneous() {
    let curves = lyapunov_curves(&lacoin(), &[vec![1.0, 0.0], vec![2.0, 0.0]], &AlphaSettings { lambdas: vec![1.0], ..lacoin_settings(6, 300, 5) }).unwrap();
    let (a, b) = (&curves[0].estimates[0], &curves[1].estimates[0]);
    let joint = (4.0 * a.ci * a.ci + b.ci * b.ci).sqrt();
    assert!((b.alpha - 2.0 * a.alpha).abs() < joint, "{} vs 2·{}", b.alpha, a.alpha);
}

#[test]
fn zero_shape_deviation_is_noise() {
    let dirs = direction_grid(2);
    let rep = shape_diagnostic(&PotentialSpec::zero(2), 1.0, &dirs, &zero_settings(4, 300, 6)).unwrap();
    for row in &rep.rows {
        for d in &row.per_direction {
            assert!(d.deviation <= 3.0 * d.ci, "scale {} direction {}: {} > 3·{}", row.scale, d.direction_index, d.deviation, d.ci);
        }
    }
}

#[test]
fn lacoin_shape_deviation_shrinks_with_scale() {
    let dirs = direction_grid(2);
    let mut s = lacoin_settings(20, 150, 7);
    s.scales = vec![8.0, 16.0, 32.0];
    s.lambdas = vec![1.0];
    let rep = shape_diagnostic(&lacoin(), 1.0, &dirs, &s).unwrap();
    let (first, last) = (&rep.rows[0], rep.rows.last().unwrap());
    assert!(rep.trending_down && last.deviation < first.deviation, "{} vs {}", last.deviation, first.deviation);
}

#[test]
fn schilder_rate_function() {
    for m in [1.0, 2.0] {
        let (_, rep) = estimate_rate(&PotentialSpec::zero(2), &[m, 0.0], &zero_settings(2, 500, 8), None, 3).unwrap();
        let exact = m * m / 2.0;
        assert!((rep.rate / exact - 1.0).abs() < 0.07, "|x|={m}: {} vs {exact}", rep.rate);
        assert!(rep.verdicts.above_lower && !rep.censored);
    }
}

#[test]
fn lacoin_rate_sandwich_and_convexity() {
    let sup = sup_unit_ball_mean(&lacoin(), 200, 1000, 9).unwrap().mean;
    let points = [vec![1.0, 0.0], vec![1.5, 0.0], vec![2.0, 0.0]];
    let mut s = lacoin_settings(4, 300, 10);
    s.lambdas = vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0];
    let curves = lyapunov_curves(&lacoin(), &points, &s).unwrap();
    let reps: Vec<RateFunctionReport> = curves.iter().map(|c| rate_function(c, Some(sup)).unwrap()).collect();
    for r in &reps {
        assert!(r.verdicts.non_negative && r.verdicts.above_lower && r.verdicts.below_upper == Some(true), "{r:?}");
        assert!(r.lambda_star >= 0.0);
    }
    let ci = 3.0 * reps.iter().map(|r| r.rate_se).fold(0.0, f64::max);
    assert!(reps[1].rate <= 0.5 * (reps[0].rate + reps[2].rate) + ci);
}

#[test]
fn dual_norm_decreases_in_lambda_on_common_random_numbers() {
    let dirs = direction_grid(2);
    let mut s = lacoin_settings(2, 150, 11);
    s.lambdas = vec![0.5, 1.0, 2.0];
    let curves = lyapunov_curves(&lacoin(), &dirs, &s).unwrap();
    let h = [0.7, 0.2];
    let duals: Vec<f64> = s.lambdas.iter().map(|&l| dual_norm(&curves, l, &h).unwrap().finite().unwrap()).collect();
    assert!(duals.windows(2).all(|w| w[1] <= w[0]), "{duals:?}");
    let twice = dual_norm(&curves, 1.0, &[1.4, 0.4]).unwrap().finite().unwrap();
    assert!((twice - 2.0 * duals[1]).abs() < 1e-12);
}

#[test]
fn zero_phase_root_is_half_h_squared() {
    let dirs = direction_grid(2);
    let mut s = zero_settings(2, 400, 12);
    s.scales = vec![64.0, 128.0, 256.0];
    let rep = estimate_phase(&PotentialSpec::zero(2), &[1.0, 0.0], &dirs, &s).unwrap();
    assert_eq!(rep.verdict.phase, Phase::Ballistic);
    assert_eq!(rep.verdict.dual_at_floor, DualValue::Infinite);
    let l = rep.verdict.lambda_h.unwrap();
    assert!((l / 0.5 - 1.0).abs() < 0.05, "{l}");
}

#[test]
fn lacoin_phase_follows_the_floor_unit_ball() {
    let dirs = direction_grid(2);
    let s = lacoin_settings(2, 150, 13);
    let small = estimate_phase(&lacoin(), &[0.3, 0.0], &dirs, &s).unwrap();
    assert_eq!(small.verdict.phase, Phase::SubBallistic, "{:?}", small.verdict);
    let large = estimate_phase(&lacoin(), &[3.0, 0.0], &dirs, &s).unwrap();
    assert_eq!(large.verdict.phase, Phase::Ballistic, "{:?}", large.verdict);
    assert!(large.verdict.lambda_h.unwrap() > 0.0);
}

#[test]
fn endpoint_rates_follow_schilder() {
    let zero = Environment::sample(&PotentialSpec::zero(2), 1.0, 14).unwrap();
    let cfg = FkConfig::new(0.05, 1.0, 15);
    let target = -(2.0f64 - 0.5).powi(2) / 2.0;
    let rep = endpoint_ldp_check(&zero, &[2.0, 0.0], 0.5, &[2.0, 4.0, 8.0, 16.0], 20_000, &cfg, Some(target)).unwrap();
    assert_eq!(rep.trending, Some(true), "{:?}", rep.rows.iter().map(|r| r.rate).collect::<Vec<_>>());
    let typical = endpoint_ldp_check(&zero, &[0.0, 0.0], 1.0, &[4.0, 8.0], 20_000, &cfg, Some(0.0)).unwrap();
    assert!(typical.rows.last().unwrap().rate.unwrap().abs() < 0.01);
    let constant = Environment::sample(&PotentialSpec::constant(2, 0.7), 1.0, 14).unwrap();
    let c = endpoint_ldp_check(&constant, &[2.0, 0.0], 0.5, &[2.0, 4.0, 8.0, 16.0], 20_000, &cfg, Some(target)).unwrap();
    for (a, b) in rep.rows.iter().zip(&c.rows) {
        assert!((a.rate.unwrap() - b.rate.unwrap()).abs() < 1e-12);
    }
}
