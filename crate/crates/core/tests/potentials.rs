use rplab::feynman_kac::halton_ball;
use rplab::potentials::*;
use rplab::rng::environment_seed;
use rplab::stats::{binomial_upper_test, ks_two_sample, ols};

fn lacoin() -> PotentialSpec {
    PotentialSpec::lacoin(2, 3.0, 1.5)
}

#[test]
fn lacoin_moments_match_closed_form() {
    let (mean, var) = closed_form_moments(3.0, 1.5, 2).unwrap();
    let m = empirical_moments(&lacoin(), 10_000, 1).unwrap();
    assert!((m.mean - mean).abs() < 3.0 * m.mean_se, "{m:?} vs {mean}");
    assert!((m.variance - var).abs() < 3.0 * m.variance_se, "{m:?} vs {var}");
}

#[test]
fn covariance_decays_with_the_predicted_exponent() {
    let lags = [2.0f64, 4.0, 8.0, 16.0];
    let covs: Vec<f64> = lags
        .iter()
        .map(|&l| empirical_covariance(&lacoin(), &[l, 0.0], 20_000, 2, CovarianceEstimator::SharedComponent).unwrap().covariance)
        .collect();
    let fit = ols(&lags.map(f64::ln), &covs.iter().map(|c| c.ln()).collect::<Vec<_>>(), None);
    assert!((fit.slope + 5.5).abs() < 0.3, "{fit:?}");
}

#[test]
fn campbell_exponential_moment() {
    for (s, halo) in [(0.5, 0.0), (1.0, 0.0), (0.5, 1.0), (1.0, 1.0)] {
        let mc = empirical_exp_moment(&lacoin(), s, halo, 20_000, 3).unwrap();
        let exact = exp_moment(3.0, 1.5, 2, s, halo).unwrap();
        assert!(mc.within(exact, 3.0), "s={s} R={halo}: {mc:?} vs {exact}");
    }
}

#[test]
fn potential_is_stationary() {
    let x = [5.0, 0.0];
    let (a, b): (Vec<f64>, Vec<f64>) = (0..2000u64)
        .map(|i| {
            let env = Environment::sample(&lacoin(), 6.0, environment_seed(4, i)).unwrap();
            (env.value(&[0.0, 0.0]), env.value(&x))
        })
        .unzip();
    let (_, p) = ks_two_sample(&a, &b);
    assert!(p > 1e-3, "p = {p}");
}

fn truncation_failures(spec: &PotentialSpec, policy: &TruncationPolicy, options: &SamplingOptions, n: u64, master: u64) -> u64 {
    let radius = truncation_radius(policy, spec).unwrap();
    let r0 = policy.evaluation_radius;
    let points = halton_ball(spec.dimension, 64);
    (0..n)
        .filter(|&i| {
            let cloud = sample_cloud_with(spec, r0, environment_seed(master, i), options).unwrap();
            assert!(cloud.truncation.center_radius > 2.0 * radius);
            let full = Environment::new(spec, Some(cloud.clone())).unwrap();
            let cut = Environment::with_center_cutoff(spec, cloud, radius).unwrap();
            points.iter().any(|p| {
                let y: Vec<f64> = p.iter().map(|v| v * r0).collect();
                full.value(&y) - cut.value(&y) > policy.target_sup_error
            })
        })
        .count() as u64
}

#[test]
fn truncation_radius_controls_the_sup_error() {
    let policy = TruncationPolicy { target_sup_error: 0.05, evaluation_radius: 2.0, failure_probability: 0.05 };
    let n = 2000;
    let failures = truncation_failures(&lacoin(), &policy, &SamplingOptions::default(), n, 5);
    assert!(binomial_upper_test(failures, n, policy.failure_probability, 0.01), "{failures} of {n}");

    let poly = PotentialSpec { dimension: 1, family: Family::PolyTail { gamma: 2.0, c9: 1.0 } };
    let policy = TruncationPolicy { target_sup_error: 0.2, evaluation_radius: 2.0, failure_probability: 0.05 };
    let options = SamplingOptions { polytail_error: 1e-6, ..SamplingOptions::default() };
    let failures = truncation_failures(&poly, &policy, &options, n, 6);
    assert!(binomial_upper_test(failures, n, policy.failure_probability, 0.01), "{failures} of {n}");
}

#[test]
fn exponential_tail_alone_misses_the_polytail_mean() {
    let poly = PotentialSpec { dimension: 1, family: Family::PolyTail { gamma: 2.0, c9: 1.0 } };
    let policy = TruncationPolicy { target_sup_error: 0.2, evaluation_radius: 2.0, failure_probability: 0.05 };
    let short = exponential_tail_radius(&policy, &poly).unwrap();
    let certified = truncation_radius(&policy, &poly).unwrap();
    assert!(certified > 2.0 * short, "{short} vs {certified}");
}
