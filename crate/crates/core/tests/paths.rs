use rplab::paths::*;
use rplab::potentials::FnPotential;
use rplab::quad::unit_ball_dirichlet_eigenvalue;
use rplab::stats::{ks_two_sample, ols, MeanEstimate};
use statrs::function::erf::erfc;

fn zero() -> FnPotential<impl Fn(&[f64]) -> f64 + Sync> {
    FnPotential(|_: &[f64]| 0.0)
}

#[test]
fn three_dimensional_hitting_frequency() {
    // P(H ≤ T) for the unit ball at distance 4 is (1/4)·erfc(3/√(2T)).
    let t = 50.0;
    let stop = StoppingSpec::hit_unit_ball(vec![4.0, 0.0, 0.0]);
    let out = simulate_many(&PathConfig::new(0.02, t).with_bridge(true), &stop, &zero(), &[0.0; 3], 100_000, 11, 0).unwrap();
    let hits: Vec<f64> = out.iter().map(|o| (o.event == StopEvent::Hit) as u8 as f64).collect();
    let est = MeanEstimate::from_samples(&hits);
    let exact = 0.25 * erfc(3.0 / (2.0 * t).sqrt());
    assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
}

#[test]
fn hitting_time_scales_with_r_squared() {
    let sample = |r: f64, seed: u64| -> Vec<f64> {
        let stop = StoppingSpec::HitBall { center: vec![2.0 * r, 0.0, 0.0], radius: r };
        simulate_many(&PathConfig::new(0.01 * r * r, 20.0 * r * r), &stop, &zero(), &[0.0; 3], 20_000, seed, 0)
            .unwrap()
            .iter()
            .map(|o| o.stop_time / (r * r))
            .collect()
    };
    let (_, p) = ks_two_sample(&sample(1.0, 1), &sample(2.0, 2));
    assert!(p > 0.01, "KS p-value {p}");
}

fn tube(t: f64, seed: u64, dt: Option<f64>) -> ProbabilityEstimate {
    // Fixed speed |x − z|/t = 0.5 along e1.
    tubular_probability(&[0.0, 0.0], &[0.5 * t, 0.0], t, 2.0, 100_000, seed, dt).unwrap()
}

#[test]
fn tube_log_probability_slope() {
    let rho = 2.0;
    let lambda = unit_ball_dirichlet_eigenvalue(2) / (rho * rho);
    let ts = [2.0, 3.0, 4.0, 6.0];
    let ests: Vec<ProbabilityEstimate> = ts.iter().enumerate().map(|(i, &t)| tube(t, 20 + i as u64, None)).collect();
    let logs: Vec<f64> = ests.iter().map(|e| e.value.ln()).collect();
    let ses: Vec<f64> = ests.iter().map(|e| e.std_error / e.value).collect();
    let fit = ols(&ts, &logs, Some(&ses));
    let bound = -lambda - 0.5 * 0.5 * 0.5;
    assert!(fit.slope >= bound - 3.0 * fit.slope_se, "slope {} ± {} vs {bound}", fit.slope, fit.slope_se);
    // Calibrate C at the first time and check the lower bound at the others.
    let c = ests[0].value / (-lambda * ts[0] - 0.125 * ts[0]).exp();
    for (e, &t) in ests.iter().zip(&ts) {
        assert!(e.ci99.1 >= 0.5 * c * (-lambda * t - 0.125 * t).exp(), "t = {t}: {e:?}");
    }
}

#[test]
fn tube_is_stable_under_step_halving() {
    let a = tube(3.0, 40, Some(0.04));
    let b = tube(3.0, 41, Some(0.02));
    let width = (a.ci99.1 - a.ci99.0).max(b.ci99.1 - b.ci99.0);
    assert!((a.value - b.value).abs() < width, "{a:?} {b:?}");
}
