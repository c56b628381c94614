use rplab::feynman_kac::*;
use rplab::potentials::{Environment, PotentialSpec};
use rplab::rng::environment_seed;
use rplab::stats::{MeanEstimate, Z99};

fn constant(d: usize, c: f64) -> Environment {
    Environment::new(&PotentialSpec::constant(d, c), None).unwrap()
}

fn lacoin(seed: u64, window: f64) -> Environment {
    Environment::sample(&PotentialSpec::lacoin(2, 3.0, 1.5), window, seed).unwrap()
}

fn joint(a: &FunctionalEstimate, b: &FunctionalEstimate) -> f64 {
    (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn harmonic_hitting_in_three_dimensions() {
    let cfg = FkConfig::new(0.01, 20.0, 3);
    let e = e_lambda(&constant(3, 0.0), &[4.0, 0.0, 0.0], 0.0, 20_000, &Tilt::Default, &cfg).unwrap();
    assert!((e.value - 0.25).abs() < 3.0 * e.std_error, "{e:?}");
}

#[test]
fn constant_shift_identity() {
    let cfg = FkConfig::new(0.01, 40.0, 4);
    for lambda in [0.0, 0.5] {
        let a = e_lambda(&constant(2, 0.3), &[3.0, 1.0], lambda, 10_000, &Tilt::Default, &cfg).unwrap();
        let b = e_lambda(&constant(2, 0.0), &[3.0, 1.0], lambda + 0.3, 10_000, &Tilt::Default, &cfg.clone().with_stream(9)).unwrap();
        assert!((a.value - b.value).abs() < 3.0 * joint(&a, &b), "{a:?} {b:?}");
    }
}

#[test]
fn lacoin_survival_is_stable_in_dt() {
    let env = lacoin(5, 12.0);
    let coarse = survival(&env, 2.0, 4000, &FkConfig::new(1e-3, 2.0, 7)).unwrap();
    let fine = survival(&env, 2.0, 4000, &FkConfig::new(1e-4, 2.0, 8)).unwrap();
    assert!((coarse.value - fine.value).abs() < Z99 * joint(&coarse, &fine), "{coarse:?} {fine:?}");
    assert!(coarse.value > 0.0 && coarse.value < 1.0);
}

#[test]
fn survival_reports_window_exit() {
    let env = lacoin(5, 2.0);
    assert!(survival(&env, 50.0, 200, &FkConfig::new(0.01, 50.0, 1)).is_err());
}

#[test]
fn e_lambda_is_a_decreasing_probability_in_lambda() {
    let env = lacoin(11, 12.0);
    let cfg = FkConfig::new(0.01, 40.0, 12);
    let tilt = Tilt::Drift(vec![1.0, 0.0]);
    let values: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|&l| e_lambda(&env, &[4.0, 0.0], l, 2000, &tilt, &cfg).unwrap().value).collect();
    for w in values.windows(2) {
        assert!(w[1] < w[0], "{values:?}");
    }
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn tilt_invariance() {
    let env = lacoin(13, 12.0);
    let cfg = FkConfig::new(0.01, 40.0, 14);
    let a = e_lambda(&env, &[4.0, 0.0], 1.0, 4000, &Tilt::Default, &cfg).unwrap();
    let b = e_lambda(&env, &[4.0, 0.0], 1.0, 4000, &Tilt::Speed(2.2), &cfg.clone().with_stream(1)).unwrap();
    let width = Z99 * (a.relative_error.powi(2) + b.relative_error.powi(2)).sqrt();
    assert!((a.log_value - b.log_value).abs() < width, "{a:?} {b:?}");
}

#[test]
fn symmetry_in_law() {
    let cfg = FkConfig::new(0.01, 60.0, 15);
    let diff: Vec<f64> = (0..24)
        .map(|i| {
            let env = lacoin(environment_seed(77, i), 12.0);
            let a = |x: &[f64]| e_lambda(&env, x, 1.0, 300, &Tilt::Speed(2.0), &cfg).unwrap().neg_log();
            a(&[4.0, 0.0]) - a(&[-4.0, 0.0])
        })
        .collect();
    assert!(MeanEstimate::from_samples(&diff).within(0.0, 3.0));
}

#[test]
fn metric_per_unit_length_decreases_along_doubling() {
    // d is subadditive, so E d(0, 2x)/2 ≤ E d(0, x).
    let cfg = FkConfig::new(0.02, 60.0, 16);
    let scales = [3.0, 6.0, 12.0];
    let mut per_scale = vec![Vec::new(); scales.len()];
    for i in 0..16 {
        let env = lacoin(environment_seed(78, i), 20.0);
        for (k, r) in scales.iter().enumerate() {
            let m = metric_d(&env, &[0.0, 0.0], &[*r, 0.0], 8, 200, &Tilt::Speed(1.5), &cfg).unwrap();
            per_scale[k].push(m.d / r);
        }
    }
    let means: Vec<MeanEstimate> = per_scale.iter().map(|v| MeanEstimate::from_samples(v)).collect();
    for w in means.windows(2) {
        assert!(w[1].mean <= w[0].mean + 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt(), "{means:?}");
    }
}

#[test]
fn newtonian_kernel_in_three_dimensions() {
    let cell = Cell { center: vec![3.0, 0.0, 0.0], half_width: 0.5 };
    let g = green(&constant(3, 0.0), &cell, 40_000, 0.0, &FkConfig::new(0.01, 30.0, 21)).unwrap_or_else(|e| panic!("{e}"));
    let exact = 1.0 / (2.0 * std::f64::consts::PI * 3.0);
    assert!((g.value - exact).abs() < 3.0 * g.std_error, "{g:?} vs {exact}");
}

#[test]
fn resolvent_kernel_in_one_dimension() {
    let c: f64 = 0.5;
    let kappa = (2.0 * c).sqrt();
    let exact = (-kappa * 2.0).exp() / kappa;
    let mut ests = Vec::new();
    for (k, hw) in [0.25, 0.125, 0.05].iter().enumerate() {
        let cell = Cell { center: vec![2.0], half_width: *hw };
        let g = green(&constant(1, c), &cell, 40_000, 0.0, &FkConfig::new(0.01, 30.0, 22 + k as u64)).unwrap();
        ests.push(g);
    }
    // The smallest cell has a cell-averaging bias below 0.05%.
    let g = &ests[2];
    assert!((g.value - exact).abs() < 3.0 * g.std_error, "{g:?} vs {exact}");
    // The two larger cells agree within their joint confidence interval.
    assert!((ests[0].value - ests[1].value).abs() < Z99 * joint(&ests[0], &ests[1]), "{ests:?}");
}

#[test]
fn green_needs_a_floor_in_low_dimensions() {
    let cell = Cell { center: vec![2.0, 0.0], half_width: 0.5 };
    assert!(green(&constant(2, 0.0), &cell, 10, 0.0, &FkConfig::new(0.01, 1.0, 1)).is_err());
}
